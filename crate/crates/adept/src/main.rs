use std::path::PathBuf;
use std::process::ExitCode;

use adept::config::{default_config, load_config, ConfigError, ExperimentConfig, Task, TaskConfig, XiSetting};
use adept::run::{run_experiment, RunError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adept", version, about = "Personalized federated learning experiments")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Personalized PCA on the Stiefel manifold against local and global baselines.
    Pca(Common),
    /// Personalized autoencoders on synthetic decoder data.
    Ae(Common),
    /// Personalized denoisers on a Gaussian population.
    DgmTrain(Common),
    /// Monte-Carlo check of the Gaussian diffusion theory.
    DgmGaussian(Common),
    /// Runs the task named in the config over its `[sweep]` grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; task defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds, run as 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Run with the theorem step sizes and abort if a guarantee is violated.
    #[arg(long)]
    monitor_theory: bool,
    /// ξ for dgm-gaussian: a number or `auto`.
    #[arg(long)]
    xi: Option<String>,
    /// Also write the generated client datasets as raw arrays under <out>/arrays.
    #[arg(long)]
    dump_arrays: bool,
}

fn invalid(key: &str, reason: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
        line: None,
    })
}

fn resolve(task: Option<Task>, args: &Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match (&args.config, task) {
        (Some(path), _) => load_config(path)?,
        (None, Some(t)) => default_config(t),
        (None, None) => return Err(invalid("--config", "sweep needs a config with a [sweep] table")),
    };
    match task {
        Some(t) if t != cfg.task.task() => {
            return Err(invalid("task", format!("config is for `{}`, not `{}`", cfg.task.task().name(), t.name())))
        }
        None if cfg.sweep.is_none() => return Err(invalid("sweep", "missing [sweep] table")),
        _ => {}
    }
    if let Some(n) = args.seeds {
        if n == 0 {
            return Err(invalid("--seeds", "must be >= 1"));
        }
        cfg.seeds = (0..n).collect();
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.monitor_theory = args.monitor_theory;
    if let Some(x) = &args.xi {
        let TaskConfig::DgmGaussian { hyper, .. } = &mut cfg.task else {
            return Err(invalid("--xi", "only applies to dgm-gaussian"));
        };
        hyper.xi = if x == "auto" {
            XiSetting::AUTO
        } else {
            XiSetting::Value(x.parse().map_err(|_| invalid("--xi", format!("expected a number or `auto`, got `{x}`")))?)
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(task: Option<Task>, args: Common) -> Result<(), RunError> {
    let cfg = resolve(task, &args)?;
    let dump = args.dump_arrays.then(|| cfg.out.join("arrays"));
    let out = run_experiment(&cfg, args.threads, dump.as_deref())?;
    let paths = adept::write_outputs(&cfg.out, &cfg, &out)?;
    print!("{}", out.results.summary());
    println!("config hash {}", cfg.hash());
    println!("wrote {} and {}", paths.results.display(), paths.trace.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Pca(a) => (Some(Task::Pca), a),
        Command::Ae(a) => (Some(Task::Ae), a),
        Command::DgmTrain(a) => (Some(Task::DgmTrain), a),
        Command::DgmGaussian(a) => (Some(Task::DgmGaussian), a),
        Command::Sweep(a) => (None, a),
    };
    match execute(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

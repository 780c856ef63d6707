//! CSV outputs and the console summary.
//!
//! `results.csv` has the task's key columns, `seed`, the task's value columns and
//! `config_hash`. `trace.csv` is long-format: `method,<point>,seed,iter,metric,value`.
//! Numbers use Rust's shortest round-trip formatting; missing values are empty.

use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub keys: Vec<String>,
    pub seed: u64,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Results {
    pub key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub config_hash: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub method: String,
    pub point: f64,
    pub seed: u64,
    pub iter: usize,
    pub metric: String,
    pub value: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl Results {
    pub fn new(keys: &[&str], values: &[&str], config_hash: String) -> Self {
        Self {
            key_columns: keys.iter().map(|s| s.to_string()).collect(),
            value_columns: values.iter().map(|s| s.to_string()).collect(),
            config_hash,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = self.key_columns.clone();
        h.push("seed".into());
        h.extend(self.value_columns.iter().cloned());
        h.push("config_hash".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = r.keys.clone();
            rec.push(r.seed.to_string());
            rec.extend(r.values.iter().map(|v| cell(*v)));
            rec.push(self.config_hash.clone());
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Value of column `name` in every row.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.value_columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    /// Seed-averaged values per distinct key tuple, in first-appearance order.
    pub fn seed_means(&self) -> Vec<(Vec<String>, Vec<Option<f64>>)> {
        let mut order: Vec<Vec<String>> = Vec::new();
        let mut acc: BTreeMap<Vec<String>, Vec<(f64, usize)>> = BTreeMap::new();
        for r in &self.rows {
            let slot = acc.entry(r.keys.clone()).or_insert_with(|| {
                order.push(r.keys.clone());
                vec![(0.0, 0); r.values.len()]
            });
            for (s, v) in slot.iter_mut().zip(&r.values) {
                if let Some(x) = v {
                    s.0 += x;
                    s.1 += 1;
                }
            }
        }
        order
            .into_iter()
            .map(|k| {
                let means = acc[&k].iter().map(|(s, n)| (*n > 0).then(|| s / *n as f64)).collect();
                (k, means)
            })
            .collect()
    }

    /// Fixed-width table of [`Results::seed_means`].
    pub fn summary(&self) -> String {
        let mut header = self.key_columns.clone();
        header.extend(self.value_columns.iter().cloned());
        let mut lines: Vec<Vec<String>> = vec![header];
        for (keys, means) in self.seed_means() {
            let mut row = keys;
            row.extend(means.iter().map(|m| m.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())));
            lines.push(row);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
            if i == 0 {
                s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                s.push('\n');
            }
        }
        s
    }
}

pub fn write_trace_csv<W: Write>(point_name: &str, trace: &[TraceRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", point_name, "seed", "iter", "metric", "value"])?;
    for t in trace {
        out.write_record([
            t.method.clone(),
            format!("{}", t.point),
            t.seed.to_string(),
            t.iter.to_string(),
            t.metric.clone(),
            format!("{}", t.value),
        ])?;
    }
    out.flush()?;
    Ok(())
}

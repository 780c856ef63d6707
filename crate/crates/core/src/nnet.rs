//! Small dense networks with batched reverse-mode gradients and first-order optimizers.
//!
//! Samples are stored as matrix columns. The flat parameter vector lists, for each
//! layer in order, the weight matrix in column-major order followed by the bias.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_shape, gaussian_matrix};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a = apply(z)`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Layer>,
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input of every layer, then the network output.
    acts: Vec<DMatrix<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("cache holds at least the input")
    }

    /// Input of layer `k`; `k = 0` is the network input.
    pub fn layer_input(&self, k: usize) -> Option<&DMatrix<f64>> {
        self.acts.get(k)
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("layers", "need at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(Error::ShapeMismatch {
                    context: "layer bias",
                    expected: (l.w.nrows(), 1),
                    got: (l.b.len(), 1),
                });
            }
            if k > 0 && layers[k - 1].w.nrows() != l.w.ncols() {
                return Err(Error::ShapeMismatch {
                    context: "layer composition",
                    expected: (l.w.nrows(), layers[k - 1].w.nrows()),
                    got: l.w.shape(),
                });
            }
        }
        Ok(Self {
            layers,
            version: fresh_version(),
        })
    }

    /// Layers of widths `sizes[k] → sizes[k+1]`, Gaussian weights with std `1/√fan_in`, zero bias.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], acts: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || acts.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::invalid("sizes", "need k+1 positive widths for k activations"));
        }
        let layers = sizes
            .windows(2)
            .zip(acts)
            .map(|(io, &act)| {
                let scale = 1.0 / libm::sqrt(io[0] as f64);
                Layer {
                    w: gaussian_matrix(io[1], io[0], rng) * scale,
                    b: DVector::zeros(io[1]),
                    act,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        DVector::from_vec(out)
    }

    pub fn set_flat(&mut self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                context: "set_flat",
                expected: (self.n_params(), 1),
                got: (theta.len(), 1),
            });
        }
        let src = theta.as_slice();
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        self.version = fresh_version();
        Ok(())
    }

    pub fn with_flat(&self, theta: &DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_flat(theta)?;
        Ok(out)
    }

    /// Forward pass on the columns of `x`.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        check_shape("net input", x, (self.input_dim(), x.ncols()))?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for l in &self.layers {
            let mut z = &l.w * acts.last().expect("nonempty");
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            let a = z.map(|v| l.act.apply(v));
            pre.push(z);
            acts.push(a);
        }
        Ok(ForwardCache {
            version: self.version,
            acts,
            pre,
        })
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let cache = self.forward_batch(&xm)?;
        Ok(DVector::from_column_slice(cache.output().as_slice()))
    }

    /// Flat gradient of a scalar loss whose gradient with respect to the output
    /// batch is `upstream`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &DMatrix<f64>) -> Result<DVector<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        check_shape("upstream gradient", upstream, cache.output().shape())?;
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta_out = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let z = &cache.pre[k];
            let a = &cache.acts[k + 1];
            let mut delta = delta_out;
            for ((dv, zv), av) in delta.iter_mut().zip(z.iter()).zip(a.iter()) {
                *dv *= l.act.derivative(*zv, *av);
            }
            let gw = &delta * cache.acts[k].transpose();
            let gb = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            delta_out = l.w.tr_mul(&delta);
            grads.push((gw, gb));
        }
        let mut out = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads.iter().rev() {
            out.extend_from_slice(gw.as_slice());
            out.extend_from_slice(gb.as_slice());
        }
        Ok(DVector::from_vec(out))
    }
}

/// Caps every coordinate at magnitude `c`.
pub fn clip_inf(grad: &mut DVector<f64>, c: f64) {
    if c.is_finite() {
        grad.iter_mut().for_each(|g| *g = g.clamp(-c, c));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    Sgd,
    /// `v ← βv + g`, `θ ← θ − lr·v`.
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimKind {
    pub const fn adam() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub kind: OptimKind,
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
}

impl OptimState {
    pub fn new(kind: OptimKind, n: usize) -> Self {
        let v_len = if matches!(kind, OptimKind::Adam { .. }) { n } else { 0 };
        let m_len = if matches!(kind, OptimKind::Sgd) { 0 } else { n };
        Self {
            kind,
            m: DVector::zeros(m_len),
            v: DVector::zeros(v_len),
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut DVector<f64>, grad: &DVector<f64>, lr: f64) -> Result<()> {
        if theta.len() != grad.len() {
            return Err(Error::ShapeMismatch {
                context: "optimizer step",
                expected: (theta.len(), 1),
                got: (grad.len(), 1),
            });
        }
        match self.kind {
            OptimKind::Sgd => theta.axpy(-lr, grad, 1.0),
            OptimKind::Momentum { beta } => {
                self.m.axpy(1.0, grad, beta);
                theta.axpy(-lr, &self.m, 1.0);
            }
            OptimKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - libm::pow(beta1, self.t as f64);
                let c2 = 1.0 - libm::pow(beta2, self.t as f64);
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    theta[i] -= lr * mh / (libm::sqrt(vh) + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngKey;

    fn eye_layer(act: Activation) -> DenseNet {
        DenseNet::from_layers(alloc::vec![Layer {
            w: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
            act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_and_relu_layers() {
        let x = DVector::from_vec(alloc::vec![-1.0, 2.0]);
        assert_eq!(eye_layer(Activation::Identity).forward(&x).unwrap(), x);
        assert_eq!(
            eye_layer(Activation::Relu).forward(&x).unwrap(),
            DVector::from_vec(alloc::vec![0.0, 2.0])
        );
    }

    #[test]
    fn stable_sigmoid() {
        assert_eq!(Activation::Sigmoid.apply(-800.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(800.0), 1.0);
        assert!((Activation::Sigmoid.apply(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut rng = RngKey::new(1).stream(0, 0, 0);
        let net = DenseNet::init(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], &mut rng).unwrap();
        let x = DVector::from_vec(alloc::vec![0.3, -1.2, 0.8]);
        let l = net.layers();
        let h = (&l[0].w * &x + &l[0].b).map(|v| v.max(0.0));
        let o = (&l[1].w * h + &l[1].b).map(|v| 1.0 / (1.0 + (-v).exp()));
        assert!((net.forward(&x).unwrap() - o).amax() < 1e-12);
    }

    #[test]
    fn linear_least_squares_gradient() {
        let mut rng = RngKey::new(2).stream(0, 0, 0);
        let net = DenseNet::init(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let y = DMatrix::from_column_slice(2, 1, &[0.3, 0.1]);
        let cache = net.forward_batch(&x).unwrap();
        let up = (cache.output() - &y) * 2.0;
        let g = net.backward(&cache, &up).unwrap();
        let gw = &up * x.transpose();
        assert!((DVector::from_column_slice(&g.as_slice()[..6]) - DVector::from_column_slice(gw.as_slice())).amax() < 1e-14);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = RngKey::new(3).stream(0, 0, 0);
        let net = DenseNet::init(&[3, 5, 3], &[Activation::Relu, Activation::Sigmoid], &mut rng).unwrap();
        let x = gaussian_matrix(3, 4, &mut rng);
        let cache = net.forward_batch(&x).unwrap();
        let g = net.backward(&cache, &DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn stale_cache_detected() {
        let mut rng = RngKey::new(4).stream(0, 0, 0);
        let mut net = DenseNet::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        let x = gaussian_matrix(2, 1, &mut rng);
        let cache = net.forward_batch(&x).unwrap();
        let theta = net.to_flat() * 2.0;
        net.set_flat(&theta).unwrap();
        assert_eq!(net.backward(&cache, &DMatrix::zeros(2, 1)), Err(Error::StaleCache));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = RngKey::new(5).stream(0, 0, 0);
        let net = DenseNet::init(&[4, 3, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let theta = net.to_flat();
        assert_eq!(theta.len(), 4 * 3 + 3 + 3 * 2 + 2);
        let back = net.with_flat(&theta).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_flat(), theta);
    }

    #[test]
    fn optimizer_examples() {
        let mut c = DVector::from_vec(alloc::vec![3.0, -0.5]);
        clip_inf(&mut c, 1.0);
        assert_eq!(c.as_slice(), &[1.0, -0.5]);

        let mut th = DVector::from_element(1, 1.0);
        OptimState::new(OptimKind::Sgd, 1)
            .step(&mut th, &DVector::from_element(1, 2.0), 0.1)
            .unwrap();
        assert!((th[0] - 0.8).abs() < 1e-15);

        let (lr, th0) = (0.1, 5.0);
        let mut th = DVector::from_element(1, th0);
        let mut opt = OptimState::new(OptimKind::Momentum { beta: 0.9 }, 1);
        let g = DVector::from_element(1, 1.0);
        opt.step(&mut th, &g, lr).unwrap();
        assert!((th[0] - (th0 - lr)).abs() < 1e-15);
        opt.step(&mut th, &g, lr).unwrap();
        assert!((th[0] - (th0 - lr - lr * 1.9)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut th = DVector::from_element(2, 0.0);
        let mut opt = OptimState::new(OptimKind::adam(), 2);
        opt.step(&mut th, &DVector::from_vec(alloc::vec![3.0, -0.01]), 0.01).unwrap();
        assert!((th[0] + 0.01).abs() < 1e-9 && (th[1] - 0.01).abs() < 1e-6);
    }
}

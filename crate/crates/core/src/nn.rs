//! Small fully connected networks with hand-written backpropagation, Adam,
//! and the Dirichlet helpers the actor needs.

use crate::error::{PutError, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Linear,
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Softplus => softplus(z),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    #[inline]
    fn deriv(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dot product with four partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Feed-forward network with leaky-ReLU hidden units.
///
/// Parameters live in one flat vector, layer by layer, each layer as its
/// row-major `out × in` weight matrix followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    slope: f64,
    output: Activation,
}

/// Values kept by `forward` for `backward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    // activations[0] is the input; pre[l] is layer l's pre-activation
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], slope: f64, output: Activation, rng: &mut R) -> Result<Self> {
        let count = Self::check_sizes(sizes)?;
        let mut params = Vec::with_capacity(count);
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            slope,
            output,
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>, slope: f64, output: Activation) -> Result<Self> {
        let count = Self::check_sizes(sizes)?;
        if params.len() != count {
            return Err(PutError::Shape {
                expected: count,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PutError::Domain("non-finite parameter".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            slope,
            output,
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<usize> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(PutError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("sizes checked")
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Output without keeping a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        if input.len() != self.sizes[0] {
            return Err(PutError::Shape {
                expected: self.sizes[0],
                got: input.len(),
            });
        }
        let mut activations = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers());
        let mut offset = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let x = &activations[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + dot(&w[o * n_in..(o + 1) * n_in], x))
                .collect();
            let last = l + 1 == self.layers();
            let a: Vec<f64> = z
                .iter()
                .map(|&v| {
                    if last {
                        self.output.apply(v)
                    } else if v > 0.0 {
                        v
                    } else {
                        self.slope * v
                    }
                })
                .collect();
            pre.push(z);
            activations.push(a);
        }
        let out = activations.last().expect("at least one layer").clone();
        Ok((out, Cache { activations, pre }))
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient at the output.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_len() {
            return Err(PutError::Shape {
                expected: self.output_len(),
                got: grad_out.len(),
            });
        }
        if cache.pre.len() != self.layers() {
            return Err(PutError::Shape {
                expected: self.layers(),
                got: cache.pre.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(self.layers());
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += (w[0] + 1) * w[1];
        }
        let mut delta: Vec<f64> = {
            let l = self.layers() - 1;
            cache.pre[l]
                .iter()
                .zip(&cache.activations[l + 1])
                .zip(grad_out)
                .map(|((&z, &a), &g)| g * self.output.deriv(z, a))
                .collect()
        };
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.activations[l];
            for o in 0..n_out {
                let row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g = delta[o] * xi;
                }
                grads[off + n_in * n_out + o] = delta[o];
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                for (p, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += delta[o] * wv;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= 0.0 {
                    *p *= self.slope;
                }
            }
            delta = prev;
        }
        Ok(grads)
    }

    /// Little-endian container: layer count and sizes as u32, then the
    /// parameters as f64 in layer order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R, slope: f64, output: Activation) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&count) {
            return Err(PutError::Format(format!("implausible layer count {count}")));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b4)?;
            sizes.push(u32::from_le_bytes(b4) as usize);
        }
        let n = Self::check_sizes(&sizes)?;
        let mut params = Vec::with_capacity(n);
        let mut b8 = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(PutError::Format(format!("{} trailing bytes in checkpoint", rest.len())));
        }
        Self::from_params(&sizes, params, slope, output)
    }
}

/// Scales `grads` so their Euclidean norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected descent step.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(PutError::Shape {
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powf(self.step as f64);
        let c2 = 1.0 - self.beta2.powf(self.step as f64);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (r1, r2) = (1.0 / c1, 1.0 / c2);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m * r1) / ((*v * r2).sqrt() + eps);
        }
        Ok(())
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(PutError::Domain("empty concentration vector".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(PutError::Domain(format!("concentration {a} must be positive and finite")));
    }
    Ok(())
}

/// Log of a Gamma(a, 1) variate, stable for very small shapes.
fn ln_gamma_variate<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        Gamma::new(a, 1.0).expect("validated shape").sample(rng).ln()
    } else {
        // G(a) = G(a + 1) U^(1/a), kept in logs so tiny shapes do not underflow
        let g = Gamma::new(a + 1.0, 1.0).expect("validated shape").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / a
    }
}

/// One draw from Dirichlet(α) via normalized Gamma variates.
pub fn dirichlet_sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let logs: Vec<f64> = alpha.iter().map(|&a| ln_gamma_variate(a, rng)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

pub const DIRICHLET_CLAMP: f64 = 1e-12;

fn check_point(alpha: &[f64], x: &[f64]) -> Result<()> {
    check_alpha(alpha)?;
    if x.len() != alpha.len() {
        return Err(PutError::Shape {
            expected: alpha.len(),
            got: x.len(),
        });
    }
    let s: f64 = x.iter().sum();
    if x.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-6 {
        return Err(PutError::Domain(format!("point off the simplex (sum {s})")));
    }
    Ok(())
}

/// `ln Γ(Σα) − Σ ln Γ(α_i) + Σ (α_i − 1) ln x_i`, entries clamped at 1e-12.
pub fn dirichlet_log_prob(alpha: &[f64], x: &[f64]) -> Result<f64> {
    check_point(alpha, x)?;
    if alpha.len() == 1 {
        return Ok(0.0);
    }
    let total: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(total);
    for (&a, &v) in alpha.iter().zip(x) {
        lp += (a - 1.0) * v.max(DIRICHLET_CLAMP).ln() - ln_gamma(a);
    }
    Ok(lp)
}

/// `∂/∂α_i = ψ(Σα) − ψ(α_i) + ln x_i`.
pub fn dirichlet_log_prob_grad(alpha: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_point(alpha, x)?;
    if alpha.len() == 1 {
        return Ok(vec![0.0]);
    }
    let psi_total = digamma(alpha.iter().sum());
    Ok(alpha
        .iter()
        .zip(x)
        .map(|(&a, &v)| psi_total - digamma(a) + v.max(DIRICHLET_CLAMP).ln())
        .collect())
}

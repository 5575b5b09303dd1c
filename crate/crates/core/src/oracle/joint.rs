//! Sources, release rules and full joint enumeration over `W^n × W^n`.

use crate::belief::{ActionKernel, KernelMode};
use crate::error::{PutError, Result};
use crate::prob;
use crate::source::{InitialDistribution, TransitionMatrix};
use rand::Rng;

/// Largest joint table the enumerators will allocate.
pub const ENTRY_BUDGET: u128 = 10_000_000;

pub(crate) fn pow(n: usize, k: usize) -> usize {
    n.pow(k as u32)
}

/// Base-`n` code of a symbol sequence, first symbol most significant.
#[inline]
pub(crate) fn code(n: usize, s: &[usize]) -> usize {
    s.iter().fold(0, |acc, &v| acc * n + v)
}

/// Probability law of the true sequence.
pub trait SequenceSource {
    fn alphabet(&self) -> usize;
    /// `P(x_t = x | x^{t-1} = prefix)`; an empty prefix gives the initial law.
    fn prob(&self, prefix: &[usize], x: usize) -> f64;
}

#[derive(Debug, Clone)]
pub struct FirstOrderSource {
    pub init: InitialDistribution,
    pub chain: TransitionMatrix,
}

impl SequenceSource for FirstOrderSource {
    fn alphabet(&self) -> usize {
        self.chain.size()
    }

    fn prob(&self, prefix: &[usize], x: usize) -> f64 {
        match prefix.last() {
            None => self.init.probs()[x],
            Some(&prev) => self.chain.get(x, prev),
        }
    }
}

/// Order-2 chain: `x_1 ~ init`, `x_2 ~ first(· | x_1)`, then
/// `x_t ~ kernel(· | x_{t-2}, x_{t-1})`.
#[derive(Debug, Clone)]
pub struct SecondOrderSource {
    pub init: InitialDistribution,
    pub first: TransitionMatrix,
    /// `kernel[(x_{t-2} * n + x_{t-1}) * n + x_t]`
    pub kernel: Vec<f64>,
}

impl SecondOrderSource {
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let init = InitialDistribution::new(random_simplex(n, rng))?;
        let cols: Vec<f64> = (0..n).flat_map(|_| random_simplex(n, rng)).collect();
        let first = TransitionMatrix::from_columns_flat(crate::source::StateSpace::new(n)?, cols)?;
        let kernel = (0..n * n).flat_map(|_| random_simplex(n, rng)).collect();
        Ok(Self { init, first, kernel })
    }
}

impl SequenceSource for SecondOrderSource {
    fn alphabet(&self) -> usize {
        self.first.size()
    }

    fn prob(&self, prefix: &[usize], x: usize) -> f64 {
        let n = self.alphabet();
        match prefix.len() {
            0 => self.init.probs()[x],
            1 => self.first.get(x, prefix[0]),
            k => self.kernel[(prefix[k - 2] * n + prefix[k - 1]) * n + x],
        }
    }
}

/// A causal release rule: distribution of `y_t` given `x^t` and `y^{t-1}`.
/// `xs` holds `t + 1` symbols and `ys` holds `t` symbols (0-based `t`).
pub trait ReleaseRule {
    fn alphabet(&self) -> usize;
    fn horizon(&self) -> usize;
    fn slice(&self, t: usize, xs: &[usize], ys: &[usize]) -> &[f64];
}

pub(crate) fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Dirichlet(1, ..., 1) via normalized exponentials
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    prob::normalize(&mut v);
    v
}

/// Fully history-dependent policy `q_t(y_t | x^t, y^{t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPolicy {
    n: usize,
    horizon: usize,
    // tables[t][(code(x^{t+1}) * n^t + code(y^t)) * n + y]
    tables: Vec<Vec<f64>>,
}

impl HistoryPolicy {
    pub fn from_fn(
        n: usize,
        horizon: usize,
        mut f: impl FnMut(usize, &[usize], &[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        check_budget(n, horizon)?;
        let mut tables = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let keys = pow(n, t + 1) * pow(n, t);
            let mut table = Vec::with_capacity(keys * n);
            let mut xs = vec![0; t + 1];
            let mut ys = vec![0; t];
            for key in 0..keys {
                decode(n, key / pow(n, t), &mut xs);
                decode(n, key % pow(n, t), &mut ys);
                let s = f(t, &xs, &ys);
                check_slice(&s, n, 1e-12)?;
                table.extend(s);
            }
            tables.push(table);
        }
        Ok(Self { n, horizon, tables })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, horizon: usize, rng: &mut R) -> Result<Self> {
        Self::from_fn(n, horizon, |_, _, _| random_simplex(n, rng))
    }
}

impl ReleaseRule for HistoryPolicy {
    fn alphabet(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn slice(&self, t: usize, xs: &[usize], ys: &[usize]) -> &[f64] {
        let key = code(self.n, &xs[..=t]) * pow(self.n, t) + code(self.n, &ys[..t]);
        &self.tables[t][key * self.n..(key + 1) * self.n]
    }
}

/// Policy that sees only the last `memory + 1` true symbols and the full
/// release history: `q_t(y_t | x^t_{t-memory}, y^{t-1})`. With `memory = 1`
/// this is the simplified class.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPolicy {
    n: usize,
    horizon: usize,
    memory: usize,
    // tables[t][(code(window) * n^t + code(y^t)) * n + y], window oldest first
    tables: Vec<Vec<f64>>,
}

pub type SimplifiedPolicy = WindowPolicy;

impl WindowPolicy {
    pub fn window_len(&self, t: usize) -> usize {
        (t + 1).min(self.memory + 1)
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// `f(t, window, ys)` receives the window oldest first.
    pub fn from_fn(
        n: usize,
        horizon: usize,
        memory: usize,
        mut f: impl FnMut(usize, &[usize], &[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        check_budget(n, horizon)?;
        let mut tables = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let len = (t + 1).min(memory + 1);
            let keys = pow(n, len) * pow(n, t);
            let mut table = Vec::with_capacity(keys * n);
            let mut win = vec![0; len];
            let mut ys = vec![0; t];
            for key in 0..keys {
                decode(n, key / pow(n, t), &mut win);
                decode(n, key % pow(n, t), &mut ys);
                let s = f(t, &win, &ys);
                check_slice(&s, n, 1e-12)?;
                table.extend(s);
            }
            tables.push(table);
        }
        Ok(Self {
            n,
            horizon,
            memory,
            tables,
        })
    }

    pub fn simplified(
        n: usize,
        horizon: usize,
        f: impl FnMut(usize, &[usize], &[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        Self::from_fn(n, horizon, 1, f)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, horizon: usize, memory: usize, rng: &mut R) -> Result<Self> {
        Self::from_fn(n, horizon, memory, |_, _, _| random_simplex(n, rng))
    }

    /// Slice for an explicit window (oldest first) and release history.
    pub fn window_slice(&self, t: usize, window: &[usize], ys: &[usize]) -> &[f64] {
        let key = code(self.n, window) * pow(self.n, t) + code(self.n, &ys[..t]);
        &self.tables[t][key * self.n..(key + 1) * self.n]
    }

    #[cfg(test)]
    pub(crate) fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    /// The action a simplified policy takes after release history `ys`
    /// (`t = ys.len()`): state-conditioned at `t = 0`, pair-conditioned after.
    pub fn kernel_at(&self, ys: &[usize]) -> Result<ActionKernel> {
        if self.memory != 1 {
            return Err(PutError::Domain("kernel_at needs a memory-1 policy".into()));
        }
        let t = ys.len();
        let n = self.n;
        if t == 0 {
            let probs = (0..n).flat_map(|x| self.window_slice(0, &[x], ys).to_vec()).collect();
            return ActionKernel::new(n, KernelMode::StateConditioned, probs);
        }
        let mut probs = Vec::with_capacity(n * n * n);
        for x_t in 0..n {
            for x_prev in 0..n {
                probs.extend_from_slice(self.window_slice(t, &[x_prev, x_t], ys));
            }
        }
        ActionKernel::new(n, KernelMode::PairConditioned, probs)
    }

    /// The same rule written as a history-dependent policy.
    pub fn lift(&self) -> Result<HistoryPolicy> {
        HistoryPolicy::from_fn(self.n, self.horizon, |t, xs, ys| {
            let len = self.window_len(t);
            self.window_slice(t, &xs[t + 1 - len..=t], ys).to_vec()
        })
    }
}

impl ReleaseRule for WindowPolicy {
    fn alphabet(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn slice(&self, t: usize, xs: &[usize], ys: &[usize]) -> &[f64] {
        let len = self.window_len(t);
        self.window_slice(t, &xs[t + 1 - len..=t], ys)
    }
}

fn check_slice(s: &[f64], n: usize, tol: f64) -> Result<()> {
    if s.len() != n {
        return Err(PutError::Shape {
            expected: n,
            got: s.len(),
        });
    }
    prob::check_simplex(s, tol)
}

pub(crate) fn decode(n: usize, mut c: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = c % n;
        c /= n;
    }
}

pub(crate) fn check_budget(n: usize, horizon: usize) -> Result<()> {
    let entries = (n as u128).pow(2 * horizon as u32);
    if entries > ENTRY_BUDGET {
        return Err(PutError::Budget {
            entries,
            budget: ENTRY_BUDGET,
        });
    }
    Ok(())
}

/// `P(x^n, y^n)` stored at `code(x^n) * n^h + code(y^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    n: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn alphabet(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob(&self, xs: &[usize], ys: &[usize]) -> f64 {
        self.probs[code(self.n, xs) * pow(self.n, self.horizon) + code(self.n, ys)]
    }

    /// Calls `f(xs, ys, p)` for every positive entry.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], &[usize], f64)) {
        let h = self.horizon;
        let ny = pow(self.n, h);
        let mut xs = vec![0; h];
        let mut ys = vec![0; h];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                decode(self.n, idx / ny, &mut xs);
                decode(self.n, idx % ny, &mut ys);
                f(&xs, &ys, p);
            }
        }
    }

    /// Builds a table directly from probabilities (used by tests and fixtures).
    pub fn from_probs(n: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        check_budget(n, horizon)?;
        let expected = pow(n, 2 * horizon);
        if probs.len() != expected {
            return Err(PutError::Shape {
                expected,
                got: probs.len(),
            });
        }
        Ok(Self { n, horizon, probs })
    }
}

/// Enumerates `P(x^n, y^n) = Π_t P(x_t | x^{t-1}) q_t(y_t | x^t, y^{t-1})`.
pub fn enumerate_joint(source: &dyn SequenceSource, rule: &dyn ReleaseRule) -> Result<JointTable> {
    let n = source.alphabet();
    if rule.alphabet() != n {
        return Err(PutError::Shape {
            expected: n,
            got: rule.alphabet(),
        });
    }
    let h = rule.horizon();
    if h == 0 {
        return Err(PutError::Config("horizon must be at least 1".into()));
    }
    check_budget(n, h)?;
    let mut probs = vec![0.0; pow(n, 2 * h)];
    let mut xs = Vec::with_capacity(h);
    let mut ys = Vec::with_capacity(h);
    descend(source, rule, n, h, 1.0, &mut xs, &mut ys, &mut probs);
    Ok(JointTable { n, horizon: h, probs })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    source: &dyn SequenceSource,
    rule: &dyn ReleaseRule,
    n: usize,
    h: usize,
    p: f64,
    xs: &mut Vec<usize>,
    ys: &mut Vec<usize>,
    out: &mut [f64],
) {
    let t = xs.len();
    if t == h {
        out[code(n, xs) * pow(n, h) + code(n, ys)] += p;
        return;
    }
    for x in 0..n {
        let px = source.prob(xs, x);
        if px == 0.0 {
            continue;
        }
        xs.push(x);
        for (y, &py) in rule.slice(t, xs, ys).iter().enumerate() {
            if py == 0.0 {
                continue;
            }
            ys.push(y);
            descend(source, rule, n, h, p * px * py, xs, ys, out);
            ys.pop();
        }
        xs.pop();
    }
}

pub fn enumerate_joint_history(policy: &HistoryPolicy, chain: &TransitionMatrix, init: &InitialDistribution) -> Result<JointTable> {
    let source = FirstOrderSource {
        init: init.clone(),
        chain: chain.clone(),
    };
    enumerate_joint(&source, policy)
}

pub fn enumerate_joint_simplified(policy: &SimplifiedPolicy, chain: &TransitionMatrix, init: &InitialDistribution) -> Result<JointTable> {
    if policy.memory() != 1 {
        return Err(PutError::Domain(format!(
            "simplified policies have memory 1, got {}",
            policy.memory()
        )));
    }
    let source = FirstOrderSource {
        init: init.clone(),
        chain: chain.clone(),
    };
    enumerate_joint(&source, policy)
}

/// Marginalizes a history policy's joint onto a window policy:
/// `q'_t(y | window, y^{t-1}) = P(y_t = y | window, y^{t-1})`, uniform where the
/// conditioning event has zero probability.
pub fn project_to_window(policy: &HistoryPolicy, source: &dyn SequenceSource, memory: usize) -> Result<WindowPolicy> {
    let joint = enumerate_joint(source, policy)?;
    let n = joint.n;
    let h = joint.horizon;
    let mut num: Vec<Vec<f64>> = (0..h)
        .map(|t| vec![0.0; pow(n, (t + 1).min(memory + 1)) * pow(n, t) * n])
        .collect();
    joint.for_each(|xs, ys, p| {
        for (t, table) in num.iter_mut().enumerate() {
            let len = (t + 1).min(memory + 1);
            let key = code(n, &xs[t + 1 - len..=t]) * pow(n, t) + code(n, &ys[..t]);
            table[key * n + ys[t]] += p;
        }
    });
    let mut tables = Vec::with_capacity(h);
    for table in num {
        let mut out = table;
        for s in out.chunks_mut(n) {
            if prob::normalize(s) <= 0.0 {
                s.iter_mut().for_each(|v| *v = 1.0 / n as f64);
            }
        }
        tables.push(out);
    }
    Ok(WindowPolicy {
        n,
        horizon: h,
        memory,
        tables,
    })
}

/// Replaces a history-dependent policy by the simplified policy that induces
/// the same `P(x_t, x_{t-1}, y^t)` for every `t`.
pub fn simplify_policy(policy: &HistoryPolicy, chain: &TransitionMatrix, init: &InitialDistribution) -> Result<SimplifiedPolicy> {
    let source = FirstOrderSource {
        init: init.clone(),
        chain: chain.clone(),
    };
    project_to_window(policy, &source, 1)
}

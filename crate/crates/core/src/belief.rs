//! Belief-state MDP core.
//!
//! The observer's state is a belief `β(x_{t-1}) = P(X_{t-1} | y^{t-1})`. An
//! action is a release kernel `a(y_t | x_t, x_{t-1})`, or the reduced form
//! `a(y_t | x_t)`. Given `(β, Q, a)` the joint of `(x_{t-1}, x_t, y_t)` is
//! `β(x_{t-1}) Q(x_t | x_{t-1}) a(y_t | x_t, x_{t-1})`; leakage, distortion and
//! the Bayes update below are all functionals of that joint. Logs are natural.

use crate::distortion::{feasible_set, DistortionMatrix};
use crate::error::{PutError, Result};
use crate::prob;
use crate::source::TransitionMatrix;
use rand::Rng;
use std::fmt::Write as _;

pub const BELIEF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        prob::check_simplex(&probs, BELIEF_TOL)?;
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    /// `a(y | x_t)`
    #[default]
    StateConditioned,
    /// `a(y | x_t, x_{t-1})`
    PairConditioned,
}

impl KernelMode {
    /// Number of conditional slices over `y` for an alphabet of size `n`.
    pub fn slices(self, n: usize) -> usize {
        match self {
            KernelMode::StateConditioned => n,
            KernelMode::PairConditioned => n * n,
        }
    }
}

/// Release kernel. Slice `k` holds the distribution over `y`, where
/// `k = x_t` (state mode) or `k = x_t * n + x_{t-1}` (pair mode).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionKernel {
    n: usize,
    mode: KernelMode,
    probs: Vec<f64>,
}

impl ActionKernel {
    pub fn new(n: usize, mode: KernelMode, probs: Vec<f64>) -> Result<Self> {
        let expected = mode.slices(n) * n;
        if probs.len() != expected {
            return Err(PutError::Shape {
                expected,
                got: probs.len(),
            });
        }
        for (k, s) in probs.chunks(n).enumerate() {
            prob::check_simplex(s, BELIEF_TOL)
                .map_err(|e| PutError::InvalidDistribution(format!("slice {k}: {e}")))?;
        }
        Ok(Self { n, mode, probs })
    }

    /// Builds from per-slice rows without validation; callers guarantee stochastic slices.
    pub(crate) fn from_raw(n: usize, mode: KernelMode, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), mode.slices(n) * n);
        Self { n, mode, probs }
    }

    /// Releases the true symbol.
    pub fn truthful(n: usize) -> Self {
        let mut probs = vec![0.0; n * n];
        for x in 0..n {
            probs[x * n + x] = 1.0;
        }
        Self::from_raw(n, KernelMode::StateConditioned, probs)
    }

    /// Releases from `dist` regardless of the true data.
    pub fn independent(dist: &[f64]) -> Self {
        let n = dist.len();
        let probs = (0..n).flat_map(|_| dist.iter().copied()).collect();
        Self::from_raw(n, KernelMode::StateConditioned, probs)
    }

    pub fn constant(n: usize, y: usize) -> Self {
        let mut dist = vec![0.0; n];
        dist[y] = 1.0;
        Self::independent(&dist)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    fn slice_index(&self, x_t: usize, x_prev: usize) -> usize {
        match self.mode {
            KernelMode::StateConditioned => x_t,
            KernelMode::PairConditioned => x_t * self.n + x_prev,
        }
    }

    /// Distribution over `y` given `(x_t, x_{t-1})`.
    #[inline]
    pub fn slice(&self, x_t: usize, x_prev: usize) -> &[f64] {
        let k = self.slice_index(x_t, x_prev);
        &self.probs[k * self.n..(k + 1) * self.n]
    }

    #[inline]
    pub fn prob(&self, y: usize, x_t: usize, x_prev: usize) -> f64 {
        self.slice(x_t, x_prev)[y]
    }

    /// Expands a state-conditioned kernel to the pair form.
    pub fn to_pair(&self) -> ActionKernel {
        match self.mode {
            KernelMode::PairConditioned => self.clone(),
            KernelMode::StateConditioned => {
                let n = self.n;
                let mut probs = Vec::with_capacity(n * n * n);
                for x_t in 0..n {
                    for _ in 0..n {
                        probs.extend_from_slice(self.slice(x_t, 0));
                    }
                }
                Self::from_raw(n, KernelMode::PairConditioned, probs)
            }
        }
    }

    fn check_shapes(&self, belief: &Belief, chain: &TransitionMatrix) -> Result<()> {
        for got in [belief.len(), chain.size()] {
            if got != self.n {
                return Err(PutError::Shape {
                    expected: self.n,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Calls `f(x_t, x_prev, w)` with `w = β(x_prev) Q(x_t | x_prev)` for every
/// positive-mass pair. For state-conditioned kernels `x_prev` is summed out
/// first and reported as 0.
fn for_each_pair(
    belief: &Belief,
    chain: &TransitionMatrix,
    mode: KernelMode,
    mut f: impl FnMut(usize, usize, f64),
) {
    match mode {
        KernelMode::StateConditioned => {
            let pred = chain.propagate(belief.probs());
            for (x_t, &w) in pred.iter().enumerate() {
                if w > 0.0 {
                    f(x_t, 0, w);
                }
            }
        }
        KernelMode::PairConditioned => {
            for (x_prev, &b) in belief.probs().iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (x_t, &q) in chain.column(x_prev).iter().enumerate() {
                    let w = b * q;
                    if w > 0.0 {
                        f(x_t, x_prev, w);
                    }
                }
            }
        }
    }
}

/// `P(y_t | y^{t-1})` under the current belief.
pub fn release_marginal(belief: &Belief, chain: &TransitionMatrix, a: &ActionKernel) -> Result<Vec<f64>> {
    a.check_shapes(belief, chain)?;
    Ok(marginal_unchecked(belief, chain, a))
}

fn marginal_unchecked(belief: &Belief, chain: &TransitionMatrix, a: &ActionKernel) -> Vec<f64> {
    let mut m = vec![0.0; a.n];
    for_each_pair(belief, chain, a.mode, |x_t, x_prev, w| {
        for (mv, &p) in m.iter_mut().zip(a.slice(x_t, x_prev)) {
            *mv += w * p;
        }
    });
    m
}

/// Bayes update after observing `y`: the posterior over `x_t`.
pub fn belief_update(belief: &Belief, chain: &TransitionMatrix, a: &ActionKernel, y: usize) -> Result<Belief> {
    a.check_shapes(belief, chain)?;
    if y >= a.n {
        return Err(PutError::Domain(format!("observation {y} outside alphabet of {}", a.n)));
    }
    let mut post = vec![0.0; a.n];
    for_each_pair(belief, chain, a.mode, |x_t, x_prev, w| {
        post[x_t] += w * a.prob(y, x_t, x_prev);
    });
    let mass = prob::normalize(&mut post);
    if !(mass > 0.0) {
        return Err(PutError::ZeroProbabilityObservation { y });
    }
    Ok(Belief(post))
}

/// `ln a(y | x_t, x_{t-1}) / P(y | y^{t-1})` for one realization.
pub fn per_step_leakage(
    a: &ActionKernel,
    belief: &Belief,
    chain: &TransitionMatrix,
    x_t: usize,
    x_prev: usize,
    y: usize,
) -> Result<f64> {
    a.check_shapes(belief, chain)?;
    let num = a.prob(y, x_t, x_prev);
    if !(num > 0.0) {
        return Err(PutError::Domain(format!(
            "action assigns zero probability to y={y} at (x_t={x_t}, x_prev={x_prev})"
        )));
    }
    let m = marginal_unchecked(belief, chain, a);
    Ok((num / m[y]).ln())
}

/// Expected per-step leakage: `I(X_t, X_{t-1}; Y_t | y^{t-1})` under the belief.
pub fn avg_leakage(belief: &Belief, a: &ActionKernel, chain: &TransitionMatrix) -> Result<f64> {
    a.check_shapes(belief, chain)?;
    Ok(leakage_unchecked(belief, a, chain))
}

fn leakage_unchecked(belief: &Belief, a: &ActionKernel, chain: &TransitionMatrix) -> f64 {
    let m = marginal_unchecked(belief, chain, a);
    let mut total = 0.0;
    for_each_pair(belief, chain, a.mode, |x_t, x_prev, w| {
        for (&p, &mv) in a.slice(x_t, x_prev).iter().zip(&m) {
            // m(y) >= w p exactly; the clamp only matters once m(y) has underflowed
            let joint = w * p;
            if joint > 0.0 {
                total += joint * (p / mv.max(joint)).ln();
            }
        }
    });
    total
}

/// Expected per-step distortion `E[d(X_t, Y_t)]` under the belief.
pub fn avg_distortion(belief: &Belief, a: &ActionKernel, chain: &TransitionMatrix, d: &DistortionMatrix) -> Result<f64> {
    a.check_shapes(belief, chain)?;
    if d.size() != a.n {
        return Err(PutError::Shape {
            expected: a.n,
            got: d.size(),
        });
    }
    Ok(distortion_unchecked(belief, a, chain, d))
}

fn distortion_unchecked(belief: &Belief, a: &ActionKernel, chain: &TransitionMatrix, d: &DistortionMatrix) -> f64 {
    let mut total = 0.0;
    for_each_pair(belief, chain, a.mode, |x_t, x_prev, w| {
        let s: f64 = a.slice(x_t, x_prev).iter().zip(d.row(x_t)).map(|(p, dv)| p * dv).sum();
        total += w * s;
    });
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub leakage: f64,
    pub distortion: f64,
    pub combined: f64,
}

/// Lagrangian step cost `ℒ + λ (𝒟 - target)` for the average-constraint problem.
pub fn step_cost_adc(
    belief: &Belief,
    a: &ActionKernel,
    chain: &TransitionMatrix,
    d: &DistortionMatrix,
    lambda: f64,
    target: f64,
) -> Result<StepCost> {
    if !(lambda >= 0.0) {
        return Err(PutError::Config(format!("lambda {lambda} must be >= 0")));
    }
    let leakage = avg_leakage(belief, a, chain)?;
    let distortion = avg_distortion(belief, a, chain, d)?;
    Ok(StepCost {
        leakage,
        distortion,
        combined: leakage + lambda * (distortion - target),
    })
}

/// Kernel restricted to the instantaneous feasible sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedKernel {
    pub kernel: ActionKernel,
    /// Slices whose mass was entirely infeasible and were reset to uniform over the feasible set.
    pub degenerate_slices: usize,
}

/// Zeroes every `y` with `d(x_t, y) > max_distortion` and renormalizes each slice.
pub fn apply_idc_mask(a: &ActionKernel, d: &DistortionMatrix, max_distortion: f64) -> Result<MaskedKernel> {
    if d.size() != a.n {
        return Err(PutError::Shape {
            expected: a.n,
            got: d.size(),
        });
    }
    let n = a.n;
    let mut probs = a.probs.clone();
    let mut degenerate = 0;
    for (k, slice) in probs.chunks_mut(n).enumerate() {
        let x_t = match a.mode {
            KernelMode::StateConditioned => k,
            KernelMode::PairConditioned => k / n,
        };
        let row = d.row(x_t);
        for (p, &dv) in slice.iter_mut().zip(row) {
            if dv > max_distortion {
                *p = 0.0;
            }
        }
        if prob::normalize(slice) <= 0.0 {
            degenerate += 1;
            let feas = feasible_set(d, x_t, max_distortion);
            let u = 1.0 / feas.len() as f64;
            for y in feas {
                slice[y] = u;
            }
        }
    }
    Ok(MaskedKernel {
        kernel: ActionKernel::from_raw(n, a.mode, probs),
        degenerate_slices: degenerate,
    })
}

/// Per-step cost definition used by the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMode {
    /// `ℒ + λ(𝒟 - target)`
    Average { lambda: f64, target: f64 },
    /// Actions are masked to `d(x_t, y) <= max_distortion`; cost is `ℒ`.
    Instantaneous { max_distortion: f64 },
}

/// How the first transition of an episode is generated.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StartMode {
    /// `x_0 ~ β_0`, then `x_1 ~ Q(· | x_0)`.
    #[default]
    FromBelief,
    /// `x_1 ~ p` regardless of `x_0`: the first step uses a kernel whose columns all equal `p`.
    Memoryless(TransitionMatrix),
}

/// The artificial environment: known chain, distortion and cost definition.
#[derive(Debug, Clone)]
pub struct EnvModel {
    pub chain: TransitionMatrix,
    pub distortion: DistortionMatrix,
    pub cost: CostMode,
    pub start: StartMode,
}

/// Mutable part of a rollout: belief over the previous symbol and the sampled true pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub belief: Belief,
    pub x_prev: usize,
}

impl EnvState {
    pub fn start<R: Rng + ?Sized>(belief: Belief, rng: &mut R) -> Self {
        let x_prev = prob::draw(belief.probs(), rng);
        Self { t: 0, belief, x_prev }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceTuple {
    pub t: usize,
    pub belief_before: Belief,
    /// The kernel actually used to release, after masking in IDC mode.
    pub action: ActionKernel,
    pub x_prev: usize,
    pub x_t: usize,
    pub observation: usize,
    pub belief_after: Belief,
    pub cost: StepCost,
    pub mask_degenerate: usize,
}

impl EnvModel {
    /// Kernel generating `x_t` from `x_{t-1}` at 0-based step `t`.
    pub fn transition(&self, t: usize) -> &TransitionMatrix {
        match (&self.start, t) {
            (StartMode::Memoryless(k), 0) => k,
            _ => &self.chain,
        }
    }

    /// Evaluates the configured cost and the masked kernel for `(β, a)` without sampling.
    pub fn cost(&self, t: usize, belief: &Belief, a: &ActionKernel) -> Result<(ActionKernel, StepCost, usize)> {
        let chain = self.transition(t);
        match self.cost {
            CostMode::Average { lambda, target } => {
                let c = step_cost_adc(belief, a, chain, &self.distortion, lambda, target)?;
                Ok((a.clone(), c, 0))
            }
            CostMode::Instantaneous { max_distortion } => {
                let m = apply_idc_mask(a, &self.distortion, max_distortion)?;
                let leakage = avg_leakage(belief, &m.kernel, chain)?;
                let distortion = avg_distortion(belief, &m.kernel, chain, &self.distortion)?;
                let cost = StepCost {
                    leakage,
                    distortion,
                    combined: leakage,
                };
                Ok((m.kernel, cost, m.degenerate_slices))
            }
        }
    }
}

/// One interaction: draw `x_t`, release `y ~ a(· | x_t, x_{t-1})`, score, update the belief.
pub fn env_step<R: Rng + ?Sized>(
    model: &EnvModel,
    state: &EnvState,
    a: &ActionKernel,
    rng: &mut R,
) -> Result<(ExperienceTuple, EnvState)> {
    let (used, cost, degenerate) = model.cost(state.t, &state.belief, a)?;
    let chain = model.transition(state.t);
    let x_t = prob::draw(chain.column(state.x_prev), rng);
    let y = prob::draw(used.slice(x_t, state.x_prev), rng);
    let belief_after = belief_update(&state.belief, chain, &used, y)?;
    let next = EnvState {
        t: state.t + 1,
        belief: belief_after.clone(),
        x_prev: x_t,
    };
    let tuple = ExperienceTuple {
        t: state.t,
        belief_before: state.belief.clone(),
        action: used,
        x_prev: state.x_prev,
        x_t,
        observation: y,
        belief_after,
        cost,
        mask_degenerate: degenerate,
    };
    Ok((tuple, next))
}

/// One row per step: `t,y,leakage,distortion,combined`.
pub fn experience_csv(stream: &[ExperienceTuple]) -> String {
    let mut s = String::from("t,y,leakage,distortion,combined\n");
    for e in stream {
        let _ = writeln!(
            s,
            "{},{},{:?},{:?},{:?}",
            e.t, e.observation, e.cost.leakage, e.cost.distortion, e.cost.combined
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::manhattan_grid;
    use crate::source::{make_q1_chain, make_uniform_chain, default_q1_weights, StateSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> TransitionMatrix {
        TransitionMatrix::from_rows(StateSpace::new(2).unwrap(), &[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap()
    }

    fn random_kernel(n: usize, mode: KernelMode, rng: &mut ChaCha8Rng) -> ActionKernel {
        let mut probs: Vec<f64> = (0..mode.slices(n) * n).map(|_| rng.random::<f64>() + 1e-3).collect();
        for s in probs.chunks_mut(n) {
            prob::normalize(s);
        }
        ActionKernel::new(n, mode, probs).unwrap()
    }

    fn random_belief(n: usize, rng: &mut ChaCha8Rng) -> Belief {
        let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        prob::normalize(&mut p);
        Belief::new(p).unwrap()
    }

    #[test]
    fn leakage_stays_finite_when_the_marginal_underflows() {
        // half the smallest subnormal rounds to zero in the marginal
        let chain = make_uniform_chain(StateSpace::new(2).unwrap());
        let tiny = f64::from_bits(1);
        assert_eq!(0.5 * tiny, 0.0);
        let a = ActionKernel::new(2, KernelMode::StateConditioned, vec![1.0, 0.0, 1.0, tiny]).unwrap();
        let b = Belief::new(vec![1.0, 0.0]).unwrap();
        let l = avg_leakage(&b, &a, &chain).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn marginal_examples() {
        let q = two_state();
        let a = ActionKernel::truthful(2);
        let m = release_marginal(&Belief::point_mass(2, 0), &q, &a).unwrap();
        assert!((m[0] - 0.9).abs() < 1e-15 && (m[1] - 0.1).abs() < 1e-15);

        let ind = ActionKernel::independent(&[0.3, 0.7]);
        let m = release_marginal(&Belief::new(vec![0.4, 0.6]).unwrap(), &q, &ind).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15);

        let u = make_uniform_chain(StateSpace::new(4).unwrap());
        let m = release_marginal(&Belief::uniform(4), &u, &ActionKernel::truthful(4)).unwrap();
        assert!(m.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn update_examples() {
        let q = two_state();
        let b = belief_update(&Belief::point_mass(2, 0), &q, &ActionKernel::truthful(2), 1).unwrap();
        assert_eq!(b.probs(), &[0.0, 1.0]);

        let u = make_uniform_chain(StateSpace::new(3).unwrap());
        let ind = ActionKernel::independent(&[0.2, 0.3, 0.5]);
        let b = belief_update(&Belief::point_mass(3, 2), &u, &ind, 0).unwrap();
        assert!(b.probs().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn zero_probability_observation_rejected() {
        let q = TransitionMatrix::identity(StateSpace::new(2).unwrap());
        let err = belief_update(&Belief::point_mass(2, 0), &q, &ActionKernel::truthful(2), 1).unwrap_err();
        assert_eq!(err, PutError::ZeroProbabilityObservation { y: 1 });
    }

    #[test]
    fn truthful_leakage_on_uniform_grid() {
        let u = make_uniform_chain(StateSpace::new(16).unwrap());
        let a = ActionKernel::truthful(16);
        let b = Belief::uniform(16);
        for x in 0..16 {
            let l = per_step_leakage(&a, &b, &u, x, 3, x).unwrap();
            assert!((l - 16f64.ln()).abs() < 1e-12);
        }
        assert!((avg_leakage(&b, &a, &u).unwrap() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn truthful_leakage_is_marginal_entropy() {
        let q = make_q1_chain(3, 2, &default_q1_weights()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_belief(6, &mut rng);
        let a = ActionKernel::truthful(6);
        let m = release_marginal(&b, &q, &a).unwrap();
        assert!((avg_leakage(&b, &a, &q).unwrap() - prob::entropy(&m)).abs() < 1e-12);
    }

    #[test]
    fn independent_release_leaks_nothing() {
        let q = two_state();
        let a = ActionKernel::independent(&[0.4, 0.6]);
        let b = Belief::new(vec![0.7, 0.3]).unwrap();
        assert!(avg_leakage(&b, &a, &q).unwrap().abs() < 1e-15);
        for (xt, xp, y) in [(0, 0, 0), (1, 0, 1), (0, 1, 1)] {
            assert!(per_step_leakage(&a, &b, &q, xt, xp, y).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn leakage_is_expectation_of_per_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [KernelMode::StateConditioned, KernelMode::PairConditioned] {
            let n = 4;
            let q = make_q1_chain(2, 2, &[1.0, 3.0, 2.0]).unwrap();
            let a = random_kernel(n, mode, &mut rng);
            let b = random_belief(n, &mut rng);
            let mut expect = 0.0;
            for xp in 0..n {
                for xt in 0..n {
                    for y in 0..n {
                        let p = b.probs()[xp] * q.get(xt, xp) * a.prob(y, xt, xp);
                        expect += p * per_step_leakage(&a, &b, &q, xt, xp, y).unwrap();
                    }
                }
            }
            let l = avg_leakage(&b, &a, &q).unwrap();
            assert!((expect - l).abs() < 1e-12, "{mode:?}: {expect} vs {l}");
            assert!(l >= 0.0);
        }
    }

    #[test]
    fn pair_expansion_preserves_functionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = make_q1_chain(2, 2, &[1.0, 3.0, 2.0]).unwrap();
        let d = manhattan_grid(2, 2).unwrap();
        let a = random_kernel(4, KernelMode::StateConditioned, &mut rng);
        let p = a.to_pair();
        let b = random_belief(4, &mut rng);
        assert!((avg_leakage(&b, &a, &q).unwrap() - avg_leakage(&b, &p, &q).unwrap()).abs() < 1e-14);
        assert!((avg_distortion(&b, &a, &q, &d).unwrap() - avg_distortion(&b, &p, &q, &d).unwrap()).abs() < 1e-14);
        let u1 = belief_update(&b, &q, &a, 2).unwrap();
        let u2 = belief_update(&b, &q, &p, 2).unwrap();
        for (x, y) in u1.probs().iter().zip(u2.probs()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn distortion_examples() {
        let u = make_uniform_chain(StateSpace::new(16).unwrap());
        let d = manhattan_grid(4, 4).unwrap();
        let b = Belief::uniform(16);
        assert_eq!(avg_distortion(&b, &ActionKernel::truthful(16), &u, &d).unwrap(), 0.0);
        let c = avg_distortion(&b, &ActionKernel::constant(16, 0), &u, &d).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_kernel(16, KernelMode::StateConditioned, &mut rng);
            let v = avg_distortion(&random_belief(16, &mut rng), &a, &u, &d).unwrap();
            assert!((0.0..=6.0).contains(&v));
        }
    }

    #[test]
    fn adc_cost_examples() {
        let q = two_state();
        let d = DistortionMatrix::hamming(2).unwrap();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let a = ActionKernel::new(2, KernelMode::StateConditioned, vec![0.8, 0.2, 0.3, 0.7]).unwrap();
        let l = avg_leakage(&b, &a, &q).unwrap();
        let c0 = step_cost_adc(&b, &a, &q, &d, 0.0, 0.4).unwrap();
        assert_eq!(c0.combined, l);
        let t = step_cost_adc(&b, &ActionKernel::truthful(2), &q, &d, 5.0, 0.0).unwrap();
        assert_eq!(t.combined, t.leakage);
        let dist = avg_distortion(&b, &a, &q, &d).unwrap();
        let c3 = step_cost_adc(&b, &a, &q, &d, 3.0, dist).unwrap();
        assert_eq!(c3.combined, l);
        assert!(step_cost_adc(&b, &a, &q, &d, -1.0, 0.0).is_err());
    }

    #[test]
    fn mask_examples() {
        let d = manhattan_grid(4, 4).unwrap();
        let uniform = ActionKernel::independent(&[1.0 / 16.0; 16]);
        let m = apply_idc_mask(&uniform, &d, 1.0).unwrap();
        let s = m.kernel.slice(0, 0);
        for y in 0..16 {
            let expect = if [0, 1, 4].contains(&y) { 1.0 / 3.0 } else { 0.0 };
            assert!((s[y] - expect).abs() < 1e-15);
        }
        assert_eq!(apply_idc_mask(&uniform, &d, 6.0).unwrap().kernel, uniform);

        let forced = apply_idc_mask(&uniform, &d, 0.0).unwrap().kernel;
        let u = make_uniform_chain(StateSpace::new(16).unwrap());
        let b = Belief::uniform(16);
        let l = avg_leakage(&b, &forced, &u).unwrap();
        let lt = avg_leakage(&b, &ActionKernel::truthful(16), &u).unwrap();
        assert!((l - lt).abs() < 1e-12);
    }

    #[test]
    fn mask_degenerate_falls_back_to_uniform() {
        let d = manhattan_grid(4, 4).unwrap();
        let far = ActionKernel::constant(16, 15);
        let m = apply_idc_mask(&far, &d, 1.0).unwrap();
        assert!(m.degenerate_slices > 0);
        let s = m.kernel.slice(0, 0);
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-15 && (s[4] - 1.0 / 3.0).abs() < 1e-15);
        // cells within one step of cell 16 keep the constant release
        assert_eq!(m.kernel.slice(15, 0)[15], 1.0);
    }

    #[test]
    fn mask_support_respects_threshold() {
        let d = manhattan_grid(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [KernelMode::StateConditioned, KernelMode::PairConditioned] {
            let a = random_kernel(16, mode, &mut rng);
            for thr in [0.0, 1.0, 2.5, 4.0] {
                let m = apply_idc_mask(&a, &d, thr).unwrap().kernel;
                for xt in 0..16 {
                    for xp in 0..16 {
                        for (y, &p) in m.slice(xt, xp).iter().enumerate() {
                            if p > 0.0 {
                                assert!(d.get(xt, y) <= thr);
                            }
                        }
                        let s: f64 = m.slice(xt, xp).iter().sum();
                        assert!((s - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_chain_truthful_replays() {
        // 3-cycle
        let q = TransitionMatrix::from_rows(
            StateSpace::new(3).unwrap(),
            &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        let model = EnvModel {
            chain: q,
            distortion: DistortionMatrix::hamming(3).unwrap(),
            cost: CostMode::Average { lambda: 1.0, target: 0.0 },
            start: StartMode::FromBelief,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = EnvState::start(Belief::point_mass(3, 1), &mut rng);
        let a = ActionKernel::truthful(3);
        let mut expected = 1;
        for _ in 0..6 {
            let (e, next) = env_step(&model, &state, &a, &mut rng).unwrap();
            expected = (expected + 1) % 3;
            assert_eq!(e.x_t, expected);
            assert_eq!(e.observation, expected);
            assert_eq!(next.belief, Belief::point_mass(3, expected));
            state = next;
        }
    }

    #[test]
    fn env_stream_is_seed_deterministic() {
        let model = EnvModel {
            chain: make_q1_chain(2, 2, &[1.0, 3.0, 2.0]).unwrap(),
            distortion: manhattan_grid(2, 2).unwrap(),
            cost: CostMode::Instantaneous { max_distortion: 1.0 },
            start: StartMode::FromBelief,
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_kernel(4, KernelMode::PairConditioned, &mut ChaCha8Rng::seed_from_u64(99));
            let mut s = EnvState::start(Belief::uniform(4), &mut rng);
            let mut out = Vec::new();
            for _ in 0..50 {
                let (e, n) = env_step(&model, &s, &a, &mut rng).unwrap();
                out.push(e);
                s = n;
            }
            out
        };
        assert_eq!(run(4), run(4));
        let csv = experience_csv(&run(4));
        assert_eq!(csv.lines().count(), 51);
    }
}

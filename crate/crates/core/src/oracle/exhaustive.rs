//! Exact optimum over a discretized simplified-policy class for binary
//! alphabets and short horizons.
//!
//! A simplified policy may depend on the whole release history, so the
//! optimization splits into independent per-history subproblems. Each
//! subproblem only sees the belief over the previous true symbol, which is
//! what the recursion below carries.

use super::joint::{SimplifiedPolicy, WindowPolicy};
use crate::distortion::DistortionMatrix;
use crate::error::{PutError, Result};
use crate::source::{InitialDistribution, TransitionMatrix};
use std::collections::HashMap;

/// Upper bound on stage-cost evaluations for a single solve.
pub const EVAL_BUDGET: u128 = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// `d(x_t, y_t) <= max` at every step.
    Instantaneous(f64),
    /// `(1/n) Σ E[d(X_t, Y_t)] <= target`.
    Average(f64),
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub policy: SimplifiedPolicy,
    /// `Σ_t I(X_t, X_{t-1}; Y_t | Y^{t-1})`, equal to `I(X^n; Y^n)` for the policy.
    pub leakage: f64,
    /// Per-step average expected distortion.
    pub distortion: f64,
    /// Multiplier whose Lagrangian minimizer was returned, when one was used.
    pub lambda: Option<f64>,
    pub horizon: usize,
}

impl ExhaustiveResult {
    pub fn avg_leakage(&self) -> f64 {
        self.leakage / self.horizon as f64
    }

    /// `(1/n) Σ_t (ℒ_t + λ 𝒟_t)`, without the constant target offset.
    pub fn lagrangian(&self, lambda: f64) -> f64 {
        self.avg_leakage() + lambda * self.distortion
    }
}

#[derive(Debug, Clone, Copy)]
struct Val {
    obj: f64,
    leak: f64,
    dist: f64,
}

impl Val {
    fn better_than(&self, other: &Val) -> bool {
        self.obj < other.obj - 1e-12 || (self.obj <= other.obj + 1e-12 && self.dist < other.dist - 1e-12)
    }
}

struct Problem {
    q: [[f64; 2]; 2],
    d: [[f64; 2]; 2],
    init: [f64; 2],
    horizon: usize,
    lambda: f64,
    grid: Vec<f64>,
    hgrid: Vec<f64>,
    // allowed grid indices of P(y = 0) per true symbol
    allowed: [Vec<usize>; 2],
    memo: HashMap<(usize, u64, u64), Val>,
}

fn h2(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

impl Problem {
    fn slice_weights(&self, t: usize, beta: [f64; 2]) -> Vec<(usize, f64)> {
        // (true symbol x_t, weight) per slice; slice index x_t * 2 + x_prev for t >= 1
        if t == 0 {
            vec![(0, self.init[0]), (1, self.init[1])]
        } else {
            let mut v = Vec::with_capacity(4);
            for x in 0..2 {
                for xp in 0..2 {
                    v.push((x, beta[xp] * self.q[x][xp]));
                }
            }
            v
        }
    }

    fn stage_evals(&self, t: usize) -> u128 {
        let slices = if t == 0 { 2 } else { 4 };
        let per = self.allowed[0].len().max(self.allowed[1].len()) as u128;
        per.pow(slices)
    }

    /// Calls `f(choice, stage, m0)` for each combination of slice values.
    /// With `inner_min`, only the best value of the last slice is reported
    /// per combination of the others; the stage cost is convex along any
    /// single slice, so a bisection on forward differences finds it.
    fn for_each_choice(&self, slices: &[(usize, f64)], inner_min: bool, mut f: impl FnMut(&[usize], Val, f64)) {
        let s = slices.len();
        let (xl, wl) = slices[s - 1];
        let last = &self.allowed[xl];
        let mut idx = vec![0usize; s - 1];
        let mut choice = vec![0usize; s];
        loop {
            let (mut m, mut hs, mut ds) = (0.0, 0.0, 0.0);
            for k in 0..s - 1 {
                let (x, w) = slices[k];
                let g = self.allowed[x][idx[k]];
                choice[k] = g;
                let p = self.grid[g];
                m += w * p;
                hs += w * self.hgrid[g];
                ds += w * (p * self.d[x][0] + (1.0 - p) * self.d[x][1]);
            }
            let eval = |i: usize| -> (Val, f64) {
                let g = last[i];
                let p = self.grid[g];
                let m0 = m + wl * p;
                let leak = (h2(m0.clamp(0.0, 1.0)) - hs - wl * self.hgrid[g]).max(0.0);
                let dist = ds + wl * (p * self.d[xl][0] + (1.0 - p) * self.d[xl][1]);
                (
                    Val {
                        obj: leak + self.lambda * dist,
                        leak,
                        dist,
                    },
                    m0,
                )
            };
            if inner_min {
                let (mut lo, mut hi) = (0, last.len() - 1);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if eval(mid + 1).0.obj < eval(mid).0.obj {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                let (mut best, mut bm) = eval(lo);
                let mut bi = lo;
                let floor = best.obj + 1e-12;
                let scan = (0..lo).rev().map_while(|i| Some(i).filter(|&i| eval(i).0.obj <= floor));
                let right = (lo + 1..last.len()).map_while(|i| Some(i).filter(|&i| eval(i).0.obj <= floor));
                for i in scan.chain(right).collect::<Vec<_>>() {
                    let (v, m0) = eval(i);
                    if v.better_than(&best) {
                        (best, bm, bi) = (v, m0, i);
                    }
                }
                choice[s - 1] = last[bi];
                f(&choice, best, bm);
            } else {
                for i in 0..last.len() {
                    let (v, m0) = eval(i);
                    choice[s - 1] = last[i];
                    f(&choice, v, m0);
                }
            }
            let mut k = 0;
            loop {
                if k == s - 1 {
                    return;
                }
                idx[k] += 1;
                if idx[k] < self.allowed[slices[k].0].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn posterior(&self, slices: &[(usize, f64)], choice: &[usize], y: usize, my: f64) -> [f64; 2] {
        let mut b = [0.0; 2];
        for (k, &(x, w)) in slices.iter().enumerate() {
            let p0 = self.grid[choice[k]];
            let py = if y == 0 { p0 } else { 1.0 - p0 };
            b[x] += w * py;
        }
        [b[0] / my, b[1] / my]
    }

    fn solve(&mut self, t: usize, beta: [f64; 2]) -> Val {
        let key = (t, beta[0].to_bits(), beta[1].to_bits());
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let slices = self.slice_weights(t, beta);
        let last = t + 1 == self.horizon;
        let mut best = Val {
            obj: f64::INFINITY,
            leak: 0.0,
            dist: f64::INFINITY,
        };
        if last {
            self.for_each_choice(&slices, true, |_, v, _| {
                if v.better_than(&best) {
                    best = v;
                }
            });
        } else {
            let mut cands = Vec::new();
            self.for_each_choice(&slices, false, |c, v, m0| cands.push((c.to_vec(), v, m0)));
            for (choice, stage, m0) in cands {
                let total = self.continue_from(t, &slices, &choice, stage, m0);
                if total.better_than(&best) {
                    best = total;
                }
            }
        }
        self.memo.insert(key, best);
        best
    }

    fn continue_from(&mut self, t: usize, slices: &[(usize, f64)], choice: &[usize], stage: Val, m0: f64) -> Val {
        let mut total = stage;
        for (y, my) in [(0, m0), (1, 1.0 - m0)] {
            if my <= 1e-15 {
                continue;
            }
            let b = self.posterior(slices, choice, y, my);
            let child = self.solve(t + 1, b);
            total.obj += my * child.obj;
            total.leak += my * child.leak;
            total.dist += my * child.dist;
        }
        total
    }

    fn argmin(&mut self, t: usize, beta: [f64; 2]) -> Vec<usize> {
        let slices = self.slice_weights(t, beta);
        let last = t + 1 == self.horizon;
        let mut cands = Vec::new();
        self.for_each_choice(&slices, last, |c, v, m0| cands.push((c.to_vec(), v, m0)));
        let mut best: Option<(Vec<usize>, Val)> = None;
        for (choice, stage, m0) in cands {
            let total = if last {
                stage
            } else {
                self.continue_from(t, &slices, &choice, stage, m0)
            };
            if best.as_ref().is_none_or(|(_, b)| total.better_than(b)) {
                best = Some((choice, total));
            }
        }
        best.expect("at least one choice").0
    }

    fn record(&mut self, t: usize, beta: [f64; 2], ys: &mut Vec<usize>, out: &mut HashMap<Vec<usize>, Vec<f64>>) {
        let choice = self.argmin(t, beta);
        let slices = self.slice_weights(t, beta);
        out.insert(ys.clone(), choice.iter().map(|&g| self.grid[g]).collect());
        if t + 1 == self.horizon {
            return;
        }
        let m0: f64 = slices.iter().zip(&choice).map(|(&(_, w), &g)| w * self.grid[g]).sum();
        for (y, my) in [(0, m0), (1, 1.0 - m0)] {
            if my <= 1e-15 {
                continue;
            }
            let b = self.posterior(&slices, &choice, y, my);
            ys.push(y);
            self.record(t + 1, b, ys, out);
            ys.pop();
        }
    }
}

fn build(
    chain: &TransitionMatrix,
    init: &InitialDistribution,
    d: &DistortionMatrix,
    max_distortion: Option<f64>,
    horizon: usize,
    grid_resolution: usize,
    lambda: f64,
) -> Result<Problem> {
    if chain.size() != 2 || d.size() != 2 || init.probs().len() != 2 {
        return Err(PutError::Domain("exhaustive search supports a binary alphabet only".into()));
    }
    if !(1..=3).contains(&horizon) {
        return Err(PutError::Domain(format!("horizon {horizon} outside 1..=3")));
    }
    if grid_resolution == 0 {
        return Err(PutError::Config("grid resolution must be positive".into()));
    }
    let grid: Vec<f64> = (0..=grid_resolution).map(|i| i as f64 / grid_resolution as f64).collect();
    let hgrid = grid.iter().map(|&p| h2(p)).collect();
    let allowed_for = |x: usize| -> Vec<usize> {
        match max_distortion {
            Some(m) if d.get(x, 1) > m => vec![grid_resolution],
            Some(m) if d.get(x, 0) > m => vec![0],
            _ => (0..=grid_resolution).collect(),
        }
    };
    let p = Problem {
        q: [[chain.get(0, 0), chain.get(0, 1)], [chain.get(1, 0), chain.get(1, 1)]],
        d: [[d.get(0, 0), d.get(0, 1)], [d.get(1, 0), d.get(1, 1)]],
        init: [init.probs()[0], init.probs()[1]],
        horizon,
        lambda,
        grid,
        hgrid,
        allowed: [allowed_for(0), allowed_for(1)],
        memo: HashMap::new(),
    };
    let evals: u128 = (0..horizon)
        .map(|t| p.stage_evals(t) * if t + 1 < horizon { 2 } else { 1 })
        .product();
    if evals > EVAL_BUDGET {
        return Err(PutError::Budget {
            entries: evals,
            budget: EVAL_BUDGET,
        });
    }
    Ok(p)
}

fn finish(mut p: Problem, lambda: Option<f64>) -> Result<ExhaustiveResult> {
    let start = [0.5, 0.5];
    let val = p.solve(0, start);
    let mut tables = HashMap::new();
    p.record(0, start, &mut Vec::new(), &mut tables);
    let horizon = p.horizon;
    let policy = WindowPolicy::simplified(2, horizon, |t, win, ys| {
        match tables.get(ys) {
            Some(slices) => {
                let k = if t == 0 { win[0] } else { win[1] * 2 + win[0] };
                vec![slices[k], 1.0 - slices[k]]
            }
            None => vec![0.5, 0.5],
        }
    })?;
    Ok(ExhaustiveResult {
        policy,
        leakage: val.leak,
        distortion: val.dist / horizon as f64,
        lambda,
        horizon,
    })
}

/// Minimizes `(1/n) Σ_t (ℒ_t + λ 𝒟_t)` over the grid-discretized simplified class.
pub fn exhaustive_lagrangian(
    chain: &TransitionMatrix,
    init: &InitialDistribution,
    d: &DistortionMatrix,
    lambda: f64,
    horizon: usize,
    grid_resolution: usize,
) -> Result<ExhaustiveResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PutError::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let p = build(chain, init, d, None, horizon, grid_resolution, lambda)?;
    finish(p, Some(lambda))
}

/// Minimum leakage over the grid-discretized simplified class under an
/// instantaneous or average distortion constraint.
///
/// The average form returns the Lagrangian minimizer for the smallest
/// multiplier (found by bisection) whose distortion meets the target.
pub fn exhaustive_best_simplified(
    chain: &TransitionMatrix,
    init: &InitialDistribution,
    d: &DistortionMatrix,
    constraint: Constraint,
    horizon: usize,
    grid_resolution: usize,
) -> Result<ExhaustiveResult> {
    match constraint {
        Constraint::Instantaneous(max) => {
            let p = build(chain, init, d, Some(max), horizon, grid_resolution, 0.0)?;
            finish(p, None)
        }
        Constraint::Average(target) => {
            let solve = |l: f64| exhaustive_lagrangian(chain, init, d, l, horizon, grid_resolution);
            let at_zero = solve(0.0)?;
            if at_zero.distortion <= target + 1e-12 {
                return Ok(at_zero);
            }
            let mut lo = 0.0;
            let mut hi = 1.0;
            let mut best = solve(hi)?;
            while best.distortion > target + 1e-12 {
                lo = hi;
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(PutError::Bisection {
                        lo,
                        hi,
                        d_lo: at_zero.distortion,
                        d_hi: best.distortion,
                        target,
                    });
                }
                best = solve(hi)?;
            }
            while hi - lo > 1e-4 * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                let r = solve(mid)?;
                if r.distortion <= target + 1e-12 {
                    hi = mid;
                    best = r;
                } else {
                    lo = mid;
                }
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::info::{expected_distortion, mutual_information, source_entropy};
    use crate::oracle::joint::enumerate_joint_simplified;
    use crate::source::StateSpace;

    fn chain() -> TransitionMatrix {
        TransitionMatrix::from_rows(StateSpace::new(2).unwrap(), &[vec![0.8, 0.3], vec![0.2, 0.7]]).unwrap()
    }

    #[test]
    fn zero_tolerance_forces_truthful() {
        let init = InitialDistribution::new(vec![0.4, 0.6]).unwrap();
        let d = DistortionMatrix::hamming(2).unwrap();
        for n in 1..=3 {
            let r = exhaustive_best_simplified(&chain(), &init, &d, Constraint::Instantaneous(0.0), n, 4).unwrap();
            let j = enumerate_joint_simplified(&r.policy, &chain(), &init).unwrap();
            assert!((r.leakage - source_entropy(&j)).abs() < 1e-9);
            assert!(r.distortion.abs() < 1e-12);
        }
    }

    #[test]
    fn wide_tolerance_leaks_nothing() {
        let init = InitialDistribution::new(vec![0.4, 0.6]).unwrap();
        let d = DistortionMatrix::hamming(2).unwrap();
        let r = exhaustive_best_simplified(&chain(), &init, &d, Constraint::Instantaneous(1.0), 2, 10).unwrap();
        assert!(r.leakage.abs() < 1e-12);
    }

    #[test]
    fn reported_values_match_enumeration() {
        let init = InitialDistribution::new(vec![0.4, 0.6]).unwrap();
        let d = DistortionMatrix::hamming(2).unwrap();
        for lambda in [0.3, 1.0, 3.0] {
            let r = exhaustive_lagrangian(&chain(), &init, &d, lambda, 2, 8).unwrap();
            let j = enumerate_joint_simplified(&r.policy, &chain(), &init).unwrap();
            assert!((mutual_information(&j) - r.leakage).abs() < 1e-9);
            assert!((expected_distortion(&j, &d) - r.distortion).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_guard() {
        let init = InitialDistribution::uniform(2);
        let d = DistortionMatrix::hamming(2).unwrap();
        let err = exhaustive_lagrangian(&chain(), &init, &d, 1.0, 3, 20).unwrap_err();
        assert!(matches!(err, PutError::Budget { .. }));
    }
}

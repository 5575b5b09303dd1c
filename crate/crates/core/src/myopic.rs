//! The one-step-memory baseline: each release conditions on the current and
//! previous true symbols and on the previous release only, and each step
//! solves its own rate-distortion problem by Blahut–Arimoto.

use crate::belief::{ActionKernel, Belief, KernelMode, StartMode};
use crate::distortion::DistortionMatrix;
use crate::error::{PutError, Result};
use crate::prob;
use crate::source::TransitionMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    /// Stop once successive objectives differ by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaResult {
    /// `channel[s * n_y + y]`
    pub channel: Vec<f64>,
    /// `I + λ E[d]` at the returned channel.
    pub objective: f64,
    pub mutual_information: f64,
    pub distortion: f64,
    pub iters: usize,
    pub converged: bool,
    pub last_delta: f64,
    /// Iterations whose objective rose by more than round-off.
    pub monotone_violations: usize,
}

fn marginal(prior: &[f64], channel: &[f64], n_y: usize) -> Vec<f64> {
    let mut r = vec![0.0; n_y];
    for (s, &p) in prior.iter().enumerate() {
        if p > 0.0 {
            for (rv, &q) in r.iter_mut().zip(&channel[s * n_y..(s + 1) * n_y]) {
                *rv += p * q;
            }
        }
    }
    r
}

fn scores(prior: &[f64], cost: &[f64], channel: &[f64], r: &[f64], n_y: usize) -> (f64, f64) {
    let mut mi = 0.0;
    let mut dist = 0.0;
    for (s, &p) in prior.iter().enumerate() {
        if p > 0.0 {
            for y in 0..n_y {
                let q = channel[s * n_y + y];
                // r(y) >= p q exactly; the clamp only matters once r(y) has underflowed
                let joint = p * q;
                if joint > 0.0 {
                    mi += joint * (q / r[y].max(joint)).ln();
                }
                dist += joint * cost[s * n_y + y];
            }
        }
    }
    (mi.max(0.0), dist)
}

/// Minimizes `I(S;Y) + λ E[c(S,Y)]` over channels `q(y|s)` for a prior on
/// `S`, starting from the uniform channel. `cost[s * n_y + y]`.
pub fn blahut_arimoto_general(prior: &[f64], cost: &[f64], n_y: usize, lambda: f64, opts: BaOptions) -> Result<BaResult> {
    prob::check_simplex(prior, 1e-9)?;
    if cost.len() != prior.len() * n_y {
        return Err(PutError::Shape {
            expected: prior.len() * n_y,
            got: cost.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PutError::Domain(format!("lambda {lambda} must be finite and nonnegative")));
    }
    let n_s = prior.len();
    // exp(-λ (c - min_y c)) keeps at least one unit entry per row
    let mut tilt = vec![0.0; n_s * n_y];
    let mut offset = 0.0;
    for s in 0..n_s {
        let row = &cost[s * n_y..(s + 1) * n_y];
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        offset += prior[s] * lambda * lo;
        for y in 0..n_y {
            tilt[s * n_y + y] = (-lambda * (row[y] - lo)).exp();
        }
    }
    let mut channel = vec![1.0 / n_y as f64; n_s * n_y];
    let mut r = marginal(prior, &channel, n_y);
    let (mi, dist) = scores(prior, cost, &channel, &r, n_y);
    let mut obj = mi + lambda * dist;
    let mut result = BaResult {
        channel: Vec::new(),
        objective: obj,
        mutual_information: mi,
        distortion: dist,
        iters: 0,
        converged: false,
        last_delta: f64::INFINITY,
        monotone_violations: 0,
    };
    for it in 1..=opts.max_iters {
        // with q(y|s) = r(y) t(s,y) / Z_s the objective of the new channel is
        // Σ_y r'(y) ln(r(y)/r'(y)) − Σ_s p(s) ln Z_s + λ Σ_s p(s) min_y c(s,y)
        let mut log_z = 0.0;
        for s in 0..n_s {
            let row = &mut channel[s * n_y..(s + 1) * n_y];
            if prior[s] == 0.0 {
                continue;
            }
            let t = &tilt[s * n_y..(s + 1) * n_y];
            let mut z = 0.0;
            for y in 0..n_y {
                row[y] = r[y] * t[y];
                z += row[y];
            }
            row.iter_mut().for_each(|v| *v /= z);
            log_z += prior[s] * z.ln();
        }
        let r_next = marginal(prior, &channel, n_y);
        let cross: f64 = r_next
            .iter()
            .zip(&r)
            .filter(|(&rn, _)| rn > 0.0)
            .map(|(&rn, &ro)| rn * (ro / rn).ln())
            .sum();
        let next = cross - log_z + offset;
        r = r_next;
        if next > obj + 1e-12 * (1.0 + obj.abs()) {
            result.monotone_violations += 1;
        }
        result.last_delta = (obj - next).abs();
        result.iters = it;
        obj = next;
        if result.last_delta < opts.tol {
            result.converged = true;
            break;
        }
    }
    // rows with no prior mass follow the output marginal
    for s in (0..n_s).filter(|&s| prior[s] == 0.0) {
        let row = &mut channel[s * n_y..(s + 1) * n_y];
        row.copy_from_slice(&r);
        prob::normalize(row);
    }
    let (mi, dist) = scores(prior, cost, &channel, &r, n_y);
    result.mutual_information = mi;
    result.distortion = dist;
    result.objective = mi + lambda * dist;
    result.channel = channel;
    Ok(result)
}

/// Single-step problem over pairs `s = x_t * n + x_{t-1}` with cost `d(x_t, y)`.
///
/// Starting from the uniform channel, every iterate depends on `x_t` alone
/// (the cost does), so the iteration runs on the `x_t` marginal and the
/// channel is expanded to pairs at the end; the iterates are the same.
pub fn blahut_arimoto(prior: &[f64], d: &DistortionMatrix, lambda: f64, opts: BaOptions) -> Result<BaResult> {
    let n = d.size();
    if prior.len() != n * n {
        return Err(PutError::Shape {
            expected: n * n,
            got: prior.len(),
        });
    }
    prob::check_simplex(prior, 1e-9)?;
    let px: Vec<f64> = prior.chunks(n).map(|row| row.iter().sum()).collect();
    let cost: Vec<f64> = (0..n).flat_map(|x| d.row(x).to_vec()).collect();
    let mut r = blahut_arimoto_general(&px, &cost, n, lambda, opts)?;
    r.channel = (0..n * n)
        .flat_map(|s| r.channel[(s / n) * n..(s / n + 1) * n].to_vec())
        .collect();
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MyopicOptions {
    pub ba: BaOptions,
    /// Per-step distortion is driven into `[target - tol, target]`.
    pub distortion_tol: f64,
    pub rollouts: usize,
}

impl Default for MyopicOptions {
    fn default() -> Self {
        Self {
            ba: BaOptions::default(),
            distortion_tol: 1e-4,
            rollouts: 100,
        }
    }
}

/// Channels of one step, one per previous release (a single entry at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepChannels {
    pub lambda: f64,
    /// `channels[g][(x_t * n + x_prev) * n + y]`, empty for unreachable `g`.
    pub channels: Vec<Vec<f64>>,
    /// `I(X_t, X_{t-1}; Y_t | Y_{t-1})`
    pub leakage: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MyopicPolicy {
    n: usize,
    steps: Vec<StepChannels>,
    step_of: Vec<usize>,
    start_belief: Belief,
    first: TransitionMatrix,
    chain: TransitionMatrix,
}

impl MyopicPolicy {
    pub fn horizon(&self) -> usize {
        self.step_of.len()
    }

    pub fn step(&self, t: usize) -> &StepChannels {
        &self.steps[self.step_of[t]]
    }

    /// Number of distinct per-step solutions computed.
    pub fn distinct_steps(&self) -> usize {
        self.steps.len()
    }

    /// `q(· | x_t, x_{t-1}, y_{t-1})` at 0-based step `t`.
    pub fn slice(&self, t: usize, y_prev: Option<usize>, x_t: usize, x_prev: usize) -> &[f64] {
        let step = self.step(t);
        let g = if t == 0 { 0 } else { y_prev.unwrap_or(0) };
        let ch = &step.channels[g];
        let s = x_t * self.n + x_prev;
        &ch[s * self.n..(s + 1) * self.n]
    }

    /// Pair-conditioned kernel used at step `t` after releasing `y_prev`.
    /// Unreachable previous releases map to the uniform kernel.
    pub fn kernel_at(&self, t: usize, y_prev: Option<usize>) -> ActionKernel {
        let g = if t == 0 { 0 } else { y_prev.unwrap_or(0) };
        let ch = &self.step(t).channels[g];
        if ch.is_empty() {
            return ActionKernel::independent(&vec![1.0 / self.n as f64; self.n]).to_pair();
        }
        ActionKernel::from_raw(self.n, KernelMode::PairConditioned, ch.clone())
    }

    pub fn per_step_leakage(&self) -> Vec<f64> {
        (0..self.horizon()).map(|t| self.step(t).leakage).collect()
    }

    /// Averages of the per-step objective terms.
    pub fn avg_leakage(&self) -> f64 {
        self.per_step_leakage().iter().sum::<f64>() / self.horizon() as f64
    }

    pub fn avg_distortion(&self) -> f64 {
        (0..self.horizon()).map(|t| self.step(t).distortion).sum::<f64>() / self.horizon() as f64
    }

    /// Samples one trajectory; returns true and released sequences plus the
    /// realized `ln q(y|·)/P(y|y_{t-1})` and distortion sums.
    pub fn rollout(&self, d: &DistortionMatrix, rng: &mut ChaCha8Rng) -> Rollout {
        let n = self.n;
        let h = self.horizon();
        let mut xs = Vec::with_capacity(h);
        let mut ys = Vec::with_capacity(h);
        let mut leak = 0.0;
        let mut dist = 0.0;
        let mut x_prev = prob::draw(self.start_belief.probs(), rng);
        let mut y_prev = None;
        let mut state = self.initial_state();
        for t in 0..h {
            let chain = if t == 0 { &self.first } else { &self.chain };
            let x = prob::draw(chain.column(x_prev), rng);
            let q = self.slice(t, y_prev, x, x_prev);
            let y = prob::draw(q, rng);
            let g = if t == 0 { 0 } else { y_prev.unwrap_or(0) };
            let my = release_given_prev(&state, chain, &self.step(t).channels[g], g, n, y);
            leak += (q[y] / my).ln();
            dist += d.get(x, y);
            state = advance(&state, chain, self.step(t), n, t == 0);
            xs.push(x);
            ys.push(y);
            x_prev = x;
            y_prev = Some(y);
        }
        Rollout {
            xs,
            ys,
            leakage: leak,
            distortion: dist,
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        // P(x_{t-1}, y_{t-1}) laid out [x * n + g]; before the first release only g = 0 is used
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for (x, &p) in self.start_belief.probs().iter().enumerate() {
            s[x * n] = p;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub leakage: f64,
    pub distortion: f64,
}

fn release_given_prev(state: &[f64], chain: &TransitionMatrix, ch: &[f64], g: usize, n: usize, y: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for xp in 0..n {
        let p = state[xp * n + g];
        if p == 0.0 {
            continue;
        }
        den += p;
        for x in 0..n {
            num += p * chain.get(x, xp) * ch[(x * n + xp) * n + y];
        }
    }
    num / den
}

fn advance(state: &[f64], chain: &TransitionMatrix, step: &StepChannels, n: usize, first: bool) -> Vec<f64> {
    let mut next = vec![0.0; n * n];
    let gs = if first { 1 } else { n };
    for g in 0..gs {
        let ch = &step.channels[g];
        if ch.is_empty() {
            continue;
        }
        for xp in 0..n {
            let p = state[xp * n + g];
            if p == 0.0 {
                continue;
            }
            for x in 0..n {
                let w = p * chain.get(x, xp);
                if w == 0.0 {
                    continue;
                }
                let row = &ch[(x * n + xp) * n..(x * n + xp + 1) * n];
                for y in 0..n {
                    next[x * n + y] += w * row[y];
                }
            }
        }
    }
    next
}

fn solve_step(
    state: &[f64],
    chain: &TransitionMatrix,
    d: &DistortionMatrix,
    lambda: f64,
    first: bool,
    opts: &MyopicOptions,
) -> Result<StepChannels> {
    let n = d.size();
    let gs = if first { 1 } else { n };
    let mut channels = Vec::with_capacity(gs);
    let mut leakage = 0.0;
    let mut distortion = 0.0;
    for g in 0..gs {
        let pg: f64 = (0..n).map(|xp| state[xp * n + g]).sum();
        if pg <= 0.0 {
            channels.push(Vec::new());
            continue;
        }
        let mut prior = vec![0.0; n * n];
        for xp in 0..n {
            let b = state[xp * n + g] / pg;
            for x in 0..n {
                prior[x * n + xp] = b * chain.get(x, xp);
            }
        }
        let r = blahut_arimoto(&prior, d, lambda, opts.ba)?;
        leakage += pg * r.mutual_information;
        distortion += pg * r.distortion;
        channels.push(r.channel);
    }
    Ok(StepChannels {
        lambda,
        channels,
        leakage,
        distortion,
    })
}

/// Smallest common multiplier whose step distortion is at most `target`,
/// refined until the distortion is within `distortion_tol` below it.
fn constrained_step(
    state: &[f64],
    chain: &TransitionMatrix,
    d: &DistortionMatrix,
    target: f64,
    first: bool,
    guess: Option<f64>,
    opts: &MyopicOptions,
) -> Result<StepChannels> {
    let solve = |l: f64| solve_step(state, chain, d, l, first, opts);
    let bracket_err = |lo: f64, hi: f64, d_lo: f64, d_hi: f64| PutError::Bisection {
        lo,
        hi,
        d_lo,
        d_hi,
        target,
    };
    let (mut lo, mut hi_l, mut hi);
    match guess.filter(|&g| g > 0.0) {
        Some(g) => {
            let at = solve(g)?;
            if at.distortion <= target {
                hi_l = g;
                hi = at;
                let mut l = g / 1.5;
                loop {
                    if l < 1e-6 {
                        let z = solve(0.0)?;
                        if z.distortion <= target {
                            return Ok(z);
                        }
                        lo = (0.0, z.distortion);
                        break;
                    }
                    let r = solve(l)?;
                    if r.distortion > target {
                        lo = (l, r.distortion);
                        break;
                    }
                    hi_l = l;
                    hi = r;
                    l /= 1.5;
                }
            } else {
                lo = (g, at.distortion);
                hi_l = g * 1.5;
                hi = solve(hi_l)?;
                while hi.distortion > target {
                    lo = (hi_l, hi.distortion);
                    hi_l *= 1.5;
                    if hi_l > 1e6 {
                        return Err(bracket_err(lo.0, hi_l, lo.1, hi.distortion));
                    }
                    hi = solve(hi_l)?;
                }
            }
        }
        None => {
            let at_zero = solve(0.0)?;
            if at_zero.distortion <= target {
                return Ok(at_zero);
            }
            lo = (0.0, at_zero.distortion);
            hi_l = 1.0;
            hi = solve(hi_l)?;
            while hi.distortion > target {
                lo = (hi_l, hi.distortion);
                hi_l *= 2.0;
                if hi_l > 1e6 {
                    return Err(bracket_err(lo.0, hi_l, lo.1, hi.distortion));
                }
                hi = solve(hi_l)?;
            }
        }
    }
    // Illinois variant of regula falsi on D(λ) − target
    let mut hi_f = hi.distortion - target;
    let mut lo_f = lo.1 - target;
    let mut side = 0i8;
    for _ in 0..200 {
        if hi.distortion >= target - opts.distortion_tol || hi_l - lo.0 <= 1e-12 * hi_l {
            break;
        }
        let mut mid = hi_l - hi_f * (hi_l - lo.0) / (hi_f - lo_f);
        if !(mid > lo.0 && mid < hi_l) {
            mid = 0.5 * (lo.0 + hi_l);
        }
        let r = solve(mid)?;
        let f = r.distortion - target;
        if f <= 0.0 {
            hi_l = mid;
            hi = r;
            hi_f = f;
            if side == -1 {
                lo_f *= 0.5;
            }
            side = -1;
        } else {
            lo = (mid, r.distortion);
            lo_f = f;
            if side == 1 {
                hi_f *= 0.5;
            }
            side = 1;
        }
    }
    Ok(hi)
}

/// Solves the myopic policy for `n` steps under a per-step average
/// distortion budget. Starts follow the same conventions as the training
/// environment (`start_belief` is the law of `x_0`).
pub fn solve_myopic(
    chain: &TransitionMatrix,
    start_belief: &Belief,
    start: &StartMode,
    d: &DistortionMatrix,
    target: f64,
    horizon: usize,
    opts: &MyopicOptions,
) -> Result<MyopicPolicy> {
    let n = chain.size();
    if d.size() != n || start_belief.len() != n {
        return Err(PutError::Shape {
            expected: n,
            got: if d.size() != n { d.size() } else { start_belief.len() },
        });
    }
    if horizon == 0 {
        return Err(PutError::Config("horizon must be at least 1".into()));
    }
    let first = match start {
        StartMode::FromBelief => chain.clone(),
        StartMode::Memoryless(k) => k.clone(),
    };
    let mut policy = MyopicPolicy {
        n,
        steps: Vec::new(),
        step_of: Vec::with_capacity(horizon),
        start_belief: start_belief.clone(),
        first: first.clone(),
        chain: chain.clone(),
    };
    let mut state = policy.initial_state();
    let mut prev_state: Option<Vec<f64>> = None;
    for t in 0..horizon {
        let k = if t == 0 { &first } else { chain };
        let settled = t > 1
            && prev_state
                .as_ref()
                .is_some_and(|p| p.iter().zip(&state).all(|(a, b)| (a - b).abs() < 1e-12));
        if !settled {
            let guess = policy.steps.last().map(|s| s.lambda);
            let step = constrained_step(&state, k, d, target, t == 0, guess, opts)?;
            policy.steps.push(step);
        }
        policy.step_of.push(policy.steps.len() - 1);
        let next = advance(&state, k, policy.steps.last().expect("step"), n, t == 0);
        prev_state = Some(std::mem::replace(&mut state, next));
    }
    Ok(policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MyopicResult {
    pub policy: MyopicPolicy,
    /// Per-step average of the myopic objective terms.
    pub avg_leakage: f64,
    pub avg_distortion: f64,
    /// Monte-Carlo mean and standard error of the realized per-step leakage.
    pub mc_leakage: f64,
    pub mc_leakage_se: f64,
    pub mc_distortion: f64,
    pub rollouts: Vec<Rollout>,
}

/// Solves the policy, then runs `opts.rollouts` independent trajectories,
/// rollout `i` drawing from stream `i` of a generator seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_myopic(
    chain: &TransitionMatrix,
    start_belief: &Belief,
    start: &StartMode,
    d: &DistortionMatrix,
    target: f64,
    horizon: usize,
    opts: &MyopicOptions,
    seed: u64,
) -> Result<MyopicResult> {
    let policy = solve_myopic(chain, start_belief, start, d, target, horizon, opts)?;
    let rollouts: Vec<Rollout> = (0..opts.rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            policy.rollout(d, &mut rng)
        })
        .collect();
    let h = horizon as f64;
    let per: Vec<f64> = rollouts.iter().map(|r| r.leakage / h).collect();
    let m = per.len().max(1) as f64;
    let mean = per.iter().sum::<f64>() / m;
    let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let mc_distortion = rollouts.iter().map(|r| r.distortion / h).sum::<f64>() / m;
    Ok(MyopicResult {
        avg_leakage: policy.avg_leakage(),
        avg_distortion: policy.avg_distortion(),
        mc_leakage: mean,
        mc_leakage_se: (var / m).sqrt(),
        mc_distortion,
        rollouts,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::manhattan_grid;
    use crate::source::{make_uniform_chain, StateSpace};

    fn h2(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn mutual_information_stays_finite_when_the_output_marginal_underflows() {
        let tiny = f64::from_bits(1);
        let channel = [1.0, tiny, 1.0, 0.0];
        let prior = [0.5, 0.5];
        let r = marginal(&prior, &channel, 2);
        assert_eq!(r[1], 0.0);
        let (mi, _) = scores(&prior, &[0.0, 1.0, 1.0, 0.0], &channel, &r, 2);
        assert!(mi.is_finite() && mi.abs() < 1e-12, "{mi}");
    }

    #[test]
    fn zero_multiplier_gives_independent_release() {
        let d = DistortionMatrix::hamming(2).unwrap();
        let prior = [0.1, 0.2, 0.3, 0.4];
        let r = blahut_arimoto(&prior, &d, 0.0, BaOptions::default()).unwrap();
        assert!(r.mutual_information.abs() < 1e-12);
        for s in 1..4 {
            assert!((r.channel[s * 2] - r.channel[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn large_multiplier_is_truthful() {
        let d = manhattan_grid(2, 2).unwrap();
        let n = 4;
        let prior = vec![1.0 / 16.0; 16];
        let r = blahut_arimoto(&prior, &d, 1e3, BaOptions::default()).unwrap();
        assert!(r.distortion < 1e-12);
        for s in 0..16 {
            assert!((r.channel[s * n + s / n] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_rate_distortion() {
        let d = DistortionMatrix::hamming(2).unwrap();
        // two copies of each x_t with equal weight: the uniform bit
        let prior = [0.25; 4];
        for target in [0.05, 0.1, 0.2] {
            let lambda = ((1.0 - target) / target as f64).ln();
            let r = blahut_arimoto(&prior, &d, lambda, BaOptions::default()).unwrap();
            assert!((r.distortion - target).abs() < 1e-6, "{}", r.distortion);
            assert!((r.mutual_information - (2f64.ln() - h2(target))).abs() < 1e-6);
            assert_eq!(r.monotone_violations, 0);
        }
    }

    #[test]
    fn channels_are_stochastic() {
        let d = manhattan_grid(3, 2).unwrap();
        let prior: Vec<f64> = (1..=36).map(|v| v as f64 / 666.0).collect();
        let r = blahut_arimoto(&prior, &d, 0.7, BaOptions::default()).unwrap();
        for row in r.channel.chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn myopic_meets_the_budget() {
        let chain = crate::source::make_q1_chain(3, 3, &crate::source::default_q1_weights()).unwrap();
        let d = manhattan_grid(3, 3).unwrap();
        let opts = MyopicOptions {
            rollouts: 20,
            ..Default::default()
        };
        let r = run_myopic(&chain, &Belief::uniform(9), &StartMode::FromBelief, &d, 0.8, 30, &opts, 1).unwrap();
        for t in 0..30 {
            let s = r.policy.step(t);
            assert!(s.distortion <= 0.8 && s.distortion >= 0.8 - 1e-4, "{}", s.distortion);
        }
        assert!(r.policy.distinct_steps() < 30);
        assert!((r.mc_leakage - r.avg_leakage).abs() < 4.0 * r.mc_leakage_se + 1e-9);
    }

    #[test]
    fn loose_budget_leaks_nothing() {
        let chain = make_uniform_chain(StateSpace::new(4).unwrap());
        let d = manhattan_grid(2, 2).unwrap();
        let r = run_myopic(&chain, &Belief::uniform(4), &StartMode::FromBelief, &d, 2.0, 5, &MyopicOptions::default(), 0).unwrap();
        assert!(r.avg_leakage.abs() < 1e-12);
    }

    #[test]
    fn rollouts_are_seed_deterministic() {
        let chain = make_uniform_chain(StateSpace::new(4).unwrap());
        let d = manhattan_grid(2, 2).unwrap();
        let opts = MyopicOptions {
            rollouts: 4,
            ..Default::default()
        };
        let a = run_myopic(&chain, &Belief::uniform(4), &StartMode::FromBelief, &d, 0.5, 10, &opts, 9).unwrap();
        let b = run_myopic(&chain, &Belief::uniform(4), &StartMode::FromBelief, &d, 0.5, 10, &opts, 9).unwrap();
        assert_eq!(a.rollouts, b.rollouts);
    }
}

//! Randomized executable checks of the identities the oracle backs, with a
//! residual per identity.

use super::info::*;
use super::joint::*;
use crate::belief::{self, avg_leakage, ActionKernel, Belief, KernelMode};
use crate::distortion::DistortionMatrix;
use crate::error::Result;
use crate::source::{InitialDistribution, StateSpace, TransitionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

pub type BeliefUpdater = fn(&Belief, &TransitionMatrix, &ActionKernel, usize) -> Result<Belief>;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub history_policies: usize,
    pub belief_policies: usize,
    pub updater: BeliefUpdater,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            history_policies: 100,
            belief_policies: 50,
            updater: belief::belief_update,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub residual: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<28} {:>6} {:>12} {:>10}  status\n", "check", "cases", "residual", "tol");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<28} {:>6} {:>12.3e} {:>10.0e}  {}",
                c.name,
                c.cases,
                c.residual,
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            );
        }
        s
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    residual: f64,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            residual: 0.0,
        }
    }

    fn push(&mut self, r: f64) {
        self.cases += 1;
        // NaN must not pass silently
        self.residual = if r.is_nan() { f64::INFINITY } else { self.residual.max(r) };
    }

    fn done(self) -> CheckResult {
        CheckResult {
            name: self.name,
            cases: self.cases,
            residual: self.residual,
            tolerance: self.tolerance,
        }
    }
}

pub fn random_chain<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TransitionMatrix> {
    let cols = (0..n).flat_map(|_| random_simplex(n, rng)).collect();
    TransitionMatrix::from_columns_flat(StateSpace::new(n)?, cols)
}

pub fn random_init<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<InitialDistribution> {
    InitialDistribution::new(random_simplex(n, rng))
}

fn random_distortion<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DistortionMatrix> {
    let values = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(0.1..3.0) })
        .collect();
    DistortionMatrix::new(StateSpace::new(n)?, values, crate::distortion::Units::Custom)
}

/// Runs every identity check.
pub fn run_verification(opts: &VerifyOptions) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = VerificationReport::default();

    let mut slack = Tracker::new("lemma1_pairwise_le_total", 1e-9);
    let mut marg = Tracker::new("lemma2_marginals", 1e-9);
    let mut pair_eq = Tracker::new("lemma2_pairwise_sum", 1e-9);
    let mut mi_eq = Tracker::new("lemma2_total_mi", 1e-9);
    let mut dist_eq = Tracker::new("lemma2_distortion", 1e-9);
    let mut thm1 = Tracker::new("theorem1_simplified_exact", 1e-9);
    let mut chain_rule = Tracker::new("chain_rule", 1e-9);
    let mut linear = Tracker::new("distortion_linearity", 1e-12);
    let mut mass = Tracker::new("joint_mass", 1e-9);

    for _ in 0..opts.history_policies {
        let (n, h) = (3, 4);
        let chain = random_chain(n, &mut rng)?;
        let init = random_init(n, &mut rng)?;
        let d = random_distortion(n, &mut rng)?;
        let qh = HistoryPolicy::random(n, h, &mut rng)?;
        let qs = simplify_policy(&qh, &chain, &init)?;
        let jh = enumerate_joint_history(&qh, &chain, &init)?;
        let js = enumerate_joint_simplified(&qs, &chain, &init)?;
        let mi_h = mutual_information(&jh);
        let mi_s = mutual_information(&js);
        let pair_h: f64 = pairwise_terms(&jh).iter().sum();
        let pair_s: f64 = pairwise_terms(&js).iter().sum();
        slack.push((pair_h - mi_h).max(0.0));
        for t in 0..h {
            let a = window_marginal(&jh, t, 2);
            let b = window_marginal(&js, t, 2);
            marg.push(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
        pair_eq.push((pair_h - pair_s).abs());
        mi_eq.push((mi_s - pair_h).abs());
        dist_eq.push((expected_distortion(&jh, &d) - expected_distortion(&js, &d)).abs());
        thm1.push((pair_s - mi_s).abs());
        for j in [&jh, &js] {
            chain_rule.push((chain_rule_terms(j).iter().sum::<f64>() - mutual_information(j)).abs());
            let per: f64 = per_step_distortion(j, &d).iter().sum::<f64>() / h as f64;
            linear.push((expected_distortion(j, &d) - per).abs());
            mass.push((j.total_mass() - 1.0).abs());
        }
    }

    let mut gap = Tracker::new("lemma1_strict_gap", 1e-9);
    {
        let chain = crate::source::make_uniform_chain(StateSpace::new(2)?);
        let init = InitialDistribution::uniform(2);
        let q = HistoryPolicy::from_fn(2, 3, |t, xs, _| {
            let mut s = vec![0.0; 2];
            s[if t < 2 { 0 } else { xs[0] }] = 1.0;
            s
        })?;
        let j = enumerate_joint_history(&q, &chain, &init)?;
        let margin = mutual_information(&j) - pairwise_terms(&j).iter().sum::<f64>();
        gap.push((margin - 2f64.ln()).abs());
    }

    let mut beliefs = Tracker::new("belief_consistency", 1e-9);
    for i in 0..opts.belief_policies {
        let n = 2 + i % 3;
        let h = 1 + (i / 3) % 5;
        let chain = random_chain(n, &mut rng)?;
        let init = random_init(n, &mut rng)?;
        let qs = WindowPolicy::random(n, h, 1, &mut rng)?;
        let j = enumerate_joint_simplified(&qs, &chain, &init)?;
        let post: Vec<Vec<f64>> = (0..h).map(|t| posteriors(&j, t)).collect();
        let first = TransitionMatrix::memoryless(StateSpace::new(n)?, &init)?;
        let mut ys = Vec::new();
        belief_walk(
            &qs,
            &chain,
            &first,
            Belief::uniform(n),
            &post,
            &mut ys,
            opts.updater,
            &mut beliefs,
        )?;
    }

    let mut n1 = Tracker::new("leakage_single_step", 1e-9);
    for i in 0..20 {
        let n = 2 + i % 3;
        let init = random_init(n, &mut rng)?;
        let k = ActionKernel::new(
            n,
            KernelMode::StateConditioned,
            (0..n).flat_map(|_| random_simplex(n, &mut rng)).collect(),
        )?;
        let first = TransitionMatrix::memoryless(StateSpace::new(n)?, &init)?;
        let leak = avg_leakage(&Belief::uniform(n), &k, &first)?;
        let q = WindowPolicy::simplified(n, 1, |_, w, _| k.slice(w[0], 0).to_vec())?;
        let chain = random_chain(n, &mut rng)?;
        let j = enumerate_joint_simplified(&q, &chain, &init)?;
        n1.push((leak - mutual_information(&j)).abs());
    }

    let mut thm2 = Tracker::new("theorem2_order2_window", 1e-9);
    let mut thm2_nested = Tracker::new("theorem2_nested_policy", 1e-9);
    let mut thm2_dist = Tracker::new("theorem2_distortion", 1e-9);
    for i in 0..30 {
        let h = 3 + i % 3;
        let src = SecondOrderSource::random(2, &mut rng)?;
        let d = random_distortion(2, &mut rng)?;
        for memory in [2, 1] {
            let q = WindowPolicy::random(2, h, memory, &mut rng)?;
            let j = enumerate_joint(&src, &q)?;
            let r = mth_order_residuals(&j, &d, 2);
            if memory == 2 {
                thm2.push(r.mi);
            } else {
                thm2_nested.push(r.mi);
            }
            thm2_dist.push(r.distortion);
        }
    }

    report.checks.extend([
        mass.done(),
        slack.done(),
        gap.done(),
        marg.done(),
        pair_eq.done(),
        mi_eq.done(),
        dist_eq.done(),
        thm1.done(),
        chain_rule.done(),
        linear.done(),
        beliefs.done(),
        n1.done(),
        thm2.done(),
        thm2_nested.done(),
        thm2_dist.done(),
    ]);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn belief_walk(
    q: &SimplifiedPolicy,
    chain: &TransitionMatrix,
    first: &TransitionMatrix,
    beta: Belief,
    post: &[Vec<f64>],
    ys: &mut Vec<usize>,
    update: BeliefUpdater,
    track: &mut Tracker,
) -> Result<()> {
    let t = ys.len();
    if t == post.len() {
        return Ok(());
    }
    let n = beta.len();
    let a = q.kernel_at(ys)?;
    let step_chain = if t == 0 { first } else { chain };
    for y in 0..n {
        ys.push(y);
        let row = &post[t][code(n, ys) * n..(code(n, ys) + 1) * n];
        if row.iter().sum::<f64>() > 0.0 {
            match update(&beta, step_chain, &a, y) {
                Ok(next) => {
                    let r = next.probs().iter().zip(row).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    track.push(r);
                    belief_walk(q, chain, first, next, post, ys, update, track)?;
                }
                Err(_) => track.push(f64::INFINITY),
            }
        }
        ys.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct MthOrderResiduals {
    /// `|I(X^n;Y^n) − Σ_t I(X^t_{t-m};Y_t|Y^{t-1})|`
    pub mi: f64,
    /// `|E[(1/n)Σ d] − (1/n) Σ_t E[d(X_t,Y_t)]|`
    pub distortion: f64,
}

/// Residuals of the order-`m` decomposition on an enumerated joint. The
/// window holds `m + 1` symbols, so `m = 1` gives the pairwise terms.
pub fn mth_order_residuals(joint: &JointTable, d: &DistortionMatrix, m: usize) -> MthOrderResiduals {
    let terms: f64 = window_terms(joint, m + 1).iter().sum();
    let per: f64 = per_step_distortion(joint, d).iter().sum::<f64>() / joint.horizon() as f64;
    MthOrderResiduals {
        mi: (mutual_information(joint) - terms).abs(),
        distortion: (expected_distortion(joint, d) - per).abs(),
    }
}

/// Enumerates `policy` on `source` and checks the order-`m` decomposition.
pub fn mth_order_check(
    source: &dyn SequenceSource,
    policy: &WindowPolicy,
    d: &DistortionMatrix,
    m: usize,
) -> Result<MthOrderResiduals> {
    if !(1..=2).contains(&m) {
        return Err(crate::error::PutError::Domain(format!("order {m} outside 1..=2")));
    }
    let j = enumerate_joint(source, policy)?;
    Ok(mth_order_residuals(&j, d, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_verification(&VerifyOptions {
            seed: 3,
            history_policies: 5,
            belief_policies: 9,
            ..Default::default()
        })
        .unwrap();
        assert!(r.all_passed(), "{}", r.to_text());
    }

    fn flipped(b: &Belief, c: &TransitionMatrix, a: &ActionKernel, y: usize) -> Result<Belief> {
        let good = belief::belief_update(b, c, a, y)?;
        let mut p = good.probs().to_vec();
        p.reverse();
        Belief::new(p)
    }

    #[test]
    fn broken_update_is_caught() {
        let r = run_verification(&VerifyOptions {
            seed: 3,
            history_policies: 1,
            belief_policies: 6,
            updater: flipped,
        })
        .unwrap();
        let names: Vec<_> = r.failures().iter().map(|c| c.name).collect();
        assert_eq!(names, vec!["belief_consistency"]);
    }

    #[test]
    fn pairwise_window_misses_order2_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = SecondOrderSource::random(2, &mut rng).unwrap();
        let d = DistortionMatrix::hamming(2).unwrap();
        let q = WindowPolicy::random(2, 4, 2, &mut rng).unwrap();
        assert!(mth_order_check(&src, &q, &d, 2).unwrap().mi < 1e-9);
        assert!(mth_order_check(&src, &q, &d, 1).unwrap().mi > 1e-6);
    }
}

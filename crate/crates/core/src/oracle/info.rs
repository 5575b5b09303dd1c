//! Information and distortion functionals of an enumerated joint.

use super::joint::{code, pow, JointTable};
use crate::distortion::DistortionMatrix;
use crate::prob;

/// Dense conditional mutual information `I(A;B|C)` from a list of
/// `(a, b, c, p)` atoms with `a < na`, `b < nb`, `c < nc`.
pub(crate) struct CondMi {
    na: usize,
    nb: usize,
    abc: Vec<f64>,
}

impl CondMi {
    pub(crate) fn new(na: usize, nb: usize, nc: usize) -> Self {
        Self {
            na,
            nb,
            abc: vec![0.0; na * nb * nc],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, a: usize, b: usize, c: usize, p: f64) {
        self.abc[(c * self.na + a) * self.nb + b] += p;
    }

    pub(crate) fn value(&self) -> f64 {
        let (na, nb) = (self.na, self.nb);
        let mut total = 0.0;
        for block in self.abc.chunks(na * nb) {
            let pc: f64 = block.iter().sum();
            if pc <= 0.0 {
                continue;
            }
            let mut pbc = vec![0.0; nb];
            for row in block.chunks(nb) {
                for (b, &p) in row.iter().enumerate() {
                    pbc[b] += p;
                }
            }
            for row in block.chunks(nb) {
                let pac: f64 = row.iter().sum();
                for (b, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        total += prob::plogpq(p, pac * pbc[b] / pc);
                    }
                }
            }
        }
        total
    }
}

/// `I(X^n; Y^n)` in nats.
pub fn mutual_information(joint: &JointTable) -> f64 {
    let n = joint.alphabet();
    let h = joint.horizon();
    let mut acc = CondMi::new(pow(n, h), pow(n, h), 1);
    joint.for_each(|xs, ys, p| acc.add(code(n, xs), code(n, ys), 0, p));
    acc.value()
}

/// `I(X^t_{t-len+1}; Y_t | Y^{t-1})` for `t = 1..n`, the window clipped at the
/// first symbol.
pub fn window_terms(joint: &JointTable, len: usize) -> Vec<f64> {
    let n = joint.alphabet();
    let h = joint.horizon();
    let mut accs: Vec<CondMi> = (0..h)
        .map(|t| CondMi::new(pow(n, (t + 1).min(len)), n, pow(n, t)))
        .collect();
    joint.for_each(|xs, ys, p| {
        for (t, acc) in accs.iter_mut().enumerate() {
            let w = (t + 1).min(len);
            acc.add(code(n, &xs[t + 1 - w..=t]), ys[t], code(n, &ys[..t]), p);
        }
    });
    accs.iter().map(CondMi::value).collect()
}

/// `I(X^t; Y_t | Y^{t-1})` for `t = 1..n`.
pub fn chain_rule_terms(joint: &JointTable) -> Vec<f64> {
    window_terms(joint, joint.horizon())
}

/// `I(X_t, X_{t-1}; Y_t | Y^{t-1})` for `t = 1..n` (`I(X_1; Y_1)` at `t = 1`).
pub fn pairwise_terms(joint: &JointTable) -> Vec<f64> {
    window_terms(joint, 2)
}

pub fn source_entropy(joint: &JointTable) -> f64 {
    let n = joint.alphabet();
    let mut px = vec![0.0; pow(n, joint.horizon())];
    joint.for_each(|xs, _, p| px[code(n, xs)] += p);
    prob::entropy(&px)
}

/// `E[(1/n) Σ_t d(X_t, Y_t)]` summed over whole sequences.
pub fn expected_distortion(joint: &JointTable, d: &DistortionMatrix) -> f64 {
    let h = joint.horizon() as f64;
    let mut total = 0.0;
    joint.for_each(|xs, ys, p| {
        let s: f64 = xs.iter().zip(ys).map(|(&x, &y)| d.get(x, y)).sum();
        total += p * s / h;
    });
    total
}

/// `E[d(X_t, Y_t)]` for each `t`, from the per-step marginals `P(x_t, y_t)`.
pub fn per_step_distortion(joint: &JointTable, d: &DistortionMatrix) -> Vec<f64> {
    let n = joint.alphabet();
    let h = joint.horizon();
    let mut marg = vec![vec![0.0; n * n]; h];
    joint.for_each(|xs, ys, p| {
        for t in 0..h {
            marg[t][xs[t] * n + ys[t]] += p;
        }
    });
    marg.iter()
        .map(|m| (0..n * n).map(|k| m[k] * d.get(k / n, k % n)).sum())
        .collect()
}

/// `P(x^t_{t-len+1}, y^t)` indexed by `code(window) * n^(t+1) + code(y^t)`,
/// for 0-based `t`.
pub fn window_marginal(joint: &JointTable, t: usize, len: usize) -> Vec<f64> {
    let n = joint.alphabet();
    let w = (t + 1).min(len);
    let mut out = vec![0.0; pow(n, w) * pow(n, t + 1)];
    joint.for_each(|xs, ys, p| {
        out[code(n, &xs[t + 1 - w..=t]) * pow(n, t + 1) + code(n, &ys[..=t])] += p;
    });
    out
}

/// `P(x_t | y^t)` for every release prefix of length `t + 1`, indexed by
/// `code(y^t) * n + x_t`. Rows of zero-probability prefixes stay zero.
pub fn posteriors(joint: &JointTable, t: usize) -> Vec<f64> {
    let n = joint.alphabet();
    let mut out = vec![0.0; pow(n, t + 1) * n];
    joint.for_each(|xs, ys, p| out[code(n, &ys[..=t]) * n + xs[t]] += p);
    for row in out.chunks_mut(n) {
        prob::normalize(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::joint::*;
    use crate::source::{make_uniform_chain, InitialDistribution, StateSpace, TransitionMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iid_uniform(n: usize) -> (TransitionMatrix, InitialDistribution) {
        (make_uniform_chain(StateSpace::new(n).unwrap()), InitialDistribution::uniform(n))
    }

    fn truthful(n: usize, h: usize) -> HistoryPolicy {
        HistoryPolicy::from_fn(n, h, |t, xs, _| {
            let mut s = vec![0.0; n];
            s[xs[t]] = 1.0;
            s
        })
        .unwrap()
    }

    #[test]
    fn truthful_uniform_iid_leaks_its_entropy() {
        let (c, i) = iid_uniform(3);
        let j = enumerate_joint_history(&truthful(3, 2), &c, &i).unwrap();
        assert!((mutual_information(&j) - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn independent_release_leaks_nothing() {
        let (c, i) = iid_uniform(3);
        let q = HistoryPolicy::from_fn(3, 3, |_, _, _| vec![0.2, 0.5, 0.3]).unwrap();
        let j = enumerate_joint_history(&q, &c, &i).unwrap();
        assert!(mutual_information(&j).abs() < 1e-12);
        assert!(chain_rule_terms(&j).iter().all(|v| v.abs() < 1e-12));
        assert!(pairwise_terms(&j).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn chain_rule_on_random_simplified() {
        let chain = TransitionMatrix::from_rows(StateSpace::new(2).unwrap(), &[vec![0.8, 0.3], vec![0.2, 0.7]]).unwrap();
        let init = InitialDistribution::new(vec![0.6, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let s = WindowPolicy::random(2, 3, 1, &mut rng).unwrap();
            let j = enumerate_joint_simplified(&s, &chain, &init).unwrap();
            let mi = mutual_information(&j);
            assert!((chain_rule_terms(&j).iter().sum::<f64>() - mi).abs() < 1e-9);
            assert!((pairwise_terms(&j).iter().sum::<f64>() - mi).abs() < 1e-9);
            assert!(mi >= 0.0 && mi <= source_entropy(&j) + 1e-12);
        }
    }

    #[test]
    fn single_step_terms() {
        let (c, i) = iid_uniform(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = HistoryPolicy::random(3, 1, &mut rng).unwrap();
        let j = enumerate_joint_history(&q, &c, &i).unwrap();
        let mi = mutual_information(&j);
        assert_eq!(chain_rule_terms(&j).len(), 1);
        assert!((chain_rule_terms(&j)[0] - mi).abs() < 1e-12);
    }

    // Y_1, Y_2 constant, Y_3 = X_1 on an i.i.d. uniform binary source: the
    // pair terms see nothing while Y_3 reveals one full bit.
    #[test]
    fn strict_gap_for_history_dependence() {
        let (c, i) = iid_uniform(2);
        let q = HistoryPolicy::from_fn(2, 3, |t, xs, _| {
            if t < 2 {
                vec![1.0, 0.0]
            } else {
                let mut s = vec![0.0; 2];
                s[xs[0]] = 1.0;
                s
            }
        })
        .unwrap();
        let j = enumerate_joint_history(&q, &c, &i).unwrap();
        let mi = mutual_information(&j);
        let pair: f64 = pairwise_terms(&j).iter().sum();
        assert!((mi - 2f64.ln()).abs() < 1e-12);
        assert!(pair.abs() < 1e-12);
        assert!((mi - pair - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distortion_routes_agree() {
        let (c, i) = iid_uniform(3);
        let d = DistortionMatrix::hamming(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = HistoryPolicy::random(3, 3, &mut rng).unwrap();
        let j = enumerate_joint_history(&q, &c, &i).unwrap();
        let per: f64 = per_step_distortion(&j, &d).iter().sum::<f64>() / 3.0;
        assert!((expected_distortion(&j, &d) - per).abs() < 1e-12);
    }

    #[test]
    fn posteriors_are_distributions() {
        let (c, i) = iid_uniform(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = HistoryPolicy::random(2, 3, &mut rng).unwrap();
        let j = enumerate_joint_history(&q, &c, &i).unwrap();
        for row in posteriors(&j, 2).chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

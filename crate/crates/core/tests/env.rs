use proptest::prelude::*;
use put_core::a2c::{evaluate_policy, EvalOptions, TruthfulPolicy};
use put_core::belief::{
    apply_idc_mask, avg_distortion, avg_leakage, belief_update, env_step, release_marginal, ActionKernel, Belief,
    CostMode, EnvModel, EnvState, KernelMode, StartMode,
};
use put_core::distortion::{manhattan_grid, DistortionMatrix};
use put_core::oracle::random_chain;
use put_core::prob::entropy;
use put_core::source::{StateSpace, TransitionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_kernel(n: usize, mode: KernelMode, rng: &mut ChaCha8Rng) -> ActionKernel {
    let probs = (0..mode.slices(n)).flat_map(|_| random_simplex(n, rng)).collect();
    ActionKernel::new(n, mode, probs).unwrap()
}

fn custom_distortion(n: usize, rng: &mut ChaCha8Rng) -> DistortionMatrix {
    let v = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { rng.random_range(0.5..3.0) }).collect();
    DistortionMatrix::new(StateSpace::new(n).unwrap(), v, put_core::distortion::Units::Custom).unwrap()
}

/// Truthful release leaks `H(X_0)` and then `H(X_t | X_{t-1})` per step.
fn truthful_oracle(chain: &TransitionMatrix, start: &Belief, horizon: usize) -> f64 {
    let mut law = chain.propagate(start.probs());
    let mut total = entropy(&law);
    for _ in 1..horizon {
        total += law.iter().enumerate().map(|(x, p)| p * entropy(chain.column(x))).sum::<f64>();
        law = chain.propagate(&law);
    }
    total / horizon as f64
}

#[test]
fn truthful_evaluation_matches_the_entropy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chain = random_chain(3, &mut rng).unwrap();
    let d = DistortionMatrix::hamming(3).unwrap();
    let start = Belief::uniform(3);
    let model = EnvModel {
        chain: chain.clone(),
        distortion: d,
        cost: CostMode::Average { lambda: 1.0, target: 0.0 },
        start: StartMode::FromBelief,
    };
    let exact = truthful_oracle(&chain, &start, 3);
    for rollouts in [200, 2000] {
        let e = evaluate_policy(&TruthfulPolicy { n: 3 }, &model, &start, 3, &EvalOptions { rollouts, seed: 9, keep_traces: false }).unwrap();
        assert!((e.avg_leakage - exact).abs() <= 3.0 * e.leakage_se, "{} vs {exact} (se {})", e.avg_leakage, e.leakage_se);
        assert_eq!(e.avg_distortion, 0.0);
    }
}

#[test]
fn standard_error_shrinks_with_rollouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let chain = random_chain(3, &mut rng).unwrap();
    let model = EnvModel {
        chain,
        distortion: DistortionMatrix::hamming(3).unwrap(),
        cost: CostMode::Average { lambda: 1.0, target: 0.0 },
        start: StartMode::FromBelief,
    };
    let se = |rollouts| {
        evaluate_policy(&TruthfulPolicy { n: 3 }, &model, &Belief::uniform(3), 4, &EvalOptions { rollouts, seed: 1, keep_traces: false })
            .unwrap()
            .leakage_se
    };
    let (small, large) = (se(100), se(1600));
    // 16x the rollouts: about a quarter of the standard error
    assert!(large < 0.4 * small && large > 0.15 * small, "{small} -> {large}");
}

#[test]
fn evaluation_is_seed_deterministic_and_keeps_traces() {
    let chain = random_chain(4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let model = EnvModel {
        chain,
        distortion: manhattan_grid(2, 2).unwrap(),
        cost: CostMode::Instantaneous { max_distortion: 1.0 },
        start: StartMode::FromBelief,
    };
    let opts = EvalOptions { rollouts: 7, seed: 3, keep_traces: true };
    let a = evaluate_policy(&TruthfulPolicy { n: 4 }, &model, &Belief::uniform(4), 9, &opts).unwrap();
    let b = evaluate_policy(&TruthfulPolicy { n: 4 }, &model, &Belief::uniform(4), 9, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.traces.len(), 7);
    assert!(a.traces.iter().all(|t| t.xs == t.ys && t.xs.len() == 9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn belief_update_is_bayes(seed in any::<u64>(), n in 2usize..=5, pair in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(n, &mut rng).unwrap();
        let mode = if pair { KernelMode::PairConditioned } else { KernelMode::StateConditioned };
        let a = random_kernel(n, mode, &mut rng);
        let b = Belief::new(random_simplex(n, &mut rng)).unwrap();
        let m = release_marginal(&b, &chain, &a).unwrap();
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for y in 0..n {
            let post = belief_update(&b, &chain, &a, y).unwrap();
            let mut direct = vec![0.0; n];
            for (x_t, v) in direct.iter_mut().enumerate() {
                for x_prev in 0..n {
                    *v += b.probs()[x_prev] * chain.get(x_t, x_prev) * a.prob(y, x_t, x_prev);
                }
            }
            let s: f64 = direct.iter().sum();
            prop_assert!((s - m[y]).abs() < 1e-12);
            for (p, q) in post.probs().iter().zip(&direct) {
                prop_assert!((p - q / s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leakage_is_bounded(seed in any::<u64>(), n in 2usize..=5, pair in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(n, &mut rng).unwrap();
        let mode = if pair { KernelMode::PairConditioned } else { KernelMode::StateConditioned };
        let a = random_kernel(n, mode, &mut rng);
        let b = Belief::new(random_simplex(n, &mut rng)).unwrap();
        let l = avg_leakage(&b, &a, &chain).unwrap();
        let m = release_marginal(&b, &chain, &a).unwrap();
        prop_assert!(l >= -1e-12);
        prop_assert!(l <= entropy(&m) + 1e-12);
        let truthful = avg_leakage(&b, &ActionKernel::truthful(n), &chain).unwrap();
        prop_assert!((truthful - entropy(&chain.propagate(b.probs()))).abs() < 1e-10);
        let indep = avg_leakage(&b, &ActionKernel::independent(&random_simplex(n, &mut rng)), &chain).unwrap();
        prop_assert!(indep.abs() < 1e-12);
    }

    #[test]
    fn idc_mask_respects_the_cap(seed in any::<u64>(), n in 2usize..=5, cap in 0.0f64..3.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = custom_distortion(n, &mut rng);
        let a = random_kernel(n, KernelMode::PairConditioned, &mut rng);
        let m = apply_idc_mask(&a, &d, cap).unwrap();
        for x_t in 0..n {
            for x_prev in 0..n {
                let s = m.kernel.slice(x_t, x_prev);
                prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (y, &p) in s.iter().enumerate() {
                    prop_assert!(p == 0.0 || d.get(x_t, y) <= cap);
                }
            }
        }
        let chain = random_chain(n, &mut rng).unwrap();
        let b = Belief::new(random_simplex(n, &mut rng)).unwrap();
        prop_assert!(avg_distortion(&b, &m.kernel, &chain, &d).unwrap() <= cap + 1e-12);
    }

    #[test]
    fn env_step_keeps_beliefs_on_the_simplex(seed in any::<u64>(), n in 2usize..=4, steps in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(n, &mut rng).unwrap();
        let model = EnvModel {
            chain,
            distortion: custom_distortion(n, &mut rng),
            cost: CostMode::Average { lambda: 0.5, target: 0.1 },
            start: StartMode::FromBelief,
        };
        let mut s = EnvState::start(Belief::uniform(n), &mut rng);
        for t in 0..steps {
            let a = random_kernel(n, KernelMode::StateConditioned, &mut rng);
            let (e, next) = env_step(&model, &s, &a, &mut rng).unwrap();
            prop_assert_eq!(e.t, t);
            prop_assert!((e.belief_after.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((e.cost.combined - (e.cost.leakage + 0.5 * (e.cost.distortion - 0.1))).abs() < 1e-12);
            s = next;
        }
    }
}

use put_core::nn::{dirichlet_log_prob, dirichlet_log_prob_grad, dirichlet_sample, Activation, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

fn random_net(seed: u64) -> (Mlp, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(2..6);
    let hidden = rng.random_range(3..9);
    let layers = rng.random_range(1..3);
    let output = rng.random_range(1..5);
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(hidden, layers));
    sizes.push(output);
    let act = [Activation::Linear, Activation::Tanh, Activation::Softplus][(seed % 3) as usize];
    let net = Mlp::new(&sizes, 0.01, act, &mut rng).unwrap();
    let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, x, w)
}

fn loss(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
    net.predict(x).unwrap().iter().zip(w).map(|(o, c)| o * c).sum()
}

#[test]
fn backward_matches_central_differences() {
    for seed in 0..50 {
        let (net, x, w) = random_net(seed);
        let (_, cache) = net.forward(&x).unwrap();
        let analytic = net.backward(&cache, &w).unwrap();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += H;
            let mut minus = net.clone();
            minus.params_mut()[i] -= H;
            numeric.push((loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * H));
        }
        let e = rel_err(&analytic, &numeric);
        assert!(e <= 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn dirichlet_gradient_matches_central_differences() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let k = rng.random_range(2..8);
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..20.0)).collect();
        let x = dirichlet_sample(&alpha, &mut rng).unwrap();
        let analytic = dirichlet_log_prob_grad(&alpha, &x).unwrap();
        let numeric: Vec<f64> = (0..k)
            .map(|i| {
                let mut p = alpha.clone();
                p[i] += H;
                let mut m = alpha.clone();
                m[i] -= H;
                (dirichlet_log_prob(&p, &x).unwrap() - dirichlet_log_prob(&m, &x).unwrap()) / (2.0 * H)
            })
            .collect();
        let e = rel_err(&analytic, &numeric);
        assert!(e <= 1e-4, "seed {seed}: relative error {e}");
    }
}

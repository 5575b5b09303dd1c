//! Advantage actor-critic over the belief MDP, policy evaluation and PUT sweeps.
//!
//! The actor maps a belief to Dirichlet concentrations, one concentration
//! vector per kernel slice; a sampled kernel is one independent Dirichlet draw
//! per slice. The critic estimates the discounted cost-to-go. Costs are
//! minimized, so both networks take plain descent steps.

use crate::belief::{env_step, ActionKernel, Belief, CostMode, EnvModel, EnvState, KernelMode, StartMode};
use crate::distortion::DistortionMatrix;
use crate::error::{PutError, Result};
use crate::myopic::MyopicPolicy;
use crate::nn::{clip_global_norm, dirichlet_log_prob, dirichlet_log_prob_grad, dirichlet_sample, Activation, AdamState, Cache, Mlp};
use crate::source::{stationary_distribution, TransitionMatrix};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Added to the softplus output so every concentration is strictly positive.
pub const ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeliefInit {
    #[default]
    Uniform,
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub horizon: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub cost: CostMode,
    pub kernel_mode: KernelMode,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub leaky_slope: f64,
    pub clip_norm: f64,
    pub belief_init: BeliefInit,
    pub seed: u64,
    /// Abort when the running cost stays above `divergence_factor × max(|c₀|, 0.1)`
    /// for this many consecutive episodes.
    pub divergence_window: usize,
    pub divergence_factor: f64,
    /// When set, the actor's output biases start at the softplus inverse of
    /// this value, so every initial concentration is about `c`.
    pub init_concentration: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 300,
            episodes: 5000,
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            cost: CostMode::Average { lambda: 1.0, target: 0.0 },
            kernel_mode: KernelMode::StateConditioned,
            hidden: 64,
            hidden_layers: 2,
            leaky_slope: 0.01,
            clip_norm: 5.0,
            belief_init: BeliefInit::Uniform,
            seed: 0,
            divergence_window: 200,
            divergence_factor: 10.0,
            init_concentration: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PutError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} must lie in (0, 1)", self.gamma));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.horizon == 0 || self.episodes == 0 || self.hidden == 0 || self.hidden_layers == 0 {
            return bad("horizon, episodes and hidden sizes must be at least 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip norm {} must be positive", self.clip_norm));
        }
        match self.cost {
            CostMode::Average { lambda, target } if !(lambda >= 0.0 && target.is_finite()) => {
                bad(format!("lambda {lambda} must be >= 0 and target finite"))
            }
            CostMode::Instantaneous { max_distortion } if !(max_distortion >= 0.0) => {
                bad(format!("max distortion {max_distortion} must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    fn hidden_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        s.push(output);
        s
    }
}

/// Everything about the environment except the cost definition.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub chain: TransitionMatrix,
    pub distortion: DistortionMatrix,
    pub start: StartMode,
}

impl Scenario {
    pub fn new(chain: TransitionMatrix, distortion: DistortionMatrix) -> Result<Self> {
        if chain.size() != distortion.size() {
            return Err(PutError::Shape {
                expected: chain.size(),
                got: distortion.size(),
            });
        }
        Ok(Self {
            chain,
            distortion,
            start: StartMode::FromBelief,
        })
    }

    pub fn size(&self) -> usize {
        self.chain.size()
    }

    pub fn model(&self, cost: CostMode) -> EnvModel {
        EnvModel {
            chain: self.chain.clone(),
            distortion: self.distortion.clone(),
            cost,
            start: self.start.clone(),
        }
    }

    pub fn start_belief(&self, init: BeliefInit) -> Result<Belief> {
        match init {
            BeliefInit::Uniform => Ok(Belief::uniform(self.size())),
            BeliefInit::Stationary => Belief::new(stationary_distribution(&self.chain, 1e-13, 1_000_000)?),
        }
    }
}

/// Belief → Dirichlet concentrations, one vector of length `|W|` per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    net: Mlp,
    mode: KernelMode,
    n: usize,
}

/// A sampled kernel with everything the policy-gradient step needs.
#[derive(Debug, Clone)]
pub struct ActorSample {
    pub kernel: ActionKernel,
    pub log_prob: f64,
    pub alpha: Vec<f64>,
    cache: Cache,
}

impl Actor {
    pub fn new(net: Mlp, mode: KernelMode) -> Result<Self> {
        let n = net.input_len();
        if net.output_len() != mode.slices(n) * n {
            return Err(PutError::Shape {
                expected: mode.slices(n) * n,
                got: net.output_len(),
            });
        }
        if net.output_activation() != Activation::Softplus {
            return Err(PutError::Config("actor output must be softplus".into()));
        }
        Ok(Self { net, mode, n })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn concentrations(&self, belief: &Belief) -> Result<Vec<f64>> {
        let mut a = self.net.predict(belief.probs())?;
        a.iter_mut().for_each(|v| *v += ALPHA_FLOOR);
        Ok(a)
    }

    /// Kernel whose slices are the Dirichlet means.
    pub fn mean_kernel(&self, belief: &Belief) -> Result<ActionKernel> {
        let mut a = self.concentrations(belief)?;
        for s in a.chunks_mut(self.n) {
            let t: f64 = s.iter().sum();
            s.iter_mut().for_each(|v| *v /= t);
        }
        Ok(ActionKernel::from_raw(self.n, self.mode, a))
    }

    /// Samples a kernel; the log-probability is the sum over the independent draws.
    pub fn sample(&self, belief: &Belief, rng: &mut ChaCha8Rng) -> Result<ActorSample> {
        let (mut alpha, cache) = self.net.forward(belief.probs())?;
        alpha.iter_mut().for_each(|v| *v += ALPHA_FLOOR);
        let mut probs = Vec::with_capacity(alpha.len());
        let mut log_prob = 0.0;
        for a in alpha.chunks(self.n) {
            let x = dirichlet_sample(a, rng)?;
            log_prob += dirichlet_log_prob(a, &x)?;
            probs.extend(x);
        }
        Ok(ActorSample {
            kernel: ActionKernel::from_raw(self.n, self.mode, probs),
            log_prob,
            alpha,
            cache,
        })
    }

    /// Gradient of `scale · ln π(sample)` with respect to the parameters.
    fn log_prob_grad(&self, s: &ActorSample, scale: f64) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(s.alpha.len());
        for (a, x) in s.alpha.chunks(self.n).zip(s.kernel.probs().chunks(self.n)) {
            g.extend(dirichlet_log_prob_grad(a, x)?.into_iter().map(|v| v * scale));
        }
        self.net.backward(&s.cache, &g)
    }
}

/// `V(β) = net(β) / (1 − γ)`, so the network output lives on the per-step cost scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    net: Mlp,
    gamma: f64,
}

impl Critic {
    pub fn new(net: Mlp, gamma: f64) -> Result<Self> {
        if net.output_len() != 1 {
            return Err(PutError::Shape {
                expected: 1,
                got: net.output_len(),
            });
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(PutError::Config(format!("gamma {gamma} must lie in (0, 1)")));
        }
        Ok(Self { net, gamma })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn value(&self, belief: &Belief) -> Result<f64> {
        Ok(self.net.predict(belief.probs())?[0] / (1.0 - self.gamma))
    }
}

/// `δ = c + γ V(β') − V(β)`. The last step of an episode bootstraps like any other.
pub fn td_error(critic: &Critic, exp: &crate::belief::ExperienceTuple, gamma: f64) -> Result<f64> {
    Ok(exp.cost.combined + gamma * critic.value(&exp.belief_after)? - critic.value(&exp.belief_before)?)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub cost: Vec<f64>,
    pub leakage: Vec<f64>,
    pub distortion: Vec<f64>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    /// Trailing moving average of the cost ending at episode `end` (exclusive).
    pub fn moving_average(&self, end: usize, window: usize) -> Option<f64> {
        if end > self.cost.len() || end < window || window == 0 {
            return None;
        }
        Some(self.cost[end - window..end].iter().sum::<f64>() / window as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,avg_cost,avg_leakage,avg_distortion\n");
        for i in 0..self.cost.len() {
            let _ = writeln!(s, "{},{:?},{:?},{:?}", i + 1, self.cost[i], self.leakage[i], self.distortion[i]);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: Actor,
    pub critic: Critic,
    pub curve: LearningCurve,
}

pub fn init_networks(cfg: &TrainConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<(Actor, Critic)> {
    let slices = cfg.kernel_mode.slices(n);
    let mut actor_net = Mlp::new(&cfg.hidden_sizes(n, slices * n), cfg.leaky_slope, Activation::Softplus, rng)?;
    if let Some(c) = cfg.init_concentration {
        let target = (c - ALPHA_FLOOR).max(1e-6);
        let bias = target + (-(-target).exp_m1()).ln();
        let out = slices * n;
        let p = actor_net.params_mut();
        let len = p.len();
        p[len - out..].iter_mut().for_each(|b| *b = bias);
    }
    let mut critic_net = Mlp::new(&cfg.hidden_sizes(n, 1), cfg.leaky_slope, Activation::Linear, rng)?;
    // the critic starts at V ≡ 0
    let p = critic_net.params_mut();
    let last = cfg.hidden + 1;
    let len = p.len();
    p[len - last..].iter_mut().for_each(|v| *v = 0.0);
    Ok((Actor::new(actor_net, cfg.kernel_mode)?, Critic::new(critic_net, cfg.gamma)?))
}

/// Runs the actor-critic loop for `cfg.episodes` episodes of `cfg.horizon` steps.
pub fn train(cfg: &TrainConfig, scenario: &Scenario) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = scenario.size();
    let model = scenario.model(cfg.cost);
    let start = scenario.start_belief(cfg.belief_init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut actor, mut critic) = init_networks(cfg, n, &mut rng)?;
    let mut actor_opt = AdamState::new(actor.net.params().len(), cfg.actor_lr);
    let mut critic_opt = AdamState::new(critic.net.params().len(), cfg.critic_lr);
    let mut curve = LearningCurve::default();
    let value_scale = 1.0 / (1.0 - cfg.gamma);
    let mut running = 0.0;
    let mut initial = 0.0;
    let mut above = 0usize;
    let h = cfg.horizon as f64;

    for episode in 0..cfg.episodes {
        let mut state = EnvState::start(start.clone(), &mut rng);
        let (mut c_sum, mut l_sum, mut d_sum) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.horizon {
            let sample = actor.sample(&state.belief, &mut rng)?;
            let (exp, next) = env_step(&model, &state, &sample.kernel, &mut rng)?;
            let (v_now, cache_now) = critic.net.forward(exp.belief_before.probs())?;
            let v_next = critic.net.predict(exp.belief_after.probs())?[0];
            let delta = exp.cost.combined + cfg.gamma * v_next * value_scale - v_now[0] * value_scale;
            if !delta.is_finite() {
                return Err(PutError::Diverged {
                    episode,
                    running: f64::NAN,
                    initial,
                });
            }

            // semi-gradient of δ²: only V(β_t) is differentiated
            let mut cg = critic.net.backward(&cache_now, &[-2.0 * delta * value_scale])?;
            clip_global_norm(&mut cg, cfg.clip_norm);
            critic_opt.update(critic.net.params_mut(), &cg)?;

            let mut ag = actor.log_prob_grad(&sample, delta)?;
            clip_global_norm(&mut ag, cfg.clip_norm);
            actor_opt.update(actor.net.params_mut(), &ag)?;

            c_sum += exp.cost.combined;
            l_sum += exp.cost.leakage;
            d_sum += exp.cost.distortion;
            state = next;
        }
        let c = c_sum / h;
        curve.cost.push(c);
        curve.leakage.push(l_sum / h);
        curve.distortion.push(d_sum / h);

        if episode == 0 {
            initial = c;
            running = c;
        } else {
            running = 0.9 * running + 0.1 * c;
        }
        if running > cfg.divergence_factor * initial.abs().max(0.1) {
            above += 1;
            if above >= cfg.divergence_window {
                return Err(PutError::Diverged {
                    episode,
                    running,
                    initial,
                });
            }
        } else {
            above = 0;
        }
    }
    Ok(TrainOutcome { actor, critic, curve })
}

/// What a release policy may look at when choosing the step-`t` kernel.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub t: usize,
    pub belief: &'a Belief,
    pub prev_release: Option<usize>,
}

pub trait ReleasePolicy: Sync {
    fn name(&self) -> &str;
    fn kernel(&self, ctx: &PolicyContext<'_>, rng: &mut ChaCha8Rng) -> Result<ActionKernel>;
}

#[derive(Debug, Clone, Copy)]
pub struct TruthfulPolicy {
    pub n: usize,
}

impl ReleasePolicy for TruthfulPolicy {
    fn name(&self) -> &str {
        "truthful"
    }

    fn kernel(&self, _: &PolicyContext<'_>, _: &mut ChaCha8Rng) -> Result<ActionKernel> {
        Ok(ActionKernel::truthful(self.n))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub n: usize,
    pub y: usize,
}

impl ReleasePolicy for ConstantPolicy {
    fn name(&self) -> &str {
        "constant"
    }

    fn kernel(&self, _: &PolicyContext<'_>, _: &mut ChaCha8Rng) -> Result<ActionKernel> {
        Ok(ActionKernel::constant(self.n, self.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActorEval {
    /// Release with the Dirichlet mean kernel.
    #[default]
    Mean,
    /// Release with a fresh Dirichlet draw each step.
    Sample,
}

#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actor: Actor,
    pub eval: ActorEval,
    pub label: String,
}

impl ActorPolicy {
    pub fn new(actor: Actor) -> Self {
        Self {
            actor,
            eval: ActorEval::Mean,
            label: "pdrp".into(),
        }
    }
}

impl ReleasePolicy for ActorPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn kernel(&self, ctx: &PolicyContext<'_>, rng: &mut ChaCha8Rng) -> Result<ActionKernel> {
        match self.eval {
            ActorEval::Mean => self.actor.mean_kernel(ctx.belief),
            ActorEval::Sample => Ok(self.actor.sample(ctx.belief, rng)?.kernel),
        }
    }
}

impl ReleasePolicy for MyopicPolicy {
    fn name(&self) -> &str {
        "myopic"
    }

    fn kernel(&self, ctx: &PolicyContext<'_>, _: &mut ChaCha8Rng) -> Result<ActionKernel> {
        if ctx.t >= self.horizon() {
            return Err(PutError::Domain(format!("step {} beyond myopic horizon {}", ctx.t, self.horizon())));
        }
        Ok(self.kernel_at(ctx.t, ctx.prev_release))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub rollouts: usize,
    pub seed: u64,
    pub keep_traces: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rollouts: 100,
            seed: 0,
            keep_traces: false,
        }
    }
}

/// True and released sequences of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Per-step averages of the expected leakage and distortion given the belief.
    pub avg_leakage: f64,
    pub avg_distortion: f64,
    /// Standard errors across rollouts.
    pub leakage_se: f64,
    pub distortion_se: f64,
    /// Largest expected distortion of any single step.
    pub max_step_distortion: f64,
    pub rollouts: usize,
    pub traces: Vec<Trace>,
}

struct RolloutStats {
    leakage: f64,
    distortion: f64,
    max_step: f64,
    trace: Option<Trace>,
}

/// Freezes `policy` and averages per-step leakage and distortion over
/// independent rollouts; rollout `i` uses stream `i` of the seeded generator.
pub fn evaluate_policy(
    policy: &dyn ReleasePolicy,
    model: &EnvModel,
    start: &Belief,
    horizon: usize,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if horizon == 0 || opts.rollouts == 0 {
        return Err(PutError::Config("horizon and rollouts must be at least 1".into()));
    }
    let stats: Vec<RolloutStats> = (0..opts.rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            rollout(policy, model, start, horizon, opts.keep_traces, &mut rng)
        })
        .collect::<Result<_>>()?;
    let m = stats.len() as f64;
    let mean_se = |f: &dyn Fn(&RolloutStats) -> f64| {
        let mean = stats.iter().map(f).sum::<f64>() / m;
        let var = stats.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        (mean, (var / m).sqrt())
    };
    let (avg_leakage, leakage_se) = mean_se(&|s| s.leakage);
    let (avg_distortion, distortion_se) = mean_se(&|s| s.distortion);
    let max_step_distortion = stats.iter().map(|s| s.max_step).fold(0.0, f64::max);
    Ok(Evaluation {
        avg_leakage,
        avg_distortion,
        leakage_se,
        distortion_se,
        max_step_distortion,
        rollouts: opts.rollouts,
        traces: stats.into_iter().filter_map(|s| s.trace).collect(),
    })
}

fn rollout(
    policy: &dyn ReleasePolicy,
    model: &EnvModel,
    start: &Belief,
    horizon: usize,
    keep: bool,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutStats> {
    let mut state = EnvState::start(start.clone(), rng);
    let mut prev = None;
    let (mut leak, mut dist, mut max_step) = (0.0, 0.0, 0.0f64);
    let mut trace = keep.then(|| Trace {
        xs: Vec::with_capacity(horizon),
        ys: Vec::with_capacity(horizon),
    });
    for t in 0..horizon {
        let ctx = PolicyContext {
            t,
            belief: &state.belief,
            prev_release: prev,
        };
        let a = policy.kernel(&ctx, rng)?;
        let (exp, next) = env_step(model, &state, &a, rng)?;
        leak += exp.cost.leakage;
        dist += exp.cost.distortion;
        max_step = max_step.max(exp.cost.distortion);
        if let Some(tr) = trace.as_mut() {
            tr.xs.push(exp.x_t);
            tr.ys.push(exp.observation);
        }
        prev = Some(exp.observation);
        state = next;
    }
    let h = horizon as f64;
    Ok(RolloutStats {
        leakage: leak / h,
        distortion: dist / h,
        max_step,
        trace,
    })
}

/// One row of a PUT-curve CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PutRecord {
    pub policy_name: String,
    pub constraint_mode: String,
    pub constraint_value: f64,
    pub lambda: Option<f64>,
    pub avg_leakage: f64,
    pub avg_distortion: f64,
    pub horizon: usize,
    pub rollouts: usize,
    pub seed: u64,
}

pub const PUT_CSV_HEADER: &str =
    "policy_name,constraint_mode,constraint_value,lambda,avg_leakage_nats,avg_distortion,n,rollouts,seed";

impl PutRecord {
    pub fn csv_row(&self) -> String {
        let lambda = self.lambda.map(|l| format!("{l:?}")).unwrap_or_default();
        format!(
            "{},{},{:?},{},{:?},{:?},{},{},{}",
            self.policy_name,
            self.constraint_mode,
            self.constraint_value,
            lambda,
            self.avg_leakage,
            self.avg_distortion,
            self.horizon,
            self.rollouts,
            self.seed
        )
    }
}

pub fn put_csv(records: &[PutRecord]) -> String {
    let mut s = String::from(PUT_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// `("ADC", D̄, Some(λ))` or `("IDC", D̂, None)`.
pub fn describe_cost(cost: CostMode) -> (&'static str, f64, Option<f64>) {
    match cost {
        CostMode::Average { lambda, target } => ("ADC", target, Some(lambda)),
        CostMode::Instantaneous { max_distortion } => ("IDC", max_distortion, None),
    }
}

/// Train a policy with `cfg` and evaluate its mean kernel.
pub fn train_and_evaluate(
    cfg: &TrainConfig,
    scenario: &Scenario,
    eval: &EvalOptions,
) -> Result<(PutRecord, TrainOutcome, Evaluation)> {
    let outcome = train(cfg, scenario)?;
    let policy = ActorPolicy::new(outcome.actor.clone());
    let start = scenario.start_belief(cfg.belief_init)?;
    let e = evaluate_policy(&policy, &scenario.model(cfg.cost), &start, cfg.horizon, eval)?;
    let (mode, value, lambda) = describe_cost(cfg.cost);
    let record = PutRecord {
        policy_name: policy.label.clone(),
        constraint_mode: mode.into(),
        constraint_value: value,
        lambda,
        avg_leakage: e.avg_leakage,
        avg_distortion: e.avg_distortion,
        horizon: cfg.horizon,
        rollouts: e.rollouts,
        seed: cfg.seed,
    };
    Ok((record, outcome, e))
}

/// Seed of sweep point `index`: drawn from stream `index` of a generator keyed by `master`.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index as u64 + 1);
    r.next_u64()
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub config: TrainConfig,
    pub result: std::result::Result<(PutRecord, LearningCurve), PutError>,
}

/// Trains and evaluates one policy per sweep value. Values replace `λ` for an
/// average-constraint base config and `D̂` for an instantaneous one. Points run
/// in parallel; a failing point is recorded and the rest continue.
pub fn put_sweep(base: &TrainConfig, scenario: &Scenario, values: &[f64], eval: &EvalOptions) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(PutError::Config("empty sweep".into()));
    }
    base.validate()?;
    Ok(values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = base.clone();
            cfg.seed = point_seed(base.seed, i);
            cfg.cost = match base.cost {
                CostMode::Average { target, .. } => CostMode::Average { lambda: v, target },
                CostMode::Instantaneous { .. } => CostMode::Instantaneous { max_distortion: v },
            };
            let result = train_and_evaluate(&cfg, scenario, eval).map(|(r, o, _)| (r, o.curve));
            SweepPoint {
                value: v,
                config: cfg,
                result,
            }
        })
        .collect())
}

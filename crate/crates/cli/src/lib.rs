//! Commands behind the `put` binary. Each is a pure function of its
//! configuration, input files and seed.

pub mod config;
pub mod output;

use anyhow::{bail, Context, Result};
use config::{ChainKind, Config, ConfigError, ConstraintKind, PolicyKind, SourceKind};
use output::{write_atomic, write_csv, Provenance};
use put_core::a2c::{
    describe_cost, evaluate_policy, point_seed, put_csv, put_sweep, train, train_and_evaluate, Actor, ActorEval,
    ActorPolicy, EvalOptions, PutRecord, Scenario, TruthfulPolicy,
};
use put_core::adversary::{compare_policies, report_csv, AdversaryRow, PolicyTraces};
use put_core::belief::{CostMode, KernelMode};
use put_core::distortion::{manhattan_grid, DistortionMatrix};
use put_core::geolife::{
    build_user_model, dbscan, parse_plt, sequences_csv, synthetic_user, to_symbol_sequence, SymbolOptions,
    SyntheticUser,
};
use put_core::myopic::{solve_myopic, MyopicOptions, MyopicPolicy};
use put_core::nn::{Activation, Mlp};
use put_core::oracle::{run_verification, BeliefUpdater, VerificationReport, VerifyOptions};
use put_core::source::{default_q1_weights, make_q1_chain, make_q2_chain, make_uniform_chain, StateSpace, TransitionMatrix};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Resolved inputs of one command invocation.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub provenance: Provenance,
}

impl Run {
    /// `seed` overrides the config's seed when given.
    pub fn new(config: Config, config_sha256: String, seed: Option<u64>, out: PathBuf) -> Self {
        let seed = seed.unwrap_or(config.seed);
        Self {
            config,
            seed,
            out,
            provenance: Provenance { config_sha256, seed },
        }
    }

    /// Default configuration, hashed as an empty file.
    pub fn with_defaults(out: PathBuf) -> Self {
        Self::new(Config::default(), config::config_hash(b""), None, out)
    }

    fn csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        write_csv(&p, &self.provenance, body).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        write_atomic(&p, body.as_bytes()).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

/// True when the error (or anything it wraps) is a configuration problem.
pub fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some())
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

// ---------------------------------------------------------------- scenarios

pub fn grid_scenario(cfg: &Config, chain: ChainKind) -> Result<Scenario> {
    let s = &cfg.scenario;
    let (w, h) = (s.width, s.height);
    let q = match chain {
        ChainKind::Q0 => make_uniform_chain(StateSpace::grid(w, h)?),
        ChainKind::Q1 => {
            let r = s.q1_weights.clone().unwrap_or_else(default_q1_weights);
            make_q1_chain(w, h, &r).map_err(|e| config_err(e.to_string()))?
        }
        ChainKind::Q2 => make_q2_chain(w, h, s.q2_r0, s.q2_r1)?,
    };
    Ok(Scenario::new(q, manhattan_grid(w, h)?)?)
}

pub fn model_scenario(dir: &Path) -> Result<Scenario> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))
    };
    let chain = TransitionMatrix::from_csv(&read("transition.csv")?).context("parsing transition.csv")?;
    let d = DistortionMatrix::from_csv(&read("distortion.csv")?).context("parsing distortion.csv")?;
    Ok(Scenario::new(chain, d)?)
}

/// `(name, scenario)` for every configured chain, or the single model.
pub fn scenarios(cfg: &Config) -> Result<Vec<(String, Scenario)>> {
    match cfg.scenario.source {
        SourceKind::Grid => cfg
            .scenario
            .chains
            .iter()
            .map(|&c| Ok((c.name().to_string(), grid_scenario(cfg, c)?)))
            .collect(),
        SourceKind::Model => {
            let dir = cfg.scenario.model_dir.as_ref().ok_or_else(|| config_err("scenario.model_dir is not set"))?;
            Ok(vec![("model".into(), model_scenario(dir)?)])
        }
    }
}

fn mode_tag(c: ConstraintKind) -> &'static str {
    match c {
        ConstraintKind::Adc => "adc",
        ConstraintKind::Idc => "idc",
    }
}

fn myopic_options(rollouts: usize) -> MyopicOptions {
    MyopicOptions {
        rollouts,
        ..MyopicOptions::default()
    }
}

fn myopic_record(policy: &MyopicPolicy, name: &str, horizon: usize, rollouts: usize, seed: u64) -> PutRecord {
    PutRecord {
        policy_name: name.into(),
        constraint_mode: "ADC".into(),
        constraint_value: policy.avg_distortion(),
        lambda: None,
        avg_leakage: policy.avg_leakage(),
        avg_distortion: policy.avg_distortion(),
        horizon,
        rollouts,
        seed,
    }
}

// ---------------------------------------------------------------- verify

/// Runs the identity suite; `updater` replaces the belief update under test.
pub fn cmd_verify(seed: u64, updater: Option<BeliefUpdater>) -> Result<VerificationReport> {
    let mut opts = VerifyOptions {
        seed,
        ..VerifyOptions::default()
    };
    if let Some(u) = updater {
        opts.updater = u;
    }
    Ok(run_verification(&opts)?)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub records: Vec<PutRecord>,
    pub failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// One trained policy per (chain, sweep value), plus myopic rows at each
/// trained point's distortion for average constraints.
pub fn cmd_synth_sweep(run: &Run) -> Result<SweepSummary> {
    let cfg = &run.config;
    if cfg.sweep.values.is_empty() {
        return Err(config_err("sweep.values is empty"));
    }
    let base = cfg.train.to_train_config(run.seed);
    let eval = EvalOptions {
        rollouts: cfg.sweep.rollouts,
        seed: run.seed,
        keep_traces: false,
    };
    let tag = mode_tag(cfg.train.constraint);
    let mut summary = SweepSummary {
        records: Vec::new(),
        failures: Vec::new(),
        files: Vec::new(),
    };
    for (name, sc) in scenarios(cfg)? {
        let points = put_sweep(&base, &sc, &cfg.sweep.values, &eval)?;
        for (i, p) in points.into_iter().enumerate() {
            match p.result {
                Ok((mut rec, curve)) => {
                    rec.policy_name = format!("pdrp_{name}");
                    summary
                        .files
                        .push(run.csv(&format!("learning/{name}_{tag}_{i}.csv"), &curve.to_csv())?);
                    let target = rec.avg_distortion;
                    summary.records.push(rec);
                    if cfg.sweep.myopic && cfg.train.constraint == ConstraintKind::Adc {
                        let start = sc.start_belief(p.config.belief_init)?;
                        let opts = myopic_options(cfg.sweep.rollouts);
                        match solve_myopic(&sc.chain, &start, &sc.start, &sc.distortion, target, base.horizon, &opts) {
                            Ok(m) => summary.records.push(myopic_record(
                                &m,
                                &format!("myopic_{name}"),
                                base.horizon,
                                cfg.sweep.rollouts,
                                p.config.seed,
                            )),
                            Err(e) => summary.failures.push(format!("{name} myopic at distortion {target}: {e}")),
                        }
                    }
                }
                Err(e) => summary.failures.push(format!("{name} {tag} value {}: {e}", p.value)),
            }
        }
    }
    summary.files.push(run.csv("put.csv", &put_csv(&summary.records))?);
    if !summary.failures.is_empty() {
        let body: String = summary.failures.iter().map(|f| format!("{f}\n")).collect();
        summary.files.push(run.text("failures.txt", &body)?);
    }
    Ok(summary)
}

// ---------------------------------------------------------------- train / eval

pub fn save_actor(actor: &Actor, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    actor.net().write_checkpoint(&mut buf)?;
    write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))
}

/// Loads an actor for an `n`-state problem; the kernel mode follows from the output width.
pub fn load_actor(path: &Path, n: usize, slope: f64) -> Result<Actor> {
    let f = fs::File::open(path).with_context(|| format!("cannot open checkpoint {}", path.display()))?;
    let net = Mlp::read_checkpoint(std::io::BufReader::new(f), slope, Activation::Softplus)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    if net.input_len() != n {
        bail!("checkpoint {} expects {} states, scenario has {n}", path.display(), net.input_len());
    }
    let mode = if net.output_len() == n * n {
        KernelMode::StateConditioned
    } else if net.output_len() == n * n * n {
        KernelMode::PairConditioned
    } else {
        bail!("checkpoint {} has {} outputs, not a kernel over {n} states", path.display(), net.output_len());
    };
    Ok(Actor::new(net, mode)?)
}

/// Trains one policy per scenario at `[train] value`; writes checkpoints,
/// learning curves and the evaluated PUT rows.
pub fn cmd_train(run: &Run) -> Result<Vec<PutRecord>> {
    let cfg = &run.config;
    let tc = cfg.train.to_train_config(run.seed);
    let eval = EvalOptions {
        rollouts: cfg.eval.rollouts,
        seed: run.seed,
        keep_traces: false,
    };
    let mut records = Vec::new();
    for (name, sc) in scenarios(cfg)? {
        let (mut rec, outcome, _) = train_and_evaluate(&tc, &sc, &eval)?;
        rec.policy_name = format!("pdrp_{name}");
        save_actor(&outcome.actor, &run.out.join(format!("{name}/actor.ckpt")))?;
        let mut critic = Vec::new();
        outcome.critic.net().write_checkpoint(&mut critic)?;
        write_atomic(&run.out.join(format!("{name}/critic.ckpt")), &critic)?;
        run.csv(&format!("{name}/learning.csv"), &outcome.curve.to_csv())?;
        records.push(rec);
    }
    run.csv("train.csv", &put_csv(&records))?;
    Ok(records)
}

/// Evaluates `[eval] checkpoint` on every scenario under `[train]`'s constraint.
pub fn cmd_eval(run: &Run) -> Result<Vec<PutRecord>> {
    let cfg = &run.config;
    let path = cfg.eval.checkpoint.as_ref().ok_or_else(|| config_err("eval.checkpoint is not set"))?;
    let tc = cfg.train.to_train_config(run.seed);
    let eval = EvalOptions {
        rollouts: cfg.eval.rollouts,
        seed: run.seed,
        keep_traces: false,
    };
    let mut records = Vec::new();
    for (name, sc) in scenarios(cfg)? {
        let mut policy = ActorPolicy::new(load_actor(path, sc.size(), tc.leaky_slope)?);
        if cfg.eval.sampled {
            policy.eval = ActorEval::Sample;
        }
        let start = sc.start_belief(tc.belief_init)?;
        let e = evaluate_policy(&policy, &sc.model(tc.cost), &start, tc.horizon, &eval)?;
        let (mode, value, lambda) = describe_cost(tc.cost);
        records.push(PutRecord {
            policy_name: format!("pdrp_{name}"),
            constraint_mode: mode.into(),
            constraint_value: value,
            lambda,
            avg_leakage: e.avg_leakage,
            avg_distortion: e.avg_distortion,
            horizon: tc.horizon,
            rollouts: e.rollouts,
            seed: run.seed,
        });
    }
    run.csv("eval.csv", &put_csv(&records))?;
    Ok(records)
}

// ---------------------------------------------------------------- adversary

/// Trains (or loads) one PDRP per constraint value, releases traces from every
/// configured policy family and scores them with the m-gram adversary.
/// Released traces for every (value, policy) pair plus the alphabet size.
pub fn adversary_entries(run: &Run) -> Result<(usize, Vec<PolicyTraces>)> {
    let cfg = &run.config;
    let a = &cfg.adversary;
    if a.values.is_empty() {
        return Err(config_err("adversary.values is empty"));
    }
    let mut all = scenarios(cfg)?;
    if all.len() != 1 {
        return Err(config_err("adversary needs exactly one scenario chain"));
    }
    let (_, sc) = all.remove(0);
    let n = sc.size();
    let horizon = a.horizon.unwrap_or(cfg.train.horizon);
    let eval = EvalOptions {
        rollouts: a.rollouts,
        seed: run.seed,
        keep_traces: true,
    };
    let base = cfg.train.to_train_config(run.seed);
    let start = sc.start_belief(base.belief_init)?;
    // the unmasked model; myopic and truthful kernels are used as given
    let plain = sc.model(CostMode::Average { lambda: 0.0, target: 0.0 });

    let truthful = if a.policies.contains(&PolicyKind::Truthful) {
        Some(evaluate_policy(&TruthfulPolicy { n }, &plain, &start, horizon, &eval)?)
    } else {
        None
    };
    let needs_pdrp = a.policies.contains(&PolicyKind::Pdrp)
        || (a.policies.contains(&PolicyKind::Myopic) && cfg.train.constraint == ConstraintKind::Adc);

    let mut entries = Vec::new();
    for (i, &v) in a.values.iter().enumerate() {
        let cost = cfg.train.cost(v);
        let pdrp = if needs_pdrp {
            let actor = match a.checkpoints.get(i) {
                Some(p) => load_actor(p, n, base.leaky_slope)?,
                None => {
                    let mut tc = base.clone();
                    tc.cost = cost;
                    tc.seed = point_seed(run.seed, i);
                    train(&tc, &sc)?.actor
                }
            };
            let policy = ActorPolicy::new(actor);
            Some(evaluate_policy(&policy, &sc.model(cost), &start, horizon, &eval)?)
        } else {
            None
        };
        // report the distortion level: D̂ itself, or the trained policy's realized average under ADC
        let level = match (&pdrp, cfg.train.constraint) {
            (Some(e), ConstraintKind::Adc) => e.avg_distortion,
            _ => v,
        };
        for kind in &a.policies {
            let entry = match kind {
                PolicyKind::Truthful => {
                    let e = truthful.as_ref().expect("evaluated above");
                    PolicyTraces {
                        policy: "truthful".into(),
                        constraint: level,
                        avg_leakage: e.avg_leakage,
                        traces: e.traces.clone(),
                    }
                }
                PolicyKind::Pdrp => {
                    let e = pdrp.as_ref().expect("evaluated above");
                    PolicyTraces {
                        policy: format!("pdrp_{}", mode_tag(cfg.train.constraint)),
                        constraint: level,
                        avg_leakage: e.avg_leakage,
                        traces: e.traces.clone(),
                    }
                }
                PolicyKind::Myopic => {
                    // an average budget; it has no per-step cap
                    let m = solve_myopic(
                        &sc.chain,
                        &start,
                        &sc.start,
                        &sc.distortion,
                        level,
                        horizon,
                        &myopic_options(a.rollouts),
                    )?;
                    let e = evaluate_policy(&m, &plain, &start, horizon, &eval)?;
                    PolicyTraces {
                        policy: "myopic".into(),
                        constraint: level,
                        avg_leakage: m.avg_leakage(),
                        traces: e.traces,
                    }
                }
            };
            entries.push(entry);
        }
    }
    Ok((n, entries))
}

pub fn cmd_adversary(run: &Run) -> Result<Vec<AdversaryRow>> {
    let a = &run.config.adversary;
    let (n, entries) = adversary_entries(run)?;
    let rows = compare_policies(&entries, n, &a.memories, a.smoothing, run.seed)?;
    run.csv("adversary.csv", &report_csv(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------- geolife

#[derive(Debug, Clone, PartialEq)]
pub struct GeolifeSummary {
    pub files_read: usize,
    pub files_skipped: Vec<String>,
    pub points: usize,
    pub clusters: usize,
    pub noise_points: usize,
    pub sequences: usize,
    pub symbols: usize,
}

impl GeolifeSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "files_read {}", self.files_read);
        let _ = writeln!(s, "files_skipped {}", self.files_skipped.len());
        for f in &self.files_skipped {
            let _ = writeln!(s, "  {f}");
        }
        let _ = writeln!(s, "points {}", self.points);
        let _ = writeln!(s, "clusters {}", self.clusters);
        let _ = writeln!(s, "noise_points {}", self.noise_points);
        let _ = writeln!(s, "sequences {}", self.sequences);
        let _ = writeln!(s, "symbols {}", self.symbols);
        s
    }
}

/// Every `.plt` file under `dir`, sorted by path.
pub fn find_plt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("plt")) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, &mut out).with_context(|| format!("cannot list {}", dir.display()))?;
    out.sort();
    Ok(out)
}

/// Clusters the PLT files under `[geolife] input` and writes the discrete user model.
pub fn cmd_geolife(run: &Run) -> Result<GeolifeSummary> {
    let g = &run.config.geolife;
    let files = find_plt_files(&g.input)?;
    let mut skipped = Vec::new();
    let mut trajectories = Vec::new();
    for f in &files {
        let rel = f.strip_prefix(&g.input).unwrap_or(f).display().to_string();
        let parsed = fs::read_to_string(f).map_err(anyhow::Error::from).and_then(|t| Ok(parse_plt(&t)?));
        match parsed {
            Ok(pts) if !pts.is_empty() => trajectories.push(pts),
            Ok(_) => skipped.push(format!("{rel}: no points")),
            Err(e) => skipped.push(format!("{rel}: {e}")),
        }
    }
    if trajectories.is_empty() {
        bail!("no parseable PLT files under {}", g.input.display());
    }
    let coords: Vec<(f64, f64)> = trajectories.iter().flatten().map(|p| p.coords()).collect();
    let model = dbscan(&coords, g.eps_m, g.min_pts)?;
    if model.is_empty() {
        bail!("DBSCAN found no clusters (eps_m {}, min_pts {})", g.eps_m, g.min_pts);
    }
    let opts = SymbolOptions {
        stride_s: g.stride_s,
        collapse: g.collapse,
    };
    let mut seqs = Vec::with_capacity(trajectories.len());
    let mut offset = 0;
    for t in &trajectories {
        let labels = &model.assignments[offset..offset + t.len()];
        seqs.push(to_symbol_sequence(t, labels, &model, opts)?);
        offset += t.len();
    }
    let user = build_user_model(&seqs, &model, g.smoothing)?;
    let summary = GeolifeSummary {
        files_read: trajectories.len(),
        files_skipped: skipped,
        points: coords.len(),
        clusters: model.len(),
        noise_points: model.noise_count(),
        sequences: seqs.len(),
        symbols: seqs.iter().map(Vec::len).sum(),
    };
    run.csv("clusters.csv", &model.to_csv())?;
    run.csv("symbols.csv", &sequences_csv(&seqs))?;
    run.csv("transition.csv", &user.chain.to_csv())?;
    run.csv("distortion.csv", &user.distortion.to_csv())?;
    let mut init = String::from("state,prob\n");
    for (i, p) in user.init.probs().iter().enumerate() {
        let _ = writeln!(init, "{i},{p:?}");
    }
    run.csv("init.csv", &init)?;
    run.text("summary.txt", &summary.to_text())?;
    Ok(summary)
}

/// Writes the synthetic GeoLife-format user under `dir`.
pub fn cmd_make_sample(dir: &Path, cfg: &SyntheticUser) -> Result<Vec<PathBuf>> {
    let files = synthetic_user(cfg)?;
    let mut out = Vec::with_capacity(files.len());
    for (name, body) in files {
        let p = dir.join(name);
        write_atomic(&p, body.as_bytes()).with_context(|| format!("writing {}", p.display()))?;
        out.push(p);
    }
    Ok(out)
}

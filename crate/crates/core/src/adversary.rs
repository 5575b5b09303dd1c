//! Memory-limited adversary: predicts the current true symbol from the last
//! `m` released symbols with smoothed counts, scored by cross-entropy.

use crate::a2c::Trace;
use crate::error::{PutError, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

pub const DEFAULT_SMOOTHING: f64 = 0.1;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct MGramPredictor {
    m: usize,
    n: usize,
    alpha: f64,
    counts: HashMap<Vec<usize>, Vec<f64>>,
}

fn check_trace(t: &Trace, n: usize) -> Result<()> {
    if t.xs.len() != t.ys.len() {
        return Err(PutError::Shape {
            expected: t.xs.len(),
            got: t.ys.len(),
        });
    }
    if let Some(&s) = t.xs.iter().chain(&t.ys).find(|&&s| s >= n) {
        return Err(PutError::Domain(format!("symbol {s} outside an alphabet of {n}")));
    }
    Ok(())
}

impl MGramPredictor {
    /// Counts `x_t` against the context `y_{t-m+1..t}` for every position with a full context.
    pub fn fit(traces: &[Trace], n: usize, m: usize, alpha: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(PutError::Config("memory and alphabet must be at least 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(PutError::Config(format!("smoothing {alpha} must be positive")));
        }
        let mut counts: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        for t in traces {
            check_trace(t, n)?;
            if t.xs.len() < m {
                continue;
            }
            for end in m - 1..t.xs.len() {
                let ctx = &t.ys[end + 1 - m..=end];
                counts.entry(ctx.to_vec()).or_insert_with(|| vec![0.0; n])[t.xs[end]] += 1.0;
            }
        }
        Ok(Self { m, n, alpha, counts })
    }

    pub fn memory(&self) -> usize {
        self.m
    }

    pub fn contexts(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, context: &[usize]) -> Option<&[f64]> {
        self.counts.get(context).map(|v| v.as_slice())
    }

    /// `(count + α) / (total + nα)`; uniform for contexts never seen.
    pub fn predict(&self, context: &[usize]) -> Vec<f64> {
        match self.counts.get(context) {
            Some(c) => {
                let total: f64 = c.iter().sum::<f64>() + self.alpha * self.n as f64;
                c.iter().map(|v| (v + self.alpha) / total).collect()
            }
            None => vec![1.0 / self.n as f64; self.n],
        }
    }

    /// Mean of `−ln P̂(x_t | context)` in nats over positions with a full context.
    pub fn cross_entropy(&self, traces: &[Trace]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for t in traces {
            check_trace(t, self.n)?;
            if t.xs.len() < self.m {
                continue;
            }
            for end in self.m - 1..t.xs.len() {
                let ctx = &t.ys[end + 1 - self.m..=end];
                total -= self.predict(ctx)[t.xs[end]].ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(PutError::Config(format!("no positions with a context of length {}", self.m)));
        }
        Ok(total / count as f64)
    }
}

/// Seeded 80/20 split of traces into (train, test).
pub fn split_traces(traces: &[Trace], seed: u64) -> (Vec<Trace>, Vec<Trace>) {
    let mut idx: Vec<usize> = (0..traces.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((traces.len() as f64) * TRAIN_FRACTION).round() as usize;
    let cut = cut.clamp(usize::from(traces.len() > 1), traces.len().saturating_sub(1).max(1));
    let pick = |r: &[usize]| r.iter().map(|&i| traces[i].clone()).collect();
    (pick(&idx[..cut]), pick(&idx[cut..]))
}

/// Fit on the train split and score on the test split, once per memory length.
pub fn adversary_losses(traces: &[Trace], n: usize, memories: &[usize], alpha: f64, seed: u64) -> Result<Vec<f64>> {
    let (train, test) = split_traces(traces, seed);
    memories
        .iter()
        .map(|&m| MGramPredictor::fit(&train, n, m, alpha)?.cross_entropy(&test))
        .collect()
}

/// Released traces of one policy at one operating point.
#[derive(Debug, Clone)]
pub struct PolicyTraces {
    pub policy: String,
    pub constraint: f64,
    pub avg_leakage: f64,
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryRow {
    pub policy: String,
    pub constraint: f64,
    pub avg_leakage: f64,
    pub memories: Vec<usize>,
    pub cross_entropy: Vec<f64>,
}

pub fn compare_policies(entries: &[PolicyTraces], n: usize, memories: &[usize], alpha: f64, seed: u64) -> Result<Vec<AdversaryRow>> {
    if entries.is_empty() || memories.is_empty() {
        return Err(PutError::Config("need at least one policy and one memory length".into()));
    }
    entries
        .iter()
        .map(|e| {
            Ok(AdversaryRow {
                policy: e.policy.clone(),
                constraint: e.constraint,
                avg_leakage: e.avg_leakage,
                memories: memories.to_vec(),
                cross_entropy: adversary_losses(&e.traces, n, memories, alpha, seed)?,
            })
        })
        .collect()
}

/// `policy,constraint_km_or_steps,avg_leakage_nats,ce_m1,ce_m5` (one `ce_m*` column per memory).
pub fn report_csv(rows: &[AdversaryRow]) -> String {
    let mut s = String::from("policy,constraint_km_or_steps,avg_leakage_nats");
    if let Some(r) = rows.first() {
        for m in &r.memories {
            let _ = write!(s, ",ce_m{m}");
        }
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{:?},{:?}", r.policy, r.constraint, r.avg_leakage);
        for ce in &r.cross_entropy {
            let _ = write!(s, ",{ce:?}");
        }
        s.push('\n');
    }
    s
}

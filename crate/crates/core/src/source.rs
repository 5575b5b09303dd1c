//! Finite-state Markov sources.
//!
//! Orientation convention used everywhere in the crate: a [`TransitionMatrix`]
//! entry `(i, j)` is `P(x_t = i | x_{t-1} = j)`. Columns are "from", rows are
//! "to", and every column sums to one.

use crate::error::{PutError, Result};
use crate::prob;
use rand::Rng;
use std::fmt::Write as _;

/// Tolerance used to validate column sums at construction.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Grid { width: usize, height: usize },
    Planar(Vec<(f64, f64)>),
    /// `(lat, lon)` in degrees.
    Geo(Vec<(f64, f64)>),
}

/// The finite alphabet `W` shared by true and released symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    size: usize,
    labels: Option<Vec<String>>,
    geometry: Option<Geometry>,
}

impl StateSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(PutError::Config("state space must have at least one state".into()));
        }
        Ok(Self {
            size,
            labels: None,
            geometry: None,
        })
    }

    pub fn grid(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(PutError::Config(format!("grid {width}x{height} is empty")));
        }
        Ok(Self {
            size: width * height,
            labels: None,
            geometry: Some(Geometry::Grid { width, height }),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size {
            return Err(PutError::Shape {
                expected: self.size,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Result<Self> {
        match &geometry {
            Geometry::Grid { width, height } if width * height != self.size => {
                return Err(PutError::Shape {
                    expected: self.size,
                    got: width * height,
                })
            }
            Geometry::Planar(p) | Geometry::Geo(p) if p.len() != self.size => {
                return Err(PutError::Shape {
                    expected: self.size,
                    got: p.len(),
                })
            }
            _ => {}
        }
        self.geometry = Some(geometry);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    /// Label of state `i`; defaults to the 1-based cell number.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.size).map(|i| self.label(i)).collect()
    }
}

/// Column-stochastic Markov kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    space: StateSpace,
    // data[from * n + to]: each source column is contiguous.
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from a row-major matrix `rows[to][from]`.
    pub fn from_rows(space: StateSpace, rows: &[Vec<f64>]) -> Result<Self> {
        let n = space.size();
        if rows.len() != n {
            return Err(PutError::Shape {
                expected: n,
                got: rows.len(),
            });
        }
        let mut data = vec![0.0; n * n];
        for (to, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(PutError::Shape {
                    expected: n,
                    got: row.len(),
                });
            }
            for (from, &v) in row.iter().enumerate() {
                data[from * n + to] = v;
            }
        }
        Self::from_columns_flat(space, data)
    }

    /// Builds from column-contiguous storage `data[from * n + to]`.
    pub fn from_columns_flat(space: StateSpace, data: Vec<f64>) -> Result<Self> {
        let n = space.size();
        if data.len() != n * n {
            return Err(PutError::Shape {
                expected: n * n,
                got: data.len(),
            });
        }
        for from in 0..n {
            let col = &data[from * n..(from + 1) * n];
            if let Some(v) = col.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(PutError::InvalidDistribution(format!(
                    "column {from} has entry {v}"
                )));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(PutError::NotStochastic { column: from, sum });
            }
        }
        Ok(Self { space, data })
    }

    /// Kernel whose every column equals `p`: the next state ignores the previous one.
    pub fn memoryless(space: StateSpace, p: &InitialDistribution) -> Result<Self> {
        let n = space.size();
        if p.probs().len() != n {
            return Err(PutError::Shape {
                expected: n,
                got: p.probs().len(),
            });
        }
        let data = (0..n).flat_map(|_| p.probs().iter().copied()).collect();
        Self::from_columns_flat(space, data)
    }

    pub fn identity(space: StateSpace) -> Self {
        let n = space.size();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { space, data }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size
    }

    /// `P(to | from)`.
    #[inline]
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.data[from * self.space.size + to]
    }

    /// Distribution of the next state given `from`.
    #[inline]
    pub fn column(&self, from: usize) -> &[f64] {
        let n = self.space.size;
        &self.data[from * n..(from + 1) * n]
    }

    /// `Q · p`: propagates a distribution one step.
    pub fn propagate(&self, p: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n];
        for (from, &w) in p.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &q) in out.iter_mut().zip(self.column(from)) {
                *o += w * q;
            }
        }
        out
    }

    /// Row-major copy, `rows[to][from]`.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n)
            .map(|to| (0..n).map(|from| self.get(to, from)).collect())
            .collect()
    }

    /// Header of state labels, then one line per destination state with one
    /// value per source state.
    pub fn to_csv(&self) -> String {
        let mut s = self.space.labels().join(",");
        s.push('\n');
        for row in self.to_rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| PutError::Format("empty transition csv".into()))?;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let space = StateSpace::new(labels.len())?.with_labels(labels)?;
        let rows = lines
            .map(|(ln, l)| parse_row(l, ln + 1))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(space, &rows)
    }
}

pub(crate) fn parse_row(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|c| {
            c.trim().parse::<f64>().map_err(|e| PutError::Parse {
                line: line_no,
                msg: format!("{c:?}: {e}"),
            })
        })
        .collect()
}

/// Distribution of the first symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution(Vec<f64>);

impl InitialDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        prob::check_simplex(&probs, STOCHASTIC_TOL)?;
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
}

/// Every transition equally likely.
pub fn make_uniform_chain(space: StateSpace) -> TransitionMatrix {
    let n = space.size();
    TransitionMatrix {
        space,
        data: vec![1.0 / n as f64; n * n],
    }
}

fn grid_distance(width: usize, a: usize, b: usize) -> usize {
    let (ra, ca) = (a / width, a % width);
    let (rb, cb) = (b / width, b % width);
    ra.abs_diff(rb) + ca.abs_diff(cb)
}

/// Builds a kernel from per-pair weights `w(from, to)` divided by the
/// Manhattan distance, with the self-term divided by one instead of zero.
fn distance_weighted(
    width: usize,
    height: usize,
    weight: impl Fn(usize, usize) -> f64,
) -> Result<TransitionMatrix> {
    let space = StateSpace::grid(width, height)?;
    let n = space.size();
    let mut data = vec![0.0; n * n];
    for from in 0..n {
        let col = &mut data[from * n..(from + 1) * n];
        for (to, c) in col.iter_mut().enumerate() {
            let d = grid_distance(width, from, to).max(1) as f64;
            *c = weight(from, to) / d;
        }
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|c| *c /= s);
    }
    TransitionMatrix::from_columns_flat(space, data)
}

/// Distance-decaying grid walk: mass proportional to `r[d] / max(d, 1)`,
/// so equidistant destinations receive identical probability.
pub fn make_q1_chain(width: usize, height: usize, r: &[f64]) -> Result<TransitionMatrix> {
    if width == 0 || height == 0 {
        return Err(PutError::Config(format!("grid {width}x{height} is empty")));
    }
    let max_d = width + height - 2;
    if r.len() <= max_d {
        return Err(PutError::Config(format!(
            "weight table has {} entries but distances up to {max_d} occur",
            r.len()
        )));
    }
    if let Some((d, v)) = r.iter().enumerate().take(max_d + 1).find(|(_, v)| !(**v > 0.0)) {
        return Err(PutError::Config(format!("weight r_{d} = {v} must be positive")));
    }
    distance_weighted(width, height, |from, to| r[grid_distance(width, from, to)])
}

/// The default weights `r_0 = 1`, `r_d = 7 - d` for the 4x4 grid.
pub fn default_q1_weights() -> Vec<f64> {
    let mut r = vec![1.0];
    r.extend((1..=6).map(|d| 7.0 - d as f64));
    r
}

/// Preferred-path grid walk. Cells are numbered row-major from 1; from a
/// cell not in the last column the path continues right, from the last
/// column it continues down, and the final cell prefers to stay. Path
/// moves get weight `r1`, everything else `r0`, then the same distance
/// normalization as [`make_q1_chain`] applies.
pub fn make_q2_chain(width: usize, height: usize, r0: f64, r1: f64) -> Result<TransitionMatrix> {
    if width == 0 || height == 0 {
        return Err(PutError::Config(format!("grid {width}x{height} is empty")));
    }
    if !(r0 > 0.0 && r1 > 0.0) {
        return Err(PutError::Config(format!("weights r0={r0}, r1={r1} must be positive")));
    }
    let n = width * height;
    let path_next = |from: usize| -> usize {
        let cell = from + 1;
        if cell == n {
            from
        } else if cell % width != 0 {
            from + 1
        } else {
            from + width
        }
    };
    distance_weighted(width, height, |from, to| {
        if path_next(from) == to {
            r1
        } else {
            r0
        }
    })
}

/// Samples `n` symbols: `x_1 ~ init`, then `x_t ~ column x_{t-1}`.
pub fn sample_path<R: Rng + ?Sized>(
    chain: &TransitionMatrix,
    init: &InitialDistribution,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(n);
    if n == 0 {
        return path;
    }
    let mut x = prob::draw(init.probs(), rng);
    path.push(x);
    for _ in 1..n {
        x = prob::draw(chain.column(x), rng);
        path.push(x);
    }
    path
}

/// Laplace-smoothed transition counts. Transitions never cross from one
/// path into the next.
pub fn estimate_empirical_chain(
    space: StateSpace,
    paths: &[Vec<usize>],
    alpha: f64,
) -> Result<TransitionMatrix> {
    if !(alpha >= 0.0) {
        return Err(PutError::Config(format!("smoothing {alpha} must be >= 0")));
    }
    let n = space.size();
    let mut counts = vec![0.0; n * n];
    for path in paths {
        if let Some(&bad) = path.iter().find(|&&s| s >= n) {
            return Err(PutError::Domain(format!("symbol {bad} outside a space of {n} states")));
        }
        for w in path.windows(2) {
            counts[w[0] * n + w[1]] += 1.0;
        }
    }
    for from in 0..n {
        let col = &mut counts[from * n..(from + 1) * n];
        let total: f64 = col.iter().sum::<f64>() + alpha * n as f64;
        if total == 0.0 {
            return Err(PutError::StarvedState { state: from });
        }
        col.iter_mut().for_each(|c| *c = (*c + alpha) / total);
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|c| *c /= s);
    }
    TransitionMatrix::from_columns_flat(space, counts)
}

/// Power iteration from the uniform vector.
pub fn stationary_distribution(chain: &TransitionMatrix, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = chain.size();
    stationary_distribution_from(chain, vec![1.0 / n as f64; n], tol, max_iters)
}

/// Power iteration from an explicit start; residual is the L1 norm of `Qπ - π`.
pub fn stationary_distribution_from(
    chain: &TransitionMatrix,
    start: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let mut pi = start;
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iters {
        let next = chain.propagate(&pi);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            return Ok(pi);
        }
        pi = next;
    }
    Err(PutError::NoConvergence {
        iters: max_iters,
        residual,
    })
}

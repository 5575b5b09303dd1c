//! Distortion matrices `d(x, y)` and instantaneous feasibility sets.

use crate::error::{PutError, Result};
use crate::source::{parse_row, Geometry, StateSpace};
use std::fmt::Write as _;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    GridSteps,
    Kilometers,
    Custom,
}

/// How latitude/longitude centers are turned into kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeoMetric {
    #[default]
    Haversine,
    /// Planar distance after an equirectangular projection about the mean latitude.
    Equirectangular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    space: StateSpace,
    values: Vec<f64>,
    units: Units,
}

impl DistortionMatrix {
    /// Row-major `values[x * n + y]`; requires zero diagonal and finite, nonnegative entries.
    pub fn new(space: StateSpace, values: Vec<f64>, units: Units) -> Result<Self> {
        let n = space.size();
        if values.len() != n * n {
            return Err(PutError::Shape {
                expected: n * n,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PutError::Domain(format!("distortion entry {v} is not finite and nonnegative")));
        }
        if let Some(x) = (0..n).find(|&x| values[x * n + x] != 0.0) {
            return Err(PutError::Domain(format!("d({x},{x}) must be 0")));
        }
        Ok(Self { space, values, units })
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn units(&self) -> Units {
        self.units
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.space.size() + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.space.size();
        &self.values[x * n..(x + 1) * n]
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Hamming distortion: 0 on the diagonal, 1 elsewhere.
    pub fn hamming(n: usize) -> Result<Self> {
        let space = StateSpace::new(n)?;
        let values = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        Self::new(space, values, Units::Custom)
    }

    pub fn to_csv(&self) -> String {
        let labels = self.space.labels();
        let mut s = format!(",{}\n", labels.join(","));
        for (x, label) in labels.iter().enumerate() {
            let vals: Vec<String> = self.row(x).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{label},{}", vals.join(","));
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
            .ok_or_else(|| PutError::Format("empty distortion csv".into()))?;
        let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let n = labels.len();
        let space = StateSpace::new(n)?.with_labels(labels)?;
        let mut values = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (ln, line) in lines {
            let rest = line
                .split_once(',')
                .map(|(_, r)| r)
                .ok_or_else(|| PutError::Parse {
                    line: ln + 1,
                    msg: "missing row label".into(),
                })?;
            let row = parse_row(rest, ln + 1)?;
            if row.len() != n {
                return Err(PutError::Parse {
                    line: ln + 1,
                    msg: format!("expected {n} values, got {}", row.len()),
                });
            }
            values.extend(row);
            rows += 1;
        }
        if rows != n {
            return Err(PutError::Shape { expected: n, got: rows });
        }
        Self::new(space, values, Units::Custom)
    }
}

/// Manhattan distance between grid cells, in grid steps.
pub fn manhattan_grid(width: usize, height: usize) -> Result<DistortionMatrix> {
    let space = StateSpace::grid(width, height)?;
    let n = space.size();
    let mut values = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            let d = (x / width).abs_diff(y / width) + (x % width).abs_diff(y % width);
            values.push(d as f64);
        }
    }
    DistortionMatrix::new(space, values, Units::GridSteps)
}

/// Great-circle distance in kilometers between `(lat, lon)` degree pairs.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn equirectangular_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let mean_lat = ((a.0 + b.0) / 2.0).to_radians();
    let dx = (b.1 - a.1).to_radians() * mean_lat.cos();
    let dy = (b.0 - a.0).to_radians();
    EARTH_RADIUS_KM * (dx * dx + dy * dy).sqrt()
}

pub fn geo_centers(centers: &[(f64, f64)], metric: GeoMetric) -> Result<DistortionMatrix> {
    if let Some(c) = centers
        .iter()
        .find(|(lat, lon)| !(lat.abs() <= 90.0 && lon.abs() <= 180.0))
    {
        return Err(PutError::Domain(format!("invalid coordinate {c:?}")));
    }
    let space = StateSpace::new(centers.len())?.with_geometry(Geometry::Geo(centers.to_vec()))?;
    let dist = match metric {
        GeoMetric::Haversine => haversine_km,
        GeoMetric::Equirectangular => equirectangular_km,
    };
    let mut values = Vec::with_capacity(centers.len() * centers.len());
    for &a in centers {
        for &b in centers {
            values.push(if a == b { 0.0 } else { dist(a, b) });
        }
    }
    DistortionMatrix::new(space, values, Units::Kilometers)
}

/// `{ y : d(x, y) <= max_distortion }`, in ascending order. Always contains `x`.
pub fn feasible_set(d: &DistortionMatrix, x: usize, max_distortion: f64) -> Vec<usize> {
    d.row(x)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= max_distortion)
        .map(|(y, _)| y)
        .collect()
}

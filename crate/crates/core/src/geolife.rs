//! GPS trace ingestion: GeoLife PLT files, DBSCAN stop detection and the
//! per-user Markov model over cluster centers.

use crate::distortion::{geo_centers, haversine_km, DistortionMatrix, GeoMetric};
use crate::error::{PutError, Result};
use crate::source::{estimate_empirical_chain, InitialDistribution, TransitionMatrix};
use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

pub const PLT_HEADER_LINES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

impl GpsPoint {
    pub fn coords(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

pub fn distance_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    haversine_km(a, b) * 1000.0
}

/// Parses one PLT file: six header lines, then
/// `lat,lon,0,altitude_ft,days,date,time` records.
pub fn parse_plt(text: &str) -> Result<Vec<GpsPoint>> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < PLT_HEADER_LINES {
        return Err(PutError::Format(format!(
            "PLT file has {} lines, expected at least {PLT_HEADER_LINES} header lines",
            lines.len()
        )));
    }
    let mut out = Vec::with_capacity(lines.len() - PLT_HEADER_LINES);
    for (i, raw) in lines.iter().enumerate().skip(PLT_HEADER_LINES) {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let err = |msg: String| PutError::Parse { line, msg };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(format!("bad {what} '{s}'")));
        let lat = num(f[0], "latitude")?;
        let lon = num(f[1], "longitude")?;
        num(f[3], "altitude")?;
        num(f[4], "day count")?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(err(format!("coordinate ({lat}, {lon}) out of range")));
        }
        let date = NaiveDate::parse_from_str(f[5], "%Y-%m-%d").map_err(|e| err(format!("bad date '{}': {e}", f[5])))?;
        let time = NaiveTime::parse_from_str(f[6], "%H:%M:%S").map_err(|e| err(format!("bad time '{}': {e}", f[6])))?;
        let timestamp = NaiveDateTime::new(date, time).and_utc().timestamp();
        if let Some(prev) = out.last().map(|p: &GpsPoint| p.timestamp) {
            if timestamp < prev {
                return Err(err("timestamp goes backwards".into()));
            }
        }
        out.push(GpsPoint { lat, lon, timestamp });
    }
    Ok(out)
}

/// Writes points in PLT layout; altitude is recorded as 0.
pub fn write_plt(points: &[GpsPoint]) -> String {
    let mut s = String::from(
        "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n",
    );
    for p in points {
        let dt = chrono::DateTime::from_timestamp(p.timestamp, 0).expect("timestamp in range").naive_utc();
        let days = p.timestamp as f64 / 86_400.0 + 25_569.0;
        let _ = writeln!(
            s,
            "{},{},0,0,{:.10},{},{}",
            p.lat,
            p.lon,
            days,
            dt.format("%Y-%m-%d"),
            dt.format("%H:%M:%S")
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Vec<(f64, f64)>,
    /// Cluster of each input point, `None` for noise.
    pub assignments: Vec<Option<usize>>,
    pub member_counts: Vec<usize>,
    pub eps_m: f64,
    pub min_pts: usize,
}

impl ClusterModel {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    /// Nearest center within `max_m` meters.
    pub fn nearest_center(&self, p: (f64, f64), max_m: f64) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, &c) in self.centers.iter().enumerate() {
            let d = distance_m(p, c);
            if d <= max_m && d < best_d {
                best = Some(i);
                best_d = d;
            }
        }
        best
    }

    /// `id,lat,lon,member_count`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,lat,lon,member_count\n");
        for (i, (c, n)) in self.centers.iter().zip(&self.member_counts).enumerate() {
            let _ = writeln!(s, "{i},{:.7},{:.7},{n}", c.0, c.1);
        }
        s
    }
}

/// Bucket grid whose cells are at least `eps` meters wide everywhere in the data.
struct GridIndex {
    cells: HashMap<(i64, i64), Vec<usize>>,
    dlat: f64,
    dlon: f64,
}

impl GridIndex {
    fn new(points: &[(f64, f64)], eps_m: f64) -> Self {
        let max_abs_lat = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).min(89.0);
        let m_per_deg = crate::distortion::EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;
        // a little slack for the gap between great-circle and parallel distances
        let dlat = 1.01 * eps_m / m_per_deg;
        let dlon = 1.01 * eps_m / (m_per_deg * max_abs_lat.to_radians().cos());
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut idx = Self {
            cells: HashMap::new(),
            dlat,
            dlon,
        };
        for (i, &p) in points.iter().enumerate() {
            cells.entry(idx.cell(p)).or_default().push(i);
        }
        idx.cells = cells;
        idx
    }

    fn cell(&self, p: (f64, f64)) -> (i64, i64) {
        ((p.0 / self.dlat).floor() as i64, (p.1 / self.dlon).floor() as i64)
    }

    /// Indices within `eps_m` of point `i`, ascending, including `i`.
    fn neighbors(&self, points: &[(f64, f64)], i: usize, eps_m: f64) -> Vec<usize> {
        let (ci, cj) = self.cell(points[i]);
        let mut out = Vec::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(v) = self.cells.get(&(ci + di, cj + dj)) {
                    out.extend(v.iter().copied().filter(|&k| distance_m(points[i], points[k]) <= eps_m));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// DBSCAN with great-circle distances. Points are visited in input order and a
/// border point keeps the first cluster that reaches it.
pub fn dbscan(points: &[(f64, f64)], eps_m: f64, min_pts: usize) -> Result<ClusterModel> {
    if !(eps_m > 0.0) || min_pts == 0 {
        return Err(PutError::Config(format!("need eps > 0 and min_pts >= 1, got {eps_m}, {min_pts}")));
    }
    if let Some(p) = points.iter().find(|p| !(p.0.abs() <= 90.0 && p.1.abs() <= 180.0)) {
        return Err(PutError::Domain(format!("invalid coordinate {p:?}")));
    }
    let index = GridIndex::new(points, eps_m);
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut clusters = 0usize;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = index.neighbors(points, i, eps_m);
        if nb.len() < min_pts {
            continue;
        }
        let c = clusters;
        clusters += 1;
        label[i] = Some(c);
        let mut queue = std::collections::VecDeque::from(nb);
        while let Some(j) = queue.pop_front() {
            if label[j].is_none() {
                label[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = index.neighbors(points, j, eps_m);
            if nj.len() >= min_pts {
                queue.extend(nj);
            }
        }
    }
    let mut sums = vec![(0.0, 0.0); clusters];
    let mut counts = vec![0usize; clusters];
    for (p, l) in points.iter().zip(&label) {
        if let Some(c) = *l {
            sums[c].0 += p.0;
            sums[c].1 += p.1;
            counts[c] += 1;
        }
    }
    let centers = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (s.0 / n as f64, s.1 / n as f64))
        .collect();
    Ok(ClusterModel {
        centers,
        assignments: label,
        member_counts: counts,
        eps_m,
        min_pts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolOptions {
    pub stride_s: i64,
    /// Collapse runs of the same cluster into one symbol.
    pub collapse: bool,
}

impl Default for SymbolOptions {
    fn default() -> Self {
        Self {
            stride_s: 60,
            collapse: false,
        }
    }
}

/// Resamples a trajectory every `stride_s` seconds (holding the latest point)
/// and maps each sample to its cluster. `labels[i]` is the clustering label of
/// `trajectory[i]`; noise attaches to the nearest center within `2·eps`, or is dropped.
pub fn to_symbol_sequence(
    trajectory: &[GpsPoint],
    labels: &[Option<usize>],
    model: &ClusterModel,
    opts: SymbolOptions,
) -> Result<Vec<usize>> {
    if opts.stride_s <= 0 {
        return Err(PutError::Config(format!("stride {} must be positive", opts.stride_s)));
    }
    if labels.len() != trajectory.len() {
        return Err(PutError::Shape {
            expected: trajectory.len(),
            got: labels.len(),
        });
    }
    let mut out: Vec<usize> = Vec::new();
    let Some(first) = trajectory.first() else {
        return Ok(out);
    };
    let end = trajectory.last().expect("nonempty").timestamp;
    let mut k = 0usize;
    let mut clock = first.timestamp;
    while clock <= end {
        while k + 1 < trajectory.len() && trajectory[k + 1].timestamp <= clock {
            k += 1;
        }
        let sym = match labels[k] {
            Some(c) if c < model.len() => Some(c),
            Some(c) => {
                return Err(PutError::Domain(format!("label {c} outside {} clusters", model.len())));
            }
            None => model.nearest_center(trajectory[k].coords(), 2.0 * model.eps_m),
        };
        if let Some(s) = sym {
            if !(opts.collapse && out.last() == Some(&s)) {
                out.push(s);
            }
        }
        clock += opts.stride_s;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct UserModel {
    pub chain: TransitionMatrix,
    pub distortion: DistortionMatrix,
    pub init: InitialDistribution,
}

/// Empirical chain (Laplace smoothing `alpha`), great-circle distortion in km
/// between centers and first-symbol frequencies.
pub fn build_user_model(sequences: &[Vec<usize>], model: &ClusterModel, alpha: f64) -> Result<UserModel> {
    let nonempty: Vec<&Vec<usize>> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(PutError::Config("no nonempty symbol sequences".into()));
    }
    let n = model.len();
    let distortion = geo_centers(&model.centers, GeoMetric::Haversine)?;
    let space = distortion.space().clone();
    let chain = estimate_empirical_chain(space, sequences, alpha)?;
    let mut init = vec![0.0; n];
    for s in &nonempty {
        init[s[0]] += 1.0;
    }
    let total = nonempty.len() as f64;
    init.iter_mut().for_each(|v| *v /= total);
    Ok(UserModel {
        chain,
        distortion,
        init: InitialDistribution::new(init)?,
    })
}

/// One trajectory per line, symbols comma separated.
pub fn sequences_csv(sequences: &[Vec<usize>]) -> String {
    let mut s = String::new();
    for seq in sequences {
        let line: Vec<String> = seq.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_sequences_csv(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            if l.trim().is_empty() {
                return Ok(Vec::new());
            }
            l.split(',')
                .map(|v| {
                    v.trim().parse::<usize>().map_err(|_| PutError::Parse {
                        line: i + 1,
                        msg: format!("bad symbol '{v}'"),
                    })
                })
                .collect()
        })
        .collect()
}

/// Parameters of the synthetic GeoLife-format user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticUser {
    pub seed: u64,
    pub stops: usize,
    pub days: usize,
    pub sample_s: i64,
}

impl Default for SyntheticUser {
    fn default() -> Self {
        Self {
            seed: 16,
            stops: 16,
            days: 20,
            sample_s: 10,
        }
    }
}

/// A deterministic stand-in for one GeoLife user: daily trajectories that
/// dwell at a fixed set of stops and travel between them along randomly bent
/// paths. Returns `(file name, PLT contents)` pairs.
pub fn synthetic_user(cfg: &SyntheticUser) -> Result<Vec<(String, String)>> {
    if cfg.stops < 2 || cfg.days == 0 || cfg.sample_s <= 0 {
        return Err(PutError::Config("need at least 2 stops, 1 day and a positive sample period".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = (39.975, 116.33);
    let mut stops: Vec<(f64, f64)> = Vec::with_capacity(cfg.stops);
    while stops.len() < cfg.stops {
        let c = (
            base.0 + rng.random_range(-0.07..0.07),
            base.1 + rng.random_range(-0.09..0.09),
        );
        if stops.iter().all(|&s| distance_m(s, c) > 1500.0) {
            stops.push(c);
        }
    }
    // each stop prefers three successors; stop 0 is home
    let prefs: Vec<Vec<usize>> = (0..cfg.stops)
        .map(|s| {
            let mut v = Vec::new();
            while v.len() < 3 {
                let c = rng.random_range(0..cfg.stops);
                if c != s && !v.contains(&c) {
                    v.push(c);
                }
            }
            v
        })
        .collect();
    let m_per_deg = crate::distortion::EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;
    let jitter = |rng: &mut ChaCha8Rng, p: (f64, f64), sd_m: f64| {
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let r = sd_m * (-2.0 * (1.0 - rng.random::<f64>()).ln()).sqrt();
        (
            p.0 + r * a.sin() / m_per_deg,
            p.1 + r * a.cos() / (m_per_deg * p.0.to_radians().cos()),
        )
    };
    let start_day = NaiveDate::from_ymd_opt(2008, 10, 23).expect("valid date");
    let mut files = Vec::with_capacity(cfg.days);
    for day in 0..cfg.days {
        let mut itinerary = vec![0usize];
        let visits = rng.random_range(3..=6);
        for _ in 0..visits {
            let cur = *itinerary.last().expect("nonempty");
            let next = if rng.random::<f64>() < 0.8 {
                prefs[cur][rng.random_range(0..3)]
            } else {
                rng.random_range(0..cfg.stops)
            };
            if next != cur {
                itinerary.push(next);
            }
        }
        // guarantee every stop is visited at least once over the sample
        let forced = day % cfg.stops;
        if !itinerary.contains(&forced) {
            itinerary.push(forced);
        }
        let date = start_day + chrono::Duration::days(day as i64);
        let mut t = date.and_hms_opt(0, 0, 0).expect("valid time").and_utc().timestamp() + rng.random_range(0..3600);
        let mut pts = Vec::new();
        for (k, &stop) in itinerary.iter().enumerate() {
            let dwell = rng.random_range(600..2400);
            let mut elapsed = 0;
            while elapsed < dwell {
                let (lat, lon) = jitter(&mut rng, stops[stop], 8.0);
                pts.push(GpsPoint { lat, lon, timestamp: t });
                t += cfg.sample_s;
                elapsed += cfg.sample_s;
            }
            if let Some(&next) = itinerary.get(k + 1) {
                let (a, b) = (stops[stop], stops[next]);
                let dist = distance_m(a, b);
                let speed = rng.random_range(8.0..14.0);
                let steps = ((dist / speed) / cfg.sample_s as f64).ceil().max(1.0) as usize;
                let bend = (
                    (a.0 + b.0) / 2.0 + rng.random_range(-0.01..0.01),
                    (a.1 + b.1) / 2.0 + rng.random_range(-0.01..0.01),
                );
                for i in 1..steps {
                    let u = i as f64 / steps as f64;
                    let w = [(1.0 - u) * (1.0 - u), 2.0 * u * (1.0 - u), u * u];
                    let p = (
                        w[0] * a.0 + w[1] * bend.0 + w[2] * b.0,
                        w[0] * a.1 + w[1] * bend.1 + w[2] * b.1,
                    );
                    let (lat, lon) = jitter(&mut rng, p, 15.0);
                    pts.push(GpsPoint { lat, lon, timestamp: t });
                    t += cfg.sample_s;
                }
            }
        }
        let name = format!("{}.plt", date.format("%Y%m%d"));
        files.push((name, write_plt(&pts)));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";

    #[test]
    fn parses_reference_record() {
        let text = format!("{HEADER}39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04\n");
        let p = parse_plt(&text).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].lat, 39.984702);
        assert_eq!(p[0].lon, 116.318417);
        // 2008-10-23 02:53:04 UTC
        assert_eq!(p[0].timestamp, 1_224_730_384);
        // the day-count field agrees with the timestamp
        assert!((p[0].timestamp as f64 / 86400.0 + 25569.0 - 39744.1201851852).abs() < 1e-9);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_plt(HEADER).unwrap().is_empty());
        assert!(matches!(parse_plt("a\nb\n"), Err(PutError::Format(_))));
        let bad = format!("{HEADER}95.0,116.3,0,0,1,2008-10-23,02:53:04\n");
        assert!(matches!(parse_plt(&bad), Err(PutError::Parse { line: 7, .. })));
        let short = format!("{HEADER}39.9,116.3,0\n");
        assert!(matches!(parse_plt(&short), Err(PutError::Parse { line: 7, .. })));
        let back = format!("{HEADER}39.9,116.3,0,0,1,2008-10-23,02:53:04\n39.9,116.3,0,0,1,2008-10-23,02:53:03\n");
        assert!(matches!(parse_plt(&back), Err(PutError::Parse { line: 8, .. })));
    }

    #[test]
    fn plt_round_trip() {
        let pts = vec![
            GpsPoint { lat: 39.9847021, lon: 116.318417, timestamp: 1_224_730_384 },
            GpsPoint { lat: -12.5, lon: -77.25, timestamp: 1_224_730_390 },
        ];
        assert_eq!(parse_plt(&write_plt(&pts)).unwrap(), pts);
    }

    #[test]
    fn dbscan_examples() {
        let same = vec![(39.9, 116.3); 5];
        let m = dbscan(&same, 10.0, 3).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.noise_count(), 0);

        let mut two = vec![(39.9, 116.3); 10];
        two.extend(vec![(39.99, 116.3); 10]);
        let m = dbscan(&two, 500.0, 3).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.member_counts, vec![10, 10]);

        let mut lone = two.clone();
        lone.push((40.5, 117.0));
        let m = dbscan(&lone, 500.0, 3).unwrap();
        assert_eq!(m.assignments[20], None);
        assert!(dbscan(&lone, 0.0, 3).is_err());
    }

    #[test]
    fn border_points_join_the_first_cluster() {
        // chain a - b - c with b a border point reachable from two cores
        let d = 1.0 / 111_195.0; // about one meter of latitude
        let mut pts: Vec<(f64, f64)> = [-9.0, -6.0, -3.0, 0.0].iter().map(|&m| (m * d, 0.0)).collect();
        pts.push((10.0 * d, 0.0));
        pts.extend([20.0, 23.0, 26.0, 29.0].iter().map(|&m| (m * d, 0.0)));
        let m = dbscan(&pts, 10.5, 4).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.assignments[4], Some(0));
        assert_eq!(m.member_counts, vec![5, 4]);
    }

    #[test]
    fn symbols_follow_the_stride() {
        let model = ClusterModel {
            centers: vec![(0.0, 0.0), (1.0, 1.0)],
            assignments: vec![],
            member_counts: vec![1, 1],
            eps_m: 100.0,
            min_pts: 1,
        };
        let traj: Vec<GpsPoint> = (0..10)
            .map(|i| GpsPoint { lat: 0.0, lon: 0.0, timestamp: i * 10 })
            .collect();
        let labels = vec![Some(1); 10];
        let s = to_symbol_sequence(&traj, &labels, &model, SymbolOptions { stride_s: 30, collapse: false }).unwrap();
        assert_eq!(s, vec![1; 4]);
        let wide = to_symbol_sequence(&traj, &labels, &model, SymbolOptions { stride_s: 1000, collapse: false }).unwrap();
        assert_eq!(wide, vec![1]);
        let collapsed = to_symbol_sequence(&traj, &labels, &model, SymbolOptions { stride_s: 10, collapse: true }).unwrap();
        assert_eq!(collapsed, vec![1]);
        // noise near center 0 attaches to it; noise far from both is dropped
        let noise = vec![None; 10];
        assert_eq!(to_symbol_sequence(&traj, &noise, &model, SymbolOptions::default()).unwrap(), vec![0, 0]);
        let far: Vec<GpsPoint> = traj.iter().map(|p| GpsPoint { lat: 0.5, ..*p }).collect();
        assert!(to_symbol_sequence(&far, &noise, &model, SymbolOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn constant_sequence_model() {
        let model = ClusterModel {
            centers: vec![(39.9, 116.3), (39.95, 116.3), (40.0, 116.3)],
            assignments: vec![],
            member_counts: vec![1, 1, 1],
            eps_m: 100.0,
            min_pts: 1,
        };
        let u = build_user_model(&[vec![1; 50]], &model, 1.0).unwrap();
        // column 1 holds 49 self transitions plus smoothing
        assert!((u.chain.get(1, 1) - 50.0 / 52.0).abs() < 1e-12);
        assert!((u.chain.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(u.init.probs(), &[0.0, 1.0, 0.0]);
        assert!((u.distortion.get(0, 2) - 11.119).abs() < 0.01);
        assert!(build_user_model(&[vec![]], &model, 1.0).is_err());
    }

    #[test]
    fn sequences_round_trip() {
        let s = vec![vec![1, 2, 3], vec![], vec![15]];
        assert_eq!(parse_sequences_csv(&sequences_csv(&s)).unwrap(), s);
    }

    #[test]
    fn synthetic_user_is_deterministic() {
        let cfg = SyntheticUser { days: 2, ..SyntheticUser::default() };
        let a = synthetic_user(&cfg).unwrap();
        assert_eq!(a, synthetic_user(&cfg).unwrap());
        assert_eq!(a.len(), 2);
        assert!(!parse_plt(&a[0].1).unwrap().is_empty());
    }
}

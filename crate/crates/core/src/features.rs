//! Per-sample kinematic features and K-means feature analysis.
//!
//! Speeds come from a plain central difference (one-sided at the ends of a
//! run of valid samples); no smoothing is applied, so a linear ramp yields
//! its exact slope. Differencing never crosses an invalid sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaze::GazeRecording;

pub const DEFAULT_WINDOW_MS: f64 = 100.0;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    /// deg/s
    pub speed: Vec<Option<f64>>,
    /// deg/s², magnitude of the speed derivative
    pub accel: Vec<Option<f64>>,
    /// Maximum pairwise distance of positions inside the centered window, deg.
    pub disp: Vec<Option<f64>>,
    pub window_ms: f64,
}

impl FeatureSeries {
    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    pub fn get(&self, feature: Feature) -> &[Option<f64>] {
        match feature {
            Feature::Speed => &self.speed,
            Feature::Acceleration => &self.accel,
            Feature::Displacement => &self.disp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Displacement,
    Speed,
    Acceleration,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Displacement, Feature::Speed, Feature::Acceleration];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Displacement => "disp",
            Feature::Speed => "speed",
            Feature::Acceleration => "accel",
        }
    }
}

/// Maximal runs `[start, end)` of consecutive `true` entries.
pub fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        out.push((start, i));
    }
    out
}

/// Central-difference derivative magnitude of a vector signal inside each
/// run of `mask`, scaled from per-ms to per-second.
#[allow(clippy::needless_range_loop)]
fn differentiate<const D: usize>(t: &[f64], v: &[[f64; D]], mask: &[bool]) -> Vec<Option<f64>> {
    let mut out = vec![None; t.len()];
    for (a, b) in runs(mask) {
        if b - a < 2 {
            continue;
        }
        for i in a..b {
            let (lo, hi) = if i == a {
                (a, a + 1)
            } else if i == b - 1 {
                (b - 2, b - 1)
            } else {
                (i - 1, i + 1)
            };
            let dist = v[hi]
                .iter()
                .zip(&v[lo])
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            out[i] = Some(1000.0 * dist / (t[hi] - t[lo]));
        }
    }
    out
}

/// Speed in deg/s for every sample, `None` where undefined.
pub fn speeds(t: &[f64], pos: &[[f64; 2]], mask: &[bool]) -> Vec<Option<f64>> {
    differentiate(t, pos, mask)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Largest pairwise distance of a point set.
pub fn diameter(points: &[[f64; 2]]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    if points.len() <= 8 {
        let mut best = 0.0f64;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.max(dist2(points[i], points[j]));
            }
        }
        return best.sqrt();
    }
    // Monotone chain hull; the diameter is attained between hull vertices.
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max(dist2(hull[i], hull[j]));
        }
    }
    best.sqrt()
}

/// Windowed displacement restricted to runs of `mask`: for each masked
/// sample, the diameter of the masked positions in the same run whose time
/// lies within `window_ms / 2` of it.
pub fn windowed_displacement(
    t: &[f64],
    pos: &[[f64; 2]],
    mask: &[bool],
    window_ms: f64,
) -> Vec<Option<f64>> {
    let half = window_ms / 2.0;
    let mut out = vec![None; t.len()];
    for (a, b) in runs(mask) {
        let mut lo = a;
        let mut hi = a;
        for i in a..b {
            while t[i] - t[lo] > half {
                lo += 1;
            }
            while hi < b && t[hi] - t[i] <= half {
                hi += 1;
            }
            out[i] = Some(diameter(&pos[lo..hi]));
        }
    }
    out
}

/// Derives speed, acceleration and windowed displacement for a recording.
pub fn compute_features(rec: &GazeRecording, window_ms: f64) -> Result<FeatureSeries> {
    let valid = rec.valid_count();
    if valid < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: valid,
        });
    }
    // also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(window_ms >= 2.0 * rec.period_ms()) {
        return Err(Error::InvalidParameter(format!(
            "window_ms {window_ms} is shorter than two sample periods ({} ms)",
            2.0 * rec.period_ms()
        )));
    }
    let t = rec.times();
    let pos: Vec<[f64; 2]> = rec.samples.iter().map(|s| s.pos()).collect();
    let mask: Vec<bool> = rec.samples.iter().map(|s| s.valid).collect();

    let speed = speeds(&t, &pos, &mask);
    let speed_vals: Vec<[f64; 1]> = speed.iter().map(|s| [s.unwrap_or(0.0)]).collect();
    let speed_mask: Vec<bool> = speed.iter().map(Option::is_some).collect();
    let accel = differentiate(&t, &speed_vals, &speed_mask);
    let disp = windowed_displacement(&t, &pos, &mask, window_ms);
    Ok(FeatureSeries {
        speed,
        accel,
        disp,
        window_ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step, first entry from the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// All points coincide while `k > 1`; centroids are duplicates.
    pub degenerate: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments stop
/// changing or after [`KMEANS_MAX_ITER`] iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterReport> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k must be in 1..={}, got {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidParameter(
            "points must share a dimension and be finite".into(),
        ));
    }
    let degenerate = k > 1 && points.iter().all(|p| p == &points[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
            inertia += d;
        }
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means inertia increased"
            );
        }
        history.push(inertia);
        if !changed || iterations >= KMEANS_MAX_ITER {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let inertia = *history.last().unwrap_or(&0.0);
    Ok(ClusterReport {
        k,
        assignments,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
        degenerate,
    })
}

/// Column-wise z-scores. Constant columns are only centered.
pub fn zscore(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; dim];
    for p in points {
        for ((s, v), m) in sd.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in sd.iter_mut() {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect()
}

/// Between-cluster over within-cluster sum of squares. Zero when either is
/// zero (a single cluster, or a constant feature).
pub fn separation_ratio(points: &[Vec<f64>], report: &ClusterReport) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut sums = vec![vec![0.0; dim]; report.k];
    let mut counts = vec![0usize; report.k];
    for (&a, p) in report.assignments.iter().zip(points) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut between = 0.0;
    let mut within = 0.0;
    for c in 0..report.k {
        if counts[c] == 0 {
            continue;
        }
        let centroid: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        between += counts[c] as f64 * sq_dist(&centroid, &mean);
    }
    for (&a, p) in report.assignments.iter().zip(points) {
        let centroid: Vec<f64> = sums[a].iter().map(|s| s / counts[a] as f64).collect();
        within += sq_dist(p, &centroid);
    }
    if between <= 0.0 || within <= 0.0 {
        return 0.0;
    }
    between / within
}

#[derive(Debug, Clone)]
pub struct FeatureAnalysis {
    pub feature: Feature,
    /// Sample indices that carried a value and were clustered.
    pub indices: Vec<usize>,
    /// Clusters renumbered by ascending centroid.
    pub report: ClusterReport,
    /// Centroids in the feature's own units, ascending.
    pub centroids: Vec<f64>,
    pub separation: f64,
}

/// Clusters one feature (z-scored, 1-D) into `k` groups.
pub fn analyze_feature(
    features: &FeatureSeries,
    feature: Feature,
    k: usize,
    seed: u64,
) -> Result<FeatureAnalysis> {
    let (indices, raw): (Vec<usize>, Vec<Vec<f64>>) = features
        .get(feature)
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, vec![v])))
        .unzip();
    let z = zscore(&raw);
    let mut report = kmeans(&z, k, seed)?;
    let separation = separation_ratio(&z, &report);

    // canonical order: cluster 0 has the smallest centroid
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        report.centroids[a][0]
            .total_cmp(&report.centroids[b][0])
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    report.assignments.iter_mut().for_each(|a| *a = rank[*a]);
    report.centroids = order.iter().map(|&c| report.centroids[c].clone()).collect();

    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&a, p) in report.assignments.iter().zip(&raw) {
        sums[a] += p[0];
        counts[a] += 1;
    }
    let centroids = (0..k)
        .map(|c| {
            if counts[c] > 0 {
                sums[c] / counts[c] as f64
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(FeatureAnalysis {
        feature,
        indices,
        report,
        centroids,
        separation,
    })
}

pub fn analyze_features(
    features: &FeatureSeries,
    k: usize,
    seed: u64,
) -> Result<Vec<FeatureAnalysis>> {
    Feature::ALL
        .iter()
        .map(|&f| analyze_feature(features, f, k, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    pub stage1: Feature,
    pub stage2: Feature,
    pub separation: Vec<(Feature, f64)>,
}

/// The hierarchical classifier filters saccades on speed and splits
/// fixations from pursuits on positional displacement; the per-feature
/// separation statistics are reported alongside that choice.
pub fn select_features(analyses: &[FeatureAnalysis]) -> FeatureSelection {
    FeatureSelection {
        stage1: Feature::Speed,
        stage2: Feature::Displacement,
        separation: analyses.iter().map(|a| (a.feature, a.separation)).collect(),
    }
}

//! Threshold baselines (I-VVT, I-VDT, I-VMP) and the single-stage
//! three-state HMM used for the ablation.

use crate::error::{Error, Result};
use crate::features::{runs, FeatureSeries};
use crate::gaze::{GazeRecording, SampleLabel};
use crate::hierarchy::{merge_events, Event, HierarchicalConfig};
use crate::hmm::{fit, is_degenerate, FitResult, GaussianHmm};

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    /// I-VVT thresholds, deg/s.
    pub v_low: f64,
    pub v_high: f64,
    /// Saccade threshold shared by I-VDT and I-VMP, deg/s.
    pub v_sac: f64,
    /// I-DT dispersion limit, (max-min x) + (max-min y), deg.
    pub dispersion_deg: f64,
    pub idt_window_ms: f64,
    pub direction_window_ms: f64,
    /// I-VMP mean resultant length above which a window is pursuit.
    pub similarity_cut: f64,
    /// Initial means of the three-state HMM as percentiles of speed.
    pub hmm3_percentiles: Vec<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            v_low: 5.0,
            v_high: 70.0,
            v_sac: 70.0,
            dispersion_deg: 1.0,
            idt_window_ms: 100.0,
            direction_window_ms: 100.0,
            similarity_cut: 0.5,
            hmm3_percentiles: vec![25.0, 90.0, 99.5],
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        for (name, v) in [
            ("v_low", self.v_low),
            ("v_high", self.v_high),
            ("v_sac", self.v_sac),
            ("dispersion_deg", self.dispersion_deg),
            ("idt_window_ms", self.idt_window_ms),
            ("direction_window_ms", self.direction_window_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.v_high < self.v_low {
            return bad(format!(
                "v_high ({}) must not be below v_low ({})",
                self.v_high, self.v_low
            ));
        }
        if !(0.0..=1.0).contains(&self.similarity_cut) {
            return bad(format!(
                "similarity_cut must lie in [0, 1], got {}",
                self.similarity_cut
            ));
        }
        if self.hmm3_percentiles.len() != 3
            || self
                .hmm3_percentiles
                .iter()
                .any(|p| !(0.0..=100.0).contains(p))
        {
            return bad("hmm3_percentiles must be three values in [0, 100]".into());
        }
        Ok(())
    }
}

/// Velocity-velocity threshold identification.
pub fn ivvt(features: &FeatureSeries, cfg: &ThresholdConfig) -> Vec<SampleLabel> {
    features
        .speed
        .iter()
        .map(|s| match *s {
            None => SampleLabel::Noise,
            Some(v) if v > cfg.v_high => SampleLabel::Saccade,
            Some(v) if v < cfg.v_low => SampleLabel::Fixation,
            Some(_) => SampleLabel::Pursuit,
        })
        .collect()
}

/// Saccades by speed; everything else starts as unresolved (`None`).
fn velocity_split(features: &FeatureSeries, v_sac: f64) -> Vec<Option<SampleLabel>> {
    features
        .speed
        .iter()
        .map(|s| match *s {
            None => Some(SampleLabel::Noise),
            Some(v) if v > v_sac => Some(SampleLabel::Saccade),
            Some(_) => None,
        })
        .collect()
}

fn window_samples(window_ms: f64, rec: &GazeRecording) -> usize {
    ((window_ms / rec.period_ms()).round() as usize).max(2)
}

fn check_len(features: &FeatureSeries, rec: &GazeRecording) -> Result<()> {
    if features.len() != rec.len() {
        return Err(Error::LengthMismatch {
            what: "features",
            got: features.len(),
            expected: rec.len(),
        });
    }
    Ok(())
}

/// (max-min x) + (max-min y) over a slice of positions.
pub fn dispersion(pos: &[[f64; 2]]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pos {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (hi[0] - lo[0]) + (hi[1] - lo[1])
}

/// Classic I-DT over one run of positions: returns `true` for samples that
/// belong to a fixation window.
pub fn idt_run(pos: &[[f64; 2]], window: usize, max_dispersion: f64) -> Vec<bool> {
    let n = pos.len();
    let mut fix = vec![false; n];
    let mut i = 0;
    while i + window <= n {
        let mut j = i + window;
        if dispersion(&pos[i..j]) > max_dispersion {
            i += 1;
            continue;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &pos[i..j] {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        while j < n {
            let p = pos[j];
            let nlo = [lo[0].min(p[0]), lo[1].min(p[1])];
            let nhi = [hi[0].max(p[0]), hi[1].max(p[1])];
            if (nhi[0] - nlo[0]) + (nhi[1] - nlo[1]) > max_dispersion {
                break;
            }
            lo = nlo;
            hi = nhi;
            j += 1;
        }
        fix[i..j].fill(true);
        i = j;
    }
    fix
}

/// Velocity-dispersion threshold identification: I-VT removes saccades, then
/// I-DT separates fixations (compact windows) from pursuits.
pub fn ivdt(
    features: &FeatureSeries,
    rec: &GazeRecording,
    cfg: &ThresholdConfig,
) -> Result<Vec<SampleLabel>> {
    check_len(features, rec)?;
    let split = velocity_split(features, cfg.v_sac);
    let window = window_samples(cfg.idt_window_ms, rec);
    let pos: Vec<[f64; 2]> = rec.samples.iter().map(|s| s.pos()).collect();
    let mask: Vec<bool> = split.iter().map(Option::is_none).collect();
    let mut out: Vec<SampleLabel> = split
        .iter()
        .map(|l| l.unwrap_or(SampleLabel::Pursuit))
        .collect();
    for (a, b) in runs(&mask) {
        for (k, is_fix) in idt_run(&pos[a..b], window, cfg.dispersion_deg)
            .into_iter()
            .enumerate()
        {
            if is_fix {
                out[a + k] = SampleLabel::Fixation;
            }
        }
    }
    Ok(out)
}

/// Length of the mean of the unit vectors of `steps`. Zero-length steps
/// carry no direction and are skipped; no usable steps gives 0.
pub fn mean_resultant_length(steps: &[[f64; 2]]) -> f64 {
    let mut sum = [0.0; 2];
    let mut count = 0usize;
    for s in steps {
        let len = s[0].hypot(s[1]);
        if len > 0.0 {
            sum[0] += s[0] / len;
            sum[1] += s[1] / len;
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    sum[0].hypot(sum[1]) / count as f64
}

/// Velocity-movement-pattern identification: I-VT removes saccades, then
/// samples whose surrounding movement directions agree (mean resultant
/// length above `similarity_cut`) are pursuits.
pub fn ivmp(
    features: &FeatureSeries,
    rec: &GazeRecording,
    cfg: &ThresholdConfig,
) -> Result<Vec<SampleLabel>> {
    check_len(features, rec)?;
    let split = velocity_split(features, cfg.v_sac);
    let half = cfg.direction_window_ms / 2.0;
    let mask: Vec<bool> = split.iter().map(Option::is_none).collect();
    let mut out: Vec<SampleLabel> = split
        .iter()
        .map(|l| l.unwrap_or(SampleLabel::Fixation))
        .collect();
    let s = &rec.samples;
    for (a, b) in runs(&mask) {
        // prefix sums of unit step vectors; step k joins samples k and k+1
        let mut pre = vec![([0.0f64; 2], 0usize); b - a];
        for k in a..b - 1 {
            let (dx, dy) = (s[k + 1].x - s[k].x, s[k + 1].y - s[k].y);
            let len = dx.hypot(dy);
            let (mut acc, mut n) = pre[k - a];
            if len > 0.0 {
                acc[0] += dx / len;
                acc[1] += dy / len;
                n += 1;
            }
            pre[k - a + 1] = (acc, n);
        }
        let mut lo = a;
        let mut hi = a;
        for i in a..b {
            while s[i].t - s[lo].t > half {
                lo += 1;
            }
            while hi + 1 < b && s[hi + 1].t - s[i].t <= half {
                hi += 1;
            }
            // steps lo..hi lie inside the window [lo, hi]
            let (u1, n1) = pre[hi - a];
            let (u0, n0) = pre[lo - a];
            let count = n1 - n0;
            let r = if count == 0 {
                0.0
            } else {
                (u1[0] - u0[0]).hypot(u1[1] - u0[1]) / count as f64
            };
            if r > cfg.similarity_cut {
                out[i] = SampleLabel::Pursuit;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeStateResult {
    /// Labels after the merge function.
    pub labels: Vec<SampleLabel>,
    pub events: Vec<Event>,
    /// Labels straight from the decoded state path.
    pub raw_labels: Vec<SampleLabel>,
    pub fit: Option<FitResult>,
    /// States ordered by fitted mean: fixation, pursuit, saccade.
    pub state_order: [usize; 3],
    pub starved: Vec<usize>,
    /// Speed had zero variance; nothing was fitted and all samples are
    /// fixations.
    pub degenerate: bool,
}

/// Single-stage ablation: one 3-state Gaussian HMM on speed, states mapped by
/// ascending mean to fixation, pursuit and saccade, then merged.
pub fn three_state_hmm(
    features: &FeatureSeries,
    rec: &GazeRecording,
    thresholds: &ThresholdConfig,
    hier: &HierarchicalConfig,
) -> Result<ThreeStateResult> {
    check_len(features, rec)?;
    let idx: Vec<usize> = (0..features.len())
        .filter(|&i| features.speed[i].is_some())
        .collect();
    let obs: Vec<f64> = idx.iter().map(|&i| features.speed[i].unwrap()).collect();
    let mut raw: Vec<SampleLabel> = features
        .speed
        .iter()
        .map(|s| {
            if s.is_some() {
                SampleLabel::Fixation
            } else {
                SampleLabel::Noise
            }
        })
        .collect();

    let degenerate = is_degenerate(&obs);
    let mut state_order = [0, 1, 2];
    let mut fitted = None;
    let mut starved = Vec::new();
    if !degenerate {
        let init = GaussianHmm::from_percentiles(
            &obs,
            &thresholds.hmm3_percentiles,
            hier.self_transition,
        )?;
        let f = fit(&init, &obs, hier.epochs1)?;
        let means = f.model.means();
        state_order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
        let mut kind = [SampleLabel::Fixation; 3];
        kind[state_order[1]] = SampleLabel::Pursuit;
        kind[state_order[2]] = SampleLabel::Saccade;
        for (&i, &s) in idx.iter().zip(&f.path) {
            raw[i] = kind[s];
        }
        starved = f.starved.clone();
        fitted = Some(f);
    }
    let merged = merge_events(&raw, rec, hier)?;
    Ok(ThreeStateResult {
        labels: merged.labels,
        events: merged.events,
        raw_labels: raw,
        fit: fitted,
        state_order,
        starved,
        degenerate,
    })
}

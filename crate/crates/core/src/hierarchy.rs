//! Two-stage hierarchical classification and the event merge function.
//!
//! Stage 1 fits a two-state Gaussian HMM to sample speed and keeps the
//! faster state as saccades. Stage 2 fits a second two-state HMM to the
//! windowed positional displacement of the remaining samples and keeps the
//! more dispersed state as smooth pursuit; speed is then reused to fine-tune
//! pursuit labels. Finally runs of labels are turned into events.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::features::{compute_features, runs, windowed_displacement, FeatureSeries};
use crate::gaze::{GazeRecording, SampleLabel};
use crate::hmm::{fit, is_degenerate, FitResult, GaussianHmm};

/// How the stage-1 emission means are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Init {
    /// Means of the optimal two-means split of the speeds.
    TwoMeans,
    /// `stage1_percentiles` of the speeds.
    Percentiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalConfig {
    pub epochs1: usize,
    pub epochs2: usize,
    /// Pursuit samples faster than this (deg/s) become saccades.
    pub finetune_t: f64,
    pub finetune_high: bool,
    /// Pursuit samples slower than `fixation_speed_ceiling` become fixations.
    pub finetune_low: bool,
    pub fixation_speed_ceiling: f64,
    pub merge_gap_ms: f64,
    pub merge_dist_deg: f64,
    /// Displacement window for stage 2.
    pub window_ms: f64,
    pub min_fixation_ms: f64,
    pub min_pursuit_ms: f64,
    pub min_saccade_ms: f64,
    pub stage1_init: Stage1Init,
    pub stage1_percentiles: Vec<f64>,
    pub stage2_percentiles: Vec<f64>,
    /// Stage-1 saccade runs whose peak speed (deg/s) stays below this are
    /// returned to the non-saccade set. Zero disables the check.
    pub saccade_min_peak: f64,
    pub self_transition: f64,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self {
            epochs1: 3,
            epochs2: 3,
            finetune_t: 100.0,
            finetune_high: true,
            finetune_low: true,
            fixation_speed_ceiling: 1.5,
            merge_gap_ms: 75.0,
            merge_dist_deg: 0.5,
            window_ms: 100.0,
            min_fixation_ms: 50.0,
            min_pursuit_ms: 50.0,
            min_saccade_ms: 10.0,
            stage1_init: Stage1Init::TwoMeans,
            stage1_percentiles: vec![25.0, 90.0],
            stage2_percentiles: vec![25.0, 90.0],
            saccade_min_peak: 30.0,
            self_transition: 0.95,
        }
    }
}

impl HierarchicalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.epochs1 == 0 || self.epochs2 == 0 {
            return bad("epochs must be at least 1");
        }
        let positive = [
            ("finetune_t", self.finetune_t),
            ("fixation_speed_ceiling", self.fixation_speed_ceiling),
            ("merge_gap_ms", self.merge_gap_ms),
            ("merge_dist_deg", self.merge_dist_deg),
            ("window_ms", self.window_ms),
            ("min_fixation_ms", self.min_fixation_ms),
            ("min_pursuit_ms", self.min_pursuit_ms),
            ("min_saccade_ms", self.min_saccade_ms),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        for p in [&self.stage1_percentiles, &self.stage2_percentiles] {
            if p.len() != 2 || p.iter().any(|v| !(0.0..=100.0).contains(v)) {
                return bad("stage percentiles must be two values in [0, 100]");
            }
        }
        if !(self.saccade_min_peak.is_finite() && self.saccade_min_peak >= 0.0) {
            return bad("saccade_min_peak must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.self_transition) {
            return bad("self_transition must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn min_duration(&self, kind: SampleLabel) -> f64 {
        match kind {
            SampleLabel::Fixation => self.min_fixation_ms,
            SampleLabel::Pursuit => self.min_pursuit_ms,
            SampleLabel::Saccade => self.min_saccade_ms,
            SampleLabel::Noise => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage1Label {
    Saccade,
    NonSaccade,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageFit {
    pub fit: FitResult,
    /// State index mapped to the faster (stage 1) or more dispersed
    /// (stage 2) class.
    pub high_state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub labels: Vec<Stage1Label>,
    /// `None` when the speed signal was degenerate and no model was fitted.
    pub fit: Option<StageFit>,
    pub degenerate: bool,
}

impl Stage1Result {
    pub fn saccade_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| **l == Stage1Label::Saccade)
            .count()
    }
}

/// Fits a 2-state HMM to the gathered observations and returns the decoded
/// path together with the index of the state with the larger mean. Without
/// percentiles the means start at the two-means split.
fn fit_two_state(
    obs: &[f64],
    init: Option<&[f64]>,
    self_prob: f64,
    epochs: usize,
) -> Result<Option<StageFit>> {
    if is_degenerate(obs) {
        return Ok(None);
    }
    let init = match init {
        Some(p) => GaussianHmm::from_percentiles(obs, p, self_prob)?,
        None => GaussianHmm::from_two_means(obs, self_prob)?,
    };
    let fit = fit(&init, obs, epochs)?;
    let means = fit.model.means();
    let high_state = if means[1] > means[0] { 1 } else { 0 };
    Ok(Some(StageFit { fit, high_state }))
}

/// Rough classification: separates saccades from everything else on speed.
pub fn stage1_filter_saccades(
    features: &FeatureSeries,
    cfg: &HierarchicalConfig,
) -> Result<Stage1Result> {
    let idx: Vec<usize> = (0..features.len())
        .filter(|&i| features.speed[i].is_some())
        .collect();
    let obs: Vec<f64> = idx.iter().map(|&i| features.speed[i].unwrap()).collect();
    let mut labels: Vec<Stage1Label> = features
        .speed
        .iter()
        .map(|s| {
            if s.is_some() {
                Stage1Label::NonSaccade
            } else {
                Stage1Label::Noise
            }
        })
        .collect();

    let stage1_init = match cfg.stage1_init {
        Stage1Init::TwoMeans => None,
        Stage1Init::Percentiles => Some(cfg.stage1_percentiles.as_slice()),
    };
    let fit = fit_two_state(&obs, stage1_init, cfg.self_transition, cfg.epochs1)?;
    if let Some(f) = &fit {
        for (&i, &s) in idx.iter().zip(&f.fit.path) {
            if s == f.high_state {
                labels[i] = Stage1Label::Saccade;
            }
        }
        // a broad saccade state can swallow fast pursuit; real saccades peak
        // well above pursuit speeds
        let mask: Vec<bool> = labels.iter().map(|l| *l == Stage1Label::Saccade).collect();
        for (a, b) in runs(&mask) {
            let peak = features.speed[a..b]
                .iter()
                .flatten()
                .fold(0.0f64, |m, &v| m.max(v));
            if peak < cfg.saccade_min_peak {
                labels[a..b].fill(Stage1Label::NonSaccade);
            }
        }
    }
    Ok(Stage1Result {
        labels,
        degenerate: fit.is_none(),
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Result {
    pub labels: Vec<SampleLabel>,
    pub fit: Option<StageFit>,
    /// Displacement of each non-saccade sample within its non-saccade run.
    pub disp: Vec<Option<f64>>,
    pub finetuned_to_saccade: usize,
    pub finetuned_to_fixation: usize,
}

/// Refined classification: splits non-saccade samples into fixations and
/// pursuits on positional displacement, then fine-tunes pursuit labels by
/// speed. Displacement windows never reach across a stage-1 saccade.
pub fn stage2_split_fix_pursuit(
    rec: &GazeRecording,
    features: &FeatureSeries,
    stage1: &Stage1Result,
    cfg: &HierarchicalConfig,
) -> Result<Stage2Result> {
    let n = rec.len();
    if features.len() != n || stage1.labels.len() != n {
        return Err(Error::LengthMismatch {
            what: "features/stage-1 labels",
            got: features.len().min(stage1.labels.len()),
            expected: n,
        });
    }
    let t = rec.times();
    let pos: Vec<[f64; 2]> = rec.samples.iter().map(|s| s.pos()).collect();
    let mask: Vec<bool> = stage1
        .labels
        .iter()
        .map(|l| *l == Stage1Label::NonSaccade)
        .collect();
    let disp = windowed_displacement(&t, &pos, &mask, cfg.window_ms);

    let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let obs: Vec<f64> = idx.iter().map(|&i| disp[i].unwrap()).collect();

    let mut labels: Vec<SampleLabel> = stage1
        .labels
        .iter()
        .map(|l| match l {
            Stage1Label::Saccade => SampleLabel::Saccade,
            Stage1Label::NonSaccade => SampleLabel::Fixation,
            Stage1Label::Noise => SampleLabel::Noise,
        })
        .collect();

    let fit = fit_two_state(
        &obs,
        Some(&cfg.stage2_percentiles),
        cfg.self_transition,
        cfg.epochs2,
    )?;
    if let Some(f) = &fit {
        for (&i, &s) in idx.iter().zip(&f.fit.path) {
            if s == f.high_state {
                labels[i] = SampleLabel::Pursuit;
            }
        }
    }

    let mut to_sac = 0;
    let mut to_fix = 0;
    for (label, speed) in labels.iter_mut().zip(&features.speed) {
        let (SampleLabel::Pursuit, Some(v)) = (*label, *speed) else {
            continue;
        };
        if cfg.finetune_high && v > cfg.finetune_t {
            *label = SampleLabel::Saccade;
            to_sac += 1;
        } else if cfg.finetune_low && v < cfg.fixation_speed_ceiling {
            *label = SampleLabel::Fixation;
            to_fix += 1;
        }
    }

    Ok(Stage2Result {
        labels,
        fit,
        disp,
        finetuned_to_saccade: to_sac,
        finetuned_to_fixation: to_fix,
    })
}

/// A labeled movement spanning samples `start..end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub kind: SampleLabel,
    pub start: usize,
    pub end: usize,
    /// ms, time of the first sample.
    pub onset: f64,
    /// ms, time of the sample after the last one (or one period past the
    /// last sample at the end of the recording).
    pub offset: f64,
    pub centroid: [f64; 2],
    /// Distance between the positions at onset and offset, deg.
    pub amplitude: f64,
    /// Path length over duration, deg/s.
    pub mean_speed: f64,
}

impl Event {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub labels: Vec<SampleLabel>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
struct Seg {
    kind: SampleLabel,
    start: usize,
    end: usize,
    sum: [f64; 2],
    n_valid: usize,
    prev: Option<usize>,
    next: Option<usize>,
}

impl Seg {
    fn centroid(&self) -> [f64; 2] {
        let n = self.n_valid as f64;
        [self.sum[0] / n, self.sum[1] / n]
    }
}

struct Timeline<'a> {
    rec: &'a GazeRecording,
    segs: Vec<Seg>,
    alive: Vec<bool>,
}

impl<'a> Timeline<'a> {
    fn new(labels: &[SampleLabel], rec: &'a GazeRecording) -> Self {
        let mut segs: Vec<Seg> = Vec::new();
        let mut i = 0;
        while i < labels.len() {
            let start = i;
            while i < labels.len() && labels[i] == labels[start] {
                i += 1;
            }
            let k = segs.len();
            segs.push(Seg {
                kind: labels[start],
                start,
                end: i,
                sum: [0.0; 2],
                n_valid: 0,
                prev: k.checked_sub(1),
                next: None,
            });
            if k > 0 {
                segs[k - 1].next = Some(k);
            }
        }
        let mut tl = Self {
            rec,
            alive: vec![true; segs.len()],
            segs,
        };
        for k in 0..tl.segs.len() {
            tl.recount(k);
        }
        tl
    }

    fn recount(&mut self, k: usize) {
        let (mut sum, mut n) = ([0.0; 2], 0);
        for s in &self.rec.samples[self.segs[k].start..self.segs[k].end] {
            if s.valid {
                sum[0] += s.x;
                sum[1] += s.y;
                n += 1;
            }
        }
        self.segs[k].sum = sum;
        self.segs[k].n_valid = n;
    }

    fn onset(&self, k: usize) -> f64 {
        self.rec.samples[self.segs[k].start].t
    }

    fn offset(&self, k: usize) -> f64 {
        sample_offset(self.rec, self.segs[k].end)
    }

    fn duration(&self, k: usize) -> f64 {
        self.offset(k) - self.onset(k)
    }

    /// Replaces segments `a..=b` (linked) by a single segment of `kind`.
    fn fuse(&mut self, a: usize, b: usize, kind: SampleLabel) {
        let mut k = self.segs[a].next;
        while let Some(j) = k {
            if j == b {
                break;
            }
            k = self.segs[j].next;
            self.alive[j] = false;
        }
        if a != b {
            self.alive[b] = false;
            self.segs[a].end = self.segs[b].end;
            self.segs[a].next = self.segs[b].next;
            if let Some(n) = self.segs[b].next {
                self.segs[n].prev = Some(a);
            }
        }
        self.segs[a].kind = kind;
        self.recount(a);
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        let first = (0..self.segs.len()).find(|&k| self.alive[k]);
        std::iter::successors(first, move |&k| self.segs[k].next)
    }
}

/// Time at which the sample at `end - 1` stops, i.e. the onset of sample
/// `end`.
fn sample_offset(rec: &GazeRecording, end: usize) -> f64 {
    if end < rec.len() {
        rec.samples[end].t
    } else {
        rec.samples[end - 1].t + rec.period_ms()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Absorbs events shorter than their kind's minimum duration into the
/// longer neighbor, shortest first. Noise is never absorbed and never
/// absorbs.
fn absorb_short(tl: &mut Timeline<'_>, cfg: &HierarchicalConfig) {
    loop {
        let mut best: Option<(f64, usize)> = None;
        for k in tl.live() {
            let kind = tl.segs[k].kind;
            if kind == SampleLabel::Noise {
                continue;
            }
            let d = tl.duration(k);
            if d >= cfg.min_duration(kind) {
                continue;
            }
            let has_neighbor = [tl.segs[k].prev, tl.segs[k].next]
                .into_iter()
                .flatten()
                .any(|j| tl.segs[j].kind != SampleLabel::Noise);
            if has_neighbor && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, k));
            }
        }
        let Some((_, k)) = best else { break };

        let usable = |j: Option<usize>| j.filter(|&j| tl.segs[j].kind != SampleLabel::Noise);
        let (prev, next) = (usable(tl.segs[k].prev), usable(tl.segs[k].next));
        let target = match (prev, next) {
            (Some(p), Some(n)) => {
                if tl.duration(n) > tl.duration(p) {
                    n
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => unreachable!(),
        };
        let kind = tl.segs[target].kind;
        // coalesce with every adjacent segment that now shares the kind
        let mut a = k;
        while let Some(p) = tl.segs[a].prev.filter(|&p| tl.segs[p].kind == kind) {
            a = p;
        }
        let mut b = k;
        while let Some(n) = tl.segs[b].next.filter(|&n| tl.segs[n].kind == kind) {
            b = n;
        }
        tl.fuse(a, b, kind);
    }
}

/// The next same-kind segment reachable from `k` within the merge criteria.
fn merge_candidate(tl: &Timeline<'_>, k: usize, cfg: &HierarchicalConfig) -> Option<(f64, usize)> {
    let kind = tl.segs[k].kind;
    if kind == SampleLabel::Noise {
        return None;
    }
    let off = tl.offset(k);
    let mut q = tl.segs[k].next;
    while let Some(j) = q {
        let seg = &tl.segs[j];
        if seg.kind == SampleLabel::Noise {
            return None;
        }
        let gap = tl.onset(j) - off;
        if gap > cfg.merge_gap_ms {
            return None;
        }
        if seg.kind == kind {
            let ok = seg.n_valid > 0
                && tl.segs[k].n_valid > 0
                && dist(seg.centroid(), tl.segs[k].centroid()) <= cfg.merge_dist_deg;
            return ok.then_some((gap, j));
        }
        q = seg.next;
    }
    None
}

/// Repeatedly merges the closest-in-time admissible pair of same-kind
/// events. Because the order of merges does not depend on `merge_gap_ms`
/// (it only decides where the sequence stops), a larger gap threshold can
/// only add merges.
fn merge_gaps(tl: &mut Timeline<'_>, cfg: &HierarchicalConfig) {
    let key = |gap: f64, start: usize, k: usize, j: usize| (gap.to_bits(), start, k, j);
    let mut queue = BTreeSet::new();
    let mut cand: Vec<Option<(u64, usize, usize, usize)>> = vec![None; tl.segs.len()];
    for k in tl.live().collect::<Vec<_>>() {
        if let Some((gap, j)) = merge_candidate(tl, k, cfg) {
            let c = key(gap, tl.segs[k].start, k, j);
            queue.insert(c);
            cand[k] = Some(c);
        }
    }
    while let Some(c) = queue.pop_first() {
        let (_, _, k, j) = c;
        cand[k] = None;
        // drop candidates owned by segments that are about to disappear
        let mut q = tl.segs[k].next;
        while let Some(m) = q {
            if let Some(old) = cand[m].take() {
                queue.remove(&old);
            }
            if m == j {
                break;
            }
            q = tl.segs[m].next;
        }
        let kind = tl.segs[k].kind;
        let merged_onset = tl.onset(k);
        tl.fuse(k, j, kind);

        // refresh k and every earlier segment whose scan can reach it
        let mut r = Some(k);
        while let Some(m) = r {
            if m != k && merged_onset - tl.offset(m) > cfg.merge_gap_ms {
                break;
            }
            if let Some(old) = cand[m].take() {
                queue.remove(&old);
            }
            if let Some((gap, target)) = merge_candidate(tl, m, cfg) {
                let c = key(gap, tl.segs[m].start, m, target);
                queue.insert(c);
                cand[m] = Some(c);
            }
            if m != k && tl.segs[m].kind == SampleLabel::Noise {
                break;
            }
            r = tl.segs[m].prev;
        }
    }
}

fn first_valid(rec: &GazeRecording, range: std::ops::Range<usize>) -> Option<usize> {
    range.into_iter().find(|&i| rec.samples[i].valid)
}

fn build_event(rec: &GazeRecording, kind: SampleLabel, start: usize, end: usize) -> Event {
    let onset = rec.samples[start].t;
    let offset = sample_offset(rec, end);
    let (mut sum, mut n) = ([0.0; 2], 0usize);
    for s in &rec.samples[start..end] {
        if s.valid {
            sum[0] += s.x;
            sum[1] += s.y;
            n += 1;
        }
    }
    let centroid = [sum[0] / n as f64, sum[1] / n as f64];

    let stop = if end < rec.len() && rec.samples[end].valid {
        end + 1
    } else {
        end
    };
    let mut path = 0.0;
    let mut last: Option<[f64; 2]> = None;
    for s in &rec.samples[start..stop] {
        if !s.valid {
            continue;
        }
        if let Some(p) = last {
            path += dist(p, s.pos());
        }
        last = Some(s.pos());
    }
    let amplitude = match (first_valid(rec, start..stop), last) {
        (Some(a), Some(b)) => dist(rec.samples[a].pos(), b),
        _ => 0.0,
    };
    Event {
        kind,
        start,
        end,
        onset,
        offset,
        centroid,
        amplitude,
        mean_speed: 1000.0 * path / (offset - onset),
    }
}

/// Run-length encodes labels into events without any merging. Noise runs
/// and runs without a single valid sample are skipped.
pub fn events_from_labels(labels: &[SampleLabel], rec: &GazeRecording) -> Vec<Event> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let start = i;
        while i < labels.len() && labels[i] == labels[start] {
            i += 1;
        }
        if labels[start] != SampleLabel::Noise && first_valid(rec, start..i).is_some() {
            out.push(build_event(rec, labels[start], start, i));
        }
    }
    out
}

/// Turns per-sample labels into complete events: short events are absorbed
/// into their dominant neighbor, then same-kind events separated by at most
/// `merge_gap_ms` with centroids at most `merge_dist_deg` apart are joined
/// (the samples in between adopt the merged kind).
pub fn merge_events(
    labels: &[SampleLabel],
    rec: &GazeRecording,
    cfg: &HierarchicalConfig,
) -> Result<MergeResult> {
    if labels.len() != rec.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: rec.len(),
        });
    }
    if labels.is_empty() {
        return Ok(MergeResult {
            labels: Vec::new(),
            events: Vec::new(),
        });
    }
    let mut tl = Timeline::new(labels, rec);
    absorb_short(&mut tl, cfg);
    merge_gaps(&mut tl, cfg);

    let mut out = vec![SampleLabel::Noise; labels.len()];
    for k in tl.live() {
        let seg = &tl.segs[k];
        out[seg.start..seg.end].fill(seg.kind);
    }
    let events = events_from_labels(&out, rec);
    Ok(MergeResult {
        labels: out,
        events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<SampleLabel>,
    pub events: Vec<Event>,
    pub features: Option<FeatureSeries>,
    pub stage1: Option<Stage1Result>,
    pub stage2: Option<Stage2Result>,
}

/// End-to-end hierarchical classification of one recording.
pub fn classify(rec: &GazeRecording, cfg: &HierarchicalConfig) -> Result<Classification> {
    cfg.validate()?;
    if rec.valid_count() == 0 {
        return Ok(Classification {
            labels: vec![SampleLabel::Noise; rec.len()],
            events: Vec::new(),
            features: None,
            stage1: None,
            stage2: None,
        });
    }
    let features = compute_features(rec, cfg.window_ms)?;
    let stage1 = stage1_filter_saccades(&features, cfg)?;
    let stage2 = stage2_split_fix_pursuit(rec, &features, &stage1, cfg)?;
    let merged = merge_events(&stage2.labels, rec, cfg)?;
    Ok(Classification {
        labels: merged.labels,
        events: merged.events,
        features: Some(features),
        stage1: Some(stage1),
        stage2: Some(stage2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::GazeSample;

    fn rec_from(pos: &[(f64, f64)]) -> GazeRecording {
        let samples = pos
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GazeSample::new(i as f64, x, y))
            .collect();
        GazeRecording::new(samples, 1000.0).unwrap()
    }

    fn labels_of(runs: &[(SampleLabel, usize)]) -> Vec<SampleLabel> {
        runs.iter()
            .flat_map(|&(l, n)| std::iter::repeat_n(l, n))
            .collect()
    }

    use SampleLabel::{Fixation as F, Noise as N, Pursuit as P, Saccade as S};

    #[test]
    fn default_merge_thresholds() {
        let cfg = HierarchicalConfig::default();
        assert_eq!(cfg.merge_gap_ms, 75.0);
        assert_eq!(cfg.merge_dist_deg, 0.5);
        assert_eq!((cfg.epochs1, cfg.epochs2), (3, 3));
    }

    fn speed_series(v: &[f64]) -> FeatureSeries {
        let n = v.len();
        FeatureSeries {
            speed: v.iter().map(|x| Some(*x)).collect(),
            accel: vec![Some(0.0); n],
            disp: vec![Some(0.0); n],
            window_ms: 100.0,
        }
    }

    #[test]
    fn slow_saccade_runs_are_dropped() {
        let mut v = vec![2.0; 400];
        v[100..140].fill(250.0);
        // a plateau the broad fast state absorbs, but far below saccade speeds
        for (k, x) in v[250..330].iter_mut().enumerate() {
            *x = 22.0 + (k % 3) as f64;
        }
        let cfg = HierarchicalConfig {
            saccade_min_peak: 0.0,
            ..Default::default()
        };
        let loose = stage1_filter_saccades(&speed_series(&v), &cfg).unwrap();
        let strict =
            stage1_filter_saccades(&speed_series(&v), &HierarchicalConfig::default()).unwrap();
        assert!(strict.labels[100..140]
            .iter()
            .all(|l| *l == Stage1Label::Saccade));
        assert_eq!(strict.saccade_count(), 40);
        assert!(loose.saccade_count() >= strict.saccade_count());
    }

    #[test]
    fn close_fixations_merge() {
        // two fixations 0.1 deg apart separated by a 10 ms saccade label
        let labels = labels_of(&[(F, 100), (S, 10), (F, 100)]);
        let pos: Vec<_> = (0..210)
            .map(|i| if i < 105 { (0.0, 0.0) } else { (0.1, 0.0) })
            .collect();
        let r = merge_events(&labels, &rec_from(&pos), &HierarchicalConfig::default()).unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].kind, F);
        assert!(r.labels.iter().all(|l| *l == F));
    }

    #[test]
    fn distant_fixations_stay_apart() {
        let labels = labels_of(&[(F, 100), (S, 10), (F, 100)]);
        let pos: Vec<_> = (0..210)
            .map(|i| if i < 105 { (0.0, 0.0) } else { (3.0, 0.0) })
            .collect();
        let r = merge_events(&labels, &rec_from(&pos), &HierarchicalConfig::default()).unwrap();
        let kinds: Vec<_> = r.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![F, S, F]);
        assert_eq!(r.labels, labels);
    }

    #[test]
    fn long_gap_prevents_merge() {
        let labels = labels_of(&[(F, 100), (P, 80), (F, 100)]);
        let pos = vec![(0.0, 0.0); 280];
        let r = merge_events(&labels, &rec_from(&pos), &HierarchicalConfig::default()).unwrap();
        assert_eq!(r.events.len(), 3);
    }

    #[test]
    fn short_events_absorbed_into_longer_neighbor() {
        let labels = labels_of(&[(F, 200), (P, 20), (S, 30), (F, 100)]);
        let pos: Vec<_> = (0..350).map(|i| (i as f64 * 0.1, 0.0)).collect();
        let r = merge_events(&labels, &rec_from(&pos), &HierarchicalConfig::default()).unwrap();
        // the 20 ms pursuit is below 50 ms and joins the 200 ms fixation
        assert_eq!(&r.labels[..220], &labels_of(&[(F, 220)])[..]);
        assert_eq!(
            r.events.iter().map(|e| e.kind).collect::<Vec<_>>(),
            vec![F, S, F]
        );
    }

    #[test]
    fn noise_is_a_hard_boundary() {
        let labels = labels_of(&[(F, 100), (N, 5), (F, 100)]);
        let mut rec = rec_from(&vec![(0.0, 0.0); 205]);
        for s in &mut rec.samples[100..105] {
            s.valid = false;
        }
        let r = merge_events(&labels, &rec, &HierarchicalConfig::default()).unwrap();
        assert_eq!(r.labels, labels);
        assert_eq!(r.events.len(), 2);
    }

    #[test]
    fn event_geometry() {
        let labels = labels_of(&[(F, 50), (S, 20), (F, 50)]);
        let pos: Vec<_> = (0..120)
            .map(|i| match i {
                0..50 => (0.0, 0.0),
                50..70 => ((i - 49) as f64 * 0.5, 0.0),
                _ => (10.0, 0.0),
            })
            .collect();
        let r = merge_events(&labels, &rec_from(&pos), &HierarchicalConfig::default()).unwrap();
        let sac = &r.events[1];
        assert_eq!((sac.onset, sac.offset), (50.0, 70.0));
        assert!((sac.amplitude - 9.5).abs() < 1e-12);
        assert!((sac.mean_speed - 475.0).abs() < 1e-9);
        assert_eq!(r.events[2].offset, 120.0);
        assert_eq!(r.events[0].centroid, [0.0, 0.0]);
    }

    #[test]
    fn stationary_gaze_is_all_fixation() {
        let rec = rec_from(&vec![(2.0, 2.0); 500]);
        let c = classify(&rec, &HierarchicalConfig::default()).unwrap();
        assert!(c.labels.iter().all(|l| *l == F));
        assert!(c.stage1.unwrap().degenerate);
        assert_eq!(c.events.len(), 1);
    }

    #[test]
    fn all_invalid_is_all_noise() {
        let samples = (0..50).map(|i| GazeSample::invalid(i as f64)).collect();
        let rec = GazeRecording::new(samples, 1000.0).unwrap();
        let c = classify(&rec, &HierarchicalConfig::default()).unwrap();
        assert!(c.labels.iter().all(|l| *l == N));
        assert!(c.events.is_empty());
    }

    #[test]
    fn bimodal_speed_matches_threshold_split() {
        let mut rng = 0u64;
        let mut next = || {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 2000;
        let speed: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let fast = (i / 100) % 5 == 4;
                Some(if fast {
                    300.0 + 20.0 * (next() - 0.5)
                } else {
                    1.0 + 0.5 * (next() - 0.5)
                })
            })
            .collect();
        let fs = FeatureSeries {
            accel: vec![Some(0.0); n],
            disp: vec![Some(0.0); n],
            speed: speed.clone(),
            window_ms: 100.0,
        };
        let r = stage1_filter_saccades(&fs, &HierarchicalConfig::default()).unwrap();
        for (l, s) in r.labels.iter().zip(&speed) {
            let expect = if s.unwrap() > 30.0 {
                Stage1Label::Saccade
            } else {
                Stage1Label::NonSaccade
            };
            assert_eq!(*l, expect);
        }
    }

    #[test]
    fn finetuning_relabels_pursuit_spike() {
        // 1 s fixation, then 1 s at 15 deg/s with a 200 deg/s spike lasting 10 ms
        let mut x = 0.0;
        let mut pos = vec![(0.0, 0.0); 1000];
        for i in 0..1000 {
            let v = if (500..510).contains(&i) { 0.2 } else { 0.015 };
            x += v;
            pos.push((x, 0.0));
        }
        let rec = rec_from(&pos);
        let cfg = HierarchicalConfig::default();
        let fs = compute_features(&rec, cfg.window_ms).unwrap();
        let stage1 = Stage1Result {
            labels: vec![Stage1Label::NonSaccade; 2000],
            fit: None,
            degenerate: false,
        };
        let s2 = stage2_split_fix_pursuit(&rec, &fs, &stage1, &cfg).unwrap();
        for i in 1501..1509 {
            assert_eq!(s2.labels[i], S, "sample {i}");
        }
        assert!(s2.finetuned_to_saccade >= 8);
        let pursuit = s2.labels[1000..].iter().filter(|l| **l == P).count();
        assert!(pursuit >= 900, "{pursuit}");
        assert!(s2.labels[..950].iter().all(|l| *l == F));
    }

    #[test]
    fn config_validation() {
        let mut cfg = HierarchicalConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.merge_gap_ms = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = HierarchicalConfig {
            stage1_percentiles: vec![50.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}

//! Stimulus-referenced behavior scores and sample-level agreement.
//!
//! Quantitative scores (SQnS, FQnS, PQnS, MisFix) are percentages;
//! qualitative scores measure how close the gaze labeled as a movement type
//! stays to the stimulus (FQlS, PQlS_P in degrees, PQlS_V in deg/s). A score
//! whose denominator is empty for a recording is `None`, never zero.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::speeds;
use crate::gaze::{align, Alignment, GazeRecording, MovementKind, SampleLabel, StimulusTrack};
use crate::hierarchy::Event;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// FQnS proximity tolerance as a fraction of the preceding stimulus
    /// saccade amplitude.
    pub fqns_amp_fraction: f64,
    /// Lower bound of the FQnS proximity tolerance, deg.
    pub fqns_min_tol: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            fqns_amp_fraction: 1.0 / 3.0,
            fqns_min_tol: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BehaviorScores {
    pub sqns: Option<f64>,
    pub fqns: Option<f64>,
    pub pqns: Option<f64>,
    pub misfix: Option<f64>,
    pub fqls: Option<f64>,
    pub pqls_p: Option<f64>,
    pub pqls_v: Option<f64>,
}

impl BehaviorScores {
    pub const ROW_NAMES: [&'static str; 7] =
        ["SQnS", "FQnS", "PQnS", "MisFix", "FQlS", "PQlS_P", "PQlS_V"];
    pub const UNITS: [&'static str; 7] = ["%", "%", "%", "%", "deg", "deg", "deg/s"];

    /// Scores in table row order.
    pub fn rows(&self) -> [Option<f64>; 7] {
        [
            self.sqns,
            self.fqns,
            self.pqns,
            self.misfix,
            self.fqls,
            self.pqls_p,
            self.pqls_v,
        ]
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Amplitudes of the target jumps: for every run of saccade-kind stimulus
/// samples, the distance between the positions just before and just after
/// the run. Works for instantaneous and for gradual jumps alike.
pub fn stimulus_saccade_amplitudes(stim: &StimulusTrack) -> Vec<(usize, f64)> {
    let s = &stim.samples;
    let mut out = Vec::new();
    for i in 0..s.len() {
        if s[i].kind == MovementKind::Saccade && (i == 0 || s[i - 1].kind != MovementKind::Saccade)
        {
            let end = (i..s.len())
                .find(|&j| s[j].kind != MovementKind::Saccade)
                .unwrap_or(s.len());
            let before = s[i.saturating_sub(1)].pos();
            let after = s[end.min(s.len() - 1)].pos();
            out.push((i, dist(before, after)));
        }
    }
    out
}

/// A recording paired with its stimulus, with the derived per-sample
/// quantities every score needs.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    pub rec: &'a GazeRecording,
    pub stim: &'a StimulusTrack,
    pub alignment: Alignment,
    pub gaze_speed: Vec<Option<f64>>,
    /// Stimulus speed on the stimulus' own clock, deg/s.
    pub stim_speed: Vec<f64>,
    /// For each stimulus sample, amplitude of the latest target jump at or
    /// before it (0 before the first jump).
    pub prev_jump: Vec<f64>,
}

impl<'a> Evaluation<'a> {
    pub fn new(rec: &'a GazeRecording, stim: &'a StimulusTrack) -> Result<Self> {
        let alignment = align(rec, stim)?;
        let t = rec.times();
        let pos: Vec<[f64; 2]> = rec.samples.iter().map(|s| s.pos()).collect();
        let mask: Vec<bool> = rec.samples.iter().map(|s| s.valid).collect();
        let gaze_speed = speeds(&t, &pos, &mask);

        let st: Vec<f64> = stim.samples.iter().map(|s| s.t).collect();
        let sp: Vec<[f64; 2]> = stim.samples.iter().map(|s| s.pos()).collect();
        let stim_speed = speeds(&st, &sp, &vec![true; st.len()])
            .into_iter()
            .map(|v| v.unwrap_or(0.0))
            .collect();

        let mut prev_jump = vec![0.0; stim.len()];
        let jumps = stimulus_saccade_amplitudes(stim);
        let mut k = 0;
        let mut current = 0.0;
        for (i, p) in prev_jump.iter_mut().enumerate() {
            while k < jumps.len() && jumps[k].0 <= i {
                current = jumps[k].1;
                k += 1;
            }
            *p = current;
        }
        Ok(Self {
            rec,
            stim,
            alignment,
            gaze_speed,
            stim_speed,
            prev_jump,
        })
    }

    fn check(&self, labels: &[SampleLabel]) -> Result<()> {
        if labels.len() != self.rec.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                got: labels.len(),
                expected: self.rec.len(),
            });
        }
        Ok(())
    }

    /// Valid gaze samples whose paired stimulus has the given kind, with
    /// their stimulus index.
    fn during(&self, kind: MovementKind) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.alignment
            .stim_index
            .iter()
            .enumerate()
            .filter_map(move |(i, j)| {
                let j = (*j)?;
                (self.rec.samples[i].valid && self.stim.samples[j].kind == kind).then_some((i, j))
            })
    }

    /// Saccade quantitative score: total detected saccade amplitude over
    /// total target jump amplitude. Only events starting inside the
    /// stimulus time range count.
    pub fn sqns(&self, events: &[Event]) -> Option<f64> {
        let expected: f64 = stimulus_saccade_amplitudes(self.stim)
            .iter()
            .map(|(_, a)| a)
            .sum();
        if expected <= 0.0 {
            return None;
        }
        let detected: f64 = events
            .iter()
            .filter(|e| {
                e.kind == SampleLabel::Saccade && self.alignment.stim_index[e.start].is_some()
            })
            .map(|e| e.amplitude)
            .sum();
        Some(100.0 * detected / expected)
    }

    /// Fixation quantitative score.
    pub fn fqns(&self, labels: &[SampleLabel], cfg: &MetricsConfig) -> Result<Option<f64>> {
        self.check(labels)?;
        let mut total = 0;
        let mut hit = 0;
        for (i, j) in self.during(MovementKind::Fixation) {
            total += 1;
            let tol = (cfg.fqns_amp_fraction * self.prev_jump[j]).max(cfg.fqns_min_tol);
            if labels[i] == SampleLabel::Fixation
                && dist(self.rec.samples[i].pos(), self.stim.samples[j].pos()) <= tol
            {
                hit += 1;
            }
        }
        Ok(percent(hit, total))
    }

    /// Smooth pursuit quantitative score.
    pub fn pqns(&self, labels: &[SampleLabel]) -> Result<Option<f64>> {
        self.check(labels)?;
        let (mut total, mut hit) = (0, 0);
        for (i, _) in self.during(MovementKind::Pursuit) {
            total += 1;
            hit += usize::from(labels[i] == SampleLabel::Pursuit);
        }
        Ok(percent(hit, total))
    }

    /// Share of stimulus-fixation samples labeled as pursuit.
    pub fn misfix(&self, labels: &[SampleLabel]) -> Result<Option<f64>> {
        self.check(labels)?;
        let (mut total, mut hit) = (0, 0);
        for (i, _) in self.during(MovementKind::Fixation) {
            total += 1;
            hit += usize::from(labels[i] == SampleLabel::Pursuit);
        }
        Ok(percent(hit, total))
    }

    /// Mean gaze-to-target distance over fixation-labeled samples during
    /// stimulus fixations.
    pub fn fqls(&self, labels: &[SampleLabel]) -> Result<Option<f64>> {
        self.check(labels)?;
        Ok(mean(
            self.during(MovementKind::Fixation)
                .filter(|&(i, _)| labels[i] == SampleLabel::Fixation)
                .map(|(i, j)| dist(self.rec.samples[i].pos(), self.stim.samples[j].pos())),
        ))
    }

    pub fn pqls_p(&self, labels: &[SampleLabel]) -> Result<Option<f64>> {
        self.check(labels)?;
        Ok(mean(
            self.during(MovementKind::Pursuit)
                .filter(|&(i, _)| labels[i] == SampleLabel::Pursuit)
                .map(|(i, j)| dist(self.rec.samples[i].pos(), self.stim.samples[j].pos())),
        ))
    }

    pub fn pqls_v(&self, labels: &[SampleLabel]) -> Result<Option<f64>> {
        self.check(labels)?;
        Ok(mean(
            self.during(MovementKind::Pursuit)
                .filter(|&(i, _)| labels[i] == SampleLabel::Pursuit)
                .filter_map(|(i, j)| self.gaze_speed[i].map(|v| (v - self.stim_speed[j]).abs())),
        ))
    }

    pub fn scores(
        &self,
        labels: &[SampleLabel],
        events: &[Event],
        cfg: &MetricsConfig,
    ) -> Result<BehaviorScores> {
        Ok(BehaviorScores {
            sqns: self.sqns(events),
            fqns: self.fqns(labels, cfg)?,
            pqns: self.pqns(labels)?,
            misfix: self.misfix(labels)?,
            fqls: self.fqls(labels)?,
            pqls_p: self.pqls_p(labels)?,
            pqls_v: self.pqls_v(labels)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    /// `confusion[truth][predicted]`, indexed by [`SampleLabel::index`].
    pub confusion: [[usize; 4]; 4],
    pub accuracy: f64,
    pub per_class: [ClassStats; 4],
}

impl Agreement {
    pub fn f1(&self, label: SampleLabel) -> Option<f64> {
        self.per_class[label.index()].f1
    }

    pub fn recall(&self, label: SampleLabel) -> Option<f64> {
        self.per_class[label.index()].recall
    }
}

/// Confusion matrix and per-class precision/recall/F1 against ground truth.
pub fn sample_agreement(labels: &[SampleLabel], truth: &[SampleLabel]) -> Result<Agreement> {
    if labels.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: truth.len(),
        });
    }
    let mut confusion = [[0usize; 4]; 4];
    for (p, t) in labels.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let correct: usize = (0..4).map(|c| confusion[c][c]).sum();
    let accuracy = if labels.is_empty() {
        0.0
    } else {
        correct as f64 / labels.len() as f64
    };
    let per_class = std::array::from_fn(|c| {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..4).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let precision = (predicted > 0).then(|| tp / predicted as f64);
        let recall = (actual > 0).then(|| tp / actual as f64);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            (None, None) => None,
            _ => Some(0.0),
        };
        ClassStats {
            precision,
            recall,
            f1,
        }
    });
    Ok(Agreement {
        confusion,
        accuracy,
        per_class,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Score table as CSV: one row per score, one column per method.
pub fn scores_csv(columns: &[(String, BehaviorScores)]) -> String {
    let mut out = String::from("score");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, row) in BehaviorScores::ROW_NAMES.iter().enumerate() {
        out.push_str(row);
        for (_, s) in columns {
            out.push(',');
            out.push_str(&cell(s.rows()[r]));
        }
        out.push('\n');
    }
    out
}

/// Aligned plain-text rendering of the same table.
pub fn scores_table(columns: &[(String, BehaviorScores)]) -> String {
    let mut header = vec!["Behavior score".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    let mut rows = vec![header];
    for (r, name) in BehaviorScores::ROW_NAMES.iter().enumerate() {
        let mut row = vec![format!("{name} ({})", BehaviorScores::UNITS[r])];
        row.extend(columns.iter().map(|(_, s)| cell(s.rows()[r])));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (k, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c == 0 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        if k == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(out, "{}", "-".repeat(total)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{GazeSample, StimulusSample};
    use crate::hierarchy::events_from_labels;
    use MovementKind as K;
    use SampleLabel::{Fixation as F, Pursuit as P, Saccade as S};

    /// 100 ms fixation at 0, a 10 ms linear jump to (5, 0), 100 ms fixation,
    /// 100 ms pursuit at 10 deg/s.
    fn stimulus() -> StimulusTrack {
        let mut s = Vec::new();
        for i in 0..310 {
            let t = i as f64;
            let (x, kind) = match i {
                0..100 => (0.0, K::Fixation),
                100..110 => (0.5 * (i - 100) as f64, K::Saccade),
                110..210 => (5.0, K::Fixation),
                _ => (5.0 + 0.01 * (i - 209) as f64, K::Pursuit),
            };
            s.push(StimulusSample { t, x, y: 0.0, kind });
        }
        StimulusTrack::new(s).unwrap()
    }

    fn gaze_like(stim: &StimulusTrack, offset: f64) -> GazeRecording {
        let samples = stim
            .samples
            .iter()
            .map(|s| GazeSample::new(s.t, s.x + offset, s.y))
            .collect();
        GazeRecording::new(samples, 1000.0).unwrap()
    }

    fn truth(stim: &StimulusTrack) -> Vec<SampleLabel> {
        stim.samples.iter().map(|s| s.kind.into()).collect()
    }

    #[test]
    fn perfect_labels_score_perfectly() {
        let stim = stimulus();
        let rec = gaze_like(&stim, 0.0);
        let labels = truth(&stim);
        let events = events_from_labels(&labels, &rec);
        let ev = Evaluation::new(&rec, &stim).unwrap();
        let s = ev
            .scores(&labels, &events, &MetricsConfig::default())
            .unwrap();
        assert_eq!(s.sqns, Some(100.0));
        assert_eq!(s.fqns, Some(100.0));
        assert_eq!(s.pqns, Some(100.0));
        assert_eq!(s.misfix, Some(0.0));
        assert_eq!(s.fqls, Some(0.0));
        assert_eq!(s.pqls_p, Some(0.0));
        assert_eq!(s.pqls_v, Some(0.0));
    }

    #[test]
    fn constant_offset_shows_in_qualitative_scores() {
        let stim = stimulus();
        let rec = gaze_like(&stim, 0.5);
        let ev = Evaluation::new(&rec, &stim).unwrap();
        let labels = truth(&stim);
        assert!((ev.fqls(&labels).unwrap().unwrap() - 0.5).abs() < 1e-12);
        assert!((ev.pqls_p(&labels).unwrap().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_detections() {
        let stim = stimulus();
        let rec = gaze_like(&stim, 0.0);
        let ev = Evaluation::new(&rec, &stim).unwrap();
        let all_p = vec![P; 310];
        assert_eq!(ev.sqns(&[]), Some(0.0));
        assert_eq!(
            ev.fqns(&all_p, &MetricsConfig::default()).unwrap(),
            Some(0.0)
        );
        assert_eq!(ev.misfix(&all_p).unwrap(), Some(100.0));
        let all_f = vec![F; 310];
        assert_eq!(ev.pqns(&all_f).unwrap(), Some(0.0));
        assert_eq!(ev.misfix(&all_f).unwrap(), Some(0.0));
        assert_eq!(ev.pqls_p(&all_f).unwrap(), None);
        assert_eq!(ev.pqls_v(&all_f).unwrap(), None);
    }

    #[test]
    fn missing_stimulus_kinds_are_absent() {
        let s: Vec<_> = (0..50)
            .map(|i| StimulusSample {
                t: i as f64,
                x: 0.0,
                y: 0.0,
                kind: K::Fixation,
            })
            .collect();
        let stim = StimulusTrack::new(s).unwrap();
        let rec = gaze_like(&stim, 0.0);
        let ev = Evaluation::new(&rec, &stim).unwrap();
        let labels = vec![F; 50];
        let scores = ev
            .scores(
                &labels,
                &events_from_labels(&labels, &rec),
                &MetricsConfig::default(),
            )
            .unwrap();
        assert_eq!(scores.sqns, None);
        assert_eq!(scores.pqns, None);
        assert_eq!(scores.pqls_v, None);
        assert_eq!(scores.fqns, Some(100.0));
    }

    #[test]
    fn pursuit_speed_error() {
        // gaze tracks at 12 deg/s while the target moves at 10 deg/s
        let stim = stimulus();
        let samples = stim
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let x = if i >= 210 {
                    5.0 + 0.012 * (i - 209) as f64
                } else {
                    s.x
                };
                GazeSample::new(s.t, x, 0.0)
            })
            .collect();
        let rec = GazeRecording::new(samples, 1000.0).unwrap();
        let ev = Evaluation::new(&rec, &stim).unwrap();
        let mut labels = vec![F; 310];
        labels[211..309].fill(P);
        assert!((ev.pqls_v(&labels).unwrap().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn jump_amplitudes() {
        let amps = stimulus_saccade_amplitudes(&stimulus());
        assert_eq!(amps, vec![(100, 5.0)]);
    }

    #[test]
    fn agreement_identity_and_constant() {
        let truth = [F, F, S, P, P, F];
        let a = sample_agreement(&truth, &truth).unwrap();
        assert_eq!(a.accuracy, 1.0);
        for l in [F, S, P] {
            assert_eq!(a.f1(l), Some(1.0));
        }
        assert_eq!(a.f1(SampleLabel::Noise), None);

        let a = sample_agreement(&[F; 6], &truth).unwrap();
        assert_eq!(a.recall(F), Some(1.0));
        assert_eq!(a.recall(S), Some(0.0));
        assert_eq!(a.recall(P), Some(0.0));
        assert_eq!(a.f1(P), Some(0.0));
        assert_eq!(a.confusion[P.index()][F.index()], 2);
    }

    #[test]
    fn table_layout() {
        let s = BehaviorScores {
            sqns: Some(91.0),
            ..Default::default()
        };
        let csv = scores_csv(&[("hhmm".into(), s)]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "score,hhmm");
        assert_eq!(lines[1], "SQnS,91.00");
        assert_eq!(lines[4], "MisFix,-");
        assert_eq!(lines.len(), 8);
        let txt = scores_table(&[("hhmm".into(), s), ("hmm3".into(), s)]);
        assert!(txt.lines().nth(2).unwrap().starts_with("SQnS (%)"));
    }
}

//! Gaze recordings, stimulus tracks and their CSV representations.
//!
//! All positions are degrees of visual angle and all timestamps are
//! milliseconds. Samples flagged invalid (blinks, track loss) are kept in
//! the recording so that label files stay row-aligned with their input, but
//! they never contribute to features or scores.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORDING_HEADER: [&str; 4] = ["t_ms", "x_deg", "y_deg", "valid"];
pub const STIMULUS_HEADER: [&str; 4] = ["t_ms", "x_deg", "y_deg", "kind"];
pub const LABEL_HEADER: [&str; 2] = ["t_ms", "label"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            x,
            y,
            valid: true,
        }
    }

    pub fn invalid(t: f64) -> Self {
        Self {
            t,
            x: f64::NAN,
            y: f64::NAN,
            valid: false,
        }
    }

    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeRecording {
    pub samples: Vec<GazeSample>,
    pub rate_hz: f64,
}

impl GazeRecording {
    /// Builds a recording, checking timestamp order and coordinate validity.
    /// Non-finite coordinates are demoted to invalid samples.
    pub fn new(mut samples: Vec<GazeSample>, rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyRecording);
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rate_hz must be positive, got {rate_hz}"
            )));
        }
        for (i, s) in samples.iter_mut().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::MalformedCsv {
                    line: i + 2,
                    reason: "non-finite timestamp".into(),
                });
            }
            if !(s.x.is_finite() && s.y.is_finite()) {
                s.valid = false;
            }
        }
        for i in 1..samples.len() {
            if samples[i].t <= samples[i - 1].t {
                return Err(Error::NonMonotoneTime {
                    line: i + 2,
                    t: samples[i].t,
                    prev: samples[i - 1].t,
                });
            }
        }
        Ok(Self { samples, rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Nominal sample period in ms.
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }
}

/// Intended movement of the displayed target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MovementKind {
    Fixation,
    Saccade,
    Pursuit,
}

impl MovementKind {
    pub fn code(self) -> &'static str {
        match self {
            MovementKind::Fixation => "fix",
            MovementKind::Saccade => "sac",
            MovementKind::Pursuit => "sp",
        }
    }
}

impl FromStr for MovementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fix" => Ok(MovementKind::Fixation),
            "sac" => Ok(MovementKind::Saccade),
            "sp" => Ok(MovementKind::Pursuit),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// Per-sample classification output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleLabel {
    Fixation,
    Saccade,
    Pursuit,
    Noise,
}

impl SampleLabel {
    pub const ALL: [SampleLabel; 4] = [
        SampleLabel::Fixation,
        SampleLabel::Saccade,
        SampleLabel::Pursuit,
        SampleLabel::Noise,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SampleLabel::Fixation => "fix",
            SampleLabel::Saccade => "sac",
            SampleLabel::Pursuit => "sp",
            SampleLabel::Noise => "noise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<MovementKind> for SampleLabel {
    fn from(kind: MovementKind) -> Self {
        match kind {
            MovementKind::Fixation => SampleLabel::Fixation,
            MovementKind::Saccade => SampleLabel::Saccade,
            MovementKind::Pursuit => SampleLabel::Pursuit,
        }
    }
}

impl FromStr for SampleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fix" => Ok(SampleLabel::Fixation),
            "sac" => Ok(SampleLabel::Saccade),
            "sp" => Ok(SampleLabel::Pursuit),
            "noise" => Ok(SampleLabel::Noise),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub kind: MovementKind,
}

impl StimulusSample {
    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusTrack {
    pub samples: Vec<StimulusSample>,
}

impl StimulusTrack {
    pub fn new(samples: Vec<StimulusSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyRecording);
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::MalformedCsv {
                    line: i + 2,
                    reason: "stimulus values must be finite".into(),
                });
            }
        }
        for i in 1..samples.len() {
            if samples[i].t <= samples[i - 1].t {
                return Err(Error::NonMonotoneTime {
                    line: i + 2,
                    t: samples[i].t,
                    prev: samples[i - 1].t,
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Ingestion options. The default rejects repeated timestamps; with
/// `drop_duplicates` the later rows are discarded and counted instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub drop_duplicates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub dropped_duplicates: usize,
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn map_csv_err(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::MalformedCsv {
        line,
        reason: err.to_string(),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(map_csv_err)?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::MalformedCsv {
            line: 1,
            reason: format!(
                "expected header {:?}, got {:?}",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::MalformedCsv {
        line,
        reason: format!("cannot parse {name} from {field:?}"),
    })
}

/// Median inter-sample interval, converted to a rate.
fn estimate_rate(times: &[f64]) -> f64 {
    let mut dts: Vec<f64> = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    if dts.is_empty() {
        return 1000.0;
    }
    dts.sort_by(f64::total_cmp);
    1000.0 / dts[dts.len() / 2]
}

/// Rejects or drops rows whose timestamp does not advance. Returns the kept
/// rows and the number dropped.
fn enforce_monotone<T>(
    rows: Vec<(usize, f64, T)>,
    opts: LoadOptions,
) -> Result<(Vec<(f64, T)>, usize)> {
    let mut out: Vec<(f64, T)> = Vec::with_capacity(rows.len());
    let mut dropped = 0;
    for (line, t, v) in rows {
        if let Some(&(prev, _)) = out.last() {
            if t == prev && opts.drop_duplicates {
                dropped += 1;
                continue;
            }
            if t <= prev {
                return Err(Error::NonMonotoneTime { line, t, prev });
            }
        }
        out.push((t, v));
    }
    Ok((out, dropped))
}

pub fn read_recording<R: Read>(reader: R, opts: LoadOptions) -> Result<Loaded<GazeRecording>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &RECORDING_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(map_csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let t = parse_f64(&rec[0], line, "t_ms")?;
        if !t.is_finite() {
            return Err(Error::MalformedCsv {
                line,
                reason: "non-finite timestamp".into(),
            });
        }
        let x = parse_f64(&rec[1], line, "x_deg")?;
        let y = parse_f64(&rec[2], line, "y_deg")?;
        let flag = match &rec[3] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::MalformedCsv {
                    line,
                    reason: format!("valid must be 0 or 1, got {other:?}"),
                })
            }
        };
        let valid = flag && x.is_finite() && y.is_finite();
        rows.push((line, t, (x, y, valid)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyRecording);
    }
    let (rows, dropped) = enforce_monotone(rows, opts)?;
    let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rate = estimate_rate(&times);
    let samples = rows
        .into_iter()
        .map(|(t, (x, y, valid))| GazeSample { t, x, y, valid })
        .collect();
    Ok(Loaded {
        value: GazeRecording::new(samples, rate)?,
        dropped_duplicates: dropped,
    })
}

/// Loads a recording CSV (`t_ms,x_deg,y_deg,valid`), rejecting repeated
/// timestamps.
pub fn load_recording(path: impl AsRef<Path>) -> Result<GazeRecording> {
    load_recording_with(path, LoadOptions::default()).map(|l| l.value)
}

pub fn load_recording_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<Loaded<GazeRecording>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_recording(file, opts)
}

pub fn read_stimulus<R: Read>(reader: R, opts: LoadOptions) -> Result<Loaded<StimulusTrack>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &STIMULUS_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(map_csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let t = parse_f64(&rec[0], line, "t_ms")?;
        let x = parse_f64(&rec[1], line, "x_deg")?;
        let y = parse_f64(&rec[2], line, "y_deg")?;
        let kind: MovementKind = rec[3].parse()?;
        rows.push((line, t, (x, y, kind)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyRecording);
    }
    let (rows, dropped) = enforce_monotone(rows, opts)?;
    let samples = rows
        .into_iter()
        .map(|(t, (x, y, kind))| StimulusSample { t, x, y, kind })
        .collect();
    Ok(Loaded {
        value: StimulusTrack::new(samples)?,
        dropped_duplicates: dropped,
    })
}

/// Loads a stimulus CSV (`t_ms,x_deg,y_deg,kind`).
pub fn load_stimulus(path: impl AsRef<Path>) -> Result<StimulusTrack> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stimulus(file, LoadOptions::default()).map(|l| l.value)
}

pub fn read_labels<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<SampleLabel>)> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &LABEL_HEADER)?;
    let mut times = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(map_csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        times.push(parse_f64(&rec[0], line, "t_ms")?);
        labels.push(rec[1].parse()?);
    }
    Ok((times, labels))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<SampleLabel>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_recording<W: Write>(mut w: W, rec: &GazeRecording) -> std::io::Result<()> {
    writeln!(w, "{}", RECORDING_HEADER.join(","))?;
    for s in &rec.samples {
        writeln!(
            w,
            "{},{},{},{}",
            fmt6(s.t),
            fmt6(s.x),
            fmt6(s.y),
            u8::from(s.valid)
        )?;
    }
    w.flush()
}

pub fn write_stimulus<W: Write>(mut w: W, stim: &StimulusTrack) -> std::io::Result<()> {
    writeln!(w, "{}", STIMULUS_HEADER.join(","))?;
    for s in &stim.samples {
        writeln!(
            w,
            "{},{},{},{}",
            fmt6(s.t),
            fmt6(s.x),
            fmt6(s.y),
            s.kind.code()
        )?;
    }
    w.flush()
}

pub fn write_labels<W: Write>(
    mut w: W,
    times: &[f64],
    labels: &[SampleLabel],
) -> std::io::Result<()> {
    writeln!(w, "{}", LABEL_HEADER.join(","))?;
    for (t, l) in times.iter().zip(labels) {
        writeln!(w, "{},{}", fmt6(*t), l.code())?;
    }
    w.flush()
}

pub fn save_with<F>(path: impl AsRef<Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::io(path, e))
}

/// Zero-order-hold pairing of gaze samples with stimulus frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// For each gaze sample, the index of the latest stimulus sample with
    /// `t <= gaze t`, or `None` before the stimulus starts.
    pub stim_index: Vec<Option<usize>>,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.stim_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stim_index.is_empty()
    }

    pub fn kind_at(&self, stim: &StimulusTrack, i: usize) -> Option<MovementKind> {
        self.stim_index[i].map(|j| stim.samples[j].kind)
    }
}

pub fn align_times(gaze_t: &[f64], stim: &StimulusTrack) -> Result<Alignment> {
    let first = stim.samples[0].t;
    let last = stim.samples[stim.len() - 1].t;
    let (Some(&g0), Some(&g1)) = (gaze_t.first(), gaze_t.last()) else {
        return Err(Error::EmptyRecording);
    };
    if g1 < first || g0 > last {
        return Err(Error::NoOverlap);
    }
    let mut j = 0usize;
    let stim_index = gaze_t
        .iter()
        .map(|&t| {
            if t < first {
                return None;
            }
            while j + 1 < stim.len() && stim.samples[j + 1].t <= t {
                j += 1;
            }
            Some(j)
        })
        .collect();
    Ok(Alignment { stim_index })
}

/// Pairs every gaze sample with the most recent stimulus frame.
pub fn align(rec: &GazeRecording, stim: &StimulusTrack) -> Result<Alignment> {
    align_times(&rec.times(), stim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_from(text: &str) -> Result<GazeRecording> {
        read_recording(text.as_bytes(), LoadOptions::default()).map(|l| l.value)
    }

    #[test]
    fn loads_minimal_recording() {
        let rec =
            rec_from("t_ms,x_deg,y_deg,valid\n0,1.0,2.0,1\n1,1.5,2.0,1\n2,2.0,2.0,1\n").unwrap();
        assert_eq!(rec.len(), 3);
        assert!((rec.rate_hz - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn nan_coordinate_marks_sample_invalid() {
        let rec = rec_from("t_ms,x_deg,y_deg,valid\n0,NaN,2.0,1\n1,1.5,2.0,1\n").unwrap();
        assert!(!rec.samples[0].valid);
        assert!(rec.samples[1].valid);
    }

    #[test]
    fn repeated_timestamp_is_rejected() {
        let err = rec_from("t_ms,x_deg,y_deg,valid\n0,0,0,1\n1,0,0,1\n1,0,0,1\n").unwrap_err();
        assert!(
            matches!(err, Error::NonMonotoneTime { line: 4, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn repeated_timestamp_dropped_when_requested() {
        let text = "t_ms,x_deg,y_deg,valid\n0,0,0,1\n1,0,0,1\n1,5,5,1\n2,0,0,1\n";
        let loaded = read_recording(
            text.as_bytes(),
            LoadOptions {
                drop_duplicates: true,
            },
        )
        .unwrap();
        assert_eq!(loaded.dropped_duplicates, 1);
        assert_eq!(loaded.value.len(), 3);
        assert_eq!(loaded.value.samples[1].x, 0.0);
    }

    #[test]
    fn decreasing_time_rejected_even_with_dedup() {
        let text = "t_ms,x_deg,y_deg,valid\n0,0,0,1\n2,0,0,1\n1,0,0,1\n";
        let err = read_recording(
            text.as_bytes(),
            LoadOptions {
                drop_duplicates: true,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTime { .. }));
    }

    #[test]
    fn bad_header_and_arity() {
        assert!(matches!(
            rec_from("t,x,y,valid\n0,0,0,1\n").unwrap_err(),
            Error::MalformedCsv { line: 1, .. }
        ));
        assert!(matches!(
            rec_from("t_ms,x_deg,y_deg,valid\n0,0,1\n").unwrap_err(),
            Error::MalformedCsv { .. }
        ));
        assert!(matches!(
            rec_from("t_ms,x_deg,y_deg,valid\n0,0,0,2\n").unwrap_err(),
            Error::MalformedCsv { .. }
        ));
    }

    #[test]
    fn empty_files() {
        assert!(matches!(
            rec_from("t_ms,x_deg,y_deg,valid\n").unwrap_err(),
            Error::EmptyRecording
        ));
        let err = read_stimulus("t_ms,x_deg,y_deg,kind\n".as_bytes(), LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyRecording));
    }

    #[test]
    fn stimulus_kinds() {
        let text = "t_ms,x_deg,y_deg,kind\n0,0,0,fix\n1,5,0,sac\n2,5.1,0,sp\n";
        let stim = read_stimulus(text.as_bytes(), LoadOptions::default())
            .unwrap()
            .value;
        let kinds: Vec<_> = stim.samples.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                MovementKind::Fixation,
                MovementKind::Saccade,
                MovementKind::Pursuit
            ]
        );

        let text = "t_ms,x_deg,y_deg,kind\n0,0,0,glissade\n";
        let err = read_stimulus(text.as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownKind(k) if k == "glissade"));
    }

    fn stim_at(times: &[f64]) -> StimulusTrack {
        StimulusTrack::new(
            times
                .iter()
                .map(|&t| StimulusSample {
                    t,
                    x: t,
                    y: 0.0,
                    kind: MovementKind::Fixation,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn align_identical_grids_is_identity() {
        let times: Vec<f64> = (0..10).map(f64::from).collect();
        let a = align_times(&times, &stim_at(&times)).unwrap();
        assert_eq!(a.stim_index, (0..10).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn align_holds_most_recent_frame() {
        let frames: Vec<f64> = (0..7).map(|i| i as f64 * 1000.0 / 60.0).collect();
        let gaze: Vec<f64> = (0..100).map(f64::from).collect();
        let a = align_times(&gaze, &stim_at(&frames)).unwrap();
        for (i, j) in a.stim_index.iter().enumerate() {
            let j = j.unwrap();
            assert!(frames[j] <= gaze[i]);
            if j + 1 < frames.len() {
                assert!(frames[j + 1] > gaze[i]);
            }
        }
        assert_eq!(a.stim_index[16], Some(0));
        assert_eq!(a.stim_index[17], Some(1));
    }

    #[test]
    fn align_before_stimulus_is_no_overlap() {
        let gaze = [0.0, 1.0, 2.0];
        let err = align_times(&gaze, &stim_at(&[10.0, 11.0])).unwrap_err();
        assert!(matches!(err, Error::NoOverlap));
    }

    #[test]
    fn write_then_load_round_trips() {
        let text = "t_ms,x_deg,y_deg,valid\n0.000000,1.250000,-2.000000,1\n1.000000,NaN,NaN,0\n2.000000,1.500000,-2.000000,1\n";
        let rec = rec_from(text).unwrap();
        let mut out = Vec::new();
        write_recording(&mut out, &rec).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}

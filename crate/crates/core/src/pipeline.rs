//! One entry point per classifier, shared by the CLI and the tests.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{ivdt, ivmp, ivvt, three_state_hmm};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::compute_features;
use crate::gaze::{GazeRecording, SampleLabel};
use crate::hierarchy::{classify, events_from_labels, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Hhmm,
    Hmm3,
    Ivvt,
    Ivdt,
    Ivmp,
}

impl Algorithm {
    /// Column order of comparison tables.
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Hhmm,
        Algorithm::Hmm3,
        Algorithm::Ivvt,
        Algorithm::Ivdt,
        Algorithm::Ivmp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Hhmm => "hhmm",
            Algorithm::Hmm3 => "hmm3",
            Algorithm::Ivvt => "ivvt",
            Algorithm::Ivdt => "ivdt",
            Algorithm::Ivmp => "ivmp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub labels: Vec<SampleLabel>,
    pub events: Vec<Event>,
}

/// Runs one classifier. The HMM pipelines return merged events; the
/// threshold baselines are run-length encoded without merging.
pub fn run_algorithm(
    algo: Algorithm,
    rec: &GazeRecording,
    cfg: &PipelineConfig,
) -> Result<Labeled> {
    cfg.validate()?;
    let h = &cfg.hierarchy;
    let th = &cfg.thresholds;
    if algo == Algorithm::Hhmm {
        let c = classify(rec, h)?;
        return Ok(Labeled {
            labels: c.labels,
            events: c.events,
        });
    }
    if rec.valid_count() == 0 {
        return Ok(Labeled {
            labels: vec![SampleLabel::Noise; rec.len()],
            events: Vec::new(),
        });
    }
    let fs = compute_features(rec, h.window_ms)?;
    let labels = match algo {
        Algorithm::Hmm3 => {
            let r = three_state_hmm(&fs, rec, th, h)?;
            return Ok(Labeled {
                labels: r.labels,
                events: r.events,
            });
        }
        Algorithm::Ivvt => ivvt(&fs, th),
        Algorithm::Ivdt => ivdt(&fs, rec, th)?,
        Algorithm::Ivmp => ivmp(&fs, rec, th)?,
        Algorithm::Hhmm => unreachable!(),
    };
    let events = events_from_labels(&labels, rec);
    Ok(Labeled { labels, events })
}

//! Classification of fixations, saccades and smooth pursuits from raw gaze
//! positions with a two-level hierarchy of Gaussian HMMs, together with
//! threshold baselines, stimulus-referenced behavior scores and a synthetic
//! data generator.

pub mod baselines;
pub mod config;
pub mod error;
pub mod features;
pub mod gaze;
pub mod hierarchy;
pub mod hmm;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use gaze::{
    GazeRecording, GazeSample, MovementKind, SampleLabel, StimulusSample, StimulusTrack,
};
pub use hierarchy::{classify, Classification, Event, HierarchicalConfig};
pub use pipeline::{run_algorithm, Algorithm, Labeled};

//! Synthetic stimulus and gaze generator with known ground truth.
//!
//! The stimulus follows a script of fixations, jumps and constant-velocity
//! ramps. Jumps are rendered as minimum-jerk transitions whose duration
//! follows the main sequence, so the stimulus itself is a kinematically
//! plausible target path. The gaze replays the stimulus `latency_ms` later,
//! adds corrective saccades during pursuit and temporally correlated
//! Gaussian noise. Ground truth is the kinematic phase of the gaze itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{
    GazeRecording, GazeSample, MovementKind, SampleLabel, StimulusSample, StimulusTrack,
};
use crate::hierarchy::events_from_labels;
use crate::metrics::{BehaviorScores, Evaluation, MetricsConfig};

/// Ratio of peak to mean speed of a minimum-jerk movement.
pub const MIN_JERK_PEAK_FACTOR: f64 = 15.0 / 8.0;
/// Corrective saccades smaller than this are not generated; the tracking
/// error keeps accumulating until the next scheduled one.
pub const MIN_CORRECTIVE_DEG: f64 = 0.3;

/// Normalized minimum-jerk position profile on `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Saccade duration in ms for an amplitude in degrees.
pub fn main_sequence_ms(amplitude: f64) -> f64 {
    2.2 * amplitude + 21.0
}

/// Peak speed in deg/s of a minimum-jerk movement.
pub fn min_jerk_peak_speed(amplitude: f64, duration_ms: f64) -> f64 {
    MIN_JERK_PEAK_FACTOR * amplitude / (duration_ms / 1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    /// Hold the target still. `pos` may only move the target on the first
    /// segment; later it must repeat the current position.
    Fixate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pos: Option<[f64; 2]>,
        dur_ms: f64,
    },
    /// Move the target to `to`. Duration defaults to the main sequence.
    Jump {
        to: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dur_ms: Option<f64>,
    },
    Pursue {
        velocity: [f64; 2],
        dur_ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub script: Vec<Segment>,
    pub rate_hz: f64,
    pub noise_sigma_deg: f64,
    /// Standard deviation of the Gaussian smoothing kernel applied to the
    /// noise; 0 gives white noise.
    #[serde(default)]
    pub noise_corr_ms: f64,
    pub latency_ms: f64,
    /// Mean corrective saccades per second of gaze pursuit.
    pub corrective_rate_hz: f64,
    /// Eye speed over target speed during pursuit; the shortfall builds the
    /// error that corrective saccades remove.
    #[serde(default = "default_gain")]
    pub pursuit_gain: f64,
    pub seed: u64,
}

fn default_gain() -> f64 {
    0.9
}

impl Scenario {
    /// Three fixations, two large jumps and two ramps over 20 s at 1 kHz.
    pub fn standard() -> Self {
        let jump2 = main_sequence_ms(8f64.hypot(10.0)).round();
        Self {
            script: vec![
                Segment::Fixate {
                    pos: Some([0.0, 0.0]),
                    dur_ms: 4500.0,
                },
                Segment::Jump {
                    to: [12.0, 0.0],
                    dur_ms: None,
                },
                Segment::Fixate {
                    pos: None,
                    dur_ms: 4000.0,
                },
                Segment::Pursue {
                    velocity: [-10.0, 0.0],
                    dur_ms: 3000.0,
                },
                Segment::Fixate {
                    pos: None,
                    dur_ms: 4000.0,
                },
                Segment::Jump {
                    to: [-10.0, -10.0],
                    dur_ms: None,
                },
                Segment::Pursue {
                    velocity: [12.0, 9.0],
                    dur_ms: 20000.0 - 4500.0 - 47.0 - 4000.0 - 3000.0 - 4000.0 - jump2,
                },
            ],
            rate_hz: 1000.0,
            noise_sigma_deg: 0.3,
            noise_corr_ms: 80.0,
            latency_ms: 150.0,
            corrective_rate_hz: 1.0,
            pursuit_gain: default_gain(),
            seed: 42,
        }
    }

    /// Step-ramp trials: each ramp starts after a jump to a fresh position,
    /// so more than half of the recording is pursuit.
    pub fn pursuit_heavy() -> Self {
        let trials: [([f64; 2], [f64; 2]); 5] = [
            ([-10.0, 0.0], [12.0, 0.0]),
            ([0.0, 10.0], [0.0, -14.0]),
            ([10.0, 5.0], [-10.0, -8.0]),
            ([-8.0, 8.0], [15.0, 0.0]),
            ([5.0, -8.0], [-6.0, 12.0]),
        ];
        let mut script = vec![Segment::Fixate {
            pos: Some(trials[0].0),
            dur_ms: 1000.0,
        }];
        for (k, (start, velocity)) in trials.iter().enumerate() {
            if k > 0 {
                script.push(Segment::Jump {
                    to: *start,
                    dur_ms: None,
                });
                script.push(Segment::Fixate {
                    pos: None,
                    dur_ms: 500.0,
                });
            }
            script.push(Segment::Pursue {
                velocity: *velocity,
                dur_ms: 1500.0,
            });
            script.push(Segment::Fixate {
                pos: None,
                dur_ms: 500.0,
            });
        }
        Self {
            script,
            ..Self::standard()
        }
    }

    /// Same script with no noise, latency or corrective saccades.
    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma_deg: 0.0,
            latency_ms: 0.0,
            corrective_rate_hz: 0.0,
            ..self.clone()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard()),
            "pursuit-heavy" => Some(Self::pursuit_heavy()),
            "noiseless" => Some(Self::standard().noiseless()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["standard", "pursuit-heavy", "noiseless"];

    fn samples(&self, ms: f64) -> usize {
        (ms * self.rate_hz / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScript(m));
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if !(self.noise_sigma_deg.is_finite() && self.noise_sigma_deg >= 0.0) {
            return bad("noise_sigma_deg must be non-negative".into());
        }
        if !(self.noise_corr_ms.is_finite() && self.noise_corr_ms >= 0.0) {
            return bad("noise_corr_ms must be non-negative".into());
        }
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return bad("latency_ms must be non-negative".into());
        }
        if !(self.corrective_rate_hz.is_finite() && self.corrective_rate_hz >= 0.0) {
            return bad("corrective_rate_hz must be non-negative".into());
        }
        if !(self.pursuit_gain > 0.0 && self.pursuit_gain <= 1.0) {
            return bad("pursuit_gain must lie in (0, 1]".into());
        }
        if self.script.is_empty() {
            return bad("empty script".into());
        }
        for (k, seg) in self.script.iter().enumerate() {
            let dur = match seg {
                Segment::Fixate { dur_ms, .. } | Segment::Pursue { dur_ms, .. } => Some(*dur_ms),
                Segment::Jump { dur_ms, .. } => *dur_ms,
            };
            if let Some(d) = dur {
                if !(d.is_finite() && d > 0.0) || self.samples(d) == 0 {
                    return bad(format!(
                        "segment {k}: duration must cover at least one sample"
                    ));
                }
            }
            let finite = match seg {
                Segment::Fixate { pos, .. } => pos.is_none_or(|p| p.iter().all(|v| v.is_finite())),
                Segment::Jump { to, .. } => to.iter().all(|v| v.is_finite()),
                Segment::Pursue { velocity, .. } => velocity.iter().all(|v| v.is_finite()),
            };
            if !finite {
                return bad(format!("segment {k}: non-finite coordinates"));
            }
        }
        Ok(())
    }
}

/// Per-sample stimulus path before it is packed into a [`StimulusTrack`].
struct Path {
    pos: Vec<[f64; 2]>,
    kind: Vec<MovementKind>,
    velocity: Vec<[f64; 2]>,
}

fn render_stimulus(sc: &Scenario) -> Result<Path> {
    let dt = 1.0 / sc.rate_hz;
    let mut p = Path {
        pos: Vec::new(),
        kind: Vec::new(),
        velocity: Vec::new(),
    };
    let mut cur = [0.0, 0.0];
    for (k, seg) in sc.script.iter().enumerate() {
        match *seg {
            Segment::Fixate { pos, dur_ms } => {
                if let Some(q) = pos {
                    if k == 0 {
                        cur = q;
                    } else if (q[0] - cur[0]).hypot(q[1] - cur[1]) > 1e-9 {
                        return Err(Error::InvalidScript(format!(
                            "segment {k}: fixation at {q:?} but the target is at {cur:?}; use a jump"
                        )));
                    }
                }
                for _ in 0..sc.samples(dur_ms) {
                    p.pos.push(cur);
                    p.kind.push(MovementKind::Fixation);
                    p.velocity.push([0.0, 0.0]);
                }
            }
            Segment::Jump { to, dur_ms } => {
                let amp = (to[0] - cur[0]).hypot(to[1] - cur[1]);
                let n = sc
                    .samples(dur_ms.unwrap_or_else(|| main_sequence_ms(amp)))
                    .max(1);
                for i in 0..n {
                    let s = min_jerk(i as f64 / n as f64);
                    p.pos
                        .push([cur[0] + s * (to[0] - cur[0]), cur[1] + s * (to[1] - cur[1])]);
                    p.kind.push(MovementKind::Saccade);
                    p.velocity.push([0.0, 0.0]);
                }
                cur = to;
            }
            Segment::Pursue { velocity, dur_ms } => {
                let start = cur;
                let n = sc.samples(dur_ms);
                for i in 1..=n {
                    let t = i as f64 * dt;
                    p.pos
                        .push([start[0] + velocity[0] * t, start[1] + velocity[1] * t]);
                    p.kind.push(MovementKind::Pursuit);
                    p.velocity.push(velocity);
                }
                cur = [
                    start[0] + velocity[0] * n as f64 * dt,
                    start[1] + velocity[1] * n as f64 * dt,
                ];
            }
        }
    }
    if p.pos.len() < 3 {
        return Err(Error::InvalidScript(
            "script shorter than three samples".into(),
        ));
    }
    Ok(p)
}

/// Gaussian-smoothed unit-variance noise.
fn correlated_noise(rng: &mut ChaCha8Rng, n: usize, corr_samples: f64) -> Vec<f64> {
    if corr_samples <= 0.0 {
        return (0..n).map(|_| rng.sample(StandardNormal)).collect();
    }
    let half = (4.0 * corr_samples).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let d = k as f64 - half as f64;
            (-0.5 * d * d / (corr_samples * corr_samples)).exp()
        })
        .collect();
    let norm = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
    kernel.iter_mut().for_each(|w| *w /= norm);
    let white: Vec<f64> = (0..n + 2 * half)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    (0..n)
        .map(|i| kernel.iter().zip(&white[i..]).map(|(w, x)| w * x).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectiveSaccade {
    /// First and one-past-last gaze sample of the saccade.
    pub start: usize,
    pub end: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: GazeRecording,
    pub stimulus: StimulusTrack,
    pub truth: Vec<SampleLabel>,
    pub correctives: Vec<CorrectiveSaccade>,
}

/// Schedules corrective saccades inside one gaze-pursuit run and writes the
/// resulting tracking offset. Returns the generated saccades.
fn schedule_correctives(
    sc: &Scenario,
    rng: &mut ChaCha8Rng,
    run: (usize, usize),
    velocity: [f64; 2],
    offset: &mut [[f64; 2]],
) -> Vec<CorrectiveSaccade> {
    let (a, b) = run;
    let speed = velocity[0].hypot(velocity[1]);
    let slip = (1.0 - sc.pursuit_gain) * speed;
    if sc.corrective_rate_hz <= 0.0 || slip <= 0.0 {
        return Vec::new();
    }
    let dir = [velocity[0] / speed, velocity[1] / speed];
    let dt = 1.0 / sc.rate_hz;
    let wait = Exp::new(sc.corrective_rate_hz).expect("positive rate");
    let mut out = Vec::new();
    let mut ramp_start = a;
    let mut cursor = a as f64;
    loop {
        cursor += rng.sample(wait) * sc.rate_hz;
        let start = cursor.round() as usize;
        if start >= b {
            break;
        }
        let amp = slip * (start - ramp_start) as f64 * dt;
        if amp < MIN_CORRECTIVE_DEG {
            continue;
        }
        let n = sc.samples(main_sequence_ms(amp)).max(1);
        if start + n > b {
            break;
        }
        for (k, o) in offset[ramp_start..start].iter_mut().enumerate() {
            let e = slip * k as f64 * dt;
            *o = [-e * dir[0], -e * dir[1]];
        }
        for (k, o) in offset[start..start + n].iter_mut().enumerate() {
            let e = amp * (1.0 - min_jerk(k as f64 / n as f64));
            *o = [-e * dir[0], -e * dir[1]];
        }
        out.push(CorrectiveSaccade {
            start,
            end: start + n,
            amplitude: amp,
        });
        ramp_start = start + n;
        cursor = ramp_start as f64;
    }
    out
}

pub fn generate(sc: &Scenario) -> Result<SynthOutput> {
    sc.validate()?;
    let path = render_stimulus(sc)?;
    let n = path.pos.len();
    let period = 1000.0 / sc.rate_hz;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * period).collect();
    let latency = sc.samples(sc.latency_ms);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let mut base = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        if i < latency {
            base.push(path.pos[0]);
            truth.push(SampleLabel::Fixation);
        } else {
            base.push(path.pos[i - latency]);
            truth.push(path.kind[i - latency].into());
        }
    }

    let mut offset = vec![[0.0, 0.0]; n];
    let mut correctives = Vec::new();
    let mut i = 0;
    while i < n {
        if truth[i] != SampleLabel::Pursuit {
            i += 1;
            continue;
        }
        let v = path.velocity[i - latency];
        let mut j = i;
        while j < n && truth[j] == SampleLabel::Pursuit && path.velocity[j - latency] == v {
            j += 1;
        }
        correctives.extend(schedule_correctives(sc, &mut rng, (i, j), v, &mut offset));
        i = j;
    }
    for c in &correctives {
        truth[c.start..c.end].fill(SampleLabel::Saccade);
    }

    let corr = sc.noise_corr_ms * sc.rate_hz / 1000.0;
    let (nx, ny) = if sc.noise_sigma_deg > 0.0 {
        (
            correlated_noise(&mut rng, n, corr),
            correlated_noise(&mut rng, n, corr),
        )
    } else {
        (vec![0.0; n], vec![0.0; n])
    };

    let samples = (0..n)
        .map(|i| {
            GazeSample::new(
                times[i],
                base[i][0] + offset[i][0] + sc.noise_sigma_deg * nx[i],
                base[i][1] + offset[i][1] + sc.noise_sigma_deg * ny[i],
            )
        })
        .collect();
    let recording = GazeRecording::new(samples, sc.rate_hz)?;
    let stimulus = StimulusTrack::new(
        (0..n)
            .map(|i| StimulusSample {
                t: times[i],
                x: path.pos[i][0],
                y: path.pos[i][1],
                kind: path.kind[i],
            })
            .collect(),
    )?;
    Ok(SynthOutput {
        recording,
        stimulus,
        truth,
        correctives,
    })
}

/// Scores of the ground-truth labels: the best any classifier can reach on
/// this scenario given the latency model.
pub fn ideal_scores(sc: &Scenario) -> Result<BehaviorScores> {
    let out = generate(sc)?;
    let events = events_from_labels(&out.truth, &out.recording);
    Evaluation::new(&out.recording, &out.stimulus)?.scores(
        &out.truth,
        &events,
        &MetricsConfig::default(),
    )
}

//! Threshold baselines against a naive reimplementation, and the 3-state
//! ablation on well-separated speed modes.

use hhmm_core::baselines::{ivdt, ivvt, three_state_hmm, ThresholdConfig};
use hhmm_core::features::{compute_features, FeatureSeries};
use hhmm_core::hierarchy::HierarchicalConfig;
use hhmm_core::synth::{generate, Scenario};
use hhmm_core::{GazeRecording, GazeSample, SampleLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook I-DT: take a minimum window; if it is compact, grow it one
/// point at a time while it stays compact (recomputing the spread from
/// scratch), mark it and jump past it; otherwise drop the first point.
fn naive_idt(pos: &[[f64; 2]], window: usize, max_disp: f64) -> Vec<bool> {
    let spread = |w: &[[f64; 2]]| {
        let xs = w.iter().map(|p| p[0]);
        let ys = w.iter().map(|p| p[1]);
        let (xmin, xmax) = (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
        );
        let (ymin, ymax) = (
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        );
        (xmax - xmin) + (ymax - ymin)
    };
    let mut out = vec![false; pos.len()];
    let mut start = 0;
    while start + window <= pos.len() {
        let mut end = start + window;
        if spread(&pos[start..end]) <= max_disp {
            while end < pos.len() && spread(&pos[start..end + 1]) <= max_disp {
                end += 1;
            }
            for o in &mut out[start..end] {
                *o = true;
            }
            start = end;
        } else {
            start += 1;
        }
    }
    out
}

fn naive_ivdt(rec: &GazeRecording, fs: &FeatureSeries, cfg: &ThresholdConfig) -> Vec<SampleLabel> {
    let window = ((cfg.idt_window_ms / rec.period_ms()).round() as usize).max(2);
    let mut out = vec![SampleLabel::Pursuit; rec.len()];
    let mut i = 0;
    while i < rec.len() {
        match fs.speed[i] {
            None => {
                out[i] = SampleLabel::Noise;
                i += 1;
            }
            Some(v) if v > cfg.v_sac => {
                out[i] = SampleLabel::Saccade;
                i += 1;
            }
            Some(_) => {
                let a = i;
                while i < rec.len() && fs.speed[i].is_some_and(|v| v <= cfg.v_sac) {
                    i += 1;
                }
                let pos: Vec<[f64; 2]> = rec.samples[a..i].iter().map(|s| s.pos()).collect();
                for (k, fix) in naive_idt(&pos, window, cfg.dispersion_deg)
                    .into_iter()
                    .enumerate()
                {
                    if fix {
                        out[a + k] = SampleLabel::Fixation;
                    }
                }
            }
        }
    }
    out
}

#[test]
fn ivdt_matches_naive_oracle_on_synthetic_scenarios() {
    for (sc, disp) in [
        (Scenario::standard(), 1.0),
        (Scenario::pursuit_heavy(), 1.0),
        (Scenario::standard(), 0.6),
        (
            Scenario {
                seed: 9,
                ..Scenario::standard()
            },
            1.5,
        ),
    ] {
        let out = generate(&sc).unwrap();
        let cfg = ThresholdConfig {
            dispersion_deg: disp,
            ..Default::default()
        };
        let fs = compute_features(&out.recording, 100.0).unwrap();
        let fast = ivdt(&fs, &out.recording, &cfg).unwrap();
        let slow = naive_ivdt(&out.recording, &fs, &cfg);
        assert_eq!(fast, slow);
        assert!(fast.contains(&SampleLabel::Fixation) && fast.contains(&SampleLabel::Pursuit));
    }
}

#[test]
fn ivvt_with_equal_thresholds_has_no_pursuit() {
    let out = generate(&Scenario::standard()).unwrap();
    let fs = compute_features(&out.recording, 100.0).unwrap();
    let cfg = ThresholdConfig {
        v_low: 40.0,
        v_high: 40.0,
        ..Default::default()
    };
    let labels = ivvt(&fs, &cfg);
    assert!(!labels.contains(&SampleLabel::Pursuit));
    for (l, v) in labels.iter().zip(&fs.speed) {
        assert_eq!(*l == SampleLabel::Saccade, v.unwrap() > 40.0);
    }
}

#[test]
fn three_state_recovers_speed_modes() {
    // speed modes 0.5 / 15 / 300 deg/s in long blocks
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let blocks = [
        (0.5, 400),
        (15.0, 300),
        (300.0, 40),
        (0.5, 300),
        (15.0, 400),
        (300.0, 40),
        (0.5, 200),
    ];
    let mut speed = Vec::new();
    let mut truth = Vec::new();
    for (v, n) in blocks {
        let kind = match v {
            0.5 => SampleLabel::Fixation,
            15.0 => SampleLabel::Pursuit,
            _ => SampleLabel::Saccade,
        };
        for _ in 0..n {
            speed.push(Some(v * (1.0 + 0.1 * (rng.random::<f64>() - 0.5))));
            truth.push(kind);
        }
    }
    let n = speed.len();
    let fs = FeatureSeries {
        speed,
        accel: vec![Some(0.0); n],
        disp: vec![Some(0.0); n],
        window_ms: 100.0,
    };
    let rec = GazeRecording::new(
        (0..n)
            .map(|i| GazeSample::new(i as f64, 0.0, 0.0))
            .collect(),
        1000.0,
    )
    .unwrap();
    let r = three_state_hmm(
        &fs,
        &rec,
        &ThresholdConfig::default(),
        &HierarchicalConfig::default(),
    )
    .unwrap();
    assert_eq!(r.raw_labels, truth);
    assert!(!r.degenerate);
    let means = r.fit.as_ref().unwrap().model.means();
    let ordered: Vec<f64> = r.state_order.iter().map(|&s| means[s]).collect();
    assert!(ordered[0] < ordered[1] && ordered[1] < ordered[2]);
}

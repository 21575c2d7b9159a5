//! Property tests for the event merge: gap/distance criteria, monotonicity in
//! the gap threshold and label-set invariants.

use hhmm_core::hierarchy::{merge_events, HierarchicalConfig};
use hhmm_core::{GazeRecording, GazeSample, SampleLabel};
use proptest::prelude::*;

use SampleLabel::{Fixation as F, Noise as N, Pursuit as P, Saccade as S};

fn recording(pos: &[[f64; 2]]) -> GazeRecording {
    let samples = pos
        .iter()
        .enumerate()
        .map(|(i, p)| GazeSample::new(i as f64, p[0], p[1]))
        .collect();
    GazeRecording::new(samples, 1000.0).unwrap()
}

fn kind() -> impl Strategy<Value = SampleLabel> {
    prop_oneof![Just(F), Just(S), Just(P)]
}

/// Two same-kind events around an interruption of another kind that is long
/// enough not to be absorbed on its own.
#[derive(Debug, Clone)]
struct Pair {
    kind: SampleLabel,
    middle: SampleLabel,
    gap: usize,
    a: [f64; 2],
    b: [f64; 2],
}

fn pair() -> impl Strategy<Value = Pair> {
    (
        kind(),
        kind(),
        1usize..160,
        -2.0..2.0f64,
        -2.0..2.0f64,
        0.0..1.0f64,
        0.0..std::f64::consts::TAU,
    )
        .prop_filter_map(
            "middle must differ and be long enough",
            |(kind, middle, gap, x, y, d, ang)| {
                let min = HierarchicalConfig::default().min_duration(middle) as usize;
                (kind != middle && gap >= min).then(|| Pair {
                    kind,
                    middle,
                    gap,
                    a: [x, y],
                    b: [x + d * ang.cos(), y + d * ang.sin()],
                })
            },
        )
}

fn layout(p: &Pair) -> (Vec<SampleLabel>, GazeRecording) {
    let outer = 60;
    let mut labels = vec![p.kind; outer];
    labels.extend(std::iter::repeat_n(p.middle, p.gap));
    labels.extend(std::iter::repeat_n(p.kind, outer));
    let mid = [(p.a[0] + p.b[0]) / 2.0, (p.a[1] + p.b[1]) / 2.0];
    let mut pos = vec![p.a; outer];
    pos.extend(std::iter::repeat_n(mid, p.gap));
    pos.extend(std::iter::repeat_n(p.b, outer));
    (labels, recording(&pos))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn merges_exactly_when_both_criteria_hold(p in pair()) {
        let cfg = HierarchicalConfig::default();
        let (labels, rec) = layout(&p);
        let r = merge_events(&labels, &rec, &cfg).unwrap();
        let expect = p.gap as f64 <= cfg.merge_gap_ms && dist(p.a, p.b) <= cfg.merge_dist_deg;
        let merged = r.events.len() == 1;
        prop_assert_eq!(merged, expect, "gap {} dist {}", p.gap, dist(p.a, p.b));
        if merged {
            prop_assert!(r.labels.iter().all(|l| *l == p.kind));
        } else {
            prop_assert_eq!(&r.labels, &labels);
            prop_assert_eq!(r.events.len(), 3);
        }
    }

    #[test]
    fn event_count_is_monotone_in_gap(
        runs in prop::collection::vec((prop_oneof![Just(F), Just(S), Just(P), Just(N)], 1usize..90, -1.0..1.0f64), 1..25),
        g1 in 0.0..200.0f64,
        g2 in 0.0..200.0f64,
    ) {
        let mut labels = Vec::new();
        let mut pos = Vec::new();
        for (k, len, x) in &runs {
            labels.extend(std::iter::repeat_n(*k, *len));
            pos.extend(std::iter::repeat_n([*x, 0.0], *len));
        }
        let rec = recording(&pos);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let count = |gap: f64| {
            let cfg = HierarchicalConfig { merge_gap_ms: gap, ..Default::default() };
            merge_events(&labels, &rec, &cfg).unwrap().events.len()
        };
        prop_assert!(count(hi) <= count(lo));
    }

    #[test]
    fn label_invariants(
        runs in prop::collection::vec((prop_oneof![Just(F), Just(S), Just(P), Just(N)], 1usize..90), 1..25),
    ) {
        let mut labels = Vec::new();
        for (k, len) in &runs {
            labels.extend(std::iter::repeat_n(*k, *len));
        }
        let pos: Vec<[f64; 2]> = (0..labels.len()).map(|i| [0.001 * i as f64, 0.0]).collect();
        let rec = recording(&pos);
        let r = merge_events(&labels, &rec, &HierarchicalConfig::default()).unwrap();
        prop_assert_eq!(r.labels.len(), labels.len());
        for (a, b) in labels.iter().zip(&r.labels) {
            // noise is a hard boundary: it never changes, and nothing becomes noise
            prop_assert_eq!(*a == N, *b == N);
        }
        // events tile the non-noise samples in order, without overlap
        let covered: usize = r.events.iter().map(|e| e.end - e.start).sum();
        prop_assert_eq!(covered, r.labels.iter().filter(|l| **l != N).count());
        for w in r.events.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for e in &r.events {
            prop_assert!(r.labels[e.start..e.end].iter().all(|l| *l == e.kind));
        }
    }
}

#[test]
fn boundary_values_merge() {
    let cfg = HierarchicalConfig::default();
    for (gap, d, expect) in [
        (75, 0.5, true),
        (76, 0.5, false),
        (75, 0.5000001, false),
        (50, 0.0, true),
    ] {
        let p = Pair {
            kind: F,
            middle: P,
            gap,
            a: [0.0, 0.0],
            b: [d, 0.0],
        };
        let (labels, rec) = layout(&p);
        let r = merge_events(&labels, &rec, &cfg).unwrap();
        assert_eq!(r.events.len() == 1, expect, "gap {gap} dist {d}");
    }
}

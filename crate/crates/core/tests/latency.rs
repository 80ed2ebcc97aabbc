use std::f64::consts::TAU;

use extremctl_core::latency::synth::{reciprocating, BarScene};
use extremctl_core::latency::*;
use proptest::prelude::*;

const FPS: f64 = 60.0;
const FRAMES: usize = 240;

fn flow_lag(scene: &BarScene, delay: f64) -> LatencyReport {
    let a = scene.render_sequence(&reciprocating, FPS, FRAMES, 0.0);
    let b = scene.render_sequence(&reciprocating, FPS, FRAMES, delay);
    let region = scene.region();
    analyze_frames(&a, &b, &region, &region, FPS, &FlowParams::default(), DEFAULT_MAX_LAG).unwrap()
}

#[test]
fn rendered_four_frame_delay() {
    let report = flow_lag(&BarScene::front_view(), 4.0 / FPS);
    assert!((report.lag_ms - 66.7).abs() <= 8.3, "{} ms", report.lag_ms);
    assert!(!report.low_confidence);
}

#[test]
fn camera_views_and_tracking_agree() {
    let delay = 0.055;
    let front = flow_lag(&BarScene::front_view(), delay);
    let side = flow_lag(&BarScene::side_view(), delay);
    assert!((front.lag_ms - side.lag_ms).abs() <= 1e3 / FPS, "{} vs {}", front.lag_ms, side.lag_ms);

    let scene = BarScene::front_view();
    let tracked = estimate_lag(
        &scene.tracked_position(&reciprocating, FPS, FRAMES, 0.0),
        &scene.tracked_position(&reciprocating, FPS, FRAMES, delay),
        DEFAULT_MAX_LAG,
    )
    .unwrap();
    assert!((tracked.lag * 1e3 - front.lag_ms).abs() <= 1e3 / FPS);
    assert!((tracked.lag - delay).abs() <= 0.5 / FPS);
}

#[test]
fn precomputed_flows_give_the_same_answer() {
    let dir = tempfile::tempdir().unwrap();
    let scene = BarScene::front_view();
    let params = FlowParams::default();
    let frames = scene.render_sequence(&reciprocating, FPS, 120, 0.0);
    let flows = flow_sequence(&frames, &params).unwrap();
    io::write_flows(dir.path(), &flows).unwrap();
    let back = io::read_flows(dir.path()).unwrap();
    assert_eq!(back, flows);
    let region = scene.region();
    assert_eq!(
        flow_signal(&back, &region, FPS).unwrap(),
        flow_signal(&flows, &region, FPS).unwrap()
    );
}

fn base(n: usize, f1: f64, f2: f64, phase: f64) -> impl Fn(i64) -> f64 {
    move |i| {
        let t = i as f64 / n as f64;
        (TAU * f1 * t).sin() + 0.4 * (TAU * f2 * t + phase).sin()
    }
}

fn signal(f: &impl Fn(i64) -> f64, shift: i64, n: usize, scale: f64) -> MotionSignal {
    MotionSignal::new((0..n as i64).map(|i| scale * f(i - shift)).collect(), 60.0, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extra_delay_shifts_integer_lag(f1 in 3.0f64..9.0, f2 in 10.0f64..20.0, phase in 0.0f64..6.0, d in -10i64..10, k in 0i64..8) {
        let n = 400;
        let f = base(n, f1, f2, phase);
        let a = signal(&f, 0, n, 1.0);
        let lag0 = estimate_lag(&a, &signal(&f, d, n, 1.0), 1.0).unwrap();
        let lag1 = estimate_lag(&a, &signal(&f, d + k, n, 1.0), 1.0).unwrap();
        prop_assert_eq!(lag0.lag_samples.round() as i64, d);
        prop_assert_eq!(lag1.lag_samples.round() as i64, d + k);
    }

    #[test]
    fn amplitude_does_not_matter(f1 in 3.0f64..9.0, d in -15i64..15, sa in 0.01f64..100.0, sb in 0.01f64..100.0) {
        let n = 300;
        let f = base(n, f1, 13.0, 0.3);
        let ref_est = estimate_lag(&signal(&f, 0, n, 1.0), &signal(&f, d, n, 1.0), 1.0).unwrap();
        let est = estimate_lag(&signal(&f, 0, n, sa), &signal(&f, d, n, sb), 1.0).unwrap();
        prop_assert!((est.lag - ref_est.lag).abs() < 1e-9);
    }

    #[test]
    fn swapping_inputs_negates_lag(f1 in 3.0f64..9.0, d in -20i64..20) {
        let n = 300;
        let f = base(n, f1, 17.0, 1.1);
        let (a, b) = (signal(&f, 0, n, 1.0), signal(&f, d, n, 0.5));
        let ab = estimate_lag(&a, &b, 1.0).unwrap();
        let ba = estimate_lag(&b, &a, 1.0).unwrap();
        prop_assert!((ab.lag + ba.lag).abs() < 1e-9, "{} vs {}", ab.lag, ba.lag);
    }

    #[test]
    // the window reaches 0.45 of a period, so the peak keeps a neighbor on
    // each side for refinement
    fn sub_sample_shift_of_a_sinusoid(period in 12.0f64..80.0, frac in -0.3f64..0.3) {
        let n = 600;
        let shift = frac * period;
        let w = TAU / period;
        let a = MotionSignal::new((0..n).map(|i| (w * i as f64).sin()).collect(), 100.0, 0.0).unwrap();
        let b = MotionSignal::new((0..n).map(|i| (w * (i as f64 - shift)).sin()).collect(), 100.0, 0.0).unwrap();
        let est = estimate_lag(&a, &b, period * 0.45 / 100.0).unwrap();
        prop_assert!((est.lag_samples - shift).abs() < 0.1, "period {} shift {} got {}", period, shift, est.lag_samples);
    }
}

use std::sync::Arc;
use std::time::Instant;

use extremctl_core::mapping::reference_human_neutral;
use extremctl_core::pipeline::*;
use proptest::prelude::*;

const ETAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];

#[test]
fn control_lag_matches_prediction_plus_half_period() {
    let cfg = PipelineConfig::default().with_eta(0.9);
    let b = latency_budget(&run_pipeline(&cfg, 1).unwrap()).unwrap();
    let expected_ms = 2.0 * (1.0 - 0.9) / 10.0 * 1e3 + 0.5 * cfg.control_dt() * 1e3;
    assert!((b.control_ms - expected_ms).abs() <= 15.0, "{b:?}");
    assert!(b.accounting_ok(), "{b:?}");
}

#[test]
fn injected_delay_shows_up_in_overall_latency() {
    let base = PipelineConfig::default().with_eta(0.6);
    let before = latency_budget(&run_pipeline(&base, 1).unwrap()).unwrap();
    let delayed = PipelineConfig {
        network_delay: 0.030,
        ..base
    };
    let after = latency_budget(&run_pipeline(&delayed, 1).unwrap()).unwrap();
    let shift = after.overall_ms - before.overall_ms;
    assert!((shift - 30.0).abs() <= 5.0, "{shift} ms");
}

#[test]
fn eta_sweep_fits_a_unit_slope() {
    let report = sweep_eta(&PipelineConfig::default(), &ETAS, 1).unwrap();
    for w in report.budgets.windows(2) {
        assert!(w[1].control_ms < w[0].control_ms, "{:?}", report.budgets);
    }
    for b in &report.budgets {
        assert!(b.accounting_ok(), "{b:?}");
    }
    let overhead = report.budgets[0].transport_ms + report.budgets[0].hold_ms;
    assert!((report.fit.slope - 1.0).abs() <= 0.15, "{:?}", report.fit);
    assert!((report.fit.intercept - overhead).abs() <= 10.0, "{:?} vs {overhead}", report.fit);
}

#[test]
fn staleness_bounded_by_one_capture_period() {
    let cfg = PipelineConfig {
        duration: 4.0,
        settle: 1.0,
        max_lag: 0.5,
        ..PipelineConfig::default()
    };
    let rec = run_pipeline(&cfg, 1).unwrap();
    let bound = ((1.0 / cfg.capture_rate + 1.0 / cfg.lowlevel_rate) * 1e9) as u64;
    let stale: Vec<u64> = rec.reads.iter().filter_map(|r| r.staleness_ns).collect();
    assert_eq!(stale.len(), rec.reads.len());
    assert!(stale.iter().all(|&s| s <= bound), "max {:?}", stale.iter().max());
}

fn lossy() -> PipelineConfig {
    PipelineConfig {
        network_delay: 0.02,
        jitter_std: 0.01,
        drop_prob: 0.2,
        duration: 4.0,
        settle: 1.0,
        max_lag: 0.5,
        ..PipelineConfig::default()
    }
}

#[test]
fn consumer_never_sees_older_frames() {
    let rec = run_pipeline(&lossy(), 3).unwrap();
    let seqs: Vec<u32> = rec.reads.iter().filter_map(|r| r.seq).collect();
    assert!(seqs.windows(2).all(|w| w[1] >= w[0]));
    // jitter this large does reorder arrivals, so the reader had work to do
    let mut arrivals: Vec<(u64, u32)> = rec.frames.iter().filter_map(|f| f.arrival_ns.map(|a| (a, f.seq))).collect();
    arrivals.sort();
    assert!(arrivals.windows(2).any(|w| w[1].1 < w[0].1));
    assert!(rec.frames.iter().any(|f| f.arrival_ns.is_none()));
}

#[test]
fn runs_are_reproducible() {
    let a = run_pipeline(&lossy(), 11).unwrap();
    let b = run_pipeline(&lossy(), 11).unwrap();
    let c = run_pipeline(&lossy(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.frames, c.frames);
}

#[test]
fn stalled_consumer_does_not_hold_up_the_producer() {
    let mailbox = Arc::new(Mailbox::new());
    let links = reference_human_neutral(1.0, 0.6);
    mailbox.write(PoseFrame::from_links(0, 0, &links));
    let mut reader = Reader::new(mailbox.clone());
    // the consumer grabs a frame and then sits on it
    let held = reader.read(0).unwrap();

    let writer = {
        let mailbox = mailbox.clone();
        std::thread::spawn(move || {
            let start = Instant::now();
            for seq in 1..=20_000u32 {
                mailbox.write(PoseFrame::from_links(seq, seq as u64 * 8_333_333, &links));
            }
            start.elapsed()
        })
    };
    let elapsed = writer.join().unwrap();
    // 20k frames is almost three minutes of capture at 120 Hz
    assert!(elapsed.as_secs_f64() < 2.0, "{elapsed:?}");
    assert_eq!(held.frame.seq, 0);
    assert_eq!(mailbox.peek().unwrap().seq, 20_000);
    assert_eq!(reader.read(0).unwrap().frame.seq, 20_000);
}

#[test]
fn record_signals_feed_the_lag_estimator_through_csv() {
    let rec = run_pipeline(&PipelineConfig::default().with_eta(0.4), 1).unwrap();
    let human = extremctl_core::latency::io::signal_csv(&rec.human_signal(), "human_rad");
    let robot = extremctl_core::latency::io::signal_csv(&rec.robot_signal(), "robot_rad");
    let a = extremctl_core::latency::io::parse_signal_csv(&human).unwrap();
    let b = extremctl_core::latency::io::parse_signal_csv(&robot).unwrap();
    let lag = extremctl_core::latency::estimate_lag(&a, &b, 1.0).unwrap();
    let direct = latency_budget(&rec).unwrap();
    assert!((lag.lag * 1e3 - direct.overall_ms).abs() < 1e-3);
}

fn wire_link() -> impl Strategy<Value = WireLink> {
    (
        prop::array::uniform3(-10.0f64..10.0),
        prop::array::uniform4(-1.0f64..1.0).prop_filter("non-zero", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-3),
    )
        .prop_map(|(translation, q)| {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            WireLink {
                translation,
                quaternion: q.map(|x| x / n),
            }
        })
}

proptest! {
    #[test]
    fn frames_roundtrip_bit_exactly(seq in any::<u32>(), ts in any::<u64>(), links in prop::array::uniform6(wire_link())) {
        let frame = PoseFrame { seq, timestamp_ns: ts, links };
        let bytes = encode_frame(&frame);
        let back = decode_frame(&bytes).unwrap();
        prop_assert_eq!(encode_frame(&back), bytes);
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn truncation_is_always_a_short_read(len in 0usize..FRAME_SIZE) {
        let frame = PoseFrame::from_links(1, 2, &reference_human_neutral(1.0, 0.6));
        let bytes = encode_frame(&frame);
        prop_assert_eq!(decode_frame(&bytes[..len]), Err(CodecError::ShortRead { got: len }));
    }
}

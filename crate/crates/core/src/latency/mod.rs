//! End-to-end latency from paired motion observations.
//!
//! Two recordings of the same motion (say the operator and the robot) are
//! reduced to 1-D signals, standardized, and aligned: the lag is the shift
//! that maximizes their Pearson correlation, refined below one sample by a
//! parabola through the peak. Signals can come from optical flow over image
//! regions, precomputed flow fields, or directly tracked positions.

pub mod flow;
pub mod io;
pub mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flow::{block_match_flow, project_region, FlowField, FlowParams, RegionSpec};

/// Lags searched by default, s.
pub const DEFAULT_MAX_LAG: f64 = 1.0;
/// Peak correlations below this are flagged.
pub const LOW_CONFIDENCE: f64 = 0.6;
/// Shortest overlap a tested lag may leave, s.
pub const MIN_OVERLAP: f64 = 1.0;

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("signal is constant (std {0:e}); nothing to align")]
    ConstantSignal(f64),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("signals overlap by too little: {have} samples, need {need}")]
    InsufficientOverlap { have: usize, need: usize },
    #[error("frame sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("region {region:?} does not fit a {width}x{height} field")]
    OutOfBounds { region: RegionSpec, width: u32, height: u32 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("flow file: {0}")]
    BadFlowFile(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSignal {
    pub samples: Vec<f64>,
    /// Hz
    pub rate: f64,
    /// Time of the first sample, s.
    pub t0: f64,
}

impl MotionSignal {
    pub fn new(samples: Vec<f64>, rate: f64, t0: f64) -> Result<Self, LatencyError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(LatencyError::InvalidSignal(format!("rate {rate} must be positive")));
        }
        if samples.len() < 2 {
            return Err(LatencyError::InvalidSignal(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) || !t0.is_finite() {
            return Err(LatencyError::InvalidSignal("non-finite sample".into()));
        }
        Ok(MotionSignal { samples, rate, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Keeps samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, LatencyError> {
        let end = end.min(self.len());
        if start >= end {
            return Err(LatencyError::InvalidSignal(format!("empty slice {start}..{end}")));
        }
        MotionSignal::new(self.samples[start..end].to_vec(), self.rate, self.time(start))
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Zero mean, unit (population) variance.
pub fn standardize(signal: &MotionSignal) -> Result<MotionSignal, LatencyError> {
    let (mean, std) = mean_std(&signal.samples);
    if std <= 1e-12 {
        return Err(LatencyError::ConstantSignal(std));
    }
    Ok(MotionSignal {
        samples: signal.samples.iter().map(|v| (v - mean) / std).collect(),
        ..*signal
    })
}

/// Pearson correlation of two equal-length slices; `None` if either is flat.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa <= 1e-12 || sb <= 1e-12 {
        return None;
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Some((cov / (sa * sb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    /// Positive when `b` trails `a`, s.
    pub lag: f64,
    /// The same lag in samples, excluding any start-time offset.
    pub lag_samples: f64,
    /// Peak correlation.
    pub confidence: f64,
    pub low_confidence: bool,
    /// `(lag s, correlation)` for every integer lag tried.
    pub correlation: Vec<(f64, f64)>,
}

/// Time offset between `a` and `b` by waveform alignment.
///
/// For each integer lag `k` in `±max_lag` the Pearson correlation of
/// `a[i]` against `b[i + k]` is taken over their overlap; lags that would
/// leave less than one second of overlap (or half the shorter signal, if that
/// is smaller) are not tried. The best lag is refined with a parabola through
/// it and its neighbors. Different start times are accounted for.
pub fn estimate_lag(a: &MotionSignal, b: &MotionSignal, max_lag: f64) -> Result<LagEstimate, LatencyError> {
    if ((a.rate - b.rate) / a.rate).abs() > 1e-9 {
        return Err(LatencyError::RateMismatch(a.rate, b.rate));
    }
    let rate = a.rate;
    let a = standardize(a)?;
    let b = standardize(b)?;
    let (na, nb) = (a.len() as i64, b.len() as i64);
    let shorter = na.min(nb);
    let need = ((MIN_OVERLAP * rate).ceil() as i64).min(shorter / 2).max(3);
    if shorter < need {
        return Err(LatencyError::InsufficientOverlap {
            have: shorter as usize,
            need: need as usize,
        });
    }
    let reach = (max_lag.max(0.0) * rate).floor() as i64;

    let mut curve: Vec<(i64, f64)> = Vec::new();
    for k in -reach..=reach {
        let start = 0.max(-k);
        let end = na.min(nb - k);
        if end - start < need {
            continue;
        }
        let (s, e) = (start as usize, end as usize);
        let sa = &a.samples[s..e];
        let sb = &b.samples[(start + k) as usize..(end + k) as usize];
        if let Some(r) = pearson(sa, sb) {
            curve.push((k, r));
        }
    }
    if curve.is_empty() {
        return Err(LatencyError::InsufficientOverlap {
            have: shorter as usize,
            need: need as usize,
        });
    }

    // ties resolve to the smallest |k|, then the negative side
    let (best, &(k0, r0)) = curve
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| {
            x.1.partial_cmp(&y.1)
                .unwrap()
                .then_with(|| y.0.abs().cmp(&x.0.abs()))
                .then_with(|| y.0.cmp(&x.0))
        })
        .unwrap();
    let mut offset = 0.0;
    if best > 0 && best + 1 < curve.len() && curve[best - 1].0 == k0 - 1 && curve[best + 1].0 == k0 + 1 {
        let (rm, rp) = (curve[best - 1].1, curve[best + 1].1);
        let denom = rm - 2.0 * r0 + rp;
        if denom < 0.0 {
            offset = (0.5 * (rm - rp) / denom).clamp(-0.5, 0.5);
        }
    }
    let lag_samples = k0 as f64 + offset;
    let start_offset = b.t0 - a.t0;
    Ok(LagEstimate {
        lag: lag_samples / rate + start_offset,
        lag_samples,
        confidence: r0,
        low_confidence: r0 < LOW_CONFIDENCE,
        correlation: curve.iter().map(|&(k, r)| (k as f64 / rate + start_offset, r)).collect(),
    })
}

/// Everything needed to plot two motions before and after alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub lag_ms: f64,
    pub lag_samples: f64,
    pub confidence: f64,
    pub low_confidence: bool,
    /// Hz
    pub rate: f64,
    pub signal_a: MotionSignal,
    pub signal_b: MotionSignal,
    /// Time stamps of `signal_b` moved back by the lag, s.
    pub aligned_b_times: Vec<f64>,
    pub correlation: Vec<(f64, f64)>,
}

/// Standardizes both signals and aligns them.
pub fn analyze_signals(a: &MotionSignal, b: &MotionSignal, max_lag: f64) -> Result<LatencyReport, LatencyError> {
    let est = estimate_lag(a, b, max_lag)?;
    let sa = standardize(a)?;
    let sb = standardize(b)?;
    Ok(LatencyReport {
        lag_ms: est.lag * 1e3,
        lag_samples: est.lag_samples,
        confidence: est.confidence,
        low_confidence: est.low_confidence,
        rate: a.rate,
        aligned_b_times: sb.times().into_iter().map(|t| t - est.lag).collect(),
        signal_a: sa,
        signal_b: sb,
        correlation: est.correlation,
    })
}

/// Reduces a flow sequence to the region's motion signal. Flow `i` is taken
/// to describe motion between frames `i` and `i + 1`, stamped at their
/// midpoint.
pub fn flow_signal(flows: &[FlowField], region: &RegionSpec, fps: f64) -> Result<MotionSignal, LatencyError> {
    let samples = flows
        .iter()
        .map(|f| project_region(f, region))
        .collect::<Result<Vec<_>, _>>()?;
    MotionSignal::new(samples, fps, 0.5 / fps)
}

/// Flow between each pair of consecutive frames.
pub fn flow_sequence(frames: &[image::GrayImage], params: &FlowParams) -> Result<Vec<FlowField>, LatencyError> {
    frames
        .windows(2)
        .map(|w| block_match_flow(&w[0], &w[1], params))
        .collect()
}

/// Full pipeline from two frame sequences.
pub fn analyze_frames(
    frames_a: &[image::GrayImage],
    frames_b: &[image::GrayImage],
    region_a: &RegionSpec,
    region_b: &RegionSpec,
    fps: f64,
    params: &FlowParams,
    max_lag: f64,
) -> Result<LatencyReport, LatencyError> {
    let a = flow_signal(&flow_sequence(frames_a, params)?, region_a, fps)?;
    let b = flow_signal(&flow_sequence(frames_b, params)?, region_b, fps)?;
    analyze_signals(&a, &b, max_lag)
}

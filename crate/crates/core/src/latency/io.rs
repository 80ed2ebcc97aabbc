//! File formats: numbered PGM frames, XFLW flow fields, `t,value` CSV signals.
//!
//! An XFLW file is a 16-byte header (`XFLW`, width u32, height u32, four
//! zero bytes) followed by the `u` plane then the `v` plane, each
//! `width * height` little-endian f32 in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder};

use super::{FlowField, LatencyError, MotionSignal};

pub const FLOW_MAGIC: &[u8; 4] = b"XFLW";
const FLOW_HEADER: usize = 16;

/// Files in `dir` with extension `ext`, ordered by the number in their name.
pub fn numbered_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, LatencyError> {
    let mut files: Vec<(u64, String, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
            (digits.parse().unwrap_or(u64::MAX), stem, p)
        })
        .collect();
    files.sort();
    Ok(files.into_iter().map(|(_, _, p)| p).collect())
}

pub fn read_frames(dir: &Path) -> Result<Vec<GrayImage>, LatencyError> {
    numbered_files(dir, "pgm")?
        .iter()
        .map(|p| Ok(image::open(p)?.to_luma8()))
        .collect()
}

/// Writes `frame_00000.pgm`, `frame_00001.pgm`, ... as binary PGM.
pub fn write_frames(dir: &Path, frames: &[GrayImage]) -> Result<(), LatencyError> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        fs::write(dir.join(format!("frame_{i:05}.pgm")), encode_pgm(f)?)?;
    }
    Ok(())
}

/// Binary (P5) PGM bytes.
pub fn encode_pgm(frame: &GrayImage) -> Result<Vec<u8>, LatencyError> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(frame.as_raw(), frame.width(), frame.height(), ExtendedColorType::L8)?;
    Ok(out)
}

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLOW_HEADER + 8 * flow.u.len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&flow.width.to_le_bytes());
    out.extend_from_slice(&flow.height.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for x in flow.u.iter().chain(&flow.v) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField, LatencyError> {
    if bytes.len() < FLOW_HEADER {
        return Err(LatencyError::BadFlowFile(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != FLOW_MAGIC {
        return Err(LatencyError::BadFlowFile("missing XFLW magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (width, height) = (word(4), word(8));
    let n = width as usize * height as usize;
    let expected = FLOW_HEADER + 8 * n;
    if bytes.len() != expected {
        return Err(LatencyError::BadFlowFile(format!(
            "{width}x{height} field needs {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let floats: Vec<f32> = bytes[FLOW_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let flow = FlowField {
        width,
        height,
        u: floats[..n].to_vec(),
        v: floats[n..].to_vec(),
    };
    flow.validate()?;
    Ok(flow)
}

pub fn read_flows(dir: &Path) -> Result<Vec<FlowField>, LatencyError> {
    numbered_files(dir, "xflw")?
        .iter()
        .map(|p| decode_flow(&fs::read(p)?))
        .collect()
}

pub fn write_flows(dir: &Path, flows: &[FlowField]) -> Result<(), LatencyError> {
    fs::create_dir_all(dir)?;
    for (i, f) in flows.iter().enumerate() {
        fs::write(dir.join(format!("flow_{i:05}.xflw")), encode_flow(f))?;
    }
    Ok(())
}

/// Reads a two-column CSV (time in seconds, value) with a header row. The
/// rate is taken from the time column, which must be uniform.
pub fn parse_signal_csv(text: &str) -> Result<MotionSignal, LatencyError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, LatencyError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LatencyError::InvalidSignal(format!("row {}: expected t,value", line + 2)))
        };
        t.push(field(0)?);
        v.push(field(1)?);
    }
    if t.len() < 2 {
        return Err(LatencyError::InvalidSignal(format!("need at least 2 rows, got {}", t.len())));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(LatencyError::InvalidSignal("time column must increase".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-3 * dt {
            return Err(LatencyError::InvalidSignal(format!(
                "non-uniform sampling at row {}: step {} vs {dt}",
                i + 3,
                w[1] - w[0]
            )));
        }
    }
    MotionSignal::new(v, 1.0 / dt, t[0])
}

pub fn read_signal_csv(path: &Path) -> Result<MotionSignal, LatencyError> {
    parse_signal_csv(&fs::read_to_string(path)?)
}

/// `t_s,<value_header>` rows.
pub fn signal_csv(signal: &MotionSignal, value_header: &str) -> String {
    let mut out = format!("t_s,{value_header}\n");
    for (t, v) in signal.times().iter().zip(&signal.samples) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

//! Block-matching optical flow and region projection.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::LatencyError;

/// Dense per-pixel displacement from one frame to the next, pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    /// Row-major.
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        FlowField {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn uniform(width: u32, height: u32, u: f32, v: f32) -> Self {
        let n = (width * height) as usize;
        FlowField {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> (f32, f32) {
        let i = (y * self.width + x) as usize;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, x: u32, y: u32, u: f32, v: f32) {
        let i = (y * self.width + x) as usize;
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        let n = (self.width as usize) * (self.height as usize);
        if self.u.len() != n || self.v.len() != n {
            return Err(LatencyError::BadFlowFile(format!(
                "{}x{} field holds {} / {} values",
                self.width,
                self.height,
                self.u.len(),
                self.v.len()
            )));
        }
        if self.u.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(LatencyError::BadFlowFile("non-finite flow value".into()));
        }
        Ok(())
    }
}

/// Rectangle of interest and the direction motion is measured along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    /// Unit vector in image coordinates (x right, y down).
    pub direction: [f64; 2],
}

impl RegionSpec {
    /// Normalizes `direction`.
    pub fn new(x: u32, y: u32, w: u32, h: u32, direction: [f64; 2]) -> Result<Self, LatencyError> {
        let norm = direction[0].hypot(direction[1]);
        if w == 0 || h == 0 {
            return Err(LatencyError::InvalidRegion(format!("empty region {w}x{h}")));
        }
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(LatencyError::InvalidRegion(format!("direction {direction:?} has no length")));
        }
        Ok(RegionSpec {
            x,
            y,
            w,
            h,
            direction: [direction[0] / norm, direction[1] / norm],
        })
    }

    /// Parses `x,y,w,h,dx,dy`.
    pub fn parse(text: &str) -> Result<Self, LatencyError> {
        let bad = || LatencyError::InvalidRegion(format!("expected x,y,w,h,dx,dy, got {text:?}"));
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let int = |s: &str| s.parse::<u32>().map_err(|_| bad());
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
        RegionSpec::new(
            int(parts[0])?,
            int(parts[1])?,
            int(parts[2])?,
            int(parts[3])?,
            [real(parts[4])?, real(parts[5])?],
        )
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        let norm = self.direction[0].hypot(self.direction[1]);
        if self.w == 0 || self.h == 0 || (norm - 1.0).abs() > 1e-6 {
            return Err(LatencyError::InvalidRegion(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Mean flow inside `region`, projected on its direction.
pub fn project_region(flow: &FlowField, region: &RegionSpec) -> Result<f64, LatencyError> {
    region.validate()?;
    let fits = region.x.checked_add(region.w).is_some_and(|r| r <= flow.width)
        && region.y.checked_add(region.h).is_some_and(|b| b <= flow.height);
    if !fits {
        return Err(LatencyError::OutOfBounds {
            region: *region,
            width: flow.width,
            height: flow.height,
        });
    }
    let (mut su, mut sv) = (0.0f64, 0.0f64);
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            let (u, v) = flow.at(x, y);
            su += u as f64;
            sv += v as f64;
        }
    }
    let n = (region.w * region.h) as f64;
    Ok((su * region.direction[0] + sv * region.direction[1]) / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Block edge, pixels.
    pub block: u32,
    /// Search radius, pixels.
    pub radius: u32,
    /// Blocks whose mean absolute deviation from their own mean is below
    /// this many gray levels get zero flow.
    pub texture_threshold: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            block: 8,
            radius: 4,
            texture_threshold: 2.0,
        }
    }
}

struct Block {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
}

fn block_mean(img: &GrayImage, b: &Block, dx: i64, dy: i64) -> f32 {
    let mut s = 0u32;
    for y in 0..b.h {
        for x in 0..b.w {
            s += img.get_pixel((b.x0 as i64 + x as i64 + dx) as u32, (b.y0 as i64 + y as i64 + dy) as u32)[0] as u32;
        }
    }
    s as f32 / (b.w * b.h) as f32
}

/// Mean-removed sum of absolute differences between the block in `a` and
/// the block displaced by `(dx, dy)` in `b`.
fn sad(a: &GrayImage, b_img: &GrayImage, b: &Block, mean_a: f32, dx: i64, dy: i64) -> f32 {
    let mean_b = block_mean(b_img, b, dx, dy);
    let mut s = 0.0f32;
    for y in 0..b.h {
        for x in 0..b.w {
            let pa = a.get_pixel(b.x0 + x, b.y0 + y)[0] as f32 - mean_a;
            let pb = b_img.get_pixel((b.x0 as i64 + x as i64 + dx) as u32, (b.y0 as i64 + y as i64 + dy) as u32)[0]
                as f32
                - mean_b;
            s += (pa - pb).abs();
        }
    }
    s
}

/// Vertex of the parabola through `(−1, l)`, `(0, c)`, `(1, r)` when `c` is
/// its minimum.
fn parabolic_min(l: f32, c: f32, r: f32) -> f32 {
    let denom = l - 2.0 * c + r;
    if denom > 0.0 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

fn match_block(a: &GrayImage, b_img: &GrayImage, blk: &Block, params: &FlowParams) -> (f32, f32) {
    let mean_a = block_mean(a, blk, 0, 0);
    let mut texture = 0.0f32;
    for y in 0..blk.h {
        for x in 0..blk.w {
            texture += (a.get_pixel(blk.x0 + x, blk.y0 + y)[0] as f32 - mean_a).abs();
        }
    }
    if texture / ((blk.w * blk.h) as f32) < params.texture_threshold {
        return (0.0, 0.0);
    }

    let r = params.radius as i64;
    let (wi, hi) = (a.width() as i64, a.height() as i64);
    let inside = |dx: i64, dy: i64| {
        let (x0, y0) = (blk.x0 as i64 + dx, blk.y0 as i64 + dy);
        x0 >= 0 && y0 >= 0 && x0 + blk.w as i64 <= wi && y0 + blk.h as i64 <= hi
    };
    // candidates nearest first so that ties keep the smaller displacement
    let mut candidates: Vec<(i64, i64)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    candidates.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    let side = (2 * r + 1) as usize;
    let mut costs = vec![f32::INFINITY; side * side];
    let mut best = (0i64, 0i64);
    let mut best_cost = f32::INFINITY;
    for (dx, dy) in candidates {
        if !inside(dx, dy) {
            continue;
        }
        let c = sad(a, b_img, blk, mean_a, dx, dy);
        costs[((dy + r) as usize) * side + (dx + r) as usize] = c;
        if c < best_cost {
            best_cost = c;
            best = (dx, dy);
        }
    }
    if !best_cost.is_finite() {
        return (0.0, 0.0);
    }
    if best_cost == 0.0 {
        return (best.0 as f32, best.1 as f32);
    }
    let cost = |dx: i64, dy: i64| -> Option<f32> {
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let c = costs[((dy + r) as usize) * side + (dx + r) as usize];
        c.is_finite().then_some(c)
    };
    let (bx, by) = best;
    let sub_x = match (cost(bx - 1, by), cost(bx + 1, by)) {
        (Some(l), Some(rr)) => parabolic_min(l, best_cost, rr),
        _ => 0.0,
    };
    let sub_y = match (cost(bx, by - 1), cost(bx, by + 1)) {
        (Some(l), Some(rr)) => parabolic_min(l, best_cost, rr),
        _ => 0.0,
    };
    (bx as f32 + sub_x, by as f32 + sub_y)
}

/// Displacement of each block of `frame_a` into `frame_b`.
///
/// Blocks tile the frame (the last row and column may be narrower); every
/// pixel gets its block's vector. The match minimizes mean-removed absolute
/// differences, so uniform brightness changes do not register as motion,
/// and is refined below a pixel with a parabola along each axis.
pub fn block_match_flow(frame_a: &GrayImage, frame_b: &GrayImage, params: &FlowParams) -> Result<FlowField, LatencyError> {
    if frame_a.dimensions() != frame_b.dimensions() {
        let (a, b) = (frame_a.dimensions(), frame_b.dimensions());
        return Err(LatencyError::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    if params.block < 4 {
        return Err(LatencyError::InvalidRegion(format!("block {} must be at least 4", params.block)));
    }
    let (w, h) = frame_a.dimensions();
    let bs = params.block;
    let blocks: Vec<Block> = (0..h.div_ceil(bs))
        .flat_map(|by| {
            (0..w.div_ceil(bs)).map(move |bx| {
                let (x0, y0) = (bx * bs, by * bs);
                Block {
                    x0,
                    y0,
                    w: bs.min(w - x0),
                    h: bs.min(h - y0),
                }
            })
        })
        .collect();

    #[cfg(feature = "parallel")]
    let vectors: Vec<(f32, f32)> = {
        use rayon::prelude::*;
        blocks.par_iter().map(|b| match_block(frame_a, frame_b, b, params)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let vectors: Vec<(f32, f32)> = blocks.iter().map(|b| match_block(frame_a, frame_b, b, params)).collect();

    let mut flow = FlowField::zeros(w, h);
    for (blk, (u, v)) in blocks.iter().zip(vectors) {
        for y in blk.y0..blk.y0 + blk.h {
            for x in blk.x0..blk.x0 + blk.w {
                flow.set(x, y, u, v);
            }
        }
    }
    Ok(flow)
}

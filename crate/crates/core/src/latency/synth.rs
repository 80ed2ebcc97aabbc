//! Rendered test scenes: a textured bar moving back and forth over a flat
//! background, seen by one or more synthetic cameras.

use std::f64::consts::TAU;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MotionSignal, RegionSpec};

/// Quasi-periodic back-and-forth motion in `[-1, 1]`, like an operator
/// repeatedly raising and lowering an arm.
pub fn reciprocating(t: f64) -> f64 {
    (0.8 * (TAU * 0.9 * t).sin() + 0.2 * (TAU * 2.3 * t + 0.7).sin()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarScene {
    pub width: u32,
    pub height: u32,
    /// Bar size along and across its motion, pixels.
    pub bar_length: f64,
    pub bar_thickness: f64,
    /// Rest position of the bar's center, pixels.
    pub center: [f64; 2],
    /// Peak excursion, pixels.
    pub amplitude: f64,
    /// Unit motion direction in image coordinates.
    pub direction: [f64; 2],
    pub background: u8,
    pub texture_seed: u64,
    /// Texel edge, pixels.
    pub texel: f64,
}

impl BarScene {
    /// Camera A: bar moving horizontally.
    pub fn front_view() -> Self {
        BarScene {
            width: 128,
            height: 96,
            bar_length: 24.0,
            bar_thickness: 40.0,
            center: [64.0, 48.0],
            amplitude: 30.0,
            direction: [1.0, 0.0],
            background: 90,
            texture_seed: 11,
            texel: 2.0,
        }
    }

    /// Camera B: the same motion seen from elsewhere, vertical and smaller.
    pub fn side_view() -> Self {
        BarScene {
            width: 96,
            height: 128,
            bar_length: 18.0,
            bar_thickness: 32.0,
            center: [48.0, 64.0],
            amplitude: 22.0,
            direction: [0.0, -1.0],
            background: 120,
            texture_seed: 23,
            texel: 1.5,
        }
    }

    fn texture(&self) -> impl Fn(f64, f64) -> f64 {
        let cols = (self.bar_length / self.texel).ceil() as usize + 2;
        let rows = (self.bar_thickness / self.texel).ceil() as usize + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(self.texture_seed);
        let texels: Vec<f64> = (0..cols * rows).map(|_| rng.random_range(20.0..235.0)).collect();
        let texel = self.texel;
        // bilinear so sub-pixel motion changes pixel values smoothly
        move |s: f64, r: f64| {
            let (fs, fr) = (s / texel, r / texel);
            let (i, j) = (fs.floor(), fr.floor());
            let (a, b) = (fs - i, fr - j);
            let at = |i: f64, j: f64| {
                let (i, j) = ((i as usize).min(cols - 1), (j as usize).min(rows - 1));
                texels[j * cols + i]
            };
            (1.0 - a) * (1.0 - b) * at(i, j) + a * (1.0 - b) * at(i + 1.0, j) + (1.0 - a) * b * at(i, j + 1.0)
                + a * b * at(i + 1.0, j + 1.0)
        }
    }

    /// Bar displacement along the motion direction at time `t`, pixels.
    pub fn offset(&self, motion: &dyn Fn(f64) -> f64, t: f64) -> f64 {
        self.amplitude * motion(t)
    }

    pub fn render(&self, offset: f64) -> GrayImage {
        let tex = self.texture();
        let [dx, dy] = self.direction;
        // across-motion axis
        let (nx, ny) = (-dy, dx);
        let cx = self.center[0] + offset * dx;
        let cy = self.center[1] + offset * dy;
        let (hl, ht) = (0.5 * self.bar_length, 0.5 * self.bar_thickness);
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let s = px * dx + py * dy;
            let r = px * nx + py * ny;
            if s.abs() <= hl && r.abs() <= ht {
                Luma([tex(s + hl, r + ht).round() as u8])
            } else {
                Luma([self.background])
            }
        })
    }

    /// Frame `i` shows the motion at `i / fps - delay`.
    pub fn render_sequence(&self, motion: &dyn Fn(f64) -> f64, fps: f64, frames: usize, delay: f64) -> Vec<GrayImage> {
        (0..frames)
            .map(|i| self.render(self.offset(motion, i as f64 / fps - delay)))
            .collect()
    }

    /// Bar position along its direction per frame, as a tracker would report.
    pub fn tracked_position(&self, motion: &dyn Fn(f64) -> f64, fps: f64, frames: usize, delay: f64) -> MotionSignal {
        MotionSignal::new(
            (0..frames).map(|i| self.offset(motion, i as f64 / fps - delay)).collect(),
            fps,
            0.0,
        )
        .expect("a positive rate and at least two frames")
    }

    /// A region covering the bar's whole travel.
    pub fn region(&self) -> RegionSpec {
        let [dx, dy] = self.direction;
        let reach_x = (self.amplitude + 0.5 * self.bar_length) * dx.abs() + 0.5 * self.bar_thickness * dy.abs();
        let reach_y = (self.amplitude + 0.5 * self.bar_length) * dy.abs() + 0.5 * self.bar_thickness * dx.abs();
        let x0 = (self.center[0] - reach_x).floor().max(0.0) as u32;
        let y0 = (self.center[1] - reach_y).floor().max(0.0) as u32;
        let x1 = ((self.center[0] + reach_x).ceil() as u32).min(self.width);
        let y1 = ((self.center[1] + reach_y).ceil() as u32).min(self.height);
        RegionSpec::new(x0, y0, x1 - x0, y1 - y0, self.direction).expect("scene region is non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_moves_with_offset() {
        let scene = BarScene::front_view();
        let a = scene.render(0.0);
        let b = scene.render(10.0);
        // a background pixel just right of the bar at rest is covered once it moves right
        let x = (scene.center[0] + 0.5 * scene.bar_length + 4.0) as u32;
        let y = scene.center[1] as u32;
        assert_eq!(a.get_pixel(x, y)[0], scene.background);
        assert_ne!(b.get_pixel(x, y)[0], scene.background);
    }

    #[test]
    fn motion_is_bounded() {
        let v: Vec<f64> = (0..1000).map(|i| reciprocating(i as f64 * 0.01)).collect();
        assert!(v.iter().all(|x| x.abs() <= 1.0));
        assert!(v.iter().cloned().fold(f64::MIN, f64::max) > 0.8);
    }

    #[test]
    fn region_contains_travel() {
        for scene in [BarScene::front_view(), BarScene::side_view()] {
            let r = scene.region();
            assert!(r.x + r.w <= scene.width && r.y + r.h <= scene.height);
            r.validate().unwrap();
        }
    }
}

//! Seeded synthetic test clips.
//!
//! A random texture canvas (blobs, gratings and rectangles) is sampled
//! through a moving window, optionally with a global luminance change per
//! frame.

use crate::error::{Error, Result};
use crate::video_io::{FrameRate, Plane, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    /// Same frame repeated.
    Static,
    /// Global translation only.
    Translate,
    /// Translation plus a luminance ramp.
    Ramp,
    /// Translation plus random per-frame luminance jumps.
    Flicker,
}

impl std::str::FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ClipKind::Static),
            "translate" => Ok(ClipKind::Translate),
            "ramp" => Ok(ClipKind::Ramp),
            "flicker" => Ok(ClipKind::Flicker),
            other => Err(Error::Config(format!("unknown clip kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub kind: ClipKind,
    pub seed: u64,
    /// Pixels per frame, `(x, y)`. Ignored for static clips.
    pub velocity: (f64, f64),
    /// Luminance change per frame for ramp clips.
    pub ramp: f64,
    /// Largest luminance jump for flicker clips.
    pub flicker: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 352,
            height: 288,
            frames: 30,
            kind: ClipKind::Translate,
            seed: 1,
            velocity: (1.0, 0.5),
            ramp: 2.0,
            flicker: 12.0,
        }
    }
}

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn random(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut data = vec![110.0; width * height];
        let (w, h) = (width as f64, height as f64);
        let area = w * h / (64.0 * 64.0);

        for _ in 0..3 {
            let (fx, fy) = (rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25));
            let (amp, phase) = (rng.gen_range(4.0..10.0), rng.gen_range(0.0..std::f64::consts::TAU));
            for y in 0..height {
                for x in 0..width {
                    data[y * width + x] += amp * (fx * x as f64 + fy * y as f64 + phase).sin();
                }
            }
        }
        let rects = (6.0 * area).ceil() as usize;
        for _ in 0..rects {
            let (rw, rh) = (rng.gen_range(6..40), rng.gen_range(6..40));
            let (x0, y0) = (rng.gen_range(0..width), rng.gen_range(0..height));
            let v = rng.gen_range(-25.0..25.0);
            for y in y0..(y0 + rh).min(height) {
                for x in x0..(x0 + rw).min(width) {
                    data[y * width + x] += v;
                }
            }
        }
        let blobs = (10.0 * area).ceil() as usize;
        for _ in 0..blobs {
            let (cx, cy) = (rng.gen_range(0.0..w), rng.gen_range(0.0..h));
            let sigma: f64 = rng.gen_range(3.0..18.0);
            let amp = rng.gen_range(-35.0..35.0);
            let reach = (3.0 * sigma).ceil() as isize;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (x, y) = (cx as isize + dx, cy as isize + dy);
                    if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
                        continue;
                    }
                    let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    data[y as usize * width + x as usize] += amp * (-r2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        for v in data.iter_mut() {
            *v = v.clamp(40.0, 180.0);
        }
        Self { width, height, data }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |x: usize, y: usize| self.data[y * self.width + x];
        (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
    }
}

/// Builds the clip described by `cfg`; equal configs give equal clips.
pub fn synthesize(cfg: &SynthConfig) -> Result<Sequence> {
    if cfg.width == 0 || cfg.height == 0 || cfg.frames == 0 {
        return Err(Error::Config("synthetic clip needs positive size and frame count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (vx, vy) = match cfg.kind {
        ClipKind::Static => (0.0, 0.0),
        _ => cfg.velocity,
    };
    let span = cfg.frames as f64;
    let margin_x = (vx.abs() * span).ceil() as usize + 2;
    let margin_y = (vy.abs() * span).ceil() as usize + 2;
    let canvas = Canvas::random(cfg.width + margin_x, cfg.height + margin_y, &mut rng);
    // start where the window stays on the canvas for the whole clip
    let x_start = if vx < 0.0 { margin_x as f64 - 1.0 } else { 0.0 };
    let y_start = if vy < 0.0 { margin_y as f64 - 1.0 } else { 0.0 };

    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let offset = match cfg.kind {
            ClipKind::Ramp => cfg.ramp * t as f64,
            ClipKind::Flicker if t > 0 => rng.gen_range(-cfg.flicker..=cfg.flicker),
            _ => 0.0,
        };
        let (ox, oy) = (x_start + vx * t as f64, y_start + vy * t as f64);
        frames.push(Plane::from_fn(cfg.width, cfg.height, |x, y| {
            (canvas.sample(ox + x as f64, oy + y as f64) + offset).round().clamp(0.0, 255.0) as u8
        }));
    }
    Sequence::new(frames, FrameRate::default())
}

//! Block matching against the previous reconstructed frame.
//!
//! Vectors are stored in quarter-pel units. Sub-pel samples come from
//! bilinear interpolation with half-up rounding, and reads outside the
//! reference replicate the nearest edge pixel, so every vector can be
//! evaluated.

use crate::video_io::Plane;
use serde::{Deserialize, Serialize};

/// Displacement in quarter-pel units: `dx = 4` is one full pixel right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: Self = Self { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    pub const fn full_pel(dx: i32, dy: i32) -> Self {
        Self {
            dx: dx * 4,
            dy: dy * 4,
        }
    }

    /// Search order key: smaller is preferred on equal SAD.
    #[inline]
    fn tie_key(self) -> (i32, i32, i32) {
        (self.dx.abs() + self.dy.abs(), self.dy, self.dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubpelMode {
    Full,
    #[default]
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Full-pel search radius.
    pub search_range: u32,
    pub subpel: SubpelMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            search_range: 16,
            subpel: SubpelMode::Half,
        }
    }
}

/// Axis-aligned pixel rectangle inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BlockRect {
    pub const fn square(x: usize, y: usize, size: usize) -> Self {
        Self {
            x,
            y,
            width: size,
            height: size,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Reference sample at frame position `(x, y)` displaced by `mv`.
///
/// Bilinear weights are in sixteenths; for half-pel positions this reduces
/// to `(a + b + 1) >> 1` and `(a + b + c + d + 2) >> 2`.
#[inline]
pub fn interpolate(reference: &Plane, x: isize, y: isize, mv: MotionVector) -> u8 {
    let qx = x * 4 + mv.dx as isize;
    let qy = y * 4 + mv.dy as isize;
    let (ix, fx) = (qx.div_euclid(4), qx.rem_euclid(4) as u32);
    let (iy, fy) = (qy.div_euclid(4), qy.rem_euclid(4) as u32);
    if fx == 0 && fy == 0 {
        return reference.get_clamped(ix, iy);
    }
    let a = reference.get_clamped(ix, iy) as u32;
    let b = reference.get_clamped(ix + 1, iy) as u32;
    let c = reference.get_clamped(ix, iy + 1) as u32;
    let d = reference.get_clamped(ix + 1, iy + 1) as u32;
    let v = (4 - fx) * (4 - fy) * a + fx * (4 - fy) * b + (4 - fx) * fy * c + fx * fy * d;
    ((v + 8) >> 4) as u8
}

#[inline]
fn row_sad(c: &[u8], r: &[u8]) -> u32 {
    debug_assert_eq!(c.len(), r.len());
    let (head, sad) = simd_sad(c, r);
    sad + c[head..]
        .iter()
        .zip(&r[head..])
        .map(|(&a, &b)| a.abs_diff(b) as u32)
        .sum::<u32>()
}

/// SAD over the longest prefix that is a multiple of 16 bytes; returns the
/// prefix length and its SAD.
#[cfg(target_arch = "x86_64")]
#[inline]
fn simd_sad(c: &[u8], r: &[u8]) -> (usize, u32) {
    use std::arch::x86_64::*;
    let head = c.len().min(r.len()) / 16 * 16;
    // SAFETY: SSE2 is part of the x86_64 baseline, and every load reads 16
    // bytes that lie below `head` in both slices.
    unsafe {
        let mut acc = _mm_setzero_si128();
        for i in (0..head).step_by(16) {
            let a = _mm_loadu_si128(c.as_ptr().add(i) as *const __m128i);
            let b = _mm_loadu_si128(r.as_ptr().add(i) as *const __m128i);
            acc = _mm_add_epi64(acc, _mm_sad_epu8(a, b));
        }
        let lo = _mm_cvtsi128_si64(acc);
        let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(acc, acc));
        (head, (lo + hi) as u32)
    }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline]
fn simd_sad(_: &[u8], _: &[u8]) -> (usize, u32) {
    (0, 0)
}

/// Sum of absolute differences between the block of `cur` and the
/// displaced reference.
pub fn block_sad(cur: &Plane, reference: &Plane, block: BlockRect, mv: MotionVector) -> u32 {
    let mut sad = 0u32;
    if mv.dx % 4 == 0 && mv.dy % 4 == 0 {
        let (ox, oy) = ((mv.dx / 4) as isize, (mv.dy / 4) as isize);
        let interior = block.x as isize + ox >= 0
            && block.y as isize + oy >= 0
            && block.x as isize + ox + block.width as isize <= reference.width() as isize
            && block.y as isize + oy + block.height as isize <= reference.height() as isize;
        if interior {
            let rx = (block.x as isize + ox) as usize;
            let ry = (block.y as isize + oy) as usize;
            for row in 0..block.height {
                let c = &cur.data()[(block.y + row) * cur.width() + block.x..][..block.width];
                let r = &reference.data()[(ry + row) * reference.width() + rx..][..block.width];
                sad += row_sad(c, r);
            }
            return sad;
        }
    }
    for row in 0..block.height {
        for col in 0..block.width {
            let (x, y) = (block.x + col, block.y + row);
            let r = interpolate(reference, x as isize, y as isize, mv);
            sad += cur.get(x, y).abs_diff(r) as u32;
        }
    }
    sad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchResult {
    pub mv: MotionVector,
    pub sad: u32,
    /// Minimum over the integer stage, before sub-pel refinement.
    pub integer_sad: u32,
}

#[inline]
fn better(cand: (u32, MotionVector), best: (u32, MotionVector)) -> bool {
    (cand.0, cand.1.tie_key()) < (best.0, best.1.tie_key())
}

/// Exhaustive integer search over `[-range, range]^2` followed by an
/// optional half-pel pass over the eight neighbours of the integer optimum.
pub fn motion_search(cur: &Plane, reference: &Plane, block: BlockRect, cfg: &SearchConfig) -> SearchResult {
    let range = cfg.search_range as i32;
    // Edge-replicated copy of everything the search can touch, so every
    // candidate takes the contiguous path in `block_sad`.
    let margin = range as usize + 1;
    let (ww, wh) = (block.width + 2 * margin, block.height + 2 * margin);
    let (x0, y0) = (block.x as isize - margin as isize, block.y as isize - margin as isize);
    let window = Plane::from_fn(ww, wh, |x, y| reference.get_clamped(x0 + x as isize, y0 + y as isize));
    let local = BlockRect {
        x: margin,
        y: margin,
        ..block
    };
    let current = Plane::from_fn(ww, wh, |x, y| {
        let (bx, by) = (x.wrapping_sub(margin), y.wrapping_sub(margin));
        if bx < block.width && by < block.height {
            cur.get(block.x + bx, block.y + by)
        } else {
            0
        }
    });

    let mut best = (u32::MAX, MotionVector::ZERO);
    for dy in -range..=range {
        for dx in -range..=range {
            let mv = MotionVector::full_pel(dx, dy);
            let sad = block_sad(&current, &window, local, mv);
            if better((sad, mv), best) {
                best = (sad, mv);
            }
        }
    }
    let integer_sad = best.0;
    if cfg.subpel == SubpelMode::Half {
        let limit = 4 * range;
        let center = best.1;
        for (ddx, ddy) in [(-2, -2), (0, -2), (2, -2), (-2, 0), (2, 0), (-2, 2), (0, 2), (2, 2)] {
            let mv = MotionVector::new(center.dx + ddx, center.dy + ddy);
            if mv.dx.abs() > limit || mv.dy.abs() > limit {
                continue;
            }
            let sad = block_sad(&current, &window, local, mv);
            if better((sad, mv), best) {
                best = (sad, mv);
            }
        }
    }
    SearchResult {
        mv: best.1,
        sad: best.0,
        integer_sad,
    }
}

/// The displaced reference block, row-major.
pub fn motion_compensate(reference: &Plane, block: BlockRect, mv: MotionVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(block.area());
    for row in 0..block.height {
        for col in 0..block.width {
            out.push(interpolate(
                reference,
                (block.x + col) as isize,
                (block.y + row) as isize,
                mv,
            ));
        }
    }
    out
}

/// Displaced reference samples at arbitrary frame positions, e.g. the
/// decision area around a block.
pub fn motion_compensate_points(
    reference: &Plane,
    points: impl IntoIterator<Item = (isize, isize)>,
    mv: MotionVector,
) -> Vec<u8> {
    points
        .into_iter()
        .map(|(x, y)| interpolate(reference, x, y, mv))
        .collect()
}

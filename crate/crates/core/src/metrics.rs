//! Mean squared error and PSNR over 8-bit luma.

use crate::error::{Error, Result};
use crate::video_io::{Plane, Sequence};
use serde::{Deserialize, Serialize};

/// Accumulated squared error; combine before converting to dB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSum {
    pub sse: u64,
    pub samples: u64,
}

impl ErrorSum {
    pub fn between(a: &[u8], b: &[u8]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let sse = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = x as i64 - y as i64;
                (d * d) as u64
            })
            .sum();
        Self {
            sse,
            samples: a.len() as u64,
        }
    }

    pub fn add(&mut self, other: ErrorSum) {
        self.sse += other.sse;
        self.samples += other.samples;
    }

    pub fn mse(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.sse as f64 / self.samples as f64
        }
    }

    /// `10 log10(255^2 / MSE)`; `+inf` when there is no error.
    pub fn psnr(&self) -> f64 {
        psnr_from_mse(self.mse())
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn plane_error(a: &Plane, b: &Plane) -> Result<ErrorSum> {
    if !a.same_dimensions(b) {
        return Err(Error::Dimensions(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(ErrorSum::between(a.data(), b.data()))
}

pub fn psnr_plane(a: &Plane, b: &Plane) -> Result<f64> {
    Ok(plane_error(a, b)?.psnr())
}

/// PSNR of the pooled MSE over every sample of every frame.
pub fn psnr_sequence(a: &Sequence, b: &Sequence) -> Result<f64> {
    psnr_frames(a.frames(), b.frames())
}

pub fn psnr_frames(a: &[Plane], b: &[Plane]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimensions(format!("{} vs {} frames", a.len(), b.len())));
    }
    let mut total = ErrorSum::default();
    for (x, y) in a.iter().zip(b) {
        total.add(plane_error(x, y)?);
    }
    Ok(total.psnr())
}

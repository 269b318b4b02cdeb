//! Implicit choice between the refined and the direct prediction.
//!
//! Both candidates are compared against already decoded samples of the
//! decision area, so a decoder reaches the same verdict without a flag in
//! the bitstream.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Refined,
    Direct,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Refined => "refined",
            Mode::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub chosen: Mode,
    pub sad_refined: f64,
    pub sad_direct: f64,
    pub pixels: usize,
}

impl DecisionOutcome {
    /// Outcome for blocks that were never refined.
    pub const fn direct_only() -> Self {
        Self {
            chosen: Mode::Direct,
            sad_refined: 0.0,
            sad_direct: 0.0,
            pixels: 0,
        }
    }
}

/// Compares `sum |s - g|` against `sum |s - s_mc|` over the decision area.
///
/// The refined block wins only on a strict improvement; ties and an empty
/// area keep the direct block.
pub fn decide(reconstructed: &[u8], model: &[f64], compensated: &[u8]) -> Result<DecisionOutcome> {
    if reconstructed.len() != model.len() || reconstructed.len() != compensated.len() {
        return Err(Error::Dimensions(format!(
            "decision area sizes differ: {} reconstructed, {} model, {} compensated",
            reconstructed.len(),
            model.len(),
            compensated.len()
        )));
    }
    let sad_refined: f64 = reconstructed
        .iter()
        .zip(model)
        .map(|(&s, &g)| (s as f64 - g).abs())
        .sum();
    let sad_direct: f64 = reconstructed
        .iter()
        .zip(compensated)
        .map(|(&s, &c)| s.abs_diff(c) as f64)
        .sum();
    let chosen = if !reconstructed.is_empty() && sad_refined < sad_direct {
        Mode::Refined
    } else {
        Mode::Direct
    };
    Ok(DecisionOutcome {
        chosen,
        sad_refined,
        sad_direct,
        pixels: reconstructed.len(),
    })
}

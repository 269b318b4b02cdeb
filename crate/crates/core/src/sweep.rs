//! Quantiser sweeps with refinement on and off, and their logs.

use crate::codec::{encode_sequence, CodecConfig, EncodeSummary, FrameReport};
use crate::error::Result;
use crate::metrics::ErrorSum;
use crate::rd::{bd_rate, BdRate, RdCurve, RdPoint};
use crate::video_io::Sequence;
use serde::Serialize;
use std::io::Write;

pub const DEFAULT_GRID: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];

/// One encode of the sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub quant_step: f64,
    pub refinement_enabled: bool,
    pub summary: EncodeSummary,
    pub reports: Vec<FrameReport>,
}

impl SweepRun {
    pub fn rd_point(&self) -> RdPoint {
        RdPoint {
            quant_step: self.quant_step,
            rate_kbps: self.summary.rate_kbps,
            psnr_db: self.summary.reconstruction_psnr,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Ordered by quant step, direct before refined.
    pub runs: Vec<SweepRun>,
    pub direct: RdCurve,
    pub refined: RdCurve,
    /// Refined against direct.
    pub bd: BdRate,
}

impl SweepResult {
    pub fn runs_with(&self, refinement_enabled: bool) -> impl Iterator<Item = &SweepRun> {
        self.runs.iter().filter(move |r| r.refinement_enabled == refinement_enabled)
    }

    /// Grid mean of the per-run mean prediction PSNR. Refined runs report
    /// their final prediction, direct runs their motion-compensated one.
    pub fn mean_prediction_psnr(&self, refinement_enabled: bool) -> f64 {
        let v: Vec<f64> = self
            .runs_with(refinement_enabled)
            .map(|r| {
                if refinement_enabled {
                    r.summary.mean_prediction_psnr_final
                } else {
                    r.summary.mean_prediction_psnr_direct
                }
            })
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Refined encoder against direct encoder, in dB.
    pub fn mean_prediction_gain(&self) -> f64 {
        self.mean_prediction_psnr(true) - self.mean_prediction_psnr(false)
    }

    /// Gain of the chosen prediction over the direct one inside the refined
    /// runs, on identical references. Averaged over the grid.
    pub fn within_run_gain(&self) -> f64 {
        let gains: Vec<f64> = self
            .runs_with(true)
            .map(|r| r.summary.mean_prediction_psnr_final - r.summary.mean_prediction_psnr_direct)
            .collect();
        gains.iter().sum::<f64>() / gains.len() as f64
    }
}

/// Encodes `seq` at every step of `grid`, once with and once without
/// refinement, and compares the two RD curves. Jobs are independent and run
/// under `base.execution`.
pub fn rd_sweep(seq: &Sequence, base: &CodecConfig, grid: &[f64]) -> Result<SweepResult> {
    let jobs: Vec<(f64, bool)> = grid.iter().flat_map(|&q| [(q, false), (q, true)]).collect();
    let runs = base.execution.map(&jobs, |&(quant_step, refinement_enabled)| {
        let cfg = CodecConfig {
            quant_step,
            refinement_enabled,
            // the frame-level loop may still fan out
            execution: base.execution,
            ..*base
        };
        encode_sequence(seq, &cfg).map(|out| SweepRun {
            quant_step,
            refinement_enabled,
            summary: EncodeSummary::from_reports(&out.reports, seq.frame_rate()),
            reports: out.reports,
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let points = |refined: bool| -> Vec<RdPoint> {
        runs.iter().filter(|r| r.refinement_enabled == refined).map(SweepRun::rd_point).collect()
    };
    let direct = RdCurve::from_measurements("direct", points(false))?;
    let refined = RdCurve::from_measurements("refined", points(true))?;
    let bd = bd_rate(&direct, &refined)?;
    Ok(SweepResult {
        runs,
        direct,
        refined,
        bd,
    })
}

#[derive(Serialize)]
struct BlockRow {
    quant_step: f64,
    frame: usize,
    block_row: usize,
    block_col: usize,
    mv_dx: i32,
    mv_dy: i32,
    sad_refined_d: f64,
    sad_direct_d: f64,
    outcome: &'static str,
}

/// Per-block decision log. Blocks that were never refined log `direct`
/// with zero decision-area sums.
pub fn write_block_log<W: Write>(writer: W, rows: &[(f64, &[FrameReport])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for &(quant_step, reports) in rows {
        for r in reports {
            for b in &r.blocks {
                w.serialize(BlockRow {
                    quant_step,
                    frame: r.frame_index,
                    block_row: b.row,
                    block_col: b.col,
                    mv_dx: b.mv.dx,
                    mv_dy: b.mv.dy,
                    sad_refined_d: b.decision.sad_refined,
                    sad_direct_d: b.decision.sad_direct,
                    outcome: b.decision.chosen.as_str(),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FrameRow {
    frame: usize,
    intra: bool,
    rate_bits: f64,
    residual_bits: f64,
    mv_bits: u64,
    prediction_psnr_direct: String,
    prediction_psnr_final: String,
    reconstruction_psnr: String,
    refined_blocks: usize,
}

/// `inf` for error-free values, otherwise the number.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn write_frame_log<W: Write>(writer: W, reports: &[FrameReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(FrameRow {
            frame: r.frame_index,
            intra: r.intra,
            rate_bits: r.rate_bits,
            residual_bits: r.residual_bits,
            mv_bits: r.mv_bits,
            prediction_psnr_direct: format_db(r.prediction_psnr_direct),
            prediction_psnr_final: format_db(r.prediction_psnr_final),
            reconstruction_psnr: format_db(r.reconstruction_psnr),
            refined_blocks: r.refined_blocks(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// JSON number, or the string `"inf"` where JSON has no number.
pub fn json_db(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::Value::Null
    } else if v > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

pub fn summary_json(s: &EncodeSummary) -> serde_json::Value {
    serde_json::json!({
        "p_frames": s.p_frames,
        "rate_kbps": s.rate_kbps,
        "reconstruction_psnr_db": json_db(s.reconstruction_psnr),
        "mean_prediction_psnr_direct_db": json_db(s.mean_prediction_psnr_direct),
        "mean_prediction_psnr_final_db": json_db(s.mean_prediction_psnr_final),
        "blocks": s.blocks,
        "refinement_tried": s.refinement_tried,
        "refined_blocks": s.refined_blocks,
    })
}

/// Pooled prediction PSNR over the P-frames of `reports`.
pub fn pooled_prediction_psnr(reports: &[FrameReport], refined: bool) -> f64 {
    let mut e = ErrorSum::default();
    for r in reports.iter().filter(|r| !r.intra) {
        e.add(if refined { r.prediction_error_final } else { r.prediction_error_direct });
    }
    e.psnr()
}

//! Closed-loop encoder and the matching decoder.
//!
//! Every P-frame block is motion compensated from the previous
//! reconstructed frame, optionally refined by a parametric model of its
//! spatial neighbourhood, and the prediction error is run through an 8x8
//! DCT and a uniform quantiser. Reconstructed blocks feed the
//! neighbourhoods of later blocks. The rate is an estimate: zeroth-order
//! entropy of the frame's quantisation indices plus exp-Golomb vector bits.
//!
//! Blocks only depend on their left, top-left, top and top-right
//! neighbours, so in parallel mode the blocks of one frame are processed in
//! wavefronts (`col + 2 * row` is constant on a wave). The result is
//! identical to line-scan processing.

use crate::decision::{decide, DecisionOutcome, Mode};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fse::{extract_block, ApproxConfig, ApproxInput, ModelGenerator};
use crate::geometry::{Availability, LayoutConfig, LayoutSet, Region};
use crate::grid::Grid;
use crate::metrics::ErrorSum;
use crate::motion::{motion_compensate, motion_compensate_points, motion_search, BlockRect, MotionVector, SearchConfig};
use crate::video_io::{FrameRate, Plane, Sequence};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopMode {
    /// Neighbourhoods come from the reconstruction, as a decoder sees them.
    #[default]
    Closed,
    /// Neighbourhoods come from the original frame. Not decodable.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub layout: LayoutConfig,
    pub search: SearchConfig,
    pub approx: ApproxConfig,
    pub quant_step: f64,
    pub refinement_enabled: bool,
    pub loop_mode: LoopMode,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            layout: LayoutConfig::default(),
            search: SearchConfig::default(),
            approx: ApproxConfig::default(),
            quant_step: 16.0,
            refinement_enabled: true,
            loop_mode: LoopMode::Closed,
            execution: Execution::default(),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(Error::Config(format!("quant_step {} must be positive", self.quant_step)));
        }
        self.layout.validate()?;
        self.approx.validate()
    }
}

/// Transform block edge.
pub const TRANSFORM_SIZE: usize = 8;
const T: usize = TRANSFORM_SIZE;

fn dct_matrix() -> &'static [[f64; T]; T] {
    static MATRIX: OnceLock<[[f64; T]; T]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut c = [[0.0; T]; T];
        for (k, row) in c.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / T as f64).sqrt() } else { (2.0 / T as f64).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * T) as f64).cos();
            }
        }
        c
    })
}

/// Orthonormal 2D DCT-II of one row-major 8x8 block.
pub fn dct8x8(input: &[f64; T * T]) -> [f64; T * T] {
    let c = dct_matrix();
    let mut tmp = [0.0; T * T];
    // rows: tmp = X C^T
    for y in 0..T {
        for k in 0..T {
            tmp[y * T + k] = (0..T).map(|x| input[y * T + x] * c[k][x]).sum();
        }
    }
    let mut out = [0.0; T * T];
    for k in 0..T {
        for u in 0..T {
            out[u * T + k] = (0..T).map(|y| c[u][y] * tmp[y * T + k]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(input: &[f64; T * T]) -> [f64; T * T] {
    let c = dct_matrix();
    let mut tmp = [0.0; T * T];
    for u in 0..T {
        for x in 0..T {
            tmp[u * T + x] = (0..T).map(|k| input[u * T + k] * c[k][x]).sum();
        }
    }
    let mut out = [0.0; T * T];
    for y in 0..T {
        for x in 0..T {
            out[y * T + x] = (0..T).map(|u| c[u][y] * tmp[u * T + x]).sum();
        }
    }
    out
}

/// Quantisation indices of one block, one array per 8x8 sub-block in
/// raster order, plus the vector code length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockResidualCode {
    pub width: usize,
    pub height: usize,
    pub indices: Vec<Vec<i32>>,
    pub mv_bits: u32,
}

impl BlockResidualCode {
    pub fn is_zero(&self) -> bool {
        self.indices.iter().flatten().all(|&i| i == 0)
    }

    pub fn iter_indices(&self) -> impl Iterator<Item = i32> + '_ {
        self.indices.iter().flatten().copied()
    }
}

pub fn quantize(coef: f64, quant_step: f64) -> i32 {
    (coef / quant_step).round() as i32
}

pub fn dequantize(index: i32, quant_step: f64) -> f64 {
    index as f64 * quant_step
}

/// Transforms and quantises a row-major `width x height` residual.
///
/// Returns the indices and the dequantised residual. Sub-blocks that stick
/// out of a partial block are zero padded. Bits are assigned per frame with
/// [`IndexHistogram`].
pub fn code_residual(residual: &[i16], width: usize, height: usize, quant_step: f64) -> (BlockResidualCode, Vec<f64>) {
    assert_eq!(residual.len(), width * height, "residual size");
    let mut indices = Vec::new();
    let mut deq = vec![0.0; width * height];
    for sy in (0..height).step_by(T) {
        for sx in (0..width).step_by(T) {
            let mut block = [0.0; T * T];
            for y in 0..T.min(height - sy) {
                for x in 0..T.min(width - sx) {
                    block[y * T + x] = residual[(sy + y) * width + sx + x] as f64;
                }
            }
            let coefs = dct8x8(&block);
            let idx: Vec<i32> = coefs.iter().map(|&c| quantize(c, quant_step)).collect();
            let mut back = [0.0; T * T];
            for (b, &i) in back.iter_mut().zip(&idx) {
                *b = dequantize(i, quant_step);
            }
            let rec = if idx.iter().all(|&i| i == 0) { [0.0; T * T] } else { idct8x8(&back) };
            for y in 0..T.min(height - sy) {
                for x in 0..T.min(width - sx) {
                    deq[(sy + y) * width + sx + x] = rec[y * T + x];
                }
            }
            indices.push(idx);
        }
    }
    (
        BlockResidualCode {
            width,
            height,
            indices,
            mv_bits: 0,
        },
        deq,
    )
}

/// Rebuilds the dequantised residual from its indices.
pub fn decode_residual(code: &BlockResidualCode, quant_step: f64) -> Vec<f64> {
    let (width, height) = (code.width, code.height);
    let mut deq = vec![0.0; width * height];
    let mut sub = code.indices.iter();
    for sy in (0..height).step_by(T) {
        for sx in (0..width).step_by(T) {
            let idx = sub.next().expect("one index set per sub-block");
            let mut back = [0.0; T * T];
            for (b, &i) in back.iter_mut().zip(idx) {
                *b = dequantize(i, quant_step);
            }
            let rec = if idx.iter().all(|&i| i == 0) { [0.0; T * T] } else { idct8x8(&back) };
            for y in 0..T.min(height - sy) {
                for x in 0..T.min(width - sx) {
                    deq[(sy + y) * width + sx + x] = rec[y * T + x];
                }
            }
        }
    }
    deq
}

/// Length of the signed exp-Golomb code of `v`.
pub fn signed_exp_golomb_bits(v: i32) -> u32 {
    let code = if v > 0 { 2 * v as u64 - 1 } else { 2 * v.unsigned_abs() as u64 };
    2 * (code + 1).ilog2() + 1
}

/// Bits for both vector components, without prediction.
pub fn mv_bits(mv: MotionVector) -> u32 {
    signed_exp_golomb_bits(mv.dx) + signed_exp_golomb_bits(mv.dy)
}

/// Counts of quantisation indices over one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexHistogram {
    counts: BTreeMap<i32, u64>,
    total: u64,
}

impl IndexHistogram {
    pub fn add(&mut self, code: &BlockResidualCode) {
        for i in code.iter_indices() {
            *self.counts.entry(i).or_default() += 1;
            self.total += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `-sum n_i log2(n_i / n)`: zeroth-order entropy of all added indices.
    pub fn entropy_bits(&self) -> f64 {
        let n = self.total as f64;
        self.counts
            .values()
            .map(|&c| {
                let c = c as f64;
                -c * (c / n).log2()
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Share of [`IndexHistogram::entropy_bits`] spent on one block.
    pub fn bits_for(&self, code: &BlockResidualCode) -> f64 {
        let n = self.total as f64;
        code.iter_indices()
            .map(|i| match self.counts.get(&i) {
                Some(&c) if self.total > 0 => -(c as f64 / n).log2(),
                _ => 0.0,
            })
            .sum::<f64>()
            .max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub row: usize,
    pub col: usize,
    pub mv: MotionVector,
    /// Whether a model was generated for this block at all.
    pub refinement_tried: bool,
    pub decision: DecisionOutcome,
    pub sse_direct: u64,
    pub sse_final: u64,
    pub residual_bits: f64,
    pub mv_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_index: usize,
    pub blocks: Vec<BlockRecord>,
    pub prediction_error_direct: ErrorSum,
    pub prediction_error_final: ErrorSum,
    pub reconstruction_error: ErrorSum,
    pub prediction_psnr_direct: f64,
    pub prediction_psnr_final: f64,
    pub reconstruction_psnr: f64,
    pub residual_bits: f64,
    pub mv_bits: u64,
    pub rate_bits: f64,
    /// Intra passthrough frame.
    pub intra: bool,
}

impl FrameReport {
    pub fn refined_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.decision.chosen == Mode::Refined).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCode {
    pub mv: MotionVector,
    pub residual: BlockResidualCode,
}

/// Everything a decoder needs besides the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub intra: Plane,
    /// Blocks of each P-frame in line-scan order.
    pub frames: Vec<Vec<BlockCode>>,
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub reconstructed: Sequence,
    pub predicted: Sequence,
    pub reports: Vec<FrameReport>,
    pub stream: EncodedStream,
}

/// Block grid of a frame. Full blocks come first in each dimension; a
/// trailing partial row or column is coded with direct prediction only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
    full_rows: usize,
    full_cols: usize,
    size: usize,
    width: usize,
    height: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, size: usize) -> Self {
        Self {
            rows: height.div_ceil(size),
            cols: width.div_ceil(size),
            full_rows: height / size,
            full_cols: width / size,
            size,
            width,
            height,
        }
    }

    pub fn rect(&self, row: usize, col: usize) -> BlockRect {
        let (x, y) = (col * self.size, row * self.size);
        BlockRect {
            x,
            y,
            width: self.size.min(self.width - x),
            height: self.size.min(self.height - y),
        }
    }

    pub fn is_full(&self, row: usize, col: usize) -> bool {
        row < self.full_rows && col < self.full_cols
    }

    /// Causal neighbours usable for refinement; partial blocks never count.
    pub fn availability(&self, row: usize, col: usize) -> Availability {
        Availability::for_block(row, col, self.full_cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Prediction of one block as both encoder and decoder derive it.
#[derive(Debug, Clone)]
pub struct BlockPrediction {
    pub direct: Vec<u8>,
    pub chosen: Vec<u8>,
    pub decision: DecisionOutcome,
    pub refinement_tried: bool,
}

/// Shared per-sequence state for block prediction.
pub struct Predictor {
    cfg: CodecConfig,
    layouts: LayoutSet,
}

impl Predictor {
    pub fn new(cfg: CodecConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            layouts: LayoutSet::new(cfg.layout)?,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub fn generator(&self) -> ModelGenerator {
        let (rows, cols) = self.cfg.layout.projection;
        ModelGenerator::new(rows, cols, self.cfg.approx).expect("validated configuration")
    }

    /// Motion compensates block `(row, col)` and, where possible, refines
    /// it. `spatial` supplies the neighbourhood `R`, `reference` the
    /// temporal prediction.
    #[allow(clippy::too_many_arguments)]
    pub fn predict(
        &self,
        generator: &mut ModelGenerator,
        grid: &BlockGrid,
        row: usize,
        col: usize,
        spatial: &Plane,
        reference: &Plane,
        mv: MotionVector,
    ) -> BlockPrediction {
        let rect = grid.rect(row, col);
        let direct = motion_compensate(reference, rect, mv);
        let avail = grid.availability(row, col);
        if !self.cfg.refinement_enabled || !grid.is_full(row, col) || !avail.any() {
            return BlockPrediction {
                chosen: direct.clone(),
                direct,
                decision: DecisionOutcome::direct_only(),
                refinement_tried: false,
            };
        }

        let layout = self.layouts.get(avail);
        let (rows, cols) = layout.shape();
        let b = layout.block_size();
        let (r0, c0) = layout.block_origin();
        // frame position of the window's top-left corner
        let (oy, ox) = (rect.y as isize - r0 as isize, rect.x as isize - c0 as isize);
        let signal = Grid::from_fn(rows, cols, |m, n| match layout.region(m, n) {
            Region::Padding => 0.0,
            Region::Block => direct[(m - r0) * b + (n - c0)] as f64,
            Region::Neighbor | Region::Decision => {
                spatial.get((ox + n as isize) as usize, (oy + m as isize) as usize) as f64
            }
        });
        let input = ApproxInput::with_layout(signal, layout).expect("layout weights are valid");
        let model = generator.generate(&input).expect("generator matches layout");

        let points = layout.decision_pixels();
        let frame_points: Vec<(isize, isize)> = points
            .iter()
            .map(|&(m, n)| (ox + n as isize, oy + m as isize))
            .collect();
        let recon: Vec<u8> = frame_points
            .iter()
            .map(|&(x, y)| spatial.get(x as usize, y as usize))
            .collect();
        let modelled: Vec<f64> = points.iter().map(|&(m, n)| model.model.get(m, n)).collect();
        let compensated = motion_compensate_points(reference, frame_points.iter().copied(), mv);
        let decision = decide(&recon, &modelled, &compensated).expect("equal lengths");

        let chosen = match decision.chosen {
            Mode::Refined => extract_block(&model, layout),
            Mode::Direct => direct.clone(),
        };
        BlockPrediction {
            direct,
            chosen,
            decision,
            refinement_tried: true,
        }
    }
}

fn write_block(plane: &mut Plane, rect: BlockRect, values: &[u8]) {
    for y in 0..rect.height {
        for x in 0..rect.width {
            plane.set(rect.x + x, rect.y + y, values[y * rect.width + x]);
        }
    }
}

fn read_block(plane: &Plane, rect: BlockRect) -> Vec<u8> {
    let mut out = Vec::with_capacity(rect.area());
    for y in 0..rect.height {
        for x in 0..rect.width {
            out.push(plane.get(rect.x + x, rect.y + y));
        }
    }
    out
}

/// `clamp(round(prediction + residual))`.
pub fn reconstruct(prediction: &[u8], residual: &[f64]) -> Vec<u8> {
    prediction
        .iter()
        .zip(residual)
        .map(|(&p, &r)| (p as f64 + r).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Blocks in processing order, grouped so every group only depends on
/// earlier groups. Sequential execution uses one group per block in line
/// scan order.
fn schedule(grid: &BlockGrid, execution: Execution) -> Vec<Vec<(usize, usize)>> {
    if !execution.is_parallel() {
        return (0..grid.rows)
            .flat_map(|r| (0..grid.cols).map(move |c| vec![(r, c)]))
            .collect();
    }
    let waves = grid.cols + 2 * grid.rows.saturating_sub(1);
    let mut out = vec![Vec::new(); waves];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            out[c + 2 * r].push((r, c));
        }
    }
    out
}

struct CodedBlock {
    row: usize,
    col: usize,
    prediction: BlockPrediction,
    code: BlockResidualCode,
    recon: Vec<u8>,
}

/// Codes one P-frame. Returns the reconstruction, prediction, report and
/// block codes.
fn encode_frame(
    predictor: &Predictor,
    index: usize,
    original: &Plane,
    reference: &Plane,
) -> (Plane, Plane, FrameReport, Vec<BlockCode>) {
    let cfg = predictor.config();
    let exec = cfg.execution;
    let grid = BlockGrid::new(original.width(), original.height(), cfg.layout.block_size);
    let cells: Vec<(usize, usize)> = (0..grid.rows).flat_map(|r| (0..grid.cols).map(move |c| (r, c))).collect();
    let mvs: Vec<MotionVector> = exec.map(&cells, |&(r, c)| {
        motion_search(original, reference, grid.rect(r, c), &cfg.search).mv
    });

    let mut recon = Plane::filled(original.width(), original.height(), 0);
    let mut coded: Vec<Option<CodedBlock>> = (0..grid.len()).map(|_| None).collect();
    for group in schedule(&grid, exec) {
        let spatial_snapshot = match cfg.loop_mode {
            LoopMode::Closed => &recon,
            LoopMode::Open => original,
        };
        let results = exec.map_init(&group, || predictor.generator(), |generator, &(r, c)| {
            let rect = grid.rect(r, c);
            let mv = mvs[r * grid.cols + c];
            let prediction = predictor.predict(generator, &grid, r, c, spatial_snapshot, reference, mv);
            let orig = read_block(original, rect);
            let residual: Vec<i16> = orig
                .iter()
                .zip(&prediction.chosen)
                .map(|(&o, &p)| o as i16 - p as i16)
                .collect();
            let (mut code, deq) = code_residual(&residual, rect.width, rect.height, cfg.quant_step);
            code.mv_bits = mv_bits(mv);
            let block_recon = reconstruct(&prediction.chosen, &deq);
            CodedBlock {
                row: r,
                col: c,
                prediction,
                code,
                recon: block_recon,
            }
        });
        for block in results {
            write_block(&mut recon, grid.rect(block.row, block.col), &block.recon);
            let i = block.row * grid.cols + block.col;
            coded[i] = Some(block);
        }
    }

    let coded: Vec<CodedBlock> = coded.into_iter().map(|b| b.expect("every block scheduled")).collect();
    let mut histogram = IndexHistogram::default();
    for b in &coded {
        histogram.add(&b.code);
    }
    let mut predicted = Plane::filled(original.width(), original.height(), 0);
    let mut err_direct = ErrorSum::default();
    let mut err_final = ErrorSum::default();
    let mut records = Vec::with_capacity(coded.len());
    let mut codes = Vec::with_capacity(coded.len());
    let mut total_mv_bits = 0u64;
    for (b, &mv) in coded.into_iter().zip(&mvs) {
        let rect = grid.rect(b.row, b.col);
        let orig = read_block(original, rect);
        let d = ErrorSum::between(&orig, &b.prediction.direct);
        let f = ErrorSum::between(&orig, &b.prediction.chosen);
        err_direct.add(d);
        err_final.add(f);
        write_block(&mut predicted, rect, &b.prediction.chosen);
        total_mv_bits += b.code.mv_bits as u64;
        records.push(BlockRecord {
            row: b.row,
            col: b.col,
            mv,
            refinement_tried: b.prediction.refinement_tried,
            decision: b.prediction.decision,
            sse_direct: d.sse,
            sse_final: f.sse,
            residual_bits: histogram.bits_for(&b.code),
            mv_bits: b.code.mv_bits,
        });
        codes.push(BlockCode { mv, residual: b.code });
    }
    let reconstruction_error = ErrorSum::between(original.data(), recon.data());
    let residual_bits = histogram.entropy_bits();
    let report = FrameReport {
        frame_index: index,
        blocks: records,
        prediction_psnr_direct: err_direct.psnr(),
        prediction_psnr_final: err_final.psnr(),
        reconstruction_psnr: reconstruction_error.psnr(),
        prediction_error_direct: err_direct,
        prediction_error_final: err_final,
        reconstruction_error,
        residual_bits,
        mv_bits: total_mv_bits,
        rate_bits: residual_bits + total_mv_bits as f64,
        intra: false,
    };
    (recon, predicted, report, codes)
}

fn intra_report(frame: &Plane) -> FrameReport {
    let zero = ErrorSum {
        sse: 0,
        samples: frame.data().len() as u64,
    };
    FrameReport {
        frame_index: 0,
        blocks: Vec::new(),
        prediction_error_direct: zero,
        prediction_error_final: zero,
        reconstruction_error: zero,
        prediction_psnr_direct: f64::INFINITY,
        prediction_psnr_final: f64::INFINITY,
        reconstruction_psnr: f64::INFINITY,
        residual_bits: 8.0 * frame.data().len() as f64,
        mv_bits: 0,
        rate_bits: 8.0 * frame.data().len() as f64,
        intra: true,
    }
}

/// Codes `seq`: frame 0 passes through unchanged, every later frame is
/// predicted from the previous reconstruction.
pub fn encode_sequence(seq: &Sequence, cfg: &CodecConfig) -> Result<EncodeOutput> {
    if seq.len() < 2 {
        return Err(Error::SequenceTooShort(seq.len(), 2));
    }
    let predictor = Predictor::new(*cfg)?;
    let frames = seq.frames();
    let mut reconstructed = vec![frames[0].clone()];
    let mut predicted = vec![frames[0].clone()];
    let mut reports = vec![intra_report(&frames[0])];
    let mut coded = Vec::with_capacity(frames.len() - 1);
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let (recon, pred, report, codes) = encode_frame(&predictor, i, frame, &reconstructed[i - 1]);
        reconstructed.push(recon);
        predicted.push(pred);
        reports.push(report);
        coded.push(codes);
    }
    Ok(EncodeOutput {
        reconstructed: Sequence::new(reconstructed, seq.frame_rate())?,
        predicted: Sequence::new(predicted, seq.frame_rate())?,
        reports,
        stream: EncodedStream {
            width: seq.width(),
            height: seq.height(),
            frame_rate: seq.frame_rate(),
            intra: frames[0].clone(),
            frames: coded,
        },
    })
}

/// Replays `stream` in line-scan order. Only closed-loop streams decode to
/// the encoder's reconstruction.
pub fn decode_sequence(stream: &EncodedStream, cfg: &CodecConfig) -> Result<Sequence> {
    if cfg.loop_mode == LoopMode::Open {
        return Err(Error::Config("open-loop streams cannot be decoded".into()));
    }
    let predictor = Predictor::new(*cfg)?;
    let grid = BlockGrid::new(stream.width, stream.height, cfg.layout.block_size);
    let mut generator = predictor.generator();
    let mut frames = vec![stream.intra.clone()];
    for (f, blocks) in stream.frames.iter().enumerate() {
        if blocks.len() != grid.len() {
            return Err(Error::Dimensions(format!(
                "frame {} carries {} blocks, expected {}",
                f + 1,
                blocks.len(),
                grid.len()
            )));
        }
        let reference = &frames[f];
        let mut recon = Plane::filled(stream.width, stream.height, 0);
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let block = &blocks[r * grid.cols + c];
                let prediction = predictor.predict(&mut generator, &grid, r, c, &recon, reference, block.mv);
                let deq = decode_residual(&block.residual, cfg.quant_step);
                write_block(&mut recon, grid.rect(r, c), &reconstruct(&prediction.chosen, &deq));
            }
        }
        frames.push(recon);
    }
    Sequence::new(frames, stream.frame_rate)
}

/// Aggregate numbers of one encode over its P-frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub p_frames: usize,
    pub rate_kbps: f64,
    /// Pooled over all P-frame samples.
    pub reconstruction_psnr: f64,
    /// Means of the per-frame values.
    pub mean_prediction_psnr_direct: f64,
    pub mean_prediction_psnr_final: f64,
    pub blocks: usize,
    pub refined_blocks: usize,
    pub refinement_tried: usize,
}

impl EncodeSummary {
    pub fn from_reports(reports: &[FrameReport], frame_rate: FrameRate) -> Self {
        let p: Vec<&FrameReport> = reports.iter().filter(|r| !r.intra).collect();
        let n = p.len();
        let bits: f64 = p.iter().map(|r| r.rate_bits).sum();
        let seconds = n as f64 / frame_rate.fps();
        let mut recon = ErrorSum::default();
        for r in &p {
            recon.add(r.reconstruction_error);
        }
        let mean = |f: fn(&FrameReport) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                p.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        Self {
            p_frames: n,
            rate_kbps: if n == 0 { 0.0 } else { bits / seconds / 1000.0 },
            reconstruction_psnr: recon.psnr(),
            mean_prediction_psnr_direct: mean(|r| r.prediction_psnr_direct),
            mean_prediction_psnr_final: mean(|r| r.prediction_psnr_final),
            blocks: p.iter().map(|r| r.blocks.len()).sum(),
            refined_blocks: p.iter().map(|r| r.refined_blocks()).sum(),
            refinement_tried: p.iter().map(|r| r.blocks.iter().filter(|b| b.refinement_tried).count()).sum(),
        }
    }
}

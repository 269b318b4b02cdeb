//! Frequency-selective approximation of a signal over the projection area.
//!
//! The model is a superposition of 2D Fourier basis functions
//! `phi_k[m, n] = exp(j 2 pi (k1 m / M + k2 n / N))`, built greedily. Each
//! iteration projects the weighted residual onto every basis function with
//! one real-to-complex FFT, picks the conjugate pair with the largest
//! weighted energy decrease, and adds an under-relaxed coefficient estimate.
//! Pairs `k, -k` are always updated together so the model stays real.

use crate::error::{Error, Result};
use crate::geometry::{ProjectionLayout, Region};
use crate::grid::Grid;
use realfft::{RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub iterations: usize,
    /// Orthogonality deficiency compensation, in `(0, 1]`.
    pub gamma: f64,
    /// Stop once the weighted residual energy drops below this value.
    pub energy_floor: Option<f64>,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            gamma: 0.5,
            energy_floor: Some(1e-6),
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Frequency index `(k1, k2)` with `k1 < M` along rows and `k2 < N` along
/// columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    pub k1: usize,
    pub k2: usize,
}

impl BasisIndex {
    pub const fn new(k1: usize, k2: usize) -> Self {
        Self { k1, k2 }
    }

    /// Index of the complex-conjugate basis function, `-k mod (M, N)`.
    pub fn conjugate(self, rows: usize, cols: usize) -> Self {
        Self {
            k1: (rows - self.k1) % rows,
            k2: (cols - self.k2) % cols,
        }
    }

    pub fn linear(self, cols: usize) -> usize {
        self.k1 * cols + self.k2
    }
}

/// `phi_k[m, n]` for an `M x N` projection area.
pub fn basis_function(k: BasisIndex, m: usize, n: usize, rows: usize, cols: usize) -> Result<Complex64> {
    if k.k1 >= rows || k.k2 >= cols {
        return Err(Error::BasisIndex(k.k1, k.k2));
    }
    // reduce the phase exactly in integers before going to floating point
    let num = (k.k1 * m % rows) * cols + (k.k2 * n % cols) * rows;
    let phase = TAU * (num % (rows * cols)) as f64 / (rows * cols) as f64;
    let (s, c) = phase.sin_cos();
    Ok(Complex64::new(c, s))
}

/// Weighted projection numerators for every basis function.
///
/// Only the half spectrum `k2 <= N/2` is stored; the rest follows from
/// `p(-k) = conj(p(k))` because the weighted residual is real.
#[derive(Debug, Clone)]
pub struct Projections {
    rows: usize,
    cols: usize,
    /// Column-major half spectrum: bin `(k1, k2)` at `k2 * rows + k1`.
    half: Vec<Complex64>,
    norm: f64,
}

impl Projections {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            half: vec![Complex64::new(0.0, 0.0); rows * (cols / 2 + 1)],
            norm: 0.0,
        }
    }

    /// `sum_{m,n} w r conj(phi_k)`.
    pub fn numerator(&self, k: BasisIndex) -> Complex64 {
        if k.k2 <= self.cols / 2 {
            self.half[k.k2 * self.rows + k.k1]
        } else {
            let c = k.conjugate(self.rows, self.cols);
            self.half[c.k2 * self.rows + c.k1].conj()
        }
    }

    /// `sum w |phi_k|^2`, which is `sum w` for every Fourier basis function.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// FFT plans, scratch buffers and twiddle tables for one projection size.
pub struct Projector {
    rows: usize,
    cols: usize,
    row_fft: Arc<dyn RealToComplex<f64>>,
    col_fft: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    row_in: Vec<f64>,
    row_out: Vec<Complex64>,
    row_scratch: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
    spectrum: Projections,
    tw_rows: Vec<Complex64>,
    tw_cols: Vec<Complex64>,
    col_phase: Vec<Complex64>,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

fn twiddles(len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|i| {
            let (s, c) = (TAU * i as f64 / len as f64).sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}

impl Projector {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 || cols % 2 != 0 || rows % 2 != 0 {
            return Err(Error::Config(format!("projection area {rows}x{cols} must have even sides")));
        }
        let row_fft = RealFftPlanner::<f64>::new().plan_fft_forward(cols);
        let mut planner = FftPlanner::<f64>::new();
        let col_fft = planner.plan_fft_forward(rows);
        let col_inv = planner.plan_fft_inverse(rows);
        let row_inv = planner.plan_fft_inverse(cols);
        let scratch = [&col_fft, &col_inv, &row_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Ok(Self {
            rows,
            cols,
            row_scratch: row_fft.make_scratch_vec(),
            row_in: row_fft.make_input_vec(),
            row_out: row_fft.make_output_vec(),
            fft_scratch: vec![Complex64::new(0.0, 0.0); scratch],
            row_fft,
            col_fft,
            row_inv,
            col_inv,
            spectrum: Projections::new(rows, cols),
            tw_rows: twiddles(rows),
            tw_cols: twiddles(cols),
            col_phase: vec![Complex64::new(0.0, 0.0); cols],
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check(&self, g: &Grid, what: &str) -> Result<()> {
        if g.shape() != (self.rows, self.cols) {
            return Err(Error::Dimensions(format!(
                "{what} is {}x{}, projector is {}x{}",
                g.rows(),
                g.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    /// Projects `weights * residual` onto all basis functions at once.
    pub fn project(&mut self, residual: &Grid, weights: &Grid) -> Result<Projections> {
        self.check(residual, "residual")?;
        self.check(weights, "weight map")?;
        self.project_into(residual.data(), weights.data());
        self.spectrum.norm = weights.data().iter().sum();
        Ok(self.spectrum.clone())
    }

    /// Fills `self.spectrum` (norm excluded). Rows without weight are
    /// known to transform to zero and skip the row FFT.
    fn project_into(&mut self, residual: &[f64], weights: &[f64]) {
        let (rows, cols) = (self.rows, self.cols);
        let half = &mut self.spectrum.half;
        for m in 0..rows {
            let r = &residual[m * cols..(m + 1) * cols];
            let w = &weights[m * cols..(m + 1) * cols];
            if w.iter().all(|&x| x == 0.0) {
                for k2 in 0..=cols / 2 {
                    half[k2 * rows + m] = Complex64::new(0.0, 0.0);
                }
                continue;
            }
            for ((dst, &ri), &wi) in self.row_in.iter_mut().zip(r).zip(w) {
                *dst = ri * wi;
            }
            self.row_fft
                .process_with_scratch(&mut self.row_in, &mut self.row_out, &mut self.row_scratch)
                .expect("buffer sizes match the plan");
            for (k2, &v) in self.row_out.iter().enumerate() {
                half[k2 * rows + m] = v;
            }
        }
        self.col_fft.process_with_scratch(half, &mut self.fft_scratch);
    }

    /// Subtracts `coef * phi_k + conj(coef) * phi_{-k}` (or `coef * phi_k`
    /// for a self-conjugate `k`) from `residual` inside `support` and
    /// returns the new weighted energy, which only depends on that box.
    fn apply_update(
        &mut self,
        residual: &mut [f64],
        weights: &[f64],
        support: (usize, usize, usize, usize),
        k: BasisIndex,
        coef: Complex64,
        self_conjugate: bool,
    ) -> f64 {
        let (rows, cols) = (self.rows, self.cols);
        let (m0, m1, n0, n1) = support;
        let scale = if self_conjugate { 1.0 } else { 2.0 };
        let mut idx = (n0 * k.k2) % cols;
        for e in self.col_phase[n0..n1].iter_mut() {
            *e = self.tw_cols[idx];
            idx = (idx + k.k2) % cols;
        }
        let mut energy = 0.0;
        let mut idx = (m0 * k.k1) % rows;
        for m in m0..m1 {
            let z = coef * self.tw_rows[idx] * scale;
            idx = (idx + k.k1) % rows;
            let r = &mut residual[m * cols + n0..m * cols + n1];
            let w = &weights[m * cols + n0..m * cols + n1];
            for ((rv, &wv), e) in r.iter_mut().zip(w).zip(&self.col_phase[n0..n1]) {
                *rv -= z.re * e.re - z.im * e.im;
                energy += wv * *rv * *rv;
            }
        }
        energy
    }

    /// Evaluates `sum_k c_k phi_k` over the area with one inverse 2D FFT
    /// and returns its real part.
    pub fn render(&mut self, coefficients: &BTreeMap<BasisIndex, Complex64>) -> Grid {
        let (rows, cols) = (self.rows, self.cols);
        let zero = Complex64::new(0.0, 0.0);
        // column-major: bin (k1, k2) at k2 * rows + k1
        let mut buf = vec![zero; rows * cols];
        for (k, &c) in coefficients {
            buf[k.k2 * rows + k.k1] += c;
        }
        self.col_inv.process_with_scratch(&mut buf, &mut self.fft_scratch);
        let mut t = vec![zero; rows * cols];
        for k2 in 0..cols {
            for m in 0..rows {
                t[m * cols + k2] = buf[k2 * rows + m];
            }
        }
        self.row_inv.process_with_scratch(&mut t, &mut self.fft_scratch);
        Grid::from_vec(rows, cols, t.iter().map(|v| v.re).collect()).expect("shape")
    }
}

/// Free-standing projection, mostly for tests and one-off use.
pub fn weighted_projection_all(residual: &Grid, weights: &Grid) -> Result<Projections> {
    if residual.shape() != weights.shape() {
        return Err(Error::Dimensions("residual and weight map differ in shape".into()));
    }
    Projector::new(residual.rows(), residual.cols())?.project(residual, weights)
}

/// Signal and weights over the projection area.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxInput {
    pub signal: Grid,
    pub weights: Grid,
}

impl ApproxInput {
    pub fn new(signal: Grid, weights: Grid) -> Result<Self> {
        if signal.shape() != weights.shape() {
            return Err(Error::Dimensions("signal and weight map differ in shape".into()));
        }
        if weights.data().iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        Ok(Self { signal, weights })
    }

    /// Uses the layout's weight map. Padding samples of `signal` are kept as
    /// given; they carry zero weight.
    pub fn with_layout(signal: Grid, layout: &ProjectionLayout) -> Result<Self> {
        Self::new(signal, layout.weights().clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Lower-linear-index member of the selected conjugate pair.
    pub k: BasisIndex,
    /// Coefficient increment applied to `k` in this iteration.
    pub increment: Complex64,
    /// Weighted residual energy after the update.
    pub energy: f64,
}

/// Mutable state of one model generation.
///
/// Projections are carried in the frequency domain: subtracting a basis
/// pair from the residual shifts the weighted spectrum by the transform of
/// the weight map, so no forward transform is needed per iteration. The
/// residual itself is only tracked where the weights are nonzero, which is
/// all the energy needs. The model lives in the coefficient map and is
/// rendered on demand.
#[derive(Debug, Clone)]
pub struct ApproxState {
    rows: usize,
    cols: usize,
    weights: Grid,
    residual: Grid,
    /// Bounding box `(m0, m1, n0, n1)` of the nonzero weights.
    support: (usize, usize, usize, usize),
    /// Current projections, column-major half spectrum.
    spectrum: Vec<Complex64>,
    /// Weight spectrum, one column per `k2`, each column stored twice over
    /// so cyclic shifts become plain slices.
    weight_spectrum: Vec<Complex64>,
    best: BasisIndex,
    coefficients: BTreeMap<BasisIndex, Complex64>,
    selected: Vec<BasisIndex>,
    trace: Vec<IterationRecord>,
    norm: f64,
    energy: f64,
    initial_energy: f64,
}

fn weighted_energy(residual: &[f64], weights: &[f64]) -> f64 {
    residual.iter().zip(weights).map(|(r, w)| w * r * r).sum()
}

fn support_box(weights: &Grid) -> (usize, usize, usize, usize) {
    let (rows, cols) = weights.shape();
    let (mut m0, mut m1, mut n0, mut n1) = (rows, 0, cols, 0);
    for m in 0..rows {
        for n in 0..cols {
            if weights.get(m, n) != 0.0 {
                m0 = m0.min(m);
                m1 = m1.max(m + 1);
                n0 = n0.min(n);
                n1 = n1.max(n + 1);
            }
        }
    }
    if m0 >= m1 {
        (0, 0, 0, 0)
    } else {
        (m0, m1, n0, n1)
    }
}

/// Strongest candidate in a half spectrum, one representative per conjugate
/// pair; ties go to the lower linear index of the pair.
fn strongest(
    column: &[Complex64],
    k2: usize,
    rows: usize,
    cols: usize,
    best: &mut (f64, usize, BasisIndex),
) {
    let edge = k2 == 0 || k2 == cols / 2;
    let k1_max = if edge { rows / 2 } else { rows - 1 };
    for (k1, v) in column[..=k1_max].iter().enumerate() {
        let score = v.norm_sqr();
        if score < best.0 {
            continue;
        }
        let k = BasisIndex::new(k1, k2);
        let lin = k.linear(cols).min(k.conjugate(rows, cols).linear(cols));
        if score > best.0 || lin < best.1 {
            *best = (score, lin, k);
        }
    }
}

impl ApproxState {
    /// Starts from an empty model, so the residual is the signal itself.
    pub fn new(input: &ApproxInput, projector: &mut Projector) -> Result<Self> {
        let (rows, cols) = projector.shape();
        projector.check(&input.signal, "signal")?;
        projector.check(&input.weights, "weight map")?;

        let ones = vec![1.0; rows * cols];
        projector.project_into(&ones, input.weights.data());
        let w_half = projector.spectrum.half.clone();
        let mut weight_spectrum = vec![Complex64::new(0.0, 0.0); 2 * rows * cols];
        for k2 in 0..cols {
            for k1 in 0..rows {
                let v = if k2 <= cols / 2 {
                    w_half[k2 * rows + k1]
                } else {
                    let c = BasisIndex::new(k1, k2).conjugate(rows, cols);
                    w_half[c.k2 * rows + c.k1].conj()
                };
                weight_spectrum[k2 * 2 * rows + k1] = v;
                weight_spectrum[k2 * 2 * rows + rows + k1] = v;
            }
        }

        projector.project_into(input.signal.data(), input.weights.data());
        let spectrum = projector.spectrum.half.clone();
        let mut best = (f64::NEG_INFINITY, usize::MAX, BasisIndex::new(0, 0));
        for k2 in 0..=cols / 2 {
            strongest(&spectrum[k2 * rows..(k2 + 1) * rows], k2, rows, cols, &mut best);
        }

        let energy = weighted_energy(input.signal.data(), input.weights.data());
        Ok(Self {
            rows,
            cols,
            weights: input.weights.clone(),
            residual: input.signal.clone(),
            support: support_box(&input.weights),
            spectrum,
            weight_spectrum,
            best: best.2,
            coefficients: BTreeMap::new(),
            selected: Vec::new(),
            trace: Vec::new(),
            norm: input.weights.data().iter().sum(),
            energy,
            initial_energy: energy,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Residual `s - g`; meaningful where the weights are nonzero.
    pub fn residual(&self) -> &Grid {
        &self.residual
    }

    /// Current projection of the weighted residual onto `phi_k`.
    pub fn projection(&self, k: BasisIndex) -> Complex64 {
        if k.k2 <= self.cols / 2 {
            self.spectrum[k.k2 * self.rows + k.k1]
        } else {
            let c = k.conjugate(self.rows, self.cols);
            self.spectrum[c.k2 * self.rows + c.k1].conj()
        }
    }

    pub fn coefficients(&self) -> &BTreeMap<BasisIndex, Complex64> {
        &self.coefficients
    }

    pub fn selected(&self) -> &[BasisIndex] {
        &self.selected
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    /// Current model `g`, rendered from the coefficients.
    pub fn model(&self, projector: &mut Projector) -> Grid {
        projector.render(&self.coefficients)
    }

    /// One greedy iteration: select the strongest basis pair, update the
    /// coefficients, the residual and the projections.
    pub fn select_and_update(&mut self, projector: &mut Projector, gamma: f64) -> IterationRecord {
        let (rows, cols) = (self.rows, self.cols);
        assert_eq!(projector.shape(), (rows, cols), "projector does not match state");
        let k = self.best;
        let conj = k.conjugate(rows, cols);
        let self_conjugate = conj == k;
        let p = self.spectrum[k.k2 * rows + k.k1];
        let coef = if self.norm > 0.0 {
            if self_conjugate {
                Complex64::new(gamma * p.re / self.norm, 0.0)
            } else {
                p * (gamma / self.norm)
            }
        } else {
            Complex64::new(0.0, 0.0)
        };

        *self.coefficients.entry(k).or_default() += coef;
        if !self_conjugate {
            *self.coefficients.entry(conj).or_default() += coef.conj();
        }
        self.energy = projector.apply_update(
            self.residual.data_mut(),
            self.weights.data(),
            self.support,
            k,
            coef,
            self_conjugate,
        );

        // p(l) -= c W(l - k) + conj(c) W(l + k)
        let mut best = (f64::NEG_INFINITY, usize::MAX, BasisIndex::new(0, 0));
        let coef_conj = coef.conj();
        for l2 in 0..=cols / 2 {
            let column = &mut self.spectrum[l2 * rows..(l2 + 1) * rows];
            let d2 = (l2 + cols - k.k2) % cols;
            let minus = &self.weight_spectrum[d2 * 2 * rows + rows - k.k1..][..rows];
            if self_conjugate {
                for (v, &w) in column.iter_mut().zip(minus) {
                    *v -= coef * w;
                }
            } else {
                let s2 = (l2 + k.k2) % cols;
                let plus = &self.weight_spectrum[s2 * 2 * rows + k.k1..][..rows];
                for ((v, &a), &b) in column.iter_mut().zip(minus).zip(plus) {
                    *v -= coef * a + coef_conj * b;
                }
            }
            strongest(column, l2, rows, cols, &mut best);
        }
        self.best = best.2;

        let (reported, increment) = if conj.linear(cols) < k.linear(cols) {
            (conj, coef.conj())
        } else {
            (k, coef)
        };
        self.selected.push(reported);
        let record = IterationRecord {
            iteration: self.trace.len(),
            k: reported,
            increment,
            energy: self.energy,
        };
        self.trace.push(record);
        record
    }

    pub fn into_model(self, projector: &mut Projector) -> ParametricModel {
        ParametricModel {
            model: projector.render(&self.coefficients),
            coefficients: self.coefficients,
            selected: self.selected,
            trace: self.trace,
            initial_energy: self.initial_energy,
        }
    }
}

/// The generated model `g = sum c_k phi_k` and how it was built.
#[derive(Debug, Clone)]
pub struct ParametricModel {
    pub coefficients: BTreeMap<BasisIndex, Complex64>,
    pub selected: Vec<BasisIndex>,
    pub model: Grid,
    pub trace: Vec<IterationRecord>,
    /// Weighted energy of the signal before the first iteration.
    pub initial_energy: f64,
}

impl ParametricModel {
    /// Per-iteration CSV: iteration, k1, k2, |increment|, residual energy.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,k1,k2,increment_abs,residual_energy\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{:.9e},{:.9e}\n",
                r.iteration,
                r.k.k1,
                r.k.k2,
                r.increment.norm(),
                r.energy
            ));
        }
        out
    }
}

/// Reusable generator; keeps FFT plans and tables between blocks.
#[derive(Debug)]
pub struct ModelGenerator {
    projector: Projector,
    config: ApproxConfig,
}

impl ModelGenerator {
    pub fn new(rows: usize, cols: usize, config: ApproxConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            projector: Projector::new(rows, cols)?,
            config,
        })
    }

    pub fn config(&self) -> &ApproxConfig {
        &self.config
    }

    pub fn projector_mut(&mut self) -> &mut Projector {
        &mut self.projector
    }

    pub fn generate(&mut self, input: &ApproxInput) -> Result<ParametricModel> {
        if input.signal.shape() != self.projector.shape() {
            return Err(Error::Dimensions("input does not match the generator size".into()));
        }
        let mut state = ApproxState::new(input, &mut self.projector)?;
        for _ in 0..self.config.iterations {
            if self.config.energy_floor.is_some_and(|floor| state.energy < floor) {
                break;
            }
            state.select_and_update(&mut self.projector, self.config.gamma);
        }
        Ok(state.into_model(&mut self.projector))
    }
}

pub fn generate_model(input: &ApproxInput, config: &ApproxConfig) -> Result<ParametricModel> {
    ModelGenerator::new(input.signal.rows(), input.signal.cols(), *config)?.generate(input)
}

/// Cuts the block out of the model, rounded and clamped to 8 bits.
pub fn extract_block(model: &ParametricModel, layout: &ProjectionLayout) -> Vec<u8> {
    let (r0, c0) = layout.block_origin();
    let b = layout.block_size();
    debug_assert!(layout.region(r0, c0) == Region::Block);
    let mut out = Vec::with_capacity(b * b);
    for m in r0..r0 + b {
        for n in c0..c0 + b {
            out.push(model.model.get(m, n).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

//! Acceptance suite. Prints one line per criterion and fails if any is red.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srmc::codec::{code_residual, decode_sequence, encode_sequence, reconstruct, CodecConfig};
use srmc::decision::{decide, Mode};
use srmc::fse::{generate_model, weighted_projection_all, ApproxConfig, ApproxInput, BasisIndex};
use srmc::geometry::{build_layout, Availability, LayoutConfig};
use srmc::motion::{motion_compensate, motion_search, BlockRect, MotionVector, SearchConfig, SubpelMode};
use srmc::rd::{bd_rate, RdCurve, RdPoint};
use srmc::sweep::{rd_sweep, DEFAULT_GRID};
use srmc::synth::{synthesize, ClipKind, SynthConfig};
use srmc::video_io::{read_y4m, write_y4m};
use srmc::{Grid, Plane, Sequence};
use std::f64::consts::TAU;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_BUDGET: Duration = Duration::from_secs(10);
const REALNESS_TOL: f64 = 1e-9;
const MIN_PREDICTION_GAIN_DB: f64 = 0.1;
const TRANSLATION_BD_LIMIT: f64 = 1.0;
const RD_BUDGET: Duration = Duration::from_secs(600);
const BD_DOUBLE_TOL: f64 = 0.01;
const BD_ORACLE_TOL: f64 = 0.01;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Grid {
    Grid::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn phi(k1: usize, k2: usize, m: usize, n: usize, rows: usize, cols: usize) -> (f64, f64) {
    let phase = TAU * (k1 as f64 * m as f64 / rows as f64 + k2 as f64 * n as f64 / cols as f64);
    (phase.cos(), phase.sin())
}

fn projection_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for size in [8usize, 16] {
        for _ in 0..100 {
            let r = random_grid(&mut rng, size, size, -255.0, 255.0);
            let w = random_grid(&mut rng, size, size, 0.0, 1.0);
            let fast = weighted_projection_all(&r, &w).expect("projection");
            for k1 in 0..size {
                for k2 in 0..size {
                    let (mut re, mut im) = (0.0, 0.0);
                    for m in 0..size {
                        for n in 0..size {
                            let (c, s) = phi(k1, k2, m, n, size, size);
                            let v = w.get(m, n) * r.get(m, n);
                            re += v * c;
                            im -= v * s;
                        }
                    }
                    let got = fast.numerator(BasisIndex::new(k1, k2));
                    worst = worst.max((got.re - re).abs()).max((got.im - im).abs());
                }
            }
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < PROJECTION_TOL && elapsed < PROJECTION_BUDGET,
        format!("{pairs} pairs, max deviation {worst:.2e} (< {PROJECTION_TOL:e}), {elapsed:.2?} (< {PROJECTION_BUDGET:?})"),
    )
}

struct ModelRuns {
    violations: usize,
    transitions: usize,
    max_imag: f64,
    max_render: f64,
}

fn model_runs() -> ModelRuns {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let layout_cfg = LayoutConfig {
        rho_hat: 0.8,
        mu: 0.5,
        ..LayoutConfig::default()
    };
    let approx = ApproxConfig {
        iterations: 200,
        energy_floor: None,
        ..ApproxConfig::default()
    };
    let mut out = ModelRuns {
        violations: 0,
        transitions: 0,
        max_imag: 0.0,
        max_render: 0.0,
    };
    for _ in 0..50 {
        let avail = Availability::from_index(rng.gen_range(1..16));
        let layout = build_layout(layout_cfg, avail).expect("layout");
        let signal = random_grid(&mut rng, 64, 64, 0.0, 255.0);
        let model = generate_model(&ApproxInput::with_layout(signal, &layout).unwrap(), &approx).unwrap();
        let mut prev = model.initial_energy;
        for rec in &model.trace {
            out.transitions += 1;
            if rec.energy > prev {
                out.violations += 1;
            }
            prev = rec.energy;
        }
        // direct evaluation of sum c_k phi_k
        let mut re = vec![0.0; 64 * 64];
        let mut im = vec![0.0; 64 * 64];
        for (k, c) in &model.coefficients {
            for m in 0..64 {
                for n in 0..64 {
                    let (pc, ps) = phi(k.k1, k.k2, m, n, 64, 64);
                    re[m * 64 + n] += c.re * pc - c.im * ps;
                    im[m * 64 + n] += c.re * ps + c.im * pc;
                }
            }
        }
        for (i, (&r, &j)) in re.iter().zip(&im).enumerate() {
            out.max_imag = out.max_imag.max(j.abs());
            out.max_render = out.max_render.max((model.model.data()[i] - r).abs());
        }
    }
    out
}

fn decision_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let (mut wrong, mut ties) = (0, 0);
    for trial in 0..1000 {
        let len = if trial % 50 == 0 { 0 } else { rng.gen_range(1..=144) };
        let s: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let mc: Vec<u8> = s.iter().map(|&v| v.saturating_add(rng.gen_range(0..12))).collect();
        let g: Vec<f64> = match trial % 4 {
            // exact tie: model equals the compensated samples
            0 => mc.iter().map(|&v| v as f64).collect(),
            1 => s.iter().map(|&v| v as f64 + rng.gen_range(-6.0..6.0)).collect(),
            2 => s.iter().map(|&v| (v as f64 + rng.gen_range(-12i32..12) as f64).round()).collect(),
            _ => mc.iter().map(|&v| 255.0 - v as f64).collect(),
        };
        let sad_g: f64 = s.iter().zip(&g).map(|(&a, &b)| (a as f64 - b).abs()).sum();
        let sad_mc: f64 = s.iter().zip(&mc).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
        let out = decide(&s, &g, &mc).unwrap();
        let expect = if sad_g < sad_mc { Mode::Refined } else { Mode::Direct };
        if sad_g == sad_mc {
            ties += 1;
        }
        let (chosen, other) = match out.chosen {
            Mode::Refined => (sad_g, sad_mc),
            Mode::Direct => (sad_mc, sad_g),
        };
        if out.chosen != expect || chosen > other || out.sad_refined != sad_g || out.sad_direct != sad_mc {
            wrong += 1;
        }
    }
    verdict(wrong == 0, format!("1000 triples, {ties} ties, {wrong} wrong verdicts"))
}

fn decoder_replay() -> Verdict {
    let seq = synthesize(&SynthConfig {
        width: 176,
        height: 144,
        frames: 10,
        kind: ClipKind::Flicker,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = CodecConfig::default();
    let out = encode_sequence(&seq, &cfg).unwrap();
    let decoded = decode_sequence(&out.stream, &cfg).unwrap();
    let mismatches: usize = decoded
        .frames()
        .iter()
        .zip(out.reconstructed.frames())
        .map(|(a, b)| a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count())
        .sum();
    let refined: usize = out.reports.iter().map(|r| r.refined_blocks()).sum();
    verdict(
        mismatches == 0 && decoded.len() == 10,
        format!("10 frames, {refined} refined blocks, {mismatches} mismatched samples"),
    )
}

fn motion_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let cfg = SearchConfig {
        search_range: 4,
        subpel: SubpelMode::Half,
    };
    let (mut checked, mut wrong) = (0, 0);
    for pair in 0..20 {
        let reference = Plane::from_fn(64, 64, |_, _| rng.gen());
        let cur = if pair % 2 == 0 {
            Plane::from_fn(64, 64, |_, _| rng.gen())
        } else {
            let (sx, sy) = (rng.gen_range(-3..=3isize), rng.gen_range(-3..=3isize));
            Plane::from_fn(64, 64, |x, y| {
                let v = reference.get_clamped(x as isize + sx, y as isize + sy) as i32 + rng.gen_range(-3..=3);
                v.clamp(0, 255) as u8
            })
        };
        for by in 0..4 {
            for bx in 0..4 {
                let block = BlockRect::square(bx * 16, by * 16, 16);
                let mut best = u32::MAX;
                for dy in -4..=4isize {
                    for dx in -4..=4isize {
                        let mut sad = 0u32;
                        for y in 0..16 {
                            for x in 0..16 {
                                let (px, py) = ((bx * 16 + x) as isize, (by * 16 + y) as isize);
                                let r = reference.get_clamped(px + dx, py + dy);
                                sad += cur.get(px as usize, py as usize).abs_diff(r) as u32;
                            }
                        }
                        best = best.min(sad);
                    }
                }
                let got = motion_search(&cur, &reference, block, &cfg);
                checked += 1;
                if got.integer_sad != best || got.sad > got.integer_sad {
                    wrong += 1;
                }
            }
        }
    }
    verdict(wrong == 0, format!("{checked} blocks over 20 pairs, {wrong} differ from exhaustive minimum"))
}

fn directional_reproduction() -> Verdict {
    let start = Instant::now();
    let cfg = CodecConfig::default();
    let ramp = synthesize(&SynthConfig {
        frames: 30,
        kind: ClipKind::Ramp,
        ..SynthConfig::default()
    })
    .unwrap();
    let translate = synthesize(&SynthConfig {
        frames: 30,
        kind: ClipKind::Translate,
        ..SynthConfig::default()
    })
    .unwrap();
    let r = rd_sweep(&ramp, &cfg, &DEFAULT_GRID).unwrap();
    let t = rd_sweep(&translate, &cfg, &DEFAULT_GRID).unwrap();
    let elapsed = start.elapsed();
    let gain = r.mean_prediction_gain();
    let within = r.within_run_gain();
    let pass = gain >= MIN_PREDICTION_GAIN_DB
        && r.bd.percent < 0.0
        && t.bd.percent.abs() <= TRANSLATION_BD_LIMIT
        && elapsed < RD_BUDGET;
    verdict(
        pass,
        format!(
            "ramp: prediction gain {gain:.3} dB (>= {MIN_PREDICTION_GAIN_DB}; same-reference gain {within:.3} dB), BD-rate {:.3}% (< 0); translation: BD-rate {:.3}% (|.| <= {TRANSLATION_BD_LIMIT}); {elapsed:.1?} (< {RD_BUDGET:?})",
            r.bd.percent, t.bd.percent
        ),
    )
}

fn curve(label: &str, pts: &[(f64, f64)]) -> RdCurve {
    RdCurve::new(
        label,
        pts.iter()
            .enumerate()
            .map(|(i, &(rate, psnr))| RdPoint {
                quant_step: i as f64,
                rate_kbps: rate,
                psnr_db: psnr,
            })
            .collect(),
    )
    .unwrap()
}

/// Exact cubic through four points by Lagrange interpolation.
fn lagrange(xs: &[f64; 4], ys: &[f64; 4], x: f64) -> f64 {
    (0..4)
        .map(|i| {
            let li: f64 = (0..4).filter(|&j| j != i).map(|j| (x - xs[j]) / (xs[i] - xs[j])).product();
            ys[i] * li
        })
        .sum()
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn bd_oracle() -> Verdict {
    let anchor_pts = [(120.0, 30.1), (210.0, 32.6), (400.0, 35.2), (800.0, 37.9), (1500.0, 40.3)];
    let doubled: Vec<(f64, f64)> = anchor_pts.iter().map(|&(r, p)| (2.0 * r, p)).collect();
    let anchor = curve("anchor", &anchor_pts);
    let double = bd_rate(&anchor, &curve("doubled", &doubled)).unwrap().percent;
    let same = bd_rate(&anchor, &anchor).unwrap().percent;

    let a4 = [(100.0, 31.0), (180.0, 33.4), (330.0, 35.9), (600.0, 38.1)];
    let t4 = [(90.0, 31.3), (170.0, 33.9), (300.0, 36.2), (560.0, 38.6)];
    let lib = bd_rate(&curve("a", &a4), &curve("t", &t4)).unwrap();
    let (ax, ay): (Vec<f64>, Vec<f64>) = a4.iter().map(|&(r, p)| (p, f64::log10(r))).unzip();
    let (tx, ty): (Vec<f64>, Vec<f64>) = t4.iter().map(|&(r, p)| (p, f64::log10(r))).unzip();
    let (ax, ay, tx, ty) = (
        <[f64; 4]>::try_from(ax).unwrap(),
        <[f64; 4]>::try_from(ay).unwrap(),
        <[f64; 4]>::try_from(tx).unwrap(),
        <[f64; 4]>::try_from(ty).unwrap(),
    );
    let lo = ax[0].max(tx[0]);
    let hi = ax[3].min(tx[3]);
    let diff = simpson(|x| lagrange(&tx, &ty, x) - lagrange(&ax, &ay, x), lo, hi, 20_000);
    let oracle = 100.0 * (10f64.powf(diff / (hi - lo)) - 1.0);

    let pass = (double - 100.0).abs() <= BD_DOUBLE_TOL && same == 0.0 && (lib.percent - oracle).abs() <= BD_ORACLE_TOL;
    verdict(
        pass,
        format!(
            "doubled rate {double:.6}% (100 +- {BD_DOUBLE_TOL}), identical {same}% (exactly 0), 4-point sets {:.6}% vs oracle {oracle:.6}% (+- {BD_ORACLE_TOL})",
            lib.percent
        ),
    )
}

/// Motion search, compensation and residual coding, with nothing else.
fn pure_mc(seq: &Sequence, cfg: &CodecConfig) -> (Sequence, Sequence) {
    let frames = seq.frames();
    let b = cfg.layout.block_size;
    let mut recon = vec![frames[0].clone()];
    let mut pred = vec![frames[0].clone()];
    for (i, cur) in frames.iter().enumerate().skip(1) {
        let reference = &recon[i - 1];
        let (w, h) = (cur.width(), cur.height());
        let mut r = Plane::filled(w, h, 0);
        let mut p = Plane::filled(w, h, 0);
        for y0 in (0..h).step_by(b) {
            for x0 in (0..w).step_by(b) {
                let rect = BlockRect {
                    x: x0,
                    y: y0,
                    width: b.min(w - x0),
                    height: b.min(h - y0),
                };
                let mv: MotionVector = motion_search(cur, reference, rect, &cfg.search).mv;
                let mc = motion_compensate(reference, rect, mv);
                let mut residual = Vec::with_capacity(rect.area());
                for y in 0..rect.height {
                    for x in 0..rect.width {
                        residual.push(cur.get(x0 + x, y0 + y) as i16 - mc[y * rect.width + x] as i16);
                    }
                }
                let (_, deq) = code_residual(&residual, rect.width, rect.height, cfg.quant_step);
                let rec = reconstruct(&mc, &deq);
                for y in 0..rect.height {
                    for x in 0..rect.width {
                        r.set(x0 + x, y0 + y, rec[y * rect.width + x]);
                        p.set(x0 + x, y0 + y, mc[y * rect.width + x]);
                    }
                }
            }
        }
        recon.push(r);
        pred.push(p);
    }
    (
        Sequence::new(recon, seq.frame_rate()).unwrap(),
        Sequence::new(pred, seq.frame_rate()).unwrap(),
    )
}

fn ablation_identity() -> Verdict {
    let dir = tempfile::tempdir().expect("temp dir");
    let status = Command::new(env!("CARGO_BIN_EXE_srmc"))
        .args(["predict", "--synthetic", "flicker", "--width", "120", "--height", "72", "--frames", "6"])
        .args(["--seed", "9", "--quant-step", "12", "--no-refine", "--out-dir"])
        .arg(dir.path())
        .output()
        .expect("running srmc");
    if !status.status.success() {
        return verdict(false, format!("srmc failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let seq = synthesize(&SynthConfig {
        width: 120,
        height: 72,
        frames: 6,
        kind: ClipKind::Flicker,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = CodecConfig {
        quant_step: 12.0,
        refinement_enabled: false,
        ..CodecConfig::default()
    };
    let (recon, pred) = pure_mc(&seq, &cfg);
    let cli_recon = std::fs::read(dir.path().join("reconstructed.y4m")).unwrap();
    let cli_pred = std::fs::read(dir.path().join("predicted.y4m")).unwrap();
    let same_recon = cli_recon == write_y4m(&recon);
    let same_pred = cli_pred == write_y4m(&pred);
    let frames = read_y4m(&cli_recon).map(|s| s.len()).unwrap_or(0);
    verdict(
        same_recon && same_pred,
        format!("{frames} frames, reconstruction identical: {same_recon}, prediction identical: {same_pred}"),
    )
}

fn main() -> ExitCode {
    let runs = model_runs();
    let monotone = verdict(
        runs.violations == 0,
        format!("50 inputs, {} transitions, {} increases", runs.transitions, runs.violations),
    );
    let realness = verdict(
        runs.max_imag < REALNESS_TOL && runs.max_render < REALNESS_TOL,
        format!(
            "max imaginary residue {:.2e}, max |g - sum c_k phi_k| {:.2e} (both < {REALNESS_TOL:e})",
            runs.max_imag, runs.max_render
        ),
    );
    let results: Vec<(&str, Verdict)> = vec![
        ("FFT projections match direct sums", projection_oracle()),
        ("weighted residual energy never increases", monotone),
        ("model is real and equals its expansion", realness),
        ("implicit decision follows the strict inequality", decision_correctness()),
        ("decoder replay is bit-exact", decoder_replay()),
        ("motion search finds the exhaustive minimum", motion_optimality()),
        ("refinement helps under luminance change only", directional_reproduction()),
        ("BD-rate matches closed forms and an integration oracle", bd_oracle()),
        ("--no-refine equals pure motion compensation", ablation_identity()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {}: {} [{name}] {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

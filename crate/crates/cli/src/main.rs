use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use srmc::codec::{encode_sequence, CodecConfig, EncodeSummary, LoopMode};
use srmc::exec::Execution;
use srmc::fse::{generate_model, ApproxConfig, ApproxInput};
use srmc::geometry::{build_layout, Availability, LayoutConfig};
use srmc::motion::{SearchConfig, SubpelMode};
use srmc::rd::{bd_rate, RdCurve};
use srmc::sweep::{json_db, rd_sweep, summary_json, write_block_log, write_frame_log, DEFAULT_GRID};
use srmc::synth::{synthesize, ClipKind, SynthConfig};
use srmc::video_io::{read_pgm, read_raw_yuv, read_y4m, write_pgm, write_y4m, Subsampling};
use srmc::{Grid, Sequence};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "srmc", version, about = "Spatially refined motion-compensated prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode once and write reconstruction, prediction and logs.
    Predict(PredictArgs),
    /// Sweep quantiser steps with refinement on and off.
    RdSweep(SweepArgs),
    /// BD-rate of one RD curve against another.
    Bdrate(BdrateArgs),
    /// Generate the model for one projection area stored as PGM.
    Extrapolate(ExtrapolateArgs),
    /// Print the effective configuration.
    Info(InfoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Subpel {
    Full,
    Half,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loop {
    Closed,
    Open,
}

#[derive(Clone, Copy, ValueEnum)]
enum Chroma {
    #[value(name = "420")]
    Yuv420,
    #[value(name = "422")]
    Yuv422,
    #[value(name = "444")]
    Yuv444,
    Mono,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clip {
    Static,
    Translate,
    Ramp,
    Flicker,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Y4M file, or raw planar YUV when --width and --height are given.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Chroma layout of raw input.
    #[arg(long, value_enum, default_value = "420")]
    chroma: Chroma,
    /// Use a generated clip instead of a file.
    #[arg(long, value_enum)]
    synthetic: Option<Clip>,
    /// Frames of the synthetic clip, or a cap on frames read from a file.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 16)]
    block_size: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 0.8)]
    rho_hat: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    decision_bar: usize,
}

#[derive(Args, Clone)]
struct CodecArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 16)]
    search_range: u32,
    #[arg(long, value_enum, default_value = "half")]
    subpel: Subpel,
    #[arg(long = "loop", value_enum, default_value = "closed")]
    loop_mode: Loop,
    /// Line-scan processing on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, default_value_t = 16.0)]
    quant_step: f64,
    /// Motion compensation only.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    codec: CodecArgs,
    /// Comma-separated quantiser steps.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID.to_vec())]
    quant_grid: Vec<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BdrateArgs {
    /// Anchor curve CSV (quant_step, rate_kbps, psnr_db).
    anchor: PathBuf,
    /// Test curve CSV.
    test: PathBuf,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// 8-bit PGM covering the whole projection area.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Neighbours to use, any of l (left), tl, t, tr, or "all"/"none".
    #[arg(long, default_value = "all")]
    neighbors: String,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, default_value_t = 16.0)]
    quant_step: f64,
    #[arg(long)]
    no_refine: bool,
}

impl ModelArgs {
    fn layout(&self) -> LayoutConfig {
        LayoutConfig {
            block_size: self.block_size,
            rho_hat: self.rho_hat,
            mu: self.mu,
            decision_bar: self.decision_bar,
            ..LayoutConfig::default()
        }
    }

    fn approx(&self) -> ApproxConfig {
        ApproxConfig {
            iterations: self.iterations,
            gamma: self.gamma,
            ..ApproxConfig::default()
        }
    }
}

impl CodecArgs {
    fn config(&self, quant_step: f64, refine: bool) -> Result<CodecConfig> {
        let cfg = CodecConfig {
            layout: self.model.layout(),
            search: SearchConfig {
                search_range: self.search_range,
                subpel: match self.subpel {
                    Subpel::Full => SubpelMode::Full,
                    Subpel::Half => SubpelMode::Half,
                },
            },
            approx: self.model.approx(),
            quant_step,
            refinement_enabled: refine,
            loop_mode: match self.loop_mode {
                Loop::Closed => LoopMode::Closed,
                Loop::Open => LoopMode::Open,
            },
            execution: if self.sequential { Execution::Sequential } else { Execution::Parallel },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl InputArgs {
    fn load(&self) -> Result<Sequence> {
        let seq = match (&self.input, self.synthetic) {
            (Some(path), _) => {
                let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                match (self.width, self.height) {
                    (Some(w), Some(h)) => {
                        let sub = match self.chroma {
                            Chroma::Yuv420 => Subsampling::Yuv420,
                            Chroma::Yuv422 => Subsampling::Yuv422,
                            Chroma::Yuv444 => Subsampling::Yuv444,
                            Chroma::Mono => Subsampling::Mono,
                        };
                        read_raw_yuv(&bytes, w, h, sub)?
                    }
                    (None, None) => read_y4m(&bytes)?,
                    _ => bail!("raw input needs both --width and --height"),
                }
            }
            (None, Some(clip)) => synthesize(&SynthConfig {
                width: self.width.unwrap_or(352),
                height: self.height.unwrap_or(288),
                frames: self.frames.unwrap_or(30),
                kind: match clip {
                    Clip::Static => ClipKind::Static,
                    Clip::Translate => ClipKind::Translate,
                    Clip::Ramp => ClipKind::Ramp,
                    Clip::Flicker => ClipKind::Flicker,
                },
                seed: self.seed,
                ..SynthConfig::default()
            })?,
            (None, None) => bail!("give --input or --synthetic"),
        };
        match self.frames {
            Some(n) if self.input.is_some() && n < seq.len() => {
                let rate = seq.frame_rate();
                Ok(Sequence::new(seq.into_frames().into_iter().take(n).collect(), rate)?)
            }
            _ => Ok(seq),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn predict(args: PredictArgs) -> Result<()> {
    let seq = args.input.load()?;
    let cfg = args.codec.config(args.quant_step, !args.no_refine)?;
    let out = encode_sequence(&seq, &cfg)?;
    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    fs::write(dir.join("reconstructed.y4m"), write_y4m(&out.reconstructed))?;
    fs::write(dir.join("predicted.y4m"), write_y4m(&out.predicted))?;
    write_block_log(fs::File::create(dir.join("blocks.csv"))?, &[(cfg.quant_step, &out.reports[..])])?;
    write_frame_log(fs::File::create(dir.join("frames.csv"))?, &out.reports)?;
    let summary = EncodeSummary::from_reports(&out.reports, seq.frame_rate());
    let json = serde_json::json!({
        "config": cfg,
        "input": { "width": seq.width(), "height": seq.height(), "frames": seq.len() },
        "summary": summary_json(&summary),
    });
    write_json(&dir.join("summary.json"), &json)?;
    println!(
        "{} P-frames, {:.2} kbit/s, PSNR {}, prediction PSNR direct {} final {}, refined {}/{} blocks",
        summary.p_frames,
        summary.rate_kbps,
        json_db(summary.reconstruction_psnr),
        json_db(summary.mean_prediction_psnr_direct),
        json_db(summary.mean_prediction_psnr_final),
        summary.refined_blocks,
        summary.blocks
    );
    Ok(())
}

fn rd_sweep_cmd(args: SweepArgs) -> Result<()> {
    let seq = args.input.load()?;
    let base = args.codec.config(16.0, true)?;
    let result = rd_sweep(&seq, &base, &args.quant_grid)?;
    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    result.direct.write_csv(fs::File::create(dir.join("rd_direct.csv"))?)?;
    result.refined.write_csv(fs::File::create(dir.join("rd_refined.csv"))?)?;
    let rows: Vec<(f64, &[srmc::codec::FrameReport])> =
        result.runs_with(true).map(|r| (r.quant_step, &r.reports[..])).collect();
    write_block_log(fs::File::create(dir.join("blocks.csv"))?, &rows)?;
    let runs: Vec<serde_json::Value> = result
        .runs
        .iter()
        .map(|r| {
            let mut v = summary_json(&r.summary);
            v["quant_step"] = serde_json::json!(r.quant_step);
            v["refinement_enabled"] = serde_json::json!(r.refinement_enabled);
            v
        })
        .collect();
    let json = serde_json::json!({
        "config": base,
        "quant_grid": args.quant_grid,
        "input": { "width": seq.width(), "height": seq.height(), "frames": seq.len() },
        "bd_rate": {
            "percent": result.bd.percent,
            "method": result.bd.method,
            "psnr_low": result.bd.psnr_low,
            "psnr_high": result.bd.psnr_high,
        },
        "mean_prediction_gain_db": result.mean_prediction_gain(),
        "same_reference_prediction_gain_db": result.within_run_gain(),
        "runs": runs,
    });
    write_json(&dir.join("summary.json"), &json)?;
    println!("BD-rate refined vs direct: {:.3}% ({:?} fit)", result.bd.percent, result.bd.method);
    println!("mean prediction PSNR gain: {:.3} dB", result.mean_prediction_gain());
    Ok(())
}

fn bdrate_cmd(args: BdrateArgs) -> Result<()> {
    let read = |p: &Path| -> Result<RdCurve> {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(RdCurve::read_csv(p.display().to_string(), f)?)
    };
    let bd = bd_rate(&read(&args.anchor)?, &read(&args.test)?)?;
    println!("{}", serde_json::to_string(&bd)?);
    Ok(())
}

fn parse_neighbors(s: &str) -> Result<Availability> {
    match s {
        "all" => return Ok(Availability::ALL),
        "none" => return Ok(Availability::NONE),
        _ => {}
    }
    let mut a = Availability::NONE;
    for part in s.split(',') {
        match part.trim() {
            "l" => a.left = true,
            "tl" => a.top_left = true,
            "t" => a.top = true,
            "tr" => a.top_right = true,
            other => bail!("unknown neighbour '{other}'"),
        }
    }
    Ok(a)
}

fn extrapolate(args: ExtrapolateArgs) -> Result<()> {
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let plane = read_pgm(&bytes)?;
    let config = args.model.layout();
    let (rows, cols) = config.projection;
    if (plane.height(), plane.width()) != (rows, cols) {
        bail!("input is {}x{}, the projection area is {cols}x{rows}", plane.width(), plane.height());
    }
    let layout = build_layout(config, parse_neighbors(&args.neighbors)?)?;
    let signal = Grid::from_fn(rows, cols, |m, n| {
        if layout.weights().get(m, n) > 0.0 {
            plane.get(n, m) as f64
        } else {
            0.0
        }
    });
    let model = generate_model(&ApproxInput::with_layout(signal, &layout)?, &args.model.approx())?;
    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    fs::write(dir.join("model.pgm"), write_pgm(&model.model.to_plane(1.0)))?;
    fs::write(dir.join("weights.pgm"), write_pgm(&layout.weight_map_plane()))?;
    fs::write(dir.join("regions.pgm"), write_pgm(&layout.region_map_plane()))?;
    write_json(&dir.join("layout.json"), &layout.summary_json())?;
    fs::write(dir.join("trace.csv"), model.trace_csv())?;
    println!(
        "{} iterations, weighted energy {:.3} -> {:.3}",
        model.trace.len(),
        model.initial_energy,
        model.trace.last().map_or(model.initial_energy, |r| r.energy)
    );
    Ok(())
}

fn info(args: InfoArgs) -> Result<()> {
    let cfg = args.codec.config(args.quant_step, !args.no_refine)?;
    let json = serde_json::json!({
        "config": cfg,
        "parallel_available": srmc::Execution::Parallel.is_parallel(),
        "default_quant_grid": DEFAULT_GRID,
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Predict(a) => predict(a),
        Command::RdSweep(a) => rd_sweep_cmd(a),
        Command::Bdrate(a) => bdrate_cmd(a),
        Command::Extrapolate(a) => extrapolate(a),
        Command::Info(a) => info(a),
    }
}

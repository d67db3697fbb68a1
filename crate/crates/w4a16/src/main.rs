use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use w4a16::commands::{cmd_gemm, cmd_quantize, cmd_random, cmd_sweep, cmd_traffic, GemmArgs};
use w4a16::sweep::{ExperimentSpec, BENCHMARK_SHAPES, DEFAULT_BATCHES, DEFAULT_SPLITS};
use w4a16_core::engine::EngineKind;
use w4a16_core::quant::QuantMode;
use w4a16_core::{ReusePolicy, SplitKPlan};

#[derive(Parser)]
#[command(
    name = "w4a16",
    version,
    about = "W4A16 Split-K GEMM engines and decoupled-NPU traffic model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize an FP16 matrix file (K x N weights) to a packed INT4 file.
    Quantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::PerChannel)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiply an FP16 activation file by a packed weight file.
    Gemm {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        w: PathBuf,
        #[arg(long, default_value = "splitk")]
        engine: String,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print closed-form traffic and modelled time for one shape.
    Traffic {
        /// Weight shape as N,K.
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Engine to report; all engines when omitted.
        #[arg(long)]
        engine: Option<String>,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sweep shapes x batches x splits x engines and write CSV.
    Sweep {
        /// Weight shape N,K; repeatable. Defaults to the six benchmark shapes.
        #[arg(long)]
        shape: Vec<String>,
        /// Comma-separated batch sizes.
        #[arg(long)]
        m: Option<String>,
        /// Comma-separated split factors.
        #[arg(long)]
        split: Option<String>,
        /// Comma-separated engines.
        #[arg(long)]
        engine: Option<String>,
        /// Tile sizes m,n,k.
        #[arg(long)]
        tile: Option<String>,
        #[arg(long, value_enum, default_value_t = Reuse::Unit)]
        reuse: Reuse,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Skip running the engines; report the model only.
        #[arg(long)]
        model_only: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded random FP16 matrix file with entries in [-1, 1].
    Random {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value_t = 1)]
    split: usize,
    /// Tile sizes m,n,k (multiples of 16).
    #[arg(long, default_value = "128,128,128")]
    tile: String,
    #[arg(long, default_value_t = 24)]
    cores: usize,
    #[arg(long, value_enum, default_value_t = Reuse::Unit)]
    reuse: Reuse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerTensor,
    PerChannel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reuse {
    Unit,
    FullRowResident,
}

impl From<Reuse> for ReusePolicy {
    fn from(r: Reuse) -> Self {
        match r {
            Reuse::Unit => ReusePolicy::Unit,
            Reuse::FullRowResident => ReusePolicy::FullRowResident,
        }
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().ok().with_context(|| format!("bad {what} {s:?}")))
        .collect()
}

fn parse_shape(text: &str) -> anyhow::Result<(usize, usize)> {
    match parse_list::<usize>(text, "shape")?.as_slice() {
        &[n, k] => Ok((n, k)),
        _ => bail!("shape must be N,K, got {text:?}"),
    }
}

fn parse_tiles(text: &str) -> anyhow::Result<(usize, usize, usize)> {
    match parse_list::<usize>(text, "tile size")?.as_slice() {
        &[m, n, k] => Ok((m, n, k)),
        _ => bail!("tile must be m,n,k, got {text:?}"),
    }
}

fn parse_engine(text: &str) -> anyhow::Result<EngineKind> {
    Ok(text.parse::<EngineKind>()?)
}

impl PlanArgs {
    fn plan(&self) -> anyhow::Result<SplitKPlan> {
        let (m, n, k) = parse_tiles(&self.tile)?;
        let plan = SplitKPlan::default()
            .with_splits(self.split)
            .with_tiles(m, n, k)
            .with_cores(self.cores)
            .with_reuse(self.reuse.into());
        plan.validate()?;
        Ok(plan)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Quantize { input, mode, out } => {
            let mode = match mode {
                Mode::PerTensor => QuantMode::PerTensor,
                Mode::PerChannel => QuantMode::PerChannel,
            };
            println!("{}", cmd_quantize(&input, mode, &out)?);
        }
        Command::Gemm {
            a,
            w,
            engine,
            plan,
            config,
            out,
            workers,
        } => {
            let args = GemmArgs {
                a,
                w,
                engine: parse_engine(&engine)?,
                plan: plan.plan()?,
                config,
                out,
                workers,
            };
            print!("{}", cmd_gemm(&args)?);
        }
        Command::Traffic {
            shape,
            m,
            engine,
            plan,
            config,
        } => {
            let (n, k) = parse_shape(&shape)?;
            let engines = match engine {
                Some(e) => vec![parse_engine(&e)?],
                None => EngineKind::ALL.to_vec(),
            };
            print!("{}", cmd_traffic(m, n, k, &plan.plan()?, &engines, config.as_deref())?);
        }
        Command::Sweep {
            shape,
            m,
            split,
            engine,
            tile,
            reuse,
            seed,
            config,
            model_only,
            workers,
            out,
        } => {
            let spec = ExperimentSpec {
                shapes: if shape.is_empty() {
                    BENCHMARK_SHAPES.to_vec()
                } else {
                    shape.iter().map(|s| parse_shape(s)).collect::<anyhow::Result<_>>()?
                },
                batches: m.map_or(Ok(DEFAULT_BATCHES.to_vec()), |s| parse_list(&s, "batch size"))?,
                splits: split.map_or(Ok(DEFAULT_SPLITS.to_vec()), |s| parse_list(&s, "split factor"))?,
                engines: match engine {
                    Some(s) => s
                        .split(',')
                        .map(|e| parse_engine(e.trim()))
                        .collect::<anyhow::Result<_>>()?,
                    None => EngineKind::ALL.to_vec(),
                },
                seed,
                config_path: config,
                tiles: tile.as_deref().map_or(Ok((128, 128, 128)), parse_tiles)?,
                reuse: reuse.into(),
                functional: !model_only,
            };
            let csv = cmd_sweep(&spec, workers, out.as_deref())?;
            if out.is_none() {
                print!("{}", String::from_utf8_lossy(&csv));
            }
        }
        Command::Random { rows, cols, seed, out } => cmd_random(rows, cols, seed, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

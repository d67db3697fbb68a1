//! Implementations of the `w4a16` subcommands. Each returns a summary value
//! that the binary prints; none of them does arithmetic of its own beyond
//! calling into `w4a16_core`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use w4a16_core::engine::{dataparallel_w4a16_gemm_with, fp16_gemm_with, splitk_w4a16_gemm_with, EngineKind, Phase};
use w4a16_core::machine::{predicted_speedup, CostReport, Speedup, StreamBytes, TrafficReport};
use w4a16_core::quant::{dequantize_matrix, quantize_matrix, QuantMode};
use w4a16_core::{MachineConfig, SplitKPlan};

use crate::config::load_machine_config;
use crate::error::{Error, Result};
use crate::formats::{load_matrix, load_packed, save_matrix, save_packed, PackedWeights};
use crate::parallel::ThreadPoolExecutor;
use crate::sweep::{cost_for, random_activations, sweep_csv, traffic_for, ExperimentSpec};

fn machine_config(path: Option<&Path>) -> Result<MachineConfig> {
    path.map_or_else(|| Ok(MachineConfig::default()), load_machine_config)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizeSummary {
    pub rows: usize,
    pub cols: usize,
    pub mode: QuantMode,
    /// Largest `|dequantize(quantize(x)) - x|` over all entries.
    pub max_abs_error: f32,
    pub max_scale: f32,
}

impl fmt::Display for QuantizeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "quantized {}x{} ({:?}): max abs error {:e}, max scale {:e}",
            self.rows, self.cols, self.mode, self.max_abs_error, self.max_scale
        )
    }
}

/// Quantizes an FP16 matrix file into a packed weight file.
pub fn cmd_quantize(input: &Path, mode: QuantMode, out: &Path) -> Result<QuantizeSummary> {
    let wf = load_matrix(input)?;
    let (matrix, params) = quantize_matrix(&wf, mode)?;
    let back = dequantize_matrix(&matrix, &params)?;
    let max_abs_error = wf
        .data()
        .iter()
        .zip(back.data())
        .map(|(x, y)| (x.to_f32() - y.to_f32()).abs())
        .fold(0.0f32, f32::max);
    let max_scale = params.scales().iter().copied().fold(0.0f32, f32::max);
    save_packed(out, &PackedWeights { matrix, params })?;
    Ok(QuantizeSummary {
        rows: wf.rows(),
        cols: wf.cols(),
        mode,
        max_abs_error,
        max_scale,
    })
}

#[derive(Clone, Debug)]
pub struct GemmArgs {
    pub a: PathBuf,
    pub w: PathBuf,
    pub engine: EngineKind,
    pub plan: SplitKPlan,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GemmSummary {
    pub engine: EngineKind,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub splits: usize,
    /// Bytes recorded by the execution trace.
    pub traced: TrafficReport,
    /// Bytes predicted by the closed-form model.
    pub modelled: TrafficReport,
    pub cost: CostReport,
}

fn write_streams(f: &mut fmt::Formatter<'_>, label: &str, t: &StreamBytes) -> fmt::Result {
    writeln!(
        f,
        "  {label:<8} packed={} dq_write={} dq_read={} fp16_w={} a={} split_w={} split_r={} c={} total={}",
        t.weight_packed_read,
        t.dequant_write,
        t.dequant_read,
        t.weight_fp16_read,
        t.a_read,
        t.split_write,
        t.split_read,
        t.c_write,
        t.total()
    )
}

fn write_cost(f: &mut fmt::Formatter<'_>, cost: &CostReport) -> fmt::Result {
    for p in Phase::ALL {
        let c = cost.phase(p);
        writeln!(f, "  {:<8} {:.6e} s ({})", p.name(), c.seconds, c.bound.name())?;
    }
    writeln!(f, "  total    {:.6e} s", cost.total)
}

impl fmt::Display for GemmSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} M={} N={} K={} S={}",
            self.engine.name(),
            self.m,
            self.n,
            self.k,
            self.splits
        )?;
        writeln!(f, "trace bytes:")?;
        for p in Phase::ALL {
            write_streams(f, p.name(), self.traced.phase(p))?;
        }
        write_streams(f, "total", &self.traced.totals())?;
        writeln!(
            f,
            "closed-form model: {}",
            if self.traced == self.modelled {
                "matches trace"
            } else {
                "DIFFERS from trace"
            }
        )?;
        writeln!(f, "modelled time:")?;
        write_cost(f, &self.cost)
    }
}

/// Runs one engine on an activation file and a packed weight file.
pub fn cmd_gemm(args: &GemmArgs) -> Result<GemmSummary> {
    let cfg = machine_config(args.config.as_deref())?;
    let a = load_matrix(&args.a)?;
    let PackedWeights { matrix: w, params } = load_packed(&args.w)?;
    let exec = ThreadPoolExecutor::new(args.workers);
    let plan = args.plan;
    let (c, trace) = match args.engine {
        EngineKind::SplitK => splitk_w4a16_gemm_with(&a, &w, &params, &plan, &exec)?,
        EngineKind::DataParallel => dataparallel_w4a16_gemm_with(&a, &w, &params, &plan, &exec)?,
        EngineKind::Fp16 => fp16_gemm_with(&a, &dequantize_matrix(&w, &params)?, &plan, &exec)?,
    };
    save_matrix(&args.out, &c)?;
    let (m, n, k) = (a.rows(), w.cols(), w.rows());
    Ok(GemmSummary {
        engine: args.engine,
        m,
        n,
        k,
        splits: plan.splits,
        traced: trace.traffic(),
        modelled: traffic_for(args.engine, m, n, k, &plan),
        cost: cost_for(args.engine, m, n, k, &plan, &cfg),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSummary {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub splits: usize,
    pub engines: Vec<(EngineKind, TrafficReport, CostReport)>,
    pub speedup: Speedup,
}

impl fmt::Display for TrafficSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "M={} N={} K={} S={}", self.m, self.n, self.k, self.splits)?;
        for (engine, traffic, cost) in &self.engines {
            writeln!(f, "{}:", engine.name())?;
            for p in Phase::ALL {
                write_streams(f, p.name(), traffic.phase(p))?;
            }
            write_streams(f, "total", &traffic.totals())?;
            write_cost(f, cost)?;
        }
        writeln!(
            f,
            "speedup: splitk_vs_dp={:.4} w4a16_vs_fp16={:.4}",
            self.speedup.splitk_vs_dataparallel, self.speedup.w4a16_vs_fp16
        )
    }
}

/// Closed-form traffic and modelled time without running anything.
pub fn cmd_traffic(
    m: usize,
    n: usize,
    k: usize,
    plan: &SplitKPlan,
    engines: &[EngineKind],
    config: Option<&Path>,
) -> Result<TrafficSummary> {
    plan.validate()?;
    let cfg = machine_config(config)?;
    Ok(TrafficSummary {
        m,
        n,
        k,
        splits: plan.splits,
        engines: engines
            .iter()
            .map(|&e| (e, traffic_for(e, m, n, k, plan), cost_for(e, m, n, k, plan, &cfg)))
            .collect(),
        speedup: predicted_speedup(m, n, k, plan, &cfg),
    })
}

/// Runs the sweep and writes the CSV to `out`, or returns it when `out` is `None`.
pub fn cmd_sweep(spec: &ExperimentSpec, workers: usize, out: Option<&Path>) -> Result<Vec<u8>> {
    let exec = ThreadPoolExecutor::new(workers);
    let csv = sweep_csv(spec, &exec)?;
    if let Some(path) = out {
        fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    }
    Ok(csv)
}

/// Writes a seeded random FP16 matrix with entries in `[-1, 1]`.
pub fn cmd_random(rows: usize, cols: usize, seed: u64, out: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    save_matrix(out, &random_activations(&mut rng, rows, cols))
}

//! Experiment grid over weight shapes, batch sizes, split factors and
//! engines, reported as CSV.
//!
//! Every modelled number in a row comes straight from `w4a16_core::machine`;
//! when the sweep runs functionally it also executes each engine on seeded
//! random data, checks the execution trace against the closed-form traffic,
//! and records a checksum of the output.

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use w4a16_core::engine::{dataparallel_w4a16_gemm_with, fp16_gemm_with, splitk_w4a16_gemm_with, EngineKind, ExecTrace};
use w4a16_core::machine::{self, CostReport, StreamBytes, TrafficReport};
use w4a16_core::quant::{dequantize_matrix, PackedInt4Matrix, QuantParams};
use w4a16_core::{Executor, Fp16Matrix, MachineConfig, ReusePolicy, SplitKPlan};

use crate::config::load_machine_config;
use crate::error::{Error, Result};

/// `(N, K)` weight shapes of the reference benchmark. 16348 is kept as
/// published even though 16384 was probably intended.
pub const BENCHMARK_SHAPES: [(usize, usize); 6] = [
    (1536, 6144),
    (2048, 8192),
    (2048, 10240),
    (4096, 16348),
    (4608, 10240),
    (7168, 18432),
];

pub const DEFAULT_BATCHES: [usize; 5] = [1, 8, 16, 32, 64];
pub const DEFAULT_SPLITS: [usize; 2] = [4, 8];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    /// `(N, K)` pairs.
    pub shapes: Vec<(usize, usize)>,
    pub batches: Vec<usize>,
    pub splits: Vec<usize>,
    pub engines: Vec<EngineKind>,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
    /// `(m, n, k)` tile sizes.
    pub tiles: (usize, usize, usize),
    pub reuse: ReusePolicy,
    /// Run the engines and record output checksums. Off means model only.
    pub functional: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let plan = SplitKPlan::default();
        ExperimentSpec {
            shapes: BENCHMARK_SHAPES.to_vec(),
            batches: DEFAULT_BATCHES.to_vec(),
            splits: DEFAULT_SPLITS.to_vec(),
            engines: EngineKind::ALL.to_vec(),
            seed: 0,
            config_path: None,
            tiles: (plan.tile_m, plan.tile_n, plan.tile_k),
            reuse: plan.reuse,
            functional: true,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Experiment(msg.to_string()));
        if self.shapes.is_empty() || self.batches.is_empty() || self.splits.is_empty() || self.engines.is_empty() {
            return bad("shapes, batches, splits and engines must all be non-empty");
        }
        if self.shapes.iter().any(|&(n, k)| n == 0 || k == 0 || n % 8 != 0) {
            return bad("every shape needs K > 0 and N a positive multiple of 8");
        }
        if self.batches.contains(&0) {
            return bad("batch sizes must be positive");
        }
        if self.splits.contains(&0) {
            return bad("split factors must be positive");
        }
        self.plan(&MachineConfig::default(), 1).validate()?;
        Ok(())
    }

    fn plan(&self, cfg: &MachineConfig, splits: usize) -> SplitKPlan {
        let (m, n, k) = self.tiles;
        cfg.plan()
            .with_tiles(m, n, k)
            .with_splits(splits)
            .with_reuse(self.reuse)
    }

    pub fn machine_config(&self) -> Result<MachineConfig> {
        match &self.config_path {
            Some(p) => load_machine_config(p),
            None => Ok(MachineConfig::default()),
        }
    }

    pub fn row_count(&self) -> usize {
        self.shapes.len() * self.batches.len() * self.splits.len() * self.engines.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub split: usize,
    pub engine: EngineKind,
    /// Hex prefix of SHA-256 over the output codes; `None` in model-only runs.
    pub checksum: Option<String>,
    pub traffic: TrafficReport,
    pub cost: CostReport,
    pub splitk_vs_dp: f64,
    pub w4a16_vs_fp16: f64,
}

pub const CSV_HEADER: [&str; 22] = [
    "n",
    "k",
    "m",
    "split",
    "engine",
    "checksum",
    "weight_packed_read",
    "dequant_write",
    "dequant_read",
    "weight_fp16_read",
    "a_read",
    "split_write",
    "split_read",
    "c_write",
    "total_bytes",
    "t_dequant_s",
    "t_gemm_s",
    "t_reduce_s",
    "t_total_s",
    "bound_gemm",
    "splitk_vs_dp",
    "w4a16_vs_fp16",
];

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        let t: StreamBytes = self.traffic.totals();
        let sci = |x: f64| format!("{x:.6e}");
        vec![
            self.n.to_string(),
            self.k.to_string(),
            self.m.to_string(),
            self.split.to_string(),
            self.engine.name().to_string(),
            self.checksum.clone().unwrap_or_default(),
            t.weight_packed_read.to_string(),
            t.dequant_write.to_string(),
            t.dequant_read.to_string(),
            t.weight_fp16_read.to_string(),
            t.a_read.to_string(),
            t.split_write.to_string(),
            t.split_read.to_string(),
            t.c_write.to_string(),
            self.traffic.total_bytes().to_string(),
            sci(self.cost.phases[0].seconds),
            sci(self.cost.phases[1].seconds),
            sci(self.cost.phases[2].seconds),
            sci(self.cost.total),
            self.cost.phases[1].bound.name().to_string(),
            format!("{:.6}", self.splitk_vs_dp),
            format!("{:.6}", self.w4a16_vs_fp16),
        ]
    }
}

/// Hex of the first 8 bytes of SHA-256 over the little-endian codes.
pub fn checksum(c: &Fp16Matrix) -> String {
    let mut h = Sha256::new();
    for v in c.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn traffic_for(engine: EngineKind, m: usize, n: usize, k: usize, plan: &SplitKPlan) -> TrafficReport {
    match engine {
        EngineKind::SplitK => machine::traffic_w4a16_splitk(m, n, k, plan),
        EngineKind::DataParallel => machine::traffic_w4a16_dataparallel(m, n, k, plan),
        EngineKind::Fp16 => machine::traffic_fp16(m, n, k, plan),
    }
}

pub fn cost_for(
    engine: EngineKind,
    m: usize,
    n: usize,
    k: usize,
    plan: &SplitKPlan,
    cfg: &MachineConfig,
) -> CostReport {
    match engine {
        EngineKind::SplitK => machine::cost_w4a16_splitk(m, n, k, plan, cfg),
        EngineKind::DataParallel => machine::cost_w4a16_dataparallel(m, n, k, plan, cfg),
        EngineKind::Fp16 => machine::cost_fp16(m, n, k, plan, cfg),
    }
}

/// Seeded random weights for one shape: uniform codes, per-channel scales
/// in `[0.01, 0.06)`, symmetric zero-point.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Result<(PackedInt4Matrix, QuantParams)> {
    let codes: Vec<u8> = (0..k * n).map(|_| rng.random_range(0..16u8)).collect();
    let scales = (0..n).map(|_| 0.01 + 0.05 * rng.random::<f32>()).collect();
    Ok((
        PackedInt4Matrix::from_codes(k, n, &codes)?,
        QuantParams::symmetric_per_channel(scales)?,
    ))
}

/// Seeded random activations, uniform in `[-1, 1]` then rounded to FP16.
pub fn random_activations(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Fp16Matrix {
    let values: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
    Fp16Matrix::from_f32(m, k, &values).expect("shape matches")
}

fn check_trace(trace: &ExecTrace, expected: &TrafficReport, what: &str) -> Result<()> {
    if trace.traffic() != *expected {
        return Err(Error::Experiment(format!(
            "{what}: execution trace traffic differs from the closed-form model"
        )));
    }
    Ok(())
}

struct Functional<'a> {
    w: &'a PackedInt4Matrix,
    params: &'a QuantParams,
    dequantized: &'a Fp16Matrix,
    a: &'a Fp16Matrix,
}

impl Functional<'_> {
    fn run<E: Executor>(&self, engine: EngineKind, plan: &SplitKPlan, exec: &E) -> Result<String> {
        let (c, trace) = match engine {
            EngineKind::SplitK => splitk_w4a16_gemm_with(self.a, self.w, self.params, plan, exec)?,
            EngineKind::DataParallel => dataparallel_w4a16_gemm_with(self.a, self.w, self.params, plan, exec)?,
            EngineKind::Fp16 => fp16_gemm_with(self.a, self.dequantized, plan, exec)?,
        };
        let expected = traffic_for(engine, self.a.rows(), self.w.cols(), self.w.rows(), plan);
        check_trace(&trace, &expected, engine.name())?;
        Ok(checksum(&c))
    }
}

/// Runs the grid. Rows come out ordered by shape, batch, split, then
/// engine in the order given by the spec.
pub fn run_sweep<E: Executor>(spec: &ExperimentSpec, exec: &E) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cfg = spec.machine_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.row_count());

    for &(n, k) in &spec.shapes {
        let weights = if spec.functional {
            let (w, p) = random_weights(&mut rng, n, k)?;
            let d = dequantize_matrix(&w, &p)?;
            Some((w, p, d))
        } else {
            None
        };

        for &m in &spec.batches {
            let a = spec.functional.then(|| random_activations(&mut rng, m, k));
            let func = match (&weights, &a) {
                (Some((w, params, dequantized)), Some(a)) => Some(Functional {
                    w,
                    params,
                    dequantized,
                    a,
                }),
                _ => None,
            };
            // Split-independent engines are run once per (shape, batch).
            let mut fixed: Vec<(EngineKind, String)> = Vec::new();

            for &s in &spec.splits {
                let plan = spec.plan(&cfg, s);
                let speed = machine::predicted_speedup(m, n, k, &plan, &cfg);
                for &engine in &spec.engines {
                    let checksum = match &func {
                        None => None,
                        Some(f) if engine == EngineKind::SplitK => Some(f.run(engine, &plan, exec)?),
                        Some(f) => match fixed.iter().find(|(e, _)| *e == engine) {
                            Some((_, c)) => Some(c.clone()),
                            None => {
                                let c = f.run(engine, &plan, exec)?;
                                fixed.push((engine, c.clone()));
                                Some(c)
                            }
                        },
                    };
                    rows.push(SweepRow {
                        n,
                        k,
                        m,
                        split: s,
                        engine,
                        checksum,
                        traffic: traffic_for(engine, m, n, k, &plan),
                        cost: cost_for(engine, m, n, k, &plan, &cfg),
                        splitk_vs_dp: speed.splitk_vs_dataparallel,
                        w4a16_vs_fp16: speed.w4a16_vs_fp16,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(CSV_HEADER)?;
    for row in rows {
        wr.write_record(row.record())?;
    }
    wr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn sweep_csv<E: Executor>(spec: &ExperimentSpec, exec: &E) -> Result<Vec<u8>> {
    let rows = run_sweep(spec, exec)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    Ok(buf)
}

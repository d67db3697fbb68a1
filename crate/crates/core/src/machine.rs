//! Analytic model of the decoupled accelerator.
//!
//! Cube and vector cores exchange data only through global memory, so the
//! W4A16 kernels pay for a dequantized FP16 copy of the weights twice: once
//! when the vector cores write it and once when the cube cores read it back.
//! [`traffic_w4a16_splitk`] and friends count those bytes exactly;
//! [`estimate_time`] turns bytes and work into a per-phase time.
//!
//! Time model, per barrier-separated phase:
//!
//! ```text
//! eff      = units / ceil(units / cores)        (wave-quantized parallelism)
//! memory   = bytes / (gm_bandwidth * eff / cores)
//! compute  = work  / (eff * rate_per_core * clock)
//! time     = max(memory, compute) / overlap_efficiency
//! ```
//!
//! `cores` is the number of cube or vector cores serving the phase. Global
//! bandwidth is shared evenly, so a phase that keeps only a few cores busy
//! also sees only their share of it. The `max` models double buffering:
//! transfers of the next tile overlap compute on the current one.
//!
//! The default constants are plausible, not measured. Only ratios,
//! orderings and monotonicity of the model are meaningful.

use crate::engine::{Phase, SplitKPlan, Stream, TileGrid, UnitKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MachineConfig {
    pub num_ai_cores: usize,
    /// Fixed at 1 on the modelled part.
    pub cube_per_core: usize,
    /// Fixed at 2 on the modelled part.
    pub vec_per_core: usize,
    /// Aggregate global-memory bandwidth, bytes/s.
    pub gm_bandwidth: f64,
    /// FP16 MACs per cycle of one AI core's cube unit (16 x 16 x 16).
    pub cube_macs_per_cycle_per_core: f64,
    /// Elements per cycle across the vector cores of one AI core.
    pub vec_elems_per_cycle_per_core: f64,
    /// Hz.
    pub clock: f64,
    /// Fraction of ideal double-buffer overlap achieved, in (0, 1].
    pub overlap_efficiency: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            num_ai_cores: 24,
            cube_per_core: 1,
            vec_per_core: 2,
            gm_bandwidth: 1.0e12,
            cube_macs_per_cycle_per_core: 4096.0,
            vec_elems_per_cycle_per_core: 256.0,
            clock: 1.5e9,
            overlap_efficiency: 1.0,
        }
    }
}

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_ai_cores == 0 || self.cube_per_core == 0 || self.vec_per_core == 0 {
            return Err(Error::InvalidConfig("core counts must be positive"));
        }
        let rates = [
            self.gm_bandwidth,
            self.cube_macs_per_cycle_per_core,
            self.vec_elems_per_cycle_per_core,
            self.clock,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidConfig(
                "bandwidth, throughputs and clock must be finite and positive",
            ));
        }
        if !(self.overlap_efficiency > 0.0 && self.overlap_efficiency <= 1.0) {
            return Err(Error::InvalidConfig("overlap_efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    /// A plan whose core counts match this machine.
    pub fn plan(&self) -> SplitKPlan {
        SplitKPlan {
            num_ai_cores: self.num_ai_cores,
            vec_per_core: self.vec_per_core,
            ..SplitKPlan::default()
        }
    }

    fn cores(&self, unit: UnitKind) -> usize {
        match unit {
            UnitKind::Vector => self.num_ai_cores * self.vec_per_core,
            _ => self.num_ai_cores * self.cube_per_core,
        }
    }

    /// Work per second of one cube or vector core.
    fn rate(&self, unit: UnitKind) -> f64 {
        match unit {
            UnitKind::Vector => self.vec_elems_per_cycle_per_core / self.vec_per_core as f64 * self.clock,
            _ => self.cube_macs_per_cycle_per_core / self.cube_per_core as f64 * self.clock,
        }
    }
}

/// Global-memory bytes of one phase, by stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamBytes {
    pub weight_packed_read: u64,
    pub dequant_write: u64,
    pub dequant_read: u64,
    /// FP16 weights read by the native FP16 kernel.
    pub weight_fp16_read: u64,
    pub a_read: u64,
    pub split_write: u64,
    pub split_read: u64,
    pub c_write: u64,
}

impl StreamBytes {
    pub fn total(&self) -> u64 {
        self.weight_packed_read
            + self.dequant_write
            + self.dequant_read
            + self.weight_fp16_read
            + self.a_read
            + self.split_write
            + self.split_read
            + self.c_write
    }

    /// Bytes spent moving weights, in any representation.
    pub fn weight_path(&self) -> u64 {
        self.weight_packed_read + self.dequant_write + self.dequant_read + self.weight_fp16_read
    }

    fn slot(&mut self, stream: Stream) -> &mut u64 {
        match stream {
            Stream::WeightPackedRead => &mut self.weight_packed_read,
            Stream::DequantWrite => &mut self.dequant_write,
            Stream::DequantRead => &mut self.dequant_read,
            Stream::WeightFp16Read => &mut self.weight_fp16_read,
            Stream::ActivationRead => &mut self.a_read,
            Stream::SplitWrite => &mut self.split_write,
            Stream::SplitRead => &mut self.split_read,
            Stream::OutputWrite => &mut self.c_write,
        }
    }

    fn merge(&self, other: &StreamBytes) -> StreamBytes {
        StreamBytes {
            weight_packed_read: self.weight_packed_read + other.weight_packed_read,
            dequant_write: self.dequant_write + other.dequant_write,
            dequant_read: self.dequant_read + other.dequant_read,
            weight_fp16_read: self.weight_fp16_read + other.weight_fp16_read,
            a_read: self.a_read + other.a_read,
            split_write: self.split_write + other.split_write,
            split_read: self.split_read + other.split_read,
            c_write: self.c_write + other.c_write,
        }
    }
}

/// Global-memory traffic of one GEMM, per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrafficReport {
    pub phases: [StreamBytes; 3],
}

impl TrafficReport {
    pub fn phase(&self, phase: Phase) -> &StreamBytes {
        &self.phases[phase.index()]
    }

    pub fn phase_mut(&mut self, phase: Phase) -> &mut StreamBytes {
        &mut self.phases[phase.index()]
    }

    pub fn add(&mut self, phase: Phase, stream: Stream, bytes: u64) {
        *self.phase_mut(phase).slot(stream) += bytes;
    }

    pub fn totals(&self) -> StreamBytes {
        self.phases.iter().fold(StreamBytes::default(), |acc, p| acc.merge(p))
    }

    pub fn total_bytes(&self) -> u64 {
        self.phases.iter().map(StreamBytes::total).sum()
    }

    pub fn weight_path_bytes(&self) -> u64 {
        self.totals().weight_path()
    }
}

/// Compute work and available parallelism of one phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseWork {
    pub unit: UnitKind,
    /// MACs on cube phases, elements on vector phases.
    pub work: u64,
    /// Independent work units the phase is dealt out in.
    pub units: u64,
}

impl PhaseWork {
    const IDLE: PhaseWork = PhaseWork {
        unit: UnitKind::Vector,
        work: 0,
        units: 0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workload {
    pub phases: [PhaseWork; 3],
}

impl Workload {
    pub fn phase(&self, phase: Phase) -> &PhaseWork {
        &self.phases[phase.index()]
    }

    pub fn work(&self) -> [u64; 3] {
        [self.phases[0].work, self.phases[1].work, self.phases[2].work]
    }
}

fn b(x: usize) -> u64 {
    x as u64
}

/// Reuse multipliers `(a, b)`: how many times each A and B element is read.
fn reuse_factors(grid: &TileGrid, plan: &SplitKPlan) -> (u64, u64) {
    match plan.reuse {
        crate::engine::ReusePolicy::Unit => (b(grid.n_tiles()), b(grid.m_tiles())),
        crate::engine::ReusePolicy::FullRowResident => (1, 1),
    }
}

fn dequant_phase_bytes(n: usize, k: usize) -> StreamBytes {
    StreamBytes {
        weight_packed_read: b(k * n / 2),
        dequant_write: b(2 * k * n),
        ..StreamBytes::default()
    }
}

/// Closed-form traffic of the Split-K W4A16 engine for `C[m x n] = A[m x k] W[k x n]`.
pub fn traffic_w4a16_splitk(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> TrafficReport {
    let g = plan.grid(m, n, k);
    let (a_reuse, b_reuse) = reuse_factors(&g, plan);
    let s = b(g.splits);
    let mp = b(g.m_padded);
    TrafficReport {
        phases: [
            dequant_phase_bytes(n, k),
            StreamBytes {
                dequant_read: 2 * b(k) * b(n) * b_reuse,
                a_read: 2 * mp * b(k) * a_reuse,
                split_write: 4 * s * mp * b(n),
                ..StreamBytes::default()
            },
            StreamBytes {
                split_read: 4 * s * mp * b(n),
                c_write: 2 * b(m) * b(n),
                ..StreamBytes::default()
            },
        ],
    }
}

/// Closed-form traffic of the data-parallel W4A16 engine.
pub fn traffic_w4a16_dataparallel(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> TrafficReport {
    let g = plan.grid(m, n, k);
    let (a_reuse, b_reuse) = reuse_factors(&g, plan);
    TrafficReport {
        phases: [
            dequant_phase_bytes(n, k),
            StreamBytes {
                dequant_read: 2 * b(k) * b(n) * b_reuse,
                a_read: 2 * b(g.m_padded) * b(k) * a_reuse,
                c_write: 2 * b(m) * b(n),
                ..StreamBytes::default()
            },
            StreamBytes::default(),
        ],
    }
}

/// Closed-form traffic of the native FP16 engine.
pub fn traffic_fp16(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> TrafficReport {
    let g = plan.grid(m, n, k);
    let (a_reuse, b_reuse) = reuse_factors(&g, plan);
    TrafficReport {
        phases: [
            StreamBytes::default(),
            StreamBytes {
                weight_fp16_read: 2 * b(k) * b(n) * b_reuse,
                a_read: 2 * b(g.m_padded) * b(k) * a_reuse,
                c_write: 2 * b(m) * b(n),
                ..StreamBytes::default()
            },
            StreamBytes::default(),
        ],
    }
}

fn dequant_work(g: &TileGrid) -> PhaseWork {
    PhaseWork {
        unit: UnitKind::Vector,
        work: b(g.k) * b(g.n),
        units: b(g.n_tiles()),
    }
}

fn gemm_work(g: &TileGrid, units: usize) -> PhaseWork {
    PhaseWork {
        unit: UnitKind::Cube,
        work: b(g.m_padded) * b(g.n) * b(g.k),
        units: b(units),
    }
}

/// Phase work of the Split-K engine. Splits left empty (more splits than
/// K-tiles) do not count as parallel units.
pub fn workload_w4a16_splitk(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> Workload {
    let g = plan.grid(m, n, k);
    let busy_splits = (0..g.splits).filter(|&i| !g.split_k_tiles(i).is_empty()).count();
    let elems = g.m_padded * g.n;
    let chunk = elems.div_ceil(plan.num_vector_cores()).max(1);
    Workload {
        phases: [
            dequant_work(&g),
            gemm_work(&g, busy_splits * g.m_tiles() * g.n_tiles()),
            PhaseWork {
                unit: UnitKind::Vector,
                work: b(g.splits) * b(elems),
                units: b(elems.div_ceil(chunk)),
            },
        ],
    }
}

pub fn workload_w4a16_dataparallel(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> Workload {
    let g = plan.grid(m, n, k);
    Workload {
        phases: [
            dequant_work(&g),
            gemm_work(&g, g.m_tiles() * g.n_tiles()),
            PhaseWork::IDLE,
        ],
    }
}

pub fn workload_fp16(m: usize, n: usize, k: usize, plan: &SplitKPlan) -> Workload {
    let g = plan.grid(m, n, k);
    Workload {
        phases: [
            PhaseWork::IDLE,
            gemm_work(&g, g.m_tiles() * g.n_tiles()),
            PhaseWork::IDLE,
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    Memory,
    Compute,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Memory => "memory",
            BoundKind::Compute => "compute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseCost {
    pub seconds: f64,
    pub memory_seconds: f64,
    pub compute_seconds: f64,
    pub bound: BoundKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub phases: [PhaseCost; 3],
    /// Sum of the phase times; phases are barrier-separated.
    pub total: f64,
}

impl CostReport {
    pub fn phase(&self, phase: Phase) -> &PhaseCost {
        &self.phases[phase.index()]
    }
}

fn phase_cost(bytes: u64, work: &PhaseWork, cfg: &MachineConfig) -> PhaseCost {
    if bytes == 0 && work.work == 0 {
        return PhaseCost {
            seconds: 0.0,
            memory_seconds: 0.0,
            compute_seconds: 0.0,
            bound: BoundKind::Memory,
        };
    }
    let cores = cfg.cores(work.unit) as u64;
    let units = work.units.max(1);
    let eff = units as f64 / units.div_ceil(cores) as f64;
    let bandwidth = cfg.gm_bandwidth * eff / cores as f64;
    let memory_seconds = bytes as f64 / bandwidth;
    let compute_seconds = work.work as f64 / (eff * cfg.rate(work.unit));
    // Ties count as memory-bound.
    let (raw, bound) = if memory_seconds >= compute_seconds {
        (memory_seconds, BoundKind::Memory)
    } else {
        (compute_seconds, BoundKind::Compute)
    };
    PhaseCost {
        seconds: raw / cfg.overlap_efficiency,
        memory_seconds,
        compute_seconds,
        bound,
    }
}

/// Per-phase time: the larger of the memory and compute terms, divided by
/// the overlap efficiency; phases add up.
pub fn estimate_time(traffic: &TrafficReport, workload: &Workload, cfg: &MachineConfig) -> CostReport {
    let phases = [Phase::Dequant, Phase::Gemm, Phase::Reduce]
        .map(|p| phase_cost(traffic.phase(p).total(), workload.phase(p), cfg));
    CostReport {
        phases,
        total: phases.iter().map(|p| p.seconds).sum(),
    }
}

pub fn cost_w4a16_splitk(m: usize, n: usize, k: usize, plan: &SplitKPlan, cfg: &MachineConfig) -> CostReport {
    estimate_time(
        &traffic_w4a16_splitk(m, n, k, plan),
        &workload_w4a16_splitk(m, n, k, plan),
        cfg,
    )
}

pub fn cost_w4a16_dataparallel(m: usize, n: usize, k: usize, plan: &SplitKPlan, cfg: &MachineConfig) -> CostReport {
    estimate_time(
        &traffic_w4a16_dataparallel(m, n, k, plan),
        &workload_w4a16_dataparallel(m, n, k, plan),
        cfg,
    )
}

pub fn cost_fp16(m: usize, n: usize, k: usize, plan: &SplitKPlan, cfg: &MachineConfig) -> CostReport {
    estimate_time(&traffic_fp16(m, n, k, plan), &workload_fp16(m, n, k, plan), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Speedup {
    /// Data-parallel W4A16 time over Split-K W4A16 time.
    pub splitk_vs_dataparallel: f64,
    /// Native FP16 time over Split-K W4A16 time.
    pub w4a16_vs_fp16: f64,
}

/// Modelled speedups of the Split-K kernel at `plan.splits`.
pub fn predicted_speedup(m: usize, n: usize, k: usize, plan: &SplitKPlan, cfg: &MachineConfig) -> Speedup {
    let splitk = cost_w4a16_splitk(m, n, k, plan, cfg).total;
    Speedup {
        splitk_vs_dataparallel: cost_w4a16_dataparallel(m, n, k, plan, cfg).total / splitk,
        w4a16_vs_fp16: cost_fp16(m, n, k, plan, cfg).total / splitk,
    }
}

/// Split factor from `candidates` with the lowest modelled Split-K time;
/// the first candidate wins ties.
pub fn best_split(
    m: usize,
    n: usize,
    k: usize,
    plan: &SplitKPlan,
    cfg: &MachineConfig,
    candidates: impl IntoIterator<Item = usize>,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in candidates {
        let t = cost_w4a16_splitk(m, n, k, &plan.with_splits(s), cfg).total;
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((s, t));
        }
    }
    best.map(|(s, _)| s)
}

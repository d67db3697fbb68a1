//! GEMM engines for the decoupled accelerator.
//!
//! Three engines share one arithmetic contract: every output element is a
//! binary32 sum of exact binary16 products taken in ascending `k`, rounded
//! once to binary16. They differ only in how work is decomposed:
//!
//! * Split-K W4A16: dequantize all weights to a global workspace, compute
//!   `S` partial products over disjoint K ranges into FP32 split buffers,
//!   then reduce the buffers in ascending split order and cast.
//! * Data-parallel W4A16: same dequant phase, then each core owns whole
//!   output tiles and accumulates the full K range itself.
//! * FP16: the data-parallel GEMM phase on an FP16 weight matrix.
//!
//! Each phase is a barrier. Work inside a phase is split over logical cores
//! with the strided assignment `unit = core, core + cores, ...`, and every
//! logical core writes a disjoint region, so results are identical for any
//! [`Executor`].

mod exec;
mod plan;
mod trace;

use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

pub use exec::{Executor, Sequential};
pub use plan::{ReusePolicy, SplitKPlan, TileGrid, CUBE_GRANULE};
pub use trace::{Action, Event, ExecTrace, Phase, Stream, TileId, UnitKind};

use crate::error::{Error, Result};
use crate::matrix::{Fp16Matrix, Fp32Matrix};
use crate::numerics::{f16_from_f32, F16};
use crate::quant::{dequantize_tile, PackedInt4Matrix, QuantParams};

/// Which engine to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineKind {
    SplitK,
    DataParallel,
    Fp16,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::SplitK, EngineKind::DataParallel, EngineKind::Fp16];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::SplitK => "splitk",
            EngineKind::DataParallel => "dataparallel",
            EngineKind::Fp16 => "fp16",
        }
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splitk" => Ok(EngineKind::SplitK),
            "dataparallel" | "dp" => Ok(EngineKind::DataParallel),
            "fp16" => Ok(EngineKind::Fp16),
            _ => Err(Error::InvalidPlan(
                "unknown engine (expected splitk, dataparallel or fp16)",
            )),
        }
    }
}

/// Global-memory state of a Split-K run.
#[derive(Clone, Debug, PartialEq)]
pub struct Workspace {
    /// `K x N` dequantized weights written by the dequant phase.
    pub dequant_buffer: Fp16Matrix,
    /// `S` partial results, each `M' x N` with `M'` the padded batch.
    pub split_buffers: Vec<Fp32Matrix>,
}

/// Pads `a` with zero rows up to a whole number of `tile_m` row tiles.
pub fn pad_batch(a: &Fp16Matrix, tile_m: usize) -> Fp16Matrix {
    assert!(tile_m > 0, "tile_m must be positive");
    let padded = a.rows().div_ceil(tile_m) * tile_m;
    if padded == a.rows() {
        return a.clone();
    }
    let mut data = a.data().to_vec();
    data.resize(padded * a.cols(), F16::ZERO);
    Fp16Matrix::from_vec(padded, a.cols(), data).expect("padded length matches")
}

/// Sums split buffers elementwise, left to right in ascending split index,
/// then rounds to binary16.
pub fn reduce_split_buffers(buffers: &[Fp32Matrix]) -> Result<Fp16Matrix> {
    let first = buffers
        .first()
        .ok_or(Error::Shape("at least one split buffer is required"))?;
    let (rows, cols) = (first.rows(), first.cols());
    for b in buffers {
        if b.rows() != rows {
            return Err(Error::ShapeMismatch {
                what: "split buffer rows",
                expected: rows,
                got: b.rows(),
            });
        }
        if b.cols() != cols {
            return Err(Error::ShapeMismatch {
                what: "split buffer cols",
                expected: cols,
                got: b.cols(),
            });
        }
    }
    let data = (0..rows * cols).map(|e| reduce_element(buffers, e)).collect();
    Fp16Matrix::from_vec(rows, cols, data)
}

#[inline]
fn reduce_element(buffers: &[Fp32Matrix], e: usize) -> F16 {
    let mut sum = buffers[0].data()[e];
    for b in &buffers[1..] {
        sum += b.data()[e];
    }
    f16_from_f32(sum)
}

fn check_activation(a: &Fp16Matrix, k: usize) -> Result<()> {
    if a.cols() != k {
        return Err(Error::ShapeMismatch {
            what: "activation columns vs weight rows",
            expected: k,
            got: a.cols(),
        });
    }
    if a.rows() == 0 || k == 0 {
        return Err(Error::Shape("GEMM operands must be non-empty"));
    }
    Ok(())
}

fn check_w4a16(a: &Fp16Matrix, w: &PackedInt4Matrix, params: &QuantParams, plan: &SplitKPlan) -> Result<()> {
    plan.validate()?;
    check_activation(a, w.rows())?;
    if w.cols() == 0 {
        return Err(Error::Shape("GEMM operands must be non-empty"));
    }
    params.check_cols(w.cols())
}

fn transfer(phase: Phase, core: usize, tile: TileId, stream: Stream, bytes: usize) -> Event {
    Event {
        phase,
        unit: UnitKind::Mte,
        core: core as u32,
        tile,
        action: Action::Transfer {
            stream,
            bytes: bytes as u64,
        },
    }
}

fn compute(phase: Phase, unit: UnitKind, core: usize, tile: TileId, work: usize) -> Event {
    Event {
        phase,
        unit,
        core: core as u32,
        tile,
        action: Action::Compute { work: work as u64 },
    }
}

/// Dequant phase: vector core `v` takes weight column strips
/// `v, v + AIV, ...` and walks every K-tile of each strip, writing the FP16
/// result into the workspace.
pub fn dequant_phase<E: Executor>(
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
    exec: &E,
) -> Result<(Fp16Matrix, Vec<Event>)> {
    plan.validate()?;
    params.check_cols(w.cols())?;
    let grid = plan.grid(0, w.cols(), w.rows());
    let aiv = plan.num_vector_cores();

    let per_core = exec.map(aiv, |v| -> Result<_> {
        let mut tiles = Vec::new();
        let mut events = Vec::new();
        for r in (v..grid.n_tiles()).step_by(aiv) {
            for j in 0..grid.k_tiles() {
                let (rows, cols) = (grid.k_range(j), grid.n_range(r));
                let elems = rows.len() * cols.len();
                let id = TileId::Weight {
                    k_tile: j as u32,
                    n_tile: r as u32,
                };
                events.push(transfer(Phase::Dequant, v, id, Stream::WeightPackedRead, elems / 2));
                let tile = dequantize_tile(w, params, rows.clone(), cols.clone())?;
                events.push(compute(Phase::Dequant, UnitKind::Vector, v, id, elems));
                events.push(transfer(Phase::Dequant, v, id, Stream::DequantWrite, 2 * elems));
                tiles.push((rows.start, cols.start, tile));
            }
        }
        Ok((tiles, events))
    });

    let mut workspace = Fp16Matrix::zeros(w.rows(), w.cols());
    let mut events = Vec::new();
    for result in per_core {
        let (tiles, ev) = result?;
        for (r0, c0, tile) in tiles {
            for r in 0..tile.rows() {
                for c in 0..tile.cols() {
                    workspace.set(r0 + r, c0 + c, tile.get(r, c));
                }
            }
        }
        events.extend(ev);
    }
    Ok((workspace, events))
}

/// Operands of the GEMM phase, widened once to binary32 (exact).
struct GemmOperands<'a> {
    grid: TileGrid,
    a: Vec<f32>,
    b: &'a [f32],
    b_stream: Stream,
    reuse: ReusePolicy,
}

impl GemmOperands<'_> {
    /// Accumulates `acc += A[l-tile, j-tile] * B[j-tile, r-tile]` with `k`
    /// outermost, then rows, then columns, and records the loads.
    #[allow(clippy::too_many_arguments)]
    fn mma(&self, acc: &mut [f32], core: usize, split: usize, l: usize, j: usize, r: usize, events: &mut Vec<Event>) {
        let g = &self.grid;
        let (ks, cols) = (g.k_range(j), g.n_range(r));
        let width = cols.len();
        let id = TileId::Mma {
            split: split as u32,
            m_tile: l as u32,
            k_tile: j as u32,
            n_tile: r as u32,
        };
        let (load_a, load_b) = match self.reuse {
            ReusePolicy::Unit => (true, true),
            ReusePolicy::FullRowResident => (r == 0, l == 0),
        };
        if load_a {
            events.push(transfer(
                Phase::Gemm,
                core,
                id,
                Stream::ActivationRead,
                2 * g.tile_m * ks.len(),
            ));
        }
        if load_b {
            events.push(transfer(Phase::Gemm, core, id, self.b_stream, 2 * ks.len() * width));
        }
        events.push(compute(
            Phase::Gemm,
            UnitKind::Cube,
            core,
            id,
            g.tile_m * ks.len() * width,
        ));

        let row0 = l * g.tile_m;
        for kk in ks {
            let b_row = &self.b[kk * g.n + cols.start..kk * g.n + cols.end];
            for i in 0..g.tile_m {
                let a = self.a[(row0 + i) * g.k + kk];
                let acc_row = &mut acc[i * width..(i + 1) * width];
                for (c, &b) in acc_row.iter_mut().zip(b_row) {
                    *c += a * b;
                }
            }
        }
    }
}

fn gemm_operands<'a>(a: &Fp16Matrix, b: &'a [f32], n: usize, plan: &SplitKPlan, b_stream: Stream) -> GemmOperands<'a> {
    let grid = plan.grid(a.rows(), n, a.cols());
    GemmOperands {
        grid,
        a: pad_batch(a, plan.tile_m).to_f32_vec(),
        b,
        b_stream,
        reuse: plan.reuse,
    }
}

/// Split-K GEMM phase. Work units are `(split, m_tile, n_tile)` triples,
/// flattened split-major and dealt to AI cores round-robin. Each unit sums
/// its split's K-tiles in ascending order and writes one FP32 tile.
fn splitk_gemm_phase<E: Executor>(
    ops: &GemmOperands<'_>,
    plan: &SplitKPlan,
    exec: &E,
) -> (Vec<Fp32Matrix>, Vec<Event>) {
    let g = ops.grid;
    let (lt, nt) = (g.m_tiles(), g.n_tiles());
    let units = g.splits * lt * nt;
    let aic = plan.num_ai_cores;

    let per_core = exec.map(aic, |c| {
        let mut tiles = Vec::new();
        let mut events = Vec::new();
        for u in (c..units).step_by(aic) {
            let (i, rest) = (u / (lt * nt), u % (lt * nt));
            let (l, r) = (rest / nt, rest % nt);
            let width = g.n_range(r).len();
            let mut acc = vec![0.0f32; g.tile_m * width];
            for j in g.split_k_tiles(i) {
                ops.mma(&mut acc, c, i, l, j, r, &mut events);
            }
            let id = TileId::Output {
                split: i as u32,
                m_tile: l as u32,
                n_tile: r as u32,
            };
            events.push(transfer(Phase::Gemm, c, id, Stream::SplitWrite, 4 * acc.len()));
            tiles.push((i, l, r, acc));
        }
        (tiles, events)
    });

    let mut buffers = vec![Fp32Matrix::zeros(g.m_padded, g.n); g.splits];
    let mut events = Vec::new();
    for (tiles, ev) in per_core {
        for (i, l, r, acc) in tiles {
            let cols = g.n_range(r);
            let width = cols.len();
            let buf = buffers[i].data_mut();
            for row in 0..g.tile_m {
                let dst = (l * g.tile_m + row) * g.n + cols.start;
                buf[dst..dst + width].copy_from_slice(&acc[row * width..(row + 1) * width]);
            }
        }
        events.extend(ev);
    }
    (buffers, events)
}

/// Reduce phase: the `M' x N` elements are cut into equal contiguous runs,
/// one per vector core. Padded rows are reduced but not written out.
fn reduce_phase<E: Executor>(
    buffers: &[Fp32Matrix],
    m: usize,
    plan: &SplitKPlan,
    exec: &E,
) -> (Fp16Matrix, Vec<Event>) {
    let (rows, cols) = (buffers[0].rows(), buffers[0].cols());
    let total = rows * cols;
    let real = m * cols;
    let aiv = plan.num_vector_cores();
    let chunk = total.div_ceil(aiv).max(1);
    let splits = buffers.len();

    let per_core = exec.map(aiv, |v| {
        let start = (v * chunk).min(total);
        let end = ((v + 1) * chunk).min(total);
        let mut events = Vec::new();
        if start == end {
            return (start, Vec::new(), events);
        }
        let id = TileId::Elements {
            start: start as u64,
            len: (end - start) as u64,
        };
        events.push(transfer(
            Phase::Reduce,
            v,
            id,
            Stream::SplitRead,
            4 * splits * (end - start),
        ));
        let out: Vec<F16> = (start..end).map(|e| reduce_element(buffers, e)).collect();
        events.push(compute(Phase::Reduce, UnitKind::Vector, v, id, splits * (end - start)));
        let written = end.min(real).saturating_sub(start);
        if written > 0 {
            events.push(transfer(Phase::Reduce, v, id, Stream::OutputWrite, 2 * written));
        }
        (start, out, events)
    });

    let mut data = vec![F16::ZERO; real];
    let mut events = Vec::new();
    for (start, out, ev) in per_core {
        for (e, h) in (start..).zip(out) {
            if e < real {
                data[e] = h;
            }
        }
        events.extend(ev);
    }
    (
        Fp16Matrix::from_vec(m, cols, data).expect("reduce output shape"),
        events,
    )
}

/// Split-K W4A16 GEMM returning the global-memory workspace as well.
pub fn splitk_w4a16_run<E: Executor>(
    a: &Fp16Matrix,
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
    exec: &E,
) -> Result<(Fp16Matrix, ExecTrace, Workspace)> {
    check_w4a16(a, w, params, plan)?;
    let mut trace = ExecTrace::new();

    let (dequant_buffer, ev) = dequant_phase(w, params, plan, exec)?;
    trace.extend(ev);

    let b = dequant_buffer.to_f32_vec();
    let ops = gemm_operands(a, &b, w.cols(), plan, Stream::DequantRead);
    let (split_buffers, ev) = splitk_gemm_phase(&ops, plan, exec);
    trace.extend(ev);

    let (c, ev) = reduce_phase(&split_buffers, a.rows(), plan, exec);
    trace.extend(ev);

    Ok((
        c,
        trace,
        Workspace {
            dequant_buffer,
            split_buffers,
        },
    ))
}

/// Split-K W4A16 GEMM: `C = A * (s (W - z))` in three barrier-separated
/// phases.
pub fn splitk_w4a16_gemm_with<E: Executor>(
    a: &Fp16Matrix,
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
    exec: &E,
) -> Result<(Fp16Matrix, ExecTrace)> {
    splitk_w4a16_run(a, w, params, plan, exec).map(|(c, t, _)| (c, t))
}

pub fn splitk_w4a16_gemm(
    a: &Fp16Matrix,
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
) -> Result<(Fp16Matrix, ExecTrace)> {
    splitk_w4a16_gemm_with(a, w, params, plan, &Sequential)
}

/// Output-tile GEMM phase shared by the data-parallel and FP16 engines.
/// Tile `(l, r)` is unit `l * n_tiles + r`; each unit runs the full K range
/// and casts straight to FP16.
fn output_tile_gemm_phase<E: Executor>(
    ops: &GemmOperands<'_>,
    plan: &SplitKPlan,
    exec: &E,
) -> (Fp16Matrix, Vec<Event>) {
    let g = ops.grid;
    let (lt, nt, kt) = (g.m_tiles(), g.n_tiles(), g.k_tiles());
    let units = lt * nt;
    let aic = plan.num_ai_cores;

    let per_core = exec.map(aic, |c| {
        let mut tiles = Vec::new();
        let mut events = Vec::new();
        for u in (c..units).step_by(aic) {
            let (l, r) = (u / nt, u % nt);
            let width = g.n_range(r).len();
            let mut acc = vec![0.0f32; g.tile_m * width];
            for j in 0..kt {
                ops.mma(&mut acc, c, 0, l, j, r, &mut events);
            }
            let rows = g.real_rows(l);
            let id = TileId::Output {
                split: 0,
                m_tile: l as u32,
                n_tile: r as u32,
            };
            events.push(transfer(Phase::Gemm, c, id, Stream::OutputWrite, 2 * rows * width));
            let out: Vec<F16> = acc[..rows * width].iter().map(|&v| f16_from_f32(v)).collect();
            tiles.push((l, r, out));
        }
        (tiles, events)
    });

    let mut cmat = Fp16Matrix::zeros(g.m, g.n);
    let mut events = Vec::new();
    for (tiles, ev) in per_core {
        for (l, r, out) in tiles {
            let cols = g.n_range(r);
            let width = cols.len();
            for (i, row) in out.chunks_exact(width).enumerate() {
                for (c, &h) in row.iter().enumerate() {
                    cmat.set(l * g.tile_m + i, cols.start + c, h);
                }
            }
        }
        events.extend(ev);
    }
    (cmat, events)
}

/// Data-parallel W4A16 GEMM: the same dequant workspace as Split-K, then
/// one full-K accumulation per output tile. `plan.splits` is ignored.
pub fn dataparallel_w4a16_gemm_with<E: Executor>(
    a: &Fp16Matrix,
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
    exec: &E,
) -> Result<(Fp16Matrix, ExecTrace)> {
    check_w4a16(a, w, params, plan)?;
    let mut trace = ExecTrace::new();
    let (workspace, ev) = dequant_phase(w, params, plan, exec)?;
    trace.extend(ev);

    let b = workspace.to_f32_vec();
    let ops = gemm_operands(a, &b, w.cols(), plan, Stream::DequantRead);
    let (c, ev) = output_tile_gemm_phase(&ops, plan, exec);
    trace.extend(ev);
    Ok((c, trace))
}

pub fn dataparallel_w4a16_gemm(
    a: &Fp16Matrix,
    w: &PackedInt4Matrix,
    params: &QuantParams,
    plan: &SplitKPlan,
) -> Result<(Fp16Matrix, ExecTrace)> {
    dataparallel_w4a16_gemm_with(a, w, params, plan, &Sequential)
}

/// Native FP16 x FP16 GEMM with binary32 accumulation, tiled like the
/// data-parallel engine.
pub fn fp16_gemm_with<E: Executor>(
    a: &Fp16Matrix,
    b: &Fp16Matrix,
    plan: &SplitKPlan,
    exec: &E,
) -> Result<(Fp16Matrix, ExecTrace)> {
    plan.validate()?;
    check_activation(a, b.rows())?;
    if b.cols() == 0 {
        return Err(Error::Shape("GEMM operands must be non-empty"));
    }
    let b32 = b.to_f32_vec();
    let ops = gemm_operands(a, &b32, b.cols(), plan, Stream::WeightFp16Read);
    let (c, ev) = output_tile_gemm_phase(&ops, plan, exec);
    let mut trace = ExecTrace::new();
    trace.extend(ev);
    Ok((c, trace))
}

pub fn fp16_gemm(a: &Fp16Matrix, b: &Fp16Matrix, plan: &SplitKPlan) -> Result<(Fp16Matrix, ExecTrace)> {
    fp16_gemm_with(a, b, plan, &Sequential)
}

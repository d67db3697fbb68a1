use alloc::vec::Vec;

use crate::machine::TrafficReport;

/// Barrier-separated phase of a W4A16 GEMM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// INT4 to FP16 conversion on the vector cores.
    Dequant,
    /// Tiled matrix multiplication on the cube cores.
    Gemm,
    /// Split-buffer reduction and FP32 to FP16 cast on the vector cores.
    Reduce,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Dequant, Phase::Gemm, Phase::Reduce];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Dequant => "dequant",
            Phase::Gemm => "gemm",
            Phase::Reduce => "reduce",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Cube,
    Vector,
    /// Memory transfer engine attached to a core.
    Mte,
}

/// Global-memory stream a transfer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Packed INT4 weights read by the vector cores.
    WeightPackedRead,
    /// Dequantized FP16 weights written to the workspace.
    DequantWrite,
    /// Dequantized FP16 weights read back by the cube cores.
    DequantRead,
    /// Native FP16 weights read by the cube cores (FP16 baseline only).
    WeightFp16Read,
    ActivationRead,
    /// FP32 partial results written to the split buffers.
    SplitWrite,
    SplitRead,
    OutputWrite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TileId {
    /// Weight tile `(k_tile, n_tile)` handled in the dequant phase.
    Weight { k_tile: u32, n_tile: u32 },
    /// One cube step: K-tile `k_tile` of output tile `(m_tile, n_tile)` in
    /// split `split`.
    Mma {
        split: u32,
        m_tile: u32,
        k_tile: u32,
        n_tile: u32,
    },
    /// Finished output tile of a split (or of the whole product when
    /// `split` is 0 in the single-pass engines).
    Output { split: u32, m_tile: u32, n_tile: u32 },
    /// A contiguous run of flattened output elements in the reduce phase.
    Elements { start: u64, len: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Transfer {
        stream: Stream,
        bytes: u64,
    },
    /// MACs on a cube core, elements on a vector core.
    Compute {
        work: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub phase: Phase,
    pub unit: UnitKind,
    /// Logical core index: AI core for cube events, vector core for vector
    /// events, and the owning core for MTE events.
    pub core: u32,
    pub tile: TileId,
    pub action: Action,
}

/// Ordered record of everything an engine did.
///
/// Events appear in logical-core order within each phase, so the trace does
/// not depend on how cores were mapped to threads.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecTrace {
    pub events: Vec<Event>,
}

impl ExecTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, events: impl IntoIterator<Item = Event>) {
        self.events.extend(events);
    }

    /// Global-memory bytes per phase and stream.
    pub fn traffic(&self) -> TrafficReport {
        let mut report = TrafficReport::default();
        for e in &self.events {
            if let Action::Transfer { stream, bytes } = e.action {
                report.add(e.phase, stream, bytes);
            }
        }
        report
    }

    /// Compute work per phase: elements for dequant/reduce, MACs for gemm.
    pub fn work(&self) -> [u64; 3] {
        let mut work = [0u64; 3];
        for e in &self.events {
            if let Action::Compute { work: w } = e.action {
                work[e.phase.index()] += w;
            }
        }
        work
    }

    pub fn split_buffer_bytes(&self) -> u64 {
        let t = self.traffic().totals();
        t.split_write + t.split_read
    }
}

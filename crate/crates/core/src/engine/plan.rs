use core::ops::Range;

use crate::error::{Error, Result};

/// Granularity of the cube unit's FP16 matrix instruction.
pub const CUBE_GRANULE: usize = 16;

/// How often operand tiles are fetched from global memory during the GEMM
/// phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ReusePolicy {
    /// Every tile pass re-reads its A and B tiles. Pessimistic bound.
    #[default]
    Unit,
    /// Operand panels stay resident on chip: each A and B element is read
    /// from global memory exactly once.
    FullRowResident,
}

/// Decomposition of one GEMM onto the accelerator.
///
/// `splits` is the Split-K factor; the data-parallel and FP16 engines
/// ignore it. Tile extents must be positive multiples of 16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SplitKPlan {
    pub splits: usize,
    pub tile_m: usize,
    pub tile_n: usize,
    pub tile_k: usize,
    pub num_ai_cores: usize,
    pub vec_per_core: usize,
    pub reuse: ReusePolicy,
}

impl Default for SplitKPlan {
    fn default() -> Self {
        SplitKPlan {
            splits: 1,
            tile_m: 128,
            tile_n: 128,
            tile_k: 128,
            num_ai_cores: 24,
            vec_per_core: 2,
            reuse: ReusePolicy::Unit,
        }
    }
}

impl SplitKPlan {
    pub fn with_splits(mut self, splits: usize) -> Self {
        self.splits = splits;
        self
    }

    pub fn with_tiles(mut self, m: usize, n: usize, k: usize) -> Self {
        self.tile_m = m;
        self.tile_n = n;
        self.tile_k = k;
        self
    }

    pub fn with_cores(mut self, num_ai_cores: usize) -> Self {
        self.num_ai_cores = num_ai_cores;
        self
    }

    pub fn with_reuse(mut self, reuse: ReusePolicy) -> Self {
        self.reuse = reuse;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::InvalidPlan("split factor must be at least 1"));
        }
        for t in [self.tile_m, self.tile_n, self.tile_k] {
            if t == 0 || t % CUBE_GRANULE != 0 {
                return Err(Error::InvalidPlan("tile sizes must be positive multiples of 16"));
            }
        }
        if self.num_ai_cores == 0 || self.vec_per_core == 0 {
            return Err(Error::InvalidPlan("core counts must be positive"));
        }
        Ok(())
    }

    /// Total vector cores across all AI cores.
    pub fn num_vector_cores(&self) -> usize {
        self.num_ai_cores * self.vec_per_core
    }

    /// Tile counts for an `m x n x k` problem (unpadded `m`).
    pub fn grid(&self, m: usize, n: usize, k: usize) -> TileGrid {
        TileGrid {
            m,
            n,
            k,
            m_padded: m.div_ceil(self.tile_m) * self.tile_m,
            tile_m: self.tile_m,
            tile_n: self.tile_n,
            tile_k: self.tile_k,
            splits: self.splits,
        }
    }
}

/// Tile geometry shared by the engines and the closed-form traffic model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// `m` rounded up to a whole number of row tiles.
    pub m_padded: usize,
    pub tile_m: usize,
    pub tile_n: usize,
    pub tile_k: usize,
    pub splits: usize,
}

impl TileGrid {
    pub fn m_tiles(&self) -> usize {
        self.m_padded / self.tile_m
    }

    pub fn n_tiles(&self) -> usize {
        self.n.div_ceil(self.tile_n)
    }

    pub fn k_tiles(&self) -> usize {
        self.k.div_ceil(self.tile_k)
    }

    pub fn n_range(&self, r: usize) -> Range<usize> {
        r * self.tile_n..((r + 1) * self.tile_n).min(self.n)
    }

    pub fn k_range(&self, j: usize) -> Range<usize> {
        j * self.tile_k..((j + 1) * self.tile_k).min(self.k)
    }

    /// K-tiles owned by split `i`: every split gets `k_tiles / splits`
    /// tiles and the last split also takes the remainder. When there are
    /// more splits than K-tiles the leading splits are empty.
    pub fn split_k_tiles(&self, i: usize) -> Range<usize> {
        let kt = self.k_tiles();
        let base = kt / self.splits;
        if i + 1 == self.splits {
            i * base..kt
        } else {
            i * base..(i + 1) * base
        }
    }

    /// Rows of row-tile `l` that belong to the unpadded problem.
    pub fn real_rows(&self, l: usize) -> usize {
        self.tile_m.min(self.m.saturating_sub(l * self.tile_m))
    }
}

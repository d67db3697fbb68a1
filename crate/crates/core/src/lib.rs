//! W4A16 (4-bit weight, 16-bit activation) matrix multiplication for a
//! decoupled accelerator whose matrix units and vector units talk only
//! through global memory.
//!
//! The crate is `no_std` and needs only `alloc`. It contains:
//!
//! * [`numerics`]: software binary16 / binary32 arithmetic with fixed
//!   round-to-nearest-even semantics.
//! * [`quant`]: affine 4-bit quantization, dequantization and nibble packing.
//! * [`engine`]: the Split-K, data-parallel and native FP16 GEMM engines,
//!   each producing bit-reproducible output plus an execution trace.
//! * [`machine`]: closed-form global-memory traffic and a per-phase
//!   time estimate for those engines.
//!
//! File formats, configuration parsing, thread pools and the command-line
//! harness live in the companion `w4a16` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod error;
pub mod machine;
pub mod matrix;
pub mod numerics;
pub mod quant;

pub use engine::{
    dataparallel_w4a16_gemm, fp16_gemm, pad_batch, reduce_split_buffers, splitk_w4a16_gemm, ExecTrace, Executor,
    ReusePolicy, Sequential, SplitKPlan,
};
pub use error::{Error, Result};
pub use machine::{CostReport, MachineConfig, TrafficReport};
pub use matrix::{Fp16Matrix, Fp32Matrix};
pub use numerics::{F32Acc, F16};
pub use quant::{PackedInt4Matrix, QuantMode, QuantParams};

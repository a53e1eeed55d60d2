//! Batched state-vector simulation of parameterized circuits with gate
//! fusion, a matrix-free adjoint gradient and layer-block checkpointing.
//!
//! Data-parallel kernels run on rayon by default; build without the
//! `parallel` feature for a purely sequential library with identical
//! results.

pub mod checkpoint;
pub mod circuit;
pub mod engine;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod oracle;
pub mod precision;
pub mod rng;
pub mod statevec;

pub use checkpoint::{
    count_checkpointed, count_checkpointed_naive, model_fused, model_native, optimal_block, run_checkpointed,
    run_checkpointed_naive, CheckpointPlan, CheckpointResult, MemoryAccountant,
};
pub use circuit::{build_hea, Axis, Circuit, Gate, PauliString};
pub use engine::{AdjointState, Engine, GradientResult, GradientVector, LedgerMode, StateLedger, Traversals};
pub use error::{Result, SimError};
pub use fusion::{fuse_circuit, FusedCircuit, FusedOp, FusionPolicy};
pub use precision::{Precision, Real};
pub use statevec::{BatchedState, NarrowedState};

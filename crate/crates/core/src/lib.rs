//! GPU memory-hierarchy microbenchmarking lab.
//!
//! Simulated caches, TLBs and shared-memory banks, a fine-grained
//! pointer-chase engine that runs against them, and an inference engine that
//! recovers cache parameters from the resulting latency traces.

pub mod cache;
pub mod error;
pub mod hierarchy;
pub mod inference;
pub mod io;
pub mod pchase;
pub mod presets;
pub mod smem;
pub mod throughput;

pub use cache::{
    AccessOutcome, AddressMapping, BitRange, CacheConfig, CacheState, CacheStats, ReplacementPolicy,
    SetLayout,
};
pub use error::{Error, Result};
pub use hierarchy::{
    classify, CacheModel, HierarchyConfig, HierarchySim, LatencySample, LatencyTable, MemoryModel,
    Pattern,
};
pub use inference::{
    infer, DirProbe, InferenceOptions, InferredParams, PolicyClass, Probe, ProbeQuery, SimProbe,
    SimTarget,
};
pub use pchase::{init_array, run_classic, run_fine_grained, InitPattern, PChaseConfig, Trace};
pub use presets::CacheTarget;
pub use smem::{BankConfig, BankMode};
pub use throughput::{DeviceRates, DeviceSpec, KernelShape};

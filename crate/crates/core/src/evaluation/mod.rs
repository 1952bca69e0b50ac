//! Linear probe on frozen embeddings and the cross-validated protocol.

pub mod probe;
pub mod protocol;
pub mod report;

pub use probe::{evaluate, train_probe, ProbeConfig, ProbeModel};
pub use protocol::{
    ablation_cells, run_ablations, run_cells, run_plan, run_protocol, Cell, EvalReport, FoldOutcome,
    ProtocolOptions, SweepParam,
};

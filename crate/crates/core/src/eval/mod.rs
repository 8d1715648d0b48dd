//! Ground-truth training, rank correlations, benchmark sweeps, ablations and
//! report files.

pub mod bench;
pub mod corr;
pub mod report;
pub mod train;

pub use bench::{
    ablation_counts, ablation_sizes, correlate, run_ablation_batches, run_ablation_batchsize,
    run_benchmark, AblationRow, BenchConfig, BenchContext, BenchData, BenchResult, BenchmarkRecord,
    CorrelationReport, CorrelationRow,
};
pub use corr::{kendall_tau, kendall_tau_naive, spearman_rho};
pub use train::{train_network, TrainConfig, TrainOutcome};

//! Numerical checks of the loss and Gram-spectrum bounds that link gradient
//! mean and variance to convergence and generalization.

pub mod chi2;
pub mod eigen;
pub mod gram;
pub mod linear;
pub mod relu;
pub mod suite;

pub use chi2::{chi2_cdf, chi2_inv_cdf};
pub use eigen::{sym_eigen, Eigen};
pub use gram::{
    check_gram_bounds, check_loss_decay, decay_config, gram_matrix, run_gram_trial, summarize_gram,
    BoundParams, DecayReport, EtaChoice, GramCheck, GramConfig, GramMatrix, GramSummary, GramTrial,
};
pub use linear::{run_linear_population, run_linear_trial, EtaRule, LinearPopulation, LinearTrial};
pub use relu::{run_relu_epoch, run_relu_population, ReluPopulation, ReluTrial, TwoLayer};

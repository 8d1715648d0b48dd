//! Zero-shot architecture search toolkit: a reverse-mode autodiff engine,
//! gradient-statistics proxies, convergence-bound experiments, evolutionary
//! search and a rank-correlation evaluation harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod proxies;
pub mod rng;
pub mod search;
pub mod space;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};

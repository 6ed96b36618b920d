//! Personalized federated learning experiments: instances with planted
//! heterogeneity, FedAvg, local training and SoftFedAvg, risk and stability
//! evaluation, and a sweep harness.

pub mod error;
pub mod instance;
pub mod linalg;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
pub mod algorithms;
pub mod evaluation;
pub mod harness;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}

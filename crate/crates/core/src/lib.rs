//! Flow matching with representation-guided sampling.
//!
//! A class-conditional velocity field is trained jointly with a projector
//! that predicts the clean-data representation of a frozen encoder. At
//! sampling time the projector's prediction becomes a per-sample target:
//! inside a guidance interval, the latent is nudged by gradient steps on
//! `|| phi(x0_hat(x_t)) - F(x_t) ||^2` before each solver step.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod guidance;
pub mod interpolant;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod sampling;
pub mod svg;
pub mod tensor;
pub mod training;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tape.md")]
    struct Tape;
    #[doc = include_str!("../../../book/src/interpolants.md")]
    struct Interpolants;
    #[doc = include_str!("../../../book/src/sampling.md")]
    struct Sampling;
    #[doc = include_str!("../../../book/src/guidance.md")]
    struct Guidance;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/configuration.md")]
    struct Configuration;
}

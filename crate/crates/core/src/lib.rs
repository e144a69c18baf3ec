//! Inference and test design for one-shot device data under Logistic-Exponential lifetimes.
//!
//! One-shot devices only report whether they had failed by their inspection time. Devices
//! are tested in groups sharing an inspection time and a covariate (stress) vector; the
//! shape and scale of the lifetime law are log-linear in the covariates.
//!
//! The crate provides
//! - lifetime kernels ([`lifetime`]) for the Logistic-Exponential, Weibull and Gamma families,
//! - the grouped regression model and its analytic derivatives ([`regression`]),
//! - maximum likelihood and weighted minimum density power divergence estimation by
//!   fixed-step coordinate descent ([`estimation`]),
//! - sandwich covariance and MLE Hessian ([`asymptotics`]),
//! - the robust divergence test and its power approximation ([`hypothesis`]),
//! - Monte-Carlo and parametric bootstrap studies ([`simulation`]),
//! - cost-optimal inspection times by an elitist genetic algorithm ([`design`]),
//! - the `oneshot` command-line front end ([`cli`]).

pub mod asymptotics;
pub mod cli;
pub mod design;
pub mod error;
pub mod estimation;
pub mod hypothesis;
pub mod lifetime;
pub mod presets;
pub mod regression;
pub mod seeding;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{fit, FitOptions, FitResult, FitStatus};
pub use lifetime::{Family, ShapeScale};
pub use regression::{Dataset, GroupProb, GroupRecord, Theta};

/// The six SEER gallbladder cancer groups (inspection at 12 months, covariates median
/// age / 10 and tumour size code), as CSV.
pub const SEER_GALLBLADDER_CSV: &str = include_str!("../data/seer_gallbladder.csv");

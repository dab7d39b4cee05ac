//! Adaptive grading: sequentially choose question difficulties to place a
//! candidate's latent ability in a grade bracket with a fixed error
//! probability, using as few questions as possible.
//!
//! The crate is organised bottom-up:
//!
//! - [`response_models`]: response functions, KL divergence and the
//!   separation index between an ability and a grade threshold;
//! - [`lower_bound`]: the max-min sample-complexity program and its solvers;
//! - [`estimation`]: response histories and maximum-likelihood abilities;
//! - [`engine`]: the sequential test (question selection, GLR stopping);
//! - [`simulator`]: simulated candidates and Monte Carlo experiments.

pub mod config;
pub mod domain;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod lower_bound;
pub mod optimize;
pub mod response_models;
pub mod simulator;

pub use domain::{AbilityDomain, Bracket, GradeScheme, QuestionBank};
pub use error::{Error, Result};
pub use response_models::{kl_bernoulli, ModelSpec, MonotoneMap, ResponseModel};

//! Sampling on finite discrete state spaces.
//!
//! This crate implements the classical Metropolis-Hastings chain on a weighted
//! graph together with four momentum-accelerated variants (`chi_squared`,
//! `kl`, `log_fisher`, `con_fisher`), each available in two realizations:
//!
//! * a deterministic ODE flow for the coupled density/momentum pair `(p, psi)`
//!   integrated with a staggered splitting scheme ([`dynamics`]),
//! * an interacting particle jump process driven by momentum-parameterized
//!   transition rates ([`particles`]).
//!
//! The [`spectral`] module provides the eigenstructure analysis used to pick
//! damping parameters and predict convergence rates, and [`graph_model`] /
//! [`geometry`] hold the graph, target-distribution and metric machinery
//! everything else is built on.
//!
//! ```rust
//! use amcmc::graph_model::{make_cycle, random_walk_kernel, build_mh_rate_matrix,
//!                          TargetDistribution};
//! use amcmc::spectral::{q_spectrum, alpha_star};
//!
//! let g = make_cycle(3).unwrap();
//! let target = TargetDistribution::from_unnormalized(vec![0.9913, 0.0044, 0.0043]).unwrap();
//! let q = random_walk_kernel(&g).unwrap();
//! let rate = build_mh_rate_matrix(&q, &target).unwrap();
//! let spectrum = q_spectrum(&rate, &target).unwrap();
//! assert!((alpha_star(&spectrum).unwrap() + 0.5044).abs() < 5e-4);
//! ```

pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod graph_model;
pub mod particles;
pub mod presets;
pub mod spectral;

pub use error::{AmcmcError, Result};

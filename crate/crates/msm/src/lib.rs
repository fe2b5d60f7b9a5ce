//! Multiscale two-stage Markov chain Monte Carlo for characterizing the
//! log-permeability field of a single-phase Darcy flow problem.
//!
//! The unknown field is expanded in truncated Karhunen-Loeve bases that
//! live on the congruent subdomains of a Cartesian domain decomposition.
//! Chains update one subdomain block at a time with preconditioned
//! Crank-Nicolson proposals; every proposal is screened by a cheap coarse
//! likelihood (flow-based upscaling plus a coarse solve) before the fine
//! solve decides acceptance, and subdomain interfaces are smoothed by
//! variance-preserving local averaging. Point measurements of the field
//! can be honored exactly through kriging plus nullspace projection.
//!
//! Module map:
//!
//! - [`mesh`]: Cartesian grids and the congruent domain decomposition.
//! - [`field`]: scalar cell fields and their snapshot format.
//! - [`kle`]: covariance operators, eigenpair computation, truncated
//!   bases, coefficient blocking, and the basis cache format.
//! - [`forward`]: the finite-volume pressure solver, flow-based
//!   upscaling, checkerboard observation, and likelihoods.
//! - [`sampler`]: proposal, blocking schedule, multiscale field
//!   assembly, and interface averaging.
//! - [`conditioning`]: kriging and projection onto measurement
//!   nullspaces, globally and per subdomain.
//! - [`mcmc`]: the two-stage kernel, chain state, records, and
//!   checkpoints.
//! - [`diagnostics`]: potential scale reduction factors, univariate and
//!   multivariate.
//! - [`config`]: the TOML run configuration.
//! - [`harness`]: end-to-end experiments, manifests, and comparisons.
//! - [`ioutil`]: atomic writes and content hashing.
//! - [`error`]: the crate-wide error type.

pub mod conditioning;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod forward;
pub mod harness;
pub mod ioutil;
pub mod kle;
pub mod mcmc;
pub mod mesh;
pub mod sampler;

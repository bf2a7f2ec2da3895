//! Numerical laboratory for quasi-periodic Schrödinger operators
//! `H(θ) = εΔ + v(θ + x·ω)` on `ℓ²(Z^d)`.
//!
//! The crate builds finite Dirichlet restrictions of `H(θ)`, eigensolves them,
//! and exercises the constructive spectral machinery around them:
//!
//! - [`lattice`] — blocks of `Z^d`, torus arithmetic, Diophantine frequency
//!   checks, and the regularizing block deformation.
//! - [`operator`] — sampling potentials and operator assembly, including the
//!   boundary coupling `Γ`.
//! - [`spectral`] — a dense symmetric eigensolver, Green's functions with
//!   norm/decay diagnostics, trial-function bounds, compressions, Cauchy
//!   interlacing, and Poisson reconstruction.
//! - [`rellich`] — eigenvalue-branch (Rellich curve) construction: continuation,
//!   Feynman–Hellman derivatives, Morse checks, resonance covers, double
//!   resonances with auxiliary interlacing curves, and domain adjustment.
//! - [`msa`] — multi-scale bookkeeping: scale parameters, resonant sets,
//!   good-set predicates, and Green's-estimate certification.
//! - [`loclab`] — localization observables: eigenfunction decay profiles,
//!   dynamical moments, and bad-phase-set estimates.
//! - [`ids`] — integrated density of states, eigenvalue-counting bounds, and
//!   Hölder-modulus measurement.
//!
//! Everything is deterministic given a configuration and a seed. Grid sweeps,
//! Monte-Carlo sampling and randomized certification fan out through
//! [`par::maybe_par_map`], which uses rayon when the `parallel` feature is on
//! (the default) and a plain sequential map otherwise.

pub mod error;
pub mod ids;
pub mod lattice;
pub mod loclab;
pub mod msa;
pub mod operator;
pub mod par;
pub mod rellich;
pub mod spectral;

pub use error::Error;

/// Crate-wide `Result`.
pub type Result<T> = std::result::Result<T, Error>;

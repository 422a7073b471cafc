//! Numerical laboratory for closed Lagrangian self-shrinkers in `C^n`.
//!
//! A self-shrinker is an immersed submanifold satisfying `H + (x - x0)^perp / (2 t0) = 0`;
//! it evolves by mean curvature flow through dilations and vanishes at `(x0, t0)`.
//! This crate discretizes closed Lagrangian examples (Clifford tori, Abresch-Langer
//! curves and their products) on periodic parameter grids and provides:
//!
//! * weighted (Gaussian) integral calculus: the F-functional, entropy search,
//!   the classical weighted integral identities, first variations;
//! * calculus of 1-forms dual to normal variations: exterior/codifferential
//!   operators, the drift-weighted codifferential, Hodge splitting and twisted
//!   harmonic representatives;
//! * the low spectrum of the drift Laplacian `Lap_f = Lap - <x/2, grad .>`
//!   with `f = |x|^2/4`, via a dense symmetric eigensolve;
//! * second variations of the F-functional and Lagrangian / Hamiltonian
//!   F-stability verdicts with certificates.
//!
//! Run `cargo run --release --example tour` for an overview, or see the
//! `examples/` directory for one runnable program per capability.

pub mod catalog;
pub mod expr;
pub mod forms;
pub mod geometry;
pub mod grid;
pub mod linsolve;
pub mod report;
pub mod spectral;
pub mod stability;
pub mod weighted;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("coordinate tangent degenerates at node {node}")]
    NonImmersion { node: usize },
    #[error("metric is not positive definite at node {node}")]
    DegenerateMetric { node: usize },
    #[error("field is not normal-valued (tangential defect {defect:.3e})")]
    NotNormal { defect: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("rotation number {p}/{q} outside the existence window (1/2, sqrt(2)/2)")]
    InvalidWindow { p: u32, q: u32 },
    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),
    #[error("linear solver stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },
    #[error("right-hand side incompatible: weighted mean {mean:.3e}")]
    RhsNotCompatible { mean: f64 },
    #[error("immersion is not a self-shrinker (residual {residual:.3e})")]
    NotAShrinker { residual: f64 },
    #[error("immersion is not Lagrangian (defect {defect:.3e})")]
    NotLagrangian { defect: f64 },
    #[error("1-form is not closed (defect {defect:.3e})")]
    NotClosed { defect: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("certificate weak: optimized second variation {value:.6e} above -{threshold:.1e}")]
    CertificateWeak { value: f64, threshold: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
}

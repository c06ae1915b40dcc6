//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Degenerate or inconsistent geometry (zero-area triangles, empty meshes, ...).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Mesh file could not be parsed; carries the 1-based line number.
    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    /// A structural mesh invariant is violated.
    #[error("mesh validation error: {0}")]
    MeshValidation(String),

    /// Source vector does not satisfy the global mass balance.
    #[error("unbalanced source: |sum S_i| = {imbalance:.3e} exceeds {tolerance:.3e}")]
    UnbalancedSource { imbalance: f64, tolerance: f64 },

    /// The positive-conductivity subgraph does not connect all sourced vertices.
    /// `component` lists (a prefix of) one offending component.
    #[error("singular Kirchhoff system: positive-conductivity subgraph is disconnected; \
             one component contains vertices {component:?} ({size} total)")]
    DisconnectedNetwork { component: Vec<usize>, size: usize },

    /// A conductivity update produced a non-finite value.
    #[error("non-finite adaptation update on edge {edge}")]
    NonFiniteUpdate { edge: usize },

    /// Total permeability r*I + C is not positive definite on some cell.
    #[error("non-coercive permeability on triangle {triangle}: min eigenvalue {lambda_min:.3e}")]
    NonCoercive { triangle: usize, lambda_min: f64 },

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge: {context} (iterations {iterations}, residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// Invalid parameter value.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Not enough data for the requested analysis (e.g. convergence fit).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Energy kept increasing after the maximum number of step halvings.
    #[error("flow step rejected after {halvings} dt halvings at t = {t:.6e}")]
    StepRejected { t: f64, halvings: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

//! Numerical library for biological transportation-network formation.
//!
//! The model couples a Darcy-type pressure equation with an evolution law for a
//! symmetric conductance tensor. This crate provides both the discrete picture —
//! edge conductivities on a triangulation adapting under a Kirchhoff constraint —
//! and the continuum picture — a tensor gradient flow driven by activation,
//! metabolic decay and optional diffusion — together with the finite-element
//! machinery that connects the two exactly, and the steady-state solvers
//! (1D closed forms, a p-Laplacian minimizer for γ>1 and a penalized
//! free-boundary solver for γ=1).
//!
//! Modules follow the pipeline:
//!
//! * [`mesh`] — planar triangulations, diamond (per-edge) geometry, text format
//! * [`network`] — Kirchhoff solves, discrete energies, conductivity adaptation
//! * [`tensor`] — symmetric 2×2 tensors, the rank-one lift of edge conductivities,
//!   the metabolic law
//! * [`fem`] — P1 Poisson solver with tensor permeability, energy identities,
//!   convergence studies
//! * [`flow`] — semi-implicit time integration of the tensor gradient flow with
//!   energy-dissipation and positive-semidefiniteness monitoring
//! * [`steady`] — steady states: 1D regime classification, p-Laplacian and
//!   penalized solvers, tensor recovery from pressure
//! * [`vtk`] — legacy-VTK ASCII snapshots of tensor and pressure fields

pub mod error;
pub mod fem;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod network;
pub mod rng;
pub mod steady;
pub mod tensor;
pub mod vtk;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

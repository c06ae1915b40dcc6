//! First-order finite elements with tensor permeability.
//!
//! The Poisson problem −∇·((r𝕀 + ℂ)∇p) = S with no-flux boundary conditions is
//! discretized with P1 hats on the triangulation; the permeability tensor is
//! piecewise constant per cell, so stiffness entries and energy integrands are
//! evaluated exactly. The identity checks connect this solver to the discrete
//! network model: the vertex pressures of the finite-element solution satisfy
//! the diamond-rescaled Kirchhoff law exactly, and the rescaled discrete
//! energy equals the semi-discrete energy of the lifted tensor field.

use std::fmt::Write as _;

use crate::error::Error;
use crate::geometry::{Vec2, TRI_GAUSS3};
use crate::linalg::{self, SparseSym};
use crate::mesh::{
    build_structured_triangulation, compute_diamonds, diamond_split, DiamondMap, Rect, TriMesh,
};
use crate::network::{
    self, kirchhoff_residual, project_source, ConductivityVec, NetworkGraph, SourceVec, Weighting,
};
use crate::tensor::{averaged_lift, lift_edge_conductivities, CellTensorField, MetabolicLaw};
use crate::Result;

/// Relative residual bound guaranteed for every returned pressure field.
pub const POISSON_RESIDUAL_TOL: f64 = 1e-10;

/// Constant gradients of the three hat functions on a triangle, and its area.
pub fn hat_gradients(p0: Vec2, p1: Vec2, p2: Vec2) -> ([Vec2; 3], f64) {
    let area = 0.5 * (p1 - p0).cross(p2 - p0);
    let scale = 1.0 / (2.0 * area);
    (
        [
            (p2 - p1).rot90().scale(scale),
            (p0 - p2).rot90().scale(scale),
            (p1 - p0).rot90().scale(scale),
        ],
        area,
    )
}

/// A P1 pressure field: vertex values in the mass-weighted zero-mean gauge
/// (∫ p dx = 0) and the constant gradient per triangle.
#[derive(Debug, Clone)]
pub struct PressureField {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec2>,
}

impl PressureField {
    pub fn from_vertex_values(mesh: &TriMesh, mut values: Vec<f64>) -> Self {
        let masses = mesh.lumped_vertex_masses();
        let total: f64 = masses.iter().sum();
        let mean: f64 = values.iter().zip(&masses).map(|(p, m)| p * m).sum::<f64>() / total;
        for v in values.iter_mut() {
            *v -= mean;
        }
        let gradients = (0..mesh.n_triangles())
            .map(|t| {
                let [p0, p1, p2] = mesh.tri_vertices(t);
                let (grads, _) = hat_gradients(p0, p1, p2);
                let tri = mesh.triangles[t];
                grads[0].scale(values[tri[0]])
                    + grads[1].scale(values[tri[1]])
                    + grads[2].scale(values[tri[2]])
            })
            .collect();
        PressureField { values, gradients }
    }
}

/// Assembled stiffness system for the tensor-permeability Poisson problem.
#[derive(Debug)]
pub struct StiffnessSystem {
    pub matrix: SparseSym,
    pub load: Vec<f64>,
    /// Smallest eigenvalue of the total permeability r𝕀 + ℂ over all cells.
    pub min_cell_lambda: f64,
}

impl StiffnessSystem {
    pub fn set_load(&mut self, source: &SourceVec) {
        self.load = source.to_vec();
    }
}

/// Assemble the P1 stiffness matrix K_uv = Σ_T ∇φ_u·(r𝕀 + ℂ_T)∇φ_v·area(T).
///
/// The total permeability must be positive definite on every cell: either
/// r ≥ r₀ > 0, or r = 0 with a uniformly positive definite ℂ.
pub fn assemble(
    mesh: &TriMesh,
    perm: &CellTensorField,
    r: impl Fn(f64, f64) -> f64,
) -> Result<StiffnessSystem> {
    assert_eq!(perm.len(), mesh.n_triangles(), "permeability/cell mismatch");
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    let mut min_lambda = f64::INFINITY;
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.tri_vertices(t);
        let (grads, area) = hat_gradients(p0, p1, p2);
        // Second-order quadrature of the background field; exact for linear r.
        let mut r_mean = 0.0;
        for bary in TRI_GAUSS3 {
            let p = p0.scale(bary[0]) + p1.scale(bary[1]) + p2.scale(bary[2]);
            r_mean += r(p.x, p.y);
        }
        r_mean /= 3.0;
        let mut total = perm.0[t];
        total.a += r_mean;
        total.c += r_mean;
        let lambda = total.min_eigenvalue();
        if lambda <= 0.0 {
            return Err(Error::NonCoercive {
                triangle: t,
                lambda_min: lambda,
            });
        }
        min_lambda = min_lambda.min(lambda);
        let tri = mesh.triangles[t];
        for u in 0..3 {
            let flux = total.apply(grads[u]).scale(area);
            for v in 0..3 {
                triplets.push((tri[u], tri[v], flux.dot(grads[v])));
            }
        }
    }
    Ok(StiffnessSystem {
        matrix: SparseSym::from_triplets(n, &triplets),
        load: vec![0.0; n],
        min_cell_lambda: min_lambda,
    })
}

/// Galerkin solve of −∇·((r𝕀 + ℂ)∇p) = S with zero-mean gauge.
pub fn solve_poisson(
    mesh: &TriMesh,
    perm: &CellTensorField,
    r: impl Fn(f64, f64) -> f64,
    source: &SourceVec,
) -> Result<PressureField> {
    let mut system = assemble(mesh, perm, r)?;
    system.set_load(source);
    solve_assembled(mesh, &system)
}

/// Solve an already-assembled system (the load must be set and balanced).
pub fn solve_assembled(mesh: &TriMesh, system: &StiffnessSystem) -> Result<PressureField> {
    let values = linalg::solve_singular_spsd(&system.matrix, &system.load)?;
    let load_norm = linalg::norm2(&system.load);
    if load_norm > 0.0 {
        let mut kx = vec![0.0; values.len()];
        system.matrix.mul_vec(&values, &mut kx);
        let residual: f64 = kx
            .iter()
            .zip(&system.load)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual > POISSON_RESIDUAL_TOL * load_norm {
            return Err(Error::NoConvergence {
                context: "Poisson solve exceeded the residual bound".into(),
                iterations: 0,
                residual: residual / load_norm,
            });
        }
    }
    Ok(PressureField::from_vertex_values(mesh, values))
}

/// Semi-discrete energy of a piecewise-constant tensor field, with both
/// evaluation routes for the pumping term.
#[derive(Debug, Clone, Copy)]
pub struct SemiDiscreteEnergy {
    /// ∫ ∇p·(r𝕀 + ℂ)∇p dx by exact per-cell quadrature.
    pub pumping: f64,
    /// The same quantity through the source identity ∫ S p dx.
    pub pumping_via_source: f64,
    /// ∫ M(|ℂ|) dx, exact for the piecewise-constant field.
    pub metabolic: f64,
}

impl SemiDiscreteEnergy {
    pub fn total(&self) -> f64 {
        self.pumping + self.metabolic
    }
}

/// Evaluate ∫ ∇p·(r𝕀 + ℂ)∇p + M(|ℂ|) dx for the Galerkin solution p.
pub fn semi_discrete_energy(
    mesh: &TriMesh,
    perm: &CellTensorField,
    r: impl Fn(f64, f64) -> f64 + Copy,
    source: &SourceVec,
    law: &MetabolicLaw,
) -> Result<SemiDiscreteEnergy> {
    let pressure = solve_poisson(mesh, perm, r, source)?;
    Ok(energy_of_pressure(mesh, perm, r, source, law, &pressure))
}

/// The energy integrals for an existing pressure field.
pub fn energy_of_pressure(
    mesh: &TriMesh,
    perm: &CellTensorField,
    r: impl Fn(f64, f64) -> f64,
    source: &SourceVec,
    law: &MetabolicLaw,
    pressure: &PressureField,
) -> SemiDiscreteEnergy {
    let mut pumping = 0.0;
    let mut metabolic = 0.0;
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.tri_vertices(t);
        let area = mesh.tri_area(t);
        let mut r_mean = 0.0;
        for bary in TRI_GAUSS3 {
            let p = p0.scale(bary[0]) + p1.scale(bary[1]) + p2.scale(bary[2]);
            r_mean += r(p.x, p.y);
        }
        r_mean /= 3.0;
        let g = pressure.gradients[t];
        pumping += area * (r_mean * g.norm_sq() + perm.0[t].quad_form(g));
        metabolic += area * law.value(perm.0[t].frobenius());
    }
    let pumping_via_source = source
        .iter()
        .zip(&pressure.values)
        .map(|(s, p)| s * p)
        .sum();
    SemiDiscreteEnergy {
        pumping,
        pumping_via_source,
        metabolic,
    }
}

/// Report of the Kirchhoff-law identity check: the vertex values of the
/// finite-element solution with the lifted permeability satisfy the
/// diamond-rescaled Kirchhoff law up to solver tolerance.
#[derive(Debug, Clone)]
pub struct KirchhoffIdentityReport {
    pub residual_l2: f64,
    pub residual_max: f64,
    pub source_norm: f64,
    /// ‖residual‖₂ / ‖S‖₂.
    pub rel_l2: f64,
}

/// Solve the Poisson problem with the lifted conductivity field (r = 0,
/// exact sub-triangle integration via the averaged cell tensors) and evaluate
/// the rescaled Kirchhoff residual of its vertex pressures.
pub fn kirchhoff_identity_residual(
    mesh: &TriMesh,
    diamonds: &DiamondMap,
    c: &ConductivityVec,
    s: impl Fn(f64, f64) -> f64,
) -> Result<KirchhoffIdentityReport> {
    if c.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Parameter(
            "the identity check requires strictly positive conductivities".into(),
        ));
    }
    let source = project_source(mesh, s);
    let perm = averaged_lift(mesh, diamonds, c);
    let pressure = solve_poisson(mesh, &perm, |_, _| 0.0, &source)?;
    let graph = NetworkGraph::from_mesh(mesh, diamonds);
    let residual = kirchhoff_residual(&graph, c, &pressure.values, &source, Weighting::Rescaled);
    let residual_l2 = linalg::norm2(&residual);
    let residual_max = residual.iter().fold(0.0f64, |a, &r| a.max(r.abs()));
    let source_norm = source.norm2();
    Ok(KirchhoffIdentityReport {
        residual_l2,
        residual_max,
        source_norm,
        rel_l2: residual_l2 / source_norm.max(f64::MIN_POSITIVE),
    })
}

/// Report of the energy identity check: the rescaled discrete energy evaluated
/// from the network side equals the semi-discrete energy of the lifted field.
#[derive(Debug, Clone)]
pub struct EnergyIdentityReport {
    /// Network route: Σ vol(⋄)(𝒞(ΔP/L)² + M(𝒞)).
    pub discrete: f64,
    /// Finite-element route: ∫ ∇p·Q∇p + M(|Q|) dx over the half-diamonds.
    pub semi_discrete: f64,
    pub rel_gap: f64,
}

/// Compute both energies from one finite-element solve and report the gap.
pub fn energy_identity_gap(
    mesh: &TriMesh,
    diamonds: &DiamondMap,
    c: &ConductivityVec,
    s: impl Fn(f64, f64) -> f64,
    law: &MetabolicLaw,
) -> Result<EnergyIdentityReport> {
    if c.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Parameter(
            "the identity check requires strictly positive conductivities".into(),
        ));
    }
    let source = project_source(mesh, s);
    let perm = averaged_lift(mesh, diamonds, c);
    let pressure = solve_poisson(mesh, &perm, |_, _| 0.0, &source)?;

    // Network route: rescaled discrete energy of the vertex pressures.
    let graph = NetworkGraph::from_mesh(mesh, diamonds);
    let discrete = network::discrete_energy(&graph, c, &pressure.values, law, Weighting::Rescaled);

    // Finite-element route: integrate over the half-diamond sub-triangles,
    // reading the stored rank-one tensors of the lift.
    let split = diamond_split(mesh);
    let lifted = lift_edge_conductivities(&split, diamonds, c);
    let mut semi_discrete = 0.0;
    for sub in 0..split.mesh.n_triangles() {
        let area = split.mesh.tri_area(sub);
        let g = pressure.gradients[split.parent_tri[sub]];
        let q = &lifted.0[sub];
        semi_discrete += area * (q.quad_form(g) + law.value(q.frobenius()));
    }

    let scale = semi_discrete.abs().max(f64::MIN_POSITIVE);
    Ok(EnergyIdentityReport {
        discrete,
        semi_discrete,
        rel_gap: (discrete - semi_discrete).abs() / scale,
    })
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub h: f64,
    pub energy: f64,
    pub gap: f64,
    /// Order estimate from the previous level (NaN on the first row).
    pub order_running: f64,
}

/// Result of an energy-convergence study against a finer reference level.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub order: f64,
    pub r_squared: f64,
    pub reference_energy: f64,
    pub reference_cells: usize,
}

/// Pumping-energy convergence under uniform refinement. The permeability is a
/// fixed smooth tensor field sampled per level (its metabolic cost is
/// level-independent and drops out of the gap), and the reference energy is
/// computed on a mesh four times finer than the finest study level.
pub fn energy_convergence_study(
    base_nx: usize,
    levels: usize,
    rect: Rect,
    perm_fn: impl Fn(f64, f64) -> crate::tensor::SymTensor2 + Copy,
    r: impl Fn(f64, f64) -> f64 + Copy,
    s: impl Fn(f64, f64) -> f64 + Copy,
) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(Error::InsufficientData(format!(
            "a convergence study needs at least 3 levels, got {levels}"
        )));
    }
    let pumping_at = |nx: usize| -> Result<(f64, f64, usize)> {
        let mesh = build_structured_triangulation(nx, nx, rect)?;
        let perm = CellTensorField::from_smooth(&mesh, perm_fn);
        let source = project_source(&mesh, s);
        let pressure = solve_poisson(&mesh, &perm, r, &source)?;
        let mut pumping = 0.0;
        for t in 0..mesh.n_triangles() {
            let [p0, p1, p2] = mesh.tri_vertices(t);
            let mut r_mean = 0.0;
            for bary in TRI_GAUSS3 {
                let p = p0.scale(bary[0]) + p1.scale(bary[1]) + p2.scale(bary[2]);
                r_mean += r(p.x, p.y);
            }
            r_mean /= 3.0;
            let g = pressure.gradients[t];
            pumping += mesh.tri_area(t) * (r_mean * g.norm_sq() + perm.0[t].quad_form(g));
        }
        Ok((pumping, mesh.max_edge_length(), mesh.n_triangles()))
    };

    let finest = base_nx << (levels - 1);
    let (reference_energy, _, reference_cells) = pumping_at(4 * finest)?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let nx = base_nx << level;
        let (energy, h, _) = pumping_at(nx)?;
        let gap = (reference_energy - energy).abs();
        let order_running = rows
            .last()
            .map(|prev| ((prev.gap / gap).ln()) / ((prev.h / h).ln()))
            .unwrap_or(f64::NAN);
        rows.push(ConvergenceRow {
            h,
            energy,
            gap,
            order_running,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let (order, r_squared) = linalg::log_log_fit(&hs, &gaps);
    Ok(ConvergenceStudy {
        rows,
        order,
        r_squared,
        reference_energy,
        reference_cells,
    })
}

/// Convergence table CSV: `h,gap,order_running`.
pub fn convergence_csv(study: &ConvergenceStudy) -> String {
    let mut out = String::from("h,gap,order_running\n");
    for row in &study.rows {
        let _ = writeln!(
            out,
            "{:.12e},{:.12e},{:.6}",
            row.h, row.gap, row.order_running
        );
    }
    out
}

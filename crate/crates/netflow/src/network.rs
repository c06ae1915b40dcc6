//! The discrete model: Kirchhoff law on a conductivity-weighted graph,
//! discrete and rescaled energies, and the conductivity-adaptation dynamics.

use std::fmt::Write as _;
use std::ops::Deref;

use crate::error::Error;
use crate::geometry::{Vec2, TRI_GAUSS3};
use crate::linalg::{self, SparseSym};
use crate::mesh::{DiamondMap, TriMesh};
use crate::rng::SplitMix64;
use crate::tensor::MetabolicLaw;
use crate::Result;

/// Relative Kirchhoff residual guaranteed for every returned pressure vector.
pub const KIRCHHOFF_RESIDUAL_TOL: f64 = 1e-10;

/// Edge-weight convention for the Kirchhoff law, energy and adaptation ODE.
///
/// `Plain` uses the original weights (𝒞/L in the Kirchhoff law, L in the
/// energy and ODE); `Rescaled` carries the diamond-volume factor vol(⋄)/L
/// that connects the discrete model to the finite-element picture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Plain,
    Rescaled,
}

/// An unoriented graph edge with its geometric data.
#[derive(Debug, Clone, Copy)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub length: f64,
    pub diamond_area: f64,
}

/// Vertex/edge graph of the discrete model.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub positions: Vec<Vec2>,
    pub edges: Vec<GraphEdge>,
    /// Per vertex: (neighbor vertex, edge index) pairs.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl NetworkGraph {
    pub fn from_mesh(mesh: &TriMesh, diamonds: &DiamondMap) -> Self {
        let edges = mesh
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| GraphEdge {
                i: edge.vertices[0],
                j: edge.vertices[1],
                length: diamonds.lengths[e],
                diamond_area: diamonds.volumes[e],
            })
            .collect();
        Self::assemble(mesh.vertices.clone(), edges)
    }

    /// Build a graph directly from edge data (positions may be synthetic).
    pub fn from_parts(
        positions: Vec<Vec2>,
        edges: Vec<(usize, usize, f64, f64)>,
    ) -> Result<Self> {
        let n = positions.len();
        let mut list = Vec::with_capacity(edges.len());
        for (i, j, length, diamond_area) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Parameter(format!(
                    "invalid edge ({i}, {j}) for {n} vertices"
                )));
            }
            if !(length > 0.0) || !(diamond_area > 0.0) {
                return Err(Error::Parameter(format!(
                    "edge ({i}, {j}) needs positive length and diamond area"
                )));
            }
            list.push(GraphEdge {
                i: i.min(j),
                j: i.max(j),
                length,
                diamond_area,
            });
        }
        Ok(Self::assemble(positions, list))
    }

    fn assemble(positions: Vec<Vec2>, edges: Vec<GraphEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); positions.len()];
        for (e, edge) in edges.iter().enumerate() {
            adjacency[edge.i].push((edge.j, e));
            adjacency[edge.j].push((edge.i, e));
        }
        NetworkGraph {
            positions,
            edges,
            adjacency,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    fn weight(&self, e: usize, c: f64, weighting: Weighting) -> f64 {
        let edge = &self.edges[e];
        match weighting {
            Weighting::Plain => c / edge.length,
            Weighting::Rescaled => c * edge.diamond_area / (edge.length * edge.length),
        }
    }
}

/// Edge conductivities, componentwise nonnegative.
#[derive(Debug, Clone)]
pub struct ConductivityVec(Vec<f64>);

impl ConductivityVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (e, &v) in values.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "conductivity on edge {e} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(ConductivityVec(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Seeded uniform conductivities in [lo, hi) from the documented SplitMix64
    /// stream, so independent implementations reproduce the same instances.
    pub fn random_uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::new(seed);
        Self::new((0..n).map(|_| rng.uniform(lo, hi)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ConductivityVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Vertex sources/sinks with vanishing sum (global mass balance).
#[derive(Debug, Clone)]
pub struct SourceVec(Vec<f64>);

impl SourceVec {
    /// Reject vectors whose imbalance exceeds 1e−12·‖S‖₁.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        let norm1: f64 = values.iter().map(|v| v.abs()).sum();
        let tolerance = 1e-12 * norm1.max(f64::MIN_POSITIVE);
        if sum.abs() > tolerance {
            return Err(Error::UnbalancedSource {
                imbalance: sum.abs(),
                tolerance,
            });
        }
        Ok(SourceVec(values))
    }

    /// Subtract the mean so the balance holds exactly.
    pub fn balanced(mut values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in values.iter_mut() {
            *v -= mean;
        }
        SourceVec(values)
    }

    pub fn norm2(&self) -> f64 {
        linalg::norm2(&self.0)
    }
}

impl Deref for SourceVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Vertex pressures in the zero-mean gauge.
#[derive(Debug, Clone)]
pub struct PressureVec(Vec<f64>);

impl PressureVec {
    /// Normalize to zero algebraic mean.
    pub fn new(mut values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in values.iter_mut() {
            *v -= mean;
        }
        PressureVec(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PressureVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Project a scalar source density onto the vertex hat functions:
/// S_i = ∫ S ψ_i dx by second-order Gauss quadrature per triangle, followed by
/// a mean correction that enforces the balance exactly.
pub fn project_source(mesh: &TriMesh, s: impl Fn(f64, f64) -> f64) -> SourceVec {
    let mut values = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.tri_vertices(t);
        let tri = mesh.triangles[t];
        let w = mesh.tri_area(t) / 3.0;
        for bary in TRI_GAUSS3 {
            let p = p0.scale(bary[0]) + p1.scale(bary[1]) + p2.scale(bary[2]);
            let sv = s(p.x, p.y) * w;
            for k in 0..3 {
                values[tri[k]] += sv * bary[k];
            }
        }
    }
    SourceVec::balanced(values)
}

/// Connected components of the subgraph of edges with positive conductivity.
fn positive_components(graph: &NetworkGraph, c: &[f64]) -> Vec<usize> {
    let n = graph.n_vertices();
    let mut component = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = next;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(nbr, e) in &graph.adjacency[v] {
                if c[e] > 0.0 && component[nbr] == usize::MAX {
                    component[nbr] = next;
                    stack.push(nbr);
                }
            }
        }
        next += 1;
    }
    component
}

/// Solve the Kirchhoff law −Σ_j w_ij (P_j − P_i) = S_i for the zero-mean
/// pressure vector, with w = 𝒞/L (plain) or 𝒞·vol(⋄)/L² (rescaled).
///
/// The subgraph of positive-conductivity edges must connect every vertex that
/// carries a nonzero source; vertices outside that component get pressure 0.
pub fn solve_kirchhoff(
    graph: &NetworkGraph,
    c: &ConductivityVec,
    s: &SourceVec,
    weighting: Weighting,
) -> Result<PressureVec> {
    let n = graph.n_vertices();
    if s.iter().all(|&v| v == 0.0) {
        return Ok(PressureVec(vec![0.0; n]));
    }
    let component = positive_components(graph, c);
    let mut sourced: Option<usize> = None;
    for (v, &sv) in s.iter().enumerate() {
        if sv != 0.0 {
            match sourced {
                None => sourced = Some(component[v]),
                Some(comp) if comp != component[v] => {
                    let members: Vec<usize> = (0..n)
                        .filter(|&u| component[u] == component[v])
                        .collect();
                    let size = members.len();
                    return Err(Error::DisconnectedNetwork {
                        component: members.into_iter().take(16).collect(),
                        size,
                    });
                }
                _ => {}
            }
        }
    }
    let comp = sourced.expect("nonzero source exists");
    let members: Vec<usize> = (0..n).filter(|&v| component[v] == comp).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &v) in members.iter().enumerate() {
        local[v] = k;
    }

    // Balance must hold within the solved component (sources elsewhere are zero).
    let rhs: Vec<f64> = members.iter().map(|&v| s[v]).collect();

    let mut triplets = Vec::new();
    for (e, edge) in graph.edges.iter().enumerate() {
        if c[e] <= 0.0 || component[edge.i] != comp {
            continue;
        }
        let w = graph.weight(e, c[e], weighting);
        let (li, lj) = (local[edge.i], local[edge.j]);
        triplets.push((li, li, w));
        triplets.push((lj, lj, w));
        triplets.push((li, lj, -w));
        triplets.push((lj, li, -w));
    }
    let matrix = SparseSym::from_triplets(members.len(), &triplets);
    let solution = linalg::solve_singular_spsd(&matrix, &rhs)?;

    let mut pressures = vec![0.0; n];
    for (k, &v) in members.iter().enumerate() {
        pressures[v] = solution[k];
    }
    let p = PressureVec::new(pressures);

    let residual = linalg::norm2(&kirchhoff_residual(graph, c, &p, s, weighting));
    let bound = KIRCHHOFF_RESIDUAL_TOL * s.norm2();
    if residual > bound {
        return Err(Error::NoConvergence {
            context: "Kirchhoff solve exceeded the residual bound".into(),
            iterations: 0,
            residual,
        });
    }
    Ok(p)
}

/// Per-vertex residual of the Kirchhoff law: −Σ_j w_ij (P_j − P_i) − S_i.
pub fn kirchhoff_residual(
    graph: &NetworkGraph,
    c: &[f64],
    p: &[f64],
    s: &[f64],
    weighting: Weighting,
) -> Vec<f64> {
    let mut residual: Vec<f64> = s.iter().map(|&v| -v).collect();
    for (e, edge) in graph.edges.iter().enumerate() {
        let w = graph.weight(e, c[e], weighting);
        let flux = w * (p[edge.j] - p[edge.i]);
        residual[edge.i] -= flux;
        residual[edge.j] += flux;
    }
    residual
}

/// Discrete energy: Σ_e (𝒞_e (ΔP)²/L² + M(𝒞_e)) · w_e over unoriented edges,
/// with w = L (plain) or w = vol(⋄) (rescaled).
pub fn discrete_energy(
    graph: &NetworkGraph,
    c: &[f64],
    p: &[f64],
    law: &MetabolicLaw,
    weighting: Weighting,
) -> f64 {
    graph
        .edges
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let dp = (p[edge.j] - p[edge.i]) / edge.length;
            let summand = c[e] * dp * dp + law.value(c[e]);
            let w = match weighting {
                Weighting::Plain => edge.length,
                Weighting::Rescaled => edge.diamond_area,
            };
            summand * w
        })
        .sum()
}

/// One forward-Euler step of the adaptation dynamics.
#[derive(Debug)]
pub struct AdaptationStep {
    pub c_next: ConductivityVec,
    /// Pressure solved from the pre-step conductivities.
    pub pressure: PressureVec,
    pub max_change: f64,
}

/// Forward-Euler update 𝒞 ← 𝒞 + dt·((ΔP/L)² − M′(𝒞))·w with w = L (plain) or
/// vol(⋄) (rescaled), clipped at zero. For γ < 1 an edge that has reached zero
/// is frozen there (M′ blows up; the model extends the solution by zero). Any
/// other non-finite update is reported with its edge index.
pub fn adaptation_step(
    graph: &NetworkGraph,
    c: &ConductivityVec,
    s: &SourceVec,
    law: &MetabolicLaw,
    dt: f64,
    weighting: Weighting,
) -> Result<AdaptationStep> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let pressure = solve_kirchhoff(graph, c, s, weighting)?;
    let mut next = Vec::with_capacity(c.len());
    let mut max_change = 0.0f64;
    for (e, edge) in graph.edges.iter().enumerate() {
        let frozen = law.gamma < 1.0 && c[e] == 0.0;
        if frozen {
            next.push(0.0);
            continue;
        }
        let dp = (pressure[edge.j] - pressure[edge.i]) / edge.length;
        let w = match weighting {
            Weighting::Plain => edge.length,
            Weighting::Rescaled => edge.diamond_area,
        };
        let rate = (dp * dp - law.mprime(c[e])) * w;
        if !rate.is_finite() {
            return Err(Error::NonFiniteUpdate { edge: e });
        }
        let updated = (c[e] + dt * rate).max(0.0);
        max_change = max_change.max((updated - c[e]).abs());
        next.push(updated);
    }
    Ok(AdaptationStep {
        c_next: ConductivityVec(next),
        pressure,
        max_change,
    })
}

/// Options for [`run_adaptation`].
#[derive(Debug, Clone)]
pub struct AdaptationOptions {
    pub dt: f64,
    pub t_end: f64,
    pub weighting: Weighting,
    /// Keep a conductivity snapshot every this many steps (0 = final only).
    pub snapshot_every: usize,
}

/// Logged trajectory of an adaptation run.
#[derive(Debug)]
pub struct AdaptationRun {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub max_dc: Vec<f64>,
    pub min_c: Vec<f64>,
    pub snapshots: Vec<(f64, ConductivityVec)>,
    pub final_c: ConductivityVec,
    /// Heuristic explicit-Euler bound dt ≤ 1/max M″(𝒞⁰) where finite.
    pub dt_stability_hint: Option<f64>,
    pub converged: bool,
}

/// Convergence threshold on ‖ΔC‖∞ for early termination.
pub const ADAPTATION_CONVERGENCE_TOL: f64 = 1e-12;

/// Repeated adaptation steps with energy logging and early termination once
/// the conductivities stop moving.
pub fn run_adaptation(
    graph: &NetworkGraph,
    c0: ConductivityVec,
    s: &SourceVec,
    law: &MetabolicLaw,
    options: &AdaptationOptions,
) -> Result<AdaptationRun> {
    let mut stability = None;
    for &c in c0.iter() {
        if c > 0.0 {
            let m2 = law.mpp(c).abs();
            if m2.is_finite() && m2 > 0.0 {
                let bound = 1.0 / m2;
                stability = Some(stability.map_or(bound, |b: f64| b.min(bound)));
            }
        }
    }

    let n_steps = (options.t_end / options.dt).ceil() as usize;
    let mut run = AdaptationRun {
        times: Vec::with_capacity(n_steps + 1),
        energies: Vec::with_capacity(n_steps + 1),
        max_dc: Vec::with_capacity(n_steps + 1),
        min_c: Vec::with_capacity(n_steps + 1),
        snapshots: Vec::new(),
        final_c: c0,
        dt_stability_hint: stability,
        converged: false,
    };

    let min_of = |c: &[f64]| c.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut t = 0.0;
    for k in 0..=n_steps {
        let step = adaptation_step(graph, &run.final_c, s, law, options.dt, options.weighting)?;
        let energy = discrete_energy(graph, &run.final_c, &step.pressure, law, options.weighting);
        run.times.push(t);
        run.energies.push(energy);
        run.max_dc.push(if k == 0 { 0.0 } else { step.max_change });
        run.min_c.push(min_of(&run.final_c));
        if options.snapshot_every > 0 && k % options.snapshot_every == 0 {
            run.snapshots.push((t, run.final_c.clone()));
        }
        if k == n_steps {
            break;
        }
        if k > 0 && step.max_change < ADAPTATION_CONVERGENCE_TOL {
            run.converged = true;
            break;
        }
        run.final_c = step.c_next;
        t += options.dt;
    }
    Ok(run)
}

/// Trajectory CSV: `t,energy,max_dC,min_C`, one row per logged step.
pub fn trajectory_csv(run: &AdaptationRun) -> String {
    let mut out = String::from("t,energy,max_dC,min_C\n");
    for k in 0..run.times.len() {
        let _ = writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e}",
            run.times[k], run.energies[k], run.max_dc[k], run.min_c[k]
        );
    }
    out
}

/// Conductivity snapshot CSV: `edge_i,edge_j,C`.
pub fn conductivity_csv(graph: &NetworkGraph, c: &[f64]) -> String {
    let mut out = String::from("edge_i,edge_j,C\n");
    for (e, edge) in graph.edges.iter().enumerate() {
        let _ = writeln!(out, "{},{},{:.12e}", edge.i, edge.j, c[e]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_triangulation, compute_diamonds, Rect};

    fn single_edge_graph() -> NetworkGraph {
        NetworkGraph::from_parts(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)],
            vec![(0, 1, 1.0, 1.0)],
        )
        .unwrap()
    }

    fn triangle_graph() -> NetworkGraph {
        NetworkGraph::from_parts(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.5, 1.0),
            ],
            vec![
                (0, 1, 1.0, 1.0),
                (1, 2, 1.0, 1.0),
                (0, 2, 1.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_edge_ohm_law() {
        let graph = single_edge_graph();
        let c = ConductivityVec::uniform(1, 1.0).unwrap();
        let s = SourceVec::new(vec![1.0, -1.0]).unwrap();
        let p = solve_kirchhoff(&graph, &c, &s, Weighting::Plain).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_three_vertex_solve() {
        // Dense 3x3 solve with the zero-mean constraint gives P = (1/3, 0, -1/3).
        let graph = triangle_graph();
        let c = ConductivityVec::uniform(3, 1.0).unwrap();
        let s = SourceVec::new(vec![1.0, 0.0, -1.0]).unwrap();
        let p = solve_kirchhoff(&graph, &c, &s, Weighting::Plain).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!((p[2] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_source_gives_zero_pressure() {
        let graph = triangle_graph();
        let c = ConductivityVec::uniform(3, 0.7).unwrap();
        let s = SourceVec::new(vec![0.0, 0.0, 0.0]).unwrap();
        let p = solve_kirchhoff(&graph, &c, &s, Weighting::Plain).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disconnected_positive_subgraph_is_rejected() {
        let graph = NetworkGraph::from_parts(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 0.0),
            ],
            vec![(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)],
        )
        .unwrap();
        // The middle edge has zero conductivity, splitting the sourced pair.
        let c = ConductivityVec::new(vec![1.0, 0.0]).unwrap();
        let s = SourceVec::new(vec![1.0, 0.0, -1.0]).unwrap();
        match solve_kirchhoff(&graph, &c, &s, Weighting::Plain) {
            Err(Error::DisconnectedNetwork { component, size }) => {
                assert_eq!(size, 1);
                assert_eq!(component, vec![2]);
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn unbalanced_source_is_rejected() {
        assert!(SourceVec::new(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn projected_constant_source_balances_exactly() {
        let mesh = build_structured_triangulation(3, 3, Rect::UNIT).unwrap();
        let s = project_source(&mesh, |_, _| 0.0);
        assert!(s.iter().all(|&v| v == 0.0));
        let s = project_source(&mesh, |x, _| x - 0.5);
        let sum: f64 = s.iter().sum();
        let norm1: f64 = s.iter().map(|v| v.abs()).sum();
        assert!(sum.abs() <= 1e-13 * norm1.max(1.0));
    }

    #[test]
    fn projected_source_inherits_antisymmetry() {
        let mesh = build_structured_triangulation(4, 4, Rect::UNIT).unwrap();
        let s = project_source(&mesh, |x, _| x - 0.5);
        // Pair vertices under the reflection x -> 1 - x.
        for (v, pos) in mesh.vertices.iter().enumerate() {
            let mirrored = mesh
                .vertices
                .iter()
                .position(|q| (q.x - (1.0 - pos.x)).abs() < 1e-12 && (q.y - pos.y).abs() < 1e-12)
                .unwrap();
            assert!((s[v] + s[mirrored]).abs() < 1e-13);
        }
    }

    #[test]
    fn discrete_energy_hand_value() {
        // Single edge, gamma = 1: E = C (ΔP/L)² L + M(C) L = 1 + 1 = 2.
        let graph = single_edge_graph();
        let c = ConductivityVec::uniform(1, 1.0).unwrap();
        let s = SourceVec::new(vec![1.0, -1.0]).unwrap();
        let p = solve_kirchhoff(&graph, &c, &s, Weighting::Plain).unwrap();
        let law = MetabolicLaw::power(1.0).unwrap();
        let e = discrete_energy(&graph, &c, &p, &law, Weighting::Plain);
        assert!((e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_conductivity_zero_energy() {
        let graph = triangle_graph();
        let law = MetabolicLaw::power(1.5).unwrap();
        let e = discrete_energy(
            &graph,
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            &law,
            Weighting::Plain,
        );
        assert_eq!(e, 0.0);
    }

    #[test]
    fn rescaled_energy_matches_plain_when_weights_coincide() {
        // vol(⋄)/L = 1 on every edge makes the two energies identical.
        let graph = single_edge_graph();
        let c = ConductivityVec::uniform(1, 0.8).unwrap();
        let law = MetabolicLaw::power(2.0).unwrap();
        let p = [0.3, -0.3];
        let plain = discrete_energy(&graph, &c, &p, &law, Weighting::Plain);
        let rescaled = discrete_energy(&graph, &c, &p, &law, Weighting::Rescaled);
        assert!((plain - rescaled).abs() < 1e-15);
    }

    #[test]
    fn energy_is_gauge_invariant() {
        let graph = triangle_graph();
        let c = [0.5, 1.5, 0.25];
        let law = MetabolicLaw::power(2.0).unwrap();
        let p = [0.2, -0.1, -0.1];
        let shifted: Vec<f64> = p.iter().map(|v| v + 7.0).collect();
        let e0 = discrete_energy(&graph, &c, &p, &law, Weighting::Plain);
        let e1 = discrete_energy(&graph, &c, &shifted, &law, Weighting::Plain);
        assert!((e0 - e1).abs() < 1e-12);
    }

    #[test]
    fn adaptation_fixed_point_is_stationary() {
        // (ΔP/L)² = 4 and M(s) = s²/2 with C = 4: the update vanishes.
        let graph = single_edge_graph();
        let law = MetabolicLaw::power(2.0).unwrap();
        // S = (4, -4) across a unit edge with C = 4 gives ΔP/L = 1... we need
        // (ΔP/L)² = 4, so drive with S = (8, -8): ΔP = S/C = 2.
        let c = ConductivityVec::uniform(1, 4.0).unwrap();
        let s = SourceVec::new(vec![8.0, -8.0]).unwrap();
        let step = adaptation_step(&graph, &c, &s, &law, 0.1, Weighting::Plain).unwrap();
        assert!(step.max_change < 1e-12);
        assert!((step.c_next[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn adaptation_euler_decay_step() {
        // Zero pressure, gamma = 2, dt = 0.1: one Euler step of dC/dt = -C.
        let graph = single_edge_graph();
        let law = MetabolicLaw::power(2.0).unwrap();
        let c = ConductivityVec::uniform(1, 1.0).unwrap();
        let s = SourceVec::new(vec![0.0, 0.0]).unwrap();
        let step = adaptation_step(&graph, &c, &s, &law, 0.1, Weighting::Plain).unwrap();
        assert!((step.c_next[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adaptation_clips_at_zero() {
        let graph = single_edge_graph();
        let law = MetabolicLaw::power(2.0).unwrap();
        let c = ConductivityVec::uniform(1, 0.05).unwrap();
        let s = SourceVec::new(vec![0.0, 0.0]).unwrap();
        let step = adaptation_step(&graph, &c, &s, &law, 2.0, Weighting::Plain).unwrap();
        assert_eq!(step.c_next[0], 0.0);
    }

    #[test]
    fn sub_linear_extinct_edge_stays_frozen() {
        let graph = single_edge_graph();
        let law = MetabolicLaw::power(0.5).unwrap();
        let c = ConductivityVec::uniform(1, 0.0).unwrap();
        let s = SourceVec::new(vec![1.0, -1.0]).unwrap();
        // The positive subgraph is empty, so a direct Kirchhoff solve would be
        // rejected; freeze handling is tested on the decoupled zero-source case.
        let s0 = SourceVec::new(vec![0.0, 0.0]).unwrap();
        let step = adaptation_step(&graph, &c, &s0, &law, 0.1, Weighting::Plain).unwrap();
        assert_eq!(step.c_next[0], 0.0);
        assert!(solve_kirchhoff(&graph, &c, &s, Weighting::Plain).is_err());
    }

    #[test]
    fn run_decays_to_zero_with_monotone_energy() {
        let mesh = build_structured_triangulation(2, 2, Rect::UNIT).unwrap();
        let diamonds = compute_diamonds(&mesh);
        let graph = NetworkGraph::from_mesh(&mesh, &diamonds);
        let law = MetabolicLaw::power(2.0).unwrap();
        let c0 = ConductivityVec::uniform(graph.n_edges(), 1.0).unwrap();
        let s = SourceVec::new(vec![0.0; graph.n_vertices()]).unwrap();
        let options = AdaptationOptions {
            dt: 0.05,
            t_end: 20.0,
            weighting: Weighting::Plain,
            snapshot_every: 0,
        };
        let run = run_adaptation(&graph, c0, &s, &law, &options).unwrap();
        assert!(run.final_c.iter().all(|&c| c < 1e-6));
        for pair in run.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-14);
        }
        assert!(run.energies.last().unwrap() < &1e-10);
        // gamma = 2 has M'' = 1, so the reported stability hint is 1.
        assert_eq!(run.dt_stability_hint, Some(1.0));
    }

    #[test]
    fn stationary_initial_state_stays_constant() {
        let graph = single_edge_graph();
        let law = MetabolicLaw::power(2.0).unwrap();
        let c0 = ConductivityVec::uniform(1, 4.0).unwrap();
        let s = SourceVec::new(vec![8.0, -8.0]).unwrap();
        let options = AdaptationOptions {
            dt: 0.1,
            t_end: 5.0,
            weighting: Weighting::Plain,
            snapshot_every: 0,
        };
        let run = run_adaptation(&graph, c0, &s, &law, &options).unwrap();
        assert!(run.converged);
        assert!((run.final_c[0] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_mesh_antisymmetric_source_keeps_symmetric_conductivities() {
        let mesh = build_structured_triangulation(4, 4, Rect::UNIT).unwrap();
        let diamonds = compute_diamonds(&mesh);
        let graph = NetworkGraph::from_mesh(&mesh, &diamonds);
        let s = project_source(&mesh, |x, _| 4.0 * (x - 0.5));
        let law = MetabolicLaw::power(2.0).unwrap();
        let mut c = ConductivityVec::uniform(graph.n_edges(), 1.0).unwrap();

        // Edge map under the reflection x -> 1 - x.
        let mirror_vertex: Vec<usize> = mesh
            .vertices
            .iter()
            .map(|p| {
                mesh.vertices
                    .iter()
                    .position(|q| {
                        (q.x - (1.0 - p.x)).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12
                    })
                    .unwrap()
            })
            .collect();
        let mirror_edge: Vec<usize> = graph
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (mirror_vertex[e.i], mirror_vertex[e.j]);
                let key = (a.min(b), a.max(b));
                graph
                    .edges
                    .iter()
                    .position(|f| (f.i, f.j) == key)
                    .unwrap()
            })
            .collect();

        for _ in 0..20 {
            let step = adaptation_step(&graph, &c, &s, &law, 0.02, Weighting::Rescaled).unwrap();
            c = step.c_next;
            for e in 0..c.len() {
                assert!((c[e] - c[mirror_edge[e]]).abs() < 1e-12);
            }
        }
    }
}

//! Symmetric 2×2 tensors, tensor fields on meshes, the rank-one lift of edge
//! conductivities, and the metabolic law.

use crate::error::Error;
use crate::geometry::{Vec2, TRI_GAUSS3};
use crate::mesh::{DiamondMap, DiamondSplit, TriMesh};
use crate::Result;

/// A symmetric 2×2 tensor `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        SymTensor2 { a, b, c }
    }

    pub fn identity() -> Self {
        SymTensor2::new(1.0, 0.0, 1.0)
    }

    /// Outer product v ⊗ v.
    pub fn outer(v: Vec2) -> Self {
        SymTensor2::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    /// Frobenius norm sqrt(a² + 2b² + c²); the off-diagonal entry counts twice.
    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + 2.0 * self.b * self.b + self.c * self.c).sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn scale(&self, s: f64) -> Self {
        SymTensor2::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn add(&self, o: &SymTensor2) -> Self {
        SymTensor2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn sub(&self, o: &SymTensor2) -> Self {
        SymTensor2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }

    /// Apply the tensor to a vector.
    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.b * v.x + self.c * v.y)
    }

    /// Quadratic form vᵀ T v.
    pub fn quad_form(&self, v: Vec2) -> f64 {
        v.dot(self.apply(v))
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    /// Closed-form spectral decomposition with λ₁ ≥ λ₂.
    pub fn eig(&self) -> Eigen2 {
        let mean = 0.5 * (self.a + self.c);
        let half_diff = 0.5 * (self.a - self.c);
        let radius = (half_diff * half_diff + self.b * self.b).sqrt();
        let lambda1 = mean + radius;
        let lambda2 = mean - radius;
        let v1 = if self.b == 0.0 && half_diff == 0.0 {
            Vec2::new(1.0, 0.0)
        } else {
            // Pick the better-conditioned column of (T - λ₂ I).
            let cand_a = Vec2::new(self.a - lambda2, self.b);
            let cand_b = Vec2::new(self.b, self.c - lambda2);
            let v = if cand_a.norm_sq() >= cand_b.norm_sq() {
                cand_a
            } else {
                cand_b
            };
            v.scale(1.0 / v.norm())
        };
        Eigen2 {
            lambda1,
            lambda2,
            v1,
            v2: v1.rot90(),
        }
    }

    /// Smallest eigenvalue (no eigenvectors computed).
    pub fn min_eigenvalue(&self) -> f64 {
        let mean = 0.5 * (self.a + self.c);
        let half_diff = 0.5 * (self.a - self.c);
        mean - (half_diff * half_diff + self.b * self.b).sqrt()
    }

    /// Raise eigenvalues below `floor` to `floor`, keeping eigenvectors.
    pub fn clamp_min_eigenvalue(&self, floor: f64) -> SymTensor2 {
        let e = self.eig();
        if e.lambda2 >= floor {
            return *self;
        }
        let l1 = e.lambda1.max(floor);
        let l2 = floor;
        let o1 = SymTensor2::outer(e.v1);
        let o2 = SymTensor2::outer(e.v2);
        o1.scale(l1).add(&o2.scale(l2))
    }
}

/// Eigen pair of a symmetric 2×2 tensor, λ₁ ≥ λ₂, orthonormal eigenvectors.
#[derive(Debug, Clone, Copy)]
pub struct Eigen2 {
    pub lambda1: f64,
    pub lambda2: f64,
    pub v1: Vec2,
    pub v2: Vec2,
}

impl Eigen2 {
    /// Q Λ Qᵀ.
    pub fn reconstruct(&self) -> SymTensor2 {
        SymTensor2::outer(self.v1)
            .scale(self.lambda1)
            .add(&SymTensor2::outer(self.v2).scale(self.lambda2))
    }
}

/// One tensor per triangle (piecewise constant field).
#[derive(Debug, Clone)]
pub struct CellTensorField(pub Vec<SymTensor2>);

impl CellTensorField {
    pub fn constant(n: usize, t: SymTensor2) -> Self {
        CellTensorField(vec![t; n])
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, SymTensor2::ZERO)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sample a smooth tensor field with the per-triangle 3-point Gauss average.
    pub fn from_smooth(mesh: &TriMesh, f: impl Fn(f64, f64) -> SymTensor2) -> Self {
        let cells = (0..mesh.n_triangles())
            .map(|t| {
                let [p0, p1, p2] = mesh.tri_vertices(t);
                let mut acc = SymTensor2::ZERO;
                for bary in TRI_GAUSS3 {
                    let p = p0.scale(bary[0]) + p1.scale(bary[1]) + p2.scale(bary[2]);
                    acc = acc.add(&f(p.x, p.y));
                }
                acc.scale(1.0 / 3.0)
            })
            .collect();
        CellTensorField(cells)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .iter()
            .map(|t| t.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}

/// One tensor per vertex. When used with Dirichlet boundary conditions the
/// boundary vertices hold the zero tensor.
#[derive(Debug, Clone)]
pub struct NodalTensorField(pub Vec<SymTensor2>);

impl NodalTensorField {
    pub fn zero(n: usize) -> Self {
        NodalTensorField(vec![SymTensor2::ZERO; n])
    }

    pub fn from_fn(mesh: &TriMesh, f: impl Fn(f64, f64) -> SymTensor2) -> Self {
        NodalTensorField(mesh.vertices.iter().map(|v| f(v.x, v.y)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Zero the tensors on boundary vertices (Dirichlet trace).
    pub fn apply_zero_boundary(&mut self, mesh: &TriMesh) {
        for (i, &on_boundary) in mesh.boundary_vertex.iter().enumerate() {
            if on_boundary {
                self.0[i] = SymTensor2::ZERO;
            }
        }
    }

    /// Average the three vertex tensors of each triangle.
    pub fn to_cells(&self, mesh: &TriMesh) -> CellTensorField {
        let cells = mesh
            .triangles
            .iter()
            .map(|tri| {
                self.0[tri[0]]
                    .add(&self.0[tri[1]])
                    .add(&self.0[tri[2]])
                    .scale(1.0 / 3.0)
            })
            .collect();
        CellTensorField(cells)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .iter()
            .map(|t| t.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Metabolic cost law M(s) = s^γ / γ with a regularization floor for the
/// Frobenius norm in denominators near extinction.
#[derive(Debug, Clone, Copy)]
pub struct MetabolicLaw {
    pub gamma: f64,
    pub eps0: f64,
}

impl MetabolicLaw {
    pub const DEFAULT_FLOOR: f64 = 1e-12;

    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(MetabolicLaw {
            gamma,
            eps0: Self::DEFAULT_FLOOR,
        })
    }

    pub fn with_floor(gamma: f64, eps0: f64) -> Result<Self> {
        if !(eps0 >= 0.0) {
            return Err(Error::Parameter(format!(
                "regularization floor must be nonnegative, got {eps0}"
            )));
        }
        let mut law = Self::power(gamma)?;
        law.eps0 = eps0;
        Ok(law)
    }

    /// M(s) = s^γ / γ.
    pub fn value(&self, s: f64) -> f64 {
        s.powf(self.gamma) / self.gamma
    }

    /// M′(s) = s^(γ−1). At s = 0 this is 0 for γ > 1, 1 for γ = 1 and +∞ for γ < 1.
    pub fn mprime(&self, s: f64) -> f64 {
        s.powf(self.gamma - 1.0)
    }

    /// M″(s) = (γ−1) s^(γ−2).
    pub fn mpp(&self, s: f64) -> f64 {
        (self.gamma - 1.0) * s.powf(self.gamma - 2.0)
    }

    /// m(s) = M′(s)/s = s^(γ−2).
    pub fn slope_ratio(&self, s: f64) -> f64 {
        s.powf(self.gamma - 2.0)
    }
}

/// The metabolic force M′(|T|)/|T| · T with the extinction conventions:
/// the zero tensor maps to zero for γ ≥ 1 (the continuous limit), and for
/// γ < 1 a tensor at or below the regularization floor is frozen — `None`
/// signals that the caller must keep the state at zero.
pub fn metabolic_force(t: &SymTensor2, law: &MetabolicLaw) -> Option<SymTensor2> {
    let norm = t.frobenius();
    if law.gamma < 1.0 && norm <= law.eps0 {
        return None;
    }
    if norm == 0.0 {
        return Some(SymTensor2::ZERO);
    }
    let coef = law.slope_ratio(norm.max(law.eps0));
    Some(t.scale(coef))
}

/// Lift edge conductivities to the piecewise-constant rank-one tensor field on
/// the centroid-split triangulation: the tensor on every half-diamond of edge
/// (i, j) is 𝒞_ij · ê ⊗ ê with ê the unit edge direction.
pub fn lift_edge_conductivities(
    split: &DiamondSplit,
    diamonds: &DiamondMap,
    conductivities: &[f64],
) -> CellTensorField {
    let cells = split
        .parent_edge
        .iter()
        .map(|&e| SymTensor2::outer(diamonds.directions[e]).scale(conductivities[e]))
        .collect();
    CellTensorField(cells)
}

/// The exact per-parent-triangle average of the lifted field: each of the
/// three half-diamonds covers exactly a third of the triangle, so the average
/// is (1/3) Σ_e 𝒞_e ê⊗ê over the triangle's edges. For positive conductivities
/// this tensor is uniformly positive definite, which is what the assembled
/// Poisson problem requires.
pub fn averaged_lift(
    mesh: &TriMesh,
    diamonds: &DiamondMap,
    conductivities: &[f64],
) -> CellTensorField {
    let cells = mesh
        .tri_edges
        .iter()
        .map(|edges| {
            let mut acc = SymTensor2::ZERO;
            for &e in edges {
                acc = acc.add(&SymTensor2::outer(diamonds.directions[e]).scale(conductivities[e]));
            }
            acc.scale(1.0 / 3.0)
        })
        .collect();
    CellTensorField(cells)
}

//! Legacy-VTK ASCII snapshots (unstructured triangle grids).
//!
//! Tensor fields are written as a 3-component array (a, b, c) together with
//! the derived eigenvalue and Frobenius-norm arrays; pressure snapshots carry
//! the vertex values and the per-cell gradient.

use std::fmt::Write as _;

use crate::fem::PressureField;
use crate::mesh::TriMesh;
use crate::tensor::{CellTensorField, NodalTensorField, SymTensor2};

fn header(mesh: &TriMesh, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.12e} {:.12e} 0", v.x, v.y);
    }
    let m = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {m} {}", 4 * m);
    for tri in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(out, "5");
    }
    out
}

fn tensor_field_block(out: &mut String, tensors: &[SymTensor2]) {
    let n = tensors.len();
    let _ = writeln!(out, "FIELD tensor_data 4");
    let _ = writeln!(out, "components 3 {n} double");
    for t in tensors {
        let _ = writeln!(out, "{:.12e} {:.12e} {:.12e}", t.a, t.b, t.c);
    }
    let _ = writeln!(out, "lambda1 1 {n} double");
    for t in tensors {
        let _ = writeln!(out, "{:.12e}", t.eig().lambda1);
    }
    let _ = writeln!(out, "lambda2 1 {n} double");
    for t in tensors {
        let _ = writeln!(out, "{:.12e}", t.eig().lambda2);
    }
    let _ = writeln!(out, "frobenius 1 {n} double");
    for t in tensors {
        let _ = writeln!(out, "{:.12e}", t.frobenius());
    }
}

/// Snapshot of a per-cell tensor field.
pub fn cell_tensor_vtk(mesh: &TriMesh, field: &CellTensorField, title: &str) -> String {
    let mut out = header(mesh, title);
    let _ = writeln!(out, "CELL_DATA {}", mesh.n_triangles());
    tensor_field_block(&mut out, &field.0);
    out
}

/// Snapshot of a per-vertex tensor field.
pub fn nodal_tensor_vtk(mesh: &TriMesh, field: &NodalTensorField, title: &str) -> String {
    let mut out = header(mesh, title);
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_vertices());
    tensor_field_block(&mut out, &field.0);
    out
}

/// Snapshot of a pressure field: vertex scalars plus per-cell gradients.
pub fn pressure_vtk(mesh: &TriMesh, pressure: &PressureField, title: &str) -> String {
    let mut out = header(mesh, title);
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_vertices());
    let _ = writeln!(out, "SCALARS pressure double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in &pressure.values {
        let _ = writeln!(out, "{v:.12e}");
    }
    let _ = writeln!(out, "CELL_DATA {}", mesh.n_triangles());
    let _ = writeln!(out, "VECTORS gradient double");
    for g in &pressure.gradients {
        let _ = writeln!(out, "{:.12e} {:.12e} 0", g.x, g.y);
    }
    out
}

//! Planar triangulations of polygonal domains and their per-edge diamond geometry.
//!
//! A diamond is the region of the domain associated with one edge. It is built
//! here barycentrically: connecting each triangle's centroid to its vertices
//! splits the triangle into three sub-triangles of exactly one third of its
//! area, one per edge, so the diamond of an interior edge is the union of two
//! such sub-triangles and the diamonds partition the domain exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::Error;
use crate::geometry::{centroid, signed_area, Vec2};
use crate::Result;

/// Axis-aligned rectangle used by the structured generator.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
}

/// An unoriented mesh edge with its adjacent triangles.
#[derive(Debug, Clone, Copy)]
pub struct MeshEdge {
    /// Endpoint vertex indices, smaller first.
    pub vertices: [usize; 2],
    /// First adjacent triangle.
    pub tri_a: usize,
    /// Second adjacent triangle; `None` on the boundary.
    pub tri_b: Option<usize>,
}

impl MeshEdge {
    pub fn is_boundary(&self) -> bool {
        self.tri_b.is_none()
    }
}

/// A validated planar triangulation.
///
/// Invariants established by the constructors: all triangles are
/// counter-clockwise with positive area, every edge is shared by at most two
/// triangles (boundary edges by exactly one), and the mesh is edge-connected.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<MeshEdge>,
    pub boundary_vertex: Vec<bool>,
    /// Per triangle, the edge index of side k (connecting local vertices k and k+1).
    pub tri_edges: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Build and validate; clockwise triangles are rejected.
    pub fn new(vertices: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<TriMesh> {
        let (mesh, reoriented) = TriMesh::new_reorienting(vertices, triangles)?;
        if let Some(&t) = reoriented.first() {
            return Err(Error::MeshValidation(format!(
                "triangle {t} has clockwise orientation"
            )));
        }
        Ok(mesh)
    }

    /// Build and validate, flipping clockwise triangles; returns the indices
    /// of the triangles that were reoriented.
    pub fn new_reorienting(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Result<(TriMesh, Vec<usize>)> {
        if vertices.len() < 3 {
            return Err(Error::InvalidGeometry(format!(
                "mesh needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidGeometry("mesh has no triangles".into()));
        }
        let n_v = vertices.len();
        let scale = vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
            .max(1e-30);

        let mut reoriented = Vec::new();
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= n_v {
                    return Err(Error::MeshValidation(format!(
                        "triangle {t} references vertex {v} but the mesh has {n_v} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshValidation(format!(
                    "triangle {t} repeats a vertex: {tri:?}"
                )));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {t} is degenerate (area {a:.3e})"
                )));
            }
            if a < 0.0 {
                tri.swap(1, 2);
                reoriented.push(t);
            }
        }

        // Edge table keyed by sorted endpoints.
        let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                edge_map.entry(key).or_default().push(t);
            }
        }
        let mut edges = Vec::with_capacity(edge_map.len());
        let mut edge_index: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for (key, tris) in &edge_map {
            if tris.len() > 2 {
                return Err(Error::MeshValidation(format!(
                    "edge {key:?} is shared by {} triangles",
                    tris.len()
                )));
            }
            edge_index.insert(*key, edges.len());
            edges.push(MeshEdge {
                vertices: *key,
                tri_a: tris[0],
                tri_b: tris.get(1).copied(),
            });
        }

        let tri_edges: Vec<[usize; 3]> = triangles
            .iter()
            .map(|tri| {
                let mut e = [0usize; 3];
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    e[k] = edge_index[&[a.min(b), a.max(b)]];
                }
                e
            })
            .collect();

        // Edge-connectivity of the triangle graph.
        let mut seen = vec![false; triangles.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = stack.pop() {
            for &e in &tri_edges[t] {
                let edge = &edges[e];
                for other in [Some(edge.tri_a), edge.tri_b].into_iter().flatten() {
                    if !seen[other] {
                        seen[other] = true;
                        count += 1;
                        stack.push(other);
                    }
                }
            }
        }
        if count != triangles.len() {
            return Err(Error::MeshValidation(format!(
                "mesh is disconnected: {count} of {} triangles reachable from triangle 0",
                triangles.len()
            )));
        }

        let mut boundary_vertex = vec![false; n_v];
        for edge in &edges {
            if edge.is_boundary() {
                boundary_vertex[edge.vertices[0]] = true;
                boundary_vertex[edge.vertices[1]] = true;
            }
        }

        Ok((
            TriMesh {
                vertices,
                triangles,
                edges,
                boundary_vertex,
                tri_edges,
            },
            reoriented,
        ))
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tri_vertices(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_vertices(t);
        signed_area(a, b, c)
    }

    pub fn tri_centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.tri_vertices(t);
        centroid(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.tri_area(t)).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (self.vertices[e.vertices[0]] - self.vertices[e.vertices[1]]).norm())
            .fold(0.0, f64::max)
    }

    /// Lumped vertex masses: the integral of each P1 hat function,
    /// one third of the area of the incident triangles.
    pub fn lumped_vertex_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_vertices()];
        for t in 0..self.n_triangles() {
            let third = self.tri_area(t) / 3.0;
            for &v in &self.triangles[t] {
                m[v] += third;
            }
        }
        m
    }
}

/// Per-edge diamond geometry.
#[derive(Debug, Clone)]
pub struct DiamondMap {
    /// Edge lengths L.
    pub lengths: Vec<f64>,
    /// Unit edge directions (from the smaller-index endpoint to the larger).
    pub directions: Vec<Vec2>,
    /// Diamond areas vol(⋄): one third of the adjacent triangle area(s).
    pub volumes: Vec<f64>,
}

/// Compute edge lengths, unit directions and diamond areas for a mesh.
///
/// Each triangle contributes one third of its area to each of its three
/// edges, so the diamond areas partition the total mesh area exactly.
pub fn compute_diamonds(mesh: &TriMesh) -> DiamondMap {
    let n_e = mesh.n_edges();
    let mut lengths = vec![0.0; n_e];
    let mut directions = vec![Vec2::ZERO; n_e];
    let mut volumes = vec![0.0; n_e];
    for (i, edge) in mesh.edges.iter().enumerate() {
        let d = mesh.vertices[edge.vertices[1]] - mesh.vertices[edge.vertices[0]];
        let l = d.norm();
        lengths[i] = l;
        directions[i] = d.scale(1.0 / l);
    }
    for t in 0..mesh.n_triangles() {
        let third = mesh.tri_area(t) / 3.0;
        for &e in &mesh.tri_edges[t] {
            volumes[e] += third;
        }
    }
    DiamondMap {
        lengths,
        directions,
        volumes,
    }
}

/// The centroid split of a mesh: three sub-triangles per parent triangle,
/// each associated with one parent edge (its half-diamond).
#[derive(Debug, Clone)]
pub struct DiamondSplit {
    /// The refined triangulation; sub-triangle `3t + k` covers side k of parent t.
    pub mesh: TriMesh,
    /// Parent-edge index of each sub-triangle.
    pub parent_edge: Vec<usize>,
    /// Parent-triangle index of each sub-triangle.
    pub parent_tri: Vec<usize>,
}

/// Split every triangle at its centroid into three sub-triangles.
pub fn diamond_split(mesh: &TriMesh) -> DiamondSplit {
    let n_v = mesh.n_vertices();
    let mut vertices = mesh.vertices.clone();
    vertices.extend((0..mesh.n_triangles()).map(|t| mesh.tri_centroid(t)));
    let mut triangles = Vec::with_capacity(3 * mesh.n_triangles());
    let mut parent_edge = Vec::with_capacity(3 * mesh.n_triangles());
    let mut parent_tri = Vec::with_capacity(3 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = n_v + t;
        for k in 0..3 {
            triangles.push([tri[k], tri[(k + 1) % 3], c]);
            parent_edge.push(mesh.tri_edges[t][k]);
            parent_tri.push(t);
        }
    }
    let split_mesh = TriMesh::new(vertices, triangles)
        .expect("centroid split of a valid mesh is a valid mesh");
    DiamondSplit {
        mesh: split_mesh,
        parent_edge,
        parent_tri,
    }
}

/// Uniform criss-cross triangulation of a rectangle: each cell is split by one
/// diagonal, alternating in a checkerboard pattern. Cell counts must be ≥ 1.
pub fn build_structured_triangulation(nx: usize, ny: usize, rect: Rect) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Parameter(format!(
            "cell counts must be at least 1, got nx={nx}, ny={ny}"
        )));
    }
    if !(rect.x1 > rect.x0) || !(rect.y1 > rect.y0) {
        return Err(Error::InvalidGeometry(format!(
            "degenerate rectangle [{}, {}] x [{}, {}]",
            rect.x0, rect.x1, rect.y0, rect.y1
        )));
    }
    let dx = (rect.x1 - rect.x0) / nx as f64;
    let dy = (rect.y1 - rect.y0) / ny as f64;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(
                rect.x0 + i as f64 * dx,
                rect.y0 + j as f64 * dy,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = id(i, j);
            let b = id(i + 1, j);
            let c = id(i + 1, j + 1);
            let d = id(i, j + 1);
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Result of loading a mesh file: the mesh plus any repair warnings.
#[derive(Debug)]
pub struct MeshLoad {
    pub mesh: TriMesh,
    pub warnings: Vec<String>,
}

/// Read the plain-text mesh format:
///
/// ```text
/// vertices N
/// x y          (N lines)
/// triangles M
/// i j k        (M lines, 0-based)
/// ```
///
/// `#` starts a comment. Clockwise triangles are reoriented with a warning.
pub fn read_mesh(reader: impl BufRead) -> Result<MeshLoad> {
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim().to_string();
        if !content.is_empty() {
            lines.push((idx + 1, content));
        }
    }
    let mut cursor = 0usize;
    let mut expect = |cursor: &mut usize| -> Result<(usize, String)> {
        if *cursor >= lines.len() {
            return Err(Error::MeshParse {
                line: lines.last().map(|(l, _)| *l).unwrap_or(0) + 1,
                message: "unexpected end of file".into(),
            });
        }
        let item = lines[*cursor].clone();
        *cursor += 1;
        Ok(item)
    };

    let (line_no, header) = expect(&mut cursor)?;
    let n_v = parse_count(&header, "vertices", line_no)?;
    let mut vertices = Vec::with_capacity(n_v);
    for _ in 0..n_v {
        let (line_no, text) = expect(&mut cursor)?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::MeshParse {
                line: line_no,
                message: format!("expected `x y`, got `{text}`"),
            });
        }
        let x = parse_f64(parts[0], line_no)?;
        let y = parse_f64(parts[1], line_no)?;
        vertices.push(Vec2::new(x, y));
    }

    let (line_no, header) = expect(&mut cursor)?;
    let n_t = parse_count(&header, "triangles", line_no)?;
    let mut triangles = Vec::with_capacity(n_t);
    for _ in 0..n_t {
        let (line_no, text) = expect(&mut cursor)?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::MeshParse {
                line: line_no,
                message: format!("expected `i j k`, got `{text}`"),
            });
        }
        let mut tri = [0usize; 3];
        for (slot, part) in tri.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| Error::MeshParse {
                line: line_no,
                message: format!("invalid vertex index `{part}`"),
            })?;
        }
        triangles.push(tri);
    }
    if cursor != lines.len() {
        return Err(Error::MeshParse {
            line: lines[cursor].0,
            message: "trailing content after triangle list".into(),
        });
    }

    let (mesh, reoriented) = TriMesh::new_reorienting(vertices, triangles)?;
    let warnings = reoriented
        .iter()
        .map(|t| format!("triangle {t} was clockwise and has been reoriented"))
        .collect();
    Ok(MeshLoad { mesh, warnings })
}

fn parse_count(text: &str, keyword: &str, line: usize) -> Result<usize> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 2 || parts[0] != keyword {
        return Err(Error::MeshParse {
            line,
            message: format!("expected `{keyword} N`, got `{text}`"),
        });
    }
    parts[1].parse().map_err(|_| Error::MeshParse {
        line,
        message: format!("invalid count `{}`", parts[1]),
    })
}

fn parse_f64(text: &str, line: usize) -> Result<f64> {
    text.parse().map_err(|_| Error::MeshParse {
        line,
        message: format!("invalid number `{text}`"),
    })
}

/// Write the plain-text mesh format. Coordinates use Rust's shortest
/// round-trip float formatting, so save/load reproduces them bit-exactly.
pub fn write_mesh(mesh: &TriMesh, mut writer: impl Write) -> Result<()> {
    writeln!(writer, "vertices {}", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(writer, "{} {}", v.x, v.y)?;
    }
    writeln!(writer, "triangles {}", mesh.n_triangles())?;
    for tri in &mesh.triangles {
        writeln!(writer, "{} {} {}", tri[0], tri[1], tri[2])?;
    }
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<MeshLoad> {
    let file = std::fs::File::open(path)?;
    read_mesh(std::io::BufReader::new(file))
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mesh(mesh, &mut file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(nx: usize, ny: usize) -> TriMesh {
        build_structured_triangulation(nx, ny, Rect::UNIT).unwrap()
    }

    #[test]
    fn minimal_split_counts() {
        let mesh = unit_square(1, 1);
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.n_edges(), 5);
    }

    #[test]
    fn two_by_two_counts_satisfy_euler() {
        // Expected edge count from Euler's formula for a planar disc:
        // V - E + F = 1 with F = 8 faces and V = 9 gives E = 16.
        let mesh = unit_square(2, 2);
        assert_eq!(mesh.n_vertices(), 9);
        assert_eq!(mesh.n_triangles(), 8);
        assert_eq!(mesh.n_edges(), 16);
    }

    #[test]
    fn euler_relation_holds_for_generated_meshes() {
        for (nx, ny) in [(1, 1), (3, 2), (4, 4), (7, 3)] {
            let mesh = unit_square(nx, ny);
            let euler =
                mesh.n_vertices() as i64 - mesh.n_edges() as i64 + mesh.n_triangles() as i64;
            assert_eq!(euler, 1, "nx={nx} ny={ny}");
        }
    }

    #[test]
    fn zero_cells_is_an_error() {
        assert!(build_structured_triangulation(0, 1, Rect::UNIT).is_err());
    }

    #[test]
    fn degenerate_rectangle_is_an_error() {
        let rect = Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 0.0,
            y1: 1.0,
        };
        match build_structured_triangulation(1, 1, rect) {
            Err(Error::InvalidGeometry(_)) => {}
            other => panic!("expected invalid-geometry error, got {other:?}"),
        }
    }

    #[test]
    fn refinement_halves_max_edge_length() {
        let coarse = unit_square(4, 4);
        let fine = unit_square(8, 8);
        assert!((coarse.max_edge_length() / 2.0 - fine.max_edge_length()).abs() < 1e-12);
    }

    #[test]
    fn single_right_triangle_diamonds() {
        let mesh = TriMesh::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let diamonds = compute_diamonds(&mesh);
        for &v in &diamonds.volumes {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_square_diagonal_diamond() {
        let mesh = unit_square(1, 1);
        let diamonds = compute_diamonds(&mesh);
        let diag = mesh
            .edges
            .iter()
            .position(|e| !e.is_boundary())
            .expect("interior diagonal");
        // Both adjacent triangles have area 1/2; the diamond gets a third of each.
        assert!((diamonds.volumes[diag] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diamond_areas_partition_total_area() {
        let mesh = unit_square(5, 3);
        let diamonds = compute_diamonds(&mesh);
        let total: f64 = diamonds.volumes.iter().sum();
        assert!((total - mesh.total_area()).abs() <= 1e-12 * mesh.total_area());
    }

    #[test]
    fn centroid_split_preserves_area_and_maps_edges() {
        let mesh = unit_square(3, 3);
        let split = diamond_split(&mesh);
        assert_eq!(split.mesh.n_triangles(), 3 * mesh.n_triangles());
        assert!((split.mesh.total_area() - mesh.total_area()).abs() < 1e-12);
        let diamonds = compute_diamonds(&mesh);
        // Sub-triangle areas grouped by parent edge reproduce the diamond areas.
        let mut per_edge = vec![0.0; mesh.n_edges()];
        for (s, &e) in split.parent_edge.iter().enumerate() {
            per_edge[e] += split.mesh.tri_area(s);
        }
        for (a, b) in per_edge.iter().zip(&diamonds.volumes) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let mesh = unit_square(2, 2);
        let mut buffer = Vec::new();
        write_mesh(&mesh, &mut buffer).unwrap();
        let loaded = read_mesh(buffer.as_slice()).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.mesh.n_vertices(), mesh.n_vertices());
        for (a, b) in loaded.mesh.vertices.iter().zip(&mesh.vertices) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(loaded.mesh.triangles, mesh.triangles);
    }

    #[test]
    fn out_of_range_index_is_reported() {
        let text = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 3\n";
        match read_mesh(text.as_bytes()) {
            Err(Error::MeshValidation(msg)) => assert!(msg.contains("vertex 3")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn clockwise_triangle_is_reoriented_with_warning() {
        let text = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\n";
        let loaded = read_mesh(text.as_bytes()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.mesh.tri_area(0) > 0.0);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "vertices 2\n0 0\nnot-a-number 1\n";
        match read_mesh(text.as_bytes()) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

//! Triangle meshes: construction, adjacency, differential quantities, and
//! the geometric losses used for shape-space training.
//!
//! Connectivity is fixed for the lifetime of a mesh; only vertex positions
//! move. The differentiable operations take vertex positions as a tape
//! value so gradients flow back to whatever produced them (raw vertices or
//! a shape decoder).

mod icosphere;
mod sampling;

pub use icosphere::build_icosphere;
pub use sampling::{draw_surface_samples, sample_surface, sample_surface_points, SurfaceDraw};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{Tape, Tensor, Var};
use crate::fmath;

#[derive(Debug, Clone, PartialEq)]
pub enum MeshError {
    FaceIndexOutOfRange { face: usize },
    DegenerateFace { face: usize },
    InvalidSubdivisionLevel { level: usize },
    ZeroAreaMesh,
    EmptyPointSet,
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::FaceIndexOutOfRange { face } => {
                write!(f, "face {} references a vertex out of range", face)
            }
            MeshError::DegenerateFace { face } => {
                write!(f, "face {} repeats a vertex index", face)
            }
            MeshError::InvalidSubdivisionLevel { level } => {
                write!(f, "subdivision level {} not supported (max 2)", level)
            }
            MeshError::ZeroAreaMesh => write!(f, "mesh has no surface area"),
            MeshError::EmptyPointSet => write!(f, "point set is empty"),
        }
    }
}

/// Vertices plus fixed face connectivity. Adjacency (face pairs across
/// shared edges, vertex 1-rings) is precomputed at construction.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    pub vertices: Tensor,
    pub faces: Vec<[u32; 3]>,
    adjacent_face_pairs: Vec<(u32, u32)>,
    vertex_neighbors: Vec<Vec<u32>>,
    non_manifold_or_boundary_edges: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Tensor, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        assert_eq!(vertices.shape.len(), 2, "vertices must be [N,3]");
        assert_eq!(vertices.shape[1], 3, "vertices must be [N,3]");
        let n = vertices.shape[0];
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(MeshError::FaceIndexOutOfRange { face: fi });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace { face: fi });
            }
        }

        // Edge map: sorted vertex pair -> incident faces.
        let mut edges: alloc::collections::BTreeMap<(u32, u32), Vec<u32>> =
            alloc::collections::BTreeMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                edges.entry(key).or_default().push(fi as u32);
            }
        }

        let mut pairs = Vec::new();
        let mut irregular = 0;
        let mut neighbors = vec![Vec::new(); n];
        for (&(a, b), fs) in &edges {
            if fs.len() == 2 {
                pairs.push((fs[0], fs[1]));
            } else {
                irregular += 1;
            }
            neighbors[a as usize].push(b);
            neighbors[b as usize].push(a);
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }

        Ok(TriangleMesh {
            vertices,
            faces,
            adjacent_face_pairs: pairs,
            vertex_neighbors: neighbors,
            non_manifold_or_boundary_edges: irregular,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.shape[0]
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacent_face_pairs.len() + self.non_manifold_or_boundary_edges
    }

    /// Enclosed 2-manifold: every edge shared by exactly two faces.
    pub fn is_closed_manifold(&self) -> bool {
        self.non_manifold_or_boundary_edges == 0 && !self.faces.is_empty()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    pub fn adjacent_face_pairs(&self) -> &[(u32, u32)] {
        &self.adjacent_face_pairs
    }

    pub fn vertex_neighbors(&self) -> &[Vec<u32>] {
        &self.vertex_neighbors
    }

    /// Faces whose current area is below `threshold`.
    pub fn degenerate_faces(&self, threshold: f64) -> Vec<u32> {
        degenerate_faces_of(&self.vertices.data, &self.faces, threshold)
    }

    /// Sum of current face areas.
    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| face_area(&self.vertices.data, f))
            .sum()
    }
}

pub(crate) fn face_area(vdata: &[f64], face: &[u32; 3]) -> f64 {
    let v0 = &vdata[face[0] as usize * 3..face[0] as usize * 3 + 3];
    let v1 = &vdata[face[1] as usize * 3..face[1] as usize * 3 + 3];
    let v2 = &vdata[face[2] as usize * 3..face[2] as usize * 3 + 3];
    let e1 = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
    0.5 * fmath::norm3(&fmath::cross3(&e1, &e2))
}

/// Geometric (unit) normal of one face from plain vertex data.
pub fn face_normal(vdata: &[f64], face: &[u32; 3]) -> [f64; 3] {
    let v0 = &vdata[face[0] as usize * 3..face[0] as usize * 3 + 3];
    let v1 = &vdata[face[1] as usize * 3..face[1] as usize * 3 + 3];
    let v2 = &vdata[face[2] as usize * 3..face[2] as usize * 3 + 3];
    let e1 = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
    fmath::normalize3(&fmath::cross3(&e1, &e2))
}

fn degenerate_faces_of(vdata: &[f64], faces: &[[u32; 3]], threshold: f64) -> Vec<u32> {
    faces
        .iter()
        .enumerate()
        .filter(|(_, f)| face_area(vdata, f) <= threshold)
        .map(|(i, _)| i as u32)
        .collect()
}

const DEGENERATE_AREA: f64 = 1e-12;

/// Unnormalized face normals (cross products of edge vectors) for all
/// faces, differentiable w.r.t. vertices. The magnitude is twice the face
/// area, which is exactly the weighting the vertex-normal average wants.
fn face_cross_products(tape: &mut Tape, verts: Var, faces: &[[u32; 3]]) -> Var {
    let i0: Vec<u32> = faces.iter().map(|f| f[0]).collect();
    let i1: Vec<u32> = faces.iter().map(|f| f[1]).collect();
    let i2: Vec<u32> = faces.iter().map(|f| f[2]).collect();
    let v0 = tape.gather_rows(verts, &i0);
    let v1 = tape.gather_rows(verts, &i1);
    let v2 = tape.gather_rows(verts, &i2);
    let e1 = tape.sub(v1, v0);
    let e2 = tape.sub(v2, v0);
    tape.cross_rows(e1, e2)
}

/// Area-weighted vertex normals, unit length, differentiable w.r.t. the
/// vertex positions. Zero-area faces are skipped; the returned count tells
/// the caller how many were dropped so it can warn.
pub fn vertex_normals(tape: &mut Tape, verts: Var, mesh: &TriangleMesh) -> (Var, usize) {
    let n = mesh.vertex_count();
    let f = mesh.face_count();
    let vdata = tape.value(verts).to_vec();
    let skipped = degenerate_faces_of(&vdata, &mesh.faces, DEGENERATE_AREA);

    let cross = face_cross_products(tape, verts, &mesh.faces);

    // Vertex/face incidence with degenerate columns zeroed.
    let mut inc = vec![0.0; n * f];
    let mut skip_iter = skipped.iter().peekable();
    for (fi, face) in mesh.faces.iter().enumerate() {
        if skip_iter.peek() == Some(&&(fi as u32)) {
            skip_iter.next();
            continue;
        }
        for &v in face {
            inc[v as usize * f + fi] = 1.0;
        }
    }
    let inc = tape.constant(vec![n, f], inc);
    let acc = tape.matmul(inc, cross);
    (tape.normalize_rows(acc, 1e-30), skipped.len())
}

/// Symmetric chamfer distance between two point sets: mean squared distance
/// to the nearest neighbor, both directions, summed. The nearest-neighbor
/// assignment is frozen per evaluation; gradients flow to both point sets
/// through the matched pairs.
pub fn chamfer_distance(tape: &mut Tape, a: Var, b: Var) -> Result<Var, MeshError> {
    let (ka, ca) = match tape.shape(a) {
        [r, c] => (*r, *c),
        s => panic!("chamfer expects [k,3] inputs, got {:?}", s),
    };
    let (kb, cb) = match tape.shape(b) {
        [r, c] => (*r, *c),
        s => panic!("chamfer expects [k,3] inputs, got {:?}", s),
    };
    assert_eq!((ca, cb), (3, 3), "chamfer expects [k,3] inputs");
    if ka == 0 || kb == 0 {
        return Err(MeshError::EmptyPointSet);
    }

    let adata = tape.value(a).to_vec();
    let bdata = tape.value(b).to_vec();
    let nn_ab = nearest_indices(&adata, &bdata);
    let nn_ba = nearest_indices(&bdata, &adata);

    let term_ab = {
        let matched = tape.gather_rows(b, &nn_ab);
        let d = tape.sub(a, matched);
        let sq = tape.sq_norm_rows(d);
        tape.mean(sq)
    };
    let term_ba = {
        let matched = tape.gather_rows(a, &nn_ba);
        let d = tape.sub(b, matched);
        let sq = tape.sq_norm_rows(d);
        tape.mean(sq)
    };
    Ok(tape.add(term_ab, term_ba))
}

fn nearest_indices(from: &[f64], to: &[f64]) -> Vec<u32> {
    let nf = from.len() / 3;
    let nt = to.len() / 3;
    let mut out = Vec::with_capacity(nf);
    for i in 0..nf {
        let p = &from[i * 3..i * 3 + 3];
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for j in 0..nt {
            let q = &to[j * 3..j * 3 + 3];
            let d = (p[0] - q[0]) * (p[0] - q[0])
                + (p[1] - q[1]) * (p[1] - q[1])
                + (p[2] - q[2]) * (p[2] - q[2]);
            if d < best_d {
                best_d = d;
                best = j as u32;
            }
        }
        out.push(best);
    }
    out
}

/// Normal-consistency plus Laplacian smoothness:
/// `w_normal * mean(1 - cos(n_f, n_g))` over adjacent face pairs plus
/// `w_lap * mean ||v - mean(neighbors(v))||^2` over vertices.
/// Degenerate faces drop out of the normal term.
pub fn regularization_loss(
    tape: &mut Tape,
    verts: Var,
    mesh: &TriangleMesh,
    w_normal: f64,
    w_lap: f64,
) -> Var {
    let vdata = tape.value(verts).to_vec();
    let n = mesh.vertex_count();

    // Normal consistency over face pairs whose faces both have area.
    let degenerate = degenerate_faces_of(&vdata, &mesh.faces, DEGENERATE_AREA);
    let pairs: Vec<(u32, u32)> = mesh
        .adjacent_face_pairs()
        .iter()
        .filter(|(f, g)| !degenerate.contains(f) && !degenerate.contains(g))
        .copied()
        .collect();

    let normal_term = if pairs.is_empty() {
        tape.constant_scalar(0.0)
    } else {
        let cross = face_cross_products(tape, verts, &mesh.faces);
        let normals = tape.normalize_rows(cross, 1e-30);
        let fa: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let fb: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let na = tape.gather_rows(normals, &fa);
        let nb = tape.gather_rows(normals, &fb);
        let cosines = tape.dot_rows(na, nb);
        let m = tape.mean(cosines);
        tape.affine(m, -1.0, 1.0)
    };

    // Laplacian: neighbor-mean matrix (rows of isolated vertices pass the
    // vertex through so their residual is zero).
    let mut avg = vec![0.0; n * n];
    for (v, nb) in mesh.vertex_neighbors().iter().enumerate() {
        if nb.is_empty() {
            avg[v * n + v] = 1.0;
        } else {
            let w = 1.0 / nb.len() as f64;
            for &u in nb {
                avg[v * n + u as usize] = w;
            }
        }
    }
    let avg = tape.constant(vec![n, n], avg);
    let mean_nb = tape.matmul(avg, verts);
    let lap = tape.sub(verts, mean_nb);
    let sq = tape.sq_norm_rows(lap);
    let lap_term = tape.mean(sq);

    let wn = tape.affine(normal_term, w_normal, 0.0);
    let wl = tape.affine(lap_term, w_lap, 0.0);
    tape.add(wn, wl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::rng::Rng;

    fn tape_with_mesh(mesh: &TriangleMesh) -> (Tape, Var) {
        let mut tape = Tape::new();
        let v = tape.input(&mesh.vertices);
        (tape, v)
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let mesh = build_icosphere(1).unwrap();
        let (mut tape, v) = tape_with_mesh(&mesh);
        let (normals, skipped) = vertex_normals(&mut tape, v, &mesh);
        assert_eq!(skipped, 0);
        let nd = tape.value(normals);
        for (nv, vv) in nd.chunks_exact(3).zip(mesh.vertices.data.chunks_exact(3)) {
            for k in 0..3 {
                assert!((nv[k] - vv[k]).abs() < 1e-6, "normal deviates from radial");
            }
        }
    }

    #[test]
    fn flat_fan_normals_point_up() {
        // Fan of 3 triangles around the origin in the z=0 plane, CCW.
        let verts = Tensor::new(
            vec![5, 3],
            vec![
                0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                -1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0,
            ],
        );
        let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4]];
        let mesh = TriangleMesh::new(verts, faces).unwrap();
        let (mut tape, v) = tape_with_mesh(&mesh);
        let (normals, _) = vertex_normals(&mut tape, v, &mesh);
        for nv in tape.value(normals).chunks_exact(3) {
            assert!((nv[2].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_normals_are_unit() {
        let mesh = build_icosphere(1).unwrap();
        let (mut tape, v) = tape_with_mesh(&mesh);
        let (normals, _) = vertex_normals(&mut tape, v, &mesh);
        for nv in tape.value(normals).chunks_exact(3) {
            let len = fmath::norm3(nv);
            assert!((len - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vertex_normals_grad_check() {
        let mesh = build_icosphere(0).unwrap();
        let mut x = mesh.vertices.clone();
        let mut rng = Rng::new(5);
        for v in x.data.iter_mut() {
            *v += rng.range(-0.05, 0.05);
        }
        let faces = mesh.faces.clone();
        let err = grad_check(
            |t, v| {
                let m2 = TriangleMesh::new(
                    Tensor::new(x.shape.clone(), t.value(v).to_vec()),
                    faces.clone(),
                )
                .unwrap();
                let (n, _) = vertex_normals(t, v, &m2);
                t.sum(n)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "rel error {}", err);
    }

    #[test]
    fn chamfer_identical_sets_is_zero() {
        let mut tape = Tape::new();
        let pts = Tensor::new(vec![3, 3], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let a = tape.input(&pts);
        let b = tape.input(&pts);
        let d = chamfer_distance(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(d)[0], 0.0);
    }

    #[test]
    fn chamfer_offset_points_hand_value() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1, 3], vec![0.0, 0.0, 0.0]);
        let b = tape.constant(vec![1, 3], vec![1.0, 0.0, 0.0]);
        let d = chamfer_distance(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(d)[0], 2.0); // 1^2 + 1^2
    }

    #[test]
    fn chamfer_translation_invariant_and_symmetric() {
        let mut rng = Rng::new(9);
        let mut pa = vec![0.0; 12];
        let mut pb = vec![0.0; 15];
        rng.fill_range(&mut pa, -1.0, 1.0);
        rng.fill_range(&mut pb, -1.0, 1.0);

        let eval = |a: &[f64], b: &[f64]| {
            let mut tape = Tape::new();
            let va = tape.constant(vec![a.len() / 3, 3], a.to_vec());
            let vb = tape.constant(vec![b.len() / 3, 3], b.to_vec());
            let d = chamfer_distance(&mut tape, va, vb).unwrap();
            tape.value(d)[0]
        };

        let base = eval(&pa, &pb);
        assert_eq!(base, eval(&pb, &pa), "chamfer must be symmetric");

        let t = [0.3, -0.7, 0.2];
        let shift = |p: &[f64]| -> Vec<f64> {
            p.chunks_exact(3).flat_map(|c| [c[0] + t[0], c[1] + t[1], c[2] + t[2]]).collect()
        };
        let shifted = eval(&shift(&pa), &shift(&pb));
        assert!((base - shifted).abs() < 1e-12, "translation changed chamfer");
    }

    #[test]
    fn chamfer_rejects_empty() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![0, 3], vec![]);
        let b = tape.constant(vec![1, 3], vec![0.0; 3]);
        assert!(chamfer_distance(&mut tape, a, b).is_err());
    }

    #[test]
    fn planar_grid_interior_laplacian_is_zero() {
        // Regular 3x3 grid; only the center vertex is interior, and it sits
        // exactly at the mean of its neighbors.
        let mut verts = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                verts.extend_from_slice(&[x as f64, y as f64, 0.0]);
            }
        }
        let faces = vec![
            [0, 1, 3],
            [1, 4, 3],
            [1, 2, 4],
            [2, 5, 4],
            [3, 4, 6],
            [4, 7, 6],
            [4, 5, 7],
            [5, 8, 7],
        ];
        let mesh = TriangleMesh::new(Tensor::new(vec![9, 3], verts), faces).unwrap();
        let (mut tape, v) = tape_with_mesh(&mesh);

        // Center vertex (index 4) residual specifically.
        let nb = &mesh.vertex_neighbors()[4];
        let mut mean = [0.0; 3];
        for &u in nb {
            for k in 0..3 {
                mean[k] += mesh.vertices.data[u as usize * 3 + k] / nb.len() as f64;
            }
        }
        for k in 0..3 {
            assert!((mean[k] - mesh.vertices.data[4 * 3 + k]).abs() < 1e-9);
        }

        // Flat mesh: normal-consistency term is exactly zero.
        let loss = regularization_loss(&mut tape, v, &mesh, 1.0, 0.0);
        assert!(tape.value(loss)[0].abs() < 1e-12);
    }

    #[test]
    fn regularizer_grad_check() {
        let mesh = build_icosphere(0).unwrap();
        let mut x = mesh.vertices.clone();
        let mut rng = Rng::new(17);
        for v in x.data.iter_mut() {
            *v += rng.range(-0.05, 0.05);
        }
        let faces = mesh.faces.clone();
        let template = TriangleMesh::new(x.clone(), faces).unwrap();
        let err = grad_check(
            |t, v| regularization_loss(t, v, &template, 0.1, 0.1),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "rel error {}", err);
    }

    #[test]
    fn smoothing_descent_reduces_regularizer() {
        // Perturbed icosphere: 50 Adam steps on the vertices must reduce
        // the regularization loss.
        use crate::autodiff::{Adam, AdamConfig};
        let mesh = build_icosphere(1).unwrap();
        let mut verts = mesh.vertices.clone().with_grad();
        let mut rng = Rng::new(23);
        for v in verts.data.iter_mut() {
            *v += rng.range(-0.1, 0.1);
        }

        let eval = |verts: &Tensor, tape: &mut Tape| -> (Var, Var) {
            let v = tape.input(verts);
            let loss = regularization_loss(tape, v, &mesh, 0.1, 0.1);
            (v, loss)
        };

        let mut tape0 = Tape::new();
        let (_, l0) = eval(&verts, &mut tape0);
        let initial = tape0.value(l0)[0];

        let mut adam = Adam::new(AdamConfig::with_lr(1e-2));
        for _ in 0..50 {
            let mut tape = Tape::new();
            let (v, loss) = eval(&verts, &mut tape);
            tape.backward(loss).unwrap();
            verts.accum_grad(tape.grad(v).unwrap());
            adam.step(&mut [&mut verts]).unwrap();
        }

        let mut tape1 = Tape::new();
        let (_, l1) = eval(&verts, &mut tape1);
        let the_end = tape1.value(l1)[0];
        assert!(the_end < initial, "descent failed: {} -> {}", initial, the_end);
    }
}

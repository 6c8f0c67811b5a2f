use alloc::vec::Vec;

use super::{face_area, MeshError, TriangleMesh};
use crate::autodiff::{Tape, Tensor, Var};
use crate::fmath;
use crate::rng::Rng;

/// Frozen randomness of one surface draw: which face each sample landed on
/// and where inside it. Reusing a draw against moving vertices keeps the
/// sampling differentiable (the barycentric combination is the only thing
/// gradients see).
#[derive(Clone, Debug)]
pub struct SurfaceDraw {
    pub faces: Vec<u32>,
    pub barys: Vec<[f64; 3]>,
}

/// Draw `k` face/barycentric pairs, faces weighted by current area,
/// barycentrics uniform over the triangle.
pub fn draw_surface_samples(
    vdata: &[f64],
    faces: &[[u32; 3]],
    k: usize,
    rng: &mut Rng,
) -> Result<SurfaceDraw, MeshError> {
    assert!(k >= 1, "sample count must be positive");
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for f in faces {
        total += face_area(vdata, f);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(MeshError::ZeroAreaMesh);
    }

    let mut out_faces = Vec::with_capacity(k);
    let mut barys = Vec::with_capacity(k);
    for _ in 0..k {
        let u = rng.uniform() * total;
        let fi = cumulative.partition_point(|&c| c < u).min(faces.len() - 1);
        out_faces.push(fi as u32);

        let r1 = rng.uniform();
        let r2 = rng.uniform();
        let s = fmath::sqrt(r1);
        barys.push([1.0 - s, s * (1.0 - r2), s * r2]);
    }
    Ok(SurfaceDraw { faces: out_faces, barys })
}

/// Materialize a draw against vertex positions on the tape: `k x 3` points,
/// differentiable w.r.t. the vertices.
pub fn sample_surface(tape: &mut Tape, verts: Var, faces: &[[u32; 3]], draw: &SurfaceDraw) -> Var {
    let k = draw.faces.len();
    let i0: Vec<u32> = draw.faces.iter().map(|&f| faces[f as usize][0]).collect();
    let i1: Vec<u32> = draw.faces.iter().map(|&f| faces[f as usize][1]).collect();
    let i2: Vec<u32> = draw.faces.iter().map(|&f| faces[f as usize][2]).collect();
    let v0 = tape.gather_rows(verts, &i0);
    let v1 = tape.gather_rows(verts, &i1);
    let v2 = tape.gather_rows(verts, &i2);

    let b0 = tape.constant(alloc::vec![k, 1], draw.barys.iter().map(|b| b[0]).collect());
    let b1 = tape.constant(alloc::vec![k, 1], draw.barys.iter().map(|b| b[1]).collect());
    let b2 = tape.constant(alloc::vec![k, 1], draw.barys.iter().map(|b| b[2]).collect());

    let p0 = tape.mul_col_broadcast(v0, b0);
    let p1 = tape.mul_col_broadcast(v1, b1);
    let p2 = tape.mul_col_broadcast(v2, b2);
    let p01 = tape.add(p0, p1);
    tape.add(p01, p2)
}

/// Plain-value convenience: `k` points sampled from the mesh surface,
/// deterministic in `seed`.
pub fn sample_surface_points(mesh: &TriangleMesh, k: usize, seed: u64) -> Result<Tensor, MeshError> {
    let mut rng = Rng::new(seed);
    let draw = draw_surface_samples(&mesh.vertices.data, &mesh.faces, k, &mut rng)?;
    let vdata = &mesh.vertices.data;
    let mut out = Vec::with_capacity(k * 3);
    for (fi, bary) in draw.faces.iter().zip(&draw.barys) {
        let f = &mesh.faces[*fi as usize];
        for c in 0..3 {
            let mut x = 0.0;
            for (vi, b) in f.iter().zip(bary) {
                x += b * vdata[*vi as usize * 3 + c];
            }
            out.push(x);
        }
    }
    Ok(Tensor::new(alloc::vec![k, 3], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;

    fn unit_right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            Tensor::new(
                alloc::vec![3, 3],
                alloc::vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            ),
            alloc::vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn empirical_mean_near_centroid() {
        let mesh = unit_right_triangle();
        let pts = sample_surface_points(&mesh, 10_000, 7).unwrap();
        let mut mean = [0.0; 3];
        for p in pts.data.chunks_exact(3) {
            for k in 0..3 {
                mean[k] += p[k] / 10_000.0;
            }
        }
        let centroid = [1.0 / 3.0, 1.0 / 3.0, 0.0];
        for k in 0..3 {
            assert!((mean[k] - centroid[k]).abs() < 0.02, "mean {:?}", mean);
        }
    }

    #[test]
    fn face_choice_is_area_weighted() {
        // Two triangles with area ratio 3:1.
        let verts = Tensor::new(
            alloc::vec![6, 3],
            alloc::vec![
                0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0, 0.0, // area 3
                10.0, 0.0, 0.0, 12.0, 0.0, 0.0, 10.0, 1.0, 0.0, // area 1
            ],
        );
        let mesh = TriangleMesh::new(verts, alloc::vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let mut rng = Rng::new(99);
        let draw = draw_surface_samples(&mesh.vertices.data, &mesh.faces, 10_000, &mut rng).unwrap();
        let big = draw.faces.iter().filter(|&&f| f == 0).count();
        let ratio = big as f64 / (10_000 - big) as f64;
        assert!((ratio - 3.0).abs() < 0.15, "ratio {}", ratio);
    }

    #[test]
    fn same_seed_same_samples() {
        let mesh = build_icosphere(1).unwrap();
        let a = sample_surface_points(&mesh, 100, 42).unwrap();
        let b = sample_surface_points(&mesh, 100, 42).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn zero_area_mesh_rejected() {
        let verts = Tensor::new(alloc::vec![3, 3], alloc::vec![0.0; 9]);
        let mesh = TriangleMesh::new(verts, alloc::vec![[0, 1, 2]]).unwrap();
        let mut rng = Rng::new(1);
        assert!(matches!(
            draw_surface_samples(&mesh.vertices.data, &mesh.faces, 10, &mut rng),
            Err(MeshError::ZeroAreaMesh)
        ));
    }

    #[test]
    fn tape_samples_match_plain_samples() {
        let mesh = build_icosphere(0).unwrap();
        let plain = sample_surface_points(&mesh, 64, 3).unwrap();

        let mut rng = Rng::new(3);
        let draw = draw_surface_samples(&mesh.vertices.data, &mesh.faces, 64, &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = tape.input(&mesh.vertices);
        let pts = sample_surface(&mut tape, v, &mesh.faces, &draw);
        for (a, b) in tape.value(pts).iter().zip(&plain.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

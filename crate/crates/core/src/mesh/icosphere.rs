use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{MeshError, TriangleMesh};
use crate::autodiff::Tensor;
use crate::fmath;

/// Unit icosphere with deterministic vertex order: the 12 icosahedron
/// vertices first, then midpoints in edge-sorted discovery order per level.
/// Levels 0/1/2 give 12/42/162 vertices — the "tens of vertices" regime the
/// primitives are designed for, so larger levels are rejected.
pub fn build_icosphere(level: usize) -> Result<TriangleMesh, MeshError> {
    if level > 2 {
        return Err(MeshError::InvalidSubdivisionLevel { level });
    }

    let phi = (1.0 + fmath::sqrt(5.0)) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| fmath::normalize3(v))
    .collect();

    let mut faces: Vec<[u32; 3]> = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mid = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>, mp: &mut BTreeMap<(u32, u32), u32>| {
                let key = if a < b { (a, b) } else { (b, a) };
                *mp.entry(key).or_insert_with(|| {
                    let va = verts[a as usize];
                    let vb = verts[b as usize];
                    let m = [
                        (va[0] + vb[0]) / 2.0,
                        (va[1] + vb[1]) / 2.0,
                        (va[2] + vb[2]) / 2.0,
                    ];
                    verts.push(fmath::normalize3(&m));
                    (verts.len() - 1) as u32
                })
            };
            let m01 = mid(f[0], f[1], &mut verts, &mut midpoints);
            let m12 = mid(f[1], f[2], &mut verts, &mut midpoints);
            let m20 = mid(f[2], f[0], &mut verts, &mut midpoints);
            next_faces.push([f[0], m01, m20]);
            next_faces.push([f[1], m12, m01]);
            next_faces.push([f[2], m20, m12]);
            next_faces.push([m01, m12, m20]);
        }
        faces = next_faces;
    }

    let data: Vec<f64> = verts.iter().flat_map(|v| v.iter().copied()).collect();
    let n = verts.len();
    TriangleMesh::new(Tensor::new(alloc::vec![n, 3], data), faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level0_is_an_icosahedron() {
        let m = build_icosphere(0).unwrap();
        assert_eq!(m.vertex_count(), 12);
        assert_eq!(m.face_count(), 20);
        assert_eq!(m.edge_count(), 30);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_closed_manifold());
    }

    #[test]
    fn level1_counts() {
        let m = build_icosphere(1).unwrap();
        assert_eq!(m.vertex_count(), 42);
        assert_eq!(m.face_count(), 80);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_closed_manifold());
    }

    #[test]
    fn level2_counts() {
        let m = build_icosphere(2).unwrap();
        assert_eq!(m.vertex_count(), 162);
        assert_eq!(m.face_count(), 320);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn vertices_on_unit_sphere() {
        for level in 0..=2 {
            let m = build_icosphere(level).unwrap();
            for v in m.vertices.data.chunks_exact(3) {
                assert!((fmath::norm3(v) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn level3_rejected() {
        assert!(matches!(
            build_icosphere(3),
            Err(MeshError::InvalidSubdivisionLevel { level: 3 })
        ));
    }

    #[test]
    fn deterministic_vertex_order() {
        let a = build_icosphere(2).unwrap();
        let b = build_icosphere(2).unwrap();
        assert_eq!(a.vertices.data, b.vertices.data);
        assert_eq!(a.faces, b.faces);
    }

    #[test]
    fn faces_wind_outward() {
        // For a convex body around the origin, each face normal must point
        // away from the center.
        let m = build_icosphere(1).unwrap();
        for f in &m.faces {
            let n = super::super::face_normal(&m.vertices.data, f);
            let c = f.iter().fold([0.0; 3], |acc, &i| {
                let v = &m.vertices.data[i as usize * 3..i as usize * 3 + 3];
                [acc[0] + v[0] / 3.0, acc[1] + v[1] / 3.0, acc[2] + v[2] / 3.0]
            });
            assert!(fmath::dot3(&n, &c) > 0.0, "face winding is inward");
        }
    }
}

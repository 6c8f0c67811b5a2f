use alloc::vec;
use alloc::vec::Vec;

use super::moller_trumbore;
use crate::fmath;

/// One world-space face owned by a primitive, with its vertices cached so
/// traversal never chases pointers back into the scene.
#[derive(Clone, Debug)]
pub struct FaceRef {
    pub prim: u32,
    pub face: u32,
    pub v0: [f64; 3],
    pub v1: [f64; 3],
    pub v2: [f64; 3],
}

impl FaceRef {
    fn centroid(&self) -> [f64; 3] {
        [
            (self.v0[0] + self.v1[0] + self.v2[0]) / 3.0,
            (self.v0[1] + self.v1[1] + self.v2[1]) / 3.0,
            (self.v0[2] + self.v1[2] + self.v2[2]) / 3.0,
        ]
    }

    /// Geometric unit normal by vertex winding.
    pub fn normal(&self) -> [f64; 3] {
        let e1 = [self.v1[0] - self.v0[0], self.v1[1] - self.v0[1], self.v1[2] - self.v0[2]];
        let e2 = [self.v2[0] - self.v0[0], self.v2[1] - self.v0[1], self.v2[2] - self.v0[2]];
        fmath::normalize3(&fmath::cross3(&e1, &e2))
    }
}

/// A ray-face intersection as the BVH reports it.
#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub prim: u32,
    pub face: u32,
    pub t: f64,
    /// Barycentric weights on (v0, v1, v2).
    pub bary: [f64; 3],
}

#[derive(Clone, Debug)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    /// Leaf: first face index. Internal: right-child index (nodes are laid
    /// out pre-order, so the left child is always `self + 1`).
    first: u32,
    /// 0 for internal nodes, face count for leaves.
    count: u32,
}

/// Median-split bounding volume hierarchy over one hierarchy level's faces.
/// Query results are defined to equal a brute-force scan of the same faces:
/// boxes are padded so float rounding can never drop a true hit.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    faces: Vec<FaceRef>,
}

const LEAF_SIZE: usize = 4;

pub fn build_bvh(faces: Vec<FaceRef>) -> Bvh {
    let mut bvh = Bvh { nodes: Vec::new(), faces };
    if bvh.faces.is_empty() {
        return bvh;
    }
    let n = bvh.faces.len();
    bvh.nodes.reserve(2 * n);
    build_node(&mut bvh.nodes, &mut bvh.faces, 0, n);
    bvh
}

fn face_bounds(f: &FaceRef) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in [&f.v0, &f.v1, &f.v2] {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    // Pad so slab-test rounding cannot reject a genuine hit.
    for k in 0..3 {
        let pad = 1e-12 * (1.0 + fmath::abs(lo[k]).max(fmath::abs(hi[k])));
        lo[k] -= pad;
        hi[k] += pad;
    }
    (lo, hi)
}

fn build_node(nodes: &mut Vec<Node>, faces: &mut [FaceRef], start: usize, count: usize) -> u32 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for f in &faces[start..start + count] {
        let (flo, fhi) = face_bounds(f);
        for k in 0..3 {
            lo[k] = lo[k].min(flo[k]);
            hi[k] = hi[k].max(fhi[k]);
        }
    }

    let index = nodes.len() as u32;
    nodes.push(Node { lo, hi, first: start as u32, count: count as u32 });

    if count <= LEAF_SIZE {
        return index;
    }

    // Split on the widest centroid axis at the median face.
    let mut axis = 0;
    let mut widest = -1.0;
    for k in 0..3 {
        let w = hi[k] - lo[k];
        if w > widest {
            widest = w;
            axis = k;
        }
    }
    let mid = count / 2;
    faces[start..start + count].select_nth_unstable_by(mid, |a, b| {
        a.centroid()[axis]
            .total_cmp(&b.centroid()[axis])
            .then_with(|| (a.prim, a.face).cmp(&(b.prim, b.face)))
    });

    let left = build_node(nodes, faces, start, mid);
    debug_assert_eq!(left, index + 1, "children follow their parent pre-order");
    let right = build_node(nodes, faces, start + mid, count - mid);
    nodes[index as usize].first = right;
    nodes[index as usize].count = 0;
    index
}

fn slab_hit(lo: &[f64; 3], hi: &[f64; 3], origin: &[f64; 3], inv_dir: &[f64; 3], t_near: f64) -> bool {
    let mut tmin = t_near;
    let mut tmax = f64::INFINITY;
    for k in 0..3 {
        let t1 = (lo[k] - origin[k]) * inv_dir[k];
        let t2 = (hi[k] - origin[k]) * inv_dir[k];
        // f64::min/max drop the NaN that 0 * inf produces, which keeps the
        // test conservative for axis-parallel rays on a box boundary.
        tmin = tmin.max(t1.min(t2));
        tmax = tmax.min(t1.max(t2));
    }
    tmin <= tmax
}

impl Bvh {
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[FaceRef] {
        &self.faces
    }

    pub fn face_by_ids(&self, prim: u32, face: u32) -> Option<&FaceRef> {
        self.faces.iter().find(|f| f.prim == prim && f.face == face)
    }

    /// Every intersection with `t > t_near`, sorted ascending by
    /// `(t, prim, face)`.
    pub fn all_hits(&self, origin: &[f64; 3], dir: &[f64; 3], t_near: f64) -> Vec<Hit> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() {
            return hits;
        }
        let inv = [1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]];
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if !slab_hit(&node.lo, &node.hi, origin, &inv, t_near) {
                continue;
            }
            if node.count > 0 {
                for f in &self.faces[node.first as usize..(node.first + node.count) as usize] {
                    if let Some((t, u, v)) = moller_trumbore(origin, dir, &f.v0, &f.v1, &f.v2, t_near)
                    {
                        hits.push(Hit {
                            prim: f.prim,
                            face: f.face,
                            t,
                            bary: [1.0 - u - v, u, v],
                        });
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(idx + 1);
            }
        }
        sort_hits(&mut hits);
        hits
    }

    /// The `j` nearest intersections (entry and exit faces both count).
    pub fn intersect_ray(&self, origin: &[f64; 3], dir: &[f64; 3], j: usize, t_near: f64) -> Vec<Hit> {
        assert!(j >= 1, "j must be at least 1");
        let mut hits = self.all_hits(origin, dir, t_near);
        hits.truncate(j);
        hits
    }
}

/// Brute-force reference: test every face. The oracle the BVH must match.
pub fn brute_force_hits(
    faces: &[FaceRef],
    origin: &[f64; 3],
    dir: &[f64; 3],
    t_near: f64,
) -> Vec<Hit> {
    let mut hits = Vec::new();
    for f in faces {
        if let Some((t, u, v)) = moller_trumbore(origin, dir, &f.v0, &f.v1, &f.v2, t_near) {
            hits.push(Hit { prim: f.prim, face: f.face, t, bary: [1.0 - u - v, u, v] });
        }
    }
    sort_hits(&mut hits);
    hits
}

fn sort_hits(hits: &mut [Hit]) {
    hits.sort_unstable_by(|a, b| {
        a.t.total_cmp(&b.t).then_with(|| (a.prim, a.face).cmp(&(b.prim, b.face)))
    });
}

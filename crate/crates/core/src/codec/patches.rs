use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::fmath;
use crate::mesh::TriangleMesh;
use crate::rng::Rng;

/// The five analytic local-structure families. Together they cover what
/// voxel-scale geometry is made of: flat pieces, creases, and curved
/// surfaces of either sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PatchFamily {
    Plane,
    DihedralCorner,
    Cylinder,
    SphericalCap,
    Saddle,
}

impl PatchFamily {
    pub const ALL: [PatchFamily; 5] = [
        PatchFamily::Plane,
        PatchFamily::DihedralCorner,
        PatchFamily::Cylinder,
        PatchFamily::SphericalCap,
        PatchFamily::Saddle,
    ];
}

#[derive(Clone, Debug)]
pub struct PatchEntry {
    pub mesh: TriangleMesh,
    pub family: PatchFamily,
    pub seed: u64,
}

/// Synthetic stand-in for a scanned local-structure collection: every entry
/// fits in the unit ball and is reproducible from `(n, seed)`, so the
/// database is never persisted.
#[derive(Clone, Debug)]
pub struct PatchDatabase {
    pub entries: Vec<PatchEntry>,
}

impl PatchDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Deterministic family cycle, weighted toward planes: voxel-scale urban
/// geometry is mostly flat, and scene fitting leans on off-center planes
/// far more than on the curved families.
const FAMILY_CYCLE: [PatchFamily; 8] = [
    PatchFamily::Plane,
    PatchFamily::DihedralCorner,
    PatchFamily::Plane,
    PatchFamily::Cylinder,
    PatchFamily::Plane,
    PatchFamily::SphericalCap,
    PatchFamily::Plane,
    PatchFamily::Saddle,
];

/// Per-entry parameters come from a forked stream so entry `i` is stable
/// regardless of `n`.
pub fn generate_patch_database(n: usize, seed: u64) -> PatchDatabase {
    assert!(n >= 1, "database needs at least one entry");
    let root = Rng::new(seed);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let family = FAMILY_CYCLE[i % FAMILY_CYCLE.len()];
        let entry_seed = seed.wrapping_add(i as u64);
        let mut rng = root.fork(i as u64 + 1);
        entries.push(PatchEntry { mesh: generate_patch(family, &mut rng), family, seed: entry_seed });
    }
    PatchDatabase { entries }
}

/// Grid resolution of the generated patches.
const GRID: usize = 7;

pub fn generate_patch(family: PatchFamily, rng: &mut Rng) -> TriangleMesh {
    let mut verts = grid_vertices(family, rng);
    random_rotate(&mut verts, rng);
    fit_in_unit_ball(&mut verts, rng);

    let faces = grid_faces(GRID, GRID);
    let n = verts.len() / 3;
    TriangleMesh::new(Tensor::new(vec![n, 3], verts), faces).expect("grid connectivity is valid")
}

fn grid_vertices(family: PatchFamily, rng: &mut Rng) -> Vec<f64> {
    let extent = rng.range(0.6, 1.0);
    let mut verts = Vec::with_capacity(GRID * GRID * 3);
    let height = |x: f64, y: f64, rng_params: &(f64, f64)| -> f64 {
        let (a, b) = *rng_params;
        match family {
            PatchFamily::Plane => 0.0,
            // Crease along x = 0; the odd grid keeps vertices on the fold.
            PatchFamily::DihedralCorner => a * fmath::abs(x),
            // Lateral cylinder surface, axis along y.
            PatchFamily::Cylinder => {
                let r = a;
                r - fmath::sqrt((r * r - x * x).max(0.0))
            }
            // Patch of a sphere of radius `a` seen as a height field.
            PatchFamily::SphericalCap => {
                let r = a;
                r - fmath::sqrt((r * r - x * x - y * y).max(0.0))
            }
            PatchFamily::Saddle => b * (x * x - y * y),
        }
    };
    let params = match family {
        PatchFamily::Plane => (0.0, 0.0),
        PatchFamily::DihedralCorner => (rng.range(0.4, 1.6), 0.0),
        PatchFamily::Cylinder => (rng.range(1.05, 2.5) * extent, 0.0),
        PatchFamily::SphericalCap => (rng.range(1.45, 3.0) * extent, 0.0),
        PatchFamily::Saddle => (0.0, rng.range(0.4, 1.2)),
    };
    for iy in 0..GRID {
        for ix in 0..GRID {
            let x = extent * (2.0 * ix as f64 / (GRID - 1) as f64 - 1.0);
            let y = extent * (2.0 * iy as f64 / (GRID - 1) as f64 - 1.0);
            verts.extend_from_slice(&[x, y, height(x, y, &params)]);
        }
    }
    verts
}

fn grid_faces(nx: usize, ny: usize) -> Vec<[u32; 3]> {
    let mut faces = Vec::with_capacity((nx - 1) * (ny - 1) * 2);
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let a = (iy * nx + ix) as u32;
            let b = a + 1;
            let c = a + nx as u32;
            let d = c + 1;
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    faces
}

fn random_rotate(verts: &mut [f64], rng: &mut Rng) {
    let yaw = rng.range(0.0, core::f64::consts::TAU);
    let pitch = rng.range(-1.2, 1.2);
    let roll = rng.range(0.0, core::f64::consts::TAU);
    let (sy, cy) = (fmath::sin(yaw), fmath::cos(yaw));
    let (sp, cp) = (fmath::sin(pitch), fmath::cos(pitch));
    let (sr, cr) = (fmath::sin(roll), fmath::cos(roll));
    // R = Rz(yaw) * Ry(pitch) * Rx(roll), row-major.
    let r = [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ];
    for v in verts.chunks_exact_mut(3) {
        let p = [v[0], v[1], v[2]];
        for (i, row) in r.iter().enumerate() {
            v[i] = fmath::dot3(row, &p);
        }
    }
}

fn fit_in_unit_ball(verts: &mut [f64], rng: &mut Rng) {
    // Center on the bounding-box midpoint, pick how far off-center the
    // patch should sit, then scale it into the remaining radius. Surfaces
    // that cut the ball far from its center matter as much as centered
    // ones: a primitive fitting a wall or ground plane sees exactly that
    // geometry, so the offset distance is sampled explicitly instead of
    // being whatever scaling slack leaves over.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in verts.chunks_exact(3) {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    for v in verts.chunks_exact_mut(3) {
        for k in 0..3 {
            v[k] -= mid[k];
        }
    }

    let offset_dist = rng.range(0.0, 0.65);
    let budget = fmath::sqrt((0.97f64 * 0.97 - offset_dist * offset_dist).max(0.01));
    let target = budget * rng.range(0.55, 1.0);
    let max_norm = verts.chunks_exact(3).map(fmath::norm3).fold(0.0f64, f64::max);
    let scale = if max_norm > 0.0 { target / max_norm } else { 1.0 };
    for v in verts.iter_mut() {
        *v *= scale;
    }

    let dir = [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)];
    let n = fmath::norm3(&dir).max(1e-12);
    for v in verts.chunks_exact_mut(3) {
        for k in 0..3 {
            v[k] += dir[k] / n * offset_dist;
        }
    }

    // The budget above assumes extent perpendicular to the offset; enforce
    // the ball constraint exactly with a final similarity rescale.
    let max_after = verts.chunks_exact(3).map(fmath::norm3).fold(0.0f64, f64::max);
    if max_after > 0.97 {
        let s = 0.97 / max_after;
        for v in verts.iter_mut() {
            *v *= s;
        }
    }
}

//! Scene construction: point-cloud voxelization at hierarchical sizes, one
//! mesh primitive per occupied voxel, vertex radiance features, and scene
//! editing (primitive removal/insertion, feature edits).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{Tape, Tensor};
use crate::codec::{decode_offsets, initial_latent, DecoderParams, LATENT_DIM};
use crate::fmath;
use crate::mesh::TriangleMesh;
use crate::radiance::{positional_encode_vec, RadianceMlp};
use crate::raster::{build_bvh, Bvh, FaceRef};

#[derive(Debug, Clone, PartialEq)]
pub enum SceneError {
    NonFinitePoints,
    NonIncreasingSizes,
    /// Point cloud produced no occupied voxel at any level.
    NoOccupiedVoxels,
    /// feature_dim must equal 3 + 6 * feature_init_freq.
    FeatureDimMismatch { expected: usize, got: usize },
    /// Donor scene differs in template, decoder, features, or hierarchy.
    IncompatibleDonor(&'static str),
    ConfigMismatch(&'static str),
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::NonFinitePoints => write!(f, "point cloud contains non-finite values"),
            SceneError::NonIncreasingSizes => {
                write!(f, "hierarchy voxel sizes must be strictly increasing")
            }
            SceneError::NoOccupiedVoxels => {
                write!(f, "no occupied voxels at any hierarchy level; is the cloud empty?")
            }
            SceneError::FeatureDimMismatch { expected, got } => {
                write!(f, "feature dim {} does not match encoding dim {}", got, expected)
            }
            SceneError::IncompatibleDonor(why) => write!(f, "incompatible donor scene: {}", why),
            SceneError::ConfigMismatch(why) => write!(f, "invalid scene config: {}", why),
        }
    }
}

/// Dense positions in meters, world frame.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Tensor,
}

impl PointCloud {
    pub fn new(points: Vec<f64>) -> Result<Self, SceneError> {
        assert_eq!(points.len() % 3, 0, "points must be flat xyz triples");
        if points.iter().any(|p| !p.is_finite()) {
            return Err(SceneError::NonFinitePoints);
        }
        let n = points.len() / 3;
        Ok(PointCloud { points: Tensor::new(vec![n, 3], points) })
    }

    pub fn len(&self) -> usize {
        self.points.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis-aligned bounds; `None` for an empty cloud.
    pub fn bbox(&self) -> Option<Aabb> {
        if self.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.points.data.chunks_exact(3) {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some(Aabb { lo, hi })
    }
}

/// Occupancy at one voxel size: the set of integer cells `floor(p / size)`
/// that contain at least one input point.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub voxel_size: f64,
    pub occupied: BTreeSet<[i64; 3]>,
}

/// Floor-convention voxelization; a point exactly on a boundary belongs to
/// the higher cell (floor(0.5/0.5) = 1).
pub fn voxelize(pc: &PointCloud, size: f64) -> VoxelGrid {
    assert!(size > 0.0, "voxel size must be positive");
    let mut occupied = BTreeSet::new();
    for p in pc.points.data.chunks_exact(3) {
        occupied.insert([
            fmath::floor(p[0] / size) as i64,
            fmath::floor(p[1] / size) as i64,
            fmath::floor(p[2] / size) as i64,
        ]);
    }
    VoxelGrid { voxel_size: size, occupied }
}

/// World-space center of a voxel cell.
pub fn voxel_center(cell: &[i64; 3], size: f64) -> [f64; 3] {
    [
        (cell[0] as f64 + 0.5) * size,
        (cell[1] as f64 + 0.5) * size,
        (cell[2] as f64 + 0.5) * size,
    ]
}

/// Axis-aligned box, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }
}

/// How primitive vertices are produced from their parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeMode {
    /// Vertices decoded from the unit latent code (the full method).
    Latent,
    /// Free per-vertex offsets, no latent space (ablation).
    DirectOffsets,
    /// The raw sphere template, no shape optimization (ablation).
    TemplateOnly,
}

/// One mesh primitive: a latent code, a world placement, and per-vertex
/// radiance features. World vertices are re-decoded on every access, so a
/// stale read after a latent update is impossible by construction; the
/// geometry version lets batch passes (BVH build, ray caches) know when
/// their own hoisted copies expired.
#[derive(Clone, Debug)]
pub struct Primitive {
    latent: Tensor,
    direct_offsets: Option<Tensor>,
    center: [f64; 3],
    radius: f64,
    pub features: Tensor,
    geom_version: u64,
}

impl Primitive {
    pub fn new(center: [f64; 3], radius: f64, vertex_count: usize, feature_dim: usize) -> Self {
        let mut latent = initial_latent();
        latent.requires_grad = true;
        latent.grad = Some(vec![0.0; LATENT_DIM]);
        Primitive {
            latent,
            direct_offsets: None,
            center,
            radius,
            features: Tensor::zeros(vec![vertex_count, feature_dim]).with_grad(),
            geom_version: 1,
        }
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn geometry_version(&self) -> u64 {
        self.geom_version
    }

    pub fn translate(&mut self, offset: &[f64; 3]) {
        for k in 0..3 {
            self.center[k] += offset[k];
        }
        self.geom_version += 1;
    }

    pub fn latent(&self) -> &Tensor {
        &self.latent
    }

    /// Mutable latent access bumps the geometry version.
    pub fn latent_mut(&mut self) -> &mut Tensor {
        self.geom_version += 1;
        &mut self.latent
    }

    /// Allocate free per-vertex offsets for the direct-optimization
    /// ablation (zero-initialized, trainable).
    pub fn enable_direct_offsets(&mut self, vertex_count: usize) {
        if self.direct_offsets.is_none() {
            self.direct_offsets = Some(Tensor::zeros(vec![vertex_count, 3]).with_grad());
            self.geom_version += 1;
        }
    }

    pub fn direct_offsets(&self) -> Option<&Tensor> {
        self.direct_offsets.as_ref()
    }

    pub fn direct_offsets_mut(&mut self) -> Option<&mut Tensor> {
        self.geom_version += 1;
        self.direct_offsets.as_mut()
    }

    /// World vertices under the given shape mode, decoded from the current
    /// parameters.
    pub fn world_vertices(
        &self,
        mode: ShapeMode,
        decoder: &DecoderParams,
        template: &TriangleMesh,
    ) -> Vec<f64> {
        let n = template.vertex_count();
        let base: Vec<f64> = match mode {
            ShapeMode::TemplateOnly => template.vertices.data.clone(),
            ShapeMode::DirectOffsets => {
                let off = self
                    .direct_offsets
                    .as_ref()
                    .expect("direct offsets enabled in DirectOffsets mode");
                template.vertices.data.iter().zip(&off.data).map(|(t, o)| t + o).collect()
            }
            ShapeMode::Latent => {
                let mut tape = Tape::new();
                let z = tape.constant(self.latent.shape.clone(), self.latent.data.clone());
                let offsets = decode_offsets(&mut tape, decoder, z);
                let off = tape.value(offsets);
                template.vertices.data.iter().zip(off.iter()).map(|(t, o)| t + o).collect()
            }
        };
        let mut world = Vec::with_capacity(n * 3);
        for v in base.chunks_exact(3) {
            for k in 0..3 {
                world.push(self.center[k] + self.radius * v[k]);
            }
        }
        world
    }
}

/// One hierarchy level: a voxel size, its primitives, and the acceleration
/// index over their current world faces.
#[derive(Clone, Debug)]
pub struct Level {
    pub voxel_size: f64,
    pub j_nearest: usize,
    pub primitives: Vec<Primitive>,
    pub bvh: Option<Bvh>,
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    /// Strictly increasing voxel sizes, finest first.
    pub voxel_sizes: Vec<f64>,
    /// Nearest intersections kept per ray, one entry per level.
    pub j_nearest: Vec<usize>,
    pub feature_dim: usize,
    pub feature_init_freq: usize,
    /// Primitive radius as a multiple of the voxel size; the default
    /// circumscribes the voxel (half the voxel diagonal).
    pub radius_scale: f64,
    pub shape_mode: ShapeMode,
    /// Initial background color, components in (0, 1).
    pub background_color: [f64; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            voxel_sizes: vec![0.5, 1.0],
            j_nearest: vec![4, 2],
            feature_dim: 21,
            feature_init_freq: 3,
            radius_scale: fmath::sqrt(3.0) / 2.0,
            shape_mode: ShapeMode::Latent,
            background_color: [0.2, 0.25, 0.35],
        }
    }
}

/// The whole scene: hierarchy levels (finest first), the frozen shape
/// decoder, the radiance MLP, and a learnable background color stored as
/// logits so the rendered color stays in (0, 1).
#[derive(Clone, Debug)]
pub struct SceneModel {
    pub levels: Vec<Level>,
    pub decoder: DecoderParams,
    pub template: TriangleMesh,
    pub radiance: RadianceMlp,
    pub background: Tensor,
    pub feature_dim: usize,
    pub feature_init_freq: usize,
    pub shape_mode: ShapeMode,
    pub bbox: Aabb,
}

/// Voxelize the cloud at every hierarchy size and place one primitive per
/// occupied voxel, latent set to the canonical initial code and features
/// initialized from positionally encoded vertex coordinates.
pub fn init_scene(
    pc: &PointCloud,
    decoder: DecoderParams,
    template: TriangleMesh,
    radiance: RadianceMlp,
    cfg: &SceneConfig,
) -> Result<SceneModel, SceneError> {
    if cfg.voxel_sizes.is_empty() {
        return Err(SceneError::ConfigMismatch("no hierarchy levels"));
    }
    if cfg.voxel_sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SceneError::NonIncreasingSizes);
    }
    if cfg.j_nearest.len() != cfg.voxel_sizes.len() {
        return Err(SceneError::ConfigMismatch("j_nearest must match level count"));
    }
    let expected = 3 + 6 * cfg.feature_init_freq;
    if cfg.feature_dim != expected {
        return Err(SceneError::FeatureDimMismatch { expected, got: cfg.feature_dim });
    }

    let bbox = pc.bbox().unwrap_or(Aabb { lo: [0.0; 3], hi: [0.0; 3] });
    let n = template.vertex_count();

    let mut levels = Vec::with_capacity(cfg.voxel_sizes.len());
    let mut total = 0usize;
    for (li, &size) in cfg.voxel_sizes.iter().enumerate() {
        let grid = voxelize(pc, size);
        let radius = cfg.radius_scale * size;
        let mut primitives = Vec::with_capacity(grid.occupied.len());
        for cell in &grid.occupied {
            let mut prim = Primitive::new(voxel_center(cell, size), radius, n, cfg.feature_dim);
            if cfg.shape_mode == ShapeMode::DirectOffsets {
                prim.enable_direct_offsets(n);
            }
            primitives.push(prim);
        }
        total += primitives.len();
        levels.push(Level {
            voxel_size: size,
            j_nearest: cfg.j_nearest[li],
            primitives,
            bvh: None,
        });
    }
    if total == 0 {
        return Err(SceneError::NoOccupiedVoxels);
    }

    let background = Tensor::new(
        vec![1, 3],
        cfg.background_color.iter().map(|&c| fmath::logit(c.clamp(1e-6, 1.0 - 1e-6))).collect(),
    )
    .with_grad();

    let mut scene = SceneModel {
        levels,
        decoder,
        template,
        radiance,
        background,
        feature_dim: cfg.feature_dim,
        feature_init_freq: cfg.feature_init_freq,
        shape_mode: cfg.shape_mode,
        bbox,
    };
    scene.init_all_features()?;
    scene.rebuild_bvh();
    Ok(scene)
}

impl SceneModel {
    pub fn primitive_count(&self) -> usize {
        self.levels.iter().map(|l| l.primitives.len()).sum()
    }

    pub fn background_color(&self) -> [f64; 3] {
        [
            fmath::sigmoid(self.background.data[0]),
            fmath::sigmoid(self.background.data[1]),
            fmath::sigmoid(self.background.data[2]),
        ]
    }

    /// World vertices of one primitive under the scene's shape mode.
    pub fn world_vertices(&self, level: usize, prim: usize) -> Vec<f64> {
        self.levels[level].primitives[prim].world_vertices(
            self.shape_mode,
            &self.decoder,
            &self.template,
        )
    }

    /// Positional-encoding feature initialization for every primitive.
    pub fn init_all_features(&mut self) -> Result<(), SceneError> {
        let expected = 3 + 6 * self.feature_init_freq;
        if self.feature_dim != expected {
            return Err(SceneError::FeatureDimMismatch { expected, got: self.feature_dim });
        }
        let bbox = self.bbox;
        let freq = self.feature_init_freq;
        for li in 0..self.levels.len() {
            for pi in 0..self.levels[li].primitives.len() {
                let world = self.world_vertices(li, pi);
                let prim = &mut self.levels[li].primitives[pi];
                init_vertex_features(prim, &world, freq, &bbox);
            }
        }
        Ok(())
    }

    /// Rebuild every level's BVH from current world vertices.
    pub fn rebuild_bvh(&mut self) {
        for li in 0..self.levels.len() {
            let faces = self.level_faces(li);
            self.levels[li].bvh = Some(build_bvh(faces));
        }
    }

    /// Flat world-space face list of one level.
    pub fn level_faces(&self, level: usize) -> Vec<FaceRef> {
        let mut out = Vec::with_capacity(self.levels[level].primitives.len() * self.template.face_count());
        for pi in 0..self.levels[level].primitives.len() {
            let world = self.world_vertices(level, pi);
            for (fi, f) in self.template.faces.iter().enumerate() {
                let v = |i: u32| {
                    let s = i as usize * 3;
                    [world[s], world[s + 1], world[s + 2]]
                };
                out.push(FaceRef {
                    prim: pi as u32,
                    face: fi as u32,
                    v0: v(f[0]),
                    v1: v(f[1]),
                    v2: v(f[2]),
                });
            }
        }
        out
    }

    /// Delete primitives whose centers lie inside `region`, at all levels.
    pub fn remove_primitives(&mut self, region: &Aabb) -> usize {
        let mut removed = 0;
        for level in self.levels.iter_mut() {
            let before = level.primitives.len();
            level.primitives.retain(|p| !region.contains(&p.center()));
            removed += before - level.primitives.len();
        }
        if removed > 0 {
            self.rebuild_bvh();
        }
        removed
    }

    /// Deep-copy donor primitives whose centers lie inside `region`,
    /// translate them by `offset`, and append them level by level.
    pub fn insert_primitives(
        &mut self,
        donor: &SceneModel,
        region: &Aabb,
        offset: [f64; 3],
    ) -> Result<usize, SceneError> {
        if donor.template.vertex_count() != self.template.vertex_count()
            || donor.template.faces != self.template.faces
        {
            return Err(SceneError::IncompatibleDonor("template mismatch"));
        }
        if donor.feature_dim != self.feature_dim {
            return Err(SceneError::IncompatibleDonor("feature dim mismatch"));
        }
        if !donor.decoder.same_weights(&self.decoder) {
            return Err(SceneError::IncompatibleDonor("decoder mismatch"));
        }
        if donor.levels.len() != self.levels.len()
            || donor
                .levels
                .iter()
                .zip(&self.levels)
                .any(|(a, b)| a.voxel_size != b.voxel_size)
        {
            return Err(SceneError::IncompatibleDonor("hierarchy mismatch"));
        }

        let mut inserted = 0;
        for (li, donor_level) in donor.levels.iter().enumerate() {
            for p in &donor_level.primitives {
                if region.contains(&p.center()) {
                    let mut copy = p.clone();
                    copy.translate(&offset);
                    self.levels[li].primitives.push(copy);
                    inserted += 1;
                }
            }
        }
        if inserted > 0 {
            self.rebuild_bvh();
        }
        Ok(inserted)
    }

    /// Map the feature rows of vertices inside `region` through a
    /// per-channel affine transform. Returns the number of rows edited.
    pub fn edit_features(&mut self, region: &Aabb, scale: &[f64], offset: &[f64]) -> usize {
        assert_eq!(scale.len(), self.feature_dim);
        assert_eq!(offset.len(), self.feature_dim);
        let mut edited = 0;
        for li in 0..self.levels.len() {
            for pi in 0..self.levels[li].primitives.len() {
                let world = self.world_vertices(li, pi);
                let c = self.feature_dim;
                let prim = &mut self.levels[li].primitives[pi];
                for (vi, v) in world.chunks_exact(3).enumerate() {
                    if region.contains(&[v[0], v[1], v[2]]) {
                        let row = &mut prim.features.data[vi * c..(vi + 1) * c];
                        for ((x, s), o) in row.iter_mut().zip(scale).zip(offset) {
                            *x = *x * s + o;
                        }
                        edited += 1;
                    }
                }
            }
        }
        edited
    }
}

/// Trainable features from the positional encoding of world vertex
/// coordinates normalized to the scene bounding box.
fn init_vertex_features(prim: &mut Primitive, world: &[f64], freq: usize, bbox: &Aabb) {
    let ext = bbox.extent();
    let c = prim.features.shape[1];
    debug_assert_eq!(c, 3 + 6 * freq);
    for (vi, v) in world.chunks_exact(3).enumerate() {
        let normalized = [
            norm_coord(v[0], bbox.lo[0], ext[0]),
            norm_coord(v[1], bbox.lo[1], ext[1]),
            norm_coord(v[2], bbox.lo[2], ext[2]),
        ];
        let enc = positional_encode_vec(&normalized, freq);
        prim.features.data[vi * c..(vi + 1) * c].copy_from_slice(&enc);
    }
}

fn norm_coord(x: f64, lo: f64, ext: f64) -> f64 {
    if ext > 1e-12 {
        (x - lo) / ext
    } else {
        0.5
    }
}

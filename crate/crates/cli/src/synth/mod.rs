//! Synthetic test scenes: analytic geometry (textured rectangles, boxes,
//! cylinders) with procedural textures, a camera trajectory, and an exact
//! ray tracer that produces the ground-truth RGB and depth the training
//! stages consume.

use std::path::Path;

use meshfield_core::fmath;
use meshfield_core::raster::{Camera, T_NEAR};
use meshfield_core::rng::Rng;
use meshfield_core::scene::PointCloud;
use serde::{Deserialize, Serialize};

use crate::config::{SceneGenConfig, SceneSpecName};
use crate::error::{CliError, Result};
use crate::formats::cameras::save_cameras;
use crate::formats::depth::write_depth;
use crate::formats::image::{write_image, ImageBuf};
use crate::formats::ply::save_ply;

/// One analytic surface with a procedural texture.
#[derive(Clone, Debug)]
pub enum AnalyticPrim {
    /// Parallelogram: `origin + a*u + b*v`, (a, b) in the unit square.
    Rect { origin: [f64; 3], u: [f64; 3], v: [f64; 3] },
    /// Finite open cylinder around `axis` through `center`.
    Cylinder { center: [f64; 3], axis: [f64; 3], radius: f64, half_height: f64 },
}

#[derive(Clone, Copy, Debug)]
struct TextureParams {
    freq_u: f64,
    freq_v: f64,
    phase_u: f64,
    phase_v: f64,
    mix: f64,
}

/// Ground-truth scene: prims, per-prim texture parameters, and cameras.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpecName,
    pub prims: Vec<AnalyticPrim>,
    textures: Vec<[TextureParams; 3]>,
    pub cameras: Vec<Camera>,
    pub seed: u64,
}

/// Companion metadata written next to the generated files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneMeta {
    pub spec: SceneSpecName,
    pub seed: u64,
    pub views: usize,
    pub test_every: usize,
    pub depth_dropout: Option<f64>,
}

pub fn build_scene(cfg: &SceneGenConfig, seed: u64) -> SyntheticScene {
    let mut prims = Vec::new();
    // Surfaces sit at generic offsets, never on a voxel boundary: geometry
    // exactly on a cell wall is the degenerate voxelization case (every
    // primitive would see its surface at the maximum possible offset).
    match cfg.spec {
        SceneSpecName::Quad => {
            prims.push(AnalyticPrim::Rect {
                origin: [-1.5, -1.125, 0.1],
                u: [3.0, 0.0, 0.0],
                v: [0.0, 2.25, 0.0],
            });
        }
        SceneSpecName::RoomCorner => {
            // Floor plus two walls meeting at the (+x, +z) corner.
            prims.push(AnalyticPrim::Rect {
                origin: [-1.93, 0.07, -1.93],
                u: [3.86, 0.0, 0.0],
                v: [0.0, 0.0, 3.86],
            });
            prims.push(AnalyticPrim::Rect {
                origin: [-1.93, 0.07, 1.93],
                u: [3.86, 0.0, 0.0],
                v: [0.0, 2.5, 0.0],
            });
            prims.push(AnalyticPrim::Rect {
                origin: [1.93, 0.07, -1.93],
                u: [0.0, 0.0, 3.86],
                v: [0.0, 2.5, 0.0],
            });
        }
        SceneSpecName::StreetStrip => {
            // Ground strip, two box "buildings", and a cylindrical pole.
            prims.push(AnalyticPrim::Rect {
                origin: [-6.0, 0.07, -1.43],
                u: [12.0, 0.0, 0.0],
                v: [0.0, 0.0, 3.0],
            });
            push_box(&mut prims, [-1.97, 0.97, 0.93], [1.6, 1.8, 0.8]);
            push_box(&mut prims, [1.53, 0.77, 1.03], [1.2, 1.4, 0.7]);
            prims.push(AnalyticPrim::Cylinder {
                center: [0.03, 0.82, 0.43],
                axis: [0.0, 1.0, 0.0],
                radius: 0.18,
                half_height: 0.75,
            });
        }
    }

    let mut tex_rng = Rng::new(seed ^ 0x7e37);
    let textures = prims
        .iter()
        .map(|_| {
            [0, 1, 2].map(|_| TextureParams {
                freq_u: tex_rng.range(0.5, 1.8),
                freq_v: tex_rng.range(0.5, 1.8),
                phase_u: tex_rng.range(0.0, 1.0),
                phase_v: tex_rng.range(0.0, 1.0),
                mix: tex_rng.range(0.08, 0.16),
            })
        })
        .collect();

    let cameras = camera_trajectory(cfg);
    SyntheticScene { spec: cfg.spec, prims, textures, cameras, seed }
}

/// Five axis-aligned faces of a box (the bottom is never visible).
fn push_box(prims: &mut Vec<AnalyticPrim>, center: [f64; 3], size: [f64; 3]) {
    let [cx, cy, cz] = center;
    let [sx, sy, sz] = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
    // front (-z), back (+z)
    for z in [cz - sz, cz + sz] {
        prims.push(AnalyticPrim::Rect {
            origin: [cx - sx, cy - sy, z],
            u: [2.0 * sx, 0.0, 0.0],
            v: [0.0, 2.0 * sy, 0.0],
        });
    }
    // left (-x), right (+x)
    for x in [cx - sx, cx + sx] {
        prims.push(AnalyticPrim::Rect {
            origin: [x, cy - sy, cz - sz],
            u: [0.0, 0.0, 2.0 * sz],
            v: [0.0, 2.0 * sy, 0.0],
        });
    }
    // top (+y)
    prims.push(AnalyticPrim::Rect {
        origin: [cx - sx, cy + sy, cz - sz],
        u: [2.0 * sx, 0.0, 0.0],
        v: [0.0, 0.0, 2.0 * sz],
    });
}

fn camera_trajectory(cfg: &SceneGenConfig) -> Vec<Camera> {
    let f = 0.8 * cfg.width as f64;
    let n = cfg.views;
    (0..n)
        .map(|i| {
            let s = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let (eye, target) = match cfg.spec {
                SceneSpecName::Quad => {
                    let theta = -0.45 + 0.9 * s;
                    (
                        [3.4 * fmath::sin(theta), 0.25 * fmath::sin(2.0 * theta), -3.4 * fmath::cos(theta)],
                        [0.0, 0.0, 0.0],
                    )
                }
                SceneSpecName::RoomCorner => {
                    let theta = -0.5 + 1.0 * s;
                    (
                        [-1.4 + 0.8 * fmath::sin(theta), 1.3, -1.4 + 0.4 * fmath::cos(theta)],
                        [1.4, 0.7, 1.4],
                    )
                }
                SceneSpecName::StreetStrip => {
                    let x = -3.2 + 6.4 * s;
                    ([x, 1.2, -1.8], [x + 1.0, 0.7, 0.9])
                }
            };
            Camera::look_at(f, f, cfg.width, cfg.height, eye, target, [0.0, 1.0, 0.0])
                .expect("trajectory cameras are valid")
        })
        .collect()
}

impl SyntheticScene {
    fn texture(&self, prim: usize, u: f64, v: f64) -> [f64; 3] {
        let tau = core::f64::consts::TAU;
        let mut out = [0.0; 3];
        for (c, p) in self.textures[prim].iter().enumerate() {
            let a = fmath::sin(tau * (p.freq_u * u + p.phase_u));
            let b = fmath::cos(tau * (p.freq_v * v + p.phase_v));
            let cross = fmath::sin(tau * (p.freq_u * u + p.freq_v * v));
            out[c] = (0.5 + 0.2 * a + p.mix * b + 0.08 * cross).clamp(0.05, 0.95);
        }
        out
    }

    /// Nearest analytic hit: `(t, prim, u, v)`.
    pub fn trace(&self, origin: &[f64; 3], dir: &[f64; 3]) -> Option<(f64, usize, f64, f64)> {
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (pi, prim) in self.prims.iter().enumerate() {
            let hit = match prim {
                AnalyticPrim::Rect { origin: o, u, v } => ray_rect(origin, dir, o, u, v),
                AnalyticPrim::Cylinder { center, axis, radius, half_height } => {
                    ray_cylinder(origin, dir, center, axis, *radius, *half_height)
                }
            };
            if let Some((t, uu, vv)) = hit {
                if best.map(|(bt, ..)| t < bt).unwrap_or(true) {
                    best = Some((t, pi, uu, vv));
                }
            }
        }
        best
    }

    /// Exact render of one view: RGB plus ray-length depth (0 where empty).
    pub fn render_view(&self, camera: &Camera, background: &[f64; 3]) -> (Vec<f64>, Vec<f64>) {
        let mut rgb = Vec::with_capacity(camera.pixel_count() * 3);
        let mut depth = Vec::with_capacity(camera.pixel_count());
        for iy in 0..camera.height {
            for ix in 0..camera.width {
                let (o, d) = camera.ray(ix, iy);
                match self.trace(&o, &d) {
                    Some((t, prim, u, v)) => {
                        rgb.extend_from_slice(&self.texture(prim, u, v));
                        depth.push(t);
                    }
                    None => {
                        rgb.extend_from_slice(background);
                        depth.push(0.0);
                    }
                }
            }
        }
        (rgb, depth)
    }

    fn prim_area(&self, prim: &AnalyticPrim) -> f64 {
        match prim {
            AnalyticPrim::Rect { u, v, .. } => fmath::norm3(&fmath::cross3(u, v)),
            AnalyticPrim::Cylinder { radius, half_height, .. } => {
                core::f64::consts::TAU * radius * 2.0 * half_height
            }
        }
    }

    /// Area-weighted surface samples over all prims.
    pub fn sample_cloud(&self, count: usize, seed: u64) -> PointCloud {
        let mut rng = Rng::new(seed ^ 0xc10d);
        let areas: Vec<f64> = self.prims.iter().map(|p| self.prim_area(p)).collect();
        let total: f64 = areas.iter().sum();
        let mut cumulative = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a;
            cumulative.push(acc);
        }

        let mut pts = Vec::with_capacity(count * 3);
        for _ in 0..count {
            let x = rng.uniform() * total;
            let pi = cumulative.partition_point(|&c| c < x).min(self.prims.len() - 1);
            match &self.prims[pi] {
                AnalyticPrim::Rect { origin, u, v } => {
                    let (a, b) = (rng.uniform(), rng.uniform());
                    for k in 0..3 {
                        pts.push(origin[k] + a * u[k] + b * v[k]);
                    }
                }
                AnalyticPrim::Cylinder { center, axis, radius, half_height } => {
                    let theta = rng.range(0.0, core::f64::consts::TAU);
                    let h = rng.range(-half_height, *half_height);
                    let (e1, e2) = orthonormal_frame(axis);
                    for k in 0..3 {
                        pts.push(
                            center[k]
                                + axis[k] * h
                                + radius * (e1[k] * fmath::cos(theta) + e2[k] * fmath::sin(theta)),
                        );
                    }
                }
            }
        }
        PointCloud::new(pts).expect("sampled points are finite")
    }
}

fn orthonormal_frame(axis: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if fmath::abs(axis[0]) < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = fmath::normalize3(&fmath::cross3(axis, &helper));
    let e2 = fmath::cross3(axis, &e1);
    (e1, e2)
}

fn ray_rect(
    o: &[f64; 3],
    d: &[f64; 3],
    origin: &[f64; 3],
    u: &[f64; 3],
    v: &[f64; 3],
) -> Option<(f64, f64, f64)> {
    let n = fmath::cross3(u, v);
    let den = fmath::dot3(d, &n);
    if fmath::abs(den) < 1e-14 {
        return None;
    }
    let w = [origin[0] - o[0], origin[1] - o[1], origin[2] - o[2]];
    let t = fmath::dot3(&w, &n) / den;
    if t <= T_NEAR {
        return None;
    }
    let p = [o[0] + t * d[0] - origin[0], o[1] + t * d[1] - origin[1], o[2] + t * d[2] - origin[2]];
    let uu = fmath::dot3(&p, u) / fmath::dot3(u, u);
    let vv = fmath::dot3(&p, v) / fmath::dot3(v, v);
    if !(0.0..=1.0).contains(&uu) || !(0.0..=1.0).contains(&vv) {
        return None;
    }
    Some((t, uu, vv))
}

fn ray_cylinder(
    o: &[f64; 3],
    d: &[f64; 3],
    center: &[f64; 3],
    axis: &[f64; 3],
    radius: f64,
    half_height: f64,
) -> Option<(f64, f64, f64)> {
    // Components of the ray orthogonal to the axis.
    let oc = [o[0] - center[0], o[1] - center[1], o[2] - center[2]];
    let d_axis = fmath::dot3(d, axis);
    let oc_axis = fmath::dot3(&oc, axis);
    let d_perp = [d[0] - d_axis * axis[0], d[1] - d_axis * axis[1], d[2] - d_axis * axis[2]];
    let oc_perp =
        [oc[0] - oc_axis * axis[0], oc[1] - oc_axis * axis[1], oc[2] - oc_axis * axis[2]];

    let a = fmath::dot3(&d_perp, &d_perp);
    if a < 1e-14 {
        return None; // ray parallel to the axis
    }
    let b = 2.0 * fmath::dot3(&oc_perp, &d_perp);
    let c = fmath::dot3(&oc_perp, &oc_perp) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = fmath::sqrt(disc);
    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
        if t <= T_NEAR {
            continue;
        }
        let h = oc_axis + t * d_axis;
        if fmath::abs(h) <= half_height {
            // Texture coordinates: angle around the axis and height.
            let p = [
                oc_perp[0] + t * d_perp[0],
                oc_perp[1] + t * d_perp[1],
                oc_perp[2] + t * d_perp[2],
            ];
            let (e1, e2) = orthonormal_frame(axis);
            let theta = fmath::atan2(fmath::dot3(&p, &e2), fmath::dot3(&p, &e1));
            let uu = (theta / core::f64::consts::TAU) + 0.5;
            let vv = (h / half_height + 1.0) / 2.0;
            return Some((t, uu, vv));
        }
    }
    None
}

/// Write the whole scene to a directory: `cloud.ply`, `cameras.json`,
/// `meta.json`, `gt_rgb/`, `gt_depth/`, and (when configured) a
/// dropout-masked depth set for the incomplete-supervision experiment.
pub fn materialize(
    scene: &SyntheticScene,
    cfg: &SceneGenConfig,
    background: &[f64; 3],
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir.join("gt_rgb")).map_err(CliError::io(dir))?;
    std::fs::create_dir_all(dir.join("gt_depth")).map_err(CliError::io(dir))?;
    if cfg.depth_dropout.is_some() {
        std::fs::create_dir_all(dir.join("gt_depth_dropout")).map_err(CliError::io(dir))?;
    }

    let cloud = scene.sample_cloud(cfg.cloud_points, scene.seed);
    save_ply(&dir.join("cloud.ply"), &cloud)?;
    save_cameras(&dir.join("cameras.json"), &scene.cameras)?;

    let meta = SceneMeta {
        spec: cfg.spec,
        seed: scene.seed,
        views: cfg.views,
        test_every: cfg.test_every,
        depth_dropout: cfg.depth_dropout,
    };
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(CliError::io(dir))?;

    for (vi, camera) in scene.cameras.iter().enumerate() {
        let (rgb, depth) = scene.render_view(camera, background);
        let img = ImageBuf::new(camera.width, camera.height, rgb);
        write_image(&img, &dir.join(format!("gt_rgb/view_{:03}.png", vi)))?;
        write_depth(&dir.join(format!("gt_depth/view_{:03}.bin", vi)), camera.width, camera.height, &depth)?;

        if let Some(p) = cfg.depth_dropout {
            let mut rng = Rng::new(scene.seed ^ 0xd20 ^ vi as u64);
            let masked: Vec<f64> = depth
                .iter()
                .map(|&d| if d > 0.0 && rng.uniform() < p { 0.0 } else { d })
                .collect();
            write_depth(
                &dir.join(format!("gt_depth_dropout/view_{:03}.bin", vi)),
                camera.width,
                camera.height,
                &masked,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use meshfield_core::raster::{rasterize_depth, FaceRef};

    fn quad_cfg() -> SceneGenConfig {
        SceneGenConfig { ..Default::default() }
    }

    #[test]
    fn quad_spec_has_one_prim_and_eight_cameras() {
        let scene = build_scene(&quad_cfg(), 5);
        assert_eq!(scene.prims.len(), 1);
        assert_eq!(scene.cameras.len(), 8);
    }

    #[test]
    fn frontal_quad_depth_is_two() {
        // A camera placed square in front of the quad at 2 m sees depth 2.0
        // at the central pixel.
        let scene = build_scene(&quad_cfg(), 5);
        let cam = Camera::look_at(
            51.2,
            51.2,
            64,
            48,
            [0.0, 0.0, -2.0],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        )
        .unwrap();
        // The exactly-axial ray goes through the principal point.
        let (o, d) = cam.ray_at(32.0, 24.0);
        let (t, ..) = scene.trace(&o, &d).unwrap();
        assert!((t - 2.0).abs() < 1e-12, "depth {}", t);

        // Covered pixel depths are the ray length to the z = 0 plane.
        let (_, depth) = scene.render_view(&cam, &[0.0; 3]);
        for iy in 0..cam.height {
            for ix in 0..cam.width {
                let dpt = depth[iy * cam.width + ix];
                if dpt > 0.0 {
                    let (_, dir) = cam.ray(ix, iy);
                    let expect = 2.0 / dir[2];
                    assert!((dpt - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cloud_reproducible_from_seed() {
        let scene = build_scene(&quad_cfg(), 9);
        let a = scene.sample_cloud(500, 9);
        let b = scene.sample_cloud(500, 9);
        assert_eq!(a.points.data, b.points.data);
    }

    #[test]
    fn analytic_and_mesh_depth_agree_on_shared_quad() {
        // The same rectangle as two mesh triangles: z-buffer depths of
        // covered pixels match the analytic tracer to 1e-6.
        let scene = build_scene(&quad_cfg(), 5);
        let AnalyticPrim::Rect { origin, u, v } = &scene.prims[0] else {
            panic!("quad spec is a rect");
        };
        let p = |a: f64, b: f64| {
            [
                origin[0] + a * u[0] + b * v[0],
                origin[1] + a * u[1] + b * v[1],
                origin[2] + a * u[2] + b * v[2],
            ]
        };
        let faces = vec![
            FaceRef { prim: 0, face: 0, v0: p(0.0, 0.0), v1: p(1.0, 0.0), v2: p(1.0, 1.0) },
            FaceRef { prim: 0, face: 1, v0: p(0.0, 0.0), v1: p(1.0, 1.0), v2: p(0.0, 1.0) },
        ];
        let cam = &scene.cameras[3];
        let pass = rasterize_depth(&faces, cam, T_NEAR);
        let (_, gt) = scene.render_view(cam, &[0.0; 3]);
        let mut checked = 0;
        for (pix, &d) in pass.depth.iter().enumerate() {
            if d.is_finite() && gt[pix] > 0.0 {
                assert!((d - gt[pix]).abs() < 1e-6, "pixel {}: {} vs {}", pix, d, gt[pix]);
                checked += 1;
            }
        }
        assert!(checked > 100, "quad should cover many pixels");
    }

    #[test]
    fn street_strip_includes_cylinder_hits() {
        let cfg = SceneGenConfig { spec: SceneSpecName::StreetStrip, ..Default::default() };
        let scene = build_scene(&cfg, 5);
        let cyl_index = scene.prims.len() - 1;
        let mut cyl_pixels = 0;
        for cam in &scene.cameras {
            for iy in 0..cam.height {
                for ix in 0..cam.width {
                    let (o, d) = cam.ray(ix, iy);
                    if let Some((_, pi, _, _)) = scene.trace(&o, &d) {
                        if pi == cyl_index {
                            cyl_pixels += 1;
                        }
                    }
                }
            }
        }
        assert!(cyl_pixels > 20, "cylinder should be visible: {}", cyl_pixels);
    }

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let scene = build_scene(&quad_cfg(), 12);
        let a = scene.texture(0, 0.3, 0.7);
        let b = scene.texture(0, 0.3, 0.7);
        assert_eq!(a, b);
        for c in a {
            assert!((0.05..=0.95).contains(&c));
        }
    }
}

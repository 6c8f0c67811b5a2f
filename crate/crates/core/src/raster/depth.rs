use alloc::vec;
use alloc::vec::Vec;

use super::{moller_trumbore, Camera, FaceRef};
use crate::fmath;

/// Face assigned to a pixel by the depth pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelFace {
    pub prim: u32,
    pub face: u32,
}

/// Full-frame nearest-hit depth. `depth` carries `f64::INFINITY` where no
/// face covers the pixel; `assign` names the winning face per covered pixel
/// so a training pass can re-express the depth differentiably.
#[derive(Clone, Debug)]
pub struct DepthPass {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub assign: Vec<Option<PixelFace>>,
    /// Barycentric weights of the winning hit per covered pixel.
    pub bary: Vec<[f64; 3]>,
}

impl DepthPass {
    pub fn covered(&self) -> usize {
        self.assign.iter().filter(|a| a.is_some()).count()
    }
}

/// Z-buffer pass: bin faces by their projected screen bounds, then run the
/// exact per-ray triangle test against every candidate pixel. Because the
/// coverage decision and the depth both come from `moller_trumbore` on the
/// pixel's own ray, covered-pixel depths equal the nearest ray-cast hit
/// bit for bit; the screen-space part only prunes candidates. Ties at equal
/// depth resolve to the smaller `(prim, face)`, matching the ray-cast sort.
pub fn rasterize_depth(faces: &[FaceRef], camera: &Camera, t_near: f64) -> DepthPass {
    let (w, h) = (camera.width, camera.height);
    let mut pass = DepthPass {
        width: w,
        height: h,
        depth: vec![f64::INFINITY; w * h],
        assign: vec![None; w * h],
        bary: vec![[0.0; 3]; w * h],
    };

    // Rays are cached per pixel; every candidate face re-tests the same ray.
    let mut rays = Vec::with_capacity(w * h);
    for iy in 0..h {
        for ix in 0..w {
            rays.push(camera.ray(ix, iy));
        }
    }

    for f in faces {
        let (x0, x1, y0, y1) = match screen_bounds(f, camera) {
            Some(b) => b,
            None => continue,
        };
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let (origin, dir) = &rays[iy * w + ix];
                if let Some((t, u, v)) = moller_trumbore(origin, dir, &f.v0, &f.v1, &f.v2, t_near) {
                    let slot = iy * w + ix;
                    let current = pass.depth[slot];
                    let better = t < current
                        || (t == current
                            && pass.assign[slot]
                                .map(|a| (f.prim, f.face) < (a.prim, a.face))
                                .unwrap_or(true));
                    if better {
                        pass.depth[slot] = t;
                        pass.assign[slot] = Some(PixelFace { prim: f.prim, face: f.face });
                        pass.bary[slot] = [1.0 - u - v, u, v];
                    }
                }
            }
        }
    }
    pass
}

/// Inclusive pixel bounds a face might cover, padded by one pixel. A face
/// with every vertex behind the camera cannot be hit by any forward ray and
/// is dropped; a face straddling the camera plane falls back to the full
/// frame (projection is meaningless for it).
fn screen_bounds(
    f: &FaceRef,
    camera: &Camera,
) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = (camera.width, camera.height);
    let full = (0, w - 1, 0, h - 1);

    let mut lo_u = f64::INFINITY;
    let mut hi_u = f64::NEG_INFINITY;
    let mut lo_v = f64::INFINITY;
    let mut hi_v = f64::NEG_INFINITY;
    let mut behind = 0;
    for v in [&f.v0, &f.v1, &f.v2] {
        let pc = camera.to_camera(v);
        if pc[2] <= 1e-9 {
            behind += 1;
            continue;
        }
        let (u, vv) = camera.project_cam(&pc);
        lo_u = lo_u.min(u);
        hi_u = hi_u.max(u);
        lo_v = lo_v.min(vv);
        hi_v = hi_v.max(vv);
    }
    match behind {
        3 => None,
        0 => {
            // Pixel centers sit at integer + 0.5; expand by one pixel so a
            // projection wobble at the silhouette cannot exclude a center
            // that the exact ray test would accept.
            let x0 = fmath::floor(lo_u - 0.5) - 1.0;
            let x1 = fmath::ceil(hi_u - 0.5) + 1.0;
            let y0 = fmath::floor(lo_v - 0.5) - 1.0;
            let y1 = fmath::ceil(hi_v - 0.5) + 1.0;
            if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
                return None;
            }
            Some((
                x0.max(0.0) as usize,
                (x1.max(0.0) as usize).min(w - 1),
                y0.max(0.0) as usize,
                (y1.max(0.0) as usize).min(h - 1),
            ))
        }
        _ => Some(full),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{build_bvh, T_NEAR};

    fn quad_faces(z: f64, half: f64) -> Vec<FaceRef> {
        let v = |x: f64, y: f64| [x, y, z];
        vec![
            FaceRef { prim: 0, face: 0, v0: v(-half, -half), v1: v(half, -half), v2: v(half, half) },
            FaceRef { prim: 0, face: 1, v0: v(-half, -half), v1: v(half, half), v2: v(-half, half) },
        ]
    }

    fn test_camera() -> Camera {
        Camera::look_at(60.0, 60.0, 64, 48, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0])
            .unwrap()
    }

    #[test]
    fn axis_aligned_quad_depth() {
        // A quad at z = 2 facing the camera: covered pixels carry the ray
        // length to the plane, and the center pixel's ray is axial so its
        // depth is exactly 2.
        let faces = quad_faces(2.0, 1.5);
        let cam = test_camera();
        let pass = rasterize_depth(&faces, &cam, T_NEAR);
        assert!(pass.covered() > 0);

        for iy in 0..cam.height {
            for ix in 0..cam.width {
                let d = pass.depth[iy * cam.width + ix];
                if d.is_finite() {
                    let (_, dir) = cam.ray(ix, iy);
                    // Ray length to the z=2 plane.
                    let expect = 2.0 / dir[2];
                    assert!((d - expect).abs() < 1e-9, "pixel ({},{})", ix, iy);
                }
            }
        }
    }

    #[test]
    fn empty_scene_is_all_sentinel() {
        let cam = test_camera();
        let pass = rasterize_depth(&[], &cam, T_NEAR);
        assert!(pass.depth.iter().all(|d| d.is_infinite()));
        assert_eq!(pass.covered(), 0);
    }

    #[test]
    fn depth_equals_ray_cast_nearest() {
        // Random triangle soup: every covered pixel's z-buffer depth must
        // equal the nearest BVH hit, and uncovered pixels must truly miss.
        let mut rng = crate::rng::Rng::new(31);
        let mut faces = Vec::new();
        for i in 0..200 {
            let c = [rng.range(-2.0, 2.0), rng.range(-1.5, 1.5), rng.range(2.0, 6.0)];
            let mut vs = [[0.0; 3]; 3];
            for v in vs.iter_mut() {
                for (k, x) in v.iter_mut().enumerate() {
                    *x = c[k] + rng.range(-0.4, 0.4);
                }
            }
            faces.push(FaceRef { prim: i as u32, face: 0, v0: vs[0], v1: vs[1], v2: vs[2] });
        }
        let cam = test_camera();
        let pass = rasterize_depth(&faces, &cam, T_NEAR);
        let bvh = build_bvh(faces);
        for iy in 0..cam.height {
            for ix in 0..cam.width {
                let (o, d) = cam.ray(ix, iy);
                let hits = bvh.intersect_ray(&o, &d, 1, T_NEAR);
                let zd = pass.depth[iy * cam.width + ix];
                match hits.first() {
                    Some(h) => assert!(
                        (h.t - zd).abs() <= 1e-9,
                        "pixel ({},{}): {} vs {}",
                        ix,
                        iy,
                        h.t,
                        zd
                    ),
                    None => assert!(zd.is_infinite()),
                }
            }
        }
    }
}

use core::fmt;

use crate::fmath;

#[derive(Debug, Clone, PartialEq)]
pub enum CameraError {
    NonPositiveFocal,
    /// Rotation fails R^T R = I within 1e-9.
    NotOrthonormal { deviation: f64 },
    ZeroImage,
}

impl fmt::Display for CameraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraError::NonPositiveFocal => write!(f, "focal lengths must be positive"),
            CameraError::NotOrthonormal { deviation } => {
                write!(f, "rotation is not orthonormal (deviation {})", deviation)
            }
            CameraError::ZeroImage => write!(f, "image dimensions must be positive"),
        }
    }
}

/// Pinhole camera: intrinsics in pixels, pose as world-from-camera
/// (`p_world = R p_cam + t`). Rays go through pixel centers, i.e. pixel
/// `(ix, iy)` casts through `(ix + 0.5, iy + 0.5)`.
#[derive(Clone, Debug)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major world-from-camera rotation.
    pub rot: [[f64; 3]; 3],
    /// Camera center in world coordinates.
    pub trans: [f64; 3],
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rot: [[f64; 3]; 3],
        trans: [f64; 3],
    ) -> Result<Self, CameraError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::NonPositiveFocal);
        }
        if width == 0 || height == 0 {
            return Err(CameraError::ZeroImage);
        }
        let mut deviation = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                // (R^T R)[i][j] via column dot products.
                let mut dot = 0.0;
                for row in rot.iter() {
                    dot += row[i] * row[j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max(fmath::abs(dot - expect));
            }
        }
        if deviation > 1e-9 {
            return Err(CameraError::NotOrthonormal { deviation });
        }
        Ok(Camera { fx, fy, cx, cy, width, height, rot, trans })
    }

    /// A camera at `eye` looking at `target` with +y image rows pointing
    /// down (the usual image convention), `up` roughly opposing image rows.
    pub fn look_at(
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
    ) -> Result<Self, CameraError> {
        let fwd = fmath::normalize3(&[target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
        let right = fmath::normalize3(&fmath::cross3(&fwd, &up));
        let down = fmath::cross3(&fwd, &right);
        // Columns of world-from-camera are the camera axes in world frame:
        // x = right, y = image-down, z = forward.
        let rot = [
            [right[0], down[0], fwd[0]],
            [right[1], down[1], fwd[1]],
            [right[2], down[2], fwd[2]],
        ];
        Camera::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, rot, eye)
    }

    /// World-space ray through the center of pixel `(ix, iy)`:
    /// returns `(origin, unit direction)`.
    pub fn ray(&self, ix: usize, iy: usize) -> ([f64; 3], [f64; 3]) {
        self.ray_at(ix as f64 + 0.5, iy as f64 + 0.5)
    }

    /// Ray through an arbitrary pixel-space position.
    pub fn ray_at(&self, u: f64, v: f64) -> ([f64; 3], [f64; 3]) {
        let dc = [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0];
        let dw = [
            fmath::dot3(&self.rot[0], &dc),
            fmath::dot3(&self.rot[1], &dc),
            fmath::dot3(&self.rot[2], &dc),
        ];
        (self.trans, fmath::normalize3(&dw))
    }

    /// World point into camera coordinates: `p_cam = R^T (p - t)`.
    pub fn to_camera(&self, p: &[f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.trans[0], p[1] - self.trans[1], p[2] - self.trans[2]];
        [
            self.rot[0][0] * d[0] + self.rot[1][0] * d[1] + self.rot[2][0] * d[2],
            self.rot[0][1] * d[0] + self.rot[1][1] * d[1] + self.rot[2][1] * d[2],
            self.rot[0][2] * d[0] + self.rot[1][2] * d[1] + self.rot[2][2] * d[2],
        ]
    }

    /// Project a camera-space point (z > 0) to pixel coordinates.
    pub fn project_cam(&self, p_cam: &[f64; 3]) -> (f64, f64) {
        (self.fx * p_cam[0] / p_cam[2] + self.cx, self.fy * p_cam[1] / p_cam[2] + self.cy)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_sheared_rotation() {
        let rot = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            Camera::new(50.0, 50.0, 32.0, 24.0, 64, 48, rot, [0.0; 3]),
            Err(CameraError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn center_pixel_ray_is_forward() {
        let cam = Camera::look_at(
            50.0,
            50.0,
            64,
            48,
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 5.0],
            [0.0, -1.0, 0.0],
        )
        .unwrap();
        let (_, d) = cam.ray_at(32.0, 24.0);
        assert!((d[2] - 1.0).abs() < 1e-12, "{:?}", d);
    }

    #[test]
    fn project_inverts_ray() {
        let cam = Camera::look_at(
            60.0,
            55.0,
            64,
            48,
            [1.0, 2.0, -3.0],
            [0.5, 0.0, 4.0],
            [0.0, -1.0, 0.0],
        )
        .unwrap();
        let (o, d) = cam.ray(10, 37);
        let p = [o[0] + 2.5 * d[0], o[1] + 2.5 * d[1], o[2] + 2.5 * d[2]];
        let pc = cam.to_camera(&p);
        let (u, v) = cam.project_cam(&pc);
        assert!((u - 10.5).abs() < 1e-9);
        assert!((v - 37.5).abs() < 1e-9);
    }
}

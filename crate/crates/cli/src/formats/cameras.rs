//! `cameras.json`: a JSON list of pinhole cameras with world-from-camera
//! poses (`R` row-major, `t` the camera center).

use std::path::Path;

use meshfield_core::raster::Camera;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major world-from-camera rotation.
    pub r: [f64; 9],
    /// Camera center in world coordinates.
    pub t: [f64; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[i * 3 + j] = c.rot[i][j];
            }
        }
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            r,
            t: c.trans,
        }
    }
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        let rot = [
            [self.r[0], self.r[1], self.r[2]],
            [self.r[3], self.r[4], self.r[5]],
            [self.r[6], self.r[7], self.r[8]],
        ];
        Camera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, rot, self.t)
            .map_err(|e| CliError::Scene(e.to_string()))
    }
}

pub fn save_cameras(path: &Path, cams: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    let text = serde_json::to_string_pretty(&records)
        .map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    records.iter().map(CameraRecord::to_camera).collect()
}

//! Ground-truth depth maps: `width: u32 LE, height: u32 LE`, then
//! row-major `f32 LE` ray depths in meters. Invalid (missing/masked)
//! pixels are stored as 0.0.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CliError, Result};

pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

pub fn write_depth(path: &Path, width: usize, height: usize, depth: &[f64]) -> Result<()> {
    assert_eq!(depth.len(), width * height);
    let mut buf = Vec::with_capacity(8 + depth.len() * 4);
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    for &d in depth {
        let v = if d.is_finite() && d > 0.0 { d as f32 } else { 0.0 };
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(&buf).map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(CliError::io(path))?
        .read_to_end(&mut bytes)
        .map_err(CliError::io(path))?;
    let parse = |message: &str| CliError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < 8 {
        return Err(parse("truncated header"));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let need = 8 + width * height * 4;
    if bytes.len() != need {
        return Err(parse(&format!("expected {} bytes, found {}", need, bytes.len())));
    }
    let depth = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(DepthMap { width, height, depth })
}

//! ASCII PLY point clouds. Only the x/y/z properties are interpreted;
//! anything else in a vertex row is skipped by column position. Binary
//! encodings are rejected up front.

use std::io::Write;
use std::path::Path;

use meshfield_core::scene::PointCloud;

use crate::error::{CliError, Result};

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let parse = |line: usize, message: &str| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };

    let mut lines = text.lines().enumerate();

    let (ln, magic) = lines.next().ok_or_else(|| parse(1, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(parse(ln + 1, "missing 'ply' magic"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut header_end = 0;

    for (ln, raw) in lines.by_ref() {
        let line = raw.trim();
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(parse(ln + 1, &format!("unsupported encoding '{}'", other)));
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse::<usize>()
                        .map_err(|_| parse(ln + 1, "bad vertex count"))?,
                );
                in_vertex_element = true;
            }
            ["element", ..] => in_vertex_element = false,
            ["property", _ty, name] if in_vertex_element => {
                properties.push((*name).to_string());
            }
            ["property", ..] => {}
            ["end_header"] => {
                header_end = ln + 1;
                break;
            }
            [] => {}
            _ => return Err(parse(ln + 1, &format!("unrecognized header line '{}'", line))),
        }
    }
    if header_end == 0 {
        return Err(parse(text.lines().count(), "missing end_header"));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| parse(header_end, "no vertex element declared"))?;

    let col = |name: &str| -> Result<usize> {
        properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse(header_end, &format!("missing '{}' property", name)))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut points = Vec::with_capacity(vertex_count * 3);
    let mut seen = 0usize;
    for (ln, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if seen == vertex_count {
            return Err(parse(ln + 1, "more vertex rows than declared"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(parse(
                ln + 1,
                &format!("expected {} columns, found {}", properties.len(), fields.len()),
            ));
        }
        let get = |c: usize| -> Result<f64> {
            fields[c]
                .parse::<f64>()
                .map_err(|_| parse(ln + 1, &format!("bad float '{}'", fields[c])))
        };
        points.push(get(cx)?);
        points.push(get(cy)?);
        points.push(get(cz)?);
        seen += 1;
    }
    if seen != vertex_count {
        return Err(parse(
            text.lines().count(),
            &format!("declared {} vertices, found {}", vertex_count, seen),
        ));
    }

    PointCloud::new(points).map_err(|e| CliError::Scene(e.to_string()))
}

/// Write with shortest-round-trip float formatting, so a save/load cycle is
/// bit-exact.
pub fn save_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.points.data.chunks_exact(3) {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(out.as_bytes()).map_err(CliError::io(path))?;
    Ok(())
}

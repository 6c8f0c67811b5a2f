//! Loss history CSV: `iteration,stage,loss,psnr` with an empty psnr cell
//! where none was measured.

use std::io::Write;
use std::path::Path;

use meshfield_core::train::LossRecord;

use crate::error::{CliError, Result};

pub fn write_history(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out = String::from("iteration,stage,loss,psnr\n");
    for r in records {
        let psnr = r.psnr.map(|p| format!("{}", p)).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.iteration, r.stage, r.loss, psnr));
    }
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(out.as_bytes()).map_err(CliError::io(path))?;
    Ok(())
}

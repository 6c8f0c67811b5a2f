//! On-disk formats: ASCII PLY clouds, PNG/PPM images, binary depth maps,
//! camera lists, scene/codec checkpoints, loss CSVs, and eval reports.

pub mod cameras;
pub mod checkpoint;
pub mod csvlog;
pub mod depth;
pub mod image;
pub mod ply;
pub mod report;

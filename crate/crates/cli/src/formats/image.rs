//! 8-bit image IO. PNG is the primary format; PPM (binary P6) exists for
//! eyeballing outputs with nothing but a pager. Quantization is
//! round-half-up; out-of-range inputs are clamped with a warning on stderr.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CliError, Result};

/// Row-major RGB image with float channels nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, rgb: Vec<f64>) -> Self {
        assert_eq!(rgb.len(), width * height * 3);
        ImageBuf { width, height, rgb }
    }
}

fn quantize(img: &ImageBuf, path: &Path) -> Vec<u8> {
    let mut clamped = 0usize;
    let bytes: Vec<u8> = img
        .rgb
        .iter()
        .map(|&v| {
            let c = if (0.0..=1.0).contains(&v) {
                v
            } else {
                clamped += 1;
                v.clamp(0.0, 1.0)
            };
            // round half up: 0.5 -> 128
            (c * 255.0 + 0.5).floor() as u8
        })
        .collect();
    if clamped > 0 {
        eprintln!(
            "warning: {} out-of-range samples clamped writing {}",
            clamped,
            path.display()
        );
    }
    bytes
}

pub fn write_image(img: &ImageBuf, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => write_png(img, path),
        Some("ppm") => write_ppm(img, path),
        other => Err(CliError::Config(format!(
            "unsupported image extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}

pub fn read_image(path: &Path) -> Result<ImageBuf> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_png(path),
        Some("ppm") => read_ppm(path),
        other => Err(CliError::Config(format!(
            "unsupported image extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}

fn write_png(img: &ImageBuf, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    writer
        .write_image_data(&quantize(img, path))
        .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    Ok(())
}

fn read_png(path: &Path) -> Result<ImageBuf> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(CliError::Parse {
            path: path.into(),
            line: 0,
            message: "only 8-bit RGB PNGs are read".into(),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb = buf[..w * h * 3].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(ImageBuf { width: w, height: h, rgb })
}

fn write_ppm(img: &ImageBuf, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path).map_err(CliError::io(path))?);
    write!(f, "P6\n{} {}\n255\n", img.width, img.height).map_err(CliError::io(path))?;
    f.write_all(&quantize(img, path)).map_err(CliError::io(path))?;
    Ok(())
}

fn read_ppm(path: &Path) -> Result<ImageBuf> {
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

    // Header: magic, width, height, maxval as whitespace-separated tokens.
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(parse("not a binary PPM (P6)"));
    }
    let w: usize = token()?.parse().map_err(|_| parse("bad width"))?;
    let h: usize = token()?.parse().map_err(|_| parse("bad height"))?;
    if token()? != "255" {
        return Err(parse("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(parse("truncated pixel data"));
    }
    let rgb = bytes[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(ImageBuf { width: w, height: h, rgb })
}

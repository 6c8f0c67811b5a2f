//! Binary checkpoints: a magic tag, a format version, a JSON config blob
//! describing the architecture, then named float64 little-endian parameter
//! records. Loading validates every record against the shape the described
//! architecture expects, so weights from a different preset are rejected
//! instead of silently misread.

use std::io::{Read, Write};
use std::path::Path;

use meshfield_core::autodiff::Tensor;
use meshfield_core::codec::{DecoderParams, EncoderParams, LATENT_DIM};
use meshfield_core::mesh::build_icosphere;
use meshfield_core::radiance::{MlpPreset, RadianceMlp};
use meshfield_core::rng::Rng;
use meshfield_core::scene::{
    Aabb, Level, Primitive, SceneModel, ShapeMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const CODEC_MAGIC: &[u8; 8] = b"MFCODEC1";
const SCENE_MAGIC: &[u8; 8] = b"MFSCENE1";
const VERSION: u32 = 1;

// ── Record plumbing ─────────────────────────────────────────────────

struct Record {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn write_records(
    path: &Path,
    magic: &[u8; 8],
    config_json: &str,
    records: &[Record],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = config_json.as_bytes();
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg);
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        debug_assert_eq!(r.shape.iter().product::<usize>(), r.data.len());
        for &v in &r.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(&buf).map_err(CliError::io(path))?;
    Ok(())
}

struct Reader {
    bytes: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_records(path: &Path, magic: &[u8; 8]) -> Result<(String, Vec<Record>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(CliError::io(path))?
        .read_to_end(&mut bytes)
        .map_err(CliError::io(path))?;
    let mut r = Reader { bytes, pos: 0 };

    let got_magic = r.take(8)?.to_vec();
    if got_magic != magic {
        return Err(CliError::Checkpoint(format!(
            "bad magic in {} (expected {})",
            path.display(),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::Checkpoint(format!(
            "version {} not supported (expected {})",
            version, VERSION
        )));
    }
    let cfg_len = r.u32()? as usize;
    let config = String::from_utf8(r.take(cfg_len)?.to_vec())
        .map_err(|_| CliError::Checkpoint("config blob is not UTF-8".into()))?;

    let n_records = r.u32()? as usize;
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CliError::Checkpoint("record name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_bits(r.u64()?));
        }
        records.push(Record { name, shape, data });
    }
    if r.pos != r.bytes.len() {
        return Err(CliError::Checkpoint("trailing bytes after last record".into()));
    }
    Ok((config, records))
}

struct RecordMap {
    records: Vec<Record>,
}

impl RecordMap {
    /// Remove and return a record, insisting on the expected shape.
    fn fill(&mut self, name: &str, tensor: &mut Tensor) -> Result<()> {
        let idx = self
            .records
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| CliError::Checkpoint(format!("missing record '{}'", name)))?;
        let r = self.records.swap_remove(idx);
        if r.shape != tensor.shape {
            return Err(CliError::Checkpoint(format!(
                "shape mismatch for '{}': checkpoint {:?} vs expected {:?}",
                name, r.shape, tensor.shape
            )));
        }
        tensor.data = r.data;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(r) = self.records.first() {
            return Err(CliError::Checkpoint(format!("unexpected record '{}'", r.name)));
        }
        Ok(())
    }
}

fn tensor_record(name: &str, t: &Tensor) -> Record {
    Record { name: name.into(), shape: t.shape.clone(), data: t.data.clone() }
}

// ── Codec checkpoints ───────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct CodecBlob {
    template_level: usize,
}

const ENC_NAMES: [&str; 6] = ["enc.p1.w", "enc.p1.b", "enc.p2.w", "enc.p2.b", "enc.head.w", "enc.head.b"];
const DEC_NAMES: [&str; 7] =
    ["dec.l1.w", "dec.l1.b", "dec.l2.w", "dec.l2.b", "dec.out.w", "dec.out.b", "dec.skip.w"];

pub fn save_codec(
    path: &Path,
    enc: &EncoderParams,
    dec: &DecoderParams,
    template_level: usize,
) -> Result<()> {
    let blob = serde_json::to_string(&CodecBlob { template_level }).unwrap();
    let mut records = Vec::new();
    for (name, t) in ENC_NAMES.iter().zip(enc.params()) {
        records.push(tensor_record(name, t));
    }
    for (name, t) in DEC_NAMES.iter().zip(dec.params()) {
        records.push(tensor_record(name, t));
    }
    write_records(path, CODEC_MAGIC, &blob, &records)
}

pub fn load_codec(path: &Path) -> Result<(EncoderParams, DecoderParams, usize)> {
    let (blob, records) = read_records(path, CODEC_MAGIC)?;
    let cfg: CodecBlob =
        serde_json::from_str(&blob).map_err(|e| CliError::Checkpoint(e.to_string()))?;
    let template = build_icosphere(cfg.template_level)
        .map_err(|e| CliError::Checkpoint(e.to_string()))?;

    let mut rng = Rng::new(0);
    let mut enc = EncoderParams::init(&mut rng);
    let mut dec = DecoderParams::init(template.vertex_count(), &mut rng);

    let mut map = RecordMap { records };
    for (name, t) in ENC_NAMES.iter().zip(enc.params_mut()) {
        map.fill(name, t)?;
    }
    for (name, t) in DEC_NAMES.iter().zip(dec.params_mut()) {
        map.fill(name, t)?;
    }
    map.finish()?;
    Ok((enc, dec, cfg.template_level))
}

// ── Scene checkpoints ───────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum ShapeModeName {
    Latent,
    DirectOffsets,
    TemplateOnly,
}

impl From<ShapeMode> for ShapeModeName {
    fn from(m: ShapeMode) -> Self {
        match m {
            ShapeMode::Latent => ShapeModeName::Latent,
            ShapeMode::DirectOffsets => ShapeModeName::DirectOffsets,
            ShapeMode::TemplateOnly => ShapeModeName::TemplateOnly,
        }
    }
}

impl From<ShapeModeName> for ShapeMode {
    fn from(m: ShapeModeName) -> Self {
        match m {
            ShapeModeName::Latent => ShapeMode::Latent,
            ShapeModeName::DirectOffsets => ShapeMode::DirectOffsets,
            ShapeModeName::TemplateOnly => ShapeMode::TemplateOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum PresetBlobName {
    Full,
    Lightweight,
}

impl From<MlpPreset> for PresetBlobName {
    fn from(p: MlpPreset) -> Self {
        match p {
            MlpPreset::Full => PresetBlobName::Full,
            MlpPreset::Lightweight => PresetBlobName::Lightweight,
        }
    }
}

impl From<PresetBlobName> for MlpPreset {
    fn from(p: PresetBlobName) -> Self {
        match p {
            PresetBlobName::Full => MlpPreset::Full,
            PresetBlobName::Lightweight => MlpPreset::Lightweight,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SceneBlob {
    template_level: usize,
    voxel_sizes: Vec<f64>,
    j_nearest: Vec<usize>,
    feature_dim: usize,
    feature_init_freq: usize,
    shape_mode: ShapeModeName,
    preset: PresetBlobName,
    feature_pe_freq: usize,
    view_pe_freq: usize,
    bbox_lo: [f64; 3],
    bbox_hi: [f64; 3],
    /// Primitive count per level; record shapes derive from these.
    prim_counts: Vec<usize>,
    has_direct_offsets: bool,
}

fn mlp_record_names(mlp: &RadianceMlp) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..mlp.trunk.len() {
        names.push(format!("rad.trunk{}.w", i));
        names.push(format!("rad.trunk{}.b", i));
    }
    names.push("rad.opacity.w".into());
    names.push("rad.opacity.b".into());
    for i in 0..mlp.color_hidden.len() {
        names.push(format!("rad.color{}.w", i));
        names.push(format!("rad.color{}.b", i));
    }
    names.push("rad.color_out.w".into());
    names.push("rad.color_out.b".into());
    names
}

pub fn save_scene(path: &Path, scene: &SceneModel, template_level: usize) -> Result<()> {
    let blob = SceneBlob {
        template_level,
        voxel_sizes: scene.levels.iter().map(|l| l.voxel_size).collect(),
        j_nearest: scene.levels.iter().map(|l| l.j_nearest).collect(),
        feature_dim: scene.feature_dim,
        feature_init_freq: scene.feature_init_freq,
        shape_mode: scene.shape_mode.into(),
        preset: scene.radiance.preset.into(),
        feature_pe_freq: scene.radiance.feature_pe_freq,
        view_pe_freq: scene.radiance.view_pe_freq,
        bbox_lo: scene.bbox.lo,
        bbox_hi: scene.bbox.hi,
        prim_counts: scene.levels.iter().map(|l| l.primitives.len()).collect(),
        has_direct_offsets: scene.shape_mode == ShapeMode::DirectOffsets,
    };
    let blob = serde_json::to_string(&blob).unwrap();

    let n = scene.template.vertex_count();
    let c = scene.feature_dim;
    let mut records = Vec::new();
    for (name, t) in DEC_NAMES.iter().zip(scene.decoder.params()) {
        records.push(tensor_record(name, t));
    }
    for (name, t) in mlp_record_names(&scene.radiance).iter().zip(scene.radiance.params()) {
        records.push(tensor_record(name, t));
    }
    records.push(tensor_record("background", &scene.background));

    for (li, level) in scene.levels.iter().enumerate() {
        let l = level.primitives.len();
        let mut centers = Vec::with_capacity(l * 3);
        let mut radii = Vec::with_capacity(l);
        let mut latents = Vec::with_capacity(l * LATENT_DIM);
        let mut features = Vec::with_capacity(l * n * c);
        let mut offsets = Vec::new();
        for p in &level.primitives {
            centers.extend_from_slice(&p.center());
            radii.push(p.radius());
            latents.extend_from_slice(&p.latent().data);
            features.extend_from_slice(&p.features.data);
            if let Some(off) = p.direct_offsets() {
                offsets.extend_from_slice(&off.data);
            }
        }
        records.push(Record { name: format!("level{}.centers", li), shape: vec![l, 3], data: centers });
        records.push(Record { name: format!("level{}.radii", li), shape: vec![l], data: radii });
        records.push(Record {
            name: format!("level{}.latents", li),
            shape: vec![l, LATENT_DIM],
            data: latents,
        });
        records.push(Record {
            name: format!("level{}.features", li),
            shape: vec![l, n, c],
            data: features,
        });
        if !offsets.is_empty() {
            records.push(Record {
                name: format!("level{}.offsets", li),
                shape: vec![l, n, 3],
                data: offsets,
            });
        }
    }

    write_records(path, SCENE_MAGIC, &blob, &records)
}

/// Rebuild a scene from a checkpoint. `preset_override` (from the CLI
/// `--preset` flag) swaps in a different MLP architecture before records
/// are matched, so an incompatible checkpoint fails with a shape mismatch.
pub fn load_scene(path: &Path, preset_override: Option<MlpPreset>) -> Result<SceneModel> {
    let (blob, records) = read_records(path, SCENE_MAGIC)?;
    let cfg: SceneBlob =
        serde_json::from_str(&blob).map_err(|e| CliError::Checkpoint(e.to_string()))?;

    let template = build_icosphere(cfg.template_level)
        .map_err(|e| CliError::Checkpoint(e.to_string()))?;
    let n = template.vertex_count();

    let mut rng = Rng::new(0);
    let mut decoder = DecoderParams::init(n, &mut rng);
    let preset = preset_override.unwrap_or(cfg.preset.into());
    let mut radiance = RadianceMlp::init(
        preset,
        cfg.feature_dim,
        cfg.feature_pe_freq,
        cfg.view_pe_freq,
        &mut rng,
    );

    let mut map = RecordMap { records };
    for (name, t) in DEC_NAMES.iter().zip(decoder.params_mut()) {
        map.fill(name, t)?;
    }
    for (name, t) in mlp_record_names(&radiance).iter().zip(radiance.params_mut()) {
        map.fill(name, t)?;
    }
    let mut background = Tensor::zeros(vec![1, 3]).with_grad();
    map.fill("background", &mut background)?;

    let shape_mode: ShapeMode = cfg.shape_mode.into();
    let mut levels = Vec::with_capacity(cfg.voxel_sizes.len());
    for (li, (&size, &j)) in cfg.voxel_sizes.iter().zip(&cfg.j_nearest).enumerate() {
        let l = cfg.prim_counts[li];
        let mut centers = Tensor::zeros(vec![l, 3]);
        let mut radii = Tensor::zeros(vec![l]);
        let mut latents = Tensor::zeros(vec![l, LATENT_DIM]);
        let mut features = Tensor::zeros(vec![l, n, cfg.feature_dim]);
        map.fill(&format!("level{}.centers", li), &mut centers)?;
        map.fill(&format!("level{}.radii", li), &mut radii)?;
        map.fill(&format!("level{}.latents", li), &mut latents)?;
        map.fill(&format!("level{}.features", li), &mut features)?;
        let mut offsets = None;
        if cfg.has_direct_offsets {
            let mut o = Tensor::zeros(vec![l, n, 3]);
            map.fill(&format!("level{}.offsets", li), &mut o)?;
            offsets = Some(o);
        }

        let mut primitives = Vec::with_capacity(l);
        for pi in 0..l {
            let center = [
                centers.data[pi * 3],
                centers.data[pi * 3 + 1],
                centers.data[pi * 3 + 2],
            ];
            let mut prim = Primitive::new(center, radii.data[pi], n, cfg.feature_dim);
            prim.latent_mut()
                .data
                .copy_from_slice(&latents.data[pi * LATENT_DIM..(pi + 1) * LATENT_DIM]);
            prim.features
                .data
                .copy_from_slice(&features.data[pi * n * cfg.feature_dim..(pi + 1) * n * cfg.feature_dim]);
            if let Some(off) = &offsets {
                prim.enable_direct_offsets(n);
                prim.direct_offsets_mut()
                    .unwrap()
                    .data
                    .copy_from_slice(&off.data[pi * n * 3..(pi + 1) * n * 3]);
            }
            primitives.push(prim);
        }
        levels.push(Level { voxel_size: size, j_nearest: j, primitives, bvh: None });
    }
    map.finish()?;

    let mut scene = SceneModel {
        levels,
        decoder,
        template,
        radiance,
        background,
        feature_dim: cfg.feature_dim,
        feature_init_freq: cfg.feature_init_freq,
        shape_mode,
        bbox: Aabb { lo: cfg.bbox_lo, hi: cfg.bbox_hi },
    };
    scene.rebuild_bvh();
    Ok(scene)
}

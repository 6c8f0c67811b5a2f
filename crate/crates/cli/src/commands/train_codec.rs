use std::path::Path;

use meshfield_core::codec::{
    generate_patch_database, train_autoencoder, CodecTrainConfig, DecoderParams, EncoderParams,
};
use meshfield_core::mesh::build_icosphere;
use meshfield_core::rng::Rng;
use meshfield_core::train::LossRecord;

use crate::commands::CommonArgs;
use crate::error::{CliError, Result};
use crate::formats::checkpoint::save_codec;
use crate::formats::csvlog::write_history;

pub fn run(common: &CommonArgs, out: &Path) -> Result<()> {
    let cfg = super::load_config(common)?;
    let template = build_icosphere(cfg.codec.template_level)
        .map_err(|e| CliError::Scene(e.to_string()))?;

    let mut rng = Rng::new(cfg.seed ^ 0xc0dec);
    let mut enc = EncoderParams::init(&mut rng);
    let mut dec = DecoderParams::init(template.vertex_count(), &mut rng);

    let db = generate_patch_database(cfg.codec.db_size, cfg.codec.db_seed);
    let train_cfg = CodecTrainConfig {
        epochs: cfg.codec.epochs,
        lr: cfg.codec.lr,
        chamfer_samples: cfg.codec.chamfer_samples,
        encoder_samples: cfg.codec.encoder_samples,
        w_normal: cfg.codec.w_normal,
        w_lap: cfg.codec.w_lap,
        seed: cfg.seed ^ 0x7a11,
    };
    let outcome = train_autoencoder(&db, &mut enc, &mut dec, &template, &train_cfg);
    if outcome.diverged {
        return Err(CliError::Train(
            "autoencoder diverged; parameters rolled back to last finite epoch".into(),
        ));
    }

    save_codec(out, &enc, &dec, cfg.codec.template_level)?;
    let history: Vec<LossRecord> = outcome
        .history
        .iter()
        .enumerate()
        .map(|(i, &loss)| LossRecord { iteration: i, stage: "train-codec".into(), loss, psnr: None })
        .collect();
    write_history(&out.with_extension("loss.csv"), &history)?;

    println!(
        "train-codec: {} entries x {} epochs, chamfer {:.6} -> {:.6} ({:.1}% of start) -> {}",
        db.len(),
        cfg.codec.epochs,
        outcome.chamfer_start,
        outcome.chamfer_final,
        100.0 * outcome.chamfer_final / outcome.chamfer_start.max(1e-300),
        out.display()
    );
    Ok(())
}

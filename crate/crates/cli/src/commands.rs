use std::path::Path;

use irnet_core::data::{
    crop_patches, load_pair, load_png, load_png8, make_lr, pair_directories, read_patch_cache,
    save_png16, write_patch_cache, DatasetManifest, ImagePair, PatchPair, Role, SR_SCALE,
};
use irnet_core::metrics::{
    luminance_csv, luminance_record_with, profile_csv, profile_ratio, psnr, ssim, EvalReport,
    EvalRow, LumaStandard,
};
use irnet_core::model::{count_macs, count_params, format_k, load_checkpoint};
use irnet_core::train::{fit, split_validation, TrainConfig};
use irnet_core::{IrnetModel, Mode, ModelConfig, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exit::{CliError, EXIT_PARTIAL};
use crate::{
    AnalyzeArgs, AuditArgs, Command, EvalArgs, InferArgs, ModelArgs, PrepareArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Audit(a) => audit(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(irnet_core::Error::io(dir, e)))?;
    }
    std::fs::write(path, text).map_err(|e| irnet_core::Error::io(path, e).into())
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    Ok(s.parse::<Mode>()?)
}

fn model_config(a: &ModelArgs) -> Result<ModelConfig, CliError> {
    let mode = parse_mode(&a.mode)?;
    let mut cfg = ModelConfig::for_mode(mode).with_channels(a.channels);
    if let Some(n) = a.blocks {
        cfg = cfg.with_blocks(n);
    }
    cfg.lrelu_slope = a.lrelu_slope;
    cfg.cca_residual = !a.no_cca_residual;
    cfg.validate()?;
    Ok(cfg)
}

fn luma_standard(s: &str) -> Result<LumaStandard, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "rec709" | "bt709" => Ok(LumaStandard::Rec709),
        "rec2020" | "bt2020" => Ok(LumaStandard::Rec2020),
        other => Err(CliError::usage(format!(
            "unknown luma standard {other:?} (rec709|rec2020)"
        ))),
    }
}

fn crop_all(
    pairs: &[ImagePair],
    mode: Mode,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PatchPair>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs.len() * count);
    for p in pairs {
        out.extend(crop_patches(p, mode, count, size, &mut rng)?);
    }
    Ok(out)
}

fn prepare(a: PrepareArgs) -> Result<(), CliError> {
    let mode = parse_mode(&a.mode)?;
    let pairing = pair_directories(&a.sdr_dir, &a.hdr_dir)?;
    if !pairing.unpaired.is_empty() {
        for stem in &pairing.unpaired {
            eprintln!("unpaired: {stem}");
        }
        return Err(CliError::config(format!(
            "{} image(s) without a partner",
            pairing.unpaired.len()
        )));
    }
    let manifest = DatasetManifest::new(pairing.manifest, Role::Train);
    manifest.write(&a.out_manifest)?;
    println!("{} pairs -> {}", manifest.len(), a.out_manifest.display());
    if let Some(dir) = &a.patches_out {
        let pairs = manifest.load_pairs()?;
        let patches = crop_all(&pairs, mode, a.patches_per_image, a.patch_size, a.seed)?;
        write_patch_cache(dir, &patches)?;
        println!("{} patches -> {}", patches.len(), dir.display());
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let model_cfg = model_config(&a.model)?;
    let patches = match (&a.patches, &a.manifest) {
        (Some(dir), _) => read_patch_cache(dir)?,
        (None, Some(path)) => {
            let pairs = DatasetManifest::read(path)?.load_pairs()?;
            crop_all(
                &pairs,
                model_cfg.mode,
                a.patches_per_image,
                a.patch_size,
                a.seed,
            )?
        }
        (None, None) => {
            return Err(CliError::usage(
                "either --manifest or --patches is required",
            ))
        }
    };
    let (train_set, val_set) = split_validation(patches, a.val_fraction, a.seed);
    let cfg = TrainConfig {
        lr_max: a.lr_max,
        lr_min: a.lr_min,
        batch_size: a.batch_size,
        epochs: a.epochs,
        restart_period_epochs: a.restart_period,
        seed: a.seed.wrapping_add(1),
        eval_every: a.eval_every,
        per_epoch_lr: a.per_epoch_lr,
        augment: !a.no_augment,
        checkpoint_dir: Some(a.out.clone()),
        ..TrainConfig::default()
    };
    let mut model = IrnetModel::build(model_cfg, a.seed)?;
    println!(
        "training {} params on {} patches ({} held out)",
        model.num_params(),
        train_set.len(),
        val_set.len()
    );
    let history = fit(&mut model, &train_set, &val_set, &cfg, |r| {
        match r.val_psnr {
            Some(p) => println!(
                "epoch {} loss {:.6} lr {:.3e} val_psnr {:.3}",
                r.epoch, r.mean_loss, r.lr, p
            ),
            None => println!("epoch {} loss {:.6} lr {:.3e}", r.epoch, r.mean_loss, r.lr),
        }
    })?;
    write_text(&a.out.join("history.csv"), &history.to_csv())?;
    if let Some(best) = history.best_epoch {
        println!("best epoch {best}");
    }
    Ok(())
}

/// SR-ITM evaluation input: the SDR image cropped to a multiple of the
/// scale and downsampled, with the HDR cropped to match.
fn model_io(mode: Mode, pair: &ImagePair) -> Result<(Tensor, Tensor), CliError> {
    match mode {
        Mode::Itm => Ok((pair.sdr.clone(), pair.hdr.clone())),
        Mode::SrItm => {
            let s = pair.hdr.shape();
            let (h, w) = (s.h / SR_SCALE * SR_SCALE, s.w / SR_SCALE * SR_SCALE);
            let lr = make_lr(&pair.sdr.crop(0, 0, h, w)?, SR_SCALE)?;
            Ok((lr, pair.hdr.crop(0, 0, h, w)?))
        }
    }
}

fn predict(
    model: &IrnetModel,
    x: &Tensor,
    tile: usize,
    overlap: usize,
) -> Result<Tensor, CliError> {
    let y = if tile == 0 {
        model.forward(x)?
    } else {
        model.forward_tiled(x, tile, overlap)?
    };
    Ok(y.clamp01())
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    let (model, _) = load_checkpoint(&a.ckpt)?;
    let x = load_png8(&a.input)?;
    let y = predict(&model, &x, a.tile, a.overlap)?;
    save_png16(&y, &a.output)?;
    let s = y.shape();
    println!("{}x{} -> {}", s.w, s.h, a.output.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let (model, cfg) = load_checkpoint(&a.ckpt)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let mut report = EvalReport::default();
    let mut failed = Vec::new();
    for entry in &manifest.entries {
        let pair = match load_pair(entry) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("skipping {}: {e}", entry.name());
                failed.push(entry.name());
                continue;
            }
        };
        let (x, gt) = model_io(cfg.mode, &pair)?;
        let y = predict(&model, &x, a.tile, a.overlap)?;
        report.rows.push(EvalRow {
            name: pair.name,
            psnr: psnr(&y, &gt)?,
            ssim: ssim(&y, &gt)?,
        });
    }
    write_text(&a.report, &report.to_csv())?;
    if report.infinite_rows() > 0 {
        eprintln!(
            "warning: {} image(s) reproduced exactly (infinite PSNR), excluded from the mean",
            report.infinite_rows()
        );
    }
    println!(
        "{} images: PSNR {:.3} dB, SSIM {:.4}",
        report.rows.len(),
        report.mean_psnr(),
        report.mean_ssim()
    );
    if !failed.is_empty() {
        return Err(CliError::new(
            EXIT_PARTIAL,
            format!(
                "{} image(s) failed to load: {}",
                failed.len(),
                failed.join(", ")
            ),
        ));
    }
    Ok(())
}

fn audit(a: AuditArgs) -> Result<(), CliError> {
    let cfg = model_config(&a.model)?;
    let params = count_params(&cfg)?;
    println!("params: {params} ({})", format_k(params));
    if let (Some(h), Some(w)) = (a.height, a.width) {
        let c = count_macs(&cfg, h, w)?;
        println!("macs: {} ({:.2}G)", c.macs, c.macs as f64 / 1e9);
        println!("flops: {} ({:.2}G)", c.flops, c.flops as f64 / 1e9);
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let sdr_std = luma_standard(&a.sdr_luma)?;
    let hdr_std = luma_standard(&a.hdr_luma)?;
    let csv = if let Some(p) = &a.profile {
        let num = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| {
                CliError::usage(format!(
                    "profile {what} must be a non-negative integer, got {s:?}"
                ))
            })
        };
        let (row, x0, x1) = (num(&p[2], "ROW")?, num(&p[3], "X0")?, num(&p[4], "X1")?);
        let img_a = load_png(Path::new(&p[0]))?;
        let img_b = load_png(Path::new(&p[1]))?;
        let prof = profile_ratio(&img_a, &img_b, row, x0, x1, sdr_std)?;
        profile_csv(&prof, x0)
    } else {
        let path = a
            .manifest
            .as_ref()
            .expect("clap requires --manifest without --profile");
        let manifest = DatasetManifest::read(path)?;
        let records = manifest
            .entries
            .iter()
            .map(|e| luminance_record_with(&load_pair(e)?, sdr_std, hdr_std))
            .collect::<irnet_core::Result<Vec<_>>>()?;
        luminance_csv(&records)
    };
    write_text(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

//! L1 training with Adam and a warm-restart cosine schedule.

mod optim;

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use optim::{adam_step, l1_loss, lr_at, AdamState};

use crate::autograd::Tape;
use crate::data::{augment, stack_batch, Batcher, PatchPair};
use crate::error::{Error, Result};
use crate::metrics::{fmt_sig6, psnr};
use crate::model::{save_checkpoint, IrnetModel};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub restart_period_epochs: usize,
    pub seed: u64,
    /// Validate every this many epochs (and after the last one).
    pub eval_every: usize,
    /// Step the schedule once per epoch instead of per iteration.
    pub per_epoch_lr: bool,
    /// Random dihedral transform per patch per step.
    pub augment: bool,
    /// Where `last.ckpt` and `best.ckpt` go, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_max: 5e-4,
            lr_min: 1e-11,
            betas: (0.9, 0.999),
            eps: 1e-8,
            batch_size: 16,
            epochs: 200,
            restart_period_epochs: 60,
            seed: 0,
            eval_every: 1,
            per_epoch_lr: false,
            augment: true,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min < self.lr_max) || self.lr_min < 0.0 {
            return Err(Error::Config(format!(
                "need 0 <= lr_min < lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.restart_period_epochs == 0 {
            return Err(Error::Config(
                "restart_period_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate at the first iteration of the epoch.
    pub lr: f64,
    pub val_psnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// `(fractional epoch, lr)` for every optimizer step.
    pub lr_trace: Vec<(f64, f64)>,
    /// Mean loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl History {
    /// Header `epoch,mean_loss,lr,val_psnr`; a missing validation value is empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,lr,val_psnr\n");
        for r in &self.epochs {
            let val = r.val_psnr.map(fmt_sig6).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.epoch,
                fmt_sig6(r.mean_loss),
                fmt_sig6(r.lr),
                val
            );
        }
        s
    }
}

/// Moves a seeded `fraction` of patches into a validation set.
pub fn split_validation(
    mut patches: Vec<PatchPair>,
    fraction: f64,
    seed: u64,
) -> (Vec<PatchPair>, Vec<PatchPair>) {
    if fraction <= 0.0 || patches.len() < 2 {
        return (patches, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_0a11);
    patches.shuffle(&mut rng);
    let n_val = ((patches.len() as f64 * fraction).round() as usize).clamp(1, patches.len() - 1);
    let val = patches.split_off(patches.len() - n_val);
    (patches, val)
}

/// Mean PSNR of the clamped model output over `patches`.
pub fn evaluate_psnr(model: &IrnetModel, patches: &[PatchPair]) -> Result<f64> {
    let mut total = 0.0;
    let mut finite = 0usize;
    for p in patches {
        let out = model.forward(&p.sdr)?.clamp01();
        let v = psnr(&out, &p.hdr)?;
        if v.is_finite() {
            total += v;
            finite += 1;
        }
    }
    Ok(if finite == 0 {
        f64::INFINITY
    } else {
        total / finite as f64
    })
}

fn check_mode(model: &IrnetModel, patches: &[PatchPair]) -> Result<()> {
    let up = model.config().upscale();
    for p in patches {
        let (a, b) = (p.sdr.shape(), p.hdr.shape());
        if a.h * up != b.h || a.w * up != b.w {
            return Err(Error::InvalidArgument(format!(
                "{} model expects HDR patches {up}x the SDR size, got {a} and {b}",
                model.config().mode
            )));
        }
    }
    Ok(())
}

/// Trains `model` in place. Returns the per-epoch history; with
/// `checkpoint_dir` set, writes `last.ckpt` and `best.ckpt` (best by
/// validation PSNR, or by training loss without a validation set).
pub fn fit(
    model: &mut IrnetModel,
    train: &[PatchPair],
    val: &[PatchPair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set has no patches".into()));
    }
    check_mode(model, train)?;
    check_mode(model, val)?;
    let batcher = Batcher::new(train.len(), cfg.batch_size)?;
    let per_epoch = batcher.batches_per_epoch();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let mut history = History::default();
    let mut best_score = f64::NEG_INFINITY;
    let one = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);

    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if cfg.epochs == 0 {
            save_checkpoint(model, &dir.join("last.ckpt"))?;
            save_checkpoint(model, &dir.join("best.ckpt"))?;
        }
    }

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut epoch_lr = None;
        for (bi, indices) in batcher.epoch(&mut rng).into_iter().enumerate() {
            let progress = if cfg.per_epoch_lr {
                epoch as f64
            } else {
                epoch as f64 + bi as f64 / per_epoch as f64
            };
            let lr = lr_at(progress, cfg);
            epoch_lr.get_or_insert(lr);

            let (sdr, hdr) = if cfg.augment {
                let aug: Vec<PatchPair> = indices
                    .iter()
                    .map(|&i| augment(&train[i], &mut rng))
                    .collect::<Result<_>>()?;
                let all: Vec<usize> = (0..aug.len()).collect();
                stack_batch(&aug, &all)?
            } else {
                stack_batch(train, &indices)?
            };

            let mut tape = Tape::new();
            let x = tape.input(sdr);
            let y = model.forward_tape(&mut tape, x)?;
            let loss_var = tape.mean_abs_diff(y, &hdr)?;
            let loss = tape.scalar(loss_var);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: bi + 1,
                    lr,
                });
            }
            model.params_mut().zero_grad();
            tape.backward(&one, model.params_mut())?;
            adam_step(model.params_mut(), &mut adam, lr, cfg).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch: epoch + 1,
                    batch: bi + 1,
                    lr,
                },
                other => other,
            })?;
            loss_sum += loss;
            history.lr_trace.push((progress, lr));
            history.step_losses.push(loss);
        }

        let is_eval = (epoch + 1) % cfg.eval_every.max(1) == 0 || epoch + 1 == cfg.epochs;
        let val_psnr = if !val.is_empty() && is_eval {
            Some(evaluate_psnr(model, val)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_loss: loss_sum / per_epoch as f64,
            lr: epoch_lr.unwrap_or(cfg.lr_max),
            val_psnr,
        };
        let score = match (val.is_empty(), val_psnr) {
            (true, _) => Some(-record.mean_loss),
            (false, Some(p)) => Some(p),
            (false, None) => None,
        };
        if let Some(dir) = &cfg.checkpoint_dir {
            save_checkpoint(model, &dir.join("last.ckpt"))?;
            if let Some(s) = score.filter(|&s| s > best_score) {
                best_score = s;
                history.best_epoch = Some(epoch + 1);
                save_checkpoint(model, &dir.join("best.ckpt"))?;
            }
        } else if let Some(s) = score.filter(|&s| s > best_score) {
            best_score = s;
            history.best_epoch = Some(epoch + 1);
        }
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use lungmtl_core::metrics::history_csv;
use lungmtl_core::model::{build_model, EpochRecord, Trainer};
use lungmtl_core::nn::Real;

use super::{split_features, Env};
use crate::checkpoint::{Checkpoint, NnMeta};
use crate::cli::TrainArgs;
use crate::config::{require, RunConfig};
use crate::error::{Context, Error, Result};
use crate::features::{read_features, FeatureFile};
use crate::fsio::atomic_write_bytes;

/// `#` comment line recording the settings a history was produced with.
pub fn history_header(cfg: &RunConfig, dtype: &str) -> String {
    let t = &cfg.train;
    let l = &cfg.loss;
    format!(
        "# arch={} dtype={dtype} epochs={} batch_size={} seed={} lr={} w_sound={} w_disease={} lambda_reg={} split_ratio={} split_seed={} by_patient={}\n",
        cfg.model.arch,
        t.epochs,
        t.batch_size,
        t.seed,
        t.adam.lr,
        l.w_sound,
        l.w_disease,
        l.lambda_reg,
        cfg.split.ratio,
        cfg.split.seed,
        cfg.split.by_patient
    )
}

fn default_history_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_stem().unwrap_or_default().to_os_string();
    name.push(".history.csv");
    checkpoint.with_file_name(name)
}

pub fn train(env: &mut Env, args: TrainArgs) -> Result<()> {
    let cfg = &mut env.cfg;
    if args.features.is_some() {
        cfg.paths.feature_file = args.features;
    }
    if args.checkpoint.is_some() {
        cfg.paths.checkpoint = args.checkpoint;
    }
    if args.history.is_some() {
        cfg.paths.history_file = args.history;
    }
    if let Some(a) = args.arch {
        cfg.model.arch = a;
    }
    cfg.train.epochs = args.epochs.unwrap_or(cfg.train.epochs);
    cfg.train.batch_size = args.batch_size.unwrap_or(cfg.train.batch_size);
    cfg.train.adam.lr = args.lr.unwrap_or(cfg.train.adam.lr);
    cfg.split.ratio = args.split_ratio.unwrap_or(cfg.split.ratio);
    cfg.train.validate().context(|| "training settings".into())?;
    cfg.loss.validate().context(|| "loss settings".into())?;

    let features = require(&cfg.paths.feature_file, "--features", "feature_file")?.to_path_buf();
    let checkpoint = require(&cfg.paths.checkpoint, "--checkpoint", "checkpoint")?.to_path_buf();
    let history = cfg.paths.history_file.clone().unwrap_or_else(|| default_history_path(&checkpoint));
    let ff = read_features(&features, Some(&cfg.mfcc))?;
    if ff.is_empty() {
        return Err(Error::bad_file(&features, "feature file holds no examples"));
    }
    if env.cfg.float64 {
        train_typed::<f64>(env, &ff, &features, &checkpoint, &history)
    } else {
        train_typed::<f32>(env, &ff, &features, &checkpoint, &history)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn train_typed<T: Real>(env: &mut Env, ff: &FeatureFile, features: &Path, checkpoint: &Path, history_path: &Path) -> Result<()> {
    let cfg = env.cfg.clone();
    let arch = cfg.arch()?;
    let split = split_features(ff, &cfg.split, features)?;
    let ctx = || features.display().to_string();
    let train_ds = ff.dataset::<T>(&split.train).context(ctx)?;
    let val_ds = if split.test.is_empty() { None } else { Some(ff.dataset::<T>(&split.test).context(ctx)?) };

    let model = build_model::<T>(arch, train_ds.input_shape(), cfg.train.seed).context(|| "building model".into())?;
    let t0 = Instant::now();
    let mut trainer = Trainer::new(model, cfg.train, cfg.loss)
        .context(|| "training settings".into())?
        .with_clock(move || t0.elapsed().as_secs_f64());
    log::info!(
        "training {arch} ({}) on {} examples, validating on {}, {} epochs of batch {}",
        T::NAME,
        train_ds.len(),
        split.test.len(),
        cfg.train.epochs,
        cfg.train.batch_size
    );
    for _ in 0..cfg.train.epochs {
        let r: &EpochRecord = trainer.run_epoch(&train_ds, val_ds.as_ref()).context(|| "training".into())?;
        log::info!(
            "epoch {:>3}: loss {:.4} acc {:.3}/{:.3} | val loss {} acc {}/{} | {:.1}s",
            r.epoch,
            r.train_loss,
            r.train_sound_acc,
            r.train_disease_acc,
            fmt_opt(r.val_loss),
            fmt_opt(r.val_sound_acc),
            fmt_opt(r.val_disease_acc),
            r.wall_time_s.unwrap_or(0.0)
        );
    }
    let (model, history) = trainer.finish();

    let mut csv = history_header(&cfg, T::NAME);
    csv.push_str(&history_csv(&history));
    atomic_write_bytes(history_path, csv.as_bytes())?;
    let meta = NnMeta { mfcc: ff.mfcc, train: cfg.train, loss: cfg.loss, split: cfg.split };
    Checkpoint::nn(&model, &meta).save(checkpoint)?;

    let last = history.last().expect("at least one epoch");
    env.say(format!(
        "epoch {}: train loss {:.4}, sound acc {:.4}, disease acc {:.4}; test loss {}, sound acc {}, disease acc {}",
        last.epoch,
        last.train_loss,
        last.train_sound_acc,
        last.train_disease_acc,
        fmt_opt(last.val_loss),
        fmt_opt(last.val_sound_acc),
        fmt_opt(last.val_disease_acc)
    ))?;
    env.say(format!("checkpoint -> {}\nhistory -> {}", checkpoint.display(), history_path.display()))
}

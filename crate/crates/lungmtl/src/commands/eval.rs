use std::path::Path;
use std::time::Instant;

use lungmtl_core::corpus::{DiseaseLabel, SoundLabel};
use lungmtl_core::metrics::{confusion, report, roc_auc};

use super::{split_features, Env};
use crate::checkpoint::Checkpoint;
use crate::cli::{EvalArgs, EvalSet};
use crate::config::require;
use crate::error::{Context, Result};
use crate::features::read_features;
use crate::fsio::atomic_write_bytes;
use crate::with_model;

struct HeadOutput {
    truth: Vec<usize>,
    pred: Vec<usize>,
    probs: Vec<f64>,
}

fn write_head(env: &mut Env, out_dir: &Path, head: &str, names: &[&str], h: &HeadOutput, wall: f64) -> Result<()> {
    let k = names.len();
    let ctx = || format!("{head} head");
    let cm = confusion(&h.truth, &h.pred, k).context(ctx)?;
    let rep = report(&cm, wall).context(ctx)?;
    atomic_write_bytes(&out_dir.join(format!("{head}_report.txt")), rep.to_text(names).as_bytes())?;
    atomic_write_bytes(&out_dir.join(format!("{head}_report.csv")), rep.to_csv(names).as_bytes())?;
    atomic_write_bytes(&out_dir.join(format!("{head}_confusion.csv")), cm.to_csv(names).as_bytes())?;
    let auc = match roc_auc(&h.truth, &h.probs, k) {
        Ok(roc) => {
            atomic_write_bytes(&out_dir.join(format!("{head}_roc_points.csv")), roc.points_csv(names).as_bytes())?;
            atomic_write_bytes(&out_dir.join(format!("{head}_roc_auc.csv")), roc.auc_csv(names).as_bytes())?;
            format!("{:.4}", roc.macro_auc)
        }
        Err(e) => {
            log::warn!("{head} head: no ROC curve: {e}");
            "undefined".into()
        }
    };
    env.say(format!("== {head} head: {} examples ==", h.truth.len()))?;
    env.say(rep.to_text(names))?;
    env.say(format!("confusion (rows = truth):\n{}", cm.to_csv(names)))?;
    env.say(format!("macro ROC AUC: {auc}\n"))
}

pub fn eval(env: &mut Env, args: EvalArgs) -> Result<()> {
    let p = &mut env.cfg.paths;
    if args.features.is_some() {
        p.feature_file = args.features;
    }
    if args.checkpoint.is_some() {
        p.checkpoint = args.checkpoint;
    }
    if args.out_dir.is_some() {
        p.output_dir = args.out_dir;
    }
    let p = env.cfg.paths.clone();
    let features = require(&p.feature_file, "--features", "feature_file")?;
    let ckpt_path = require(&p.checkpoint, "--checkpoint", "checkpoint")?;
    let out_dir = require(&p.output_dir, "--out-dir", "output_dir")?;

    let ckpt = Checkpoint::load(ckpt_path)?.into_nn(ckpt_path)?;
    let ff = read_features(features, Some(&ckpt.mfcc))?;
    let idx = match args.on {
        EvalSet::All => ff.all_indices(),
        EvalSet::Train => split_features(&ff, &ckpt.split, features)?.train,
        EvalSet::Test => split_features(&ff, &ckpt.split, features)?.test,
    };
    let model = ckpt.build_model(ckpt_path)?;
    let batch = ckpt.train.batch_size;

    let t0 = Instant::now();
    let ctx = || features.display().to_string();
    let (sound, disease) = with_model!(&model, m => {
        let ds = ff.dataset(&idx).context(ctx)?;
        let p = m.predict_dataset(&ds, batch).context(ctx)?;
        (
            HeadOutput { truth: ds.sound.clone(), pred: p.sound, probs: p.sound_probs.to_f64() },
            HeadOutput { truth: ds.disease.clone(), pred: p.disease, probs: p.disease_probs.to_f64() },
        )
    });
    let wall = t0.elapsed().as_secs_f64();

    let sound_names = SoundLabel::ALL.map(SoundLabel::name);
    let disease_names = DiseaseLabel::ALL.map(DiseaseLabel::name);
    write_head(env, out_dir, "sound", &sound_names, &sound, wall)?;
    write_head(env, out_dir, "disease", &disease_names, &disease, wall)?;
    env.say(format!("inference wall time: {wall:.3} s; outputs in {}", out_dir.display()))
}

use std::fmt::Write as _;
use std::path::Path;

use lungmtl_core::corpus::{stratified_split, DemographicRecord};
use lungmtl_core::metrics::{confusion, report};
use lungmtl_core::risk::{
    assign_risk, feature_rows, fit_forest_tree, fit_rbf_svm, fit_softmax_regression, predict_risk, ForestConfig,
    ForestModel, RiskLevel, RiskModel,
};
use rayon::prelude::*;

use super::Env;
use crate::checkpoint::Checkpoint;
use crate::cli::{RiskFitArgs, RiskLabelArgs, RiskPredictArgs};
use crate::config::{require, RiskKind};
use crate::error::{Context, Error, Result};
use crate::fsio::atomic_write_bytes;
use crate::icbhi::read_demographics;

/// Same trees as the serial fit, built on the current rayon pool.
pub fn fit_forest_parallel(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &ForestConfig) -> lungmtl_core::Result<ForestModel> {
    if cfg.n_estimators == 0 {
        return Err(lungmtl_core::Error::InvalidConfig("n_estimators must be >= 1".into()));
    }
    let trees = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| fit_forest_tree(x, y, k, cfg, t))
        .collect::<lungmtl_core::Result<Vec<_>>>()?;
    let features = x.first().map_or(0, Vec::len);
    Ok(ForestModel { trees, classes: k, features, config: *cfg })
}

/// Records inside the rubric with their rule levels; the rest are logged
/// and dropped.
fn labeled(records: Vec<DemographicRecord>, path: &Path) -> (Vec<DemographicRecord>, Vec<RiskLevel>) {
    let mut keep = Vec::with_capacity(records.len());
    let mut levels = Vec::with_capacity(records.len());
    for r in records {
        match assign_risk(&r) {
            Ok(l) => {
                keep.push(r);
                levels.push(l);
            }
            Err(e) => log::warn!("{}: excluding patient {}: {e}", path.display(), r.patient_id),
        }
    }
    (keep, levels)
}

fn demographics_path(env: &mut Env, flag: Option<std::path::PathBuf>) -> Result<std::path::PathBuf> {
    if flag.is_some() {
        env.cfg.paths.demographics_file = flag;
    }
    Ok(require(&env.cfg.paths.demographics_file, "--demographics", "demographics_file")?.to_path_buf())
}

fn emit_csv(env: &mut Env, out: Option<&Path>, csv: &str) -> Result<()> {
    match out {
        Some(p) => {
            atomic_write_bytes(p, csv.as_bytes())?;
            env.say(format!("wrote {}", p.display()))
        }
        None => env.say(csv.trim_end()),
    }
}

pub fn risk_label(env: &mut Env, args: RiskLabelArgs) -> Result<()> {
    let path = demographics_path(env, args.demographics)?;
    let (records, levels) = labeled(read_demographics(&path)?, &path);
    let mut csv = String::from("patient_id,age_years,gender,bmi_kg_m2,risk_level,risk_name\n");
    for (r, l) in records.iter().zip(&levels) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.patient_id,
            r.age_years,
            r.gender.code(),
            r.bmi_kg_m2,
            l.index(),
            l.name()
        );
    }
    emit_csv(env, args.out.as_deref(), &csv)
}

const LEVEL_NAMES: [&str; RiskLevel::COUNT] = ["very_severe", "severe", "moderate", "mild"];

pub fn risk_fit(env: &mut Env, args: RiskFitArgs) -> Result<()> {
    let path = demographics_path(env, args.demographics)?;
    if let Some(m) = args.model {
        env.cfg.risk.model = m;
    }
    if args.checkpoint.is_some() {
        env.cfg.paths.checkpoint = args.checkpoint;
    }
    let ckpt_path = require(&env.cfg.paths.checkpoint, "--checkpoint", "checkpoint")?.to_path_buf();
    let (records, levels) = labeled(read_demographics(&path)?, &path);
    if records.is_empty() {
        return Err(Error::bad_file(&path, "no records inside the risk rubric"));
    }
    let x = feature_rows(&records);
    let y: Vec<usize> = levels.iter().map(|l| l.index()).collect();
    let spec = env.cfg.split;
    let split = stratified_split(&y, spec.ratio, spec.seed).context(|| format!("{}: splitting", path.display()))?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (xtr, ytr) = pick(&split.train);
    let (xte, yte) = pick(&split.test);
    let k = RiskLevel::COUNT;
    let risk = env.cfg.risk;
    let ctx = || "fitting risk classifier".to_string();
    let model = match risk.model {
        RiskKind::Forest => RiskModel::Forest(env.pool.install(|| fit_forest_parallel(&xtr, &ytr, k, &risk.forest)).context(ctx)?),
        RiskKind::Softmax => RiskModel::SoftmaxRegression(fit_softmax_regression(&xtr, &ytr, k, &risk.softmax).context(ctx)?),
        RiskKind::Svm => RiskModel::RbfSvm(fit_rbf_svm(&xtr, &ytr, k, &risk.svm).context(ctx)?),
    };
    env.say(format!(
        "{}: {} training / {} test records, 3 features",
        model.kind_name(),
        split.train.len(),
        split.test.len()
    ))?;
    match &model {
        RiskModel::Forest(f) => env.say(format!("trees: {}, seed: {}", f.trees.len(), f.config.seed))?,
        RiskModel::SoftmaxRegression(m) => env.say(format!(
            "iterations: {}, converged: {}, final loss: {:.6}",
            m.iterations,
            m.converged,
            m.loss_history.last().copied().unwrap_or(f64::NAN)
        ))?,
        RiskModel::RbfSvm(m) => {
            let gamma = m.config.gamma.unwrap_or(1.0 / m.features as f64);
            env.say(format!(
                "gamma: {gamma} (1/{} features), C: {}, max KKT residual: {:.3e}",
                m.features, m.config.c, m.max_kkt_residual
            ))?
        }
    }
    if !xte.is_empty() {
        let pred = model.predict(&xte).context(ctx)?;
        let rep = report(&confusion(&yte, &pred, k).context(ctx)?, 0.0).context(ctx)?;
        env.say(format!("test accuracy: {:.4}", rep.accuracy))?;
        env.say(rep.to_text(&LEVEL_NAMES))?;
    }
    Checkpoint::risk(model, spec).save(&ckpt_path)?;
    env.say(format!("checkpoint -> {}", ckpt_path.display()))
}

pub fn risk_predict(env: &mut Env, args: RiskPredictArgs) -> Result<()> {
    let path = demographics_path(env, args.demographics)?;
    if args.checkpoint.is_some() {
        env.cfg.paths.checkpoint = args.checkpoint;
    }
    let ckpt_path = require(&env.cfg.paths.checkpoint, "--checkpoint", "checkpoint")?.to_path_buf();
    let ckpt = Checkpoint::load(&ckpt_path)?.into_risk(&ckpt_path)?;
    let (records, levels) = labeled(read_demographics(&path)?, &path);
    if records.is_empty() {
        return Err(Error::bad_file(&path, "no records inside the risk rubric"));
    }
    let (pred, rep) = predict_risk(&ckpt.model, &records).context(|| format!("{}: predicting", path.display()))?;
    let mut csv = String::from("patient_id,predicted_level,predicted_name,rule_level\n");
    for ((r, p), l) in records.iter().zip(&pred).zip(&levels) {
        let _ = writeln!(csv, "{},{},{},{}", r.patient_id, p.index(), p.name(), l.index());
    }
    emit_csv(env, args.out.as_deref(), &csv)?;
    env.say(format!("{} on {} records: accuracy {:.4}", ckpt.model.kind_name(), records.len(), rep.accuracy))?;
    env.say(rep.to_text(&LEVEL_NAMES))
}

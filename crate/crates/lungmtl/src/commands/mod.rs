//! One function per verb. Results go to the supplied writer; progress and
//! warnings go to the log.

mod eval;
mod extract;
mod predict;
mod risk;
mod synth;
mod train;

use std::io::Write;
use std::path::Path;

use lungmtl_core::corpus::{grouped_split, stratified_split, Split};

pub use eval::eval;
pub use extract::extract;
pub use predict::predict;
pub use risk::{fit_forest_parallel, risk_fit, risk_label, risk_predict};
pub use synth::synth;
pub use train::train;

use crate::checkpoint::SplitSpec;
use crate::cli::{Cli, Command, RiskCommand};
use crate::config::RunConfig;
use crate::error::{Context, Error, Result};
use crate::features::FeatureFile;

/// Everything a verb needs besides its own arguments.
pub struct Env<'a> {
    pub cfg: RunConfig,
    pub pool: rayon::ThreadPool,
    pub out: &'a mut dyn Write,
    out_closed: bool,
}

impl<'a> Env<'a> {
    pub fn new(cfg: RunConfig, out: &'a mut dyn Write) -> Result<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.workers {
            if w == 0 {
                return Err(Error::Usage("--workers must be at least 1".into()));
            }
            b = b.num_threads(w);
        }
        let pool = b.build().map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { cfg, pool, out, out_closed: false })
    }

    /// Writes one line of output. A closed reader (e.g. `| head`) stops
    /// further output but not the command's file writes.
    pub(crate) fn say(&mut self, text: impl AsRef<str>) -> Result<()> {
        if self.out_closed {
            return Ok(());
        }
        match writeln!(self.out, "{}", text.as_ref()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {
                self.out_closed = true;
                Ok(())
            }
            r => r.map_err(Error::io("<stdout>")),
        }
    }
}

/// Resolves the run config (file, then global flags) and dispatches.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.float64 |= cli.float64;
    let mut env = Env::new(cfg, out)?;
    match cli.command {
        Command::Synth(a) => synth(&mut env, a),
        Command::Extract(a) => extract(&mut env, a),
        Command::Train(a) => train(&mut env, a),
        Command::Eval(a) => eval(&mut env, a),
        Command::Predict(a) => predict(&mut env, a),
        Command::Risk(RiskCommand::Label(a)) => risk_label(&mut env, a),
        Command::Risk(RiskCommand::Fit(a)) => risk_fit(&mut env, a),
        Command::Risk(RiskCommand::Predict(a)) => risk_predict(&mut env, a),
    }
}

/// Train/test partition of a feature file: stratified by sound label, or
/// grouped by patient.
pub fn split_features(ff: &FeatureFile, spec: &SplitSpec, path: &Path) -> Result<Split> {
    let ctx = || format!("{}: splitting", path.display());
    let split = if spec.by_patient {
        let groups: Vec<u32> = ff.records.iter().map(|r| r.patient_id).collect();
        grouped_split(&groups, spec.ratio, spec.seed).context(ctx)?
    } else {
        let s = stratified_split(&ff.sound_labels(), spec.ratio, spec.seed).context(ctx)?;
        if !s.stratified {
            log::warn!("{}: a sound class has fewer than 2 examples; split is unstratified", path.display());
        }
        s
    };
    Ok(split)
}

use lungmtl_core::dsp::MfccExtractor;

use super::Env;
use crate::cli::ExtractArgs;
use crate::config::require;
use crate::error::{Context, Result};
use crate::features::{write_features, FeatureFile};
use crate::icbhi::{extract_corpus, load_corpus, Granularity};

pub fn extract(env: &mut Env, args: ExtractArgs) -> Result<()> {
    let p = &mut env.cfg.paths;
    if args.audio_dir.is_some() {
        p.audio_dir = args.audio_dir;
    }
    if args.diagnosis.is_some() {
        p.diagnosis_file = args.diagnosis;
    }
    if args.out.is_some() {
        p.feature_file = args.out;
    }
    env.cfg.extract.cycles |= args.cycles;
    let p = env.cfg.paths.clone();
    let audio_dir = require(&p.audio_dir, "--audio-dir", "audio_dir")?;
    let diagnosis = require(&p.diagnosis_file, "--diagnosis", "diagnosis_file")?;
    let out = require(&p.feature_file, "--out", "feature_file")?;

    let mfcc = env.cfg.mfcc;
    let ex = MfccExtractor::new(mfcc).context(|| "MFCC settings".into())?;
    let corpus = load_corpus(audio_dir, diagnosis, None)?;
    let granularity = if env.cfg.extract.cycles { Granularity::Cycle } else { Granularity::Recording };
    let records = env.pool.install(|| extract_corpus(&corpus.recordings, &ex, granularity))?;
    let file = FeatureFile { mfcc, records };
    write_features(out, &file)?;
    let (rows, cols) = file.matrix_shape();
    env.say(format!(
        "extracted {} examples ({rows}x{cols}) from {} recordings, {} skipped -> {}",
        file.len(),
        corpus.recordings.len(),
        corpus.skipped.len(),
        out.display()
    ))
}

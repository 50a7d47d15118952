use lungmtl_core::corpus::{DiseaseLabel, SoundLabel};
use lungmtl_core::dsp::extract_mfcc;
use lungmtl_core::nn::Tensor;
use serde_json::json;

use super::Env;
use crate::checkpoint::Checkpoint;
use crate::cli::PredictArgs;
use crate::config::require;
use crate::error::{Context, Result};
use crate::wav::read_wav;
use crate::with_model;

pub fn predict(env: &mut Env, args: PredictArgs) -> Result<()> {
    if args.checkpoint.is_some() {
        env.cfg.paths.checkpoint = args.checkpoint;
    }
    let ckpt_path = require(&env.cfg.paths.checkpoint, "--checkpoint", "checkpoint")?.to_path_buf();
    let ckpt = Checkpoint::load(&ckpt_path)?.into_nn(&ckpt_path)?;
    let clip = read_wav(&args.wav)?;
    let ctx = || args.wav.display().to_string();
    let fm = extract_mfcc(&clip, &ckpt.mfcc).context(ctx)?;
    let model = ckpt.build_model(&ckpt_path)?;
    let (sound_probs, disease_probs) = with_model!(&model, m => {
        let x = Tensor::from_f64(&[1, 1, fm.rows(), fm.cols()], fm.values()).context(ctx)?;
        let p = m.predict(&x).context(ctx)?;
        (p.sound_probs.to_f64(), p.disease_probs.to_f64())
    });
    let argmax = |v: &[f64]| {
        v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
    };
    let sound = SoundLabel::from_index(argmax(&sound_probs)).expect("4 sound probabilities");
    let disease = DiseaseLabel::from_index(argmax(&disease_probs)).expect("6 disease probabilities");
    let doc = json!({
        "file": args.wav.display().to_string(),
        "sound": sound.name(),
        "disease": disease.name(),
        "sound_classes": SoundLabel::ALL.map(SoundLabel::name),
        "sound_probs": sound_probs,
        "disease_classes": DiseaseLabel::ALL.map(DiseaseLabel::name),
        "disease_probs": disease_probs,
    });
    env.say(doc.to_string())
}

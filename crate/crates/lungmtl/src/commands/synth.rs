use std::fmt::Write as _;

use lungmtl_core::corpus::{synth_corpus, synth_demographics, Gender, SynthParams};

use super::Env;
use crate::cli::SynthArgs;
use crate::config::require;
use crate::error::{Context, Result};
use crate::fsio::atomic_write_bytes;
use crate::wav::write_wav;

/// Two equal cycles per clip, both carrying the clip's flags.
fn annotation(duration_s: f64, crackle: bool, wheeze: bool) -> String {
    let mid = duration_s / 2.0;
    let (c, w) = (crackle as u8, wheeze as u8);
    format!("0\t{mid}\t{c}\t{w}\n{mid}\t{duration_s}\t{c}\t{w}\n")
}

pub fn synth(env: &mut Env, args: SynthArgs) -> Result<()> {
    let s = &mut env.cfg.synth;
    s.n_per_class = args.n_per_class.unwrap_or(s.n_per_class);
    s.duration_s = args.duration.unwrap_or(s.duration_s);
    s.sample_rate_hz = args.sample_rate.unwrap_or(s.sample_rate_hz);
    s.demographics = args.demographics.unwrap_or(s.demographics);
    let s = *s;
    let out_dir = args.out.or_else(|| env.cfg.paths.output_dir.clone());
    let out_dir = require(&out_dir, "--out", "output_dir")?.to_path_buf();

    let params = SynthParams {
        n_per_class: s.n_per_class,
        seed: s.seed,
        sample_rate_hz: s.sample_rate_hz,
        duration_s: s.duration_s,
    };
    let clips = synth_corpus(&params).context(|| "synthetic corpus".into())?;
    let audio = out_dir.join("audio");
    let mut diagnosis = String::from("patient_id,diagnosis\n");
    for c in &clips {
        let id = &c.clip.recording_id;
        write_wav(&audio.join(format!("{id}.wav")), &c.clip)?;
        let (crackle, wheeze) = c.sound.flags();
        atomic_write_bytes(&audio.join(format!("{id}.txt")), annotation(c.clip.duration_s(), crackle, wheeze).as_bytes())?;
        let _ = writeln!(diagnosis, "{},{}", c.clip.patient_id, c.disease.name());
    }
    atomic_write_bytes(&out_dir.join("diagnosis.csv"), diagnosis.as_bytes())?;

    let mut demo = String::new();
    for r in synth_demographics(s.demographics, s.seed) {
        let sex = match r.gender {
            Gender::Female => "F",
            Gender::Male => "M",
        };
        let _ = writeln!(demo, "{}\t{}\t{sex}\t{}\tNA\tNA", r.patient_id, r.age_years, r.bmi_kg_m2);
    }
    atomic_write_bytes(&out_dir.join("demographics.txt"), demo.as_bytes())?;

    env.say(format!(
        "wrote {} clips ({} per class, {} s at {} Hz) and {} demographic records to {}",
        clips.len(),
        s.n_per_class,
        s.duration_s,
        s.sample_rate_hz,
        s.demographics,
        out_dir.display()
    ))
}

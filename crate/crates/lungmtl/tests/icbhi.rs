use std::path::Path;

use lungmtl::icbhi::{extract_corpus, load_corpus, read_demographics, Granularity};
use lungmtl::wav::write_wav;
use lungmtl_core::corpus::{AudioClip, DiseaseLabel, SoundLabel};
use lungmtl_core::dsp::{MfccConfig, MfccExtractor};

fn recording(dir: &Path, stem: &str, cycles: &[(f64, f64, u8, u8)]) {
    let clip = AudioClip::new((0..8000).map(|i| (i as f64 * 0.01).sin() * 0.3).collect(), 4000, 0, stem).unwrap();
    write_wav(&dir.join(format!("{stem}.wav")), &clip).unwrap();
    let txt: String = cycles.iter().map(|(a, b, c, w)| format!("{a}\t{b}\t{c}\t{w}\n")).collect();
    std::fs::write(dir.join(format!("{stem}.txt")), txt).unwrap();
}

fn fixture() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    let audio = d.path().join("audio");
    std::fs::create_dir(&audio).unwrap();
    recording(&audio, "101_1b1_Al_sc_Meditron", &[(0.0, 1.0, 1, 0), (1.0, 2.0, 0, 0)]);
    recording(&audio, "102_1b1_Ar_sc_Meditron", &[(0.0, 0.5, 0, 1), (0.5, 1.0, 1, 1), (1.0, 2.0, 0, 0)]);
    recording(&audio, "103_2b2_Tc_mc_LittC2SE", &[(0.0, 2.0, 0, 0)]);
    // Asthma is outside the label set.
    recording(&audio, "104_1b1_Al_sc_Litt3200", &[(0.0, 2.0, 1, 0)]);
    // No diagnosis row.
    recording(&audio, "199_1b1_Al_sc_Meditron", &[(0.0, 2.0, 1, 0)]);
    // Unparseable name.
    recording(&audio, "notes", &[(0.0, 2.0, 0, 0)]);
    // No annotation.
    let clip = AudioClip::new(vec![0.1; 100], 4000, 0, "x").unwrap();
    write_wav(&audio.join("105_1b1_Al_sc_Meditron.wav"), &clip).unwrap();
    std::fs::write(d.path().join("diagnosis.csv"), "101\tCOPD\n102\tPneumonia\n103\tHealthy\n104\tAsthma\n105\tURTI\n").unwrap();
    d
}

#[test]
fn labels_and_skips() {
    let d = fixture();
    let c = load_corpus(&d.path().join("audio"), &d.path().join("diagnosis.csv"), None).unwrap();
    let stems: Vec<&str> = c.recordings.iter().map(|r| r.stem.as_str()).collect();
    assert_eq!(stems, ["101_1b1_Al_sc_Meditron", "102_1b1_Ar_sc_Meditron", "103_2b2_Tc_mc_LittC2SE"]);
    assert_eq!(c.recordings[0].sound, SoundLabel::Crackles);
    assert_eq!(c.recordings[0].disease, DiseaseLabel::Copd);
    assert_eq!(c.recordings[1].sound, SoundLabel::Both);
    assert_eq!(c.recordings[1].disease, DiseaseLabel::Pneumonia);
    assert_eq!(c.recordings[2].sound, SoundLabel::Healthy);
    assert_eq!(c.skipped.len(), 4);

    let n = c.counts();
    assert_eq!((n.recordings, n.cycles), (3, 6));
    assert_eq!((n.cycles_crackle_only, n.cycles_wheeze_only, n.cycles_both, n.cycles_normal), (1, 1, 1, 3));
    assert_eq!(n.sound.iter().sum::<usize>(), 3);
}

#[test]
fn empty_directory_gives_empty_corpus() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("diagnosis.csv"), "101\tCOPD\n").unwrap();
    let c = load_corpus(d.path(), &d.path().join("diagnosis.csv"), None).unwrap();
    assert!(c.is_empty());
}

#[test]
fn cycle_granularity() {
    let d = fixture();
    let c = load_corpus(&d.path().join("audio"), &d.path().join("diagnosis.csv"), None).unwrap();
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    let recs = extract_corpus(&c.recordings, &ex, Granularity::Recording).unwrap();
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[1].sound, SoundLabel::Both);
    let cyc = extract_corpus(&c.recordings, &ex, Granularity::Cycle).unwrap();
    let ids: Vec<&str> = cyc.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids[2], "102_1b1_Ar_sc_Meditron#0");
    assert_eq!(cyc.len(), 6);
    let sounds: Vec<SoundLabel> = cyc.iter().map(|r| r.sound).collect();
    assert_eq!(sounds[2..5], [SoundLabel::Wheezes, SoundLabel::Both, SoundLabel::Healthy]);
    assert!(cyc.iter().all(|r| r.features.rows() == 20 && r.features.cols() == 498));
    assert_eq!(cyc[3].patient_id, 102);
}

#[test]
fn demographics_drop_incomplete_rows() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("demo.txt");
    std::fs::write(&p, "101\t70\tF\t28.47\tNA\tNA\n102\t3\tM\tNA\tNA\tNA\n103\t75\tM\t25.21\tNA\tNA\n").unwrap();
    let recs = read_demographics(&p).unwrap();
    assert_eq!(recs.iter().map(|r| r.patient_id).collect::<Vec<_>>(), [101, 103]);
}

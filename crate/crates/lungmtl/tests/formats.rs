use std::path::Path;

use lungmtl::checkpoint::{AnyModel, Checkpoint, NnMeta, Payload, SplitSpec};
use lungmtl::features::{read_features, write_features, FeatureFile, FeatureRecord};
use lungmtl::fsio::atomic_write;
use lungmtl::Error;
use lungmtl_core::corpus::{synth_demographics, AudioClip, DiseaseLabel, SoundLabel};
use lungmtl_core::dsp::{MfccConfig, MfccExtractor};
use lungmtl_core::model::{build_model, ArchId, JointLossConfig, TrainConfig};
use lungmtl_core::nn::Tensor;
use lungmtl_core::risk::{assign_risk, feature_rows, fit_forest, fit_softmax_regression, ForestConfig, RiskModel, SoftmaxConfig};

fn feature_file(mfcc: MfccConfig) -> FeatureFile {
    let ex = MfccExtractor::new(mfcc).unwrap();
    let records = (0..3u32)
        .map(|i| {
            let samples = (0..4000).map(|t| ((t as f64) * 0.01 * (i + 1) as f64).sin() * 0.5).collect();
            let clip = AudioClip::new(samples, 4000, 100 + i, format!("r{i}")).unwrap();
            FeatureRecord {
                id: clip.recording_id.clone(),
                patient_id: clip.patient_id,
                sound: SoundLabel::from_index(i as usize).unwrap(),
                disease: DiseaseLabel::from_index(5 - i as usize).unwrap(),
                features: ex.extract(&clip).unwrap(),
            }
        })
        .collect();
    FeatureFile { mfcc, records }
}

#[test]
fn features_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.feat"), dir.path().join("b.feat"));
    let ff = feature_file(MfccConfig::default());
    write_features(&a, &ff).unwrap();
    let back = read_features(&a, Some(&MfccConfig::default())).unwrap();
    assert_eq!(back, ff);
    write_features(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ds = back.dataset::<f32>(&[2, 0]).unwrap();
    assert_eq!(ds.input_shape(), [1, 20, 498]);
    assert_eq!(ds.sound, vec![2, 0]);
    assert_eq!(ds.disease, vec![3, 5]);
}

#[test]
fn features_config_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.feat");
    write_features(&p, &feature_file(MfccConfig::default())).unwrap();
    let other = MfccConfig { n_mel_filters: 40, ..MfccConfig::default() };
    assert!(matches!(read_features(&p, Some(&other)), Err(Error::ConfigMismatch { .. })));
    assert!(read_features(&p, None).is_ok());
}

#[test]
fn features_truncated_or_padded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.feat");
    write_features(&p, &feature_file(MfccConfig::default())).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_features(&p, None), Err(Error::BadFile { .. })));
    let mut longer = bytes.clone();
    longer.push(0);
    std::fs::write(&p, &longer).unwrap();
    assert!(matches!(read_features(&p, None), Err(Error::BadFile { .. })));
    std::fs::write(&p, b"hello\n").unwrap();
    assert!(matches!(read_features(&p, None), Err(Error::BadFile { .. })));
}

fn meta() -> NnMeta {
    NnMeta {
        mfcc: MfccConfig::default(),
        train: TrainConfig::default(),
        loss: JointLossConfig::default(),
        split: SplitSpec { ratio: 0.75, seed: 7, by_patient: true },
    }
}

#[test]
fn nn_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    let m = build_model::<f64>(ArchId::Cnn2dMtl, [1, 20, 498], 3).unwrap();
    let ck = Checkpoint::nn(&m, &meta());
    ck.save(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let nn = Checkpoint::load(&p).unwrap().into_nn(&p).unwrap();
    assert_eq!(nn.dtype, "f64");
    assert_eq!(nn.split, meta().split);
    let AnyModel::F64(back) = nn.build_model(&p).unwrap() else { panic!("wrong dtype") };
    assert_eq!(Checkpoint::nn(&back, &meta()).to_json(), text);
    let x = Tensor::<f64>::from_f64(&[1, 1, 20, 498], &vec![0.25; 20 * 498]).unwrap();
    assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
}

#[test]
fn risk_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    let recs = synth_demographics(80, 5);
    let x = feature_rows(&recs);
    let y: Vec<usize> = recs.iter().map(|r| assign_risk(r).unwrap().index()).collect();
    for model in [
        RiskModel::Forest(fit_forest(&x, &y, 4, &ForestConfig { n_estimators: 5, ..ForestConfig::default() }).unwrap()),
        RiskModel::SoftmaxRegression(fit_softmax_regression(&x, &y, 4, &SoftmaxConfig::default()).unwrap()),
    ] {
        let ck = Checkpoint::risk(model.clone(), SplitSpec::default());
        ck.save(&p).unwrap();
        let loaded = Checkpoint::load(&p).unwrap();
        assert_eq!(loaded.to_json(), std::fs::read_to_string(&p).unwrap());
        let r = loaded.into_risk(&p).unwrap();
        assert_eq!(r.model.predict(&x).unwrap(), model.predict(&x).unwrap());
    }
}

#[test]
fn checkpoint_kind_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    let m = build_model::<f32>(ArchId::MobileNetMtl, [1, 20, 498], 1).unwrap();
    let json = Checkpoint::nn(&m, &meta()).to_json();
    let ck = Checkpoint::from_json(&json, &p).unwrap();
    assert!(matches!(ck.payload, Payload::NnModel(_)));
    assert!(matches!(ck.clone().into_risk(&p), Err(Error::UnreadableCheckpoint { .. })));

    let future = json.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert_ne!(future, json);
    assert!(matches!(Checkpoint::from_json(&future, &p), Err(Error::UnreadableCheckpoint { .. })));
    assert!(matches!(Checkpoint::from_json("{", &p), Err(Error::UnreadableCheckpoint { .. })));
    assert!(matches!(Checkpoint::load(Path::new("/nonexistent/m.json")), Err(Error::UnreadableCheckpoint { .. })));

    let wrong_shape = json.replacen("\"shape\": [", "\"shape\": [2, ", 1);
    std::fs::write(&p, wrong_shape).unwrap();
    let nn = Checkpoint::load(&p).unwrap().into_nn(&p).unwrap();
    assert!(nn.build_model(&p).is_err());
}

#[test]
fn failed_atomic_write_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("out.txt");
    let r = atomic_write(&p, |w| {
        use std::io::Write;
        w.write_all(b"partial").map_err(Error::io("x"))?;
        Err(Error::Usage("boom".into()))
    });
    assert!(r.is_err());
    assert!(!p.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    std::fs::write(&p, "old").unwrap();
    let _ = atomic_write(&p, |_| Err(Error::Usage("boom".into())));
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "old");
}

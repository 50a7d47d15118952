use lungmtl_core::corpus::{stratified_split, synth_demographics, DemographicRecord, Gender};
use lungmtl_core::risk::*;
use lungmtl_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rec(age: f64, gender: u8, bmi: f64) -> DemographicRecord {
    let g = if gender == 0 { Gender::Female } else { Gender::Male };
    DemographicRecord::new(1, age, g, bmi).unwrap()
}

/// Reference (age, gender, BMI, risk) rows.
const TABLE: [(f64, u8, f64, usize); 15] = [
    (70.0, 0, 28.47, 1),
    (73.0, 0, 21.0, 1),
    (75.0, 0, 33.7, 1),
    (84.0, 0, 33.53, 1),
    (75.0, 1, 25.21, 1),
    (60.0, 1, 22.86, 2),
    (58.0, 1, 28.41, 2),
    (77.0, 1, 23.12, 1),
    (68.0, 1, 24.4, 1),
    (81.0, 1, 36.76, 1),
    (78.0, 1, 35.14, 1),
    (65.0, 1, 29.07, 1),
    (65.0, 0, 24.3, 1),
    (85.0, 0, 17.1, 0),
    (71.0, 1, 34.0, 1),
];

#[test]
fn rule_reproduces_reference_rows() {
    for (age, g, bmi, want) in TABLE {
        assert_eq!(assign_risk(&rec(age, g, bmi)).unwrap().index(), want, "{age} {g} {bmi}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rule_monotone_in_age(age in 35.0f64..100.0, bmi in 10.0f64..60.0, male in any::<bool>()) {
        let g = u8::from(male);
        let older = assign_risk(&rec(age, g, bmi)).unwrap().index();
        for younger in [age - 1.0, age - 10.0, age - 30.0] {
            if younger >= 35.0 {
                prop_assert!(assign_risk(&rec(younger, g, bmi)).unwrap().index() >= older);
            }
        }
    }
}

/// Every threshold between distinct values, every feature, by brute force.
fn exhaustive_split(x: &[Vec<f64>], y: &[usize], k: usize) -> (usize, f64, f64) {
    let gini = |ids: &[usize]| {
        let mut c = vec![0.0; k];
        ids.iter().for_each(|&i| c[y[i]] += 1.0);
        let n = ids.len() as f64;
        if n == 0.0 {
            0.0
        } else {
            n * (1.0 - c.iter().map(|v| (v / n) * (v / n)).sum::<f64>())
        }
    };
    let mut best = (usize::MAX, 0.0, f64::INFINITY);
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let l: Vec<usize> = (0..x.len()).filter(|&i| x[i][f] <= t).collect();
            let r: Vec<usize> = (0..x.len()).filter(|&i| x[i][f] > t).collect();
            let imp = gini(&l) + gini(&r);
            if imp < best.2 - 1e-12 {
                best = (f, t, imp);
            }
        }
    }
    best
}

#[test]
fn depth_one_split_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let x: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
        let y: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
        let idx: Vec<usize> = (0..6).collect();
        let got = best_split(&x, &y, 3, &idx, &[0, 1, 2]);
        let (f, t, imp) = exhaustive_split(&x, &y, 3);
        match got {
            None => assert_eq!(f, usize::MAX),
            Some(s) => {
                assert!((s.weighted_impurity - imp).abs() < 1e-9);
                assert_eq!((s.feature, s.threshold), (f, t));
            }
        }
    }
}

#[test]
fn softmax_gradient_at_zero_matches_rate_oracle() {
    let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 1.3) % 5.0, (i % 2) as f64]).collect();
    let y: Vec<usize> = (0..12).map(|i| i % 4).collect();
    let scaler = Standardizer::fit(&x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
    let (loss, grad) = softmax_loss_grad(&[0.0; 4 * 3], &xs, &y, 4);
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    for c in 0..4 {
        for j in 0..3 {
            let feat = |r: &Vec<f64>| if j == 2 { 1.0 } else { r[j] };
            let want: f64 = xs.iter().zip(&y).map(|(r, &t)| (0.25 - f64::from(u8::from(t == c))) * feat(r)).sum::<f64>() / 12.0;
            assert!((grad[c * 3 + j] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn softmax_loss_nonincreasing() {
    let recs = synth_demographics(200, 3);
    let y: Vec<usize> = recs.iter().map(|r| assign_risk(r).unwrap().index()).collect();
    let m = fit_softmax_regression(&feature_rows(&recs), &y, 4, &SoftmaxConfig::default()).unwrap();
    assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn svm_beats_random_feasible_duals() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
    let y: Vec<f64> = x.iter().map(|r| if r[0] * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
    let c = 2.0;
    let fit = fit_binary_svm(&x, &y, c, 0.5, 1e-6, 1_000_000).unwrap();
    let kkt = kkt_residuals(&x, &y, &fit.alpha, fit.machine.rho, 0.5, c);
    assert!(kkt.iter().all(|&r| r <= 1e-6));
    let pos: Vec<usize> = (0..12).filter(|&i| y[i] > 0.0).collect();
    let neg: Vec<usize> = (0..12).filter(|&i| y[i] < 0.0).collect();
    for _ in 0..10_000 {
        // Random box-feasible alphas, then rescale the heavier side so
        // sum(alpha * y) = 0.
        let mut a: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..c)).collect();
        let sp: f64 = pos.iter().map(|&i| a[i]).sum();
        let sn: f64 = neg.iter().map(|&i| a[i]).sum();
        let (side, s) = if sp > sn { (&pos, sn / sp) } else { (&neg, sp / sn) };
        side.iter().for_each(|&i| a[i] *= s);
        assert!(dual_objective(&x, &y, &a, 0.5) <= fit.dual_objective + 1e-9);
    }
}

#[test]
fn forest_deterministic_and_errors() {
    let recs = synth_demographics(120, 5);
    let x = feature_rows(&recs);
    let y: Vec<usize> = recs.iter().map(|r| assign_risk(r).unwrap().index()).collect();
    let cfg = ForestConfig { n_estimators: 10, ..Default::default() };
    let a = fit_forest(&x, &y, 4, &cfg).unwrap();
    let b = fit_forest(&x, &y, 4, &cfg).unwrap();
    assert_eq!(a, b);
    let t3 = fit_forest_tree(&x, &y, 4, &cfg, 3).unwrap();
    assert_eq!(t3, a.trees[3]);
    assert!(matches!(fit_forest(&[], &[], 4, &cfg), Err(Error::EmptyTrainingSet)));
    assert!(matches!(fit_softmax_regression(&[], &[], 4, &SoftmaxConfig::default()), Err(Error::EmptyTrainingSet)));
}

#[test]
fn single_class_models_are_perfect() {
    let recs: Vec<DemographicRecord> = (0..20).map(|i| rec(36.0 + (i % 10) as f64, (i % 2) as u8, 20.0 + i as f64)).collect();
    let x = feature_rows(&recs);
    let y = vec![3; 20];
    let models = [
        RiskModel::Forest(fit_forest(&x, &y, 4, &ForestConfig { n_estimators: 5, ..Default::default() }).unwrap()),
        RiskModel::SoftmaxRegression(fit_softmax_regression(&x, &y, 4, &SoftmaxConfig::default()).unwrap()),
        RiskModel::RbfSvm(fit_rbf_svm(&x, &y, 4, &SvmConfig::default()).unwrap()),
    ];
    for m in &models {
        let (_, r) = predict_risk(m, &recs).unwrap();
        assert_eq!(r.accuracy, 1.0, "{}", m.kind_name());
    }
}

#[test]
fn rule_labeled_classifier_accuracy() {
    let recs = synth_demographics(500, 42);
    let y: Vec<usize> = recs.iter().map(|r| assign_risk(r).unwrap().index()).collect();
    let split = stratified_split(&y, 0.8, 42).unwrap();
    let pick = |idx: &[usize]| idx.iter().map(|&i| recs[i]).collect::<Vec<_>>();
    let (train, test) = (pick(&split.train), pick(&split.test));
    let x = feature_rows(&train);
    let yt: Vec<usize> = split.train.iter().map(|&i| y[i]).collect();
    let forest = RiskModel::Forest(fit_forest(&x, &yt, 4, &ForestConfig::default()).unwrap());
    let soft = RiskModel::SoftmaxRegression(fit_softmax_regression(&x, &yt, 4, &SoftmaxConfig::default()).unwrap());
    let svm = fit_rbf_svm(&x, &yt, 4, &SvmConfig::default()).unwrap();
    let kkt = svm.max_kkt_residual;
    let svm = RiskModel::RbfSvm(svm);
    let acc = |m: &RiskModel| predict_risk(m, &test).unwrap().1.accuracy;
    let (fa, sa, va) = (acc(&forest), acc(&soft), acc(&svm));
    eprintln!("forest {fa:.3} softmax {sa:.3} svm {va:.3} kkt {kkt:.2e}");
    assert!(fa >= 0.90);
    assert!(sa >= 0.70);
    assert!(kkt <= 1e-3);
}

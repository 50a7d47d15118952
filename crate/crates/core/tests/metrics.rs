use lungmtl_core::metrics::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn confusion_matches_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = 6;
    let t: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
    let p: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
    let cm = confusion(&t, &p, k).unwrap();
    for a in 0..k {
        for b in 0..k {
            let n = t.iter().zip(&p).filter(|(x, y)| **x == a && **y == b).count() as u64;
            assert_eq!(cm.get(a, b), n);
        }
    }
    assert_eq!(cm.total(), 1000);
}

#[test]
fn accuracy_is_weighted_recall_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let k = rng.gen_range(1..7);
        let counts: Vec<u64> = (0..k * k).map(|_| rng.gen_range(0..30)).collect();
        if counts.iter().sum::<u64>() == 0 {
            continue;
        }
        let r = report(&ConfusionMatrix::from_counts(k, counts).unwrap(), 0.0).unwrap();
        assert!((r.accuracy - r.weighted.recall).abs() < 1e-12);
        assert_eq!(r.per_class.iter().map(|m| m.support).sum::<u64>(), r.support);
    }
}

/// P(score_pos > score_neg) + 0.5 P(tie) over all pairs.
fn mann_whitney(pos: &[bool], s: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if pos[i] && !pos[j] {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

#[test]
fn auc_matches_pairwise_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, k) = (200, 4);
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    // Coarse scores so ties occur.
    let probs: Vec<f64> = (0..n * k).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
    let curve = roc_auc(&truth, &probs, k).unwrap();
    for c in 0..k {
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let s: Vec<f64> = probs.chunks(k).map(|r| r[c]).collect();
        let auc = curve.per_class[c].as_ref().unwrap().auc;
        assert!((auc - mann_whitney(&pos, &s)).abs() < 1e-9);
        // Strictly monotone transform keeps the curve.
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        assert!((binary_roc(&pos, &t).unwrap().auc - auc).abs() < 1e-12);
    }
}

#[test]
fn independent_scores_give_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, k) = (2000, 4);
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let probs: Vec<f64> = (0..n * k).map(|_| rng.gen::<f64>()).collect();
    let curve = roc_auc(&truth, &probs, k).unwrap();
    assert!((curve.macro_auc - 0.5).abs() < 0.1);
}

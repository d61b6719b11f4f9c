use hyres_core::metrics::{
    balanced_accuracy, dice, dice_mean, roc_auc, roc_curve, spearman, LabelMask, ScoredLabels,
};
use proptest::prelude::*;

fn mask_pair() -> impl Strategy<Value = (LabelMask, LabelMask)> {
    (1usize..8, 1usize..8).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(-1i32..4, h * w),
            prop::collection::vec(-1i32..4, h * w),
        )
            .prop_map(move |(a, b)| (LabelMask::new(h, w, a).unwrap(), LabelMask::new(h, w, b).unwrap()))
    })
}

fn distinct(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-10_000i32..10_000, n)
        .prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
}

/// Pairwise-count AUC.
fn auc_oracle(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

#[test]
fn dice_hand_example() {
    let a = LabelMask::new(2, 3, vec![1, 1, 0, 0, 2, -1]).unwrap();
    let b = LabelMask::new(2, 3, vec![1, 0, 0, 2, 2, -1]).unwrap();
    assert!((dice(&a, &b, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&a, &b, 0).unwrap(), 0.5);
    assert!((dice(&a, &b, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&a, &b, 9).unwrap(), 1.0);
    let s = dice_mean(&a, &b).unwrap();
    assert_eq!(s.per_class.len(), 3);
}

#[test]
fn spearman_matches_closed_form_without_ties() {
    let x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
    let y = [2.0, 7.0, 1.0, 8.0, 2.8, 1.8];
    let rx = [4.0, 1.0, 5.0, 2.0, 6.0, 3.0];
    let ry = [3.0, 5.0, 1.0, 6.0, 4.0, 2.0];
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b): (&f64, &f64)| (a - b).powi(2)).sum();
    let expect = 1.0 - 6.0 * d2 / (6.0 * 35.0);
    assert!((spearman(&x, &y).unwrap() - expect).abs() < 1e-12);
    assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn roc_examples() {
    let perfect = ScoredLabels::new(vec![0.9, 0.8, 0.2, 0.1], vec![true, true, false, false]).unwrap();
    assert_eq!(roc_auc(&perfect).unwrap(), 1.0);
    let tied = ScoredLabels::new(vec![0.5; 4], vec![true, false, true, false]).unwrap();
    assert_eq!(roc_auc(&tied).unwrap(), 0.5);
    assert_eq!(roc_curve(&tied).unwrap(), vec![(0.0, 0.0), (1.0, 1.0)]);
    assert!(roc_auc(&ScoredLabels::new(vec![1.0, 2.0], vec![true, true]).unwrap()).is_err());
}

#[test]
fn balanced_accuracy_examples() {
    assert_eq!(balanced_accuracy(0.8, 0.6).unwrap(), 0.7);
    assert!(balanced_accuracy(1.2, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in mask_pair(), class in -1i32..4) {
        let d = dice(&a, &b, class).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a, class).unwrap());
        prop_assert_eq!(dice(&a, &a, class).unwrap(), 1.0);
    }

    #[test]
    fn spearman_ignores_increasing_transforms(x in distinct(3..30), seed in any::<u64>()) {
        let n = x.len();
        let y: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64).collect();
        prop_assume!(y.iter().any(|v| *v != y[0]));
        let r = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| (v / 100.0).exp() + v.powi(3)).collect();
        prop_assert!((spearman(&tx, &y).unwrap() - r).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((spearman(&neg, &y).unwrap() + r).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn auc_matches_pairwise_count(s in prop::collection::vec(0i32..6, 2..40), l in prop::collection::vec(any::<bool>(), 40)) {
        let s: Vec<f64> = s.into_iter().map(f64::from).collect();
        let l = l[..s.len()].to_vec();
        prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
        let data = ScoredLabels::new(s.clone(), l.clone()).unwrap();
        prop_assert!((roc_auc(&data).unwrap() - auc_oracle(&s, &l)).abs() < 1e-12);

        let curve = roc_curve(&data).unwrap();
        prop_assert_eq!(curve[0], (0.0, 0.0));
        prop_assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
        let area: f64 = curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        prop_assert!((area - roc_auc(&data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn negated_scores_complement_auc(s in distinct(2..40), l in prop::collection::vec(any::<bool>(), 40)) {
        let l = l[..s.len()].to_vec();
        prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&ScoredLabels::new(s, l.clone()).unwrap()).unwrap();
        let b = roc_auc(&ScoredLabels::new(neg, l).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_is_the_mean(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let v = balanced_accuracy(a, b).unwrap();
        prop_assert_eq!(v, balanced_accuracy(b, a).unwrap());
        prop_assert!(v >= a.min(b) && v <= a.max(b));
    }
}

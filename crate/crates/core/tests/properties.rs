use proptest::prelude::*;

use repaugment::augment::{apply_mask, repaugment, sample_mask, AugmentConfig, AugmentMode, Band, MaskSpec};
use repaugment::metrics::{score_of, ConfusionMatrix, EvalReport};
use repaugment::nn::{loss_and_grad, normalize, softmax, ClassifierParams};
use repaugment::noise::{NoiseSource, SeededNoise};
use repaugment::store::{ClassLabel, FeatureVector};

fn arb_vector(max_dim: usize) -> impl Strategy<Value = FeatureVector> {
    prop::collection::vec(-1e3f64..1e3, 1..=max_dim).prop_map(|v| FeatureVector::new(v).unwrap())
}

fn arb_vector_and_mask(max_dim: usize) -> impl Strategy<Value = (FeatureVector, MaskSpec)> {
    arb_vector(max_dim).prop_flat_map(|z| {
        let d = z.dim();
        let band = (0..=d).prop_flat_map(move |len| (0..=d - len).prop_map(move |start| Band::new(start, len)));
        prop::collection::vec(band, 0..4).prop_map(move |bands| (z.clone(), MaskSpec::new(d, bands).unwrap()))
    })
}

fn arb_label() -> impl Strategy<Value = ClassLabel> {
    (0u8..4).prop_map(|c| ClassLabel::from_code(c).unwrap())
}

proptest! {
    #[test]
    fn mask_keeps_outside_and_fills_inside_with_mean((z, mask) in arb_vector_and_mask(64)) {
        let out = apply_mask(&z, &mask).unwrap();
        let ind = mask.indicator();
        let mean = z.mean();
        let (lo, hi) = z.as_slice().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for k in 0..z.dim() {
            if ind[k] {
                prop_assert_eq!(out.as_slice()[k].to_bits(), mean.to_bits());
                prop_assert!(lo - 1e-9 <= out.as_slice()[k] && out.as_slice()[k] <= hi + 1e-9);
            } else {
                prop_assert_eq!(out.as_slice()[k].to_bits(), z.as_slice()[k].to_bits());
            }
        }
    }

    #[test]
    fn remasking_fills_with_mean_of_once_masked((z, mask) in arb_vector_and_mask(64)) {
        let once = apply_mask(&z, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        let ind = mask.indicator();
        let m1 = once.mean();
        for k in 0..z.dim() {
            let want = if ind[k] { m1 } else { once.as_slice()[k] };
            prop_assert_eq!(twice.as_slice()[k].to_bits(), want.to_bits());
        }
    }

    #[test]
    fn sampled_masks_are_legal(d in 1usize..2048, bands in 1usize..5, max_len in 1usize..400, seed: u64) {
        let cfg = AugmentConfig { bands, max_band_len: max_len, ..Default::default() };
        let m = sample_mask(d, &cfg, &mut SeededNoise::new(seed));
        prop_assert_eq!(m.bands().len(), bands);
        prop_assert!(m.within_sampling_ranges(max_len));
        prop_assert!(!m.indicator()[d - 1]);
    }

    #[test]
    fn normal_class_draws_no_gaussians(z in arb_vector(128), seed: u64) {
        for mode in [AugmentMode::None, AugmentMode::MaskOnly, AugmentMode::GenOnly, AugmentMode::Full] {
            let mut rng = SeededNoise::new(seed);
            repaugment(&z, ClassLabel::Normal, &AugmentConfig::with_mode(mode), &mut rng).unwrap();
            prop_assert_eq!(rng.normal_draws(), 0);
        }
    }

    #[test]
    fn mode_none_is_identity(z in arb_vector(128), label in arb_label(), seed: u64) {
        let out = repaugment(&z, label, &AugmentConfig::with_mode(AugmentMode::None), &mut SeededNoise::new(seed)).unwrap();
        prop_assert_eq!(out, z);
    }

    #[test]
    fn softmax_normalizes(logits in prop::array::uniform4(-700.0f64..700.0)) {
        let s = softmax(&logits);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn layer_norm_standardizes(z in prop::collection::vec(-100.0f64..100.0, 2..128)) {
        let d = z.len() as f64;
        let mean = z.iter().sum::<f64>() / d;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        prop_assume!(var >= 1e-3);
        let y = normalize(&ClassifierParams::new(z.len()), &z).unwrap();
        let ym = y.iter().sum::<f64>() / d;
        let yv = y.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / d;
        prop_assert!(ym.abs() <= 1e-10);
        // output variance is exactly var / (var + eps)
        prop_assert!((yv - var / (var + 1e-5)).abs() <= 1e-10);
        if var >= 10.0 {
            prop_assert!((yv - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn loss_is_batch_permutation_invariant(seed: u64, n in 1usize..12, rot in 0usize..12) {
        let d = 6;
        let params = ClassifierParams::random(d, seed);
        let mut rng = SeededNoise::new(seed ^ 1);
        let batch: Vec<(Vec<f64>, ClassLabel)> = (0..n)
            .map(|i| ((0..d).map(|_| rng.standard_normal()).collect(), ClassLabel::ALL[i % 4]))
            .collect();
        let mut shuffled = batch.clone();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        prop_assert_eq!(loss_and_grad(&params, &batch).unwrap(), loss_and_grad(&params, &shuffled).unwrap());
    }

    #[test]
    fn score_is_symmetric_mean(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assert_eq!(score_of(a, b), score_of(b, a));
        prop_assert_eq!(score_of(a, b), (a + b) / 2.0);
    }

    #[test]
    fn report_invariants(counts in prop::array::uniform4(prop::array::uniform4(0u64..20))) {
        let cm = ConfusionMatrix { counts };
        prop_assume!(cm.row_total(ClassLabel::Normal) > 0);
        prop_assume!(ClassLabel::ALL[1..].iter().map(|&c| cm.row_total(c)).sum::<u64>() > 0);
        let r = EvalReport::from_confusion(cm).unwrap();
        prop_assert_eq!(r.score, (r.sp + r.se) / 2.0);
        prop_assert_eq!(r.per_class_acc[0], Some(r.sp));
        prop_assert_eq!(r.confusion.total(), counts.iter().flatten().sum::<u64>());

        // moving miscounts between off-diagonal abnormal cells leaves se alone
        let mut moved = counts;
        let (from, to) = ((1, 2), (1, 3));
        let k = moved[from.0][from.1];
        moved[from.0][from.1] = 0;
        moved[to.0][to.1] += k;
        let r2 = EvalReport::from_confusion(ConfusionMatrix { counts: moved }).unwrap();
        prop_assert_eq!(r2.se, r.se);
    }
}

use glmf_core::baselines::{self, clip, CLIP};
use glmf_core::eval;
use glmf_core::FitConfig;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_is_idempotent_and_bounded(p in -2.0f64..3.0) {
        let c = clip(p, CLIP);
        prop_assert!((0.001..=0.999).contains(&c));
        prop_assert_eq!(clip(c, CLIP), c);
    }

    #[test]
    fn log5_scales_linearly_before_clipping(
        b in prop::collection::vec(0.05f64..0.4, 1..6),
        p in prop::collection::vec(0.05f64..0.4, 1..6),
        t in 0.1f64..0.4,
        c in 0.2f64..2.0,
    ) {
        let wide = (1e-12, 1.0 - 1e-12);
        let base = baselines::log5_predict(&b, &p, t, wide).unwrap();
        let bs: Vec<f64> = b.iter().map(|v| v * c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let scaled = baselines::log5_predict(&bs, &ps, t * c, wide).unwrap();
        for (x, y) in base.iter().zip(scaled.iter()) {
            if *x < 0.5 && *y < 0.5 {
                prop_assert!((x * c - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_at_full_rank_is_identity(m in matrix(6, 4, 0.0, 1.0)) {
        let back = baselines::pca_impute_step(&m, 4).unwrap();
        prop_assert!((back - &m).abs().max() < 1e-8);
    }

    #[test]
    fn lpca_probabilities_stay_inside_the_unit_interval(
        props in matrix(8, 6, 0.0, 1.0),
        n in 1u32..6,
    ) {
        let trials = DMatrix::from_element(8, 6, f64::from(n));
        let x = props.map(|p| (p * f64::from(n)).round());
        let mut cfg = FitConfig::new(2);
        cfg.max_outer_iter = 30;
        let fit = baselines::lpca_fit(&x, &trials, 2, &cfg, None).unwrap();
        prop_assert!(fit.p_hat.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn cv_folds_partition_the_observed_cells(
        bits in prop::collection::vec(any::<bool>(), 60),
        folds in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mask = DMatrix::from_vec(6, 10, bits);
        let observed = mask.iter().filter(|&&b| b).count();
        prop_assume!(observed >= folds);
        let split = eval::cv_split(&mask, folds, seed).unwrap();
        let sizes: Vec<usize> = split.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<(usize, usize)> = split.concat();
        all.sort_unstable();
        let before = all.len();
        all.dedup();
        prop_assert_eq!(before, all.len());
        prop_assert_eq!(all.len(), observed);
        prop_assert!(all.iter().all(|&c| mask[c]));
    }

    #[test]
    fn mean_prediction_is_constant(
        x in matrix(4, 5, 0.0, 3.0),
        extra in matrix(4, 5, 0.0, 3.0),
    ) {
        let trials = (&x + &extra).map(|v| v.ceil() + 1.0);
        let x = x.map(f64::floor);
        let mask = DMatrix::from_element(4, 5, true);
        let p = baselines::mean_predict(&x, &trials, &mask).unwrap();
        let first = p[(0, 0)];
        prop_assert!(p.iter().all(|&v| v == first));
    }

    #[test]
    fn rmse_matches_direct_evaluation(a in matrix(3, 3, 0.0, 1.0), b in matrix(3, 3, 0.0, 1.0)) {
        let cells: Vec<(usize, usize)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let direct = ((&a - &b).map(|d| d * d).sum() / 9.0).sqrt();
        prop_assert!((eval::rmse(&a, &b, &cells).unwrap() - direct).abs() < 1e-12);
    }
}

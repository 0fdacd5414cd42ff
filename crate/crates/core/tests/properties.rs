use nalgebra::DMatrix;
use proptest::prelude::*;

use prism_core::matio::{decode_matrix, encode_matrix};
use prism_core::oracle::rng::{random_orthogonal, standard_normal_matrix, stream_rng};
use prism_core::oracle::{cross_entropy, gen_instance, verify_bound, Perturbation, Sizes, VIOLATION_TOL};
use prism_core::*;

fn pair(seed: u64, n: usize, d: usize) -> (FeatureMatrix, FeatureMatrix) {
    let mut rng = stream_rng(seed, 0);
    let a = standard_normal_matrix(&mut rng, n, d);
    let b = standard_normal_matrix(&mut rng, n, d);
    (FeatureMatrix::new(a).unwrap(), FeatureMatrix::new(b).unwrap())
}

fn head(seed: u64, d: usize, v: usize) -> HeadMatrix {
    HeadMatrix::new(standard_normal_matrix(&mut stream_rng(seed, 1), d, v)).unwrap()
}

fn kinds() -> impl Strategy<Value = Perturbation> {
    prop::sample::select(Perturbation::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_splits_into_scale_and_shape(seed in any::<u64>(), n in 1usize..40, d in 1usize..10) {
        let (zt, zp) = pair(seed, n, d);
        for mode in AlignmentMode::ALL {
            let w = mode.resolve(&zt, &zp).unwrap();
            let dec = decompose(&zt, &zp, &w).unwrap();
            let scale = dec.residual.max(dec.scale_term + dec.shape_term).max(1.0);
            prop_assert!(dec.identity_defect() <= 1e-9 * scale, "{:?}", dec);
        }
    }

    #[test]
    fn similarity_ordering(seed in any::<u64>(), n in 1usize..40, d in 1usize..10) {
        let (zt, zp) = pair(seed, n, d);
        let om = omega_trace(&zt, &zp).unwrap();
        let on = omega_nuclear(&zt, &zp).unwrap();
        let of = omega_frobenius(&zt, &zp).unwrap();
        let ck = cka(&zt, &zp).unwrap();
        prop_assert!(om <= on + 1e-12);
        prop_assert!(of <= on + 1e-12);
        prop_assert!(ck >= of * of - 1e-12);
    }

    #[test]
    fn nuclear_similarity_ignores_rotations(seed in any::<u64>(), n in 2usize..30, d in 1usize..8) {
        let (zt, zp) = pair(seed, n, d);
        let mut rng = stream_rng(seed, 9);
        let r1 = random_orthogonal(&mut rng, d);
        let r2 = random_orthogonal(&mut rng, d);
        let rt = FeatureMatrix::new(zt.values() * r1).unwrap();
        let rp = FeatureMatrix::new(zp.values() * r2).unwrap();
        let a = omega_nuclear(&zt, &zp).unwrap();
        let b = omega_nuclear(&rt, &rp).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn trace_similarity_ignores_positive_scale(
        seed in any::<u64>(), a in 1e-3f64..1e3, b in 1e-3f64..1e3
    ) {
        let (zt, zp) = pair(seed, 12, 4);
        let st = FeatureMatrix::new(zt.values() * a).unwrap();
        let sp = FeatureMatrix::new(zp.values() * b).unwrap();
        let x = omega_trace(&zt, &zp).unwrap();
        let y = omega_trace(&st, &sp).unwrap();
        prop_assert!((x - y).abs() <= 1e-12);
    }

    #[test]
    fn kfeat_ignores_common_column_shift(seed in any::<u64>(), d in 1usize..8, v in 2usize..40) {
        let h = head(seed, d, v);
        let c = standard_normal_matrix(&mut stream_rng(seed, 2), d, 1) * 10.0;
        let shifted = HeadMatrix::new(h.values() + &c * DMatrix::from_element(1, v, 1.0)).unwrap();
        let a = kfeat_exact(&h).unwrap();
        let b = kfeat_exact(&shifted).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        prop_assert!(a <= kfeat_spectral(&h).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn kfeat_policy_independent(seed in any::<u64>(), v in 2usize..300, block in 1usize..64) {
        let h = head(seed, 5, v);
        let run = |execution| kfeat_exact_with(&h, KFeatOptions { block, execution, ..KFeatOptions::default() }).unwrap();
        prop_assert_eq!(run(Execution::Sequential).to_bits(), run(Execution::Parallel).to_bits());
    }

    #[test]
    fn logit_gradient_norm_at_most_sqrt2(logits in prop::collection::vec(-50f64..50.0, 1..30), pick in any::<prop::sample::Index>()) {
        let y = pick.index(logits.len());
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        let norm = e.iter().enumerate()
            .map(|(j, ej)| (ej / s - if j == y { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>().sqrt();
        prop_assert!(norm <= kpred() + 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_logit_shift(logits in prop::collection::vec(-30f64..30.0, 1..20), c in -100f64..100.0) {
        let a = cross_entropy(logits.iter().copied(), logits[0]);
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        let b = cross_entropy(shifted.iter().copied(), shifted[0]);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn gamma_scales_with_proxy_features(seed in any::<u64>(), c in -10f64..10.0) {
        let (_, zp) = pair(seed, 10, 4);
        let ht = head(seed, 4, 6);
        let hp = head(seed.wrapping_add(1), 4, 6);
        let id = OrthogonalAlignment::identity();
        let g = gamma(&zp, &ht, &hp, &id, GammaPath::Matmul).unwrap();
        let zc = FeatureMatrix::new(zp.values() * c).unwrap();
        let gc = gamma(&zc, &ht, &hp, &id, GammaPath::Matmul).unwrap();
        prop_assert!((gc - c.abs() * g).abs() <= 1e-10 * g.max(1.0));
    }

    #[test]
    fn f64_matrix_round_trip_is_bitwise(
        rows in 0usize..12, cols in 0usize..12, seed in any::<u64>()
    ) {
        let m = standard_normal_matrix(&mut stream_rng(seed, 0), rows, cols) * 1e5;
        let (back, meta) = decode_matrix(&encode_matrix(&m, Dtype::F64)).unwrap();
        prop_assert_eq!(meta.rows, rows);
        prop_assert_eq!(meta.cols, cols);
        prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn bound_covers_risk_gap(seed in 0u64..10_000, kind in kinds(), m in 0f64..1.0) {
        let inst = gen_instance(seed, Sizes { n: 24, d: 6, v: 10 }, kind, m).unwrap();
        for mode in AlignmentMode::ALL {
            let r = verify_bound(&inst, mode, KFeatMode::Exact).unwrap();
            prop_assert!(r.gap <= r.bound + VIOLATION_TOL, "{:?} {:?}", mode, r);
        }
    }
}

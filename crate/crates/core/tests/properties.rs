//! Property tests over randomly drawn inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfrc::evaluate::{mere_mare, resample_series, Oracle};
use sfrc::homogenize::MaterialPoint;
use sfrc::matpoint::{return_map, yield_function, J2Matrix, MatrixParams, MatrixState};
use sfrc::microstructure::{sample_orientation_tensor, sample_rotation};
use sfrc::pipeline::{split, Dataset, DatasetRecord, RecordStatus};
use sfrc::sampling::{generate_path, record_seed, PathGenParams};
use sfrc::surrogate::{checkpoint, GruModel, NetworkConfig, Normalizer};
use sfrc::tensor::isotropic_stiffness;
use sfrc::{SymTensor2, SymTensor4};

fn plain6(scale: f64) -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-scale..scale)
}

fn series(len: std::ops::Range<usize>, scale: f64) -> impl Strategy<Value = Vec<[f64; 6]>> {
    prop::collection::vec(plain6(scale), len)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plain_mandel_roundtrip(c in plain6(10.0)) {
        let t = SymTensor2::from_plain(c);
        let back = t.to_plain();
        prop_assert!(back.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + b.abs())));
        let m = t.to_matrix();
        prop_assert!((SymTensor2::from_matrix(&m) - t).norm() <= 1e-14 * (1.0 + t.norm()));
    }

    #[test]
    fn rotation_preserves_invariants(c in plain6(100.0), seed in any::<u64>(), shift in -50.0f64..50.0) {
        let r = sample_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let s = SymTensor2::from_plain(c);
        let rs = s.rotate(&r);
        let scale = 1e-12 * (1.0 + s.norm());
        prop_assert!((rs.norm() - s.norm()).abs() <= scale);
        prop_assert!((rs.trace() - s.trace()).abs() <= scale);
        prop_assert!((rs.von_mises() - s.von_mises()).abs() <= scale);
        let shifted = s + SymTensor2::identity() * shift;
        prop_assert!((shifted.von_mises() - s.von_mises()).abs() <= 1e-12 * (1.0 + s.norm() + shift.abs()));
        prop_assert!((rs.rotate(&r.transpose()) - s).norm() <= scale);
    }

    #[test]
    fn isotropic_stiffness_is_rotation_invariant(e in 1.0f64..1e5, nu in -0.9f64..0.49, seed in any::<u64>()) {
        let c = isotropic_stiffness(e, nu).unwrap();
        let r = sample_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((c.rotate(&r) - c).0.amax() <= 1e-11 * c.0.amax());
    }

    #[test]
    fn return_map_stays_admissible(
        history in prop::collection::vec(plain6(8e-3), 1..6),
        d in plain6(8e-3),
    ) {
        let params = MatrixParams::default();
        let mut state = MatrixState::default();
        for h in &history {
            state = return_map(&state, &SymTensor2::from_plain(*h), &params).unwrap().state;
        }
        let out = return_map(&state, &SymTensor2::from_plain(d), &params).unwrap();
        let phi = yield_function(&out.stress, out.state.accumulated, &params).unwrap();
        prop_assert!(phi <= 1e-8 * params.yield_stress);
        prop_assert!(out.state.accumulated >= state.accumulated);
        prop_assert!(out.state.plastic_strain.trace().abs() <= 1e-15);
        prop_assert!(out.tangent.major_asymmetry() <= 1e-9 * out.tangent.0.amax());
        if out.plastic.is_none() {
            let elastic = state.stress(&params) + params.stiffness() * SymTensor2::from_plain(d);
            prop_assert!((out.stress - elastic).norm() <= 1e-10 * (1.0 + elastic.norm()));
        }
    }

    #[test]
    fn replaying_strain_reproduces_stress(steps in prop::collection::vec(plain6(6e-3), 1..8)) {
        let m = J2Matrix::default();
        let mut state = m.initial_state();
        let mut strain = SymTensor2::zero();
        let mut recorded = Vec::new();
        for d in &steps {
            strain += SymTensor2::from_plain(*d);
            let (stress, next, _) = m.step_to(&state, &strain).unwrap();
            prop_assert_eq!(next.strain, strain);
            recorded.push((strain, stress));
            state = next;
        }
        let mut state = m.initial_state();
        for (strain, stress) in &recorded {
            let (again, next, _) = m.step_to(&state, strain).unwrap();
            prop_assert_eq!(again, *stress);
            state = next;
        }
    }

    #[test]
    fn orientation_tensors_are_admissible(seed in any::<u64>(), p in 0.0f64..1.0) {
        let a = sample_orientation_tensor(&mut ChaCha8Rng::seed_from_u64(seed), p).unwrap();
        let m = a.matrix();
        prop_assert!((m - m.transpose()).amax() == 0.0);
        prop_assert!((m.trace() - 1.0).abs() <= 1e-12);
        prop_assert!(a.eigenvalues().iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
    }

    #[test]
    fn homogenized_stiffness_is_symmetric_and_positive(seed in any::<u64>(), v in 0.0f64..0.3) {
        let oracle = Oracle::default();
        let a = sample_orientation_tensor(&mut ChaCha8Rng::seed_from_u64(seed), 0.1).unwrap();
        let c = oracle.composite(a, v).unwrap().elastic_stiffness();
        prop_assert!(c.major_asymmetry() <= 1e-12 * c.0.amax());
        prop_assert!(c.0.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn strain_paths_start_at_zero_and_peak_at_eps_max(
        seed in any::<u64>(),
        n1 in prop::sample::select(vec![1usize, 2, 5, 10, 20]),
        noise in 0.0f64..1.0,
        eps_max in 0.01f64..0.05,
        p in 0.0f64..1.0,
    ) {
        let params = PathGenParams { steps: 20, drift_directions: n1, noise, eps_max, p_uniaxial_strain: p };
        let path = generate_path(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(path.rows.len(), 21);
        prop_assert_eq!(path.rows[0], [0.0; 6]);
        prop_assert_eq!(path.max_abs(), eps_max);
    }

    #[test]
    fn mere_never_exceeds_mare(pred in series(1..30, 50.0), offset in plain6(5.0), sigma_y in 1.0f64..100.0) {
        let truth: Vec<[f64; 6]> = pred.iter().map(|r| std::array::from_fn(|k| r[k] + offset[k] * (k as f64 + 1.0))).collect();
        let r = mere_mare(&pred, &truth, sigma_y).unwrap();
        for k in 0..6 {
            prop_assert!(r.mere[k] >= 0.0);
            prop_assert!(r.mere[k] <= r.mare[k]);
        }
    }

    #[test]
    fn metrics_depend_on_the_error_only(
        truth in series(2..30, 50.0),
        error in series(30..31, 3.0),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        let pred: Vec<[f64; 6]> = truth.iter().zip(&error).map(|(t, e)| std::array::from_fn(|k| t[k] + e[k])).collect();
        let base = mere_mare(&pred, &truth, 25.0).unwrap();
        let moved = |s: &[[f64; 6]]| s.iter().map(|r| r.map(|x| (x + shift) * scale)).collect::<Vec<_>>();
        let other = mere_mare(&moved(&pred), &moved(&truth), 25.0 * scale).unwrap();
        for k in 0..6 {
            prop_assert!((base.mere[k] - other.mere[k]).abs() <= 1e-9 * (1.0 + base.mere[k]));
            prop_assert!((base.mare[k] - other.mare[k]).abs() <= 1e-9 * (1.0 + base.mare[k]));
        }
        prop_assert_eq!(mere_mare(&truth, &truth, 25.0).unwrap().mare, [0.0; 6]);
    }

    #[test]
    fn resampling_is_linear_and_keeps_knots(s in series(2..40, 1.0), a in -3.0f64..3.0) {
        let fine = resample_series(&s, 2.0).unwrap();
        prop_assert_eq!(fine.len(), 2 * (s.len() - 1) + 1);
        for (i, row) in s.iter().enumerate() {
            prop_assert_eq!(fine[2 * i], *row);
        }
        let scaled: Vec<[f64; 6]> = s.iter().map(|r| r.map(|x| a * x)).collect();
        let fine_scaled = resample_series(&scaled, 2.0).unwrap();
        for (x, y) in fine.iter().zip(&fine_scaled) {
            for k in 0..6 {
                prop_assert!((a * x[k] - y[k]).abs() <= 1e-14 * (1.0 + y[k].abs()));
            }
        }
        prop_assert_eq!(resample_series(&s, 1.0).unwrap(), s.clone());
    }

    #[test]
    fn splits_partition_the_records(n in 1usize..400, seed in any::<u64>(), val in 0.0f64..0.3, test in 0.0f64..0.1) {
        let indices: Vec<usize> = (0..n).map(|i| 3 * i + 1).collect();
        let Ok(s) = split(&indices, [1.0 - val - test, val, test], seed) else {
            return Ok(());
        };
        prop_assert!(n < 2 || !s.test.is_empty());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, indices.clone());
        prop_assert_eq!(split(&indices, [1.0 - val - test, val, test], seed).unwrap(), s);
    }

    #[test]
    fn record_seeds_differ_between_indices(master in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assume!(i != j);
        prop_assert_ne!(record_seed(master, i), record_seed(master, j));
    }

    #[test]
    fn dataset_roundtrips_bit_exactly(
        rows in prop::collection::vec((any::<u64>(), plain6(1.0), series(2..6, 0.05), any::<bool>()), 0..5),
    ) {
        let records = rows
            .into_iter()
            .map(|(seed, orientation, strain, ok)| DatasetRecord {
                seed,
                orientation,
                volume_fraction: orientation[0].abs(),
                stress: strain.iter().map(|r| r.map(|x| 3000.0 * x)).collect(),
                strain,
                status: if ok { RecordStatus::Ok } else { RecordStatus::Failed },
            })
            .collect();
        let data = Dataset { records };
        prop_assert_eq!(Dataset::decode(&data.encode().unwrap()).unwrap(), data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_roundtrip_and_predict_identically(
        seed in any::<u64>(),
        widths in prop::collection::vec(1usize..6, 1..3),
        strain in series(3..10, 0.05),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = GruModel::new(&NetworkConfig { hidden: widths, dropout: 0.5 }, &mut rng).unwrap();
        let feats = sfrc::surrogate::features(&strain, [0.5, 0.3, 0.2, 0.0, 0.0, 0.0], 0.12);
        let seq = sfrc::surrogate::Sequence { features: feats.clone(), targets: strain.clone() };
        model.normalizer = Some(Normalizer::fit(&[seq]).unwrap());
        let back = checkpoint::decode(&checkpoint::encode(&model).unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let a = model.predict(&feats).unwrap();
        prop_assert_eq!(a.clone(), back.predict(&feats).unwrap());
        prop_assert_eq!(a, model.predict(&feats).unwrap());
        prop_assert!(max_abs(&back.params.blocks().iter().flat_map(|(b, _)| b.iter().copied()).collect::<Vec<_>>()).is_finite());
    }
}

#[test]
fn symmetric_fourth_order_tensors_match_index_access() {
    let c = isotropic_stiffness(3100.0, 0.35).unwrap();
    let rebuilt = SymTensor4::from_fn(|i, j, k, l| c.get(i, j, k, l));
    assert!((rebuilt - c).0.amax() <= 1e-10);
}

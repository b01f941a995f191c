use capls::capls::{iteration_quota, UdaRun};
use capls::data::{generate_synthetic, SynthConfig};
use capls::eval::{per_class_accuracy, per_image_accuracy, run_baseline_1nn, run_baseline_lda_subspace};
use capls::subspace::{class_distances, predict};
use capls::zsl::fit_zsl;
use capls::{
    fit_model, gzsl_metrics, l2_normalize_rows, learn_projection, make_split, run_uda, run_zsl, Dataset,
    DatasetF32, Domain, Error, FeatureMatrix, LabeledDataset, ProjectionKind, UdaConfig, ZslConfig,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Unit-variance blobs around widely separated axis means, identical source and target law.
fn blobs(seed: u64, classes: usize, per_class: usize, dim: usize, sep: f64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |domain: Domain| {
        let n = classes * per_class;
        let mut x = Array2::<f64>::zeros((n, dim));
        let mut y = Vec::with_capacity(n);
        for c in 0..classes {
            for k in 0..per_class {
                let r = c * per_class + k;
                for j in 0..dim {
                    x[[r, j]] = rng.sample::<f64, _>(StandardNormal);
                }
                x[[r, c % dim]] += sep;
                y.push(c);
            }
        }
        LabeledDataset::new(FeatureMatrix::new(x, domain).unwrap(), y, classes).unwrap()
    };
    let s = draw(Domain::Source);
    let t = draw(Domain::Target);
    (s, t)
}

fn rotated(seed: u64) -> (Dataset, Dataset) {
    let b = generate_synthetic::<f64>(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    (b.domain("source").unwrap().clone(), b.domain("target").unwrap().clone())
}

#[test]
fn zero_shift_blobs_are_recognised_exactly() {
    let (s, t) = blobs(1, 3, 40, 6, 8.0);
    let cfg = UdaConfig::default();
    let out = run_uda(&s, t.features(), &cfg, Some(t.labels())).unwrap();
    assert_eq!(per_image_accuracy(&out.predicted, t.labels()).unwrap(), 1.0);
    assert_eq!(out.trace.len(), cfg.t_max + 1);
    assert!(out.trace.iter().all(|r| r.accuracy == Some(1.0)));
    assert_eq!(out.selected.len(), t.len());
}

#[test]
fn single_round_equals_manual_refit() {
    let (s, t) = rotated(3);
    let cfg = UdaConfig {
        t_max: 1,
        ..UdaConfig::default()
    };
    let out = run_uda(&s, t.features(), &cfg, None).unwrap();
    assert_eq!(out.trace.len(), 2);
    assert_eq!(out.trace[1].fraction, 1.0);
    assert_eq!(out.trace[1].selected_total, t.len());

    // fit on source, pseudo-label everything, refit once
    let src = s.with_features(l2_normalize_rows(s.features()).unwrap()).unwrap();
    let tgt = l2_normalize_rows(t.features()).unwrap();
    let d = out.effective_dim;
    let p0 = learn_projection(&src, d).unwrap();
    let m0 = fit_model(&p0, &src, &[src.features(), &tgt]).unwrap();
    let pseudo = predict(&m0, &tgt).unwrap().predicted;
    assert_eq!(pseudo, out.initial_predicted);
    let train = src
        .concat(&LabeledDataset::new(tgt.clone(), pseudo, src.n_classes()).unwrap())
        .unwrap();
    let p1 = learn_projection(&train, d).unwrap();
    let m1 = fit_model(&p1, &src, &[src.features(), &tgt]).unwrap();
    assert_eq!(predict(&m1, &tgt).unwrap().predicted, out.predicted);
}

#[test]
fn stepwise_driver_matches_run_uda() {
    let (s, t) = rotated(4);
    let cfg = UdaConfig {
        t_max: 4,
        ..UdaConfig::default()
    };
    let out = run_uda(&s, t.features(), &cfg, Some(t.labels())).unwrap();
    let mut run = UdaRun::new(&s, t.features(), &cfg, Some(t.labels())).unwrap();
    let mut state = run.initialize().unwrap();
    let mut sizes = vec![0];
    while state.t < cfg.t_max {
        run.advance(&mut state).unwrap();
        let unique: std::collections::BTreeSet<usize> = state.selected.iter().map(|s| s.0).collect();
        assert_eq!(unique.len(), state.selected.len());
        sizes.push(state.selected.len());
    }
    assert_eq!(state.trace, out.trace);
    assert_eq!(state.confidences.predicted, out.predicted);
    for (t, rec) in out.trace.iter().enumerate() {
        assert_eq!(rec.selected_total, sizes[t]);
        for (c, (&sel, &pool)) in rec.selected_per_class.iter().zip(&rec.pool_sizes).enumerate() {
            assert!(sel <= pool, "class {c} at t={t}");
            if t > 0 {
                assert_eq!(sel, iteration_quota(pool, t, cfg.t_max));
            }
        }
    }
}

#[test]
fn uda_class_means_come_from_source_only() {
    let (s, t) = rotated(5);
    let cfg = UdaConfig {
        t_max: 3,
        ..UdaConfig::default()
    };
    let out = run_uda(&s, t.features(), &cfg, None).unwrap();
    let src = l2_normalize_rows(s.features()).unwrap();
    let z = out.model.embed(&src).unwrap();
    for (k, &c) in out.model.classes.iter().enumerate() {
        let rows: Vec<usize> = (0..s.len()).filter(|&i| s.labels()[i] == c).collect();
        let mut m = Array1::<f64>::zeros(z.ncols());
        for &i in &rows {
            m += &z.row(i);
        }
        m /= m.dot(&m).sqrt();
        for (a, b) in m.iter().zip(out.model.class_means.row(k)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn dimension_mismatch_rejected() {
    let (s, _) = blobs(2, 2, 5, 4, 5.0);
    let other = FeatureMatrix::new(Array2::<f64>::ones((3, 5)), Domain::Target).unwrap();
    let err = run_uda(&s, &other, &UdaConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 4, found: 5 }));
}

#[test]
fn single_precision_pipeline_agrees() {
    let (s, t) = blobs(6, 3, 20, 5, 8.0);
    let cast = |d: &Dataset| -> DatasetF32 {
        LabeledDataset::new(
            FeatureMatrix::new(d.features().data().mapv(|v| v as f32), d.features().domain(0)).unwrap(),
            d.labels().to_vec(),
            d.n_classes(),
        )
        .unwrap()
    };
    let (s32, t32) = (cast(&s), cast(&t));
    let cfg = UdaConfig {
        t_max: 3,
        ..UdaConfig::default()
    };
    let a = run_uda(&s, t.features(), &cfg, None).unwrap();
    let b = run_uda(&s32, t32.features(), &cfg, None).unwrap();
    assert_eq!(a.predicted, b.predicted);
}

#[test]
fn lda_and_slpp_both_exact_without_shift() {
    let (s, t) = blobs(7, 4, 30, 8, 9.0);
    let cfg = UdaConfig {
        t_max: 5,
        ..UdaConfig::default()
    };
    let slpp = run_uda(&s, t.features(), &cfg, None).unwrap();
    let lda = run_baseline_lda_subspace(&s, t.features(), &cfg, None).unwrap();
    assert_eq!(per_image_accuracy(&slpp.predicted, t.labels()).unwrap(), 1.0);
    assert_eq!(per_image_accuracy(&lda.predicted, t.labels()).unwrap(), 1.0);
    assert_eq!(lda.effective_dim, 3);
}

#[test]
fn lda_variant_on_rotated_benchmark_has_full_trace() {
    let (s, t) = rotated(8);
    let cfg = UdaConfig {
        projection: ProjectionKind::Lda,
        ..UdaConfig::default()
    };
    let out = run_uda(&s, t.features(), &cfg, Some(t.labels())).unwrap();
    assert_eq!(out.trace.len(), 21);
    assert!(out.trace.iter().all(|r| r.accuracy.is_some()));
}

#[test]
fn one_nn_close_to_ncm_on_separable_blobs() {
    for seed in 0..5 {
        let (s, t) = blobs(100 + seed, 5, 30, 10, 5.0);
        let src = s.with_features(l2_normalize_rows(s.features()).unwrap()).unwrap();
        let tgt = l2_normalize_rows(t.features()).unwrap();
        let nn = run_baseline_1nn(&src, None, &tgt).unwrap();
        let p = learn_projection(&src, 4).unwrap();
        let model = fit_model(&p, &src, &[src.features()]).unwrap();
        let ncm = predict(&model, &tgt).unwrap().predicted;
        let (a_nn, a_ncm) = (
            per_image_accuracy(&nn, t.labels()).unwrap(),
            per_image_accuracy(&ncm, t.labels()).unwrap(),
        );
        assert!(a_nn >= a_ncm - 0.05, "seed {seed}: 1NN {a_nn} vs NCM {a_ncm}");
    }
}

// ---------------------------------------------------------------------------------------
// zero-shot condition
// ---------------------------------------------------------------------------------------

#[test]
fn unseen_class_transfers_without_shift() {
    let (s, t) = blobs(11, 5, 30, 6, 9.0);
    let split = make_split(t.labels(), 3, 2).unwrap();
    let train = t.select(&split.target_train_rows).unwrap();
    let test = t.select(&split.target_test_rows).unwrap();
    let out = run_zsl(&s, Some(&train), test.features(), &ZslConfig::default()).unwrap();
    let m = gzsl_metrics(out.predicted(), test.labels(), &split).unwrap();
    assert_eq!((m.acc_known, m.acc_unseen, m.harmonic), (1.0, 1.0, 1.0));
    let per_class = per_class_accuracy(out.predicted(), test.labels(), 5).unwrap();
    for c in &split.unseen_classes {
        assert_eq!(per_class[*c], Some(1.0));
    }
}

#[test]
fn no_labelled_target_falls_back_to_source_subspace() {
    let (s, t) = blobs(12, 4, 20, 6, 9.0);
    let out = run_zsl(&s, None, t.features(), &ZslConfig::default()).unwrap();
    assert_eq!(out.predicted().len(), t.len());
    assert_eq!(per_image_accuracy(out.predicted(), t.labels()).unwrap(), 1.0);
}

#[test]
fn predictions_range_over_every_class() {
    let (s, t) = blobs(13, 6, 20, 8, 6.0);
    let split = make_split(t.labels(), 2, 0).unwrap();
    let train = t.select(&split.target_train_rows).unwrap();
    let test = t.select(&split.target_test_rows).unwrap();
    let out = run_zsl(&s, Some(&train), test.features(), &ZslConfig::default()).unwrap();
    assert_eq!(out.model.classes, (0..6).collect::<Vec<_>>());
    assert_eq!(out.confidences.n_classes(), 6);
    assert!(out.predicted().iter().any(|c| split.unseen_classes.contains(c)));
}

#[test]
fn model_independent_of_test_rows() {
    let (s, t) = blobs(14, 4, 20, 6, 6.0);
    let split = make_split(t.labels(), 2, 1).unwrap();
    let train = t.select(&split.target_train_rows).unwrap();
    let test = t.select(&split.target_test_rows).unwrap();
    let cfg = ZslConfig::default();
    let fitted = fit_zsl(&s, Some(&train), &cfg).unwrap();
    let a = run_zsl(&s, Some(&train), test.features(), &cfg).unwrap();
    let junk = FeatureMatrix::new(Array2::from_elem((3, 6), 0.5), Domain::Target).unwrap();
    let b = run_zsl(&s, Some(&train), &junk, &cfg).unwrap();
    assert_eq!(a.model, fitted);
    assert_eq!(b.model, fitted);
    let d = class_distances(&fitted, &l2_normalize_rows(test.features()).unwrap()).unwrap();
    assert_eq!(d.nrows(), test.len());
}

#[test]
fn labelled_target_class_must_exist_in_source() {
    let (s, t) = blobs(15, 3, 10, 4, 6.0);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s.labels()[i] != 2).collect();
    let s = s.select(&keep).unwrap();
    let err = run_zsl(&s, Some(&t), t.features(), &ZslConfig::default()).unwrap_err();
    assert!(matches!(err, Error::UnknownClassInTargetTrain { class: 2 }), "{err}");
}

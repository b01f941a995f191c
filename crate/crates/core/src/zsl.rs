//! Adaptation when target labels exist for only a subset of classes.
//!
//! One pass: learn the projection on source plus labelled target rows, build class
//! prototypes from both, and classify test rows over the full class set. Unseen classes
//! get source-only prototypes.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::SolverConfig;
use crate::preprocess::{l2_normalize_rows, FeatureMatrix};
use crate::slpp::{effective_dim, learn_projection_with, LabeledDataset, SlppConfig, DEFAULT_DIM};
use crate::subspace::{fit_model, predict_with_temperature, ConfidenceTable, SubspaceModel};
use crate::{Error, Real, Result};

pub const DEFAULT_KNOWN_CLASSES: usize = 35;
pub const DEFAULT_SPLIT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Known/unseen partition of the classes and train/test partition of the target rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZslSplit {
    pub known_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub target_train_rows: Vec<usize>,
    pub target_test_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ZslSplit {
    /// Checks the partition against the full target label vector.
    pub fn validate(&self, labels: &[usize]) -> Result<()> {
        let known: BTreeSet<_> = self.known_classes.iter().copied().collect();
        let unseen: BTreeSet<_> = self.unseen_classes.iter().copied().collect();
        if let Some(&c) = known.intersection(&unseen).next() {
            return Err(Error::Config(format!("class {c} is both known and unseen")));
        }
        let all: BTreeSet<_> = labels.iter().copied().collect();
        let covered: BTreeSet<_> = known.union(&unseen).copied().collect();
        if all != covered {
            return Err(Error::Config(
                "known and unseen classes must cover the target label set".into(),
            ));
        }
        for &r in self.target_train_rows.iter().chain(&self.target_test_rows) {
            if r >= labels.len() {
                return Err(Error::Config(format!("split row {r} out of range")));
            }
        }
        if let Some(&r) = self.target_train_rows.iter().find(|&&r| !known.contains(&labels[r])) {
            return Err(Error::Config(format!(
                "target train row {r} has label {} outside the known classes",
                labels[r]
            )));
        }
        Ok(())
    }
}

/// Seeded split: `n_known` random known classes, and for every class `floor(n_c / 2)`
/// random rows held out for testing. Remaining rows of known classes form the labelled
/// target set; remaining rows of unseen classes are dropped.
pub fn make_split(labels: &[usize], n_known: usize, seed: u64) -> Result<ZslSplit> {
    let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if n_known == 0 || n_known >= classes.len() {
        return Err(Error::Config(format!(
            "known class count must be in [1, {}), got {n_known}",
            classes.len()
        )));
    }
    let mut rows_by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, l) in labels.iter().enumerate() {
        let k = classes.binary_search(l).expect("collected above");
        rows_by_class[k].push(i);
    }
    if let Some((k, rows)) = rows_by_class.iter().enumerate().find(|(_, r)| r.len() < 2) {
        return Err(Error::InsufficientClassSize {
            class: classes[k],
            count: rows.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = classes.clone();
    order.shuffle(&mut rng);
    let mut known_classes = order[..n_known].to_vec();
    let mut unseen_classes = order[n_known..].to_vec();
    known_classes.sort_unstable();
    unseen_classes.sort_unstable();

    let mut target_train_rows = Vec::new();
    let mut target_test_rows = Vec::new();
    for (k, mut rows) in rows_by_class.into_iter().enumerate() {
        rows.shuffle(&mut rng);
        let n_test = rows.len() / 2;
        target_test_rows.extend_from_slice(&rows[..n_test]);
        if known_classes.binary_search(&classes[k]).is_ok() {
            target_train_rows.extend_from_slice(&rows[n_test..]);
        }
    }
    target_train_rows.sort_unstable();
    target_test_rows.sort_unstable();
    Ok(ZslSplit {
        known_classes,
        unseen_classes,
        target_train_rows,
        target_test_rows,
        seed: Some(seed),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZslConfig {
    pub d_sub: usize,
    pub ridge: f64,
    pub temperature: f64,
    pub solver: SolverConfig,
}

impl Default for ZslConfig {
    fn default() -> Self {
        Self {
            d_sub: DEFAULT_DIM,
            ridge: 1.0,
            temperature: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

/// Fits the model from source and labelled target data. Test rows are not an input.
pub fn fit_zsl<T: Real>(
    source: &LabeledDataset<T>,
    target_labeled: Option<&LabeledDataset<T>>,
    cfg: &ZslConfig,
) -> Result<SubspaceModel<T>> {
    if cfg.d_sub == 0 {
        return Err(Error::Config("d_sub must be positive".into()));
    }
    let source = source.with_features(l2_normalize_rows(source.features())?)?;
    let source_counts = source.class_counts();
    let target = match target_labeled {
        Some(t) => {
            if t.features().cols() != source.features().cols() {
                return Err(Error::DimensionMismatch {
                    expected: source.features().cols(),
                    found: t.features().cols(),
                });
            }
            if let Some(&class) = t
                .labels()
                .iter()
                .find(|&&l| source_counts.get(l).is_none_or(|&c| c == 0))
            {
                return Err(Error::UnknownClassInTargetTrain { class });
            }
            let t = LabeledDataset::new(
                l2_normalize_rows(t.features())?,
                t.labels().to_vec(),
                source.n_classes(),
            )?;
            Some(t)
        }
        None => None,
    };
    let train = match &target {
        Some(t) => source.concat(t)?,
        None => source.clone(),
    };
    let d_sub = effective_dim(cfg.d_sub, train.features().cols(), train.len());
    let slpp = SlppConfig {
        ridge: cfg.ridge,
        solver: cfg.solver,
    };
    let p = learn_projection_with(&train, d_sub, &slpp)?;
    fit_model(&p, &train, &[train.features()])
}

#[derive(Clone, Debug)]
pub struct ZslOutcome<T> {
    pub model: SubspaceModel<T>,
    pub confidences: ConfidenceTable<T>,
}

impl<T> ZslOutcome<T> {
    pub fn predicted(&self) -> &[usize] {
        &self.confidences.predicted
    }
}

/// Fit, then predict `target_test` over every source class.
pub fn run_zsl<T: Real>(
    source: &LabeledDataset<T>,
    target_labeled: Option<&LabeledDataset<T>>,
    target_test: &FeatureMatrix<T>,
    cfg: &ZslConfig,
) -> Result<ZslOutcome<T>> {
    let model = fit_zsl(source, target_labeled, cfg)?;
    let test = l2_normalize_rows(target_test)?;
    let confidences = predict_with_temperature(&model, &test, cfg.temperature)?;
    Ok(ZslOutcome { model, confidences })
}

/// Mean per-class accuracy over known and over unseen classes, and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GzslMetrics {
    pub acc_known: f64,
    pub acc_unseen: f64,
    pub harmonic: f64,
}

impl GzslMetrics {
    pub fn new(acc_known: f64, acc_unseen: f64) -> Self {
        Self {
            acc_known,
            acc_unseen,
            harmonic: harmonic_mean(acc_known, acc_unseen),
        }
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// `predicted` and `truth` are aligned with `split.target_test_rows`.
pub fn gzsl_metrics(predicted: &[usize], truth: &[usize], split: &ZslSplit) -> Result<GzslMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let class_acc = |c: usize| -> Result<f64> {
        let mut total = 0usize;
        let mut hits = 0usize;
        for (&p, &t) in predicted.iter().zip(truth) {
            if t == c {
                total += 1;
                hits += usize::from(p == c);
            }
        }
        if total == 0 {
            return Err(Error::EmptyTestClass { class: c });
        }
        Ok(hits as f64 / total as f64)
    };
    let mean_over = |classes: &[usize]| -> Result<f64> {
        if classes.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for &c in classes {
            s += class_acc(c)?;
        }
        Ok(s / classes.len() as f64)
    };
    Ok(GzslMetrics::new(
        mean_over(&split.known_classes)?,
        mean_over(&split.unseen_classes)?,
    ))
}

/// Mean and standard error of the mean (sample std / √n) of each field.
pub fn summarize(runs: &[GzslMetrics]) -> (GzslMetrics, GzslMetrics) {
    fn stats(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        if v.len() < 2 {
            return (mean, 0.0);
        }
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
    let k: Vec<f64> = runs.iter().map(|m| m.acc_known).collect();
    let u: Vec<f64> = runs.iter().map(|m| m.acc_unseen).collect();
    let h: Vec<f64> = runs.iter().map(|m| m.harmonic).collect();
    let (km, ks) = stats(&k);
    let (um, us) = stats(&u);
    let (hm, hs) = stats(&h);
    (
        GzslMetrics {
            acc_known: km,
            acc_unseen: um,
            harmonic: hm,
        },
        GzslMetrics {
            acc_known: ks,
            acc_unseen: us,
            harmonic: hs,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(classes: usize, per: usize) -> Vec<usize> {
        (0..classes * per).map(|i| i % classes).collect()
    }

    #[test]
    fn sixty_five_classes() {
        let s = make_split(&labels(65, 4), 35, 0).unwrap();
        assert_eq!(s.known_classes.len(), 35);
        assert_eq!(s.unseen_classes.len(), 30);
        s.validate(&labels(65, 4)).unwrap();
    }

    #[test]
    fn one_unseen_class_boundary() {
        let s = make_split(&labels(6, 3), 5, 1).unwrap();
        assert_eq!(s.unseen_classes.len(), 1);
        assert!(make_split(&labels(6, 3), 6, 1).is_err());
        assert!(make_split(&labels(6, 3), 0, 1).is_err());
    }

    #[test]
    fn half_split_per_class() {
        let l = labels(4, 5);
        let s = make_split(&l, 2, 3).unwrap();
        for c in 0..4 {
            let test = s.target_test_rows.iter().filter(|&&r| l[r] == c).count();
            let train = s.target_train_rows.iter().filter(|&&r| l[r] == c).count();
            assert_eq!(test, 2);
            let known = s.known_classes.contains(&c);
            assert_eq!(train, if known { 3 } else { 0 });
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let l = labels(20, 4);
        assert_eq!(make_split(&l, 10, 7).unwrap(), make_split(&l, 10, 7).unwrap());
        let splits: Vec<_> = (0..5).map(|s| make_split(&l, 10, s).unwrap()).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(splits[i], splits[j]);
            }
        }
    }

    #[test]
    fn small_class_rejected() {
        let mut l = labels(3, 4);
        l.push(3);
        assert!(matches!(
            make_split(&l, 2, 0),
            Err(Error::InsufficientClassSize { class: 3, count: 1 })
        ));
    }

    fn split(known: Vec<usize>, unseen: Vec<usize>) -> ZslSplit {
        ZslSplit {
            known_classes: known,
            unseen_classes: unseen,
            target_train_rows: vec![],
            target_test_rows: vec![],
            seed: None,
        }
    }

    #[test]
    fn metrics_cases() {
        let s = split(vec![0, 1], vec![2]);
        let truth = [0, 1, 2, 2];
        assert_eq!(gzsl_metrics(&truth, &truth, &s).unwrap(), GzslMetrics::new(1.0, 1.0));
        assert_eq!(gzsl_metrics(&truth, &truth, &s).unwrap().harmonic, 1.0);
        let m = gzsl_metrics(&[0, 1, 0, 1], &truth, &s).unwrap();
        assert_eq!(m.acc_unseen, 0.0);
        assert_eq!(m.harmonic, 0.0);
        assert!((harmonic_mean(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-12);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert!(matches!(
            gzsl_metrics(&[0, 1], &[0, 1], &s),
            Err(Error::EmptyTestClass { class: 2 })
        ));
    }

    #[test]
    fn metrics_ignore_duplication_and_relabeling() {
        let s = split(vec![0, 1], vec![2]);
        let truth = vec![0, 0, 1, 2, 2, 2];
        let pred = vec![0, 1, 1, 2, 0, 2];
        let base = gzsl_metrics(&pred, &truth, &s).unwrap();

        let mut t2 = truth.clone();
        let mut p2 = pred.clone();
        for i in 0..truth.len() {
            if truth[i] == 2 {
                t2.push(truth[i]);
                p2.push(pred[i]);
            }
        }
        assert_eq!(gzsl_metrics(&p2, &t2, &s).unwrap(), base);

        let perm = [2, 0, 1];
        let relabel = |v: &[usize]| v.iter().map(|&x| perm[x]).collect::<Vec<_>>();
        let s2 = split(vec![perm[0], perm[1]], vec![perm[2]]);
        assert_eq!(gzsl_metrics(&relabel(&pred), &relabel(&truth), &s2).unwrap(), base);
    }

    #[test]
    fn summary_statistics() {
        let runs = [GzslMetrics::new(0.8, 0.6), GzslMetrics::new(0.6, 0.8)];
        let (mean, sem) = summarize(&runs);
        assert!((mean.acc_known - 0.7).abs() < 1e-12);
        assert!((sem.acc_known - 0.1).abs() < 1e-12);
        assert_eq!(sem.harmonic, 0.0);
    }
}

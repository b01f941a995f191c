//! Metrics and baseline runners.

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::capls::{run_uda, ProjectionKind, UdaConfig, UdaOutcome};
use crate::linalg::{solve_generalized_sym_with, SymMatrix};
use crate::preprocess::FeatureMatrix;
use crate::slpp::{class_means, LabeledDataset, ProjectionMatrix, SlppConfig};
use crate::{Error, Real, Result};

/// Fraction of exact matches.
pub fn per_image_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Config("accuracy of an empty prediction set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Entry `(i, j)` counts instances of true class `i` predicted as `j`.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<Array2<usize>> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut m = Array2::zeros((n_classes, n_classes));
    for (&p, &t) in predicted.iter().zip(truth) {
        for label in [p, t] {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange { label, n_classes });
            }
        }
        m[[t, p]] += 1;
    }
    Ok(m)
}

/// Per-class recall; `None` for classes absent from `truth`.
pub fn per_class_accuracy(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    let m = confusion_matrix(predicted, truth, n_classes)?;
    Ok((0..n_classes)
        .map(|c| {
            let total: usize = m.row(c).sum();
            (total > 0).then(|| m[[c, c]] as f64 / total as f64)
        })
        .collect())
}

/// Label of the Euclidean-nearest training row (lowest row index on ties), training on
/// source plus the optional labelled target rows without any alignment.
pub fn run_baseline_1nn<T: Real>(
    source: &LabeledDataset<T>,
    target_labeled: Option<&LabeledDataset<T>>,
    test: &FeatureMatrix<T>,
) -> Result<Vec<usize>> {
    let train = match target_labeled {
        Some(t) => source.concat(t)?,
        None => source.clone(),
    };
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let x = train.features().data();
    if test.cols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: test.cols(),
        });
    }
    Ok(test
        .data()
        .rows()
        .into_iter()
        .map(|q| {
            let mut best = (T::infinity(), 0);
            for (i, row) in x.rows().into_iter().enumerate() {
                let d = row.iter().zip(q.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
                if d < best.0 {
                    best = (d, i);
                }
            }
            train.labels()[best.1]
        })
        .collect())
}

/// Fisher discriminant projection: top generalized eigenvectors of
/// `S_b p = λ (S_w + ridge·I) p`, with between- and within-class scatter of `data`.
pub fn lda_projection<T: Real>(
    data: &LabeledDataset<T>,
    d_sub: usize,
    cfg: &SlppConfig,
) -> Result<ProjectionMatrix<T>> {
    let counts = data.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::DegenerateData(
            "between-class scatter vanishes with fewer than 2 classes".into(),
        ));
    }
    let x = data.features().data();
    let d = x.ncols();
    let labels = data.labels();
    let means = class_means(x, labels, &counts);
    let overall = x.mean_axis(ndarray::Axis(0)).expect("non-empty");

    let mut between = Array2::<T>::zeros((present, d));
    for (mut row, (c, &n)) in between
        .rows_mut()
        .into_iter()
        .zip(counts.iter().enumerate().filter(|(_, &n)| n > 0))
    {
        row.assign(&((&means.row(c) - &overall) * T::of_usize(n).sqrt()));
    }
    let sb = between.t().dot(&between);

    let mut centered = x.clone();
    for (mut row, &l) in centered.rows_mut().into_iter().zip(labels) {
        row -= &means.row(l);
    }
    let mut sw = centered.t().dot(&centered);
    let ridge = T::of(cfg.ridge);
    for i in 0..d {
        sw[[i, i]] += ridge;
    }
    let eig = solve_generalized_sym_with(
        &SymMatrix::symmetrized(sb)?,
        &SymMatrix::symmetrized(sw)?,
        d_sub,
        &cfg.solver,
    )?;
    ProjectionMatrix::new(eig.vectors, eig.values)
}

/// The adaptation loop with the Fisher discriminant in place of SLPP.
pub fn run_baseline_lda_subspace<T: Real>(
    source: &LabeledDataset<T>,
    target: &FeatureMatrix<T>,
    cfg: &UdaConfig,
    truth: Option<&[usize]>,
) -> Result<UdaOutcome<T>> {
    let cfg = UdaConfig {
        projection: ProjectionKind::Lda,
        ..*cfg
    };
    run_uda(source, target, &cfg, truth)
}

/// Predictions from the source-only projection, with no pseudo-label rounds.
pub fn run_baseline_source_only<T: Real>(
    source: &LabeledDataset<T>,
    target: &FeatureMatrix<T>,
    cfg: &UdaConfig,
) -> Result<Vec<usize>> {
    let mut run = crate::capls::UdaRun::new(source, target, cfg, None)?;
    Ok(run.initialize()?.confidences.predicted)
}

/// SHA-256 over the shape and little-endian `f64` values of a feature matrix.
pub fn feature_digest<T: Real>(x: &FeatureMatrix<T>) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for &v in x.data().iter() {
        h.update(v.f64().to_le_bytes());
    }
    hex::encode(h.finalize())
}

//! Recognition in the learned subspace.
//!
//! Projections are centred on the mean of the projected training pool, scaled to unit
//! norm, and classified by the nearest l2-normalised class mean. Distances are turned
//! into class probabilities with a softmax over their negatives.

use ndarray::{Array1, Array2, Axis};

use crate::preprocess::{FeatureMatrix, ZERO_NORM};
use crate::slpp::{class_means, LabeledDataset, ProjectionMatrix};
use crate::{Error, Real, Result};

/// Row `i` of the result is `Pᵀ x_i`.
pub fn project<T: Real>(p: &ProjectionMatrix<T>, x: &FeatureMatrix<T>) -> Result<Array2<T>> {
    if x.cols() != p.d_in() {
        return Err(Error::DimensionMismatch {
            expected: p.d_in(),
            found: x.cols(),
        });
    }
    Ok(x.data().dot(&p.p))
}

/// `(z_i − mean) / ‖z_i − mean‖₂` for every row.
pub fn center_and_normalize<T: Real>(z: &Array2<T>, mean: &Array1<T>) -> Result<Array2<T>> {
    if z.ncols() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            found: mean.len(),
        });
    }
    let mut out = z - mean;
    normalize_rows_in_place(&mut out)?;
    Ok(out)
}

fn normalize_rows_in_place<T: Real>(m: &mut Array2<T>) -> Result<()> {
    let floor = T::of(ZERO_NORM);
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm < floor {
            return Err(Error::ZeroVector { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Projection, training mean and class prototypes.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceModel<T> {
    pub projection: ProjectionMatrix<T>,
    pub train_mean: Array1<T>,
    /// Row `c` is the unit-norm prototype of `classes[c]`.
    pub class_means: Array2<T>,
    pub classes: Vec<usize>,
}

impl<T: Real> SubspaceModel<T> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Projects, centres and normalises `x` the way the model's training data was.
    pub fn embed(&self, x: &FeatureMatrix<T>) -> Result<Array2<T>> {
        center_and_normalize(&project(&self.projection, x)?, &self.train_mean)
    }
}

/// Fits the training mean over `mean_pool` and one prototype per class of `train`.
///
/// Every class id in `[0, train.n_classes())` must have at least one instance in `train`.
pub fn fit_model<T: Real>(
    p: &ProjectionMatrix<T>,
    train: &LabeledDataset<T>,
    mean_pool: &[&FeatureMatrix<T>],
) -> Result<SubspaceModel<T>> {
    if mean_pool.is_empty() {
        return Err(Error::Config("mean pool is empty".into()));
    }
    let mut sum = Array1::<T>::zeros(p.d_sub());
    let mut count = 0usize;
    for x in mean_pool {
        sum += &project(p, x)?.sum_axis(Axis(0));
        count += x.rows();
    }
    let train_mean = sum / T::of_usize(count);

    let counts = train.class_counts();
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    let z = center_and_normalize(&project(p, train.features())?, &train_mean)?;
    let mut means = class_means(&z, train.labels(), &counts);
    let floor = T::of(ZERO_NORM);
    for (class, mut row) in means.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm < floor {
            return Err(Error::DegenerateClassMean { class });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(SubspaceModel {
        projection: p.clone(),
        train_mean,
        class_means: means,
        classes: (0..train.n_classes()).collect(),
    })
}

/// Softmax class probabilities and nearest-mean predictions for a batch of instances.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceTable<T> {
    pub q: Array2<T>,
    pub predicted: Vec<usize>,
}

impl<T: Real> ConfidenceTable<T> {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.q.ncols()
    }

    /// Builds the table from a distance matrix (`n × C`).
    pub fn from_distances(distances: &Array2<T>, temperature: f64) -> Self {
        let temperature = T::of(temperature);
        let mut q = Array2::zeros(distances.dim());
        let mut predicted = Vec::with_capacity(distances.nrows());
        for (row, mut out) in distances.rows().into_iter().zip(q.rows_mut()) {
            let mut best = 0;
            for (c, &d) in row.iter().enumerate() {
                if d < row[best] {
                    best = c;
                }
            }
            predicted.push(best);
            // shifting by the minimum distance leaves the softmax unchanged
            let min = row[best];
            let mut total = T::zero();
            for (o, &d) in out.iter_mut().zip(row.iter()) {
                *o = (-(d - min) / temperature).exp();
                total += *o;
            }
            out.mapv_inplace(|v| v / total);
        }
        Self { q, predicted }
    }
}

/// Euclidean distances from each embedded row to each class prototype.
pub fn class_distances<T: Real>(model: &SubspaceModel<T>, x: &FeatureMatrix<T>) -> Result<Array2<T>> {
    let z = model.embed(x)?;
    let mut d = Array2::zeros((z.nrows(), model.n_classes()));
    for (zi, mut out) in z.rows().into_iter().zip(d.rows_mut()) {
        for (m, o) in model.class_means.rows().into_iter().zip(out.iter_mut()) {
            *o = zi
                .iter()
                .zip(m.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>()
                .sqrt();
        }
    }
    Ok(d)
}

pub fn predict<T: Real>(model: &SubspaceModel<T>, x: &FeatureMatrix<T>) -> Result<ConfidenceTable<T>> {
    predict_with_temperature(model, x, 1.0)
}

/// Nearest class mean (lowest class id on ties) with `softmax(−d / temperature)`.
pub fn predict_with_temperature<T: Real>(
    model: &SubspaceModel<T>,
    x: &FeatureMatrix<T>,
    temperature: f64,
) -> Result<ConfidenceTable<T>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    Ok(ConfidenceTable::from_distances(&class_distances(model, x)?, temperature))
}

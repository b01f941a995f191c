//! Supervised locality preserving projection.
//!
//! With instances as the columns of `X`, the similarity `W[i][j] = 1` iff instances `i`
//! and `j` share a label (whatever their domain), `D = diag(Σ_j W[i][j])` and
//! `L = D − W`. The projection maximises `Tr(Pᵀ X D Xᵀ P) / Tr(Pᵀ (X L Xᵀ + ridge·I) P)`,
//! whose optimum is spanned by the top generalized eigenvectors of that pencil.
//!
//! Because `W` is block-constant per class, neither `W` nor `L` is materialised when
//! learning: `X D Xᵀ = Σ_i n_{y_i} x_i x_iᵀ` and `X L Xᵀ = Σ_c n_c Σ_{i∈c} (x_i − m_c)(x_i − m_c)ᵀ`,
//! which costs `O(n d²)` instead of `O(n² d)`.

use ndarray::{Array1, Array2, Axis};

use crate::linalg::{solve_generalized_sym_with, SolverConfig, SymMatrix};
use crate::preprocess::FeatureMatrix;
use crate::{Error, Real, Result};

/// Default subspace dimensionality.
pub const DEFAULT_DIM: usize = 128;

/// Features plus one class id in `[0, n_classes)` per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    features: FeatureMatrix<T>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(features: FeatureMatrix<T>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::RowCountMismatch {
                features: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    /// Uses `max(label) + 1` as the class count.
    pub fn from_labels(features: FeatureMatrix<T>, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::new(features, labels, n_classes)
    }

    pub fn features(&self) -> &FeatureMatrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Instances per class, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn with_features(&self, features: FeatureMatrix<T>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.n_classes)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.features.select(indices)?, labels, self.n_classes)
    }

    /// Concatenation; the class count is the larger of the two.
    pub fn concat(&self, other: &LabeledDataset<T>) -> Result<Self> {
        let features = FeatureMatrix::stack(&[&self.features, &other.features])?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(features, labels, self.n_classes.max(other.n_classes))
    }
}

/// Dense label-match graph. Only practical for small `n`; learning never builds it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph<T> {
    pub w: Array2<T>,
    pub degree: Array1<T>,
    pub laplacian: Array2<T>,
}

pub fn build_similarity<T: Real>(data: &LabeledDataset<T>) -> Result<SimilarityGraph<T>> {
    let n = data.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "similarity graph needs at least 2 instances, got {n}"
        )));
    }
    let labels = data.labels();
    let w = Array2::from_shape_fn((n, n), |(i, j)| {
        if labels[i] == labels[j] {
            T::one()
        } else {
            T::zero()
        }
    });
    let degree = w.sum_axis(Axis(1));
    let laplacian = Array2::from_diag(&degree) - &w;
    Ok(SimilarityGraph { w, degree, laplacian })
}

/// Learned projection `P` (`d_in × d_sub`) and the generalized eigenvalue of each column.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub p: Array2<T>,
    pub eigenvalues: Array1<T>,
}

impl<T: Real> ProjectionMatrix<T> {
    pub fn new(p: Array2<T>, eigenvalues: Array1<T>) -> Result<Self> {
        if eigenvalues.len() != p.ncols() {
            return Err(Error::LengthMismatch {
                left: p.ncols(),
                right: eigenvalues.len(),
            });
        }
        if p.ncols() > p.nrows() {
            return Err(Error::KTooLarge {
                k: p.ncols(),
                dim: p.nrows(),
            });
        }
        Ok(Self { p, eigenvalues })
    }

    /// Identity-like projection keeping the first `d_sub` coordinates.
    pub fn truncated_identity(d_in: usize, d_sub: usize) -> Result<Self> {
        Self::new(
            Array2::from_shape_fn((d_in, d_sub), |(i, j)| if i == j { T::one() } else { T::zero() }),
            Array1::zeros(d_sub),
        )
    }

    pub fn d_in(&self) -> usize {
        self.p.nrows()
    }

    pub fn d_sub(&self) -> usize {
        self.p.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlppConfig {
    /// Weight of the identity added to `X L Xᵀ`.
    pub ridge: f64,
    pub solver: SolverConfig,
}

impl Default for SlppConfig {
    fn default() -> Self {
        Self {
            ridge: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

/// Subspace dimensionality actually used: `requested` clamped to `min(d_in, n − 1)`.
pub fn effective_dim(requested: usize, d_in: usize, n: usize) -> usize {
    requested.min(d_in).min(n.saturating_sub(1)).max(1)
}

/// `(X D Xᵀ, X L Xᵀ + ridge·I)` for the label-match graph.
pub fn slpp_matrices<T: Real>(
    data: &LabeledDataset<T>,
    ridge: f64,
) -> Result<(SymMatrix<T>, SymMatrix<T>)> {
    let x = data.features().data();
    let d = x.ncols();
    let counts = data.class_counts();
    let labels = data.labels();

    let mut weighted = x.clone();
    for (mut row, &l) in weighted.rows_mut().into_iter().zip(labels) {
        row *= T::of_usize(counts[l]);
    }
    let a = weighted.t().dot(x);

    let means = class_means(x, labels, &counts);
    let mut centered = x.clone();
    for (mut row, &l) in centered.rows_mut().into_iter().zip(labels) {
        row -= &means.row(l);
        row *= T::of_usize(counts[l]).sqrt();
    }
    let mut b = centered.t().dot(&centered);
    let ridge = T::of(ridge);
    for i in 0..d {
        b[[i, i]] += ridge;
    }
    Ok((SymMatrix::symmetrized(a)?, SymMatrix::symmetrized(b)?))
}

/// Row `c` is the mean of the rows labelled `c` (zero for empty classes).
pub(crate) fn class_means<T: Real>(x: &Array2<T>, labels: &[usize], counts: &[usize]) -> Array2<T> {
    let mut means = Array2::<T>::zeros((counts.len(), x.ncols()));
    for (row, &l) in x.rows().into_iter().zip(labels) {
        let mut m = means.row_mut(l);
        m += &row;
    }
    for (mut m, &c) in means.rows_mut().into_iter().zip(counts) {
        if c > 0 {
            m /= T::of_usize(c);
        }
    }
    means
}

pub fn learn_projection<T: Real>(data: &LabeledDataset<T>, d_sub: usize) -> Result<ProjectionMatrix<T>> {
    learn_projection_with(data, d_sub, &SlppConfig::default())
}

/// Top `d_sub` generalized eigenvectors of `X D Xᵀ p = λ (X L Xᵀ + ridge·I) p`.
pub fn learn_projection_with<T: Real>(
    data: &LabeledDataset<T>,
    d_sub: usize,
    cfg: &SlppConfig,
) -> Result<ProjectionMatrix<T>> {
    if data.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "projection learning needs at least 2 instances, got {}",
            data.len()
        )));
    }
    let (a, b) = slpp_matrices(data, cfg.ridge)?;
    let eig = solve_generalized_sym_with(&a, &b, d_sub, &cfg.solver)?;
    ProjectionMatrix::new(eig.vectors, eig.values)
}

/// `Tr(Pᵀ A P) / Tr(Pᵀ B P)`.
pub fn trace_ratio<T: Real>(p: &Array2<T>, a: &SymMatrix<T>, b: &SymMatrix<T>) -> T {
    let num = p.t().dot(&a.as_array().dot(p)).diag().sum();
    let den = p.t().dot(&b.as_array().dot(p)).diag().sum();
    num / den
}

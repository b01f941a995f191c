//! Instance and feature normalisation.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Row norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Floor substituted for zero-variance columns in z-scoring.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Row-wise instance features, each row tagged with the domain it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Array2<T>,
    domains: Vec<Domain>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(data: Array2<T>, domain: Domain) -> Result<Self> {
        let n = data.nrows();
        Self::with_row_domains(data, vec![domain; n])
    }

    pub fn with_row_domains(data: Array2<T>, domains: Vec<Domain>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if domains.len() != rows {
            return Err(Error::LengthMismatch {
                left: rows,
                right: domains.len(),
            });
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(Self { data, domains })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.data.row(i)
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, row: usize) -> Domain {
        self.domains[row]
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let data = self.data.select(Axis(0), indices);
        let domains = indices.iter().map(|&i| self.domains[i]).collect();
        Self::with_row_domains(data, domains)
    }

    /// Vertical concatenation.
    pub fn stack(parts: &[&FeatureMatrix<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("nothing to stack".into()))?;
        for p in parts {
            if p.cols() != first.cols() {
                return Err(Error::DimensionMismatch {
                    expected: first.cols(),
                    found: p.cols(),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data = concatenate(Axis(0), &views).expect("column counts checked");
        let domains = parts.iter().flat_map(|p| p.domains.iter().copied()).collect();
        Ok(Self { data, domains })
    }

    pub(crate) fn map_data(&self, data: Array2<T>) -> Self {
        debug_assert_eq!(data.dim(), self.data.dim());
        Self {
            data,
            domains: self.domains.clone(),
        }
    }
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows<T: Real>(x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let mut out = x.data().clone();
    let floor = T::of(ZERO_NORM);
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm < floor {
            return Err(Error::ZeroVector { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(x.map_data(out))
}

/// Per-column mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ZScoreStats<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Real> ZScoreStats<T> {
    pub fn fit(x: &FeatureMatrix<T>) -> Self {
        let n = T::of_usize(x.rows());
        let mean = x.data().sum_axis(Axis(0)) / n;
        let floor = T::of(STD_FLOOR);
        let std = Array1::from_shape_fn(x.cols(), |j| {
            let m = mean[j];
            let var = x.data().column(j).iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            let s = var.sqrt();
            if s < floor {
                floor
            } else {
                s
            }
        });
        Self { mean, std }
    }
}

/// Standardises columns, fitting the statistics from `x` when `stats` is `None`.
pub fn zscore_columns<T: Real>(
    x: &FeatureMatrix<T>,
    stats: Option<&ZScoreStats<T>>,
) -> Result<(FeatureMatrix<T>, ZScoreStats<T>)> {
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != x.cols() || s.std.len() != x.cols() {
                return Err(Error::DimensionMismatch {
                    expected: x.cols(),
                    found: s.mean.len().min(s.std.len()),
                });
            }
            s.clone()
        }
        None => ZScoreStats::fit(x),
    };
    let mut out = x.data() - &stats.mean;
    out /= &stats.std;
    Ok((x.map_data(out), stats))
}

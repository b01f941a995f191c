//! Dense symmetric linear algebra.
//!
//! The generalized problem `A p = λ B p` with `B` symmetric positive definite is reduced
//! to a standard symmetric problem through the Cholesky factor of `B`:
//! `B = L Lᵀ`, `C = L⁻¹ A L⁻ᵀ`, `C y = λ y`, `p = L⁻ᵀ y`. The standard problem is solved
//! by Householder tridiagonalisation followed by implicit QL iterations.
//!
//! Eigenpairs are returned largest eigenvalue first. Equal eigenvalues keep the order
//! the QL sweep produced them in, and every eigenvector is flipped so that its
//! largest-magnitude entry is positive.

use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Real, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    /// QL iteration budget per eigenvalue.
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Square matrix that is exactly symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T> {
    entries: Array2<T>,
}

impl<T: Real> SymMatrix<T> {
    /// Builds a symmetric matrix from the upper triangle of `m` (the lower triangle is
    /// overwritten by its mirror).
    pub fn from_upper(mut m: Array2<T>) -> Result<Self> {
        let (rows, cols) = m.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: cols,
            });
        }
        if rows == 0 {
            return Err(Error::Config("symmetric matrix must have dim >= 1".into()));
        }
        for i in 0..rows {
            for j in 0..i {
                m[[i, j]] = m[[j, i]];
            }
        }
        Ok(Self { entries: m })
    }

    /// Builds a symmetric matrix as `(m + mᵀ) / 2`.
    pub fn symmetrized(m: Array2<T>) -> Result<Self> {
        let (rows, cols) = m.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: cols,
            });
        }
        let half = T::of(0.5);
        let mut out = m.clone();
        for i in 0..rows {
            for j in i + 1..rows {
                let v = (m[[i, j]] + m[[j, i]]) * half;
                out[[i, j]] = v;
            }
        }
        Self::from_upper(out)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
        }
    }

    pub fn from_diag(diag: &[T]) -> Self {
        Self {
            entries: Array2::from_diag(&ArrayView1::from(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn into_array(self) -> Array2<T> {
        self.entries
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}

/// Eigenvalues (non-increasing) and eigenvectors stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

impl<T: Real> EigenPairs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest residual `‖A p − λ B p‖₂ / (‖A‖_F + |λ| ‖B‖_F)` over all pairs.
    pub fn max_scaled_residual(&self, a: &SymMatrix<T>, b: &SymMatrix<T>) -> T {
        let na = a.frobenius_norm();
        let nb = b.frobenius_norm();
        let mut worst = T::zero();
        for (k, &lambda) in self.values.iter().enumerate() {
            let p = self.vectors.column(k);
            let r = a.as_array().dot(&p) - &(b.as_array().dot(&p) * lambda);
            let rn = r.iter().map(|&v| v * v).sum::<T>().sqrt();
            let scale = na + lambda.abs() * nb;
            let scaled = if scale > T::zero() { rn / scale } else { rn };
            worst = worst.max(scaled);
        }
        worst
    }
}

/// Lower-triangular `L` with `L Lᵀ = b`.
pub fn cholesky<T: Real>(b: &SymMatrix<T>) -> Result<Array2<T>> {
    let n = b.dim();
    let m = b.as_array();
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag.f64(),
            });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

pub fn symmetric_eigs<T: Real>(a: &SymMatrix<T>, k: usize) -> Result<EigenPairs<T>> {
    symmetric_eigs_with(a, k, &SolverConfig::default())
}

/// The `k` largest eigenpairs of `a`, with orthonormal eigenvectors.
pub fn symmetric_eigs_with<T: Real>(
    a: &SymMatrix<T>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<EigenPairs<T>> {
    let n = a.dim();
    check_k(k, n)?;
    let mut v: Vec<T> = a.as_array().iter().copied().collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e, cfg.max_iterations)?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep solver order
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut values = Array1::zeros(k);
    let mut vectors = Array2::zeros((n, k));
    for (out, &src) in order.iter().take(k).enumerate() {
        values[out] = d[src];
        for r in 0..n {
            vectors[[r, out]] = v[r * n + src];
        }
    }
    fix_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

pub fn solve_generalized_sym<T: Real>(
    a: &SymMatrix<T>,
    b: &SymMatrix<T>,
    k: usize,
) -> Result<EigenPairs<T>> {
    solve_generalized_sym_with(a, b, k, &SolverConfig::default())
}

/// The `k` largest solutions of `A p = λ B p`, with `B`-orthonormal eigenvectors.
pub fn solve_generalized_sym_with<T: Real>(
    a: &SymMatrix<T>,
    b: &SymMatrix<T>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<EigenPairs<T>> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.dim(),
        });
    }
    check_k(k, n)?;
    let l = cholesky(b)?;

    // C = L⁻¹ (L⁻¹ A)ᵀ, which equals L⁻¹ A L⁻ᵀ because A is symmetric
    let y = forward_substitute(&l, a.as_array());
    let c = forward_substitute(&l, &y.t().to_owned());
    let reduced = SymMatrix::symmetrized(c)?;
    let standard = symmetric_eigs_with(&reduced, k, cfg)?;

    let mut vectors = backward_substitute_transposed(&l, &standard.vectors);
    fix_signs(&mut vectors);
    Ok(EigenPairs {
        values: standard.values,
        vectors,
    })
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("number of eigenpairs must be positive".into()));
    }
    if k > dim {
        return Err(Error::KTooLarge { k, dim });
    }
    Ok(())
}

/// Solves `L X = rhs` for lower-triangular `L`.
fn forward_substitute<T: Real>(l: &Array2<T>, rhs: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = rhs.clone();
    for col in 0..rhs.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Solves `Lᵀ X = rhs` for lower-triangular `L`.
fn backward_substitute_transposed<T: Real>(l: &Array2<T>, rhs: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = rhs.clone();
    for col in 0..rhs.ncols() {
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in i + 1..n {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Flips each column so that its largest-magnitude entry is positive (first such entry
/// on magnitude ties).
pub(crate) fn fix_signs<T: Real>(vectors: &mut Array2<T>) {
    for mut col in vectors.columns_mut() {
        let mut best = T::zero();
        let mut sign = T::one();
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = if v < T::zero() { -T::one() } else { T::one() };
            }
        }
        if sign < T::zero() {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Householder reduction to tridiagonal form. `v` is the row-major `n×n` input and
/// receives the accumulated orthogonal transform; `d` and `e` receive the diagonal and
/// sub-diagonal.
fn tridiagonalize<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let zero = T::zero();
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
                v[idx(j, i)] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = zero;
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

/// Implicit QL iterations on the tridiagonal `(d, e)`, accumulating into `v`.
fn ql_implicit<T: Real>(
    n: usize,
    v: &mut [T],
    d: &mut [T],
    e: &mut [T],
    max_iterations: usize,
) -> Result<()> {
    let zero = T::zero();
    let one = T::one();
    let two = T::of(2.0);
    let idx = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iterations {
                    return Err(Error::NonConvergence {
                        iterations: max_iterations,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence {
            iterations: max_iterations,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sym(m: Array2<f64>) -> SymMatrix<f64> {
        SymMatrix::from_upper(m).unwrap()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&SymMatrix::<f64>::identity(4)).unwrap();
        assert_eq!(l, Array2::<f64>::eye(4));
        let l = cholesky(&SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert_eq!(l, array![[2.0, 0.0], [0.0, 3.0]]);
    }

    #[test]
    fn cholesky_two_by_two() {
        let l = cholesky(&sym(array![[4.0, 2.0], [2.0, 3.0]])).unwrap();
        assert_abs_diff_eq!(l[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 1]], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[[0, 1]], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = cholesky(&sym(array![[1.0, 2.0], [2.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
        let err = cholesky(&sym(array![[0.0, 0.0], [0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 0, .. }));
    }

    #[test]
    fn eigs_diagonal() {
        let e = symmetric_eigs(&SymMatrix::from_diag(&[5.0, 2.0]), 2).unwrap();
        assert_eq!(e.values.to_vec(), vec![5.0, 2.0]);
        let e = symmetric_eigs(&SymMatrix::from_diag(&[3.0, 1.0, 2.0]), 3).unwrap();
        assert_eq!(e.values.to_vec(), vec![3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(e.vectors[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vectors[[2, 1]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn eigs_two_by_two() {
        let e = symmetric_eigs(&sym(array![[2.0, 1.0], [1.0, 2.0]]), 1).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-12);
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(e.vectors[[0, 0]], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[[1, 0]], h, epsilon = 1e-12);
    }

    #[test]
    fn eigs_rank_one() {
        let u = array![0.6, 0.0, 0.8];
        let m = Array2::from_shape_fn((3, 3), |(i, j)| u[i] * u[j]);
        let e = symmetric_eigs(&sym(m), 2).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(e.values[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn eigs_one_by_one_and_bounds() {
        let e = symmetric_eigs(&SymMatrix::from_diag(&[-7.0]), 1).unwrap();
        assert_eq!(e.values[0], -7.0);
        assert_eq!(e.vectors[[0, 0]], 1.0);
        assert!(matches!(
            symmetric_eigs(&SymMatrix::<f64>::identity(2), 3),
            Err(Error::KTooLarge { k: 3, dim: 2 })
        ));
    }

    #[test]
    fn generalized_identity() {
        let i3 = SymMatrix::<f64>::identity(3);
        let e = solve_generalized_sym(&i3, &i3, 2).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let gram = e.vectors.t().dot(&e.vectors);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generalized_diagonal() {
        let a = SymMatrix::from_diag(&[3.0, 1.0, 2.0]);
        let e = solve_generalized_sym(&a, &SymMatrix::identity(3), 1).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.vectors[[0, 0]], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn generalized_errors() {
        let a = SymMatrix::<f64>::identity(3);
        let b = SymMatrix::<f64>::identity(2);
        assert!(matches!(
            solve_generalized_sym(&a, &b, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        let b = SymMatrix::from_diag(&[1.0, -1.0, 1.0]);
        assert!(matches!(
            solve_generalized_sym(&a, &b, 1),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            solve_generalized_sym(&a, &SymMatrix::identity(3), 4),
            Err(Error::KTooLarge { .. })
        ));
    }

    #[test]
    fn generalized_scaled_b() {
        // A p = λ (2I) p → λ = a_ii / 2, and pᵀ B p = 1 → |p| = 1/√2
        let a = SymMatrix::from_diag(&[4.0, 1.0]);
        let b = SymMatrix::from_diag(&[2.0, 2.0]);
        let e = solve_generalized_sym(&a, &b, 2).unwrap();
        assert_abs_diff_eq!(e.values[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.vectors[[0, 0]], 0.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn sign_convention() {
        let mut v = array![[-0.1, 0.3], [-0.9, -0.2]];
        fix_signs(&mut v);
        assert_eq!(v, array![[0.1, 0.3], [0.9, -0.2]]);
    }

    #[test]
    fn single_precision_solves() {
        let a = SymMatrix::<f32>::from_upper(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = solve_generalized_sym(&a, &SymMatrix::identity(2), 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-5);
        assert!((e.values[1] - 1.0).abs() < 1e-5);
    }
}

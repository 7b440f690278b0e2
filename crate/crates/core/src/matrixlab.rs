//! Dense real linear-algebra kernels.
//!
//! [`Matrix`] is a plain row-major `f64` matrix. The symmetric eigensolver is
//! backed by `nalgebra`; everything built on top of it (inverse square root,
//! right pseudoinverse, spectral norm, coherence) lives here.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues at or below `PD_FLOOR * λ_max` reject a matrix as not
/// positive definite.
pub const PD_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        Ok(out)
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out)?;
        Ok(out)
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.cols || out.len() != self.rows {
            return Err(Error::Dimension(format!(
                "matvec of {:?} with x of length {} into {}",
                self.shape(),
                x.len(),
                out.len()
            )));
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
        Ok(())
    }

    /// `Aᵀ x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.tr_matvec_into(x, &mut out)?;
        Ok(out)
    }

    pub fn tr_matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.rows || out.len() != self.cols {
            return Err(Error::Dimension(format!(
                "transposed matvec of {:?} with x of length {} into {}",
                self.shape(),
                x.len(),
                out.len()
            )));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), out);
            }
        }
        Ok(())
    }

    /// `A Aᵀ`, exactly symmetric.
    pub fn gram_rows(&self) -> Matrix {
        let m = self.rows;
        let mut g = Matrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = dot(self.row(i), self.row(j));
                g.data[i * m + j] = v;
                g.data[j * m + i] = v;
            }
        }
        g
    }

    /// `Aᵀ A`, exactly symmetric.
    pub fn gram_cols(&self) -> Matrix {
        self.transpose().gram_rows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest `|M_ij − M_ji|` relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Restriction to the given columns (in order).
    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, cols.len(), |i, k| self.get(i, cols[k]))
    }

    /// Principal submatrix on the given index set.
    pub fn principal(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v.get(i, k) * fl[k] * v.get(j, k);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

pub fn sym_eigen(m: &Matrix) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(SymEigen {
            eigenvalues: vec![],
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = m.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &Matrix) -> Result<f64> {
    Ok(sym_eigen(m)?.max())
}

fn check_pd(eig: &SymEigen) -> Result<()> {
    let floor = PD_FLOOR * eig.max().max(0.0);
    let low = eig.min();
    if eig.max() <= 0.0 || low <= floor {
        return Err(Error::NotPositiveDefinite { value: low, floor });
    }
    Ok(())
}

/// `M^{-1/2}` for symmetric positive-definite `M`, via full eigendecomposition.
pub fn inv_sqrt_pd(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(m)?;
    check_pd(&eig)?;
    Ok(eig.reconstruct_with(|l| 1.0 / l.sqrt()))
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Cholesky needs a square matrix, got {:?}",
                m.shape()
            )));
        }
        let asym = m.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let n = m.rows();
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(m.get(i, i)));
        let floor = PD_FLOOR * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let pivot = m.get(j, j) - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if max_diag <= 0.0 || pivot <= floor {
                return Err(Error::NotPositiveDefinite {
                    value: pivot,
                    floor,
                });
            }
            let ljj = pivot.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let s = m.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l.set(i, j, s / ljj);
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn solve_upper_t_in_place(&self, z: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let xi = z[i] / self.l.get(i, i);
            z[i] = xi;
            // Column i of Lᵀ above the diagonal is row i of L left of it.
            let row = &self.l.row(i)[..i];
            for (zk, &lik) in z[..i].iter_mut().zip(row) {
                *zk -= lik * xi;
            }
        }
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_t_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Right pseudoinverse `A† = Aᵀ (A Aᵀ)^{-1}` of a full-row-rank matrix.
pub fn pinv_rowfull(a: &Matrix) -> Result<Matrix> {
    if a.rows() > a.cols() {
        return Err(Error::Shape(format!(
            "row-full pseudoinverse needs rows <= cols, got {:?}",
            a.shape()
        )));
    }
    let chol = Cholesky::new(&a.gram_rows())?;
    pinv_with_factor(a, &chol)
}

pub(crate) fn pinv_with_factor(a: &Matrix, chol: &Cholesky) -> Result<Matrix> {
    let (m, n) = a.shape();
    // Column j of (A Aᵀ)^{-1} A is row j of A†.
    let mut pinv = Matrix::zeros(n, m);
    let mut buf = vec![0.0; m];
    for j in 0..n {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = a.get(i, j);
        }
        chol.solve_in_place(&mut buf);
        pinv.row_mut(j).copy_from_slice(&buf);
    }
    Ok(pinv)
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    let gram = if a.rows() <= a.cols() {
        a.gram_rows()
    } else {
        a.gram_cols()
    };
    // Gram matrices are exactly symmetric, so the eigensolver cannot reject them.
    let top = sym_eigen(&gram).map(|e| e.max()).unwrap_or(0.0);
    top.max(0.0).sqrt()
}

/// Maximum absolute normalized inner product over distinct column pairs.
pub fn coherence(a: &Matrix) -> Result<f64> {
    let n = a.cols();
    let t = a.transpose();
    let norms: Vec<f64> = (0..n).map(|j| norm2(t.row(j))).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateColumn(j));
    }
    let mut mu = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = dot(t.row(i), t.row(j)).abs() / (norms[i] * norms[j]);
            mu = mu.max(c);
        }
    }
    Ok(mu.min(1.0))
}

/// Welch lower bound `sqrt((n − m) / (m (n − 1)))` on the coherence of `n`
/// unit vectors in `ℝ^m`.
pub fn welch_bound(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n <= m {
        return Err(Error::Shape(format!("Welch bound needs n > m >= 1, got m={m}, n={n}")));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(((n - m) / (m * (n - 1.0))).sqrt())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn spec_err(a: &Matrix, b: &Matrix) -> f64 {
        spectral_norm(&a.sub(b).unwrap())
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = sym_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);

        let e = sym_eigen(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!((e.eigenvalues[0] - 9.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 4.0).abs() < 1e-14);
        // Eigenvector for 9 is ±e₂.
        assert!((e.eigenvectors.get(1, 0).abs() - 1.0).abs() < 1e-14);
        assert!(e.eigenvectors.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let g = gaussian(5, 5, 11);
        let s = Matrix::from_fn(5, 5, |i, j| g.get(i, j) + g.get(j, i));
        let e = sym_eigen(&s).unwrap();
        let rebuilt = e.reconstruct_with(|l| l);
        assert!(spec_err(&rebuilt, &s) / spectral_norm(&s) < 1e-10);
        let vtv = e.eigenvectors.transpose().matmul(&e.eigenvectors).unwrap();
        assert!(spec_err(&vtv, &Matrix::identity(5)) < 1e-10);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_rejects_bad_input() {
        assert!(matches!(
            sym_eigen(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn inverse_sqrt_cases() {
        let r = inv_sqrt_pd(&Matrix::identity(4)).unwrap();
        assert!(spec_err(&r, &Matrix::identity(4)) < 1e-14);

        let r = inv_sqrt_pd(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(spec_err(&r, &Matrix::diag(&[0.5, 1.0 / 3.0])) < 1e-14);

        let a = gaussian(8, 16, 5);
        let m = a.gram_rows();
        let r = inv_sqrt_pd(&m).unwrap();
        let rrm = r.matmul(&r).unwrap().matmul(&m).unwrap();
        assert!(spec_err(&rrm, &Matrix::identity(8)) < 1e-8);
        let rmr = r.matmul(&m).unwrap().matmul(&r).unwrap();
        assert!(spec_err(&rmr, &Matrix::identity(8)) < 1e-8);
        assert_eq!(r.asymmetry(), 0.0);
    }

    #[test]
    fn inverse_sqrt_rejects_singular() {
        let m = Matrix::diag(&[1.0, 1e-13]);
        assert!(matches!(
            inv_sqrt_pd(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let m = Matrix::diag(&[1.0, -1.0]);
        assert!(inv_sqrt_pd(&m).is_err());
    }

    #[test]
    fn pinv_cases() {
        let p = pinv_rowfull(&Matrix::identity(3)).unwrap();
        assert!(spec_err(&p, &Matrix::identity(3)) < 1e-15);

        let a = Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0]]).unwrap();
        let p = pinv_rowfull(&a).unwrap();
        let want = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.5], &[0.0, 0.0]]).unwrap();
        assert!(spec_err(&p, &want) < 1e-15);

        let a = gaussian(8, 16, 9);
        let p = pinv_rowfull(&a).unwrap();
        let ap = a.matmul(&p).unwrap();
        assert!(spec_err(&ap, &Matrix::identity(8)) < 1e-8);
        let apa = ap.matmul(&a).unwrap();
        assert!(spec_err(&apa, &a) < 1e-8);
    }

    #[test]
    fn pinv_rejects_rank_deficient() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(
            pinv_rowfull(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn spectral_norm_cases() {
        assert_eq!(spectral_norm(&Matrix::diag(&[3.0, 1.0])), 3.0);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 4)), 0.0);
        let a = gaussian(8, 16, 21);
        let oracle = sym_eigen(&a.gram_rows()).unwrap().max().sqrt();
        assert!((spectral_norm(&a) - oracle).abs() / oracle < 1e-9);
        let t = spectral_norm(&a.transpose());
        assert!((spectral_norm(&a) - t).abs() / t < 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let a = gaussian(6, 10, 3);
        let g = a.gram_rows();
        let chol = Cholesky::new(&g).unwrap();
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let x = chol.solve(&b);
        let gx = g.matvec(&x).unwrap();
        assert!(dist2(&gx, &b) < 1e-10);
    }

    #[test]
    fn coherence_and_welch() {
        assert_eq!(coherence(&Matrix::identity(4)).unwrap(), 0.0);
        assert!((welch_bound(2, 4).unwrap() - (2.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!(welch_bound(4, 4).is_err());
        assert!(welch_bound(0, 4).is_err());

        let mut a = gaussian(8, 16, 7);
        for j in 0..16 {
            let norm = norm2(&a.col(j));
            for i in 0..8 {
                a.set(i, j, a.get(i, j) / norm);
            }
        }
        // Enumerate all pairs independently of `coherence`.
        let mut brute = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    brute = brute.max(dot(&a.col(i), &a.col(j)).abs());
                }
            }
        }
        let mu = coherence(&a).unwrap();
        assert!((mu - brute).abs() < 1e-14);
        assert!(mu >= welch_bound(8, 16).unwrap());
    }

    #[test]
    fn coherence_rejects_zero_column() {
        let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(coherence(&a), Err(Error::DegenerateColumn(1))));
    }

    #[test]
    fn from_vec_validates() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }
}

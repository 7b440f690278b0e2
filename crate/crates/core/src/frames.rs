//! Sensing ensembles, tight dictionaries and the back-projection operators.
//!
//! A [`SensingOperator`] wraps `A ∈ ℝ^{m×n}` together with everything the
//! solvers need per iteration: the Cholesky factor `L` of `A Aᵀ`, the
//! whitened matrix `W = L⁻¹ A` (so `‖A x − y‖_B = ‖W x − L⁻¹ y‖₂` and
//! `A†(A x − y) = Wᵀ (W x − L⁻¹ y)`), the right pseudoinverse, the diagonal
//! `C = diag(A† A)` used by the rescaled mode, and the relevant Lipschitz
//! constants.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rustdct::{DctPlanner, TransformType2And3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrixlab::{
    axpy, dot, inv_sqrt_pd, norm2, pinv_with_factor, spectral_norm, sym_eigen, Cholesky,
    Matrix, SymEigen,
};
use crate::rng;

/// Entries of `diag(A† A)` below this are clamped before inversion.
pub const C_FLOOR: f64 = 1e-8;

/// Zero-mean entry distribution, each with variance `1/m` before column
/// normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Bernoulli,
    Uniform,
    Laplacian,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Gaussian,
        Distribution::Bernoulli,
        Distribution::Uniform,
        Distribution::Laplacian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Bernoulli => "bernoulli",
            Distribution::Uniform => "uniform",
            Distribution::Laplacian => "laplacian",
        }
    }

    fn sample<R: Rng>(self, rng: &mut R, m: usize) -> f64 {
        let m = m as f64;
        match self {
            Distribution::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            }
            Distribution::Bernoulli => {
                if rng.random::<bool>() {
                    1.0 / m.sqrt()
                } else {
                    -1.0 / m.sqrt()
                }
            }
            Distribution::Uniform => {
                let half = (3.0 / m).sqrt();
                rng.random_range(-half..half)
            }
            Distribution::Laplacian => {
                let b = 1.0 / (2.0 * m).sqrt();
                // Inverse CDF on u ∈ (−½, ½).
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Distribution::Gaussian),
            "bernoulli" => Ok(Distribution::Bernoulli),
            "uniform" => Ok(Distribution::Uniform),
            "laplacian" => Ok(Distribution::Laplacian),
            other => Err(Error::InvalidParameter(format!("unknown distribution '{other}'"))),
        }
    }
}

/// Data-fidelity mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// `½‖A x − y‖₂²`, gradient `Aᵀ(A x − y)`.
    Ls,
    /// `½‖A x − y‖_B²`, gradient `A†(A x − y)`.
    Tf,
    /// Back-projection gradient rescaled by `C⁻¹`.
    Rtf,
}

impl Fidelity {
    pub const ALL: [Fidelity; 3] = [Fidelity::Ls, Fidelity::Tf, Fidelity::Rtf];

    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Ls => "ls",
            Fidelity::Tf => "tf",
            Fidelity::Rtf => "rtf",
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" | "baseline" => Ok(Fidelity::Ls),
            "tf" => Ok(Fidelity::Tf),
            "rtf" => Ok(Fidelity::Rtf),
            other => Err(Error::InvalidParameter(format!("unknown fidelity '{other}'"))),
        }
    }
}

/// Where a sensing matrix came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub distribution: Option<Distribution>,
    pub seed: Option<u64>,
    /// Columns redrawn because they came out exactly zero.
    pub regenerated_columns: u32,
}

#[derive(Clone, Debug)]
pub struct SensingOperator {
    a: Matrix,
    pinv: Matrix,
    gram_factor: Cholesky,
    gram_eigen: SymEigen,
    whitened: Matrix,
    c_diag: Vec<f64>,
    c_inv: Vec<f64>,
    spec_norm_sq: f64,
    rtf_lipschitz: f64,
    provenance: Provenance,
}

impl SensingOperator {
    /// Builds the cached operators for an arbitrary full-row-rank matrix.
    /// Columns are used as given (not renormalized).
    pub fn from_matrix(a: Matrix, provenance: Provenance) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || m > n {
            return Err(Error::Shape(format!("sensing matrix must have 1 <= m <= n, got {m}x{n}")));
        }
        let gram = a.gram_rows();
        let gram_eigen = sym_eigen(&gram)?;
        let gram_factor = Cholesky::new(&gram)?;
        let pinv = pinv_with_factor(&a, &gram_factor)?;

        let mut whitened = Matrix::zeros(m, n);
        let mut col = vec![0.0; m];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = a.get(i, j);
            }
            gram_factor.solve_lower_in_place(&mut col);
            for (i, c) in col.iter().enumerate() {
                whitened.set(i, j, *c);
            }
        }

        let wt = whitened.transpose();
        let c_diag: Vec<f64> = (0..n)
            .map(|j| {
                let w = wt.row(j);
                dot(w, w).max(C_FLOOR)
            })
            .collect();
        let c_inv: Vec<f64> = c_diag.iter().map(|c| 1.0 / c).collect();

        // ‖C⁻¹ A† A‖₂² = λ_max(W C⁻² Wᵀ) because A† A = Wᵀ W and W Wᵀ = I.
        let mut scaled = Matrix::zeros(m, m);
        for (j, &ci) in c_inv.iter().enumerate() {
            let w = wt.row(j);
            let s = ci * ci;
            for i in 0..m {
                let wi = w[i] * s;
                if wi != 0.0 {
                    axpy(wi, &w[i..], &mut scaled.row_mut(i)[i..]);
                }
            }
        }
        for i in 0..m {
            for k in 0..i {
                let v = scaled.get(k, i);
                scaled.set(i, k, v);
            }
        }
        let rtf_lipschitz = sym_eigen(&scaled)?.max().max(0.0).sqrt();

        Ok(Self {
            spec_norm_sq: gram_eigen.max(),
            a,
            pinv,
            gram_factor,
            gram_eigen,
            whitened,
            c_diag,
            c_inv,
            rtf_lipschitz,
            provenance,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// `A† = Aᵀ (A Aᵀ)⁻¹`, `n × m`.
    pub fn pinv(&self) -> &Matrix {
        &self.pinv
    }

    /// Cholesky factor of `A Aᵀ`.
    pub fn gram_factor(&self) -> &Cholesky {
        &self.gram_factor
    }

    pub fn gram_eigen(&self) -> &SymEigen {
        &self.gram_eigen
    }

    /// `W = L⁻¹ A`; its rows are orthonormal.
    pub fn whitened(&self) -> &Matrix {
        &self.whitened
    }

    /// `diag(A† A)`, clamped below at [`C_FLOOR`].
    pub fn c_diag(&self) -> &[f64] {
        &self.c_diag
    }

    pub fn c_inv(&self) -> &[f64] {
        &self.c_inv
    }

    /// `‖A‖₂²`.
    pub fn spec_norm_sq(&self) -> f64 {
        self.spec_norm_sq
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Lipschitz constant of the fidelity gradient in each mode:
    /// `‖A‖₂²`, `1`, and `‖C⁻¹ A† A‖₂`.
    pub fn lipschitz(&self, mode: Fidelity) -> f64 {
        match mode {
            Fidelity::Ls => self.spec_norm_sq,
            Fidelity::Tf => 1.0,
            Fidelity::Rtf => self.rtf_lipschitz,
        }
    }

    /// `L⁻¹ v`.
    pub fn whiten(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("measurement", v.len(), self.m())?;
        let mut out = v.to_vec();
        self.gram_factor.solve_lower_in_place(&mut out);
        Ok(out)
    }

    /// `A† v`.
    pub fn apply_pinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.pinv.matvec(v)
    }

    /// `B = (A Aᵀ)^{-1/2}`, formed explicitly.
    pub fn b_matrix(&self) -> Result<Matrix> {
        inv_sqrt_pd(&self.a.gram_rows())
    }

    /// The effective sensing matrix `B A`.
    pub fn effective_matrix(&self) -> Result<Matrix> {
        self.b_matrix()?.matmul(&self.a)
    }
}

/// Draws an `m × n` ensemble with i.i.d. entries and unit-norm columns.
pub fn generate_sensing(
    m: usize,
    n: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<SensingOperator> {
    if m == 0 || m >= n {
        return Err(Error::Shape(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    let mut rng = rng::stream(seed);
    let mut a = Matrix::from_fn(m, n, |_, _| distribution.sample(&mut rng, m));
    let mut regenerated = 0u32;
    for j in 0..n {
        let mut norm = norm2(&a.col(j));
        while norm == 0.0 {
            // Continue the stream past its current position.
            for i in 0..m {
                a.set(i, j, distribution.sample(&mut rng, m));
            }
            regenerated += 1;
            norm = norm2(&a.col(j));
        }
        for i in 0..m {
            a.set(i, j, a.get(i, j) / norm);
        }
    }
    SensingOperator::from_matrix(
        a,
        Provenance {
            distribution: Some(distribution),
            seed: Some(seed),
            regenerated_columns: regenerated,
        },
    )
}

/// `‖A x − y‖_B = sqrt((A x − y)ᵀ (A Aᵀ)⁻¹ (A x − y))`.
pub fn bnorm_residual(op: &SensingOperator, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("signal", x.len(), op.n())?;
    check_len("measurement", y.len(), op.m())?;
    let mut r = op.a.matvec(x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    op.gram_factor.solve_lower_in_place(&mut r);
    Ok(norm2(&r))
}

/// `‖v‖_B` for a measurement-space vector.
pub fn bnorm(op: &SensingOperator, v: &[f64]) -> Result<f64> {
    Ok(norm2(&op.whiten(v)?))
}

/// Fidelity value: `½‖A x − y‖₂²` (LS) or `½‖A x − y‖_B²` (TF, RTF).
pub fn fidelity_value(op: &SensingOperator, x: &[f64], y: &[f64], mode: Fidelity) -> Result<f64> {
    match mode {
        Fidelity::Ls => {
            check_len("measurement", y.len(), op.m())?;
            let r = op.a.matvec(x)?;
            Ok(0.5 * r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        }
        Fidelity::Tf | Fidelity::Rtf => {
            let r = bnorm_residual(op, x, y)?;
            Ok(0.5 * r * r)
        }
    }
}

/// LS: `Aᵀ(A x − y)`; TF: `A†(A x − y)`; RTF: `C⁻¹ A†(A x − y)`.
pub fn grad_fidelity(op: &SensingOperator, x: &[f64], y: &[f64], mode: Fidelity) -> Result<Vec<f64>> {
    check_len("signal", x.len(), op.n())?;
    check_len("measurement", y.len(), op.m())?;
    let mut r = op.a.matvec(x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    if mode == Fidelity::Ls {
        return op.a.tr_matvec(&r);
    }
    op.gram_factor.solve_in_place(&mut r);
    let mut g = op.a.tr_matvec(&r)?;
    if mode == Fidelity::Rtf {
        for (gi, ci) in g.iter_mut().zip(&op.c_inv) {
            *gi *= ci;
        }
    }
    Ok(g)
}

/// `‖(B A)(B A)ᵀ − I‖₂`.
pub fn effective_tightness(op: &SensingOperator) -> Result<f64> {
    let ba = op.effective_matrix()?;
    let dev = ba.gram_rows().sub(&Matrix::identity(op.m()))?;
    Ok(spectral_norm(&dev))
}

/// Ratio of the largest to the smallest nonzero singular value of a wide
/// (or square) full-row-rank matrix.
pub fn restricted_condition_number(a: &Matrix) -> Result<f64> {
    let g = if a.rows() <= a.cols() {
        a.gram_rows()
    } else {
        a.gram_cols()
    };
    let e = sym_eigen(&g)?;
    if e.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            value: e.min(),
            floor: 0.0,
        });
    }
    Ok((e.max() / e.min()).sqrt())
}

#[derive(Clone)]
enum DictKind {
    Identity,
    Dct {
        row_selection: Vec<usize>,
        /// Orthonormal DCT-II row weights `s_k`.
        weights: Vec<f64>,
        plan: Arc<dyn TransformType2And3<f64>>,
    },
    Dense(Matrix),
}

/// A Parseval-tight frame `D ∈ ℝ^{n×d}` (`D Dᵀ = I_n`).
///
/// DCT dictionaries apply `Dᵀ` and `D` through an `O(d log d)` transform;
/// the dense matrix is materialized only on request.
#[derive(Clone)]
pub struct TightDictionary {
    n: usize,
    d: usize,
    seed: Option<u64>,
    kind: DictKind,
    dense: OnceLock<Matrix>,
}

impl fmt::Debug for TightDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            DictKind::Identity => "identity",
            DictKind::Dct { .. } => "dct",
            DictKind::Dense(_) => "dense",
        };
        f.debug_struct("TightDictionary")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("kind", &kind)
            .field("seed", &self.seed)
            .finish()
    }
}

impl TightDictionary {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            d: n,
            seed: None,
            kind: DictKind::Identity,
            dense: OnceLock::new(),
        }
    }

    /// Wraps an explicit matrix after checking `D Dᵀ = I` within `tol`.
    pub fn from_matrix(dmat: Matrix, tol: f64) -> Result<Self> {
        let (n, d) = dmat.shape();
        if d < n {
            return Err(Error::Shape(format!("dictionary must have d >= n, got {n}x{d}")));
        }
        let dev = dmat.gram_rows().sub(&Matrix::identity(n))?.max_abs();
        if dev > tol {
            return Err(Error::InvalidParameter(format!(
                "dictionary is not Parseval tight (max |DDᵀ − I| = {dev:.3e})"
            )));
        }
        Ok(Self {
            n,
            d,
            seed: None,
            kind: DictKind::Dense(dmat),
            dense: OnceLock::new(),
        })
    }

    /// Rebuilds a DCT dictionary from a stored row selection.
    pub fn from_dct_rows(d: usize, row_selection: Vec<usize>, seed: Option<u64>) -> Result<Self> {
        let n = row_selection.len();
        if d < n || d == 0 {
            return Err(Error::Shape(format!("dictionary must have d >= n, got n={n}, d={d}")));
        }
        let mut seen = vec![false; d];
        for &r in &row_selection {
            if r >= d || std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidParameter(format!(
                    "row selection must be distinct indices below {d}"
                )));
            }
        }
        let dn = d as f64;
        let weights = (0..d)
            .map(|k| if k == 0 { (1.0 / dn).sqrt() } else { (2.0 / dn).sqrt() })
            .collect();
        let plan = DctPlanner::new().plan_dct2(d);
        Ok(Self {
            n,
            d,
            seed,
            kind: DictKind::Dct {
                row_selection,
                weights,
                plan,
            },
            dense: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn row_selection(&self) -> Option<&[usize]> {
        match &self.kind {
            DictKind::Dct { row_selection, .. } => Some(row_selection),
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, DictKind::Identity)
    }

    /// The dense `n × d` matrix.
    pub fn matrix(&self) -> &Matrix {
        self.dense.get_or_init(|| match &self.kind {
            DictKind::Identity => Matrix::identity(self.n),
            DictKind::Dense(m) => m.clone(),
            DictKind::Dct {
                row_selection,
                weights,
                ..
            } => {
                let dn = self.d as f64;
                Matrix::from_fn(self.n, self.d, |i, j| {
                    let k = row_selection[i] as f64;
                    weights[row_selection[i]]
                        * (std::f64::consts::PI * k * (2.0 * j as f64 + 1.0) / (2.0 * dn)).cos()
                })
            }
        })
    }

    /// `Dᵀ x` (length `d`).
    pub fn analysis(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("signal", x.len(), self.n)?;
        Ok(match &self.kind {
            DictKind::Identity => x.to_vec(),
            DictKind::Dense(m) => m.tr_matvec(x)?,
            DictKind::Dct {
                row_selection,
                weights,
                plan,
            } => {
                let mut buf = vec![0.0; self.d];
                for (&r, &xi) in row_selection.iter().zip(x) {
                    buf[r] = xi * weights[r];
                }
                // DCT-III halves the DC term.
                buf[0] *= 2.0;
                plan.process_dct3(&mut buf);
                buf
            }
        })
    }

    /// `D α` (length `n`).
    pub fn synthesis(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        check_len("coefficients", alpha.len(), self.d)?;
        Ok(match &self.kind {
            DictKind::Identity => alpha.to_vec(),
            DictKind::Dense(m) => m.matvec(alpha)?,
            DictKind::Dct {
                row_selection,
                weights,
                plan,
            } => {
                let mut buf = alpha.to_vec();
                plan.process_dct2(&mut buf);
                row_selection.iter().map(|&r| buf[r] * weights[r]).collect()
            }
        })
    }
}

/// `n` rows of the `d × d` orthonormal DCT-II, chosen uniformly at random
/// without replacement.
pub fn overcomplete_dct(n: usize, d: usize, seed: u64) -> Result<TightDictionary> {
    if d < n || n == 0 {
        return Err(Error::Shape(format!("need d >= n >= 1, got n={n}, d={d}")));
    }
    let mut rng = rng::stream(seed);
    let rows = rand::seq::index::sample(&mut rng, d, n).into_vec();
    TightDictionary::from_dct_rows(d, rows, Some(seed))
}

/// The leading `n` rows of the `d × d` orthonormal DCT-II: a cosine frame
/// whose atoms sample `d` frequencies on `n` points.
pub fn leading_dct(n: usize, d: usize) -> Result<TightDictionary> {
    if d < n || n == 0 {
        return Err(Error::Shape(format!("need d >= n >= 1, got n={n}, d={d}")));
    }
    TightDictionary::from_dct_rows(d, (0..n).collect(), None)
}

/// Frame bounds `Σ|⟨x, v_i⟩|² / ‖x‖²` of the dictionary columns for one
/// probe vector.
pub fn frame_ratio(dict: &TightDictionary, x: &[f64]) -> Result<f64> {
    let coeffs = dict.analysis(x)?;
    Ok(dot(&coeffs, &coeffs) / dot(x, x))
}

//! Restricted isometry estimates, the B-norm isometry relations, and the
//! constants of the ℓ2 error bound for B-norm constrained recovery.

use rand::seq::index::sample;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{SensingOperator, TightDictionary};
use crate::matrixlab::{dot, sym_eigen, Matrix};
use crate::rng::{derive_seed, stream};
use crate::signalgen::instance;
use crate::solvers::{solve_instance, SolverSpec};

/// Largest number of supports [`Method::Exact`] will enumerate by default.
pub const DEFAULT_ENUMERATION_CAP: f64 = 2e6;
/// Dictionary-restricted samples with `‖D v‖` below this are rejected.
pub const NULL_SPACE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration { cap: f64 },
    MonteCarlo { trials: usize, seed: u64 },
}

impl Method {
    pub fn exact() -> Self {
        Method::ExactEnumeration {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    Bnorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicEstimate {
    pub s: usize,
    pub delta: f64,
    pub method: Method,
    pub norm_kind: NormKind,
    pub dictionary_adapted: bool,
    /// Supports enumerated or vectors sampled.
    pub evaluated: u64,
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every `s`-subset of `0..n`, in parallel over the smallest
/// index; returns the maximum of the results (NaN-free by contract).
fn max_over_supports<F>(n: usize, s: usize, f: F) -> (f64, u64)
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if s == 0 || s > n {
        return (0.0, 0);
    }
    (0..=n - s)
        .into_par_iter()
        .map(|first| {
            let mut idx: Vec<usize> = (first..first + s).collect();
            let mut best = f64::NEG_INFINITY;
            let mut count = 0u64;
            loop {
                if let Some(v) = f(&idx) {
                    best = best.max(v);
                }
                count += 1;
                // Advance the tail (positions 1..s) lexicographically.
                let mut k = s;
                loop {
                    if k == 1 {
                        return (best, count);
                    }
                    k -= 1;
                    if idx[k] < n - s + k {
                        idx[k] += 1;
                        for j in k + 1..s {
                            idx[j] = idx[j - 1] + 1;
                        }
                        break;
                    }
                }
            }
        })
        .reduce(
            || (f64::NEG_INFINITY, 0),
            |a, b| (a.0.max(b.0), a.1 + b.1),
        )
}

/// Two-sided deviation `max(λ_max − 1, 1 − λ_min)`.
fn two_sided(lmin: f64, lmax: f64) -> f64 {
    (lmax - 1.0).max(1.0 - lmin)
}

/// B-norm deviation: `1 − λ_min`, with the upper side clipped at zero.
fn one_sided(lmin: f64, lmax: f64) -> f64 {
    (1.0 - lmin).max((lmax - 1.0).max(0.0))
}

fn deviation(kind: NormKind, lmin: f64, lmax: f64) -> f64 {
    match kind {
        NormKind::L2 => two_sided(lmin, lmax),
        NormKind::Bnorm => one_sided(lmin, lmax),
    }
}

fn check_cap(n: usize, s: usize, cap: f64) -> Result<()> {
    let count = binomial(n, s);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(())
}

fn check_order(s: usize, limit: usize) -> Result<()> {
    if s == 0 || s > limit {
        return Err(Error::InvalidParameter(format!(
            "sparsity order must lie in 1..={limit}, got {s}"
        )));
    }
    Ok(())
}

/// RIC of `gram = MᵀM` over `s`-column supports.
fn ric_of_gram(gram: &Matrix, s: usize, method: &Method, kind: NormKind, factor: &Matrix) -> Result<(f64, u64)> {
    let n = gram.rows();
    check_order(s, n)?;
    match *method {
        Method::ExactEnumeration { cap } => {
            check_cap(n, s, cap)?;
            let (best, count) = max_over_supports(n, s, |idx| {
                let e = sym_eigen(&gram.principal(idx)).ok()?;
                Some(deviation(kind, e.min(), e.max()))
            });
            Ok((best, count))
        }
        Method::MonteCarlo { trials, seed } => {
            let best = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(derive_seed(seed, 0x7269_63, t));
                    let idx = sample(&mut rng, n, s).into_vec();
                    let v: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = dot(&v, &v);
                    let mut image = vec![0.0; factor.rows()];
                    for (&j, &vj) in idx.iter().zip(&v) {
                        for (i, out) in image.iter_mut().enumerate() {
                            *out += factor.get(i, j) * vj;
                        }
                    }
                    let ratio = dot(&image, &image) / norm;
                    deviation(kind, ratio, ratio)
                })
                .reduce(|| f64::NEG_INFINITY, f64::max);
            Ok((best, trials as u64))
        }
    }
}

/// `δ_s` of `A` (two-sided, ℓ2).
pub fn ric(a: &Matrix, s: usize, method: &Method) -> Result<RicEstimate> {
    let (delta, evaluated) = ric_of_gram(&a.gram_cols(), s, method, NormKind::L2, a)?;
    Ok(RicEstimate {
        s,
        delta,
        method: *method,
        norm_kind: NormKind::L2,
        dictionary_adapted: false,
        evaluated,
    })
}

/// `δ_s` by exhaustive enumeration under the default cap.
pub fn ric_exact(a: &Matrix, s: usize) -> Result<RicEstimate> {
    ric(a, s, &Method::exact())
}

/// `δ̂_s`: deviation of `‖A x‖_B²` from `‖x‖²` over `s`-sparse `x`.
pub fn ric_bnorm(op: &SensingOperator, s: usize, method: &Method) -> Result<RicEstimate> {
    // ‖A x‖_B = ‖W x‖ with W = L⁻¹A, and WᵀW = A†A.
    let w = op.whitened();
    let (delta, evaluated) = ric_of_gram(&w.gram_cols(), s, method, NormKind::Bnorm, w)?;
    Ok(RicEstimate {
        s,
        delta,
        method: *method,
        norm_kind: NormKind::Bnorm,
        dictionary_adapted: false,
        evaluated,
    })
}

/// Extreme values of `vᵀ M1 v / vᵀ M2 v` over `v` with `M2 v ≠ 0`.
fn generalized_extremes(m1: &Matrix, m2: &Matrix) -> Option<(f64, f64)> {
    let e = sym_eigen(m2).ok()?;
    let floor = NULL_SPACE_TOL * NULL_SPACE_TOL * e.max().max(1.0);
    let keep: Vec<usize> = (0..e.eigenvalues.len())
        .filter(|&i| e.eigenvalues[i] > floor)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let k = m2.rows();
    let basis = Matrix::from_fn(k, keep.len(), |i, j| {
        e.eigenvectors.get(i, keep[j]) / e.eigenvalues[keep[j]].sqrt()
    });
    let reduced = basis.transpose().matmul(&m1.matmul(&basis).ok()?).ok()?;
    // Symmetrize away rounding before the symmetric solver.
    let r = Matrix::from_fn(reduced.rows(), reduced.cols(), |i, j| {
        0.5 * (reduced.get(i, j) + reduced.get(j, i))
    });
    let g = sym_eigen(&r).ok()?;
    Some((g.min(), g.max()))
}

/// D-RIP (`NormKind::L2`) or B-norm D-RIP (`NormKind::Bnorm`) constant:
/// the largest relative deviation of `‖A D v‖²` (resp. `‖A D v‖_B²`) from
/// `‖D v‖²` over `s`-sparse `v`.
pub fn dric_estimate(
    op: &SensingOperator,
    dict: &TightDictionary,
    s: usize,
    method: &Method,
    kind: NormKind,
) -> Result<RicEstimate> {
    if dict.n() != op.n() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows but the sensing matrix has {} columns",
            dict.n(),
            op.n()
        )));
    }
    let d = dict.d();
    check_order(s, d)?;
    let base = match kind {
        NormKind::L2 => op.a(),
        NormKind::Bnorm => op.whitened(),
    };
    let dm = dict.matrix();
    let ad = base.matmul(dm)?;
    let (delta, evaluated) = match *method {
        Method::ExactEnumeration { cap } => {
            check_cap(d, s, cap)?;
            let g1 = ad.gram_cols();
            let g2 = dm.gram_cols();
            max_over_supports(d, s, |idx| {
                let (lo, hi) = generalized_extremes(&g1.principal(idx), &g2.principal(idx))?;
                Some(deviation(kind, lo, hi))
            })
        }
        Method::MonteCarlo { trials, seed } => {
            let (best, accepted) = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(derive_seed(seed, 0x6472_6963, t));
                    let idx = sample(&mut rng, d, s).into_vec();
                    let v: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let mut dv = vec![0.0; dm.rows()];
                    let mut adv = vec![0.0; ad.rows()];
                    for (&j, &vj) in idx.iter().zip(&v) {
                        for (i, o) in dv.iter_mut().enumerate() {
                            *o += dm.get(i, j) * vj;
                        }
                        for (i, o) in adv.iter_mut().enumerate() {
                            *o += ad.get(i, j) * vj;
                        }
                    }
                    let den = dot(&dv, &dv);
                    if den.sqrt() < NULL_SPACE_TOL {
                        return (f64::NEG_INFINITY, 0u64);
                    }
                    let ratio = dot(&adv, &adv) / den;
                    (deviation(kind, ratio, ratio), 1)
                })
                .reduce(|| (f64::NEG_INFINITY, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
            (best, accepted)
        }
    };
    Ok(RicEstimate {
        s,
        delta,
        method: *method,
        norm_kind: kind,
        dictionary_adapted: true,
        evaluated,
    })
}

/// `1 − (1 − δ)/‖A‖₂²`.
pub fn delta_hat_from_delta(delta: f64, spec_norm_sq: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(spec_norm_sq >= 1.0 && spec_norm_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spec_norm_sq must be at least 1, got {spec_norm_sq}"
        )));
    }
    Ok(1.0 - (1.0 - delta) / spec_norm_sq)
}

/// `(‖A‖² − 1)/(2‖A‖² − 1)`: above this `δ_s`, the B-norm gap `δ̂_s` is
/// smaller than the standard gap `2δ_s`.
pub fn gap_crossover(spec_norm_sq: f64) -> Result<f64> {
    if !(spec_norm_sq > 0.5) {
        return Err(Error::InvalidParameter(format!(
            "spec_norm_sq must exceed 1/2, got {spec_norm_sq}"
        )));
    }
    Ok((spec_norm_sq - 1.0) / (2.0 * spec_norm_sq - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub s: usize,
    #[serde(rename = "M")]
    pub m_set: usize,
    pub c1: f64,
    pub c2: f64,
    pub rho: f64,
    pub delta_hat: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    /// `2/K1`; absent for an invalid bundle.
    pub eps_coeff: Option<f64>,
    /// `K2/K1`; absent for an invalid bundle.
    pub eta_coeff: Option<f64>,
    pub valid: bool,
}

fn check_bound_inputs(s: usize, m_set: usize, delta_hat: f64) -> Result<()> {
    if s == 0 || m_set == 0 {
        return Err(Error::InvalidParameter("s and M must be positive".into()));
    }
    if !(delta_hat >= 0.0 && delta_hat < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_hat must lie in [0, 1), got {delta_hat}"
        )));
    }
    Ok(())
}

fn k_pair(rho: f64, delta_hat: f64, c1: f64, c2: f64) -> (f64, f64) {
    let sr = rho.sqrt();
    // A negative radicand means the first term vanishes; clamping keeps the
    // bundle NaN-free and K ≤ 0 flags it invalid.
    let r1 = 2.0 * c1 * (1.0 - c1 / 2.0 - rho - rho * c2) * (1.0 - delta_hat);
    let r2 = 2.0 * c1 * (rho / c2 + rho) * (1.0 - delta_hat);
    (r1.max(0.0).sqrt() - sr, r2.max(0.0).sqrt() - sr)
}

/// `K1 = sqrt(2c₁(1 − c₁/2 − ρ − ρc₂)(1 − δ̂)) − √ρ`,
/// `K2 = sqrt(2c₁(ρ/c₂ + ρ)(1 − δ̂)) − √ρ` with `ρ = s/M`.
pub fn bound_constants(s: usize, m_set: usize, delta_hat: f64, c1: f64, c2: f64) -> Result<BoundConstants> {
    check_bound_inputs(s, m_set, delta_hat)?;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 and c2 must be positive, got {c1}, {c2}")));
    }
    let rho = s as f64 / m_set as f64;
    let (k1, k2) = k_pair(rho, delta_hat, c1, c2);
    let valid = k1 > 0.0 && k2 > 0.0;
    Ok(BoundConstants {
        s,
        m_set,
        c1,
        c2,
        rho,
        delta_hat,
        k1,
        k2,
        eps_coeff: valid.then(|| 2.0 / k1),
        eta_coeff: valid.then(|| k2 / k1),
        valid,
    })
}

pub const CONSTANT_GRID_STEP: f64 = 1e-3;
pub const C2_MAX: f64 = 4.0;

/// Grid search over `c₂ ∈ (0, 4]` and `c₁ ∈ (0, 2(1 − ρ − ρc₂))` at step
/// 1e-3 minimizing `2/K1` subject to `K1, K2 > 0`. Ties go to the smaller
/// `c₁`, then the smaller `c₂`. An empty feasible set yields an invalid
/// bundle.
pub fn optimize_constants(s: usize, m_set: usize, delta_hat: f64) -> Result<BoundConstants> {
    check_bound_inputs(s, m_set, delta_hat)?;
    let rho = s as f64 / m_set as f64;
    let n2 = (C2_MAX / CONSTANT_GRID_STEP).round() as usize;
    // Best (eps_coeff, c1 index, c2 index).
    let best = (1..=n2)
        .into_par_iter()
        .filter_map(|j| {
            let c2 = j as f64 * CONSTANT_GRID_STEP;
            let upper = 2.0 * (1.0 - rho - rho * c2);
            let mut local: Option<(f64, usize, usize)> = None;
            let mut i = 1usize;
            loop {
                let c1 = i as f64 * CONSTANT_GRID_STEP;
                if c1 >= upper {
                    break;
                }
                let (k1, k2) = k_pair(rho, delta_hat, c1, c2);
                if k1 > 0.0 && k2 > 0.0 {
                    let e = 2.0 / k1;
                    if local.is_none_or(|(b, _, _)| e < b) {
                        local = Some((e, i, j));
                    }
                }
                i += 1;
            }
            local
        })
        .reduce_with(|a, b| {
            // Strictly smaller objective wins; otherwise smaller c1, then c2.
            let key = |x: &(f64, usize, usize)| (x.1, x.2);
            if a.0 < b.0 || (a.0 == b.0 && key(&a) <= key(&b)) {
                a
            } else {
                b
            }
        });
    match best {
        Some((_, i, j)) => bound_constants(
            s,
            m_set,
            delta_hat,
            i as f64 * CONSTANT_GRID_STEP,
            j as f64 * CONSTANT_GRID_STEP,
        ),
        None => Ok(BoundConstants {
            s,
            m_set,
            c1: 0.0,
            c2: 0.0,
            rho,
            delta_hat,
            k1: 0.0,
            k2: 0.0,
            eps_coeff: None,
            eta_coeff: None,
            valid: false,
        }),
    }
}

/// High-probability proxy `(1 + √(m/n))²·(n/m)` for `‖A‖₂²` of a
/// column-normalized Gaussian matrix.
pub fn spec_norm_sq_proxy(m_over_n: f64) -> Result<f64> {
    if !(m_over_n > 0.0 && m_over_n <= 1.0) {
        return Err(Error::InvalidParameter(format!("m/n must lie in (0, 1], got {m_over_n}")));
    }
    Ok((1.0 + m_over_n.sqrt()).powi(2) / m_over_n)
}

/// Which restricted isometry constant the curve's x-axis carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    /// Standard RIC `δ`, mapped to `δ̂` through the spectral-norm proxy.
    Delta,
    /// The B-norm RIC `δ̂` used directly.
    DeltaHat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub delta: f64,
    pub delta_hat: f64,
    /// Noise constant `C₀ = 2/K1`.
    pub c0_tf: Option<f64>,
    /// Tail constant `C₁ = 2·K2/K1`.
    pub c1_tf: Option<f64>,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsCurve {
    pub compression_ratio: f64,
    /// `m/n = 1 − compression_ratio`.
    pub m_over_n: f64,
    pub spec_norm_sq: f64,
    pub m_over_s: usize,
    pub axis: CurveAxis,
    /// Label of the x-axis, e.g. `delta_7s`.
    pub axis_label: String,
    /// `C₁` multiplies `‖tail‖₁/√s`; it equals `2·eta_coeff` because the bound
    /// is stated in `η = 2‖tail‖₁/√s`.
    pub c1_conversion: String,
    pub rows: Vec<CurveRow>,
}

/// Bound constants along a grid of isometry constants for one compression
/// ratio. Rows are sorted by `δ`; invalid points are kept and flagged.
pub fn constants_curves(
    compression_ratio: f64,
    delta_grid: &[f64],
    m_over_s: usize,
    axis: CurveAxis,
) -> Result<ConstantsCurve> {
    if !(compression_ratio >= 0.0 && compression_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "compression_ratio must lie in [0, 1), got {compression_ratio}"
        )));
    }
    if m_over_s == 0 {
        return Err(Error::InvalidParameter("M/s must be positive".into()));
    }
    if let Some(bad) = delta_grid.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::InvalidParameter(format!("grid value {bad} outside (0, 1)")));
    }
    let m_over_n = 1.0 - compression_ratio;
    let spec_norm_sq = spec_norm_sq_proxy(m_over_n)?;
    let mut grid = delta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let rows = grid
        .par_iter()
        .map(|&delta| {
            let delta_hat = match axis {
                CurveAxis::Delta => delta_hat_from_delta(delta, spec_norm_sq)?,
                CurveAxis::DeltaHat => delta,
            };
            let b = optimize_constants(1, m_over_s, delta_hat)?;
            Ok(CurveRow {
                delta,
                delta_hat,
                c0_tf: b.eps_coeff,
                c1_tf: b.eta_coeff.map(|e| 2.0 * e),
                valid: b.valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsCurve {
        compression_ratio,
        m_over_n,
        spec_norm_sq,
        m_over_s,
        axis,
        axis_label: format!("delta_{}s", 1 + m_over_s),
        c1_conversion: "c1_tf = 2 * eta_coeff".into(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub spec_norm_sq: f64,
    pub spec_norm_exceeds_one: bool,
    pub method: Method,
    /// `"certified"` for exact enumeration; Monte Carlo estimates are lower
    /// bounds and only report `"consistent"` or `"inconsistent"`.
    pub status: String,
    pub checks: Vec<LemmaCheck>,
}

/// Checks `‖A‖₂² > 1` and `δ̂_{ps} ≤ p·δ̂_{2s}` for `p ∈ {2, 3}` at every
/// `s` whose orders are enumerable, plus the doubling relation
/// `δ̂₄ ≤ 2·δ̂₂` when `n ≥ 4`.
pub fn lemma_checks(op: &SensingOperator, method: &Method) -> Result<LemmaReport> {
    if op.m() >= op.n() {
        return Err(Error::Shape(format!(
            "lemma checks need m < n, got {}x{}",
            op.m(),
            op.n()
        )));
    }
    let n = op.n();
    let mut cache: Vec<Option<f64>> = vec![None; n + 1];
    let mut dh = |k: usize| -> Result<f64> {
        if let Some(v) = cache[k] {
            return Ok(v);
        }
        let v = ric_bnorm(op, k, method)?.delta;
        cache[k] = Some(v);
        Ok(v)
    };
    let enumerable = |k: usize| match method {
        Method::ExactEnumeration { cap } => binomial(n, k) <= *cap,
        Method::MonteCarlo { .. } => true,
    };
    let mut checks = Vec::new();
    for s in (1..).take_while(|s| 2 * s <= n && enumerable(2 * s)) {
        for p in [2usize, 3] {
            if p * s > n || !enumerable(p * s) {
                continue;
            }
            let lhs = dh(p * s)?;
            let rhs = p as f64 * dh(2 * s)?;
            checks.push(LemmaCheck {
                label: format!("delta_hat_{} <= {p} * delta_hat_{}", p * s, 2 * s),
                lhs,
                rhs,
                holds: lhs <= rhs + 1e-12,
            });
        }
    }
    if n >= 4 && enumerable(4) {
        let lhs = dh(4)?;
        let rhs = 2.0 * dh(2)?;
        checks.push(LemmaCheck {
            label: "delta_hat_4 <= 2 * delta_hat_2".into(),
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-12,
        });
    }
    let all = checks.iter().all(|c| c.holds);
    let status = match method {
        Method::ExactEnumeration { .. } => "certified",
        Method::MonteCarlo { .. } if all => "consistent",
        Method::MonteCarlo { .. } => "inconsistent",
    };
    Ok(LemmaReport {
        spec_norm_sq: op.spec_norm_sq(),
        spec_norm_exceeds_one: op.spec_norm_sq() > 1.0,
        method: *method,
        status: status.into(),
        checks,
    })
}

/// Where the reconstruction errors `Δx` come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorSource {
    /// Canonical-sparse instances (`D = I`) recovered with the given solver.
    Solver,
    /// Standard normal `Δx`, bypassing the solver.
    Isotropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitenessReport {
    pub m: usize,
    pub trials: usize,
    pub source: ErrorSource,
    /// Off-diagonal share of the Frobenius energy of the second-moment
    /// matrix of `B Δw`.
    pub offdiag_ratio_b: f64,
    /// Same for the raw `Δw = A Δx`.
    pub offdiag_ratio_raw: f64,
    pub warning: Option<String>,
}

/// `Σ_{i≠j} R_ij² / Σ R_ij²`.
pub fn offdiag_ratio(r: &Matrix) -> f64 {
    let mut off = 0.0;
    let mut total = 0.0;
    for i in 0..r.rows() {
        for j in 0..r.cols() {
            let v = r.get(i, j) * r.get(i, j);
            total += v;
            if i != j {
                off += v;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        off / total
    }
}

/// Sample second-moment matrix `(1/T) Σ v vᵀ`.
pub fn second_moment(samples: &[Vec<f64>], dim: usize) -> Matrix {
    let mut r = Matrix::zeros(dim, dim);
    for v in samples {
        for i in 0..dim {
            let vi = v[i];
            let row = r.row_mut(i);
            for j in 0..dim {
                row[j] += vi * v[j];
            }
        }
    }
    r.scaled(1.0 / samples.len().max(1) as f64)
}

/// Estimates how close `B Δw` is to white noise, where `Δw = A Δx` and `Δx`
/// is the reconstruction error of canonical-sparse recovery (or isotropic
/// noise for [`ErrorSource::Isotropic`]).
#[allow(clippy::too_many_arguments)]
pub fn residual_whiteness(
    op: &SensingOperator,
    spec: &SolverSpec,
    sparsity_pct: f64,
    snr_db: f64,
    n_trials: usize,
    seed: u64,
    source: ErrorSource,
) -> Result<WhitenessReport> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    let (m, n) = (op.m(), op.n());
    let ident = TightDictionary::identity(n);
    let errors: Vec<Vec<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let ts = derive_seed(seed, 0x7768_6974, t);
            match source {
                ErrorSource::Isotropic => {
                    let mut rng = stream(ts);
                    Ok((0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                }
                ErrorSource::Solver => {
                    let inst = instance(op, &ident, sparsity_pct, snr_db, ts)?;
                    let res = solve_instance(spec, op, &ident, &inst)?;
                    Ok(res.x_hat.iter().zip(&inst.x_star).map(|(a, b)| a - b).collect())
                }
            }
        })
        .collect::<Result<_>>()?;
    let raw: Vec<Vec<f64>> = errors
        .iter()
        .map(|dx| op.a().matvec(dx))
        .collect::<Result<_>>()?;
    let b = op.b_matrix()?;
    let white: Vec<Vec<f64>> = raw.iter().map(|dw| b.matvec(dw)).collect::<Result<_>>()?;
    let warning = (n_trials < 50 * m).then(|| {
        format!(
            "{n_trials} trials is below the recommended 50*m = {} for covariance estimation",
            50 * m
        )
    });
    Ok(WhitenessReport {
        m,
        trials: n_trials,
        source,
        offdiag_ratio_b: offdiag_ratio(&second_moment(&white, m)),
        offdiag_ratio_raw: offdiag_ratio(&second_moment(&raw, m)),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(12, 2), 66.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert!((binomial(1024, 3) - 178_433_024.0).abs() < 1.0);
    }

    #[test]
    fn support_enumeration_counts() {
        for (n, s) in [(6, 1), (6, 2), (7, 3), (8, 8), (5, 4)] {
            let (_, count) = max_over_supports(n, s, |_| Some(0.0));
            assert_eq!(count as f64, binomial(n, s), "n={n} s={s}");
        }
        let seen = std::sync::Mutex::new(Vec::new());
        max_over_supports(5, 3, |idx| {
            seen.lock().unwrap().push(idx.to_vec());
            Some(0.0)
        });
        let mut seen = seen.into_inner().unwrap();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
        assert!(seen.iter().all(|v| v.windows(2).all(|w| w[0] < w[1])));
    }

    #[test]
    fn relation_formulas() {
        assert!((delta_hat_from_delta(0.2, 2.0).unwrap() - 0.6).abs() < 1e-15);
        assert!((delta_hat_from_delta(0.37, 1.0).unwrap() - 0.37).abs() < 1e-15);
        assert!(delta_hat_from_delta(0.0, 2.0).is_err());
        assert!(delta_hat_from_delta(0.5, 0.9).is_err());
        assert_eq!(gap_crossover(1.0).unwrap(), 0.0);
        assert!((gap_crossover(2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(gap_crossover(0.5).is_err());
    }

    #[test]
    fn invalid_bundles_never_produce_nan() {
        let b = bound_constants(1, 6, 0.999_999, 0.75, 0.234).unwrap();
        assert!(!b.valid);
        assert!(b.k1 <= 0.0);
        assert!(b.eps_coeff.is_none());
        let b = bound_constants(1, 6, 0.5, 3.0, 0.234).unwrap();
        assert!(!b.valid);
        assert!(!b.k1.is_nan() && !b.k2.is_nan());
        let empty = optimize_constants(1, 3, 0.56).unwrap();
        assert!(!empty.valid);
        assert!(empty.eps_coeff.is_none());
    }

    #[test]
    fn offdiag_ratio_reference() {
        assert_eq!(offdiag_ratio(&Matrix::identity(3)), 0.0);
        let r = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!((offdiag_ratio(&r) - 0.5).abs() < 1e-15);
    }
}

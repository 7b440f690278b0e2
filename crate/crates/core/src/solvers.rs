//! ISTA, Loris, NESTA and SFISTA with least-squares, back-projection (TF) and
//! rescaled back-projection (RTF) data fidelity.
//!
//! Every solver starts from `x⁰ = Aᵀ y` (unless [`solve_from`] is used) and
//! stops once `‖x_k − x_{k−1}‖₂ < tol` or after `max_iters` iterations.
//!
//! The TF and RTF modes never form `A†` inside the loop. They run on the
//! whitened system `W = L⁻¹ A`, `ỹ = L⁻¹ y` where `L Lᵀ = A Aᵀ`; since
//! `W Wᵀ = I`, the B-norm residual is `‖W x − ỹ‖₂` and the back-projected
//! gradient is `Wᵀ(W x − ỹ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{check_len, Error, Result};
use crate::frames::{Fidelity, SensingOperator, TightDictionary};
use crate::matrixlab::{dist2, dot, norm1, Matrix};
use crate::signalgen::{rsnr, ProblemInstance};

pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Safety factor applied to `1/L` for default step sizes.
pub const STEP_FACTOR: f64 = 0.99;
/// A run fails once its objective exceeds this multiple of the initial one.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Default smoothing is this fraction of `max |Dᵀ x⁰|`.
pub const MU_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ista,
    Loris,
    Nesta,
    Sfista,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Ista,
        Algorithm::Loris,
        Algorithm::Nesta,
        Algorithm::Sfista,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ista => "ista",
            Algorithm::Loris => "loris",
            Algorithm::Nesta => "nesta",
            Algorithm::Sfista => "sfista",
        }
    }

    /// Whether the method uses the smoothing parameter `μ`.
    pub fn smoothed(self) -> bool {
        matches!(self, Algorithm::Nesta | Algorithm::Sfista)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ista" => Ok(Algorithm::Ista),
            "loris" => Ok(Algorithm::Loris),
            "nesta" => Ok(Algorithm::Nesta),
            "sfista" => Ok(Algorithm::Sfista),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Display label used in reports, e.g. `TF-NESTA` or plain `ISTA`.
pub fn method_label(algorithm: Algorithm, fidelity: Fidelity) -> String {
    let base = algorithm.name().to_ascii_uppercase();
    let base = if algorithm == Algorithm::Loris {
        "Loris".to_string()
    } else {
        base
    };
    match fidelity {
        Fidelity::Ls => base,
        Fidelity::Tf => format!("TF-{base}"),
        Fidelity::Rtf => format!("RTF-{base}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    pub fidelity: Fidelity,
    pub lambda: f64,
    /// Step size; `None` selects the mode default.
    pub eta: Option<f64>,
    /// Smoothing for NESTA and SFISTA; `None` selects `0.01·max|Dᵀ x⁰|`.
    pub mu: Option<f64>,
    /// Constraint radius for NESTA; `None` means the oracle noise level when
    /// solving a [`ProblemInstance`].
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl SolverSpec {
    pub fn new(algorithm: Algorithm, fidelity: Fidelity, lambda: f64) -> Self {
        Self {
            algorithm,
            fidelity,
            lambda,
            eta: None,
            mu: None,
            epsilon: None,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidParameter(format!("{what} must be positive, got {v}"));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", self.lambda));
        }
        if !(self.tol > 0.0) {
            return Err(bad("tol", self.tol));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(bad("eta", eta));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(bad("mu", mu));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {eps}")));
            }
        }
        Ok(())
    }

    /// The step size actually used. For NESTA this is the gradient weight
    /// `1/L` of the u-step.
    pub fn resolved_eta(&self, op: &SensingOperator, mu: f64) -> f64 {
        if let Some(eta) = self.eta {
            return eta;
        }
        let l = op.lipschitz(self.fidelity);
        match self.algorithm {
            Algorithm::Ista | Algorithm::Loris => STEP_FACTOR / l,
            Algorithm::Sfista => STEP_FACTOR / (l + 1.0 / mu),
            Algorithm::Nesta => 1.0 / nesta_lipschitz(op, self.fidelity),
        }
    }
}

fn nesta_lipschitz(op: &SensingOperator, fidelity: Fidelity) -> f64 {
    match fidelity {
        Fidelity::Ls | Fidelity::Tf => 1.0,
        Fidelity::Rtf => op.lipschitz(Fidelity::Rtf),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub algorithm: Algorithm,
    pub fidelity: Fidelity,
    pub lambda: f64,
    pub eta: f64,
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at `x⁰` followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub rsnr_db: Option<f64>,
}

impl RecoveryResult {
    /// Report JSON. `+∞` RSNR is written as the string `"inf"`.
    pub fn to_json(&self, include_trace: bool) -> Value {
        let mut v = json!({
            "algorithm": self.algorithm,
            "fidelity": self.fidelity,
            "lambda": self.lambda,
            "eta": self.eta,
            "iterations": self.iterations,
            "converged": self.converged,
            "rsnr_db": self.rsnr_db.map(float_json),
        });
        if let Some(mu) = self.mu {
            v["mu"] = json!(mu);
        }
        if let Some(eps) = self.epsilon {
            v["epsilon"] = float_json(eps);
        }
        if include_trace {
            v["objective_trace"] = json!(self.objective_trace);
        }
        v
    }
}

/// JSON number, or `"inf"` / `"-inf"` / `"nan"` for non-finite values.
pub fn float_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Elementwise `sgn(v)·max(|v| − t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {t}")));
    }
    let mut out = v.to_vec();
    shrink(&mut out, t);
    Ok(out)
}

fn shrink(v: &mut [f64], t: f64) {
    for x in v {
        let a = x.abs() - t;
        *x = if a > 0.0 { a.copysign(*x) } else { 0.0 };
    }
}

/// `Σ h(vᵢ)` with `h(v) = v²/(2μ)` for `|v| ≤ μλ` and `λ|v| − μλ²/2` beyond:
/// the smoothed `λ‖·‖₁` whose gradient is `(v − T_{μλ}(v))/μ`.
pub fn huber(v: &[f64], lambda: f64, mu: f64) -> f64 {
    let knee = mu * lambda;
    v.iter()
        .map(|&x| {
            let a = x.abs();
            if a <= knee {
                x * x / (2.0 * mu)
            } else {
                lambda * a - 0.5 * mu * lambda * lambda
            }
        })
        .sum()
}

/// Fidelity evaluator for one `(operator, y, mode)` triple.
struct Fit<'a> {
    mode: Fidelity,
    mat: &'a Matrix,
    target: Vec<f64>,
    c_inv: &'a [f64],
    resid: Vec<f64>,
}

impl<'a> Fit<'a> {
    fn new(op: &'a SensingOperator, y: &[f64], mode: Fidelity) -> Result<Self> {
        check_len("measurement", y.len(), op.m())?;
        let (mat, target) = match mode {
            Fidelity::Ls => (op.a(), y.to_vec()),
            Fidelity::Tf | Fidelity::Rtf => (op.whitened(), op.whiten(y)?),
        };
        Ok(Self {
            mode,
            mat,
            target,
            c_inv: op.c_inv(),
            resid: vec![0.0; op.m()],
        })
    }

    fn residual(&mut self, x: &[f64]) -> f64 {
        self.mat
            .matvec_into(x, &mut self.resid)
            .expect("signal length checked at entry");
        for (r, t) in self.resid.iter_mut().zip(&self.target) {
            *r -= t;
        }
        0.5 * dot(&self.resid, &self.resid)
    }

    /// Fidelity value at `x`.
    fn value(&mut self, x: &[f64]) -> f64 {
        self.residual(x)
    }

    /// Writes the mode gradient at `x` into `grad`; returns the value at `x`.
    fn grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.residual(x);
        self.mat
            .tr_matvec_into(&self.resid, grad)
            .expect("signal length checked at entry");
        if self.mode == Fidelity::Rtf {
            for (g, c) in grad.iter_mut().zip(self.c_inv) {
                *g *= c;
            }
        }
        f
    }
}

/// Projection onto the fidelity ball `{x : ‖A x − y‖ ≤ ε}` in the norm of the
/// mode (ℓ2 for LS, B-norm for TF and RTF).
struct Ball<'a> {
    op: &'a SensingOperator,
    fit: Fit<'a>,
    eps: f64,
}

impl<'a> Ball<'a> {
    fn new(op: &'a SensingOperator, y: &[f64], mode: Fidelity, eps: f64) -> Result<Self> {
        Ok(Self {
            op,
            fit: Fit::new(op, y, mode)?,
            eps,
        })
    }

    fn project(&mut self, q: &mut [f64]) {
        if self.eps == f64::INFINITY {
            return;
        }
        let r = (2.0 * self.fit.residual(q)).sqrt();
        if r <= self.eps {
            return;
        }
        match self.fit.mode {
            Fidelity::Tf => {
                // Rows of W are orthonormal, so the Euclidean projection moves
                // along Wᵀ r̃ = A†(A q − y) by the fraction that reaches ε.
                let theta = 1.0 - self.eps / r;
                let step = self.fit.mat.tr_matvec(&self.fit.resid).expect("checked");
                for (qi, si) in q.iter_mut().zip(&step) {
                    *qi -= theta * si;
                }
            }
            Fidelity::Ls => self.project_l2(q, r),
            Fidelity::Rtf => self.project_rescaled(q),
        }
    }

    /// `x = q − t Aᵀ (I + t G)⁻¹ (A q − y)` with `t` chosen so that
    /// `‖(I + t G)⁻¹ (A q − y)‖ = ε`, using the eigendecomposition of `G`.
    fn project_l2(&mut self, q: &mut [f64], r: f64) {
        let eig = self.op.gram_eigen();
        let v = &eig.eigenvectors;
        let g = &eig.eigenvalues;
        let rhat = v.tr_matvec(&self.fit.resid).expect("checked");
        let coeffs: Vec<f64> = if self.eps == 0.0 {
            // The limit t → ∞: subtract A†(A q − y).
            rhat.iter().zip(g).map(|(ri, gi)| ri / gi).collect()
        } else {
            let eps2 = self.eps * self.eps;
            let phi = |t: f64| -> f64 {
                rhat.iter()
                    .zip(g)
                    .map(|(ri, gi)| {
                        let s = ri / (1.0 + t * gi);
                        s * s
                    })
                    .sum()
            };
            let mut lo = 0.0;
            let mut hi = (r / self.eps) / g.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300);
            while phi(hi) > eps2 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if phi(mid) > eps2 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = hi;
            rhat.iter().zip(g).map(|(ri, gi)| t * ri / (1.0 + t * gi)).collect()
        };
        let w = v.matvec(&coeffs).expect("checked");
        let step = self.op.a().tr_matvec(&w).expect("checked");
        for (qi, si) in q.iter_mut().zip(&step) {
            *qi -= si;
        }
    }

    /// Moves along the rescaled back-projection `C⁻¹ A†(A q − y)` by the
    /// shortest step that reaches the ball, or the residual-minimizing step
    /// if the ball cannot be reached along that line.
    fn project_rescaled(&mut self, q: &mut [f64]) {
        let w = self.fit.mat;
        let mut d = w.tr_matvec(&self.fit.resid).expect("checked");
        for (di, ci) in d.iter_mut().zip(self.fit.c_inv) {
            *di *= ci;
        }
        let md = w.matvec(&d).expect("checked");
        let a = dot(&md, &md);
        if a == 0.0 {
            return;
        }
        let b = dot(&md, &self.fit.resid);
        let c = dot(&self.fit.resid, &self.fit.resid) - self.eps * self.eps;
        let disc = b * b - a * c;
        let theta = if disc >= 0.0 {
            (b - disc.sqrt()) / a
        } else {
            b / a
        };
        for (qi, di) in q.iter_mut().zip(&d) {
            *qi -= theta * di;
        }
    }
}

/// Projects `q` onto `{x : ‖A x − y‖ ≤ ε}` as the NESTA variants do (exact
/// Euclidean projection for LS and TF; a rescaled line search for RTF).
pub fn project_constraint(
    op: &SensingOperator,
    y: &[f64],
    mode: Fidelity,
    epsilon: f64,
    q: &[f64],
) -> Result<Vec<f64>> {
    check_len("signal", q.len(), op.n())?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let mut ball = Ball::new(op, y, mode, epsilon)?;
    let mut out = q.to_vec();
    ball.project(&mut out);
    Ok(out)
}

/// Default smoothing `0.01·max|Dᵀ x⁰|`.
pub fn default_mu(dict: &TightDictionary, x0: &[f64]) -> Result<f64> {
    let c = dict.analysis(x0)?;
    let m = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(if m > 0.0 { MU_FRACTION * m } else { MU_FRACTION })
}

fn check_problem(op: &SensingOperator, dict: &TightDictionary, y: &[f64]) -> Result<()> {
    check_len("measurement", y.len(), op.m())?;
    if dict.n() != op.n() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows but the sensing matrix has {} columns",
            dict.n(),
            op.n()
        )));
    }
    Ok(())
}

/// One ISTA update `D T_{ηλ}(Dᵀ(x − η∇))` with the mode gradient.
pub fn ista_step(
    spec: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    y: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    spec.validate()?;
    check_problem(op, dict, y)?;
    check_len("signal", x.len(), op.n())?;
    let eta = spec.resolved_eta(op, spec.mu.unwrap_or(1.0));
    let mut fit = Fit::new(op, y, spec.fidelity)?;
    let mut g = vec![0.0; op.n()];
    fit.grad(x, &mut g);
    let q: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
    let mut c = dict.analysis(&q)?;
    shrink(&mut c, eta * spec.lambda);
    dict.synthesis(&c)
}

/// Runs the solver from `x⁰ = Aᵀ y`.
pub fn solve(
    spec: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    y: &[f64],
) -> Result<RecoveryResult> {
    check_problem(op, dict, y)?;
    let x0 = op.a().tr_matvec(y)?;
    solve_from(spec, op, dict, y, &x0)
}

/// Runs the solver from a caller-supplied starting point.
pub fn solve_from(
    spec: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    y: &[f64],
    x0: &[f64],
) -> Result<RecoveryResult> {
    spec.validate()?;
    check_problem(op, dict, y)?;
    check_len("starting point", x0.len(), op.n())?;
    let mut run = Run::new(spec, op, dict, y, x0)?;
    match spec.algorithm {
        Algorithm::Ista => run.ista()?,
        Algorithm::Loris => run.loris()?,
        Algorithm::Nesta => run.nesta()?,
        Algorithm::Sfista => run.sfista()?,
    }
    Ok(run.finish())
}

/// Solves a generated instance, filling the oracle ε for NESTA when the spec
/// leaves it unset, and records the RSNR.
pub fn solve_instance(
    spec: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    inst: &ProblemInstance,
) -> Result<RecoveryResult> {
    let mut spec = spec.clone();
    if spec.algorithm == Algorithm::Nesta && spec.epsilon.is_none() {
        spec.epsilon = Some(oracle_epsilon(inst, spec.fidelity));
    }
    let mut res = solve(&spec, op, dict, &inst.y)?;
    res.rsnr_db = Some(rsnr(&res.x_hat, &inst.x_star)?);
    Ok(res)
}

/// `‖w‖_B` for the B-norm modes, `‖w‖₂` for LS.
pub fn oracle_epsilon(inst: &ProblemInstance, mode: Fidelity) -> f64 {
    match mode {
        Fidelity::Ls => inst.epsilon_l2,
        Fidelity::Tf | Fidelity::Rtf => inst.epsilon_b,
    }
}

struct Run<'a> {
    spec: &'a SolverSpec,
    op: &'a SensingOperator,
    dict: &'a TightDictionary,
    y: &'a [f64],
    fit: Fit<'a>,
    x: Vec<f64>,
    eta: f64,
    mu: Option<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl<'a> Run<'a> {
    fn new(
        spec: &'a SolverSpec,
        op: &'a SensingOperator,
        dict: &'a TightDictionary,
        y: &'a [f64],
        x0: &[f64],
    ) -> Result<Self> {
        let mu = if spec.algorithm.smoothed() {
            Some(match spec.mu {
                Some(mu) => mu,
                None => default_mu(dict, x0)?,
            })
        } else {
            None
        };
        let eta = spec.resolved_eta(op, mu.unwrap_or(1.0));
        Ok(Self {
            spec,
            op,
            dict,
            y,
            fit: Fit::new(op, y, spec.fidelity)?,
            x: x0.to_vec(),
            eta,
            mu,
            trace: Vec::new(),
            iterations: 0,
            converged: false,
        })
    }

    fn finish(self) -> RecoveryResult {
        RecoveryResult {
            algorithm: self.spec.algorithm,
            fidelity: self.spec.fidelity,
            lambda: self.spec.lambda,
            eta: self.eta,
            mu: self.mu,
            epsilon: if self.spec.algorithm == Algorithm::Nesta {
                self.spec.epsilon
            } else {
                None
            },
            x_hat: self.x,
            iterations: self.iterations,
            converged: self.converged,
            objective_trace: self.trace,
            rsnr_db: None,
        }
    }

    /// `f(x) + λ‖Dᵀ x‖₁`.
    fn composite(&mut self, x: &[f64]) -> Result<f64> {
        let f = self.fit.value(x);
        Ok(f + self.spec.lambda * norm1(&self.dict.analysis(x)?))
    }

    /// Appends `obj` to the trace and fails if it has blown up.
    fn record(&mut self, obj: f64) -> Result<()> {
        let first = self.trace.first().copied().unwrap_or(obj);
        self.trace.push(obj);
        if !obj.is_finite() || obj > DIVERGENCE_FACTOR * first.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                eta: self.eta,
                iteration: self.trace.len() - 1,
                objective: obj,
            });
        }
        Ok(())
    }

    /// Bookkeeping after an update `prev → self.x`; returns true to stop.
    fn step_done(&mut self, moved: f64) -> bool {
        self.iterations += 1;
        if moved < self.spec.tol {
            self.converged = true;
        }
        self.converged
    }

    fn ista(&mut self) -> Result<()> {
        let n = self.x.len();
        let lam = self.spec.lambda;
        let mut g = vec![0.0; n];
        let mut q = vec![0.0; n];
        let obj0 = self.composite(&self.x.clone())?;
        self.record(obj0)?;
        while self.iterations < self.spec.max_iters {
            self.fit.grad(&self.x, &mut g);
            for ((qi, xi), gi) in q.iter_mut().zip(&self.x).zip(&g) {
                *qi = xi - self.eta * gi;
            }
            let mut c = self.dict.analysis(&q)?;
            shrink(&mut c, self.eta * lam);
            let next = self.dict.synthesis(&c)?;
            let moved = dist2(&next, &self.x);
            self.x = next;
            let obj = self.composite(&self.x.clone())?;
            self.record(obj)?;
            if self.step_done(moved) {
                break;
            }
        }
        Ok(())
    }

    fn loris(&mut self) -> Result<()> {
        let n = self.x.len();
        let t = self.eta * self.spec.lambda;
        let mut g = vec![0.0; n];
        let mut w = vec![0.0; self.dict.d()];
        let obj0 = self.composite(&self.x.clone())?;
        self.record(obj0)?;
        while self.iterations < self.spec.max_iters {
            self.fit.grad(&self.x, &mut g);
            let descent: Vec<f64> = self
                .x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi - self.eta * gi)
                .collect();
            let dw = self.dict.synthesis(&w)?;
            let xbar: Vec<f64> = descent.iter().zip(&dw).map(|(a, b)| a - b).collect();
            let mut v = self.dict.analysis(&xbar)?;
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi += wi;
            }
            // w⁺ = v − T_t(v), i.e. v clipped to [−t, t].
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = vi.clamp(-t, t);
            }
            let dw = self.dict.synthesis(&w)?;
            let next: Vec<f64> = descent.iter().zip(&dw).map(|(a, b)| a - b).collect();
            let moved = dist2(&next, &self.x);
            self.x = next;
            let obj = self.composite(&self.x.clone())?;
            self.record(obj)?;
            if self.step_done(moved) {
                break;
            }
        }
        Ok(())
    }

    /// `μ ∇g_μ(x) = x − D T_μ(Dᵀ x)` for the Huber-smoothed `‖Dᵀ·‖₁`.
    fn scaled_smooth_grad(&self, x: &[f64], mu: f64) -> Result<Vec<f64>> {
        let mut c = self.dict.analysis(x)?;
        shrink(&mut c, mu);
        let s = self.dict.synthesis(&c)?;
        Ok(x.iter().zip(&s).map(|(a, b)| a - b).collect())
    }

    fn nesta(&mut self) -> Result<()> {
        let eps = self.spec.epsilon.ok_or_else(|| {
            Error::InvalidParameter("nesta needs a constraint radius epsilon".into())
        })?;
        let mu = self.mu.expect("smoothed algorithm");
        let inv_l = self.eta;
        let mut ball = Ball::new(self.op, self.y, self.spec.fidelity, eps)?;
        let x0 = self.x.clone();
        let mut acc = vec![0.0; x0.len()];
        let obj0 = norm1(&self.dict.analysis(&self.x)?);
        self.record(obj0)?;
        let mut k = 0usize;
        while self.iterations < self.spec.max_iters {
            let sg = self.scaled_smooth_grad(&self.x, mu)?;

            let mut u: Vec<f64> = self.x.iter().zip(&sg).map(|(a, b)| a - inv_l * b).collect();
            ball.project(&mut u);

            // The gradient at x⁰ does not enter the accumulated sum.
            if k >= 1 {
                let beta = 1.0 / (2.0 * (k as f64 + 1.0));
                for (ai, si) in acc.iter_mut().zip(&sg) {
                    *ai += beta * si;
                }
            }
            let q: Vec<f64> = x0.iter().zip(&acc).map(|(a, b)| a - inv_l * b).collect();
            let mut c = self.dict.analysis(&q)?;
            shrink(&mut c, self.spec.lambda * inv_l);
            let mut z = self.dict.synthesis(&c)?;
            ball.project(&mut z);

            let tau = 2.0 / (k as f64 + 4.0);
            let next: Vec<f64> = z
                .iter()
                .zip(&u)
                .map(|(zi, ui)| tau * zi + (1.0 - tau) * ui)
                .collect();
            let moved = dist2(&next, &self.x);
            self.x = next;
            k += 1;
            let obj = norm1(&self.dict.analysis(&self.x)?);
            self.record(obj)?;
            if self.step_done(moved) {
                break;
            }
        }
        Ok(())
    }

    fn sfista(&mut self) -> Result<()> {
        let mu = self.mu.expect("smoothed algorithm");
        let lam = self.spec.lambda;
        let n = self.x.len();
        let smoothed = |fit: &mut Fit, dict: &TightDictionary, x: &[f64]| -> Result<f64> {
            Ok(fit.value(x) + huber(&dict.analysis(x)?, lam, mu))
        };
        let mut u = self.x.clone();
        let mut t = 1.0f64;
        let mut g = vec![0.0; n];
        let mut f_x = smoothed(&mut self.fit, self.dict, &self.x)?;
        self.record(f_x)?;
        while self.iterations < self.spec.max_iters {
            self.fit.grad(&u, &mut g);
            // Smoothed-penalty gradient (1/μ) D(Dᵀx − T_{μλ}(Dᵀx)) at x.
            let mut c = self.dict.analysis(&self.x)?;
            let mut clipped = c.clone();
            shrink(&mut c, mu * lam);
            for (ci, si) in clipped.iter_mut().zip(&c) {
                *ci -= si;
            }
            let hg = self.dict.synthesis(&clipped)?;
            let z: Vec<f64> = u
                .iter()
                .zip(&g)
                .zip(&hg)
                .map(|((ui, gi), hi)| ui - self.eta * (gi + hi / mu))
                .collect();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let f_z = smoothed(&mut self.fit, self.dict, &z)?;
            let prev = std::mem::take(&mut self.x);
            let moved;
            if f_z <= f_x {
                moved = dist2(&z, &prev);
                self.x = z.clone();
                f_x = f_z;
            } else {
                // A rejected candidate keeps x; the stopping rule then looks
                // at the size of the proposed move instead.
                moved = dist2(&z, &prev);
                self.x = prev.clone();
            }
            for i in 0..n {
                u[i] = self.x[i]
                    + (t / t_next) * (z[i] - self.x[i])
                    + ((t - 1.0) / t_next) * (self.x[i] - prev[i]);
            }
            t = t_next;
            self.record(f_x)?;
            if self.step_done(moved) {
                break;
            }
        }
        Ok(())
    }
}

/// `‖A x − y‖` in the norm of the mode.
pub fn mode_residual(op: &SensingOperator, x: &[f64], y: &[f64], mode: Fidelity) -> Result<f64> {
    check_len("signal", x.len(), op.n())?;
    let mut fit = Fit::new(op, y, mode)?;
    Ok((2.0 * fit.value(x)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{generate_sensing, overcomplete_dct, Distribution, Provenance};
    use crate::matrixlab::norm2;

    #[test]
    fn soft_threshold_reference() {
        let out = soft_threshold(&[1.0, -0.2, 0.7], 0.5).unwrap();
        let want = [0.5, 0.0, 0.2];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(soft_threshold(&[1.0, -2.0], 0.0).unwrap(), vec![1.0, -2.0]);
        assert!(soft_threshold(&[1.0], -0.1).is_err());
    }

    #[test]
    fn huber_matches_its_gradient() {
        let (lam, mu) = (0.7, 0.3);
        for v in [-2.0, -0.1, 0.0, 0.15, 0.5] {
            let h = 1e-6;
            let fd = (huber(&[v + h], lam, mu) - huber(&[v - h], lam, mu)) / (2.0 * h);
            let t = soft_threshold(&[v], mu * lam).unwrap()[0];
            assert!((fd - (v - t) / mu).abs() < 1e-6);
        }
    }

    #[test]
    fn spec_validation() {
        let s = SolverSpec::new(Algorithm::Ista, Fidelity::Tf, 0.0);
        assert!(s.validate().is_err());
        let s = SolverSpec::new(Algorithm::Ista, Fidelity::Tf, 0.1).with_tol(0.0);
        assert!(s.validate().is_err());
        let s = SolverSpec::new(Algorithm::Ista, Fidelity::Tf, 0.1).with_eta(-1.0);
        assert!(s.validate().is_err());
        assert!(SolverSpec::new(Algorithm::Nesta, Fidelity::Tf, 0.1).validate().is_ok());
    }

    #[test]
    fn method_labels() {
        assert_eq!(method_label(Algorithm::Nesta, Fidelity::Tf), "TF-NESTA");
        assert_eq!(method_label(Algorithm::Loris, Fidelity::Ls), "Loris");
        assert_eq!(method_label(Algorithm::Sfista, Fidelity::Rtf), "RTF-SFISTA");
    }

    #[test]
    fn zero_iterations_returns_start() {
        let op = generate_sensing(8, 16, Distribution::Gaussian, 1).unwrap();
        let dict = overcomplete_dct(16, 32, 1).unwrap();
        let y: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        for alg in Algorithm::ALL {
            let spec = SolverSpec::new(alg, Fidelity::Tf, 0.1)
                .with_epsilon(0.1)
                .with_max_iters(0);
            let res = solve(&spec, &op, &dict, &y).unwrap();
            assert_eq!(res.x_hat, op.a().tr_matvec(&y).unwrap());
            assert_eq!(res.iterations, 0);
            assert!(!res.converged);
        }
    }

    #[test]
    fn projections_land_on_the_boundary() {
        let op = generate_sensing(10, 24, Distribution::Gaussian, 3).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let q: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).cos()).collect();
        for mode in Fidelity::ALL {
            let r0 = mode_residual(&op, &q, &y, mode).unwrap();
            let eps = 0.3 * r0;
            let p = project_constraint(&op, &y, mode, eps, &q).unwrap();
            let r = mode_residual(&op, &p, &y, mode).unwrap();
            assert!((r - eps).abs() < 1e-8, "{mode}: {r} vs {eps}");
            // Points inside are untouched.
            let same = project_constraint(&op, &y, mode, 2.0 * r0, &q).unwrap();
            assert_eq!(same, q);
        }
        let exact = project_constraint(&op, &y, Fidelity::Ls, 0.0, &q).unwrap();
        assert!(mode_residual(&op, &exact, &y, Fidelity::Ls).unwrap() < 1e-10);
    }

    #[test]
    fn l2_projection_is_nearest_point() {
        // Perturbing the projected point along the boundary never gets closer.
        let op = generate_sensing(6, 12, Distribution::Uniform, 8).unwrap();
        let y = vec![1.0; 6];
        let q = vec![0.5; 12];
        let eps = 0.5 * mode_residual(&op, &q, &y, Fidelity::Ls).unwrap();
        for mode in [Fidelity::Ls, Fidelity::Tf] {
            let p = project_constraint(&op, &y, mode, eps, &q).unwrap();
            let base = dist2(&p, &q);
            for s in 0..30u64 {
                let dir: Vec<f64> = (0..12).map(|i| ((i as u64 * 31 + s * 17) % 13) as f64 - 6.0).collect();
                let cand: Vec<f64> = p.iter().zip(&dir).map(|(a, b)| a + 1e-3 * b).collect();
                if mode_residual(&op, &cand, &y, mode).unwrap() <= eps {
                    assert!(dist2(&cand, &q) >= base - 1e-12);
                }
            }
        }
    }

    #[test]
    fn loris_threshold_fixed_point() {
        // With y = 0 and a large λ everything shrinks to zero.
        let op = generate_sensing(12, 24, Distribution::Gaussian, 2).unwrap();
        let dict = overcomplete_dct(24, 48, 2).unwrap();
        let y = vec![0.0; 12];
        for mode in Fidelity::ALL {
            let res = solve(&SolverSpec::new(Algorithm::Loris, mode, 10.0), &op, &dict, &y).unwrap();
            assert!(norm2(&res.x_hat) < 1e-12);
        }
    }

    #[test]
    fn result_json_uses_inf_sentinel() {
        let op = SensingOperator::from_matrix(Matrix::identity(2), Provenance::default());
        assert!(op.is_ok());
        let res = RecoveryResult {
            algorithm: Algorithm::Ista,
            fidelity: Fidelity::Tf,
            lambda: 0.1,
            eta: 0.99,
            mu: None,
            epsilon: None,
            x_hat: vec![],
            iterations: 3,
            converged: true,
            objective_trace: vec![1.0, 0.5],
            rsnr_db: Some(f64::INFINITY),
        };
        let v = res.to_json(false);
        assert_eq!(v["rsnr_db"], json!("inf"));
        assert!(v.get("objective_trace").is_none());
        assert_eq!(res.to_json(true)["objective_trace"], json!([1.0, 0.5]));
    }
}

//! Synthetic analysis-sparse ground truths, SNR-calibrated measurements and
//! reconstruction quality.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::frames::{bnorm, SensingOperator, TightDictionary};
use crate::matrixlab::{dist2, norm2};
use crate::rng::{derive_seed, stream};

const TAG_COEFFS: u64 = 0x636f_6566;
const TAG_NOISE: u64 = 0x6e6f_6973;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub alpha_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub support: Vec<usize>,
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    /// Requested SNR; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub sparsity_pct: f64,
    /// `‖w‖₂`.
    pub epsilon_l2: f64,
    /// `‖w‖_B`.
    pub epsilon_b: f64,
    pub seed: u64,
}

/// Each coefficient is active independently with probability
/// `sparsity_pct / 100`; active amplitudes are standard normal.
pub fn gen_sparse_coeffs(d: usize, sparsity_pct: f64, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(sparsity_pct > 0.0 && sparsity_pct <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity_pct must lie in (0, 100], got {sparsity_pct}"
        )));
    }
    let p = sparsity_pct / 100.0;
    let mut rng = stream(seed);
    let mut alpha = vec![0.0; d];
    let mut support = Vec::new();
    for (i, a) in alpha.iter_mut().enumerate() {
        // Draw both values for every index so the amplitude stream does not
        // depend on which indices were selected.
        let active = rng.random::<f64>() < p;
        let amp: f64 = StandardNormal.sample(&mut rng);
        if active {
            *a = amp;
            support.push(i);
        }
    }
    Ok((alpha, support))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    pub epsilon_l2: f64,
    pub epsilon_b: f64,
}

/// `y = A x* + w` with Gaussian `w` rescaled so that
/// `20 log10(‖A x*‖ / ‖w‖)` equals `snr_db` exactly. An infinite SNR gives
/// `w = 0`.
pub fn measure(op: &SensingOperator, x_star: &[f64], snr_db: f64, seed: u64) -> Result<Measurement> {
    check_len("signal", x_star.len(), op.n())?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("snr_db must be a number, got {snr_db}")));
    }
    let clean = op.a().matvec(x_star)?;
    let signal = norm2(&clean);
    if signal == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let noise = if snr_db == f64::INFINITY {
        vec![0.0; op.m()]
    } else {
        let mut rng = stream(seed);
        let mut w: Vec<f64> = (0..op.m()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let target = signal * 10f64.powf(-snr_db / 20.0);
        let scale = target / norm2(&w);
        w.iter_mut().for_each(|v| *v *= scale);
        w
    };
    let y = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(Measurement {
        y,
        epsilon_l2: norm2(&noise),
        epsilon_b: bnorm(op, &noise)?,
        noise,
    })
}

/// `20 log10(‖x*‖ / ‖x̂ − x*‖)`; `+∞` for an exact reconstruction.
pub fn rsnr(x_hat: &[f64], x_star: &[f64]) -> Result<f64> {
    check_len("estimate", x_hat.len(), x_star.len())?;
    let truth = norm2(x_star);
    if truth == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    let err = dist2(x_hat, x_star);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (truth / err).log10())
}

/// Realized SNR of a measurement, in dB.
pub fn realized_snr(op: &SensingOperator, x_star: &[f64], noise: &[f64]) -> Result<f64> {
    let clean = op.a().matvec(x_star)?;
    let w = norm2(noise);
    if w == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (norm2(&clean) / w).log10())
}

/// One problem instance from a trial seed.
pub fn instance(
    op: &SensingOperator,
    dict: &TightDictionary,
    sparsity_pct: f64,
    snr_db: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if dict.n() != op.n() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows but the sensing matrix has {} columns",
            dict.n(),
            op.n()
        )));
    }
    // Redraw (deterministically) on the rare empty support, since a zero
    // signal has no SNR.
    let mut attempt = 0;
    let (alpha_star, support, x_star) = loop {
        let (alpha, support) =
            gen_sparse_coeffs(dict.d(), sparsity_pct, derive_seed(seed, TAG_COEFFS, attempt))?;
        let x = dict.synthesis(&alpha)?;
        if norm2(&x) > 0.0 {
            break (alpha, support, x);
        }
        attempt += 1;
    };
    let meas = measure(op, &x_star, snr_db, derive_seed(seed, TAG_NOISE, 0))?;
    Ok(ProblemInstance {
        alpha_star,
        x_star,
        support,
        y: meas.y,
        noise: meas.noise,
        snr_db,
        sparsity_pct,
        epsilon_l2: meas.epsilon_l2,
        epsilon_b: meas.epsilon_b,
        seed,
    })
}

/// Seed of trial `index` under `master_seed`.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    derive_seed(master_seed, 0x7472_6961, index)
}

/// `n_trials` independent instances with seeds derived from `master_seed`.
pub fn batch_instances(
    op: &SensingOperator,
    dict: &TightDictionary,
    sparsity_pct: f64,
    snr_db: f64,
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<ProblemInstance>> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| instance(op, dict, sparsity_pct, snr_db, trial_seed(master_seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{bnorm_residual, generate_sensing, overcomplete_dct, Distribution};

    #[test]
    fn coefficients_are_deterministic_and_valid() {
        let (a, s) = gen_sparse_coeffs(256, 5.0, 3).unwrap();
        let (b, t) = gen_sparse_coeffs(256, 5.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(s, t);
        for (i, v) in a.iter().enumerate() {
            assert_eq!(*v != 0.0, s.contains(&i));
        }
        assert!(gen_sparse_coeffs(10, 0.0, 1).is_err());
        assert!(gen_sparse_coeffs(10, 100.5, 1).is_err());
        let (full, sup) = gen_sparse_coeffs(10, 100.0, 1).unwrap();
        assert_eq!(sup.len(), 10);
        assert!(full.iter().all(|v| *v != 0.0));
    }

    #[test]
    fn tiny_probability_gives_empty_support() {
        let (a, s) = gen_sparse_coeffs(8, 1e-9, 5).unwrap();
        assert!(s.is_empty());
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rsnr_reference_values() {
        let x = vec![3.0, 4.0];
        assert_eq!(rsnr(&x, &x).unwrap(), f64::INFINITY);
        assert!(rsnr(&[0.0, 0.0], &x).unwrap().abs() < 1e-12);
        let off: Vec<f64> = x.iter().map(|v| v * 1.1).collect();
        assert!((rsnr(&off, &x).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(rsnr(&x, &[0.0, 0.0]), Err(Error::ZeroGroundTruth)));
    }

    #[test]
    fn measurement_hits_requested_snr() {
        let op = generate_sensing(20, 40, Distribution::Gaussian, 1).unwrap();
        let dict = overcomplete_dct(40, 80, 2).unwrap();
        let inst = instance(&op, &dict, 10.0, 30.0, 9).unwrap();
        let ax = op.a().matvec(&inst.x_star).unwrap();
        let expected = norm2(&ax) * 10f64.powf(-1.5);
        assert!((inst.epsilon_l2 - expected).abs() < 1e-12 * expected.max(1.0));
        assert!((realized_snr(&op, &inst.x_star, &inst.noise).unwrap() - 30.0).abs() < 1e-9);
        let eb = bnorm_residual(&op, &inst.x_star, &inst.y).unwrap();
        assert!((eb - inst.epsilon_b).abs() < 1e-10);
        for i in 0..20 {
            assert_eq!(inst.y[i], ax[i] + inst.noise[i]);
        }
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let op = generate_sensing(5, 10, Distribution::Gaussian, 1).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = measure(&op, &x, f64::INFINITY, 0).unwrap();
        assert!(m.noise.iter().all(|v| *v == 0.0));
        assert_eq!(m.y, op.a().matvec(&x).unwrap());
        assert!(matches!(measure(&op, &[0.0; 10], 20.0, 0), Err(Error::UndefinedSnr)));
    }

    #[test]
    fn batch_is_reproducible() {
        let op = generate_sensing(16, 32, Distribution::Bernoulli, 4).unwrap();
        let dict = overcomplete_dct(32, 64, 4).unwrap();
        let a = batch_instances(&op, &dict, 5.0, 20.0, 6, 11).unwrap();
        let b = batch_instances(&op, &dict, 5.0, 20.0, 6, 11).unwrap();
        assert_eq!(a, b);
        let c = batch_instances(&op, &dict, 5.0, 20.0, 6, 12).unwrap();
        assert_ne!(a[0].support, c[0].support);
        assert!(batch_instances(&op, &dict, 5.0, 20.0, 0, 1).is_err());
    }
}

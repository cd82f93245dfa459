//! Eigenstructure analysis: rate-matrix spectra, the linearized accelerated
//! system, damping recommendations, and the strong-convexity constant from
//! the Rayleigh quotient.
//!
//! For a reversible chain the similarity transform
//! `diag(sqrt pi) Q diag(sqrt pi)^-1` is symmetric, so the spectrum of `Q` is
//! real: a simple zero plus `n - 1` negative values. The largest negative
//! one, `alpha_star`, sets the baseline convergence rate; critically damping
//! the accelerated system at `d = 2 sqrt(|alpha_star|)` moves the rate to
//! `mu_star = -sqrt(|alpha_star|)`.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{AmcmcError, Result};
use crate::geometry::Mobility;
use crate::graph_model::{RateMatrix, TargetDistribution, WeightMatrix};

/// Real spectrum of a reversible rate matrix, sorted descending (leading
/// entry 0). Fails when `pi_i Q_ij != pi_j Q_ji` beyond `1e-10`.
pub fn q_spectrum(rate: &RateMatrix, target: &TargetDistribution) -> Result<Vec<f64>> {
    let q = rate.matrix();
    let n = q.nrows();
    if target.n() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    let pi = target.pi();
    for i in 0..n {
        for j in (i + 1)..n {
            if (pi[i] * q[(i, j)] - pi[j] * q[(j, i)]).abs() > 1e-10 {
                return Err(AmcmcError::InvalidArgument(format!(
                    "rate matrix is not reversible at ({i}, {j})"
                )));
            }
        }
    }
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = pi[i].sqrt() * q[(i, j)] / pi[j].sqrt();
        }
    }
    // symmetrize away roundoff before the symmetric eigensolver
    let s = (&s + s.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(ev)
}

/// Largest negative eigenvalue (the spectral gap) from a sorted spectrum.
pub fn alpha_star(spectrum: &[f64]) -> Result<f64> {
    if spectrum.len() < 2 {
        return Err(AmcmcError::InvalidArgument("spectrum too short".into()));
    }
    if spectrum[0].abs() > 1e-8 {
        return Err(AmcmcError::InvalidArgument(format!(
            "leading eigenvalue {} is not zero",
            spectrum[0]
        )));
    }
    if spectrum[1] >= -1e-14 {
        return Err(AmcmcError::InvalidArgument(
            "zero eigenvalue is not simple".into(),
        ));
    }
    Ok(spectrum[1])
}

/// Critical damping `2 sqrt(|alpha_star|)`; the predicted rate is
/// `-sqrt(|alpha_star|)`.
pub fn optimal_damping(alpha_star: f64) -> Result<f64> {
    if alpha_star >= 0.0 {
        return Err(AmcmcError::InvalidArgument(format!(
            "alpha_star must be negative, got {alpha_star}"
        )));
    }
    Ok(2.0 * alpha_star.abs().sqrt())
}

/// Linearized chi-squared system matrix in row-vector convention
/// `d[p, psi]/dt = [p, psi] L`:
///
/// ```text
/// L = [ 0   -diag(1/pi) ]
///     [ K      -d I     ]     with K = -omega.
/// ```
pub fn chi_system_matrix(
    target: &TargetDistribution,
    omega: &WeightMatrix,
    d: f64,
) -> DMatrix<f64> {
    let n = target.n();
    let pi = target.pi();
    let w = omega.matrix();
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        l[(i, n + i)] = -1.0 / pi[i];
        for j in 0..n {
            l[(n + i, j)] = -w[(i, j)];
        }
        l[(n + i, n + i)] = -d;
    }
    l
}

/// Full complex spectrum of the (nonsymmetric) system matrix.
pub fn l_spectrum(l: &DMatrix<f64>) -> Vec<Complex<f64>> {
    l.clone().complex_eigenvalues().iter().copied().collect()
}

/// Checks the quadratic eigenvalue relation: a real eigenvalue `mu` of the
/// accelerated system satisfies `mu (d + mu) ∈ spec(Q)` within `1e-8`.
pub fn map_check(mu: f64, d: f64, q_eigenvalues: &[f64]) -> bool {
    let image = mu * (d + mu);
    q_eigenvalues.iter().any(|&a| (image - a).abs() < 1e-8)
}

/// Convergence-rate eigenvalue: largest real part among eigenvalues with
/// negative real part, ties broken by smallest imaginary magnitude.
pub fn mu_star(l_eigenvalues: &[Complex<f64>]) -> Result<Complex<f64>> {
    l_eigenvalues
        .iter()
        .filter(|z| z.re < -1e-12)
        .copied()
        .max_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(b.im.abs().partial_cmp(&a.im.abs()).unwrap())
        })
        .ok_or_else(|| {
            AmcmcError::InvalidArgument("no eigenvalue with negative real part".into())
        })
}

/// Hessian of the squared-log-ratio potential at a general interior density:
/// diagonal `sum_j omega_ij theta_ij [1 - log((pi_j p_i)/(pi_i p_j))] / p_i^2`,
/// off-diagonal `-omega_ij theta_ij / (p_i p_j)`.
pub fn confisher_hessian(
    p: &[f64],
    target: &TargetDistribution,
    omega: &WeightMatrix,
    mobility: &Mobility,
) -> Result<DMatrix<f64>> {
    let n = target.n();
    if p.len() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    if let Some(i) = p.iter().position(|&x| !(x > 0.0)) {
        return Err(AmcmcError::DomainError(format!(
            "Hessian needs p > 0, p[{i}] = {}",
            p[i]
        )));
    }
    let pi = target.pi();
    let w = omega.matrix();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let ri = p[i] / pi[i];
        let mut diag = 0.0;
        for j in 0..n {
            if j != i && w[(i, j)] != 0.0 {
                let rj = p[j] / pi[j];
                let th = mobility.theta(i, j, ri, rj)?;
                let u = ri / rj;
                diag += w[(i, j)] * th * (1.0 - u.ln()) / (p[i] * p[i]);
                h[(i, j)] = -w[(i, j)] * th / (p[i] * p[j]);
            }
        }
        h[(i, i)] = diag;
    }
    Ok(h)
}

/// At the target the Hessian collapses to `diag(1/pi) K diag(1/pi)`.
pub fn confisher_hessian_at_pi(target: &TargetDistribution, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = target.n();
    let pi = target.pi();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = k[(i, j)] / (pi[i] * pi[j]);
        }
    }
    h
}

/// Minimum of the Rayleigh quotient `psi K H K psi^T / psi K psi^T` over
/// momenta orthogonal to the kernel, via the rank-reduced form
/// `lambda_min(sqrt(S) U^T H U sqrt(S))` where `K = U S U^T` restricted to
/// its positive eigenvalues. Exactly one kernel direction is expected.
pub fn rayleigh_lambda(k: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    if h.nrows() != n || h.ncols() != n || k.ncols() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * max)
        .collect();
    if keep.len() != n - 1 {
        return Err(AmcmcError::NumericalRankError(format!(
            "expected a one-dimensional kernel, found rank {} of {n}",
            keep.len()
        )));
    }
    let r = keep.len();
    let mut u = DMatrix::zeros(n, r);
    let mut sqrt_s = vec![0.0; r];
    for (c, &idx) in keep.iter().enumerate() {
        sqrt_s[c] = eig.eigenvalues[idx].sqrt();
        for i in 0..n {
            u[(i, c)] = eig.eigenvectors[(i, idx)];
        }
    }
    let m = u.transpose() * h * &u;
    let mut b = DMatrix::zeros(r, r);
    for a in 0..r {
        for c in 0..r {
            b[(a, c)] = sqrt_s[a] * m[(a, c)] * sqrt_s[c];
        }
    }
    let b = (&b + b.transpose()) * 0.5;
    let eig_b = nalgebra::SymmetricEigen::new(b);
    Ok(eig_b.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Sufficient strong-convexity constant for the chi-squared potential:
/// `min_i (1/pi_i) / lambda_max((-omega)^+)`, i.e. `min(1/pi)` times the
/// smallest positive eigenvalue of `-omega`.
pub fn chi2_lambda_bound(target: &TargetDistribution, omega: &WeightMatrix) -> Result<f64> {
    let n = target.n();
    let w = omega.matrix();
    let neg = -w;
    let eig = nalgebra::SymmetricEigen::new(neg);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let lambda2 = eig
        .eigenvalues
        .iter()
        .cloned()
        .filter(|&x| x > 1e-12 * max)
        .fold(f64::INFINITY, f64::min);
    if !lambda2.is_finite() {
        return Err(AmcmcError::NumericalRankError(
            "edge-weight Laplacian has no positive eigenvalue".into(),
        ));
    }
    let min_inv_pi = target
        .pi()
        .iter()
        .map(|&x| 1.0 / x)
        .fold(f64::INFINITY, f64::min);
    let _ = n;
    Ok(min_inv_pi * lambda2)
}

/// Everything the `spectrum` subcommand reports.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub q_eigenvalues: Vec<f64>,
    pub alpha_star: f64,
    pub recommended_d: f64,
    /// Damping actually used for the system matrix (defaults to
    /// `recommended_d`).
    pub damping_used: f64,
    /// `[re, im]` pairs.
    pub l_eigenvalues: Vec<[f64; 2]>,
    pub mu_star: [f64; 2],
    pub lambda_rayleigh: f64,
    /// Whether `|alpha_star| < 1`, the hypothesis of the critical-damping
    /// rate statement.
    pub damping_hypothesis_ok: bool,
}

/// Assembles the full report: Q spectrum, recommended damping, accelerated
/// spectrum at `damping` (or the recommendation), and the Rayleigh constant
/// at the target with the con-Fisher Hessian.
pub fn spectral_report(
    rate: &RateMatrix,
    target: &TargetDistribution,
    omega: &WeightMatrix,
    damping: Option<f64>,
) -> Result<SpectralReport> {
    let q_eigenvalues = q_spectrum(rate, target)?;
    let a = alpha_star(&q_eigenvalues)?;
    let recommended_d = optimal_damping(a)?;
    let damping_used = damping.unwrap_or(recommended_d);
    let l = chi_system_matrix(target, omega, damping_used);
    let ls = l_spectrum(&l);
    let mu = mu_star(&ls)?;
    let k = -omega.matrix();
    let h = confisher_hessian_at_pi(target, &k);
    let lambda_rayleigh = rayleigh_lambda(&k, &h)?;
    Ok(SpectralReport {
        q_eigenvalues,
        alpha_star: a,
        recommended_d,
        damping_used,
        l_eigenvalues: ls.iter().map(|z| [z.re, z.im]).collect(),
        mu_star: [mu.re, mu.im],
        lambda_rayleigh,
        damping_hypothesis_ok: a.abs() < 1.0,
    })
}

//! Stochastic jump-process realization of the samplers.
//!
//! An ensemble of `M` particles lives on the states; each iteration every
//! state's particles are redistributed by a multinomial draw from the row of
//! a transition matrix `P = I + Q dt`. For the baseline sampler `Q` is the
//! fixed Metropolis-Hastings rate matrix; for the accelerated samplers `Q`
//! is re-derived every iteration from the empirical density and the momentum,
//! whose own update follows the deterministic flow.
//!
//! Randomness is drawn from a counter-based generator keyed by
//! `(master seed, iteration, state)`, so per-state draws are independent of
//! evaluation order and runs are bitwise reproducible.

use nalgebra::DMatrix;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::dynamics::{init_momentum, l2_error, DampingSchedule};
use crate::error::{AmcmcError, Result};
use crate::geometry::{hamiltonian, log_mean_partial_x, potential, Method, MethodSpec};
use crate::graph_model::{RateMatrix, TargetDistribution, WeightMatrix};

/// Particle counts per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleEnsemble {
    counts: Vec<u64>,
    total: u64,
}

impl ParticleEnsemble {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(AmcmcError::InvalidArgument(
                "ensemble needs at least one particle".into(),
            ));
        }
        Ok(Self { counts, total })
    }

    /// Draws `m` particles from `p0` (multinomial, iteration counter 0 of the
    /// seed's stream).
    pub fn sample(p0: &[f64], m: u64, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(AmcmcError::InvalidArgument("m must be positive".into()));
        }
        let support: Vec<(usize, f64)> = p0.iter().cloned().enumerate().collect();
        let mut rng = state_rng(seed, 0, 0);
        let mut counts = vec![0u64; p0.len()];
        for (idx, c) in multinomial(&mut rng, m, &support) {
            counts[idx] = c;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// `counts / total`.
pub fn empirical_density(ensemble: &ParticleEnsemble) -> Vec<f64> {
    let m = ensemble.total as f64;
    ensemble.counts.iter().map(|&c| c as f64 / m).collect()
}

/// Momentum-parameterized rate matrix for the jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRateMatrix {
    q: DMatrix<f64>,
}

impl PsiRateMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Neighbor lists extracted from the sparsity pattern of `omega`; the run
/// loops touch only these entries.
fn support(omega: &WeightMatrix) -> Vec<Vec<usize>> {
    let n = omega.n();
    let w = omega.matrix();
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i && w[(i, j)] != 0.0).collect())
        .collect()
}

/// Off-diagonal rates `(j, rate)` and diagonal for row `i` of the
/// momentum-parameterized rate matrix:
/// rate into `j` is `omega_ij theta_ij max{psi_j - psi_i, 0} / p_i`.
fn psi_rate_row(
    spec: &MethodSpec,
    i: usize,
    p: &[f64],
    psi: &[f64],
    omega: &WeightMatrix,
    adj: &[Vec<usize>],
    pi: &[f64],
) -> Result<(Vec<(usize, f64)>, f64)> {
    if !(p[i] > 0.0) {
        return Err(AmcmcError::PositivityViolation(format!(
            "row {i} of the jump rate matrix is undefined at p[{i}] = {}",
            p[i]
        )));
    }
    let w = omega.matrix();
    let ri = p[i] / pi[i];
    let mut off = Vec::with_capacity(adj[i].len());
    let mut diag = 0.0;
    for &j in &adj[i] {
        if !(p[j] > 0.0) {
            return Err(AmcmcError::PositivityViolation(format!(
                "jump rates need strictly positive density, p[{j}] = {}",
                p[j]
            )));
        }
        let th = spec.mobility.theta(i, j, ri, p[j] / pi[j])?;
        let rate = w[(i, j)] * th * (psi[j] - psi[i]).max(0.0) / p[i];
        off.push((j, rate));
        diag -= rate;
    }
    Ok((off, diag))
}

/// Full rate matrix from `(p, psi)`. Satisfies the identity
/// `p Qbar = psi K(p)` exactly: mass flows at the rate of the deterministic
/// density update.
pub fn build_psi_rate_matrix(
    spec: &MethodSpec,
    p: &[f64],
    psi: &[f64],
    omega: &WeightMatrix,
    target: &TargetDistribution,
) -> Result<PsiRateMatrix> {
    let n = omega.n();
    if p.len() != n || psi.len() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    let adj = support(omega);
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        let (off, diag) = psi_rate_row(spec, i, p, psi, omega, &adj, target.pi())?;
        for (j, rate) in off {
            q[(i, j)] = rate;
        }
        q[(i, i)] = diag;
    }
    Ok(PsiRateMatrix { q })
}

/// `P = I + Q dt_used` with `dt_used = dt / 10^k` for the smallest `k >= 0`
/// making every entry lie in `[0, 1]`.
pub fn transition_matrix(q: &DMatrix<f64>, dt: f64, min_dt: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = q.nrows();
    let min_diag = (0..n).map(|i| q[(i, i)]).fold(0.0f64, f64::min);
    let mut dt_used = dt;
    while 1.0 + min_diag * dt_used < 0.0 {
        dt_used /= 10.0;
        if dt_used < min_dt {
            return Err(AmcmcError::StepUnderflow(format!(
                "transition matrix needs dt below {min_dt}"
            )));
        }
    }
    let mut p = q * dt_used;
    for i in 0..n {
        p[(i, i)] += 1.0;
    }
    Ok((p, dt_used))
}

fn state_rng(seed: u64, iteration: u64, state: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&iteration.to_le_bytes());
    key[16..24].copy_from_slice(&state.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Multinomial draw of `count` items over `(index, probability)` pairs via a
/// chain of binomials; any roundoff leftover lands on the final entry.
fn multinomial(
    rng: &mut ChaCha8Rng,
    count: u64,
    probs: &[(usize, f64)],
) -> Vec<(usize, u64)> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = count;
    let mut rest = 1.0f64;
    for (k, &(idx, p)) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out.push((idx, remaining));
            remaining = 0;
            break;
        }
        let q = if rest > 0.0 { (p / rest).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q).unwrap().sample(rng);
        if draw > 0 {
            out.push((idx, draw));
        }
        remaining -= draw;
        rest -= p;
    }
    if remaining > 0 {
        // probabilities under-covered 1 by roundoff; keep the mass in place
        out.push((probs.last().unwrap().0, remaining));
    }
    out
}

/// One synchronous jump: every state's particles are multinomially
/// redistributed along its row of `P`; totals are conserved.
pub fn jump_step(
    ensemble: &ParticleEnsemble,
    p_matrix: &DMatrix<f64>,
    seed: u64,
    iteration: u64,
) -> ParticleEnsemble {
    let n = ensemble.counts.len();
    let mut counts = vec![0u64; n];
    for s in 0..n {
        let c = ensemble.counts[s];
        if c == 0 {
            continue;
        }
        let probs: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != s && p_matrix[(s, j)] > 0.0)
            .map(|j| (j, p_matrix[(s, j)]))
            .chain(std::iter::once((s, p_matrix[(s, s)])))
            .collect();
        let mut rng = state_rng(seed, iteration, s as u64);
        for (idx, d) in multinomial(&mut rng, c, &probs) {
            counts[idx] += d;
        }
    }
    ParticleEnsemble {
        counts,
        total: ensemble.total,
    }
}

/// Restart for one empty state: add a single particle there and reset the
/// momentum from the new empirical density.
pub fn restart_jump(
    ensemble: &ParticleEnsemble,
    method: Method,
    target: &TargetDistribution,
    state_index: usize,
) -> Result<(ParticleEnsemble, Vec<f64>)> {
    if ensemble.counts[state_index] != 0 {
        return Err(AmcmcError::InvalidArgument(format!(
            "restart requested for occupied state {state_index}"
        )));
    }
    let mut counts = ensemble.counts.clone();
    counts[state_index] = 1;
    let next = ParticleEnsemble {
        counts,
        total: ensemble.total + 1,
    };
    let psi = init_momentum(method, &empirical_density(&next), target)?;
    Ok((next, psi))
}

/// Jump-run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpConfig {
    pub m: u64,
    pub dt: f64,
    pub iterations: usize,
    pub warm_start_iters: usize,
    pub seed: u64,
    pub min_dt: f64,
}

impl JumpConfig {
    pub fn new(m: u64, dt: f64, iterations: usize, seed: u64) -> Self {
        Self {
            m,
            dt,
            iterations,
            warm_start_iters: 0,
            seed,
            min_dt: 1e-12,
        }
    }
}

/// Per-iteration diagnostics of a jump run.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub iter: usize,
    pub t: f64,
    pub dt: f64,
    pub l2_error: f64,
    pub hamiltonian: f64,
    pub potential: f64,
    pub min_p: f64,
    pub restarts: usize,
    pub total_particles: u64,
    pub restarts_this_iter: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpTrajectory {
    pub records: Vec<JumpRecord>,
}

impl JumpTrajectory {
    /// Same schema as the deterministic trajectory plus
    /// `total_particles,restarts_this_iter`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "iter,t,dt,l2_error,hamiltonian,potential,min_p,restarts,total_particles,restarts_this_iter"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                r.iter,
                r.t,
                r.dt,
                r.l2_error,
                r.hamiltonian,
                r.potential,
                r.min_p,
                r.restarts,
                r.total_particles,
                r.restarts_this_iter
            )?;
        }
        Ok(())
    }
}

/// Sparse per-state transition rows `(j, prob)` including the self entry.
fn mh_rows(rate: &RateMatrix, dt: f64) -> Vec<Vec<(usize, f64)>> {
    let q = rate.matrix();
    let n = q.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && q[(i, j)] > 0.0)
                .map(|j| (j, q[(i, j)] * dt))
                .chain(std::iter::once((i, 1.0 + q[(i, i)] * dt)))
                .collect()
        })
        .collect()
}

fn sparse_jump(
    ensemble: &ParticleEnsemble,
    rows: &[Vec<(usize, f64)>],
    seed: u64,
    iteration: u64,
) -> ParticleEnsemble {
    let n = ensemble.counts.len();
    let mut counts = vec![0u64; n];
    for s in 0..n {
        let c = ensemble.counts[s];
        if c == 0 {
            continue;
        }
        let mut rng = state_rng(seed, iteration, s as u64);
        for (idx, d) in multinomial(&mut rng, c, &rows[s]) {
            counts[idx] += d;
        }
    }
    ParticleEnsemble {
        counts,
        total: ensemble.total,
    }
}

/// Momentum velocity on the sparse support; identical to the dense
/// formulation in [`crate::dynamics::psi_rhs`].
fn psi_rhs_sparse(
    spec: &MethodSpec,
    p: &[f64],
    psi: &[f64],
    gamma: f64,
    omega: &WeightMatrix,
    adj: &[Vec<usize>],
    pi: &[f64],
) -> Result<Vec<f64>> {
    let n = p.len();
    let w = omega.matrix();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if !(p[i] > 0.0) {
            return Err(AmcmcError::DomainError(format!(
                "momentum update needs p > 0, p[{i}] = {}",
                p[i]
            )));
        }
        let ri = p[i] / pi[i];
        let grad: f64;
        let mut kin = 0.0;
        match spec.method {
            Method::ChiSquared => grad = ri - 1.0,
            Method::Kl => {
                grad = ri.ln();
                for &j in &adj[i] {
                    let rj = p[j] / pi[j];
                    let d = psi[i] - psi[j];
                    kin += w[(i, j)] * (log_mean_partial_x(ri, rj)? / pi[i]) * d * d;
                }
            }
            Method::LogFisher => {
                let mut acc = 0.0;
                for &j in &adj[i] {
                    let rj = p[j] / pi[j];
                    let u = ri / rj;
                    acc += w[(i, j)] * (u.ln() + 1.0 - 1.0 / u);
                    let d = psi[i] - psi[j];
                    kin += w[(i, j)] * (log_mean_partial_x(ri, rj)? / pi[i]) * d * d;
                }
                grad = acc / (2.0 * pi[i]);
            }
            Method::ConFisher => {
                let mut acc = 0.0;
                for &j in &adj[i] {
                    let rj = p[j] / pi[j];
                    acc += w[(i, j)] * spec.mobility.theta(i, j, ri, rj)? * (ri / rj).ln();
                }
                grad = acc / p[i];
            }
        }
        out[i] = -gamma * psi[i] - 0.5 * kin - grad;
    }
    Ok(out)
}

fn record_jump(
    traj: &mut JumpTrajectory,
    ensemble: &ParticleEnsemble,
    spec: &MethodSpec,
    psi: Option<&[f64]>,
    omega: &WeightMatrix,
    target: &TargetDistribution,
    iter: usize,
    t: f64,
    dt: f64,
    restarts: usize,
    restarts_this_iter: usize,
) -> Result<()> {
    let p = empirical_density(ensemble);
    let min_p = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let (u, h) = if min_p > 0.0 || !matches!(spec.method, Method::Kl | Method::LogFisher | Method::ConFisher)
    {
        let u = potential(spec, &p, target, omega)?;
        let h = match psi {
            Some(psi) => hamiltonian(spec, &p, psi, omega, target)?,
            None => u,
        };
        (u, h)
    } else {
        // log-based diagnostics are undefined on empty states
        (f64::NAN, f64::NAN)
    };
    traj.records.push(JumpRecord {
        iter,
        t,
        dt,
        l2_error: l2_error(&p, target.pi()),
        hamiltonian: h,
        potential: u,
        min_p,
        restarts,
        total_particles: ensemble.total,
        restarts_this_iter,
    });
    Ok(())
}

/// Baseline sampler: time-homogeneous transition matrix from the
/// Metropolis-Hastings rates, `cfg.iterations` synchronous jumps.
pub fn run_mh_jump(
    cfg: &JumpConfig,
    rate: &RateMatrix,
    omega: &WeightMatrix,
    target: &TargetDistribution,
    p0: &[f64],
) -> Result<(JumpTrajectory, ParticleEnsemble)> {
    let n = target.n();
    if p0.len() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    let q = rate.matrix();
    let min_diag = (0..n).map(|i| q[(i, i)]).fold(0.0f64, f64::min);
    let mut dt = cfg.dt;
    while 1.0 + min_diag * dt < 0.0 {
        dt /= 10.0;
        if dt < cfg.min_dt {
            return Err(AmcmcError::StepUnderflow(format!(
                "transition matrix needs dt below {}",
                cfg.min_dt
            )));
        }
    }
    let rows = mh_rows(rate, dt);
    let spec = MethodSpec::new(Method::ChiSquared);
    let mut ensemble = ParticleEnsemble::sample(p0, cfg.m, cfg.seed)?;
    let mut traj = JumpTrajectory::default();
    record_jump(&mut traj, &ensemble, &spec, None, omega, target, 0, 0.0, dt, 0, 0)?;
    let mut t = 0.0;
    for k in 0..cfg.iterations {
        ensemble = sparse_jump(&ensemble, &rows, cfg.seed, k as u64 + 1);
        t += dt;
        record_jump(&mut traj, &ensemble, &spec, None, omega, target, k + 1, t, dt, 0, 0)?;
    }
    Ok((traj, ensemble))
}

/// Accelerated sampler: `warm_start_iters` baseline jumps seed the momentum;
/// afterwards each iteration jumps along the momentum-parameterized rates and
/// advances the momentum with the empirical density. Any state emptied by the
/// jump noise is restarted (one particle added, momentum re-seeded) before
/// its rate row is next needed.
pub fn run_amcmc_jump(
    cfg: &JumpConfig,
    spec: &MethodSpec,
    schedule: &DampingSchedule,
    rate: &RateMatrix,
    omega: &WeightMatrix,
    target: &TargetDistribution,
    p0: &[f64],
) -> Result<(JumpTrajectory, ParticleEnsemble)> {
    let n = target.n();
    if p0.len() != n {
        return Err(AmcmcError::InvalidArgument("dimension mismatch".into()));
    }
    let adj = support(omega);
    let pi = target.pi();

    let q = rate.matrix();
    let min_diag = (0..n).map(|i| q[(i, i)]).fold(0.0f64, f64::min);
    let mut dt = cfg.dt;
    while 1.0 + min_diag * dt < 0.0 {
        dt /= 10.0;
        if dt < cfg.min_dt {
            return Err(AmcmcError::StepUnderflow(format!(
                "transition matrix needs dt below {}",
                cfg.min_dt
            )));
        }
    }
    let warm_rows = mh_rows(rate, dt);

    let mut ensemble = ParticleEnsemble::sample(p0, cfg.m, cfg.seed)?;
    let mut traj = JumpTrajectory::default();
    record_jump(&mut traj, &ensemble, spec, None, omega, target, 0, 0.0, dt, 0, 0)?;

    let mut t = 0.0;
    let mut restarts = 0usize;
    let mut psi: Option<Vec<f64>> = None;
    let warm = cfg.warm_start_iters.min(cfg.iterations);

    for k in 0..cfg.iterations {
        let mut fired = 0usize;
        if k < warm {
            ensemble = sparse_jump(&ensemble, &warm_rows, cfg.seed, k as u64 + 1);
            t += dt;
        } else {
            // fill empty states before the rate rows are built
            if ensemble.counts.iter().any(|&c| c == 0) {
                let mut counts = ensemble.counts.clone();
                let mut total = ensemble.total;
                for c in counts.iter_mut() {
                    if *c == 0 {
                        *c = 1;
                        total += 1;
                        fired += 1;
                    }
                }
                ensemble = ParticleEnsemble { counts, total };
                restarts += fired;
                psi = None; // re-seed below
            }
            let p = empirical_density(&ensemble);
            if psi.is_none() {
                psi = Some(init_momentum(spec.method, &p, target)?);
            }
            let psi_now = psi.as_ref().unwrap();

            // momentum-parameterized rates on the sparse support
            let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
            let mut min_diag = 0.0f64;
            for i in 0..n {
                let (off, diag) = psi_rate_row(spec, i, &p, psi_now, omega, &adj, pi)?;
                min_diag = min_diag.min(diag);
                rows.push(off.into_iter().collect());
            }
            while 1.0 + min_diag * dt < 0.0 {
                dt /= 10.0;
                if dt < cfg.min_dt {
                    return Err(AmcmcError::StepUnderflow(format!(
                        "transition matrix needs dt below {}",
                        cfg.min_dt
                    )));
                }
            }
            let gamma = schedule.eval(t);
            let prob_rows: Vec<Vec<(usize, f64)>> = rows
                .iter()
                .enumerate()
                .map(|(i, off)| {
                    let stay = 1.0 - off.iter().map(|&(_, r)| r).sum::<f64>() * dt;
                    off.iter()
                        .map(|&(j, r)| (j, r * dt))
                        .chain(std::iter::once((i, stay)))
                        .collect()
                })
                .collect();
            ensemble = sparse_jump(&ensemble, &prob_rows, cfg.seed, k as u64 + 1);
            t += dt;

            // momentum update with the post-jump empirical density
            let p_new = empirical_density(&ensemble);
            if p_new.iter().all(|&x| x > 0.0) {
                let a = psi_rhs_sparse(spec, &p_new, psi_now, gamma, omega, &adj, pi)?;
                let next: Vec<f64> = psi_now.iter().zip(&a).map(|(&s, &d)| s + dt * d).collect();
                psi = Some(next);
            } else {
                // a state emptied this iteration; momentum is re-seeded at the
                // top of the next iteration after the restart fill
                psi = None;
            }
        }
        record_jump(
            &mut traj,
            &ensemble,
            spec,
            psi.as_deref(),
            omega,
            target,
            k + 1,
            t,
            dt,
            restarts,
            fired,
        )?;
    }
    Ok((traj, ensemble))
}

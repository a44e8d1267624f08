//! Time-domain DDIM sampling with closed-form denoisers.
//!
//! Every operator is assembled as a circulant matrix and applied through
//! FFT round trips, so these trajectories check the spectral closed forms
//! without sharing their per-bin formulas.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::fft::{Circulant, Dft};
use crate::schedule::{step_coeffs_scalar, Schedule};
use crate::spectral::{DegradationSpec, Observation, SpectralPrior};

/// Default cap on heuristic DPS weights when the residual vanishes.
pub const DEFAULT_ZETA_CAP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    /// Plain prior DDIM sampler.
    None,
    /// DPS with given `ζ_s`, indexed `s − 1`.
    DpsFixed(Vec<f64>),
    /// DPS with `ζ_s = ζ′ / ‖y − H x̂₀(x_s)‖₂`, capped at `cap`.
    DpsHeuristic { zeta_prime: f64, cap: f64 },
    /// ΠGDM with gains `g_s` and std `r_s`, indexed `s − 1`.
    Pigdm { g: Vec<f64>, r: Vec<f64> },
    /// DDIM driven by the MAP denoiser given both `x_s` and `y`.
    Optimal,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub prior: SpectralPrior,
    pub spec: DegradationSpec,
    pub schedule: Schedule,
    pub guidance: Guidance,
    pub n_runs: usize,
    pub seed: u64,
}

/// Result of one sampling trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x0: Vec<f64>,
    /// DPS weight used at each step, indexed `s − 1` (DPS guidance only).
    pub zeta: Option<Vec<f64>>,
    /// `‖y − H x̂₀(x_s)‖₂` at each step, indexed `s − 1`.
    pub residual_norms: Vec<f64>,
}

/// Empirical moments over many trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Mean of the output DFTs.
    pub emp_mean: Vec<Complex64>,
    /// Unbiased per-bin variance of the output DFTs, divided by `d` so it is
    /// comparable with covariance eigenvalues.
    pub emp_var: Vec<f64>,
    pub n_runs: usize,
    /// Realized DPS weights, `[s − 1][run]`.
    pub per_step_zeta: Option<Vec<Vec<f64>>>,
}

/// Per-step mean and std of realized heuristic weights, indexed `s − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepOps {
    a: f64,
    b: f64,
    /// Prior denoiser `x̂₀ = denoise·x + mean_term`.
    denoise: Circulant,
    mean_term: Vec<f64>,
    /// Maps the residual `y − H x̂₀` to the update direction, weight excluded.
    guide: Option<Circulant>,
    /// MAP denoiser `x̂₀ = map_x·x + map_y·y + map_mu`.
    map: Option<(Circulant, Circulant, Vec<f64>)>,
}

/// Precomputed operators for a configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    dft: Dft,
    h: Circulant,
    ops: Vec<StepOps>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        let d = cfg.prior.dim();
        check_len(d, cfg.spec.dim())?;
        if !cfg.spec.is_hermitian(1e-12) || !cfg.prior.is_hermitian(1e-9) {
            return Err(Error::InvalidArgument(
                "time-domain simulation needs a real operator and prior".into(),
            ));
        }
        let steps = cfg.schedule.len();
        match &cfg.guidance {
            Guidance::DpsFixed(z) => check_len(steps, z.len())?,
            Guidance::Pigdm { g, r } => {
                check_len(steps, g.len())?;
                check_len(steps, r.len())?;
            }
            Guidance::DpsHeuristic { zeta_prime, cap } => {
                if !(*zeta_prime >= 0.0 && cap.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "heuristic needs zeta' >= 0 and a finite cap, got {zeta_prime}, {cap}"
                    )));
                }
            }
            _ => {}
        }
        let dft = Dft::new(d);
        let sigma = cfg.prior.covariance();
        let mu = cfg.prior.time_mean();
        let h = cfg.spec.operator();
        let ht = h.adjoint();
        let s2 = cfg.spec.noise_var();
        let mut ops = Vec::with_capacity(steps);
        for s in 1..=steps {
            let (a, b) = step_coeffs_scalar(&cfg.schedule, s)?;
            let ab = cfg.schedule.alpha_bar(s);
            let shrink = sigma.affine(ab, 1.0 - ab).inverse().ok_or(Error::ZeroDenominator(s))?;
            let denoise = sigma.affine(ab.sqrt(), 0.0).compose(&shrink);
            let mean_term = shrink.affine(1.0 - ab, 0.0).apply(&dft, &mu);
            // Jacobian of the denoiser is `denoise`, symmetric for real priors.
            let jt_ht = denoise.adjoint().compose(&ht);
            let guide = match &cfg.guidance {
                Guidance::DpsFixed(_) | Guidance::DpsHeuristic { .. } => Some(jt_ht),
                Guidance::Pigdm { r, .. } => {
                    let rs = r[s - 1];
                    let cov = h.compose(&ht).affine(rs * rs, s2);
                    let inv = cov.inverse().ok_or(Error::ZeroDenominator(s))?;
                    Some(jt_ht.compose(&inv))
                }
                _ => None,
            };
            let map = if matches!(cfg.guidance, Guidance::Optimal) {
                let lhs = sigma
                    .affine(s2 * ab, s2 * (1.0 - ab))
                    .add(&sigma.compose(&ht).compose(&h).affine(1.0 - ab, 0.0));
                let inv = lhs.inverse().ok_or(Error::ZeroDenominator(s))?;
                let map_x = inv.compose(&sigma.affine(s2 * ab.sqrt(), 0.0));
                let map_y = inv.compose(&sigma.compose(&ht).affine(1.0 - ab, 0.0));
                let map_mu = inv.affine(s2 * (1.0 - ab), 0.0).apply(&dft, &mu);
                Some((map_x, map_y, map_mu))
            } else {
                None
            };
            ops.push(StepOps { a, b, denoise, mean_term, guide, map });
        }
        Ok(Self { cfg, dft, h, ops })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.prior.dim()
    }

    /// One update `x_s ↦ x_{s−1}` given the time-domain measurement `y`.
    /// Returns the new state, the DPS weight used (if any) and the residual norm.
    pub fn step(&self, s: usize, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Option<f64>, f64)> {
        let op = self
            .ops
            .get(s.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidArgument(format!("step {s} out of range")))?;
        let x0: Vec<f64> = match &op.map {
            Some((mx, my, mm)) => {
                let px = mx.apply(&self.dft, x);
                let py = my.apply(&self.dft, y);
                (0..x.len()).map(|i| px[i] + py[i] + mm[i]).collect()
            }
            None => op
                .denoise
                .apply(&self.dft, x)
                .into_iter()
                .zip(&op.mean_term)
                .map(|(v, m)| v + m)
                .collect(),
        };
        let hx0 = self.h.apply(&self.dft, &x0);
        let residual: Vec<f64> = y.iter().zip(&hx0).map(|(a, b)| a - b).collect();
        let res_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (weight, zeta) = match &self.cfg.guidance {
            Guidance::DpsFixed(z) => (2.0 * z[s - 1], Some(z[s - 1])),
            Guidance::DpsHeuristic { zeta_prime, cap } => {
                let z = heuristic_weight(*zeta_prime, res_norm, *cap);
                (2.0 * z, Some(z))
            }
            Guidance::Pigdm { g, .. } => (g[s - 1], None),
            _ => (0.0, None),
        };
        let mut next: Vec<f64> = x.iter().zip(&x0).map(|(xv, x0v)| op.a * xv + op.b * x0v).collect();
        if let Some(guide) = &op.guide {
            let dir = guide.apply(&self.dft, &residual);
            for (n, g) in next.iter_mut().zip(dir) {
                *n += weight * g;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(s));
        }
        Ok((next, zeta, res_norm))
    }

    /// Full trajectory from the starting state `x_S`.
    pub fn run(&self, obs: &Observation, x_start: &[f64]) -> Result<Trajectory> {
        check_len(self.dim(), obs.dim())?;
        let y = self.dft.inverse_real(&obs.y_f);
        self.run_time_domain(&y, x_start)
    }

    fn run_time_domain(&self, y: &[f64], x_start: &[f64]) -> Result<Trajectory> {
        check_len(self.dim(), x_start.len())?;
        let steps = self.ops.len();
        let mut x = x_start.to_vec();
        let mut zeta = Vec::new();
        let mut norms = vec![0.0; steps];
        for s in (1..=steps).rev() {
            let (next, z, n) = self.step(s, &x, y)?;
            x = next;
            norms[s - 1] = n;
            if let Some(z) = z {
                if zeta.is_empty() {
                    zeta = vec![0.0; steps];
                }
                zeta[s - 1] = z;
            }
        }
        Ok(Trajectory { x0: x, zeta: (!zeta.is_empty()).then_some(zeta), residual_norms: norms })
    }

    /// Empirical output moments over `n_runs` independent starts.
    pub fn monte_carlo(&self, obs: &Observation) -> Result<RunStats> {
        let starts = initial_noise(self.dim(), self.cfg.n_runs, self.cfg.seed);
        self.monte_carlo_from(obs, &starts)
    }

    /// Like [`Simulator::monte_carlo`] with caller-provided starting states,
    /// so several guidance settings can share the same noise.
    pub fn monte_carlo_from(&self, obs: &Observation, starts: &[Vec<f64>]) -> Result<RunStats> {
        if starts.len() < 2 {
            return Err(Error::TooFewSamples);
        }
        check_len(self.dim(), obs.dim())?;
        let y = self.dft.inverse_real(&obs.y_f);
        let runs: Vec<Trajectory> = starts
            .par_iter()
            .map(|x| self.run_time_domain(&y, x))
            .collect::<Result<_>>()?;
        let d = self.dim();
        let n = runs.len() as f64;
        let finals: Vec<Vec<Complex64>> = runs.iter().map(|t| self.dft.forward_real(&t.x0)).collect();
        let mut mean = vec![Complex64::new(0.0, 0.0); d];
        for f in &finals {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for f in &finals {
            for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
                *v += (x - m).norm_sqr();
            }
        }
        for v in var.iter_mut() {
            *v /= (n - 1.0) * d as f64;
        }
        let per_step_zeta = if runs[0].zeta.is_some() {
            let steps = self.ops.len();
            Some(
                (0..steps)
                    .map(|s| runs.iter().map(|t| t.zeta.as_ref().map_or(0.0, |z| z[s])).collect())
                    .collect(),
            )
        } else {
            None
        };
        Ok(RunStats { emp_mean: mean, emp_var: var, n_runs: runs.len(), per_step_zeta })
    }
}

/// `ζ′/‖r‖`, or `cap` when the residual norm is zero.
pub fn heuristic_weight(zeta_prime: f64, residual_norm: f64, cap: f64) -> f64 {
    if zeta_prime == 0.0 {
        0.0
    } else if residual_norm > 0.0 {
        zeta_prime / residual_norm
    } else {
        cap
    }
}

/// Heuristic weights implied by stored residual norms for another `ζ′`,
/// holding the trajectory fixed.
pub fn replay_heuristic_weights(residual_norms: &[f64], zeta_prime: f64, cap: f64) -> Vec<f64> {
    residual_norms.iter().map(|&n| heuristic_weight(zeta_prime, n, cap)).collect()
}

/// Standard-normal starting states, one independent stream per run.
pub fn initial_noise(d: usize, n_runs: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_runs)
        .map(|run| {
            let mut rng = run_rng(seed, run);
            (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect()
}

/// Generator for run `run` under `seed`.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Convenience wrapper: one trajectory of `cfg` from `x_start`.
pub fn simulate_one(cfg: &SimConfig, obs: &Observation, x_start: &[f64]) -> Result<Trajectory> {
    Simulator::new(cfg.clone())?.run(obs, x_start)
}

pub fn monte_carlo(cfg: &SimConfig, obs: &Observation) -> Result<RunStats> {
    Simulator::new(cfg.clone())?.monte_carlo(obs)
}

/// Mean and std over runs of the realized heuristic DPS weights.
pub fn heuristic_weight_profile(
    zeta_prime: f64,
    cap: f64,
    cfg: &SimConfig,
    obs: &Observation,
) -> Result<WeightProfile> {
    let cfg = SimConfig { guidance: Guidance::DpsHeuristic { zeta_prime, cap }, ..cfg.clone() };
    let stats = monte_carlo(&cfg, obs)?;
    let per_step = stats.per_step_zeta.expect("heuristic guidance records weights");
    let mut mean = Vec::with_capacity(per_step.len());
    let mut std = Vec::with_capacity(per_step.len());
    for runs in &per_step {
        let n = runs.len() as f64;
        let m = runs.iter().sum::<f64>() / n;
        let v = runs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(WeightProfile { mean, std })
}

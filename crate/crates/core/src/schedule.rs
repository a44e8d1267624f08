//! DDPM noise schedules, DDIM subsequences and per-step coefficients.

use crate::error::{Error, Result};
use crate::spectral::SpectralPrior;

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
pub const DEFAULT_T: usize = 1000;

/// Cumulative signal levels `ᾱ_s` in sampling-index order: `s = 1` is the
/// cleanest step, `s = S` the noisiest.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    alpha_bar: Vec<f64>,
    t_full: usize,
}

impl Schedule {
    pub fn new(alpha_bar: Vec<f64>, t_full: usize) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::InvalidArgument("schedule must be non-empty".into()));
        }
        if let Some(v) = alpha_bar.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!("alpha_bar {v} outside (0, 1]")));
        }
        if let Some(s) = alpha_bar.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "alpha_bar not strictly decreasing at s = {}",
                s + 1
            )));
        }
        Ok(Self { alpha_bar, t_full })
    }

    /// Number of sampling steps `S`.
    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    pub fn t_full(&self) -> usize {
        self.t_full
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `ᾱ_s` for `s` in `1..=S`.
    pub fn alpha_bar(&self, s: usize) -> f64 {
        self.alpha_bar[s - 1]
    }

    /// `ᾱ_{s−1}`, with `ᾱ₀ = 1` so the last step lands on the denoised estimate.
    pub fn alpha_bar_prev(&self, s: usize) -> f64 {
        if s == 1 {
            1.0
        } else {
            self.alpha_bar[s - 2]
        }
    }

    fn check_step(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.len() {
            return Err(Error::InvalidArgument(format!(
                "step {s} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Full linear-β DDPM schedule of length `t`.
pub fn linear_ddpm_schedule(t: usize) -> Result<Schedule> {
    if t == 0 {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    let mut alpha_bar = Vec::with_capacity(t);
    let mut acc = 1.0;
    for i in 0..t {
        let beta = if t == 1 {
            BETA_START
        } else {
            BETA_START + (BETA_END - BETA_START) * i as f64 / (t - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Schedule::new(alpha_bar, t)
}

/// Uniform subsequence of `s_count` steps: full-schedule indices
/// `round(k·T/S)` for `k = 1..=S` (halves round up), always ending at `T`.
pub fn ddim_subsequence(full: &Schedule, s_count: usize) -> Result<Schedule> {
    let t = full.len();
    if s_count == 0 || s_count > t {
        return Err(Error::InvalidArgument(format!(
            "subsequence length {s_count} outside 1..={t}"
        )));
    }
    let alpha_bar = subsequence_indices(t, s_count)
        .into_iter()
        .map(|i| full.alpha_bar(i))
        .collect();
    Schedule::new(alpha_bar, full.t_full())
}

/// 1-based full-schedule indices picked by [`ddim_subsequence`].
pub fn subsequence_indices(t: usize, s_count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=s_count)
        .map(|k| (2 * k * t + s_count) / (2 * s_count))
        .collect();
    idx.dedup();
    idx
}

/// Scalar DDIM coefficients `(a_s, b_s)` of `x_{s−1} = a_s x_s + b_s x̂₀`.
pub fn step_coeffs_scalar(sched: &Schedule, s: usize) -> Result<(f64, f64)> {
    sched.check_step(s)?;
    scalar_pair(sched.alpha_bar_prev(s), sched.alpha_bar(s), s)
}

fn scalar_pair(prev: f64, cur: f64, s: usize) -> Result<(f64, f64)> {
    if cur >= 1.0 {
        return Err(Error::DivisionByZeroNoise(s));
    }
    let a = ((1.0 - prev) / (1.0 - cur)).sqrt();
    let b = prev.sqrt() - cur.sqrt() * a;
    Ok((a, b))
}

/// Per-bin gains of the prior-optimal denoiser, `x̂₀ᶠ = c ⊙ x_sᶠ + d ⊙ μ₀ᶠ`.
pub fn denoiser_coeffs(alpha_bar: f64, lambda0: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidArgument(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    let sq = alpha_bar.sqrt();
    let mut c = Vec::with_capacity(lambda0.len());
    let mut d = Vec::with_capacity(lambda0.len());
    for (i, &lam) in lambda0.iter().enumerate() {
        let den = alpha_bar * lam + 1.0 - alpha_bar;
        if den <= 0.0 {
            return Err(Error::ZeroDenominator(i));
        }
        c.push(sq * lam / den);
        d.push((1.0 - alpha_bar) / den);
    }
    Ok((c, d))
}

/// Everything a single spectral step needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoeffs {
    /// `a_s`
    pub x_gain: f64,
    /// `b_s`
    pub denoised_gain: f64,
    /// `c_s`
    pub signal_gain: Vec<f64>,
    /// `d_s`
    pub mean_gain: Vec<f64>,
    /// `ᾱ_s`
    pub alpha_bar: f64,
}

pub fn step_coeffs(sched: &Schedule, s: usize, prior: &SpectralPrior) -> Result<StepCoeffs> {
    let (a, b) = step_coeffs_scalar(sched, s)?;
    let alpha_bar = sched.alpha_bar(s);
    let (c, d) = denoiser_coeffs(alpha_bar, prior.lambda0())?;
    Ok(StepCoeffs { x_gain: a, denoised_gain: b, signal_gain: c, mean_gain: d, alpha_bar })
}

/// Coefficients for every step, indexed `s − 1`.
pub fn all_step_coeffs(sched: &Schedule, prior: &SpectralPrior) -> Result<Vec<StepCoeffs>> {
    (1..=sched.len()).map(|s| step_coeffs(sched, s, prior)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_step_schedule() {
        let s = linear_ddpm_schedule(1).unwrap();
        assert!((s.alpha_bar(1) - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn full_schedule_reaches_pure_noise() {
        let s = linear_ddpm_schedule(1000).unwrap();
        assert!(s.alpha_bar(1000) < 1e-4);
        assert!(s.values().iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(linear_ddpm_schedule(0).is_err());
    }

    #[test]
    fn subsequence_stride() {
        assert_eq!(subsequence_indices(1000, 5), vec![200, 400, 600, 800, 1000]);
        let full = linear_ddpm_schedule(1000).unwrap();
        assert_eq!(ddim_subsequence(&full, 1000).unwrap(), full);
        let sub = ddim_subsequence(&full, 7).unwrap();
        assert_eq!(sub.alpha_bar(7), full.alpha_bar(1000));
        assert_eq!(sub.t_full(), 1000);
        assert!(ddim_subsequence(&full, 1001).is_err());
        assert!(ddim_subsequence(&full, 0).is_err());
    }

    #[test]
    fn scalar_coefficients() {
        let (a, b) = scalar_pair(0.5, 0.5, 2).unwrap();
        assert_eq!((a, b), (1.0, 0.0));
        let (a, b) = scalar_pair(0.9, 0.5, 2).unwrap();
        assert!((a - 0.2f64.sqrt()).abs() < 1e-15);
        assert!((b - (0.9f64.sqrt() - 0.5f64.sqrt() * 0.2f64.sqrt())).abs() < 1e-15);
        assert!((b - 0.632_455_532).abs() < 1e-9);
        assert_eq!(scalar_pair(0.9, 1.0, 3), Err(Error::DivisionByZeroNoise(3)));

        let sched = Schedule::new(vec![0.8, 0.3], 2).unwrap();
        let (a, b) = step_coeffs_scalar(&sched, 1).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(b, 1.0);
        assert!(step_coeffs_scalar(&sched, 3).is_err());
    }

    #[test]
    fn denoiser_examples() {
        let (c, d) = denoiser_coeffs(1.0, &[1.0]).unwrap();
        assert_eq!((c[0], d[0]), (1.0, 0.0));
        let (c, d) = denoiser_coeffs(0.4, &[0.0]).unwrap();
        assert_eq!((c[0], d[0]), (0.0, 1.0));
        let (c, d) = denoiser_coeffs(0.5, &[2.0]).unwrap();
        assert!((c[0] - 0.5f64.sqrt() * 2.0 / 1.5).abs() < 1e-15);
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(denoiser_coeffs(1.0, &[1.0, 0.0]), Err(Error::ZeroDenominator(1)));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(Schedule::new(vec![0.5, 0.5], 2).is_err());
        assert!(Schedule::new(vec![0.5, 0.6], 2).is_err());
        assert!(Schedule::new(vec![1.2], 1).is_err());
        assert!(Schedule::new(vec![], 1).is_err());
    }

    proptest! {
        #[test]
        fn subsequence_strictly_decreasing(t in 1usize..1500, frac in 0.0f64..1.0) {
            let s = 1 + ((t - 1) as f64 * frac) as usize;
            let full = linear_ddpm_schedule(t).unwrap();
            let sub = ddim_subsequence(&full, s).unwrap();
            prop_assert_eq!(sub.len(), s);
            prop_assert!(sub.values().windows(2).all(|w| w[1] < w[0]));
            prop_assert_eq!(sub.alpha_bar(s), full.alpha_bar(t));
        }

        #[test]
        fn denoiser_identities(ab in 0.0f64..1.0, lam in 0.0f64..50.0) {
            let (c, d) = denoiser_coeffs(ab, &[lam]).unwrap();
            let den = ab * lam + 1.0 - ab;
            prop_assert!((den * c[0] - ab.sqrt() * lam).abs() <= 1e-14 * (1.0 + lam));
            prop_assert!((den * d[0] - (1.0 - ab)).abs() <= 1e-14);
        }
    }
}

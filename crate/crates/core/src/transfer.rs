//! Per-frequency transfer functions of guided DDIM samplers.
//!
//! One deterministic step maps `x_sᶠ ↦ G·x_sᶠ + Q·yᶠ + M·μ₀ᶠ` bin by bin.
//! Composing all steps gives the output as `D1·x_Sᶠ + D2·yᶠ + D3·μ₀ᶠ`.

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::schedule::StepCoeffs;
use crate::spectral::{DegradationSpec, DiagGaussian, Observation, SpectralPrior};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Dps,
    Pigdm,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Dps => "dps",
            SamplerKind::Pigdm => "pigdm",
        }
    }
}

/// Guidance weights, indexed by `s − 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSchedule {
    /// DPS step sizes `ζ_s`.
    Dps { zeta: Vec<f64> },
    /// ΠGDM gains `g_s` and likelihood std `r_s`.
    Pigdm { g: Vec<f64>, r: Vec<f64> },
}

impl WeightSchedule {
    pub fn dps(zeta: Vec<f64>) -> Self {
        WeightSchedule::Dps { zeta }
    }

    pub fn pigdm(g: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        check_len(g.len(), r.len())?;
        if let Some(v) = r.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("r = {v} must be >= 0")));
        }
        Ok(WeightSchedule::Pigdm { g, r })
    }

    pub fn kind(&self) -> SamplerKind {
        match self {
            WeightSchedule::Dps { .. } => SamplerKind::Dps,
            WeightSchedule::Pigdm { .. } => SamplerKind::Pigdm,
        }
    }

    /// Number of steps `S`.
    pub fn len(&self) -> usize {
        match self {
            WeightSchedule::Dps { zeta } => zeta.len(),
            WeightSchedule::Pigdm { g, .. } => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter vector: `ζ`, or `g` followed by `r`.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            WeightSchedule::Dps { zeta } => zeta.clone(),
            WeightSchedule::Pigdm { g, r } => g.iter().chain(r).copied().collect(),
        }
    }

    pub fn from_flat(kind: SamplerKind, theta: &[f64]) -> Result<Self> {
        match kind {
            SamplerKind::Dps => Ok(Self::dps(theta.to_vec())),
            SamplerKind::Pigdm => {
                if theta.len() % 2 != 0 {
                    return Err(Error::InvalidArgument(
                        "pigdm parameter vector must have even length".into(),
                    ));
                }
                let (g, r) = theta.split_at(theta.len() / 2);
                Self::pigdm(g.to_vec(), r.to_vec())
            }
        }
    }

    /// Number of free parameters per step.
    pub fn params_per_step(kind: SamplerKind) -> usize {
        match kind {
            SamplerKind::Dps => 1,
            SamplerKind::Pigdm => 2,
        }
    }

    /// Constant DPS weights.
    pub fn dps_constant(steps: usize, zeta: f64) -> Self {
        Self::dps(vec![zeta; steps])
    }

    /// ΠGDM with `g_s = 1`, `r_s = √(1 − ᾱ_s)`.
    pub fn pigdm_heuristic(alpha_bar: &[f64]) -> Self {
        WeightSchedule::Pigdm {
            g: vec![1.0; alpha_bar.len()],
            r: alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect(),
        }
    }

    /// ΠGDM weights that reproduce a DPS schedule exactly: `r = 0`, `g = 2ζσ²`.
    pub fn pigdm_from_dps(zeta: &[f64], sigma_y: f64) -> Self {
        WeightSchedule::Pigdm {
            g: zeta.iter().map(|z| 2.0 * z * sigma_y * sigma_y).collect(),
            r: vec![0.0; zeta.len()],
        }
    }
}

/// One step's per-bin multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTransfer {
    /// `G`, applied to the current state.
    pub state: Vec<Complex64>,
    /// `Q`, applied to the measurement.
    pub measurement: Vec<Complex64>,
    /// `M`, applied to the prior mean.
    pub prior_mean: Vec<Complex64>,
}

impl StepTransfer {
    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn apply(&self, x_f: &[Complex64], y_f: &[Complex64], mu_f: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|i| self.state[i] * x_f[i] + self.measurement[i] * y_f[i] + self.prior_mean[i] * mu_f[i])
            .collect()
    }
}

/// Composed output map.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTriple {
    /// `D1`, applied to the initial noise `x_Sᶠ`.
    pub noise: Vec<Complex64>,
    /// `D2`, applied to `yᶠ`.
    pub measurement: Vec<Complex64>,
    /// `D3`, applied to `μ₀ᶠ`.
    pub prior_mean: Vec<Complex64>,
}

impl TransferTriple {
    pub fn dim(&self) -> usize {
        self.noise.len()
    }

    pub fn apply(&self, x_f: &[Complex64], y_f: &[Complex64], mu_f: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|i| self.noise[i] * x_f[i] + self.measurement[i] * y_f[i] + self.prior_mean[i] * mu_f[i])
            .collect()
    }
}

/// Scalar `(G, Q, M)` of a single bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BinStep {
    pub g: Complex64,
    pub q: Complex64,
    pub m: Complex64,
}

impl BinStep {
    pub(crate) const IDENTITY: BinStep = BinStep { g: ONE, q: ZERO, m: ZERO };
}

pub(crate) fn dps_bin(a: f64, b: f64, c: f64, d: f64, h: Complex64, zeta: f64) -> BinStep {
    let h2 = h.norm_sqr();
    BinStep {
        g: Complex64::new(a + b * c - 2.0 * zeta * c * c * h2, 0.0),
        q: h.conj() * (2.0 * zeta * c),
        m: Complex64::new(b * d - 2.0 * zeta * c * h2 * d, 0.0),
    }
}

/// `e = 1/(r²|h|² + σ²)` or `None` when the denominator vanishes.
pub(crate) fn pigdm_e(h: Complex64, r: f64, noise_var: f64) -> Option<f64> {
    let den = r * r * h.norm_sqr() + noise_var;
    (den > 0.0).then(|| 1.0 / den)
}

pub(crate) fn pigdm_bin(a: f64, b: f64, c: f64, d: f64, h: Complex64, g: f64, e: f64) -> BinStep {
    let h2 = h.norm_sqr();
    BinStep {
        g: Complex64::new(a + b * c - g * c * c * h2 * e, 0.0),
        q: h.conj() * (g * c * e),
        m: Complex64::new(b * d - g * c * h2 * e * d, 0.0),
    }
}

pub(crate) fn optimal_bin(
    a: f64,
    b: f64,
    alpha_bar: f64,
    lam: f64,
    h: Complex64,
    noise_var: f64,
) -> Option<BinStep> {
    let lam_sum = (1.0 - alpha_bar) * lam * h.norm_sqr()
        + noise_var * alpha_bar * lam
        + noise_var * (1.0 - alpha_bar);
    if lam_sum <= 0.0 {
        return None;
    }
    Some(BinStep {
        g: Complex64::new(a + b * noise_var * alpha_bar.sqrt() * lam / lam_sum, 0.0),
        q: h.conj() * (b * (1.0 - alpha_bar) * lam / lam_sum),
        m: Complex64::new(b * noise_var * (1.0 - alpha_bar) / lam_sum, 0.0),
    })
}

fn collect_step(d: usize, mut f: impl FnMut(usize) -> Result<BinStep>) -> Result<StepTransfer> {
    let mut out = StepTransfer {
        state: Vec::with_capacity(d),
        measurement: Vec::with_capacity(d),
        prior_mean: Vec::with_capacity(d),
    };
    for i in 0..d {
        let b = f(i)?;
        out.state.push(b.g);
        out.measurement.push(b.q);
        out.prior_mean.push(b.m);
    }
    Ok(out)
}

fn check_coeffs(coeffs: &StepCoeffs, spec: &DegradationSpec) -> Result<()> {
    check_len(spec.dim(), coeffs.signal_gain.len())?;
    check_len(spec.dim(), coeffs.mean_gain.len())
}

/// Prior-only DDIM step (no guidance).
pub fn prior_step_transfer(coeffs: &StepCoeffs) -> StepTransfer {
    let (a, b) = (coeffs.x_gain, coeffs.denoised_gain);
    collect_step(coeffs.signal_gain.len(), |i| {
        Ok(BinStep {
            g: Complex64::new(a + b * coeffs.signal_gain[i], 0.0),
            q: ZERO,
            m: Complex64::new(b * coeffs.mean_gain[i], 0.0),
        })
    })
    .expect("infallible")
}

pub fn dps_step_transfer(coeffs: &StepCoeffs, spec: &DegradationSpec, zeta: f64) -> Result<StepTransfer> {
    check_coeffs(coeffs, spec)?;
    collect_step(spec.dim(), |i| {
        Ok(dps_bin(
            coeffs.x_gain,
            coeffs.denoised_gain,
            coeffs.signal_gain[i],
            coeffs.mean_gain[i],
            spec.lambda_h()[i],
            zeta,
        ))
    })
}

pub fn pigdm_step_transfer(
    coeffs: &StepCoeffs,
    spec: &DegradationSpec,
    g: f64,
    r: f64,
) -> Result<StepTransfer> {
    check_coeffs(coeffs, spec)?;
    collect_step(spec.dim(), |i| {
        let h = spec.lambda_h()[i];
        let e = pigdm_e(h, r, spec.noise_var()).ok_or(Error::ZeroDenominator(i))?;
        Ok(pigdm_bin(
            coeffs.x_gain,
            coeffs.denoised_gain,
            coeffs.signal_gain[i],
            coeffs.mean_gain[i],
            h,
            g,
            e,
        ))
    })
}

/// Step driven by the posterior-optimal (MAP) denoiser.
pub fn optimal_step_transfer(
    coeffs: &StepCoeffs,
    spec: &DegradationSpec,
    prior: &SpectralPrior,
) -> Result<StepTransfer> {
    check_coeffs(coeffs, spec)?;
    check_len(spec.dim(), prior.dim())?;
    collect_step(spec.dim(), |i| {
        optimal_bin(
            coeffs.x_gain,
            coeffs.denoised_gain,
            coeffs.alpha_bar,
            prior.lambda0()[i],
            spec.lambda_h()[i],
            spec.noise_var(),
        )
        .ok_or(Error::ZeroDenominator(i))
    })
}

/// Compose steps given in application order (first element is step `s = S`).
pub fn compose_transfer(steps: &[StepTransfer]) -> Result<TransferTriple> {
    let first = steps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no steps to compose".into()))?;
    let d = first.dim();
    let mut p = vec![ONE; d];
    let mut q = vec![ZERO; d];
    let mut m = vec![ZERO; d];
    for step in steps {
        check_len(d, step.dim())?;
        for i in 0..d {
            let g = step.state[i];
            p[i] *= g;
            q[i] = g * q[i] + step.measurement[i];
            m[i] = g * m[i] + step.prior_mean[i];
        }
    }
    Ok(TransferTriple { noise: p, measurement: q, prior_mean: m })
}

/// Per-step transfers of a weighted sampler, in application order.
pub fn weighted_steps(
    coeffs: &[StepCoeffs],
    spec: &DegradationSpec,
    weights: &WeightSchedule,
) -> Result<Vec<StepTransfer>> {
    check_len(coeffs.len(), weights.len())?;
    let mut steps = Vec::with_capacity(coeffs.len());
    for s in (1..=coeffs.len()).rev() {
        let c = &coeffs[s - 1];
        steps.push(match weights {
            WeightSchedule::Dps { zeta } => dps_step_transfer(c, spec, zeta[s - 1])?,
            WeightSchedule::Pigdm { g, r } => pigdm_step_transfer(c, spec, g[s - 1], r[s - 1])?,
        });
    }
    Ok(steps)
}

pub fn weighted_triple(
    coeffs: &[StepCoeffs],
    spec: &DegradationSpec,
    weights: &WeightSchedule,
) -> Result<TransferTriple> {
    compose_transfer(&weighted_steps(coeffs, spec, weights)?)
}

pub fn ideal_steps(
    coeffs: &[StepCoeffs],
    spec: &DegradationSpec,
    prior: &SpectralPrior,
) -> Result<Vec<StepTransfer>> {
    coeffs.iter().rev().map(|c| optimal_step_transfer(c, spec, prior)).collect()
}

/// Composed transfer of the DDIM sampler driven by the MAP denoiser.
pub fn ideal_triple(
    coeffs: &[StepCoeffs],
    spec: &DegradationSpec,
    prior: &SpectralPrior,
) -> Result<TransferTriple> {
    compose_transfer(&ideal_steps(coeffs, spec, prior)?)
}

pub fn prior_triple(coeffs: &[StepCoeffs]) -> Result<TransferTriple> {
    let steps: Vec<_> = coeffs.iter().rev().map(prior_step_transfer).collect();
    compose_transfer(&steps)
}

/// Output law of the sampler: `N(D2·yᶠ + D3·μ₀ᶠ, |D1|²)`.
pub fn output_distribution(
    triple: &TransferTriple,
    obs: &Observation,
    prior: &SpectralPrior,
) -> Result<DiagGaussian> {
    let d = triple.dim();
    check_len(d, obs.dim())?;
    check_len(d, prior.dim())?;
    let mean = (0..d)
        .map(|i| triple.measurement[i] * obs.y_f[i] + triple.prior_mean[i] * prior.mu_f()[i])
        .collect();
    let var = triple.noise.iter().map(|v| v.norm_sqr()).collect();
    DiagGaussian::new(mean, var)
}

/// MMSE denoiser under the prior alone, applied to a noisy spectrum at level `ᾱ`.
pub fn prior_optimal_denoise(
    prior: &SpectralPrior,
    x_t_f: &[Complex64],
    alpha_bar: f64,
) -> Result<Vec<Complex64>> {
    check_len(prior.dim(), x_t_f.len())?;
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidArgument(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    if alpha_bar == 1.0 {
        return Ok(x_t_f.to_vec());
    }
    let sq = alpha_bar.sqrt();
    Ok((0..prior.dim())
        .map(|i| {
            let lam = prior.lambda0()[i];
            let den = alpha_bar * lam + 1.0 - alpha_bar;
            if den <= 0.0 {
                x_t_f[i]
            } else {
                (x_t_f[i] * (sq * lam) + prior.mu_f()[i] * (1.0 - alpha_bar)) / den
            }
        })
        .collect())
}

/// MAP estimate of `x₀ᶠ` given both the noisy state and the measurement.
pub fn posterior_optimal_denoise(
    prior: &SpectralPrior,
    spec: &DegradationSpec,
    y_f: &[Complex64],
    x_t_f: &[Complex64],
    alpha_bar: f64,
) -> Result<Vec<Complex64>> {
    let d = prior.dim();
    check_len(d, spec.dim())?;
    check_len(d, y_f.len())?;
    check_len(d, x_t_f.len())?;
    let s2 = spec.noise_var();
    let sq = alpha_bar.sqrt();
    (0..d)
        .map(|i| {
            let lam = prior.lambda0()[i];
            let h = spec.lambda_h()[i];
            let den = (1.0 - alpha_bar) * lam * h.norm_sqr()
                + s2 * alpha_bar * lam
                + s2 * (1.0 - alpha_bar);
            if den <= 0.0 {
                return Err(Error::ZeroDenominator(i));
            }
            Ok((h.conj() * y_f[i] * ((1.0 - alpha_bar) * lam)
                + x_t_f[i] * (s2 * sq * lam)
                + prior.mu_f()[i] * (s2 * (1.0 - alpha_bar)))
                / den)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{all_step_coeffs, ddim_subsequence, linear_ddpm_schedule, step_coeffs};
    use crate::spectral::make_synthetic_prior;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar_step(g: f64, q: f64, m: f64) -> StepTransfer {
        StepTransfer { state: vec![c(g)], measurement: vec![c(q)], prior_mean: vec![c(m)] }
    }

    #[test]
    fn two_step_composition_pins_order() {
        // Application order: s = 2 (G = 3) first, then s = 1 (G = 2).
        let t = compose_transfer(&[scalar_step(3.0, 1.0, 0.0), scalar_step(2.0, 1.0, 0.0)]).unwrap();
        assert_eq!(t.noise[0], c(6.0));
        assert_eq!(t.measurement[0], c(3.0));
        assert_eq!(t.prior_mean[0], c(0.0));
    }

    #[test]
    fn single_step_composition_is_identity() {
        let step = StepTransfer {
            state: vec![Complex64::new(0.3, 0.1)],
            measurement: vec![Complex64::new(-1.0, 2.0)],
            prior_mean: vec![c(0.7)],
        };
        let t = compose_transfer(std::slice::from_ref(&step)).unwrap();
        assert_eq!(t.noise, step.state);
        assert_eq!(t.measurement, step.measurement);
        assert_eq!(t.prior_mean, step.prior_mean);
        assert!(compose_transfer(&[]).is_err());
    }

    #[test]
    fn guidance_off_variants_agree() {
        let prior = make_synthetic_prior(6, 0.2, 0.1).unwrap();
        let spec = crate::spectral::make_lpf(6, 0.5).unwrap().with_sigma_y(0.2).unwrap();
        let sched = ddim_subsequence(&linear_ddpm_schedule(100).unwrap(), 9).unwrap();
        let coeffs = all_step_coeffs(&sched, &prior).unwrap();
        let base = prior_triple(&coeffs).unwrap();
        let dps = weighted_triple(&coeffs, &spec, &WeightSchedule::dps_constant(9, 0.0)).unwrap();
        let pig = weighted_triple(
            &coeffs,
            &spec,
            &WeightSchedule::pigdm(vec![0.0; 9], vec![0.5; 9]).unwrap(),
        )
        .unwrap();
        for t in [&dps, &pig] {
            for i in 0..6 {
                assert!((t.noise[i] - base.noise[i]).norm() <= 1e-14);
                assert!((t.prior_mean[i] - base.prior_mean[i]).norm() <= 1e-14);
                assert_eq!(t.measurement[i], c(0.0));
            }
        }
    }

    #[test]
    fn dead_bin_has_no_guidance() {
        let prior = make_synthetic_prior(4, 0.3, 0.0).unwrap();
        let spec = DegradationSpec::new(vec![c(1.0), c(0.0), c(0.5), c(0.0)], 0.1).unwrap();
        let sched = Schedule::new(vec![0.9, 0.4], 10).unwrap();
        let k = step_coeffs(&sched, 2, &prior).unwrap();
        let step = dps_step_transfer(&k, &spec, 0.7).unwrap();
        let off = prior_step_transfer(&k);
        assert_eq!(step.measurement[1], c(0.0));
        assert_eq!(step.state[1], off.state[1]);
        assert_eq!(step.prior_mean[1], off.prior_mean[1]);
    }

    use crate::schedule::Schedule;

    #[test]
    fn optimal_step_limits() {
        let prior = make_synthetic_prior(5, 0.4, 0.2).unwrap();
        let sched = Schedule::new(vec![0.95, 0.6, 0.2], 10).unwrap();
        let k = step_coeffs(&sched, 3, &prior).unwrap();
        let loud = DegradationSpec::identity(5, 1e6).unwrap();
        let opt = optimal_step_transfer(&k, &loud, &prior).unwrap();
        let off = prior_step_transfer(&k);
        for i in 0..5 {
            assert!((opt.state[i] - off.state[i]).norm() <= 1e-6 * off.state[i].norm().max(1e-300));
            assert!((opt.prior_mean[i] - off.prior_mean[i]).norm() <= 1e-6 * off.prior_mean[i].norm().max(1.0));
        }

        let k = StepCoeffs {
            x_gain: 0.2,
            denoised_gain: 0.7,
            signal_gain: vec![1.0; 5],
            mean_gain: vec![0.0; 5],
            alpha_bar: 1.0,
        };
        let spec = DegradationSpec::identity(5, 0.3).unwrap();
        let opt = optimal_step_transfer(&k, &spec, &prior).unwrap();
        for i in 0..5 {
            if prior.lambda0()[i] > 0.0 {
                assert!((opt.state[i] - c(0.9)).norm() < 1e-15);
                assert_eq!(opt.measurement[i], c(0.0));
                assert_eq!(opt.prior_mean[i], c(0.0));
            }
        }
    }

    #[test]
    fn pigdm_rejects_zero_denominator() {
        let prior = make_synthetic_prior(4, 0.3, 0.0).unwrap();
        let sched = Schedule::new(vec![0.9, 0.4], 10).unwrap();
        let k = step_coeffs(&sched, 2, &prior).unwrap();
        let spec = DegradationSpec::identity(4, 0.0).unwrap();
        assert_eq!(pigdm_step_transfer(&k, &spec, 1.0, 0.0), Err(Error::ZeroDenominator(0)));
        assert!(pigdm_step_transfer(&k, &spec, 1.0, 0.5).is_ok());
    }

    #[test]
    fn pigdm_reduces_to_dps() {
        let prior = make_synthetic_prior(6, 0.2, 0.3).unwrap();
        let spec = crate::spectral::make_lpf(6, 0.5).unwrap().with_sigma_y(0.1).unwrap();
        let sched = ddim_subsequence(&linear_ddpm_schedule(1000).unwrap(), 12).unwrap();
        let coeffs = all_step_coeffs(&sched, &prior).unwrap();
        let zeta: Vec<f64> = (0..12).map(|i| 0.05 * i as f64 - 0.2).collect();
        let a = weighted_triple(&coeffs, &spec, &WeightSchedule::dps(zeta.clone())).unwrap();
        let b = weighted_triple(&coeffs, &spec, &WeightSchedule::pigdm_from_dps(&zeta, 0.1)).unwrap();
        for i in 0..6 {
            assert!((a.noise[i] - b.noise[i]).norm() < 1e-12);
            assert!((a.measurement[i] - b.measurement[i]).norm() < 1e-12);
            assert!((a.prior_mean[i] - b.prior_mean[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn denoiser_limits() {
        let prior = make_synthetic_prior(6, 0.2, 0.3).unwrap();
        let x: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let out = prior_optimal_denoise(&prior, &x, 1.0).unwrap();
        assert_eq!(out, x);
        let out = prior_optimal_denoise(&prior, &x, 0.0).unwrap();
        assert_eq!(out, prior.mu_f());

        let spec = DegradationSpec::identity(6, 0.5).unwrap();
        let y = vec![c(1.0); 6];
        let out = posterior_optimal_denoise(&prior, &spec, &y, &x, 1.0).unwrap();
        for i in 0..6 {
            if prior.lambda0()[i] > 0.0 {
                assert!((out[i] - x[i]).norm() < 1e-12);
            }
        }

        let loud = DegradationSpec::identity(6, 1e6).unwrap();
        let a = posterior_optimal_denoise(&prior, &loud, &y, &x, 0.4).unwrap();
        let b = prior_optimal_denoise(&prior, &x, 0.4).unwrap();
        for i in 0..6 {
            assert!((a[i] - b[i]).norm() <= 1e-6 * b[i].norm().max(1e-12));
        }
    }

    #[test]
    fn output_distribution_identity_mask() {
        let prior = make_synthetic_prior(3, 0.2, 0.3).unwrap();
        let t = TransferTriple {
            noise: vec![c(0.0); 3],
            measurement: vec![c(1.0); 3],
            prior_mean: vec![c(0.0); 3],
        };
        let obs = Observation::new(vec![Complex64::new(1.0, 2.0), c(-1.0), c(3.0)]);
        let out = output_distribution(&t, &obs, &prior).unwrap();
        assert_eq!(out.mean, obs.y_f);
        assert!(out.var.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weight_schedule_flat_round_trip() {
        let w = WeightSchedule::pigdm(vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        assert_eq!(w.to_flat(), vec![1.0, 2.0, 0.1, 0.2]);
        assert_eq!(WeightSchedule::from_flat(SamplerKind::Pigdm, &w.to_flat()).unwrap(), w);
        assert!(WeightSchedule::pigdm(vec![1.0], vec![-0.1]).is_err());
        assert!(WeightSchedule::from_flat(SamplerKind::Pigdm, &[1.0]).is_err());
    }
}

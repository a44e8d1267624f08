//! Wasserstein-2 losses between sampler outputs and the exact posterior.

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::schedule::{all_step_coeffs, Schedule, StepCoeffs};
use crate::spectral::{true_posterior, DegradationSpec, DiagGaussian, Observation, SpectralPrior};
use crate::transfer::{
    dps_bin, ideal_triple, pigdm_bin, pigdm_e, BinStep, SamplerKind, TransferTriple,
    WeightSchedule,
};

/// W2 distance between two Gaussians with independent spectral bins.
///
/// Means are unnormalized DFTs, so the mean term is divided by the transform
/// length; the result is the distance between the time-domain laws.
pub fn w2_diag(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_len(p.dim(), q.dim())?;
    if p.transform_len != q.transform_len {
        return Err(Error::InvalidArgument(format!(
            "transform lengths differ: {} vs {}",
            p.transform_len, q.transform_len
        )));
    }
    let mean: f64 = p.mean.iter().zip(&q.mean).map(|(a, b)| (a - b).norm_sqr()).sum();
    let std: f64 = p
        .var
        .iter()
        .zip(&q.var)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok((mean / p.transform_len as f64 + std).sqrt())
}

/// Wiener filter `A = λ·conj(h) / (λ|h|² + σ²)` per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerGain {
    pub gain: Vec<Complex64>,
}

pub fn wiener_gain(prior: &SpectralPrior, spec: &DegradationSpec) -> Result<WienerGain> {
    check_len(prior.dim(), spec.dim())?;
    let gain = (0..prior.dim())
        .map(|i| {
            let lam = prior.lambda0()[i];
            let h = spec.lambda_h()[i];
            let den = lam * h.norm_sqr() + spec.noise_var();
            if den <= 0.0 {
                return Err(Error::DegeneratePosteriorBin(i));
            }
            Ok(h.conj() * lam / den)
        })
        .collect::<Result<_>>()?;
    Ok(WienerGain { gain })
}

/// Spectrum the sampler's per-bin std is matched against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceTarget {
    /// Eigenvalues of the exact posterior covariance.
    #[default]
    Posterior,
    /// Prior eigenvalues `λ₀`.
    Prior,
}

/// Everything needed to score a weight schedule.
///
/// With observations the loss is the average realization loss over them;
/// without, it is the closed-form expectation over measurements.
#[derive(Debug, Clone)]
pub struct LossContext {
    prior: SpectralPrior,
    spec: DegradationSpec,
    schedule: Schedule,
    kind: SamplerKind,
    observations: Vec<Observation>,
    target: VarianceTarget,
    transform_len: usize,
    offset: f64,
    coeffs: Vec<StepCoeffs>,
    gain: Vec<Complex64>,
    target_std: Vec<f64>,
    meas_power: Vec<f64>,
    true_means: Vec<Vec<Complex64>>,
}

impl LossContext {
    /// Loss averaged over the given realizations (`K ≥ 1`).
    pub fn realizations(
        prior: SpectralPrior,
        spec: DegradationSpec,
        schedule: Schedule,
        kind: SamplerKind,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidArgument("need at least one observation".into()));
        }
        Self::build(prior, spec, schedule, kind, observations)
    }

    /// Closed-form loss averaged over the measurement distribution.
    pub fn analytic(
        prior: SpectralPrior,
        spec: DegradationSpec,
        schedule: Schedule,
        kind: SamplerKind,
    ) -> Result<Self> {
        Self::build(prior, spec, schedule, kind, Vec::new())
    }

    fn build(
        prior: SpectralPrior,
        spec: DegradationSpec,
        schedule: Schedule,
        kind: SamplerKind,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let d = prior.dim();
        check_len(d, spec.dim())?;
        for o in &observations {
            check_len(d, o.dim())?;
        }
        let coeffs = all_step_coeffs(&schedule, &prior)?;
        let mut ctx = Self {
            prior,
            spec,
            schedule,
            kind,
            observations,
            target: VarianceTarget::Posterior,
            transform_len: d,
            offset: 0.0,
            coeffs,
            gain: Vec::new(),
            target_std: Vec::new(),
            meas_power: Vec::new(),
            true_means: Vec::new(),
        };
        ctx.refresh()?;
        Ok(ctx)
    }

    fn refresh(&mut self) -> Result<()> {
        let d = self.prior.dim();
        let s2 = self.spec.noise_var();
        self.gain = (0..d)
            .map(|i| {
                let lam = self.prior.lambda0()[i];
                let h = self.spec.lambda_h()[i];
                let den = lam * h.norm_sqr() + s2;
                // Zero-information bins keep the prior mean.
                if den > 0.0 {
                    h.conj() * lam / den
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        self.meas_power = (0..d)
            .map(|i| self.prior.lambda0()[i] * self.spec.lambda_h()[i].norm_sqr() + s2)
            .collect();
        let post_var: Vec<f64> = (0..d)
            .map(|i| {
                let lam = self.prior.lambda0()[i];
                let ah = self.gain[i] * self.spec.lambda_h()[i];
                (lam * (1.0 - ah.re)).max(0.0)
            })
            .collect();
        self.target_std = match self.target {
            VarianceTarget::Posterior => post_var.iter().map(|v| v.sqrt()).collect(),
            VarianceTarget::Prior => self.prior.lambda0().iter().map(|v| v.sqrt()).collect(),
        };
        self.true_means = self
            .observations
            .iter()
            .map(|o| {
                (0..d)
                    .map(|i| {
                        let mu = self.prior.mu_f()[i];
                        mu + self.gain[i] * (o.y_f[i] - self.spec.lambda_h()[i] * mu)
                    })
                    .collect()
            })
            .collect();
        Ok(())
    }

    pub fn with_variance_target(mut self, target: VarianceTarget) -> Result<Self> {
        self.target = target;
        self.refresh()?;
        Ok(self)
    }

    /// Same problem under another step schedule. Reductions made with
    /// [`LossContext::restrict`] are kept.
    pub fn with_schedule(&self, schedule: Schedule) -> Result<Self> {
        let coeffs = all_step_coeffs(&schedule, &self.prior)?;
        Ok(Self { schedule, coeffs, ..self.clone() })
    }

    pub fn with_sampler_kind(mut self, kind: SamplerKind) -> Self {
        self.kind = kind;
        self
    }

    /// Length of the DFT the spectral means came from. Differs from the bin
    /// count after [`LossContext::restrict`].
    pub fn transform_len(&self) -> usize {
        self.transform_len
    }

    /// Constant added to every loss (dropped bins in exact reporting mode).
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn prior(&self) -> &SpectralPrior {
        &self.prior
    }

    pub fn spec(&self) -> &DegradationSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn coeffs(&self) -> &[StepCoeffs] {
        &self.coeffs
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn variance_target(&self) -> VarianceTarget {
        self.target
    }

    pub fn is_analytic(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.schedule.len()
    }

    pub fn num_params(&self) -> usize {
        self.steps() * WeightSchedule::params_per_step(self.kind)
    }

    /// Restrict to the bins in `bins`, keeping the original transform
    /// length. With `report_exact`, dropped bins add the loss of a sampler
    /// that returns the prior mean there.
    pub fn restrict(&self, bins: &[usize], report_exact: bool) -> Result<Self> {
        let d = self.prior.dim();
        if bins.is_empty() || bins.iter().any(|&i| i >= d) {
            return Err(Error::InvalidArgument("bin selection out of range".into()));
        }
        let mut offset = self.offset;
        if report_exact {
            let kept: std::collections::HashSet<usize> = bins.iter().copied().collect();
            let dropped: Vec<usize> = (0..d).filter(|i| !kept.contains(i)).collect();
            let prior_only = BinD { d1: ZERO, d2: ZERO, d3: ONE };
            offset += dropped.iter().map(|&i| self.bin_value(i, &prior_only)).sum::<f64>();
        }
        let prior = self.prior.select_bins(bins);
        let coeffs = all_step_coeffs(&self.schedule, &prior)?;
        let mut out = Self {
            prior,
            spec: self.spec.select_bins(bins),
            schedule: self.schedule.clone(),
            kind: self.kind,
            observations: self
                .observations
                .iter()
                .map(|o| Observation {
                    y_f: bins.iter().map(|&i| o.y_f[i]).collect(),
                    ground_truth_f: o
                        .ground_truth_f
                        .as_ref()
                        .map(|g| bins.iter().map(|&i| g[i]).collect()),
                })
                .collect(),
            target: self.target,
            transform_len: self.transform_len,
            offset,
            coeffs,
            gain: Vec::new(),
            target_std: Vec::new(),
            meas_power: Vec::new(),
            true_means: Vec::new(),
        };
        out.refresh()?;
        Ok(out)
    }

    /// Exact posterior of observation `k` on this context's bins.
    pub fn true_posterior(&self, k: usize) -> Result<DiagGaussian> {
        let obs = self
            .observations
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no observation {k}")))?;
        let mut post = true_posterior(&self.prior, &self.spec, obs)?;
        post.transform_len = self.transform_len;
        Ok(post)
    }

    /// Loss contribution of bin `i` for given composed coefficients.
    fn bin_value(&self, i: usize, t: &BinD) -> f64 {
        self.bin_terms(i, t, false).0
    }

    /// Value of bin `i` and, if asked, weights `w` such that
    /// `dL = Re(w₁·dD1 + w₂·dD2 + w₃·dD3)`.
    fn bin_terms(&self, i: usize, t: &BinD, grad: bool) -> (f64, [Complex64; 3]) {
        let inv_d = 1.0 / self.transform_len as f64;
        let mut w = [ZERO; 3];
        let abs1 = t.d1.norm();
        let std_gap = self.target_std[i] - abs1;
        let mut value = std_gap * std_gap;
        if grad && abs1 > 0.0 {
            w[0] = (t.d1 * (-2.0 * std_gap / abs1)).conj();
        }
        let h = self.spec.lambda_h()[i];
        let mu = self.prior.mu_f()[i];
        if self.observations.is_empty() {
            let m = t.d2 - self.gain[i];
            value += m.norm_sqr() * self.meas_power[i];
            let u = (t.d2 * h + t.d3 - 1.0) * mu;
            value += u.norm_sqr() * inv_d;
            if grad {
                w[1] = (m * (2.0 * self.meas_power[i])).conj() + (u * (2.0 * inv_d)).conj() * h * mu;
                w[2] = (u * (2.0 * inv_d)).conj() * mu;
            }
        } else {
            let k = self.observations.len() as f64;
            let mut mean_term = 0.0;
            for (obs, truth) in self.observations.iter().zip(&self.true_means) {
                let y = obs.y_f[i];
                let u = t.d2 * y + t.d3 * mu - truth[i];
                mean_term += u.norm_sqr();
                if grad {
                    let cu = (u * (2.0 * inv_d / k)).conj();
                    w[1] += cu * y;
                    w[2] += cu * mu;
                }
            }
            value += mean_term * inv_d / k;
        }
        (value, w)
    }

    /// Loss of an arbitrary composed transfer.
    pub fn triple_loss(&self, triple: &TransferTriple) -> Result<f64> {
        check_len(self.prior.dim(), triple.dim())?;
        Ok(self.offset
            + (0..triple.dim())
                .map(|i| {
                    self.bin_value(
                        i,
                        &BinD {
                            d1: triple.noise[i],
                            d2: triple.measurement[i],
                            d3: triple.prior_mean[i],
                        },
                    )
                })
                .sum::<f64>())
    }

    /// Loss of the sampler driven by the MAP denoiser.
    pub fn ideal_loss(&self) -> Result<f64> {
        self.triple_loss(&ideal_triple(&self.coeffs, &self.spec, &self.prior)?)
    }

    pub fn ideal_triple(&self) -> Result<TransferTriple> {
        ideal_triple(&self.coeffs, &self.spec, &self.prior)
    }

    fn check_weights(&self, weights: &WeightSchedule) -> Result<()> {
        check_len(self.steps(), weights.len())
    }

    /// Loss of a weight schedule (its kind need not match the context's).
    pub fn loss(&self, weights: &WeightSchedule) -> Result<f64> {
        self.check_weights(weights)?;
        Ok(self.evaluate(weights, false)?.0)
    }

    /// Loss and gradient with respect to [`WeightSchedule::to_flat`].
    pub fn loss_and_gradient(&self, weights: &WeightSchedule) -> Result<(f64, Vec<f64>)> {
        self.check_weights(weights)?;
        self.evaluate(weights, true)
    }

    /// Loss as a function of the flat parameter vector of the context's kind.
    pub fn loss_flat(&self, theta: &[f64]) -> Result<f64> {
        self.loss(&WeightSchedule::from_flat(self.kind, theta)?)
    }

    pub fn loss_and_gradient_flat(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_gradient(&WeightSchedule::from_flat(self.kind, theta)?)
    }

    fn evaluate(&self, weights: &WeightSchedule, grad: bool) -> Result<(f64, Vec<f64>)> {
        let steps = self.steps();
        let per = WeightSchedule::params_per_step(weights.kind());
        let mut gradient = vec![0.0; if grad { steps * per } else { 0 }];
        let mut total = self.offset;
        // Scratch buffers indexed by application order k (step s = S − k).
        let mut bins = vec![BinStep::IDENTITY; steps];
        let mut dbins = vec![[BinStep::IDENTITY; 2]; steps];
        let mut states = vec![BinD::START; steps + 1];
        let s2 = self.spec.noise_var();
        for i in 0..self.prior.dim() {
            let h = self.spec.lambda_h()[i];
            for k in 0..steps {
                let s = steps - k;
                let c = &self.coeffs[s - 1];
                let (a, b) = (c.x_gain, c.denoised_gain);
                let (cs, ds) = (c.signal_gain[i], c.mean_gain[i]);
                match weights {
                    WeightSchedule::Dps { zeta } => {
                        bins[k] = dps_bin(a, b, cs, ds, h, zeta[s - 1]);
                        if grad {
                            // The step is affine in ζ.
                            let base = dps_bin(a, b, cs, ds, h, 0.0);
                            let unit = dps_bin(a, b, cs, ds, h, 1.0);
                            dbins[k][0] = unit.minus(&base);
                        }
                    }
                    WeightSchedule::Pigdm { g, r } => {
                        let (gs, rs) = (g[s - 1], r[s - 1]);
                        let e = pigdm_e(h, rs, s2).ok_or(Error::ZeroDenominator(i))?;
                        bins[k] = pigdm_bin(a, b, cs, ds, h, gs, e);
                        if grad {
                            let base = pigdm_bin(a, b, cs, ds, h, 0.0, e);
                            // d/dg at fixed e, then d/dr through e.
                            let dg = pigdm_bin(a, b, cs, ds, h, 1.0, e).minus(&base);
                            let de_dr = -2.0 * rs * h.norm_sqr() * e * e;
                            let de = pigdm_bin(a, b, cs, ds, h, gs, 1.0)
                                .minus(&pigdm_bin(a, b, cs, ds, h, 0.0, 1.0));
                            dbins[k] = [dg, de.scale(de_dr)];
                        }
                    }
                }
            }
            for k in 0..steps {
                states[k + 1] = states[k].step(&bins[k]);
            }
            let out = states[steps];
            let (v, w) = self.bin_terms(i, &out, grad);
            total += v;
            if grad {
                // suffix = product of G over steps applied after k.
                let mut suffix = ONE;
                for k in (0..steps).rev() {
                    let s = steps - k;
                    let z = &states[k];
                    for (p, db) in dbins[k].iter().take(per).enumerate() {
                        let dd1 = suffix * db.g * z.d1;
                        let dd2 = suffix * (db.g * z.d2 + db.q);
                        let dd3 = suffix * (db.g * z.d3 + db.m);
                        let val = (w[0] * dd1 + w[1] * dd2 + w[2] * dd3).re;
                        gradient[p * steps + (s - 1)] += val;
                    }
                    suffix *= bins[k].g;
                }
            }
        }
        Ok((total, gradient))
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Running `(D1, D2, D3)` of a single bin.
#[derive(Debug, Clone, Copy)]
struct BinD {
    d1: Complex64,
    d2: Complex64,
    d3: Complex64,
}

impl BinD {
    const START: BinD = BinD { d1: ONE, d2: ZERO, d3: ZERO };

    fn step(&self, b: &BinStep) -> BinD {
        BinD { d1: b.g * self.d1, d2: b.g * self.d2 + b.q, d3: b.g * self.d3 + b.m }
    }
}

impl BinStep {
    fn minus(&self, o: &BinStep) -> BinStep {
        BinStep { g: self.g - o.g, q: self.q - o.q, m: self.m - o.m }
    }

    fn scale(&self, f: f64) -> BinStep {
        BinStep { g: self.g * f, q: self.q * f, m: self.m * f }
    }
}

/// Squared W2 between the sampler output and the exact posterior for one
/// measurement.
pub fn realization_loss(
    ctx: &LossContext,
    weights: &WeightSchedule,
    obs: &Observation,
) -> Result<f64> {
    let single = LossContext {
        observations: vec![obs.clone()],
        ..ctx.clone()
    };
    let mut single = single;
    single.refresh()?;
    single.loss(weights)
}

/// Closed-form expectation of [`realization_loss`] over `y`.
pub fn averaged_loss_analytic(ctx: &LossContext, weights: &WeightSchedule) -> Result<f64> {
    if ctx.is_analytic() {
        return ctx.loss(weights);
    }
    let mut avg = LossContext { observations: Vec::new(), ..ctx.clone() };
    avg.refresh()?;
    avg.loss(weights)
}

/// Mean of [`realization_loss`] over the context's observations.
pub fn averaged_loss_empirical(ctx: &LossContext, weights: &WeightSchedule) -> Result<f64> {
    if ctx.is_analytic() {
        return Err(Error::InvalidArgument("context has no observations".into()));
    }
    ctx.loss(weights)
}

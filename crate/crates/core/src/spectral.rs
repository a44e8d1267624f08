//! Circulant Gaussian priors, circulant degradations and their exact
//! spectral posteriors.
//!
//! Spectral vectors (means, measurements, signals) are unnormalized DFTs.
//! Per-bin variances are always the eigenvalues of the corresponding
//! time-domain covariance, i.e. the variance a bin would have under the
//! orthonormal DFT. See [`DiagGaussian`] for how the two are combined.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::fft::{dft, Circulant, Dft};

/// Gaussian prior `x₀ ~ N(μ₀, Σ₀)` with circulant `Σ₀`, stored spectrally.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPrior {
    mu_f: Vec<Complex64>,
    lambda0: Vec<f64>,
}

impl SpectralPrior {
    pub fn new(mu_f: Vec<Complex64>, lambda0: Vec<f64>) -> Result<Self> {
        if lambda0.is_empty() {
            return Err(Error::InvalidArgument("prior dimension must be positive".into()));
        }
        check_len(lambda0.len(), mu_f.len())?;
        if let Some(i) = lambda0.iter().position(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {i} is {} (must be finite and >= 0)",
                lambda0[i]
            )));
        }
        if mu_f.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
            return Err(Error::NonFinite("prior mean".into()));
        }
        Ok(Self { mu_f, lambda0 })
    }

    /// Zero-mean prior with the given spectrum.
    pub fn zero_mean(lambda0: Vec<f64>) -> Result<Self> {
        let d = lambda0.len();
        Self::new(vec![Complex64::new(0.0, 0.0); d], lambda0)
    }

    pub fn dim(&self) -> usize {
        self.lambda0.len()
    }

    pub fn mu_f(&self) -> &[Complex64] {
        &self.mu_f
    }

    pub fn lambda0(&self) -> &[f64] {
        &self.lambda0
    }

    pub fn time_mean(&self) -> Vec<f64> {
        Dft::new(self.dim()).inverse_real(&self.mu_f)
    }

    pub fn covariance(&self) -> Circulant {
        Circulant::from_real_spectrum(&self.lambda0)
    }

    /// Both the mean and the spectrum have the symmetry of a real signal.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        crate::fft::is_hermitian(&self.mu_f, tol)
            && (1..d).all(|i| (self.lambda0[i] - self.lambda0[d - i]).abs() <= tol)
    }

    pub(crate) fn select_bins(&self, bins: &[usize]) -> Self {
        Self {
            mu_f: bins.iter().map(|&i| self.mu_f[i]).collect(),
            lambda0: bins.iter().map(|&i| self.lambda0[i]).collect(),
        }
    }
}

/// Circulant measurement operator `H` (by its eigenvalues) and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    lambda_h: Vec<Complex64>,
    sigma_y: f64,
}

impl DegradationSpec {
    pub fn new(lambda_h: Vec<Complex64>, sigma_y: f64) -> Result<Self> {
        if lambda_h.is_empty() {
            return Err(Error::InvalidArgument("operator dimension must be positive".into()));
        }
        if !(sigma_y.is_finite() && sigma_y >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_y = {sigma_y} must be >= 0")));
        }
        if lambda_h.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::NonFinite("operator eigenvalues".into()));
        }
        Ok(Self { lambda_h, sigma_y })
    }

    pub fn identity(d: usize, sigma_y: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(1.0, 0.0); d], sigma_y)
    }

    pub fn with_sigma_y(self, sigma_y: f64) -> Result<Self> {
        Self::new(self.lambda_h, sigma_y)
    }

    pub fn dim(&self) -> usize {
        self.lambda_h.len()
    }

    pub fn lambda_h(&self) -> &[Complex64] {
        &self.lambda_h
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn noise_var(&self) -> f64 {
        self.sigma_y * self.sigma_y
    }

    pub fn operator(&self) -> Circulant {
        Circulant::from_spectrum(self.lambda_h.clone())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        crate::fft::is_hermitian(&self.lambda_h, tol)
    }

    pub(crate) fn select_bins(&self, bins: &[usize]) -> Self {
        Self {
            lambda_h: bins.iter().map(|&i| self.lambda_h[i]).collect(),
            sigma_y: self.sigma_y,
        }
    }
}

/// Gaussian with independent spectral bins.
///
/// `mean` lives in unnormalized DFT coordinates of a length-`transform_len`
/// signal; `var[i]` is the covariance eigenvalue of bin `i`. The pair
/// describes the time-domain Gaussian `N(idft(mean), F⁻¹ diag(var) F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<Complex64>,
    pub var: Vec<f64>,
    pub transform_len: usize,
}

impl DiagGaussian {
    pub fn new(mean: Vec<Complex64>, var: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        Self::with_transform_len(mean, var, n)
    }

    pub fn with_transform_len(
        mean: Vec<Complex64>,
        var: Vec<f64>,
        transform_len: usize,
    ) -> Result<Self> {
        check_len(mean.len(), var.len())?;
        if let Some(i) = var.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("variance {i} is {}", var[i])));
        }
        Ok(Self { mean, var, transform_len })
    }

    pub fn dim(&self) -> usize {
        self.var.len()
    }
}

/// A spectral measurement, optionally with the clean signal that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y_f: Vec<Complex64>,
    pub ground_truth_f: Option<Vec<Complex64>>,
}

impl Observation {
    pub fn new(y_f: Vec<Complex64>) -> Self {
        Self { y_f, ground_truth_f: None }
    }

    pub fn from_time_domain(y: &[f64]) -> Self {
        Self::new(dft(y))
    }

    pub fn dim(&self) -> usize {
        self.y_f.len()
    }
}

/// Eigenvalues of the circulant matrix with the given first row:
/// `eig[k] = Σ_j row[j]·exp(−2πi·jk/d)`.
pub fn circulant_eigenvalues(first_row: &[f64]) -> Result<Vec<Complex64>> {
    if first_row.is_empty() {
        return Err(Error::EmptyRow);
    }
    Ok(dft(first_row))
}

/// Synthetic prior `Σ₀ = AᵀA`, `A` circulant with first row evenly spaced
/// from `−l` to `l` over `d` points, and constant mean `mu_const`.
pub fn make_synthetic_prior(d: usize, l: f64, mu_const: f64) -> Result<SpectralPrior> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("d = {d} must be >= 2")));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidArgument(format!("l = {l} must be > 0")));
    }
    let step = 2.0 * l / (d - 1) as f64;
    let row: Vec<f64> = (0..d).map(|j| -l + step * j as f64).collect();
    let row_eig = circulant_eigenvalues(&row)?;
    let lambda0 = row_eig.iter().map(|v| v.norm_sqr()).collect();
    let mu_f = dft(&vec![mu_const; d]);
    SpectralPrior::new(mu_f, lambda0)
}

/// Low-pass 0/1 mask keeping `round(fraction·d)` frequencies: DC first, then
/// the pairs `(i, d−i)` for `i = 1, 2, …`. If the count runs out in the
/// middle of a pair, only the lower bin `i` is kept.
pub fn make_lpf(d: usize, fraction: f64) -> Result<DegradationSpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} must lie in (0, 1]"
        )));
    }
    let keep = ((fraction * d as f64).round() as usize).clamp(1, d);
    let mut mask = vec![0.0; d];
    mask[0] = 1.0;
    let mut kept = 1;
    let mut i = 1;
    while kept < keep {
        mask[i] = 1.0;
        kept += 1;
        let mirror = d - i;
        if kept < keep && mirror != i {
            mask[mirror] = 1.0;
            kept += 1;
        }
        i += 1;
    }
    DegradationSpec::new(mask.into_iter().map(|m| Complex64::new(m, 0.0)).collect(), 0.0)
}

fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draw `x₀ ~ N(μ₀, Σ₀)` in the time domain.
pub fn sample_prior<R: Rng + ?Sized>(prior: &SpectralPrior, rng: &mut R) -> Vec<f64> {
    let d = prior.dim();
    let plan = Dft::new(d);
    let w = standard_normals(rng, d);
    let mut wf = plan.forward_real(&w);
    for (v, l) in wf.iter_mut().zip(prior.lambda0()) {
        *v *= l.sqrt();
    }
    let fluct = plan.inverse_real(&wf);
    prior
        .time_mean()
        .into_iter()
        .zip(fluct)
        .map(|(m, f)| m + f)
        .collect()
}

/// Measure `y = Hx₀ + n` with time-domain white noise of std `σ_y`.
pub fn degrade<R: Rng + ?Sized>(
    x0: &[f64],
    spec: &DegradationSpec,
    rng: &mut R,
) -> Result<Observation> {
    check_len(spec.dim(), x0.len())?;
    let plan = Dft::new(spec.dim());
    let x0_f = plan.forward_real(x0);
    let noise: Vec<f64> = standard_normals(rng, spec.dim())
        .into_iter()
        .map(|z| z * spec.sigma_y())
        .collect();
    let noise_f = plan.forward_real(&noise);
    let y_f = x0_f
        .iter()
        .zip(spec.lambda_h())
        .zip(&noise_f)
        .map(|((x, h), n)| h * x + n)
        .collect();
    Ok(Observation { y_f, ground_truth_f: Some(x0_f) })
}

/// `n` independent (signal, measurement) pairs; pair `k` uses its own
/// ChaCha stream of `seed`, so the set does not depend on evaluation order.
pub fn synthetic_realizations(
    prior: &SpectralPrior,
    spec: &DegradationSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    (0..n)
        .map(|k| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 << 32 | k as u64);
            let x0 = sample_prior(prior, &mut rng);
            degrade(&x0, spec, &mut rng)
        })
        .collect()
}

/// Exact posterior `p(x₀ᶠ | yᶠ)` of the linear-Gaussian model, bin by bin.
pub fn true_posterior(
    prior: &SpectralPrior,
    spec: &DegradationSpec,
    obs: &Observation,
) -> Result<DiagGaussian> {
    let d = prior.dim();
    check_len(d, spec.dim())?;
    check_len(d, obs.dim())?;
    let noise_var = spec.noise_var();
    let mut mean = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for i in 0..d {
        let lam = prior.lambda0()[i];
        let h = spec.lambda_h()[i];
        let mu = prior.mu_f()[i];
        let innovation = obs.y_f[i] - h * mu;
        let den = lam * h.norm_sqr() + noise_var;
        if den == 0.0 {
            // No information at this bin: λ·conj(h) vanishes with the denominator.
            let num = h.conj() * lam * innovation;
            if !(num.re.is_finite() && num.im.is_finite()) || num.norm() > 0.0 {
                return Err(Error::DegeneratePosteriorBin(i));
            }
            mean.push(mu);
            var.push(lam);
            continue;
        }
        mean.push(mu + h.conj() * lam * innovation / den);
        var.push((lam - lam * lam * h.norm_sqr() / den).max(0.0));
    }
    DiagGaussian::new(mean, var)
}

/// Stationary prior fitted to `samples` (one real signal per entry): DFT of
/// the sample mean and the biased average periodogram `|DFT(x − x̄)|²/d`.
pub fn estimate_spectral_prior(samples: &[Vec<f64>]) -> Result<SpectralPrior> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples);
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("samples must be non-empty".into()));
    }
    for s in samples {
        check_len(d, s.len())?;
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let plan = Dft::new(d);
    let mut power = vec![0.0; d];
    let mut centered = vec![0.0; d];
    for s in samples {
        for ((c, v), m) in centered.iter_mut().zip(s).zip(&mean) {
            *c = v - m;
        }
        for (p, v) in power.iter_mut().zip(plan.forward_real(&centered)) {
            *p += v.norm_sqr();
        }
    }
    let lambda0 = power.into_iter().map(|p| p / (n * d as f64)).collect();
    SpectralPrior::new(plan.forward_real(&mean), lambda0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigenvalues_of_identity_and_shift() {
        let id = circulant_eigenvalues(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(id.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let shift = circulant_eigenvalues(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        let expected = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (v, e) in shift.iter().zip(&expected) {
            assert!((v - e).norm() < 1e-15);
        }
        assert_eq!(circulant_eigenvalues(&[]), Err(Error::EmptyRow));
    }

    #[test]
    fn synthetic_prior_two_dims() {
        let p = make_synthetic_prior(2, 1.0, 0.0).unwrap();
        let mut l = p.lambda0().to_vec();
        l.sort_by(f64::total_cmp);
        assert!((l[0] - 0.0).abs() < 1e-15 && (l[1] - 4.0).abs() < 1e-12);
        assert!(p.mu_f().iter().all(|m| m.norm() == 0.0));
        assert!(make_synthetic_prior(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn synthetic_prior_mean_is_dc_only() {
        let p = make_synthetic_prior(6, 0.1, 2.0).unwrap();
        assert!((p.mu_f()[0] - c(12.0, 0.0)).norm() < 1e-12);
        assert!(p.mu_f()[1..].iter().all(|m| m.norm() < 1e-12));
        assert!(p.is_hermitian(1e-12));
    }

    #[test]
    fn lpf_masks() {
        let full = make_lpf(7, 1.0).unwrap();
        assert!(full.lambda_h().iter().all(|h| *h == c(1.0, 0.0)));

        let re = |s: &DegradationSpec| s.lambda_h().iter().map(|h| h.re).collect::<Vec<_>>();
        assert_eq!(re(&make_lpf(4, 0.5).unwrap()), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(re(&make_lpf(4, 0.75).unwrap()), vec![1.0, 1.0, 0.0, 1.0]);

        let half = make_lpf(50, 0.5).unwrap();
        let kept: Vec<usize> = (0..50).filter(|&i| half.lambda_h()[i].re == 1.0).collect();
        assert_eq!(kept.len(), 25);
        let expected: Vec<usize> = (0..=12).chain(38..50).collect();
        assert_eq!(kept, expected);
        assert!(half.is_hermitian(0.0));

        // Nyquist bin is its own mirror.
        assert_eq!(re(&make_lpf(4, 1.0).unwrap()), vec![1.0; 4]);

        assert!(make_lpf(8, 0.0).is_err());
        assert!(make_lpf(8, 1.5).is_err());
    }

    #[test]
    fn degenerate_prior_sample_is_mean() {
        let prior = SpectralPrior::new(dft(&[1.0, 2.0, 3.0, 4.0]), vec![0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_prior(&prior, &mut rng), prior.time_mean());
    }

    #[test]
    fn sampling_is_deterministic() {
        let prior = make_synthetic_prior(8, 0.3, 0.5).unwrap();
        let a = sample_prior(&prior, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_prior(&prior, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_identity_measurement() {
        let spec = DegradationSpec::identity(5, 0.0).unwrap();
        let x0 = [0.5, -1.0, 2.0, 0.0, 3.0];
        let obs = degrade(&x0, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(obs.y_f, dft(&x0));
        assert!(degrade(&x0[..4], &spec, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn blocked_bins_are_zero_without_noise() {
        let spec = make_lpf(8, 0.5).unwrap();
        let x0 = [0.5, -1.0, 2.0, 0.0, 3.0, 1.0, 1.0, -2.0];
        let obs = degrade(&x0, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (y, h) in obs.y_f.iter().zip(spec.lambda_h()) {
            if h.norm() == 0.0 {
                assert_eq!(y.norm(), 0.0);
            }
        }
    }

    #[test]
    fn posterior_limits() {
        let prior = SpectralPrior::new(
            vec![c(1.0, 0.0), c(0.5, 0.2), c(0.5, -0.2)],
            vec![2.0, 1.0, 1.0],
        )
        .unwrap();
        let obs = Observation::new(vec![c(3.0, 0.0), c(-1.0, 1.0), c(-1.0, -1.0)]);
        let spec = DegradationSpec::identity(3, 1e-12).unwrap();
        let post = true_posterior(&prior, &spec, &obs).unwrap();
        for i in 0..3 {
            assert!((post.mean[i] - obs.y_f[i]).norm() < 1e-12);
            assert!(post.var[i] < 1e-12);
        }

        let blind = DegradationSpec::new(vec![c(0.0, 0.0); 3], 0.3).unwrap();
        let post = true_posterior(&prior, &blind, &obs).unwrap();
        assert_eq!(post.mean, prior.mu_f());
        assert_eq!(post.var, prior.lambda0());
    }

    #[test]
    fn fully_degenerate_bin_returns_prior() {
        let prior = SpectralPrior::new(vec![c(1.0, 0.0), c(2.0, 0.0)], vec![0.0, 1.0]).unwrap();
        let spec = DegradationSpec::new(vec![c(0.0, 0.0), c(1.0, 0.0)], 0.0).unwrap();
        let obs = Observation::new(vec![c(5.0, 0.0), c(3.0, 0.0)]);
        let post = true_posterior(&prior, &spec, &obs).unwrap();
        assert_eq!(post.mean[0], c(1.0, 0.0));
        assert_eq!(post.var[0], 0.0);
        assert!((post.mean[1] - c(3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn estimate_edge_cases() {
        assert_eq!(estimate_spectral_prior(&[vec![1.0, 2.0]]), Err(Error::TooFewSamples));
        let same = vec![vec![1.0, -2.0, 0.5]; 4];
        let p = estimate_spectral_prior(&same).unwrap();
        assert!(p.lambda0().iter().all(|l| *l == 0.0));

        let dc: Vec<Vec<f64>> = [0.0, 1.0, -3.0, 2.5].iter().map(|&v| vec![v; 6]).collect();
        let p = estimate_spectral_prior(&dc).unwrap();
        assert!(p.lambda0()[0] > 0.0);
        assert!(p.lambda0()[1..].iter().all(|l| *l < 1e-24));
    }
}

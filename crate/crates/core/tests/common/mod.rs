//! Random problem instances and dense-matrix reference implementations.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use spectral_guidance::fft::dft;
use spectral_guidance::{Complex64, DegradationSpec, SpectralPrior};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random real circulant problem together with the kernels it was built from.
pub struct Instance {
    pub d: usize,
    /// `Σ₀ = AᵀA` with `A` circulant of first column `prior_kernel`.
    pub prior_kernel: Vec<f64>,
    /// First column of `H`.
    pub op_kernel: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_y: f64,
    pub prior: SpectralPrior,
    pub spec: DegradationSpec,
}

pub fn random_instance(rng: &mut impl Rng, d: usize) -> Instance {
    let sigma_y = rng.random_range(0.05..0.5);
    let prior_kernel: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let op_kernel: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    let lambda = dft(&prior_kernel).iter().map(|v| v.norm_sqr()).collect();
    let prior = SpectralPrior::new(dft(&mu), lambda).unwrap();
    let spec = DegradationSpec::new(dft(&op_kernel), sigma_y).unwrap();
    Instance { d, prior_kernel, op_kernel, mu, sigma_y, prior, spec }
}

pub fn random_signal(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Dense circulant matrix with the given first column.
pub fn circulant(col: &[f64]) -> DMatrix<f64> {
    let d = col.len();
    DMatrix::from_fn(d, d, |i, j| col[(i + d - j) % d])
}

impl Instance {
    pub fn sigma_dense(&self) -> DMatrix<f64> {
        let a = circulant(&self.prior_kernel);
        a.transpose() * a
    }

    pub fn h_dense(&self) -> DMatrix<f64> {
        circulant(&self.op_kernel)
    }
}

pub fn vec_of(x: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(x)
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// `max_i |a_i − b_i| / max(1, max_i |b_i|)`.
pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// DDIM scalar coefficients from `(ᾱ_{s−1}, ᾱ_s)`.
pub fn ddim_ab(prev: f64, cur: f64) -> (f64, f64) {
    let a = ((1.0 - prev) / (1.0 - cur)).sqrt();
    (a, prev.sqrt() - cur.sqrt() * a)
}

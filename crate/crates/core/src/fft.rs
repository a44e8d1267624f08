//! DFT helpers and FFT-backed circulant operators.
//!
//! Convention used throughout the crate: the forward transform is
//! unnormalized, `X[k] = Σ_j x[j]·exp(−2πi·jk/d)`, and the inverse divides
//! by `d`. Under this convention `Σ|X[k]|²/d = Σ x[j]²`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms of a fixed length.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/d` factor.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn forward_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse_complex(&self, xf: &[Complex64]) -> Vec<Complex64> {
        let mut buf = xf.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part. Exact for spectra of
    /// real signals up to rounding.
    pub fn inverse_real(&self, xf: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(xf).into_iter().map(|v| v.re).collect()
    }
}

/// Unnormalized forward DFT of a real vector.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    Dft::new(x.len()).forward_real(x)
}

/// Inverse DFT (with `1/d`) returning the real part.
pub fn idft_real(xf: &[Complex64]) -> Vec<f64> {
    Dft::new(xf.len()).inverse_real(xf)
}

/// True when `v[d−i] == conj(v[i])` for all `i` and `v[0]` is real, within `tol`.
pub fn is_hermitian(v: &[Complex64], tol: f64) -> bool {
    let d = v.len();
    if d == 0 {
        return true;
    }
    if v[0].im.abs() > tol {
        return false;
    }
    (1..d).all(|i| (v[d - i] - v[i].conj()).norm() <= tol)
}

/// A circulant matrix acting through its spectral multiplier.
///
/// `spectrum[k]` multiplies bin `k` of the forward DFT, so that
/// `apply(x) = idft(spectrum ⊙ dft(x))`. For a circulant matrix with first
/// column `c`, the multiplier is `dft(c)`.
#[derive(Debug, Clone)]
pub struct Circulant {
    spectrum: Vec<Complex64>,
}

impl Circulant {
    pub fn from_spectrum(spectrum: Vec<Complex64>) -> Self {
        Self { spectrum }
    }

    pub fn from_real_spectrum(spectrum: &[f64]) -> Self {
        Self::from_spectrum(spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn identity(d: usize) -> Self {
        Self::from_real_spectrum(&vec![1.0; d])
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    /// Matrix transpose (real circulant) / adjoint.
    pub fn adjoint(&self) -> Self {
        Self::from_spectrum(self.spectrum.iter().map(|v| v.conj()).collect())
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Circulant) -> Self {
        Self::from_spectrum(
            self.spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    /// `α·self + β·I`.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        Self::from_spectrum(self.spectrum.iter().map(|v| v * alpha + beta).collect())
    }

    /// Matrix sum `self + other`.
    pub fn add(&self, other: &Circulant) -> Self {
        Self::from_spectrum(
            self.spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Matrix inverse. Returns `None` if any multiplier is exactly zero.
    pub fn inverse(&self) -> Option<Self> {
        if self.spectrum.iter().any(|v| v.norm_sqr() == 0.0) {
            return None;
        }
        Some(Self::from_spectrum(
            self.spectrum.iter().map(|v| v.inv()).collect(),
        ))
    }

    /// Matrix–vector product on a real time-domain vector.
    pub fn apply(&self, dft: &Dft, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        dft.forward_in_place(&mut buf);
        for (b, m) in buf.iter_mut().zip(&self.spectrum) {
            *b *= m;
        }
        dft.inverse_in_place(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }

    /// Explicit dense matrix, row-major. Test and diagnostics helper.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let dft = Dft::new(d);
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            cols.push(self.apply(&dft, &e));
        }
        (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
    }
}

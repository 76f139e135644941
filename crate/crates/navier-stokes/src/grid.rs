//! Periodic grid on `[0, 2π)²`, its wavenumbers and 2-D FFTs.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{NsError, Result};

/// Real field sampled at the grid nodes `x = 2π(i₁, i₂)/n`, stored row-major
/// with `i₁` (the `x₁` index) as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    n: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(NsError::Shape(format!("expected {} values for n = {n}, got {}", n * n, values.len())));
        }
        Ok(Self { n, values })
    }

    /// Samples `f(x₁, x₂)` at every node.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.n + i2]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Discrete L² norm on the box, `(Σ v² · h²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let h = 2.0 * PI / self.n as f64;
        (self.values.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt()
    }

    /// `‖self − other‖ / ‖other‖`.
    pub fn relative_error(&self, other: &Field) -> Result<f64> {
        if self.n != other.n {
            return Err(NsError::Shape(format!("grid sizes differ: {} vs {}", self.n, other.n)));
        }
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = other.values.iter().map(|b| b * b).sum();
        Ok((num / den).sqrt())
    }

    /// `ω̃(x₁, x₂) = −ω(2π − x₁, x₂)`, the field whose flow is the mirror
    /// image of this one's.
    pub fn mirrored(&self) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let src = (n - i) % n;
            for j in 0..n {
                values[i * n + j] = -self.values[src * n + j];
            }
        }
        Self { n, values }
    }
}

/// Spectral discretization: `n` points per direction, signed integer
/// wavenumbers and the 2/3-rule dealiasing mask.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    wavenumbers: Vec<f64>,
    mask: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).finish_non_exhaustive()
    }
}

impl SpectralGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 32 || !n.is_power_of_two() {
            return Err(NsError::Config(format!("grid size must be a power of two ≥ 32, got {n}")));
        }
        let wavenumbers: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { i as f64 } else { i as f64 - n as f64 })
            .collect();
        let cutoff = n as f64 / 3.0;
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mask[i * n + j] = wavenumbers[i].abs() <= cutoff && wavenumbers[j].abs() <= cutoff;
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wavenumbers,
            mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Signed wavenumber of frequency index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.wavenumbers[i]
    }

    /// Whether the mode at flat index `idx` survives dealiasing.
    pub fn keeps(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub(crate) fn dealias(&self, hat: &mut [Complex<f64>]) {
        for (v, keep) in hat.iter_mut().zip(&self.mask) {
            if !keep {
                *v = Complex::new(0.0, 0.0);
            }
        }
    }

    /// Unnormalized forward transform, in place.
    pub(crate) fn fft2(&self, data: &mut [Complex<f64>], work: &mut FftWork) {
        self.transform(&self.forward, data, work);
    }

    /// Inverse transform including the `1/n²` normalization, in place.
    pub(crate) fn ifft2(&self, data: &mut [Complex<f64>], work: &mut FftWork) {
        self.transform(&self.inverse, data, work);
        let s = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn transform(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex<f64>], work: &mut FftWork) {
        let n = self.n;
        plan.process_with_scratch(data, &mut work.scratch);
        transpose(data, &mut work.buffer, n);
        plan.process_with_scratch(&mut work.buffer, &mut work.scratch);
        transpose(&work.buffer, data, n);
    }

    pub(crate) fn work(&self) -> FftWork {
        FftWork {
            buffer: vec![Complex::new(0.0, 0.0); self.n * self.n],
            scratch: vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())],
        }
    }

    pub(crate) fn to_spectral(&self, field: &Field, work: &mut FftWork) -> Vec<Complex<f64>> {
        let mut hat: Vec<Complex<f64>> = field.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2(&mut hat, work);
        hat
    }

    pub(crate) fn to_physical(&self, hat: &[Complex<f64>], work: &mut FftWork) -> Field {
        let mut data = hat.to_vec();
        self.ifft2(&mut data, work);
        Field {
            n: self.n,
            values: data.into_iter().map(|v| v.re).collect(),
        }
    }
}

/// Per-solve FFT buffers; never shared between threads.
pub(crate) struct FftWork {
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

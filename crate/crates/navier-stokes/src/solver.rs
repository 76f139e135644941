//! Pseudo-spectral vorticity-streamfunction solver.
//!
//! `∂ω/∂t + (v·∇)ω − νΔω = ∇×f` with `−Δψ = ω`, `v = (∂₂ψ, −∂₁ψ) + v_b`.
//! Diffusion and the constant background advection are linear with
//! constant coefficients, so both go into an exact integrating factor;
//! the remaining advection and the forcing are stepped with Jameson's
//! low-storage four-stage Runge-Kutta scheme.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{NsError, Result};
use crate::grid::{Field, SpectralGrid};

const STAGES: [f64; 4] = [0.25, 1.0 / 3.0, 0.5, 1.0];
const MAX_COURANT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    pub viscosity: f64,
    pub background: [f64; 2],
    /// `A` in `f = (0, A cos 4x₁)`, so `∇×f = −4A sin 4x₁`.
    pub forcing_amplitude: f64,
    /// Output times, increasing, each a multiple of `dt`.
    pub times: Vec<f64>,
    pub dt: f64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            viscosity: 0.01,
            background: [0.0, 2.0 * PI],
            forcing_amplitude: 1.0,
            times: vec![0.25, 0.5],
            dt: 2.5e-3,
        }
    }
}

impl NsConfig {
    /// Step counts at which each output time is reached.
    fn output_steps(&self) -> Result<Vec<usize>> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(NsError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.viscosity >= 0.0) {
            return Err(NsError::Config(format!("viscosity must be non-negative, got {}", self.viscosity)));
        }
        if self.times.is_empty() {
            return Err(NsError::Config("need at least one output time".into()));
        }
        let mut last = 0;
        self.times
            .iter()
            .map(|&t| {
                let steps = (t / self.dt).round();
                if !(t > 0.0) || (steps * self.dt - t).abs() > 1e-9 * t.max(1.0) {
                    return Err(NsError::Config(format!("output time {t} is not a positive multiple of dt = {}", self.dt)));
                }
                let steps = steps as usize;
                if steps <= last && last > 0 {
                    return Err(NsError::Config("output times must increase".into()));
                }
                last = steps;
                Ok(steps)
            })
            .collect()
    }
}

/// Vorticity at each of `cfg.times`.
pub fn ns_solve(omega0: &Field, cfg: &NsConfig, grid: &SpectralGrid) -> Result<Vec<Field>> {
    let n = grid.n();
    if omega0.n() != n {
        return Err(NsError::Shape(format!("field is {}², grid is {n}²", omega0.n())));
    }
    let outputs = cfg.output_steps()?;
    let mut solver = Stepper::new(grid, cfg);
    let mut w = grid.to_spectral(omega0, &mut solver.work);
    grid.dealias(&mut w);

    let mut fields = Vec::with_capacity(outputs.len());
    let mut step = 0;
    for target in outputs {
        while step < target {
            solver.step(&mut w, step as f64 * cfg.dt)?;
            step += 1;
        }
        fields.push(grid.to_physical(&w, &mut solver.work));
    }
    Ok(fields)
}

struct Stepper<'a> {
    grid: &'a SpectralGrid,
    dt: f64,
    background: [f64; 2],
    kx: Vec<f64>,
    ky: Vec<f64>,
    inv_k2: Vec<f64>,
    forcing: Vec<Complex<f64>>,
    /// `e^{L α_s δt}` and `e^{L (α_s − α_{s−1}) δt}` per stage.
    full: [Vec<Complex<f64>>; 4],
    incr: [Vec<Complex<f64>>; 4],
    stage: Vec<Complex<f64>>,
    nl: Vec<Complex<f64>>,
    a: Vec<Complex<f64>>,
    b: Vec<Complex<f64>>,
    work: crate::grid::FftWork,
}

impl<'a> Stepper<'a> {
    fn new(grid: &'a SpectralGrid, cfg: &NsConfig) -> Self {
        let n = grid.n();
        let len = n * n;
        let mut kx = vec![0.0; len];
        let mut ky = vec![0.0; len];
        let mut inv_k2 = vec![0.0; len];
        let mut lin = vec![Complex::new(0.0, 0.0); len];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let (k1, k2) = (grid.wavenumber(i), grid.wavenumber(j));
                kx[idx] = k1;
                ky[idx] = k2;
                let kk = k1 * k1 + k2 * k2;
                inv_k2[idx] = if kk > 0.0 { 1.0 / kk } else { 0.0 };
                lin[idx] = Complex::new(-cfg.viscosity * kk, -(cfg.background[0] * k1 + cfg.background[1] * k2));
            }
        }
        let exps = |frac: f64| -> Vec<Complex<f64>> { lin.iter().map(|l| (l * frac * cfg.dt).exp()).collect() };
        let full = STAGES.map(exps);
        let mut prev = 0.0;
        let incr = STAGES.map(|a| {
            let e = exps(a - prev);
            prev = a;
            e
        });
        let mut work = grid.work();
        let amp = cfg.forcing_amplitude;
        let mut forcing = grid.to_spectral(&Field::from_fn(n, |x1, _| -4.0 * amp * (4.0 * x1).sin()), &mut work);
        grid.dealias(&mut forcing);
        Self {
            grid,
            dt: cfg.dt,
            background: cfg.background,
            kx,
            ky,
            inv_k2,
            forcing,
            full,
            incr,
            stage: vec![Complex::new(0.0, 0.0); len],
            nl: vec![Complex::new(0.0, 0.0); len],
            a: vec![Complex::new(0.0, 0.0); len],
            b: vec![Complex::new(0.0, 0.0); len],
            work,
        }
    }

    /// `ω^{(s)} = e^{Lα_sδt} ω_n + α_s δt e^{L(α_s−α_{s−1})δt} N(ω^{(s−1)})`.
    fn step(&mut self, w: &mut Vec<Complex<f64>>, time: f64) -> Result<()> {
        self.stage.copy_from_slice(w);
        for s in 0..4 {
            let courant = self.nonlinear(s == 0);
            if s == 0 && courant > MAX_COURANT {
                return Err(NsError::Cfl { time, courant });
            }
            let h = STAGES[s] * self.dt;
            for idx in 0..w.len() {
                self.stage[idx] = self.full[s][idx] * w[idx] + self.incr[s][idx] * self.nl[idx] * h;
            }
        }
        std::mem::swap(w, &mut self.stage);
        if w.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(NsError::BlowUp { time: time + self.dt });
        }
        Ok(())
    }

    /// Writes `−(u·∇)ω + ∇×f` for the current stage into `self.nl`, where
    /// `u` excludes the background. Returns the Courant number of the full
    /// velocity when `courant` is set.
    fn nonlinear(&mut self, courant: bool) -> f64 {
        let i = Complex::new(0.0, 1.0);
        for idx in 0..self.stage.len() {
            let w = self.stage[idx];
            let psi = w * self.inv_k2[idx];
            let (k1, k2) = (self.kx[idx], self.ky[idx]);
            // both pairs are transforms of real fields, so one complex
            // inverse transform recovers two of them
            let u1 = i * k2 * psi;
            let u2 = -i * k1 * psi;
            self.a[idx] = u1 + i * u2;
            self.b[idx] = i * k1 * w + i * (i * k2 * w);
        }
        self.grid.ifft2(&mut self.a, &mut self.work);
        self.grid.ifft2(&mut self.b, &mut self.work);
        let mut vmax: f64 = 0.0;
        for idx in 0..self.a.len() {
            let (u1, u2) = (self.a[idx].re, self.a[idx].im);
            let (w1, w2) = (self.b[idx].re, self.b[idx].im);
            if courant {
                vmax = vmax.max((u1 + self.background[0]).hypot(u2 + self.background[1]));
            }
            self.nl[idx] = Complex::new(-(u1 * w1 + u2 * w2), 0.0);
        }
        self.grid.fft2(&mut self.nl, &mut self.work);
        self.grid.dealias(&mut self.nl);
        for (v, f) in self.nl.iter_mut().zip(&self.forcing) {
            *v += f;
        }
        vmax * self.dt / self.grid.dx()
    }
}

//! Ground truth for tests and metrics: gridded reference densities, TV and
//! KL distances, and closed-form solutions of the split flow.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::inverse_problem::AugmentedProblem;
use crate::linalg::{cholesky_inverse, cholesky_with_jitter, symmetrized};

/// Uniform grid on `[lo, hi]` with `n` cells; nodes sit at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad grid axis [{lo}, {hi}] with {n} cells")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

/// Normalized density values on a 1-D or 2-D tensor grid, row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl GriddedDensity {
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.axes.as_slice() {
            [a] => vec![a.node(idx)],
            [a, b] => vec![a.node(idx / b.n), b.node(idx % b.n)],
            _ => unreachable!("grids are 1-D or 2-D"),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        let vol = self.cell_volume();
        (0..self.len())
            .filter(|&i| pred(&self.point(i)))
            .map(|i| self.values[i] * vol)
            .sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let vol = self.cell_volume();
        let mut m = DVector::zeros(self.dim());
        for (i, v) in self.values.iter().enumerate() {
            m += DVector::from_vec(self.point(i)) * (v * vol);
        }
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let vol = self.cell_volume();
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim(), self.dim());
        for (i, v) in self.values.iter().enumerate() {
            let d = DVector::from_vec(self.point(i)) - &m;
            c += &d * d.transpose() * (v * vol);
        }
        c
    }

    /// Local maxima over the 2 (1-D) or 8 (2-D) neighbours. A node qualifies
    /// when no neighbour exceeds it and at least one is strictly lower;
    /// qualifying nodes within two cells of each other form a plateau and are
    /// reported once, at their average position. Boundary nodes are skipped.
    pub fn local_maxima(&self) -> Vec<Vec<f64>> {
        let v = &self.values;
        let (n0, n1) = match self.axes.as_slice() {
            [a] => (a.n, 1),
            [a, b] => (a.n, b.n),
            _ => unreachable!("grids are 1-D or 2-D"),
        };
        let two_d = n1 > 1;
        let offsets: Vec<(i64, i64)> = if two_d {
            (-1..=1)
                .flat_map(|di| (-1..=1).map(move |dj| (di, dj)))
                .filter(|&o| o != (0, 0))
                .collect()
        } else {
            vec![(-1, 0), (1, 0)]
        };
        let (j_lo, j_hi) = if two_d { (1, n1 - 1) } else { (0, 1) };
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for i in 1..n0 - 1 {
            for j in j_lo..j_hi {
                let c = v[i * n1 + j];
                let mut lower = false;
                let mut ok = true;
                for &(di, dj) in &offsets {
                    let nb = v[(i as i64 + di) as usize * n1 + (j as i64 + dj) as usize];
                    if nb > c {
                        ok = false;
                        break;
                    }
                    lower |= nb < c;
                }
                if ok && lower {
                    candidates.push((i, j));
                }
            }
        }
        let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
        for c in candidates {
            let near = |g: &Vec<(usize, usize)>| {
                g.iter()
                    .any(|&(i, j)| i.abs_diff(c.0) <= 2 && j.abs_diff(c.1) <= 2)
            };
            match groups.iter_mut().find(|g| near(g)) {
                Some(g) => g.push(c),
                None => groups.push(vec![c]),
            }
        }
        groups
            .iter()
            .map(|g| {
                let mut acc = vec![0.0; self.dim()];
                for &(i, j) in g {
                    for (a, x) in acc.iter_mut().zip(self.point(i * n1 + j)) {
                        *a += x / g.len() as f64;
                    }
                }
                acc
            })
            .collect()
    }

    /// Writes the `axis0[,axis1],density` CSV layout with 17 significant
    /// digits.
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        let header = if self.dim() == 1 { "axis0,density" } else { "axis0,axis1,density" };
        writeln!(w, "{header}")?;
        for (i, v) in self.values.iter().enumerate() {
            for x in self.point(i) {
                write!(w, "{x:.16e},")?;
            }
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the layout produced by [`GriddedDensity::write_csv`].
    pub fn read_csv(r: &mut dyn BufRead) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("density CSV: {msg}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let dim = match header.trim() {
            "axis0,density" => 1,
            "axis0,axis1,density" => 2,
            other => return Err(bad(format!("unexpected header {other:?}"))),
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
            if row.len() != dim + 1 {
                return Err(bad(format!("line {}: expected {} columns", lineno + 2, dim + 1)));
            }
            rows.push(row);
        }
        let axis_from = |coords: Vec<f64>| -> Result<Axis> {
            if coords.len() < 2 {
                return Err(bad("axis needs at least two nodes".into()));
            }
            let h = (coords[coords.len() - 1] - coords[0]) / (coords.len() - 1) as f64;
            Axis::new(coords[0] - 0.5 * h, coords[coords.len() - 1] + 0.5 * h, coords.len())
        };
        let axes = if dim == 1 {
            vec![axis_from(rows.iter().map(|r| r[0]).collect())?]
        } else {
            let n1 = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
            if n1 == 0 || rows.len() % n1 != 0 {
                return Err(bad("rows do not form a tensor grid".into()));
            }
            let a0 = axis_from(rows.iter().step_by(n1).map(|r| r[0]).collect())?;
            let a1 = axis_from(rows[..n1].iter().map(|r| r[1]).collect())?;
            vec![a0, a1]
        };
        Ok(Self {
            axes,
            values: rows.iter().map(|r| r[dim]).collect(),
        })
    }
}

fn check_grid(bounds: &[(f64, f64)], resolution: &[usize]) -> Result<Vec<Axis>> {
    if bounds.len() != resolution.len() {
        return Err(Error::InvalidArgument("bounds and resolution differ in length".into()));
    }
    if !(1..=2).contains(&bounds.len()) {
        return Err(Error::UnsupportedDimension(bounds.len()));
    }
    bounds
        .iter()
        .zip(resolution)
        .map(|(&(lo, hi), &n)| Axis::new(lo, hi, n))
        .collect()
}

/// Evaluates `exp(log_density)` on the grid (shifted by its maximum) and
/// normalizes with the rectangle rule.
pub fn grid_from_log_density(axes: Vec<Axis>, log_density: impl Fn(&[f64]) -> f64 + Sync) -> Result<GriddedDensity> {
    if !(1..=2).contains(&axes.len()) {
        return Err(Error::UnsupportedDimension(axes.len()));
    }
    let mut grid = GriddedDensity {
        values: Vec::new(),
        axes,
    };
    let total: usize = grid.axes.iter().map(|a| a.n).product();
    let logs: Vec<f64> = (0..total).into_par_iter().map(|i| log_density(&grid.point(i))).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || logs.iter().any(|l| l.is_nan()) {
        return Err(Error::InvalidArgument("log-density is not finite anywhere on the grid".into()));
    }
    let mut values: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
    values.iter_mut().for_each(|v| *v /= mass);
    grid.values = values;
    Ok(grid)
}

/// Reference posterior `∝ exp(−Φ_R)` on a uniform grid.
pub fn grid_posterior(problem: &AugmentedProblem, bounds: &[(f64, f64)], resolution: &[usize]) -> Result<GriddedDensity> {
    if problem.n_theta() > 2 {
        return Err(Error::UnsupportedDimension(problem.n_theta()));
    }
    let axes = check_grid(bounds, resolution)?;
    if axes.len() != problem.n_theta() {
        return Err(Error::DimensionMismatch {
            what: "grid bounds",
            expected: problem.n_theta(),
            got: axes.len(),
        });
    }
    if resolution.iter().any(|&n| n < 64) {
        return Err(Error::InvalidArgument("reference grids need at least 64 points per axis".into()));
    }
    grid_from_log_density(axes, |x| match problem.phi_r(&DVector::from_column_slice(x)) {
        Ok(v) => -v,
        Err(_) => f64::NAN,
    })
}

pub fn mixture_to_grid(mix: &GaussianMixture, axes: &[Axis]) -> Result<GriddedDensity> {
    if axes.len() != mix.dim() {
        return Err(Error::DimensionMismatch {
            what: "grid axes",
            expected: mix.dim(),
            got: axes.len(),
        });
    }
    grid_from_log_density(axes.to_vec(), |x| mix.logpdf(&DVector::from_column_slice(x)).unwrap_or(f64::NAN))
}

fn check_same_axes(a: &GriddedDensity, b: &GriddedDensity) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    let same = a.axes.len() == b.axes.len()
        && a.axes.iter().zip(&b.axes).all(|(p, q)| p.n == q.n && close(p.lo, q.lo) && close(p.hi, q.hi));
    if !same || a.values.len() != b.values.len() {
        return Err(Error::InvalidArgument("densities live on different grids".into()));
    }
    Ok(())
}

/// `½ Σ |a − b| · cell volume`.
pub fn tv_distance(a: &GriddedDensity, b: &GriddedDensity) -> Result<f64> {
    check_same_axes(a, b)?;
    let l1: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(0.5 * l1 * a.cell_volume())
}

/// Grid estimate of `KL(a ‖ b)`; infinite when `b` vanishes where `a` does not.
pub fn kl_divergence(a: &GriddedDensity, b: &GriddedDensity) -> Result<f64> {
    check_same_axes(a, b)?;
    let mut acc = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        if *x > 0.0 {
            if *y <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += x * (x / y).ln();
        }
    }
    Ok(acc * a.cell_volume())
}

/// The exact `n`-th iterate of the split flow between Gaussian endpoints:
/// precision `s·C₀⁻¹ + (1−s)·C_post⁻¹` with `s = (1−Δt)ⁿ`.
pub fn interpolant_iterate(prior: &Gaussian, posterior: &Gaussian, dt: f64, n: usize) -> Result<Gaussian> {
    if prior.dim() != posterior.dim() {
        return Err(Error::DimensionMismatch {
            what: "posterior",
            expected: prior.dim(),
            got: posterior.dim(),
        });
    }
    if n == 0 {
        return Ok(prior.clone());
    }
    let s = (1.0 - dt).powi(n as i32);
    let p0 = cholesky_inverse(prior.cholesky());
    let p1 = cholesky_inverse(posterior.cholesky());
    let prec = symmetrized(&(&p0 * s + &p1 * (1.0 - s)));
    let shift = &p0 * prior.mean() * s + &p1 * posterior.mean() * (1.0 - s);
    let l = cholesky_with_jitter(&prec).ok_or(Error::NotPositiveDefinite { what: "interpolant precision" })?;
    let cov = cholesky_inverse(&l);
    let mean = &cov * shift;
    Gaussian::new(mean, cov)
}

/// One component's state in the simplified dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weight: f64,
}

/// Closed-form solution of the well-separated-modes dynamics at time `t`:
/// each component relaxes to its own target Gaussian and the weights follow
/// `w_k(t) ∝ w*_k (w_k(0)/w*_k)^{e^{−t}}`.
pub fn simplified_dynamics(initial: &[ComponentState], target: &[ComponentState], t: f64) -> Result<Vec<ComponentState>> {
    if initial.len() != target.len() || initial.is_empty() {
        return Err(Error::InvalidArgument("initial and target need the same positive number of components".into()));
    }
    let e = (-t).exp();
    let mut out = Vec::with_capacity(initial.len());
    for (s0, st) in initial.iter().zip(target) {
        let p0 = cholesky_inverse(
            &cholesky_with_jitter(&s0.cov).ok_or(Error::NotPositiveDefinite { what: "initial covariance" })?,
        );
        let pt = cholesky_inverse(
            &cholesky_with_jitter(&st.cov).ok_or(Error::NotPositiveDefinite { what: "target covariance" })?,
        );
        let prec = symmetrized(&(&pt + (&p0 - &pt) * e));
        let cov = cholesky_inverse(
            &cholesky_with_jitter(&prec).ok_or(Error::NotPositiveDefinite { what: "dynamics precision" })?,
        );
        let mean = &st.mean + &cov * &p0 * (&s0.mean - &st.mean) * e;
        out.push(ComponentState { mean, cov, weight: 0.0 });
    }
    let logs: Vec<f64> = initial
        .iter()
        .zip(target)
        .map(|(s0, st)| st.weight.ln() + e * (s0.weight / st.weight).ln())
        .collect();
    let total = crate::gaussian::logsumexp(&logs);
    for (o, l) in out.iter_mut().zip(&logs) {
        o.weight = (l - total).exp();
    }
    Ok(out)
}

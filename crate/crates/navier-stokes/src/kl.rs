//! Karhunen-Loeve parameterization of the initial vorticity for the
//! covariance operator `(−Δ)^{-2}` on mean-zero periodic functions.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{NsError, Result};
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

/// One basis function `√λ ψ(x)` with `ψ = cos(l·x)/(√2π)` or `sin(l·x)/(√2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlMode {
    pub l: (i64, i64),
    pub trig: Trig,
    /// `|l|^{-4}`.
    pub lambda: f64,
}

impl KlMode {
    pub fn psi(&self, x1: f64, x2: f64) -> f64 {
        let phase = self.l.0 as f64 * x1 + self.l.1 as f64 * x2;
        let v = match self.trig {
            Trig::Cos => phase.cos(),
            Trig::Sin => phase.sin(),
        };
        v / (2f64.sqrt() * PI)
    }
}

/// Half lattice `{l₁+l₂ > 0} ∪ {l₁+l₂ = 0, l₁ > 0}`, one representative of
/// each `±l` pair.
pub fn in_half_lattice(l: (i64, i64)) -> bool {
    let s = l.0 + l.1;
    s > 0 || (s == 0 && l.0 > 0)
}

/// First `count` modes in order of decreasing eigenvalue. Equal `|l|` are
/// ordered lexicographically in `(l₁, l₂)`, and each `l` contributes its
/// cosine before its sine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlBasis {
    modes: Vec<KlMode>,
}

/// Prior variance of every KL coefficient.
pub const COEFFICIENT_VARIANCE: f64 = 2.0 * PI * PI;

impl KlBasis {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(NsError::Config("KL truncation must be positive".into()));
        }
        let r = (count as f64).sqrt().ceil() as i64 + 1;
        let mut lattice: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|a| (-r..=r).map(move |b| (a, b)))
            .filter(|&l| in_half_lattice(l))
            .collect();
        lattice.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
        let modes = lattice
            .into_iter()
            .flat_map(|l| {
                let lambda = ((l.0 * l.0 + l.1 * l.1) as f64).powi(-2);
                [Trig::Cos, Trig::Sin].map(|trig| KlMode { l, trig, lambda })
            })
            .take(count)
            .collect();
        Ok(Self { modes })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[KlMode] {
        &self.modes
    }

    /// Largest `|l_i|` over the basis, which the grid must resolve.
    pub fn max_wavenumber(&self) -> i64 {
        self.modes.iter().map(|m| m.l.0.abs().max(m.l.1.abs())).max().unwrap_or(0)
    }

    /// `ω₀(x) = Σ θ_i √λ_i ψ_i(x)` at the nodes of an `n × n` grid.
    pub fn expand(&self, theta: &[f64], n: usize) -> Result<Field> {
        if theta.len() > self.modes.len() {
            return Err(NsError::Shape(format!(
                "{} coefficients for a {}-term expansion",
                theta.len(),
                self.modes.len()
            )));
        }
        let active: Vec<(&KlMode, f64)> = self
            .modes
            .iter()
            .zip(theta)
            .filter(|(_, t)| **t != 0.0)
            .map(|(m, t)| (m, t * m.lambda.sqrt()))
            .collect();
        Ok(Field::from_fn(n, |x1, x2| active.iter().map(|(m, c)| c * m.psi(x1, x2)).sum()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_lattice() {
        let b = KlBasis::new(8).unwrap();
        let ls: Vec<_> = b.modes().iter().map(|m| (m.l, m.trig)).collect();
        assert_eq!(
            ls,
            vec![
                ((0, 1), Trig::Cos),
                ((0, 1), Trig::Sin),
                ((1, 0), Trig::Cos),
                ((1, 0), Trig::Sin),
                ((1, -1), Trig::Cos),
                ((1, -1), Trig::Sin),
                ((1, 1), Trig::Cos),
                ((1, 1), Trig::Sin),
            ]
        );
        let big = KlBasis::new(128).unwrap();
        assert_eq!(big.len(), 128);
        assert!(big.modes().windows(2).all(|w| w[0].lambda >= w[1].lambda));
        assert!(big.modes().iter().all(|m| in_half_lattice(m.l)));
        let mut ls: Vec<_> = big.modes().iter().map(|m| (m.l, m.trig)).collect();
        ls.dedup();
        assert_eq!(ls.len(), 128);
    }

    #[test]
    fn half_lattice_picks_one_of_each_pair() {
        for a in -5..=5 {
            for b in -5..=5 {
                if (a, b) != (0, 0) {
                    assert!(in_half_lattice((a, b)) != in_half_lattice((-a, -b)));
                }
            }
        }
    }

    #[test]
    fn expansion_examples() {
        let b = KlBasis::new(32).unwrap();
        let zero = b.expand(&[0.0; 32], 32).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));

        // unit coefficient on the (1,0) cosine: λ = 1, field cos(x₁)/(√2π)
        let mut theta = vec![0.0; 32];
        theta[2] = 1.0;
        let f = b.expand(&theta, 32).unwrap();
        let peak = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - 1.0 / (2f64.sqrt() * PI)).abs() < 1e-14);
        assert!((f.at(0, 5) - 1.0 / (2f64.sqrt() * PI)).abs() < 1e-14);

        let theta: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.9).collect();
        assert!(b.expand(&theta, 32).unwrap().mean().abs() < 1e-12);
        assert!(b.expand(&[0.0; 33], 32).is_err());
    }

    #[test]
    fn basis_is_orthonormal_by_quadrature() {
        let b = KlBasis::new(128).unwrap();
        let n = 64;
        let h = 2.0 * PI / n as f64;
        let fields: Vec<Vec<f64>> = b
            .modes()
            .iter()
            .map(|m| Field::from_fn(n, |x1, x2| m.psi(x1, x2)).values().to_vec())
            .collect();
        for i in 0..fields.len() {
            for j in i..fields.len() {
                let g: f64 = fields[i].iter().zip(&fields[j]).map(|(a, c)| a * c).sum::<f64>() * h * h;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "gram[{i},{j}] = {g}");
            }
        }
    }
}

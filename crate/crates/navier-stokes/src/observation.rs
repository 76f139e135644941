//! Antisymmetric pointwise observations `ω(x₁, x₂) − ω(2π − x₁, x₂)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{NsError, Result};
use crate::grid::Field;

/// Measurement lattice in the left half of the box. Locations are stored as
/// fractions `(p/16, j/8)` of `2π`, so they land on nodes of any grid whose
/// size is a multiple of 16.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationOperator {
    lattice: Vec<(usize, usize)>,
    pub noise_std: f64,
}

const X1_DIVISIONS: usize = 16;
const X2_DIVISIONS: usize = 8;

impl Default for ObservationOperator {
    /// 7 × 8 = 56 points: `x₁ = 2πp/16` for `p = 1..7`, `x₂ = 2πj/8` for
    /// `j = 0..7`, ordered with `x₁` outer.
    fn default() -> Self {
        let lattice = (1..X1_DIVISIONS / 2)
            .flat_map(|p| (0..X2_DIVISIONS).map(move |j| (p, j)))
            .collect();
        Self { lattice, noise_std: 0.1 }
    }
}

impl ObservationOperator {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Physical coordinates of the measurement points.
    pub fn locations(&self) -> Vec<(f64, f64)> {
        self.lattice
            .iter()
            .map(|&(p, j)| (2.0 * PI * p as f64 / X1_DIVISIONS as f64, 2.0 * PI * j as f64 / X2_DIVISIONS as f64))
            .collect()
    }

    /// Mirror partners `(2π − x₁, x₂)`.
    pub fn mirror_locations(&self) -> Vec<(f64, f64)> {
        self.locations().into_iter().map(|(a, b)| (2.0 * PI - a, b)).collect()
    }

    /// Stacked differences, one block of `len()` values per field.
    pub fn observe(&self, fields: &[Field]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(fields.len() * self.len());
        for f in fields {
            let n = f.n();
            if n % X1_DIVISIONS != 0 {
                return Err(NsError::Shape(format!("grid size {n} does not contain the measurement lattice")));
            }
            let (s1, s2) = (n / X1_DIVISIONS, n / X2_DIVISIONS);
            for &(p, j) in &self.lattice {
                let (i1, i2) = (p * s1, j * s2);
                out.push(f.at(i1, i2) - f.at(n - i1, i2));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_layout() {
        let op = ObservationOperator::default();
        assert_eq!(op.len(), 56);
        assert!(op.locations().iter().all(|&(x1, _)| x1 > 0.0 && x1 < PI));
        assert_eq!(op.locations()[0], (2.0 * PI / 16.0, 0.0));
        assert_eq!(op.locations()[8], (4.0 * PI / 16.0, 0.0));
    }

    #[test]
    fn symmetric_field_observes_zero() {
        let f = Field::from_fn(32, |x1, x2| x1.cos() + (2.0 * x1).cos() * x2.sin());
        let obs = ObservationOperator::default().observe(&[f.clone(), f]).unwrap();
        assert_eq!(obs.len(), 112);
        assert!(obs.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn antisymmetric_field_doubles() {
        let f = Field::from_fn(64, |x1, x2| x1.sin() * (1.0 + x2.cos()));
        let op = ObservationOperator::default();
        let obs = op.observe(&[f]).unwrap();
        for (v, (x1, x2)) in obs.iter().zip(op.locations()) {
            assert!((v - 2.0 * x1.sin() * (1.0 + x2.cos())).abs() < 1e-12);
        }
    }
}

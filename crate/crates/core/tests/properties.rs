//! Randomized invariants of the Gaussian algebra, the two half-steps and the
//! grid metrics.

use std::sync::Arc;

use gmki_core::exploitation::exploit_mixture;
use gmki_core::exploration::explore_component;
use gmki_core::gaussian::{normalize_log_weights, sample_with_factor, Gaussian, GaussianMixture, WEIGHT_FLOOR};
use gmki_core::gmvi::mixture_score;
use gmki_core::inverse_problem::FnForward;
use gmki_core::oracles::{tv_distance, Axis, GriddedDensity};
use gmki_core::{DMatrix, DVector, InverseProblem, SpdMatrix};
use proptest::prelude::*;

fn matrix(n: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &vals[..n * n])
}

/// Orthogonal `Q` from the QR factorization of a generic matrix.
fn orthogonal(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut m = matrix(n, vals);
    for i in 0..n {
        m[(i, i)] += 3.0;
    }
    m.qr().q()
}

fn spd(n: usize, vals: &[f64], log_eigs: &[f64]) -> DMatrix<f64> {
    let q = orthogonal(n, vals);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, log_eigs[..n].iter().map(|l| 10f64.powf(*l))));
    let c = &q * d * q.transpose();
    (&c + c.transpose()) * 0.5
}

/// Well-conditioned invertible matrix.
fn invertible(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut a = matrix(n, vals);
    for i in 0..n {
        a[(i, i)] += if vals[i] >= 0.0 { 2.5 } else { -2.5 };
    }
    a
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn mixture(n: usize, k: usize, vals: &[f64]) -> GaussianMixture {
    let comps = (0..k)
        .map(|i| {
            let off = i * (n * n + n);
            let mean = DVector::from_column_slice(&vals[off..off + n]) * 3.0;
            let l = matrix(n, &vals[off + n..]) * 0.4 + DMatrix::identity(n, n);
            Gaussian::from_factor(mean, l).unwrap()
        })
        .collect();
    let lw = (0..k).map(|i| vals[vals.len() - 1 - i]).collect();
    GaussianMixture::new(comps, lw).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorization_round_trip(
        n in 1usize..6,
        vals in prop::collection::vec(-1.0f64..1.0, 36),
        log_eigs in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let c = spd(n, &vals, &log_eigs);
        let g = Gaussian::new(DVector::zeros(n), c.clone()).unwrap();
        let l = g.cholesky();
        prop_assert!((l * l.transpose() - &c).norm() / c.norm() <= 1e-10);
    }

    #[test]
    fn far_component_contributes_nothing(theta in -3.0f64..3.0, w in 0.05f64..0.95) {
        // second component's log-term is about −10⁶ at θ
        let far = theta + (2e6f64).sqrt();
        let mix = GaussianMixture::new(
            vec![
                Gaussian::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap(),
                Gaussian::new(DVector::from_element(1, far), DMatrix::from_element(1, 1, 1.0)).unwrap(),
            ],
            vec![w.ln(), (1.0 - w).ln()],
        ).unwrap();
        let t = DVector::from_element(1, theta);
        let lone = mix.log_weights()[0] + mix.component(0).logpdf(&t).unwrap();
        let v = mix.logpdf(&t).unwrap();
        prop_assert!(v.is_finite());
        prop_assert_eq!(v, lone);
    }

    #[test]
    fn normalize_is_idempotent(lw in prop::collection::vec(-60.0f64..5.0, 1..9)) {
        let once = normalize_log_weights(&lw).unwrap();
        let twice = normalize_log_weights(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
            prop_assert!(*a >= WEIGHT_FLOOR.ln());
        }
    }

    #[test]
    fn sampling_is_affine_equivariant(
        n in 1usize..5,
        vals in prop::collection::vec(-1.0f64..1.0, 16),
        lvals in prop::collection::vec(-1.0f64..1.0, 16),
        shift in prop::collection::vec(-5.0f64..5.0, 4),
        zs in prop::collection::vec(-3.0f64..3.0, 40),
    ) {
        let a = invertible(n, &vals);
        let l = matrix(n, &lvals).lower_triangle() + DMatrix::identity(n, n);
        let m = DVector::from_column_slice(&shift[..n]);
        let b = DVector::from_iterator(n, shift[..n].iter().map(|v| -0.5 * v + 1.0));
        let draws = DMatrix::from_row_slice(10, n, &zs[..10 * n]);
        let base = sample_with_factor(&m, &l, &draws).unwrap();
        let moved = sample_with_factor(&(&a * &m + &b), &(&a * &l), &draws).unwrap();
        for (s, t) in base.iter().zip(&moved) {
            let want = &a * s + &b;
            for i in 0..n {
                prop_assert!(close(t[i], want[i], 1e-12));
            }
        }
    }

    #[test]
    fn exploration_is_affine_equivariant(
        k in 1usize..4,
        vals in prop::collection::vec(-1.0f64..1.0, 24),
        avals in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-4.0f64..4.0, 2),
        zs in prop::collection::vec(-3.0f64..3.0, 400),
        dt in 0.05f64..0.9,
    ) {
        let n = 2;
        let mix = mixture(n, k, &vals);
        let a = invertible(n, &avals);
        let b = DVector::from_column_slice(&b);
        let moved = GaussianMixture::new(
            mix.components()
                .iter()
                .map(|g| Gaussian::from_factor(&a * g.mean() + &b, &a * g.factor()).unwrap())
                .collect(),
            mix.log_weights().to_vec(),
        ).unwrap();
        let draws = DMatrix::from_row_slice(200, n, &zs);
        let mut lw = Vec::new();
        let mut lw_moved = Vec::new();
        for c in 0..k {
            let e = explore_component(&mix, c, dt, &draws).unwrap();
            let f = explore_component(&moved, c, dt, &draws).unwrap();
            let want_m = &a * &e.mean + &b;
            let want_c = &a * &e.cov * a.transpose();
            for i in 0..n {
                prop_assert!(close(f.mean[i], want_m[i], 1e-9));
                for j in 0..n {
                    prop_assert!(close(f.cov[(i, j)], want_c[(i, j)], 1e-9));
                }
            }
            lw.push(e.log_w_hat);
            lw_moved.push(f.log_w_hat);
        }
        let (p, q) = (normalize_log_weights(&lw).unwrap(), normalize_log_weights(&lw_moved).unwrap());
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn linear_exploitation_is_exact_and_contracts(
        gvals in prop::collection::vec(-2.0f64..2.0, 6),
        cvals in prop::collection::vec(-1.0f64..1.0, 4),
        log_eigs in prop::collection::vec(-1.0f64..1.0, 2),
        m in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 3),
        dt in 0.05f64..0.95,
    ) {
        let g = DMatrix::from_row_slice(3, 2, &gvals);
        let gf = g.clone();
        let fwd = FnForward::new(2, 3, move |t: &DVector<f64>| &gf * t);
        let sigma_eta = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0]));
        let sigma_0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r0 = DVector::from_vec(vec![0.5, -0.5]);
        let y = DVector::from_column_slice(&y);
        let problem = InverseProblem::new(
            Arc::new(fwd),
            y.clone(),
            SpdMatrix::new(sigma_eta.clone()).unwrap(),
            r0.clone(),
            SpdMatrix::new(sigma_0.clone()).unwrap(),
        ).unwrap();
        let c = spd(2, &cvals, &log_eigs);
        let input = Gaussian::new(DVector::from_column_slice(&m), c.clone()).unwrap();
        let out = exploit_mixture(&GaussianMixture::single(input.clone()), &problem.augment(), dt).unwrap();
        let got = out.mixture.component(0);

        // multiply by exp(−Δt Φ_R) in closed form
        let s_eta = sigma_eta.try_inverse().unwrap();
        let s_0 = sigma_0.try_inverse().unwrap();
        let c_inv = c.clone().try_inverse().unwrap();
        let prec = &c_inv + (g.transpose() * &s_eta * &g + &s_0) * dt;
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * (&c_inv * input.mean() + (g.transpose() * &s_eta * &y + &s_0 * &r0) * dt);
        for i in 0..2 {
            prop_assert!(close(got.mean()[i], mean[i], 1e-10));
            for j in 0..2 {
                prop_assert!(close(got.cov()[(i, j)], cov[(i, j)], 1e-10));
            }
        }
        let gap = (&c - got.cov()).symmetric_eigenvalues();
        prop_assert!(gap.min() >= -1e-10 * c.norm());
        prop_assert_eq!(out.forward_evals, 5);
    }

    #[test]
    fn tv_is_a_metric_on_grids(
        a in prop::collection::vec(0.0f64..1.0, 64),
        b in prop::collection::vec(0.0f64..1.0, 64),
        c in prop::collection::vec(0.0f64..1.0, 64),
    ) {
        let axis = Axis::new(-2.0, 2.0, 8).unwrap();
        let grid = |v: &[f64]| {
            let h = axis.step() * axis.step();
            let mass: f64 = v.iter().sum::<f64>() * h + 1e-12;
            GriddedDensity { axes: vec![axis, axis], values: v.iter().map(|x| (x + 1e-12 / 64.0) / mass).collect() }
        };
        let (a, b, c) = (grid(&a), grid(&b), grid(&c));
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn score_integrates_to_log_density_differences(
        k in 1usize..4,
        vals in prop::collection::vec(-1.0f64..1.0, 24),
        p in prop::collection::vec(-4.0f64..4.0, 4),
    ) {
        let mix = mixture(2, k, &vals);
        let a = DVector::from_column_slice(&p[..2]);
        let b = DVector::from_column_slice(&p[2..]);
        // composite Simpson along the segment
        let steps = 2000;
        let mut integral = 0.0;
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let x = &a + (&b - &a) * s;
            let (grad, _) = mixture_score(&mix, &x).unwrap();
            integral += w * grad.dot(&(&b - &a));
        }
        integral /= 3.0 * steps as f64;
        let diff = mix.logpdf(&b).unwrap() - mix.logpdf(&a).unwrap();
        prop_assert!((integral - diff).abs() <= 1e-6 * diff.abs().max(1.0), "{integral} vs {diff}");
    }
}

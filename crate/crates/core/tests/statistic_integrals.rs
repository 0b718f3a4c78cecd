//! Closed-form statistics against direct two-dimensional integration of the
//! defining integrals (iterated adaptive quadrature on the half plane).

use vmem_lt::distributions::GammaMarginalNull;
use vmem_lt::lt_test::{empirical_lt, statistic_psi, statistic_s, xi_w, GammaWeight};
use vmem_lt::matrix::RowMatrix;
use vmem_lt::quadrature::integrate_to_infinity;
use vmem_lt::vmem::ResidualSeries;

fn integrate_2d(w: &GammaWeight, f: impl Fn(f64, f64) -> f64) -> f64 {
    let scale = w.kappa() * w.gamma();
    let inner = |u1: f64| {
        integrate_to_infinity(|u2| f(u1, u2) * w.density(u2), 0.0, scale, 1e-15, 1e-12)
            .unwrap()
            .value
            * w.density(u1)
    };
    integrate_to_infinity(inner, 0.0, scale, 1e-15, 1e-11).unwrap().value
}

fn matrix(rows: &[[f64; 2]]) -> RowMatrix {
    RowMatrix::from_rows(rows).unwrap()
}

#[test]
fn xi_equals_weighted_exponential_integral() {
    let w = GammaWeight::new(2.0, 2.0).unwrap();
    let x = [0.3, 0.7];
    let direct = integrate_2d(&w, |u1, u2| (-(u1 * x[0] + u2 * x[1])).exp());
    assert!((xi_w(&w, &x).unwrap() - direct).abs() < 1e-6);
}

#[test]
fn s_equals_integrated_squared_distance() {
    let w = GammaWeight::new(1.0, 1.0).unwrap();
    let phi = GammaMarginalNull::new(vec![2.0, 3.0]).unwrap();
    let rows = matrix(&[[1.0, 1.0], [0.5, 2.0], [2.0, 0.5]]);
    let closed = statistic_s(&ResidualSeries::new(rows.clone()).unwrap(), &phi, &w).unwrap().value;
    let direct = 3.0
        * integrate_2d(&w, |u1, u2| {
            let diff = empirical_lt(&rows, &[u1, u2]).unwrap() - phi.laplace_transform(&[u1, u2]).unwrap();
            diff * diff
        });
    assert!((closed / direct - 1.0).abs() < 1e-6, "{closed} vs {direct}");
}

#[test]
fn psi_equals_integrated_two_sample_distance() {
    let w = GammaWeight::new(1.0, 2.0).unwrap();
    let a = matrix(&[[0.4, 1.3], [1.8, 0.6]]);
    let b = matrix(&[[1.1, 0.2], [0.7, 0.9], [2.5, 1.6]]);
    let closed = statistic_psi(&ResidualSeries::new(a.clone()).unwrap(), &b, &w).unwrap().value;
    let (t, s) = (2.0, 3.0);
    let direct = t * s / (t + s)
        * integrate_2d(&w, |u1, u2| {
            let diff = empirical_lt(&a, &[u1, u2]).unwrap() - empirical_lt(&b, &[u1, u2]).unwrap();
            diff * diff
        });
    assert!((closed / direct - 1.0).abs() < 1e-6, "{closed} vs {direct}");
}

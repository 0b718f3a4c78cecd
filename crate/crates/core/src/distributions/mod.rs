//! Innovation laws: the independent unit-mean Gamma null and its
//! copula-perturbed alternatives.

pub mod special;

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng::substream;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

pub use special::gamma_quantile;

/// Anything that can produce i.i.d. innovation vectors for a vMEM path.
pub trait InnovationSampler: Sync {
    fn dim(&self) -> usize;

    /// Draws `n` i.i.d. rows.
    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<RowMatrix>;
}

/// Independent Gamma(β_j, β_j) marginals, each with mean one and variance
/// 1/β_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMarginalNull {
    betas: Vec<f64>,
}

impl GammaMarginalNull {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidInput("null needs at least one component".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(format!("gamma shape must be positive, got {b}")));
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn dim(&self) -> usize {
        self.betas.len()
    }

    /// Laplace transform `Π_j (1 + u_j/β_j)^{-β_j}`.
    pub fn laplace_transform(&self, u: &[f64]) -> Result<f64> {
        check_point(u, self.dim())?;
        Ok(self
            .betas
            .iter()
            .zip(u)
            .map(|(&b, &uj)| (-b * (uj / b).ln_1p()).exp())
            .product())
    }

    pub fn variances(&self) -> Vec<f64> {
        self.betas.iter().map(|b| 1.0 / b).collect()
    }
}

/// `L_φ(u)` for the independent Gamma null.
pub fn null_lt(phi: &GammaMarginalNull, u: &[f64]) -> Result<f64> {
    phi.laplace_transform(u)
}

pub(crate) fn check_point(u: &[f64], d: usize) -> Result<()> {
    if u.len() != d {
        return Err(Error::Dimension(format!("point has {} components, expected {d}", u.len())));
    }
    if let Some(v) = u.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!("argument must be nonnegative, got {v}")));
    }
    Ok(())
}

impl InnovationSampler for GammaMarginalNull {
    fn dim(&self) -> usize {
        self.betas.len()
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<RowMatrix> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        let d = self.dim();
        let laws = self
            .betas
            .iter()
            .map(|&b| Gamma::new(b, 1.0 / b).map_err(|e| Error::InvalidInput(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for law in &laws {
                data.push(law.sample(rng));
            }
        }
        check_positive(&data)?;
        RowMatrix::new(n, d, data)
    }
}

fn check_positive(data: &[f64]) -> Result<()> {
    match data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::InvalidInput(format!("innovation draw {v} is not strictly positive"))),
        None => Ok(()),
    }
}

/// Dependence structure coupling the Gamma marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CopulaSpec {
    Independence,
    /// Exchangeable Gaussian copula with common correlation `rho`.
    Gaussian { rho: f64 },
    /// Clayton copula with parameter `theta > 0`.
    Clayton { theta: f64 },
}

impl CopulaSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CopulaSpec::Independence => "independence",
            CopulaSpec::Gaussian { .. } => "gaussian",
            CopulaSpec::Clayton { .. } => "clayton",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            CopulaSpec::Independence => 0.0,
            CopulaSpec::Gaussian { rho } => rho,
            CopulaSpec::Clayton { theta } => theta,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            CopulaSpec::Independence => Ok(()),
            CopulaSpec::Gaussian { rho } => {
                let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
                if rho > lower && rho < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "gaussian correlation {rho} outside ({lower}, 1) for d={d}"
                    )))
                }
            }
            CopulaSpec::Clayton { theta } => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("clayton parameter must be positive, got {theta}")))
                }
            }
        }
    }

    /// Population Kendall's tau of any bivariate margin.
    pub fn kendall_tau(&self) -> f64 {
        match *self {
            CopulaSpec::Independence => 0.0,
            CopulaSpec::Gaussian { rho } => 2.0 / std::f64::consts::PI * rho.asin(),
            CopulaSpec::Clayton { theta } => theta / (theta + 2.0),
        }
    }
}

/// Gamma marginals joined by a copula. With the independence copula this
/// is the null law `G_φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationLaw {
    pub marginals: GammaMarginalNull,
    pub copula: CopulaSpec,
}

impl InnovationLaw {
    pub fn new(marginals: GammaMarginalNull, copula: CopulaSpec) -> Result<Self> {
        copula.validate(marginals.dim())?;
        Ok(Self { marginals, copula })
    }

    pub fn null(marginals: GammaMarginalNull) -> Self {
        Self {
            marginals,
            copula: CopulaSpec::Independence,
        }
    }

    fn uniforms_to_gamma(&self, u: &mut [f64]) -> Result<()> {
        let d = self.marginals.dim();
        for row in u.chunks_exact_mut(d) {
            for (v, &b) in row.iter_mut().zip(self.marginals.betas()) {
                let p = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                *v = gamma_quantile(b, p)?;
            }
        }
        Ok(())
    }
}

impl InnovationSampler for InnovationLaw {
    fn dim(&self) -> usize {
        self.marginals.dim()
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<RowMatrix> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        self.copula.validate(self.dim())?;
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        match self.copula {
            CopulaSpec::Independence => return self.marginals.sample(n, rng),
            CopulaSpec::Gaussian { rho } => {
                let corr = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
                let chol = corr
                    .cholesky()
                    .ok_or_else(|| Error::InvalidInput("correlation matrix not positive definite".into()))?;
                let l = chol.l();
                let mut z = vec![0.0; d];
                for _ in 0..n {
                    z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                    for i in 0..d {
                        let zi: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                        data.push(special::normal_cdf(zi));
                    }
                }
            }
            CopulaSpec::Clayton { theta } => {
                // Marshall-Olkin frailty: V ~ Gamma(1/θ, 1), U_j = (1 + E_j/V)^(-1/θ).
                let frailty = Gamma::new(1.0 / theta, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
                for _ in 0..n {
                    let v: f64 = frailty.sample(rng);
                    for _ in 0..d {
                        let e: f64 = Exp1.sample(rng);
                        data.push((-(e / v).ln_1p() / theta).exp());
                    }
                }
            }
        }
        self.uniforms_to_gamma(&mut data)?;
        check_positive(&data)?;
        RowMatrix::new(n, d, data)
    }
}

/// Draws `n` innovation vectors from `law` on the stream keyed by `seed`.
pub fn sample_innovations(law: &InnovationLaw, n: usize, seed: u64) -> Result<RowMatrix> {
    let mut rng = substream(seed, &[]);
    law.sample(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{kendall_tau, ks_two_sample};

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn law(copula: CopulaSpec) -> InnovationLaw {
        InnovationLaw::new(GammaMarginalNull::new(vec![2.0, 3.0]).unwrap(), copula).unwrap()
    }

    #[test]
    fn lt_closed_form_values() {
        let phi = GammaMarginalNull::new(vec![2.0, 3.0]).unwrap();
        assert_eq!(null_lt(&phi, &[0.0, 0.0]).unwrap(), 1.0);
        assert!((null_lt(&phi, &[2.0, 3.0]).unwrap() - 0.03125).abs() < 1e-15);
        assert!(null_lt(&phi, &[-0.1, 0.0]).is_err());
    }

    #[test]
    fn lt_matches_monte_carlo() {
        let phi = GammaMarginalNull::new(vec![2.0, 3.0]).unwrap();
        let u = [0.7, 1.3];
        let z = phi.sample(1_000_000, &mut substream(11, &[])).unwrap();
        let vals: Vec<f64> = z.rows().map(|r| (-(u[0] * r[0] + u[1] * r[1])).exp()).collect();
        let (m, v) = moments(&vals);
        let se = (v / vals.len() as f64).sqrt();
        let exact = null_lt(&phi, &u).unwrap();
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
    }

    #[test]
    fn unit_mean_slope_at_origin() {
        let phi = GammaMarginalNull::new(vec![2.0, 3.0, 0.7]).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut up = vec![0.0; 3];
            up[j] = h;
            // one-sided: the transform is only defined on u >= 0
            let mut up2 = vec![0.0; 3];
            up2[j] = 2.0 * h;
            let f0 = 1.0;
            let f1 = null_lt(&phi, &up).unwrap();
            let f2 = null_lt(&phi, &up2).unwrap();
            let slope = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
            assert!((slope + 1.0).abs() < 1e-4, "component {j}: {slope}");
        }
    }

    #[test]
    fn lt_is_nonincreasing_and_convex_along_axes() {
        let phi = GammaMarginalNull::new(vec![0.5, 3.0]).unwrap();
        for j in 0..2 {
            let vals: Vec<f64> = (0..200)
                .map(|k| {
                    let mut u = vec![0.4, 0.4];
                    u[j] = k as f64 * 0.05;
                    null_lt(&phi, &u).unwrap()
                })
                .collect();
            for w in vals.windows(3) {
                assert!(w[1] <= w[0]);
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-15);
            }
        }
    }

    #[test]
    fn independence_moments() {
        let x = sample_innovations(&law(CopulaSpec::Independence), 200_000, 3).unwrap();
        for (j, want_var) in [0.5, 1.0 / 3.0].into_iter().enumerate() {
            let (m, v) = moments(&x.column(j));
            assert!((0.99..=1.01).contains(&m), "mean {m}");
            assert!((v / want_var - 1.0).abs() < 0.03, "var {v}");
        }
    }

    #[test]
    fn gaussian_kendall_tau() {
        let x = sample_innovations(&law(CopulaSpec::Gaussian { rho: 0.2 }), 200_000, 5).unwrap();
        let tau = kendall_tau(&x.column(0), &x.column(1));
        assert!((tau - 0.1282).abs() < 0.005, "tau {tau}");
        assert!((CopulaSpec::Gaussian { rho: 0.2 }.kendall_tau() - 0.128188).abs() < 1e-6);
    }

    #[test]
    fn clayton_kendall_tau() {
        let x = sample_innovations(&law(CopulaSpec::Clayton { theta: 0.3 }), 200_000, 6).unwrap();
        let tau = kendall_tau(&x.column(0), &x.column(1));
        assert!((tau - 0.3 / 2.3).abs() < 0.005, "tau {tau}");
    }

    #[test]
    fn copulas_preserve_marginals() {
        let n = 200_000;
        for (k, copula) in [
            CopulaSpec::Independence,
            CopulaSpec::Gaussian { rho: 0.2 },
            CopulaSpec::Gaussian { rho: -0.5 },
            CopulaSpec::Clayton { theta: 0.3 },
            CopulaSpec::Clayton { theta: 2.0 },
        ]
        .into_iter()
        .enumerate()
        {
            let x = sample_innovations(&law(copula), n, 100 + k as u64).unwrap();
            for (j, beta) in [2.0f64, 3.0].into_iter().enumerate() {
                let (m, v) = moments(&x.column(j));
                let var = 1.0 / beta;
                // sd of the sample mean and (approximately) of the sample variance
                let se_m = (var / n as f64).sqrt();
                let kurt_excess = 6.0 / beta;
                let se_v = var * ((2.0 + kurt_excess) / n as f64).sqrt();
                assert!((m - 1.0).abs() < 3.0 * se_m, "{copula:?} comp {j}: mean {m}");
                assert!((v - var).abs() < 3.0 * se_v, "{copula:?} comp {j}: var {v}");
            }
        }
    }

    #[test]
    fn zero_correlation_gaussian_matches_independence() {
        let a = sample_innovations(&law(CopulaSpec::Gaussian { rho: 0.0 }), 50_000, 21).unwrap();
        let b = sample_innovations(&law(CopulaSpec::Independence), 50_000, 22).unwrap();
        for j in 0..2 {
            let (_, p) = ks_two_sample(&a.column(j), &b.column(j));
            assert!(p > 0.01, "component {j}: p = {p}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let m = GammaMarginalNull::new(vec![2.0, 3.0]).unwrap();
        assert!(InnovationLaw::new(m.clone(), CopulaSpec::Gaussian { rho: 1.0 }).is_err());
        assert!(InnovationLaw::new(m.clone(), CopulaSpec::Clayton { theta: 0.0 }).is_err());
        assert!(GammaMarginalNull::new(vec![2.0, -1.0]).is_err());
        assert!(sample_innovations(&law(CopulaSpec::Independence), 0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = law(CopulaSpec::Clayton { theta: 0.15 });
        assert_eq!(sample_innovations(&l, 100, 9).unwrap(), sample_innovations(&l, 100, 9).unwrap());
    }
}

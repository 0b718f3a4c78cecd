//! GARCH-type vector multiplicative error model
//! `x_t = μ_t ⊙ ε_t`, `μ_t = α₀ + Σ_j A_j x_{t-j} + Σ_k B_k μ_{t-k}`.

pub mod io;

use crate::distributions::InnovationSampler;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng::substream;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A `T × d` series of strictly positive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries(RowMatrix);

impl ObservationSeries {
    pub fn new(data: RowMatrix) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("series must have T >= 1 and d >= 1".into()));
        }
        for (t, row) in data.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "row {} (column x{}): value {v} is not strictly positive and finite",
                        t + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self(data))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(RowMatrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.0
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    /// First `n` observations.
    pub fn truncate(&self, n: usize) -> Self {
        Self(self.0.head(n))
    }
}

/// Dynamic parameters ϑ = (α₀, A_1..A_p, B_1..B_q).
#[derive(Debug, Clone, PartialEq)]
pub struct VmemParams {
    alpha0: Vec<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    b_diagonal: bool,
}

impl VmemParams {
    pub fn new(alpha0: Vec<f64>, a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>, b_diagonal: bool) -> Result<Self> {
        let d = alpha0.len();
        if d == 0 {
            return Err(Error::InvalidInput("alpha0 must be nonempty".into()));
        }
        if let Some(v) = alpha0.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("alpha0 entries must be positive, got {v}")));
        }
        for (name, mats) in [("A", &a), ("B", &b)] {
            for (k, m) in mats.iter().enumerate() {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "{name}_{} is {}x{}, expected {d}x{d}",
                        k + 1,
                        m.nrows(),
                        m.ncols()
                    )));
                }
                if let Some(v) = m.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                    return Err(Error::InvalidInput(format!(
                        "{name}_{} entries must be nonnegative, got {v}",
                        k + 1
                    )));
                }
            }
        }
        if b_diagonal {
            for (k, m) in b.iter().enumerate() {
                if (0..d).any(|i| (0..d).any(|j| i != j && m[(i, j)] != 0.0)) {
                    return Err(Error::InvalidInput(format!("B_{} must be diagonal", k + 1)));
                }
            }
        }
        Ok(Self { alpha0, a, b, b_diagonal })
    }

    /// Builds from row-major nested vectors, `a[j][r][c]`.
    pub fn from_nested(alpha0: Vec<f64>, a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>], b_diagonal: bool) -> Result<Self> {
        let to_mat = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension("coefficient matrices must be square".into()));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        let a = a.iter().map(to_mat).collect::<Result<Vec<_>>>()?;
        let b = b.iter().map(to_mat).collect::<Result<Vec<_>>>()?;
        Self::new(alpha0, a, b, b_diagonal)
    }

    /// The bivariate vMEM(1,1) used throughout the simulation study:
    /// α₀ = (0.2, 0.2), A = [[0.3, 0.1], [0.1, 0.3]], B = diag(0.3, 0.3).
    pub fn reference_bivariate() -> Self {
        Self::from_nested(
            vec![0.2, 0.2],
            &[vec![vec![0.3, 0.1], vec![0.1, 0.3]]],
            &[vec![vec![0.3, 0.0], vec![0.0, 0.3]]],
            true,
        )
        .expect("reference parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.alpha0.len()
    }

    /// `(p, q)`.
    pub fn order(&self) -> (usize, usize) {
        (self.a.len(), self.b.len())
    }

    pub fn alpha0(&self) -> &[f64] {
        &self.alpha0
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn b_diagonal(&self) -> bool {
        self.b_diagonal
    }

    /// Free entries of ϑ: `d + d²p + d·q` with diagonal B, `d + d²(p+q)` otherwise.
    pub fn n_free(&self) -> usize {
        let d = self.dim();
        let (p, q) = self.order();
        d + d * d * p + if self.b_diagonal { d * q } else { d * d * q }
    }

    /// `Σ_j A_j + Σ_k B_k`.
    pub fn persistence(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.a
            .iter()
            .chain(&self.b)
            .fold(DMatrix::zeros(d, d), |acc, m| acc + m)
    }

    /// Spectral radius of `Σ A_j + Σ B_k`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.persistence())
    }

    /// Spectral radius of `Σ B_k`; rate at which initial values are forgotten.
    pub fn b_spectral_radius(&self) -> f64 {
        let d = self.dim();
        spectral_radius(&self.b.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m))
    }

    /// `(I - ΣA - ΣB)^{-1} α₀`.
    pub fn unconditional_mean(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let m = DMatrix::identity(d, d) - self.persistence();
        let sol = m
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&self.alpha0))
            .ok_or_else(|| Error::InvalidInput("I - ΣA - ΣB is singular".into()))?;
        Ok(sol.iter().copied().collect())
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 2 {
        // closed form keeps the likelihood loop allocation-light
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = tr * tr / 4.0 - det;
        return if disc >= 0.0 {
            (tr / 2.0).abs() + disc.sqrt()
        } else {
            det.sqrt()
        };
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Values standing in for `x_t` and `μ_t` at `t ≤ 0`.
/// `x_lags[i]` is `x_{-i}` and `mu_lags[i]` is `μ_{-i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presample {
    pub x_lags: Vec<Vec<f64>>,
    pub mu_lags: Vec<Vec<f64>>,
}

impl Presample {
    /// Every pre-sample `x` and `μ` equal to `level`.
    pub fn constant(level: &[f64], p: usize, q: usize) -> Self {
        Self {
            x_lags: vec![level.to_vec(); p],
            mu_lags: vec![level.to_vec(); q],
        }
    }

    fn check(&self, d: usize, p: usize, q: usize) -> Result<()> {
        if self.x_lags.len() < p || self.mu_lags.len() < q {
            return Err(Error::Dimension(format!(
                "pre-sample has {} x and {} mu lags, order needs ({p},{q})",
                self.x_lags.len(),
                self.mu_lags.len()
            )));
        }
        if self.x_lags.iter().chain(&self.mu_lags).any(|v| v.len() != d) {
            return Err(Error::Dimension(format!("pre-sample vectors must have {d} components")));
        }
        Ok(())
    }
}

/// How the recursion is started.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum InitPolicy {
    /// Pre-sample `x` and `μ` set to the componentwise sample mean.
    #[default]
    SampleMean,
    Fixed(Presample),
}

impl InitPolicy {
    pub fn resolve(&self, series: &ObservationSeries, p: usize, q: usize) -> Presample {
        match self {
            InitPolicy::SampleMean => Presample::constant(&series.matrix().column_means(), p, q),
            InitPolicy::Fixed(pre) => pre.clone(),
        }
    }
}

/// Conditional means `μ̂_1..μ̂_T` with the pre-sample that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSeries {
    data: RowMatrix,
    init: Presample,
}

impl MeanSeries {
    pub fn matrix(&self) -> &RowMatrix {
        &self.data
    }

    pub fn init(&self) -> &Presample {
        &self.init
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// `ε̂_t = x_t ⊘ μ̂_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries(RowMatrix);

impl ResidualSeries {
    /// Wraps an arbitrary positive sample (e.g. true innovations).
    pub fn new(data: RowMatrix) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("residual sample must be nonempty".into()));
        }
        if let Some(v) = data.as_slice().iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("residual {v} is not strictly positive")));
        }
        Ok(Self(data))
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

/// One step of the mean recursion, writing into `out`.
/// `x_lag(i)` / `mu_lag(k)` return `x_{t-i}` / `μ_{t-k}` for `i, k ≥ 1`.
#[inline]
fn mean_step<'a>(
    params: &VmemParams,
    x_lag: impl Fn(usize) -> &'a [f64],
    mu_lag: impl Fn(usize) -> &'a [f64],
    out: &mut [f64],
) {
    let d = params.dim();
    out.copy_from_slice(&params.alpha0);
    for (i, a) in params.a.iter().enumerate() {
        let x = x_lag(i + 1);
        for r in 0..d {
            out[r] += (0..d).map(|c| a[(r, c)] * x[c]).sum::<f64>();
        }
    }
    for (k, b) in params.b.iter().enumerate() {
        let mu = mu_lag(k + 1);
        if params.b_diagonal {
            for r in 0..d {
                out[r] += b[(r, r)] * mu[r];
            }
        } else {
            for r in 0..d {
                out[r] += (0..d).map(|c| b[(r, c)] * mu[c]).sum::<f64>();
            }
        }
    }
}

/// Runs the mean recursion over the observed series.
///
/// A spectral radius ≥ 1 is only logged here: optimizer iterates may sit on
/// the boundary. Non-finite output is an error.
pub fn filter_means(series: &ObservationSeries, params: &VmemParams, init: &InitPolicy) -> Result<MeanSeries> {
    let d = series.dim();
    if params.dim() != d {
        return Err(Error::Dimension(format!(
            "series has {d} components, parameters have {}",
            params.dim()
        )));
    }
    let (p, q) = params.order();
    let pre = init.resolve(series, p, q);
    pre.check(d, p, q)?;
    let rho = params.spectral_radius();
    if rho >= 1.0 {
        log::warn!("filtering with nonstationary parameters (spectral radius {rho:.4})");
    }
    let x = series.matrix();
    let n = series.len();
    let mut mu = RowMatrix::zeros(n, d);
    let mut cur = vec![0.0; d];
    for t in 0..n {
        {
            let mu_ref = &mu;
            let pre_ref = &pre;
            let x_lag = |i: usize| -> &[f64] {
                if i <= t { x.row(t - i) } else { &pre_ref.x_lags[i - t - 1] }
            };
            let mu_lag = |k: usize| -> &[f64] {
                if k <= t { mu_ref.row(t - k) } else { &pre_ref.mu_lags[k - t - 1] }
            };
            mean_step(params, x_lag, mu_lag, &mut cur);
        }
        if let Some(v) = cur.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonFinite(format!("conditional mean {v} at t={}", t + 1)));
        }
        mu.row_mut(t).copy_from_slice(&cur);
    }
    Ok(MeanSeries { data: mu, init: pre })
}

/// Elementwise `x_t ⊘ μ̂_t`.
pub fn compute_residuals(series: &ObservationSeries, means: &MeanSeries) -> Result<ResidualSeries> {
    let (x, mu) = (series.matrix(), means.matrix());
    if x.nrows() != mu.nrows() || x.ncols() != mu.ncols() {
        return Err(Error::Dimension(format!(
            "series is {}x{}, means are {}x{}",
            x.nrows(),
            x.ncols(),
            mu.nrows(),
            mu.ncols()
        )));
    }
    let mut out = Vec::with_capacity(x.as_slice().len());
    for (xv, mv) in x.as_slice().iter().zip(mu.as_slice()) {
        if !(*mv > 0.0) {
            return Err(Error::InvalidInput(format!("conditional mean {mv} is not positive")));
        }
        out.push(xv / mv);
    }
    Ok(ResidualSeries(RowMatrix::new(x.nrows(), x.ncols(), out)?))
}

/// A simulated path with everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub series: ObservationSeries,
    pub means: RowMatrix,
    pub innovations: RowMatrix,
    /// Pre-sample of the retained segment (the tail of the burn-in).
    pub presample: Presample,
}

/// Simulates `burn_in + len` steps started from `start` and keeps the last
/// `len`.
pub fn simulate_path<S: InnovationSampler, R: Rng + ?Sized>(
    params: &VmemParams,
    sampler: &S,
    len: usize,
    burn_in: usize,
    start: &Presample,
    rng: &mut R,
) -> Result<SimulatedPath> {
    let d = params.dim();
    if sampler.dim() != d {
        return Err(Error::Dimension(format!(
            "innovations have {} components, parameters have {d}",
            sampler.dim()
        )));
    }
    if len == 0 {
        return Err(Error::InvalidInput("path length must be positive".into()));
    }
    let (p, q) = params.order();
    start.check(d, p, q)?;
    let rho = params.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Nonstationary(rho));
    }
    let total = len + burn_in;
    let eps = sampler.sample(total, rng)?;
    let mut x = RowMatrix::zeros(total, d);
    let mut mu = RowMatrix::zeros(total, d);
    let mut cur = vec![0.0; d];
    for t in 0..total {
        {
            let (x_ref, mu_ref) = (&x, &mu);
            let x_lag = |i: usize| -> &[f64] {
                if i <= t { x_ref.row(t - i) } else { &start.x_lags[i - t - 1] }
            };
            let mu_lag = |k: usize| -> &[f64] {
                if k <= t { mu_ref.row(t - k) } else { &start.mu_lags[k - t - 1] }
            };
            mean_step(params, x_lag, mu_lag, &mut cur);
        }
        let e = eps.row(t);
        for j in 0..d {
            let xv = cur[j] * e[j];
            if !(xv.is_finite() && xv > 0.0) {
                return Err(Error::NonFinite(format!("simulated value {xv} at step {t}")));
            }
            x.row_mut(t)[j] = xv;
        }
        mu.row_mut(t).copy_from_slice(&cur);
    }
    let lag_of = |m: &RowMatrix, start_lags: &[Vec<f64>], n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                // x_{-i} relative to the retained segment is row burn_in-1-i of the full path
                if i < burn_in {
                    m.row(burn_in - 1 - i).to_vec()
                } else {
                    start_lags[i - burn_in].clone()
                }
            })
            .collect()
    };
    let presample = Presample {
        x_lags: lag_of(&x, &start.x_lags, p),
        mu_lags: lag_of(&mu, &start.mu_lags, q),
    };
    Ok(SimulatedPath {
        series: ObservationSeries::new(x.tail_from(burn_in))?,
        means: mu.tail_from(burn_in),
        innovations: eps.tail_from(burn_in),
        presample,
    })
}

/// Simulates a stationary-looking path of length `len`: the recursion starts
/// at the unconditional mean and the first `burn_in` steps are dropped.
pub fn simulate_vmem<S: InnovationSampler>(
    params: &VmemParams,
    law: &S,
    len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ObservationSeries> {
    let rho = params.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Nonstationary(rho));
    }
    let (p, q) = params.order();
    let start = Presample::constant(&params.unconditional_mean()?, p, q);
    let mut rng = substream(seed, &[]);
    Ok(simulate_path(params, law, len, burn_in, &start, &mut rng)?.series)
}

pub const DEFAULT_BURN_IN: usize = 200;

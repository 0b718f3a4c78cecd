//! Parametric bootstrap calibration and warp-speed Monte Carlo.
//!
//! A bootstrap series is simulated from the fitted model with independent
//! Gamma(β̂_j, β̂_j) innovations, started from the pre-sample of the original
//! fit and run through a burn-in. Each replicate owns its random streams
//! (`[r, purpose, …]` under the master seed), so results do not depend on
//! how replicates are scheduled.

use crate::distributions::{GammaMarginalNull, InnovationLaw};
use crate::error::{Error, Result};
use crate::estimation::{fit_mle, FitOptions, FitResult};
use crate::lt_test::{aggregate_psi, statistic_s, Aggregation, GammaWeight, PsiEvaluator, StatisticValue};
use crate::rng::{derive_seed, purpose, substream};
use crate::vmem::{compute_residuals, filter_means, simulate_path, ObservationSeries, Presample, ResidualSeries, VmemParams, DEFAULT_BURN_IN};
use crate::distributions::InnovationSampler;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

/// Levels reported in every [`TestOutcome`].
pub const REPORTED_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Bootstrap replicates `B`.
    pub replicates: usize,
    pub burn_in: usize,
    /// Artificial samples per `Ψ` statistic.
    pub m: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 200,
            burn_in: DEFAULT_BURN_IN,
            m: 1,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.m == 0 {
            return Err(Error::InvalidInput(format!(
                "bootstrap needs B >= 1 and M >= 1, got B={} M={}",
                self.replicates, self.m
            )));
        }
        Ok(())
    }
}

/// Which statistic a test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StatisticSpec {
    S,
    Psi { mode: Aggregation, m: usize },
}

impl StatisticSpec {
    pub fn label(&self) -> &'static str {
        match self {
            StatisticSpec::S => "S",
            StatisticSpec::Psi { mode: Aggregation::Mean, .. } => "psi-mean",
            StatisticSpec::Psi { mode: Aggregation::Max, .. } => "psi-max",
        }
    }

    pub fn m(&self) -> usize {
        match self {
            StatisticSpec::S => 1,
            StatisticSpec::Psi { m, .. } => *m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub statistic: StatisticSpec,
    pub weight: GammaWeight,
}

/// Evaluates `test` on residuals of a fit with null `phi`. The artificial
/// samples of `Ψ` are drawn from `phi` on the streams `[stream.., m]`, so
/// every weight, aggregation mode and smaller `M` reuses the same draws.
pub fn evaluate_statistic(
    test: &TestSpec,
    residuals: &ResidualSeries,
    phi: &GammaMarginalNull,
    seed: u64,
    stream: &[u64],
) -> Result<StatisticValue> {
    match test.statistic {
        StatisticSpec::S => statistic_s(residuals, phi, &test.weight),
        StatisticSpec::Psi { mode, m } => {
            if m == 0 {
                return Err(Error::InvalidInput("M must be at least 1".into()));
            }
            let eval = PsiEvaluator::new(residuals, &test.weight);
            let mut path = stream.to_vec();
            path.push(0);
            let values = (0..m)
                .map(|i| {
                    *path.last_mut().expect("nonempty path") = i as u64;
                    let art = phi.sample(residuals.len(), &mut substream(seed, &path))?;
                    eval.evaluate(&art)
                })
                .collect::<Result<Vec<_>>>()?;
            aggregate_psi(&values, mode)
        }
    }
}

/// Values of several tests on the same residuals, equal to calling
/// [`evaluate_statistic`] per test. Each artificial sample is drawn once and
/// each single-sample `Ψ` is evaluated once per weight.
pub fn evaluate_statistics(
    tests: &[TestSpec],
    residuals: &ResidualSeries,
    phi: &GammaMarginalNull,
    seed: u64,
    stream: &[u64],
) -> Result<Vec<f64>> {
    let mut depth: Vec<(GammaWeight, usize)> = Vec::new();
    for t in tests {
        if let StatisticSpec::Psi { m, .. } = t.statistic {
            if m == 0 {
                return Err(Error::InvalidInput("M must be at least 1".into()));
            }
            match depth.iter_mut().find(|(w, _)| *w == t.weight) {
                Some((_, d)) => *d = (*d).max(m),
                None => depth.push((t.weight, m)),
            }
        }
    }
    let n_draws = depth.iter().map(|&(_, d)| d).max().unwrap_or(0);
    let mut path = stream.to_vec();
    path.push(0);
    let draws = (0..n_draws)
        .map(|i| {
            *path.last_mut().expect("nonempty path") = i as u64;
            phi.sample(residuals.len(), &mut substream(seed, &path))
        })
        .collect::<Result<Vec<_>>>()?;
    let singles = depth
        .iter()
        .map(|(w, d)| {
            let eval = PsiEvaluator::new(residuals, w);
            draws[..*d].iter().map(|a| eval.evaluate(a)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    tests
        .iter()
        .map(|t| match t.statistic {
            StatisticSpec::S => Ok(statistic_s(residuals, phi, &t.weight)?.value),
            StatisticSpec::Psi { mode, m } => {
                let k = depth.iter().position(|(w, _)| *w == t.weight).expect("weight recorded");
                Ok(aggregate_psi(&singles[k][..m], mode)?.value)
            }
        })
        .collect()
}

/// Fit plus residuals; a non-converged optimum counts as a failure.
fn fit_residuals(series: &ObservationSeries, opts: &FitOptions) -> Result<(FitResult, ResidualSeries)> {
    let fit = fit_mle(series, opts)?;
    if !fit.converged {
        return Err(Error::Fit(format!("optimizer stopped with gradient norm {:.3e}", fit.gradient_norm)));
    }
    let means = filter_means(series, &fit.params, &opts.init)?;
    let residuals = compute_residuals(series, &means)?;
    Ok((fit, residuals))
}

/// Simulates a series of the same length from the fitted model and refits it
/// starting at the original estimate.
fn bootstrap_replicate(
    fit: &FitResult,
    presample: &Presample,
    len: usize,
    burn_in: usize,
    opts: &FitOptions,
    seed: u64,
    r: u64,
) -> Result<(FitResult, ResidualSeries)> {
    let law = InnovationLaw::null(fit.phi.clone());
    let mut rng = substream(seed, &[r, purpose::BOOTSTRAP]);
    let path = simulate_path(&fit.params, &law, len, burn_in, presample, &mut rng)?;
    let refit = FitOptions {
        start: Some((fit.params.clone(), fit.phi.clone())),
        ..opts.clone()
    };
    fit_residuals(&path.series, &refit)
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_SHARE * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    if failed > 0 {
        log::warn!("{failed} of {total} replicates failed and were excluded");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub observed: StatisticValue,
    #[serde(skip)]
    pub fit: FitResult,
    /// Statistics of the successful replicates, in replicate order.
    pub bootstrap_values: Vec<f64>,
    pub failed: usize,
    pub p_value: f64,
    /// `(level, p_value < level)` for [`REPORTED_LEVELS`].
    pub reject_at: Vec<(f64, bool)>,
}

impl TestOutcome {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// `#{b : bootstrap_b > observed} / B`.
pub fn p_value(observed: f64, bootstrap: &[f64]) -> f64 {
    bootstrap.iter().filter(|&&b| b > observed).count() as f64 / bootstrap.len() as f64
}

/// Full parametric bootstrap of one test on one series.
pub fn bootstrap_test(series: &ObservationSeries, opts: &FitOptions, test: &TestSpec, cfg: &BootstrapConfig) -> Result<TestOutcome> {
    Ok(bootstrap_test_many(series, opts, std::slice::from_ref(test), cfg)?.remove(0))
}

/// Full parametric bootstrap of several tests sharing the fit, the `B`
/// bootstrap series and their refits. Each test's outcome equals that of
/// [`bootstrap_test`] run alone with the same configuration.
pub fn bootstrap_test_many(
    series: &ObservationSeries,
    opts: &FitOptions,
    tests: &[TestSpec],
    cfg: &BootstrapConfig,
) -> Result<Vec<TestOutcome>> {
    cfg.validate()?;
    let (fit, residuals) = fit_residuals(series, opts)?;
    let observed = tests
        .iter()
        .map(|t| evaluate_statistic(t, &residuals, &fit.phi, cfg.seed, &[purpose::OBSERVED_ARTIFICIAL]))
        .collect::<Result<Vec<_>>>()?;
    let (p, q) = opts.order;
    let presample = opts.init.resolve(series, p, q);
    let results: Vec<Result<Vec<f64>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let (refit, res) = bootstrap_replicate(&fit, &presample, series.len(), cfg.burn_in, opts, cfg.seed, b)?;
            evaluate_statistics(tests, &res, &refit.phi, cfg.seed, &[b, purpose::ARTIFICIAL])
        })
        .collect();
    let mut draws = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => draws.push(v),
            Err(e) => {
                log::debug!("bootstrap replicate failed: {e}");
                failed += 1;
            }
        }
    }
    check_failures(failed, cfg.replicates)?;
    Ok(observed
        .into_iter()
        .enumerate()
        .map(|(i, observed)| {
            let values: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let p_value = p_value(observed.value, &values);
            TestOutcome {
                observed,
                fit: fit.clone(),
                bootstrap_values: values,
                failed,
                p_value,
                reject_at: REPORTED_LEVELS.iter().map(|&l| (l, p_value < l)).collect(),
            }
        })
        .collect())
}

fn fit_options_for(params: &VmemParams) -> FitOptions {
    FitOptions {
        order: params.order(),
        b_diagonal: params.b_diagonal(),
        ..FitOptions::default()
    }
}

pub fn bootstrap_test_s(
    series: &ObservationSeries,
    order: (usize, usize),
    w: &GammaWeight,
    cfg: &BootstrapConfig,
) -> Result<TestOutcome> {
    let opts = FitOptions { order, ..FitOptions::default() };
    bootstrap_test(series, &opts, &TestSpec { statistic: StatisticSpec::S, weight: *w }, cfg)
}

pub fn bootstrap_test_psi(
    series: &ObservationSeries,
    order: (usize, usize),
    w: &GammaWeight,
    cfg: &BootstrapConfig,
    mode: Aggregation,
) -> Result<TestOutcome> {
    let opts = FitOptions { order, ..FitOptions::default() };
    let test = TestSpec { statistic: StatisticSpec::Psi { mode, m: cfg.m }, weight: *w };
    bootstrap_test(series, &opts, &test, cfg)
}

/// Data-generating process of a Monte Carlo cell. The model is fitted with
/// the order and `B` structure of `params`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub params: VmemParams,
    pub law: InnovationLaw,
    pub len: usize,
    pub burn_in: usize,
}

impl Scenario {
    /// Simulated data of replicate `r`, started at the unconditional mean.
    pub fn simulate(&self, seed: u64, r: u64) -> Result<ObservationSeries> {
        let (p, q) = self.params.order();
        let start = Presample::constant(&self.params.unconditional_mean()?, p, q);
        let mut rng = substream(seed, &[r, purpose::DATA]);
        Ok(simulate_path(&self.params, &self.law, self.len, self.burn_in, &start, &mut rng)?.series)
    }
}

/// Observed and single bootstrap statistic of one warp-speed replicate, for
/// every test sharing the replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraw {
    pub observed: Vec<f64>,
    pub bootstrap: Vec<f64>,
}

/// One warp-speed replicate: fit, observed statistics, one bootstrap series,
/// refit, bootstrap statistics.
pub fn warp_replicate(scenario: &Scenario, tests: &[TestSpec], seed: u64, r: u64) -> Result<ReplicateDraw> {
    let opts = fit_options_for(&scenario.params);
    let series = scenario.simulate(seed, r)?;
    let (fit, residuals) = fit_residuals(&series, &opts)?;
    let observed = evaluate_statistics(tests, &residuals, &fit.phi, seed, &[r, purpose::OBSERVED_ARTIFICIAL])?;
    let (p, q) = opts.order;
    let presample = opts.init.resolve(&series, p, q);
    let (refit, boot_res) = bootstrap_replicate(&fit, &presample, series.len(), scenario.burn_in, &opts, seed, r)?;
    let bootstrap = evaluate_statistics(tests, &boot_res, &refit.phi, seed, &[r, purpose::ARTIFICIAL])?;
    Ok(ReplicateDraw { observed, bootstrap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rejection_rate: f64,
    pub std_error: f64,
    /// Replicates requested.
    pub replicates: usize,
    pub failed: usize,
    pub critical_value: f64,
}

/// Smallest pool value with at least a `1 − level` fraction of the pool
/// strictly below it (ties aside, the "higher" empirical quantile).
pub fn upper_quantile(pool: &[f64], level: f64) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty bootstrap pool".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // index k has k values below it; need k >= (1 - level) n
    let k = (((1.0 - level) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(sorted[k.min(n - 1)])
}

/// Rejection fraction of `observed` against the pooled bootstrap quantile.
pub fn pooled_rejection(observed: &[f64], pool: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    let crit = upper_quantile(pool, level)?;
    let n = observed.len() as f64;
    let rate = observed.iter().filter(|&&s| s > crit).count() as f64 / n;
    Ok((rate, (rate * (1.0 - rate) / n).sqrt(), crit))
}

/// Warp-speed evaluation of several tests on shared replicates.
pub fn warp_speed_mc_many(
    scenario: &Scenario,
    tests: &[TestSpec],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<RejectionReport>> {
    if replicates < 2 {
        return Err(Error::InvalidInput("warp-speed needs at least 2 replicates".into()));
    }
    let draws: Vec<Result<ReplicateDraw>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| warp_replicate(scenario, tests, seed, r))
        .collect();
    let mut ok = Vec::with_capacity(replicates);
    let mut failed = 0;
    for d in draws {
        match d {
            Ok(d) => ok.push(d),
            Err(e) => {
                log::debug!("replicate failed in {}: {e}", scenario.id);
                failed += 1;
            }
        }
    }
    check_failures(failed, replicates)?;
    (0..tests.len())
        .map(|i| {
            let observed: Vec<f64> = ok.iter().map(|d| d.observed[i]).collect();
            let pool: Vec<f64> = ok.iter().map(|d| d.bootstrap[i]).collect();
            let (rate, se, crit) = pooled_rejection(&observed, &pool, level)?;
            Ok(RejectionReport {
                rejection_rate: rate,
                std_error: se,
                replicates,
                failed,
                critical_value: crit,
            })
        })
        .collect()
}

/// Warp-speed rejection rate of one test; `replicates ≥ 50`.
pub fn warp_speed_mc(scenario: &Scenario, test: &TestSpec, replicates: usize, level: f64, seed: u64) -> Result<RejectionReport> {
    if replicates < 50 {
        return Err(Error::InvalidInput(format!("warp-speed needs R >= 50, got {replicates}")));
    }
    Ok(warp_speed_mc_many(scenario, std::slice::from_ref(test), replicates, level, seed)?.remove(0))
}

/// Rejection rate from a full bootstrap per replicate; `B` fits per replicate.
pub fn full_bootstrap_mc_many(
    scenario: &Scenario,
    tests: &[TestSpec],
    replicates: usize,
    cfg: &BootstrapConfig,
    level: f64,
) -> Result<Vec<RejectionReport>> {
    cfg.validate()?;
    let opts = fit_options_for(&scenario.params);
    let outcomes: Vec<Result<Vec<bool>>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let series = scenario.simulate(cfg.seed, r)?;
            let inner = BootstrapConfig { seed: derive_seed(cfg.seed, &[r]), ..*cfg };
            Ok(bootstrap_test_many(&series, &opts, tests, &inner)?
                .iter()
                .map(|o| o.rejects(level))
                .collect())
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(_) => failed += 1,
        }
    }
    check_failures(failed, replicates)?;
    let n = ok.len() as f64;
    Ok((0..tests.len())
        .map(|i| {
            let rate = ok.iter().filter(|v| v[i]).count() as f64 / n;
            RejectionReport {
                rejection_rate: rate,
                std_error: (rate * (1.0 - rate) / n).sqrt(),
                replicates,
                failed,
                critical_value: f64::NAN,
            }
        })
        .collect())
}

/// CSV row of a rejection-rate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario_id: String,
    pub statistic: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub rejection_rate: f64,
    pub std_error: f64,
    pub failed: usize,
}

impl ReportRow {
    pub fn new(scenario: &Scenario, test: &TestSpec, report: &RejectionReport) -> Self {
        Self {
            scenario_id: scenario.id.clone(),
            statistic: test.statistic.label().to_string(),
            t: scenario.len,
            kappa: test.weight.kappa(),
            gamma: test.weight.gamma(),
            m: test.statistic.m(),
            r: report.replicates,
            rejection_rate: report.rejection_rate,
            std_error: report.std_error,
            failed: report.failed,
        }
    }
}

pub fn write_report_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "scenario_id",
            "statistic",
            "T",
            "kappa",
            "gamma",
            "M",
            "R",
            "rejection_rate",
            "std_error",
            "failed",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::ks_two_sample;
    use rand::Rng;

    fn null_scenario(len: usize) -> Scenario {
        Scenario {
            id: "null".into(),
            params: VmemParams::reference_bivariate(),
            law: InnovationLaw::null(GammaMarginalNull::new(vec![2.0, 3.0]).unwrap()),
            len,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    #[test]
    fn counting_rule_extremes() {
        assert_eq!(p_value(10.0, &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(p_value(0.5, &[1.0, 2.0, 3.0]), 1.0);
        // ties do not count as exceedances
        assert_eq!(p_value(2.0, &[1.0, 2.0, 3.0, 4.0]), 0.5);
    }

    #[test]
    fn upper_quantile_convention() {
        let pool: Vec<f64> = (1..=1000).map(f64::from).collect();
        // 950 values lie strictly below 951
        assert_eq!(upper_quantile(&pool, 0.05).unwrap(), 951.0);
        let pool: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(upper_quantile(&pool, 0.05).unwrap(), 20.0);
        assert_eq!(upper_quantile(&pool, 0.5).unwrap(), 11.0);
        assert!(upper_quantile(&[], 0.05).is_err());
        assert!(upper_quantile(&pool, 1.0).is_err());
    }

    #[test]
    fn quantile_rule_matches_p_value_rule_on_shared_pool() {
        let mut rng = substream(5, &[]);
        let pool: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let observed: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 1.1).collect();
        for level in [0.01, 0.05, 0.1] {
            let crit = upper_quantile(&pool, level).unwrap();
            for &s in &observed {
                assert_eq!(s > crit, p_value(s, &pool) < level, "s={s} level={level}");
            }
        }
    }

    #[test]
    fn exchangeable_pools_reject_at_nominal_rate() {
        let mut rng = substream(6, &[]);
        let draw = |rng: &mut crate::rng::StreamRng| -> f64 { -rng.random::<f64>().ln() };
        let observed: Vec<f64> = (0..1000).map(|_| draw(&mut rng)).collect();
        let pool: Vec<f64> = (0..1000).map(|_| draw(&mut rng)).collect();
        let (rate, se, _) = pooled_rejection(&observed, &pool, 0.05).unwrap();
        assert!((rate - 0.05).abs() <= 0.02, "{rate}");
        assert!((se - (rate * (1.0 - rate) / 1000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psi_with_single_sample_is_mode_independent() {
        let series = null_scenario(300).simulate(1, 0).unwrap();
        let w = GammaWeight::new(1.0, 1.0).unwrap();
        let cfg = BootstrapConfig { replicates: 5, m: 1, seed: 3, ..BootstrapConfig::default() };
        let mean = bootstrap_test_psi(&series, (1, 1), &w, &cfg, Aggregation::Mean).unwrap();
        let max = bootstrap_test_psi(&series, (1, 1), &w, &cfg, Aggregation::Max).unwrap();
        assert_eq!(mean.observed.value, max.observed.value);
        assert_eq!(mean.bootstrap_values, max.bootstrap_values);
        assert_eq!(mean.p_value, max.p_value);
    }

    #[test]
    fn bootstrap_test_is_deterministic_and_consistent() {
        let series = null_scenario(300).simulate(2, 0).unwrap();
        let w = GammaWeight::new(1.0, 1.0).unwrap();
        let cfg = BootstrapConfig { replicates: 8, seed: 4, ..BootstrapConfig::default() };
        let a = bootstrap_test_s(&series, (1, 1), &w, &cfg).unwrap();
        let b = bootstrap_test_s(&series, (1, 1), &w, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bootstrap_values.len() + a.failed, 8);
        assert_eq!(a.p_value, p_value(a.observed.value, &a.bootstrap_values));
        assert_eq!(a.reject_at.len(), REPORTED_LEVELS.len());
        assert!(BootstrapConfig { replicates: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn shared_bootstrap_matches_single_tests() {
        let series = null_scenario(300).simulate(8, 0).unwrap();
        let cfg = BootstrapConfig { replicates: 6, seed: 11, ..BootstrapConfig::default() };
        let tests = [
            TestSpec { statistic: StatisticSpec::S, weight: GammaWeight::new(2.0, 0.5).unwrap() },
            TestSpec {
                statistic: StatisticSpec::Psi { mode: Aggregation::Mean, m: 3 },
                weight: GammaWeight::new(1.0, 1.0).unwrap(),
            },
        ];
        let many = bootstrap_test_many(&series, &FitOptions::default(), &tests, &cfg).unwrap();
        for (test, outcome) in tests.iter().zip(&many) {
            let alone = bootstrap_test(&series, &FitOptions::default(), test, &cfg).unwrap();
            assert_eq!(&alone, outcome);
        }
    }

    #[test]
    fn batched_evaluation_matches_single_tests() {
        let series = null_scenario(200).simulate(4, 0).unwrap();
        let (fit, res) = fit_residuals(&series, &FitOptions::default()).unwrap();
        let w1 = GammaWeight::new(1.0, 1.0).unwrap();
        let w2 = GammaWeight::new(0.5, 2.0).unwrap();
        let psi = |mode, m, weight| TestSpec { statistic: StatisticSpec::Psi { mode, m }, weight };
        let tests = [
            psi(Aggregation::Mean, 4, w1),
            TestSpec { statistic: StatisticSpec::S, weight: w2 },
            psi(Aggregation::Max, 2, w1),
            psi(Aggregation::Mean, 1, w2),
            psi(Aggregation::Max, 6, w2),
        ];
        let batched = evaluate_statistics(&tests, &res, &fit.phi, 21, &[7, 3]).unwrap();
        for (t, v) in tests.iter().zip(&batched) {
            let single = evaluate_statistic(t, &res, &fit.phi, 21, &[7, 3]).unwrap().value;
            assert_eq!(single.to_bits(), v.to_bits(), "{t:?}");
        }
    }

    #[test]
    fn nested_m_reuses_artificial_draws() {
        let series = null_scenario(200).simulate(3, 0).unwrap();
        let opts = FitOptions::default();
        let (fit, res) = fit_residuals(&series, &opts).unwrap();
        let w = GammaWeight::new(1.0, 1.0).unwrap();
        let spec = |m| TestSpec { statistic: StatisticSpec::Psi { mode: Aggregation::Max, m }, weight: w };
        let m1 = evaluate_statistic(&spec(1), &res, &fit.phi, 9, &[0]).unwrap().value;
        let m5 = evaluate_statistic(&spec(5), &res, &fit.phi, 9, &[0]).unwrap().value;
        let m10 = evaluate_statistic(&spec(10), &res, &fit.phi, 9, &[0]).unwrap().value;
        assert!(m1 <= m5 && m5 <= m10);
    }

    #[test]
    fn warp_speed_null_is_near_nominal_and_pools_agree() {
        let scenario = null_scenario(300);
        let test = TestSpec { statistic: StatisticSpec::S, weight: GammaWeight::new(1.0, 1.0).unwrap() };
        let draws: Vec<ReplicateDraw> = (0..120).map(|r| warp_replicate(&scenario, &[test], 17, r).unwrap()).collect();
        let obs: Vec<f64> = draws.iter().map(|d| d.observed[0]).collect();
        let boot: Vec<f64> = draws.iter().map(|d| d.bootstrap[0]).collect();
        let (_, p) = ks_two_sample(&obs, &boot);
        assert!(p > 0.01, "KS p-value {p}");
        let report = warp_speed_mc(&scenario, &test, 120, 0.05, 17).unwrap();
        let (rate, _, _) = pooled_rejection(&obs, &boot, 0.05).unwrap();
        assert_eq!(report.rejection_rate, rate);
        assert!(report.rejection_rate <= 0.15);
        assert!(warp_speed_mc(&scenario, &test, 10, 0.05, 17).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let mut buf = Vec::new();
        write_report_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario_id,statistic,T,kappa,gamma,M,R,rejection_rate,std_error,failed\n"
        );
        let scenario = null_scenario(500);
        let test = TestSpec {
            statistic: StatisticSpec::Psi { mode: Aggregation::Mean, m: 10 },
            weight: GammaWeight::new(0.5, 2.0).unwrap(),
        };
        let rep = RejectionReport { rejection_rate: 0.05, std_error: 0.01, replicates: 1000, failed: 2, critical_value: 1.0 };
        let mut buf = Vec::new();
        write_report_csv(&[ReportRow::new(&scenario, &test, &rep)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "null,psi-mean,500,0.5,2.0,10,1000,0.05,0.01,2");
    }
}

//! Fit and bootstrap test on a user-supplied series.

use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;
use vmem_lt::bootstrap::{bootstrap_test, BootstrapConfig, TestOutcome, TestSpec};
use vmem_lt::estimation::FitOptions;
use vmem_lt::vmem::io::read_series_csv;
use vmem_lt::vmem::ObservationSeries;

#[derive(Debug, Error)]
pub enum SingleTestError {
    #[error("cannot use series file: {0}")]
    Input(vmem_lt::Error),
    #[error("test could not be computed: {0}")]
    Fit(vmem_lt::Error),
}

impl SingleTestError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SingleTestError::Input(_) => 2,
            SingleTestError::Fit(_) => 3,
        }
    }
}

pub fn load_series(path: &Path) -> Result<ObservationSeries, SingleTestError> {
    let file = std::fs::File::open(path).map_err(|e| SingleTestError::Input(e.into()))?;
    read_series_csv(file).map_err(SingleTestError::Input)
}

/// Reads the series, fits the model and runs the bootstrap test.
pub fn run_single_test(
    path: &Path,
    opts: &FitOptions,
    test: &TestSpec,
    cfg: &BootstrapConfig,
) -> Result<TestOutcome, SingleTestError> {
    let series = load_series(path)?;
    bootstrap_test(&series, opts, test, cfg).map_err(SingleTestError::Fit)
}

fn matrix_rows(m: &impl std::ops::Index<(usize, usize), Output = f64>, d: usize) -> String {
    let rows: Vec<String> = (0..d)
        .map(|r| {
            let cells: Vec<String> = (0..d).map(|c| format!("{:.6}", m[(r, c)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn floats(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", cells.join(", "))
}

pub fn render_human(outcome: &TestOutcome, test: &TestSpec, cfg: &BootstrapConfig) -> String {
    let fit = &outcome.fit;
    let d = fit.params.dim();
    let mut s = String::new();
    let _ = writeln!(s, "fitted vMEM{:?}", fit.params.order());
    let _ = writeln!(s, "  alpha0 = {}", floats(fit.params.alpha0()));
    for (i, a) in fit.params.a().iter().enumerate() {
        let _ = writeln!(s, "  A{} = {}", i + 1, matrix_rows(a, d));
    }
    for (i, b) in fit.params.b().iter().enumerate() {
        let _ = writeln!(s, "  B{} = {}", i + 1, matrix_rows(b, d));
    }
    let _ = writeln!(s, "  beta = {}", floats(fit.phi.betas()));
    let _ = writeln!(s, "  loglik = {:.6}, gradient norm {:.2e}", fit.loglik, fit.gradient_norm);
    let _ = writeln!(
        s,
        "statistic {} (M={}, kappa={}, gamma={}) = {:.6e}{}",
        test.statistic.label(),
        test.statistic.m(),
        test.weight.kappa(),
        test.weight.gamma(),
        outcome.observed.value,
        if outcome.observed.clamped { " (clamped at 0)" } else { "" }
    );
    let _ = writeln!(s, "bootstrap B={} (failed {})", cfg.replicates, outcome.failed);
    let _ = writeln!(s, "p-value = {:.4}", outcome.p_value);
    for (level, reject) in &outcome.reject_at {
        let _ = writeln!(s, "  level {level:.2}: {}", if *reject { "reject" } else { "do not reject" });
    }
    s
}

/// `key=value` lines, one per field.
pub fn render_kv(outcome: &TestOutcome, test: &TestSpec, cfg: &BootstrapConfig) -> String {
    let mut s = outcome.fit.to_record();
    let _ = writeln!(s, "statistic={}", test.statistic.label());
    let _ = writeln!(s, "M={}", test.statistic.m());
    let _ = writeln!(s, "kappa={}", test.weight.kappa());
    let _ = writeln!(s, "gamma={}", test.weight.gamma());
    let _ = writeln!(s, "value={:.12e}", outcome.observed.value);
    let _ = writeln!(s, "clamped={}", outcome.observed.clamped);
    let _ = writeln!(s, "B={}", cfg.replicates);
    let _ = writeln!(s, "failed={}", outcome.failed);
    let _ = writeln!(s, "seed={}", cfg.seed);
    let _ = writeln!(s, "p_value={}", outcome.p_value);
    for (level, reject) in &outcome.reject_at {
        let _ = writeln!(s, "reject_{level}={reject}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use vmem_lt::bootstrap::StatisticSpec;
    use vmem_lt::lt_test::GammaWeight;

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let test = TestSpec { statistic: StatisticSpec::S, weight: GammaWeight::new(1.0, 1.0).unwrap() };
        let cfg = BootstrapConfig::default();
        let opts = FitOptions::default();
        let missing = run_single_test(&dir.path().join("absent.csv"), &opts, &test, &cfg).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
        let path = dir.path().join("const.csv");
        let mut text = String::from("t,x1,x2\n");
        for t in 1..=200 {
            text.push_str(&format!("{t},1.5,2.5\n"));
        }
        std::fs::write(&path, text).unwrap();
        let constant = run_single_test(&path, &opts, &test, &cfg).unwrap_err();
        assert_eq!(constant.exit_code(), 3, "{constant}");
    }
}

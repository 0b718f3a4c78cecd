//! Study configuration: TOML schema, validation and content hash.
//!
//! ```toml
//! seed = 20240601
//! replicates = 1000          # R, Monte Carlo replicates per cell
//! level = 0.05               # optional
//! mode = "warp-speed"        # or "full-bootstrap" (expensive)
//! bootstrap_replicates = 200 # B, full-bootstrap mode only
//! burn_in = 200              # optional
//! output = "study.csv"       # optional, not part of the hash
//! weights = [{ kappa = 1.0, gamma = 1.0 }, { kappa = 2.0, gamma = 0.5 }]
//! statistics = [{ kind = "S" }, { kind = "psi", mode = "mean", M = 10 }]
//!
//! [[scenarios]]
//! id = "gauss-0.2"
//! copula = { kind = "gaussian", rho = 0.2 } # default: independence
//! betas = [2.0, 3.0]
//! T = [500, 1000]
//! # optional, defaults to the bivariate reference model
//! model = { alpha0 = [0.2, 0.2], a = [[[0.3, 0.1], [0.1, 0.3]]], b = [[[0.3, 0.0], [0.0, 0.3]]] }
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use vmem_lt::bootstrap::{Scenario, StatisticSpec, TestSpec};
use vmem_lt::distributions::{CopulaSpec, GammaMarginalNull, InnovationLaw};
use vmem_lt::lt_test::{Aggregation, GammaWeight};
use vmem_lt::rng::{derive_seed, label};
use vmem_lt::vmem::{VmemParams, DEFAULT_BURN_IN};
use vmem_lt::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// One bootstrap statistic per replicate, pooled into a critical value.
    #[default]
    WarpSpeed,
    /// `B` bootstrap refits per replicate.
    FullBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(rename = "replicates")]
    pub r: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default = "default_b", rename = "bootstrap_replicates")]
    pub b: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub weights: Vec<WeightConfig>,
    #[serde(default)]
    pub statistics: Vec<StatisticConfig>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
}

fn default_level() -> f64 {
    0.05
}

fn default_b() -> usize {
    200
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum StatisticConfig {
    S,
    #[serde(rename = "psi")]
    Psi {
        mode: Aggregation,
        #[serde(rename = "M")]
        m: usize,
    },
}

impl StatisticConfig {
    pub fn spec(&self) -> StatisticSpec {
        match *self {
            StatisticConfig::S => StatisticSpec::S,
            StatisticConfig::Psi { mode, m } => StatisticSpec::Psi { mode, m },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default = "independence")]
    pub copula: CopulaSpec,
    pub betas: Vec<f64>,
    #[serde(rename = "T")]
    pub sample_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
}

fn independence() -> CopulaSpec {
    CopulaSpec::Independence
}

/// vMEM parameters; `a` and `b` list the lag matrices as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha0: Vec<f64>,
    pub a: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(default = "yes")]
    pub b_diagonal: bool,
}

fn yes() -> bool {
    true
}

/// All cells of one (scenario, T) pair. They share simulated replicates.
#[derive(Debug, Clone)]
pub struct CellGroup {
    pub scenario: Scenario,
    pub copula: CopulaSpec,
    pub tests: Vec<TestSpec>,
    pub seed: u64,
}

impl CellGroup {
    pub fn cell_key(&self, test: &TestSpec) -> String {
        cell_key(&self.scenario.id, self.scenario.len, test)
    }
}

/// Identifier of a cell within a study.
pub fn cell_key(scenario_id: &str, t: usize, test: &TestSpec) -> String {
    format!(
        "{scenario_id}/T={t}/{}/M={}/kappa={}/gamma={}",
        test.statistic.label(),
        test.statistic.m(),
        test.weight.kappa(),
        test.weight.gamma()
    )
}

fn invalid(path: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Parses a TOML config; type errors carry the offending field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| invalid("<syntax>", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(path, e.into_inner().message())
    })
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid("<serialize>", e))
    }

    /// SHA-256 of the fields that affect results. The output path is
    /// excluded, and so is `B` in warp-speed mode.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        if canonical.mode == EvalMode::WarpSpeed {
            canonical.b = 0;
        }
        let json = serde_json::to_vec(&canonical).expect("config serializes to JSON");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validates every field and expands the config into cell groups, in
    /// scenario, T, statistic, weight order.
    pub fn plan(&self) -> Result<Vec<CellGroup>> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid("level", format!("must lie in (0, 1), got {}", self.level)));
        }
        let min_r = match self.mode {
            EvalMode::WarpSpeed => 2,
            EvalMode::FullBootstrap => 1,
        };
        if self.r < min_r {
            return Err(invalid("replicates", format!("must be at least {min_r}, got {}", self.r)));
        }
        if self.mode == EvalMode::FullBootstrap && self.b == 0 {
            return Err(invalid("bootstrap_replicates", "must be at least 1"));
        }
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| GammaWeight::new(w.kappa, w.gamma).map_err(|e| invalid(format!("weights[{i}]"), e)))
            .collect::<Result<Vec<_>>>()?;
        for (i, s) in self.statistics.iter().enumerate() {
            if let StatisticConfig::Psi { m: 0, .. } = s {
                return Err(invalid(format!("statistics[{i}].M"), "must be at least 1"));
            }
        }
        let mut tests = Vec::new();
        for s in &self.statistics {
            for w in &weights {
                tests.push(TestSpec { statistic: s.spec(), weight: *w });
            }
        }
        let mut groups = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, sc) in self.scenarios.iter().enumerate() {
            let at = |field: &str| format!("scenarios[{i}].{field}");
            if sc.id.is_empty() || !seen.insert(sc.id.as_str()) {
                return Err(invalid(at("id"), format!("`{}` is empty or duplicated", sc.id)));
            }
            let params = match &sc.model {
                None => VmemParams::reference_bivariate(),
                Some(m) => VmemParams::from_nested(m.alpha0.clone(), &m.a, &m.b, m.b_diagonal)
                    .map_err(|e| invalid(at("model"), e))?,
            };
            let radius = params.spectral_radius();
            if radius >= 1.0 {
                return Err(invalid(at("model"), Error::Nonstationary(radius)));
            }
            params.unconditional_mean().map_err(|e| invalid(at("model"), e))?;
            if sc.betas.len() != params.dim() {
                return Err(invalid(
                    at("betas"),
                    format!("{} shapes for a {}-dimensional model", sc.betas.len(), params.dim()),
                ));
            }
            let marginals = GammaMarginalNull::new(sc.betas.clone()).map_err(|e| invalid(at("betas"), e))?;
            let law = InnovationLaw::new(marginals, sc.copula).map_err(|e| invalid(at("copula"), e))?;
            for (j, &t) in sc.sample_sizes.iter().enumerate() {
                if t < 2 {
                    return Err(invalid(format!("scenarios[{i}].T[{j}]"), format!("sample size {t} is below 2")));
                }
                groups.push(CellGroup {
                    scenario: Scenario {
                        id: sc.id.clone(),
                        params: params.clone(),
                        law: law.clone(),
                        len: t,
                        burn_in: self.burn_in,
                    },
                    copula: sc.copula,
                    tests: tests.clone(),
                    seed: derive_seed(self.seed, &[label(&sc.id), t as u64]),
                });
            }
        }
        Ok(groups)
    }
}

//! Long-format power-curve data cut out of a study table.
//!
//! ```toml
//! [[series]]
//! statistic = "psi-mean"   # "S", "psi-mean" or "psi-max"
//! M = 10                   # default 1
//! copula = "gaussian"
//! rho = [0.1, 0.2]
//! T = [500, 1000, 2000]
//! weights = [{ kappa = 1.0, gamma = 1.0 }]
//! ```

use crate::config::WeightConfig;
use crate::study::StudyRow;
use serde::{Deserialize, Serialize};
use std::io::Write;
use vmem_lt::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    #[serde(default)]
    pub series: Vec<FigureSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSeries {
    pub statistic: String,
    #[serde(rename = "M", default = "one")]
    pub m: usize,
    pub copula: String,
    pub rho: Vec<f64>,
    #[serde(rename = "T")]
    pub sample_sizes: Vec<usize>,
    pub weights: Vec<WeightConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigurePoint {
    pub statistic: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub copula: String,
    pub rho: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub power: f64,
}

pub const FIGURE_HEADER: [&str; 8] = ["statistic", "M", "copula", "rho", "T", "kappa", "gamma", "power"];

pub fn parse_figure_spec(text: &str) -> Result<FigureSpec> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: "<syntax>".into(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.into_inner().message().to_string(),
    })
}

/// Looks up every point requested by `spec`. Power values are copied from
/// the table unchanged. Fails with all missing keys if any cell is absent.
pub fn emit_figure_data(table: &[StudyRow], spec: &FigureSpec) -> Result<Vec<FigurePoint>> {
    let mut points = Vec::new();
    let mut missing = Vec::new();
    for s in &spec.series {
        for &rho in &s.rho {
            for &t in &s.sample_sizes {
                for w in &s.weights {
                    let key = format!(
                        "{}/M={}/{}/rho={rho}/T={t}/kappa={}/gamma={}",
                        s.statistic, s.m, s.copula, w.kappa, w.gamma
                    );
                    let hits: Vec<&StudyRow> = table
                        .iter()
                        .filter(|r| {
                            r.statistic == s.statistic
                                && r.m == s.m
                                && r.copula == s.copula
                                && r.rho == rho
                                && r.t == t
                                && r.kappa == w.kappa
                                && r.gamma == w.gamma
                        })
                        .collect();
                    match hits.as_slice() {
                        [] => missing.push(key),
                        [row] => points.push(FigurePoint {
                            statistic: s.statistic.clone(),
                            m: s.m,
                            copula: s.copula.clone(),
                            rho,
                            t,
                            kappa: w.kappa,
                            gamma: w.gamma,
                            power: row.rejection_rate,
                        }),
                        _ => {
                            return Err(Error::InvalidInput(format!(
                                "{key} matches {} study rows (scenarios {})",
                                hits.len(),
                                hits.iter().map(|r| r.scenario_id.as_str()).collect::<Vec<_>>().join(", ")
                            )))
                        }
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    Ok(points)
}

pub fn write_figure_csv<W: Write>(points: &[FigurePoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(FIGURE_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(statistic: &str, m: usize, t: usize, power: f64) -> StudyRow {
        StudyRow {
            scenario_id: format!("gauss-{t}"),
            copula: "gaussian".into(),
            rho: 0.2,
            statistic: statistic.into(),
            t,
            kappa: 1.0,
            gamma: 1.0,
            m,
            r: 300,
            level: 0.05,
            rejection_rate: power,
            std_error: 0.01,
            failed: 0,
        }
    }

    const SPEC: &str = r#"
[[series]]
statistic = "psi-mean"
M = 10
copula = "gaussian"
rho = [0.2]
T = [1000, 2000]
weights = [{ kappa = 1.0, gamma = 1.0 }]
"#;

    #[test]
    fn reshapes_without_touching_values() {
        let power = 0.1 + 0.2;
        let table = vec![row("psi-mean", 10, 1000, 0.761), row("psi-mean", 10, 2000, power), row("S", 1, 2000, 0.5)];
        let points = emit_figure_data(&table, &parse_figure_spec(SPEC).unwrap()).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[1].power.to_bits(), power.to_bits());
        let mut buf = Vec::new();
        write_figure_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("psi-mean,10,gaussian,0.2,2000,1.0,1.0,0.30000000000000004\n"), "{text}");
    }

    #[test]
    fn missing_cells_are_listed() {
        let table = vec![row("psi-mean", 10, 1000, 0.761)];
        match emit_figure_data(&table, &parse_figure_spec(SPEC).unwrap()).unwrap_err() {
            Error::MissingCells(keys) => {
                assert_eq!(keys, vec!["psi-mean/M=10/gaussian/rho=0.2/T=2000/kappa=1/gamma=1".to_string()])
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_spec_gives_no_points() {
        let spec = parse_figure_spec("").unwrap();
        assert!(emit_figure_data(&[], &spec).unwrap().is_empty());
        let mut buf = Vec::new();
        write_figure_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", FIGURE_HEADER.join(",")));
    }
}

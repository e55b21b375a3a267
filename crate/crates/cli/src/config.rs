//! Experiment configuration file.

use std::path::Path;

use anyhow::{bail, Context};
use hankel_nullspace::estimator::{GridAxis, MomentGrid, SearchOptions, Threshold, DEFAULT_EPS_SIGMA};
use hankel_nullspace::sim::{check_pe_feasible, InitialState, NoiseSpec};
use hankel_nullspace::validate::{expected_nullity, DEFAULT_EPS_RANK};
use hankel_nullspace::StateSpace;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::InvalidConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Three states, two inputs, three measured outputs.
    #[serde(rename = "benchmark", alias = "paper-section-5")]
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(Preset),
    Inline {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<Vec<f64>>,
    },
}

fn matrix(name: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> anyhow::Result<DMatrix<f64>> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        bail!(InvalidConfig(format!("matrix {name} is ragged")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn build(&self) -> anyhow::Result<StateSpace> {
        match self {
            SystemSpec::Preset(Preset::Benchmark) => Ok(StateSpace::benchmark()),
            SystemSpec::Inline { a, b, c, d } => {
                let a = matrix("A", a, 0)?;
                let b = matrix("B", b, 0)?;
                let c = matrix("C", c, a.nrows())?;
                let d = matrix("D", d, b.ncols())?;
                StateSpace::new(a, b, c, d).map_err(|e| InvalidConfig(e.to_string()).into())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub input: NoiseSpec,
    pub output: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "Nt")]
    pub nt: Vec<usize>,
    pub seeds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            nt: vec![125, 250, 500, 1000, 2000, 4000, 8000],
            seeds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(default)]
    pub x0: InitialState,
    pub noise: NoiseConfig,
    pub grid: MomentGrid,
    #[serde(default = "default_eps_sigma")]
    pub eps_sigma: f64,
    #[serde(default = "default_eps_rank")]
    pub eps_rank: f64,
    #[serde(default)]
    pub threshold: Threshold,
    pub seed: u64,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_eps_sigma() -> f64 {
    DEFAULT_EPS_SIGMA
}

fn default_eps_rank() -> f64 {
    DEFAULT_EPS_RANK
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gaussian = NoiseSpec::Gaussian { mean: 1.0, std: 2.0 };
        ExperimentConfig {
            system: SystemSpec::Preset(Preset::Benchmark),
            nt: 10_000,
            samples: 30,
            depth: 2,
            x0: InitialState::default(),
            noise: NoiseConfig {
                input: gaussian,
                output: gaussian,
            },
            grid: MomentGrid::identical(
                GridAxis { lo: 0.0, hi: 1.5, points: 200 },
                GridAxis { lo: 2.5, hi: 7.0, points: 200 },
            ),
            eps_sigma: DEFAULT_EPS_SIGMA,
            eps_rank: DEFAULT_EPS_RANK,
            threshold: Threshold::Absolute,
            seed: 1,
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> anyhow::Result<StateSpace> {
        let bad = |msg: String| -> anyhow::Error { InvalidConfig(msg).into() };
        let ss = self.system.build()?;
        if self.nt == 0 || self.samples == 0 || self.depth == 0 {
            return Err(bad("Nt, N and L must be positive".into()));
        }
        if self.samples < self.depth {
            return Err(bad(format!("N = {} is shorter than L = {}", self.samples, self.depth)));
        }
        check_pe_feasible(self.samples, ss.m(), self.depth + ss.n())
            .map_err(|e| bad(e.to_string()))?;
        expected_nullity(ss.n(), ss.p(), self.depth).map_err(|e| bad(e.to_string()))?;
        self.noise.input.validate().map_err(|e| bad(e.to_string()))?;
        self.noise.output.validate().map_err(|e| bad(e.to_string()))?;
        self.grid.validate().map_err(|e| bad(e.to_string()))?;
        if !(self.eps_sigma > 0.0 && self.eps_rank > 0.0) {
            return Err(bad("eps_sigma and eps_rank must be positive".into()));
        }
        Ok(ss)
    }

    pub fn search_options(&self, ss: &StateSpace) -> anyhow::Result<SearchOptions> {
        let nullity = expected_nullity(ss.n(), ss.p(), self.depth)
            .map_err(|e| InvalidConfig(e.to_string()))?;
        Ok(SearchOptions {
            eps_sigma: self.eps_sigma,
            threshold: self.threshold,
            eps_rank: self.eps_rank,
            nullity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn preset_names() {
        let a: SystemSpec = serde_json::from_str("\"benchmark\"").unwrap();
        let b: SystemSpec = serde_json::from_str("\"paper-section-5\"").unwrap();
        assert_eq!(a, b);
        assert!(serde_json::from_str::<SystemSpec>("\"nope\"").is_err());
    }

    #[test]
    fn inline_system() {
        let s: SystemSpec =
            serde_json::from_str(r#"{"A":[[0.5]],"B":[[2.0]],"C":[[1.0]],"D":[[0.0]]}"#).unwrap();
        let ss = s.build().unwrap();
        assert_eq!((ss.n(), ss.m(), ss.p()), (1, 1, 1));
        let ragged: SystemSpec =
            serde_json::from_str(r#"{"A":[[0.5,1],[1]],"B":[[2.0]],"C":[[1.0]],"D":[[0.0]]}"#)
                .unwrap();
        assert!(ragged.build().is_err());
    }

    #[test]
    fn short_experiments_are_infeasible() {
        let cfg = ExperimentConfig {
            samples: 1,
            ..ExperimentConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.downcast_ref::<InvalidConfig>().is_some());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"{"system":"benchmark","Nt":5,"N":30,"L":2,
            "noise":{"input":{"family":"gaussian","mean":0,"std":0},
                     "output":{"family":"gaussian","mean":0,"std":0}},
            "grid":{"mode":"identical","m1":{"lo":0,"hi":1,"points":2},
                    "m2":{"lo":0,"hi":2,"points":2}},
            "seed":3}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.eps_sigma, DEFAULT_EPS_SIGMA);
        assert_eq!(cfg.threshold, Threshold::Absolute);
        cfg.validate().unwrap();
    }
}

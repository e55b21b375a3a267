//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use hankel_nullspace::estimator::grid_search;
use hankel_nullspace::io::{
    read_candidate, read_dataset, read_stats, write_candidate, write_convergence,
    write_convergence_summary, write_dataset, write_landscape, write_stats,
};
use hankel_nullspace::sim::{add_noise, generate_dataset};
use hankel_nullspace::stats::aggregate;
use hankel_nullspace::validate::{convergence_study, subspace_angle, true_nullspace, StudySetup};
use hankel_nullspace::{Dataset, StateSpace, SufficientStats};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::InvalidConfig;

pub const CLEAN_DATASET: &str = "clean.jsonl";
pub const NOISY_DATASET: &str = "noisy.jsonl";
pub const STATS: &str = "stats.json";
pub const LANDSCAPE: &str = "landscape.csv";
pub const CANDIDATE: &str = "candidate.json";
pub const VALIDATION: &str = "validation.json";
pub const CONVERGENCE: &str = "convergence.csv";
pub const CONVERGENCE_SUMMARY: &str = "convergence_summary.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// The grid search admitted no point; the landscape was still written.
    NoCandidate,
}

/// Run record: the resolved config, what was read and written, and
/// per-phase wall-clock seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
}

impl Manifest {
    fn new(command: &str, config: &ExperimentConfig) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            result: None,
        }
    }

    fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.timings.insert(phase.into(), t.elapsed().as_secs_f64());
        r
    }

    fn write(&mut self, dir: &Path) -> anyhow::Result<()> {
        self.outputs.push(MANIFEST.into());
        let f = create(&dir.join(MANIFEST))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn check_dataset(ds: &Dataset, ss: &StateSpace, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    if ds.m() != ss.m() || ds.p() != ss.p() {
        bail!(InvalidConfig(format!(
            "dataset has m = {}, p = {} but the system has m = {}, p = {}",
            ds.m(),
            ds.p(),
            ss.m(),
            ss.p()
        )));
    }
    if ds.samples() < cfg.depth {
        bail!(InvalidConfig(format!("dataset N = {} is shorter than L = {}", ds.samples(), cfg.depth)));
    }
    Ok(())
}

/// Writes the noiseless and noisy datasets.
pub fn generate(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<Manifest> {
    let ss = cfg.validate()?;
    let mut manifest = Manifest::new("generate", cfg);
    let (clean, noisy) = manifest.time("generate", || -> anyhow::Result<_> {
        let clean = generate_dataset(&ss, cfg.nt, cfg.samples, cfg.depth, cfg.x0, cfg.seed)?;
        let noisy = add_noise(&clean, &cfg.noise.input, &cfg.noise.output, cfg.seed)?;
        Ok((clean, noisy))
    })?;
    out_dir(dir)?;
    manifest.time("write", || -> anyhow::Result<()> {
        write_dataset(&clean, create(&dir.join(CLEAN_DATASET))?)?;
        write_dataset(&noisy, create(&dir.join(NOISY_DATASET))?)?;
        Ok(())
    })?;
    manifest.outputs.extend([CLEAN_DATASET.into(), NOISY_DATASET.into()]);
    manifest.write(dir)?;
    Ok(manifest)
}

fn aggregate_file(
    cfg: &ExperimentConfig,
    ss: &StateSpace,
    data: &Path,
    manifest: &mut Manifest,
) -> anyhow::Result<SufficientStats> {
    let ds: Dataset = manifest.time("read", || -> anyhow::Result<_> {
        read_dataset(open(data)?).with_context(|| format!("reading {}", data.display()))
    })?;
    check_dataset(&ds, ss, cfg)?;
    manifest.inputs.insert("dataset".into(), data.to_path_buf());
    Ok(manifest.time("aggregate", || aggregate(&ds, cfg.depth))?)
}

/// Folds a dataset file into a stats snapshot.
pub fn aggregate_cmd(cfg: &ExperimentConfig, data: &Path, out: &Path) -> anyhow::Result<Manifest> {
    let ss = cfg.validate()?;
    let mut manifest = Manifest::new("aggregate", cfg);
    let st = aggregate_file(cfg, &ss, data, &mut manifest)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    write_stats(&st, create(out)?)?;
    manifest.outputs.push(out.display().to_string());
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub enum Input {
    Dataset(PathBuf),
    Stats(PathBuf),
}

/// Aggregates (if needed) and grid-searches the moments.
pub fn recover(cfg: &ExperimentConfig, input: &Input, dir: &Path) -> anyhow::Result<(Manifest, Outcome)> {
    let ss = cfg.validate()?;
    let opts = cfg.search_options(&ss)?;
    let mut manifest = Manifest::new("recover", cfg);
    let st = match input {
        Input::Dataset(path) => aggregate_file(cfg, &ss, path, &mut manifest)?,
        Input::Stats(path) => {
            let st: SufficientStats = read_stats(open(path)?)
                .with_context(|| format!("reading {}", path.display()))?;
            let layout = st.layout();
            if (layout.m, layout.p, layout.depth) != (ss.m(), ss.p(), cfg.depth) {
                bail!(InvalidConfig(format!(
                    "stats layout {layout:?} does not match the configured system and L = {}",
                    cfg.depth
                )));
            }
            manifest.inputs.insert("stats".into(), path.clone());
            st
        }
    };
    let avg = st.finalize()?;
    let result = manifest.time("grid_search", || grid_search(&avg, &cfg.grid, &opts))?;

    out_dir(dir)?;
    let identical = cfg.grid.is_identical();
    write_stats(&st, create(&dir.join(STATS))?)?;
    write_landscape(&result.landscape, identical, create(&dir.join(LANDSCAPE))?)?;
    manifest.outputs.extend([STATS.into(), LANDSCAPE.into()]);
    let outcome = match result.best() {
        Some(best) => {
            write_candidate(best, identical, create(&dir.join(CANDIDATE))?)?;
            manifest.outputs.push(CANDIDATE.into());
            let p = &best.point;
            manifest.result = Some(serde_json::json!({
                "admitted": result.candidates.len(),
                "best": {
                    "m1u": p.m1u, "m2u": p.m2u, "m1y": p.m1y, "m2y": p.m2y,
                    "sigma_min": best.sigma_min,
                },
            }));
            Outcome::Done
        }
        None => {
            manifest.result = Some(serde_json::json!({ "admitted": 0 }));
            Outcome::NoCandidate
        }
    };
    manifest.write(dir)?;
    Ok((manifest, outcome))
}

/// Principal-angle error of a candidate against the model oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub theta_max: f64,
    pub cosines: Vec<f64>,
    pub nullity: usize,
    pub d: usize,
}

pub fn validate(cfg: &ExperimentConfig, candidate: &Path, dir: &Path) -> anyhow::Result<ValidationReport> {
    let ss = cfg.validate()?;
    let mut manifest = Manifest::new("validate", cfg);
    let cand = read_candidate::<f64, _>(open(candidate)?)
        .with_context(|| format!("reading {}", candidate.display()))?;
    manifest.inputs.insert("candidate".into(), candidate.to_path_buf());
    let truth = manifest.time("oracle", || true_nullspace(&ss, cfg.depth, cfg.seed))?;
    let err = subspace_angle(&truth, &cand.nullspace)?;
    let report = ValidationReport {
        theta_max: err.theta_max,
        cosines: err.cosines.iter().copied().collect(),
        nullity: truth.dim(),
        d: truth.ambient_dim(),
    };
    out_dir(dir)?;
    serde_json::to_writer_pretty(create(&dir.join(VALIDATION))?, &report)?;
    manifest.outputs.push(VALIDATION.into());
    manifest.result = Some(serde_json::to_value(&report)?);
    manifest.write(dir)?;
    Ok(report)
}

/// Convergence of the recovered subspace over the configured `Nt` ladder.
pub fn sweep(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<Manifest> {
    let ss = cfg.validate()?;
    if cfg.sweep.nt.is_empty() || cfg.sweep.nt.windows(2).any(|w| w[0] >= w[1]) || cfg.sweep.nt[0] == 0 {
        bail!(InvalidConfig("sweep Nt list must be positive and strictly ascending".into()));
    }
    if cfg.sweep.seeds == 0 {
        bail!(InvalidConfig("sweep needs at least one seed".into()));
    }
    let setup = StudySetup {
        options: cfg.search_options(&ss)?,
        system: ss,
        samples: cfg.samples,
        depth: cfg.depth,
        x0: cfg.x0,
        noise_u: cfg.noise.input,
        noise_y: cfg.noise.output,
        grid: cfg.grid,
        seed: cfg.seed,
    };
    let mut manifest = Manifest::new("sweep", cfg);
    let table = manifest.time("study", || convergence_study(&setup, &cfg.sweep.nt, cfg.sweep.seeds))?;
    out_dir(dir)?;
    write_convergence(&table, create(&dir.join(CONVERGENCE))?)?;
    write_convergence_summary(&table, create(&dir.join(CONVERGENCE_SUMMARY))?)?;
    manifest.outputs.extend([CONVERGENCE.into(), CONVERGENCE_SUMMARY.into()]);
    manifest.result = Some(serde_json::json!({
        "Nt": cfg.sweep.nt,
        "seeds": cfg.sweep.seeds,
        "median_theta_max": table.summary.iter().map(|s| s.median_theta_max).collect::<Vec<_>>(),
    }));
    manifest.write(dir)?;
    Ok(manifest)
}

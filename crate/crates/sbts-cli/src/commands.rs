//! One function per subcommand. Each reads its JSON config, runs the core
//! pipeline stage, writes outputs atomically, and returns the one-line JSON
//! summary printed to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::json;

use sbts_core::data::{read_panel_csv, write_panel_csv, DriftConfig, GenerationConfig, Panel};
use sbts_core::metrics;
use sbts_core::mle::{run_robustness, write_estimates_csv, RobustnessConfig};
use sbts_core::sampler::generate_paths;
use sbts_core::scaling::{
    min_max, rescale_returns, returns_to_base_one, standardize, to_log_returns, ScalingTransform,
};
use sbts_core::selection::{select, write_selection_csv, SelectionConfig};
use sbts_core::simulators::{
    simulate_ar, simulate_fbm, simulate_garch2, simulate_heston, simulate_ou, simulate_sine,
};
use sbts_core::TimeGrid;

use crate::config::{
    EvaluateConfig, GenerateConfig, ProcessSpec, RobustnessCliConfig, ScaleConfig, ScalingMode,
    SelectConfig, SimulateConfig,
};

/// Errors split by exit code: 1 for bad configs/inputs, 2 for runtime faults.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<sbts_core::SbtsError> for CliError {
    fn from(e: sbts_core::SbtsError) -> Self {
        use sbts_core::SbtsError as E;
        match &e {
            E::InvalidConfig(_) | E::InvalidPanel(_) | E::ShapeMismatch(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
}

fn open_panel(path: &str, grid: &TimeGrid) -> CliResult<Panel> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot open input {path}: {e}")))?;
    read_panel_csv(std::io::BufReader::new(file), grid.clone()).map_err(CliError::from)
}

/// Write via a temp file in the destination directory, then rename: readers
/// never observe a partially written artifact.
fn write_atomic(path: &str, write: impl FnOnce(&mut Vec<u8>) -> CliResult<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let dest = PathBuf::from(path);
    if let Some(parent) = dest.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::Runtime(format!("cannot create directory {}: {e}", parent.display()))
            })?;
        }
    }
    let tmp = dest.with_extension(format!(
        "{}.tmp",
        dest.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, &buf)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, &dest)
        .map_err(|e| CliError::Runtime(format!("cannot rename to {}: {e}", dest.display())))?;
    Ok(())
}

fn write_panel_atomic(path: &str, panel: &Panel) -> CliResult<()> {
    write_atomic(path, |buf| {
        write_panel_csv(panel, buf).map_err(CliError::from)
    })
}

fn write_json_atomic<T: serde::Serialize>(path: &str, value: &T) -> CliResult<()> {
    write_atomic(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)
            .map_err(|e| CliError::Runtime(format!("cannot serialize {path}: {e}")))?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn cmd_simulate(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: SimulateConfig = load_config(config_path)?;
    let grid = cfg.grid.build()?;
    let m = cfg.num_samples;
    let seed = cfg.seed;
    let mut floor_events = 0usize;
    let panel = match &cfg.process {
        ProcessSpec::Ou { theta, mu, sigma, x0 } => {
            let p = ProcessSpec::ou_params(*theta, *mu, *sigma, *x0)?;
            simulate_ou(&p, &grid, m, seed)?
        }
        ProcessSpec::Heston { kappa, theta, xi, rho, r, v0, x0, layout } => {
            let p = ProcessSpec::heston_params(*kappa, *theta, *xi, *rho, *r, *v0, *x0)?;
            let (panel, floors) = simulate_heston(&p, &grid, m, seed, *layout)?;
            floor_events = floors;
            panel
        }
        ProcessSpec::Garch2 => simulate_garch2(&grid, m, seed)?,
        ProcessSpec::Sine { features } => simulate_sine(&grid, m, seed, *features)?,
        ProcessSpec::Ar { features, phi, sigma } => {
            simulate_ar(&grid, m, seed, *features, *phi, *sigma)?
        }
        ProcessSpec::Fbm { hurst } => simulate_fbm(*hurst, &grid, m, seed)?,
    };
    write_panel_atomic(&cfg.output, &panel)?;
    Ok(json!({
        "command": "simulate",
        "output": cfg.output,
        "samples": panel.num_samples(),
        "times": panel.num_times(),
        "features": panel.num_features(),
        "variance_floor_events": floor_events,
        "content_hash": panel.content_hash(),
    }))
}

pub fn cmd_scale(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: ScaleConfig = load_config(config_path)?;
    let grid = cfg.grid.build()?;
    let panel = open_panel(&cfg.input, &grid)?;
    let (scaled, transform) = match cfg.mode {
        ScalingMode::LogReturnRescale => {
            let returns = to_log_returns(&panel)?;
            let dt = grid.times()[1] - grid.times()[0];
            rescale_returns(&returns, dt)?
        }
        ScalingMode::Standardize => standardize(&panel)?,
        ScalingMode::MinMax => min_max(&panel)?,
    };
    write_panel_atomic(&cfg.output_panel, &scaled)?;
    write_json_atomic(&cfg.output_transform, &transform)?;
    Ok(json!({
        "command": "scale",
        "output_panel": cfg.output_panel,
        "output_transform": cfg.output_transform,
        "times": scaled.num_times(),
        "content_hash": scaled.content_hash(),
    }))
}

pub fn cmd_select(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: SelectConfig = load_config(config_path)?;
    let grid = cfg.grid.build()?;
    let train = open_panel(&cfg.train_input, &grid)?;
    let test = open_panel(&cfg.test_input, &grid)?;
    let sel_cfg = SelectionConfig {
        bandwidth_grid: cfg.bandwidth_grid.clone(),
        order_grid: cfg.order_grid.clone(),
        realizations_per_test: cfg.realizations_per_test,
        seed: cfg.seed,
        noise_scale: cfg.noise_scale,
    };
    let report = select(&train, &test, &sel_cfg)?;
    write_atomic(&cfg.output_table, |buf| {
        write_selection_csv(&report, buf).map_err(CliError::from)
    })?;
    let chosen = json!({
        "bandwidth": report.chosen_bandwidth,
        "order": report.chosen_order,
        "mse": report.chosen_mse,
    });
    write_json_atomic(&cfg.output_chosen, &chosen)?;
    Ok(json!({
        "command": "select",
        "output_table": cfg.output_table,
        "output_chosen": cfg.output_chosen,
        "chosen": chosen,
        "cells": report.cells.len(),
    }))
}

pub fn cmd_generate(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: GenerateConfig = load_config(config_path)?;
    let grid = cfg.grid.build()?;
    let reference = open_panel(&cfg.reference_input, &grid)?;
    let d = reference.num_features();
    let drift_cfg = DriftConfig::new(cfg.bandwidth.resolve(d)?, cfg.markov_order)?;
    let gen_cfg = GenerationConfig::new(cfg.num_paths, cfg.seed)?
        .with_noise_scale(cfg.noise_scale)
        .with_start(cfg.start.clone());
    let generated = generate_paths(&reference, &drift_cfg, &gen_cfg)?;
    write_panel_atomic(&cfg.output_panel, &generated.panel)?;
    if let Some(prov_path) = &cfg.output_provenance {
        write_atomic(prov_path, |buf| {
            generated.write_provenance_ndjson(buf).map_err(CliError::from)
        })?;
    }
    let mut base_one_hash = None;
    if let Some(base_path) = &cfg.output_base_one {
        let transform_path = cfg.invert_transform.as_ref().ok_or_else(|| {
            CliError::Validation("output_base_one requires invert_transform".into())
        })?;
        let text = fs::read_to_string(transform_path).map_err(|e| {
            CliError::Validation(format!("cannot read transform {transform_path}: {e}"))
        })?;
        let transform: ScalingTransform = serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!("invalid transform {transform_path}: {e}"))
        })?;
        let base_one = returns_to_base_one(&generated.panel, &transform)?;
        write_panel_atomic(base_path, &base_one)?;
        base_one_hash = Some(base_one.content_hash());
    }
    Ok(json!({
        "command": "generate",
        "output_panel": cfg.output_panel,
        "paths": cfg.num_paths,
        "fallbacks": generated.total_fallbacks(),
        "content_hash": generated.panel.content_hash(),
        "base_one_hash": base_one_hash,
    }))
}

pub fn cmd_evaluate(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: EvaluateConfig = load_config(config_path)?;
    let grid = cfg.grid.build()?;
    let real = open_panel(&cfg.real_input, &grid)?;
    let generated = open_panel(&cfg.generated_input, &grid)?;
    let max_lag = cfg
        .max_lag
        .unwrap_or_else(|| metrics::default_max_lag(real.num_times()));
    let report = metrics::evaluate(&real, &generated, max_lag)?;
    write_json_atomic(&cfg.output_report, &report)?;
    if let Some(acf_path) = &cfg.output_acf {
        write_atomic(acf_path, |buf| {
            metrics::write_acf_csv(&real, &generated, max_lag, buf).map_err(CliError::from)
        })?;
    }
    Ok(json!({
        "command": "evaluate",
        "output_report": cfg.output_report,
        "autocorrelation": report.autocorrelation,
        "cross_correlation": report.cross_correlation,
        "onnd": report.onnd,
        "two_sample_proxy": report.two_sample_proxy,
    }))
}

pub fn cmd_robustness(config_path: &Path) -> CliResult<serde_json::Value> {
    let cfg: RobustnessCliConfig = load_config(config_path)?;
    let core_cfg = RobustnessConfig {
        num_series: cfg.num_series,
        series_length: cfg.series_length,
        dt: cfg.dt,
        substeps: cfg.substeps,
        bandwidth: cfg.bandwidth,
        markov_order: cfg.markov_order,
        seed: cfg.seed,
    };
    let report = run_robustness(&cfg.process, &core_cfg)?;
    write_json_atomic(&cfg.output_report, &report)?;
    if let Some(est_path) = &cfg.output_estimates {
        write_atomic(est_path, |buf| {
            write_estimates_csv(&report, buf).map_err(CliError::from)
        })?;
    }
    let summary: Vec<serde_json::Value> = report
        .summaries
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "median_difference": s.median_difference,
                "iqr_difference": s.iqr_difference,
                "concentrated": s.concentrated,
            })
        })
        .collect();
    Ok(json!({
        "command": "robustness",
        "output_report": cfg.output_report,
        "generation_fallbacks": report.generation_fallbacks,
        "summaries": summary,
    }))
}

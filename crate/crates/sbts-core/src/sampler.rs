//! Path generation: Euler integration of dX = a_hat dt + noise_scale dW
//! between grid points, with the drift recomputed at every sub-step.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DriftConfig, GenerationConfig, Panel, StartPolicy};
use crate::drift::IntervalWeights;
use crate::error::{Result, SbtsError};
use crate::rng::stream;

/// Per-path generation record for the provenance sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProvenance {
    pub path: usize,
    pub seed: u64,
    /// Times the fallback ladder had to engage (bandwidth doubling or the
    /// unconditional terminal rung) while generating this path.
    pub fallback_count: usize,
}

/// Generated panel plus everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: Panel,
    pub seed: u64,
    pub drift_config: DriftConfig,
    pub reference_hash: String,
    pub provenance: Vec<PathProvenance>,
}

impl GeneratedPanel {
    pub fn total_fallbacks(&self) -> usize {
        self.provenance.iter().map(|p| p.fallback_count).sum()
    }

    /// NDJSON provenance sidecar: one object per path.
    pub fn write_provenance_ndjson<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for p in &self.provenance {
            serde_json::to_writer(&mut w, p)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Builds interval weights with the retry ladder: as specified bandwidths,
/// then doubled up to 3 times, then unconditional (pure bridge weighting).
/// Returns the weights and how many rungs were consumed.
fn prepare_with_fallback(
    prefix: ArrayView2<'_, f64>,
    reference: &Panel,
    cfg: &DriftConfig,
    interval_index: usize,
) -> Result<(IntervalWeights, usize)> {
    match IntervalWeights::prepare(prefix, reference, cfg, interval_index) {
        Ok(w) => return Ok((w, 0)),
        Err(SbtsError::DegenerateWeights) => {}
        Err(e) => return Err(e),
    }
    for attempt in 1..=3usize {
        let widened = cfg.scaled_bandwidths(2f64.powi(attempt as i32));
        match IntervalWeights::prepare(prefix, reference, &widened, interval_index) {
            Ok(w) => return Ok((w, attempt)),
            Err(SbtsError::DegenerateWeights) => {}
            Err(e) => return Err(e),
        }
    }
    let w = IntervalWeights::prepare_unconditional(prefix, reference, cfg, interval_index)?;
    Ok((w, 4))
}

/// Euler steps across one grid interval. The state enters at times[i-1] and
/// leaves at times[i]; drift weights are fixed for the interval (the prefix
/// is), the bridge factor is re-evaluated each sub-step.
#[allow(clippy::too_many_arguments)]
fn integrate_interval<R: Rng>(
    weights: &IntervalWeights,
    cfg: &DriftConfig,
    times: &[f64],
    interval_index: usize,
    substeps: usize,
    noise_scale: f64,
    x: &mut [f64],
    rng: &mut R,
) -> Result<usize> {
    let (t_i, t_next) = (times[interval_index - 1], times[interval_index]);
    let delta = (t_next - t_i) / substeps as f64;
    let sqrt_delta = delta.sqrt();
    let d = x.len();
    let mut drift = vec![0.0; d];
    let mut degenerate_steps = 0usize;
    for s in 0..substeps {
        let t = t_i + s as f64 * delta;
        match weights.drift(t, x, cfg.weight_floor, &mut drift) {
            Ok(()) => {
                for f in 0..d {
                    x[f] += drift[f] * delta;
                }
            }
            // all bridge weights underflowed at this state; diffuse freely
            Err(SbtsError::DegenerateWeights) => degenerate_steps += 1,
            Err(e) => return Err(e),
        }
        if noise_scale > 0.0 {
            for xf in x.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *xf += noise_scale * sqrt_delta * z;
            }
        }
    }
    Ok(degenerate_steps)
}

fn start_value<R: Rng>(
    policy: &StartPolicy,
    reference: &Panel,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match policy {
        StartPolicy::Zeros => Ok(vec![0.0; d]),
        StartPolicy::Fixed(v) => {
            if v.len() != d {
                return Err(SbtsError::ShapeMismatch(format!(
                    "start vector has {} features, panel has {d}",
                    v.len()
                )));
            }
            Ok(v.clone())
        }
        StartPolicy::ResampleFirstColumn => {
            let m = rng.gen_range(0..reference.num_samples());
            Ok(reference.value(m, 0).to_vec())
        }
    }
}

/// Generates full trajectories over the reference grid. Paths are independent
/// (per-path RNG streams keyed by (seed, path index)) and run in parallel;
/// output order is by path index.
pub fn generate_paths(
    reference: &Panel,
    drift_cfg: &DriftConfig,
    gen_cfg: &GenerationConfig,
) -> Result<GeneratedPanel> {
    crate::data::validate_panel(reference)?;
    drift_cfg.validate()?;
    gen_cfg.validate()?;
    if drift_cfg.bandwidths.len() != reference.num_features() {
        return Err(SbtsError::ShapeMismatch(format!(
            "drift config has {} bandwidths, panel has {} features",
            drift_cfg.bandwidths.len(),
            reference.num_features()
        )));
    }
    let n = reference.num_times();
    let d = reference.num_features();
    let times = reference.grid.times();
    let substeps = reference.grid.substeps();

    let paths: Vec<Result<(Array2<f64>, usize)>> = (0..gen_cfg.num_paths)
        .into_par_iter()
        .map(|path_idx| {
            let mut rng = stream(gen_cfg.seed, &[0x10, path_idx as u64]);
            let mut grid_values = Array2::zeros((n, d));
            let start = start_value(&gen_cfg.start, reference, d, &mut rng)?;
            let mut x = start.clone();
            grid_values.row_mut(0).iter_mut().zip(&start).for_each(|(a, b)| *a = *b);
            let mut fallbacks = 0usize;
            for i in 1..n {
                let prefix = grid_values.slice(ndarray::s![..i, ..]);
                let (weights, rungs) =
                    prepare_with_fallback(prefix, reference, drift_cfg, i)?;
                fallbacks += if rungs > 0 { 1 } else { 0 };
                let degenerate = integrate_interval(
                    &weights,
                    drift_cfg,
                    times,
                    i,
                    substeps,
                    gen_cfg.noise_scale,
                    &mut x,
                    &mut rng,
                )?;
                if degenerate > 0 {
                    fallbacks += 1;
                }
                for f in 0..d {
                    grid_values[[i, f]] = x[f];
                }
            }
            Ok((grid_values, fallbacks))
        })
        .collect();

    let mut data = Array3::zeros((gen_cfg.num_paths, n, d));
    let mut provenance = Vec::with_capacity(gen_cfg.num_paths);
    for (path_idx, res) in paths.into_iter().enumerate() {
        let (grid_values, fallbacks) = res?;
        data.index_axis_mut(ndarray::Axis(0), path_idx)
            .assign(&grid_values);
        provenance.push(PathProvenance {
            path: path_idx,
            seed: gen_cfg.seed,
            fallback_count: fallbacks,
        });
    }
    Ok(GeneratedPanel {
        panel: Panel::new(data, reference.grid.clone())?,
        seed: gen_cfg.seed,
        drift_config: drift_cfg.clone(),
        reference_hash: reference.content_hash(),
        provenance,
    })
}

/// Conditional terminal generation: runs the Euler scheme over the last grid
/// interval only, conditioning the kernel on a supplied real prefix of length
/// N-1, starting from the prefix's last value. Returns L terminal samples and
/// the number of realizations that needed the fallback ladder.
pub fn generate_conditional_terminals(
    prefix: ArrayView2<'_, f64>,
    reference: &Panel,
    drift_cfg: &DriftConfig,
    l: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<(Array2<f64>, usize)> {
    let n = reference.num_times();
    let d = reference.num_features();
    if prefix.nrows() != n - 1 || prefix.ncols() != d {
        return Err(SbtsError::ShapeMismatch(format!(
            "prefix is {}x{}, expected {}x{}",
            prefix.nrows(),
            prefix.ncols(),
            n - 1,
            d
        )));
    }
    let (weights, rungs) = prepare_with_fallback(prefix, reference, drift_cfg, n - 1)?;
    let times = reference.grid.times();
    let substeps = reference.grid.substeps();
    let mut terminals = Array2::zeros((l, d));
    let mut fallbacks = if rungs > 0 { l } else { 0 };
    for li in 0..l {
        let mut rng = stream(seed, &[0x11, li as u64]);
        let mut x = prefix.row(n - 2).to_vec();
        let degenerate = integrate_interval(
            &weights,
            drift_cfg,
            times,
            n - 1,
            substeps,
            noise_scale,
            &mut x,
            &mut rng,
        )?;
        if degenerate > 0 && rungs == 0 {
            fallbacks += 1;
        }
        for f in 0..d {
            terminals[[li, f]] = x[f];
        }
    }
    Ok((terminals, fallbacks))
}

/// Write a generated panel to CSV (same long form as reference panels).
pub fn write_generated_csv<W: std::io::Write>(gen: &GeneratedPanel, w: W) -> Result<()> {
    crate::data::write_panel_csv(&gen.panel, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MarkovOrder, TimeGrid};
    use crate::simulators::simulate_ar;
    use approx::assert_relative_eq;
    use ndarray::Array3;

    fn single_sample_reference(n: usize, substeps: usize) -> Panel {
        // one zero-started reference path with visible structure
        let grid = TimeGrid::uniform(0.0, 0.25, n, substeps).unwrap();
        let data = Array3::from_shape_fn((1, n, 1), |(_, i, _)| match i {
            0 => 0.0,
            _ => (i as f64 * 0.7).sin(),
        });
        Panel::new(data, grid).unwrap()
    }

    #[test]
    fn noiseless_bridge_collapses_onto_single_reference() {
        let reference = single_sample_reference(5, 200);
        let drift_cfg = DriftConfig::uniform(1.0, 1, MarkovOrder::Full).unwrap();
        let gen_cfg = GenerationConfig::new(3, 42).unwrap().with_noise_scale(0.0);
        let out = generate_paths(&reference, &drift_cfg, &gen_cfg).unwrap();
        for p in 0..3 {
            for i in 0..5 {
                assert_relative_eq!(
                    out.panel.data[[p, i, 0]],
                    reference.data[[0, i, 0]],
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic_across_thread_counts() {
        let reference = simulate_ar(
            &TimeGrid::uniform(0.0, 1.0, 12, 20).unwrap(),
            30,
            7,
            2,
            0.5,
            0.8,
        )
        .unwrap();
        let drift_cfg = DriftConfig::uniform(1.5, 2, MarkovOrder::Order(1)).unwrap();
        let gen_cfg = GenerationConfig::new(8, 123).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| generate_paths(&reference, &drift_cfg, &gen_cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.panel.data, b.panel.data);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn conditional_terminal_pins_to_single_reference_without_noise() {
        let reference = single_sample_reference(5, 200);
        let mut drift_cfg = DriftConfig::uniform(1.0, 1, MarkovOrder::Full).unwrap();
        drift_cfg.weight_floor = 1e-300;
        let prefix = reference
            .data
            .slice(ndarray::s![0, ..4, ..])
            .to_owned();
        let (terms, _) =
            generate_conditional_terminals(prefix.view(), &reference, &drift_cfg, 1, 5, 0.0)
                .unwrap();
        let target = reference.data[[0, 4, 0]];
        assert_relative_eq!(terms[[0, 0]], target, epsilon = 1e-8);
    }

    #[test]
    fn conditional_prefix_outside_support_engages_fallback() {
        let reference = single_sample_reference(4, 10);
        let drift_cfg = DriftConfig::uniform(0.05, 1, MarkovOrder::Full).unwrap();
        let mut prefix = reference.data.slice(ndarray::s![0, ..3, ..]).to_owned();
        prefix.mapv_inplace(|v| v + 100.0);
        let (terms, fallbacks) =
            generate_conditional_terminals(prefix.view(), &reference, &drift_cfg, 5, 9, 1.0)
                .unwrap();
        assert_eq!(fallbacks, 5);
        assert_eq!(terms.nrows(), 5);
    }

    #[test]
    fn rejects_mismatched_bandwidth_count() {
        let reference = single_sample_reference(4, 10);
        let drift_cfg = DriftConfig::uniform(1.0, 3, MarkovOrder::Full).unwrap();
        let gen_cfg = GenerationConfig::new(1, 1).unwrap();
        assert!(generate_paths(&reference, &drift_cfg, &gen_cfg).is_err());
    }

    #[test]
    fn provenance_ndjson_has_one_line_per_path() {
        let reference = single_sample_reference(4, 10);
        let drift_cfg = DriftConfig::uniform(1.0, 1, MarkovOrder::Full).unwrap();
        let gen_cfg = GenerationConfig::new(4, 2).unwrap();
        let out = generate_paths(&reference, &drift_cfg, &gen_cfg).unwrap();
        let mut buf = Vec::new();
        out.write_provenance_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: PathProvenance = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.path, 0);
    }

    #[test]
    fn fixed_start_is_recorded_exactly() {
        let reference = single_sample_reference(4, 10);
        let drift_cfg = DriftConfig::uniform(5.0, 1, MarkovOrder::Order(1)).unwrap();
        let gen_cfg = GenerationConfig::new(2, 3)
            .unwrap()
            .with_start(StartPolicy::Fixed(vec![0.25]));
        let out = generate_paths(&reference, &drift_cfg, &gen_cfg).unwrap();
        assert_eq!(out.panel.data[[0, 0, 0]], 0.25);
        assert_eq!(out.panel.data[[1, 0, 0]], 0.25);
    }
}

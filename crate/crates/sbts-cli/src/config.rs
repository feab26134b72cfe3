//! JSON run configurations, one document per subcommand. Unknown keys are
//! rejected so stale configs fail loudly instead of silently ignoring options.

use serde::{Deserialize, Serialize};

use sbts_core::selection::BandwidthCandidate;
use sbts_core::simulators::{HestonLayout, HestonParams, OuParams};
use sbts_core::{MarkovOrder, StartPolicy, TimeGrid};

/// Uniform grid specification shared by the commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    200
}

impl GridSpec {
    pub fn build(&self) -> sbts_core::Result<TimeGrid> {
        TimeGrid::uniform(self.t0, self.dt, self.n, self.substeps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Ou {
        theta: f64,
        mu: f64,
        sigma: f64,
        #[serde(default)]
        x0: Option<f64>,
    },
    Heston {
        kappa: f64,
        theta: f64,
        xi: f64,
        rho: f64,
        r: f64,
        #[serde(default)]
        v0: Option<f64>,
        #[serde(default)]
        x0: Option<f64>,
        layout: HestonLayout,
    },
    Garch2,
    Sine {
        features: usize,
    },
    Ar {
        features: usize,
        phi: f64,
        sigma: f64,
    },
    Fbm {
        hurst: f64,
    },
}

impl ProcessSpec {
    pub fn ou_params(theta: f64, mu: f64, sigma: f64, x0: Option<f64>) -> sbts_core::Result<OuParams> {
        let mut p = OuParams::new(theta, mu, sigma)?;
        if let Some(x0) = x0 {
            p = p.with_x0(x0);
        }
        Ok(p)
    }

    pub fn heston_params(
        kappa: f64,
        theta: f64,
        xi: f64,
        rho: f64,
        r: f64,
        v0: Option<f64>,
        x0: Option<f64>,
    ) -> sbts_core::Result<HestonParams> {
        let mut p = HestonParams::new(kappa, theta, xi, rho, r)?;
        if let Some(v0) = v0 {
            p.v0 = v0;
        }
        if let Some(x0) = x0 {
            p.x0 = x0;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub process: ProcessSpec,
    pub num_samples: usize,
    pub grid: GridSpec,
    pub seed: u64,
    pub output: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Prices -> log returns -> per-feature rescale to std sqrt(dt).
    LogReturnRescale,
    Standardize,
    MinMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub input: String,
    pub grid: GridSpec,
    pub mode: ScalingMode,
    pub output_panel: String,
    pub output_transform: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub train_input: String,
    pub test_input: String,
    pub grid: GridSpec,
    pub bandwidth_grid: Vec<BandwidthCandidate>,
    pub order_grid: Vec<MarkovOrder>,
    pub realizations_per_test: usize,
    pub seed: u64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    pub output_table: String,
    pub output_chosen: String,
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub reference_input: String,
    pub grid: GridSpec,
    pub bandwidth: BandwidthCandidate,
    pub markov_order: MarkovOrder,
    pub num_paths: usize,
    pub seed: u64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_start")]
    pub start: StartPolicy,
    pub output_panel: String,
    #[serde(default)]
    pub output_provenance: Option<String>,
    /// Optional transform JSON written by `scale`; when set, a second panel is
    /// emitted with the scaling inverted back to base-one price paths.
    #[serde(default)]
    pub invert_transform: Option<String>,
    #[serde(default)]
    pub output_base_one: Option<String>,
}

fn default_start() -> StartPolicy {
    StartPolicy::Zeros
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub real_input: String,
    pub generated_input: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub max_lag: Option<usize>,
    pub output_report: String,
    #[serde(default)]
    pub output_acf: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessCliConfig {
    pub process: sbts_core::RobustnessProcess,
    pub num_series: usize,
    pub series_length: usize,
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub bandwidth: f64,
    pub markov_order: MarkovOrder,
    pub seed: u64,
    pub output_report: String,
    #[serde(default)]
    pub output_estimates: Option<String>,
}

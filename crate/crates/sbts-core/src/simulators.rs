//! Reference-process simulators: Ornstein-Uhlenbeck, Heston, GARCH(2), Sine,
//! AR, fractional Brownian motion, plus uniform parameter sampling for the
//! robustness protocol.

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::data::{Panel, TimeGrid};
use crate::error::{Result, SbtsError};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Initial value. Defaults to mu + 6 so the mean-reversion transient makes
    /// theta and mu identifiable on short horizons; starting at the stationary
    /// mean leaves theta nearly unidentified over one unit of time.
    pub x0: f64,
}

impl OuParams {
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            theta,
            mu,
            sigma,
            x0: mu + 6.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !(self.sigma >= 0.0) {
            return Err(SbtsError::InvalidConfig(
                "OU requires theta > 0 and sigma >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Exact transition: X_{t+dt} | X_t ~ N(mean, var).
    pub fn transition(&self, x: f64, dt: f64) -> (f64, f64) {
        let e = (-self.theta * dt).exp();
        let mean = x * e + self.mu * (1.0 - e);
        let var = self.sigma * self.sigma * (1.0 - (-2.0 * self.theta * dt).exp())
            / (2.0 * self.theta);
        (mean, var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
    pub r: f64,
    pub v0: f64,
    pub x0: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, theta: f64, xi: f64, rho: f64, r: f64) -> Result<Self> {
        let p = Self {
            kappa,
            theta,
            xi,
            rho,
            r,
            v0: theta,
            x0: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.theta > 0.0 && self.xi > 0.0) {
            return Err(SbtsError::InvalidConfig(
                "Heston requires kappa, theta, xi > 0".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(SbtsError::InvalidConfig("rho must be in [-1, 1]".into()));
        }
        if !(self.v0 > 0.0 && self.x0 > 0.0) {
            return Err(SbtsError::InvalidConfig("v0 and x0 must be positive".into()));
        }
        Ok(())
    }
}

/// Closed interval for uniform parameter draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(SbtsError::InvalidConfig(format!(
                "interval lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuRanges {
    pub theta: Interval,
    pub mu: Interval,
    pub sigma: Interval,
}

impl Default for OuRanges {
    fn default() -> Self {
        Self {
            theta: Interval { lo: 0.5, hi: 2.5 },
            mu: Interval { lo: 0.5, hi: 1.5 },
            sigma: Interval { lo: 0.1, hi: 0.5 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonRanges {
    pub kappa: Interval,
    pub theta: Interval,
    pub xi: Interval,
    pub rho: Interval,
    pub r: Interval,
}

impl Default for HestonRanges {
    fn default() -> Self {
        Self {
            kappa: Interval { lo: 0.5, hi: 4.0 },
            theta: Interval { lo: 0.5, hi: 1.5 },
            xi: Interval { lo: 0.01, hi: 0.9 },
            rho: Interval { lo: -0.9, hi: 0.9 },
            r: Interval { lo: 0.02, hi: 0.1 },
        }
    }
}

/// Independent uniform draws per parameter per sample.
pub fn sample_ou_params(ranges: &OuRanges, count: usize, seed: u64) -> Result<Vec<OuParams>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &[0x0, i as u64]);
            let mu = ranges.mu.sample(&mut rng);
            Ok(OuParams {
                theta: ranges.theta.sample(&mut rng),
                mu,
                sigma: ranges.sigma.sample(&mut rng),
                x0: mu + 2.0,
            })
        })
        .collect()
}

pub fn sample_heston_params(
    ranges: &HestonRanges,
    count: usize,
    seed: u64,
) -> Result<Vec<HestonParams>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &[0x1, i as u64]);
            let theta = ranges.theta.sample(&mut rng);
            let p = HestonParams {
                kappa: ranges.kappa.sample(&mut rng),
                theta,
                xi: ranges.xi.sample(&mut rng),
                rho: ranges.rho.sample(&mut rng),
                r: ranges.r.sample(&mut rng),
                v0: theta,
                x0: 1.0,
            };
            p.validate()?;
            Ok(p)
        })
        .collect()
}

/// Exact-transition OU sampling, one parameter set for all samples.
pub fn simulate_ou(params: &OuParams, grid: &TimeGrid, m: usize, seed: u64) -> Result<Panel> {
    simulate_ou_per_sample(&vec![*params; m], grid, seed)
}

/// Exact-transition OU sampling with per-sample parameters.
pub fn simulate_ou_per_sample(params: &[OuParams], grid: &TimeGrid, seed: u64) -> Result<Panel> {
    let n = grid.len();
    let times = grid.times();
    let mut data = Array3::zeros((params.len(), n, 1));
    for (mi, p) in params.iter().enumerate() {
        p.validate()?;
        let mut rng = stream(seed, &[0x2, mi as u64]);
        let mut x = p.x0;
        data[[mi, 0, 0]] = x;
        for i in 1..n {
            let dt = times[i] - times[i - 1];
            let (mean, var) = p.transition(x, dt);
            let z: f64 = StandardNormal.sample(&mut rng);
            x = mean + var.sqrt() * z;
            data[[mi, i, 0]] = x;
        }
    }
    Panel::new(data, grid.clone())
}

/// Feature layout of simulated Heston panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HestonLayout {
    /// (X_t, v_t) levels.
    Levels,
    /// (per-step log-return of X, v_t); the first log-return column is 0 so
    /// every sample shares its first grid value (0, v0).
    LogReturnAndVariance,
}

/// Euler-style Heston sampling per the stated discretization, with full
/// truncation of the variance inside square roots. Returns the panel and the
/// number of flooring events.
pub fn simulate_heston(
    params: &HestonParams,
    grid: &TimeGrid,
    m: usize,
    seed: u64,
    layout: HestonLayout,
) -> Result<(Panel, usize)> {
    simulate_heston_per_sample(&vec![*params; m], grid, seed, layout)
}

pub fn simulate_heston_per_sample(
    params: &[HestonParams],
    grid: &TimeGrid,
    seed: u64,
    layout: HestonLayout,
) -> Result<(Panel, usize)> {
    let n = grid.len();
    let times = grid.times();
    let mut data = Array3::zeros((params.len(), n, 2));
    let mut floor_events = 0usize;
    for (mi, p) in params.iter().enumerate() {
        p.validate()?;
        let mut rng = stream(seed, &[0x3, mi as u64]);
        let mut x = p.x0;
        let mut v = p.v0;
        match layout {
            HestonLayout::Levels => {
                data[[mi, 0, 0]] = x;
                data[[mi, 0, 1]] = v;
            }
            HestonLayout::LogReturnAndVariance => {
                data[[mi, 0, 0]] = 0.0;
                data[[mi, 0, 1]] = v;
            }
        }
        for i in 1..n {
            let dt = times[i] - times[i - 1];
            let v_pos = if v > 0.0 {
                v
            } else {
                floor_events += 1;
                0.0
            };
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2raw: f64 = StandardNormal.sample(&mut rng);
            let z2 = p.rho * z1 + (1.0 - p.rho * p.rho).sqrt() * z2raw;
            let log_ret = (p.r - 0.5 * v) * dt + (v_pos * dt).sqrt() * z1;
            let x_new = x * log_ret.exp();
            let v_new = v + p.kappa * (p.theta - v) * dt + p.xi * (v_pos * dt).sqrt() * z2;
            x = x_new;
            v = v_new;
            match layout {
                HestonLayout::Levels => {
                    data[[mi, i, 0]] = x;
                    data[[mi, i, 1]] = v;
                }
                HestonLayout::LogReturnAndVariance => {
                    data[[mi, i, 0]] = log_ret;
                    data[[mi, i, 1]] = v;
                }
            }
        }
    }
    Ok((Panel::new(data, grid.clone())?, floor_events))
}

pub const GARCH2_ALPHA: [f64; 3] = [5.0, 0.4, 0.1];
/// Noise variance for the GARCH driver (N(0, 0.1) read as variance 0.1).
pub const GARCH2_EPS_VAR: f64 = 0.1;
const GARCH2_BURN_IN: usize = 50;

/// Order-2 GARCH: X_i = sigma_i eps_i, sigma^2_{i+1} = a0 + a1 X_i^2 + a2 X_{i-1}^2.
/// Initialized at the stationary sigma^2 with a 50-step burn-in.
pub fn simulate_garch2(grid: &TimeGrid, m: usize, seed: u64) -> Result<Panel> {
    simulate_garch2_driven(grid, m, seed, |rng| {
        let z: f64 = StandardNormal.sample(rng);
        z * GARCH2_EPS_VAR.sqrt()
    })
}

/// Test hook: the same recursion with a caller-supplied noise source.
pub fn simulate_garch2_driven<F>(grid: &TimeGrid, m: usize, seed: u64, mut eps: F) -> Result<Panel>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> f64,
{
    let n = grid.len();
    let (a0, a1, a2) = (GARCH2_ALPHA[0], GARCH2_ALPHA[1], GARCH2_ALPHA[2]);
    let sig2_init = a0 / (1.0 - a1 - a2);
    let mut data = Array3::zeros((m, n, 1));
    for mi in 0..m {
        let mut rng = stream(seed, &[0x4, mi as u64]);
        let mut x = 0.0;
        let mut sig2 = sig2_init;
        for step in 0..(GARCH2_BURN_IN + n) {
            let next_x = sig2.sqrt() * eps(&mut rng);
            sig2 = a0 + a1 * next_x * next_x + a2 * x * x;
            x = next_x;
            if step >= GARCH2_BURN_IN {
                data[[mi, step - GARCH2_BURN_IN, 0]] = x;
            }
        }
    }
    Panel::new(data, grid.clone())
}

/// Sinusoids with per-(sample, feature) random frequency and phase:
/// x_f(t) = sin(2 pi eta t + phase), eta ~ U[0,1], phase ~ U[-pi, pi].
pub fn simulate_sine(grid: &TimeGrid, m: usize, seed: u64, d: usize) -> Result<Panel> {
    let n = grid.len();
    let times = grid.times();
    let mut data = Array3::zeros((m, n, d));
    for mi in 0..m {
        let mut rng = stream(seed, &[0x5, mi as u64]);
        for f in 0..d {
            let eta: f64 = rng.gen_range(0.0..1.0);
            let phase: f64 = rng.gen_range(-PI..PI);
            for i in 0..n {
                data[[mi, i, f]] = (2.0 * PI * eta * times[i] + phase).sin();
            }
        }
    }
    Panel::new(data, grid.clone())
}

/// AR(1) with equicorrelated Gaussian innovations:
/// x_t = phi x_{t-1} + Z, Z ~ N(0, sigma * ones + (1 - sigma) I), x_0 = 0.
/// The zero start is recorded as the first grid value.
pub fn simulate_ar(
    grid: &TimeGrid,
    m: usize,
    seed: u64,
    d: usize,
    phi: f64,
    sigma: f64,
) -> Result<Panel> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(SbtsError::InvalidConfig(
            "AR noise correlation sigma must be in [0, 1] for a PSD covariance".into(),
        ));
    }
    let n = grid.len();
    // Cholesky of sigma * ones + (1 - sigma) I, closed form for the
    // equicorrelated case via the general routine.
    let mut cov = vec![vec![sigma; d]; d];
    for (f, row) in cov.iter_mut().enumerate() {
        row[f] = 1.0;
    }
    let chol = cholesky(&cov)
        .ok_or_else(|| SbtsError::InvalidConfig("AR covariance is not PSD".into()))?;
    let mut data = Array3::zeros((m, n, d));
    let mut z = vec![0.0; d];
    let mut corr = vec![0.0; d];
    for mi in 0..m {
        let mut rng = stream(seed, &[0x6, mi as u64]);
        let mut x = vec![0.0; d];
        for f in 0..d {
            data[[mi, 0, f]] = x[f];
        }
        for i in 1..n {
            for zf in z.iter_mut() {
                *zf = StandardNormal.sample(&mut rng);
            }
            for f in 0..d {
                let mut s = 0.0;
                for (g, zg) in z.iter().enumerate().take(f + 1) {
                    s += chol[f][g] * zg;
                }
                corr[f] = s;
            }
            for f in 0..d {
                x[f] = phi * x[f] + corr[f];
                data[[mi, i, f]] = x[f];
            }
        }
    }
    Panel::new(data, grid.clone())
}

/// Exact fractional Brownian motion via dense Cholesky of the covariance
/// Gamma(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2. Uniform grids only.
/// A leading time equal to 0 yields a deterministic zero first value.
pub fn simulate_fbm(hurst: f64, grid: &TimeGrid, m: usize, seed: u64) -> Result<Panel> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(SbtsError::InvalidConfig("Hurst index must be in (0, 1)".into()));
    }
    if !grid.is_uniform(1e-9) {
        return Err(SbtsError::InvalidConfig(
            "fBM simulation supports uniform grids only".into(),
        ));
    }
    let times = grid.times();
    let n = grid.len();
    if times[0] < 0.0 {
        return Err(SbtsError::InvalidConfig("fBM grid times must be >= 0".into()));
    }
    let zero_start = times[0] == 0.0;
    let active: Vec<f64> = if zero_start {
        times[1..].to_vec()
    } else {
        times.to_vec()
    };
    let na = active.len();
    let h2 = 2.0 * hurst;
    let cov_at = |s: f64, t: f64| 0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2));
    let mut cov = vec![vec![0.0; na]; na];
    for i in 0..na {
        for j in 0..na {
            cov[i][j] = cov_at(active[i], active[j]);
        }
    }
    let chol = cholesky(&cov).ok_or_else(|| {
        SbtsError::InvalidConfig("fBM covariance failed Cholesky factorization".into())
    })?;
    let mut data = Array3::zeros((m, n, 1));
    let offset = n - na;
    for mi in 0..m {
        let mut rng = stream(seed, &[0x7, mi as u64]);
        let z: Vec<f64> = (0..na).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..na {
            let mut s = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                s += chol[i][j] * zj;
            }
            data[[mi, offset + i, 0]] = s;
        }
    }
    Panel::new(data, grid.clone())
}

/// Dense lower-triangular Cholesky; None if the matrix is not positive
/// definite (within a tiny diagonal tolerance).
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    if s > -1e-12 {
                        l[i][j] = 0.0;
                        continue;
                    }
                    return None;
                }
                l[i][j] = s.sqrt();
            } else if l[j][j] == 0.0 {
                l[i][j] = 0.0;
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, dt: f64) -> TimeGrid {
        TimeGrid::uniform(0.0, dt, n, 1).unwrap()
    }

    #[test]
    fn ou_with_zero_sigma_is_deterministic_decay() {
        let p = OuParams {
            theta: 1.5,
            mu: 1.0,
            sigma: 0.0,
            x0: 3.0,
        };
        let g = grid(10, 0.1);
        let panel = simulate_ou(&p, &g, 2, 7).unwrap();
        for i in 0..10 {
            let t = 0.1 * i as f64;
            let expected = p.mu + (p.x0 - p.mu) * (-p.theta * t).exp();
            assert_relative_eq!(panel.data[[0, i, 0]], expected, max_relative = 1e-12);
            assert_relative_eq!(panel.data[[1, i, 0]], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn ou_terminal_mean_approaches_long_run_level() {
        // strong reversion, long horizon: terminal sample mean ~ mu
        let p = OuParams::new(8.0, 1.0, 0.3).unwrap();
        let g = grid(200, 0.05);
        let panel = simulate_ou(&p, &g, 2000, 11).unwrap();
        let n = panel.num_times();
        let mean: f64 =
            (0..2000).map(|m| panel.data[[m, n - 1, 0]]).sum::<f64>() / 2000.0;
        let stat_sd = p.sigma / (2.0 * p.theta).sqrt();
        let se = stat_sd / (2000f64).sqrt();
        assert!((mean - p.mu).abs() < 5.0 * se, "mean {mean} vs mu {}", p.mu);
    }

    #[test]
    fn ou_chapman_kolmogorov_two_small_steps_match_one_big_step() {
        let p = OuParams::new(1.5, 1.0, 0.3).unwrap();
        let x = 2.0;
        let dt = 0.01;
        // exact composition of moments
        let (m1, v1) = p.transition(x, dt);
        let e = (-p.theta * dt).exp();
        let mean2 = m1 * e + p.mu * (1.0 - e);
        let var2 = v1 * e * e + p.transition(m1, dt).1;
        let (mb, vb) = p.transition(x, 2.0 * dt);
        assert_relative_eq!(mean2, mb, max_relative = 1e-12);
        assert_relative_eq!(var2, vb, max_relative = 1e-10);
    }

    #[test]
    fn heston_with_zero_vol_of_vol_has_deterministic_variance() {
        let mut p = HestonParams::new(3.0, 0.5, 1e-12, 0.0, 0.02).unwrap();
        p.xi = 1e-300; // effectively zero but passes validation
        let g = grid(5, 1.0 / 252.0);
        let (panel, _) = simulate_heston(&p, &g, 1, 3, HestonLayout::Levels).unwrap();
        let mut v = p.v0;
        for i in 0..5 {
            assert_relative_eq!(panel.data[[0, i, 1]], v, max_relative = 1e-9);
            v += p.kappa * (p.theta - v) * (1.0 / 252.0);
        }
    }

    #[test]
    fn heston_rho_zero_gives_uncorrelated_shocks() {
        let p = HestonParams::new(3.0, 0.5, 0.7, 0.0, 0.02).unwrap();
        let g = grid(100, 1.0 / 252.0);
        let (panel, _) = simulate_heston(&p, &g, 200, 5, HestonLayout::Levels).unwrap();
        // recover standardized shocks and correlate them
        let dt = 1.0 / 252.0;
        let mut num = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut count = 0.0f64;
        for m in 0..200 {
            for i in 0..99 {
                let v = panel.data[[m, i, 1]].max(0.0);
                if v <= 0.0 {
                    continue;
                }
                let x = panel.data[[m, i, 0]];
                let xn = panel.data[[m, i + 1, 0]];
                let vraw = panel.data[[m, i, 1]];
                let vn = panel.data[[m, i + 1, 1]];
                let z1 = ((xn / x).ln() - (p.r - 0.5 * vraw) * dt) / (v * dt).sqrt();
                let z2 = (vn - vraw - p.kappa * (p.theta - vraw) * dt) / (p.xi * (v * dt).sqrt());
                num += z1 * z2;
                s1 += z1 * z1;
                s2 += z2 * z2;
                count += 1.0;
            }
        }
        let corr = num / (s1.sqrt() * s2.sqrt());
        assert!(corr.abs() < 4.0 / count.sqrt() + 0.02, "corr = {corr}");
    }

    #[test]
    fn heston_fixed_setting_from_reference_table() {
        let p = HestonParams::new(3.0, 0.5, 0.7, 0.7, 0.02).unwrap();
        assert_eq!((p.kappa, p.theta, p.xi, p.rho, p.r), (3.0, 0.5, 0.7, 0.7, 0.02));
    }

    #[test]
    fn heston_log_return_layout_starts_at_zero_and_v0() {
        let p = HestonParams::new(3.0, 0.5, 0.7, 0.7, 0.02).unwrap();
        let g = grid(6, 1.0 / 252.0);
        let (panel, _) =
            simulate_heston(&p, &g, 3, 9, HestonLayout::LogReturnAndVariance).unwrap();
        for m in 0..3 {
            assert_eq!(panel.data[[m, 0, 0]], 0.0);
            assert_eq!(panel.data[[m, 0, 1]], p.v0);
        }
    }

    #[test]
    fn garch_zero_noise_collapses_to_zero() {
        let g = grid(10, 1.0);
        let panel = simulate_garch2_driven(&g, 2, 1, |_| 0.0).unwrap();
        assert!(panel.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn garch_unconditional_variance_matches_fixed_point() {
        // E[X^2] = var_eps * a0 / (1 - var_eps * (a1 + a2)), solved numerically
        let mut e_x2 = 1.0;
        for _ in 0..200 {
            e_x2 = GARCH2_EPS_VAR * (GARCH2_ALPHA[0] + (GARCH2_ALPHA[1] + GARCH2_ALPHA[2]) * e_x2);
        }
        let g = grid(200, 1.0);
        let panel = simulate_garch2(&g, 500, 17).unwrap();
        let count = 500.0 * 200.0;
        let emp: f64 = panel.data.iter().map(|v| v * v).sum::<f64>() / count;
        // kurtosis-inflated MC error; generous bound
        assert!(
            (emp - e_x2).abs() / e_x2 < 0.1,
            "empirical {emp} vs fixed point {e_x2}"
        );
    }

    #[test]
    fn sine_values_bounded_by_one() {
        let g = grid(24, 1.0);
        let panel = simulate_sine(&g, 50, 3, 5).unwrap();
        assert!(panel.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn ar_lag_one_autocorrelation_matches_phi() {
        let g = grid(400, 1.0);
        let panel = simulate_ar(&g, 50, 23, 5, 0.5, 0.8).unwrap();
        for f in 0..5 {
            let mut num = 0.0;
            let mut den = 0.0;
            // skip a short warm-up so the chain is near stationary
            for m in 0..50 {
                for i in 20..399 {
                    num += panel.data[[m, i, f]] * panel.data[[m, i + 1, f]];
                    den += panel.data[[m, i, f]] * panel.data[[m, i, f]];
                }
            }
            let rho1 = num / den;
            assert!((rho1 - 0.5).abs() < 0.03, "feature {f}: lag-1 acf {rho1}");
        }
    }

    #[test]
    fn ar_rejects_non_psd_covariance() {
        let g = grid(5, 1.0);
        assert!(simulate_ar(&g, 1, 1, 3, 0.5, 1.5).is_err());
    }

    #[test]
    fn ar_starts_at_zero() {
        let g = grid(5, 1.0);
        let panel = simulate_ar(&g, 4, 9, 2, 0.5, 0.8).unwrap();
        for m in 0..4 {
            for f in 0..2 {
                assert_eq!(panel.data[[m, 0, f]], 0.0);
            }
        }
    }

    #[test]
    fn fbm_half_hurst_has_uncorrelated_increments() {
        let g = grid(50, 0.1);
        let panel = simulate_fbm(0.5, &g, 400, 29).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for m in 0..400 {
            for i in 1..48 {
                let d1 = panel.data[[m, i, 0]] - panel.data[[m, i - 1, 0]];
                let d2 = panel.data[[m, i + 1, 0]] - panel.data[[m, i, 0]];
                num += d1 * d2;
                den += d1 * d1;
            }
        }
        let corr = num / den;
        assert!(corr.abs() < 0.02, "lag-1 increment corr {corr}");
    }

    #[test]
    fn fbm_variance_profile_matches_covariance_formula() {
        for hurst in [0.25, 0.5] {
            let g = grid(20, 0.05);
            let panel = simulate_fbm(hurst, &g, 3000, 31).unwrap();
            for idx in [5, 10, 19] {
                let t = g.times()[idx];
                let expected = t.powf(2.0 * hurst);
                let var: f64 = (0..3000)
                    .map(|m| panel.data[[m, idx, 0]].powi(2))
                    .sum::<f64>()
                    / 3000.0;
                // MC standard error of a chi-square mean: var * sqrt(2/M)
                let se = expected * (2.0 / 3000.0f64).sqrt();
                assert!(
                    (var - expected).abs() < 5.0 * se,
                    "H={hurst} t={t}: var {var} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn fbm_rejects_bad_inputs() {
        let g = grid(5, 0.1);
        assert!(simulate_fbm(0.0, &g, 1, 1).is_err());
        let irregular = TimeGrid::new(vec![0.0, 0.1, 0.5], 1).unwrap();
        assert!(simulate_fbm(0.5, &irregular, 1, 1).is_err());
    }

    #[test]
    fn degenerate_interval_samples_constant() {
        let ranges = OuRanges {
            theta: Interval::new(1.5, 1.5).unwrap(),
            mu: Interval::new(1.0, 1.0).unwrap(),
            sigma: Interval::new(0.3, 0.3).unwrap(),
        };
        let params = sample_ou_params(&ranges, 10, 5).unwrap();
        assert!(params.iter().all(|p| p.theta == 1.5 && p.mu == 1.0 && p.sigma == 0.3));
    }

    #[test]
    fn default_ranges_match_reference_settings() {
        let ou = OuRanges::default();
        assert_eq!((ou.theta.lo, ou.theta.hi), (0.5, 2.5));
        assert_eq!((ou.mu.lo, ou.mu.hi), (0.5, 1.5));
        assert_eq!((ou.sigma.lo, ou.sigma.hi), (0.1, 0.5));
        let hs = HestonRanges::default();
        assert_eq!((hs.kappa.lo, hs.kappa.hi), (0.5, 4.0));
        assert_eq!((hs.theta.lo, hs.theta.hi), (0.5, 1.5));
        assert_eq!((hs.xi.lo, hs.xi.hi), (0.01, 0.9));
        assert_eq!((hs.rho.lo, hs.rho.hi), (-0.9, 0.9));
        assert_eq!((hs.r.lo, hs.r.hi), (0.02, 0.1));
    }

    #[test]
    fn uniform_draws_stay_in_range_and_are_deterministic() {
        let ranges = HestonRanges::default();
        let a = sample_heston_params(&ranges, 20, 99).unwrap();
        let b = sample_heston_params(&ranges, 20, 99).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p, q);
            assert!(p.kappa >= 0.5 && p.kappa <= 4.0);
            assert!(p.rho >= -0.9 && p.rho <= 0.9);
        }
    }
}

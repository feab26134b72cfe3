//! Evaluation metrics for generated panels: autocorrelation and
//! cross-correlation agreement, outgoing nearest-neighbour distance, marginal
//! KS distances, and a 1-NN two-sample proxy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::error::{Result, SbtsError};

/// Scores comparing one generated panel against a real one, plus the settings
/// that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub autocorrelation: f64,
    pub cross_correlation: Option<f64>,
    pub onnd: f64,
    pub two_sample_proxy: f64,
    pub max_lag: usize,
    /// Features skipped as constant (zero variance) in either panel.
    pub skipped_features: Vec<usize>,
    /// Sub-run standard deviations from splitting the generated panel into
    /// disjoint halves, where the panel is large enough to split.
    pub autocorrelation_std: Option<f64>,
    pub onnd_std: Option<f64>,
}

fn check_shapes(real: &Panel, gen: &Panel) -> Result<()> {
    if real.num_times() != gen.num_times() || real.num_features() != gen.num_features() {
        return Err(SbtsError::ShapeMismatch(format!(
            "real is {}x{}, generated is {}x{}",
            real.num_times(),
            real.num_features(),
            gen.num_times(),
            gen.num_features()
        )));
    }
    Ok(())
}

/// Per-feature, per-lag autocorrelation averaged over samples.
/// acf[f][lag-1] = mean_m corr(x_{.}, x_{.+lag}) within sample m.
fn panel_acf(panel: &Panel, max_lag: usize) -> Vec<Vec<f64>> {
    let (m, n, d) = (panel.num_samples(), panel.num_times(), panel.num_features());
    (0..d)
        .map(|f| {
            (1..=max_lag)
                .map(|lag| {
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for s in 0..m {
                        let series: Vec<f64> = (0..n).map(|i| panel.data[[s, i, f]]).collect();
                        if let Some(r) = lagged_corr(&series, lag) {
                            acc += r;
                            count += 1;
                        }
                    }
                    if count == 0 {
                        f64::NAN
                    } else {
                        acc / count as f64
                    }
                })
                .collect()
        })
        .collect()
}

fn lagged_corr(series: &[f64], lag: usize) -> Option<f64> {
    let n = series.len();
    if lag >= n {
        return None;
    }
    let a = &series[..n - lag];
    let b = &series[lag..];
    let len = a.len() as f64;
    let ma = a.iter().sum::<f64>() / len;
    let mb = b.iter().sum::<f64>() / len;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma).powi(2);
        vb += (b[i] - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Default number of lags compared: min(N - 1, 10).
pub fn default_max_lag(n: usize) -> usize {
    (n - 1).min(10)
}

/// Mean absolute difference of per-(feature, lag) sample-averaged
/// autocorrelations. Symmetric in its two arguments.
pub fn autocorrelation_score(real: &Panel, gen: &Panel, max_lag: usize) -> Result<f64> {
    check_shapes(real, gen)?;
    if max_lag == 0 || max_lag >= real.num_times() {
        return Err(SbtsError::InvalidConfig(format!(
            "max_lag {max_lag} must be in 1..N"
        )));
    }
    let ar = panel_acf(real, max_lag);
    let ag = panel_acf(gen, max_lag);
    let mut acc = 0.0;
    let mut count = 0usize;
    for f in 0..ar.len() {
        for lag in 0..max_lag {
            let (x, y) = (ar[f][lag], ag[f][lag]);
            if x.is_finite() && y.is_finite() {
                acc += (x - y).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SbtsError::Domain(
            "all features are constant; autocorrelation undefined".into(),
        ));
    }
    Ok(acc / count as f64)
}

/// Pooled contemporaneous feature-correlation matrix over all (sample, time)
/// observations.
fn pooled_correlation(panel: &Panel) -> Result<Vec<Vec<f64>>> {
    let (m, n, d) = (panel.num_samples(), panel.num_times(), panel.num_features());
    let total = (m * n) as f64;
    let mut means = vec![0.0; d];
    for s in 0..m {
        for i in 0..n {
            for f in 0..d {
                means[f] += panel.data[[s, i, f]];
            }
        }
    }
    for mu in &mut means {
        *mu /= total;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in 0..m {
        for i in 0..n {
            for f in 0..d {
                let xf = panel.data[[s, i, f]] - means[f];
                for g in f..d {
                    cov[f][g] += xf * (panel.data[[s, i, g]] - means[g]);
                }
            }
        }
    }
    let mut corr = vec![vec![0.0; d]; d];
    for f in 0..d {
        for g in f..d {
            let denom = (cov[f][f] * cov[g][g]).sqrt();
            let r = if denom > 0.0 { cov[f][g] / denom } else { f64::NAN };
            corr[f][g] = r;
            corr[g][f] = r;
        }
    }
    Ok(corr)
}

/// Mean absolute off-diagonal difference of the two panels' pooled
/// contemporaneous correlation matrices. Requires d >= 2.
pub fn cross_correlation_score(real: &Panel, gen: &Panel) -> Result<f64> {
    check_shapes(real, gen)?;
    let d = real.num_features();
    if d < 2 {
        return Err(SbtsError::InvalidConfig(
            "cross-correlation needs at least two features".into(),
        ));
    }
    let cr = pooled_correlation(real)?;
    let cg = pooled_correlation(gen)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for f in 0..d {
        for g in 0..d {
            if f == g {
                continue;
            }
            if cr[f][g].is_finite() && cg[f][g].is_finite() {
                acc += (cr[f][g] - cg[f][g]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SbtsError::Domain(
            "all off-diagonal correlations undefined (constant features)".into(),
        ));
    }
    Ok(acc / count as f64)
}

fn flatten(panel: &Panel, s: usize) -> Vec<f64> {
    let (n, d) = (panel.num_times(), panel.num_features());
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for f in 0..d {
            out.push(panel.data[[s, i, f]]);
        }
    }
    out
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Outgoing nearest-neighbour distance, directional generated -> real:
/// the mean over generated samples of the distance to the closest real sample
/// in flattened (N x d) space.
pub fn onnd(real: &Panel, gen: &Panel) -> Result<f64> {
    check_shapes(real, gen)?;
    if real.num_samples() == 0 || gen.num_samples() == 0 {
        return Err(SbtsError::InvalidConfig("panels must be non-empty".into()));
    }
    let real_flat: Vec<Vec<f64>> = (0..real.num_samples()).map(|s| flatten(real, s)).collect();
    let total: f64 = (0..gen.num_samples())
        .into_par_iter()
        .map(|s| {
            let g = flatten(gen, s);
            real_flat
                .iter()
                .map(|r| euclidean(&g, r))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / gen.num_samples() as f64)
}

/// Two-sample Kolmogorov-Smirnov statistic on one (time, feature) marginal.
pub fn marginal_ks(real: &Panel, gen: &Panel, t_index: usize, feature: usize) -> Result<f64> {
    check_shapes(real, gen)?;
    if t_index >= real.num_times() || feature >= real.num_features() {
        return Err(SbtsError::InvalidConfig(format!(
            "marginal ({t_index}, {feature}) out of range"
        )));
    }
    let mut a: Vec<f64> = (0..real.num_samples())
        .map(|s| real.data[[s, t_index, feature]])
        .collect();
    let mut b: Vec<f64> = (0..gen.num_samples())
        .map(|s| gen.data[[s, t_index, feature]])
        .collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    Ok(d)
}

/// |acc - 0.5| where acc is leave-one-out 1-nearest-neighbour accuracy on the
/// pooled labeled flattened series. Near 0 for indistinguishable panels, near
/// 0.5 for perfectly separable ones.
pub fn two_sample_proxy(real: &Panel, gen: &Panel) -> Result<f64> {
    check_shapes(real, gen)?;
    if real.num_samples() < 2 || gen.num_samples() < 2 {
        return Err(SbtsError::InvalidConfig(
            "two-sample proxy needs at least two samples per panel".into(),
        ));
    }
    let mut points: Vec<(Vec<f64>, bool)> = Vec::new();
    for s in 0..real.num_samples() {
        points.push((flatten(real, s), true));
    }
    for s in 0..gen.num_samples() {
        points.push((flatten(gen, s), false));
    }
    let correct: usize = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            let mut best_label = points[i].1;
            for (j, (p, label)) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let dist = euclidean(&points[i].0, p);
                // ties resolved by first index for determinism
                if dist < best {
                    best = dist;
                    best_label = *label;
                }
            }
            usize::from(best_label == points[i].1)
        })
        .sum();
    let acc = correct as f64 / points.len() as f64;
    Ok((acc - 0.5).abs())
}

fn split_halves(panel: &Panel) -> Option<(Panel, Panel)> {
    let m = panel.num_samples();
    if m < 4 {
        return None;
    }
    let half = m / 2;
    let a = panel.data.slice(ndarray::s![..half, .., ..]).to_owned();
    let b = panel.data.slice(ndarray::s![half..2 * half, .., ..]).to_owned();
    Some((
        Panel::new(a, panel.grid.clone()).ok()?,
        Panel::new(b, panel.grid.clone()).ok()?,
    ))
}

/// All scores in one pass, with half-split dispersion estimates where the
/// generated panel is large enough.
pub fn evaluate(real: &Panel, gen: &Panel, max_lag: usize) -> Result<MetricReport> {
    check_shapes(real, gen)?;
    let d = real.num_features();
    let mut skipped = Vec::new();
    for f in 0..d {
        let constant = |p: &Panel| {
            let first = p.data[[0, 0, f]];
            p.data
                .index_axis(ndarray::Axis(2), f)
                .iter()
                .all(|v| *v == first)
        };
        if constant(real) || constant(gen) {
            skipped.push(f);
        }
    }
    let autocorrelation = autocorrelation_score(real, gen, max_lag)?;
    let cross_correlation = if d >= 2 {
        Some(cross_correlation_score(real, gen)?)
    } else {
        None
    };
    let onnd_score = onnd(real, gen)?;
    let proxy = two_sample_proxy(real, gen)?;

    let (autocorrelation_std, onnd_std) = match split_halves(gen) {
        Some((a, b)) => {
            let s1 = autocorrelation_score(real, &a, max_lag)?;
            let s2 = autocorrelation_score(real, &b, max_lag)?;
            let o1 = onnd(real, &a)?;
            let o2 = onnd(real, &b)?;
            let std2 = |x: f64, y: f64| {
                let mu = 0.5 * (x + y);
                ((x - mu).powi(2) + (y - mu).powi(2)).sqrt()
            };
            (Some(std2(s1, s2)), Some(std2(o1, o2)))
        }
        None => (None, None),
    };

    Ok(MetricReport {
        autocorrelation,
        cross_correlation,
        onnd: onnd_score,
        two_sample_proxy: proxy,
        max_lag,
        skipped_features: skipped,
        autocorrelation_std,
        onnd_std,
    })
}

/// Per-lag comparison CSV: `feature,lag,real_acf,generated_acf`.
pub fn write_acf_csv<W: std::io::Write>(
    real: &Panel,
    gen: &Panel,
    max_lag: usize,
    w: W,
) -> Result<()> {
    check_shapes(real, gen)?;
    let ar = panel_acf(real, max_lag);
    let ag = panel_acf(gen, max_lag);
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["feature", "lag", "real_acf", "generated_acf"])?;
    for f in 0..ar.len() {
        for lag in 0..max_lag {
            writer.write_record([
                format!("{f}"),
                format!("{}", lag + 1),
                format!("{}", ar[f][lag]),
                format!("{}", ag[f][lag]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeGrid;
    use crate::simulators::{simulate_ar, simulate_sine};
    use approx::assert_relative_eq;
    use ndarray::Array3;

    fn ar_panel(m: usize, n: usize, d: usize, seed: u64) -> Panel {
        let grid = TimeGrid::uniform(0.0, 1.0, n, 1).unwrap();
        simulate_ar(&grid, m, seed, d, 0.5, 0.8).unwrap()
    }

    fn white_noise_panel(m: usize, n: usize, d: usize, seed: u64) -> Panel {
        // phi = 0 AR is iid noise
        let grid = TimeGrid::uniform(0.0, 1.0, n, 1).unwrap();
        simulate_ar(&grid, m, seed, d, 0.0, 0.0).unwrap()
    }

    #[test]
    fn identical_panels_score_zero_everywhere() {
        let p = ar_panel(50, 30, 3, 1);
        assert_eq!(autocorrelation_score(&p, &p, 5).unwrap(), 0.0);
        assert_eq!(cross_correlation_score(&p, &p).unwrap(), 0.0);
        assert_eq!(onnd(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn independent_draws_of_same_law_score_near_zero() {
        // resampling oracle: three independent pairs bound the Monte-Carlo
        // scale; the tested pair must sit within 3x of it
        let score =
            |a: u64, b: u64| autocorrelation_score(&ar_panel(400, 40, 2, a), &ar_panel(400, 40, 2, b), 5).unwrap();
        let probe = score(1, 2);
        let scale = (score(3, 4) + score(5, 6) + score(7, 8)) / 3.0;
        assert!(probe < 3.0 * scale + 1e-9, "probe {probe}, scale {scale}");
        assert!(probe < 0.05, "probe {probe}");
    }

    #[test]
    fn ar_versus_white_noise_matches_closed_form() {
        // AR(1) phi=0.5 acf at lag l is 0.5^l; white noise acf ~ 0, so the
        // score approaches mean_l 0.5^l over the compared lags
        let max_lag = 5;
        let real = ar_panel(600, 200, 1, 21);
        let noise = white_noise_panel(600, 200, 1, 22);
        let score = autocorrelation_score(&real, &noise, max_lag).unwrap();
        let expected: f64 =
            (1..=max_lag).map(|l| 0.5f64.powi(l as i32)).sum::<f64>() / max_lag as f64;
        assert!(
            (score - expected).abs() < 0.05,
            "score {score}, closed form {expected}"
        );
    }

    #[test]
    fn cross_correlation_matches_equicorrelated_oracle() {
        // Z-covariance 0.8*ones + 0.2*I propagates through the AR recursion
        // unchanged: stationary feature correlation stays 0.8
        let a = ar_panel(500, 60, 3, 31);
        let b = ar_panel(500, 60, 3, 32);
        let near_zero = cross_correlation_score(&a, &b).unwrap();
        assert!(near_zero < 0.05, "independent same-law score {near_zero}");

        let grid = TimeGrid::uniform(0.0, 1.0, 60, 1).unwrap();
        let independent = simulate_ar(&grid, 500, 33, 3, 0.5, 0.0).unwrap();
        let apart = cross_correlation_score(&a, &independent).unwrap();
        assert!((apart - 0.8).abs() < 0.08, "score {apart} vs oracle 0.8");
    }

    #[test]
    fn onnd_translation_is_exact() {
        let p = ar_panel(20, 15, 2, 5);
        let c = 0.37;
        let shifted = Panel::new(p.data.clone() + c, p.grid.clone()).unwrap();
        let got = onnd(&p, &shifted).unwrap();
        let expected = c * ((15 * 2) as f64).sqrt();
        assert_relative_eq!(got, expected, max_relative = 1e-10);
    }

    #[test]
    fn onnd_is_stable_across_seeds() {
        let scores: Vec<f64> = (0..4)
            .map(|s| onnd(&ar_panel(150, 20, 1, 100 + s), &ar_panel(150, 20, 1, 200 + s)).unwrap())
            .collect();
        let mean = scores.iter().sum::<f64>() / 4.0;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 3.0;
        let se = (var / 4.0).sqrt();
        for s in &scores {
            assert!(*s > 0.0);
            assert!((s - mean).abs() <= 3.0 * (se * 4.0f64.sqrt()) + 1e-9);
        }
    }

    #[test]
    fn sample_permutation_leaves_scores_unchanged() {
        let p = ar_panel(30, 20, 2, 9);
        let q = ar_panel(30, 20, 2, 10);
        let mut permuted = q.data.clone();
        for s in 0..30 {
            let dst = (s * 7) % 30;
            for i in 0..20 {
                for f in 0..2 {
                    permuted[[dst, i, f]] = q.data[[s, i, f]];
                }
            }
        }
        let q2 = Panel::new(permuted, q.grid.clone()).unwrap();
        // equal up to summation-order roundoff
        assert_relative_eq!(
            autocorrelation_score(&p, &q, 5).unwrap(),
            autocorrelation_score(&p, &q2, 5).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            onnd(&p, &q).unwrap(),
            onnd(&p, &q2).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            cross_correlation_score(&p, &q).unwrap(),
            cross_correlation_score(&p, &q2).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn correlation_scores_ignore_common_affine_rescaling() {
        let p = ar_panel(40, 25, 2, 11);
        let q = ar_panel(40, 25, 2, 12);
        let rescale = |panel: &Panel| {
            let mut data = panel.data.clone();
            for s in 0..40 {
                for i in 0..25 {
                    data[[s, i, 0]] = 3.0 * data[[s, i, 0]] - 1.0;
                    data[[s, i, 1]] = 0.5 * data[[s, i, 1]] + 7.0;
                }
            }
            Panel::new(data, panel.grid.clone()).unwrap()
        };
        let (p2, q2) = (rescale(&p), rescale(&q));
        assert_relative_eq!(
            autocorrelation_score(&p, &q, 5).unwrap(),
            autocorrelation_score(&p2, &q2, 5).unwrap(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            cross_correlation_score(&p, &q).unwrap(),
            cross_correlation_score(&p2, &q2).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn ks_zero_on_duplicated_samples() {
        let p = ar_panel(25, 10, 1, 3);
        assert_eq!(marginal_ks(&p, &p, 4, 0).unwrap(), 0.0);
    }

    #[test]
    fn ks_detects_disjoint_supports() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4, 1).unwrap();
        let a = Panel::new(Array3::from_shape_fn((10, 4, 1), |(s, i, _)| (s + i) as f64 * 0.01), grid.clone()).unwrap();
        let b = Panel::new(Array3::from_shape_fn((10, 4, 1), |(s, i, _)| 100.0 + (s + i) as f64), grid).unwrap();
        assert_relative_eq!(marginal_ks(&a, &b, 2, 0).unwrap(), 1.0);
    }

    #[test]
    fn proxy_is_small_for_split_halves_and_half_for_separable() {
        let grid = TimeGrid::uniform(0.0, 1.0, 12, 1).unwrap();
        let pool = simulate_ar(&grid, 600, 44, 1, 0.5, 0.0).unwrap();
        let a = Panel::new(pool.data.slice(ndarray::s![..300, .., ..]).to_owned(), grid.clone()).unwrap();
        let b = Panel::new(pool.data.slice(ndarray::s![300.., .., ..]).to_owned(), grid.clone()).unwrap();
        let close = two_sample_proxy(&a, &b).unwrap();
        assert!(close <= 0.1, "split-halves proxy {close}");

        let shifted = Panel::new(b.data.clone() + 50.0, grid).unwrap();
        let far = two_sample_proxy(&a, &shifted).unwrap();
        assert_relative_eq!(far, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn report_is_finite_and_flags_constant_features() {
        let grid = TimeGrid::uniform(0.0, 0.1, 16, 1).unwrap();
        let real = simulate_sine(&grid, 40, 1, 2).unwrap();
        let gen = simulate_sine(&grid, 40, 2, 2).unwrap();
        let report = evaluate(&real, &gen, default_max_lag(16)).unwrap();
        assert!(report.autocorrelation.is_finite() && report.autocorrelation >= 0.0);
        assert!(report.onnd > 0.0);
        assert!(report.two_sample_proxy <= 0.5);
        assert!(report.skipped_features.is_empty());
        assert!(report.autocorrelation_std.is_some());
    }
}

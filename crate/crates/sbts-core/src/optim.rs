//! Derivative-free minimization: Nelder-Mead on an unconstrained vector, with
//! box/positivity constraints handled by smooth parameter transforms.

/// Bijection between a constrained parameter and the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamTransform {
    /// Unbounded parameter, identity map.
    Identity,
    /// Positive parameter via log/exp.
    LogPositive,
    /// Open interval (lo, hi) via a scaled tanh.
    Bounded { lo: f64, hi: f64 },
}

impl ParamTransform {
    /// Constrained -> unconstrained.
    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match self {
            ParamTransform::Identity => x,
            ParamTransform::LogPositive => x.ln(),
            ParamTransform::Bounded { lo, hi } => {
                let u = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                (u / (1.0 - u)).ln()
            }
        }
    }

    /// Unconstrained -> constrained.
    pub fn to_constrained(&self, y: f64) -> f64 {
        match self {
            ParamTransform::Identity => y,
            ParamTransform::LogPositive => y.exp(),
            ParamTransform::Bounded { lo, hi } => {
                // clamp keeps the image strictly inside (lo, hi) even when the
                // sigmoid saturates in f64
                let u = (1.0 / (1.0 + (-y).exp())).clamp(1e-12, 1.0 - 1e-12);
                lo + (hi - lo) * u
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub struct NelderMead {
    pub max_iterations: usize,
    pub simplex_tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            simplex_tolerance: 1e-8,
            initial_step: 0.25,
        }
    }
}

impl NelderMead {
    /// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
    /// shrink 0.5). Stops when the simplex diameter falls below tolerance.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> OptimResult {
        let n = x0.len();
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if v[i].abs() > 1e-8 {
                self.initial_step * v[i].abs()
            } else {
                self.initial_step
            };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iterations {
            iterations += 1;
            // order best..worst
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
            let reordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
            let revalues: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            simplex = reordered;
            values = revalues;

            let diameter = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if diameter < self.simplex_tolerance {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let reflect: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + (c - w))
                .collect();
            let fr = f(&reflect);

            if fr < values[0] {
                let expand: Vec<f64> = centroid
                    .iter()
                    .zip(&worst)
                    .map(|(c, w)| c + 2.0 * (c - w))
                    .collect();
                let fe = f(&expand);
                if fe < fr {
                    simplex[n] = expand;
                    values[n] = fe;
                } else {
                    simplex[n] = reflect;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = reflect;
                values[n] = fr;
            } else {
                let contract_base = if fr < values[n] { &reflect } else { &worst };
                let fc_base = if fr < values[n] { fr } else { values[n] };
                let contract: Vec<f64> = centroid
                    .iter()
                    .zip(contract_base)
                    .map(|(c, w)| c + 0.5 * (w - c))
                    .collect();
                let fc = f(&contract);
                if fc < fc_base {
                    simplex[n] = contract;
                    values[n] = fc;
                } else {
                    // shrink toward the best vertex
                    for i in 1..=n {
                        let best = simplex[0].clone();
                        for (vj, bj) in simplex[i].iter_mut().zip(&best) {
                            *vj = bj + 0.5 * (*vj - bj);
                        }
                        values[i] = f(&simplex[i]);
                    }
                }
            }
        }

        let mut best = 0;
        for i in 1..=n {
            if values[i] < values[best] {
                best = i;
            }
        }
        OptimResult {
            x: simplex[best].clone(),
            value: values[best],
            iterations,
            converged,
        }
    }
}

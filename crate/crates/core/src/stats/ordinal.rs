//! Maximum-likelihood proportional odds (cumulative logit) regression with a
//! single predictor.
//!
//! The model for outcomes Y in {1,2,3,4} is
//! P(Y <= k | x) = sigmoid(theta_k - beta*x) with strictly increasing
//! cutpoints theta_1 < theta_2 < theta_3. The predictor is standardized to
//! mean 0, sd 1 before fitting, so beta is comparable across norms.
//! Maximization is a quasi-second-order ascent: Newton steps using a
//! finite-difference Hessian of the analytic gradient, with backtracking,
//! starting from the empirical cumulative logits and beta = 0. The 95%
//! interval is Wald, beta +/- 1.96*se, with se from the observed
//! information.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ScoreVector, StatsError};

const MAX_ITERATIONS: usize = 100;
/// Convergence is declared when the gradient inf-norm drops below this per
/// observation; the log-likelihood scales with n, so the tolerance must too.
const GRAD_TOLERANCE_PER_OBS: f64 = 1e-6;
/// |beta| beyond this on a standardized predictor means the likelihood is
/// drifting to infinity: complete separation.
const SEPARATION_BOUND: f64 = 30.0;
const MIN_PROB: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalFit {
    /// Slope on the standardized predictor.
    pub beta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub thresholds: [f64; 3],
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n: usize,
}

impl OrdinalFit {
    /// The paper's reading of an interval: significant iff it excludes 0.
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// The likelihood surface for a fixed dataset. Public so the analytic
/// gradient can be checked against finite differences from the outside.
#[derive(Debug, Clone)]
pub struct OrdinalModel {
    x: Vec<f64>,
    y: Vec<u8>,
}

impl OrdinalModel {
    pub fn new(x: Vec<f64>, y: Vec<u8>) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch(x.len(), y.len()));
        }
        if x.is_empty() {
            return Err(StatsError::EmptyScores);
        }
        for &v in &y {
            if !(1..=4).contains(&v) {
                return Err(StatsError::OutOfRange {
                    id: "<outcome>".into(),
                    value: v,
                });
            }
        }
        Ok(OrdinalModel { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Category probabilities at a single predictor value. Positive and
    /// summing to 1 whenever the thresholds are strictly increasing.
    pub fn category_probs(params: &[f64; 4], x: f64) -> [f64; 4] {
        let [t1, t2, t3, beta] = *params;
        let g1 = sigmoid(t1 - beta * x);
        let g2 = sigmoid(t2 - beta * x);
        let g3 = sigmoid(t3 - beta * x);
        [g1, g2 - g1, g3 - g2, 1.0 - g3]
    }

    /// Log-likelihood; negative infinity outside the ordered-threshold
    /// region so line searches reject invalid steps.
    pub fn log_likelihood(&self, params: &[f64; 4]) -> f64 {
        let [t1, t2, t3, beta] = *params;
        if !(t1 < t2 && t2 < t3) || params.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut ll = 0.0;
        for (&x, &y) in self.x.iter().zip(&self.y) {
            let g1 = sigmoid(t1 - beta * x);
            let g2 = sigmoid(t2 - beta * x);
            let g3 = sigmoid(t3 - beta * x);
            let p = match y {
                1 => g1,
                2 => g2 - g1,
                3 => g3 - g2,
                _ => 1.0 - g3,
            };
            ll += p.max(MIN_PROB).ln();
        }
        ll
    }

    /// Analytic gradient of the log-likelihood in [t1, t2, t3, beta].
    pub fn gradient(&self, params: &[f64; 4]) -> [f64; 4] {
        let [t1, t2, t3, beta] = *params;
        let mut grad = [0.0f64; 4];
        for (&x, &y) in self.x.iter().zip(&self.y) {
            let g1 = sigmoid(t1 - beta * x);
            let g2 = sigmoid(t2 - beta * x);
            let g3 = sigmoid(t3 - beta * x);
            let d1 = g1 * (1.0 - g1);
            let d2 = g2 * (1.0 - g2);
            let d3 = g3 * (1.0 - g3);
            match y {
                1 => {
                    let p = g1.max(MIN_PROB);
                    grad[0] += d1 / p;
                    grad[3] += -x * d1 / p;
                }
                2 => {
                    let p = (g2 - g1).max(MIN_PROB);
                    grad[1] += d2 / p;
                    grad[0] -= d1 / p;
                    grad[3] += -x * (d2 - d1) / p;
                }
                3 => {
                    let p = (g3 - g2).max(MIN_PROB);
                    grad[2] += d3 / p;
                    grad[1] -= d2 / p;
                    grad[3] += -x * (d3 - d2) / p;
                }
                _ => {
                    let p = (1.0 - g3).max(MIN_PROB);
                    grad[2] -= d3 / p;
                    grad[3] += x * d3 / p;
                }
            }
        }
        grad
    }

    /// Hessian as central finite differences of the analytic gradient,
    /// symmetrized. Accurate enough for Newton steps and the observed
    /// information at the optimum.
    #[allow(clippy::needless_range_loop)]
    fn hessian(&self, params: &[f64; 4]) -> [[f64; 4]; 4] {
        let mut h = [[0.0f64; 4]; 4];
        for j in 0..4 {
            let step = 1e-5 * params[j].abs().max(1.0);
            let mut hi = *params;
            let mut lo = *params;
            hi[j] += step;
            lo[j] -= step;
            let ghi = self.gradient(&hi);
            let glo = self.gradient(&lo);
            for i in 0..4 {
                h[i][j] = (ghi[i] - glo[i]) / (2.0 * step);
            }
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let avg = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = avg;
                h[j][i] = avg;
            }
        }
        h
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Standardize to mean 0, sample sd 1. A constant vector maps to all zeros
/// rather than dividing by zero; the slope then carries no information and
/// stays at its initial value of 0.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Fit the proportional odds model of appropriateness on a per-item
/// predictor (typically the familiarity norm).
pub fn fit_ordinal(
    scores: &ScoreVector,
    predictor: &BTreeMap<String, f64>,
) -> Result<OrdinalFit, StatsError> {
    let mut raw_x = Vec::with_capacity(scores.pairs.len());
    let mut y = Vec::with_capacity(scores.pairs.len());
    for (id, value) in &scores.pairs {
        let x = predictor
            .get(id)
            .ok_or_else(|| StatsError::MissingPredictor(id.clone()))?;
        raw_x.push(*x);
        y.push(*value);
    }
    if y.is_empty() {
        return Err(StatsError::EmptyScores);
    }
    let distinct = {
        let mut seen = [false; 4];
        for &v in &y {
            seen[v as usize - 1] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(StatsError::TooFewCategories(distinct));
    }
    let model = OrdinalModel::new(standardize(&raw_x), y)?;
    Ok(maximize(&model))
}

fn maximize(model: &OrdinalModel) -> OrdinalFit {
    let n = model.n();
    let mut params = initial_params(&model.y);
    let mut ll = model.log_likelihood(&params);
    let mut converged = false;
    let mut iterations = 0;

    let tolerance = GRAD_TOLERANCE_PER_OBS * n as f64;
    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let grad = model.gradient(&params);
        let grad_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_norm < tolerance {
            converged = true;
            iterations = iter;
            break;
        }
        if params[3].abs() > SEPARATION_BOUND {
            break; // complete separation: likelihood unbounded in beta
        }
        let hessian = model.hessian(&params);
        // Newton direction: solve H * delta = -grad. Fall back to steepest
        // ascent when the solve fails or the direction is not an ascent.
        let delta = match solve4(&hessian, &[-grad[0], -grad[1], -grad[2], -grad[3]]) {
            Some(d) if dot(&d, &grad) > 0.0 => d,
            _ => {
                let scale = 1.0 / grad_norm.max(1.0);
                [
                    grad[0] * scale,
                    grad[1] * scale,
                    grad[2] * scale,
                    grad[3] * scale,
                ]
            }
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = [
                params[0] + lambda * delta[0],
                params[1] + lambda * delta[1],
                params[2] + lambda * delta[2],
                params[3] + lambda * delta[3],
            ];
            let cand_ll = model.log_likelihood(&candidate);
            if cand_ll > ll {
                params = candidate;
                ll = cand_ll;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break; // stalled before the gradient tolerance: not converged
        }
    }

    let se = observed_information_se(model, &params);
    let beta = params[3];
    let half_width = 1.96 * se;
    OrdinalFit {
        beta,
        se,
        ci_low: beta - half_width,
        ci_high: beta + half_width,
        thresholds: [params[0], params[1], params[2]],
        log_likelihood: ll,
        converged: converged && beta.abs() <= SEPARATION_BOUND,
        iterations,
        n,
    }
}

/// Cutpoints start at the empirical cumulative logits (clamped away from 0
/// and 1 so empty categories stay finite), beta at 0.
fn initial_params(y: &[u8]) -> [f64; 4] {
    let n = y.len() as f64;
    let mut counts = [0usize; 4];
    for &v in y {
        counts[v as usize - 1] += 1;
    }
    let mut running = 0usize;
    let mut params = [0.0f64; 4];
    for k in 0..3 {
        running += counts[k];
        let clamped = (running as f64 / n).clamp(0.5 / n, 1.0 - 0.5 / n);
        params[k] = (clamped / (1.0 - clamped)).ln();
    }
    // enforce strict ordering when adjacent categories are empty
    for k in 1..3 {
        if params[k] <= params[k - 1] {
            params[k] = params[k - 1] + 1e-6;
        }
    }
    params[3] = 0.0;
    params
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard error of beta from the observed information: sqrt of the (beta,
/// beta) entry of (-H)^{-1} at the optimum.
fn observed_information_se(model: &OrdinalModel, params: &[f64; 4]) -> f64 {
    let h = model.hessian(params);
    let mut info = [[0.0f64; 4]; 4];
    for (row, h_row) in info.iter_mut().zip(&h) {
        for (cell, v) in row.iter_mut().zip(h_row) {
            *cell = -v;
        }
    }
    match solve4(&info, &[0.0, 0.0, 0.0, 1.0]) {
        Some(col) if col[3] > 0.0 => col[3].sqrt(),
        _ => f64::NAN,
    }
}

/// Solve a 4x4 linear system by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let (pivot_row, pivot_val) = (col..4)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot_val < 1e-12 || !pivot_val.is_finite() {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in (col + 1)..4 {
            let factor = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = [0.0f64; 4];
    for row in (0..4).rev() {
        let mut acc = rhs[row];
        for c in (row + 1)..4 {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

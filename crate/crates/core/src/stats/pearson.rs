//! Pearson correlation with a two-sided t-test for significance.

use serde::{Deserialize, Serialize};

use super::{ScoreVector, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Sample Pearson correlation over paired observations. The p-value is
/// two-sided, from the t statistic r*sqrt((n-2)/(1-r^2)) on n-2 degrees of
/// freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut sum_xy = 0.0;
    let mut sum_xx = 0.0;
    let mut sum_yy = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        sum_xy += dx * dy;
        sum_xx += dx * dx;
        sum_yy += dy * dy;
    }
    if sum_xx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if sum_yy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let r = (sum_xy / (sum_xx.sqrt() * sum_yy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - r * r <= f64::EPSILON {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        students_t_two_sided_p(t, df)
    };
    Ok(PearsonResult { r, p, n })
}

/// Correlate two runs with pairwise deletion: an item contributes only when
/// it is valid in both.
pub fn correlate_runs(a: &ScoreVector, b: &ScoreVector) -> Result<PearsonResult, StatsError> {
    let bx = b.by_item();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (id, va) in &a.pairs {
        if let Some(&vb) = bx.get(id.as_str()) {
            xs.push(*va as f64);
            ys.push(vb as f64);
        }
    }
    pearson(&xs, &ys)
}

/// Two-sided p-value for a Student's t statistic via the regularized
/// incomplete beta function: p = I_{df/(df+t^2)}(df/2, 1/2).
pub fn students_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    regularized_inc_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
/// (Lentz's method, as in Numerical Recipes' betacf).
fn regularized_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-13 over the domain
/// used here. Coefficients kept at published precision.
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_correlates_perfectly() {
        let x = [1.0, 2.0, 3.0, 4.0, 2.0];
        let result = pearson(&x, &x).unwrap();
        assert!((result.r - 1.0).abs() < 1e-12);
        assert!(result.p < 1e-12);
    }

    #[test]
    fn reversal_correlates_negatively() {
        let result = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((result.r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_transforms_are_exact() {
        let x = [1.0, 2.0, 3.0, 4.0, 2.5, 0.5];
        let pos: Vec<f64> = x.iter().map(|v| 2.5 * v + 1.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -0.7 * v + 3.0).collect();
        assert!((pearson(&x, &pos).unwrap().r - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-12);
    }

    // Independent direct evaluation of sum((x-mx)(y-my)) / (sx*sy*(n-1))
    // using sample standard deviations.
    fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        cov / (sx * sy * (n - 1.0))
    }

    #[test]
    fn matches_direct_formula() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0];
        let result = pearson(&x, &y).unwrap();
        assert!((result.r - pearson_direct(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, StatsError::ZeroVariance("x")));
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pairwise_deletion_uses_shared_items_only() {
        let a = ScoreVector::new(
            "a",
            vec![
                ("x".into(), 1),
                ("y".into(), 2),
                ("z".into(), 3),
                ("w".into(), 4),
            ],
            0,
        )
        .unwrap();
        let b = ScoreVector::new(
            "b",
            vec![
                ("x".into(), 1),
                ("y".into(), 2),
                ("z".into(), 3),
                ("q".into(), 4),
            ],
            1,
        )
        .unwrap();
        let result = correlate_runs(&a, &b).unwrap();
        assert_eq!(result.n, 3);
        assert!((result.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t_p_value_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        for &(t, df) in &[
            (0.5, 3.0),
            (1.0, 10.0),
            (2.0, 10.0),
            (2.5, 28.0),
            (3.2, 148.0),
            (0.0, 5.0),
        ] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            let expected = 2.0 * (1.0 - dist.cdf(t));
            let actual = students_t_two_sided_p(t, df);
            assert!(
                (actual - expected).abs() < 1e-10,
                "t={t} df={df}: {actual} vs {expected}"
            );
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        // Gamma(5) = 24, Gamma(0.5) = sqrt(pi)
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}

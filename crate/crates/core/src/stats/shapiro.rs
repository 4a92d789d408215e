//! Shapiro-Wilk W with Royston's (1995, AS R94) coefficient approximation
//! and normalizing transforms for the p-value.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

use super::{Result, StatError};

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

pub const SHAPIRO_MAX_N: usize = 5000;

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Coefficients `a_1 ≥ … ≥ a_{n/2} > 0` of the lower half; the upper half is
/// their mirror with opposite sign.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let std_normal = Normal::standard();
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first_free, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0].powi(2) - 2.0 * m[1].powi(2))
            / (1.0 - 2.0 * a1.powi(2) - 2.0 * a2.powi(2)))
        .sqrt();
        (2, fac)
    } else {
        (
            1,
            ((summ2 - 2.0 * m[0].powi(2)) / (1.0 - 2.0 * a1.powi(2))).sqrt(),
        )
    };
    for i in first_free..half {
        a[i] = -m[i] / fac;
    }
    a
}

fn p_value(w: f64, n: usize) -> f64 {
    if n == 3 {
        // exact: 6/π · (asin √W − asin √¾)
        return (6.0 / PI * (w.sqrt().asin() - PI / 3.0)).clamp(0.0, 1.0);
    }
    let an = n as f64;
    let mut w1 = (1.0 - w).ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if w1 >= gamma {
            return 1e-99;
        }
        w1 = -(gamma - w1).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    (1.0 - Normal::standard().cdf((w1 - m) / s)).clamp(0.0, 1.0)
}

/// `(W, p)` for a sample of 3 to 5000 values that are not all equal.
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if !(3..=SHAPIRO_MAX_N).contains(&n) {
        return Err(StatError::Test(format!(
            "Shapiro-Wilk needs 3 to {SHAPIRO_MAX_N} values, got {n}"
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatError::Test(
            "Shapiro-Wilk sample holds a non-finite value".into(),
        ));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range <= f64::EPSILON * x[n - 1].abs().max(1.0) {
        return Err(StatError::Test(
            "Shapiro-Wilk sample has zero variance".into(),
        ));
    }
    // scale by the range so that W is exactly location/scale invariant
    let x: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssq: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let a = coefficients(n);
    let num: f64 = a
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]))
        .sum();
    let w = (num * num / ssq).min(1.0);
    Ok((w, p_value(w, n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_equally_spaced_points_are_perfectly_normal() {
        let (w, p) = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coefficients_are_unit_norm() {
        for n in [4, 5, 6, 11, 12, 55, 500] {
            let a = coefficients(n);
            let norm2 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((norm2 - 1.0).abs() < 1e-9, "n = {n}: {norm2}");
        }
    }

    #[test]
    fn degenerate_samples_are_errors() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[4.0; 10]).is_err());
    }
}

//! Small statistics routines: Pearson correlation and Welch's t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Pearson's r. `None` when the slices differ in length, have fewer than
/// two points, or either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum Degenerate {
    #[error("sample {0} has fewer than two values")]
    TooFewValues(char),
    #[error("sample {0} has zero variance")]
    ZeroVariance(char),
}

/// Welch's unequal-variance two-sample t-test with Welch–Satterthwaite
/// degrees of freedom and a two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest, Degenerate> {
    let var_a = sample_variance(a).ok_or(Degenerate::TooFewValues('a'))?;
    let var_b = sample_variance(b).ok_or(Degenerate::TooFewValues('b'))?;
    if var_a == 0.0 {
        return Err(Degenerate::ZeroVariance('a'));
    }
    if var_b == 0.0 {
        return Err(Degenerate::ZeroVariance('b'));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = var_a / na;
    let sb = var_b / nb;
    let diff = mean(a).unwrap_or(0.0) - mean(b).unwrap_or(0.0);
    let t = diff / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa.powi(2) / (na - 1.0) + sb.powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest {
        t,
        degrees_of_freedom: df,
        p_two_sided: p,
    })
}

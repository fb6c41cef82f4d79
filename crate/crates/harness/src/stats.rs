//! Sample summaries with Student-t confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Half-width of the 95% confidence interval; `None` below two samples.
    pub half_width: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// Two-sided 95% Student-t quantile for `df` degrees of freedom.
pub fn t_quantile_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let k = values.len();
    if k == 0 {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can push the mean of equal values a hair outside them.
    let mean = (values.iter().sum::<f64>() / k as f64).clamp(min, max);
    let half_width = (k >= 2).then(|| {
        if min == max {
            return 0.0;
        }
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        t_quantile_95(k - 1) * (var / k as f64).sqrt()
    });
    Some(Summary {
        count: k,
        mean,
        half_width,
        min,
        max,
    })
}

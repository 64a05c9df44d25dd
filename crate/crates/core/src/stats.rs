//! Small descriptive-statistics helpers shared across modules.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (divisor n - 1).
pub fn variance(x: &[f64]) -> f64 {
    covariance(x, x)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Sample covariance (divisor n - 1). NaN for fewer than two points.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Whether every value equals the first (rounding in the mean can make the
/// sample variance of such a series tiny but nonzero).
pub fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation, `None` when either side has zero variance.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let (vx, vy) = (variance(x), variance(y));
    if is_constant(x) || is_constant(y) || !(vx > 0.0 && vy > 0.0) {
        return None;
    }
    Some((covariance(x, y) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Linear-interpolation quantile of unsorted data, `q` in [0, 1].
pub fn quantile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// OLS slope of `y` on `0, 1, ..., n-1`.
pub fn trend_slope(y: &[f64]) -> f64 {
    let t: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    covariance(&t, y) / variance(&t)
}

/// Mean, its standard error and t-statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTest {
    pub mean: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample t-test of a zero mean.
pub fn mean_test(x: &[f64]) -> Result<MeanTest> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(
            "a mean test needs at least two observations",
        ));
    }
    let m = mean(x);
    let se = if is_constant(x) {
        0.0
    } else {
        std_dev(x) / (n as f64).sqrt()
    };
    let t = if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    Ok(MeanTest {
        mean: m,
        std_error: se,
        t_stat: t,
        p_value: two_sided_t_p(t, (n - 1) as f64),
        n,
    })
}

pub(crate) fn two_sided_t_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

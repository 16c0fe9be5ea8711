use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::MetricsError;

/// Two-sample test used for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTest {
    #[default]
    Welch,
    MannWhitney,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Welch-Satterthwaite degrees of freedom; absent for rank tests.
    pub df: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub p_value: f64,
    pub improvement_percent: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn check(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    let n = a.len().min(b.len());
    if n < 2 {
        return Err(MetricsError::InsufficientSamples { needed: 2, got: n });
    }
    Ok(())
}

/// Two-sided Welch's unequal-variance t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestOutcome, MetricsError> {
    check(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let va = sample_variance(a, ma) / a.len() as f64;
    let vb = sample_variance(b, mb) / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok(TestOutcome {
            statistic: if ma == mb {
                0.0
            } else {
                f64::INFINITY.copysign(ma - mb)
            },
            p_value: p,
            df: None,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    if t == 0.0 {
        return Ok(TestOutcome {
            statistic: 0.0,
            p_value: 1.0,
            df: Some(df),
        });
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TestOutcome {
        statistic: t,
        p_value: p,
        df: Some(df),
    })
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            out[k] = rank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (out, tie_term)
}

/// Two-sided Mann-Whitney U test, normal approximation with tie and
/// continuity correction. The reported statistic is U for sample `a`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestOutcome, MetricsError> {
    check(a, b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (r, tie_term) = ranks(&pooled);
    let r1: f64 = r[..a.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let u2 = n1 * n2 - u1;
    let u = u1.max(u2);
    let n = n1 + n2;
    let mu = n1 * n2 / 2.0;
    let sigma = (n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).sqrt();
    if sigma == 0.0 {
        return Ok(TestOutcome {
            statistic: u1,
            p_value: 1.0,
            df: None,
        });
    }
    let z = (u - mu - 0.5) / sigma;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * normal.sf(z)).clamp(0.0, 1.0);
    Ok(TestOutcome {
        statistic: u1,
        p_value: p,
        df: None,
    })
}

/// Percent change from `mean_a` to `mean_b`; with a zero baseline the
/// absolute difference on the unit scale is reported instead.
pub fn improvement_percent(mean_a: f64, mean_b: f64) -> f64 {
    if mean_a > 0.0 {
        (mean_b - mean_a) / mean_a * 100.0
    } else {
        (mean_b - mean_a) * 100.0
    }
}

/// Significance and improvement of `b` over `a`.
pub fn compare_configs(a: &[f64], b: &[f64]) -> Result<Comparison, MetricsError> {
    compare_with(a, b, SignificanceTest::Welch)
}

pub fn compare_with(
    a: &[f64],
    b: &[f64],
    test: SignificanceTest,
) -> Result<Comparison, MetricsError> {
    let outcome = match test {
        SignificanceTest::Welch => welch_t_test(a, b)?,
        SignificanceTest::MannWhitney => mann_whitney_u(a, b)?,
    };
    let (mean_a, mean_b) = (mean(a), mean(b));
    Ok(Comparison {
        p_value: outcome.p_value,
        improvement_percent: improvement_percent(mean_a, mean_b),
        mean_a,
        mean_b,
    })
}

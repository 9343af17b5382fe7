//! Paired significance testing.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub t: f64,
    /// two-sided
    pub p: f64,
}

/// Two-sided paired t-test on per-query differences.
///
/// All-zero differences give `t = 0, p = 1`. Constant non-zero differences
/// have zero variance and give an infinite `t` with `p = 0`.
pub fn paired_t_test(deltas: &[f64]) -> Result<TTest> {
    let n = deltas.len();
    if n < 2 {
        return Err(Error::InvalidData(format!("t-test needs at least 2 pairs, got {n}")));
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { n, t: 0.0, p: 1.0 }
        } else {
            TTest {
                n,
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { n, t, p })
}

pub fn bonferroni(p: f64, num_tests: usize) -> f64 {
    (p * num_tests.max(1) as f64).min(1.0)
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

pub fn is_significant(p_adjusted: f64) -> bool {
    p_adjusted < SIGNIFICANCE_LEVEL
}

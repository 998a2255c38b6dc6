use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    /// `None` when the differences have zero variance.
    pub t: Option<f64>,
    /// Two-sided p-value.
    pub p: f64,
    /// Set when the zero-variance convention decided `p`.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "paired_ttest",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::EmptyInput("paired_ttest needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(TTest {
            n,
            mean_diff: mean,
            t: None,
            p: if mean == 0.0 { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Config(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_diff: mean,
        t: Some(t),
        p,
        degenerate: false,
    })
}

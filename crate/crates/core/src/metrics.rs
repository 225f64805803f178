//! Reported quantities: consensus error, gradient norm at the mean,
//! optimality gap, the running residual, and log-log rate fits.

use thiserror::Error;

use crate::linalg::{dist_sq, mean, norm_sq};
use crate::problems::Problem;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {need} positive points in the window, found {found}")]
    TooFewPoints { need: usize, found: usize },
    #[error("non-positive value {value} at k = {k} inside the window")]
    NonPositive { k: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub consensus_err: f64,
    pub grad_norm_sq: f64,
    pub opt_gap: Option<f64>,
    pub residual: f64,
    pub bits_cum: u64,
    pub wall_ms: Option<f64>,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "step,consensus_err,grad_norm_sq,opt_gap,residual,bits_cum,wall_ms";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{:e},{:e},{},{:e},{},{}",
            self.step,
            self.consensus_err,
            self.grad_norm_sq,
            opt(self.opt_gap),
            self.residual,
            self.bits_cum,
            self.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
        )
    }
}

/// `(1/n) sum_i |x_i - xbar|^2`.
pub fn consensus_error(xs: &[Vec<f64>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let xbar = mean(xs);
    xs.iter().map(|x| dist_sq(x, &xbar)).sum::<f64>() / xs.len() as f64
}

pub fn residual_update(prev: f64, consensus_err: f64, grad_norm_sq: f64) -> f64 {
    prev.min(consensus_err + grad_norm_sq)
}

/// Evaluates one trace record at the agents' current points. `prev_residual`
/// is `f64::INFINITY` for the first record.
pub fn snapshot<P: Problem + ?Sized>(problem: &P, xs: &[Vec<f64>], step: usize, bits_cum: u64, prev_residual: f64) -> TraceRecord {
    let xbar = mean(xs);
    let consensus_err = consensus_error(xs);
    let grad_norm_sq = norm_sq(&problem.gradient(&xbar));
    let opt_gap = problem.optimum().map(|f| problem.value(&xbar) - f);
    TraceRecord {
        step,
        consensus_err,
        grad_norm_sq,
        opt_gap,
        residual: residual_update(prev_residual, consensus_err, grad_norm_sq),
        bits_cum,
        wall_ms: None,
    }
}

/// Least-squares slope of `ln(value)` against `ln(k)` over points with
/// `k_lo <= k <= k_hi`.
pub fn loglog_slope(series: &[(f64, f64)], k_lo: f64, k_hi: f64) -> Result<f64, MetricsError> {
    let mut pts = Vec::new();
    for &(k, v) in series.iter().filter(|(k, _)| *k >= k_lo && *k <= k_hi) {
        if !(v > 0.0) || !(k > 0.0) {
            return Err(MetricsError::NonPositive { k, value: v });
        }
        pts.push((k.ln(), v.ln()));
    }
    if pts.len() < 10 {
        return Err(MetricsError::TooFewPoints { need: 10, found: pts.len() });
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus_error(&vec![vec![1.0, 2.0]; 3]), 0.0);
        assert_eq!(consensus_error(&[vec![1.0], vec![-1.0]]), 1.0);
    }

    #[test]
    fn residual_is_min() {
        assert_eq!(residual_update(0.5, 0.3, 0.4), 0.5);
        assert_eq!(residual_update(f64::INFINITY, 0.0, 0.0), 0.0);
    }

    #[test]
    fn slopes() {
        let s: Vec<(f64, f64)> = (1..=100).map(|k| (k as f64, 1.0 / (k * k) as f64)).collect();
        assert!((loglog_slope(&s, 1.0, 100.0).unwrap() + 2.0).abs() < 1e-9);
        let c: Vec<(f64, f64)> = (1..=100).map(|k| (k as f64, 3.0)).collect();
        assert!(loglog_slope(&c, 1.0, 100.0).unwrap().abs() < 1e-12);
        assert_eq!(loglog_slope(&s, 1.0, 5.0), Err(MetricsError::TooFewPoints { need: 10, found: 5 }));
        let mut z = c.clone();
        z[3].1 = 0.0;
        assert!(matches!(loglog_slope(&z, 1.0, 100.0), Err(MetricsError::NonPositive { .. })));
    }

    #[test]
    fn csv_row_leaves_missing_fields_empty() {
        let r = TraceRecord { step: 3, consensus_err: 0.5, grad_norm_sq: 1.0, opt_gap: None, residual: 1.5, bits_cum: 7, wall_ms: None };
        assert_eq!(r.csv_row(), "3,5e-1,1e0,,1.5e0,7,");
    }
}

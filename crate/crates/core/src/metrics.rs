//! Reconstruction-quality metrics: RMSE and windowed dynamic time warping,
//! plus classification accuracy for the appliance-monitoring study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Per-point cost used inside DTW.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointCost {
    AbsoluteDifference,
    SquaredDifference,
}

impl PointCost {
    #[inline]
    fn eval(self, a: f64, b: f64) -> f64 {
        let d = a - b;
        match self {
            PointCost::AbsoluteDifference => d.abs(),
            PointCost::SquaredDifference => d * d,
        }
    }
}

/// Windowed-DTW settings. The reported value is the mean DTW over aligned,
/// non-overlapping windows (stride defaults to the window length).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtwConfig {
    pub window_len: usize,
    pub window_stride: usize,
    pub point_cost: PointCost,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self { window_len: 100, window_stride: 100, point_cost: PointCost::AbsoluteDifference }
    }
}

/// Root mean squared error between two equal-length series.
pub fn rmse(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    rmse_slices(a.samples(), b.samples())
}

pub fn rmse_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Classic dynamic-programming DTW with match/insert/delete steps; the
/// returned value is the summed point cost along the optimal alignment.
pub fn dtw(a: &[f64], b: &[f64], cost: PointCost) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    // Rolling rows over the (len(a)+1) x (len(b)+1) cost table.
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &av in a {
        curr[0] = f64::INFINITY;
        for (j, &bv) in b.iter().enumerate() {
            let c = cost.eval(av, bv);
            curr[j + 1] = c + prev[j].min(prev[j + 1]).min(curr[j]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// Mean DTW over aligned windows at offsets `0, stride, 2*stride, ...`;
/// a trailing partial window is dropped. Requires equal lengths of at least
/// one full window.
pub fn windowed_dtw(a: &TimeSeries, b: &TimeSeries, cfg: &DtwConfig) -> Result<f64> {
    windowed_dtw_slices(a.samples(), b.samples(), cfg)
}

pub fn windowed_dtw_slices(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<f64> {
    assert!(cfg.window_len >= 2, "window_len must be at least 2");
    assert!(cfg.window_stride >= 1, "window_stride must be positive");
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < cfg.window_len {
        return Err(Error::TooShort { needed: cfg.window_len, got: a.len() });
    }
    let mut offsets = Vec::new();
    let mut start = 0usize;
    while start + cfg.window_len <= a.len() {
        offsets.push(start);
        start += cfg.window_stride;
    }
    // Parallel per window; summation in offset order keeps the result
    // independent of thread scheduling.
    let costs: Vec<f64> = offsets
        .par_iter()
        .map(|&o| {
            dtw(
                &a[o..o + cfg.window_len],
                &b[o..o + cfg.window_len],
                cfg.point_cost,
            )
            .expect("windows are non-empty")
        })
        .collect();
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Fraction of exact label matches.
pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { a: predictions.len(), b: labels.len() });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Scores of one reconstruction method, averaged over a test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub rmse: f64,
    pub dtw: f64,
}

/// Reconstruction-quality table for one `(f_l, alpha)` setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub low_rate_hz: f64,
    pub alpha: usize,
    pub n_series: usize,
    pub methods: Vec<MethodScore>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,low_rate_hz,alpha,rmse,dtw\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                m.method, self.low_rate_hz, self.alpha, m.rmse, m.dtw
            ));
        }
        out
    }

    pub fn score(&self, method: &str) -> Option<&MethodScore> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Domain;
    use proptest::prelude::*;

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 1.0, Domain::Raw)
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&ts(vec![1.0, 2.0]), &ts(vec![1.0, 2.0])).unwrap(), 0.0);
        let v = rmse(&ts(vec![1.0, 2.0]), &ts(vec![1.0, 4.0])).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            rmse(&ts(vec![1.0]), &ts(vec![1.0, 2.0])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dtw_cases() {
        let abs = PointCost::AbsoluteDifference;
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], abs).unwrap(), 0.0);
        // The duplicated 2 aligns at zero cost.
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0], abs).unwrap(), 0.0);
        assert_eq!(dtw(&[0.0], &[3.0], abs).unwrap(), 3.0);
        assert!(matches!(dtw(&[], &[1.0], abs), Err(Error::EmptyInput)));
    }

    #[test]
    fn dtw_bounded_by_diagonal_path() {
        let a = [0.5f64, 1.5, -0.25, 2.0];
        let b = [0.0f64, 1.0, 0.25, 1.0];
        let cost = PointCost::AbsoluteDifference;
        let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(dtw(&a, &b, cost).unwrap() <= diag);
    }

    #[test]
    fn windowed_dtw_window_count_and_reduction() {
        let a = ts((0..200).map(|i| (i as f64 * 0.1).sin()).collect());
        let b = ts((0..200).map(|i| (i as f64 * 0.1).cos()).collect());
        let cfg = DtwConfig::default();
        let w = windowed_dtw(&a, &b, &cfg).unwrap();
        let w0 = dtw(&a.samples()[..100], &b.samples()[..100], cfg.point_cost).unwrap();
        let w1 = dtw(&a.samples()[100..], &b.samples()[100..], cfg.point_cost).unwrap();
        assert!((w - (w0 + w1) / 2.0).abs() < 1e-12);

        // Stride = window = full length reduces to plain DTW.
        let cfg_full =
            DtwConfig { window_len: 200, window_stride: 200, ..DtwConfig::default() };
        let full = windowed_dtw(&a, &b, &cfg_full).unwrap();
        assert_eq!(full, dtw(a.samples(), b.samples(), cfg_full.point_cost).unwrap());
    }

    #[test]
    fn windowed_dtw_identical_is_zero() {
        let a = ts((0..150).map(|i| i as f64).collect());
        assert_eq!(windowed_dtw(&a, &a, &DtwConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn windowed_dtw_too_short() {
        let a = ts(vec![0.0; 50]);
        assert!(matches!(
            windowed_dtw(&a, &a, &DtwConfig::default()),
            Err(Error::TooShort { needed: 100, got: 50 })
        ));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy::<u8>(&[], &[]), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn dtw_symmetric_nonnegative(
            a in proptest::collection::vec(-10.0f64..10.0, 1..24),
            b in proptest::collection::vec(-10.0f64..10.0, 1..24),
        ) {
            let cost = PointCost::AbsoluteDifference;
            let ab = dtw(&a, &b, cost).unwrap();
            let ba = dtw(&b, &a, cost).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            let aa = dtw(&a, &a, cost).unwrap();
            prop_assert_eq!(aa, 0.0);
        }
    }
}

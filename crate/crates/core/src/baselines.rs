//! Deterministic upsamplers and an explicit optimization-based reconstruction.
//!
//! All three place the known low-res samples at high-res indices `alpha * i`
//! (phase 0), matching the decimation geometry in [`crate::signal`], so with a
//! noiseless degradation the interpolators invert it exactly at the knots.
//! Indices past the last knot hold the final known value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Prior used by the optimization-based reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Quadratic penalty on the discrete second difference (curvature).
    SecondDifferenceQuadratic,
}

/// Configuration of [`map_upsample`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapConfig {
    /// Weight of the prior term.
    pub lambda: f64,
    pub prior: Prior,
    pub max_iter: usize,
    /// Bound on the norm of the objective gradient at the returned point.
    pub tol: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            prior: Prior::SecondDifferenceQuadratic,
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear upsampling by an integer factor.
pub fn upsample_linear(x: &TimeSeries, alpha: usize) -> Result<TimeSeries> {
    assert!(alpha >= 1);
    let d = x.len();
    if d < 2 {
        return Err(Error::TooShort { needed: 2, got: d });
    }
    let s = x.samples();
    let mut out = Vec::with_capacity(alpha * d);
    for j in 0..alpha * d {
        let k = j / alpha;
        let frac = (j - alpha * k) as f64 / alpha as f64;
        let v = if k + 1 < d {
            s[k] + frac * (s[k + 1] - s[k])
        } else {
            s[d - 1] // hold past the last knot
        };
        out.push(v);
    }
    Ok(TimeSeries::new(out, x.sample_rate_hz() * alpha as f64, x.domain()))
}

/// Cubic-spline upsampling by an integer factor.
///
/// Uses not-a-knot end conditions, so data sampled from a single cubic
/// polynomial is reproduced exactly; with four knots the spline *is* that
/// cubic. Indices past the last knot hold the final value.
pub fn upsample_cubic(x: &TimeSeries, alpha: usize) -> Result<TimeSeries> {
    assert!(alpha >= 1);
    let d = x.len();
    if d < 4 {
        return Err(Error::TooShort { needed: 4, got: d });
    }
    let s = x.samples();
    if alpha == 1 {
        return Ok(x.clone());
    }
    // Knots sit at high-res indices alpha * i, so the spacing is uniform
    // (h = alpha) and the knot values are s[i].
    let m = spline_second_derivatives(s, alpha as f64);
    let h = alpha as f64;
    let mut out = Vec::with_capacity(alpha * d);
    for j in 0..alpha * d {
        let k = (j / alpha).min(d - 2);
        if j >= alpha * (d - 1) {
            out.push(s[d - 1]); // hold past the last knot
            continue;
        }
        let t = j as f64 - (alpha * k) as f64; // offset within interval, [0, h)
        let a = (h - t) / h;
        let b = t / h;
        let v = a * s[k]
            + b * s[k + 1]
            + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0;
        out.push(v);
    }
    Ok(TimeSeries::new(out, x.sample_rate_hz() * alpha as f64, x.domain()))
}

/// Second derivatives of the not-a-knot cubic spline on a uniform grid with
/// spacing `h`, by LU sweep over the (almost) tridiagonal system.
fn spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    debug_assert!(n >= 4);
    let n_int = n - 2; // interior knots 1..=n-2 carry continuity equations
    // Interior equations: (h/6) m[i-1] + (2h/3) m[i] + (h/6) m[i+1] = rhs_i
    // with rhs_i = (y[i+1] - 2 y[i] + y[i-1]) / h. Not-a-knot ties the end
    // second derivatives linearly: m[0] = 2 m[1] - m[2], m[n-1] = 2 m[n-2] - m[n-3]
    // (continuity of the third derivative on a uniform grid).
    let mut sub = vec![h / 6.0; n_int];
    let mut diag = vec![2.0 * h / 3.0; n_int];
    let mut sup = vec![h / 6.0; n_int];
    let mut rhs: Vec<f64> = (1..=n - 2)
        .map(|i| (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h)
        .collect();

    // Fold the end conditions into the first and last interior equations.
    // First row couples m[0]: replace via m[0] = 2 m[1] - m[2].
    diag[0] += 2.0 * sub[0];
    sup[0] -= sub[0];
    sub[0] = 0.0;
    // Last row couples m[n-1]: replace via m[n-1] = 2 m[n-2] - m[n-3].
    diag[n_int - 1] += 2.0 * sup[n_int - 1];
    sub[n_int - 1] -= sup[n_int - 1];
    sup[n_int - 1] = 0.0;

    // Thomas algorithm.
    for i in 1..n_int {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut interior = vec![0.0; n_int];
    interior[n_int - 1] = rhs[n_int - 1] / diag[n_int - 1];
    for i in (0..n_int - 1).rev() {
        interior[i] = (rhs[i] - sup[i] * interior[i + 1]) / diag[i];
    }

    let mut m = vec![0.0; n];
    m[1..=n - 2].copy_from_slice(&interior);
    m[0] = 2.0 * m[1] - m[2];
    m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    m
}

/// Reconstruction as the minimizer of
/// `||D y - x||^2 + lambda ||A y||^2`
/// where `D` keeps every `alpha`-th sample (phase 0) and `A` is the second
/// difference operator. Solved on the normal equations
/// `(D^T D + lambda A^T A) y = D^T x` by conjugate gradient, warm-started at
/// the nearest-neighbor upsampling of `x`. Runs until the objective gradient
/// norm is at most `cfg.tol`.
pub fn map_upsample(x: &TimeSeries, alpha: usize, cfg: &MapConfig) -> Result<TimeSeries> {
    assert!(alpha >= 1);
    cfg.validate()?;
    let d = x.len();
    let n = alpha * d;
    let s = x.samples();

    // b = D^T x
    let mut b = vec![0.0; n];
    for i in 0..d {
        b[alpha * i] = s[i];
    }

    let apply = |y: &[f64], out: &mut Vec<f64>| {
        // out = (D^T D + lambda A^T A) y
        out.clear();
        out.resize(n, 0.0);
        for i in 0..d {
            out[alpha * i] = y[alpha * i];
        }
        if cfg.lambda > 0.0 && n >= 3 {
            // w = A y, then out += lambda * A^T w
            for i in 0..n - 2 {
                let w = y[i] - 2.0 * y[i + 1] + y[i + 2];
                let lw = cfg.lambda * w;
                out[i] += lw;
                out[i + 1] -= 2.0 * lw;
                out[i + 2] += lw;
            }
        }
    };

    // Warm start: nearest-neighbor upsample. For constant inputs this is
    // already the exact minimizer.
    let mut y: Vec<f64> = (0..n).map(|j| s[j / alpha]).collect();

    let mut ay = Vec::with_capacity(n);
    apply(&y, &mut ay);
    let mut r: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();

    // Objective gradient is 2(Ay - b) = -2r, so stop once 2 ||r|| <= tol.
    let target = cfg.tol / 2.0;
    let mut iters = 0usize;
    while rs_old.sqrt() > target {
        if iters >= cfg.max_iter {
            return Err(Error::DidNotConverge { iters, residual: 2.0 * rs_old.sqrt() });
        }
        apply(&p, &mut ay);
        let pap: f64 = p.iter().zip(&ay).map(|(pi, ai)| pi * ai).sum();
        if pap <= 0.0 {
            return Err(Error::DidNotConverge { iters, residual: 2.0 * rs_old.sqrt() });
        }
        let step = rs_old / pap;
        for j in 0..n {
            y[j] += step * p[j];
            r[j] -= step * ay[j];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for j in 0..n {
            p[j] = r[j] + beta * p[j];
        }
        rs_old = rs_new;
        iters += 1;
    }

    Ok(TimeSeries::new(y, x.sample_rate_hz() * alpha as f64, x.domain()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{degrade, DegradationSpec, Domain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(samples: Vec<f64>) -> TimeSeries {
        TimeSeries::new(samples, 10.0, Domain::Preprocessed)
    }

    #[test]
    fn linear_hand_case() {
        let out = upsample_linear(&series(vec![0.0, 2.0]), 2).unwrap();
        assert_eq!(out.samples(), &[0.0, 1.0, 2.0, 2.0]);
        assert_eq!(out.sample_rate_hz(), 20.0);
    }

    #[test]
    fn linear_constant_and_identity() {
        let c = series(vec![3.5; 5]);
        let out = upsample_linear(&c, 4).unwrap();
        assert!(out.samples().iter().all(|&v| v == 3.5));
        let id = upsample_linear(&c, 1).unwrap();
        assert_eq!(id.samples(), c.samples());
    }

    #[test]
    fn linear_too_short() {
        assert!(matches!(
            upsample_linear(&series(vec![1.0]), 2),
            Err(Error::TooShort { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn linear_inverts_noiseless_degradation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = series((0..16).map(|_| rng.random_range(-1.0..1.0)).collect());
        let up = upsample_linear(&x, 5).unwrap();
        let back = degrade(&up, &DegradationSpec::new(5, 0, 0.0, 0)).unwrap();
        assert_eq!(back.samples(), x.samples());
    }

    #[test]
    fn cubic_constant_and_identity() {
        let c = series(vec![1.25; 6]);
        let out = upsample_cubic(&c, 3).unwrap();
        for &v in out.samples() {
            assert!((v - 1.25).abs() < 1e-12);
        }
        let id = upsample_cubic(&c, 1).unwrap();
        assert_eq!(id.samples(), c.samples());
    }

    #[test]
    fn cubic_reproduces_cubic_polynomials() {
        // Not-a-knot spline through samples of a cubic recovers the cubic.
        let alpha = 4usize;
        for d in [4usize, 5, 9] {
            let poly = |u: f64| 0.3 * u * u * u - 1.2 * u * u + 0.5 * u + 2.0;
            let x = series((0..d).map(|i| poly((alpha * i) as f64)).collect());
            let out = upsample_cubic(&x, alpha).unwrap();
            for j in 0..alpha * (d - 1) + 1 {
                let expect = poly(j as f64);
                assert!(
                    (out.samples()[j] - expect).abs() < 1e-9,
                    "d={d} j={j}: {} vs {expect}",
                    out.samples()[j]
                );
            }
        }
    }

    #[test]
    fn cubic_interpolates_knots_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = series((0..8).map(|_| rng.random_range(-2.0..2.0)).collect());
        let out = upsample_cubic(&x, 3).unwrap();
        for i in 0..8 {
            assert!((out.samples()[3 * i] - x.samples()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_too_short() {
        assert!(matches!(
            upsample_cubic(&series(vec![1.0, 2.0, 3.0]), 2),
            Err(Error::TooShort { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn upsamplers_length_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [4usize, 7, 12] {
            for alpha in [1usize, 2, 5] {
                let x = series((0..d).map(|_| rng.random_range(0.0..1.0)).collect());
                assert_eq!(upsample_linear(&x, alpha).unwrap().len(), alpha * d);
                assert_eq!(upsample_cubic(&x, alpha).unwrap().len(), alpha * d);
                let cfg = MapConfig::default();
                assert_eq!(map_upsample(&x, alpha, &cfg).unwrap().len(), alpha * d);
            }
        }
    }

    #[test]
    fn map_constant_input_stays_constant() {
        let x = series(vec![2.5; 8]);
        let y = map_upsample(&x, 3, &MapConfig { lambda: 4.0, ..Default::default() }).unwrap();
        for &v in y.samples() {
            assert_eq!(v, 2.5); // warm start is the exact minimizer
        }
    }

    /// Dense reference solve of the normal equations by Gaussian elimination.
    fn dense_map_solve(x: &[f64], alpha: usize, lambda: f64) -> Vec<f64> {
        let d = x.len();
        let n = alpha * d;
        let mut a = vec![vec![0.0f64; n]; n];
        let mut b = vec![0.0f64; n];
        for i in 0..d {
            a[alpha * i][alpha * i] += 1.0;
            b[alpha * i] = x[i];
        }
        for i in 0..n.saturating_sub(2) {
            let idx = [i, i + 1, i + 2];
            let coef = [1.0, -2.0, 1.0];
            for (r, cr) in idx.iter().zip(coef) {
                for (c, cc) in idx.iter().zip(coef) {
                    a[*r][*c] += lambda * cr * cc;
                }
            }
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            let pv = a[col][col];
            for row in col + 1..n {
                let f = a[row][col] / pv;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
        let mut y = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for c in row + 1..n {
                acc -= a[row][c] * y[c];
            }
            y[row] = acc / a[row][row];
        }
        y
    }

    #[test]
    fn map_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = MapConfig { lambda: 0.7, tol: 1e-10, ..Default::default() };
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = map_upsample(&series(x.clone()), 2, &cfg).unwrap();
        let want = dense_map_solve(&x, 2, cfg.lambda);
        for (g, w) in got.samples().iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}");
        }
    }

    #[test]
    fn map_gradient_norm_within_tol_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = MapConfig { lambda: 2.0, tol: 1e-9, ..Default::default() };
        let alpha = 3usize;
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = map_upsample(&series(x.clone()), alpha, &cfg).unwrap();
        let ys = y.samples();
        let n = ys.len();
        // gradient = 2 D^T (D y - x) + 2 lambda A^T A y
        let mut grad = vec![0.0; n];
        for i in 0..x.len() {
            grad[alpha * i] += 2.0 * (ys[alpha * i] - x[i]);
        }
        for i in 0..n - 2 {
            let w = ys[i] - 2.0 * ys[i + 1] + ys[i + 2];
            grad[i] += 2.0 * cfg.lambda * w;
            grad[i + 1] -= 4.0 * cfg.lambda * w;
            grad[i + 2] += 2.0 * cfg.lambda * w;
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= cfg.tol, "gradient norm {norm}");
    }

    #[test]
    fn map_curvature_decreases_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<f64> = (0..12)
            .map(|i| (i as f64 * 0.8).sin() + rng.random_range(-0.3..0.3))
            .collect();
        let curvature = |lambda: f64| {
            let cfg = MapConfig { lambda, tol: 1e-10, ..Default::default() };
            let y = map_upsample(&series(x.clone()), 2, &cfg).unwrap();
            let ys = y.samples();
            (0..ys.len() - 2)
                .map(|i| {
                    let w = ys[i] - 2.0 * ys[i + 1] + ys[i + 2];
                    w * w
                })
                .sum::<f64>()
                .sqrt()
        };
        let c = [curvature(1e-2), curvature(1.0), curvature(1e2)];
        assert!(c[0] > c[1] && c[1] > c[2], "curvatures {c:?}");
    }

    #[test]
    fn map_reports_nonconvergence() {
        let cfg = MapConfig { lambda: 1.0, max_iter: 1, tol: 1e-14, ..Default::default() };
        let x = series((0..32).map(|i| ((i * 37) % 11) as f64).collect());
        match map_upsample(&x, 4, &cfg) {
            Err(Error::DidNotConverge { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected DidNotConverge, got {other:?}"),
        }
    }
}

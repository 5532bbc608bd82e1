//! The optimal query probability `q*(x, η)`.
//!
//! `q*` is the smallest label-collection probability for which the
//! exponentially weighted forecaster with `p = x` keeps the full-information
//! regret bound `ln N / η + n η / 8`. It is the infimum of the `q ∈ (0, 1]`
//! satisfying
//!
//! ```text
//! x     + (q/η) ln(1 - x + x e^{-η/q}) <= η/8
//! 1 - x + (q/η) ln(x + (1 - x) e^{-η/q}) <= η/8
//! ```
//!
//! No closed form exists, so it is located numerically. The closed-form
//! upper bound `min(4x(1-x) + η/3, 1)` is cheap and is what the experiments use.

use std::io::Write;

use crate::error::{Error, Result};

/// Default absolute accuracy of [`q_star`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// Accuracy used when tabulating curves.
pub const CURVE_TOL: f64 = 1e-8;

const COARSE_GRID: usize = 64;
const VERIFY_GRID: usize = 256;
const FALLBACK_GRID: usize = 100_000;

/// Above this learning rate the regret bound is vacuous and `q* = 0`.
const VACUOUS_ETA: f64 = 8.0;

/// A single `q*` evaluation request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QStarQuery {
    pub x: f64,
    pub eta: f64,
    pub tol: f64,
}

impl QStarQuery {
    pub fn new(x: f64, eta: f64) -> Self {
        Self {
            x,
            eta,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn solve(&self) -> Result<f64> {
        q_star(self.x, self.eta, self.tol)
    }
}

/// `ln(1 - a + a e^{-s})` for `a ∈ [0, 1]`, `s ≥ 0`, without underflow.
fn ln_mixture(a: f64, s: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if a >= 1.0 {
        return -s;
    }
    let keep = (-a).ln_1p();
    let decay = a.ln() - s;
    let (hi, lo) = if keep >= decay {
        (keep, decay)
    } else {
        (decay, keep)
    };
    hi + (lo - hi).exp().ln_1p()
}

fn constraints_unchecked(x: f64, eta: f64, q: f64) -> (f64, f64) {
    let s = eta / q;
    let c1 = x + ln_mixture(x, s) / s;
    let c2 = (1.0 - x) + ln_mixture(1.0 - x, s) / s;
    (c1, c2)
}

fn feasible(x: f64, eta: f64, q: f64) -> bool {
    let (c1, c2) = constraints_unchecked(x, eta, q);
    let cap = eta / 8.0;
    c1 <= cap && c2 <= cap
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {eta} must be positive and finite"
        )));
    }
    Ok(())
}

/// Left-hand sides `(c₁, c₂)` of the two `q*` constraints at query
/// probability `q ∈ (0, 1]`. Callers compare both against `η/8`.
pub fn constraint_values(x: f64, eta: f64, q: f64) -> Result<(f64, f64)> {
    check_unit("x", x)?;
    check_eta(eta)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "query probability {q} is outside (0, 1]"
        )));
    }
    Ok(constraints_unchecked(x, eta, q))
}

/// Smallest query probability that preserves the regret bound, to absolute
/// accuracy `tol`. The returned value is always on the feasible side.
pub fn q_star(x: f64, eta: f64, tol: f64) -> Result<f64> {
    check_unit("x", x)?;
    check_eta(eta)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {tol} must lie in (0, 1)"
        )));
    }
    if x == 0.0 || x == 1.0 || eta >= VACUOUS_ETA {
        return Ok(0.0);
    }

    // Log-spaced grid from tol up to exactly 1.
    let grid: Vec<f64> = (0..COARSE_GRID)
        .map(|k| {
            if k == COARSE_GRID - 1 {
                1.0
            } else {
                tol.powf(1.0 - k as f64 / (COARSE_GRID - 1) as f64)
            }
        })
        .collect();
    let ok: Vec<bool> = grid.iter().map(|&q| feasible(x, eta, q)).collect();

    let Some(last_bad) = ok.iter().rposition(|&f| !f) else {
        return Ok(0.0);
    };
    if last_bad == COARSE_GRID - 1 {
        // q = 1 is always feasible in exact arithmetic; rounding can put it a
        // hair over the cap.
        return Ok(1.0);
    }

    let mut lo = grid[last_bad];
    let mut hi = grid[last_bad + 1];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(x, eta, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let verified = (0..VERIFY_GRID).all(|k| {
        let q = hi + (1.0 - hi) * k as f64 / (VERIFY_GRID - 1) as f64;
        feasible(x, eta, q)
    });
    if verified {
        return Ok(hi);
    }
    Ok(fallback_scan(x, eta))
}

/// Smallest grid point from which every larger grid point is feasible.
fn fallback_scan(x: f64, eta: f64) -> f64 {
    let point = |k: usize| (k + 1) as f64 / FALLBACK_GRID as f64;
    let mut answer = 1.0;
    for k in (0..FALLBACK_GRID).rev() {
        if feasible(x, eta, point(k)) {
            answer = point(k);
        } else {
            break;
        }
    }
    answer
}

/// Closed-form upper bound `min(4x(1-x) + η/3, 1)` on `q*`.
pub fn q_star_upper(x: f64, eta: f64) -> f64 {
    (4.0 * x * (1.0 - x) + eta / 3.0).min(1.0)
}

/// One row of a tabulated `q*` curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QStarRow {
    pub x: f64,
    pub eta: f64,
    pub q_star: f64,
}

/// Tabulates `q*` on a uniform grid of `grid_points` values of `x ∈ [0, 1]`
/// for each learning rate. Rows are ordered by `(η, x)`.
pub fn q_star_curve(etas: &[f64], grid_points: usize) -> Result<Vec<QStarRow>> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 points, got {grid_points}"
        )));
    }
    for &eta in etas {
        check_eta(eta)?;
    }
    let mut sorted = etas.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut rows = Vec::with_capacity(sorted.len() * grid_points);
    for eta in sorted {
        for k in 0..grid_points {
            let x = k as f64 / (grid_points - 1) as f64;
            rows.push(QStarRow {
                x,
                eta,
                q_star: q_star(x, eta, CURVE_TOL)?,
            });
        }
    }
    Ok(rows)
}

/// Writes curve rows as CSV with header `x,eta,q_star`.
pub fn write_q_star_csv<W: Write>(rows: &[QStarRow], mut out: W) -> Result<()> {
    writeln!(out, "x,eta,q_star")?;
    for row in rows {
        writeln!(out, "{},{},{}", row.x, row.eta, row.q_star)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Direct transcription of the constraints with no underflow handling.
    fn naive_feasible(x: f64, eta: f64, q: f64) -> bool {
        let e = (-eta / q).exp();
        let c1 = x + q / eta * (1.0 - x + x * e).ln();
        let c2 = 1.0 - x + q / eta * (x + (1.0 - x) * e).ln();
        c1 <= eta / 8.0 && c2 <= eta / 8.0
    }

    // Infimum of the feasible up-set on a uniform grid of `points` values.
    fn scan_oracle(x: f64, eta: f64, points: usize) -> f64 {
        let mut answer = 0.0;
        for k in (1..=points).rev() {
            let q = k as f64 / points as f64;
            if !naive_feasible(x, eta, q) {
                answer = q;
                break;
            }
        }
        answer
    }

    #[test]
    fn constraint_values_at_endpoints() {
        for eta in [0.1, 1.0, 5.0] {
            let (c1, c2) = constraint_values(0.0, eta, 1.0).unwrap();
            assert_eq!(c1, 0.0);
            assert_abs_diff_eq!(c2, 0.0, epsilon = 1e-15);
            let (c1, c2) = constraint_values(1.0, eta, 1.0).unwrap();
            assert_abs_diff_eq!(c1, 0.0, epsilon = 1e-15);
            assert_eq!(c2, 0.0);
        }
    }

    #[test]
    fn constraint_values_at_half() {
        // 0.5 + ln((1 + e^{-1}) / 2), evaluated at 40 digits.
        let expected = 0.120_114_506_958_277_5;
        let (c1, c2) = constraint_values(0.5, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(c1, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(c2, expected, epsilon = 1e-14);
    }

    #[test]
    fn constraint_values_survive_underflow() {
        // η/q = 1e4 underflows e^{-η/q}.
        let (c1, c2) = constraint_values(0.3, 1.0, 1e-4).unwrap();
        assert_abs_diff_eq!(c1, 0.3 + 1e-4 * (0.7f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(c2, 0.7 + 1e-4 * (0.3f64).ln(), epsilon = 1e-15);
        assert!(c1.is_finite() && c2.is_finite());
    }

    #[test]
    fn constraint_values_rejects_bad_q() {
        assert!(constraint_values(0.5, 1.0, 0.0).is_err());
        assert!(constraint_values(0.5, 1.0, 1.5).is_err());
        assert!(constraint_values(1.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn q_star_zero_cases() {
        assert_eq!(q_star(0.0, 0.5, DEFAULT_TOL).unwrap(), 0.0);
        assert_eq!(q_star(1.0, 0.5, DEFAULT_TOL).unwrap(), 0.0);
        assert_eq!(q_star(0.5, 8.5, DEFAULT_TOL).unwrap(), 0.0);
    }

    #[test]
    fn q_star_small_eta_at_half_is_one() {
        let oracle = scan_oracle(0.5, 1e-4, 1_000_000);
        let q = q_star(0.5, 1e-4, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(q, oracle, epsilon = 2e-6);
    }

    #[test]
    fn q_star_matches_scan_oracle() {
        for &(x, eta) in &[(0.1, 0.5), (0.3, 1.0), (0.45, 2.0), (0.2, 4.0), (0.05, 0.1)] {
            let oracle = scan_oracle(x, eta, 200_000);
            let q = q_star(x, eta, DEFAULT_TOL).unwrap();
            assert_abs_diff_eq!(q, oracle, epsilon = 1e-5);
        }
    }

    #[test]
    fn q_star_upper_examples() {
        assert_eq!(q_star_upper(0.5, 0.3), 1.0);
        assert_eq!(q_star_upper(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(q_star_upper(0.1, 0.3), 0.46, epsilon = 1e-15);
    }

    #[test]
    fn curve_endpoints_and_order() {
        let rows = q_star_curve(&[0.5], 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].q_star, 0.0);
        assert_eq!(rows[2].q_star, 0.0);
        assert_eq!(rows[1].q_star, q_star(0.5, 0.5, CURVE_TOL).unwrap());

        let rows = q_star_curve(&[2.0, 0.5], 2).unwrap();
        let etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
        assert_eq!(etas, vec![0.5, 0.5, 2.0, 2.0]);
    }

    #[test]
    fn curve_small_eta_tracks_limit() {
        for row in q_star_curve(&[1e-4], 5).unwrap() {
            assert_abs_diff_eq!(row.q_star, 4.0 * row.x * (1.0 - row.x), epsilon = 2e-3);
        }
    }

    #[test]
    fn curve_vacuous_eta_is_zero() {
        assert!(q_star_curve(&[9.0], 11)
            .unwrap()
            .iter()
            .all(|r| r.q_star == 0.0));
    }

    #[test]
    fn curve_rejects_tiny_grid() {
        assert!(q_star_curve(&[1.0], 1).is_err());
        assert!(q_star_curve(&[-1.0], 5).is_err());
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_q_star_csv(&q_star_curve(&[1.0], 2).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,eta,q_star\n0,1,0\n"));
    }

    proptest! {
        #[test]
        fn feasible_at_one(x in 0.0f64..=1.0, eta in 1e-4f64..20.0) {
            let (c1, c2) = constraint_values(x, eta, 1.0).unwrap();
            prop_assert!(c1 <= eta / 8.0 + 1e-12);
            prop_assert!(c2 <= eta / 8.0 + 1e-12);
        }

        #[test]
        fn below_closed_form_bound(x in 0.0f64..=1.0, eta in 1e-3f64..10.0) {
            let q = q_star(x, eta, DEFAULT_TOL).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            prop_assert!(q <= q_star_upper(x, eta) + DEFAULT_TOL);
        }

        #[test]
        fn symmetric_in_x(x in 0.0f64..=1.0, eta in 1e-3f64..10.0) {
            let a = q_star(x, eta, DEFAULT_TOL).unwrap();
            let b = q_star(1.0 - x, eta, DEFAULT_TOL).unwrap();
            prop_assert!((a - b).abs() <= 1e-8);
        }

        #[test]
        fn everything_above_is_feasible(x in 0.0f64..=1.0, eta in 1e-3f64..7.9) {
            let q0 = q_star(x, eta, DEFAULT_TOL).unwrap();
            for k in 0..=50 {
                let q = q0 + (1.0 - q0) * k as f64 / 50.0;
                if q > 0.0 {
                    prop_assert!(feasible(x, eta, q));
                }
            }
        }
    }
}

//! Small dense least-squares machinery shared by the fitting routines.
//!
//! Everything here works on a handful of parameters, so plain fixed-size
//! arrays and Gaussian elimination are enough.

use alloc::vec;
use alloc::vec::Vec;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` for a numerically singular matrix.
#[allow(clippy::needless_range_loop)] // elimination reads better with indices
pub fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flat_map(|row| row.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        if a[pivot][col].abs() <= scale * 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Inverse of a small matrix, column by column.
pub fn invert<const N: usize>(a: [[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for col in 0..N {
        let mut e = [0.0; N];
        e[col] = 1.0;
        let x = solve(a, e)?;
        for row in 0..N {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

/// Weighted linear least squares `y ≈ X c` with per-row weights.
/// Returns the coefficients and `(XᵀWX)⁻¹`.
pub fn linear_lsq<const N: usize>(rows: &[[f64; N]], y: &[f64], w: &[f64]) -> Option<([f64; N], [[f64; N]; N])> {
    let mut ata = [[0.0; N]; N];
    let mut aty = [0.0; N];
    for ((row, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for i in 0..N {
            aty[i] += wi * row[i] * yi;
            for j in 0..N {
                ata[i][j] += wi * row[i] * row[j];
            }
        }
    }
    let coef = solve(ata, aty)?;
    let cov = invert(ata)?;
    Some((coef, cov))
}

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Scans `f` on a log-spaced grid and polishes the best bracket with a
/// golden-section search. Returns the minimizing abscissa and value.
pub fn log_scan_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (points - 1) as f64;
    let values: Vec<f64> = (0..points).map(|i| f((llo + step * i as f64).exp())).collect();
    let best = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let a = llo + step * best.saturating_sub(1) as f64;
    let b = llo + step * (best + 1).min(points - 1) as f64;
    let (x, v) = golden_min(|lx| f(lx.exp()), a, b, 1e-12);
    if v <= values[best] {
        (x.exp(), v)
    } else {
        ((llo + step * best as f64).exp(), values[best])
    }
}

/// Result of a Levenberg–Marquardt minimization.
#[derive(Debug, Clone, Copy)]
pub struct LmOutcome<const N: usize> {
    pub params: [f64; N],
    /// Sum of squared (weighted) residuals at the optimum.
    pub rss: f64,
    /// `(JᵀJ)⁻¹` at the optimum; `None` if singular.
    pub inv_normal: Option<[[f64; N]; N]>,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg–Marquardt for `M` residuals and `N` parameters.
///
/// `model(p, r, jac)` must fill the residual vector `r` and the Jacobian
/// `jac[i][j] = ∂r_i/∂p_j`. Returns `None` if the residuals stop being finite.
pub fn levenberg_marquardt<const N: usize>(
    p0: [f64; N],
    m: usize,
    mut model: impl FnMut(&[f64; N], &mut [f64], &mut [[f64; N]]),
    max_iter: usize,
) -> Option<LmOutcome<N>> {
    let mut p = p0;
    let mut r = vec![0.0; m];
    let mut jac = vec![[0.0; N]; m];
    let mut r_try = vec![0.0; m];
    let mut jac_try = vec![[0.0; N]; m];
    model(&p, &mut r, &mut jac);
    let mut rss: f64 = r.iter().map(|v| v * v).sum();
    if !rss.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&r, &jac);
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj;
            for i in 0..N {
                a[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let neg = jtr.map(|v| -v);
            let Some(delta) = solve(a, neg) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..N {
                trial[i] += delta[i];
            }
            model(&trial, &mut r_try, &mut jac_try);
            let rss_try: f64 = r_try.iter().map(|v| v * v).sum();
            if rss_try.is_finite() && rss_try <= rss {
                let small_step = (0..N).all(|i| delta[i].abs() <= 1e-12 * (p[i].abs() + 1e-12));
                let small_gain = rss - rss_try <= 1e-15 * rss.max(1e-300);
                p = trial;
                core::mem::swap(&mut r, &mut r_try);
                core::mem::swap(&mut jac, &mut jac_try);
                rss = rss_try;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No downhill step exists at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let (jtj, _) = normal_equations(&r, &jac);
    Some(LmOutcome { params: p, rss, inv_normal: invert(jtj), iterations, converged })
}

fn normal_equations<const N: usize>(r: &[f64], jac: &[[f64; N]]) -> ([[f64; N]; N], [f64; N]) {
    let mut jtj = [[0.0; N]; N];
    let mut jtr = [0.0; N];
    for (ri, row) in r.iter().zip(jac) {
        for i in 0..N {
            jtr[i] += row[i] * ri;
            for j in 0..N {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn solve_and_invert_3x3() {
        let a = [[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]];
        let x = solve(a, [1.0, 2.0, 3.0]).unwrap();
        for (row, b) in a.iter().zip([1.0, 2.0, 3.0]) {
            let lhs: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
            assert!((lhs - b).abs() < 1e-12);
        }
        let inv = invert(a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]).is_none());
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, v) = golden_min(|x| (x - 1.3) * (x - 1.3) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lm_fits_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-t / 0.7).exp()).collect();
        let out = levenberg_marquardt(
            [1.0, 2.0],
            t.len(),
            |p, r, j| {
                for i in 0..t.len() {
                    let e = (-t[i] / p[1]).exp();
                    r[i] = p[0] * e - y[i];
                    j[i] = [e, p[0] * e * t[i] / (p[1] * p[1])];
                }
            },
            200,
        )
        .unwrap();
        assert!((out.params[0] - 3.0).abs() < 1e-9);
        assert!((out.params[1] - 0.7).abs() < 1e-9);
        assert!(out.converged);
    }
}

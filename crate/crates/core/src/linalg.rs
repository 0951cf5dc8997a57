//! Small dense helpers used by the parameter solvers.

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Levenberg-Marquardt with a forward-difference Jacobian. Returns the
/// final parameters and the residual 2-norm.
pub fn levenberg_marquardt<F>(f: F, x0: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = x0;
    let Some(mut r) = f(&x) else { return (x, f64::INFINITY) };
    let mut rn = norm(&r);
    let mut lambda = 1e-3;
    let n = x.len();
    if n == 0 {
        return (x, rn);
    }
    for _ in 0..max_iter {
        if rn < tol {
            break;
        }
        let m = r.len();
        let mut jac = vec![vec![0.0; n]; m];
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let Some(rp) = f(&xp) else { return (x, rn) };
            for i in 0..m {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..n {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k][k] += lambda * (jtj[k][k] + 1e-12);
            }
            let Some(step) = solve_dense(a, jtr.iter().map(|v| -v).collect()) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if let Some(rnew) = f(&xn) {
                let nn = norm(&rnew);
                if nn < rn {
                    let small = step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-15;
                    x = xn;
                    r = rnew;
                    rn = nn;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !small;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, rn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve_dense(vec![vec![0.0, 2.0], vec![3.0, 1.0]], vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lm_fits_rosenbrock_residuals() {
        let f = |x: &[f64]| Some(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let (x, r) = levenberg_marquardt(f, vec![-1.2, 1.0], 1e-14, 200);
        assert!(r < 1e-12, "{r}");
        assert!((x[0] - 1.0).abs() < 1e-10);
    }
}

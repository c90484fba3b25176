//! Small numeric helpers: 3x3 determinants, bracketing root finders,
//! golden-section search, cubic roots and least squares.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `det[a | b | c]` with the arguments as columns.
pub fn det3(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) + a[1] * (b[2] * c[0] - b[0] * c[2]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

pub fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Brent's method on a sign-changing bracket `[a, b]`.
pub fn brent<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::NotFound(format!("no sign change on [{}, {}]", a, b)));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

/// Golden-section minimization on `[a, b]`; returns (argmin, min).
pub fn golden_min<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x)?;
    Ok(if fx <= fc.min(fd) {
        (x, fx)
    } else if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    })
}

/// Roots of `s^3 + a s^2 + b s + c`. The real root is found in closed form,
/// Newton-polished, and the remaining quadratic solved exactly.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let mut r = if disc >= 0.0 {
        let sq = disc.sqrt();
        (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() - a / 3.0
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        m * theta.cos() - a / 3.0
    };
    for _ in 0..4 {
        let f = ((r + a) * r + b) * r + c;
        let df = (3.0 * r + 2.0 * a) * r + b;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        r -= step;
        if step.abs() <= 1e-16 * (1.0 + r.abs()) {
            break;
        }
    }
    // Deflate: s^3 + a s^2 + b s + c = (s - r)(s^2 + e s + f)
    let e = a + r;
    let f = if r.abs() > 1e-300 { -c / r } else { b + e * r };
    let half = -e / 2.0;
    let dq = half * half - f;
    let (r1, r2) = if dq >= 0.0 {
        let s = dq.sqrt();
        // Stable pairing of the quadratic roots.
        let big = half + s.copysign(half);
        if big != 0.0 {
            (Complex64::new(big, 0.0), Complex64::new(f / big, 0.0))
        } else {
            (Complex64::new(s, 0.0), Complex64::new(-s, 0.0))
        }
    } else {
        let s = (-dq).sqrt();
        (Complex64::new(half, s), Complex64::new(half, -s))
    };
    [Complex64::new(r, 0.0), r1, r2]
}

/// Eigenvalues of a 3x3 matrix through its characteristic polynomial.
pub fn eigenvalues3(m: &DMatrix<f64>) -> [Complex64; 3] {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let c0 = [m[(0, 0)], m[(1, 0)], m[(2, 0)]];
    let c1 = [m[(0, 1)], m[(1, 1)], m[(2, 1)]];
    let c2 = [m[(0, 2)], m[(1, 2)], m[(2, 2)]];
    let det = det3(&c0, &c1, &c2);
    cubic_roots(-tr, minors, -det)
}

/// Least-squares solution of `a x = b` via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-14).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Slope of the least-squares line through `(x_i, y_i)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Order of convergence fitted on log-log scale.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cos_root() {
        let r = brent(|x| Ok(x.cos()), 1.0, 2.0, 1e-14).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_min(|x| Ok((x - 0.3).powi(2) + 1.0), -1.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cubic_roots_structure() {
        // s (s^2 - 3)
        let r = cubic_roots(0.0, -3.0, 0.0);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] + 3f64.sqrt()).abs() < 1e-14);
        assert!(re[1].abs() < 1e-14);
        assert!((re[2] - 3f64.sqrt()).abs() < 1e-14);
        // s (s^2 + 4)
        let r = cubic_roots(0.0, 4.0, 0.0);
        let mut im: Vec<f64> = r.iter().map(|z| z.im).collect();
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((im[0] + 2.0).abs() < 1e-14 && im[1].abs() < 1e-14 && (im[2] - 2.0).abs() < 1e-14);
        // (s-1)(s-2)(s-3)
        let r = cubic_roots(-6.0, 11.0, -6.0);
        for z in r {
            let res = ((z + -6.0) * z + 11.0) * z - 6.0;
            assert!(res.norm() < 1e-12);
        }
    }

    #[test]
    fn determinant_and_cross() {
        assert_eq!(det3(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]), 1.0);
        assert_eq!(cross(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn slope_of_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        assert!((fitted_order(&h, &e) - 3.0).abs() < 1e-12);
    }
}

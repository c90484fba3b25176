//! Non-immersion points of abnormal geodesics: detection, jet-order
//! classification, equilibrium spectra, and the value-function gap
//! construction near a semicubical cusp.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{singular_control, AffineControlSystem};
use crate::geomkernel::ExprField;
use crate::numeric::{eigenvalues3, fitted_order, golden_min, logspace, lstsq};
use crate::ode::{integrate, OdeOptions, Solution};
use crate::zermelo::{build_seminormal, Navigation, SemiNormalCoeffs};

/// Sampled times where a speed function has a local minimum below `tol`,
/// each refined by golden-section search between its neighbours. `tol` is
/// relative to the largest sampled speed.
pub fn detect_nonimmersion<F>(mut speed: F, times: &[f64], tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let n = times.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let s: Vec<f64> = times.iter().map(|t| speed(*t)).collect::<Result<_>>()?;
    let scale = s.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for i in 0..n {
        let left = if i > 0 { s[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < n { s[i + 1] } else { f64::INFINITY };
        if !(s[i] <= left && s[i] < right) {
            continue;
        }
        let a = times[i.saturating_sub(1)];
        let b = times[(i + 1).min(n - 1)];
        let (t, v) = golden_min(&mut speed, a, b, 1e-13)?;
        if v <= tol * scale {
            out.push(t);
        }
    }
    Ok(out)
}

/// Non-immersion points of the planar projection (first two components)
/// of an integrated flow of `field`.
pub fn detect_on_solution(field: &ExprField, sol: &Solution, samples: usize, tol: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let speed = |t: f64| -> Result<f64> {
        let v = field.eval(&sol.at(t))?;
        Ok(v[0].hypot(v[1]))
    };
    let (a, b) = (sol.t_start(), sol.t_end());
    let times: Vec<f64> = (0..samples).map(|k| a + (b - a) * k as f64 / (samples - 1) as f64).collect();
    let ts = detect_nonimmersion(speed, &times, tol)?;
    Ok(ts.into_iter().map(|t| (t, sol.at(t))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CuspKind {
    Semicubical,
    Ramphoid,
    Higher { p: u32, q: u32 },
    Equilibrium,
}

impl CuspKind {
    fn from_orders(p: u32, q: u32) -> CuspKind {
        match (p, q) {
            (2, 3) => CuspKind::Semicubical,
            (2, 4) => CuspKind::Ramphoid,
            _ => CuspKind::Higher { p, q },
        }
    }

    pub fn label(&self) -> String {
        match self {
            CuspKind::Semicubical => "semicubical".into(),
            CuspKind::Ramphoid => "ramphoid".into(),
            CuspKind::Higher { p, q } => format!("higher({p},{q})"),
            CuspKind::Equilibrium => "equilibrium".into(),
        }
    }
}

/// Jet of a planar curve germ: `c_p t^p` along the tangent direction and
/// `c_q t^q` along its normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetFit {
    pub p: u32,
    pub q: u32,
    pub c_p: f64,
    pub c_q: f64,
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub slopes: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CuspReport {
    pub t_c: f64,
    pub q_c: Vec<f64>,
    pub kind: CuspKind,
    pub jet: Option<JetFit>,
    /// Angular velocity at the point; its vanishing selects the equilibrium branch.
    pub alpha_rate: f64,
    pub spectrum: Vec<Complex64>,
}

const WINDOW: (f64, f64) = (1e-3, 5e-2);
const PER_SIDE: usize = 40;

fn fit_times() -> Vec<f64> {
    let side = logspace(WINDOW.0, WINDOW.1, PER_SIDE);
    side.iter().rev().map(|t| -t).chain(side.iter().copied()).collect()
}

/// LS fit of `y = sum_k c_k t^(k0 + k)`, `k < terms`; returns the
/// coefficients and the relative residual.
fn poly_fit(t: &[f64], y: &[f64], k0: u32, terms: usize, scale: f64) -> Result<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(t.len(), terms, |i, j| (t[i] / scale).powi((k0 as usize + j) as i32));
    let b = DVector::from_column_slice(y);
    let c = lstsq(&a, &b)?;
    let r = (&a * &c - &b).norm() / b.norm().max(f64::MIN_POSITIVE);
    let c = c
        .iter()
        .enumerate()
        .map(|(j, v)| v / scale.powi((k0 as usize + j) as i32))
        .collect();
    Ok((c, r))
}

fn order_of(t: &[f64], y: &[f64]) -> Result<(u32, f64)> {
    let (h, e): (Vec<f64>, Vec<f64>) = t.iter().zip(y).filter(|(_, v)| v.abs() > 0.0).map(|(a, b)| (a.abs(), b.abs())).unzip();
    if h.len() < t.len() / 2 {
        return Err(Error::FitFailure("component vanishes on the fit window".into()));
    }
    let slope = fitted_order(&h, &e);
    let k = slope.round();
    if (slope - k).abs() > 0.2 || k < 1.0 {
        return Err(Error::FitFailure(format!("log-log slope {slope:.3} is not near an integer order")));
    }
    Ok((k as u32, slope))
}

/// Jet of the planar germ `t -> curve(t) - curve(0)` on the fit window.
pub fn fit_jet<F>(mut curve: F) -> Result<JetFit>
where
    F: FnMut(f64) -> Result<[f64; 2]>,
{
    let c0 = curve(0.0)?;
    let ts = fit_times();
    let mut dx = Vec::with_capacity(ts.len());
    let mut dy = Vec::with_capacity(ts.len());
    for t in &ts {
        let c = curve(*t)?;
        dx.push(c[0] - c0[0]);
        dy.push(c[1] - c0[1]);
    }
    // Tangent from the first non-negligible Taylor coefficient.
    let (cx, _) = poly_fit(&ts, &dx, 1, 6, WINDOW.1)?;
    let (cy, _) = poly_fit(&ts, &dy, 1, 6, WINDOW.1)?;
    let mags: Vec<f64> = (0..6)
        .map(|k| cx[k].hypot(cy[k]) * WINDOW.1.powi(k as i32 + 1))
        .collect();
    let big = mags.iter().cloned().fold(0.0, f64::max);
    if big == 0.0 {
        return Err(Error::FitFailure("curve is constant on the fit window".into()));
    }
    let k = mags.iter().position(|m| *m > 1e-3 * big).unwrap_or(0);
    let nrm = cx[k].hypot(cy[k]);
    let mut d = [cx[k] / nrm, cy[k] / nrm];
    let dom = if d[0].abs() >= d[1].abs() { d[0] } else { d[1] };
    if dom < 0.0 {
        d = [-d[0], -d[1]];
    }
    let e = [d[1], -d[0]];
    let along: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a * d[0] + b * d[1]).collect();
    let across: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a * e[0] + b * e[1]).collect();
    let (p, sp) = order_of(&ts, &along)?;
    let (q, sq) = order_of(&ts, &across)?;
    let (ca, ra) = poly_fit(&ts, &along, p, 3, WINDOW.1)?;
    let (cq, rq) = poly_fit(&ts, &across, q, 3, WINDOW.1)?;
    let residual = ra.max(rq);
    if residual > 0.1 {
        return Err(Error::FitFailure(format!("relative jet residual {residual:.3e}")));
    }
    Ok(JetFit {
        p,
        q,
        c_p: ca[0],
        c_q: cq[0],
        tangent: d,
        normal: e,
        slopes: [sp, sq],
        residual,
    })
}

/// Classifies the germ at `q_c` of the flow of a 3D field on `(x, y, alpha)`
/// whose third component is the angular velocity.
pub fn classify_flow(field: &ExprField, q_c: &[f64], rate_tol: f64, opts: &OdeOptions) -> Result<CuspReport> {
    if field.dim() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            found: field.dim(),
        });
    }
    let v = field.eval(q_c)?;
    let alpha_rate = v[2];
    if alpha_rate.abs() <= rate_tol {
        let j = field.jacobian(q_c)?;
        return Ok(CuspReport {
            t_c: 0.0,
            q_c: q_c.to_vec(),
            kind: CuspKind::Equilibrium,
            jet: None,
            alpha_rate,
            spectrum: eigenvalues3(&j).to_vec(),
        });
    }
    let mut rhs = |_: f64, q: &[f64], d: &mut [f64]| field.eval_into(q, d);
    let fwd = integrate(&mut rhs, 0.0, q_c, WINDOW.1 * 1.01, opts, &mut [])?;
    let bwd = integrate(&mut rhs, 0.0, q_c, -WINDOW.1 * 1.01, opts, &mut [])?;
    let jet = fit_jet(|t| {
        let q = if t >= 0.0 { fwd.at(t) } else { bwd.at(t) };
        Ok([q[0], q[1]])
    })?;
    Ok(CuspReport {
        t_c: 0.0,
        q_c: q_c.to_vec(),
        kind: CuspKind::from_orders(jet.p, jet.q),
        jet: Some(jet),
        alpha_rate,
        spectrum: Vec::new(),
    })
}

/// [`classify_flow`] for the singular flow of a Goh-extended system.
pub fn classify_cusp(goh: &AffineControlSystem, q_c: &[f64], opts: &OdeOptions) -> Result<CuspReport> {
    singular_control(goh, q_c)?;
    classify_flow(goh.singular_field()?, q_c, 1e-8, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGapReport {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub alpha2_prime: f64,
    pub gap: f64,
    pub matching_residual: Option<f64>,
}

/// Hyperbolic return time `t1` and angle `alpha2'` reaching `sigma_a(t0)`
/// from `sigma_a(t2)`, with the time gap `(-t1 - t2) - (-t0)`.
pub fn value_gap(t0: f64, t2: f64, delta: f64) -> Result<ValueGapReport> {
    if !(t0 < t2 && t2 < 0.0) {
        return Err(Error::InvalidInput(format!("need t0 < t2 < 0, got t0 = {t0}, t2 = {t2}")));
    }
    let sq = (t0 * t0 + t0 * t2 + t2 * t2).sqrt();
    let t1 = t2 - t0 - 2.0 * sq;
    Ok(ValueGapReport {
        t0,
        t1,
        t2,
        alpha2_prime: 0.5 * delta * (t0 * t0 - t2 * t2 - t1 * t1) / t1,
        gap: -t1 - t2 + t0,
        matching_residual: None,
    })
}

/// Distance between `sigma_a(t0)` and the end of the hyperbolic arc of
/// duration `t1` started at `(sigma_a(t2), alpha2')`, where `sigma_a` is
/// the abnormal geodesic through the cusp point 0 of the semi-normal problem.
pub fn matching_residual(coeffs: &SemiNormalCoeffs, t0: f64, t2: f64, opts: &OdeOptions) -> Result<f64> {
    let delta = coeffs.delta();
    if delta == 0.0 {
        return Err(Error::InvalidInput("matching needs delta != 0".into()));
    }
    let vg = value_gap(t0, t2, delta)?;
    let sys = build_seminormal(coeffs, 2)?.goh_extend()?;
    let xs = sys.singular_field()?;
    let flow = |q0: &[f64], t: f64| -> Result<Vec<f64>> {
        let sol = integrate(|_, q, d| xs.eval_into(q, d), 0.0, q0, t, opts, &mut [])
            .map_err(|e| Error::Integration(format!("near the collinear set: {e}")))?;
        Ok(sol.y_end().to_vec())
    };
    let q0 = flow(&[0.0, 0.0, 0.0], t0)?;
    let q2 = flow(&[0.0, 0.0, 0.0], t2)?;
    let end = flow(&[q2[0], q2[1], vg.alpha2_prime], vg.t1)?;
    Ok((end[0] - q0[0]).hypot(end[1] - q0[1]))
}

/// Crossings between non-adjacent segments of a planar polyline:
/// `(i, j, point)` for segments `i` and `j`.
pub fn self_intersections(pts: &[[f64; 2]]) -> Vec<(usize, usize, [f64; 2])> {
    let mut out = Vec::new();
    let n = pts.len();
    for i in 0..n.saturating_sub(1) {
        let (p, r) = (pts[i], [pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]]);
        for j in i + 2..n.saturating_sub(1) {
            let (q, s) = (pts[j], [pts[j + 1][0] - pts[j][0], pts[j + 1][1] - pts[j][1]]);
            let den = r[0] * s[1] - r[1] * s[0];
            if den == 0.0 {
                continue;
            }
            let w = [q[0] - p[0], q[1] - p[1]];
            let a = (w[0] * s[1] - w[1] * s[0]) / den;
            let b = (w[0] * r[1] - w[1] * r[0]) / den;
            if (0.0..1.0).contains(&a) && (0.0..1.0).contains(&b) {
                out.push((i, j, [p[0] + a * r[0], p[1] + a * r[1]]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_gap_reference_values() {
        let r = value_gap(-2.0, -1.0, 1.0).unwrap();
        assert!((r.t1 - (1.0 - 2.0 * 7f64.sqrt())).abs() < 1e-14);
        assert!((r.gap - (2.0 * 7f64.sqrt() - 2.0)).abs() < 1e-14);
        let s7 = 7f64.sqrt();
        assert!((r.alpha2_prime - 0.5 * (4.0 * s7 - 26.0) / (1.0 - 2.0 * s7)).abs() < 1e-14);
        assert!(value_gap(-1.0, -1.0, 1.0).is_err());
        assert!(value_gap(-1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn polyline_crossing() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let x = self_intersections(&pts);
        assert_eq!(x.len(), 1);
        assert!((x[0].2[0] - 0.5).abs() < 1e-15 && (x[0].2[1] - 0.5).abs() < 1e-15);
    }
}

//! McKeithan kinetic proofreading network in reduced coordinates `(x, y, v)`
//! with the temperature rate `v` lifted to a state (`v' = u`), and the
//! classification of terminal points on `N: x = d`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError, Result};
use crate::expr::Expr;
use crate::extremal::{AffineControlSystem, ControlBound};
use crate::geomkernel::{norm, ExprField};
use crate::numeric::{brent, det3};
use crate::synthesis::{codim1_case, sing_exc_case, Codim1Case, SingExcModel};

pub const VARS: [&str; 3] = ["x", "y", "v"];

const XDOT: &str = "-b2*x*v^a2 - b3*x*v^a3 - d3*v*(x + y) + d4*v + v*(x + y)^2";
const YDOT: &str = "b2*x*v^a2 - b4*y*v^a4";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McKeithanParams {
    /// `[beta2, beta3, beta4]`
    pub beta: [f64; 3],
    /// `[alpha2, alpha3, alpha4]`
    pub alpha: [f64; 3],
    /// `[delta1, delta2]`
    pub delta: [f64; 2],
    pub d: f64,
}

impl McKeithanParams {
    pub fn delta3(&self) -> f64 {
        self.delta[0] + self.delta[1]
    }

    pub fn delta4(&self) -> f64 {
        self.delta[0] * self.delta[1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return bad(format!("beta must be finite and >= 0, got {:?}", self.beta));
        }
        if self.alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return bad(format!("alpha must be finite and > 0, got {:?}", self.alpha));
        }
        if self.delta.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return bad(format!("delta must be finite and > 0, got {:?}", self.delta));
        }
        if !(self.d > 0.0 && self.d < self.delta[0]) {
            return bad(format!("need 0 < d < delta1, got d = {}", self.d));
        }
        Ok(())
    }

    fn table(&self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        for (k, v) in ["b2", "b3", "b4"].iter().zip(self.beta) {
            p.insert(k.to_string(), v);
        }
        for (k, v) in ["a2", "a3", "a4"].iter().zip(self.alpha) {
            p.insert(k.to_string(), v);
        }
        p.insert("d3".into(), self.delta3());
        p.insert("d4".into(), self.delta4());
        p
    }

    fn fractional(&self) -> bool {
        self.alpha.iter().any(|a| a.fract() != 0.0)
    }
}

fn check_state(params: &McKeithanParams, q: &[f64; 3]) -> Result<()> {
    if q[2] < 0.0 && params.fractional() {
        return Err(Error::InvalidInput(format!(
            "v = {} < 0 with non-integer exponents {:?}",
            q[2], params.alpha
        )));
    }
    Ok(())
}

/// Reports which coordinates leave the box `0 <= x <= delta1`,
/// `0 <= y <= delta2`, `v >= 0`. Empty when inside.
pub fn box_violations(params: &McKeithanParams, q: &[f64; 3]) -> Vec<String> {
    let mut out = Vec::new();
    if !(0.0..=params.delta[0]).contains(&q[0]) {
        out.push(format!("x = {} outside [0, {}]", q[0], params.delta[0]));
    }
    if !(0.0..=params.delta[1]).contains(&q[1]) {
        out.push(format!("y = {} outside [0, {}]", q[1], params.delta[1]));
    }
    if q[2] < 0.0 {
        out.push(format!("v = {} < 0", q[2]));
    }
    out
}

fn eval(e: &Expr, q: &[f64]) -> Result<f64> {
    e.eval(q).map_err(|source| Error::Eval { component: 0, source })
}

/// Drift `X = (x', y', 0)` at `q`. The control field is `Y = d/dv`.
pub fn reduced_dynamics(params: &McKeithanParams, q: &[f64; 3]) -> Result<[f64; 3]> {
    check_state(params, q)?;
    let f = drift_field(params)?;
    let v = f.eval(q)?;
    Ok([v[0], v[1], v[2]])
}

fn drift_field(params: &McKeithanParams) -> Result<ExprField> {
    ExprField::parse(&[XDOT, YDOT, "0"], &VARS, &params.table())
}

/// `q' = X + u Y`, `|u| <= 1`, `Y = d/dv`.
pub fn affine_lift(params: &McKeithanParams) -> Result<AffineControlSystem> {
    AffineControlSystem::new(
        drift_field(params)?,
        ExprField::coordinate(&VARS, 2),
        ControlBound::Unit,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetGrid {
    pub y_min: f64,
    pub y_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub ny: usize,
    pub nv: usize,
}

impl TargetGrid {
    /// `n x n` nodes over `0 <= y <= delta2`, `0 <= v <= v_max`.
    pub fn over_box(params: &McKeithanParams, v_max: f64, n: usize) -> TargetGrid {
        TargetGrid {
            y_min: 0.0,
            y_max: params.delta[1],
            v_min: 0.0,
            v_max,
            ny: n,
            nv: n,
        }
    }

    pub fn validate(&self, params: &McKeithanParams) -> Result<()> {
        if self.ny < 2 || self.nv < 2 {
            return Err(Error::InvalidInput(format!("grid needs >= 2 nodes per axis, got {}x{}", self.ny, self.nv)));
        }
        if !(self.y_min < self.y_max && self.v_min < self.v_max) {
            return Err(Error::InvalidInput("grid bounds must be increasing".into()));
        }
        if self.y_min < 0.0 || self.y_max > params.delta[1] || self.v_min < 0.0 || !self.v_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid must lie in 0 <= y <= {}, v >= 0",
                params.delta[1]
            )));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    pub fn y_axis(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.ny)
    }

    pub fn v_axis(&self) -> Vec<f64> {
        Self::axis(self.v_min, self.v_max, self.nv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocusPoint {
    pub y: f64,
    pub v: f64,
    /// `x'` at the located point.
    pub n_x: f64,
}

/// Zero set of `x'(d, y, v)` on the grid: exact zeros at nodes plus one
/// bisected root per grid edge with a sign change.
pub fn exceptional_locus_on_target(params: &McKeithanParams, grid: &TargetGrid) -> Result<Vec<LocusPoint>> {
    params.validate()?;
    grid.validate(params)?;
    let xdot = Expr::parse(XDOT, &VARS, &params.table())?;
    let d = params.d;
    let g = |y: f64, v: f64| eval(&xdot, &[d, y, v]);
    let ys = grid.y_axis();
    let vs = grid.v_axis();
    let vals: Vec<Vec<f64>> = vs
        .par_iter()
        .map(|&v| ys.iter().map(|&y| g(y, v)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<LocusPoint>> = (0..vs.len())
        .into_par_iter()
        .map(|j| -> Result<Vec<LocusPoint>> {
            let mut pts = Vec::new();
            let v = vs[j];
            for i in 0..ys.len() {
                let f = vals[j][i];
                if f == 0.0 {
                    pts.push(LocusPoint { y: ys[i], v, n_x: 0.0 });
                    continue;
                }
                if i + 1 < ys.len() && f * vals[j][i + 1] < 0.0 {
                    let y = brent(|y| g(y, v), ys[i], ys[i + 1], 1e-15)?;
                    pts.push(LocusPoint { y, v, n_x: g(y, v)? });
                }
                if j + 1 < vs.len() && f * vals[j + 1][i] < 0.0 {
                    let y = ys[i];
                    let vr = brent(|v| g(y, v), v, vs[j + 1], 1e-15)?;
                    pts.push(LocusPoint { y, v: vr, n_x: g(y, vr)? });
                }
            }
            Ok(pts)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TerminalTag {
    Ordinary,
    BangExceptionalCodim1 { case: Codim1Case, x2: f64 },
    BangExceptionalCodim2,
    SingularExceptional { case_id: u8, model: SingExcModel },
    Degenerate { reason: String },
    NonDifferentiable { reason: String },
}

impl TerminalTag {
    pub fn label(&self) -> String {
        match self {
            TerminalTag::Ordinary => "ordinary".into(),
            TerminalTag::BangExceptionalCodim1 { case, .. } => format!(
                "bang-exceptional/codim-1/case-{}",
                if *case == Codim1Case::Case1 { 1 } else { 2 }
            ),
            TerminalTag::BangExceptionalCodim2 => "bang-exceptional/codim-2".into(),
            TerminalTag::SingularExceptional { case_id, .. } => format!("singular-exceptional/case-{case_id}"),
            TerminalTag::Degenerate { .. } => "degenerate".into(),
            TerminalTag::NonDifferentiable { .. } => "non-differentiable".into(),
        }
    }
}

/// Classification of a point of N with the quantities it was decided on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalClass {
    pub y: f64,
    pub v: f64,
    pub tag: TerminalTag,
    /// `n . X`
    pub n_x: f64,
    /// `n . [Y,X]`, equal to `-dx'/dv`
    pub n_yx: f64,
    /// `det(X, Y, [Y,X])`, bang exceptional genericity
    pub det_xy_yx: Option<f64>,
    /// `det(Y, [Y,X], [Y,[Y,X]])`, singular exceptional genericity
    pub det_y_yx_yyx: Option<f64>,
}

fn non_differentiable(e: Error, what: &str, out: TerminalClass) -> Result<TerminalClass> {
    match e {
        Error::Eval {
            source: EvalError::DivisionByZero | EvalError::NonFinite,
            ..
        } => Ok(TerminalClass {
            tag: TerminalTag::NonDifferentiable {
                reason: format!("{what} undefined at v = {}: {e}", out.v),
            },
            ..out
        }),
        e => Err(e),
    }
}

/// Places the point `(d, y, v)` of N into one of the local models.
/// Quantities below `tol * scale` count as zero.
pub fn classify_terminal_point(params: &McKeithanParams, y: f64, v: f64, tol: f64) -> Result<TerminalClass> {
    params.validate()?;
    if !(0.0..=params.delta[1]).contains(&y) || v < 0.0 {
        return Err(Error::InvalidInput(format!(
            "point (y, v) = ({y}, {v}) outside the state box"
        )));
    }
    let sys = affine_lift(params)?;
    let q = [params.d, y, v];
    let x = sys.x().eval(&q)?;
    let mut out = TerminalClass {
        y,
        v,
        tag: TerminalTag::Ordinary,
        n_x: x[0],
        n_yx: f64::NAN,
        det_xy_yx: None,
        det_y_yx_yyx: None,
    };
    if out.n_x.abs() > tol * (1.0 + norm(&x)) {
        return Ok(out);
    }
    let yx = match sys.bracket_yx()?.eval(&q) {
        Ok(b) => [b[0], b[1], b[2]],
        Err(e) => return non_differentiable(e, "[Y,X]", out),
    };
    out.n_yx = yx[0];
    let yv = [0.0, 0.0, 1.0];
    let x3 = [x[0], x[1], x[2]];
    if yx[0].abs() > tol * (1.0 + norm(&yx)) {
        let det = det3(&x3, &yv, &yx);
        out.det_xy_yx = Some(det);
        if det.abs() <= tol * (1.0 + norm(&x) * norm(&yx)) {
            out.tag = TerminalTag::Degenerate {
                reason: format!("det(X, Y, [Y,X]) = {det:e}"),
            };
            return Ok(out);
        }
        // Second derivative of x along sigma_u is L_X x' + u dx'/dv, and
        // dx'/dv = -n.[Y,X].
        let lx = eval(&sys.x().lie_derivative(sys.x().component(0)), &q)?;
        let x2 = (lx / yx[0]).abs();
        out.tag = if (x2 - 1.0).abs() <= tol * (1.0 + x2) {
            TerminalTag::BangExceptionalCodim2
        } else {
            TerminalTag::BangExceptionalCodim1 {
                case: codim1_case(x2, tol)?,
                x2,
            }
        };
        return Ok(out);
    }
    let table = match sys.table(&q) {
        Ok(t) => t,
        Err(e) => return non_differentiable(e, "second brackets", out),
    };
    // [Y,[Y,X]] = -[[Y,X],Y]
    let yyx = table.yxy.map(|c| -c);
    let det = det3(&yv, &yx, &yyx);
    out.det_y_yx_yyx = Some(det);
    if det.abs() <= table.degeneracy_threshold().max(tol) {
        out.tag = TerminalTag::Degenerate {
            reason: format!("det(Y, [Y,X], [Y,[Y,X]]) = {det:e}"),
        };
        return Ok(out);
    }
    let lambda = 2.0 / yyx[0];
    let lx = eval(&sys.x().lie_derivative(sys.x().component(0)), &q)?;
    let b = lambda * lx;
    let c = 0.0;
    let us = -table.d_prime / table.d;
    let model = SingExcModel::new(b, 2.0 * (us + c), c);
    out.tag = match sing_exc_case(&model, tol) {
        Ok(case_id) => TerminalTag::SingularExceptional { case_id, model },
        Err(Error::Degenerate(reason)) => TerminalTag::Degenerate { reason },
        Err(e) => return Err(e),
    };
    Ok(out)
}

/// Points of N where `x'` and `dx'/dv` vanish together, located by Newton
/// from grid cells where both change sign.
pub fn singular_exceptional_points(params: &McKeithanParams, grid: &TargetGrid) -> Result<Vec<[f64; 2]>> {
    params.validate()?;
    grid.validate(params)?;
    let f = Expr::parse(XDOT, &VARS, &params.table())?;
    let fv = f.diff(2);
    let (fy, fvy, fvv) = (f.diff(1), fv.diff(1), fv.diff(2));
    let d = params.d;
    let at = |e: &Expr, y: f64, v: f64| eval(e, &[d, y, v]);
    let ys = grid.y_axis();
    let vs = grid.v_axis();
    let corner = |y: f64, v: f64| -> Option<(f64, f64)> { Some((at(&f, y, v).ok()?, at(&fv, y, v).ok()?)) };
    let mut seeds = Vec::new();
    for j in 0..vs.len() - 1 {
        for i in 0..ys.len() - 1 {
            let cs: Option<Vec<(f64, f64)>> = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
                .iter()
                .map(|&(a, b)| corner(ys[a], vs[b]))
                .collect();
            let Some(cs) = cs else { continue };
            let changes = |k: fn(&(f64, f64)) -> f64| {
                let lo = cs.iter().map(k).fold(f64::INFINITY, f64::min);
                let hi = cs.iter().map(k).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if changes(|c| c.0) && changes(|c| c.1) {
                seeds.push((0.5 * (ys[i] + ys[i + 1]), 0.5 * (vs[j] + vs[j + 1])));
            }
        }
    }
    let mut out: Vec<[f64; 2]> = Vec::new();
    let (dy, dv) = (ys[1] - ys[0], vs[1] - vs[0]);
    for (mut y, mut v) in seeds {
        let mut ok = false;
        for _ in 0..50 {
            let (Ok(a), Ok(b)) = (at(&f, y, v), at(&fv, y, v)) else { break };
            let (Ok(j11), Ok(j12), Ok(j21), Ok(j22)) = (at(&fy, y, v), at(&fv, y, v), at(&fvy, y, v), at(&fvv, y, v))
            else {
                break;
            };
            let det = j11 * j22 - j12 * j21;
            if det == 0.0 {
                break;
            }
            let sy = (a * j22 - b * j12) / det;
            let sv = (j11 * b - j21 * a) / det;
            y -= sy;
            v -= sv;
            if v <= 0.0 {
                break;
            }
            if sy.abs() <= 1e-15 * (1.0 + y.abs()) && sv.abs() <= 1e-15 * (1.0 + v.abs()) {
                ok = true;
                break;
            }
        }
        let inside = y >= grid.y_min && y <= grid.y_max && v >= grid.v_min && v <= grid.v_max;
        if ok && inside && !out.iter().any(|p| (p[0] - y).abs() < dy && (p[1] - v).abs() < dv) {
            out.push([y, v]);
        }
    }
    Ok(out)
}

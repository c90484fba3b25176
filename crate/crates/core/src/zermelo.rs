//! Zermelo navigation in isothermal and revolution charts: frames, the
//! extended (Goh) affine system, direct extremals of the true Hamiltonian,
//! current regimes and the semi-normal cusp family.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::extremal::{AffineControlSystem, ArcClass, ControlBound};
use crate::geomkernel::{dot, norm, ExprField};
use crate::numeric::brent;
use crate::ode::{integrate, OdeOptions, Solution};

/// Problems that provide a current `F0` and a g-orthonormal frame `(F1, F2)`
/// on a 2D chart.
pub trait Navigation {
    fn state_names(&self) -> [&'static str; 2];

    /// `[F0, F1, F2]`, each a 2D field over [`Navigation::state_names`].
    fn frame(&self) -> [ExprField; 3];

    /// Extended system on `(q, alpha)`: `X = F0 + cos(alpha) F1 + sin(alpha) F2`,
    /// `Y = d/d alpha`, with unbounded control.
    fn goh_extend(&self) -> Result<AffineControlSystem> {
        let [s0, s1] = self.state_names();
        let vars = [s0, s1, "alpha"];
        let [f0, f1, f2] = self.frame();
        let alpha = Expr::var(2);
        let (ca, sa) = (alpha.cos(), alpha.sin());
        let comps = (0..2)
            .map(|i| {
                f0.component(i)
                    .add(&ca.mul(f1.component(i)))
                    .add(&sa.mul(f2.component(i)))
            })
            .chain(std::iter::once(Expr::zero()))
            .collect();
        let x = ExprField::new(&vars, comps);
        let y = ExprField::coordinate(&vars, 2);
        AffineControlSystem::new(x, y, ControlBound::Unbounded)
    }
}

fn field2(names: [&str; 2], c0: Expr, c1: Expr) -> ExprField {
    ExprField::new(&names, vec![c0, c1])
}

/// Isothermal metric `a (dx^2 + dy^2)` with current `b d/dx + c d/dy`.
#[derive(Clone, Debug)]
pub struct ZermeloProblem {
    pub a: Expr,
    pub b: Expr,
    pub c: Expr,
}

impl ZermeloProblem {
    pub const VARS: [&'static str; 2] = ["x", "y"];

    pub fn parse(a: &str, b: &str, c: &str) -> Result<ZermeloProblem> {
        let params = BTreeMap::new();
        let v = Self::VARS;
        Ok(ZermeloProblem {
            a: Expr::parse(a, &v, &params)?,
            b: Expr::parse(b, &v, &params)?,
            c: Expr::parse(c, &v, &params)?,
        })
    }

    /// Flat metric with the shear current `y d/dx`.
    pub fn historical() -> ZermeloProblem {
        ZermeloProblem::parse("1", "y", "0").expect("static expressions")
    }

    pub fn render(&self) -> [String; 3] {
        let names: Vec<String> = Self::VARS.iter().map(|s| s.to_string()).collect();
        [self.a.render(&names), self.b.render(&names), self.c.render(&names)]
    }
}

impl Navigation for ZermeloProblem {
    fn state_names(&self) -> [&'static str; 2] {
        Self::VARS
    }

    fn frame(&self) -> [ExprField; 3] {
        let v = Self::VARS;
        let s = Expr::one().div(&self.a.sqrt());
        [
            field2(v, self.b.clone(), self.c.clone()),
            field2(v, s.clone(), Expr::zero()),
            field2(v, Expr::zero(), s),
        ]
    }
}

/// Surface of revolution `dr^2 + m(r)^2 dtheta^2` with current `mu(r) d/dtheta`.
#[derive(Clone, Debug)]
pub struct RevolutionProblem {
    pub m: Expr,
    pub mu: Expr,
}

impl RevolutionProblem {
    pub const VARS: [&'static str; 2] = ["r", "theta"];

    /// Both profiles must depend on `r` only.
    pub fn parse(m: &str, mu: &str) -> Result<RevolutionProblem> {
        let params = BTreeMap::new();
        Ok(RevolutionProblem {
            m: Expr::parse(m, &["r"], &params)?,
            mu: Expr::parse(mu, &["r"], &params)?,
        })
    }
}

impl Navigation for RevolutionProblem {
    fn state_names(&self) -> [&'static str; 2] {
        Self::VARS
    }

    fn frame(&self) -> [ExprField; 3] {
        let v = Self::VARS;
        [
            field2(v, Expr::zero(), self.mu.clone()),
            field2(v, Expr::one(), Expr::zero()),
            field2(v, Expr::zero(), Expr::one().div(&self.m)),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Strong,
    Weak,
    Moderate,
}

/// `|F0|_g` at `q` and its comparison with 1.
pub fn current_regime<P: Navigation>(prob: &P, q: &[f64]) -> Result<(Regime, f64)> {
    let [f0, f1, f2] = prob.frame();
    let (v0, v1, v2) = (f0.eval(q)?, f1.eval(q)?, f2.eval(q)?);
    // Solve F0 = c1 F1 + c2 F2.
    let det = v1[0] * v2[1] - v1[1] * v2[0];
    if det == 0.0 {
        return Err(Error::Degenerate("frame is singular".into()));
    }
    let c1 = (v0[0] * v2[1] - v0[1] * v2[0]) / det;
    let c2 = (v1[0] * v0[1] - v1[1] * v0[0]) / det;
    let n = c1.hypot(c2);
    let regime = if (n - 1.0).abs() <= 1e-12 {
        Regime::Moderate
    } else if n > 1.0 {
        Regime::Strong
    } else {
        Regime::Weak
    };
    Ok((regime, n))
}

/// Euclidean norm of `F0 + cos(alpha) F1 + sin(alpha) F2` at `q`; zeros are
/// the points where the extended field vanishes.
pub fn collinear_residual<P: Navigation>(prob: &P, q: &[f64], alpha: f64) -> Result<f64> {
    let [f0, f1, f2] = prob.frame();
    let (v0, v1, v2) = (f0.eval(q)?, f1.eval(q)?, f2.eval(q)?);
    let (ca, sa) = (alpha.cos(), alpha.sin());
    Ok((0..2).map(|i| (v0[i] + ca * v1[i] + sa * v2[i]).powi(2)).sum::<f64>().sqrt())
}

/// Maximized Hamiltonian `H0 + sqrt(H1^2 + H2^2)`.
pub fn max_hamiltonian<P: Navigation>(prob: &P, q: &[f64], p: &[f64]) -> Result<f64> {
    let [f0, f1, f2] = prob.frame();
    let h0 = dot(p, &f0.eval(q)?);
    let h1 = dot(p, &f1.eval(q)?);
    let h2 = dot(p, &f2.eval(q)?);
    Ok(h0 + h1.hypot(h2))
}

/// Unit covectors with `M(q, p) = 0`, found by scanning the covector angle.
pub fn abnormal_covectors<P: Navigation>(prob: &P, q: &[f64]) -> Result<Vec<[f64; 2]>> {
    let m = |phi: f64| max_hamiltonian(prob, q, &[phi.cos(), phi.sin()]);
    let n = 720;
    let mut out = Vec::new();
    let (mut a, mut fa) = (0.0f64, m(0.0)?);
    for k in 1..=n {
        let b = 2.0 * PI * k as f64 / n as f64;
        let fb = m(b)?;
        if fa == 0.0 {
            out.push([a.cos(), a.sin()]);
        } else if fa * fb < 0.0 {
            let r = brent(m, a, b, 1e-15)?;
            out.push([r.cos(), r.sin()]);
        }
        (a, fa) = (b, fb);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectSample {
    pub t: f64,
    pub q: [f64; 2],
    pub p: [f64; 2],
    /// Heading `atan2(H2, H1)` of the maximizing control.
    pub alpha: f64,
    pub m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectArc {
    pub samples: Vec<DirectSample>,
    pub klass: ArcClass,
    pub m: f64,
    pub m_drift: f64,
    #[serde(skip)]
    pub solution: Option<Solution>,
}

impl DirectArc {
    /// State (q, p) at time `t` from the continuous extension.
    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        self.solution.as_ref().map(|s| s.at(t))
    }
}

struct FrameData {
    f: [ExprField; 3],
}

impl FrameData {
    fn rhs(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        let (q, p) = z.split_at(2);
        let v: Vec<Vec<f64>> = self.f.iter().map(|f| f.eval(q)).collect::<Result<_>>()?;
        let h: Vec<f64> = v.iter().map(|vi| dot(p, vi)).collect();
        let r = h[1].hypot(h[2]);
        if r < 1e-10 {
            return Err(Error::VanishingTransversePart(r * r));
        }
        let (w1, w2) = (h[1] / r, h[2] / r);
        for i in 0..2 {
            out[i] = v[0][i] + w1 * v[1][i] + w2 * v[2][i];
        }
        let j: Vec<_> = self.f.iter().map(|f| f.jacobian(q)).collect::<Result<_>>()?;
        for k in 0..2 {
            let d = |m: &nalgebra::DMatrix<f64>| p[0] * m[(0, k)] + p[1] * m[(1, k)];
            out[2 + k] = -(d(&j[0]) + w1 * d(&j[1]) + w2 * d(&j[2]));
        }
        Ok(())
    }

    fn sample(&self, t: f64, z: &[f64]) -> Result<DirectSample> {
        let (q, p) = z.split_at(2);
        let h: Vec<f64> = self
            .f
            .iter()
            .map(|f| Ok(dot(p, &f.eval(q)?)))
            .collect::<Result<_>>()?;
        Ok(DirectSample {
            t,
            q: [q[0], q[1]],
            p: [p[0], p[1]],
            alpha: h[2].atan2(h[1]),
            m: h[0] + h[1].hypot(h[2]),
        })
    }
}

/// Integrates the true-Hamiltonian extremal flow from `(q0, p0)`.
pub fn direct_extremal<P: Navigation>(
    prob: &P,
    q0: [f64; 2],
    p0: [f64; 2],
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<DirectArc> {
    let fd = FrameData { f: prob.frame() };
    let pn = norm(&p0);
    if pn == 0.0 {
        return Err(Error::InvalidInput("adjoint vector must be nonzero".into()));
    }
    let z0 = [q0[0], q0[1], p0[0], p0[1]];
    let sol = integrate(|_, z, d| fd.rhs(z, d), span.0, &z0, span.1, opts, &mut [])?;
    let samples = sol
        .t
        .iter()
        .zip(&sol.y)
        .map(|(t, z)| fd.sample(*t, z))
        .collect::<Result<Vec<_>>>()?;
    let m0 = samples[0].m;
    let m_drift = samples.iter().map(|s| (s.m - m0).abs()).fold(0.0, f64::max);
    Ok(DirectArc {
        klass: ArcClass::from_level(m0 / pn, 1e-8),
        m: m0,
        m_drift,
        samples,
        solution: Some(sol),
    })
}

/// `(max |p_theta(t) - p_theta(0)|, max |p_theta (mu + 1/(m sin(alpha))) - M|)`,
/// the second taken where `|sin(alpha)| >= 0.1`.
pub fn clairaut_residual(prob: &RevolutionProblem, arc: &DirectArc) -> Result<(f64, f64)> {
    let pt0 = arc.samples[0].p[1];
    let mut drift: f64 = 0.0;
    let mut eq: f64 = 0.0;
    for s in &arc.samples {
        drift = drift.max((s.p[1] - pt0).abs());
        let sa = s.alpha.sin();
        if sa.abs() >= 0.1 {
            let r = [s.q[0]];
            let m = prob.m.eval(&r).map_err(|source| Error::Eval { component: 0, source })?;
            let mu = prob.mu.eval(&r).map_err(|source| Error::Eval { component: 1, source })?;
            eq = eq.max((s.p[1] * (mu + 1.0 / (m * sa)) - s.m).abs());
        }
    }
    Ok((drift, eq))
}

/// Quadratic polynomial `sum c_ij x^i y^j`, `i + j <= 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    #[serde(rename = "00", default)]
    pub c00: f64,
    #[serde(rename = "10", default)]
    pub c10: f64,
    #[serde(rename = "01", default)]
    pub c01: f64,
    #[serde(rename = "20", default)]
    pub c20: f64,
    #[serde(rename = "11", default)]
    pub c11: f64,
    #[serde(rename = "02", default)]
    pub c02: f64,
}

impl Poly2 {
    pub fn constant(c: f64) -> Poly2 {
        Poly2 {
            c00: c,
            ..Default::default()
        }
    }

    fn terms(&self) -> [(usize, usize, f64); 6] {
        [
            (0, 0, self.c00),
            (1, 0, self.c10),
            (0, 1, self.c01),
            (2, 0, self.c20),
            (1, 1, self.c11),
            (0, 2, self.c02),
        ]
    }

    /// Polynomial truncated at total degree `k`, over variables 0 (x) and 1 (y).
    pub fn to_expr(&self, k: usize) -> Expr {
        let (x, y) = (Expr::var(0), Expr::var(1));
        self.terms()
            .iter()
            .filter(|(i, j, c)| i + j <= k && *c != 0.0)
            .fold(Expr::zero(), |acc, (i, j, c)| {
                acc.add(&Expr::constant(*c).mul(&x.powi(*i as i32)).mul(&y.powi(*j as i32)))
            })
    }
}

/// Jet coefficients of `a`, `b`, `c` at the normalized cusp point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiNormalCoeffs {
    pub a: Poly2,
    pub b: Poly2,
    pub c: Poly2,
}

impl Default for SemiNormalCoeffs {
    fn default() -> Self {
        SemiNormalCoeffs {
            a: Poly2::constant(1.0),
            b: Poly2::constant(-1.0),
            c: Poly2::default(),
        }
    }
}

impl SemiNormalCoeffs {
    pub fn delta(&self) -> f64 {
        self.a.c01 / 2.0 - self.b.c01
    }

    pub fn kappa1(&self) -> f64 {
        -self.a.c11 / 2.0 + 3.0 * self.b.c01 * self.b.c10 + self.b.c11
    }

    pub fn kappa2(&self) -> f64 {
        -self.a.c02 + 3.0 * self.b.c01.powi(2) + 2.0 * self.b.c02
    }

    pub fn kappa2_prime(&self) -> f64 {
        -self.a.c20 + 3.0 * self.b.c10.powi(2) + 2.0 * self.b.c20
    }

    /// Checks `a00 = 1`, `b00 = -1`, `c00 = 0`, `a10 = 2 b10`.
    pub fn check_normalization(&self) -> Result<()> {
        let tol = 1e-12;
        if (self.a.c00 - 1.0).abs() > tol {
            return Err(Error::Normalization(format!("a00 = 1 (got {})", self.a.c00)));
        }
        if (self.b.c00 + 1.0).abs() > tol {
            return Err(Error::Normalization(format!("b00 = -1 (got {})", self.b.c00)));
        }
        if self.c.c00.abs() > tol {
            return Err(Error::Normalization(format!("c00 = 0 (got {})", self.c.c00)));
        }
        if (self.a.c10 - 2.0 * self.b.c10).abs() > tol {
            return Err(Error::Normalization(format!(
                "a10 = 2 b10 (got a10 = {}, b10 = {})",
                self.a.c10, self.b.c10
            )));
        }
        Ok(())
    }
}

/// Polynomial Zermelo problem from normalized jet coefficients, truncated at
/// order `k` (at most 2).
pub fn build_seminormal(coeffs: &SemiNormalCoeffs, k: usize) -> Result<ZermeloProblem> {
    coeffs.check_normalization()?;
    let k = k.min(2);
    Ok(ZermeloProblem {
        a: coeffs.a.to_expr(k),
        b: coeffs.b.to_expr(k),
        c: coeffs.c.to_expr(k),
    })
}

/// Second-order truncation at `alpha = 0` of the abnormal flow of the
/// historical problem in the shifted coordinate `Y = y + 1`, over
/// `(x, Y, alpha)`.
pub fn historical_truncated_flow() -> ExprField {
    crate::geomkernel::parse_field(&["Y - alpha^2/2", "alpha", "-1 + alpha^2"], &["x", "Y", "alpha"])
        .expect("static expressions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn historical_goh_system() {
        let sys = ZermeloProblem::historical().goh_extend().unwrap();
        let x = sys.x().eval(&[0.3, 0.2, 0.7]).unwrap();
        assert!((x[0] - (0.2 + 0.7f64.cos())).abs() < 1e-15);
        assert!((x[1] - 0.7f64.sin()).abs() < 1e-15);
        assert_eq!(x[2], 0.0);
        assert_eq!(sys.y().eval(&[0.3, 0.2, 0.7]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn revolution_rejects_theta() {
        assert!(RevolutionProblem::parse("1 + theta", "r").is_err());
    }

    #[test]
    fn regimes_of_historical_current() {
        let h = ZermeloProblem::historical();
        assert_eq!(current_regime(&h, &[0.0, -2.0]).unwrap(), (Regime::Strong, 2.0));
        assert_eq!(current_regime(&h, &[0.0, 0.0]).unwrap(), (Regime::Weak, 0.0));
        assert_eq!(current_regime(&h, &[5.0, 1.0]).unwrap(), (Regime::Moderate, 1.0));
    }

    #[test]
    fn normalization_checks() {
        let mut c = SemiNormalCoeffs::default();
        c.a.c10 = 1.0;
        c.b.c10 = 0.5;
        assert!(build_seminormal(&c, 2).is_ok());
        c.b.c10 = 0.0;
        assert!(matches!(build_seminormal(&c, 2), Err(Error::Normalization(_))));
        let mut d = SemiNormalCoeffs::default();
        d.a.c01 = 2.0;
        assert_eq!(d.delta(), 1.0);
    }
}

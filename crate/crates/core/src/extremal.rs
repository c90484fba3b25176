//! Maximum-principle flows for `q' = X(q) + u Y(q)`: bang arcs with switch
//! detection, singular feedback `u_s = -D'/D`, classification and the
//! feedback pseudo-group action.

use std::sync::{Arc, OnceLock};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::geomkernel::{dot, norm, BracketFields, BracketTable, ExprField, PhasePoint};
use crate::numeric::{cross, linspace};
use crate::ode::{integrate, Event, OdeOptions, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlBound {
    /// |u| <= 1
    Unit,
    Unbounded,
}

#[derive(Debug)]
struct SingularData {
    brackets: BracketFields,
    us: Expr,
    us_tape: Tape,
    xs: ExprField,
}

/// Single-input affine pair (X, Y) with its control domain.
#[derive(Clone, Debug)]
pub struct AffineControlSystem {
    x: ExprField,
    y: ExprField,
    bound: ControlBound,
    yx: Arc<OnceLock<std::result::Result<(ExprField, ExprField), Error>>>,
    singular: Arc<OnceLock<std::result::Result<Arc<SingularData>, Error>>>,
}

impl AffineControlSystem {
    pub fn new(x: ExprField, y: ExprField, bound: ControlBound) -> Result<Self> {
        if x.dim() != y.dim() || x.vars().len() != y.vars().len() {
            return Err(Error::Dimension {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        Ok(AffineControlSystem {
            x,
            y,
            bound,
            yx: Arc::new(OnceLock::new()),
            singular: Arc::new(OnceLock::new()),
        })
    }

    pub fn x(&self) -> &ExprField {
        &self.x
    }

    pub fn y(&self) -> &ExprField {
        &self.y
    }

    pub fn bound(&self) -> ControlBound {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `([Y,X], [[Y,X],Y])` in any dimension.
    fn yx_fields(&self) -> Result<&(ExprField, ExprField)> {
        self.yx
            .get_or_init(|| {
                let yx = self.y.bracket(&self.x)?;
                let yxy = yx.bracket(&self.y)?;
                Ok((yx, yxy))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn bracket_yx(&self) -> Result<&ExprField> {
        Ok(&self.yx_fields()?.0)
    }

    fn singular_data(&self) -> Result<&SingularData> {
        self.singular
            .get_or_init(|| {
                let brackets = BracketFields::new(&self.x, &self.y)?;
                let (d, dp, _) = brackets.determinant_exprs();
                let us = dp.div(&d).neg();
                let us_tape = Tape::compile(std::slice::from_ref(&us));
                let xs = self.x.add(&self.y.scale(&us))?;
                Ok(Arc::new(SingularData {
                    brackets,
                    us,
                    us_tape,
                    xs,
                }))
            })
            .as_ref()
            .map(|a| a.as_ref())
            .map_err(Clone::clone)
    }

    pub fn brackets(&self) -> Result<&BracketFields> {
        Ok(&self.singular_data()?.brackets)
    }

    pub fn table(&self, q: &[f64]) -> Result<BracketTable> {
        self.brackets()?.table(q)
    }

    /// Symbolic singular feedback `-D'/D`.
    pub fn singular_feedback(&self) -> Result<&Expr> {
        Ok(&self.singular_data()?.us)
    }

    /// `X_s = X + u_s Y`.
    pub fn singular_field(&self) -> Result<&ExprField> {
        Ok(&self.singular_data()?.xs)
    }

    pub fn h_y(&self, z: &PhasePoint) -> Result<f64> {
        Ok(dot(&z.p, &self.y.eval(&z.q)?))
    }

    pub fn h_x(&self, z: &PhasePoint) -> Result<f64> {
        Ok(dot(&z.p, &self.x.eval(&z.q)?))
    }

    pub fn h_yx(&self, z: &PhasePoint) -> Result<f64> {
        Ok(dot(&z.p, &self.bracket_yx()?.eval(&z.q)?))
    }

    /// Hamiltonian vector field of `p.(X + u Y)` for a fixed `u`, written into `out`.
    fn hamiltonian_rhs(&self, u: f64, zs: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let (q, p) = zs.split_at(n);
        let xv = self.x.eval(q)?;
        let yv = self.y.eval(q)?;
        let jx = self.x.jacobian(q)?;
        let jy = self.y.jacobian(q)?;
        for i in 0..n {
            out[i] = xv[i] + u * yv[i];
        }
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += p[i] * (jx[(i, j)] + u * jy[(i, j)]);
            }
            out[n + j] = -s;
        }
        Ok(())
    }

    /// Hamiltonian flow with the singular feedback substituted for `u`.
    fn singular_hamiltonian_rhs(&self, zs: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let u = self.singular_data()?.us_tape.eval(&zs[..n])?[0];
        self.hamiltonian_rhs(u, zs, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularControl {
    pub u: f64,
    pub saturating: bool,
}

/// `u_s(q) = -D'(q)/D(q)`, rejecting points where D degenerates.
pub fn singular_control(sys: &AffineControlSystem, q: &[f64]) -> Result<SingularControl> {
    let t = sys.table(q)?;
    let thr = t.degeneracy_threshold();
    if t.d.abs() < thr {
        return Err(Error::DegenerateD { d: t.d, threshold: thr });
    }
    let u = -t.d_prime / t.d;
    Ok(SingularControl {
        u,
        saturating: sys.bound == ControlBound::Unit && u.abs() >= 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowStop {
    Completed,
    DegenerateD,
    Saturation,
}

#[derive(Clone, Debug)]
pub struct SingularTrajectory {
    pub solution: Solution,
    pub stop: FlowStop,
}

fn degeneracy_margin(sys: &AffineControlSystem, q: &[f64]) -> Result<f64> {
    let t = sys.table(q)?;
    Ok(t.d.abs() - t.degeneracy_threshold())
}

fn saturation_margin(sys: &AffineControlSystem, q: &[f64]) -> Result<f64> {
    let u = sys.singular_data()?.us_tape.eval(q)?[0];
    Ok(1.0 - u.abs())
}

/// Integrates `X_s` from `q0` over `span`, stopping on D degeneracy or, for
/// bounded control, on saturation.
pub fn singular_flow(
    sys: &AffineControlSystem,
    q0: &[f64],
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<SingularTrajectory> {
    let sc = singular_control(sys, q0)?;
    if sc.saturating {
        return Err(Error::SaturationReached(sc.u.abs()));
    }
    let xs = sys.singular_field()?;
    let mut events = vec![Event::new(|_, q: &[f64]| degeneracy_margin(sys, q)).terminal()];
    if sys.bound == ControlBound::Unit {
        events.push(Event::new(|_, q: &[f64]| saturation_margin(sys, q)).terminal());
    }
    let solution = integrate(|_, q, d| xs.eval_into(q, d), span.0, q0, span.1, opts, &mut events)?;
    let stop = match solution.terminated_by {
        None => FlowStop::Completed,
        Some(0) => FlowStop::DegenerateD,
        Some(_) => FlowStop::Saturation,
    };
    Ok(SingularTrajectory { solution, stop })
}

/// Covector on the singular constraint set: orthogonal to Y and [Y,X].
pub fn constraint_covector(sys: &AffineControlSystem, q: &[f64]) -> Result<Vec<f64>> {
    if sys.dim() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            found: sys.dim(),
        });
    }
    let y = sys.y.eval(q)?;
    let yx = sys.bracket_yx()?.eval(q)?;
    let p = cross(&y, &yx);
    let n = norm(&p);
    if n == 0.0 {
        return Err(Error::Degenerate("Y and [Y,X] are collinear".into()));
    }
    Ok(p.iter().map(|v| v / n).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    #[serde(rename = "bang+")]
    BangPlus,
    #[serde(rename = "bang-")]
    BangMinus,
    Singular,
}

impl ArcKind {
    pub fn label(self) -> &'static str {
        match self {
            ArcKind::BangPlus => "bang+",
            ArcKind::BangMinus => "bang-",
            ArcKind::Singular => "singular",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcClass {
    Hyperbolic,
    Elliptic,
    Exceptional,
}

impl ArcClass {
    pub fn label(self) -> &'static str {
        match self {
            ArcClass::Hyperbolic => "hyperbolic",
            ArcClass::Elliptic => "elliptic",
            ArcClass::Exceptional => "exceptional",
        }
    }

    /// Label from the Hamiltonian level normalized by `|p(0)|`.
    pub fn from_level(m_normalized: f64, tol: f64) -> ArcClass {
        if m_normalized.abs() <= tol {
            ArcClass::Exceptional
        } else if m_normalized > 0.0 {
            ArcClass::Hyperbolic
        } else {
            ArcClass::Elliptic
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub u: f64,
    pub h_y: f64,
    pub m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremalArc {
    pub samples: Vec<ArcSample>,
    pub kind: ArcKind,
    pub klass: ArcClass,
    /// Hamiltonian level at the first sample.
    pub m: f64,
    /// max |M(t) - M(t_0)| over the samples.
    pub m_drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchKind {
    Ordinary,
    Fold,
    Saturation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub q: Vec<f64>,
    pub kind: SwitchKind,
    pub h_y: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremalFlow {
    pub arcs: Vec<ExtremalArc>,
    pub switches: Vec<SwitchEvent>,
}

impl ExtremalFlow {
    pub fn max_drift(&self) -> f64 {
        self.arcs.iter().map(|a| a.m_drift).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct ExtremalOptions {
    pub ode: OdeOptions,
    pub max_switches_per_unit_time: f64,
    pub exceptional_tol: f64,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions {
            ode: OdeOptions::default(),
            max_switches_per_unit_time: 32.0,
            exceptional_tol: 1e-8,
        }
    }
}

fn arc_from_solution(
    sys: &AffineControlSystem,
    sol: &Solution,
    kind: ArcKind,
    u_of: &dyn Fn(&[f64]) -> Result<f64>,
    p0_norm: f64,
    tol: f64,
) -> Result<ExtremalArc> {
    let n = sys.dim();
    let mut samples = Vec::with_capacity(sol.t.len());
    for (t, zs) in sol.t.iter().zip(&sol.y) {
        let (q, p) = zs.split_at(n);
        let u = u_of(q)?;
        let z = PhasePoint::new(q.to_vec(), p.to_vec());
        let h_y = sys.h_y(&z)?;
        let m = sys.h_x(&z)? + u * h_y;
        samples.push(ArcSample {
            t: *t,
            q: q.to_vec(),
            p: p.to_vec(),
            u,
            h_y,
            m,
        });
    }
    let m0 = samples[0].m;
    let m_drift = samples.iter().map(|s| (s.m - m0).abs()).fold(0.0, f64::max);
    Ok(ExtremalArc {
        samples,
        kind,
        klass: ArcClass::from_level(m0 / p0_norm, tol),
        m: m0,
        m_drift,
    })
}

/// Bang-bang extremal flow with `u = sign(H_Y)`, split into arcs at the
/// zeros of `H_Y`.
pub fn extremal_flow(
    sys: &AffineControlSystem,
    z0: &PhasePoint,
    span: (f64, f64),
    opts: &ExtremalOptions,
) -> Result<ExtremalFlow> {
    if sys.bound != ControlBound::Unit {
        return Err(Error::InvalidInput("bang flow needs the bounded control domain".into()));
    }
    let n = sys.dim();
    let p0_norm = norm(&z0.p);
    if p0_norm == 0.0 {
        return Err(Error::InvalidInput("adjoint vector must be nonzero".into()));
    }
    let (t0, t1) = span;
    let dir = (t1 - t0).signum();
    let max_switches = ((opts.max_switches_per_unit_time * (t1 - t0).abs()).ceil() as usize).max(32);

    let pick_sign = |z: &PhasePoint| -> Result<f64> {
        let hy = sys.h_y(z)?;
        if hy.abs() > 1e-12 * norm(&z.p) {
            return Ok(hy.signum());
        }
        let d = dir * sys.h_yx(z)?;
        if d == 0.0 {
            return Err(Error::Degenerate("H_Y and its derivative vanish at the start".into()));
        }
        Ok(d.signum())
    };

    let mut u = pick_sign(z0)?;
    let mut t = t0;
    let mut zs: Vec<f64> = z0.q.iter().chain(&z0.p).copied().collect();
    let mut arcs = Vec::new();
    let mut switches = Vec::new();
    loop {
        let mut ev = Event::new(|_, z: &[f64]| {
            let yv = sys.y.eval(&z[..n])?;
            Ok(dot(&z[n..], &yv))
        })
        .terminal();
        ev.skip_start = true;
        let sol = integrate(
            |_, z, d| sys.hamiltonian_rhs(u, z, d),
            t,
            &zs,
            t1,
            &opts.ode,
            &mut [ev],
        )?;
        let kind = if u > 0.0 { ArcKind::BangPlus } else { ArcKind::BangMinus };
        let uu = u;
        arcs.push(arc_from_solution(sys, &sol, kind, &|_| Ok(uu), p0_norm, opts.exceptional_tol)?);
        if sol.terminated_by.is_none() {
            break;
        }
        if switches.len() >= max_switches {
            return Err(Error::Chattering(max_switches));
        }
        t = sol.t_end();
        zs = sol.y_end().to_vec();
        let z = PhasePoint::new(zs[..n].to_vec(), zs[n..].to_vec());
        let hyx = sys.h_yx(&z)?;
        let kind = if hyx.abs() <= 1e-9 * norm(&z.p) {
            SwitchKind::Fold
        } else {
            SwitchKind::Ordinary
        };
        debug!("switch at t = {t}, kind {kind:?}");
        switches.push(SwitchEvent {
            t,
            q: z.q.clone(),
            kind,
            h_y: sys.h_y(&z)?,
        });
        u = -u;
        if (t1 - t) * dir <= 0.0 {
            break;
        }
    }
    Ok(ExtremalFlow { arcs, switches })
}

/// Singular extremal: Hamiltonian flow with `u = u_s(q)`, initialized with
/// `p0` (use [`constraint_covector`] to start on the constraint set).
pub fn singular_extremal(
    sys: &AffineControlSystem,
    z0: &PhasePoint,
    span: (f64, f64),
    opts: &ExtremalOptions,
) -> Result<ExtremalArc> {
    let sc = singular_control(sys, &z0.q)?;
    if sc.saturating {
        return Err(Error::SaturationReached(sc.u.abs()));
    }
    let n = sys.dim();
    let zs: Vec<f64> = z0.q.iter().chain(&z0.p).copied().collect();
    let mut events = vec![Event::new(|_, z: &[f64]| degeneracy_margin(sys, &z[..n])).terminal()];
    if sys.bound == ControlBound::Unit {
        events.push(Event::new(|_, z: &[f64]| saturation_margin(sys, &z[..n])).terminal());
    }
    let sol = integrate(
        |_, z, d| sys.singular_hamiltonian_rhs(z, d),
        span.0,
        &zs,
        span.1,
        &opts.ode,
        &mut events,
    )?;
    let tape = &sys.singular_data()?.us_tape;
    arc_from_solution(
        sys,
        &sol,
        ArcKind::Singular,
        &|q| Ok(tape.eval(q)?[0]),
        norm(&z0.p),
        opts.exceptional_tol,
    )
}

/// Generalized Legendre-Clebsch value `p . [[Y,X],Y](q)`.
pub fn legendre_clebsch(sys: &AffineControlSystem, z: &PhasePoint) -> Result<f64> {
    Ok(dot(&z.p, &sys.yx_fields()?.1.eval(&z.q)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointClass {
    Hyperbolic,
    Elliptic,
    Exceptional,
}

/// Sign of D D'' with `|D''| <= tol` labelled exceptional.
pub fn classify_point(sys: &AffineControlSystem, q: &[f64], tol: f64) -> Result<PointClass> {
    let t = sys.table(q)?;
    let thr = t.degeneracy_threshold();
    if t.d.abs() < thr {
        return Err(Error::DegenerateD { d: t.d, threshold: thr });
    }
    Ok(if t.d_second.abs() <= tol {
        PointClass::Exceptional
    } else if t.d * t.d_second > 0.0 {
        PointClass::Hyperbolic
    } else {
        PointClass::Elliptic
    })
}

/// Diffeomorphism given by forward and inverse component expressions over
/// the same variable names.
#[derive(Clone, Debug)]
pub struct Diffeo {
    pub forward: ExprField,
    pub inverse: ExprField,
}

impl Diffeo {
    pub fn identity(vars: &[&str]) -> Diffeo {
        let comps: Vec<Expr> = (0..vars.len()).map(Expr::var).collect();
        let f = ExprField::new(vars, comps);
        Diffeo {
            forward: f.clone(),
            inverse: f,
        }
    }

    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.forward.eval(q)
    }

    /// `D phi(q) v`.
    pub fn pushforward(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let j = self.forward.jacobian(q)?;
        Ok((0..v.len()).map(|i| (0..v.len()).map(|k| j[(i, k)] * v[k]).sum()).collect())
    }
}

/// Feedback `u = alpha(q) + beta(q) v`.
#[derive(Clone, Debug)]
pub struct Feedback {
    pub alpha: Expr,
    pub beta: Expr,
}

impl Feedback {
    pub fn trivial() -> Feedback {
        Feedback {
            alpha: Expr::zero(),
            beta: Expr::one(),
        }
    }

    /// `u -> -u`.
    pub fn reflection() -> Feedback {
        Feedback {
            alpha: Expr::zero(),
            beta: Expr::constant(-1.0),
        }
    }
}

/// Axis-aligned working box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl WorkBox {
    pub fn cube(dim: usize, half: f64) -> WorkBox {
        WorkBox {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    /// Tensor grid with `k` points per axis.
    pub fn grid(&self, k: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.lo.iter().zip(&self.hi).map(|(a, b)| linspace(*a, *b, k)).collect();
        let mut pts = vec![vec![]];
        for ax in &axes {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    ax.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        pts
    }
}

/// Image of `sys` under the feedback `u = alpha + beta v` followed by the
/// change of coordinates `phi`.
pub fn conjugate_system(
    sys: &AffineControlSystem,
    phi: &Diffeo,
    fb: &Feedback,
    work: &WorkBox,
) -> Result<AffineControlSystem> {
    let n = sys.dim();
    for q in work.grid(5) {
        let back = phi.inverse.eval(&phi.forward.eval(&q)?)?;
        let err = q.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-9 * (1.0 + norm(&q)) {
            return Err(Error::InvalidInput(format!("phi is not invertible on the box near {:?}", q)));
        }
        let b = fb.beta.eval(&q).map_err(|source| Error::Eval { component: 0, source })?;
        if b.abs() <= 1e-12 {
            return Err(Error::InvalidInput(format!("feedback beta vanishes at {:?}", q)));
        }
    }
    let x_fb = sys.x.add(&sys.y.scale(&fb.alpha))?;
    let y_fb = sys.y.scale(&fb.beta);
    let jac = phi.forward.jacobian_exprs();
    let push = |f: &ExprField| -> ExprField {
        let comps: Vec<Expr> = (0..n)
            .map(|i| {
                (0..n).fold(Expr::zero(), |acc, j| acc.add(&jac[i * n + j].mul(f.component(j))))
            })
            .collect();
        ExprField::with_names(f.names(), comps).substitute(phi.inverse.components(), f.names())
    };
    AffineControlSystem::new(push(&x_fb), push(&y_fb), sys.bound)
}

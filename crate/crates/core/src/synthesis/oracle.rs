//! Reference computations for the model: exact event times by numerical
//! integration and a brute-force minimum time over short policy families.

use serde::{Deserialize, Serialize};

use super::{select, SingExcModel, StratumCell};
use crate::error::{Error, Result};
use crate::numeric::{brent, cubic_roots, golden_min, logspace};
use crate::ode::{integrate, Event, OdeOptions};

#[derive(Clone, Debug)]
pub struct OracleOptions {
    /// Backward / forward time horizon.
    pub horizon: f64,
    pub ode: OdeOptions,
    /// Grid points per arc duration.
    pub grid: usize,
    pub polish_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            horizon: 0.5,
            ode: OdeOptions {
                rtol: 1e-12,
                atol: 1e-15,
                ..OdeOptions::default()
            },
            grid: 64,
            polish_tol: 1e-10,
        }
    }
}

/// Event times of trajectories ending at `(0, w, s)`, `None` when no event
/// occurs within the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTimes {
    /// zero of `p3` along `sigma_eps` with `p(0)` normal to N
    pub t1: Option<f64>,
    /// return of `sigma_eps` to N
    pub t2: Option<f64>,
    /// `sigma_+` backward then `sigma_-` forward for the same duration ends on N
    pub t3: Option<f64>,
}

fn bang_rhs(m: &SingExcModel, u: f64) -> impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    move |_, q, d| {
        d[0] = q[1] + q[2] * q[2];
        d[1] = m.b + m.b1 * q[2];
        d[2] = m.c + u;
        if q.len() == 6 {
            d[3] = 0.0;
            d[4] = -q[3];
            d[5] = -(2.0 * q[2] * q[3] + m.b1 * q[4]);
        }
        Ok(())
    }
}

fn first_event(m: &SingExcModel, y0: &[f64], u: f64, t_end: f64, comp: usize, opts: &OdeOptions) -> Result<Option<f64>> {
    let mut ev = Event::new(move |_, y: &[f64]| Ok(y[comp])).terminal();
    ev.skip_start = true;
    let sol = integrate(bang_rhs(m, u), 0.0, y0, t_end, opts, std::slice::from_mut(&mut ev))?;
    Ok(sol.events.first().map(|e| e.t))
}

fn bang_end(m: &SingExcModel, q: &[f64], u: f64, t: f64, opts: &OdeOptions) -> Result<Vec<f64>> {
    Ok(integrate(bang_rhs(m, u), 0.0, q, t, opts, &mut [])?.y_end().to_vec())
}

pub fn event_times(m: &SingExcModel, w: f64, s: f64, eps: f64, opts: &OracleOptions) -> Result<EventTimes> {
    let h = opts.horizon;
    let t1 = first_event(m, &[0.0, w, s, 1.0, 0.0, 0.0], eps, -h, 5, &opts.ode)?;
    let t2 = first_event(m, &[0.0, w, s], eps, -h, 0, &opts.ode)?;
    let g = |tau: f64| -> Result<f64> {
        let q3 = bang_end(m, &[0.0, w, s], 1.0, tau, &opts.ode)?;
        Ok(bang_end(m, &q3, -1.0, -tau, &opts.ode)?[0])
    };
    // g vanishes to second order at 0; scan outwards on a log grid.
    let taus: Vec<f64> = logspace(1e-3 * h, h, 2 * opts.grid).into_iter().map(|v| -v).collect();
    let mut t3 = None;
    let mut prev = (taus[0], g(taus[0])?);
    for &tau in &taus[1..] {
        let cur = g(tau)?;
        if prev.1 == 0.0 {
            t3 = Some(prev.0);
            break;
        }
        if prev.1 * cur < 0.0 {
            t3 = Some(brent(g, prev.0, tau, 1e-14)?);
            break;
        }
        prev = (tau, cur);
    }
    Ok(EventTimes { t1, t2, t3 })
}

/// Stratum of `(0, w, s)` from exact event times, with the same `eps`
/// rule as [`super::stratify`].
pub fn oracle_cell(m: &SingExcModel, w: f64, s: f64, opts: &OracleOptions) -> Result<StratumCell> {
    select(m, w, s, |eps| {
        let e = event_times(m, w, s, eps, opts)?;
        Ok([e.t1, e.t2, e.t3])
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArc {
    Plus,
    Minus,
    Singular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub t_min: f64,
    /// Arcs in forward time with their durations.
    pub policy: Vec<(PolicyArc, f64)>,
}

/// First positive time within `t_max` where the model flow from `q` under
/// constant `u` reaches `x = 0`.
pub fn first_hit(m: &SingExcModel, q: &[f64; 3], u: f64, t_max: f64) -> Option<f64> {
    let [c0, c1, c2, c3] = m.x_poly(q, u);
    let scale = c0.abs() + c1.abs() + c2.abs() + c3.abs();
    let mut roots: Vec<f64> = Vec::new();
    if c3.abs() > 1e-14 * scale {
        for z in cubic_roots(c2 / c3, c1 / c3, c0 / c3) {
            if z.im.abs() <= 1e-9 * (1.0 + z.re.abs()) {
                roots.push(z.re);
            }
        }
    } else if c2.abs() > 1e-14 * scale {
        let d = c1 * c1 - 4.0 * c2 * c0;
        if d >= 0.0 {
            let sq = d.sqrt();
            roots.push((-c1 + sq) / (2.0 * c2));
            roots.push((-c1 - sq) / (2.0 * c2));
        }
    } else if c1 != 0.0 {
        roots.push(-c0 / c1);
    }
    let x = |t: f64| ((c3 * t + c2) * t + c1) * t + c0;
    roots
        .into_iter()
        .map(|r| {
            // One Newton step against cancellation in the deflated roots.
            let d = (3.0 * c3 * r + 2.0 * c2) * r + c1;
            if d != 0.0 { r - x(r) / d } else { r }
        })
        .filter(|r| *r > 1e-13 && *r <= t_max && x(*r).abs() <= 1e-9)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))))
}

fn arc_control(m: &SingExcModel, a: PolicyArc) -> f64 {
    match a {
        PolicyArc::Plus => 1.0,
        PolicyArc::Minus => -1.0,
        PolicyArc::Singular => m.singular_control(),
    }
}

/// Time to reach N following `arcs` with the given durations for all but
/// the last arc, which runs until the hit. Infinite when the hit happens
/// before the last arc or beyond the horizon.
fn policy_time(m: &SingExcModel, q: &[f64; 3], arcs: &[PolicyArc], durations: &[f64], h: f64) -> f64 {
    let mut q = *q;
    let mut elapsed = 0.0;
    for (a, d) in arcs.iter().zip(durations) {
        let u = arc_control(m, *a);
        if *d < 0.0 || elapsed + d > h || first_hit(m, &q, u, *d).is_some() {
            return f64::INFINITY;
        }
        q = m.flow(&q, u, *d);
        elapsed += d;
    }
    let u = arc_control(m, *arcs.last().expect("policy has arcs"));
    first_hit(m, &q, u, h - elapsed).map_or(f64::INFINITY, |t| elapsed + t)
}

fn result(arcs: &[PolicyArc], durations: &[f64], t: f64) -> PolicyResult {
    let mut policy: Vec<(PolicyArc, f64)> = arcs.iter().copied().zip(durations.iter().copied()).collect();
    let last = *arcs.last().expect("policy has arcs");
    policy.push((last, t - durations.iter().sum::<f64>()));
    PolicyResult { t_min: t, policy }
}

/// Minimum time to reach N from `q` over the policies `sigma_+-`,
/// `sigma_+- sigma_-+` and `sigma_+- sigma_s sigma_+-`.
pub fn brute_force_min_time(m: &SingExcModel, q: &[f64; 3], opts: &OracleOptions) -> Result<PolicyResult> {
    if q[0] == 0.0 {
        return Ok(PolicyResult {
            t_min: 0.0,
            policy: Vec::new(),
        });
    }
    let h = opts.horizon;
    let n = opts.grid;
    let grid: Vec<f64> = (0..=n).map(|k| h * k as f64 / n as f64).collect();
    let step = h / n as f64;
    let mut best: Option<PolicyResult> = None;
    let mut offer = |r: PolicyResult| {
        // Simpler policies are offered first and kept on ties.
        if r.t_min.is_finite() && best.as_ref().map_or(true, |b| r.t_min < b.t_min - 1e-12) {
            best = Some(r);
        }
    };
    use PolicyArc::*;
    for a in [Plus, Minus] {
        let t = policy_time(m, q, &[a], &[], h);
        offer(result(&[a], &[], t));
    }
    for (a, b) in [(Plus, Minus), (Minus, Plus)] {
        let arcs = [a, b];
        let f = |d: f64| policy_time(m, q, &arcs, &[d], h);
        let (k, _) = grid
            .iter()
            .enumerate()
            .map(|(k, d)| (k, f(*d)))
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
        let lo = (grid[k] - step).max(0.0);
        let hi = (grid[k] + step).min(h);
        let (d, t) = golden_min(|d| Ok(f(d)), lo, hi, opts.polish_tol)?;
        let (d, t) = if t <= f(grid[k]) { (d, t) } else { (grid[k], f(grid[k])) };
        offer(result(&arcs, &[d], t));
    }
    if m.singular_control().abs() < 1.0 {
        for (a, c) in [(Plus, Plus), (Plus, Minus), (Minus, Plus), (Minus, Minus)] {
            let arcs = [a, Singular, c];
            let f = |d1: f64, d2: f64| policy_time(m, q, &arcs, &[d1, d2], h);
            let mut bk = (0.0, 0.0, f64::INFINITY);
            for &d1 in &grid {
                for &d2 in &grid {
                    if d1 + d2 <= h {
                        let v = f(d1, d2);
                        if v < bk.2 {
                            bk = (d1, d2, v);
                        }
                    }
                }
            }
            if !bk.2.is_finite() {
                continue;
            }
            let (mut d1, mut d2, mut t) = bk;
            for _ in 0..3 {
                let (x, v) = golden_min(|x| Ok(f(x, d2)), (d1 - step).max(0.0), d1 + step, opts.polish_tol)?;
                if v < t {
                    (d1, t) = (x, v);
                }
                let (x, v) = golden_min(|x| Ok(f(d1, x)), (d2 - step).max(0.0), d2 + step, opts.polish_tol)?;
                if v < t {
                    (d2, t) = (x, v);
                }
            }
            offer(result(&arcs, &[d1, d2], t));
        }
    }
    best.ok_or_else(|| Error::NotFound(format!("no policy reaches N from {q:?} within {h}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_time_of_straight_descent() {
        // x' = y with y = -1, z = 0 frozen: x(t) = 0.1 - t.
        let m = SingExcModel::new(0.0, 0.0, 0.0);
        let t = first_hit(&m, &[0.1, -1.0, 0.0], 0.0, 1.0).unwrap();
        assert!((t - 0.1).abs() < 1e-15);
        assert!(first_hit(&m, &[0.1, 1.0, 0.0], 0.0, 1.0).is_none());
    }
}

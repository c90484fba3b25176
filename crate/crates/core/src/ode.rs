//! Dormand-Prince 5(4) integrator with continuous extension and event
//! location. Integrates forward or backward in time.

use crate::error::{Error, Result};
use crate::numeric::brent;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub event_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 200_000,
            event_tol: 1e-12,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol * 1e-2,
            ..Default::default()
        }
    }
}

type EventFn<'a> = Box<dyn FnMut(f64, &[f64]) -> Result<f64> + 'a>;

/// Scalar event function; a root is a sign change across an accepted step.
pub struct Event<'a> {
    pub g: EventFn<'a>,
    pub terminal: bool,
    /// 0 for any crossing, +1 for increasing, -1 for decreasing (in time).
    pub direction: i8,
    /// Ignore the value at the initial point (the start lies on the surface).
    pub skip_start: bool,
}

impl<'a> Event<'a> {
    pub fn new(g: impl FnMut(f64, &[f64]) -> Result<f64> + 'a) -> Self {
        Event {
            g: Box::new(g),
            terminal: false,
            direction: 0,
            skip_start: false,
        }
    }

    pub fn terminal(mut self) -> Self {
        self.terminal = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    rc: [Vec<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rc[0][i]
                + th * (self.rc[1][i] + th1 * (self.rc[2][i] + th * (self.rc[3][i] + th1 * self.rc[4][i])));
        }
    }
}

/// Accepted steps plus the continuous extension over the whole span.
#[derive(Clone, Debug)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub events: Vec<EventHit>,
    /// Index of the terminal event that stopped integration, if any.
    pub terminated_by: Option<usize>,
    segs: Vec<Segment>,
}

impl Solution {
    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn y_end(&self) -> &[f64] {
        self.y.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    /// Dense-output state at `t` (clamped to the integrated span).
    pub fn at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if self.segs.is_empty() {
            out.copy_from_slice(&self.y[0]);
            return out;
        }
        let fwd = self.t_end() >= self.t_start();
        let key = |s: &Segment| if fwd { s.t0 } else { -s.t0 };
        let tk = if fwd { t } else { -t };
        let idx = self.segs.partition_point(|s| key(s) <= tk).saturating_sub(1);
        let seg = &self.segs[idx];
        let lo = self.t_start().min(self.t_end());
        let hi = self.t_start().max(self.t_end());
        seg.eval(t.clamp(lo, hi), &mut out);
        out
    }

    /// Uniform resampling with `n` points over the integrated span.
    pub fn sample(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.t_start(), self.t_end());
        (0..n)
            .map(|i| {
                let t = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                (t, self.at(t))
            })
            .collect()
    }
}

fn err_norm(y0: &[f64], y1: &[f64], e: &[f64], opts: &OdeOptions) -> f64 {
    let n = y0.len() as f64;
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(e)
        .map(|((a, b), ei)| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (ei / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    events: &mut [Event<'_>],
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        events: Vec::new(),
        terminated_by: None,
        segs: Vec::new(),
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1)?;

    let mut g_prev: Vec<Option<f64>> = Vec::with_capacity(events.len());
    for ev in events.iter_mut() {
        let g = (ev.g)(t, &y)?;
        g_prev.push(if ev.skip_start || g.abs() <= 1e-13 { None } else { Some(g) });
    }
    // Events starting on their surface are scanned inside the first step,
    // which may already contain the next crossing.
    let mut scan_first: Vec<bool> = events.iter().map(|ev| ev.skip_start).collect();

    let mut h = dir * initial_step(&mut f, t, &y, &k1, dir, opts)?.min((t1 - t0).abs());
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut errv = vec![0.0; n];
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let mut steps = 0usize;
    let mut eval_failures = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::Integration(format!("step limit reached at t = {}", t)));
        }
        steps += 1;
        let at_end = (t + h - t1) * dir >= 0.0;
        if at_end {
            h = t1 - t;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::Integration(format!("step size underflow at t = {}", t)));
        }

        let stage = (|| -> Result<()> {
            for i in 0..n {
                ys[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &ys, &mut k2)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &ys, &mut k3)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &ys, &mut k4)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &ys, &mut k5)?;
            for i in 0..n {
                ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &ys, &mut k6)?;
            for i in 0..n {
                y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &y1, &mut k7)?;
            Ok(())
        })();
        if let Err(e) = stage {
            // Trial stages may leave the domain near a boundary; shrink and retry.
            eval_failures += 1;
            if eval_failures > 40 {
                return Err(e);
            }
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        for i in 0..n {
            errv[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = err_norm(&y, &y1, &errv, opts);
        let fac11 = err.powf(expo1);

        if err <= 1.0 {
            eval_failures = 0;
            let fac = (fac11 / facold.powf(beta) / 0.9).clamp(0.2, 10.0);
            let mut h_new = h / fac;
            facold = err.max(1e-4);
            let rc = {
                let mut rc: [Vec<f64>; 5] = Default::default();
                rc[0] = y.clone();
                rc[1] = (0..n).map(|i| y1[i] - y[i]).collect();
                rc[2] = (0..n).map(|i| h * k1[i] - rc[1][i]).collect();
                rc[3] = (0..n).map(|i| rc[1][i] - h * k7[i] - rc[2][i]).collect();
                rc[4] = (0..n)
                    .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                    .collect();
                rc
            };
            let seg = Segment { t0: t, h, rc };
            let t_new = if at_end { t1 } else { t + h };

            // Event detection on [t, t_new].
            let mut first: Option<(f64, usize)> = None;
            let mut crossed: Vec<(usize, f64)> = Vec::new();
            for (k, ev) in events.iter_mut().enumerate() {
                let g_new = (ev.g)(t_new, &y1)?;
                let mut bracket = g_prev[k].map(|gp| (t, gp, t_new, g_new));
                if std::mem::take(&mut scan_first[k]) {
                    let mut buf = vec![0.0; n];
                    let mut prev: Option<(f64, f64)> = None;
                    for j in 1..=16 {
                        let s = t + (t_new - t) * j as f64 / 16.0;
                        let g = if j == 16 {
                            g_new
                        } else {
                            seg.eval(s, &mut buf);
                            (ev.g)(s, &buf)?
                        };
                        if let Some((sp, gp)) = prev {
                            if (gp < 0.0 && g >= 0.0) || (gp > 0.0 && g <= 0.0) {
                                bracket = Some((sp, gp, s, g));
                                break;
                            }
                        }
                        if g.abs() > 1e-13 {
                            prev = Some((s, g));
                        }
                    }
                }
                if let Some((ta, gp, tb, gb)) = bracket {
                    let change = (gp < 0.0 && gb >= 0.0) || (gp > 0.0 && gb <= 0.0);
                    let dir_ok = match ev.direction {
                        0 => true,
                        d => ((gb - gp) * dir).signum() == d as f64,
                    };
                    if change && dir_ok {
                        let mut buf = vec![0.0; n];
                        let g = &mut ev.g;
                        let tr = brent(
                            |s| {
                                seg.eval(s, &mut buf);
                                g(s, &buf)
                            },
                            ta,
                            tb,
                            opts.event_tol,
                        )?;
                        crossed.push((k, tr));
                        if ev.terminal && first.is_none_or(|(tf, _)| (tr - tf) * dir < 0.0) {
                            first = Some((tr, k));
                        }
                    }
                }
                g_prev[k] = if g_new.abs() <= 1e-13 && g_prev[k].is_none() {
                    None
                } else {
                    Some(g_new)
                };
            }
            crossed.sort_by(|a, b| ((a.1 - b.1) * dir).partial_cmp(&0.0).unwrap());
            for (k, tr) in crossed {
                if let Some((tf, _)) = first {
                    if (tr - tf) * dir > 0.0 {
                        continue;
                    }
                }
                let mut yv = vec![0.0; n];
                seg.eval(tr, &mut yv);
                sol.events.push(EventHit { index: k, t: tr, y: yv });
            }
            sol.segs.push(seg);
            if let Some((tf, k)) = first {
                let mut yv = vec![0.0; n];
                sol.segs.last().unwrap().eval(tf, &mut yv);
                sol.t.push(tf);
                sol.y.push(yv);
                sol.terminated_by = Some(k);
                return Ok(sol);
            }

            t = t_new;
            y.copy_from_slice(&y1);
            k1.copy_from_slice(&k7);
            sol.t.push(t);
            sol.y.push(y.clone());
            if (t - t1) * dir >= 0.0 {
                return Ok(sol);
            }
            if last_rejected {
                h_new = dir * h_new.abs().min(h.abs());
            }
            last_rejected = false;
            h = dir * h_new.abs().min(opts.h_max);
        } else {
            h /= (fac11 / 0.9).min(5.0);
            last_rejected = true;
        }
    }
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], dir: f64, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let dnf: f64 = f0.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum();
    let dny: f64 = y.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(opts.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + dir * h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    if f(t + dir * h, &y1, &mut f1).is_err() {
        return Ok(h * 1e-3);
    }
    let der2 = (0..n).map(|i| ((f1[i] - f0[i]) / sk[i]).powi(2)).sum::<f64>().sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(opts.h_max))
}

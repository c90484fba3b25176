//! Local time-minimal syntheses near a codimension-one terminal manifold
//! `N = {x = 0}`: bang and singular exceptional models, the six-case
//! classification, leading-order switching times, loci and the
//! stratification of `N`.

pub mod oracle;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{AffineControlSystem, ControlBound};
use crate::geomkernel::parse_field;

/// `x' = y + z^2`, `y' = b + b1 z`, `z' = c + u`, `|u| <= 1`, target `x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingExcModel {
    pub b: f64,
    pub b1: f64,
    pub c: f64,
}

impl SingExcModel {
    pub fn new(b: f64, b1: f64, c: f64) -> SingExcModel {
        SingExcModel { b, b1, c }
    }

    /// Singular control, constant for this model.
    pub fn singular_control(&self) -> f64 {
        self.b1 / 2.0 - self.c
    }

    pub fn system(&self) -> Result<AffineControlSystem> {
        let vars = ["x", "y", "z"];
        let x = parse_field(
            &[
                "y + z^2",
                &format!("{:e} + {:e}*z", self.b, self.b1),
                &format!("{:e}", self.c),
            ],
            &vars,
        )?;
        let y = parse_field(&["0", "0", "1"], &vars)?;
        AffineControlSystem::new(x, y, ControlBound::Unit)
    }

    pub fn drift(&self, q: &[f64; 3]) -> [f64; 3] {
        [q[1] + q[2] * q[2], self.b + self.b1 * q[2], self.c]
    }

    /// Exact flow for time `t` under the constant control `u`.
    pub fn flow(&self, q: &[f64; 3], u: f64, t: f64) -> [f64; 3] {
        let [x0, y0, z0] = *q;
        let e = self.c + u;
        let r = self.b + self.b1 * z0;
        let (t2, t3) = (t * t, t * t * t);
        [
            x0 + y0 * t + r * t2 / 2.0 + self.b1 * e * t3 / 6.0 + z0 * z0 * t + z0 * e * t2 + e * e * t3 / 3.0,
            y0 + r * t + self.b1 * e * t2 / 2.0,
            z0 + e * t,
        ]
    }

    /// Coefficients `[c0, c1, c2, c3]` of `x(t)` along the flow with control `u`.
    pub fn x_poly(&self, q: &[f64; 3], u: f64) -> [f64; 4] {
        let [x0, y0, z0] = *q;
        let e = self.c + u;
        [
            x0,
            y0 + z0 * z0,
            (self.b + self.b1 * z0) / 2.0 + z0 * e,
            self.b1 * e / 6.0 + e * e / 3.0,
        ]
    }

    /// `n . X` on N at `(0, w, s)`; its zero set is the exceptional parabola.
    pub fn n_x(&self, w: f64, s: f64) -> f64 {
        w + s * s
    }

    /// `n . [Y,X]` on N; vanishes on the singular trace `s = 0`.
    pub fn n_yx(&self, _w: f64, s: f64) -> f64 {
        -2.0 * s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Codim1Case {
    Case1,
    Case2,
}

/// Bang exceptional codimension-one case from `X2(0)`.
pub fn codim1_case(x2_at_0: f64, tol: f64) -> Result<Codim1Case> {
    if 1.0 + x2_at_0 <= 0.0 {
        return Err(Error::InvalidInput(format!("need 1 + X2(0) > 0, got X2(0) = {x2_at_0}")));
    }
    if (x2_at_0 - 1.0).abs() <= tol {
        return Err(Error::Degenerate(format!("X2(0) = {x2_at_0} is on the boundary 1")));
    }
    Ok(if x2_at_0 > 1.0 { Codim1Case::Case1 } else { Codim1Case::Case2 })
}

/// Qualitative synthesis of the codimension-two bang model
/// `x' = z, y' = b, z' = 1 + u + y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codim2Synthesis {
    pub b: f64,
    pub locally_controllable: bool,
    pub u_plus_region: Option<String>,
    pub u_minus_region: Option<String>,
    pub sigma_minus_arrival: Option<String>,
}

pub fn codim2_bang_synthesis(b: f64) -> Result<Codim2Synthesis> {
    if b == 0.0 {
        return Err(Error::Degenerate("b = 0".into()));
    }
    Ok(if b < 0.0 {
        Codim2Synthesis {
            b,
            locally_controllable: true,
            u_plus_region: Some("x < 0".into()),
            u_minus_region: Some("x > 0".into()),
            sigma_minus_arrival: Some("(0, w, s < 0) or (0, w >= 0, s)".into()),
        }
    } else {
        Codim2Synthesis {
            b,
            locally_controllable: false,
            u_plus_region: None,
            u_minus_region: None,
            sigma_minus_arrival: None,
        }
    })
}

/// Case id 1..6 of the singular exceptional model. Negative `u_s(0)` is
/// brought to the positive side by the symmetry `u -> -u`.
pub fn sing_exc_case(model: &SingExcModel, tol: f64) -> Result<u8> {
    let b = model.b;
    if b.abs() <= tol {
        return Err(Error::Degenerate("b = 0".into()));
    }
    let us = model.singular_control().abs();
    for edge in [1.0, 3.0] {
        if (us - edge).abs() <= tol {
            return Err(Error::Degenerate(format!("u_s(0) = {us} is on the boundary {edge}")));
        }
    }
    if b > 0.0 && us <= tol {
        return Err(Error::Degenerate("u_s(0) = 0 with b > 0".into()));
    }
    let bin = if us > 3.0 {
        0
    } else if us > 1.0 {
        1
    } else {
        2
    };
    Ok(if b > 0.0 { 1 + bin } else { 4 + bin })
}

/// Leading-order candidate times `(t1^eps, t2^eps, t3)` for a trajectory
/// ending at `(0, w, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingTimes {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

pub fn switching_times(model: &SingExcModel, w: f64, s: f64, eps: f64) -> Result<SwitchingTimes> {
    let us = model.singular_control();
    let d1 = us - eps;
    let d3 = us - 3.0;
    if d1 == 0.0 || d3 == 0.0 || model.b == 0.0 {
        return Err(Error::Degenerate("vanishing denominator in the switching times".into()));
    }
    Ok(SwitchingTimes {
        t1: 2.0 * s / d1,
        t2: -2.0 / model.b * (w + s * s),
        t3: 3.0 * s / d3,
    })
}

/// Switching surface `W` at `(w, s)`: the point where `sigma_eps` ending at
/// `(0, w, s)` switches, with `nu1 = b1 - 2 (c + eps)`.
pub fn locus_switching(model: &SingExcModel, w: f64, s: f64, eps: f64) -> Result<[f64; 3]> {
    let nu1 = model.b1 - 2.0 * (model.c + eps);
    if nu1 == 0.0 {
        return Err(Error::Degenerate("nu1 = 0".into()));
    }
    Ok(model.flow(&[0.0, w, s], eps, 4.0 * s / nu1))
}

/// Singular surface `Gamma_s(t, w)`.
pub fn locus_singular(model: &SingExcModel, t: f64, w: f64) -> [f64; 3] {
    let (b, b1) = (model.b, model.b1);
    [
        b * t * t / 2.0 + b1 * b1 * t.powi(3) / 6.0 + t * w,
        b * t + b1 * b1 * t * t / 4.0 + w,
        b1 * t / 2.0,
    ]
}

/// Splitting locus `C_s` at `(w, s)`, with `nu2 = b1 - 2c - 6`.
pub fn locus_splitting(model: &SingExcModel, w: f64, s: f64) -> Result<[f64; 3]> {
    let nu2 = model.b1 - 2.0 * model.c - 6.0;
    if nu2 == 0.0 {
        return Err(Error::Degenerate("nu2 = 0".into()));
    }
    Ok(model.flow(&[0.0, w, s], 1.0, 6.0 * s / nu2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    /// switching surface `W-`
    Switch,
    /// splitting locus `C_s`
    Split,
    /// return to N, region `E-~`
    Reintersect,
    /// singular surface `Gamma_s`
    Singular,
    None,
}

impl Stratum {
    pub fn label(self) -> &'static str {
        match self {
            Stratum::Switch => "switch",
            Stratum::Split => "split",
            Stratum::Reintersect => "reintersect",
            Stratum::Singular => "singular",
            Stratum::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub w_min: f64,
    pub w_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn square(half: f64, n: usize) -> GridSpec {
        GridSpec {
            w_min: -half,
            w_max: half,
            s_min: -half,
            s_max: half,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("grid needs at least one point per axis".into()));
        }
        let finite = [self.w_min, self.w_max, self.s_min, self.s_max].iter().all(|v| v.is_finite());
        if !finite || self.w_min > self.w_max || self.s_min > self.s_max {
            return Err(Error::InvalidInput("grid bounds must be finite and ordered".into()));
        }
        if self.n == 1 && (self.w_min != self.w_max || self.s_min != self.s_max) {
            return Err(Error::InvalidInput("a one-point grid needs equal bounds".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        crate::numeric::linspace(lo, hi, n)
            .into_iter()
            .map(|v| if v.abs() < 1e-15 * (hi - lo).abs().max(1.0) { 0.0 } else { v })
            .collect()
    }

    pub fn w_axis(&self) -> Vec<f64> {
        Self::axis(self.w_min, self.w_max, self.n)
    }

    pub fn s_axis(&self) -> Vec<f64> {
        Self::axis(self.s_min, self.s_max, self.n)
    }

    /// Cell coordinates, `w` outer and `s` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let s_axis = self.s_axis();
        self.w_axis()
            .into_iter()
            .flat_map(|w| s_axis.iter().map(move |s| (w, *s)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumCell {
    pub w: f64,
    pub s: f64,
    pub label: Stratum,
    pub t_star: f64,
    /// Bang sign used, 0 on the singular trace.
    pub eps: i8,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StratumGrid {
    pub model: SingExcModel,
    pub spec: GridSpec,
    pub case_id: Option<u8>,
    pub cells: Vec<StratumCell>,
}

impl StratumGrid {
    pub fn cell(&self, i: usize, j: usize) -> &StratumCell {
        &self.cells[i * self.spec.n + j]
    }
}

/// Candidate times for one `eps`, as `(time, stratum)` with only negative
/// times kept.
pub(crate) fn negative_candidates(t: [Option<f64>; 3]) -> Vec<(f64, Stratum)> {
    let tags = [Stratum::Switch, Stratum::Reintersect, Stratum::Split];
    t.iter()
        .zip(tags)
        .filter_map(|(v, tag)| v.filter(|x| *x < 0.0).map(|x| (x, tag)))
        .collect()
}

/// Selection rule shared by the stratifier and the oracle: `eps` from the
/// sign of `s (n . X)`, both signs on ties, then the largest negative
/// candidate time.
pub(crate) fn select<F>(model: &SingExcModel, w: f64, s: f64, mut times: F) -> Result<StratumCell>
where
    F: FnMut(f64) -> Result<[Option<f64>; 3]>,
{
    if s == 0.0 {
        let t_star = if w > 0.0 { -2.0 * w / model.b } else { f64::NAN };
        return Ok(StratumCell {
            w,
            s,
            label: Stratum::Singular,
            t_star,
            eps: 0,
        });
    }
    let key = s * model.n_x(w, s);
    let eps_list: &[f64] = if key > 0.0 {
        &[1.0]
    } else if key < 0.0 {
        &[-1.0]
    } else {
        &[1.0, -1.0]
    };
    let mut best: Option<(f64, Stratum, f64)> = None;
    for &eps in eps_list {
        for (t, tag) in negative_candidates(times(eps)?) {
            if best.map_or(true, |(bt, _, _)| t > bt) {
                best = Some((t, tag, eps));
            }
        }
    }
    Ok(match best {
        Some((t, label, eps)) => StratumCell {
            w,
            s,
            label,
            t_star: t,
            eps: eps as i8,
        },
        None => StratumCell {
            w,
            s,
            label: Stratum::None,
            t_star: f64::NAN,
            eps: eps_list[0] as i8,
        },
    })
}

/// Labels each cell of the `(w, s)` grid on N by the policy that realizes
/// `t* = max(t1^eps, t2^eps, t3)` over the negative leading-order times.
pub fn stratify(model: &SingExcModel, spec: &GridSpec) -> Result<StratumGrid> {
    spec.validate()?;
    let case_id = sing_exc_case(model, 1e-12).ok();
    if case_id != Some(3) {
        warn!("model {model:?} is not in Case 3; strata are computed without validation");
    }
    let cells = spec
        .points()
        .into_par_iter()
        .map(|(w, s)| {
            select(model, w, s, |eps| {
                let t = switching_times(model, w, s, eps)?;
                Ok([Some(t.t1), Some(t.t2), Some(t.t3)])
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StratumGrid {
        model: *model,
        spec: *spec,
        case_id,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_matches_drift_derivative() {
        let m = SingExcModel::new(1.3, 0.7, -0.2);
        let q = [0.1, -0.2, 0.3];
        let h = 1e-6;
        let a = m.flow(&q, 0.4, h);
        let b = m.flow(&q, 0.4, -h);
        let d = m.drift(&q);
        for i in 0..3 {
            let v = (a[i] - b[i]) / (2.0 * h) - d[i] - if i == 2 { 0.4 } else { 0.0 };
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn x_poly_agrees_with_flow() {
        let m = SingExcModel::new(1.0, 1.0, 0.0);
        let q = [0.01, 0.1, -0.05];
        let c = m.x_poly(&q, -1.0);
        let t: f64 = -0.3;
        let x = c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        assert!((x - m.flow(&q, -1.0, t)[0]).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_empty() {
        assert!(GridSpec::square(0.1, 0).validate().is_err());
        assert_eq!(GridSpec::square(0.1, 3).points().len(), 9);
    }
}

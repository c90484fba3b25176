//! Expression-defined vector fields, Lie and Poisson brackets, and the
//! determinants D, D', D'' of a 3D single-input pair.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::numeric::det3;

/// Vector field whose components are expressions over named state variables.
#[derive(Clone, Debug)]
pub struct ExprField {
    vars: Arc<[String]>,
    comps: Vec<Expr>,
    params: BTreeMap<String, f64>,
    tape: OnceLock<Arc<Tape>>,
    jac: OnceLock<Arc<(Vec<Expr>, Tape)>>,
}

impl ExprField {
    pub fn new(vars: &[&str], comps: Vec<Expr>) -> ExprField {
        let vars: Arc<[String]> = vars.iter().map(|s| s.to_string()).collect();
        ExprField::with_names(vars, comps)
    }

    pub fn with_names(vars: Arc<[String]>, comps: Vec<Expr>) -> ExprField {
        ExprField {
            vars,
            comps,
            params: BTreeMap::new(),
            tape: OnceLock::new(),
            jac: OnceLock::new(),
        }
    }

    /// Parses one expression per component. Identifiers resolve to state
    /// variables first, then to `params`.
    pub fn parse(sources: &[&str], vars: &[&str], params: &BTreeMap<String, f64>) -> Result<ExprField> {
        let comps = sources
            .iter()
            .map(|s| Expr::parse(s, vars, params))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut f = ExprField::new(vars, comps);
        f.params = params.clone();
        Ok(f)
    }

    pub fn zero(vars: &[&str], dim: usize) -> ExprField {
        ExprField::new(vars, vec![Expr::zero(); dim])
    }

    /// Constant unit field along coordinate `k`.
    pub fn coordinate(vars: &[&str], k: usize) -> ExprField {
        let comps = (0..vars.len())
            .map(|i| if i == k { Expr::one() } else { Expr::zero() })
            .collect();
        ExprField::new(vars, comps)
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn names(&self) -> Arc<[String]> {
        self.vars.clone()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.comps[i]
    }

    fn same_space(&self, other: &ExprField) -> Result<()> {
        if self.dim() != other.dim() || self.vars.len() != other.vars.len() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.vars.len() {
            return Err(Error::Dimension {
                expected: self.vars.len(),
                found: q.len(),
            });
        }
        Ok(())
    }

    fn tape(&self) -> &Tape {
        self.tape.get_or_init(|| Arc::new(Tape::compile(&self.comps)))
    }

    fn jac_data(&self) -> &(Vec<Expr>, Tape) {
        self.jac.get_or_init(|| {
            let n = self.vars.len();
            let entries: Vec<Expr> = self
                .comps
                .iter()
                .flat_map(|c| (0..n).map(move |j| c.diff(j)))
                .collect();
            let tape = Tape::compile(&entries);
            Arc::new((entries, tape))
        })
    }

    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_point(q)?;
        self.tape().eval(q)
    }

    pub fn eval_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.tape().eval_into(q, out)
    }

    /// Exact Jacobian, entry (i, j) = d f_i / d q_j.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(q)?;
        let n = self.vars.len();
        let (_, tape) = self.jac_data();
        let flat = tape.eval(q).map_err(|e| match e {
            Error::Eval { component, source } => Error::Eval {
                component: component / n,
                source,
            },
            other => other,
        })?;
        Ok(DMatrix::from_row_slice(self.dim(), n, &flat))
    }

    /// Symbolic Jacobian entries in row-major order.
    pub fn jacobian_exprs(&self) -> &[Expr] {
        &self.jac_data().0
    }

    /// Directional derivative of a scalar expression along this field.
    pub fn lie_derivative(&self, h: &Expr) -> Expr {
        self.comps
            .iter()
            .enumerate()
            .fold(Expr::zero(), |acc, (j, c)| acc.add(&h.diff(j).mul(c)))
    }

    /// Symbolic bracket `[self, other] = (d self) other - (d other) self`.
    pub fn bracket(&self, other: &ExprField) -> Result<ExprField> {
        self.same_space(other)?;
        let n = self.vars.len();
        let j1 = self.jacobian_exprs();
        let j2 = other.jacobian_exprs();
        let comps = (0..self.dim())
            .map(|i| {
                let mut acc = Expr::zero();
                for j in 0..n {
                    acc = acc.add(&j1[i * n + j].mul(&other.comps[j]));
                    acc = acc.sub(&j2[i * n + j].mul(&self.comps[j]));
                }
                acc
            })
            .collect();
        Ok(ExprField::with_names(self.vars.clone(), comps))
    }

    pub fn add(&self, other: &ExprField) -> Result<ExprField> {
        self.same_space(other)?;
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect();
        Ok(ExprField::with_names(self.vars.clone(), comps))
    }

    pub fn scale(&self, s: &Expr) -> ExprField {
        let comps = self.comps.iter().map(|a| a.mul(s)).collect();
        ExprField::with_names(self.vars.clone(), comps)
    }

    pub fn negate(&self) -> ExprField {
        let comps = self.comps.iter().map(|a| a.neg()).collect();
        ExprField::with_names(self.vars.clone(), comps)
    }

    /// Replaces the state variables by the given expressions (which may use a
    /// different variable list `names`).
    pub fn substitute(&self, subs: &[Expr], names: Arc<[String]>) -> ExprField {
        let comps = self.comps.iter().map(|c| c.substitute(subs)).collect();
        ExprField::with_names(names, comps)
    }

    pub fn render(&self) -> Vec<String> {
        self.comps.iter().map(|c| c.render(&self.vars)).collect()
    }
}

/// Parses a field from expression sources over ordered variable names.
pub fn parse_field(sources: &[&str], vars: &[&str]) -> Result<ExprField> {
    ExprField::parse(sources, vars, &BTreeMap::new())
}

/// State and adjoint covector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint { q, p }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn jacobian(f: &ExprField, q: &[f64]) -> Result<DMatrix<f64>> {
    f.jacobian(q)
}

/// Numeric `[Z1, Z2](q)` from exact Jacobians.
pub fn lie_bracket(z1: &ExprField, z2: &ExprField, q: &[f64]) -> Result<Vec<f64>> {
    z1.same_space(z2)?;
    let j1 = z1.jacobian(q)?;
    let j2 = z2.jacobian(q)?;
    let v1 = z1.eval(q)?;
    let v2 = z2.eval(q)?;
    let n = q.len();
    Ok((0..z1.dim())
        .map(|i| {
            let a: f64 = (0..n).map(|j| j1[(i, j)] * v2[j]).sum();
            let b: f64 = (0..n).map(|j| j2[(i, j)] * v1[j]).sum();
            a - b
        })
        .collect())
}

/// `{H1, H2}(q, p) = p . [Z1, Z2](q)`.
pub fn poisson_bracket(z1: &ExprField, z2: &ExprField, z: &PhasePoint) -> Result<f64> {
    Ok(dot(&z.p, &lie_bracket(z1, z2, &z.q)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketTable {
    pub y: [f64; 3],
    pub yx: [f64; 3],
    pub yxx: [f64; 3],
    pub yxy: [f64; 3],
    pub x: [f64; 3],
    pub d: f64,
    pub d_prime: f64,
    pub d_second: f64,
}

impl BracketTable {
    /// Frobenius norm of the columns entering D.
    pub fn column_scale(&self) -> f64 {
        (norm(&self.y).powi(2) + norm(&self.yx).powi(2) + norm(&self.yxy).powi(2)).sqrt()
    }

    pub fn degeneracy_threshold(&self) -> f64 {
        1e-9 * (1.0 + self.column_scale())
    }
}

fn arr3(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Symbolic brackets of a 3D pair (X, Y): `[Y,X]`, `[[Y,X],Y]`, `[[Y,X],X]`.
#[derive(Clone, Debug)]
pub struct BracketFields {
    pub x: ExprField,
    pub y: ExprField,
    pub yx: ExprField,
    pub yxy: ExprField,
    pub yxx: ExprField,
}

impl BracketFields {
    pub fn new(x: &ExprField, y: &ExprField) -> Result<BracketFields> {
        if x.dim() != 3 {
            return Err(Error::Dimension {
                expected: 3,
                found: x.dim(),
            });
        }
        let yx = y.bracket(x)?;
        let yxy = yx.bracket(y)?;
        let yxx = yx.bracket(x)?;
        Ok(BracketFields {
            x: x.clone(),
            y: y.clone(),
            yx,
            yxy,
            yxx,
        })
    }

    pub fn table(&self, q: &[f64]) -> Result<BracketTable> {
        let x = arr3(&self.x.eval(q)?);
        let y = arr3(&self.y.eval(q)?);
        let yx = arr3(&self.yx.eval(q)?);
        let yxy = arr3(&self.yxy.eval(q)?);
        let yxx = arr3(&self.yxx.eval(q)?);
        Ok(BracketTable {
            d: det3(&y, &yx, &yxy),
            d_prime: det3(&y, &yx, &yxx),
            d_second: det3(&y, &yx, &x),
            y,
            yx,
            yxx,
            yxy,
            x,
        })
    }

    /// Symbolic determinants (D, D', D'').
    pub fn determinant_exprs(&self) -> (Expr, Expr, Expr) {
        let col = |f: &ExprField| -> [Expr; 3] { [f.comps[0].clone(), f.comps[1].clone(), f.comps[2].clone()] };
        let (y, yx) = (col(&self.y), col(&self.yx));
        (
            det3_expr(&y, &yx, &col(&self.yxy)),
            det3_expr(&y, &yx, &col(&self.yxx)),
            det3_expr(&y, &yx, &col(&self.x)),
        )
    }
}

fn det3_expr(a: &[Expr; 3], b: &[Expr; 3], c: &[Expr; 3]) -> Expr {
    let m1 = b[1].mul(&c[2]).sub(&b[2].mul(&c[1]));
    let m2 = b[2].mul(&c[0]).sub(&b[0].mul(&c[2]));
    let m3 = b[0].mul(&c[1]).sub(&b[1].mul(&c[0]));
    a[0].mul(&m1).add(&a[1].mul(&m2)).add(&a[2].mul(&m3))
}

/// Brackets and D = det(Y,[Y,X],[[Y,X],Y]), D' = det(Y,[Y,X],[[Y,X],X]),
/// D'' = det(Y,[Y,X],X) at `q`.
pub fn determinants_3d(x: &ExprField, y: &ExprField, q: &[f64]) -> Result<BracketTable> {
    BracketFields::new(x, y)?.table(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_examples() {
        let f = parse_field(&["y", "0"], &["x", "y"]).unwrap();
        let j = f.jacobian(&[1.0, 2.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let f = parse_field(&["x^2", "x*y"], &["x", "y"]).unwrap();
        let j = f.jacobian(&[1.0, 1.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]));
        let f = parse_field(&["sin(alpha)"], &["alpha"]).unwrap();
        assert_eq!(f.jacobian(&[0.0]).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn jacobian_reports_component() {
        let f = parse_field(&["x", "1/y"], &["x", "y"]).unwrap();
        match f.jacobian(&[1.0, 0.0]) {
            Err(Error::Eval { component, .. }) => assert_eq!(component, 1),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn bracket_examples() {
        let z1 = parse_field(&["y", "0"], &["x", "y"]).unwrap();
        let z2 = parse_field(&["0", "1"], &["x", "y"]).unwrap();
        let z = PhasePoint::new(vec![0.3, -0.2], vec![1.0, 0.0]);
        assert_eq!(poisson_bracket(&z1, &z2, &z).unwrap(), 1.0);
        assert_eq!(lie_bracket(&z1, &z1, &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        let c1 = parse_field(&["1", "2"], &["x", "y"]).unwrap();
        let c2 = parse_field(&["-3", "0.5"], &["x", "y"]).unwrap();
        assert_eq!(lie_bracket(&c1, &c2, &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn symbolic_bracket_matches_numeric() {
        let vars = ["x", "y", "z"];
        let a = parse_field(&["y*z", "sin(x)", "x^2 - z"], &vars).unwrap();
        let b = parse_field(&["exp(y)", "z", "x*y*z"], &vars).unwrap();
        let q = [0.2, -0.4, 0.9];
        let s = a.bracket(&b).unwrap().eval(&q).unwrap();
        let n = lie_bracket(&a, &b, &q).unwrap();
        for (u, v) in s.iter().zip(&n) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_fields_have_zero_determinants() {
        let vars = ["x", "y", "z"];
        let x = parse_field(&["1", "2", "3"], &vars).unwrap();
        let y = parse_field(&["0", "0", "1"], &vars).unwrap();
        let t = determinants_3d(&x, &y, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((t.d, t.d_prime, t.d_second), (0.0, 0.0, 0.0));
    }

    #[test]
    fn singular_exceptional_model_feedback() {
        let vars = ["x", "y", "z"];
        let x = parse_field(&["y + z^2", "1 + z", "0"], &vars).unwrap();
        let y = parse_field(&["0", "0", "1"], &vars).unwrap();
        let t = determinants_3d(&x, &y, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.d, -2.0);
        assert_eq!(-t.d_prime / t.d, 0.5);
    }

    #[test]
    fn revolution_brackets() {
        let vars = ["r", "theta", "alpha"];
        let x = parse_field(&["cos(alpha)", "r + sin(alpha)", "0"], &vars).unwrap();
        let y = parse_field(&["0", "0", "1"], &vars).unwrap();
        let q = [-1.0, 0.0, std::f64::consts::FRAC_PI_2];
        let t = determinants_3d(&x, &y, &q).unwrap();
        assert!((t.d - 1.0).abs() < 1e-15);
        assert!((t.d_prime + 1.0).abs() < 1e-15);
        assert!(t.d_second.abs() < 1e-15);
        let yx = y.bracket(&x).unwrap().eval(&[0.4, 0.0, 0.3]).unwrap();
        assert!((yx[0] - 0.3f64.sin()).abs() < 1e-15);
        assert!((yx[1] + 0.3f64.cos()).abs() < 1e-15);
    }
}

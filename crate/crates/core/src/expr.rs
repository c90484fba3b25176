//! Expression trees over indexed variables.
//!
//! Nodes are shared through `Arc`, so derivative trees reuse subtrees instead
//! of copying them. Differentiation and substitution memoize on node identity
//! to keep repeated differentiation from blowing up.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops;
use std::sync::Arc;

use crate::error::{Error, EvalError, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }

    fn apply(self, a: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(a.sin()),
            Func::Cos => Ok(a.cos()),
            Func::Exp => Ok(a.exp()),
            Func::Sqrt => {
                if a < 0.0 {
                    Err(EvalError::SqrtDomain(a))
                } else {
                    Ok(a.sqrt())
                }
            }
            Func::Log => {
                if a <= 0.0 {
                    Err(EvalError::LogDomain(a))
                } else {
                    Ok(a.ln())
                }
            }
        }
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Neg(Expr),
    Call(Func, Expr),
}

#[derive(Clone, Debug)]
pub struct Expr(Arc<Node>);

fn pow_checked(a: f64, b: f64) -> Result<f64, EvalError> {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        if a == 0.0 && b < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(a.powi(b as i32));
    }
    if a < 0.0 {
        return Err(EvalError::PowDomain(a, b));
    }
    if a == 0.0 && b < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(a.powf(b))
}

fn div_checked(a: f64, b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        Err(EvalError::DivisionByZero)
    } else {
        Ok(a / b)
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl Expr {
    fn new(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(c: f64) -> Expr {
        Expr::new(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(i: usize) -> Expr {
        Expr::new(Node::Var(i))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::new(Node::Add(self.clone(), rhs.clone())),
        }
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => rhs.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::new(Node::Sub(self.clone(), rhs.clone())),
        }
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => rhs.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => rhs.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr::new(Node::Mul(self.clone(), rhs.clone())),
        }
    }

    pub fn div(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::new(Node::Div(self.clone(), rhs.clone())),
        }
    }

    pub fn pow(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (_, Some(b)) if b == 0.0 => Expr::one(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), Some(b)) => match pow_checked(a, b).and_then(finite) {
                Ok(v) => Expr::constant(v),
                Err(_) => Expr::new(Node::Pow(self.clone(), rhs.clone())),
            },
            _ => Expr::new(Node::Pow(self.clone(), rhs.clone())),
        }
    }

    pub fn powi(&self, k: i32) -> Expr {
        self.pow(&Expr::constant(k as f64))
    }

    pub fn neg(&self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::new(Node::Neg(self.clone())),
        }
    }

    pub fn call(f: Func, arg: &Expr) -> Expr {
        if let Some(a) = arg.as_const() {
            if let Ok(v) = f.apply(a).and_then(finite) {
                return Expr::constant(v);
            }
        }
        Expr::new(Node::Call(f, arg.clone()))
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }

    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }

    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self)
    }

    /// Evaluates by direct tree walk. Hot loops should go through [`Tape`].
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let v = match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => vars[*i],
            Node::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Node::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Node::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Node::Div(a, b) => div_checked(a.eval(vars)?, b.eval(vars)?)?,
            Node::Pow(a, b) => pow_checked(a.eval(vars)?, b.eval(vars)?)?,
            Node::Neg(a) => -a.eval(vars)?,
            Node::Call(f, a) => f.apply(a.eval(vars)?)?,
        };
        finite(v)
    }

    /// Exact partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(i, &mut memo)
    }

    fn diff_memo(&self, i: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.key()) {
            return d.clone();
        }
        let d = match &*self.0 {
            Node::Const(_) => Expr::zero(),
            Node::Var(j) => {
                if *j == i {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => a.diff_memo(i, memo).add(&b.diff_memo(i, memo)),
            Node::Sub(a, b) => a.diff_memo(i, memo).sub(&b.diff_memo(i, memo)),
            Node::Mul(a, b) => {
                let da = a.diff_memo(i, memo);
                let db = b.diff_memo(i, memo);
                da.mul(b).add(&a.mul(&db))
            }
            Node::Div(a, b) => {
                let da = a.diff_memo(i, memo);
                let db = b.diff_memo(i, memo);
                if db.is_zero() {
                    da.div(b)
                } else {
                    da.mul(b).sub(&a.mul(&db)).div(&b.powi(2))
                }
            }
            Node::Pow(a, b) => {
                let da = a.diff_memo(i, memo);
                if let Some(k) = b.as_const() {
                    Expr::constant(k).mul(&a.pow(&Expr::constant(k - 1.0))).mul(&da)
                } else {
                    let db = b.diff_memo(i, memo);
                    let t1 = db.mul(&a.ln());
                    let t2 = b.mul(&da).div(a);
                    let inner = if db.is_zero() { t2 } else { t1.add(&t2) };
                    self.mul(&inner)
                }
            }
            Node::Neg(a) => a.diff_memo(i, memo).neg(),
            Node::Call(f, a) => {
                let da = a.diff_memo(i, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    let outer = match f {
                        Func::Sin => a.cos(),
                        Func::Cos => a.sin().neg(),
                        Func::Exp => self.clone(),
                        Func::Sqrt => Expr::constant(0.5).div(self),
                        Func::Log => Expr::one().div(a),
                    };
                    outer.mul(&da)
                }
            }
        };
        memo.insert(self.key(), d.clone());
        d
    }

    /// Replaces every `Var(i)` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.subst_memo(subs, &mut memo)
    }

    fn subst_memo(&self, subs: &[Expr], memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.key()) {
            return e.clone();
        }
        let e = match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Var(i) => subs[*i].clone(),
            Node::Add(a, b) => a.subst_memo(subs, memo).add(&b.subst_memo(subs, memo)),
            Node::Sub(a, b) => a.subst_memo(subs, memo).sub(&b.subst_memo(subs, memo)),
            Node::Mul(a, b) => a.subst_memo(subs, memo).mul(&b.subst_memo(subs, memo)),
            Node::Div(a, b) => a.subst_memo(subs, memo).div(&b.subst_memo(subs, memo)),
            Node::Pow(a, b) => a.subst_memo(subs, memo).pow(&b.subst_memo(subs, memo)),
            Node::Neg(a) => a.subst_memo(subs, memo).neg(),
            Node::Call(f, a) => Expr::call(*f, &a.subst_memo(subs, memo)),
        };
        memo.insert(self.key(), e.clone());
        e
    }

    /// Renumbers variables: `Var(i)` becomes `Var(map[i])`.
    pub fn remap(&self, map: &[usize]) -> Expr {
        let subs: Vec<Expr> = map.iter().map(|&j| Expr::var(j)).collect();
        self.substitute(&subs)
    }

    pub fn depends_on(&self, i: usize) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Var(j) => *j == i,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.depends_on(i) || b.depends_on(i)
            }
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(i),
        }
    }

    /// Renders the expression in the parser grammar using the given names.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write_to(&mut out, names);
        out
    }

    fn write_to(&self, out: &mut String, names: &[String]) {
        use std::fmt::Write;
        let bin = |out: &mut String, a: &Expr, op: &str, b: &Expr| {
            out.push('(');
            a.write_to(out, names);
            out.push_str(op);
            b.write_to(out, names);
            out.push(')');
        };
        match &*self.0 {
            Node::Const(c) => {
                if *c < 0.0 {
                    let _ = write!(out, "({:?})", c);
                } else {
                    let _ = write!(out, "{:?}", c);
                }
            }
            Node::Var(i) => match names.get(*i) {
                Some(n) => out.push_str(n),
                None => {
                    let _ = write!(out, "x{}", i);
                }
            },
            Node::Add(a, b) => bin(out, a, " + ", b),
            Node::Sub(a, b) => bin(out, a, " - ", b),
            Node::Mul(a, b) => bin(out, a, " * ", b),
            Node::Div(a, b) => bin(out, a, " / ", b),
            Node::Pow(a, b) => bin(out, a, "^", b),
            Node::Neg(a) => {
                out.push_str("(-");
                a.write_to(out, names);
                out.push(')');
            }
            Node::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write_to(out, names);
                out.push(')');
            }
        }
    }

    /// Parses `src` with identifiers resolved first against `vars`, then
    /// against `params` (substituted as constants). `pi` is predefined.
    pub fn parse(src: &str, vars: &[&str], params: &BTreeMap<String, f64>) -> Result<Expr, ParseError> {
        let mut p = Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            vars,
            params,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

macro_rules! bin_op {
    ($tr:ident, $m:ident) => {
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                Expr::$m(self, rhs)
            }
        }
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::$m(&self, &rhs)
            }
        }
        impl ops::$tr<f64> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                Expr::$m(self, &Expr::constant(rhs))
            }
        }
    };
}

bin_op!(Add, add);
bin_op!(Sub, sub);
bin_op!(Mul, mul);
bin_op!(Div, div);

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = lhs.add(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = lhs.sub(&self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = lhs.mul(&self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = lhs.div(&self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(base.pow(&exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Expr::constant).map_err(|_| ParseError::Syntax {
            pos: start,
            msg: format!("malformed number `{}`", text),
        })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| ParseError::UnknownFunction(name.to_string()))?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            if self.peek() != Some(b')') {
                return Err(self.err("expected `)`"));
            }
            self.pos += 1;
            if args.len() != 1 {
                return Err(ParseError::Arity {
                    name: name.to_string(),
                    expected: 1,
                    found: args.len(),
                });
            }
            return Ok(Expr::call(func, &args[0]));
        }
        if let Some(i) = self.vars.iter().position(|v| *v == name) {
            return Ok(Expr::var(i));
        }
        if let Some(v) = self.params.get(name) {
            return Ok(Expr::constant(*v));
        }
        if name == "pi" {
            return Ok(Expr::constant(std::f64::consts::PI));
        }
        Err(ParseError::UnknownVariable(name.to_string()))
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    Neg(usize),
    Call(Func, usize),
}

/// Flattened evaluation program for a list of expressions. Shared subtrees
/// (by pointer) are evaluated once.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    owner: Vec<usize>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut tape = Tape {
            ops: Vec::new(),
            owner: Vec::new(),
            outputs: Vec::new(),
        };
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for (k, e) in exprs.iter().enumerate() {
            let slot = tape.emit(e, k, &mut seen);
            tape.outputs.push(slot);
        }
        tape
    }

    fn emit(&mut self, e: &Expr, owner: usize, seen: &mut HashMap<usize, usize>) -> usize {
        if let Some(&s) = seen.get(&e.key()) {
            return s;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(i) => Op::Var(*i),
            Node::Add(a, b) => Op::Add(self.emit(a, owner, seen), self.emit(b, owner, seen)),
            Node::Sub(a, b) => Op::Sub(self.emit(a, owner, seen), self.emit(b, owner, seen)),
            Node::Mul(a, b) => Op::Mul(self.emit(a, owner, seen), self.emit(b, owner, seen)),
            Node::Div(a, b) => Op::Div(self.emit(a, owner, seen), self.emit(b, owner, seen)),
            Node::Pow(a, b) => Op::Pow(self.emit(a, owner, seen), self.emit(b, owner, seen)),
            Node::Neg(a) => Op::Neg(self.emit(a, owner, seen)),
            Node::Call(f, a) => Op::Call(*f, self.emit(a, owner, seen)),
        };
        self.ops.push(op);
        self.owner.push(owner);
        let slot = self.ops.len() - 1;
        seen.insert(e.key(), slot);
        slot
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn eval_into(&self, vars: &[f64], out: &mut [f64]) -> Result<(), Error> {
        let mut r = vec![0.0; self.ops.len()];
        for (k, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => Ok(c),
                Op::Var(i) => Ok(vars[i]),
                Op::Add(a, b) => Ok(r[a] + r[b]),
                Op::Sub(a, b) => Ok(r[a] - r[b]),
                Op::Mul(a, b) => Ok(r[a] * r[b]),
                Op::Div(a, b) => div_checked(r[a], r[b]),
                Op::Pow(a, b) => pow_checked(r[a], r[b]),
                Op::Neg(a) => Ok(-r[a]),
                Op::Call(f, a) => f.apply(r[a]),
            }
            .and_then(finite);
            r[k] = v.map_err(|source| Error::Eval {
                component: self.owner[k],
                source,
            })?;
        }
        for (o, &s) in out.iter_mut().zip(&self.outputs) {
            *o = r[s];
        }
        Ok(())
    }

    pub fn eval(&self, vars: &[f64]) -> Result<Vec<f64>, Error> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(vars, &mut out)?;
        Ok(out)
    }
}

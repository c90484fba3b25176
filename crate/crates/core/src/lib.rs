//! Geometric optimal control toolkit: expression-defined vector fields and
//! their brackets, Maximum-Principle extremal flows, Zermelo navigation,
//! cusp classification of abnormal geodesics and local time-minimal
//! syntheses near a terminal manifold.

pub mod check;
pub mod cusp;
pub mod error;
pub mod expr;
pub mod extremal;
pub mod geomkernel;
pub mod mckeithan;
pub mod numeric;
pub mod ode;
pub mod synthesis;
pub mod zermelo;

pub use cusp::{CuspKind, CuspReport, ValueGapReport};
pub use error::{Error, EvalError, ParseError, Result};
pub use expr::Expr;
pub use extremal::{AffineControlSystem, ArcClass, ArcKind, ControlBound, ExtremalArc};
pub use geomkernel::{BracketTable, ExprField, PhasePoint};
pub use mckeithan::{McKeithanParams, TargetGrid, TerminalClass, TerminalTag};
pub use ode::OdeOptions;
pub use synthesis::{GridSpec, SingExcModel, Stratum, StratumCell, StratumGrid};
pub use zermelo::{RevolutionProblem, SemiNormalCoeffs, ZermeloProblem};

//! Scenario files. Every subcommand reads one JSON object; unknown keys are
//! rejected.

use std::path::Path;

use geoctl::mckeithan::{McKeithanParams, TargetGrid};
use geoctl::synthesis::{GridSpec, SingExcModel};
use geoctl::zermelo::{build_seminormal, Navigation, RevolutionProblem, SemiNormalCoeffs, ZermeloProblem};
use geoctl::AffineControlSystem;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    ZermeloIsothermal {
        a: String,
        b: String,
        c: String,
    },
    ZermeloRevolution {
        m: String,
        mu: String,
    },
    ZermeloSeminormal {
        coeffs: SemiNormalCoeffs,
        #[serde(default = "default_order")]
        order: usize,
    },
    /// Second-order truncation of the abnormal flow of the historical
    /// problem, over `(x, Y, alpha)`.
    HistoricalTruncated,
}

fn default_order() -> usize {
    2
}

pub enum Built {
    Isothermal(ZermeloProblem),
    Revolution(RevolutionProblem),
    Truncated,
}

impl Problem {
    pub fn build(&self) -> Result<Built, CliError> {
        Ok(match self {
            Problem::ZermeloIsothermal { a, b, c } => Built::Isothermal(ZermeloProblem::parse(a, b, c)?),
            Problem::ZermeloRevolution { m, mu } => Built::Revolution(RevolutionProblem::parse(m, mu)?),
            Problem::ZermeloSeminormal { coeffs, order } => Built::Isothermal(build_seminormal(coeffs, *order)?),
            Problem::HistoricalTruncated => Built::Truncated,
        })
    }
}

impl Built {
    pub fn goh(&self) -> Result<AffineControlSystem, CliError> {
        match self {
            Built::Isothermal(p) => Ok(p.goh_extend()?),
            Built::Revolution(p) => Ok(p.goh_extend()?),
            Built::Truncated => Err(CliError::Schema("the truncated flow has no Goh system".into())),
        }
    }

    pub fn state_names(&self) -> [&'static str; 3] {
        match self {
            Built::Isothermal(p) => {
                let [a, b] = p.state_names();
                [a, b, "alpha"]
            }
            Built::Revolution(p) => {
                let [a, b] = p.state_names();
                [a, b, "alpha"]
            }
            Built::Truncated => ["x", "Y", "alpha"],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Direct,
    Goh,
}

/// Initial data are given at `t = 0`; `span = [t_a, t_b]` with
/// `t_a <= 0 <= t_b` is covered in both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub problem: Problem,
    #[serde(default)]
    pub q0: Vec<f64>,
    #[serde(default)]
    pub p0: Option<[f64; 2]>,
    /// Start on every abnormal covector at `q0` instead of `p0`.
    #[serde(default)]
    pub abnormal: bool,
    #[serde(default)]
    pub method: Method,
    /// Heading for the Goh method.
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default = "default_span")]
    pub span: [f64; 2],
}

fn default_span() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspConfig {
    pub problem: Problem,
    /// Candidate cusp point on the Goh system (defaults to the origin).
    #[serde(default)]
    pub q_c: Option<Vec<f64>>,
    /// Half-width of the trajectory scanned for non-immersion points.
    #[serde(default = "default_half_span")]
    pub half_span: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_half_span() -> f64 {
    0.5
}

fn default_samples() -> usize {
    1001
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueGapConfig {
    #[serde(default = "unit_delta")]
    pub coeffs: SemiNormalCoeffs,
    /// Explicit `(t0, t2)` pairs.
    #[serde(default)]
    pub pairs: Vec<[f64; 2]>,
    /// Sweep `t0 = -h`, `t2 = -ratio h`.
    #[serde(default = "default_h")]
    pub h: Vec<f64>,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Skip the integration of the matching residual.
    #[serde(default)]
    pub formulas_only: bool,
}

fn unit_delta() -> SemiNormalCoeffs {
    let mut c = SemiNormalCoeffs::default();
    c.a.c01 = 2.0;
    c
}

fn default_h() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

fn default_ratio() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "case3")]
    pub model: SingExcModel,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn case3() -> SingExcModel {
    SingExcModel::new(1.0, 1.0, 0.0)
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            model: case3(),
            grid: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McKeithanConfig {
    pub beta: [f64; 3],
    pub alpha: [f64; 3],
    pub delta: [f64; 2],
    pub d: f64,
    #[serde(default)]
    pub grid: Option<TargetGrid>,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_v_max() -> f64 {
    1.0
}

fn default_n() -> usize {
    101
}

impl McKeithanConfig {
    pub fn params(&self) -> McKeithanParams {
        McKeithanParams {
            beta: self.beta,
            alpha: self.alpha,
            delta: self.delta,
            d: self.d,
        }
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// `w_min,w_max,s_min,s_max,n`.
pub fn parse_grid(text: &str) -> Result<GridSpec, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 5 || parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Schema(format!(
            "--grid expects w_min,w_max,s_min,s_max,n, got {text:?}"
        )));
    }
    let num = |s: &str| -> Result<f64, CliError> {
        s.parse::<f64>()
            .map_err(|_| CliError::Schema(format!("--grid: {s:?} is not a number")))
    };
    let n: usize = parts[4]
        .parse()
        .map_err(|_| CliError::Schema(format!("--grid: {:?} is not a point count", parts[4])))?;
    let spec = GridSpec {
        w_min: num(parts[0])?,
        w_max: num(parts[1])?,
        s_min: num(parts[2])?,
        s_max: num(parts[3])?,
        n,
    };
    spec.validate().map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(spec)
}

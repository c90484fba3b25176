use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geoctl::check::{self, CheckOptions, CriterionReport};
use geoctl::cusp::{classify_cusp, classify_flow, detect_on_solution, matching_residual, value_gap as gap_formulas, CuspReport};
use geoctl::extremal::{singular_flow, FlowStop};
use geoctl::mckeithan::{
    classify_terminal_point, exceptional_locus_on_target, singular_exceptional_points, McKeithanParams, TargetGrid,
    TerminalClass,
};
use geoctl::ode::{integrate, OdeOptions, Solution};
use geoctl::synthesis::{locus_singular, locus_splitting, locus_switching, stratify, GridSpec, SingExcModel};
use geoctl::zermelo::{abnormal_covectors, direct_extremal, historical_truncated_flow, Navigation};
use geoctl::ExprField;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{
    load, parse_grid, Built, CuspConfig, GeodesicConfig, McKeithanConfig, Method, Problem, SynthesisConfig,
    ValueGapConfig,
};
use crate::emit::{self, real};
use crate::{Cli, CliError};

fn ode_options(cli: &Cli) -> OdeOptions {
    cli.tol.map(OdeOptions::with_tol).unwrap_or_default()
}

fn required<T: serde::de::DeserializeOwned>(cli: &Cli, what: &str) -> Result<T, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Schema(format!("{what} needs --config")))?;
    load(path)
}

fn optional<T: serde::de::DeserializeOwned + Default>(cli: &Cli) -> Result<T, CliError> {
    cli.config.as_ref().map(|p| load(p)).unwrap_or_else(|| Ok(T::default()))
}

fn target(cli: &Cli, name: &str) -> PathBuf {
    cli.out_dir().join(name)
}

fn check_span(span: [f64; 2]) -> Result<(), CliError> {
    if !(span[0] <= 0.0 && span[1] >= 0.0 && span[0] < span[1] && span.iter().all(|v| v.is_finite())) {
        return Err(CliError::Schema(format!(
            "span must satisfy t_a <= 0 <= t_b with t_a < t_b, got {span:?}"
        )));
    }
    Ok(())
}

fn point<const N: usize>(q: &[f64], what: &str) -> Result<[f64; N], CliError> {
    q.try_into()
        .map_err(|_| CliError::Schema(format!("{what} needs {N} coordinates, got {}", q.len())))
}

/// Runs `side` backward then forward from `t = 0`, dropping the duplicate
/// initial sample, so rows are ordered by time.
fn two_sided<R>(
    span: [f64; 2],
    mut side: impl FnMut(f64) -> Result<Vec<(f64, R)>, CliError>,
) -> Result<Vec<(f64, R)>, CliError> {
    let mut rows = Vec::new();
    if span[0] < 0.0 {
        let mut back = side(span[0])?;
        back.reverse();
        back.pop();
        rows.extend(back);
    }
    if span[1] > 0.0 {
        rows.extend(side(span[1])?);
    } else {
        let mut fwd = side(span[0])?;
        rows.push(fwd.swap_remove(0));
    }
    Ok(rows)
}

fn solution_rows(sol: &Solution) -> Vec<(f64, Vec<f64>)> {
    sol.t.iter().copied().zip(sol.y.iter().cloned()).collect()
}

fn direct_rows<P: Navigation>(
    prob: &P,
    cfg: &GeodesicConfig,
    opts: &OdeOptions,
) -> Result<Vec<Vec<String>>, CliError> {
    let q0 = point::<2>(&cfg.q0, "q0")?;
    let covectors = match (cfg.abnormal, cfg.p0) {
        (true, None) => {
            let c = abnormal_covectors(prob, &q0)?;
            if c.is_empty() {
                return Err(CliError::Numerical(format!("no abnormal covector at {q0:?}")));
            }
            c
        }
        (false, Some(p0)) => vec![p0],
        _ => return Err(CliError::Schema("give exactly one of p0 and abnormal = true".into())),
    };
    let mut rows = Vec::new();
    for (branch, p0) in covectors.iter().enumerate() {
        let samples = two_sided(cfg.span, |t1| {
            let arc = direct_extremal(prob, q0, *p0, (0.0, t1), opts)?;
            Ok(arc.samples.into_iter().map(|s| (s.t, s)).collect())
        })?;
        rows.extend(samples.into_iter().map(|(t, s)| {
            vec![
                real(t),
                real(s.q[0]),
                real(s.q[1]),
                real(s.p[0]),
                real(s.p[1]),
                real(s.alpha),
                real(s.m),
                branch.to_string(),
            ]
        }));
    }
    Ok(rows)
}

fn flow_rows(field: &ExprField, q0: &[f64], span: [f64; 2], opts: &OdeOptions) -> Result<Vec<Vec<String>>, CliError> {
    let samples = two_sided(span, |t1| {
        let sol = integrate(|_, q, d| field.eval_into(q, d), 0.0, q0, t1, opts, &mut [])?;
        Ok(solution_rows(&sol))
    })?;
    Ok(samples
        .into_iter()
        .map(|(t, q)| std::iter::once(real(t)).chain(q.iter().map(|v| real(*v))).collect())
        .collect())
}

pub fn geodesic(cli: &Cli) -> Result<(), CliError> {
    let cfg: GeodesicConfig = required(cli, "geodesic")?;
    check_span(cfg.span)?;
    let opts = ode_options(cli);
    let built = cfg.problem.build()?;
    let [s0, s1, a] = built.state_names();
    let path = target(cli, "trajectory.csv");
    match (&built, cfg.method) {
        (Built::Truncated, _) => {
            let q0 = if cfg.q0.is_empty() { vec![0.0; 3] } else { point::<3>(&cfg.q0, "q0")?.to_vec() };
            let rows = flow_rows(&historical_truncated_flow(), &q0, cfg.span, &opts)?;
            emit::csv(&path, &["t", s0, s1, a], &rows)
        }
        (_, Method::Goh) => {
            let q0 = point::<2>(&cfg.q0, "q0")?;
            let alpha0 = cfg
                .alpha0
                .ok_or_else(|| CliError::Schema("method goh needs alpha0".into()))?;
            let goh = built.goh()?;
            let start = [q0[0], q0[1], alpha0];
            let samples = two_sided(cfg.span, |t1| {
                let traj = singular_flow(&goh, &start, (0.0, t1), &opts)?;
                if traj.stop != FlowStop::Completed {
                    warn!("singular flow stopped at t = {}: {:?}", traj.solution.t_end(), traj.stop);
                }
                Ok(solution_rows(&traj.solution))
            })?;
            let rows: Vec<Vec<String>> = samples
                .into_iter()
                .map(|(t, q)| vec![real(t), real(q[0]), real(q[1]), real(q[2])])
                .collect();
            emit::csv(&path, &["t", s0, s1, a], &rows)
        }
        (Built::Isothermal(p), Method::Direct) => write_direct(p, &cfg, &opts, &path, [s0, s1]),
        (Built::Revolution(p), Method::Direct) => write_direct(p, &cfg, &opts, &path, [s0, s1]),
    }
}

fn write_direct<P: Navigation>(
    prob: &P,
    cfg: &GeodesicConfig,
    opts: &OdeOptions,
    path: &Path,
    [s0, s1]: [&str; 2],
) -> Result<(), CliError> {
    let rows = direct_rows(prob, cfg, opts)?;
    let (p0, p1) = (format!("p_{s0}"), format!("p_{s1}"));
    emit::csv(path, &["t", s0, s1, &p0, &p1, "alpha", "m", "branch"], &rows)
}

#[derive(Debug, Serialize)]
struct Detection {
    t: f64,
    q: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CuspOutput {
    problem: Problem,
    report: CuspReport,
    label: String,
    detections: Vec<Detection>,
}

pub fn cusp(cli: &Cli) -> Result<(), CliError> {
    let cfg: CuspConfig = required(cli, "cusp")?;
    if !(cfg.half_span > 0.0 && cfg.half_span.is_finite()) || cfg.samples < 3 {
        return Err(CliError::Schema("half_span must be positive and samples >= 3".into()));
    }
    let opts = ode_options(cli);
    let tol = cli.tol.unwrap_or(1e-6);
    let built = cfg.problem.build()?;
    let q_c = match &cfg.q_c {
        Some(q) => point::<3>(q, "q_c")?.to_vec(),
        None => vec![0.0; 3],
    };
    let (report, field, sols) = match &built {
        Built::Truncated => {
            let field = historical_truncated_flow();
            let report = classify_flow(&field, &q_c, 1e-8, &opts)?;
            let sols = [-cfg.half_span, cfg.half_span]
                .iter()
                .map(|t1| Ok(integrate(|_, q, d| field.eval_into(q, d), 0.0, &q_c, *t1, &opts, &mut [])?))
                .collect::<Result<Vec<_>, CliError>>()?;
            (report, field, sols)
        }
        _ => {
            let goh = built.goh()?;
            let report = classify_cusp(&goh, &q_c, &opts)?;
            let sols = [-cfg.half_span, cfg.half_span]
                .iter()
                .map(|t1| Ok(singular_flow(&goh, &q_c, (0.0, *t1), &opts)?.solution))
                .collect::<Result<Vec<_>, CliError>>()?;
            (report, goh.singular_field()?.clone(), sols)
        }
    };
    let mut detections: Vec<Detection> = Vec::new();
    for sol in &sols {
        for (t, q) in detect_on_solution(&field, sol, cfg.samples, tol)? {
            if !detections.iter().any(|d| (d.t - t).abs() <= 1e-9) {
                detections.push(Detection { t, q });
            }
        }
    }
    detections.sort_by(|a, b| a.t.total_cmp(&b.t));
    info!("cusp at {:?}: {}", report.q_c, report.kind.label());
    let out = CuspOutput {
        problem: cfg.problem.clone(),
        label: report.kind.label(),
        report,
        detections,
    };
    emit::json(&target(cli, "cusp.json"), &out)
}

pub fn value_gap(cli: &Cli) -> Result<(), CliError> {
    let cfg: ValueGapConfig = match &cli.config {
        Some(p) => load(p)?,
        None => serde_json::from_str("{}").map_err(|e| CliError::Schema(e.to_string()))?,
    };
    cfg.coeffs.check_normalization()?;
    if !(cfg.ratio > 0.0 && cfg.ratio < 1.0) {
        return Err(CliError::Schema(format!("ratio must lie in (0, 1), got {}", cfg.ratio)));
    }
    let mut pairs = cfg.pairs.clone();
    pairs.extend(cfg.h.iter().map(|h| [-h, -cfg.ratio * h]));
    if pairs.is_empty() {
        return Err(CliError::Schema("no (t0, t2) pairs requested".into()));
    }
    let opts = ode_options(cli);
    let delta = cfg.coeffs.delta();
    let mut rows = Vec::with_capacity(pairs.len());
    for [t0, t2] in pairs {
        let mut r = gap_formulas(t0, t2, delta)?;
        if !cfg.formulas_only {
            r.matching_residual = Some(matching_residual(&cfg.coeffs, t0, t2, &opts)?);
        }
        rows.push(vec![
            real(r.t0),
            real(r.t1),
            real(r.t2),
            real(r.alpha2_prime),
            real(r.gap),
            real(r.matching_residual.unwrap_or(f64::NAN)),
        ]);
    }
    emit::csv(
        &target(cli, "value_gap.csv"),
        &["t0", "t1", "t2", "alpha2_prime", "gap", "matching_residual"],
        &rows,
    )
}

/// Sidecar describing `strata.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrataSidecar {
    pub model: SingExcModel,
    pub grid: GridSpec,
    pub case_id: Option<u8>,
    pub columns: Vec<String>,
    pub cells: usize,
    pub counts: BTreeMap<String, usize>,
}

pub const STRATA_COLUMNS: [&str; 5] = ["w", "s", "label", "t_star", "eps"];

pub fn synthesis(cli: &Cli) -> Result<(), CliError> {
    let cfg: SynthesisConfig = optional(cli)?;
    let spec = match (&cli.grid, cfg.grid) {
        (Some(text), _) => parse_grid(text)?,
        (None, Some(g)) => {
            g.validate().map_err(|e| CliError::Schema(e.to_string()))?;
            g
        }
        (None, None) => GridSpec::square(0.05, 41),
    };
    let grid = stratify(&cfg.model, &spec)?;
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            vec![
                real(c.w),
                real(c.s),
                c.label.label().to_string(),
                real(c.t_star),
                c.eps.to_string(),
            ]
        })
        .collect();
    emit::csv(&target(cli, "strata.csv"), &STRATA_COLUMNS, &rows)?;

    let mut counts = BTreeMap::new();
    for c in &grid.cells {
        *counts.entry(c.label.label().to_string()).or_insert(0) += 1;
    }
    let sidecar = StrataSidecar {
        model: cfg.model,
        grid: spec,
        case_id: grid.case_id,
        columns: STRATA_COLUMNS.iter().map(|s| s.to_string()).collect(),
        cells: grid.cells.len(),
        counts,
    };
    emit::json(&target(cli, "strata.json"), &sidecar)?;

    let model = cfg.model;
    let xyz = |r: geoctl::Result<[f64; 3]>| -> [String; 3] {
        match r {
            Ok(p) => p.map(real),
            Err(_) => [real(f64::NAN), real(f64::NAN), real(f64::NAN)],
        }
    };
    let mut loci = Vec::new();
    for (w, s) in spec.points() {
        let entries = [
            ("switch-", xyz(locus_switching(&model, w, s, -1.0))),
            ("switch+", xyz(locus_switching(&model, w, s, 1.0))),
            ("split", xyz(locus_splitting(&model, w, s))),
            ("singular", xyz(Ok(locus_singular(&model, s, w)))),
        ];
        for (name, [x, y, z]) in entries {
            loci.push(vec![name.to_string(), real(w), real(s), x, y, z]);
        }
    }
    emit::csv(&target(cli, "loci.csv"), &["locus", "w", "s", "x", "y", "z"], &loci)
}

#[derive(Debug, Serialize)]
struct McKeithanOutput {
    params: McKeithanParams,
    grid: TargetGrid,
    tol: f64,
    locus_points: usize,
    singular_exceptional: Vec<TerminalClass>,
}

pub fn mckeithan(cli: &Cli) -> Result<(), CliError> {
    let cfg: McKeithanConfig = required(cli, "mckeithan")?;
    let params = cfg.params();
    params.validate()?;
    let grid = cfg.grid.unwrap_or_else(|| TargetGrid::over_box(&params, cfg.v_max, cfg.n));
    grid.validate(&params)?;
    let tol = cli.tol.unwrap_or(1e-9);
    let locus = exceptional_locus_on_target(&params, &grid)?;
    let mut rows = Vec::with_capacity(locus.len());
    for p in &locus {
        let c = classify_terminal_point(&params, p.y, p.v, tol)?;
        rows.push(vec![real(c.y), real(c.v), c.tag.label(), real(c.n_x), real(c.n_yx)]);
    }
    emit::csv(&target(cli, "locus.csv"), &["y", "v", "tag", "nX", "nYX"], &rows)?;
    let singular_exceptional = singular_exceptional_points(&params, &grid)?
        .into_iter()
        .map(|[y, v]| classify_terminal_point(&params, y, v, tol))
        .collect::<geoctl::Result<Vec<_>>>()?;
    let out = McKeithanOutput {
        params,
        grid,
        tol,
        locus_points: locus.len(),
        singular_exceptional,
    };
    emit::json(&target(cli, "mckeithan.json"), &out)
}

pub fn check(cli: &Cli) -> Result<(), CliError> {
    let mut opts = CheckOptions::default();
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let reports: Vec<CriterionReport> = check::run_all(&opts);
    for r in &reports {
        println!("{}", r.summary());
    }
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
        emit::json(&out.join("check.json"), &reports)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("criteria {} failed", failed.join(", "))))
    }
}

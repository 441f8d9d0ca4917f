use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use qgraph::gaps::{analyze_graph_gaps, GapError};
use qgraph::graph::MetricGraph;
use qgraph::lab::{
    default_horizon, lie_rank, random_tangent_target, resonant_pairs, steer, LieGeneratorSet, SteeringProblem,
    SteeringStatus,
};
use qgraph::moments::{solve_moments, ControlSignal, MomentProblem};
use qgraph::operator::{
    assumption_i1_check, assumption_i2_check, boundary_vanishing_orders, matrix_elements, perturbation_slope,
    ControlMatrix, ControlOperator, ControlSpec,
};
use qgraph::propagator::{propagate, summarize, StateVector, Trajectory};
use qgraph::spectrum::{compute_spectrum, weyl::weyl_fit, SpectralBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::io::{load_graph, num, read_source, Outputs};
use crate::record::{self, RunRecord};
use crate::{Cli, CliError, Command, EXIT_DIVERGED, EXIT_HYPOTHESIS, EXIT_OK};

/// Relative tolerance for resonance detection.
const RESONANCE_TOL: f64 = 1e-9;
/// Largest gap window tried when none is given.
const MAX_M: usize = 6;
/// Row cap for trajectory exports.
const TRAJECTORY_ROWS: usize = 512;

/// Per-run state: artifacts written so far and the configuration hashed
/// into the run record.
struct Ctx<'a> {
    cli: &'a Cli,
    out: Outputs,
    config: BTreeMap<String, Value>,
}

impl Ctx<'_> {
    fn set(&mut self, key: &str, v: Value) {
        self.config.insert(key.to_string(), v);
    }

    /// Read an input and fold its contents into the configuration.
    fn input(&mut self, source: &str) -> Result<String, CliError> {
        let text = read_source(source)?;
        let inputs = self.config.entry("inputs".into()).or_insert_with(|| json!({}));
        inputs[source] = Value::String(text.clone());
        Ok(text)
    }

    fn graph(&mut self, source: &str) -> Result<(Option<ControlSpec>, MetricGraph), CliError> {
        self.input(source)?;
        let (doc, g) = load_graph(source)?;
        Ok((doc.control, g))
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum { .. } => "spectrum",
        Command::Gaps { .. } => "gaps",
        Command::Operator { .. } => "operator",
        Command::Moments { .. } => "moments",
        Command::Steer { .. } => "steer",
        Command::LieRank { .. } => "lie-rank",
        Command::Report => "report",
    }
}

/// Run the selected command, append its run record and return the exit code.
pub fn run(cli: &Cli) -> i32 {
    let started = chrono::Utc::now();
    let out = match Outputs::new(&cli.out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("qgraph: {e}");
            return e.exit_code();
        }
    };
    let name = command_name(&cli.command);
    let mut ctx = Ctx { cli, out, config: BTreeMap::new() };
    ctx.set("command", json!(name));
    ctx.set("seed", json!(cli.seed));
    let code = match dispatch(&mut ctx) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qgraph: {e}");
            e.exit_code()
        }
    };
    let config = Value::Object(ctx.config.into_iter().collect());
    let rec = RunRecord {
        command: name.to_string(),
        config_hash: record::config_hash(&config),
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        outputs: ctx.out.paths,
        exit_code: code,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    if let Err(e) = record::append(&cli.out_dir, &rec) {
        eprintln!("qgraph: cannot write run record: {e}");
        return crate::EXIT_INTERNAL;
    }
    code
}

fn dispatch(ctx: &mut Ctx) -> Result<i32, CliError> {
    match &ctx.cli.command {
        Command::Spectrum { graph, k } => spectrum(ctx, graph, *k),
        Command::Gaps { graph, k, m } => gaps(ctx, graph, *k, *m),
        Command::Operator { graph, k, field } => operator(ctx, graph, *k, field.as_deref()),
        Command::Moments { graph, k, horizon } => moments(ctx, graph, *k, *horizon),
        Command::Steer { config } => steer_cmd(ctx, config),
        Command::LieRank { n1, pairs, graph, k } => lie_rank_cmd(ctx, *n1, pairs.as_deref(), graph.as_deref(), *k),
        Command::Report => report(ctx),
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn solve_spectrum(g: &MetricGraph, k: usize) -> Result<SpectralBasis, CliError> {
    if k == 0 {
        return Err(CliError::Input("K must be positive".into()));
    }
    compute_spectrum(g, k).map_err(internal)
}

fn control_matrix(
    g: &MetricGraph,
    basis: &SpectralBasis,
    doc_control: Option<ControlSpec>,
    field: Option<&str>,
) -> Result<ControlMatrix, CliError> {
    let spec = match field {
        Some(f) => ControlSpec::Preset(f.to_string()),
        None => doc_control.ok_or_else(|| CliError::Input("no control field in the document or on the command line".into()))?,
    };
    let op = ControlOperator::from_spec(&spec, g).map_err(|e| CliError::Input(e.to_string()))?;
    matrix_elements(&op, basis).map_err(internal)
}

fn gap_error(e: GapError) -> CliError {
    match e {
        GapError::TooShort { .. } | GapError::ZeroM | GapError::ClassTooLarge { .. } => CliError::Input(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

fn spectrum(ctx: &mut Ctx, source: &str, k: usize) -> Result<i32, CliError> {
    ctx.set("K", json!(k));
    let (control, g) = ctx.graph(source)?;
    let basis = solve_spectrum(&g, k)?;
    let mut header = String::from("k,lambda,multiplicity");
    for e in g.edges() {
        let id = &e.id;
        header.push_str(&format!(",{id}_re_a,{id}_im_a,{id}_re_b,{id}_im_b"));
    }
    let rows = basis.pairs().iter().map(|p| {
        let mut r = vec![p.index.to_string(), num(p.lambda), p.multiplicity.to_string()];
        for (a, b) in &p.coeffs {
            r.extend([num(a.re), num(a.im), num(b.re), num(b.im)]);
        }
        r
    });
    ctx.out.csv("spectrum.csv", &header, rows)?;
    let lambdas = basis.lambdas();
    ctx.out.json("weyl.json", &weyl_fit(&g, &lambdas, 2.min(k)))?;
    if control.is_some() && k >= 2 {
        match analyze_graph_gaps(&g, &lambdas, None, MAX_M) {
            Ok(r) => ctx.out.json("gaps.json", &r)?,
            Err(e) => log::warn!("gap report skipped: {e}"),
        }
    }
    Ok(EXIT_OK)
}

fn gaps(ctx: &mut Ctx, source: &str, k: usize, m: Option<usize>) -> Result<i32, CliError> {
    ctx.set("K", json!(k));
    ctx.set("M", json!(m));
    let (_, g) = ctx.graph(source)?;
    let lambdas = solve_spectrum(&g, k)?.lambdas();
    let report = analyze_graph_gaps(&g, &lambdas, m, MAX_M).map_err(gap_error)?;
    ctx.out.json("gaps.json", &report)?;
    Ok(if report.violations.is_empty() { EXIT_OK } else { EXIT_HYPOTHESIS })
}

fn operator(ctx: &mut Ctx, source: &str, k: usize, field: Option<&str>) -> Result<i32, CliError> {
    ctx.set("K", json!(k));
    ctx.set("field", json!(field));
    let (control, g) = ctx.graph(source)?;
    let basis = solve_spectrum(&g, k)?;
    let lambdas = basis.lambdas();
    let m = control_matrix(&g, &basis, control.clone(), field)?;
    let n = m.dim();
    let rows = (0..n).flat_map(|j| (j..n).map(move |l| (j, l))).map(|(j, l)| {
        let v = m.get(j, l);
        vec![(j + 1).to_string(), (l + 1).to_string(), num(v.re), num(v.im)]
    });
    ctx.out.csv("matrix.csv", "j,k,re,im", rows)?;

    let i1 = assumption_i1_check(&m, 4.1);
    let tol = RESONANCE_TOL;
    let i2 = assumption_i2_check(&m, &lambdas, tol);
    let spec = field.map(|f| ControlSpec::Preset(f.into())).or(control);
    let vanishing = spec
        .and_then(|s| ControlOperator::from_spec(&s, &g).ok())
        .map(|op| boundary_vanishing_orders(&op, &g, 5));
    let slope = perturbation_slope(&lambdas, &m, 0, &[1e-1, 3e-2, 1e-2, 3e-3, 1e-3]).ok();
    let report = json!({
        "K": n,
        "norm": m.norm(),
        "assumption_i1": i1,
        "assumption_i2_quadruples": i2,
        "boundary_vanishing": vanishing,
        "perturbation_slope": slope,
    });
    ctx.out.json("operator.json", &report)?;
    Ok(if i1.violations.is_empty() { EXIT_OK } else { EXIT_HYPOTHESIS })
}

fn write_control(out: &mut Outputs, u: &ControlSignal) -> Result<(), CliError> {
    let rows = u.sample_times().zip(&u.samples).map(|(t, v)| vec![num(t), num(*v)]);
    out.csv("control.csv", "t,u", rows)?;
    let coeffs: Vec<[f64; 2]> = u.coefficients.iter().map(|c| [c.re, c.im]).collect();
    out.json(
        "control.json",
        &json!({
            "frequencies": u.frequencies,
            "coefficients": coeffs,
            "T": u.horizon,
            "residual": u.residual,
            "cond": u.condition,
            "max_imag": u.max_imag,
            "warnings": u.warnings,
        }),
    )
}

fn moments(ctx: &mut Ctx, source: &str, k: usize, horizon: Option<f64>) -> Result<i32, CliError> {
    ctx.set("K", json!(k));
    ctx.set("T", json!(horizon));
    let (_, g) = ctx.graph(source)?;
    let lambdas = solve_spectrum(&g, k)?.lambdas();
    let t = match horizon {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(CliError::Input(format!("horizon must be positive, got {t}"))),
        None => default_horizon(&lambdas).ok_or_else(|| internal("no uniform gap for the default horizon"))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cli.seed);
    // h¹-decaying targets, real first entry
    let targets: Vec<Complex64> = (0..lambdas.len())
        .map(|j| {
            let w = ((j + 1) as f64).powi(-2);
            let im = if j == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
            Complex64::new(rng.gen_range(-1.0..1.0), im) * w
        })
        .collect();
    let freqs: Vec<f64> = lambdas.iter().map(|l| l - lambdas[0]).collect();
    let u = solve_moments(&MomentProblem::new(freqs, targets, t)).map_err(internal)?;
    write_control(&mut ctx.out, &u)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SteerConfig {
    graph: String,
    #[serde(default)]
    field: Option<String>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "T", default)]
    horizon: Option<f64>,
    epsilon: f64,
    s: f64,
    max_iters: usize,
    #[serde(default)]
    seed: Option<u64>,
}

/// Graph paths in a config file are relative to the config file.
fn resolve_graph(config_source: &str, graph: &str) -> String {
    if graph.starts_with("preset:") || Path::new(graph).is_absolute() || config_source.starts_with("preset:") {
        return graph.to_string();
    }
    match Path::new(config_source).parent() {
        Some(dir) => dir.join(graph).to_string_lossy().into_owned(),
        None => graph.to_string(),
    }
}

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    let n = traj.states.len();
    let stride = n.div_ceil(TRAJECTORY_ROWS).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx.into_iter()
        .map(|i| {
            let mut r = vec![num(traj.times[i])];
            for c in &traj.states[i].coeffs {
                r.extend([num(c.re), num(c.im)]);
            }
            r
        })
        .collect()
}

fn steer_cmd(ctx: &mut Ctx, source: &str) -> Result<i32, CliError> {
    let text = ctx.input(source)?;
    let cfg: SteerConfig = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    if !(cfg.epsilon >= 0.0) || cfg.k < 2 {
        return Err(CliError::Input("need epsilon ≥ 0 and K ≥ 2".into()));
    }
    let seed = cfg.seed.unwrap_or(ctx.cli.seed);
    ctx.set("seed", json!(seed));
    let (control, g) = ctx.graph(&resolve_graph(source, &cfg.graph))?;
    let basis = solve_spectrum(&g, cfg.k)?;
    let lambdas = basis.lambdas();
    let b = control_matrix(&g, &basis, control, cfg.field.as_deref())?;
    let t = match cfg.horizon {
        Some(t) => t,
        None => default_horizon(&lambdas).ok_or_else(|| internal("no uniform gap for the default horizon"))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_tangent_target(&lambdas, t, cfg.epsilon, cfg.s, &mut rng);
    let p = SteeringProblem::new(lambdas.clone(), b.clone(), t, target, cfg.s).map_err(|e| CliError::Input(e.to_string()))?;
    let outcome = steer(&p, cfg.max_iters).map_err(internal)?;

    let rows = outcome.history.iter().enumerate().map(|(i, e)| vec![i.to_string(), num(*e)]);
    ctx.out.csv("history.csv", "iteration,error", rows)?;
    write_control(&mut ctx.out, &outcome.control)?;
    let traj = propagate(&StateVector::basis(p.dim(), 0), &outcome.control, &lambdas, &b, outcome.steps).map_err(internal)?;
    ctx.out.csv("trajectory.csv", &trajectory_header(p.dim()), trajectory_rows(&traj))?;
    ctx.out.json("summary.json", &summarize(&traj, &outcome.control, &b))?;
    let first_reduction = match outcome.history.as_slice() {
        [a, b, ..] => Some(a / b),
        _ => None,
    };
    ctx.out.json(
        "history.json",
        &json!({
            "status": outcome.status,
            "history": outcome.history,
            "first_reduction": first_reduction,
            "steps": outcome.steps,
            "T": t,
            "epsilon": cfg.epsilon,
            "s": cfg.s,
            "seed": seed,
            "control": "control.csv",
            "control_json": "control.json",
            "trajectory": "trajectory.csv",
            "summary": "summary.json",
        }),
    )?;
    Ok(match outcome.status {
        SteeringStatus::Converged => EXIT_OK,
        SteeringStatus::MaxIterations => EXIT_HYPOTHESIS,
        SteeringStatus::Diverged => EXIT_DIVERGED,
    })
}

fn trajectory_header(k: usize) -> String {
    let mut h = String::from("t");
    for j in 1..=k {
        h.push_str(&format!(",re_{j},im_{j}"));
    }
    h
}

fn parse_pairs(s: &str, n1: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let bad = || CliError::Input(format!("pairs must look like `1-2,2-3`, got {s:?}"));
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p.trim().split_once('-').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b == 0 || a > n1 || b > n1 || a == b {
                return Err(CliError::Input(format!("pair {a}-{b} is outside 1..={n1}")));
            }
            Ok((a.min(b) - 1, a.max(b) - 1))
        })
        .collect()
}

fn lie_rank_cmd(ctx: &mut Ctx, n1: usize, pairs: Option<&str>, graph: Option<&str>, k: usize) -> Result<i32, CliError> {
    ctx.set("N1", json!(n1));
    ctx.set("pairs", json!(pairs));
    if n1 < 2 {
        return Err(CliError::Input("N1 must be at least 2".into()));
    }
    let pairs = match (pairs, graph) {
        (Some(p), _) => parse_pairs(p, n1)?,
        (None, Some(src)) => {
            ctx.set("K", json!(k));
            let (control, g) = ctx.graph(src)?;
            let basis = solve_spectrum(&g, k.max(n1))?;
            let b = control_matrix(&g, &basis, control, None)?;
            resonant_pairs(&basis.lambdas(), &b, n1, RESONANCE_TOL)
        }
        (None, None) => (0..n1).flat_map(|j| (j + 1..n1).map(move |l| (j, l))).collect(),
    };
    let rank = lie_rank(&LieGeneratorSet::new(n1, pairs.clone())).map_err(internal)?;
    let full = rank == n1 * n1 - 1;
    let one_based: Vec<[usize; 2]> = pairs.iter().map(|&(a, b)| [a + 1, b + 1]).collect();
    ctx.out.json("lie_rank.json", &json!({"N1": n1, "pairs": one_based, "rank": rank, "full": full}))?;
    Ok(if full { EXIT_OK } else { EXIT_HYPOTHESIS })
}

fn report(ctx: &mut Ctx) -> Result<i32, CliError> {
    let path = ctx.cli.out_dir.join(record::RUNS_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(CliError::Input(format!("{}: {e}", path.display()))),
    };
    let records: Vec<RunRecord> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))))
        .collect::<Result<_, _>>()?;
    let mut by_command: BTreeMap<&str, BTreeMap<i32, usize>> = BTreeMap::new();
    for r in &records {
        *by_command.entry(&r.command).or_default().entry(r.exit_code).or_default() += 1;
    }
    let mut md = format!("# Runs in {}\n\n| command | exit code | count |\n|---|---|---|\n", ctx.cli.out_dir.display());
    for (cmd, codes) in &by_command {
        for (code, n) in codes {
            md.push_str(&format!("| {cmd} | {code} | {n} |\n"));
        }
    }
    let summary = json!({"runs": records.len(), "by_command": by_command});
    ctx.out.json("report.json", &summary)?;
    ctx.out.write("report.md", &md)?;
    Ok(EXIT_OK)
}

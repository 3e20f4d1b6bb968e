mod args;
mod output;

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use csg::bench::checks::{self, Check, ESTIMATE_TOLERANCE};
use csg::bench::{
    baseline_study, csg_objective_series, csg_study, evaluations_to_tolerance, mc_objective_estimator, paint_csg_config,
    paint_estimate_config, paint_starts, reference_stationarity, rates, run_rate_runs, BaselineConfig, EstimatePoint,
    ExperimentConfig, ProblemKind, STATIONARITY_THRESHOLD,
};
use csg::color::PaintObjective;
use csg::composite::{NestedMetric, NestedObjective, NestedSolver};
use csg::csg::Step;
use csg::measures::rng_stream;
use csg::weights::WeightScheme;

use args::{required, with_config, BaselineArgs, Cli, Command, EstimateArgs, EstimateMethod, PaintArgs, PaintMode, RatesArgs};
use output::{field, report, write_csv, write_summary};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Rates(a) => rates_command(with_config(a, config)?),
        Command::Paint(a) => paint_command(with_config(a, config)?),
        Command::Baseline(a) => baseline_command(with_config(a, config)?),
        Command::Estimate(a) => estimate_command(with_config(a, config)?),
    }
}

fn weights(s: Option<&str>, default: WeightScheme) -> Result<WeightScheme> {
    s.map_or(Ok(default), |s| s.parse().with_context(|| format!("--weights '{s}'")))
}

fn design(s: &str, what: &str) -> Result<Vec<f64>> {
    args::parse_list(s, 2, what)
}

fn done(out: &Path, summary: &Path, checks: &[Check]) {
    report(checks);
    eprintln!("wrote {} and {}", out.display(), summary.display());
}

fn rates_command(a: RatesArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let d = ExperimentConfig::default();
    let config = ExperimentConfig {
        problem: a.problem.unwrap_or(ProblemKind::Quad),
        dim: a.dim.unwrap_or(d.dim),
        runs: a.runs.unwrap_or(d.runs),
        iterations: a.iters.unwrap_or(d.iterations),
        tau: a.tau.unwrap_or(d.tau),
        weights: weights(a.weights.as_deref(), d.weights)?,
        design_coefficient: a.design_coefficient.unwrap_or(d.design_coefficient),
        point_coefficient: a.point_coefficient.unwrap_or(d.point_coefficient),
        groups: a.groups.filter(|g| g != "none"),
        seed: a.seed.unwrap_or(d.seed),
        per_decade: a.per_decade.unwrap_or(d.per_decade),
        monitor: a.monitor.unwrap_or(d.monitor),
        grid_sup: a.grid_sup,
    };
    let runs = run_rate_runs(&config)?;
    let report_ = rates::aggregate(config.clone(), &runs);

    let dd = config.dim;
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=dd).map(|i| format!("u_{i}")));
    header.extend(
        ["gradient_norm", "objective", "z_estimate", "error_bound", "distance", "z_paper", "z_grid", "gradient_error"].map(String::from),
    );
    let column = |name: &str| report_.median_of(if name == "z_estimate" { "z_loo" } else { name });
    let rows: Vec<Vec<String>> = report_
        .iterations
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let mut row = vec![it.to_string()];
            row.extend(report_.design[i].iter().map(|v| field(Some(*v))));
            row.extend(header[1 + dd..].iter().map(|q| field(column(q).map(|m| m[i]))));
            row
        })
        .collect();
    write_csv(&out, &header, &rows)?;

    let mut checks = checks::rate_checks(&report_);
    if config.grid_sup.is_some() && config.monitor {
        checks.push(checks::error_bound_validity(&runs));
    }
    let fits: serde_json::Map<String, serde_json::Value> = rates::QUANTITIES
        .iter()
        .zip(&report_.fits)
        .filter_map(|(q, f)| f.map(|f| (q.to_string(), serde_json::to_value(f).expect("fit serializes"))))
        .collect();
    let results = json!({ "predicted_slope": report_.predicted_slope, "fits": fits });
    let summary = write_summary(&out, "rates", serde_json::to_value(&config)?, results, checks.clone())?;
    done(&out, &summary, &checks);
    Ok(())
}

fn step_row(step: &Step, extra: &[Option<f64>]) -> Vec<String> {
    let diag = step.diagnostics.as_ref();
    let mut row = vec![step.iteration.to_string()];
    row.extend(step.design.iter().map(|v| field(Some(*v))));
    row.push(field(Some(step.gradient_norm())));
    row.push(field(Some(step.objective)));
    row.push(field(diag.and_then(|d| d.z_loo)));
    row.push(field(diag.and_then(|d| d.error_bound)));
    row.extend(extra.iter().map(|v| field(*v)));
    row
}

fn paint_command(a: PaintArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let mode = a.mode.unwrap_or(PaintMode::Optimize);
    let seed = a.seed.unwrap_or(0);
    let iterations = a.iters.unwrap_or(5000);
    let paint = PaintObjective::bright_red();
    let start = match a.init.as_deref() {
        Some(s) => design(s, "--init")?,
        None => paint_starts(&paint, 1, seed).remove(0),
    };
    if !paint.design_box().contains(&start) {
        bail!("--init {start:?} lies outside the design box");
    }
    let mut config = match mode {
        PaintMode::Optimize => paint_csg_config(start.clone(), iterations, seed, 0),
        PaintMode::Evaluate => paint_estimate_config(start.clone(), iterations, seed, 0),
    };
    if let Some(tau) = a.tau {
        config.tau = tau;
    }
    config.metric = NestedMetric {
        design: config.metric.design,
        outer: a.c_lambda.unwrap_or(config.metric.outer),
        inner: a.c_eta.unwrap_or(config.metric.inner),
    };
    config.outer_scheme = weights(a.outer_weights.as_deref(), config.outer_scheme)?;
    config.inner_scheme = weights(a.inner_weights.as_deref(), config.inner_scheme)?;

    let reference_at_start = paint.reference(&start).0;
    let mut solver = NestedSolver::new(&paint, config.clone())?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    while !solver.is_done() {
        let step = solver.step()?;
        series.push(EstimatePoint { evaluations: 2 * step.iteration, estimate: step.objective });
        if step.logged {
            let relative = (mode == PaintMode::Evaluate).then(|| (step.objective - reference_at_start).abs() / reference_at_start.abs());
            rows.push(step_row(&step, &[Some(2.0 * step.iteration as f64), relative]));
        }
    }
    let header: Vec<String> = ["iteration", "u_1", "u_2", "gradient_norm", "objective", "z_estimate", "error_bound", "evaluations", "relative_error"]
        .map(String::from)
        .to_vec();
    write_csv(&out, &header, &rows)?;

    let terminal = solver.design().to_vec();
    let (reference, _) = paint.reference(&terminal);
    let stationarity = reference_stationarity(&paint, &terminal);
    let (xyz, lab) = paint.color(&terminal, 200, 64)?;
    let (checks, extra) = match mode {
        PaintMode::Optimize => (
            vec![Check::new(
                "stationary",
                stationarity < STATIONARITY_THRESHOLD,
                format!("reference projected gradient norm {stationarity:.4} < {STATIONARITY_THRESHOLD}"),
            )],
            json!({}),
        ),
        PaintMode::Evaluate => {
            let reached = evaluations_to_tolerance(&series, reference_at_start, ESTIMATE_TOLERANCE);
            (
                vec![Check::new(
                    "reaches_tolerance",
                    reached.is_some(),
                    format!("within {:.0}% from {reached:?} evaluations on", 100.0 * ESTIMATE_TOLERANCE),
                )],
                json!({ "evaluations_to_tolerance": reached }),
            )
        }
    };
    let results = json!({
        "mode": mode,
        "start": start,
        "final_design": terminal,
        "reference_objective": reference,
        "reference_stationarity": stationarity,
        "xyz": xyz,
        "lab": [lab.l, lab.a, lab.b],
        "estimate": extra,
    });
    let summary = write_summary(&out, "paint", serde_json::to_value(&config)?, results, checks.clone())?;
    done(&out, &summary, &checks);
    Ok(())
}

#[derive(Serialize)]
struct BaselineResults {
    starts: usize,
    converged: usize,
    wrong: usize,
    csg_runs: usize,
    csg_stationary: usize,
}

fn baseline_command(a: BaselineArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let d = BaselineConfig::default();
    let grid = match a.grid.as_deref() {
        Some(s) => {
            let g: Vec<usize> = args::parse_list(s, 3, "--grid")?;
            (g[0], g[1], g[2])
        }
        None => d.grid,
    };
    let config = BaselineConfig {
        grid,
        step: a.step.unwrap_or(d.step),
        tolerance: d.tolerance,
        max_iterations: a.max_iters.unwrap_or(d.max_iterations),
    };
    let seed = a.seed.unwrap_or(0);
    let count = a.starts.unwrap_or(100);
    let csg_iterations = a.csg_iters.unwrap_or(0);
    let paint = PaintObjective::bright_red();
    let starts = paint_starts(&paint, count, seed);
    let outcomes = baseline_study(&paint, &config, &starts)?;
    let csg = if csg_iterations > 0 { csg_study(&paint, &starts, csg_iterations, seed)? } else { Vec::new() };

    let mut header: Vec<String> = [
        "start", "start_1", "start_2", "iterations", "converged", "u_1", "u_2", "objective", "stationarity", "reference_stationarity", "wrong",
    ]
    .map(String::from)
    .to_vec();
    if !csg.is_empty() {
        header.extend(["csg_u_1", "csg_u_2", "csg_reference_stationarity"].map(String::from));
    }
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let t = o.run.terminal();
            let mut row = vec![i.to_string(), field(Some(o.run.start[0])), field(Some(o.run.start[1])), o.run.iterations().to_string()];
            row.push(o.run.converged.to_string());
            row.extend([t[0], t[1], o.run.objective, o.run.stationarity, o.reference_stationarity].map(|v| field(Some(v))));
            row.push(o.is_wrong().to_string());
            if let Some(c) = csg.get(i) {
                row.extend([c.terminal[0], c.terminal[1], c.reference_stationarity].map(|v| field(Some(v))));
            }
            row
        })
        .collect();
    write_csv(&out, &header, &rows)?;

    let wrong = outcomes.iter().filter(|o| o.is_wrong()).count();
    let stationary = csg.iter().filter(|c| c.is_stationary()).count();
    let mut checks = vec![checks::artifact_present(wrong, count)];
    if !csg.is_empty() {
        checks.push(checks::csg_stationary(stationary, csg.len()));
    }
    let results = BaselineResults {
        starts: count,
        converged: outcomes.iter().filter(|o| o.run.converged).count(),
        wrong,
        csg_runs: csg.len(),
        csg_stationary: stationary,
    };
    let config_json = json!({ "baseline": config, "starts": count, "seed": seed, "csg_iterations": csg_iterations });
    let summary = write_summary(&out, "baseline", config_json, results, checks.clone())?;
    done(&out, &summary, &checks);
    Ok(())
}

fn estimate_command(a: EstimateArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let method = a.method.unwrap_or(EstimateMethod::Csg);
    let seed = a.seed.unwrap_or(0);
    let evaluations = a.evals.unwrap_or(10_000);
    let paint = PaintObjective::bright_red();
    let u = design(a.design.as_deref().unwrap_or("38,125"), "--design")?;
    if !paint.design_box().contains(&u) {
        bail!("--design {u:?} lies outside the design box");
    }
    let (reference, _) = paint.reference(&u);
    let (series, config_json) = match method {
        EstimateMethod::Csg => {
            let mut config = paint_estimate_config(u.clone(), evaluations / 2, seed, 0);
            config.outer_scheme = weights(a.outer_weights.as_deref(), config.outer_scheme)?;
            config.inner_scheme = weights(a.inner_weights.as_deref(), config.inner_scheme)?;
            let series = csg_objective_series(&paint, &config)?;
            let logged = config.log.mask(series.len()).split_off(1);
            ((series, logged), json!({ "method": "csg", "evaluations": evaluations, "nested": config }))
        }
        EstimateMethod::Mc => {
            let series = mc_objective_estimator(&paint, &u, evaluations, &mut rng_stream(seed, 0))?;
            let logged = vec![true; series.len()];
            ((series, logged), json!({ "method": "mc", "evaluations": evaluations, "seed": seed, "design": u }))
        }
    };
    let (series, logged) = series;
    let header: Vec<String> = ["evaluations", "estimate", "relative_error"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = series
        .iter()
        .zip(&logged)
        .filter(|(_, l)| **l)
        .map(|(p, _)| {
            vec![p.evaluations.to_string(), field(Some(p.estimate)), field(Some((p.estimate - reference).abs() / reference.abs()))]
        })
        .collect();
    write_csv(&out, &header, &rows)?;

    let reached = evaluations_to_tolerance(&series, reference, ESTIMATE_TOLERANCE);
    let last = series.last().map(|p| p.estimate);
    let checks = vec![Check::new(
        "reaches_tolerance",
        reached.is_some(),
        format!("within {:.0}% of {reference:.4} from {reached:?} evaluations on", 100.0 * ESTIMATE_TOLERANCE),
    )];
    let results = json!({
        "reference_objective": reference,
        "final_estimate": last,
        "evaluations_used": series.last().map(|p| p.evaluations),
        "evaluations_to_tolerance": reached,
    });
    let summary = write_summary(&out, "estimate", config_json, results, checks.clone())?;
    done(&out, &summary, &checks);
    Ok(())
}

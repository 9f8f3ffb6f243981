use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::args::{BenchArgs, Cli, Command, EvalArgs, GenArgs, OracleArgs, OracleMethod, ProblemArgs, SolveArgs};
use super::io::{emit_json, read_points, read_rows, write_matrix};
use super::report::{self, Manifest};
use super::{CliError, CliResult};
use crate::affine::{affine_solve, AffineConfig};
use crate::datagen::{gen_affine_planted, gen_planted, OutlierModel};
use crate::geometry::{default_tolerance, orthonormalize, residual_norms, Basis, PointSet};
use crate::mestimators::{m_estimator_solve, LossFunction, MEstimatorConfig};
use crate::oracle::{
    binomial, exact_optimum_p2, exact_optimum_p2_branch_bound, exact_optimum_p_general, OracleResult, SUBSET_BUDGET,
};
use crate::sampling::Seed;
use crate::solver::{inlier_count, line_solver, nearest_from_residuals, solve_outliers, trimmed_loss_from_residuals};
use crate::solver::{SolveReport, SolverConfig};

pub(super) fn dispatch(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs.unwrap_or(0))))?;
    pool.install(|| match cli.command {
        Command::Gen(a) => cmd_gen(a, argv),
        Command::Solve(a) => cmd_solve(a, argv),
        Command::Oracle(a) => cmd_oracle(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Bench(a) => cmd_bench(a, argv),
    })
}

/// `min(0.1, 1 - alpha)`.
pub fn default_delta(alpha: f64) -> f64 {
    0.1f64.min(1.0 - alpha)
}

fn parse_model(spec: &str, scale: Option<f64>) -> CliResult<OutlierModel> {
    let model: OutlierModel = spec.parse()?;
    Ok(match scale {
        Some(s) => OutlierModel::from_name(&model.to_string(), s)?,
        None => model,
    })
}

fn cmd_gen(a: GenArgs, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = Manifest::new("gen", argv, Some(a.seed));
    let model = parse_model(&a.outliers, a.outlier_scale)?;
    manifest.config(json!({
        "n": a.n, "d": a.d, "k": a.k, "alpha": a.alpha, "sigma_in": a.sigma,
        "outliers": model.to_string(), "outlier_scale": model.scale(), "origin_scale": a.origin_scale,
    }));
    let seed = Seed(a.seed);
    let (x, truth) = match a.origin_scale {
        Some(s) => gen_affine_planted(a.n, a.d, a.k, a.alpha, a.sigma, model, s, seed)?,
        None => gen_planted(a.n, a.d, a.k, a.alpha, a.sigma, model, seed)?,
    };
    let header = format!("osa gen n={} d={} k={} alpha={} seed={}", a.n, a.d, a.k, a.alpha, a.seed);
    write_matrix(&a.out, x.matrix(), Some(&header))?;
    let result = report::truth_result(&truth, &model.to_string(), &a.out.display().to_string());
    emit_json(a.truth.as_deref(), &manifest.finish(result))
}

fn solver_config(problem: &ProblemArgs, a: &SolveArgs) -> CliResult<SolverConfig> {
    let delta = a.delta.unwrap_or_else(|| default_delta(problem.alpha));
    let mut cfg = SolverConfig::new(problem.k, problem.p, problem.alpha, a.epsilon, delta)?.with_seed(Seed(a.seed));
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    if let Some(b) = a.batch {
        cfg.batch_size = b;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_echo(cfg: &SolverConfig) -> Value {
    json!({
        "k": cfg.k, "p": cfg.p, "alpha": cfg.alpha, "epsilon": cfg.epsilon, "delta": cfg.delta,
        "rounds": cfg.rounds, "inner_batches": cfg.inner_batches, "batch_size": cfg.batch_size,
        "trials": cfg.trials, "extraction_iters": cfg.extraction_iters,
        "extraction_restarts": cfg.extraction_restarts, "seed": cfg.seed.0,
    })
}

fn cmd_solve(a: SolveArgs, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = Manifest::new("solve", argv, Some(a.seed));
    if a.affine && a.loss.is_some() {
        return Err(CliError::Usage("--affine and --loss cannot be combined".into()));
    }
    let (x, info) = read_points(&a.problem.input)?;
    manifest.input(info);
    let cfg = solver_config(&a.problem, &a)?;
    let mut echo = config_echo(&cfg);

    let (method, report): (&str, SolveReport) = if a.affine {
        let acfg = AffineConfig::new(a.eta, cfg)?;
        echo["affine"] = json!({ "eta": acfg.eta, "sample_size": acfg.sample_size });
        manifest.config(echo.clone());
        ("affine", affine_solve(&x, &acfg)?)
    } else if let Some(loss) = &a.loss {
        let mcfg = MEstimatorConfig::new(loss.parse()?, cfg)?;
        echo["loss"] = json!(mcfg.loss.to_string());
        echo["sample_constant"] = json!(mcfg.sample_constant);
        echo["refine"] = json!(mcfg.refine);
        manifest.config(echo.clone());
        ("m-estimator", m_estimator_solve(&x, &mcfg)?)
    } else if cfg.k == 1 && cfg.p == 2.0 {
        manifest.config(echo.clone());
        ("line", line_solver(&x, &cfg)?)
    } else {
        manifest.config(echo.clone());
        ("adaptive", solve_outliers(&x, &cfg)?)
    };
    log::info!("{method} solve: cost {} in {:.1} ms", report.trimmed_cost_k, report.wall_time_ms);

    if report.subspace.dim() < a.problem.k {
        manifest.warn(format!("data has rank {} < k = {}; the subspace is smaller than k", report.subspace.dim(), a.problem.k));
    }
    if let Some(path) = &a.basis_out {
        write_matrix(path, &report.subspace.matrix().transpose(), None)?;
    }
    if let Some(path) = &a.origin_out {
        let origin = report.affine.as_ref().map_or_else(|| DVector::zeros(x.d()), |s| s.origin.clone());
        write_matrix(path, &DMatrix::from_row_slice(1, origin.len(), origin.as_slice()), None)?;
    }
    emit_json(a.out.as_deref(), &manifest.finish(report::solve_result(method, &report)))
}

fn cmd_oracle(a: OracleArgs, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = Manifest::new("oracle", argv, None);
    let pr = &a.problem;
    let (x, info) = read_points(&pr.input)?;
    manifest.input(info);
    let h = inlier_count(x.n(), pr.alpha)?;
    let subsets = binomial(x.n(), h);
    let method = match a.method {
        OracleMethod::Auto if subsets <= SUBSET_BUDGET || pr.p != 2.0 => OracleMethod::Enumerate,
        OracleMethod::Auto => OracleMethod::BranchBound,
        m => m,
    };
    manifest.config(json!({
        "k": pr.k, "p": pr.p, "alpha": pr.alpha, "method": format!("{method:?}").to_lowercase(),
        "node_budget": a.node_budget, "subsets": subsets,
    }));
    let (name, result): (&str, OracleResult) = match method {
        OracleMethod::BranchBound if pr.p != 2.0 => {
            return Err(CliError::Usage("branch and bound supports p = 2 only".into()));
        }
        OracleMethod::BranchBound => ("branch-bound", exact_optimum_p2_branch_bound(&x, pr.k, pr.alpha, a.node_budget)?),
        _ if pr.p == 2.0 => ("enumerate", exact_optimum_p2(&x, pr.k, pr.alpha)?),
        _ => {
            manifest.warn("p != 2: each subset is fitted approximately, so best_cost is an upper bound".into());
            ("enumerate", exact_optimum_p_general(&x, pr.k, pr.alpha, pr.p)?)
        }
    };
    if let Some(path) = &a.basis_out {
        write_matrix(path, &result.best_subspace.matrix().transpose(), None)?;
    }
    emit_json(a.out.as_deref(), &manifest.finish(report::oracle_result(name, &result)))
}

/// Reads a basis CSV (one vector per row) and orthonormalizes it when it
/// is not already orthonormal.
fn read_basis(path: &Path, d: usize, manifest: &mut Manifest) -> CliResult<(Basis, bool)> {
    let rows = read_rows(path)?;
    let width = rows[0].len();
    if width != d {
        return Err(CliError::Data(format!("{}: basis vectors have {width} entries, points have {d}", path.display())));
    }
    let columns = DMatrix::from_fn(d, rows.len(), |i, j| rows[j][i]);
    if let Ok(b) = Basis::from_orthonormal_columns(columns.clone(), 1e-9) {
        return Ok((b, false));
    }
    let vectors: Vec<DVector<f64>> = columns.column_iter().map(|c| c.into_owned()).collect();
    let b = orthonormalize(d, &vectors, default_tolerance(&vectors))?;
    manifest.warn(format!(
        "{}: basis was not orthonormal; orthonormalized {} vectors to dimension {}",
        path.display(),
        rows.len(),
        b.dim()
    ));
    Ok((b, true))
}

fn cmd_eval(a: EvalArgs, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = Manifest::new("eval", argv, None);
    let (x, info) = read_points(&a.input)?;
    manifest.input(info);
    let loss: LossFunction = match &a.loss {
        Some(s) => s.parse()?,
        None => LossFunction::PthPower(a.p),
    };
    loss.validate()?;
    manifest.config(json!({
        "basis": a.basis.display().to_string(),
        "origin": a.origin.as_ref().map(|p| p.display().to_string()),
        "alpha": a.alpha, "loss": loss.to_string(),
    }));
    let (basis, orthonormalized) = read_basis(&a.basis, x.d(), &mut manifest)?;
    let shifted: PointSet = match &a.origin {
        Some(path) => {
            let rows = read_rows(path)?;
            if rows.len() != 1 || rows[0].len() != x.d() {
                return Err(CliError::Data(format!("{}: expected one row of {} values", path.display(), x.d())));
            }
            x.translated(&-DVector::from_vec(rows[0].clone()))?
        }
        None => x,
    };
    let h = inlier_count(shifted.n(), a.alpha)?;
    let residuals = residual_norms(&shifted, &basis)?;
    let result = json!({
        "cost": trimmed_loss_from_residuals(&residuals, h, &loss),
        "k": basis.dim(),
        "orthonormalized": orthonormalized,
        "inlier_indices": nearest_from_residuals(&residuals, h),
    });
    emit_json(a.out.as_deref(), &manifest.finish(result))
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    n: usize,
    d: usize,
    k: usize,
    alpha: f64,
    epsilon: f64,
    delta: f64,
}

struct BenchRow {
    cost: f64,
    oracle_cost: f64,
    oracle_kind: &'static str,
    ms: f64,
}

fn grid(a: &BenchArgs) -> CliResult<Vec<GridPoint>> {
    for (name, empty) in [("n", a.n.is_empty()), ("d", a.d.is_empty()), ("k", a.k.is_empty()), ("alpha", a.alpha.is_empty()), ("epsilon", a.epsilon.is_empty())] {
        if empty {
            return Err(CliError::Usage(format!("--{name} needs at least one value")));
        }
    }
    let mut points = Vec::new();
    for &n in &a.n {
        for &d in &a.d {
            for &k in &a.k {
                for &alpha in &a.alpha {
                    for &epsilon in &a.epsilon {
                        let deltas = if a.delta.is_empty() { vec![default_delta(alpha)] } else { a.delta.clone() };
                        for delta in deltas {
                            points.push(GridPoint { n, d, k, alpha, epsilon, delta });
                        }
                    }
                }
            }
        }
    }
    Ok(points)
}

fn bench_trial(g: GridPoint, p: f64, sigma: f64, model: OutlierModel, oracle_budget: f64, seed: Seed) -> CliResult<BenchRow> {
    let (x, truth) = gen_planted(g.n, g.d, g.k, g.alpha, sigma, model, seed)?;
    let cfg = SolverConfig::new(g.k, p, g.alpha, g.epsilon, g.delta)?.with_seed(seed.derive(2, 0));
    let report = solve_outliers(&x, &cfg)?;
    let h = inlier_count(g.n, g.alpha)?;
    let (oracle_cost, oracle_kind) = if binomial(g.n, h) <= oracle_budget.min(SUBSET_BUDGET) {
        if p == 2.0 {
            (exact_optimum_p2(&x, g.k, g.alpha)?.best_cost, "exact")
        } else {
            (exact_optimum_p_general(&x, g.k, g.alpha, p)?.best_cost, "enumerated")
        }
    } else {
        (truth.inlier_cost(&x, p)?, "planted")
    };
    Ok(BenchRow { cost: report.trimmed_cost_k, oracle_cost, oracle_kind, ms: report.wall_time_ms })
}

fn ratio(cost: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        cost / reference
    } else if cost <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn cmd_bench(a: BenchArgs, argv: Vec<String>) -> CliResult<()> {
    let mut manifest = Manifest::new("bench", argv, Some(a.seed));
    let model: OutlierModel = a.outliers.parse()?;
    if a.trials < 1 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let points = grid(&a)?;
    manifest.config(json!({
        "n": a.n, "d": a.d, "k": a.k, "alpha": a.alpha, "epsilon": a.epsilon,
        "delta": points.iter().map(|g| g.delta).collect::<Vec<_>>(),
        "p": a.p, "trials": a.trials, "sigma_in": a.sigma, "outliers": model.to_string(),
        "outlier_scale": model.scale(), "oracle_budget": a.oracle_budget,
    }));

    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|g| (0..a.trials).map(move |t| (g, t))).collect();
    let base = Seed(a.seed);
    let rows: Vec<BenchRow> = tasks
        .par_iter()
        .map(|&(g, t)| bench_trial(points[g], a.p, a.sigma, model, a.oracle_budget, base.derive(g as u64 + 1, t as u64)))
        .collect::<CliResult<_>>()?;

    let mut writer = csv::Writer::from_path(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", a.out.display()));
    writer
        .write_record(["n", "d", "k", "alpha", "epsilon", "delta", "trial", "cost", "oracle_cost", "ratio", "ms", "oracle_kind"])
        .map_err(csv_err)?;
    for (&(g, t), row) in tasks.iter().zip(&rows) {
        let gp = points[g];
        writer
            .write_record([
                gp.n.to_string(),
                gp.d.to_string(),
                gp.k.to_string(),
                gp.alpha.to_string(),
                gp.epsilon.to_string(),
                gp.delta.to_string(),
                t.to_string(),
                row.cost.to_string(),
                row.oracle_cost.to_string(),
                ratio(row.cost, row.oracle_cost).to_string(),
                format!("{:.3}", row.ms),
                row.oracle_kind.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;

    let summary: Vec<Value> = points
        .iter()
        .enumerate()
        .map(|(g, gp)| {
            let mut ratios: Vec<f64> = tasks
                .iter()
                .zip(&rows)
                .filter(|((gi, _), _)| *gi == g)
                .map(|(_, r)| ratio(r.cost, r.oracle_cost))
                .collect();
            ratios.sort_by(f64::total_cmp);
            let success = ratios.iter().filter(|&&r| r <= 1.0 + gp.epsilon).count();
            json!({
                "n": gp.n, "d": gp.d, "k": gp.k, "alpha": gp.alpha, "epsilon": gp.epsilon, "delta": gp.delta,
                "median_ratio": ratios[ratios.len() / 2],
                "success_rate": success as f64 / ratios.len() as f64,
            })
        })
        .collect();
    let result = json!({ "csv": a.out.display().to_string(), "rows": rows.len(), "summary": summary });
    emit_json(None, &manifest.finish(result))
}

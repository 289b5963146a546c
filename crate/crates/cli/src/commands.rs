//! Command implementations: load data, run the requested job, write artifacts.
//!
//! Conventions: log lines go to stderr; data goes to stdout (human text, or
//! machine JSON under `--json`) and to the files named by `--out`/`--out-dir`.
//! All CSV floats use 12 significant digits; JSON artifacts serialize with
//! sorted keys. Outputs are deterministic given the config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use structured_gic::data_io::{fmt_sig12, read_groups_json, read_matrix_json, read_tabular_csv};
use structured_gic::experiments::{
    check_assumptions, details_csv, gen_group_glm, gen_lowrank, report_csv, run_experiment,
    DesignSpec, Instance,
};
use structured_gic::{
    all_group_supports, default_psi_budget, lambda_grid, select_exhaustive, select_on_path,
    solve_regularized, xi_n, Dataset, ExhaustiveSelection, GicError, GicResult,
    GlmFamily, GroupPartition, LossProblem, ModelSubspace, ParamPoint, PathEntry, PathSelection,
    PenaltySchedule, RegularizerSpec, Result, ScheduleKind, SolveOptions,
};

use crate::config::{CommandKind, RegKind, RunConfig};

fn invalid(msg: impl Into<String>) -> GicError {
    GicError::InvalidArgument(msg.into())
}

fn info(msg: impl AsRef<str>) {
    eprintln!("info: {}", msg.as_ref());
}

/// Resolve the worker-thread cap: `STRUCTURED_GIC_THREADS` overrides
/// `--threads`; unset/empty falls back to the flag, then to all cores.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("STRUCTURED_GIC_THREADS") {
        Ok(s) if !s.is_empty() => s
            .parse::<usize>()
            .map(Some)
            .map_err(|_| invalid(format!("STRUCTURED_GIC_THREADS must be an integer, got '{s}'"))),
        _ => Ok(flag),
    }
}

/// Run one configured job. Errors map to exit 2 (bad config/data) or
/// exit 3 (numerical failure) in `main`.
pub fn run(config: &RunConfig) -> Result<()> {
    let threads = resolve_threads(config.threads)?;
    let effective = structured_gic::parallel::configure_threads(threads);
    info(format!("worker threads: {effective}"));
    match config.command {
        CommandKind::Fit => run_fit(config),
        CommandKind::Path => run_path(config),
        CommandKind::Select => run_select(config),
        CommandKind::Experiment => run_experiment_cmd(config),
        CommandKind::Diagnose => run_diagnose(config),
    }
}

/// Load the dataset + regularizer a data-driven command works on. The
/// regularizer picks the format: tabular CSV for group/l1, matrix JSON for
/// nuclear.
fn load_problem(config: &RunConfig) -> Result<(LossProblem, RegularizerSpec)> {
    let reg = config.reg.ok_or_else(|| invalid("missing --reg (group | l1 | nuclear)"))?;
    let data = config
        .data
        .as_deref()
        .ok_or_else(|| invalid("missing --data (input dataset file)"))?;
    match reg {
        RegKind::Group | RegKind::L1 => {
            let (x, y) = read_tabular_csv(data)?;
            let p = x.ncols();
            let family = config.family.unwrap_or(GlmFamily::Gaussian);
            let partition = match (reg, config.groups_file.as_deref()) {
                (RegKind::Group, Some(path)) => read_groups_json(path, p)?,
                (RegKind::Group, None) => {
                    return Err(invalid("--reg group requires --groups-file"))
                }
                (RegKind::L1, None) => GroupPartition::singletons(p),
                (RegKind::L1, Some(_)) => {
                    return Err(invalid("--groups-file only applies to --reg group"))
                }
                _ => unreachable!(),
            };
            info(format!("loaded {} rows, {p} columns from {}", x.nrows(), data.display()));
            let problem = LossProblem::new(Dataset::tabular(x, y, family)?);
            Ok((problem, RegularizerSpec::group_l2(partition)))
        }
        RegKind::Nuclear => {
            if config.groups_file.is_some() {
                return Err(invalid("--groups-file only applies to --reg group"));
            }
            let (xs, y) = read_matrix_json(data)?;
            let (p1, p2) = xs[0].dim();
            info(format!("loaded {} matrix observations ({p1}x{p2}) from {}", y.len(), data.display()));
            let problem = LossProblem::new(Dataset::matrix_reg(xs, y)?);
            Ok((problem, RegularizerSpec::nuclear()))
        }
    }
}

fn schedule_for(
    config: &RunConfig,
    problem: &LossProblem,
    reg: &RegularizerSpec,
) -> Result<PenaltySchedule> {
    let n = problem.n();
    let kind = match reg.partition() {
        Some(partition) => ScheduleKind::GroupGlm {
            m: partition.max_group_size(),
            g: partition.num_groups(),
            n,
        },
        None => match problem.param_shape() {
            structured_gic::ParamShape::Matrix(p1, p2) => ScheduleKind::LowRank { p1, p2, n },
            structured_gic::ParamShape::Vector(_) => {
                return Err(invalid("nuclear schedule needs matrix data"))
            }
        },
    };
    PenaltySchedule::new(kind, config.c_gic, config.log_n)
}

fn solve_options(config: &RunConfig, record_trace: bool) -> SolveOptions {
    SolveOptions {
        max_iter: config.max_iter,
        tol_kkt: config.tol_kkt,
        record_trace,
        ..SolveOptions::default()
    }
}

fn theta_json(theta: &ParamPoint) -> serde_json::Value {
    match theta {
        ParamPoint::Vector(v) => serde_json::json!(v.to_vec()),
        ParamPoint::Matrix(m) => {
            serde_json::json!(m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    info(format!("wrote {}", path.display()));
    Ok(())
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serialization");
    s.push('\n');
    s
}

/// Print the machine JSON under `--json`, the human lines otherwise.
fn emit(config: &RunConfig, human: String, machine: &serde_json::Value) {
    if config.json {
        print!("{}", json_text(machine));
    } else {
        print!("{human}");
    }
}

fn stem_path(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    stem.with_file_name(name)
}

// ---- fit ----------------------------------------------------------------

fn run_fit(config: &RunConfig) -> Result<()> {
    let (problem, reg) = load_problem(config)?;
    let lambda = config.lambda.ok_or_else(|| invalid("missing --lambda (penalty weight)"))?;
    let opts = solve_options(config, config.trace_out.is_some());
    let outcome = solve_regularized(&problem, &reg, lambda, None, &opts)?;

    if let Some(trace_path_out) = config.trace_out.as_deref() {
        let mut lines = String::new();
        for t in &outcome.trace {
            let rec = serde_json::json!({
                "iter": t.iteration,
                "objective": t.objective,
                "kkt_residual": t.kkt,
                "step": t.step,
            });
            lines.push_str(&serde_json::to_string(&rec).expect("trace record"));
            lines.push('\n');
        }
        write_file(trace_path_out, &lines)?;
    }

    let model = reg.extract_model(&outcome.theta, xi_n(lambda, config.c_xi))?;
    let result = serde_json::json!({
        "lambda": lambda,
        "objective": outcome.objective,
        "kkt_residual": outcome.kkt,
        "iterations": outcome.iterations,
        "converged": outcome.converged,
        "model": model.to_report_json(),
        "psi_sq": model.psi_sq(),
        "theta": theta_json(&outcome.theta),
    });
    if let Some(out) = config.out.as_deref() {
        write_file(out, &json_text(&result))?;
    }
    let human = format!(
        "lambda      {}\nobjective   {}\nkkt         {}\niterations  {}\nconverged   {}\nmodel       {}\n",
        fmt_sig12(lambda),
        fmt_sig12(outcome.objective),
        fmt_sig12(outcome.kkt),
        outcome.iterations,
        outcome.converged,
        model_label(&model),
    );
    emit(config, human, &result);

    if !outcome.converged {
        if config.out.is_some() || config.trace_out.is_some() {
            eprintln!("warning: partial outputs were written despite non-convergence");
        }
        return Err(GicError::NotConverged {
            iterations: outcome.iterations,
            residual: outcome.kkt,
        });
    }
    Ok(())
}

fn model_label(model: &ModelSubspace) -> String {
    match model.support() {
        Some(s) => format!(
            "group support {{{}}} (psi_sq = {})",
            s.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", "),
            model.psi_sq()
        ),
        None => format!("rank {} (psi_sq = {})", model.complexity(), model.psi_sq()),
    }
}

// ---- path ----------------------------------------------------------------

fn path_table_csv(selection: &PathSelection) -> String {
    let mut out =
        String::from("lambda,kkt,support_size_or_rank,loss,psi_sq,a_n,gic,selected\n");
    for (i, entry) in selection.entries.iter().enumerate() {
        let PathEntry { point, gic, .. } = entry;
        let (loss, gic_val) = match gic {
            Some(g) => (fmt_sig12(g.loss), fmt_sig12(g.gic)),
            // Excluded points (unconverged / over budget) have no refit.
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_sig12(point.lambda),
            fmt_sig12(point.kkt),
            point.model.complexity(),
            loss,
            fmt_sig12(point.model.psi_sq()),
            fmt_sig12(selection.a_n),
            gic_val,
            (selection.best == Some(i)) as u8,
        ));
    }
    out
}

fn selection_json(selection: &PathSelection) -> serde_json::Value {
    match selection.best_entry().and_then(|e| e.gic.as_ref()) {
        Some(best) => serde_json::json!({
            "lambda": selection.best_entry().map(|e| e.point.lambda),
            "gic": best.gic,
            "loss": best.loss,
            "psi_sq": best.psi_sq,
            "a_n": best.a_n,
            "model": best.model.to_report_json(),
        }),
        None => serde_json::json!({
            "model": null,
            "exclusions": selection
                .entries
                .iter()
                .filter_map(|e| e.exclusion.clone())
                .collect::<Vec<_>>(),
        }),
    }
}

fn run_path(config: &RunConfig) -> Result<()> {
    let (problem, reg) = load_problem(config)?;
    let schedule = schedule_for(config, &problem, &reg)?;
    let budget = config.psi_budget.unwrap_or_else(|| default_psi_budget(&problem));
    let grid = lambda_grid(&problem, &reg, config.k_grid, config.ratio)?;
    info(format!(
        "grid: {} points, lambda {} .. {}",
        grid.len(),
        fmt_sig12(grid[0]),
        fmt_sig12(*grid.last().unwrap())
    ));
    let selection = select_on_path(
        &problem,
        &reg,
        &grid,
        &schedule,
        config.c_xi,
        budget,
        &solve_options(config, false),
    )?;
    for entry in &selection.entries {
        if let Some(reason) = &entry.exclusion {
            eprintln!("warning: lambda = {}: {reason}", fmt_sig12(entry.point.lambda));
        }
    }

    let table = path_table_csv(&selection);
    let best_json = selection_json(&selection);
    if let Some(out) = config.out.as_deref() {
        write_file(&stem_path(out, ".csv"), &table)?;
        write_file(&stem_path(out, ".model.json"), &json_text(&best_json))?;
    }
    let human = match selection.best_entry() {
        Some(e) => format!(
            "selected at lambda = {}: {}\ngic = {}\n{table}",
            fmt_sig12(e.point.lambda),
            model_label(&e.gic.as_ref().expect("selected entries are scored").model),
            fmt_sig12(e.gic.as_ref().expect("selected entries are scored").gic),
        ),
        None => format!("no admissible path point\n{table}"),
    };
    emit(config, human, &serde_json::json!({ "selected": best_json, "table_csv": table }));

    if selection.best.is_none() {
        if config.out.is_some() {
            eprintln!("warning: partial outputs were written despite an empty selection");
        }
        return Err(GicError::DegenerateData(
            "no path point was eligible for selection (see warnings)".into(),
        ));
    }
    Ok(())
}

// ---- select ----------------------------------------------------------------

fn select_table_csv(selection: &ExhaustiveSelection) -> String {
    let mut out = String::from("support,size,psi_sq,loss,a_n,gic,selected\n");
    for (i, r) in selection.results.iter().enumerate() {
        let support = r
            .model
            .support()
            .map(|s| s.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{support},{},{},{},{},{},{}\n",
            r.model.complexity(),
            fmt_sig12(r.psi_sq),
            fmt_sig12(r.loss),
            fmt_sig12(r.a_n),
            fmt_sig12(r.gic),
            (i == selection.best_index) as u8,
        ));
    }
    out
}

fn gic_json(result: &GicResult) -> serde_json::Value {
    serde_json::json!({
        "gic": result.gic,
        "loss": result.loss,
        "psi_sq": result.psi_sq,
        "a_n": result.a_n,
        "model": result.model.to_report_json(),
    })
}

fn run_select(config: &RunConfig) -> Result<()> {
    if config.reg == Some(RegKind::Nuclear) {
        return Err(invalid(
            "select enumerates group supports; low-rank candidates come from the path \
             (use the `path` subcommand for --reg nuclear)",
        ));
    }
    let (problem, reg) = load_problem(config)?;
    let partition = reg.partition().expect("group/l1 regularizers carry a partition");
    let schedule = schedule_for(config, &problem, &reg)?;
    let budget = config.psi_budget.unwrap_or_else(|| default_psi_budget(&problem));
    let candidates = all_group_supports(partition)?;
    info(format!("scoring {} candidate supports", candidates.len()));
    let selection = select_exhaustive(&problem, &candidates, &schedule, budget)?;

    let table = select_table_csv(&selection);
    let best = gic_json(selection.best());
    if let Some(out) = config.out.as_deref() {
        write_file(&stem_path(out, ".csv"), &table)?;
        write_file(&stem_path(out, ".model.json"), &json_text(&best))?;
    }
    let human = format!(
        "selected {}\ngic = {}\n{table}",
        model_label(&selection.best().model),
        fmt_sig12(selection.best().gic),
    );
    emit(config, human, &serde_json::json!({ "selected": best, "table_csv": table }));
    Ok(())
}

// ---- experiment ------------------------------------------------------------

fn run_experiment_cmd(config: &RunConfig) -> Result<()> {
    let spec = config
        .experiment
        .as_ref()
        .ok_or_else(|| invalid("missing --config (experiment spec JSON)"))?;
    let out_dir = config
        .out_dir
        .as_deref()
        .ok_or_else(|| invalid("missing --out-dir (report directory)"))?;
    info(format!(
        "experiment: {} sample sizes x {} replicates",
        spec.ns.len(),
        spec.replicates
    ));
    let report = run_experiment(spec)?;
    for failure in &report.failures {
        eprintln!("warning: replicate failed: {failure}");
    }

    fs::create_dir_all(out_dir)?;
    let csv = report_csv(&report);
    write_file(&out_dir.join("report.csv"), &csv)?;
    let full = serde_json::json!({
        "spec": spec,
        "rows": report.rows,
        "failures": report.failures,
    });
    write_file(&out_dir.join("report.json"), &json_text(&full))?;
    if config.verbose {
        write_file(&out_dir.join("details.csv"), &details_csv(&report))?;
    }
    emit(config, csv, &full);
    Ok(())
}

// ---- diagnose ----------------------------------------------------------------

fn generate(design: &DesignSpec) -> Result<Instance> {
    match design {
        DesignSpec::Group(d) => gen_group_glm(d, 0),
        DesignSpec::Lowrank(d) => gen_lowrank(d, 0),
    }
}

fn run_diagnose(config: &RunConfig) -> Result<()> {
    let design = config
        .design
        .as_ref()
        .ok_or_else(|| invalid("missing --design (synthetic design JSON)"))?;
    let inst = generate(design)?;
    let (n, kind) = match design {
        DesignSpec::Group(d) => (d.n, ScheduleKind::GroupGlm { m: d.m, g: d.g, n: d.n }),
        DesignSpec::Lowrank(d) => (d.n, ScheduleKind::LowRank { p1: d.p1, p2: d.p2, n: d.n }),
    };
    let schedule = PenaltySchedule::new(kind, config.c_gic, config.log_n)?;
    // Default lambda: twice the dual norm of the gradient at the truth — the
    // smallest theoretically admissible path weight.
    let lambda = match config.lambda {
        Some(l) => l,
        None => 2.0 * inst.reg.phi_dual(&inst.problem.loss_grad(&inst.theta_star)?)?,
    };
    info(format!("diagnosing n = {n}, lambda = {}", fmt_sig12(lambda)));
    let report = check_assumptions(&inst, config.kappa, config.tau_sq, config.eta, &schedule, lambda)?;

    let result = serde_json::json!({
        "n": n,
        "lambda": lambda,
        "a_n": schedule.a_n(),
        "psi_sq_star": inst.model_star.psi_sq(),
        "report": report,
    });
    if let Some(out) = config.out.as_deref() {
        write_file(out, &json_text(&result))?;
    }
    let verdict = |v: structured_gic::experiments::Verdict| {
        format!("{}  (lhs {} vs rhs {})", if v.holds { "holds" } else { "FAILS" }, fmt_sig12(v.lhs), fmt_sig12(v.rhs))
    };
    let human = format!(
        "kappa_hyp          {}\nA1 budget          {}\nA3 rate            {}\nA4 min signal      {}\nA4' path signal    {}\nRSC violation rate {}\n",
        fmt_sig12(report.kappa_hyp),
        verdict(report.a1),
        verdict(report.a3),
        verdict(report.a4),
        verdict(report.a4_prime),
        fmt_sig12(report.rsc_violation_rate),
    );
    emit(config, human, &result);
    Ok(())
}

// `main` exits via `process::exit`, which skips a final stdout flush.
pub fn flush_stdout() {
    let _ = std::io::stdout().flush();
}

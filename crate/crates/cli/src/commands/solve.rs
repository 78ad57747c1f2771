use serde_json::{json, Value};

use stableforms::fields::{d_field, hitchin_volume, FieldError, FormField, Grid};
use stableforms::model;
use stableforms::solver::{exact_perturbation, solve, Constraint, SolveError, SolveOptions, SolveProblem, SolveReport};

use crate::config::{BoundaryArgs, TorelliArgs};
use crate::report::CommandOutput;
use crate::{all_passed, Check, RunError};

fn field_error(e: FieldError) -> RunError {
    RunError::numerical("Field", e, json!({}))
}

fn solve_error(e: SolveError) -> RunError {
    match &e {
        SolveError::Stalled { iteration, steps, residual } => RunError::numerical(
            "Stalled",
            &e,
            json!({ "iteration": iteration, "steps": steps, "residual": residual }),
        ),
        SolveError::StabilityBreakdown { iteration, step, ratio, point } => RunError::numerical(
            "StabilityBreakdown",
            &e,
            json!({ "iteration": iteration, "step": step, "stability_ratio": ratio, "point": point }),
        ),
        _ => RunError::numerical("Solver", &e, json!({})),
    }
}

fn history_csv(r: &SolveReport) -> String {
    let mut s = String::from("iteration,residual,volume\n");
    for (i, (res, vol)) in r.residual_history.iter().zip(&r.volume_history).enumerate() {
        s.push_str(&format!("{i},{res:e},{vol:e}\n"));
    }
    s
}

/// Report fields and checks common to both solves.
fn summarize(r: &SolveReport, base: &FormField<f64>, b: &FormField<f64>, rtol: f64) -> Result<(Value, Vec<Check>), RunError> {
    let closed = d_field(&r.final_psi).map_err(field_error)?.data().iter().all(|&x| x == 0.0);
    let monotone = r.residual_history.windows(2).all(|w| w[1] < w[0]);
    let first = r.residual_history[0];
    let last = *r.residual_history.last().expect("history is never empty");
    let flat_volume = hitchin_volume(base).map_err(field_error)?;
    let final_volume = hitchin_volume(&r.final_psi).map_err(field_error)?;
    let active = |p: usize| base.grid().is_active(p);
    let value = json!({
        "converged": r.converged,
        "termination": r.termination,
        "iterations": r.iterations,
        "evaluations": r.evaluations,
        "perturbation_norm": b.norm_where(active),
        "base_norm": base.norm_where(active),
        "residual_initial": first,
        "residual_final": last,
        "residual_reduction": r.residual_reduction(),
        "residual_history": r.residual_history,
        "volume_history": r.volume_history,
        "flat_volume": flat_volume,
        "final_volume": final_volume,
        "volume_relative_change": (final_volume - flat_volume) / flat_volume,
        "periods": r.periods,
        "max_period_drift": r.max_period_drift,
        "min_stability_ratio": r.min_stability_ratio,
        "closed": closed,
        "monotone": monotone,
    });
    let reduction_target = if first == 0.0 { 1.0 } else { 1.0 / rtol };
    let checks = vec![
        Check::holds("converged", r.converged),
        Check::at_least("residual_reduction", r.residual_reduction(), reduction_target),
        Check::equals("max_period_drift", r.max_period_drift, 0.0),
        Check::holds("iterate_is_closed", closed),
        Check::holds("monotone_decrease", monotone),
    ];
    Ok((value, checks))
}

fn finish(mut value: Value, checks: Vec<Check>, report: SolveReport, dump: Option<&std::path::PathBuf>) -> CommandOutput {
    let passed = all_passed(&checks);
    value["checks"] = serde_json::to_value(&checks).expect("serializable");
    let mut out = CommandOutput::new(value, passed);
    out.csv = Some(history_csv(&report));
    out.dump = dump.map(|p| (p.clone(), report.final_psi));
    out
}

pub fn torelli(args: &TorelliArgs) -> Result<CommandOutput, RunError> {
    let grid = Grid::torus(args.n).map_err(|e| RunError::Invalid(e.to_string()))?;
    let base = FormField::constant(&grid, &model::psi());
    let (_, b) = exact_perturbation(&base, args.eps, args.seed, None, 36).map_err(field_error)?;
    let options = SolveOptions { rtol: args.rtol, max_iterations: args.max_iterations, ..SolveOptions::default() };
    let problem = SolveProblem::new(base.clone(), b.clone(), Constraint::Periodic).map_err(solve_error)?.with_options(options);
    let report = solve(&problem).map_err(solve_error)?;
    let (mut value, mut checks) = summarize(&report, &base, &b, args.rtol)?;
    let rel = value["volume_relative_change"].as_f64().unwrap_or(f64::NAN).abs();
    checks.push(Check::at_most("volume_matches_flat", rel, args.volume_rtol));
    value["grid"] = json!({ "kind": "torus", "n": args.n });
    Ok(finish(value, checks, report, args.dump.as_ref()))
}

pub fn boundary(args: &BoundaryArgs) -> Result<CommandOutput, RunError> {
    let grid = Grid::ball_torus(args.nx, args.nt).map_err(|e| RunError::Invalid(e.to_string()))?;
    let base = FormField::constant(&grid, &model::psi());
    let (_, b) = exact_perturbation(&base, args.eps, args.seed, Some(args.radius), 36).map_err(field_error)?;
    let options = SolveOptions { rtol: args.rtol, max_iterations: args.max_iterations, ..SolveOptions::default() };
    let problem =
        SolveProblem::new(base.clone(), b.clone(), Constraint::BoundaryZero).map_err(solve_error)?.with_options(options);
    let report = solve(&problem).map_err(solve_error)?;
    let (mut value, mut checks) = summarize(&report, &base, &b, args.rtol)?;
    let ncomp = report.final_alpha.ncomp();
    let boundary_zero = report
        .final_alpha
        .data()
        .chunks(ncomp)
        .enumerate()
        .all(|(p, v)| grid.is_free(p) || v.iter().all(|x| x.to_bits() == 0));
    checks.push(Check::holds("boundary_alpha_bit_zero", boundary_zero));
    let start = base.add(&b).map_err(field_error)?;
    let unchanged = report.final_psi.data().iter().zip(start.data()).all(|(a, s)| a.to_bits() == s.to_bits());
    if args.eps == 0.0 {
        checks.push(Check::holds("zero_perturbation_returns_base", unchanged && report.iterations == 0));
    }
    value["boundary_alpha_zero"] = json!(boundary_zero);
    value["grid"] = json!({ "kind": "ball-torus", "nx": args.nx, "nt": args.nt });
    Ok(finish(value, checks, report, args.dump.as_ref()))
}

//! `gradcheck`: central-difference verification of every differentiable op.

use serde::Serialize;

use pedseg_nn::gradcheck::GradCheckReport;

use crate::error::{CliError, Result};
use crate::manifest::RunContext;

/// Output file name of the check report.
pub const OUTPUT_REPORT: &str = "gradcheck.json";

#[derive(Debug, Serialize)]
struct OpRow {
    op: String,
    max_rel_error: f64,
    tolerance: f64,
    coords_checked: usize,
    coords_skipped: usize,
    passed: bool,
}

impl From<GradCheckReport> for OpRow {
    fn from(report: GradCheckReport) -> Self {
        OpRow {
            passed: report.passed(),
            op: report.op,
            max_rel_error: report.max_rel_error,
            tolerance: report.tolerance,
            coords_checked: report.coords_checked,
            coords_skipped: report.coords_skipped,
        }
    }
}

#[derive(Debug, Serialize)]
struct GradCheckJson {
    all_passed: bool,
    rounds: usize,
    ops: Vec<OpRow>,
}

pub fn run(ctx: &mut RunContext, rounds: usize) -> Result<()> {
    if rounds == 0 {
        return Err(CliError::Input("rounds must be at least 1".to_string()));
    }
    ctx.record("rounds", rounds);

    let mut reports = pedseg_nn::gradcheck::run_suite(ctx.seed, rounds);
    reports.extend(pedseg_train::gradcheck::run_loss_suite(ctx.seed, rounds));
    let rows: Vec<OpRow> = reports.into_iter().map(OpRow::from).collect();
    let all_passed = rows.iter().all(|r| r.passed);

    println!(
        "{:<28} {:>12} {:>9} {:>8} {:>7}",
        "op", "max_rel_err", "tolerance", "checked", "status"
    );
    for row in &rows {
        println!(
            "{:<28} {:>12.3e} {:>9.0e} {:>8} {:>7}",
            row.op,
            row.max_rel_error,
            row.tolerance,
            row.coords_checked,
            if row.passed { "ok" } else { "FAIL" }
        );
    }

    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.op.clone())
        .collect();
    let report = GradCheckJson {
        all_passed,
        rounds,
        ops: rows,
    };
    ctx.write_json(OUTPUT_REPORT, &report)?;

    if !failing.is_empty() {
        return Err(CliError::Check(format!(
            "gradient checks failed for: {}",
            failing.join(", ")
        )));
    }
    Ok(())
}

//! `schedule`: the cosine learning-rate table.

use pedseg_train::schedule::cosine_lr;

use crate::error::Result;
use crate::manifest::RunContext;

/// Output file name of the schedule table.
pub const OUTPUT_TABLE: &str = "schedule.csv";

pub fn run(ctx: &mut RunContext, eta0: f64, horizon: usize) -> Result<()> {
    ctx.record("eta0", eta0);
    ctx.record("horizon", horizon);

    let mut csv = String::from("t,eta\n");
    for t in 0..=horizon {
        let eta = cosine_lr(t, horizon, eta0)?;
        csv.push_str(&format!("{t},{eta}\n"));
    }
    ctx.write_text(OUTPUT_TABLE, &csv)?;
    print!("{csv}");
    Ok(())
}

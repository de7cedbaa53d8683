//! `train-toy`: the synthetic-blob training loop, with its NDJSON log and
//! outcome summary written out.

use serde::Serialize;

use pedseg_train::toy::{run_toy, to_ndjson, ToyConfig};

use crate::error::Result;
use crate::manifest::RunContext;

/// Output file names of the training artifacts.
pub const OUTPUT_LOG: &str = "train_log.ndjson";
pub const OUTPUT_OUTCOME: &str = "toy_outcome.json";

#[derive(Debug, Serialize)]
struct OutcomeJson {
    steps: usize,
    held_out_dice: f64,
    fp_mass_on_empty: f64,
    fp_voxels_on_empty: f64,
}

pub fn run(
    ctx: &mut RunContext,
    steps: usize,
    horizon: usize,
    theta: f64,
    alpha: f64,
    channels: usize,
    batch: usize,
) -> Result<()> {
    let config = ToyConfig {
        steps,
        horizon,
        theta,
        alpha,
        channels,
        batch,
        seed: ctx.seed,
        ..ToyConfig::default()
    };
    ctx.record("steps", config.steps);
    ctx.record("horizon", config.horizon);
    ctx.record("theta", config.theta);
    ctx.record("alpha", config.alpha);
    ctx.record("channels", config.channels);
    ctx.record("batch", config.batch);
    ctx.record("eval_volumes", config.eval_volumes);
    ctx.record("momentum", config.momentum);
    ctx.record("log_every", config.log_every);

    let outcome = run_toy(&config)?;
    ctx.write_text(OUTPUT_LOG, &to_ndjson(&outcome.records)?)?;
    ctx.write_json(
        OUTPUT_OUTCOME,
        &OutcomeJson {
            steps: config.steps,
            held_out_dice: outcome.held_out_dice,
            fp_mass_on_empty: outcome.fp_mass_on_empty,
            fp_voxels_on_empty: outcome.fp_voxels_on_empty,
        },
    )?;

    println!(
        "{} steps: held-out dice {:.4}, fp mass on empty {:.6}",
        config.steps, outcome.held_out_dice, outcome.fp_mass_on_empty
    );
    Ok(())
}

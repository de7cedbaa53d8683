//! Cosine learning-rate schedule: a single half-cosine from the initial
//! rate down to zero over a fixed horizon.

use crate::error::{Error, Result};

/// Default initial learning rate.
pub const DEFAULT_LR: f64 = 1e-2;
/// Default schedule horizon in epochs.
pub const DEFAULT_HORIZON: usize = 1000;

/// Learning rate at epoch `t` of a horizon of `horizon` epochs:
/// `eta0 * (1 + cos(pi * t / horizon)) / 2`.
///
/// The endpoints are exact in floating point: `t = 0` returns `eta0`,
/// `t = horizon` returns `0`, and `t = horizon / 2` (for even horizons)
/// returns `eta0 / 2`. Steps past the horizon are an error rather than a
/// silent clamp.
pub fn cosine_lr(t: usize, horizon: usize, eta0: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("schedule horizon must be positive".into()));
    }
    if !eta0.is_finite() || eta0 <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "initial learning rate must be positive and finite, got {eta0}"
        )));
    }
    if t > horizon {
        return Err(Error::OutOfHorizon { t, horizon });
    }
    let phase = std::f64::consts::PI * (t as f64) / (horizon as f64);
    Ok(eta0 * (1.0 + phase.cos()) / 2.0)
}

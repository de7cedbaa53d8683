//! SGD with Nesterov momentum, weight decay, and the cosine schedule.
//!
//! Velocity buffers are keyed by a caller-chosen parameter index and
//! allocated lazily on first use, then shape-checked on every subsequent
//! step. The learning rate is read from the cosine schedule at the
//! optimizer's current epoch; [`OptimizerState::advance`] moves the clock.

use pedseg_nn::tensor::Tensor5;

use crate::error::{Error, Result};
use crate::schedule::{cosine_lr, DEFAULT_LR};

/// Default momentum coefficient.
pub const DEFAULT_MOMENTUM: f64 = 0.99;
/// Default decoupled weight-decay coefficient.
pub const DEFAULT_WEIGHT_DECAY: f64 = 3e-5;

/// Mutable optimizer state: schedule position plus per-parameter velocity.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub eta0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Nesterov update by default; `false` selects classic heavy-ball.
    pub nesterov: bool,
    t: usize,
    horizon: usize,
    velocity: Vec<Option<Vec<f64>>>,
}

impl OptimizerState {
    /// State with default hyperparameters for `parameters` tensors over a
    /// `horizon`-epoch schedule.
    pub fn new(parameters: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("schedule horizon must be positive".into()));
        }
        Ok(OptimizerState {
            eta0: DEFAULT_LR,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            nesterov: true,
            t: 0,
            horizon,
            velocity: vec![None; parameters],
        })
    }

    pub fn epoch(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Learning rate at the current epoch.
    pub fn lr(&self) -> Result<f64> {
        cosine_lr(self.t, self.horizon, self.eta0)
    }

    /// Moves the schedule clock one epoch forward. Stepping past the
    /// horizon surfaces as an error on the next [`lr`](Self::lr) call.
    pub fn advance(&mut self) {
        self.t += 1;
    }

    /// Applies one SGD update to `param` in place, using `param.grad()` and
    /// the velocity buffer at `index`.
    ///
    /// With gradient `g`, weight decay folds in first (`g += wd * p`), then
    /// the velocity update `v = momentum * v + g`. The Nesterov step moves
    /// the parameter by `lr * (g + momentum * v)`; heavy-ball by `lr * v`.
    pub fn step_tensor(&mut self, index: usize, param: &mut Tensor5) -> Result<()> {
        let lr = self.lr()?;
        if index >= self.velocity.len() {
            return Err(Error::InvalidConfig(format!(
                "parameter index {index} out of range for {} velocity buffers",
                self.velocity.len()
            )));
        }
        let len = param.len();
        let slot = &mut self.velocity[index];
        let v = slot.get_or_insert_with(|| vec![0.0; len]);
        if v.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "velocity buffer {index} has {} entries, parameter has {len}",
                v.len()
            )));
        }
        let grad: Vec<f64> = param.grad().to_vec();
        let data = param.data_mut();
        for i in 0..len {
            let g = grad[i] + self.weight_decay * data[i];
            v[i] = self.momentum * v[i] + g;
            let update = if self.nesterov {
                g + self.momentum * v[i]
            } else {
                v[i]
            };
            data[i] -= lr * update;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pedseg_nn::tensor::Shape5;

    fn scalar_param(value: f64, grad: f64) -> Tensor5 {
        let mut t = Tensor5::filled(Shape5::new(1, 1, 1, 1, 1), value);
        t.grad_mut()[0] = grad;
        t
    }

    /// Optimizer with the schedule pinned to a constant lr and no decay, so
    /// updates can be unrolled by hand.
    fn plain(lr: f64, momentum: f64, nesterov: bool) -> OptimizerState {
        let mut opt = OptimizerState::new(4, 1_000_000).unwrap();
        opt.eta0 = lr; // t = 0 => cosine factor 1, lr() == eta0
        opt.momentum = momentum;
        opt.weight_decay = 0.0;
        opt.nesterov = nesterov;
        opt
    }

    #[test]
    fn nesterov_two_steps_match_hand_unroll() {
        // Constant gradient g, momentum 0.99:
        //   step 1: v = g,          p -= lr * g * (1 + 0.99)      = 1.99 g lr
        //   step 2: v = 1.99 g,     p -= lr * g * (1 + 0.99*1.99) = 2.9701 g lr
        // Total displacement: lr * g * 4.9601.
        let lr = 0.1;
        let g = 0.5;
        let mut opt = plain(lr, 0.99, true);
        let mut p = scalar_param(1.0, g);
        opt.step_tensor(0, &mut p).unwrap();
        p.grad_mut()[0] = g;
        opt.step_tensor(0, &mut p).unwrap();
        let expected = 1.0 - lr * g * 4.9601;
        assert!((p.data()[0] - expected).abs() < 1e-12, "{}", p.data()[0]);
    }

    #[test]
    fn heavy_ball_two_steps_match_hand_unroll() {
        // Heavy ball: p -= lr * v with v1 = g, v2 = 1.99 g => total 2.99 g lr.
        let lr = 0.1;
        let g = 0.5;
        let mut opt = plain(lr, 0.99, false);
        let mut p = scalar_param(1.0, g);
        opt.step_tensor(0, &mut p).unwrap();
        p.grad_mut()[0] = g;
        opt.step_tensor(0, &mut p).unwrap();
        let expected = 1.0 - lr * g * 2.99;
        assert!((p.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let mut opt = plain(0.1, 0.0, true);
        opt.weight_decay = 1e-2;
        let mut p = scalar_param(2.0, 0.0);
        opt.step_tensor(0, &mut p).unwrap();
        // g = wd * p = 0.02; update = g (momentum 0) => p -= 0.1 * 0.02.
        assert!((p.data()[0] - (2.0 - 0.002)).abs() < 1e-15);
    }

    #[test]
    fn velocity_buffers_are_independent_per_index() {
        let mut opt = plain(0.1, 0.9, true);
        let mut a = scalar_param(0.0, 1.0);
        let mut b = scalar_param(0.0, -1.0);
        opt.step_tensor(0, &mut a).unwrap();
        opt.step_tensor(1, &mut b).unwrap();
        // Symmetric gradients must give symmetric first steps.
        assert_eq!(a.data()[0], -b.data()[0]);
    }

    #[test]
    fn shape_change_on_same_index_is_rejected() {
        let mut opt = plain(0.1, 0.9, true);
        let mut a = scalar_param(0.0, 1.0);
        opt.step_tensor(0, &mut a).unwrap();
        let mut wide = Tensor5::filled(Shape5::new(1, 1, 1, 1, 2), 0.0);
        assert!(opt.step_tensor(0, &mut wide).is_err());
        assert!(opt.step_tensor(7, &mut a).is_err());
    }

    #[test]
    fn lr_follows_cosine_schedule_and_horizon() {
        let mut opt = OptimizerState::new(1, 10).unwrap();
        assert_eq!(opt.lr().unwrap(), DEFAULT_LR);
        for _ in 0..5 {
            opt.advance();
        }
        assert_eq!(opt.lr().unwrap(), DEFAULT_LR / 2.0);
        for _ in 0..5 {
            opt.advance();
        }
        assert_eq!(opt.lr().unwrap(), 0.0);
        opt.advance();
        assert!(matches!(opt.lr(), Err(Error::OutOfHorizon { .. })));
    }
}

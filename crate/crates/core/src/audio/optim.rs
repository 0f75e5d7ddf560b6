//! RMSProp with Nesterov-style momentum.
//!
//! Per element: the running mean square of the gradient decays with `rho`,
//! the velocity accumulates `mu`-damped steps, and the parameter moves by
//! `(mu * v_new - eps0 * g) / sqrt(rms_new + delta)`.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy)]
pub struct RmsPropConfig<T> {
    /// Base step size (eps0).
    pub step_size: T,
    /// Momentum coefficient (mu).
    pub momentum: T,
    /// Mean-square decay (rho).
    pub decay: T,
    /// Guard added inside the square root.
    pub delta: T,
}

impl<T: Real> Default for RmsPropConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::from_f64_lossy(0.0005),
            momentum: T::from_f64_lossy(0.46),
            decay: T::from_f64_lossy(0.92),
            delta: T::from_f64_lossy(1e-8),
        }
    }
}

/// Per-tensor optimizer buffers. The mean-square buffer starts at 1 so the
/// first step is well-scaled without special-casing.
#[derive(Debug, Clone)]
pub struct RmsPropState<T> {
    pub velocity: Vec<T>,
    pub mean_square: Vec<T>,
}

impl<T: Real> RmsPropState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            velocity: vec![T::zero(); len],
            mean_square: vec![T::one(); len],
        }
    }

    /// One update of `params` in place. Rejects non-finite gradients.
    pub fn step(&mut self, cfg: &RmsPropConfig<T>, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.velocity.len() {
            return Err(Error::DimensionMismatch {
                expected: self.velocity.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training("non-finite gradient".into()));
        }
        let one = T::one();
        for i in 0..params.len() {
            let g = grad[i];
            let rms = cfg.decay * self.mean_square[i] + (one - cfg.decay) * g * g;
            self.mean_square[i] = rms;
            let v = cfg.momentum * self.velocity[i] - cfg.step_size * g;
            self.velocity[i] = v;
            params[i] += (cfg.momentum * v - cfg.step_size * g) / (rms + cfg.delta).sqrt();
        }
        Ok(())
    }
}

use alloc::vec;
use alloc::vec::Vec;

use super::{check_same_layout, Parameters};
use crate::error::{Error, Result};
use crate::math;

/// Adam hyperparameters.
///
/// The defaults are β1 = 0.99, β2 = 0.9999 and a learning rate of 1e-3.
/// Note the β1 value is larger than the customary 0.9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.99,
            beta2: 0.9999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self { learning_rate, ..self }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::invalid(alloc::format!(
                "adam betas must lie in (0, 1), got {} and {}",
                self.beta1,
                self.beta2
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("adam learning rate must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Creates zeroed moments shaped like `params`.
    pub fn new<P: Parameters>(config: AdamConfig, params: &P) -> Result<Self> {
        config.validate()?;
        let shapes: Vec<usize> = params.groups().iter().map(|(_, g)| g.len()).collect();
        Ok(Self {
            config,
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update to `params`.
    ///
    /// Nothing is modified if any check fails.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        check_same_layout("adam_step", &*params, grads)?;
        let grad_groups = grads.groups();
        if grad_groups.len() != self.first_moment.len() {
            return Err(Error::shape("adam_step", self.first_moment.len(), grad_groups.len()));
        }
        for ((name, g), m) in grad_groups.iter().zip(&self.first_moment) {
            if g.len() != m.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: alloc::format!("state {name}[{}]", m.len()),
                    right: alloc::format!("{name}[{}]", g.len()),
                });
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("gradient {name}[{i}]")));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let correction1 = 1.0 - libm::pow(beta1, t);
        let correction2 = 1.0 - libm::pow(beta2, t);

        for (((_, p), (_, g)), (m, v)) in params
            .groups_mut()
            .into_iter()
            .zip(grad_groups)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

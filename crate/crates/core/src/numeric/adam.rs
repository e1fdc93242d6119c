//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::{MlpParams, NumericError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Moment accumulators for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &MlpParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One descent step along `gradients`. For ascent pass negated gradients.
    ///
    /// Gradients are validated before anything is written, so a rejected
    /// step leaves both the parameters and the state untouched.
    pub fn step(
        &mut self,
        params: &mut MlpParams,
        gradients: &MlpParams,
    ) -> Result<(), NumericError> {
        let grad_blocks = gradients.blocks();
        let shapes_ok = grad_blocks.len() == self.first_moment.len()
            && grad_blocks
                .iter()
                .zip(&self.first_moment)
                .all(|(g, m)| g.len() == m.len());
        let param_shapes_ok = params
            .blocks()
            .iter()
            .zip(&self.first_moment)
            .all(|(p, m)| p.len() == m.len());
        if !shapes_ok || !param_shapes_ok {
            return Err(NumericError::ShapeMismatch {
                context: "adam step".into(),
                expected: format!(
                    "blocks of sizes {:?}",
                    self.first_moment.iter().map(Vec::len).collect::<Vec<_>>()
                ),
                found: format!(
                    "{:?}",
                    grad_blocks.iter().map(|b| b.len()).collect::<Vec<_>>()
                ),
            });
        }
        if let Some(bad) = grad_blocks
            .iter()
            .position(|b| b.iter().any(|g| !g.is_finite()))
        {
            return Err(NumericError::NonFinite {
                block: MlpParams::block_name(bad),
            });
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for (((p_block, g_block), m_block), v_block) in params
            .blocks_mut()
            .into_iter()
            .zip(grad_blocks)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for (((p, &g), m), v) in p_block
                .iter_mut()
                .zip(g_block)
                .zip(m_block.iter_mut())
                .zip(v_block.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Matrix;

    fn scalar(w: f64) -> MlpParams {
        MlpParams {
            weights: vec![Matrix::from_vec(1, 1, vec![w]).unwrap()],
            biases: vec![vec![0.0]],
        }
    }

    #[test]
    fn default_hyperparameters() {
        let c = AdamConfig::default();
        assert_eq!((c.learning_rate, c.beta1, c.beta2), (1e-4, 0.5, 0.99));
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_counts_step() {
        let mut p = scalar(1.25);
        let mut state = AdamState::new(AdamConfig::default(), &p);
        state.step(&mut p, &scalar(0.0)).unwrap();
        assert_eq!(p, scalar(1.25));
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.7, -0.02, 150.0] {
            let mut p = scalar(0.0);
            let config = AdamConfig::default();
            let mut state = AdamState::new(config, &p);
            state.step(&mut p, &scalar(g)).unwrap();
            let moved = p.weights[0][(0, 0)];
            let expected =
                -g.signum() * config.learning_rate * g.abs() / (g.abs() + config.epsilon);
            assert!((moved - expected).abs() < 1e-18);
            assert!((moved.abs() - config.learning_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        // Reference run (same recurrences, computed separately): |w - 3| ≈ 3.36e-4.
        let config = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut p = scalar(0.0);
        let mut state = AdamState::new(config, &p);
        for _ in 0..200 {
            let w = p.weights[0][(0, 0)];
            state.step(&mut p, &scalar(2.0 * (w - 3.0))).unwrap();
        }
        let w = p.weights[0][(0, 0)];
        assert!((w - 3.0).abs() < 0.1);
        assert!((w - 2.9996642491027483).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_block_and_changes_nothing() {
        let mut p = scalar(1.0);
        let mut state = AdamState::new(AdamConfig::default(), &p);
        let mut g = scalar(0.5);
        g.biases[0][0] = f64::NAN;
        let err = state.step(&mut p, &g).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient in layer 0 biases");
        assert_eq!(state.step, 0);
        assert_eq!(p, scalar(1.0));
    }
}

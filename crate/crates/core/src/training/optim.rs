use serde::{Deserialize, Serialize};

use super::OptimizerKind;
use crate::encoder::EncoderParams;
use crate::error::{EsclError, Result};

/// Per-parameter optimizer memory, laid out like [`EncoderParams::flatten`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Sgd,
    Adam {
        step: u64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam { .. } => OptimizerState::Adam {
                step: 0,
                first_moment: vec![0.0; num_params],
                second_moment: vec![0.0; num_params],
            },
        }
    }

    /// Applies one update in place.
    pub fn apply(
        &mut self,
        kind: OptimizerKind,
        learning_rate: f64,
        params: &mut EncoderParams,
        grads: &EncoderParams,
    ) -> Result<()> {
        match (self, kind) {
            (OptimizerState::Sgd, OptimizerKind::Sgd) => {
                for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= learning_rate * d;
                    }
                }
                Ok(())
            }
            (
                OptimizerState::Adam {
                    step,
                    first_moment,
                    second_moment,
                },
                OptimizerKind::Adam { beta1, beta2, eps },
            ) => {
                if first_moment.len() != params.config().num_params() {
                    return Err(EsclError::Dimension(format!(
                        "optimizer state for {} parameters, model has {}",
                        first_moment.len(),
                        params.config().num_params()
                    )));
                }
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step as i32);
                let c2 = 1.0 - beta2.powi(*step as i32);
                let mut offset = 0;
                for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
                    let m = &mut first_moment[offset..offset + p.len()];
                    let v = &mut second_moment[offset..offset + p.len()];
                    for (((w, d), mi), vi) in p.iter_mut().zip(g).zip(m).zip(v) {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        *w -= learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                    offset += p.len();
                }
                Ok(())
            }
            (state, kind) => Err(EsclError::Config(format!(
                "optimizer state {} does not match optimizer {kind:?}",
                match state {
                    OptimizerState::Sgd => "sgd",
                    OptimizerState::Adam { .. } => "adam",
                }
            ))),
        }
    }
}

//! First-order optimizers operating on any [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::nn::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adam" => Some(Self::Adam),
            "sgd" => Some(Self::Sgd),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Optimizer state for one parameter group.
///
/// A step whose gradient is identically zero is skipped entirely: parameters,
/// moments and the step counter stay untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub steps: u64,
    pub first_moment: Vec<Mat>,
    pub second_moment: Vec<Mat>,
}

impl Optimizer {
    pub fn new<P: ParamSet>(kind: OptimizerKind, lr: f64, params: &P) -> Self {
        let zeros: Vec<Mat> = params
            .named_tensors()
            .into_iter()
            .map(|(_, t)| Mat::zeros(t.nrows(), t.ncols()))
            .collect();
        let second_moment = match kind {
            OptimizerKind::Adam => zeros.clone(),
            OptimizerKind::Sgd => Vec::new(),
        };
        let first_moment = match kind {
            OptimizerKind::Adam => zeros,
            OptimizerKind::Sgd => Vec::new(),
        };
        Self {
            kind,
            lr,
            steps: 0,
            first_moment,
            second_moment,
        }
    }

    /// Applies one descent step. Returns `false` when the step was skipped.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> bool {
        if grads.is_zero() {
            return false;
        }
        let grad_tensors: Vec<&Mat> = grads.named_tensors().into_iter().map(|(_, t)| t).collect();
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grad_tensors) {
                    p.zip_apply(g, |w, gv| *w -= self.lr * gv);
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bias1 = 1.0 - BETA1.powi(t);
                let bias2 = 1.0 - BETA2.powi(t);
                let lr = self.lr;
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grad_tensors)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    for (((w, &gi), mi), vi) in p
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(m.as_mut_slice())
                        .zip(v.as_mut_slice())
                    {
                        *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                        *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                        let m_hat = *mi / bias1;
                        let v_hat = *vi / bias2;
                        *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
        true
    }

    pub fn moments(&self) -> impl Iterator<Item = (&'static str, usize, &Mat)> {
        self.first_moment
            .iter()
            .enumerate()
            .map(|(i, m)| ("m", i, m))
            .chain(self.second_moment.iter().enumerate().map(|(i, v)| ("v", i, v)))
    }
}

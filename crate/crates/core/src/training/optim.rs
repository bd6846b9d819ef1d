use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd {
        step: f64,
        momentum: f64,
    },
    Adam {
        step: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl Optimizer {
    pub fn adam(step: f64) -> Self {
        Optimizer::Adam {
            step,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(step: f64) -> Self {
        Optimizer::Sgd { step, momentum: 0.0 }
    }

    pub fn step_size(&self) -> f64 {
        match *self {
            Optimizer::Sgd { step, .. } | Optimizer::Adam { step, .. } => step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Optimizer::Sgd { step, momentum } => step > 0.0 && (0.0..1.0).contains(&momentum),
            Optimizer::Adam {
                step,
                beta1,
                beta2,
                eps,
            } => step > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Per-parameter optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct OptimizerState {
    opt: Optimizer,
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    pub fn new(opt: Optimizer, len: usize) -> Self {
        let second = match opt {
            Optimizer::Adam { .. } => vec![0.0; len],
            Optimizer::Sgd { .. } => Vec::new(),
        };
        Self {
            opt,
            first: vec![0.0; len],
            second,
            t: 0,
        }
    }

    /// Descends along `grad`; entries with `mask[i] == false` are left untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], mask: &[bool]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), mask.len());
        self.t += 1;
        match self.opt {
            Optimizer::Sgd { step, momentum } => {
                for i in 0..params.len() {
                    if !mask[i] {
                        continue;
                    }
                    self.first[i] = momentum * self.first[i] + grad[i];
                    params[i] -= step * self.first[i];
                }
            }
            Optimizer::Adam {
                step,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    if !mask[i] {
                        continue;
                    }
                    let g = grad[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let m = self.first[i] / c1;
                    let v = self.second[i] / c2;
                    params[i] -= step * m / (v.sqrt() + eps);
                }
            }
        }
    }
}

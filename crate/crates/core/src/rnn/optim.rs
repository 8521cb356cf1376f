use crate::error::{arg_err, Error, Result};
use crate::numerics::{Grads, NumArray, ParamSet, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    /// Plain SGD whose rate is divided by `divisor` after every epoch that fails to
    /// improve the best validation perplexity.
    SgdDecay { lr0: f64, divisor: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_decay(lr0: f64, divisor: f64) -> Self {
        OptimizerConfig::SgdDecay { lr0, divisor }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Adam { .. } => "adam",
            OptimizerConfig::SgdDecay { .. } => "sgd_decay",
        }
    }

    pub fn initial_lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { lr, .. } => lr,
            OptimizerConfig::SgdDecay { lr0, .. } => lr0,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    pub lr: f64,
    pub steps: u64,
    best_valid: f64,
    pub m: Vec<NumArray<T>>,
    pub v: Vec<NumArray<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| NumArray::zeros(p.shape())).collect::<Vec<_>>();
        let adam = matches!(config, OptimizerConfig::Adam { .. });
        Optimizer {
            config,
            lr: config.initial_lr(),
            steps: 0,
            best_valid: f64::INFINITY,
            m: if adam { zeros() } else { Vec::new() },
            v: if adam { zeros() } else { Vec::new() },
        }
    }

    pub fn best_valid(&self) -> f64 {
        self.best_valid
    }

    pub(crate) fn restore(&mut self, lr: f64, steps: u64, best_valid: f64) {
        self.lr = lr;
        self.steps = steps;
        self.best_valid = best_valid;
    }

    /// Applies one update; gradients must be finite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        if grads.slots.len() != params.len() {
            return Err(arg_err!("gradient set does not match parameters"));
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let step = T::c(self.lr * bc2.sqrt() / bc1);
                let (b1, b2, e) = (T::c(beta1), T::c(beta2), T::c(eps * bc2.sqrt()));
                for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
                    let Some(g) = grads.get(id) else { continue };
                    let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
                    for (((p, &gk), mk), vk) in params.get_mut(id).data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                        *mk = b1 * *mk + (T::one() - b1) * gk;
                        *vk = b2 * *vk + (T::one() - b2) * gk * gk;
                        *p -= step * *mk / (vk.sqrt() + e);
                    }
                }
            }
            OptimizerConfig::SgdDecay { .. } => {
                let lr = T::c(self.lr);
                for id in params.ids().collect::<Vec<_>>() {
                    let Some(g) = grads.get(id) else { continue };
                    for (p, &gk) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * gk;
                    }
                }
            }
        }
        Ok(())
    }

    /// Records an end-of-epoch validation perplexity; returns whether it improved.
    pub fn on_validation(&mut self, ppl: f64) -> bool {
        let improved = ppl < self.best_valid;
        if improved {
            self.best_valid = ppl;
        } else if let OptimizerConfig::SgdDecay { divisor, .. } = self.config {
            self.lr /= divisor;
        }
        improved
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(T::c(max_norm / norm));
    }
    norm
}

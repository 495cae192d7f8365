use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam hyper-parameters shared by every group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the global gradient norm down to this value before the update.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }
}

/// Learning rate assignment by parameter-name prefix. The first matching
/// prefix wins; unmatched parameters use `default_lr`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrGroups {
    pub groups: Vec<(String, f64)>,
    pub default_lr: f64,
}

impl LrGroups {
    pub fn single(lr: f64) -> Self {
        LrGroups {
            groups: Vec::new(),
            default_lr: lr,
        }
    }

    pub fn with_group(mut self, prefix: impl Into<String>, lr: f64) -> Self {
        self.groups.push((prefix.into(), lr));
        self
    }

    pub fn lr_for(&self, name: &str) -> f64 {
        self.groups
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(self.default_lr, |&(_, lr)| lr)
    }
}

/// Adam optimiser state: first and second moments per parameter plus the
/// step count used for bias correction. There is no warm-up schedule.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub lrs: LrGroups,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig, lrs: LrGroups) -> Self {
        let m: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Adam {
            config,
            lrs,
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated `grad` buffers, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.m.len(), store.len(), "optimizer built for a different store");
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            max_grad_norm,
        } = self.config;
        let clip = match max_grad_norm {
            Some(max) => {
                let norm = store
                    .iter()
                    .flat_map(|(_, p)| p.grad.data().iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in store.iter_mut().enumerate() {
            let lr = self.lrs.lr_for(&p.name);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let grad = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[j] * clip;
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
            p.grad.fill(0.0);
        }
    }
}

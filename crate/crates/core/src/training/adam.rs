use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

/// Gradients by parameter name.
pub type Grads = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bad Adam settings {self:?}"
            )))
        }
    }
}

/// Moment buffers and step count.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.second.get(name).map(Vec::as_slice)
    }
}

/// Reads accumulated gradients. Parameters the loss never reached get
/// zeros.
pub fn collect_grads(params: &ParamSet) -> Grads {
    params
        .iter()
        .map(|(name, t)| {
            (
                name.to_string(),
                t.grad().unwrap_or_else(|| vec![0.0; t.numel()]),
            )
        })
        .collect()
}

/// One bias-corrected Adam update. Every parameter needs an entry in
/// `grads`. Updated tensors are fresh leaves with empty gradients.
pub fn adam_step(params: &mut ParamSet, grads: &Grads, state: &mut OptimizerState) -> Result<()> {
    let cfg = state.config;
    cfg.validate()?;
    for (name, t) in params.iter() {
        match grads.get(name) {
            None => return Err(Error::MissingGrad(name.to_string())),
            Some(g) if g.len() != t.numel() => {
                return Err(Error::shape(
                    "adam_step",
                    format!("`{}`: {} grads for {} values", name, g.len(), t.numel()),
                ))
            }
            Some(_) => {}
        }
    }
    state.step += 1;
    let step = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let t = params.get(&name)?;
        let g = &grads[&name];
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        let mut data = t.to_vec();
        for i in 0..data.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        let shape = t.shape().to_vec();
        params.replace(&name, Tensor::new(&shape, data)?)?;
    }
    Ok(())
}

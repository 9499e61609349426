use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::layers::{Module, Parameter};

/// SGD with classic momentum and L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    buffers: HashMap<String, Vec<f32>>,
}

impl OptimizerState {
    pub const DEFAULT_MOMENTUM: f32 = 0.9;
    pub const DEFAULT_WEIGHT_DECAY: f32 = 1e-4;

    pub fn new(lr: f32) -> Self {
        Self::with(lr, Self::DEFAULT_MOMENTUM, Self::DEFAULT_WEIGHT_DECAY)
    }

    pub fn with(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        OptimizerState {
            lr,
            momentum,
            weight_decay,
            buffers: HashMap::new(),
        }
    }

    /// Momentum buffer of a parameter, if it has been stepped.
    pub fn buffer(&self, name: &str) -> Option<&[f32]> {
        self.buffers.get(name).map(Vec::as_slice)
    }

    /// Steps every parameter of `module`.
    pub fn step(&mut self, module: &mut impl Module) -> Result<()> {
        let mut params = module.params_mut();
        sgd_step(&mut params, self)
    }
}

/// `v ← momentum·v + (grad + wd·w)`, then `w ← w − lr·v`. Every parameter
/// must carry a gradient.
pub fn sgd_step(params: &mut [&mut Parameter], state: &mut OptimizerState) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.value.grad().is_none()) {
        return Err(Error::State(format!("parameter `{}` has no gradient", p.name)));
    }
    let (lr, m, wd) = (state.lr, state.momentum, state.weight_decay);
    for p in params.iter_mut() {
        let n = p.numel();
        let v = state.buffers.entry(p.name.clone()).or_insert_with(|| vec![0.0; n]);
        if v.len() != n {
            return Err(Error::State(format!(
                "momentum buffer of `{}` has {} entries, parameter has {n}",
                p.name,
                v.len()
            )));
        }
        let (w, g) = p.value.data_and_grad_mut();
        let g = g.expect("checked above");
        for i in 0..n {
            v[i] = m * v[i] + (g[i] + wd * w[i]);
            w[i] -= lr * v[i];
        }
    }
    Ok(())
}

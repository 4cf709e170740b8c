use super::{Mlp, MlpGrads};
use crate::{Result, ScrError};

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
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moments over a flat parameter vector (see [`Mlp::flat_params`] for order).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_mlp(net: &Mlp, config: AdamConfig) -> Self {
        Self::new(net.param_count(), config)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected update of a flat parameter vector. A non-finite
    /// gradient refuses the step and leaves both params and state untouched.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(ScrError::contract(format!(
                "adam state holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        check_finite(grads)?;
        let (bc1, bc2) = self.advance();
        self.update(0, params, grads, bc1, bc2);
        Ok(())
    }

    /// Same as [`AdamState::step_flat`] but walks the network's layers in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if net.param_count() != self.m.len() || grads.layers.len() != net.depth() {
            return Err(ScrError::contract("adam state does not match network"));
        }
        for (layer, g) in net.layers().iter().zip(&grads.layers) {
            if layer.weights().raw_dim() != g.weights.raw_dim() || layer.bias().len() != g.bias.len() {
                return Err(ScrError::contract("gradient shapes do not match network"));
            }
        }
        if !grads.all_finite() {
            return Err(ScrError::numeric(
                "adam_step",
                "non-finite gradient; step refused",
            ));
        }
        let (bc1, bc2) = self.advance();
        let mut offset = 0;
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            let gw = g.weights.as_standard_layout();
            let gw = gw.as_slice().expect("standard layout");
            let w = layer.weights_slice_mut();
            self.update(offset, w, gw, bc1, bc2);
            offset += gw.len();
            let gb = g.bias.as_standard_layout();
            let gb = gb.as_slice().expect("contiguous");
            let b = layer.bias_slice_mut();
            self.update(offset, b, gb, bc1, bc2);
            offset += gb.len();
        }
        Ok(())
    }

    fn advance(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t as i32;
        (
            1.0 - self.config.beta1.powi(t),
            1.0 - self.config.beta2.powi(t),
        )
    }

    fn update(&mut self, offset: usize, params: &mut [f64], grads: &[f64], bc1: f64, bc2: f64) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

fn check_finite(grads: &[f64]) -> Result<()> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(ScrError::numeric(
            "adam_step",
            format!("non-finite gradient at index {i}; step refused"),
        )),
        None => Ok(()),
    }
}

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub requires_grad: bool,
}

/// Ordered collection of parameters. Insertion order is the canonical order
/// used by the optimizer and by checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: None,
            requires_grad: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Sets every trainable gradient to an explicit zero buffer.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            if p.requires_grad {
                match &mut p.grad {
                    Some(g) => g.data_mut().fill(0.0),
                    None => p.grad = Some(Tensor::zeros(p.value.shape())),
                }
            }
        }
    }

    /// Adds `grad` into the gradient buffer of `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if !p.requires_grad {
            return Ok(());
        }
        match &mut p.grad {
            Some(g) => g.add_assign(grad),
            None => {
                if grad.shape() != p.value.shape() {
                    return Err(TensorError::Dimension {
                        op: "accumulate",
                        lhs: p.value.shape().to_vec(),
                        rhs: grad.shape().to_vec(),
                    });
                }
                p.grad = Some(grad.clone());
                Ok(())
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
                for x in g.data_mut() {
                    *x *= s;
                }
            }
        }
        norm
    }
}

/// Adam moment buffers and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, β1=0.9, β2=0.999, ε=1e-8.
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros = || params.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam update over every trainable parameter, after which
/// all gradients are zeroed.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(TensorError::State(format!(
            "optimizer tracks {} parameters, store has {}",
            state.m.len(),
            params.len()
        )));
    }
    for p in &params.params {
        if p.requires_grad && p.grad.is_none() {
            return Err(TensorError::State(format!("parameter `{}` has no gradient", p.name)));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    for ((p, m), v) in params.params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.requires_grad {
            continue;
        }
        let g = p.grad.as_mut().expect("checked above");
        if m.shape() != p.value.shape() {
            return Err(TensorError::State(format!("moment shape mismatch for `{}`", p.name)));
        }
        let values = p.value.data_mut();
        for (((w, gi), mi), vi) in values
            .iter_mut()
            .zip(g.data_mut().iter_mut())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * *gi;
            *vi = b2 * *vi + (1.0 - b2) * *gi * *gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
            *gi = 0.0;
        }
    }
    Ok(())
}

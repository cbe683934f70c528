//! Dueling MLP with hand-derived backpropagation.
//!
//! Parameters live in one flat `Vec<f64>`: every dense layer stores its
//! weights row-major (`out × in`) followed by its bias. Layer order is the
//! trunk from input to last hidden layer, then the value head, then the
//! advantage head.

use rand::Rng;

use crate::error::DeepqError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
}

impl NetShape {
    /// Four hidden layers of 32 units.
    pub fn reference(n_actions: usize) -> Self {
        Self {
            input: crate::env::OBS_DIM,
            hidden: vec![32; 4],
            n_actions,
        }
    }

    pub fn validate(&self) -> Result<(), DeepqError> {
        if self.input == 0 || self.n_actions == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(DeepqError::ShapeMismatch(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }

    /// `(in, out)` of every dense layer in storage order.
    pub fn dense_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, 1));
        dims.push((prev, self.n_actions));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.dense_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl DenseLayout {
    fn apply(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let w = &params[self.weight_offset..self.weight_offset + self.inputs * self.outputs];
        let b = &params[self.bias_offset..self.bias_offset + self.outputs];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *slot = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
    }

    /// Accumulates `δ ⊗ x` and `δ` into the gradient, and writes `Wᵀδ` into
    /// `dx` when requested.
    fn backward(&self, params: &[f64], x: &[f64], delta: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let n_w = self.inputs * self.outputs;
        {
            let gw = &mut grad[self.weight_offset..self.weight_offset + n_w];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * self.inputs..(o + 1) * self.inputs];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        let gb = &mut grad[self.bias_offset..self.bias_offset + self.outputs];
        for (g, d) in gb.iter_mut().zip(delta) {
            *g += d;
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            let w = &params[self.weight_offset..self.weight_offset + n_w];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * self.inputs..(o + 1) * self.inputs];
                for (acc, wi) in dx.iter_mut().zip(row) {
                    *acc += d * wi;
                }
            }
        }
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of trunk layer `l`.
    acts: Vec<Vec<f64>>,
    value: f64,
    advantage: Vec<f64>,
    q: Vec<f64>,
    delta: Vec<Vec<f64>>,
    d_adv: Vec<f64>,
}

impl Workspace {
    pub fn new(shape: &NetShape) -> Self {
        let mut acts = vec![vec![0.0; shape.input]];
        acts.extend(shape.hidden.iter().map(|&h| vec![0.0; h]));
        Self {
            delta: shape.hidden.iter().map(|&h| vec![0.0; h]).collect(),
            acts,
            value: 0.0,
            advantage: vec![0.0; shape.n_actions],
            q: vec![0.0; shape.n_actions],
            d_adv: vec![0.0; shape.n_actions],
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

/// Fixed, untrained input map `(x − offset) ⊙ scale` applied before the
/// first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn validate(&self, input: usize) -> Result<(), DeepqError> {
        if self.offset.len() != input || self.scale.len() != input {
            return Err(DeepqError::ShapeMismatch(format!(
                "input scaling has {}/{} entries, network expects {input}",
                self.offset.len(),
                self.scale.len()
            )));
        }
        if self.offset.iter().chain(&self.scale).any(|v| !v.is_finite()) {
            return Err(DeepqError::ShapeMismatch("input scaling must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    shape: NetShape,
    layers: Vec<DenseLayout>,
    params: Vec<f64>,
    input_scaling: Option<InputScaling>,
}

impl QNetwork {
    pub fn zeros(shape: NetShape) -> Result<Self, DeepqError> {
        shape.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in shape.dense_dims() {
            layers.push(DenseLayout {
                inputs,
                outputs,
                weight_offset: offset,
                bias_offset: offset + inputs * outputs,
            });
            offset += inputs * outputs + outputs;
        }
        Ok(Self {
            shape,
            layers,
            params: vec![0.0; offset],
            input_scaling: None,
        })
    }

    /// He-style uniform initialisation `U(−√(6/fan_in), √(6/fan_in))` for
    /// weights; biases start at zero.
    pub fn init_he<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Result<Self, DeepqError> {
        let mut net = Self::zeros(shape)?;
        for layer in net.layers.clone() {
            let limit = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut net.params[layer.weight_offset..layer.bias_offset] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self, DeepqError> {
        let mut net = Self::zeros(shape)?;
        if params.len() != net.params.len() {
            return Err(DeepqError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn set_input_scaling(&mut self, scaling: Option<InputScaling>) -> Result<(), DeepqError> {
        if let Some(s) = &scaling {
            s.validate(self.shape.input)?;
        }
        self.input_scaling = scaling;
        Ok(())
    }

    pub fn input_scaling(&self) -> Option<&InputScaling> {
        self.input_scaling.as_ref()
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn layers(&self) -> &[DenseLayout] {
        &self.layers
    }

    pub fn value_layer(&self) -> DenseLayout {
        self.layers[self.layers.len() - 2]
    }

    pub fn advantage_layer(&self) -> DenseLayout {
        self.layers[self.layers.len() - 1]
    }

    pub fn n_actions(&self) -> usize {
        self.shape.n_actions
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.shape)
    }

    /// Q-values for one state.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>, DeepqError> {
        let mut ws = self.workspace();
        self.forward_into(state, &mut ws)?;
        Ok(ws.q.clone())
    }

    /// Forward pass keeping the activations needed by [`Self::backward_into`].
    pub fn forward_into(&self, state: &[f64], ws: &mut Workspace) -> Result<(), DeepqError> {
        if state.len() != self.shape.input {
            return Err(DeepqError::ShapeMismatch(format!(
                "state has {} entries, network expects {}",
                state.len(),
                self.shape.input
            )));
        }
        match &self.input_scaling {
            None => ws.acts[0].copy_from_slice(state),
            Some(map) => {
                for (((a, x), o), s) in ws.acts[0].iter_mut().zip(state).zip(&map.offset).zip(&map.scale) {
                    *a = (x - o) * s;
                }
            }
        }
        let n_trunk = self.shape.hidden.len();
        for l in 0..n_trunk {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let out = &mut tail[0];
            self.layers[l].apply(&self.params, &head[l], out);
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(DeepqError::NonFiniteActivation { layer: l });
            }
        }
        let features = &ws.acts[n_trunk];
        let mut value = [0.0];
        self.value_layer().apply(&self.params, features, &mut value);
        ws.value = value[0];
        self.advantage_layer()
            .apply(&self.params, features, &mut ws.advantage);
        let mean = ws.advantage.iter().sum::<f64>() / self.shape.n_actions as f64;
        for (q, a) in ws.q.iter_mut().zip(&ws.advantage) {
            *q = ws.value + a - mean;
        }
        if ws.q.iter().any(|v| !v.is_finite()) {
            return Err(DeepqError::NonFiniteActivation { layer: n_trunk });
        }
        Ok(())
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂Q` for the state of the
    /// last [`Self::forward_into`] call on `ws`.
    pub fn backward_into(&self, ws: &mut Workspace, d_q: &[f64], grad: &mut [f64]) {
        let n_trunk = self.shape.hidden.len();
        let n_act = self.shape.n_actions as f64;
        let d_value = d_q.iter().sum::<f64>();
        let mean_dq = d_value / n_act;
        for (da, dq) in ws.d_adv.iter_mut().zip(d_q) {
            *da = dq - mean_dq;
        }

        let features = &ws.acts[n_trunk];
        let mut d_features = std::mem::take(&mut ws.delta[n_trunk - 1]);
        let mut d_from_adv = vec![0.0; d_features.len()];
        self.value_layer()
            .backward(&self.params, features, &[d_value], grad, Some(&mut d_features));
        self.advantage_layer()
            .backward(&self.params, features, &ws.d_adv, grad, Some(&mut d_from_adv));
        for (d, e) in d_features.iter_mut().zip(&d_from_adv) {
            *d += e;
        }
        ws.delta[n_trunk - 1] = d_features;

        for l in (0..n_trunk).rev() {
            // ReLU gate: derivative is 1 where the output was positive
            for (d, a) in ws.delta[l].iter_mut().zip(&ws.acts[l + 1]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            if l == 0 {
                self.layers[0].backward(&self.params, &ws.acts[0], &ws.delta[0], grad, None);
            } else {
                let (lower, upper) = ws.delta.split_at_mut(l);
                self.layers[l].backward(
                    &self.params,
                    &ws.acts[l],
                    &upper[0],
                    grad,
                    Some(&mut lower[l - 1]),
                );
            }
        }
    }

    /// Copies the parameters of `other` into `self`; the input scaling is
    /// left untouched.
    pub fn copy_from(&mut self, other: &QNetwork) -> Result<(), DeepqError> {
        if self.shape != other.shape {
            return Err(DeepqError::ShapeMismatch(
                "cannot copy between networks of different shape".into(),
            ));
        }
        self.params.copy_from_slice(&other.params);
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

//! Fixed-topology two-hidden-layer MLPs over flat parameter vectors.

pub mod codec;
pub mod gaussian;
pub mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ControllerMode, NUM_JOINTS};

pub use gaussian::{gaussian_entropy, gaussian_logprob, GaussianPolicy};
pub use mlp::{backward, forward, MlpPolicy, Tape};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("parameter vector contains non-finite values")]
    NonFiniteParams,
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("expected input of width {expected}, got {got}")]
    InputWidth { expected: usize, got: usize },
    #[error("expected output gradient of width {expected}, got {got}")]
    OutputWidth { expected: usize, got: usize },
    #[error("malformed parameter blob: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Squashing applied to the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// `scale * tanh(z)`; keeps joint targets inside the joint range.
    ScaledTanh { scale: f64 },
    /// Unsquashed, for value heads.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_size: usize,
    pub hidden: [usize; 2],
    pub output_size: usize,
    pub output: OutputActivation,
}

impl MlpArchitecture {
    /// 18-joint policy network squashed to `limit`.
    pub fn policy(input_size: usize, hidden: [usize; 2], limit: f64) -> Self {
        Self {
            input_size,
            hidden,
            output_size: NUM_JOINTS,
            output: OutputActivation::ScaledTanh { scale: limit },
        }
    }

    /// Scalar value network sharing the policy's hidden sizes.
    pub fn value(input_size: usize, hidden: [usize; 2]) -> Self {
        Self { input_size, hidden, output_size: 1, output: OutputActivation::Linear }
    }

    /// `(fan_in, fan_out)` per layer, input to output.
    pub fn layers(&self) -> [(usize, usize); 3] {
        let [h0, h1] = self.hidden;
        [(self.input_size, h0), (h0, h1), (h1, self.output_size)]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_size == 0 || self.output_size == 0 || self.hidden.contains(&0) {
            return Err("layer sizes must be positive".into());
        }
        if let OutputActivation::ScaledTanh { scale } = self.output {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err("output scale must be positive".into());
            }
        }
        Ok(())
    }
}

/// Free-function form of [`MlpArchitecture::param_count`].
pub fn param_count(arch: &MlpArchitecture) -> usize {
    arch.param_count()
}

/// Hidden-layer sizes offered to open-loop controllers (1 input);
/// parameter counts run from 64 to 130.
pub const OPEN_LOOP_MENU: [[usize; 2]; 8] =
    [[2, 2], [2, 3], [3, 3], [4, 3], [3, 4], [4, 4], [5, 4], [6, 4]];

/// Hidden-layer sizes offered to closed-loop controllers (18 inputs);
/// parameter counts run from 98 to 282.
pub const CLOSED_LOOP_MENU: [[usize; 2]; 8] =
    [[2, 2], [3, 3], [3, 4], [4, 4], [4, 5], [5, 5], [5, 6], [6, 6]];

pub fn architecture_menu(mode: ControllerMode) -> &'static [[usize; 2]; 8] {
    match mode {
        ControllerMode::OpenLoop => &OPEN_LOOP_MENU,
        ControllerMode::ClosedLoop => &CLOSED_LOOP_MENU,
    }
}

/// Flat MLP parameters: per layer, the row-major `fan_out x fan_in` weight
/// matrix followed by the `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        Self(vec![0.0; arch.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check(&self, arch: &MlpArchitecture) -> Result<(), NnError> {
        let expected = arch.param_count();
        if self.len() != expected {
            return Err(NnError::ParamCount { expected, got: self.len() });
        }
        if !self.is_finite() {
            return Err(NnError::NonFiniteParams);
        }
        Ok(())
    }

    /// Uniform in `[-range, range]` for every weight and bias.
    pub fn uniform<R: Rng + ?Sized>(arch: &MlpArchitecture, range: f64, rng: &mut R) -> Self {
        Self((0..arch.param_count()).map(|_| rng.random_range(-range..=range)).collect())
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn fan_in_uniform<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self(values)
    }
}

/// One dense layer in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major, `fan_out` rows of `fan_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn unflatten(params: &ParamVector, arch: &MlpArchitecture) -> Result<Vec<Layer>, NnError> {
    let expected = arch.param_count();
    if params.len() != expected {
        return Err(NnError::ParamCount { expected, got: params.len() });
    }
    let mut offset = 0;
    let mut layers = Vec::with_capacity(3);
    for (fan_in, fan_out) in arch.layers() {
        let w = &params.0[offset..offset + fan_in * fan_out];
        offset += fan_in * fan_out;
        let b = &params.0[offset..offset + fan_out];
        offset += fan_out;
        layers.push(Layer { fan_in, fan_out, weights: w.to_vec(), biases: b.to_vec() });
    }
    Ok(layers)
}

pub fn flatten(layers: &[Layer]) -> ParamVector {
    let mut values = Vec::new();
    for layer in layers {
        values.extend_from_slice(&layer.weights);
        values.extend_from_slice(&layer.biases);
    }
    ParamVector(values)
}

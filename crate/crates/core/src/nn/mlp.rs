//! Forward pass and reverse-mode gradients.

use std::cell::RefCell;

use super::{MlpArchitecture, NnError, OutputActivation, ParamVector};
use crate::env::Policy;

/// Activations recorded by a forward pass, reused by [`backward_tape`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    input: Vec<f64>,
    /// Pre-activations per layer.
    pre: [Vec<f64>; 3],
    /// Post-activations per layer; the last one is the network output.
    post: [Vec<f64>; 3],
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.post[2]
    }
}

/// Runs the network on `input`, recording activations in `tape`.
/// Shapes are trusted; use [`forward`] for checked calls.
pub fn forward_tape(params: &[f64], arch: &MlpArchitecture, input: &[f64], tape: &mut Tape) {
    tape.input.clear();
    tape.input.extend_from_slice(input);
    let mut offset = 0;
    for (layer, (fan_in, fan_out)) in arch.layers().into_iter().enumerate() {
        let (w, rest) = params[offset..].split_at(fan_in * fan_out);
        let b = &rest[..fan_out];
        offset += fan_in * fan_out + fan_out;

        let (before, after) = tape.post.split_at_mut(layer);
        let x: &[f64] = if layer == 0 { &tape.input } else { &before[layer - 1] };
        let pre = &mut tape.pre[layer];
        pre.clear();
        for (row, bias) in w.chunks_exact(fan_in).zip(b) {
            let mut z = *bias;
            for (wi, xi) in row.iter().zip(x) {
                z += wi * xi;
            }
            pre.push(z);
        }
        let post = &mut after[0];
        post.clear();
        let last = layer == 2;
        post.extend(pre.iter().map(|&z| match (last, arch.output) {
            (false, _) => z.tanh(),
            (true, OutputActivation::ScaledTanh { scale }) => scale * z.tanh(),
            (true, OutputActivation::Linear) => z,
        }));
    }
}

/// Accumulates `d(output_grad . output)/d(params)` into `grad` for the pass
/// recorded in `tape`.
pub fn backward_tape(
    params: &[f64],
    arch: &MlpArchitecture,
    tape: &mut Tape,
    output_grad: &[f64],
    grad: &mut [f64],
) {
    let layers = arch.layers();
    let mut offsets = [0usize; 3];
    let mut acc = 0;
    for (k, (i, o)) in layers.iter().enumerate() {
        offsets[k] = acc;
        acc += i * o + o;
    }

    tape.delta.clear();
    tape.delta.extend(output_grad.iter().zip(&tape.pre[2]).map(|(g, &z)| match arch.output {
        OutputActivation::ScaledTanh { scale } => {
            let t = z.tanh();
            g * scale * (1.0 - t * t)
        }
        OutputActivation::Linear => *g,
    }));

    for layer in (0..3).rev() {
        let (fan_in, fan_out) = layers[layer];
        let base = offsets[layer];
        let x: &[f64] = if layer == 0 { &tape.input } else { &tape.post[layer - 1] };
        let (gw, gb) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        for ((grow, gbias), d) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).zip(&tape.delta) {
            *gbias += d;
            for (g, xi) in grow.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if layer == 0 {
            break;
        }
        let w = &params[base..base + fan_in * fan_out];
        tape.delta_next.clear();
        tape.delta_next.resize(fan_in, 0.0);
        for (row, d) in w.chunks_exact(fan_in).zip(&tape.delta) {
            for (acc, wi) in tape.delta_next.iter_mut().zip(row) {
                *acc += wi * d;
            }
        }
        // Through the hidden tanh: 1 - h^2.
        for (acc, h) in tape.delta_next.iter_mut().zip(&tape.post[layer - 1]) {
            *acc *= 1.0 - h * h;
        }
        std::mem::swap(&mut tape.delta, &mut tape.delta_next);
    }
}

fn check_input(arch: &MlpArchitecture, input: &[f64]) -> Result<(), NnError> {
    if input.len() != arch.input_size {
        return Err(NnError::InputWidth { expected: arch.input_size, got: input.len() });
    }
    Ok(())
}

/// Network output for `input`.
pub fn forward(params: &ParamVector, arch: &MlpArchitecture, input: &[f64]) -> Result<Vec<f64>, NnError> {
    params.check(arch)?;
    check_input(arch, input)?;
    let mut tape = Tape::default();
    forward_tape(&params.0, arch, input, &mut tape);
    Ok(tape.post[2].clone())
}

/// Gradient of `output_grad . forward(params, input)` with respect to `params`.
pub fn backward(
    params: &ParamVector,
    arch: &MlpArchitecture,
    input: &[f64],
    output_grad: &[f64],
) -> Result<ParamVector, NnError> {
    params.check(arch)?;
    check_input(arch, input)?;
    if output_grad.len() != arch.output_size {
        return Err(NnError::OutputWidth { expected: arch.output_size, got: output_grad.len() });
    }
    let mut tape = Tape::default();
    forward_tape(&params.0, arch, input, &mut tape);
    let mut grad = vec![0.0; params.len()];
    backward_tape(&params.0, arch, &mut tape, output_grad, &mut grad);
    Ok(ParamVector(grad))
}

/// Deterministic controller: the network output is the joint target.
#[derive(Debug, Clone)]
pub struct MlpPolicy {
    arch: MlpArchitecture,
    params: ParamVector,
    scratch: RefCell<Tape>,
}

impl MlpPolicy {
    pub fn new(arch: MlpArchitecture, params: ParamVector) -> Result<Self, NnError> {
        params.check(&arch)?;
        Ok(Self { arch, params, scratch: RefCell::new(Tape::default()) })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }
}

impl Policy for MlpPolicy {
    fn input_size(&self) -> usize {
        self.arch.input_size
    }

    fn act(&self, observation: &[f64], action: &mut [f64]) {
        let mut tape = self.scratch.borrow_mut();
        forward_tape(&self.params.0, &self.arch, observation, &mut tape);
        action.copy_from_slice(tape.output());
    }
}

//! The PPO surrogate and its analytic gradient.

use serde::{Deserialize, Serialize};

use super::{PpoHyperParams, PpoModel, RolloutBatch};
use crate::env::NUM_JOINTS;
use crate::nn::gaussian::gaussian_logprob;
use crate::nn::mlp::{backward_tape, forward_tape, Tape};

/// Per-sample clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clip_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Slope of [`clip_objective`] with respect to the ratio.
fn clip_slope(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// Minibatch diagnostics. `total` is the minimized quantity
/// `-(L_clip - c1 L_value + c2 S)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Negated mean clipped surrogate.
    pub policy_loss: f64,
    /// Mean squared value error.
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `(r - 1) - ln r`, a non-negative KL estimate.
    pub approx_kl: f64,
    /// Share of samples with `|r - 1| > eps`.
    pub clip_fraction: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.policy_loss, self.value_loss, self.entropy, self.approx_kl, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Loss over the frames `indices` of `batch`; when `grad` is given, the
/// gradient of `total` with respect to the model's flat vector is
/// accumulated into it.
pub fn minibatch_loss(
    model: &PpoModel,
    hp: &PpoHyperParams,
    batch: &RolloutBatch,
    indices: &[usize],
    mut grad: Option<&mut [f64]>,
    tape: &mut Tape,
) -> LossParts {
    let m = indices.len() as f64;
    let obs_size = batch.obs_size;
    let n_mean = model.policy.mean.len();
    let log_std = &model.policy.log_std;
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

    let mut parts = LossParts::default();
    let mut out_grad = [0.0; NUM_JOINTS];
    let mut ls_grad = [0.0; NUM_JOINTS];

    for &i in indices {
        let obs = &batch.observations[i * obs_size..(i + 1) * obs_size];
        let action = &batch.actions[i * NUM_JOINTS..(i + 1) * NUM_JOINTS];
        let adv = batch.advantages[i];

        forward_tape(model.policy.mean.as_slice(), &model.policy.arch, obs, tape);
        let mean = tape.output();
        let logp = gaussian_logprob(mean, log_std, action);
        let ratio = (logp - batch.log_probs[i]).exp();
        parts.policy_loss -= clip_objective(ratio, adv, hp.clip_eps);
        parts.approx_kl += (ratio - 1.0) - ratio.ln();
        if (ratio - 1.0).abs() > hp.clip_eps {
            parts.clip_fraction += 1.0;
        }

        if let Some(g) = grad.as_deref_mut() {
            // d(-L_clip / M)/d(log pi)
            let w = -ratio * clip_slope(ratio, adv, hp.clip_eps) / m;
            for j in 0..NUM_JOINTS {
                let diff = action[j] - mean[j];
                out_grad[j] = w * diff * inv_var[j];
                ls_grad[j] += w * (diff * diff * inv_var[j] - 1.0);
            }
            backward_tape(model.policy.mean.as_slice(), &model.policy.arch, tape, &out_grad, &mut g[..n_mean]);
        }

        forward_tape(model.value.as_slice(), &model.value_arch, obs, tape);
        let err = tape.output()[0] - batch.returns[i];
        parts.value_loss += err * err;
        if let Some(g) = grad.as_deref_mut() {
            let vg = [2.0 * hp.c1 * err / m];
            backward_tape(model.value.as_slice(), &model.value_arch, tape, &vg, &mut g[n_mean + NUM_JOINTS..]);
        }
    }

    if let Some(g) = grad {
        // The entropy of a diagonal Gaussian has unit slope in each log-std.
        for (dst, src) in g[n_mean..n_mean + NUM_JOINTS].iter_mut().zip(&ls_grad) {
            *dst += src - hp.c2;
        }
    }

    parts.policy_loss /= m;
    parts.value_loss /= m;
    parts.approx_kl /= m;
    parts.clip_fraction /= m;
    parts.entropy = model.policy.entropy();
    parts.total = parts.policy_loss + hp.c1 * parts.value_loss - hp.c2 * parts.entropy;
    parts
}

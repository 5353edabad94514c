use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{kl_categorical, masked_softmax, Gradients, Mlp};
use crate::ppo::advantage::AdvantageBatch;

/// Log-probability gaps beyond this are treated as overflowing ratios.
pub const MAX_LOG_RATIO: f64 = 30.0;

#[derive(Clone, Debug)]
pub struct PolicyObjective {
    /// `-mean(min(r A, clip(r) A) - beta KL)` over the included transitions.
    pub loss: f64,
    pub grads: Gradients,
    pub mean_kl: f64,
    /// Share of included transitions with `|r - 1| > clip`.
    pub clip_fraction: f64,
    /// Transitions dropped because their ratio overflowed.
    pub excluded: usize,
    /// Per transition `(r A, min(r A, clip(r) A))`; `None` when excluded.
    pub terms: Vec<Option<(f64, f64)>>,
}

/// Clipped surrogate with a KL penalty, and its gradient for the actor.
pub fn policy_objective(batch: &AdvantageBatch, actor: &Mlp, beta: f64, clip: f64) -> Result<PolicyObjective> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let cache = actor.forward_cached(batch.policy_inputs.view())?;
    let logits = cache.output();
    let mut upstream = Array2::zeros(logits.raw_dim());
    let mut terms = vec![None; batch.len()];
    let (mut obj_sum, mut kl_sum, mut clipped, mut included) = (0.0, 0.0, 0usize, 0usize);

    for i in 0..batch.len() {
        let row = logits.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                version: actor.version(),
                detail: format!("policy logits for transition {i}"),
            });
        }
        let p = masked_softmax(&row.to_vec(), &batch.masks[i]);
        let a = batch.actions[i];
        let gap = p[a].ln() - batch.old_logprobs[i];
        if !gap.is_finite() || gap.abs() > MAX_LOG_RATIO {
            continue;
        }
        included += 1;
        let r = gap.exp();
        let adv = batch.advantages[i];
        let unclipped = r * adv;
        let bounded = r.clamp(1.0 - clip, 1.0 + clip) * adv;
        let surrogate = unclipped.min(bounded);
        let old = batch.old_probs.row(i);
        let old = old.as_slice().expect("contiguous");
        let kl = kl_categorical(old, &p)?;
        terms[i] = Some((unclipped, surrogate));
        obj_sum += surrogate - beta * kl;
        kl_sum += kl;
        if (r - 1.0).abs() > clip {
            clipped += 1;
        }
        // d(objective)/d(logits): the ratio term only when min picks it, and
        // d KL(old || softmax(z)) / dz = p - old.
        let through_ratio = unclipped <= bounded;
        for j in 0..p.len() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let mut g = -beta * (p[j] - old[j]);
            if through_ratio {
                g += adv * r * (onehot - p[j]);
            }
            upstream[[i, j]] = g;
        }
    }

    if included == 0 {
        return Ok(PolicyObjective {
            loss: 0.0,
            grads: Gradients::zeros_like(actor),
            mean_kl: 0.0,
            clip_fraction: 0.0,
            excluded: batch.len(),
            terms,
        });
    }
    let n = included as f64;
    upstream.mapv_inplace(|g| -g / n);
    Ok(PolicyObjective {
        loss: -obj_sum / n,
        grads: actor.backward(&cache, upstream.view())?,
        mean_kl: kl_sum / n,
        clip_fraction: clipped as f64 / n,
        excluded: batch.len() - included,
        terms,
    })
}

/// `mean (V(s) - target)^2` and its gradient for the critic.
pub fn value_loss(batch: &AdvantageBatch, critic: &Mlp) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let cache = critic.forward_cached(batch.critic_inputs.view())?;
    let out = cache.output();
    if out.ncols() != 1 {
        return Err(Error::WidthMismatch {
            expected: "value output width 1".into(),
            found: format!("output width {}", out.ncols()),
        });
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            version: critic.version(),
            detail: "value output".into(),
        });
    }
    let n = batch.len() as f64;
    let mut upstream = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let d = out[[i, 0]] - batch.targets[i];
        loss += d * d;
        upstream[[i, 0]] = 2.0 * d / n;
    }
    Ok((loss / n, critic.backward(&cache, upstream.view())?))
}

/// Mean `KL(old || current)` over the whole batch.
pub fn mean_kl(batch: &AdvantageBatch, actor: &Mlp) -> Result<f64> {
    let probs = crate::nn::forward_policy_batch(actor, batch.policy_inputs.view(), &batch.masks)?;
    let mut total = 0.0;
    for i in 0..batch.len() {
        let old = batch.old_probs.row(i);
        total += kl_categorical(old.as_slice().expect("contiguous"), probs.row(i).as_slice().expect("contiguous"))?;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward_policy_batch, log_prob_logit_grad};
    use crate::rng::{stream, Stream};
    use ndarray::Array2;
    use rand::Rng;

    /// Batch whose old distributions come from `actor` itself.
    fn on_policy_batch(actor: &Mlp, n: usize, seed: u64) -> AdvantageBatch {
        let mut rng = stream(seed, Stream::Policy, 0);
        let width = actor.input_width();
        let slots = actor.output_width();
        let inputs = Array2::from_shape_fn((n, width), |_| rng.random_range(-1.0..1.0));
        let masks: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..slots).map(|j| j == slots - 1 || (i + j) % 3 != 0).collect())
            .collect();
        let probs = forward_policy_batch(actor, inputs.view(), &masks).unwrap();
        let actions: Vec<usize> = (0..n)
            .map(|i| {
                let allowed: Vec<usize> = (0..slots).filter(|&j| masks[i][j]).collect();
                allowed[rng.random_range(0..allowed.len())]
            })
            .collect();
        let advantages: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        AdvantageBatch {
            critic_inputs: inputs.clone(),
            policy_inputs: inputs,
            old_logprobs: actions.iter().enumerate().map(|(i, &a)| probs[[i, a]].ln()).collect(),
            old_probs: probs,
            masks,
            actions,
            raw_advantages: advantages.clone(),
            targets: advantages.clone(),
            old_values: vec![0.0; n],
            advantages,
        }
    }

    fn actor(seed: u64) -> Mlp {
        Mlp::new(4, &[8, 8], 5, 1.0, &mut stream(seed, Stream::Init, 0))
    }

    #[test]
    fn identity_policy_gives_advantage() {
        let net = actor(1);
        let batch = on_policy_batch(&net, 32, 1);
        let obj = policy_objective(&batch, &net, 1.0, 0.2).unwrap();
        assert_eq!(obj.mean_kl, 0.0);
        assert_eq!(obj.clip_fraction, 0.0);
        for (t, a) in obj.terms.iter().zip(&batch.advantages) {
            let (_, s) = t.unwrap();
            assert!((s - a).abs() < 1e-12);
        }
        let mean_adv = batch.advantages.iter().sum::<f64>() / 32.0;
        assert!((obj.loss + mean_adv).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_old_policy_is_score_function() {
        let net = actor(2);
        let batch = on_policy_batch(&net, 24, 2);
        let obj = policy_objective(&batch, &net, 0.7, 0.2).unwrap();
        // Score-function estimator, one sample at a time.
        let mut expected = Gradients::zeros_like(&net);
        for i in 0..batch.len() {
            let x = batch.policy_inputs.select(ndarray::Axis(0), &[i]);
            let cache = net.forward_cached(x.view()).unwrap();
            let p = masked_softmax(&cache.output().row(0).to_vec(), &batch.masks[i]);
            let g = log_prob_logit_grad(&p, batch.actions[i]);
            let up = Array2::from_shape_fn((1, g.len()), |(_, j)| -batch.advantages[i] * g[j] / 24.0);
            expected.add_assign(&net.backward(&cache, up.view()).unwrap());
        }
        for (a, b) in obj.grads.flatten().iter().zip(expected.flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn clip_examples() {
        // One transition, uniform old policy over 2 actions, new policy moved.
        let net = Mlp::from_layers(
            vec![crate::nn::Dense {
                weights: Array2::zeros((1, 2)),
                bias: ndarray::array![1.5f64.ln(), 0.5f64.ln()],
                activation: crate::nn::Activation::Identity,
            }],
            0,
        )
        .unwrap();
        // softmax(ln 1.5, ln 0.5) = [0.75, 0.25]; old 0.5 each: r0 = 1.5, r1 = 0.5.
        let mk = |action: usize, adv: f64| AdvantageBatch {
            policy_inputs: Array2::zeros((1, 1)),
            critic_inputs: Array2::zeros((1, 1)),
            masks: vec![vec![true, true]],
            actions: vec![action],
            advantages: vec![adv],
            raw_advantages: vec![adv],
            targets: vec![0.0],
            old_values: vec![0.0],
            old_logprobs: vec![0.5f64.ln()],
            old_probs: ndarray::array![[0.5, 0.5]],
        };
        let up = policy_objective(&mk(0, 1.0), &net, 0.0, 0.2).unwrap();
        let (u, s) = up.terms[0].unwrap();
        assert!((u - 1.5).abs() < 1e-12 && (s - 1.2).abs() < 1e-12);
        assert_eq!(up.grads.norm(), 0.0);
        let down = policy_objective(&mk(1, -1.0), &net, 0.0, 0.2).unwrap();
        let (u, s) = down.terms[0].unwrap();
        assert!((u + 0.5).abs() < 1e-12 && (s + 0.8).abs() < 1e-12);
        assert_eq!(down.grads.norm(), 0.0);
        assert_eq!(down.clip_fraction, 1.0);
    }

    #[test]
    fn clipped_term_is_lower_bound() {
        let old = actor(3);
        let batch = on_policy_batch(&old, 64, 3);
        let mut new = old.clone();
        for l in new.layers_mut() {
            l.weights.mapv_inplace(|w| w * 1.3 + 0.05);
        }
        let obj = policy_objective(&batch, &new, 0.5, 0.2).unwrap();
        assert!(obj.mean_kl > 0.0);
        for (u, s) in obj.terms.iter().flatten() {
            assert!(s <= u);
        }
    }

    #[test]
    fn overflowing_ratio_is_excluded() {
        let net = actor(4);
        let mut batch = on_policy_batch(&net, 8, 4);
        batch.old_logprobs[3] = -100.0;
        let obj = policy_objective(&batch, &net, 1.0, 0.2).unwrap();
        assert_eq!(obj.excluded, 1);
        assert!(obj.terms[3].is_none());
    }

    #[test]
    fn value_loss_examples() {
        let critic = Mlp::from_layers(
            vec![crate::nn::Dense {
                weights: Array2::zeros((1, 1)),
                bias: ndarray::array![1.0],
                activation: crate::nn::Activation::Identity,
            }],
            0,
        )
        .unwrap();
        let mut batch = on_policy_batch(&actor(5), 1, 5);
        batch.critic_inputs = Array2::zeros((1, 1));
        batch.targets = vec![3.0];
        let (loss, g) = value_loss(&batch, &critic).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g.layers[0].1[0], -4.0);
        batch.targets = vec![1.0];
        assert_eq!(value_loss(&batch, &critic).unwrap().0, 0.0);
    }
}

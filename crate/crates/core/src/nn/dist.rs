use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::mlp::Mlp;

/// Added to the logit of every masked action before the softmax.
pub const MASK_PENALTY: f64 = -1e9;

/// Floor applied to `q` inside [`kl_categorical`].
pub const KL_FLOOR: f64 = 1e-12;

/// Max-shifted softmax over `logits + penalty(mask)`. Masked entries come out
/// as exactly zero whenever at least one entry is unmasked.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let shifted: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &ok)| if ok { l } else { l + MASK_PENALTY })
        .collect();
    let max = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = shifted.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

fn check_mask(mask: &[bool], width: usize) -> Result<()> {
    if mask.len() != width {
        return Err(Error::WidthMismatch {
            expected: format!("mask width {width}"),
            found: format!("mask width {}", mask.len()),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::contract("action mask allows no action"));
    }
    Ok(())
}

fn check_finite(net: &Mlp, out: &Array2<f64>, what: &str) -> Result<()> {
    if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            version: net.version(),
            detail: format!("{what} contains {bad}"),
        });
    }
    Ok(())
}

fn row(input: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, input.len()), input).expect("row view")
}

/// Action distribution of a policy network for one input.
pub fn forward_policy(net: &Mlp, input: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    check_mask(mask, net.output_width())?;
    let logits = net.forward(row(input))?;
    check_finite(net, &logits, "policy logits")?;
    Ok(masked_softmax(logits.row(0).as_slice().expect("contiguous"), mask))
}

/// Action distributions for a batch; row `i` uses `masks[i]`.
pub fn forward_policy_batch(net: &Mlp, inputs: ArrayView2<f64>, masks: &[Vec<bool>]) -> Result<Array2<f64>> {
    if masks.len() != inputs.nrows() {
        return Err(Error::contract(format!("{} masks for {} inputs", masks.len(), inputs.nrows())));
    }
    let logits = net.forward(inputs)?;
    check_finite(net, &logits, "policy logits")?;
    let mut probs = Array2::zeros(logits.raw_dim());
    for (i, mask) in masks.iter().enumerate() {
        check_mask(mask, net.output_width())?;
        let p = masked_softmax(&logits.row(i).to_vec(), mask);
        probs.row_mut(i).assign(&ndarray::ArrayView1::from(&p));
    }
    Ok(probs)
}

/// Scalar output of a value network.
pub fn forward_value(net: &Mlp, input: &[f64]) -> Result<f64> {
    Ok(forward_value_batch(net, row(input))?[0])
}

pub fn forward_value_batch(net: &Mlp, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
    if net.output_width() != 1 {
        return Err(Error::WidthMismatch {
            expected: "value output width 1".into(),
            found: format!("output width {}", net.output_width()),
        });
    }
    let out = net.forward(inputs)?;
    check_finite(net, &out, "value output")?;
    Ok(out.column(0).to_vec())
}

/// `d log p[action] / d logits = onehot(action) - p`.
pub fn log_prob_logit_grad(probs: &[f64], action: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| if j == action { 1.0 - p } else { -p })
        .collect()
}

/// `KL(p || q) = sum p ln(p / max(q, 1e-12))`, skipping `p = 0` and `p = q`
/// terms and clamped at zero against rounding.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::contract(format!("KL support sizes differ: {} vs {}", p.len(), q.len())));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, &qi)| pi > 0.0 && pi != qi)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum();
    Ok(kl.max(0.0))
}

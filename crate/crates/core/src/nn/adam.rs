use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, Mlp};

/// Bias-corrected Adam state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    skipped: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            skipped: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub(crate) fn from_parts(
        hyper: [f64; 4],
        step: u64,
        skipped: u64,
        m: Gradients,
        v: Gradients,
    ) -> Self {
        let [lr, beta1, beta2, eps] = hyper;
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step,
            skipped,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates refused because the gradient was not finite.
    pub fn skipped_steps(&self) -> u64 {
        self.skipped
    }

    pub fn moments(&self) -> (&Gradients, &Gradients) {
        (&self.m, &self.v)
    }

    /// Apply one descent step. Returns `false` (and counts the event) when the
    /// gradient holds a non-finite value; the network is then left untouched.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<bool> {
        if !grads.matches(net) || !self.m.matches(net) {
            return Err(Error::contract("gradient shapes do not match the network"));
        }
        if !grads.is_finite() {
            self.skipped += 1;
            return Ok(false);
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let g = gw.iter().chain(gb.iter());
            let m = mw.iter_mut().chain(mb.iter_mut());
            let v = vw.iter_mut().chain(vb.iter_mut());
            for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        net.bump_version();
        Ok(true)
    }
}

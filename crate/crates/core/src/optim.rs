//! SGD and Adam over a layer's parameter blocks.

use crate::error::{Error, Result};
use crate::grad::GradSlot;
use crate::layers::Layer;
use crate::scalar::Scalar;

/// Default Adam decay rates.
pub const ADAM_BETAS: (f64, f64) = (0.9, 0.98);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus per-block moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            betas: (0.0, 0.0),
            eps: 0.0,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn adam(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            betas,
            eps,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First-moment buffers, one per block (empty before the first Adam step).
    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second
    }

    /// Applies one update from gradients aligned with `layer.params()`.
    pub fn step(&mut self, layer: &mut Layer<T>, grads: &[GradSlot<T>]) -> Result<()> {
        if grads.len() != layer.params().len()
            || grads
                .iter()
                .zip(layer.params())
                .any(|(g, p)| !g.grad().same_shape(p.value()))
        {
            return Err(Error::invalid("gradients do not match the layer's blocks"));
        }
        self.step += 1;
        let lr = T::of(self.lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in layer.params_mut().iter_mut().zip(grads) {
                    for (w, &gv) in p.data_mut().iter_mut().zip(g.grad().as_slice()) {
                        *w -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads
                        .iter()
                        .map(|g| vec![T::zero(); g.grad().len()])
                        .collect();
                    self.second = self.first.clone();
                }
                let (b1, b2) = (T::of(self.betas.0), T::of(self.betas.1));
                let t = self.step as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let eps = T::of(self.eps);
                for (((p, g), m), v) in layer
                    .params_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.grad().as_slice())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let m_hat = *mv / c1;
                        let v_hat = *vv / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LayerConfig, MethodKind};
    use crate::grad::zero_slots;

    #[test]
    fn adam_three_step_trace() {
        // single scalar parameter, gradients 1.0, -2.0, 0.5
        let cfg = LayerConfig::new(MethodKind::Original, 1, 1);
        let mut layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.98, 1e-8);
        let mut opt = OptimizerState::adam(lr, (b1, b2), eps);

        let mut w = layer.params()[0].value().as_slice()[0];
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [1.0, -2.0, 0.5].into_iter().enumerate() {
            let mut slots = zero_slots(&layer);
            slots[0].grad_mut().as_mut_slice()[0] = g;
            opt.step(&mut layer, &slots).unwrap();

            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + eps);
            assert!((layer.params()[0].value().as_slice()[0] - w).abs() < 1e-15);
        }
        assert_eq!(opt.steps(), 3);
        assert_eq!(opt.first_moments()[0].len(), 1);
    }

    #[test]
    fn sgd_step() {
        let cfg = LayerConfig::new(MethodKind::Original, 2, 2);
        let mut layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let before = layer.params()[0].value().clone();
        let mut slots = zero_slots(&layer);
        slots[0]
            .grad_mut()
            .as_mut_slice()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        OptimizerState::sgd(0.5).step(&mut layer, &slots).unwrap();
        for (i, (&a, &b)) in before
            .as_slice()
            .iter()
            .zip(layer.params()[0].value().as_slice())
            .enumerate()
        {
            assert!((a - 0.5 * (i as f64 + 1.0) - b).abs() < 1e-15);
        }
    }
}

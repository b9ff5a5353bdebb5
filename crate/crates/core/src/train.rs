//! Desk-scale training loop: fit a layer to a target table, or to a
//! labeled word-pair similarity task.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{backward_into, zero_slots, GradSlot};
use crate::layers::Layer;
use crate::optim::OptimizerState;
use crate::scalar::Scalar;
use crate::tensor::{dot, Matrix, Vector};

/// Two word ids and whether they count as similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub a: usize,
    pub b: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Mean squared error per word.
    Mse,
    /// `max(0, pos - cos)^2` for similar pairs, `max(0, cos - neg)^2` otherwise.
    CosineContrastive { pos_margin: f64, neg_margin: f64 },
}

impl Loss {
    pub const DEFAULT_CONTRASTIVE: Loss = Loss::CosineContrastive {
        pos_margin: 0.8,
        neg_margin: 0.2,
    };
}

#[derive(Debug, Clone)]
pub enum TrainTask<T> {
    /// Row `w` of `targets` is the wanted embedding of word `w`.
    Reconstruct {
        targets: Matrix<T>,
    },
    WordSimilarity {
        pairs: Vec<LabeledPair>,
        loss: Loss,
    },
}

impl<T: Scalar> TrainTask<T> {
    pub fn loss(&self) -> Loss {
        match self {
            TrainTask::Reconstruct { .. } => Loss::Mse,
            TrainTask::WordSimilarity { loss, .. } => *loss,
        }
    }

    fn len(&self) -> usize {
        match self {
            TrainTask::Reconstruct { targets } => targets.rows(),
            TrainTask::WordSimilarity { pairs, .. } => pairs.len(),
        }
    }

    fn validate(&self, layer: &Layer<T>) -> Result<()> {
        match self {
            TrainTask::Reconstruct { targets } => {
                if targets.cols() != layer.embed_dim() || targets.rows() != layer.vocab_size() {
                    return Err(Error::config(format!(
                        "target table is {}x{}, layer produces {}x{}",
                        targets.rows(),
                        targets.cols(),
                        layer.vocab_size(),
                        layer.embed_dim()
                    )));
                }
            }
            TrainTask::WordSimilarity { pairs, loss } => {
                if matches!(loss, Loss::Mse) {
                    return Err(Error::config("similarity task needs a contrastive loss"));
                }
                if pairs.is_empty() {
                    return Err(Error::config("no training pairs"));
                }
                if let Some(p) = pairs
                    .iter()
                    .find(|p| p.a >= layer.vocab_size() || p.b >= layer.vocab_size())
                {
                    return Err(Error::Lookup(format!(
                        "pair ({}, {}) out of range",
                        p.a, p.b
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loss of example `i`; when `grads` is given, its gradient is added there.
    fn example(
        &self,
        layer: &Layer<T>,
        i: usize,
        grads: Option<&mut [GradSlot<T>]>,
    ) -> Result<f64> {
        match self {
            TrainTask::Reconstruct { targets } => {
                let y = layer.forward(i)?;
                let t = targets.row(i);
                let d = T::of(y.len() as f64);
                let diff: Vec<T> = y.iter().zip(t).map(|(&a, &b)| a - b).collect();
                let loss = diff.iter().map(|&e| e * e).sum::<T>() / d;
                if let Some(g) = grads {
                    let two = T::of(2.0);
                    let up: Vec<T> = diff.iter().map(|&e| two * e / d).collect();
                    backward_into(layer, i, &up, g)?;
                }
                Ok(loss.as_f64())
            }
            TrainTask::WordSimilarity { pairs, loss } => {
                let Loss::CosineContrastive {
                    pos_margin,
                    neg_margin,
                } = *loss
                else {
                    unreachable!("validated")
                };
                let p = pairs[i];
                let ya = layer.forward(p.a)?;
                let yb = layer.forward(p.b)?;
                let Some((c, dca, dcb)) = cosine_with_grad(&ya, &yb) else {
                    return Ok(if p.label {
                        pos_margin * pos_margin
                    } else {
                        0.0
                    });
                };
                let c64 = c.as_f64();
                let (value, dl_dc) = if p.label {
                    let gap = (pos_margin - c64).max(0.0);
                    (gap * gap, -2.0 * gap)
                } else {
                    let gap = (c64 - neg_margin).max(0.0);
                    (gap * gap, 2.0 * gap)
                };
                if let Some(g) = grads {
                    if dl_dc != 0.0 {
                        let s = T::of(dl_dc);
                        let ua: Vec<T> = dca.iter().map(|&v| s * v).collect();
                        let ub: Vec<T> = dcb.iter().map(|&v| s * v).collect();
                        backward_into(layer, p.a, &ua, g)?;
                        backward_into(layer, p.b, &ub, g)?;
                    }
                }
                Ok(value)
            }
        }
    }
}

/// Cosine similarity and its gradients with respect to both inputs.
/// `None` when either vector is zero.
fn cosine_with_grad<T: Scalar>(a: &[T], b: &[T]) -> Option<(T, Vec<T>, Vec<T>)> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    let c = dot(a, b) / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y / (na * nb) - c * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x / (na * nb) - c * y / (nb * nb))
        .collect();
    Some((c, ga, gb))
}

pub fn cosine<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == T::zero() || nb == T::zero() {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).as_f64()
}

/// Mean per-example loss over the whole task, without updating anything.
pub fn evaluate_loss<T: Scalar>(layer: &Layer<T>, task: &TrainTask<T>) -> Result<f64> {
    task.validate(layer)?;
    let n = task.len();
    let mut total = 0.0;
    for i in 0..n {
        total += task.example(layer, i, None)?;
    }
    Ok(total / n as f64)
}

/// Runs `epochs` passes over the task in shuffled mini-batches.
///
/// Per-example gradients within a batch are summed, then the optimizer
/// takes one step. Returns the mean example loss of each epoch, measured
/// as the epoch runs. The index matrix is never modified.
pub fn train<T: Scalar>(
    layer: &mut Layer<T>,
    task: &TrainTask<T>,
    opt: &mut OptimizerState<T>,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if epochs == 0 || batch == 0 {
        return Err(Error::config("epochs and batch size must be at least 1"));
    }
    task.validate(layer)?;
    let n = task.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = zero_slots(layer);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.iter_mut().for_each(GradSlot::zero);
            for &i in chunk {
                total += task.example(layer, i, Some(&mut grads))?;
            }
            opt.step(layer, &grads)?;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("mean loss {mean} with lr {}", opt.lr),
            });
        }
        history.push(mean);
    }
    Ok(history)
}

/// Fraction of pairs where `cos > 0.5` agrees with the label.
pub fn eval_similarity<T: Scalar>(layer: &Layer<T>, pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for p in pairs {
        let c = cosine(&layer.forward(p.a)?, &layer.forward(p.b)?);
        if (c > 0.5) == p.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LayerConfig, MethodKind};
    use crate::grad::finite_diff_check_with;

    #[test]
    fn original_fits_own_table_at_zero_loss() {
        let cfg = LayerConfig::new(MethodKind::Original, 12, 4).with_seed(5);
        let mut layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let task = TrainTask::Reconstruct {
            targets: layer.params()[0].value().clone(),
        };
        let mut opt = OptimizerState::adam(0.01, (0.9, 0.98), 1e-8);
        let hist = train(&mut layer, &task, &mut opt, 3, 4, 0).unwrap();
        assert_eq!(hist[0], 0.0);
        assert_eq!(hist.len(), 3);
    }

    #[test]
    fn cosine_gradient_matches_differences() {
        let a = [0.3, -1.2, 0.7];
        let b = [1.0, 0.4, -0.2];
        let (_, ga, gb) = cosine_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        let cos = |x: &[f64], y: &[f64]| dot(x, y) / (dot(x, x).sqrt() * dot(y, y).sqrt());
        for i in 0..3 {
            let mut p = a;
            let mut m = a;
            p[i] += h;
            m[i] -= h;
            assert!(((cos(&p, &b) - cos(&m, &b)) / (2.0 * h) - ga[i]).abs() < 1e-8);
            let mut p = b;
            let mut m = b;
            p[i] += h;
            m[i] -= h;
            assert!(((cos(&a, &p) - cos(&a, &m)) / (2.0 * h) - gb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_pairs_are_similar() {
        let cfg = LayerConfig::new(MethodKind::Word2ket, 10, 8)
            .with_order(3)
            .with_rank(2);
        let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let pairs: Vec<_> = (0..10)
            .map(|w| LabeledPair {
                a: w,
                b: w,
                label: true,
            })
            .collect();
        assert_eq!(eval_similarity(&layer, &pairs).unwrap(), 1.0);
    }

    #[test]
    fn nan_loss_aborts() {
        let cfg = LayerConfig::new(MethodKind::Original, 4, 2);
        let mut layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let targets = Matrix::from_fn(4, 2, |i, j| (i + j) as f64 * 1e3);
        let task = TrainTask::Reconstruct { targets };
        let mut opt = OptimizerState::sgd(1e6);
        let err = train(&mut layer, &task, &mut opt, 50, 4, 0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn reconstruction_gradient_passes_check() {
        // the upstream used by the mse example is exactly what backward expects
        let cfg = LayerConfig::new(MethodKind::MatrixFactor, 5, 3)
            .with_rank(2)
            .with_seed(9);
        let layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let r = finite_diff_check_with(&layer, 1, 1e-5, 1e-6, 3, |l, w, u| {
            crate::grad::backward(l, w, u)
        })
        .unwrap();
        assert!(r.passed);
    }

    #[test]
    fn bad_shapes_rejected() {
        let cfg = LayerConfig::new(MethodKind::Original, 4, 2);
        let mut layer: Layer<f64> = Layer::build(&cfg, None, None).unwrap();
        let task = TrainTask::Reconstruct {
            targets: Matrix::zeros(4, 3),
        };
        let mut opt = OptimizerState::sgd(0.1);
        assert!(matches!(
            train(&mut layer, &task, &mut opt, 1, 1, 0),
            Err(Error::Config(_))
        ));
        let task: TrainTask<f64> = TrainTask::WordSimilarity {
            pairs: vec![LabeledPair {
                a: 0,
                b: 9,
                label: true,
            }],
            loss: Loss::DEFAULT_CONTRASTIVE,
        };
        assert!(matches!(
            train(&mut layer, &task, &mut opt, 1, 1, 0),
            Err(Error::Lookup(_))
        ));
    }
}

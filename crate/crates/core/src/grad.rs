//! Hand-derived reverse-mode gradients for every layer kind, and a
//! central-difference checker for them.
//!
//! `backward` returns `∂<u, forward(w)>/∂θ` for an upstream vector `u`.
//! Truncated outputs are handled by zero-padding `u` to the generated
//! length, which is the adjoint of keeping the first `d` coordinates.
//! A parameter row used at several positions of one word receives the sum
//! of its positional contributions.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::MethodKind;
use crate::error::{Error, Result};
use crate::layers::{tt_left_partials, tt_right_partials, Layer};
use crate::scalar::Scalar;
use crate::tensor::{add_assign, kron_adjoint, Matrix, Vector};

/// Gradient buffer for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSlot<T> {
    param_name: String,
    grad: Matrix<T>,
}

impl<T: Scalar> GradSlot<T> {
    pub fn param_name(&self) -> &str {
        &self.param_name
    }

    pub fn grad(&self) -> &Matrix<T> {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut Matrix<T> {
        &mut self.grad
    }

    pub fn zero(&mut self) {
        self.grad.fill_zero();
    }

    /// Adds another slot of the same shape into this one.
    pub fn accumulate(&mut self, other: &GradSlot<T>) {
        debug_assert!(self.grad.same_shape(&other.grad));
        add_assign(self.grad.as_mut_slice(), other.grad.as_slice());
    }
}

/// Zero-filled slots aligned with `layer.params()`.
pub fn zero_slots<T: Scalar>(layer: &Layer<T>) -> Vec<GradSlot<T>> {
    layer
        .params()
        .iter()
        .map(|p| GradSlot {
            param_name: p.name().to_owned(),
            grad: Matrix::zeros(p.value().rows(), p.value().cols()),
        })
        .collect()
}

/// Gradient of `<upstream, forward(word_id)>` with respect to every block.
pub fn backward<T: Scalar>(
    layer: &Layer<T>,
    word_id: usize,
    upstream: &Vector<T>,
) -> Result<Vec<GradSlot<T>>> {
    let mut slots = zero_slots(layer);
    backward_into(layer, word_id, upstream, &mut slots)?;
    Ok(slots)
}

/// Like [`backward`] but adds into existing slots.
pub fn backward_into<T: Scalar>(
    layer: &Layer<T>,
    word_id: usize,
    upstream: &[T],
    slots: &mut [GradSlot<T>],
) -> Result<()> {
    layer.check_word(word_id)?;
    let c = layer.config();
    if upstream.len() != c.embed_dim {
        return Err(Error::invalid(format!(
            "upstream has length {}, expected {}",
            upstream.len(),
            c.embed_dim
        )));
    }
    if slots.len() != layer.params().len()
        || slots
            .iter()
            .zip(layer.params())
            .any(|(s, p)| !s.grad.same_shape(p.value()))
    {
        return Err(Error::invalid(
            "gradient slots do not match the layer's blocks",
        ));
    }

    match c.kind {
        MethodKind::Original => add_assign(slots[0].grad.row_mut(word_id), upstream),
        MethodKind::MatrixFactor => {
            let a = layer.params()[0].value().row(word_id);
            let b = layer.params()[1].value();
            // ∂/∂A[w,k] = Σ_j B[k,j] u[j];  ∂/∂B[k,j] = A[w,k] u[j]
            let ga: Vec<T> = (0..b.rows())
                .map(|k| crate::tensor::dot(b.row(k), upstream))
                .collect();
            add_assign(slots[0].grad.row_mut(word_id), &ga);
            for (k, &ak) in a.iter().enumerate() {
                for (g, &u) in slots[1].grad.row_mut(k).iter_mut().zip(upstream) {
                    *g += ak * u;
                }
            }
        }
        MethodKind::MorphSum => {
            add_assign(slots[0].grad.row_mut(word_id), upstream);
            for m in layer.real_morphemes(word_id) {
                add_assign(slots[1].grad.row_mut(m), upstream);
            }
        }
        MethodKind::TensorTrain => {
            let u = padded(upstream, c.generated_dim());
            let slices = layer.tt_slices(word_id);
            let left = tt_left_partials(&slices);
            let right = tt_right_partials(&slices);
            for (k, s) in slices.iter().enumerate() {
                let l = &left[k];
                let r = &right[k + 1];
                let rows_l = l.len() / s.rank_in;
                let cols_r = r.len() / s.rank_out;
                let mut g = vec![T::zero(); s.data.len()];
                for p in 0..rows_l {
                    for a in 0..s.rank_in {
                        let lv = l[p * s.rank_in + a];
                        if lv == T::zero() {
                            continue;
                        }
                        for y in 0..s.width {
                            let useg =
                                &u[(p * s.width + y) * cols_r..(p * s.width + y + 1) * cols_r];
                            for b in 0..s.rank_out {
                                let rv = &r[b * cols_r..(b + 1) * cols_r];
                                g[(a * s.width + y) * s.rank_out + b] +=
                                    lv * crate::tensor::dot(useg, rv);
                            }
                        }
                    }
                }
                add_assign(slots[k].grad.row_mut(s.digit), &g);
            }
        }
        MethodKind::Word2ket
        | MethodKind::Word2ketXs
        | MethodKind::MorphTe
        | MethodKind::Word2ketRshare => {
            let u = padded(upstream, c.generated_dim());
            for term in layer.rank_terms(word_id) {
                let grads = kron_adjoint(&term.factors, &u);
                for (g, &(block, row, off)) in grads.iter().zip(&term.sources) {
                    add_assign(&mut slots[block].grad.row_mut(row)[off..off + g.len()], g);
                }
            }
        }
        MethodKind::MorphLstm => unreachable!("not buildable"),
    }
    Ok(())
}

fn padded<T: Scalar>(upstream: &[T], len: usize) -> Vec<T> {
    let mut u = upstream.to_vec();
    u.resize(len, T::zero());
    u
}

/// Parameter entries whose value can influence `forward(word_id)`:
/// `(block, flat offset)` pairs in ascending order.
pub fn touched_entries<T: Scalar>(layer: &Layer<T>, word_id: usize) -> Result<Vec<(usize, usize)>> {
    layer.check_word(word_id)?;
    let c = layer.config();
    let mut rows: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut whole: Vec<usize> = Vec::new();
    match c.kind {
        MethodKind::Original | MethodKind::Word2ket => {
            rows.insert((0, word_id));
        }
        MethodKind::MatrixFactor => {
            rows.insert((0, word_id));
            whole.push(1);
        }
        MethodKind::MorphSum => {
            rows.insert((0, word_id));
            rows.extend(layer.real_morphemes(word_id).map(|m| (1, m)));
        }
        MethodKind::TensorTrain => {
            rows.extend(
                layer
                    .tt_slices(word_id)
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (k, s.digit)),
            );
        }
        MethodKind::Word2ketXs | MethodKind::MorphTe | MethodKind::Word2ketRshare => {
            for term in layer.rank_terms(word_id) {
                rows.extend(term.sources.iter().map(|&(b, r, _)| (b, r)));
            }
        }
        MethodKind::MorphLstm => unreachable!("not buildable"),
    }
    let params = layer.params();
    let mut out = Vec::new();
    for &b in &whole {
        out.extend((0..params[b].value().len()).map(|i| (b, i)));
    }
    for (b, r) in rows {
        let cols = params[b].value().cols();
        out.extend((r * cols..(r + 1) * cols).map(|i| (b, i)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub word_id: usize,
    /// Number of parameter entries compared.
    pub checked: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Denominator floor for the relative error, so entries whose true
/// gradient is (near) zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares [`backward`] with central differences of `<u, forward(word_id)>`
/// for a random upstream `u` drawn from `seed`, over every parameter entry
/// touched by the word.
pub fn finite_diff_check<T: Scalar>(
    layer: &Layer<T>,
    word_id: usize,
    epsilon: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    finite_diff_check_with(layer, word_id, epsilon, tolerance, seed, |l, w, u| {
        backward(l, w, u)
    })
}

/// [`finite_diff_check`] against an arbitrary gradient routine.
pub fn finite_diff_check_with<T, F>(
    layer: &Layer<T>,
    word_id: usize,
    epsilon: f64,
    tolerance: f64,
    seed: u64,
    grad_fn: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Layer<T>, usize, &Vector<T>) -> Result<Vec<GradSlot<T>>>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let d = layer.embed_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let upstream =
        Vector::from_vec_unchecked((0..d).map(|_| T::of(dist.sample(&mut rng))).collect());
    let analytic = grad_fn(layer, word_id, &upstream)?;

    let entries = touched_entries(layer, word_id)?;
    let eps = T::of(epsilon);
    let mut probe = layer.clone();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for &(b, i) in &entries {
        let orig = probe.params()[b].value().as_slice()[i];
        let plus = orig + eps;
        let minus = orig - eps;
        probe.params_mut()[b].data_mut()[i] = plus;
        let y_plus = probe.forward(word_id)?;
        probe.params_mut()[b].data_mut()[i] = minus;
        let y_minus = probe.forward(word_id)?;
        probe.params_mut()[b].data_mut()[i] = orig;

        // Divide by the step actually taken; per-output differences keep
        // exactly-linear maps exact.
        let step = plus - minus;
        let numeric: f64 = upstream
            .iter()
            .zip(y_plus.iter().zip(y_minus.iter()))
            .map(|(&u, (&yp, &ym))| (u * ((yp - ym) / step)).as_f64())
            .sum();
        let exact = analytic[b].grad.as_slice()[i].as_f64();
        let abs = (numeric - exact).abs();
        let rel = if abs == 0.0 {
            0.0
        } else {
            abs / numeric.abs().max(exact.abs()).max(REL_ERROR_FLOOR)
        };
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        word_id,
        checked: entries.len(),
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        tolerance,
        passed: max_rel < tolerance,
    })
}

//! Dense vectors, row-major matrices and the flattened tensor product.
//!
//! Every tensor product in the crate is the flattened (Kronecker) form: the
//! product of a `g`-vector and an `h`-vector is a `g*h`-vector whose entry
//! `j*h + k` is `a[j] * b[k]`. A cumulative product of several vectors is
//! the left fold of that operation, so the output index is the mixed-radix
//! number formed by the per-factor indices, most significant first.

use std::ops::{Deref, Index};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-empty dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    /// Wraps `data`, rejecting empty or non-finite input.
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("vector must be non-empty"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "vector must be non-empty");
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| T::of(v)).collect())
    }

    /// Used for results of arithmetic on already-validated inputs.
    pub(crate) fn from_vec_unchecked(data: Vec<T>) -> Self {
        debug_assert!(!data.is_empty());
        Self { data }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite values"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn add_assign<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Flattened product of an arbitrary list of factors with possibly different lengths.
pub(crate) fn kron<T: Scalar>(factors: &[&[T]]) -> Vec<T> {
    let (first, rest) = factors.split_first().expect("at least one factor");
    let total: usize = factors.iter().map(|f| f.len()).product();
    let mut cur = Vec::with_capacity(total);
    cur.extend_from_slice(first);
    for f in rest {
        let mut next = Vec::with_capacity(cur.len() * f.len());
        for &a in &cur {
            next.extend(f.iter().map(|&b| a * b));
        }
        cur = next;
    }
    cur
}

/// Adjoint of [`kron`] with respect to each factor.
///
/// For `y = f_1 ⊗ … ⊗ f_n` and an upstream gradient `u` of length `∏|f_k|`,
/// returns `g_k = ∂<u, y>/∂f_k` for every `k`. Viewing `u` as a 3-way array
/// `(left, |f_k|, right)` around position `k`, `g_k[i]` is the contraction of
/// that slice with the product of the factors to the left and to the right.
pub(crate) fn kron_adjoint<T: Scalar>(factors: &[&[T]], upstream: &[T]) -> Vec<Vec<T>> {
    let n = factors.len();
    debug_assert_eq!(
        upstream.len(),
        factors.iter().map(|f| f.len()).product::<usize>()
    );
    // prefix[k] = f_1 ⊗ … ⊗ f_k (prefix[0] = [1]); suffix[k] = f_{k+1} ⊗ … ⊗ f_n.
    let mut prefix: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    prefix.push(vec![T::one()]);
    for f in factors {
        let p = prefix.last().unwrap();
        prefix.push(kron(&[p.as_slice(), f]));
    }
    let mut suffix: Vec<Vec<T>> = vec![Vec::new(); n + 1];
    suffix[n] = vec![T::one()];
    for k in (0..n).rev() {
        suffix[k] = kron(&[factors[k], suffix[k + 1].as_slice()]);
    }

    (0..n)
        .map(|k| {
            let left = &prefix[k];
            let right = &suffix[k + 1];
            let width = factors[k].len();
            let mut g = vec![T::zero(); width];
            for (a, &l) in left.iter().enumerate() {
                if l == T::zero() {
                    continue;
                }
                let base = a * width * right.len();
                for (i, gi) in g.iter_mut().enumerate() {
                    let off = base + i * right.len();
                    *gi += l * dot(&upstream[off..off + right.len()], right);
                }
            }
            g
        })
        .collect()
}

/// `a ⊗ b`, flattened: `out[j*h + k] = a[j] * b[k]`.
pub fn tensor_product<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> Result<Vector<T>> {
    Ok(Vector::from_vec_unchecked(kron(&[
        a.as_slice(),
        b.as_slice(),
    ])))
}

/// Left fold of [`tensor_product`] over `n ≥ 1` vectors of one common length `q`.
pub fn cumulative_tensor_product<T: Scalar>(vs: &[Vector<T>]) -> Result<Vector<T>> {
    check_uniform(vs)?;
    let slices: Vec<&[T]> = vs.iter().map(|v| v.as_slice()).collect();
    Ok(Vector::from_vec_unchecked(kron(&slices)))
}

/// Sum of `r` simple tensors, each the cumulative product of one group.
pub fn entangled_sum<T: Scalar>(groups: &[Vec<Vector<T>>]) -> Result<Vector<T>> {
    let first = groups
        .first()
        .ok_or_else(|| Error::invalid("entangled sum needs at least one group"))?;
    let order = first.len();
    let q = check_uniform(first)?;
    let mut acc = vec![T::zero(); q.pow(order as u32)];
    for (i, g) in groups.iter().enumerate() {
        if g.len() != order {
            return Err(Error::invalid(format!(
                "group {i} has {} vectors, expected {order}",
                g.len()
            )));
        }
        if check_uniform(g)? != q {
            return Err(Error::invalid(format!(
                "group {i} vectors have length {}, expected {q}",
                g[0].len()
            )));
        }
        let slices: Vec<&[T]> = g.iter().map(|v| v.as_slice()).collect();
        add_assign(&mut acc, &kron(&slices));
    }
    Ok(Vector::from_vec_unchecked(acc))
}

/// Keeps the first `d` coordinates.
pub fn truncate_to<T: Scalar>(v: &Vector<T>, d: usize) -> Result<Vector<T>> {
    if d == 0 {
        return Err(Error::invalid("target dimension must be positive"));
    }
    if v.len() < d {
        return Err(Error::config(format!(
            "cannot truncate a {}-vector to {d} coordinates",
            v.len()
        )));
    }
    Ok(Vector::from_vec_unchecked(v[..d].to_vec()))
}

fn check_uniform<T: Scalar>(vs: &[Vector<T>]) -> Result<usize> {
    let q = vs
        .first()
        .ok_or_else(|| Error::invalid("need at least one vector"))?
        .len();
    if let Some(bad) = vs.iter().position(|v| v.len() != q) {
        return Err(Error::invalid(format!(
            "vector {bad} has length {}, expected {q}",
            vs[bad].len()
        )));
    }
    Ok(q)
}

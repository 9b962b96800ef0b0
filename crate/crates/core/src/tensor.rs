//! Dense complex tensors in row-major order and pairwise contraction.
//!
//! Every tensor in the crate is one of these: measurement effects (2 axes),
//! chain tensors (3 axes), transfer environments (2 axes). Contraction is
//! implemented as permute-reshape-matmul, which is exact and fast enough at
//! the bond and physical dimensions this crate targets.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexTensor {
    /// An all-zero tensor. A rank-0 shape holds a single scalar entry.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        ComplexTensor {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} requires {} entries, got {}",
                shape,
                len,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(ComplexTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: Complex64) -> Self {
        ComplexTensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// The 2-axis identity.
    pub fn identity(n: usize) -> Self {
        let mut t = ComplexTensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Row-major strides for the current shape.
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (axis, (&i, &dim)) in index.iter().zip(&self.shape).enumerate() {
            debug_assert!(i < dim, "index {} out of range on axis {}", i, axis);
            flat = flat * dim + i;
        }
        flat
    }

    pub fn get(&self, index: &[usize]) -> Complex64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: Complex64) {
        let flat = self.flat_index(index);
        self.data[flat] = value;
    }

    /// Fast accessor for 2-axis tensors.
    pub fn get2(&self, row: usize, col: usize) -> Complex64 {
        debug_assert_eq!(self.ndim(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn set2(&mut self, row: usize, col: usize, value: Complex64) {
        debug_assert_eq!(self.ndim(), 2);
        let cols = self.shape[1];
        self.data[row * cols + col] = value;
    }

    pub fn conj(&self) -> Self {
        ComplexTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose of a 2-axis tensor.
    pub fn adjoint(&self) -> Result<Self> {
        if self.ndim() != 2 {
            return Err(Error::Shape(format!(
                "adjoint requires 2 axes, got {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = ComplexTensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j].conj();
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, rhs: &ComplexTensor) -> Result<ComplexTensor> {
        if self.ndim() != 2 || rhs.ndim() != 2 {
            return Err(Error::Shape(format!(
                "matmul requires 2-axis tensors, got {:?} and {:?}",
                self.shape, rhs.shape
            )));
        }
        if self.shape[1] != rhs.shape[0] {
            return Err(Error::AxisMismatch {
                lhs_axis: 1,
                lhs_len: self.shape[1],
                rhs_axis: 0,
                rhs_len: rhs.shape[0],
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = vec![Complex64::new(0.0, 0.0); m * n];
        for i in 0..m {
            for kk in 0..k {
                let a = self.data[i * k + kk];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let row = &rhs.data[kk * n..(kk + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(ComplexTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn trace(&self) -> Result<Complex64> {
        if self.ndim() != 2 || self.shape[0] != self.shape[1] {
            return Err(Error::Shape(format!(
                "trace requires a square 2-axis tensor, got {:?}",
                self.shape
            )));
        }
        let n = self.shape[0];
        Ok((0..n).map(|i| self.data[i * n + i]).sum())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        ComplexTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// self += factor * other; shapes must match.
    pub fn add_scaled(&mut self, other: &ComplexTensor, factor: Complex64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add_scaled shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (d, &s) in self.data.iter_mut().zip(&other.data) {
            *d += factor * s;
        }
        Ok(())
    }

    pub fn sub(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "sub shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(ComplexTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Reorder axes: output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<ComplexTensor> {
        let nd = self.ndim();
        if perm.len() != nd {
            return Err(Error::Shape(format!(
                "permutation {:?} does not match rank {}",
                perm, nd
            )));
        }
        let mut seen = vec![false; nd];
        for &p in perm {
            if p >= nd || seen[p] {
                return Err(Error::Shape(format!("invalid permutation {:?}", perm)));
            }
            seen[p] = true;
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        Ok(ComplexTensor {
            shape: new_shape,
            data: gather(self, perm, false).into_owned(),
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<ComplexTensor> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} entries) into {:?} ({} entries)",
                self.shape,
                self.data.len(),
                shape,
                len
            )));
        }
        Ok(ComplexTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }
}

/// Row-major gather of a permuted (and optionally conjugated) tensor.
/// Identity permutations without conjugation borrow the data as is; ranks up
/// to 3 use direct nested loops instead of the odometer walk.
fn gather<'t>(t: &'t ComplexTensor, perm: &[usize], conj: bool) -> std::borrow::Cow<'t, [Complex64]> {
    use std::borrow::Cow;
    let identity = perm.iter().enumerate().all(|(i, &p)| i == p);
    if identity {
        return if conj {
            Cow::Owned(t.data.iter().map(|z| z.conj()).collect())
        } else {
            Cow::Borrowed(&t.data)
        };
    }
    let old_strides = t.strides();
    let moved_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
    let new_shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let mut out = Vec::with_capacity(t.data.len());
    let grab = |z: Complex64| if conj { z.conj() } else { z };
    match moved_strides.as_slice() {
        [s0, s1] => {
            for i in 0..new_shape[0] {
                for j in 0..new_shape[1] {
                    out.push(grab(t.data[i * s0 + j * s1]));
                }
            }
        }
        [s0, s1, s2] => {
            for i in 0..new_shape[0] {
                for j in 0..new_shape[1] {
                    let base = i * s0 + j * s1;
                    for k in 0..new_shape[2] {
                        out.push(grab(t.data[base + k * s2]));
                    }
                }
            }
        }
        _ => {
            let nd = perm.len();
            let mut index = vec![0usize; nd];
            for _ in 0..t.data.len() {
                let mut src = 0;
                for (i, &stride) in index.iter().zip(&moved_strides) {
                    src += i * stride;
                }
                out.push(grab(t.data[src]));
                for axis in (0..nd).rev() {
                    index[axis] += 1;
                    if index[axis] < new_shape[axis] {
                        break;
                    }
                    index[axis] = 0;
                }
            }
        }
    }
    Cow::Owned(out)
}

/// Contract `a` and `b` over the given (axis-of-a, axis-of-b) pairs.
///
/// Result axes are the unpaired axes of `a` in order, then those of `b`.
/// An empty pair list is the outer product.
pub fn contract(
    a: &ComplexTensor,
    b: &ComplexTensor,
    axis_pairs: &[(usize, usize)],
) -> Result<ComplexTensor> {
    contract_conj(a, false, b, false, axis_pairs)
}

/// [`contract`] with elementwise conjugation of either operand folded into
/// the gather, so bra-side factors never materialize a conjugated copy.
pub fn contract_conj(
    a: &ComplexTensor,
    conj_a: bool,
    b: &ComplexTensor,
    conj_b: bool,
    axis_pairs: &[(usize, usize)],
) -> Result<ComplexTensor> {
    let mut used_a = vec![false; a.ndim()];
    let mut used_b = vec![false; b.ndim()];
    for &(ax, bx) in axis_pairs {
        if ax >= a.ndim() || used_a[ax] {
            return Err(Error::Shape(format!(
                "axis {} of lhs (rank {}) invalid or repeated in pairs {:?}",
                ax,
                a.ndim(),
                axis_pairs
            )));
        }
        if bx >= b.ndim() || used_b[bx] {
            return Err(Error::Shape(format!(
                "axis {} of rhs (rank {}) invalid or repeated in pairs {:?}",
                bx,
                b.ndim(),
                axis_pairs
            )));
        }
        used_a[ax] = true;
        used_b[bx] = true;
        if a.shape[ax] != b.shape[bx] {
            return Err(Error::AxisMismatch {
                lhs_axis: ax,
                lhs_len: a.shape[ax],
                rhs_axis: bx,
                rhs_len: b.shape[bx],
            });
        }
    }

    let free_a: Vec<usize> = (0..a.ndim()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.ndim()).filter(|&i| !used_b[i]).collect();

    // a -> (free_a..., paired...), b -> (paired..., free_b...)
    let mut perm_a = free_a.clone();
    perm_a.extend(axis_pairs.iter().map(|&(ax, _)| ax));
    let mut perm_b: Vec<usize> = axis_pairs.iter().map(|&(_, bx)| bx).collect();
    perm_b.extend(free_b.iter().copied());

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = axis_pairs.iter().map(|&(ax, _)| a.shape[ax]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();

    let lhs = gather(a, &perm_a, conj_a);
    let rhs = gather(b, &perm_b, conj_b);

    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for i in 0..m {
        let dst = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = lhs[i * k + kk];
            if av.re == 0.0 && av.im == 0.0 {
                continue;
            }
            let row = &rhs[kk * n..(kk + 1) * n];
            for (d, &bv) in dst.iter_mut().zip(row) {
                *d += av * bv;
            }
        }
    }

    let mut out_shape: Vec<usize> = free_a.iter().map(|&i| a.shape[i]).collect();
    out_shape.extend(free_b.iter().map(|&i| b.shape[i]));
    Ok(ComplexTensor {
        shape: out_shape,
        data: out,
    })
}

//! Trainable measurement-operator token embeddings.
//!
//! A vocabulary of v tokens is embedded as v positive operators M(x) on a
//! p-dimensional local space, with sum_x M(x) = I. The operators come from
//! the Q factor of a (v*p) x p parameter matrix: stacking the v blocks of an
//! isometry Q gives Kraus factors Q(x) whose effects M(x) = Q(x)^H Q(x)
//! satisfy the completeness constraint by construction, for any p. The fixed
//! one-hot baseline (diagonal basis projectors, p = v) is kept as a separate,
//! non-trainable constructor.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, hermitian_min_eigenvalue, qr_reduced, solve_lower_right};
use crate::tensor::ComplexTensor;

/// Raw embedding parameters: an unconstrained (v*p) x p complex matrix.
#[derive(Clone, Debug)]
pub struct EmbeddingParams {
    gamma: ComplexTensor,
    vocab_size: usize,
    phys_dim: usize,
}

impl EmbeddingParams {
    pub fn new(gamma: ComplexTensor, vocab_size: usize, phys_dim: usize) -> Result<Self> {
        if vocab_size == 0 || phys_dim == 0 {
            return Err(Error::Config(
                "vocabulary size and physical dimension must be >= 1".into(),
            ));
        }
        if gamma.shape() != [vocab_size * phys_dim, phys_dim] {
            return Err(Error::Shape(format!(
                "embedding parameters must be {}x{}, got {:?}",
                vocab_size * phys_dim,
                phys_dim,
                gamma.shape()
            )));
        }
        Ok(EmbeddingParams {
            gamma,
            vocab_size,
            phys_dim,
        })
    }

    /// I.i.d. complex Gaussian init with per-entry std 1/sqrt(p), which puts
    /// every effect near I/v so early training steps are well scaled.
    pub fn random(vocab_size: usize, phys_dim: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || phys_dim == 0 {
            return Err(Error::Config(
                "vocabulary size and physical dimension must be >= 1".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gamma = complex_gaussian(
            vocab_size * phys_dim,
            phys_dim,
            1.0 / (phys_dim as f64).sqrt(),
            &mut rng,
        );
        EmbeddingParams::new(gamma, vocab_size, phys_dim)
    }

    /// Stacked basis projectors; forwarding these through the QR construction
    /// reproduces the one-hot measurement set.
    pub fn one_hot(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be >= 1".into()));
        }
        let p = vocab_size;
        let mut gamma = ComplexTensor::zeros(&[vocab_size * p, p]);
        for x in 0..vocab_size {
            gamma.set2(x * p + x, x, Complex64::new(1.0, 0.0));
        }
        EmbeddingParams::new(gamma, vocab_size, p)
    }

    pub fn gamma(&self) -> &ComplexTensor {
        &self.gamma
    }

    pub fn gamma_mut(&mut self) -> &mut ComplexTensor {
        &mut self.gamma
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }
}

/// A complete measurement set: per-token Kraus factors Q(x) and effects
/// M(x) = Q(x)^H Q(x). Immutable snapshot, safe to share across threads.
#[derive(Clone, Debug)]
pub struct Povm {
    vocab_size: usize,
    phys_dim: usize,
    kraus: Vec<ComplexTensor>,
    effects: Vec<ComplexTensor>,
}

impl Povm {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn kraus(&self, token: usize) -> &ComplexTensor {
        &self.kraus[token]
    }

    pub fn effect(&self, token: usize) -> &ComplexTensor {
        &self.effects[token]
    }
}

/// Forward the raw parameters into a valid measurement set: take the Q factor
/// of gamma and slice it into v contiguous p x p row blocks, token x owning
/// rows [x*p, (x+1)*p).
pub fn build_povm(params: &EmbeddingParams) -> Result<Povm> {
    let (v, p) = (params.vocab_size, params.phys_dim);
    let (q, _r) = qr_reduced(&params.gamma)?;
    let mut kraus = Vec::with_capacity(v);
    let mut effects = Vec::with_capacity(v);
    for x in 0..v {
        let mut block = ComplexTensor::zeros(&[p, p]);
        for i in 0..p {
            for j in 0..p {
                block.set2(i, j, q.get2(x * p + i, j));
            }
        }
        let effect = block.adjoint()?.matmul(&block)?;
        kraus.push(block);
        effects.push(effect);
    }
    Ok(Povm {
        vocab_size: v,
        phys_dim: p,
        kraus,
        effects,
    })
}

/// Fixed baseline: M(x) is the diagonal projector onto basis state x, Q(x) =
/// M(x), and the physical dimension equals the vocabulary size.
pub fn one_hot_povm(vocab_size: usize) -> Povm {
    let v = vocab_size.max(1);
    let mut kraus = Vec::with_capacity(v);
    for x in 0..v {
        let mut block = ComplexTensor::zeros(&[v, v]);
        block.set2(x, x, Complex64::new(1.0, 0.0));
        kraus.push(block);
    }
    Povm {
        vocab_size: v,
        phys_dim: v,
        effects: kraus.clone(),
        kraus,
    }
}

/// Measured deviations from the measurement-set constraints. Diagnostic only;
/// never fails.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    /// max over tokens of the max-entry deviation of M(x) from M(x)^H.
    pub max_hermiticity_dev: f64,
    /// min over tokens of the smallest eigenvalue of (the Hermitian part of) M(x).
    pub min_eigenvalue: f64,
    /// max-entry deviation of sum_x M(x) from the identity.
    pub completeness_dev: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn validate_povm(povm: &Povm, tol: f64) -> ValidationReport {
    let p = povm.phys_dim;
    let mut max_herm = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut sum = ComplexTensor::zeros(&[p, p]);
    for x in 0..povm.vocab_size {
        let m = povm.effect(x);
        let herm_dev = m
            .sub(&m.adjoint().expect("effects are square"))
            .expect("same shape")
            .max_abs();
        max_herm = max_herm.max(herm_dev);
        let eig = hermitian_min_eigenvalue(m).expect("effects are square");
        min_eig = min_eig.min(eig);
        sum.add_scaled(m, Complex64::new(1.0, 0.0))
            .expect("same shape");
    }
    let completeness = sum.sub(&ComplexTensor::identity(p)).expect("square").max_abs();
    let pass = max_herm <= tol && min_eig >= -tol && completeness <= tol;
    ValidationReport {
        max_hermiticity_dev: max_herm,
        min_eigenvalue: min_eig,
        completeness_dev: completeness,
        tol,
        pass,
    }
}

/// Pull a gradient with respect to the Q factor back to the raw parameters.
///
/// Gradient convention throughout the crate: for a real loss L and complex
/// parameter z, grad(z) = dL/dRe(z) + i dL/dIm(z), so a small step z - eta*grad
/// decreases L. Under that convention, with B = Q^H grad_Q and H the Hermitian
/// matrix assembled from the upper triangle of B (strict upper + its adjoint
/// + Re of the diagonal), the pullback through the phase-fixed factorization is
///
///    grad_gamma = (grad_Q - Q H) R^{-H}.
///
/// The Re on the diagonal is where the positive-diagonal convention enters;
/// correctness is pinned by finite differences in the tests.
pub fn qr_backward(gamma: &ComplexTensor, grad_q: &ComplexTensor) -> Result<ComplexTensor> {
    if grad_q.shape() != gamma.shape() {
        return Err(Error::Shape(format!(
            "grad_Q shape {:?} does not match parameter shape {:?}",
            grad_q.shape(),
            gamma.shape()
        )));
    }
    let (q, r) = qr_reduced(gamma)?;
    let b = q.adjoint()?.matmul(grad_q)?;
    let n = b.shape()[0];
    let mut h = ComplexTensor::zeros(&[n, n]);
    for i in 0..n {
        h.set2(i, i, Complex64::new(b.get2(i, i).re, 0.0));
        for j in (i + 1)..n {
            let upper = b.get2(i, j);
            h.set2(i, j, upper);
            h.set2(j, i, upper.conj());
        }
    }
    let c = grad_q.sub(&q.matmul(&h)?)?;
    solve_lower_right(&c, &r.adjoint()?)
}

/// The embedding actually carried by a model: trainable parameters or the
/// fixed one-hot baseline.
#[derive(Clone, Debug)]
pub enum Embedding {
    Trainable(EmbeddingParams),
    OneHot { vocab_size: usize },
}

impl Embedding {
    pub fn povm(&self) -> Result<Povm> {
        match self {
            Embedding::Trainable(params) => build_povm(params),
            Embedding::OneHot { vocab_size } => Ok(one_hot_povm(*vocab_size)),
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Embedding::Trainable(params) => params.vocab_size(),
            Embedding::OneHot { vocab_size } => *vocab_size,
        }
    }

    pub fn phys_dim(&self) -> usize {
        match self {
            Embedding::Trainable(params) => params.phys_dim(),
            Embedding::OneHot { vocab_size } => *vocab_size,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Embedding::Trainable(_))
    }
}

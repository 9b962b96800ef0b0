//! Right-canonical isometric matrix-product chain and exact sequence
//! probability evaluation.
//!
//! The chain holds one rank-3 tensor per site, shaped (left bond, physical,
//! right bond) with unit boundary bonds. Site tensors are isometric in the
//! (physical, right bond) x (left bond) reshaping, which normalizes the state
//! exactly and makes every all-unassigned suffix contribute an identity to
//! marginal sweeps.
//!
//! Probabilities are expectation values of per-site measurement effects,
//! evaluated by a single left-to-right transfer sweep. Environments are
//! matrices indexed (bra bond, ket bond); they stay Hermitian positive
//! semi-definite throughout a sweep.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{isometry_deviation, random_isometry_from_rng};
use crate::povm::Povm;
use crate::tensor::{contract, contract_conj, ComplexTensor};

#[derive(Clone, Debug)]
pub struct IsometricMps {
    n: usize,
    phys_dim: usize,
    bond_dims: Vec<usize>,
    tensors: Vec<ComplexTensor>,
}

/// Capped exponential bond profile: D_i = min(d_max, p^i, p^(n-i)). The two
/// exponential caps keep every site isometry-feasible near the boundaries.
pub fn bond_profile(n: usize, phys_dim: usize, d_max: usize) -> Vec<usize> {
    let cap = |exp: usize| -> usize {
        let mut acc: usize = 1;
        for _ in 0..exp {
            acc = acc.saturating_mul(phys_dim);
            if acc >= d_max {
                return d_max;
            }
        }
        acc.min(d_max)
    };
    (0..=n).map(|i| cap(i).min(cap(n - i)).max(1)).collect()
}

impl IsometricMps {
    /// Random right-canonical chain with the capped bond profile; every site
    /// tensor is drawn as a Haar-ish isometry from one seeded stream.
    pub fn random(n: usize, phys_dim: usize, d_max: usize, seed: u64) -> Result<Self> {
        if n == 0 || phys_dim == 0 || d_max == 0 {
            return Err(Error::Config(
                "sequence length, physical dimension and bond cap must be >= 1".into(),
            ));
        }
        let bond_dims = bond_profile(n, phys_dim, d_max);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut tensors = Vec::with_capacity(n);
        for i in 0..n {
            let (dl, dr) = (bond_dims[i], bond_dims[i + 1]);
            let w = random_isometry_from_rng(phys_dim * dr, dl, &mut rng)?;
            tensors.push(site_tensor_from_matrix(&w, dl, phys_dim, dr)?);
        }
        Ok(IsometricMps {
            n,
            phys_dim,
            bond_dims,
            tensors,
        })
    }

    /// Assemble a chain from explicit tensors, validating the bond structure
    /// but not the isometry (diagnostics check that separately).
    pub fn from_tensors(phys_dim: usize, tensors: Vec<ComplexTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Config("chain must have at least one site".into()));
        }
        let n = tensors.len();
        let mut bond_dims = Vec::with_capacity(n + 1);
        bond_dims.push(1usize);
        for (i, t) in tensors.iter().enumerate() {
            if t.ndim() != 3 {
                return Err(Error::Shape(format!(
                    "site {} tensor must have 3 axes, got {:?}",
                    i,
                    t.shape()
                )));
            }
            if t.shape()[0] != bond_dims[i] {
                return Err(Error::Shape(format!(
                    "site {} left bond {} does not match previous right bond {}",
                    i,
                    t.shape()[0],
                    bond_dims[i]
                )));
            }
            if t.shape()[1] != phys_dim {
                return Err(Error::Shape(format!(
                    "site {} physical dimension {} does not match {}",
                    i,
                    t.shape()[1],
                    phys_dim
                )));
            }
            bond_dims.push(t.shape()[2]);
        }
        if *bond_dims.last().unwrap() != 1 {
            return Err(Error::Shape(format!(
                "last site right bond must be 1, got {}",
                bond_dims.last().unwrap()
            )));
        }
        for i in 0..n {
            if bond_dims[i] > phys_dim * bond_dims[i + 1] {
                return Err(Error::Shape(format!(
                    "site {} infeasible: left bond {} exceeds p * right bond = {}",
                    i,
                    bond_dims[i],
                    phys_dim * bond_dims[i + 1]
                )));
            }
        }
        Ok(IsometricMps {
            n,
            phys_dim,
            bond_dims,
            tensors,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn bond_dims(&self) -> &[usize] {
        &self.bond_dims
    }

    pub fn tensor(&self, site: usize) -> &ComplexTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[ComplexTensor] {
        &self.tensors
    }

    /// The (p * right bond) x (left bond) matrix reshaping whose isometry is
    /// the right-canonical condition.
    pub fn site_matrix(&self, site: usize) -> ComplexTensor {
        let t = &self.tensors[site];
        let (dl, p, dr) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        t.permute(&[1, 2, 0])
            .and_then(|m| m.reshape(&[p * dr, dl]))
            .expect("site tensor permutation cannot fail")
    }

    /// Replace a site tensor from its matrix reshaping.
    pub fn set_site_matrix(&mut self, site: usize, w: &ComplexTensor) -> Result<()> {
        let (dl, dr) = (self.bond_dims[site], self.bond_dims[site + 1]);
        let p = self.phys_dim;
        if w.shape() != [p * dr, dl] {
            return Err(Error::Shape(format!(
                "site {} matrix must be {}x{}, got {:?}",
                site,
                p * dr,
                dl,
                w.shape()
            )));
        }
        self.tensors[site] = site_tensor_from_matrix(w, dl, p, dr)?;
        Ok(())
    }

    /// Per-site max-entry deviation of W^H W from the identity.
    pub fn check_isometry(&self, tol: f64) -> IsometryReport {
        let per_site: Vec<f64> = (0..self.n)
            .map(|i| {
                isometry_deviation(&self.site_matrix(i)).expect("site matrix is rectangular")
            })
            .collect();
        let max_deviation = per_site.iter().copied().fold(0.0, f64::max);
        IsometryReport {
            per_site,
            max_deviation,
            tol,
            pass: max_deviation <= tol,
        }
    }

    /// <basis|state>: the chain product of the selected physical slices.
    pub fn amplitude(&self, basis: &[usize]) -> Result<Complex64> {
        if basis.len() != self.n {
            return Err(Error::Input(format!(
                "basis has {} entries for a chain of length {}",
                basis.len(),
                self.n
            )));
        }
        for (site, &b) in basis.iter().enumerate() {
            if b >= self.phys_dim {
                return Err(Error::Input(format!(
                    "basis index {} at site {} exceeds physical dimension {}",
                    b, site, self.phys_dim
                )));
            }
        }
        // Row vector propagated through the physical slices.
        let mut vec = vec![Complex64::new(1.0, 0.0)];
        for (site, &beta) in basis.iter().enumerate() {
            let t = &self.tensors[site];
            let (dl, p, dr) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let data = t.data();
            let mut next = vec![Complex64::new(0.0, 0.0); dr];
            for a in 0..dl {
                let va = vec[a];
                if va.re == 0.0 && va.im == 0.0 {
                    continue;
                }
                let base = a * p * dr + beta * dr;
                for (b, slot) in next.iter_mut().enumerate() {
                    *slot += va * data[base + b];
                }
            }
            vec = next;
        }
        Ok(vec[0])
    }
}

#[derive(Clone, Debug)]
pub struct IsometryReport {
    pub per_site: Vec<f64>,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

fn site_tensor_from_matrix(
    w: &ComplexTensor,
    dl: usize,
    p: usize,
    dr: usize,
) -> Result<ComplexTensor> {
    w.reshape(&[p, dr, dl])?.permute(&[2, 0, 1])
}

/// One step of the left-to-right sweep: absorb site tensor and an optional
/// physical operator into the environment. `env` is (bra left bond, ket left
/// bond); the result is (bra right bond, ket right bond). `None` is the
/// identity operator (a traced-out site).
pub fn transfer_left(
    env: &ComplexTensor,
    site: &ComplexTensor,
    op: Option<&ComplexTensor>,
) -> Result<ComplexTensor> {
    let ket = contract(env, site, &[(1, 0)])?; // (bra_l, phys, ket_r)
    match op {
        Some(m) => {
            let acted = contract(m, &ket, &[(1, 1)])?; // (phys', bra_l, ket_r)
            contract_conj(site, true, &acted, false, &[(0, 1), (1, 0)]) // (bra_r, ket_r)
        }
        None => contract_conj(site, true, &ket, false, &[(0, 0), (1, 1)]),
    }
}

/// Mirror of [`transfer_left`]: absorb a site from the right. `env` is (bra
/// right bond, ket right bond); the result is (bra left bond, ket left bond).
pub fn transfer_right(
    env: &ComplexTensor,
    site: &ComplexTensor,
    op: Option<&ComplexTensor>,
) -> Result<ComplexTensor> {
    let ket = contract(site, env, &[(2, 1)])?; // (ket_l, phys, bra_r)
    match op {
        Some(m) => {
            let acted = contract(m, &ket, &[(1, 1)])?; // (phys', ket_l, bra_r)
            contract_conj(site, true, &acted, false, &[(1, 0), (2, 2)]) // (bra_l, ket_l)
        }
        None => contract_conj(site, true, &ket, false, &[(1, 1), (2, 2)]),
    }
}

/// Exact model probability of a complete token sequence: the expectation of
/// the product of per-site effects, via one transfer sweep.
pub fn sequence_probability(mps: &IsometricMps, povm: &Povm, tokens: &[usize]) -> Result<f64> {
    if povm.phys_dim() != mps.phys_dim() {
        return Err(Error::Config(format!(
            "measurement physical dimension {} does not match chain physical dimension {}",
            povm.phys_dim(),
            mps.phys_dim()
        )));
    }
    if tokens.len() != mps.len() {
        return Err(Error::Input(format!(
            "sequence has {} tokens for a chain of length {}",
            tokens.len(),
            mps.len()
        )));
    }
    let mut env = ComplexTensor::scalar(Complex64::new(1.0, 0.0))
        .reshape(&[1, 1])
        .expect("scalar reshapes to 1x1");
    for (site, &x) in tokens.iter().enumerate() {
        if x >= povm.vocab_size() {
            return Err(Error::Input(format!(
                "token {} at site {} exceeds vocabulary size {}",
                x,
                site,
                povm.vocab_size()
            )));
        }
        env = transfer_left(&env, mps.tensor(site), Some(povm.effect(x)))?;
    }
    let value = env.get(&[0, 0]);
    debug_assert!(value.im.abs() <= 1e-10, "imaginary residue {}", value.im);
    Ok(value.re)
}

//! Exact likelihood training with isometry-preserving updates.
//!
//! Gradients are computed analytically: for each sample the chain is swept
//! once from each side with the sample's effects inserted, and the gradient
//! with respect to a site tensor (or an effect) is the contraction of
//! everything around a hole at that site, weighted by -1/(N p(x)).
//!
//! Gradient convention (fixed crate-wide): for a real loss L and a complex
//! parameter z, grad(z) = dL/dRe(z) + i dL/dIm(z). Central finite differences
//! on the real and imaginary parts are therefore directly comparable, and
//! z - eta * grad(z) is a descent step.
//!
//! Chain tensors stay isometric through a feasible-point scheme: Adam moments
//! live in unconstrained coordinates, the preconditioned direction is
//! projected onto the tangent space of the isometry constraint, and the step
//! is retracted back with the phase-fixed QR. The embedding parameters are
//! updated unconstrained; forwarding through QR on the next pass restores
//! measurement validity exactly.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::isometry_deviation;
use crate::mps::{transfer_right, IsometricMps};
use crate::povm::{qr_backward, Embedding, Povm};
use crate::tensor::{contract, contract_conj, ComplexTensor};

/// Samples per parallel gradient chunk. Fixed, so reductions happen in the
/// same order regardless of thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Learning rate for the chain tensors.
    pub lr_mps: f64,
    /// Learning rate for the embedding parameters.
    pub lr_emb: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Keep the embedding parameters fixed (the one-hot baseline is always
    /// fixed regardless).
    pub freeze_embedding: bool,
    /// Probabilities are clamped to this floor before logs.
    pub log_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_mps: 1e-2,
            lr_emb: 1e-3,
            batch_size: 32,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            freeze_embedding: false,
            log_clamp: 1e-300,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_mps > 0.0 && self.lr_emb > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be >= 1".into()));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::Config(format!("{} must be in (0, 1)", name)));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(self.log_clamp > 0.0) {
            return Err(Error::Config("log_clamp must be positive".into()));
        }
        Ok(())
    }
}

/// Ambient gradients of the batch NLL.
#[derive(Clone, Debug)]
pub struct GradReport {
    /// Per-site gradients, same shapes as the chain tensors.
    pub grad_mps: Vec<ComplexTensor>,
    /// Gradient of the raw embedding parameters; `None` for the one-hot
    /// baseline, all-zero when the embedding is frozen.
    pub grad_gamma: Option<ComplexTensor>,
    pub nll: f64,
    /// Samples whose probability underflowed the log clamp; they contribute
    /// a constant loss term and no gradient.
    pub clamped: usize,
}

fn validate_batch(mps: &IsometricMps, povm: &Povm, batch: &[Vec<usize>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Input("batch must be non-empty".into()));
    }
    if povm.phys_dim() != mps.phys_dim() {
        return Err(Error::Config(format!(
            "measurement physical dimension {} does not match chain physical dimension {}",
            povm.phys_dim(),
            mps.phys_dim()
        )));
    }
    for seq in batch {
        if seq.len() != mps.len() {
            return Err(Error::Input(format!(
                "sequence of length {} in a batch for chain length {}",
                seq.len(),
                mps.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t >= povm.vocab_size()) {
            return Err(Error::Input(format!(
                "token {} exceeds vocabulary size {}",
                bad,
                povm.vocab_size()
            )));
        }
    }
    Ok(())
}

/// Mean of -log(max(p(x), log_clamp)) over the batch.
pub fn batch_nll(
    mps: &IsometricMps,
    povm: &Povm,
    batch: &[Vec<usize>],
    log_clamp: f64,
) -> Result<f64> {
    validate_batch(mps, povm, batch)?;
    let terms: Vec<f64> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|seq| {
                    crate::mps::sequence_probability(mps, povm, seq)
                        .map(|p| -p.max(log_clamp).ln())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(terms.iter().sum::<f64>() / batch.len() as f64)
}

/// Per-chunk gradient accumulator, combined in fixed chunk order.
struct GradAccum {
    site_grads: Vec<ComplexTensor>,
    /// Per-token sums of the weighted conjugated effect holes; grad of the
    /// Kraus block for token t is Q(t) times this.
    effect_holes: Vec<ComplexTensor>,
    nll_sum: f64,
    clamped: usize,
}

impl GradAccum {
    fn zero(mps: &IsometricMps, povm: &Povm) -> Self {
        GradAccum {
            site_grads: mps
                .tensors()
                .iter()
                .map(|t| ComplexTensor::zeros(t.shape()))
                .collect(),
            effect_holes: (0..povm.vocab_size())
                .map(|_| ComplexTensor::zeros(&[povm.phys_dim(), povm.phys_dim()]))
                .collect(),
            nll_sum: 0.0,
            clamped: 0,
        }
    }

    fn merge(&mut self, other: &GradAccum) -> Result<()> {
        let one = Complex64::new(1.0, 0.0);
        for (a, b) in self.site_grads.iter_mut().zip(&other.site_grads) {
            a.add_scaled(b, one)?;
        }
        for (a, b) in self.effect_holes.iter_mut().zip(&other.effect_holes) {
            a.add_scaled(b, one)?;
        }
        self.nll_sum += other.nll_sum;
        self.clamped += other.clamped;
        Ok(())
    }
}

fn accumulate_sample(
    acc: &mut GradAccum,
    mps: &IsometricMps,
    povm: &Povm,
    seq: &[usize],
    batch_len: usize,
    log_clamp: f64,
) -> Result<()> {
    let n = mps.len();
    let unit = ComplexTensor::from_vec(&[1, 1], vec![Complex64::new(1.0, 0.0)])?;

    // Left sweep, keeping the per-site intermediates for the hole pass.
    // left[i] covers sites < i; ket[i] = left[i] * A_i; acted[i] = M_i * ket[i].
    let mut left = Vec::with_capacity(n + 1);
    let mut kets = Vec::with_capacity(n);
    let mut acteds = Vec::with_capacity(n);
    left.push(unit.clone());
    for i in 0..n {
        let ket = contract(&left[i], mps.tensor(i), &[(1, 0)])?; // (bra_l, phys, ket_r)
        let acted = contract(povm.effect(seq[i]), &ket, &[(1, 1)])?; // (phys', bra_l, ket_r)
        let next = contract_conj(mps.tensor(i), true, &acted, false, &[(0, 1), (1, 0)])?;
        kets.push(ket);
        acteds.push(acted);
        left.push(next);
    }
    // right[i] covers sites >= i.
    let mut right = vec![unit; n + 1];
    for i in (0..n).rev() {
        right[i] = transfer_right(&right[i + 1], mps.tensor(i), Some(povm.effect(seq[i])))?;
    }

    let prob = left[n].get(&[0, 0]).re;
    if prob < log_clamp {
        acc.nll_sum += -log_clamp.ln();
        acc.clamped += 1;
        return Ok(());
    }
    acc.nll_sum += -prob.ln();
    // d(-log p)/dp = -1/p, times the factor 2 of the Re/Im convention,
    // averaged over the batch.
    let weight = Complex64::new(-2.0 / (batch_len as f64 * prob), 0.0);

    for i in 0..n {
        // Hole at the site tensor: contract the effect and both environments.
        let hole = contract(&acteds[i], &right[i + 1], &[(2, 1)])? // (phys', bra_l, bra_r)
            .permute(&[1, 0, 2])?;
        acc.site_grads[i].add_scaled(&hole, weight)?;

        // Hole at the effect: both bond environments against the bare tensors.
        let ket_env = contract(&kets[i], &right[i + 1], &[(2, 1)])?; // (bra_l, phys, bra_r)
        let kernel =
            contract_conj(mps.tensor(i), true, &ket_env, false, &[(0, 0), (2, 2)])?; // (phys_bra, phys_ket)
        acc.effect_holes[seq[i]].add_scaled(&kernel.conj(), weight)?;
    }
    Ok(())
}

/// Ambient gradients of the batch NLL with respect to every chain tensor and,
/// for a trainable embedding, the raw parameters (through the phase-fixed QR).
pub fn gradients(
    embedding: &Embedding,
    mps: &IsometricMps,
    batch: &[Vec<usize>],
    freeze_embedding: bool,
    log_clamp: f64,
) -> Result<GradReport> {
    let povm = embedding.povm()?;
    validate_batch(mps, &povm, batch)?;

    let chunks: Vec<GradAccum> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = GradAccum::zero(mps, &povm);
            for seq in chunk {
                accumulate_sample(&mut acc, mps, &povm, seq, batch.len(), log_clamp)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<GradAccum>>>()?;
    let mut total = GradAccum::zero(mps, &povm);
    for chunk in &chunks {
        total.merge(chunk)?;
    }

    let grad_gamma = match embedding {
        Embedding::Trainable(params) if !freeze_embedding => {
            let (v, p) = (params.vocab_size(), params.phys_dim());
            let mut grad_q = ComplexTensor::zeros(&[v * p, p]);
            for (token, hole) in total.effect_holes.iter().enumerate() {
                let block = povm.kraus(token).matmul(hole)?;
                for i in 0..p {
                    for j in 0..p {
                        grad_q.set2(token * p + i, j, block.get2(i, j));
                    }
                }
            }
            Some(qr_backward(params.gamma(), &grad_q)?)
        }
        Embedding::Trainable(params) => Some(ComplexTensor::zeros(params.gamma().shape())),
        Embedding::OneHot { .. } => None,
    };

    let nll = total.nll_sum / batch.len() as f64;
    if !nll.is_finite()
        || total.site_grads.iter().any(|g| !g.is_finite())
        || grad_gamma.as_ref().is_some_and(|g| !g.is_finite())
    {
        return Err(Error::NonFinite("gradient computation".into()));
    }
    Ok(GradReport {
        grad_mps: total.site_grads,
        grad_gamma,
        nll,
        clamped: total.clamped,
    })
}

/// Project an ambient direction onto the tangent space of the isometry
/// constraint at W: T = G - W herm(W^H G). Then W^H T + T^H W = 0, so a short
/// step along -T preserves the constraint to first order.
pub fn tangent_project(w: &ComplexTensor, g: &ComplexTensor) -> Result<ComplexTensor> {
    if w.shape() != g.shape() {
        return Err(Error::Shape(format!(
            "direction shape {:?} does not match point shape {:?}",
            g.shape(),
            w.shape()
        )));
    }
    let dev = isometry_deviation(w)?;
    if dev > 1e-8 {
        return Err(Error::NotIsometric {
            deviation: dev,
            tol: 1e-8,
        });
    }
    let b = w.adjoint()?.matmul(g)?;
    let n = b.shape()[0];
    let mut herm = ComplexTensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let sym = (b.get2(i, j) + b.get2(j, i).conj()) * 0.5;
            herm.set2(i, j, sym);
        }
    }
    g.sub(&w.matmul(&herm)?)
}

/// Pull a tangent step back onto the constraint set: the Q factor of
/// W - step * T. Exact isometry restoration; step 0 returns W up to the
/// phase convention (identically, since diag(R) is already positive).
pub fn retract(w: &ComplexTensor, t: &ComplexTensor, step: f64) -> Result<ComplexTensor> {
    let moved = w.sub(&t.scale(Complex64::new(step, 0.0)))?;
    let (q, _r) = crate::linalg::qr_reduced(&moved)?;
    Ok(q)
}

/// First and second Adam moments for one parameter tensor, kept in
/// unconstrained coordinates (they are not transported across retractions).
struct AdamMoments {
    m: Vec<Complex64>,
    v: Vec<f64>,
}

impl AdamMoments {
    fn new(len: usize) -> Self {
        AdamMoments {
            m: vec![Complex64::new(0.0, 0.0); len],
            v: vec![0.0; len],
        }
    }

    /// Update moments with the new gradient and return the unit-learning-rate
    /// direction m_hat / (sqrt(v_hat) + eps).
    fn direction(&mut self, grad: &[Complex64], config: &TrainConfig, step: u64) -> Vec<Complex64> {
        let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_eps);
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = self.m[i] * b1 + g * (1.0 - b1);
                self.v[i] = self.v[i] * b2 + g.norm_sqr() * (1.0 - b2);
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                m_hat / (v_hat.sqrt() + eps)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub nll: f64,
    pub clamped: usize,
}

/// Step-level training driver; [`train`] wraps it with epochs and shuffling.
pub struct Trainer {
    embedding: Embedding,
    mps: IsometricMps,
    config: TrainConfig,
    mps_moments: Vec<AdamMoments>,
    emb_moments: Option<AdamMoments>,
    steps_taken: u64,
}

impl Trainer {
    pub fn new(embedding: Embedding, mps: IsometricMps, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if embedding.phys_dim() != mps.phys_dim() {
            return Err(Error::Config(format!(
                "embedding physical dimension {} does not match chain physical dimension {}",
                embedding.phys_dim(),
                mps.phys_dim()
            )));
        }
        let mps_moments = mps
            .tensors()
            .iter()
            .map(|t| AdamMoments::new(t.len()))
            .collect();
        let emb_moments = match &embedding {
            Embedding::Trainable(params) if !config.freeze_embedding => {
                Some(AdamMoments::new(params.gamma().len()))
            }
            _ => None,
        };
        Ok(Trainer {
            embedding,
            mps,
            config,
            mps_moments,
            emb_moments,
            steps_taken: 0,
        })
    }

    pub fn mps(&self) -> &IsometricMps {
        &self.mps
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn povm(&self) -> Result<Povm> {
        self.embedding.povm()
    }

    pub fn into_parts(self) -> (Embedding, IsometricMps) {
        (self.embedding, self.mps)
    }

    /// One optimizer step on a mini-batch: analytic gradients, Adam update
    /// per parameter group, tangent projection and retraction per site.
    pub fn step(&mut self, batch: &[Vec<usize>]) -> Result<StepReport> {
        let report = gradients(
            &self.embedding,
            &self.mps,
            batch,
            self.config.freeze_embedding,
            self.config.log_clamp,
        )?;
        self.steps_taken += 1;

        for site in 0..self.mps.len() {
            let grad = &report.grad_mps[site];
            let direction =
                self.mps_moments[site].direction(grad.data(), &self.config, self.steps_taken);
            let dir_tensor = ComplexTensor::from_vec(grad.shape(), direction)?;
            // Move to the (phys * right) x left matrix picture of the site.
            let (dl, p, dr) = (
                grad.shape()[0],
                grad.shape()[1],
                grad.shape()[2],
            );
            let dir_w = dir_tensor.permute(&[1, 2, 0])?.reshape(&[p * dr, dl])?;
            let w = self.mps.site_matrix(site);
            let tangent = tangent_project(&w, &dir_w)?;
            let updated = retract(&w, &tangent, self.config.lr_mps)?;
            self.mps.set_site_matrix(site, &updated)?;
        }

        if let (Embedding::Trainable(params), Some(moments)) =
            (&mut self.embedding, &mut self.emb_moments)
        {
            let grad = report
                .grad_gamma
                .as_ref()
                .expect("trainable embedding always reports a parameter gradient");
            let direction = moments.direction(grad.data(), &self.config, self.steps_taken);
            let lr = self.config.lr_emb;
            for (slot, d) in params.gamma_mut().data_mut().iter_mut().zip(direction) {
                *slot -= d * lr;
            }
        }

        Ok(StepReport {
            nll: report.nll,
            clamped: report.clamped,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub test_nll: Option<f64>,
    pub max_isometry_dev: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_train_nll(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_nll)
    }

    pub fn final_test_nll(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.test_nll)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "epoch,train_nll,test_nll,max_isometry_dev,wall_seconds"
        )?;
        for r in &self.records {
            let test = r.test_nll.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_nll, test, r.max_isometry_dev, r.wall_seconds
            )?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub embedding: Embedding,
    pub mps: IsometricMps,
    pub history: TrainHistory,
}

/// Full training run: seeded shuffled mini-batches (the final short batch is
/// kept and weighted by its own mean). History records the running mean of
/// the step losses per epoch as train_nll and, when a held-out set is given,
/// its exact NLL after the epoch.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_set: &[Vec<usize>],
    test_set: Option<&[Vec<usize>]>,
    n: usize,
    vocab_size: usize,
    phys_dim: usize,
    d_max: usize,
    embedding_init: Embedding,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Input("training set must be non-empty".into()));
    }
    if embedding_init.vocab_size() != vocab_size || embedding_init.phys_dim() != phys_dim {
        return Err(Error::Config(format!(
            "embedding is (v={}, p={}) but the run requests (v={}, p={})",
            embedding_init.vocab_size(),
            embedding_init.phys_dim(),
            vocab_size,
            phys_dim
        )));
    }
    let mps = IsometricMps::random(n, phys_dim, d_max, config.seed)?;
    let mut trainer = Trainer::new(embedding_init, mps, config.clone())?;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let started = Instant::now();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let step = trainer.step(&batch)?;
            if !step.nll.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {}",
                    epoch
                )));
            }
            loss_sum += step.nll * batch.len() as f64;
        }
        let test_nll = match test_set {
            Some(set) if !set.is_empty() => {
                let povm = trainer.povm()?;
                Some(batch_nll(trainer.mps(), &povm, set, config.log_clamp)?)
            }
            _ => None,
        };
        history.records.push(EpochRecord {
            epoch,
            train_nll: loss_sum / train_set.len() as f64,
            test_nll,
            max_isometry_dev: trainer.mps().check_isometry(1e-8).max_deviation,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let (embedding, mps) = trainer.into_parts();
    Ok(TrainOutcome {
        embedding,
        mps,
        history,
    })
}

/// Compare every analytic gradient component against a central difference of
/// the batch NLL; returns the max relative error (denominator floored at
/// 1e-8). Exhaustive per real/imaginary component, so only for small models.
pub fn finite_diff_check(
    embedding: &Embedding,
    mps: &IsometricMps,
    batch: &[Vec<usize>],
    eps: f64,
    freeze_embedding: bool,
    log_clamp: f64,
) -> Result<f64> {
    let analytic = gradients(embedding, mps, batch, freeze_embedding, log_clamp)?;
    let mut max_rel = 0.0f64;

    let nll_of = |emb: &Embedding, chain: &IsometricMps| -> Result<f64> {
        batch_nll(chain, &emb.povm()?, batch, log_clamp)
    };

    // A central difference carries roundoff of order ulp(L)/eps; differences
    // below that are unresolvable by the oracle and must not count as error.
    let noise_floor =
        |l_plus: f64, l_minus: f64| 16.0 * f64::EPSILON * (1.0 + l_plus.abs().max(l_minus.abs())) / eps;
    let record = |a: f64, l_plus: f64, l_minus: f64, max_rel: &mut f64| {
        let fd = (l_plus - l_minus) / (2.0 * eps);
        let gap = ((a - fd).abs() - noise_floor(l_plus, l_minus)).max(0.0);
        *max_rel = max_rel.max(gap / fd.abs().max(1e-8));
    };

    for site in 0..mps.len() {
        let base = mps.tensor(site).clone();
        for idx in 0..base.len() {
            for part in 0..2 {
                let delta = if part == 0 {
                    Complex64::new(eps, 0.0)
                } else {
                    Complex64::new(0.0, eps)
                };
                let mut tensors_plus = mps.tensors().to_vec();
                tensors_plus[site].data_mut()[idx] += delta;
                let mut tensors_minus = mps.tensors().to_vec();
                tensors_minus[site].data_mut()[idx] -= delta;
                let plus = IsometricMps::from_tensors(mps.phys_dim(), tensors_plus)?;
                let minus = IsometricMps::from_tensors(mps.phys_dim(), tensors_minus)?;
                let l_plus = nll_of(embedding, &plus)?;
                let l_minus = nll_of(embedding, &minus)?;
                let a = if part == 0 {
                    analytic.grad_mps[site].data()[idx].re
                } else {
                    analytic.grad_mps[site].data()[idx].im
                };
                record(a, l_plus, l_minus, &mut max_rel);
            }
        }
    }

    if let (Embedding::Trainable(params), Some(grad_gamma)) =
        (embedding, analytic.grad_gamma.as_ref())
    {
        if !freeze_embedding {
            for idx in 0..params.gamma().len() {
                for part in 0..2 {
                    let delta = if part == 0 {
                        Complex64::new(eps, 0.0)
                    } else {
                        Complex64::new(0.0, eps)
                    };
                    let mut plus = params.clone();
                    plus.gamma_mut().data_mut()[idx] += delta;
                    let mut minus = params.clone();
                    minus.gamma_mut().data_mut()[idx] -= delta;
                    let l_plus = nll_of(&Embedding::Trainable(plus), mps)?;
                    let l_minus = nll_of(&Embedding::Trainable(minus), mps)?;
                    let a = if part == 0 {
                        grad_gamma.data()[idx].re
                    } else {
                        grad_gamma.data()[idx].im
                    };
                    record(a, l_plus, l_minus, &mut max_rel);
                }
            }
        }
    }

    Ok(max_rel)
}

//! Marginal and conditional distributions, post-measurement collapsed states,
//! and arbitrary-order sequence generation.
//!
//! A partial assignment fixes tokens on a subset of sites; the rest are
//! marginalized. Because the effects sum to the identity and the chain is
//! right-canonical, a marginal sweep only has to run up to the last assigned
//! site: every site beyond it contributes an exact identity.
//!
//! Ordered sampling keeps a cache of left environments for the current
//! assignment. Assigning a site invalidates cached environments to its right,
//! so causal-order generation costs O(n) transfer steps amortized while
//! arbitrary orders fall back to per-site sweeps.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mps::{transfer_left, transfer_right, IsometricMps};
use crate::povm::Povm;
use crate::tensor::{contract, contract_conj, ComplexTensor};

/// Marginals below this are treated as a null conditioning event.
pub const EVENT_FLOOR: f64 = 1e-300;

/// Tokens fixed on a subset of sites; unassigned sites are marginalized.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialAssignment {
    n: usize,
    assigned: BTreeMap<usize, usize>,
}

impl PartialAssignment {
    pub fn empty(n: usize) -> Self {
        PartialAssignment {
            n,
            assigned: BTreeMap::new(),
        }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut assign = PartialAssignment::empty(n);
        for &(site, token) in pairs {
            assign.assign(site, token)?;
        }
        Ok(assign)
    }

    pub fn assign(&mut self, site: usize, token: usize) -> Result<()> {
        if site >= self.n {
            return Err(Error::Input(format!(
                "site {} out of range for length {}",
                site, self.n
            )));
        }
        if self.assigned.insert(site, token).is_some() {
            return Err(Error::Input(format!("site {} assigned twice", site)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, site: usize) -> Option<usize> {
        self.assigned.get(&site).copied()
    }

    pub fn is_assigned(&self, site: usize) -> bool {
        self.assigned.contains_key(&site)
    }

    pub fn assigned_count(&self) -> usize {
        self.assigned.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assigned.iter().map(|(&s, &t)| (s, t))
    }

    pub fn last_assigned(&self) -> Option<usize> {
        self.assigned.keys().next_back().copied()
    }
}

fn check_model(mps: &IsometricMps, povm: &Povm, assign: &PartialAssignment) -> Result<()> {
    if povm.phys_dim() != mps.phys_dim() {
        return Err(Error::Config(format!(
            "measurement physical dimension {} does not match chain physical dimension {}",
            povm.phys_dim(),
            mps.phys_dim()
        )));
    }
    if assign.n() != mps.len() {
        return Err(Error::Input(format!(
            "assignment length {} does not match chain length {}",
            assign.n(),
            mps.len()
        )));
    }
    for (site, token) in assign.iter() {
        if token >= povm.vocab_size() {
            return Err(Error::Input(format!(
                "token {} at site {} exceeds vocabulary size {}",
                token,
                site,
                povm.vocab_size()
            )));
        }
    }
    Ok(())
}

fn unit_env() -> ComplexTensor {
    ComplexTensor::from_vec(&[1, 1], vec![Complex64::new(1.0, 0.0)]).expect("1x1 unit")
}

/// p(x_A): probability that the assigned sites carry their assigned tokens,
/// all other sites traced out.
pub fn joint_marginal(mps: &IsometricMps, povm: &Povm, assign: &PartialAssignment) -> Result<f64> {
    check_model(mps, povm, assign)?;
    let last = match assign.last_assigned() {
        Some(site) => site,
        None => return Ok(1.0),
    };
    let mut env = unit_env();
    for site in 0..=last {
        let op = assign.get(site).map(|token| povm.effect(token));
        env = transfer_left(&env, mps.tensor(site), op)?;
    }
    // The all-unassigned suffix is an exact identity, so the marginal is the
    // trace of the environment at the last assigned bond.
    let value = env.trace()?;
    debug_assert!(value.im.abs() <= 1e-10);
    Ok(value.re)
}

/// Right environment covering sites (site, n): identity unless some site to
/// the right is assigned.
fn right_environment(
    mps: &IsometricMps,
    povm: &Povm,
    assign: &PartialAssignment,
    site: usize,
) -> Result<Option<ComplexTensor>> {
    let last = match assign.last_assigned() {
        Some(l) if l > site => l,
        _ => return Ok(None),
    };
    let mut env = ComplexTensor::identity(mps.bond_dims()[last + 1]);
    for i in (site + 1..=last).rev() {
        let op = assign.get(i).map(|token| povm.effect(token));
        env = transfer_right(&env, mps.tensor(i), op)?;
    }
    Ok(Some(env))
}

/// The site's physical-pair tensor K with everything else contracted: the
/// unnormalized conditional weight of token x is sum_{b',b} M(x)[b',b] K[b',b]
/// and the conditioning marginal is tr(K).
fn site_kernel(
    mps: &IsometricMps,
    left: &ComplexTensor,
    right: Option<&ComplexTensor>,
    site: usize,
) -> Result<ComplexTensor> {
    let a = mps.tensor(site);
    let ket = contract(left, a, &[(1, 0)])?; // (bra_l, phys, ket_r)
    let ket = match right {
        Some(env) => contract(&ket, env, &[(2, 1)])?, // (bra_l, phys, bra_r)
        None => ket,
    };
    contract_conj(a, true, &ket, false, &[(0, 0), (2, 2)]) // (bra phys, ket phys)
}

fn conditional_from_kernel(povm: &Povm, kernel: &ComplexTensor) -> Result<Vec<f64>> {
    let denom = kernel.trace()?.re;
    if denom <= EVENT_FLOOR {
        return Err(Error::NullEvent { prob: denom });
    }
    let dist = (0..povm.vocab_size())
        .map(|x| {
            let numer: Complex64 = povm
                .effect(x)
                .data()
                .iter()
                .zip(kernel.data())
                .map(|(m, k)| m * k)
                .sum();
            (numer.re / denom).max(0.0)
        })
        .collect();
    Ok(dist)
}

/// p(x_site = . | assigned tokens), a length-v probability vector.
pub fn conditional_distribution(
    mps: &IsometricMps,
    povm: &Povm,
    assign: &PartialAssignment,
    site: usize,
) -> Result<Vec<f64>> {
    check_model(mps, povm, assign)?;
    if site >= mps.len() {
        return Err(Error::Input(format!(
            "site {} out of range for length {}",
            site,
            mps.len()
        )));
    }
    if assign.is_assigned(site) {
        return Err(Error::Input(format!("site {} is already assigned", site)));
    }
    let mut left = unit_env();
    for i in 0..site {
        let op = assign.get(i).map(|token| povm.effect(token));
        left = transfer_left(&left, mps.tensor(i), op)?;
    }
    let right = right_environment(mps, povm, assign, site)?;
    let kernel = site_kernel(mps, &left, right.as_ref(), site)?;
    conditional_from_kernel(povm, &kernel)
}

/// Post-measurement state: the chain with Kraus factors absorbed at the
/// assigned sites, carrying its normalization separately so the represented
/// state has unit norm.
#[derive(Clone, Debug)]
pub struct CollapsedState {
    tensors: Vec<ComplexTensor>,
    phys_dim: usize,
    /// Marginal probability of the conditioning assignment; the normalized
    /// state is 1/sqrt(norm) times the stored chain.
    norm: f64,
}

pub fn collapsed_state(
    mps: &IsometricMps,
    povm: &Povm,
    assign: &PartialAssignment,
) -> Result<CollapsedState> {
    let norm = joint_marginal(mps, povm, assign)?;
    if norm <= EVENT_FLOOR {
        return Err(Error::NullEvent { prob: norm });
    }
    let mut tensors = Vec::with_capacity(mps.len());
    for site in 0..mps.len() {
        let tensor = match assign.get(site) {
            Some(token) => {
                // (ket phys', ket_l, ket_r) -> (ket_l, phys', ket_r)
                contract(povm.kraus(token), mps.tensor(site), &[(1, 1)])?.permute(&[1, 0, 2])?
            }
            None => mps.tensor(site).clone(),
        };
        tensors.push(tensor);
    }
    Ok(CollapsedState {
        tensors,
        phys_dim: mps.phys_dim(),
        norm,
    })
}

impl CollapsedState {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Overlap of the normalized state with itself; 1 up to rounding. The
    /// absorbed factors break the canonical form, so this sweeps the full
    /// chain with explicit identity operators.
    pub fn self_overlap(&self) -> Result<f64> {
        let mut env = unit_env();
        for t in &self.tensors {
            env = transfer_left(&env, t, None)?;
        }
        Ok(env.get(&[0, 0]).re / self.norm)
    }

    /// Expectation of the effects in `assign` on the normalized state. For an
    /// assignment disjoint from the conditioning sites this equals the
    /// conditional probability of those tokens.
    pub fn expectation(&self, povm: &Povm, assign: &PartialAssignment) -> Result<f64> {
        if povm.phys_dim() != self.phys_dim {
            return Err(Error::Config(format!(
                "measurement physical dimension {} does not match state physical dimension {}",
                povm.phys_dim(),
                self.phys_dim
            )));
        }
        if assign.n() != self.tensors.len() {
            return Err(Error::Input(format!(
                "assignment length {} does not match state length {}",
                assign.n(),
                self.tensors.len()
            )));
        }
        let mut env = unit_env();
        for (site, t) in self.tensors.iter().enumerate() {
            let op = assign.get(site).map(|token| povm.effect(token));
            env = transfer_left(&env, t, op)?;
        }
        Ok(env.get(&[0, 0]).re / self.norm)
    }
}

/// Inverse-CDF draw with the cumulative clamped to [0, 1]; ties at a boundary
/// resolve to the lower token index.
fn inverse_cdf(dist: &[f64], u: f64) -> usize {
    let mut cum = 0.0f64;
    let mut fallback = 0usize;
    for (x, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            fallback = x;
        }
        cum = (cum + p).clamp(0.0, 1.0);
        if u <= cum {
            return x;
        }
    }
    fallback
}

fn greedy_pick(dist: &[f64]) -> usize {
    let mut best = 0usize;
    for (x, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = x;
        }
    }
    best
}

/// Incremental left-environment cache over a growing assignment.
struct SweepCache<'a> {
    mps: &'a IsometricMps,
    povm: &'a Povm,
    assign: PartialAssignment,
    /// left[i] covers sites < i under the current assignment; left[0] = 1.
    left: Vec<ComplexTensor>,
}

impl<'a> SweepCache<'a> {
    fn new(mps: &'a IsometricMps, povm: &'a Povm, assign: PartialAssignment) -> Self {
        SweepCache {
            mps,
            povm,
            assign,
            left: vec![unit_env()],
        }
    }

    fn ensure_left(&mut self, upto: usize) -> Result<()> {
        while self.left.len() <= upto {
            let i = self.left.len() - 1;
            let op = self.assign.get(i).map(|token| self.povm.effect(token));
            let next = transfer_left(self.left.last().unwrap(), self.mps.tensor(i), op)?;
            self.left.push(next);
        }
        Ok(())
    }

    fn conditional(&mut self, site: usize) -> Result<Vec<f64>> {
        self.ensure_left(site)?;
        let right = right_environment(self.mps, self.povm, &self.assign, site)?;
        let kernel = site_kernel(self.mps, &self.left[site], right.as_ref(), site)?;
        conditional_from_kernel(self.povm, &kernel)
    }

    fn assign(&mut self, site: usize, token: usize) -> Result<()> {
        self.assign.assign(site, token)?;
        // Environments past the newly assigned site are stale.
        self.left.truncate(site + 1);
        Ok(())
    }
}

fn validate_order(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::Input(format!(
            "visit order has {} entries for length {}",
            order.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &site in order {
        if site >= n || seen[site] {
            return Err(Error::Input(format!(
                "visit order is not a permutation: {:?}",
                order
            )));
        }
        seen[site] = true;
    }
    Ok(())
}

/// Draw one complete sequence, visiting sites in the given order and sampling
/// each token from its conditional given everything drawn so far.
pub fn sample<R: Rng + ?Sized>(
    mps: &IsometricMps,
    povm: &Povm,
    order: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = mps.len();
    validate_order(order, n)?;
    check_model(mps, povm, &PartialAssignment::empty(n))?;
    let mut cache = SweepCache::new(mps, povm, PartialAssignment::empty(n));
    let mut out = vec![0usize; n];
    for &site in order {
        let dist = cache.conditional(site)?;
        let token = inverse_cdf(&dist, rng.gen::<f64>());
        out[site] = token;
        cache.assign(site, token)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillMode {
    Stochastic,
    Greedy,
}

/// Complete a template: fixed tokens are kept verbatim, holes are filled in
/// ascending site order by conditional sampling (stochastic) or by the
/// highest-probability token with lowest-index tie break (greedy).
pub fn masked_fill<R: Rng + ?Sized>(
    mps: &IsometricMps,
    povm: &Povm,
    template: &[Option<usize>],
    rng: &mut R,
    mode: FillMode,
) -> Result<Vec<usize>> {
    let n = mps.len();
    if template.len() != n {
        return Err(Error::Input(format!(
            "template has {} entries for length {}",
            template.len(),
            n
        )));
    }
    let mut assign = PartialAssignment::empty(n);
    for (site, slot) in template.iter().enumerate() {
        if let Some(token) = slot {
            assign.assign(site, *token)?;
        }
    }
    check_model(mps, povm, &assign)?;
    let holes: Vec<usize> = (0..n).filter(|&s| template[s].is_none()).collect();
    let mut out: Vec<usize> = template.iter().map(|t| t.unwrap_or(0)).collect();
    let mut cache = SweepCache::new(mps, povm, assign);
    for site in holes {
        let dist = cache.conditional(site)?;
        let token = match mode {
            FillMode::Stochastic => inverse_cdf(&dist, rng.gen::<f64>()),
            FillMode::Greedy => greedy_pick(&dist),
        };
        out[site] = token;
        cache.assign(site, token)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::sequence_probability;
    use crate::povm::{build_povm, one_hot_povm, EmbeddingParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn all_sequences(n: usize, v: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(v.pow(n as u32));
        let mut cur = vec![0usize; n];
        loop {
            out.push(cur.clone());
            let mut axis = n;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                cur[axis] += 1;
                if cur[axis] < v {
                    break;
                }
                cur[axis] = 0;
            }
        }
    }

    fn random_model(n: usize, v: usize, p: usize, d: usize, seed: u64) -> (IsometricMps, Povm) {
        let mps = IsometricMps::random(n, p, d, seed).unwrap();
        let povm = build_povm(&EmbeddingParams::random(v, p, seed + 1000).unwrap()).unwrap();
        (mps, povm)
    }

    fn basis_product_state(targets: &[usize], p: usize) -> IsometricMps {
        let tensors = targets
            .iter()
            .map(|&x| {
                let mut t = ComplexTensor::zeros(&[1, p, 1]);
                t.set(&[0, x, 0], c(1.0, 0.0));
                t
            })
            .collect();
        IsometricMps::from_tensors(p, tensors).unwrap()
    }

    /// Exact joint table by full enumeration of sequence probabilities.
    fn enumeration_table(mps: &IsometricMps, povm: &Povm) -> Vec<(Vec<usize>, f64)> {
        all_sequences(mps.len(), povm.vocab_size())
            .into_iter()
            .map(|seq| {
                let p = sequence_probability(mps, povm, &seq).unwrap();
                (seq, p)
            })
            .collect()
    }

    fn marginal_by_enumeration(
        table: &[(Vec<usize>, f64)],
        assign: &PartialAssignment,
    ) -> f64 {
        table
            .iter()
            .filter(|(seq, _)| assign.iter().all(|(site, token)| seq[site] == token))
            .map(|(_, p)| p)
            .sum()
    }

    #[test]
    fn empty_assignment_marginal_is_exactly_one() {
        let (mps, povm) = random_model(4, 2, 2, 2, 40);
        let p = joint_marginal(&mps, &povm, &PartialAssignment::empty(4)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn fully_assigned_marginal_equals_sequence_probability() {
        let (mps, povm) = random_model(4, 3, 2, 3, 41);
        for seq in all_sequences(4, 3).into_iter().step_by(11) {
            let pairs: Vec<(usize, usize)> = seq.iter().copied().enumerate().collect();
            let assign = PartialAssignment::from_pairs(4, &pairs).unwrap();
            let a = joint_marginal(&mps, &povm, &assign).unwrap();
            let b = sequence_probability(&mps, &povm, &seq).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn partial_marginal_matches_completion_sum() {
        let (mps, povm) = random_model(4, 2, 2, 2, 42);
        let table = enumeration_table(&mps, &povm);
        let assign = PartialAssignment::from_pairs(4, &[(1, 0)]).unwrap();
        let direct = joint_marginal(&mps, &povm, &assign).unwrap();
        let brute = marginal_by_enumeration(&table, &assign);
        assert!((direct - brute).abs() < 1e-10, "{} vs {}", direct, brute);
    }

    #[test]
    fn marginal_consistency_over_token_sum() {
        let (mps, povm) = random_model(5, 3, 2, 3, 43);
        let assign = PartialAssignment::from_pairs(5, &[(0, 2), (3, 1)]).unwrap();
        let base = joint_marginal(&mps, &povm, &assign).unwrap();
        for site in [1usize, 2, 4] {
            let mut total = 0.0;
            for token in 0..3 {
                let mut with = assign.clone();
                with.assign(site, token).unwrap();
                total += joint_marginal(&mps, &povm, &with).unwrap();
            }
            assert!((total - base).abs() < 1e-10);
        }
    }

    #[test]
    fn pair_marginal_is_insertion_order_free() {
        let (mps, povm) = random_model(5, 2, 2, 3, 44);
        let a = PartialAssignment::from_pairs(5, &[(1, 1), (3, 0)]).unwrap();
        let b = PartialAssignment::from_pairs(5, &[(3, 0), (1, 1)]).unwrap();
        let pa = joint_marginal(&mps, &povm, &a).unwrap();
        let pb = joint_marginal(&mps, &povm, &b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn conditional_matches_enumeration() {
        let (mps, povm) = random_model(4, 3, 2, 2, 45);
        let table = enumeration_table(&mps, &povm);
        let assign = PartialAssignment::from_pairs(4, &[(0, 1), (2, 2)]).unwrap();
        for site in [1usize, 3] {
            let dist = conditional_distribution(&mps, &povm, &assign, site).unwrap();
            let denom = marginal_by_enumeration(&table, &assign);
            let mut sum = 0.0;
            for token in 0..3 {
                let mut with = assign.clone();
                with.assign(site, token).unwrap();
                let brute = marginal_by_enumeration(&table, &with) / denom;
                assert!(
                    (dist[token] - brute).abs() < 1e-10,
                    "site {} token {}: {} vs {}",
                    site,
                    token,
                    dist[token],
                    brute
                );
                sum += dist[token];
            }
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_condition_gives_single_site_marginal() {
        let (mps, povm) = random_model(3, 2, 2, 2, 46);
        let table = enumeration_table(&mps, &povm);
        let dist = conditional_distribution(&mps, &povm, &PartialAssignment::empty(3), 1).unwrap();
        for token in 0..2 {
            let assign = PartialAssignment::from_pairs(3, &[(1, token)]).unwrap();
            let brute = marginal_by_enumeration(&table, &assign);
            assert!((dist[token] - brute).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_model_conditional_is_a_delta() {
        let target = vec![1usize, 0, 2];
        let mps = basis_product_state(&target, 3);
        let povm = one_hot_povm(3);
        let dist =
            conditional_distribution(&mps, &povm, &PartialAssignment::empty(3), 2).unwrap();
        assert!((dist[2] - 1.0).abs() < 1e-12);
        assert!(dist[0].abs() < 1e-12 && dist[1].abs() < 1e-12);
    }

    #[test]
    fn conditioning_on_impossible_pattern_is_a_null_event() {
        let target = vec![1usize, 0];
        let mps = basis_product_state(&target, 2);
        let povm = one_hot_povm(2);
        let assign = PartialAssignment::from_pairs(2, &[(0, 0)]).unwrap(); // target has 1 here
        assert!(matches!(
            conditional_distribution(&mps, &povm, &assign, 1),
            Err(Error::NullEvent { .. })
        ));
    }

    #[test]
    fn conditioning_on_assigned_site_is_an_input_error() {
        let (mps, povm) = random_model(3, 2, 2, 2, 47);
        let assign = PartialAssignment::from_pairs(3, &[(1, 0)]).unwrap();
        assert!(matches!(
            conditional_distribution(&mps, &povm, &assign, 1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn collapsed_state_with_empty_assignment_is_the_original_state() {
        let (mps, povm) = random_model(4, 2, 2, 2, 48);
        let state = collapsed_state(&mps, &povm, &PartialAssignment::empty(4)).unwrap();
        assert!((state.normalization() - 1.0).abs() < 1e-12);
        assert!((state.self_overlap().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn collapsed_state_has_unit_norm_for_random_assignments() {
        let (mps, povm) = random_model(5, 3, 2, 3, 49);
        for pairs in [vec![(0usize, 1usize)], vec![(1, 2), (4, 0)], vec![(2, 1), (0, 0), (3, 2)]] {
            let assign = PartialAssignment::from_pairs(5, &pairs).unwrap();
            let state = collapsed_state(&mps, &povm, &assign).unwrap();
            let overlap = state.self_overlap().unwrap();
            assert!((overlap - 1.0).abs() < 1e-10, "overlap {}", overlap);
        }
    }

    #[test]
    fn collapsed_expectation_agrees_with_marginal_ratio() {
        let (mps, povm) = random_model(5, 3, 2, 3, 50);
        let cond = PartialAssignment::from_pairs(5, &[(1, 2), (3, 0)]).unwrap();
        let state = collapsed_state(&mps, &povm, &cond).unwrap();
        let query = PartialAssignment::from_pairs(5, &[(0, 1), (4, 2)]).unwrap();
        let via_state = state.expectation(&povm, &query).unwrap();

        let mut both = cond.clone();
        for (site, token) in query.iter() {
            both.assign(site, token).unwrap();
        }
        let via_ratio = joint_marginal(&mps, &povm, &both).unwrap()
            / joint_marginal(&mps, &povm, &cond).unwrap();
        assert!(
            (via_state - via_ratio).abs() < 1e-10,
            "{} vs {}",
            via_state,
            via_ratio
        );
    }

    #[test]
    fn deterministic_model_samples_its_sequence_in_any_order() {
        let target = vec![1usize, 0, 2, 1];
        let mps = basis_product_state(&target, 3);
        let povm = one_hot_povm(3);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for order in [vec![0usize, 1, 2, 3], vec![3, 2, 1, 0], vec![2, 0, 3, 1]] {
            let drawn = sample(&mps, &povm, &order, &mut rng).unwrap();
            assert_eq!(drawn, target);
        }
    }

    #[test]
    fn chain_rule_product_equals_sequence_probability_along_any_order() {
        let (mps, povm) = random_model(4, 3, 2, 2, 51);
        let seq = vec![2usize, 0, 1, 2];
        let direct = sequence_probability(&mps, &povm, &seq).unwrap();
        for order in [vec![0usize, 1, 2, 3], vec![3, 1, 0, 2], vec![2, 3, 0, 1]] {
            let mut assign = PartialAssignment::empty(4);
            let mut product = 1.0;
            for &site in &order {
                let dist = conditional_distribution(&mps, &povm, &assign, site).unwrap();
                product *= dist[seq[site]];
                assign.assign(site, seq[site]).unwrap();
            }
            assert!(
                (product - direct).abs() < 1e-10,
                "order {:?}: {} vs {}",
                order,
                product,
                direct
            );
        }
    }

    fn total_variation(counts: &[usize], exact: &[f64], draws: usize) -> f64 {
        counts
            .iter()
            .zip(exact)
            .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn sampling_matches_exact_distribution_forward_and_reverse() {
        let (mps, povm) = random_model(3, 2, 2, 2, 52);
        let table = enumeration_table(&mps, &povm);
        let exact: Vec<f64> = table.iter().map(|(_, p)| *p).collect();
        let draws = 40_000;
        for order in [vec![0usize, 1, 2], vec![2, 1, 0]] {
            let mut rng = ChaCha12Rng::seed_from_u64(53);
            let mut counts = vec![0usize; 8];
            for _ in 0..draws {
                let s = sample(&mps, &povm, &order, &mut rng).unwrap();
                let idx = s.iter().fold(0usize, |acc, &t| acc * 2 + t);
                counts[idx] += 1;
            }
            let tv = total_variation(&counts, &exact, draws);
            assert!(tv <= 0.02, "order {:?} tv {}", order, tv);
        }
    }

    #[test]
    fn masked_fill_keeps_complete_templates_verbatim() {
        let (mps, povm) = random_model(3, 2, 2, 2, 54);
        let template = vec![Some(1usize), Some(0), Some(1)];
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let out = masked_fill(&mps, &povm, &template, &mut rng, FillMode::Stochastic).unwrap();
        assert_eq!(out, vec![1, 0, 1]);
    }

    #[test]
    fn masked_fill_on_deterministic_model_recovers_the_sequence() {
        let target = vec![1usize, 0, 2, 1];
        let mps = basis_product_state(&target, 3);
        let povm = one_hot_povm(3);
        let template = vec![None, Some(0usize), None, None];
        let mut rng = ChaCha12Rng::seed_from_u64(56);
        for mode in [FillMode::Stochastic, FillMode::Greedy] {
            let out = masked_fill(&mps, &povm, &template, &mut rng, mode).unwrap();
            assert_eq!(out, target);
        }
    }

    #[test]
    fn masked_fill_with_impossible_fixed_token_is_a_null_event() {
        let target = vec![1usize, 0];
        let mps = basis_product_state(&target, 2);
        let povm = one_hot_povm(2);
        let template = vec![Some(0usize), None];
        let mut rng = ChaCha12Rng::seed_from_u64(57);
        assert!(matches!(
            masked_fill(&mps, &povm, &template, &mut rng, FillMode::Stochastic),
            Err(Error::NullEvent { .. })
        ));
    }

    #[test]
    fn masked_fill_empirical_conditional_matches_enumeration() {
        let (mps, povm) = random_model(4, 2, 2, 2, 58);
        let table = enumeration_table(&mps, &povm);
        let template = vec![None, Some(1usize), None, None];
        let cond = PartialAssignment::from_pairs(4, &[(1, 1)]).unwrap();
        let denom = marginal_by_enumeration(&table, &cond);
        let exact: Vec<f64> = table
            .iter()
            .filter(|(seq, _)| seq[1] == 1)
            .map(|(_, p)| p / denom)
            .collect();
        let draws = 30_000;
        let mut rng = ChaCha12Rng::seed_from_u64(59);
        let mut counts = vec![0usize; 8];
        for _ in 0..draws {
            let s = masked_fill(&mps, &povm, &template, &mut rng, FillMode::Stochastic).unwrap();
            let idx = s
                .iter()
                .enumerate()
                .filter(|&(site, _)| site != 1)
                .fold(0usize, |acc, (_, &t)| acc * 2 + t);
            counts[idx] += 1;
        }
        let tv = total_variation(&counts, &exact, draws);
        assert!(tv <= 0.02, "tv {}", tv);
    }

    #[test]
    fn greedy_tie_breaks_to_lower_index() {
        // Uniform two-token model: both conditionals are exactly 0.5.
        let mut t = ComplexTensor::zeros(&[1, 2, 1]);
        let amp = 1.0 / 2f64.sqrt();
        t.set(&[0, 0, 0], c(amp, 0.0));
        t.set(&[0, 1, 0], c(amp, 0.0));
        let mps = IsometricMps::from_tensors(2, vec![t.clone(), t]).unwrap();
        let povm = one_hot_povm(2);
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        let out = masked_fill(
            &mps,
            &povm,
            &[None, None],
            &mut rng,
            FillMode::Greedy,
        )
        .unwrap();
        assert_eq!(out, vec![0, 0]);
    }
}

//! Model-vs-data statistics: single-site marginals, pairwise marginals, the
//! two-site log-ratio correlation, and the scatter export that puts model
//! predictions against dataset frequencies for the y = x diagnostic.
//!
//! The correlation is log p(x_i, x_j) - log p(x_i) - log p(x_j) in natural
//! log (the quantity the source material calls a Pearson correlation; the
//! formula is pointwise mutual information). Entries involving probabilities
//! below a floor are flagged undefined rather than computed.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{joint_marginal, PartialAssignment};
use crate::mps::IsometricMps;
use crate::povm::Povm;
use crate::training::batch_nll;

/// Default probability floor below which log-ratio entries are undefined.
pub const CORRELATION_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableSource {
    Model,
    Empirical,
}

/// n x v table of per-site token probabilities.
#[derive(Clone, Debug)]
pub struct SiteMarginalTable {
    pub n: usize,
    pub vocab_size: usize,
    pub source: TableSource,
    values: Vec<f64>,
}

impl SiteMarginalTable {
    pub fn get(&self, site: usize, token: usize) -> f64 {
        self.values[site * self.vocab_size + token]
    }

    pub fn row(&self, site: usize) -> &[f64] {
        &self.values[site * self.vocab_size..(site + 1) * self.vocab_size]
    }
}

/// Exact model marginal p(x_i = token) for every site and token.
pub fn model_site_marginals(mps: &IsometricMps, povm: &Povm) -> Result<SiteMarginalTable> {
    let (n, v) = (mps.len(), povm.vocab_size());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|site| {
            (0..v)
                .map(|token| {
                    let assign = PartialAssignment::from_pairs(n, &[(site, token)])?;
                    joint_marginal(mps, povm, &assign)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(SiteMarginalTable {
        n,
        vocab_size: v,
        source: TableSource::Model,
        values: rows.into_iter().flatten().collect(),
    })
}

/// Per-site token frequencies, optionally Laplace-smoothed:
/// (count + pseudocount) / (N + v * pseudocount).
pub fn empirical_site_marginals(
    dataset: &[Vec<usize>],
    vocab_size: usize,
    pseudocount: f64,
) -> Result<SiteMarginalTable> {
    if dataset.is_empty() {
        return Err(Error::Input("dataset must be non-empty".into()));
    }
    let n = dataset[0].len();
    let mut counts = vec![0usize; n * vocab_size];
    for seq in dataset {
        if seq.len() != n {
            return Err(Error::Input(format!(
                "sequence of length {} in a dataset of length {}",
                seq.len(),
                n
            )));
        }
        for (site, &token) in seq.iter().enumerate() {
            if token >= vocab_size {
                return Err(Error::Input(format!(
                    "token {} exceeds vocabulary size {}",
                    token, vocab_size
                )));
            }
            counts[site * vocab_size + token] += 1;
        }
    }
    let denom = dataset.len() as f64 + vocab_size as f64 * pseudocount;
    let values = counts
        .iter()
        .map(|&c| (c as f64 + pseudocount) / denom)
        .collect();
    Ok(SiteMarginalTable {
        n,
        vocab_size,
        source: TableSource::Empirical,
        values,
    })
}

/// Exact model pair marginal: entry (a, b) = p(x_i = a, x_j = b), row-major
/// v x v.
pub fn model_pair_marginals(
    mps: &IsometricMps,
    povm: &Povm,
    i: usize,
    j: usize,
) -> Result<Vec<f64>> {
    if i == j {
        return Err(Error::Input(format!("pair sites must differ, got ({}, {})", i, j)));
    }
    let v = povm.vocab_size();
    let mut out = Vec::with_capacity(v * v);
    for a in 0..v {
        for b in 0..v {
            let assign = PartialAssignment::from_pairs(mps.len(), &[(i, a), (j, b)])?;
            out.push(joint_marginal(mps, povm, &assign)?);
        }
    }
    Ok(out)
}

/// Empirical pair frequencies with the same smoothing convention as the site
/// table (denominator N + v^2 * pseudocount).
pub fn empirical_pair_marginals(
    dataset: &[Vec<usize>],
    vocab_size: usize,
    i: usize,
    j: usize,
    pseudocount: f64,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::Input("dataset must be non-empty".into()));
    }
    if i == j {
        return Err(Error::Input(format!("pair sites must differ, got ({}, {})", i, j)));
    }
    let v = vocab_size;
    let mut counts = vec![0usize; v * v];
    for seq in dataset {
        counts[seq[i] * v + seq[j]] += 1;
    }
    let denom = dataset.len() as f64 + (v * v) as f64 * pseudocount;
    Ok(counts
        .iter()
        .map(|&c| (c as f64 + pseudocount) / denom)
        .collect())
}

/// Entrywise log p(a,b) / (p(a) p(b)), natural log; `None` where any of the
/// three probabilities is below the floor.
pub fn correlation(
    pair: &[f64],
    pi: &[f64],
    pj: &[f64],
    floor: f64,
) -> Result<Vec<Option<f64>>> {
    let v = pi.len();
    if pj.len() != v || pair.len() != v * v {
        return Err(Error::Shape(format!(
            "pair table has {} entries for marginals of lengths {} and {}",
            pair.len(),
            v,
            pj.len()
        )));
    }
    Ok((0..v * v)
        .map(|idx| {
            let (a, b) = (idx / v, idx % v);
            let (pab, pa, pb) = (pair[idx], pi[a], pj[b]);
            if pab < floor || pa < floor || pb < floor {
                None
            } else {
                Some((pab / (pa * pb)).ln())
            }
        })
        .collect())
}

/// NLL on a held-out split.
pub fn test_nll(
    mps: &IsometricMps,
    povm: &Povm,
    test_set: &[Vec<usize>],
    log_clamp: f64,
) -> Result<f64> {
    batch_nll(mps, povm, test_set, log_clamp)
}

#[derive(Clone, Debug)]
pub struct SiteScatterRow {
    pub site: usize,
    pub token: usize,
    pub data_value: f64,
    pub model_value: f64,
}

#[derive(Clone, Debug)]
pub struct PairScatterRow {
    pub i: usize,
    pub j: usize,
    pub xi: usize,
    pub xj: usize,
    pub data_value: f64,
    pub model_value: f64,
}

/// Model-vs-data feature points ready for the y = x diagnostic. Pair rows
/// carry correlations and exist only where both sides are defined.
#[derive(Clone, Debug)]
pub struct ScatterData {
    pub site_rows: Vec<SiteScatterRow>,
    pub pair_rows: Vec<PairScatterRow>,
}

impl ScatterData {
    pub fn site_rms(&self) -> f64 {
        rms(self.site_rows.iter().map(|r| r.model_value - r.data_value))
    }

    pub fn pair_rms(&self) -> f64 {
        rms(self.pair_rows.iter().map(|r| r.model_value - r.data_value))
    }

    /// CSV schema: feature_type, i, j, xi, xj, data_value, model_value. Site
    /// rows leave j and xj empty. A leading comment records the log base.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# pair correlations use natural log (nats)")?;
        writeln!(out, "feature_type,i,j,xi,xj,data_value,model_value")?;
        for r in &self.site_rows {
            writeln!(
                out,
                "site,{},,{},,{},{}",
                r.site, r.token, r.data_value, r.model_value
            )?;
        }
        for r in &self.pair_rows {
            writeln!(
                out,
                "pair,{},{},{},{},{},{}",
                r.i, r.j, r.xi, r.xj, r.data_value, r.model_value
            )?;
        }
        Ok(())
    }
}

fn rms(diffs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for d in diffs {
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// All site features plus correlations for every site pair i < j (optionally
/// an evenly strided subsample of pairs).
pub fn build_scatter(
    mps: &IsometricMps,
    povm: &Povm,
    dataset: &[Vec<usize>],
    pseudocount: f64,
    floor: f64,
    max_pairs: Option<usize>,
) -> Result<ScatterData> {
    let n = mps.len();
    let v = povm.vocab_size();
    if dataset.iter().any(|s| s.len() != n) {
        return Err(Error::Input(format!(
            "dataset sequences must all have length {}",
            n
        )));
    }
    let model_sites = model_site_marginals(mps, povm)?;
    let data_sites = empirical_site_marginals(dataset, v, pseudocount)?;

    let site_rows = (0..n)
        .flat_map(|site| {
            let model_sites = &model_sites;
            let data_sites = &data_sites;
            (0..v).map(move |token| SiteScatterRow {
                site,
                token,
                data_value: data_sites.get(site, token),
                model_value: model_sites.get(site, token),
            })
        })
        .collect();

    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    if let Some(limit) = max_pairs {
        if limit < pairs.len() && limit > 0 {
            let total = pairs.len();
            pairs = (0..limit).map(|k| pairs[k * total / limit]).collect();
        }
    }

    let pair_rows: Vec<Vec<PairScatterRow>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let model_pair = model_pair_marginals(mps, povm, i, j)?;
            let data_pair = empirical_pair_marginals(dataset, v, i, j, pseudocount)?;
            let model_c = correlation(&model_pair, model_sites.row(i), model_sites.row(j), floor)?;
            let data_c = correlation(&data_pair, data_sites.row(i), data_sites.row(j), floor)?;
            let mut rows = Vec::new();
            for a in 0..v {
                for b in 0..v {
                    if let (Some(m), Some(d)) = (model_c[a * v + b], data_c[a * v + b]) {
                        rows.push(PairScatterRow {
                            i,
                            j,
                            xi: a,
                            xj: b,
                            data_value: d,
                            model_value: m,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<Vec<PairScatterRow>>>>()?;

    Ok(ScatterData {
        site_rows,
        pair_rows: pair_rows.into_iter().flatten().collect(),
    })
}

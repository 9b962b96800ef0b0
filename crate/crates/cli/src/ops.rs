//! The four batch entry points: train, sample, eval, check.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bornseq_core::{
    batch_nll, build_dataset, build_scatter, finite_diff_check, load_checkpoint, masked_fill,
    parse_fasta, sample, save_checkpoint, sequence_probability, split, train, Dataset, Embedding,
    EmbeddingParams, FillMode, LengthPolicy, ModelBundle, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::config::{EmbeddingMode, RunConfig};

pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub epochs: Option<usize>,
}

type RejectionRows = Vec<(String, String)>;

fn load_corpus(config: &RunConfig) -> Result<(Dataset, Vocab, RejectionRows)> {
    let text = fs::read_to_string(&config.data)
        .with_context(|| format!("cannot read data file {}", config.data.display()))?;
    let records = parse_fasta(&text)?;
    let vocab = match config.length_policy {
        // Under the pad policy the PAD token is part of the vocabulary even
        // when no sequence happens to need it, so the model shape does not
        // depend on the corpus contents.
        LengthPolicy::Pad => Vocab::nucleotide().with_pad('-')?,
        _ => Vocab::nucleotide(),
    };
    let source = config.data.display().to_string();
    let (dataset, rejections) = build_dataset(
        &records,
        &vocab,
        config.target_n,
        config.length_policy,
        &source,
    )?;
    if dataset.sequences.is_empty() {
        bail!(
            "no usable sequences in {} ({} rejected)",
            source,
            rejections.len()
        );
    }
    let rejection_rows = rejections
        .into_iter()
        .map(|r| (r.id, r.reason))
        .collect();
    Ok((dataset, vocab, rejection_rows))
}

fn write_rejections(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut text = String::from("id,reason\n");
    for (id, reason) in rows {
        // Commas in free-text reasons would break the two-column schema.
        text.push_str(&format!("{},{}\n", id, reason.replace(',', ";")));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(config_path: &Path, overrides: TrainOverrides) -> Result<i32> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = overrides.out {
        config.out_dir = out;
    }
    if let Some(data) = overrides.data {
        config.data = data;
    }
    if let Some(epochs) = overrides.epochs {
        config.epochs = epochs;
    }

    let (dataset, vocab, rejections) = load_corpus(&config)?;
    let vocab_size = vocab.size();
    if config.embedding == EmbeddingMode::OneHot {
        config.p = vocab_size;
        config.freeze_embedding = true;
    }
    config.validate()?;

    fs::create_dir_all(&config.out_dir)?;
    write_rejections(&config.out_dir.join("rejections.csv"), &rejections)?;

    let (train_set, test_set) = split(&dataset, config.test_fraction, config.seed)?;
    let train_config = config.train_config();
    let embedding_init = match config.embedding {
        EmbeddingMode::Trainable => Embedding::Trainable(EmbeddingParams::random(
            vocab_size,
            config.p,
            config.seed.wrapping_add(1),
        )?),
        EmbeddingMode::OneHot => Embedding::OneHot { vocab_size },
    };

    let outcome = train(
        &train_set.sequences,
        Some(&test_set.sequences),
        config.target_n,
        vocab_size,
        config.p,
        config.d_max,
        embedding_init,
        &train_config,
    )?;

    let bundle = ModelBundle {
        embedding: outcome.embedding,
        mps: outcome.mps,
        vocab,
        config: train_config,
        seed: config.seed,
    };
    save_checkpoint(&bundle, &config.out_dir.join("checkpoint.json"))?;

    let mut history_csv = Vec::new();
    outcome.history.write_csv(&mut history_csv)?;
    fs::write(config.out_dir.join("history.csv"), history_csv)?;

    fs::write(config.out_dir.join("manifest.toml"), config.to_manifest()?)?;

    if let Some(record) = outcome.history.records.last() {
        println!(
            "trained {} epochs: train NLL {:.6}{}, isometry deviation {:.3e}",
            record.epoch + 1,
            record.train_nll,
            record
                .test_nll
                .map(|v| format!(", test NLL {:.6}", v))
                .unwrap_or_default(),
            record.max_isometry_dev
        );
    }
    Ok(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleOrder {
    Forward,
    Reverse,
    Random,
    Explicit,
}

impl std::str::FromStr for SampleOrder {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(SampleOrder::Forward),
            "reverse" => Ok(SampleOrder::Reverse),
            "random" => Ok(SampleOrder::Random),
            "explicit" => Ok(SampleOrder::Explicit),
            other => Err(anyhow!(
                "unknown order `{}` (expected forward|reverse|random|explicit)",
                other
            )),
        }
    }
}

pub struct SampleArgs {
    pub checkpoint: PathBuf,
    pub count: usize,
    pub order: SampleOrder,
    pub order_sites: Option<String>,
    pub mask: Option<String>,
    pub greedy: bool,
    pub seed: u64,
    pub out: PathBuf,
}

fn parse_mask(mask: &str, vocab: &Vocab, n: usize) -> Result<Vec<Option<usize>>> {
    let chars: Vec<char> = mask.chars().collect();
    if chars.len() != n {
        bail!("mask has {} symbols but the model length is {}", chars.len(), n);
    }
    chars
        .iter()
        .map(|&ch| {
            if ch == '?' {
                Ok(None)
            } else {
                vocab
                    .index_of(ch)
                    .map(Some)
                    .ok_or_else(|| anyhow!("mask symbol `{}` is not in the vocabulary", ch))
            }
        })
        .collect()
}

fn parse_explicit_order(text: &str, n: usize) -> Result<Vec<usize>> {
    let sites: Vec<usize> = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid site index `{}`", part))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut seen = vec![false; n];
    if sites.len() != n || sites.iter().any(|&s| s >= n || std::mem::replace(&mut seen[s], true)) {
        bail!("explicit order must be a permutation of 0..{}", n);
    }
    Ok(sites)
}

pub fn cmd_sample(args: SampleArgs) -> Result<i32> {
    let bundle = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", args.checkpoint.display()))?;
    let povm = bundle.embedding.povm()?;
    let n = bundle.mps.len();
    let mode = if args.greedy {
        FillMode::Greedy
    } else {
        FillMode::Stochastic
    };
    let template = args
        .mask
        .as_deref()
        .map(|m| parse_mask(m, &bundle.vocab, n))
        .transpose()?;
    let explicit = args
        .order_sites
        .as_deref()
        .map(|text| parse_explicit_order(text, n))
        .transpose()?;
    if args.order == SampleOrder::Explicit && explicit.is_none() {
        bail!("--order explicit requires --order-sites");
    }

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let pad = bundle.vocab.pad_index();
    let mut fasta = String::new();
    for index in 0..args.count {
        let tokens = match &template {
            Some(template) => masked_fill(&bundle.mps, &povm, template, &mut rng, mode)?,
            None => {
                let order: Vec<usize> = match args.order {
                    SampleOrder::Forward => (0..n).collect(),
                    SampleOrder::Reverse => (0..n).rev().collect(),
                    SampleOrder::Random => {
                        use rand::seq::SliceRandom;
                        let mut order: Vec<usize> = (0..n).collect();
                        order.shuffle(&mut rng);
                        order
                    }
                    SampleOrder::Explicit => explicit.clone().expect("checked above"),
                };
                sample(&bundle.mps, &povm, &order, &mut rng)?
            }
        };
        // Trailing padding is stripped; interior padding is kept and flagged.
        let mut trimmed: &[usize] = &tokens;
        if let Some(pad) = pad {
            while trimmed.last() == Some(&pad) {
                trimmed = &trimmed[..trimmed.len() - 1];
            }
        }
        let interior = pad.is_some_and(|p| trimmed.contains(&p));
        let letters: String = trimmed.iter().map(|&t| bundle.vocab.letter(t)).collect();
        fasta.push_str(&format!(
            ">sample_{}{}\n{}\n",
            index,
            if interior { " interior-pad" } else { "" },
            letters
        ));
    }
    fs::write(&args.out, fasta)?;
    println!("wrote {} sequences to {}", args.count, args.out.display());
    Ok(0)
}

#[derive(Serialize)]
struct EvalMetrics {
    test_nll: f64,
    site_rows: usize,
    pair_rows: usize,
    site_rms_deviation: f64,
    pair_rms_deviation: f64,
    rejected_sequences: usize,
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, out_dir: &Path) -> Result<i32> {
    let bundle = load_checkpoint(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let text = fs::read_to_string(data)
        .with_context(|| format!("cannot read data file {}", data.display()))?;
    let records = parse_fasta(&text)?;
    let policy = if bundle.vocab.pad_index().is_some() {
        LengthPolicy::Pad
    } else {
        LengthPolicy::Reject
    };
    let (dataset, rejections) = build_dataset(
        &records,
        &bundle.vocab,
        bundle.mps.len(),
        policy,
        &data.display().to_string(),
    )?;
    if dataset.sequences.is_empty() {
        bail!(
            "no usable sequences in {} at model length {}",
            data.display(),
            bundle.mps.len()
        );
    }

    let povm = bundle.embedding.povm()?;
    let nll = batch_nll(
        &bundle.mps,
        &povm,
        &dataset.sequences,
        bundle.config.log_clamp,
    )?;
    let scatter = build_scatter(
        &bundle.mps,
        &povm,
        &dataset.sequences,
        0.0,
        bornseq_core::evaluation::CORRELATION_FLOOR,
        None,
    )?;

    fs::create_dir_all(out_dir)?;
    let metrics = EvalMetrics {
        test_nll: nll,
        site_rows: scatter.site_rows.len(),
        pair_rows: scatter.pair_rows.len(),
        site_rms_deviation: scatter.site_rms(),
        pair_rms_deviation: scatter.pair_rms(),
        rejected_sequences: rejections.len(),
    };
    fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    let mut csv = Vec::new();
    scatter.write_csv(&mut csv)?;
    fs::write(out_dir.join("scatter.csv"), csv)?;

    println!(
        "test NLL {:.6}, site RMS {:.4}, pair RMS {:.4} ({} site rows, {} pair rows)",
        metrics.test_nll,
        metrics.site_rms_deviation,
        metrics.pair_rms_deviation,
        metrics.site_rows,
        metrics.pair_rows
    );
    Ok(0)
}

#[derive(Serialize)]
struct CheckEntry {
    name: String,
    passed: Option<bool>,
    skipped: Option<String>,
    measured: Option<f64>,
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct CheckReport {
    checks: Vec<CheckEntry>,
    all_pass: bool,
}

/// Brute-force normalization is gated on the enumerable state space size.
const BRUTE_FORCE_LIMIT: f64 = 1e6;
/// Finite differences perturb every real component twice; keep it small.
const FD_COMPONENT_LIMIT: usize = 600;

pub fn cmd_check(checkpoint: &Path) -> Result<i32> {
    let bundle = load_checkpoint(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let povm = bundle.embedding.povm()?;
    let n = bundle.mps.len();
    let v = povm.vocab_size();
    let mut checks = Vec::new();

    let validation = bornseq_core::validate_povm(&povm, 1e-10);
    checks.push(CheckEntry {
        name: "povm_validity".into(),
        passed: Some(validation.pass),
        skipped: None,
        measured: Some(
            validation
                .max_hermiticity_dev
                .max(validation.completeness_dev)
                .max((-validation.min_eigenvalue).max(0.0)),
        ),
        threshold: Some(1e-10),
    });

    let isometry = bundle.mps.check_isometry(1e-8);
    checks.push(CheckEntry {
        name: "isometry".into(),
        passed: Some(isometry.pass),
        skipped: None,
        measured: Some(isometry.max_deviation),
        threshold: Some(1e-8),
    });

    let state_space = (v as f64).powi(n as i32);
    if state_space <= BRUTE_FORCE_LIMIT {
        let mut total = 0.0;
        let mut seq = vec![0usize; n];
        loop {
            total += sequence_probability(&bundle.mps, &povm, &seq)?;
            let mut axis = n;
            let done = loop {
                if axis == 0 {
                    break true;
                }
                axis -= 1;
                seq[axis] += 1;
                if seq[axis] < v {
                    break false;
                }
                seq[axis] = 0;
            };
            if done {
                break;
            }
        }
        checks.push(CheckEntry {
            name: "normalization_brute_force".into(),
            passed: Some((total - 1.0).abs() <= 1e-8),
            skipped: None,
            measured: Some((total - 1.0).abs()),
            threshold: Some(1e-8),
        });
    } else {
        checks.push(CheckEntry {
            name: "normalization_brute_force".into(),
            passed: None,
            skipped: Some("state space too large".into()),
            measured: None,
            threshold: None,
        });
    }

    let components: usize = bundle
        .mps
        .tensors()
        .iter()
        .map(|t| 2 * t.len())
        .sum::<usize>()
        + match &bundle.embedding {
            Embedding::Trainable(params) => 2 * params.gamma().len(),
            Embedding::OneHot { .. } => 0,
        };
    if components <= FD_COMPONENT_LIMIT {
        let mut rng = ChaCha12Rng::seed_from_u64(bundle.seed);
        let batch: Vec<Vec<usize>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen_range(0..v)).collect())
            .collect();
        let err = finite_diff_check(
            &bundle.embedding,
            &bundle.mps,
            &batch,
            1e-6,
            bundle.config.freeze_embedding,
            bundle.config.log_clamp,
        )?;
        checks.push(CheckEntry {
            name: "finite_diff_gradients".into(),
            passed: Some(err <= 1e-5),
            skipped: None,
            measured: Some(err),
            threshold: Some(1e-5),
        });
    } else {
        checks.push(CheckEntry {
            name: "finite_diff_gradients".into(),
            passed: None,
            skipped: Some("model too large for exhaustive perturbation".into()),
            measured: None,
            threshold: None,
        });
    }

    let all_pass = checks.iter().all(|c| c.passed.unwrap_or(true));
    let report = CheckReport { checks, all_pass };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if all_pass { 0 } else { 1 })
}

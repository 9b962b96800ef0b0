//! Sequence ingestion: FASTA parsing, tokenization with a fixed-length
//! policy, and seeded dataset splitting.
//!
//! The nucleotide alphabet maps A, C, G to 0, 1, 2 and both T and U to 3
//! (public rRNA files use either letter form). Sequences shorter than the
//! target length can be padded with a dedicated PAD token, which is a real
//! vocabulary entry with its own measurement effect; longer sequences are
//! truncated or rejected per policy. Rejections carry a reason and are
//! reported, never silently dropped.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    /// Canonical display letter per token index.
    tokens: Vec<char>,
    /// Char -> index, uppercase, including aliases (T and U share an index).
    map: BTreeMap<char, usize>,
    pad: Option<usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<char>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Config("vocabulary must be non-empty".into()));
        }
        let mut map = BTreeMap::new();
        for (idx, &ch) in tokens.iter().enumerate() {
            let upper = ch.to_ascii_uppercase();
            if map.insert(upper, idx).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary letter {}", ch)));
            }
        }
        Ok(Vocab {
            tokens,
            map,
            pad: None,
        })
    }

    /// The four-letter nucleotide alphabet; U is canonical for index 3 and T
    /// is accepted as an alias.
    pub fn nucleotide() -> Self {
        let mut vocab = Vocab::new(vec!['A', 'C', 'G', 'U']).expect("static alphabet");
        vocab.map.insert('T', 3);
        vocab
    }

    /// Extend with a PAD token (index = previous size). No-op if already padded.
    pub fn with_pad(mut self, letter: char) -> Result<Self> {
        if self.pad.is_some() {
            return Ok(self);
        }
        let idx = self.tokens.len();
        let upper = letter.to_ascii_uppercase();
        if self.map.contains_key(&upper) {
            return Err(Error::Config(format!(
                "pad letter {} collides with an existing token",
                letter
            )));
        }
        self.tokens.push(letter);
        self.map.insert(upper, idx);
        self.pad = Some(idx);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pad_index(&self) -> Option<usize> {
        self.pad
    }

    pub fn index_of(&self, ch: char) -> Option<usize> {
        self.map.get(&ch.to_ascii_uppercase()).copied()
    }

    pub fn letter(&self, index: usize) -> char {
        self.tokens[index]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastaRecord {
    pub id: String,
    pub sequence: String,
}

/// Parse FASTA text: records start at '>' headers, sequence lines are
/// concatenated with whitespace stripped. Non-blank content before the first
/// header is a format error.
pub fn parse_fasta(text: &str) -> Result<Vec<FastaRecord>> {
    let mut records: Vec<FastaRecord> = Vec::new();
    let mut current: Option<FastaRecord> = None;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('>') {
            if let Some(record) = current.take() {
                records.push(record);
            }
            current = Some(FastaRecord {
                id: header.trim().to_string(),
                sequence: String::new(),
            });
        } else {
            match current.as_mut() {
                Some(record) => {
                    record
                        .sequence
                        .extend(trimmed.chars().filter(|c| !c.is_whitespace()));
                }
                None => {
                    return Err(Error::FastaFormat {
                        line: lineno + 1,
                        message: "sequence content before the first '>' header".into(),
                    });
                }
            }
        }
    }
    if let Some(record) = current.take() {
        records.push(record);
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthPolicy {
    Pad,
    Truncate,
    Reject,
}

/// A tokenized sequence or a reported rejection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenizeOutcome {
    Tokens(Vec<usize>),
    Rejected { reason: String },
}

pub fn tokenize(
    raw: &str,
    vocab: &Vocab,
    target_n: usize,
    policy: LengthPolicy,
) -> Result<TokenizeOutcome> {
    if target_n == 0 {
        return Err(Error::Input("target length must be >= 1".into()));
    }
    let mut tokens = Vec::with_capacity(target_n);
    for ch in raw.chars() {
        match vocab.index_of(ch) {
            Some(idx) => tokens.push(idx),
            None => {
                return Ok(TokenizeOutcome::Rejected {
                    reason: format!("unknown symbol {}", ch),
                })
            }
        }
    }
    if tokens.len() > target_n {
        match policy {
            LengthPolicy::Truncate => tokens.truncate(target_n),
            _ => {
                return Ok(TokenizeOutcome::Rejected {
                    reason: format!("length {} exceeds target {}", tokens.len(), target_n),
                })
            }
        }
    }
    if tokens.len() < target_n {
        match (policy, vocab.pad_index()) {
            (LengthPolicy::Pad, Some(pad)) => tokens.resize(target_n, pad),
            (LengthPolicy::Pad, None) => {
                return Err(Error::Config(
                    "pad policy requires a vocabulary with a PAD token".into(),
                ))
            }
            _ => {
                return Ok(TokenizeOutcome::Rejected {
                    reason: format!("length {} below target {}", tokens.len(), target_n),
                })
            }
        }
    }
    Ok(TokenizeOutcome::Tokens(tokens))
}

/// Canonical letters for a token sequence.
pub fn detokenize(tokens: &[usize], vocab: &Vocab) -> String {
    tokens.iter().map(|&t| vocab.letter(t)).collect()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub policy: String,
    pub padded: usize,
    pub truncated: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub sequences: Vec<Vec<usize>>,
    pub n: usize,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

/// Tokenize a batch of records under one policy; rejected records are
/// returned alongside the dataset.
pub fn build_dataset(
    records: &[FastaRecord],
    vocab: &Vocab,
    target_n: usize,
    policy: LengthPolicy,
    source: &str,
) -> Result<(Dataset, Vec<Rejection>)> {
    let mut sequences = Vec::new();
    let mut rejections = Vec::new();
    let mut padded = 0usize;
    let mut truncated = 0usize;
    for record in records {
        match tokenize(&record.sequence, vocab, target_n, policy)? {
            TokenizeOutcome::Tokens(tokens) => {
                let raw_len = record.sequence.chars().count();
                if raw_len < target_n {
                    padded += 1;
                }
                if raw_len > target_n {
                    truncated += 1;
                }
                sequences.push(tokens);
            }
            TokenizeOutcome::Rejected { reason } => rejections.push(Rejection {
                id: record.id.clone(),
                reason,
            }),
        }
    }
    let dataset = Dataset {
        sequences,
        n: target_n,
        provenance: Provenance {
            source: source.to_string(),
            policy: format!("{:?}", policy).to_lowercase(),
            padded,
            truncated,
            rejected: rejections.len(),
        },
    };
    Ok((dataset, rejections))
}

/// Seeded uniform shuffle, then partition. The test split takes
/// round(N * fraction) items; both splits must end up non-empty.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Input(format!(
            "test fraction must be in (0, 1), got {}",
            test_fraction
        )));
    }
    let total = dataset.sequences.len();
    let test_count = ((total as f64) * test_fraction).round() as usize;
    if test_count == 0 || test_count == total {
        return Err(Error::Input(format!(
            "split of {} items at fraction {} leaves an empty side",
            total, test_fraction
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let take = |indices: &[usize]| Dataset {
        sequences: indices.iter().map(|&i| dataset.sequences[i].clone()).collect(),
        n: dataset.n,
        provenance: dataset.provenance.clone(),
    };
    let test = take(&order[..test_count]);
    let train = take(&order[test_count..]);
    Ok((train, test))
}

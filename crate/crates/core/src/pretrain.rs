//! Skip-gram with negative sampling over the train reviews, used to seed the
//! aspect embedding matrix. Multi-word aspects are merged into single tokens
//! before training so every aspect receives its own vector.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AspectVocabulary, InteractionTable, Split};
use crate::error::{AarmError, Result};
use crate::manifest::KeyValues;
use crate::matrix::{axpy, dot, Matrix};

/// Token used for an aspect string: lowercased words joined by `_`.
pub fn aspect_token(aspect: &str) -> String {
    aspect
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Leftmost-longest phrase merger built from the aspect vocabulary.
#[derive(Debug, Clone)]
pub struct PhraseMerger {
    // first word -> candidate phrases (as word lists), longest first
    phrases: HashMap<String, Vec<Vec<String>>>,
}

impl PhraseMerger {
    pub fn new<'a, I: IntoIterator<Item = &'a str>>(aspects: I) -> Self {
        let mut phrases: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for a in aspects {
            let words: Vec<String> = a.split_whitespace().map(str::to_lowercase).collect();
            if words.len() < 2 {
                continue;
            }
            let list = phrases.entry(words[0].clone()).or_default();
            if !list.contains(&words) {
                list.push(words);
            }
        }
        for list in phrases.values_mut() {
            list.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        PhraseMerger { phrases }
    }

    pub fn from_vocab(vocab: &AspectVocabulary) -> Self {
        Self::new(vocab.entries().iter().skip(1).map(String::as_str))
    }

    pub fn merge(&self, tokens: &[String]) -> Vec<String> {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut out = Vec::with_capacity(lower.len());
        let mut i = 0;
        while i < lower.len() {
            let matched = self.phrases.get(&lower[i]).and_then(|cands| {
                cands
                    .iter()
                    .find(|p| i + p.len() <= lower.len() && lower[i..i + p.len()] == p[..])
            });
            match matched {
                Some(p) => {
                    out.push(p.join("_"));
                    i += p.len();
                }
                None => {
                    out.push(lower[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

/// Train-review token corpus with aspect phrases merged.
pub fn tokenize_reviews(table: &InteractionTable, vocab: &AspectVocabulary) -> Vec<Vec<String>> {
    let merger = PhraseMerger::from_vocab(vocab);
    table
        .iter_split(Split::Train)
        .filter_map(|r| table.records()[r].review_tokens.as_ref())
        .filter(|t| !t.is_empty())
        .map(|t| merger.merge(t))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    pub start_lr: f64,
    pub end_lr: f64,
    pub min_count: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 128,
            window: 5,
            negatives: 5,
            epochs: 5,
            seed: 0,
            start_lr: 0.025,
            end_lr: 0.0001,
            min_count: 5,
        }
    }
}

impl SgnsConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("dim", self.dim)
            .set("window", self.window)
            .set("negatives", self.negatives)
            .set("epochs", self.epochs)
            .set("seed", self.seed)
            .set("start_lr", self.start_lr)
            .set("end_lr", self.end_lr)
            .set("min_count", self.min_count);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = SgnsConfig::default();
        Ok(SgnsConfig {
            dim: kv.parse_or("dim", d.dim)?,
            window: kv.parse_or("window", d.window)?,
            negatives: kv.parse_or("negatives", d.negatives)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            seed: kv.parse_or("seed", d.seed)?,
            start_lr: kv.parse_or("start_lr", d.start_lr)?,
            end_lr: kv.parse_or("end_lr", d.end_lr)?,
            min_count: kv.parse_or("min_count", d.min_count)?,
        })
    }
}

/// (center, context) position pairs for a sentence of length `len`.
pub fn context_pairs(len: usize, window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for t in 0..len {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len.saturating_sub(1));
        for c in lo..=hi {
            if c != t {
                pairs.push((t, c));
            }
        }
    }
    pairs
}

/// Word vectors keyed by token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    vectors: Matrix,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, vectors: Matrix) -> Result<Self> {
        if tokens.len() != vectors.rows() {
            return Err(AarmError::InvalidArgument(format!(
                "{} tokens for {} vectors",
                tokens.len(),
                vectors.rows()
            )));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(EmbeddingTable {
            tokens,
            vectors,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vectors.row(i))
    }

    /// Aspect embedding matrix with row 0 (PAD) zero and row k the vector of aspect k.
    pub fn aspect_matrix(&self, vocab: &AspectVocabulary, dim: usize) -> Result<Matrix> {
        if self.dim() != dim {
            return Err(AarmError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        let mut out = Matrix::zeros(vocab.size(), dim);
        let mut missing = Vec::new();
        for k in 1..vocab.size() {
            match self.vector(&aspect_token(vocab.aspect(k))) {
                Some(v) => out.row_mut(k).copy_from_slice(v),
                None => missing.push(vocab.aspect(k).to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(AarmError::MissingAspects(missing));
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim());
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            for v in self.vectors.row(i) {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| AarmError::Parse {
            context: "embeddings".into(),
            line,
            message,
        };
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let mut head = header.split_ascii_whitespace().map(str::parse::<usize>);
        let (count, dim) = match (head.next(), head.next()) {
            (Some(Ok(c)), Some(Ok(d))) => (c, d),
            _ => return Err(bad(1, format!("expected \"<count> <dim>\", got {header:?}"))),
        };
        let mut tokens = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_ascii_whitespace();
            let token = parts.next().unwrap_or_default().to_string();
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(i + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(AarmError::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            tokens.push(token);
            data.extend(values);
        }
        if tokens.len() != count {
            return Err(bad(1, format!("header declares {count} vectors, found {}", tokens.len())));
        }
        Self::new(tokens, Matrix::from_vec(count, dim, data))
    }
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    fs::write(path, table.to_text()).map_err(|e| AarmError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| AarmError::io(path, e))?;
    EmbeddingTable::from_text(&text)
}

struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trains skip-gram input vectors. `keep` tokens (the aspects) bypass the
/// frequency floor and always receive a vector.
pub fn train_sgns(
    corpus: &[Vec<String>],
    keep: &[String],
    config: &SgnsConfig,
) -> Result<EmbeddingTable> {
    if corpus.iter().all(Vec::is_empty) {
        return Err(AarmError::EmptyCorpus);
    }
    if config.dim == 0 {
        return Err(AarmError::InvalidArgument("embedding dim must be positive".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in corpus {
        for t in s {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let keep_set: HashSet<&str> = keep.iter().map(String::as_str).collect();
    let mut vocab: Vec<(&str, usize)> = counts
        .iter()
        .filter(|(t, &c)| c >= config.min_count || keep_set.contains(*t))
        .map(|(t, &c)| (*t, c))
        .collect();
    for k in &keep_set {
        if !counts.contains_key(k) {
            vocab.push((k, 0));
        }
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let bound = 0.5 / dim as f64;
    let mut input = Matrix::uniform(vocab.len(), dim, bound, &mut rng);
    let mut output = Matrix::zeros(vocab.len(), dim);
    let noise = NoiseTable::new(&vocab.iter().map(|(_, c)| *c).collect::<Vec<_>>());

    let words_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (words_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        for s in &sentences {
            for (t, c) in context_pairs(s.len(), config.window) {
                let progress = processed as f64 / total;
                let lr = (config.start_lr - (config.start_lr - config.end_lr) * progress)
                    .max(config.end_lr);
                let center = s[t];
                let context = s[c];
                grad.iter_mut().for_each(|g| *g = 0.0);
                for k in 0..=config.negatives {
                    let (target, label) = if k == 0 {
                        (context, 1.0)
                    } else {
                        let n = noise.sample(&mut rng);
                        if n == context {
                            continue;
                        }
                        (n, 0.0)
                    };
                    let f = dot(input.row(center), output.row(target));
                    let g = (label - sigmoid(f)) * lr;
                    axpy(g, output.row(target), &mut grad);
                    let center_row = input.row(center).to_vec();
                    axpy(g, &center_row, output.row_mut(target));
                }
                axpy(1.0, &grad, input.row_mut(center));
            }
            processed += s.len();
        }
    }
    if !input.is_finite() {
        return Err(AarmError::NonFinite {
            what: "embedding",
            batch_size: 0,
            example: 0,
        });
    }
    EmbeddingTable::new(vocab.iter().map(|(t, _)| t.to_string()).collect(), input)
}

/// Tokenizes the train reviews and trains vectors covering every aspect.
pub fn pretrain_aspects(
    table: &InteractionTable,
    vocab: &AspectVocabulary,
    config: &SgnsConfig,
) -> Result<EmbeddingTable> {
    let corpus = tokenize_reviews(table, vocab);
    let keep: Vec<String> = vocab.entries().iter().skip(1).map(|a| aspect_token(a)).collect();
    train_sgns(&corpus, &keep, config)
}

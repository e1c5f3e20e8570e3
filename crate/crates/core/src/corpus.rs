//! Text normalization, vocabulary construction and n-gram window extraction.
//!
//! Input text is pre-tokenized: one document per line, tokens separated by
//! spaces. Windows never span two documents.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Spelling of the reserved unknown-word token.
pub const UNK: &str = "<unk>";

/// Lowercases and collapses every run of ASCII digits into a single `#`.
pub fn normalize_token(raw: &str) -> String {
    if raw == UNK {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut in_digits = false;
    for ch in raw.chars() {
        if ch.is_ascii_digit() {
            if !in_digits {
                out.push('#');
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.extend(ch.to_lowercase());
        }
    }
    out
}

/// Splits one document line into normalized tokens.
pub fn tokenize_line(line: &str) -> Vec<String> {
    line.split_whitespace().map(normalize_token).collect()
}

/// Reads a whole corpus: one normalized document per line.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut docs = Vec::new();
    for line in reader.lines() {
        docs.push(tokenize_line(&line?));
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index_of: HashMap<String, usize>,
    counts: Vec<u64>,
    unk_id: usize,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens (ties broken by ascending
    /// token order) and appends the unknown token last. The unknown token's
    /// count is the number of occurrences mapped onto it.
    pub fn build(documents: &[Vec<String>], max_size: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::Config("max_size must be at least 1".into()));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut unk_count = 0u64;
        for tok in documents.iter().flatten() {
            if tok == UNK {
                unk_count += 1;
            } else {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for &(_, c) in ranked.iter().skip(max_size) {
            unk_count += c;
        }
        ranked.truncate(max_size);

        let mut tokens: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
        let mut counts: Vec<u64> = ranked.iter().map(|&(_, c)| c).collect();
        tokens.push(UNK.to_string());
        counts.push(unk_count);
        Self::from_parts(tokens, counts)
    }

    /// Assembles a vocabulary from id-ordered tokens and counts. Exactly one
    /// token must be the unknown token.
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if tokens.len() != counts.len() {
            return Err(Error::DimensionMismatch("tokens vs counts".into()));
        }
        let mut index_of = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if index_of.insert(t.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate token {t:?}")));
            }
        }
        let unk_id = *index_of
            .get(UNK)
            .ok_or_else(|| Error::Config("vocabulary lacks the unknown token".into()))?;
        Ok(Vocabulary { tokens, index_of, counts, unk_id })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index_of.get(token).copied()
    }

    /// Id of `token`, falling back to the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(self.unk_id)
    }

    pub fn encode(&self, doc: &[String]) -> Vec<usize> {
        doc.iter().map(|t| self.id(t)).collect()
    }

    /// TSV rows `id \t token \t count`, sorted by id, no header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{id}\t{t}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        let mut offset = 0u64;
        let mut line = String::new();
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            let bad = |reason: String| Error::Malformed { offset, reason };
            let row = line.trim_end_matches(['\n', '\r']);
            if !row.is_empty() {
                let fields: Vec<&str> = row.split('\t').collect();
                if fields.len() != 3 {
                    return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
                }
                let id: usize = fields[0].parse().map_err(|_| bad(format!("bad id {:?}", fields[0])))?;
                if id != tokens.len() {
                    return Err(bad(format!("ids must be dense and sorted: expected {}, got {id}", tokens.len())));
                }
                let count: u64 =
                    fields[2].parse().map_err(|_| bad(format!("bad count {:?}", fields[2])))?;
                tokens.push(fields[1].to_string());
                counts.push(count);
            }
            offset += read as u64;
        }
        Self::from_parts(tokens, counts).map_err(|e| match e {
            Error::Config(reason) => Error::Malformed { offset, reason },
            other => other,
        })
    }
}

/// Fixed-length word windows with entries in `[0, vocab_size)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowCorpus {
    n: usize,
    vocab_size: usize,
    data: Vec<u32>,
}

impl WindowCorpus {
    pub fn new(n: usize, vocab_size: usize) -> Self {
        assert!(n >= 1, "window length must be positive");
        WindowCorpus { n, vocab_size, data: Vec::new() }
    }

    /// Builds from flat storage, validating every index.
    pub fn from_flat(n: usize, vocab_size: usize, data: Vec<u32>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        if !data.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch(format!(
                "{} entries is not a multiple of n={n}",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&w| w as usize >= vocab_size) {
            return Err(Error::IndexOutOfRange { index: bad as usize, size: vocab_size });
        }
        Ok(WindowCorpus { n, vocab_size, data })
    }

    pub fn from_windows(n: usize, vocab_size: usize, windows: &[Vec<usize>]) -> Result<Self> {
        let mut data = Vec::with_capacity(windows.len() * n);
        for w in windows {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!("window of length {} (n={n})", w.len())));
            }
            data.extend(w.iter().map(|&x| x as u32));
        }
        Self::from_flat(n, vocab_size, data)
    }

    pub fn push(&mut self, window: &[usize]) -> Result<()> {
        if window.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "window of length {} (n={})",
                window.len(),
                self.n
            )));
        }
        if let Some(&bad) = window.iter().find(|&&w| w >= self.vocab_size) {
            return Err(Error::IndexOutOfRange { index: bad, size: self.vocab_size });
        }
        self.data.extend(window.iter().map(|&x| x as u32));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn window(&self, idx: usize) -> Vec<usize> {
        self.data[idx * self.n..(idx + 1) * self.n].iter().map(|&w| w as usize).collect()
    }

    pub fn windows(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.data.chunks_exact(self.n).map(|w| w.iter().map(|&x| x as usize).collect())
    }

    pub fn to_vecs(&self) -> Vec<Vec<usize>> {
        self.windows().collect()
    }

    pub fn flat(&self) -> &[u32] {
        &self.data
    }
}

/// All length-`n` windows of each document, never crossing a document boundary.
pub fn extract_windows(documents: &[Vec<String>], vocab: &Vocabulary, n: usize) -> Result<WindowCorpus> {
    if n == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let mut corpus = WindowCorpus::new(n, vocab.len());
    for doc in documents {
        let ids = vocab.encode(doc);
        for w in ids.windows(n) {
            corpus.push(w)?;
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution {
    probs: Vec<f64>,
}

impl UnigramDistribution {
    /// Word marginal over every window position of the corpus.
    pub fn from_corpus(corpus: &WindowCorpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("unigram distribution of an empty corpus".into()));
        }
        let mut counts = vec![0u64; corpus.vocab_size()];
        for &w in corpus.flat() {
            counts[w as usize] += 1;
        }
        let total = corpus.flat().len() as f64;
        Ok(UnigramDistribution { probs: counts.iter().map(|&c| c as f64 / total).collect() })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, 1e-9)?;
        Ok(UnigramDistribution { probs })
    }

    /// Mixes with the uniform distribution: `(1 - weight) p + weight / K`.
    pub fn smoothed(&self, weight: f64) -> Self {
        let k = self.probs.len() as f64;
        UnigramDistribution {
            probs: self.probs.iter().map(|p| (1.0 - weight) * p + weight / k).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub(crate) fn check_distribution(probs: &[f64], tol: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("no outcomes".into()));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

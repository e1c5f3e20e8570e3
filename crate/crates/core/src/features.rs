//! Downstream uses of a trained model: word vectors, nearest neighbors,
//! hidden-activation n-gram features, and free-energy document scoring with
//! a pair of class-conditional models.

use std::cmp::Ordering;
use std::io::Write;

use crate::corpus::Vocabulary;
use crate::exec::Execution;
use crate::wrrbm::WrrbmParams;
use crate::{Error, Result};

fn check_vocab(model: &WrrbmParams, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != model.layout.k {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} words, model has K={}",
            vocab.len(),
            model.layout.k
        )));
    }
    Ok(())
}

/// One line per vocabulary word: the token, then `scale * D[:, w]`.
pub fn export_embeddings<W: Write>(model: &WrrbmParams, vocab: &Vocabulary, scale: f64, mut out: W) -> Result<()> {
    check_vocab(model, vocab)?;
    for (w, tok) in vocab.tokens().iter().enumerate() {
        write!(out, "{tok}")?;
        for x in model.d.vector(w) {
            write!(out, " {}", x * scale)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
            }
        }
    }
}

/// The `m` words closest to `query` in the representation space, excluding
/// the query itself. Ties go to the lower word id.
pub fn nearest_neighbors(
    model: &WrrbmParams,
    vocab: &Vocabulary,
    query: &str,
    m: usize,
    metric: Metric,
) -> Result<Vec<(usize, f64)>> {
    check_vocab(model, vocab)?;
    let q = vocab.get(query).ok_or_else(|| Error::UnknownWord(query.to_string()))?;
    let qv = model.d.vector(q);
    let mut scored: Vec<(usize, f64)> = (0..model.layout.k)
        .filter(|&w| w != q)
        .map(|w| (w, metric.distance(&qv, &model.d.vector(w))))
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.truncate(m);
    Ok(scored)
}

/// Per-position hidden activation probabilities of the window centered on
/// that position; positions whose window would run off the sentence get `None`.
pub fn hidden_features(model: &WrrbmParams, sentence: &[usize]) -> Result<Vec<Option<Vec<f64>>>> {
    let n = model.layout.n;
    if sentence.len() < n {
        return Err(Error::DimensionMismatch(format!("sentence of {} words is shorter than n={n}", sentence.len())));
    }
    let before = (n - 1) / 2;
    let mut out = vec![None; sentence.len()];
    for start in 0..=sentence.len() - n {
        out[start + before] = Some(model.hidden_conditional(&sentence[start..start + n])?);
    }
    Ok(out)
}

/// All length-`n` windows of an encoded document.
pub fn document_windows(doc: &[usize], n: usize) -> Vec<Vec<usize>> {
    doc.windows(n).map(<[usize]>::to_vec).collect()
}

pub fn avg_free_energy(model: &WrrbmParams, windows: &[Vec<usize>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("document has no windows".into()));
    }
    let mut total = 0.0;
    for w in windows {
        total += model.free_energy(w)?;
    }
    Ok(total / windows.len() as f64)
}

fn check_pair(pos: &WrrbmParams, neg: &WrrbmParams) -> Result<()> {
    if pos.layout.n != neg.layout.n || pos.layout.k != neg.layout.k {
        return Err(Error::DimensionMismatch("class models differ in (n, K)".into()));
    }
    Ok(())
}

/// `avg F_neg(d) - avg F_pos(d)`; larger means more positive. `None` when
/// the document has no windows.
pub fn score_document(pos: &WrrbmParams, neg: &WrrbmParams, windows: &[Vec<usize>]) -> Result<Option<f64>> {
    check_pair(pos, neg)?;
    if windows.is_empty() {
        return Ok(None);
    }
    Ok(Some(avg_free_energy(neg, windows)? - avg_free_energy(pos, windows)?))
}

/// Cutoff maximizing training accuracy of `score > threshold => positive`.
/// Candidates are one unit below the smallest score and the midpoints between
/// consecutive distinct sorted scores and the largest score; ties go to the
/// lower threshold.
pub fn fit_threshold_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Empty("threshold fitting needs labelled scores".into()));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_pos = pairs.iter().filter(|p| p.1).count();
    // threshold below everything: every document predicted positive
    let mut best_t = pairs[0].0 - 1.0;
    let mut correct = total_pos;
    let mut best_correct = correct;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            correct = if pairs[i].1 { correct - 1 } else { correct + 1 };
            i += 1;
        }
        let t = if i < pairs.len() { 0.5 * (s + pairs[i].0) } else { s };
        if correct > best_correct {
            best_correct = correct;
            best_t = t;
        }
    }
    Ok(best_t)
}

/// A labelled document given as its windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub windows: Vec<Vec<usize>>,
    pub label: Option<bool>,
}

pub fn fit_threshold(pos: &WrrbmParams, neg: &WrrbmParams, docs: &[Document], exec: Execution) -> Result<f64> {
    let labelled: Vec<&Document> = docs.iter().filter(|d| d.label.is_some()).collect();
    if labelled.is_empty() {
        return Err(Error::Empty("no labelled training documents".into()));
    }
    let scores = exec.map(&labelled, |_, d| score_document(pos, neg, &d.windows));
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (d, sc) in labelled.iter().zip(scores) {
        if let Some(x) = sc? {
            s.push(x);
            l.push(d.label.unwrap());
        }
    }
    fit_threshold_from_scores(&s, &l)
}

/// Positive iff the score exceeds `threshold`; documents without windows are negative.
pub fn classify(pos: &WrrbmParams, neg: &WrrbmParams, threshold: f64, windows: &[Vec<usize>]) -> Result<bool> {
    Ok(score_document(pos, neg, windows)?.is_some_and(|s| s > threshold))
}

pub fn accuracy(predicted: &[bool], truth: &[bool]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocFeatures {
    pub id: String,
    pub fe_pos_scaled: f64,
    pub fe_neg_scaled: f64,
    pub score: f64,
    pub label: Option<bool>,
}

fn min_max_scale(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

/// Both models' average free energies, each min-max scaled to `[0, 1]`
/// across `docs`. Every document needs at least one window.
pub fn doc_features(pos: &WrrbmParams, neg: &WrrbmParams, docs: &[Document], exec: Execution) -> Result<Vec<DocFeatures>> {
    check_pair(pos, neg)?;
    if docs.is_empty() {
        return Err(Error::Empty("no documents".into()));
    }
    let raw = exec.map(docs, |_, d| -> Result<(f64, f64)> {
        if d.windows.is_empty() {
            return Err(Error::Empty(format!("document {} has no windows", d.id)));
        }
        Ok((avg_free_energy(pos, &d.windows)?, avg_free_energy(neg, &d.windows)?))
    });
    let raw: Vec<(f64, f64)> = raw.into_iter().collect::<Result<_>>()?;
    let fp: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let fn_: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let sp = min_max_scale(&fp);
    let sn = min_max_scale(&fn_);
    Ok(docs
        .iter()
        .enumerate()
        .map(|(i, d)| DocFeatures {
            id: d.id.clone(),
            fe_pos_scaled: sp[i],
            fe_neg_scaled: sn[i],
            score: fn_[i] - fp[i],
            label: d.label,
        })
        .collect())
}

pub const DOC_FEATURES_HEADER: &str = "doc_id,fe_pos_scaled,fe_neg_scaled,score,label_if_known";

pub fn write_doc_features<W: Write>(mut out: W, rows: &[DocFeatures]) -> Result<()> {
    writeln!(out, "{DOC_FEATURES_HEADER}")?;
    for r in rows {
        let label = match r.label {
            Some(true) => "pos",
            Some(false) => "neg",
            None => "",
        };
        writeln!(out, "{},{},{},{},{}", r.id, r.fe_pos_scaled, r.fe_neg_scaled, r.score, label)?;
    }
    Ok(())
}

pub fn export_doc_features<W: Write>(
    pos: &WrrbmParams,
    neg: &WrrbmParams,
    docs: &[Document],
    out: W,
    exec: Execution,
) -> Result<()> {
    write_doc_features(out, &doc_features(pos, neg, docs, exec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UNK;
    use crate::wrrbm::tests::random_wrrbm;
    use crate::wrrbm::WrrbmLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(k: usize) -> Vocabulary {
        let mut toks: Vec<String> = (0..k - 1).map(|i| format!("w{i}")).collect();
        toks.push(UNK.into());
        Vocabulary::from_parts(toks, vec![1; k]).unwrap()
    }

    #[test]
    fn embeddings_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let l = WrrbmLayout::new(2, 4, 3, 2).unwrap();
        let p = random_wrrbm(&mut rng, l, 1.0);
        let v = vocab(4);
        let mut out = Vec::new();
        export_embeddings(&p, &v, 0.0, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        for line in text.lines() {
            assert!(line.split(' ').skip(1).all(|x| x.parse::<f64>().unwrap() == 0.0));
        }
        let mut out = Vec::new();
        export_embeddings(&p, &v, 1.0, &mut out).unwrap();
        let line = String::from_utf8(out).unwrap().lines().nth(2).unwrap().to_string();
        let vals: Vec<f64> = line.split(' ').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(vals, p.d.vector(2));
        assert!(line.starts_with("w2 "));
    }

    #[test]
    fn neighbors_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let l = WrrbmLayout::new(1, 100, 4, 2).unwrap();
        let mut p = random_wrrbm(&mut rng, l, 1.0);
        let v = vocab(100);
        for d in 0..4 {
            let x = p.d.get(d, 5);
            p.d.set(d, 40, x);
        }
        let nn = nearest_neighbors(&p, &v, "w5", 5, Metric::Euclidean).unwrap();
        assert_eq!(nn[0], (40, 0.0));
        let mut brute: Vec<(usize, f64)> = (0..100)
            .filter(|&w| w != 5)
            .map(|w| {
                let d: f64 = (0..4).map(|i| (p.d.get(i, 5) - p.d.get(i, w)).powi(2)).sum();
                (w, d.sqrt())
            })
            .collect();
        brute.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<usize> = nn.iter().map(|x| x.0).collect();
        assert_eq!(got, brute[..5].iter().map(|x| x.0).collect::<Vec<_>>());

        // translating every vector leaves the ranking alone
        let mut shifted = p.clone();
        for w in 0..100 {
            shifted.d.add_to(w, 1.0, &[3.0, -1.0, 0.5, 2.0]);
        }
        let again = nearest_neighbors(&shifted, &v, "w5", 5, Metric::Euclidean).unwrap();
        assert_eq!(again.iter().map(|x| x.0).collect::<Vec<_>>(), got);

        assert!(matches!(nearest_neighbors(&p, &v, "nope", 3, Metric::Euclidean), Err(Error::UnknownWord(_))));
        assert_eq!(nearest_neighbors(&p, &v, "w5", 3, Metric::Cosine).unwrap().len(), 3);
    }

    #[test]
    fn hidden_feature_positions() {
        let l = WrrbmLayout::new(3, 5, 2, 4).unwrap();
        let z = WrrbmParams::zeros(l);
        let f = hidden_features(&z, &[0, 1, 2]).unwrap();
        assert_eq!(f, vec![None, Some(vec![0.5; 4]), None]);
        let f = hidden_features(&z, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(f.iter().filter(|x| x.is_some()).count(), 3);
        assert!(f[0].is_none() && f[4].is_none());
        assert!(hidden_features(&z, &[0, 1]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = random_wrrbm(&mut rng, l, 1.0);
        let f = hidden_features(&p, &[4, 0, 3, 1]).unwrap();
        let dense = p.expand();
        let expected = dense.hidden_conditional(&crate::rbm::VisibleState::Softmax(vec![0, 3, 1])).unwrap();
        let got = f[2].as_ref().unwrap();
        assert!(got.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn average_free_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let l = WrrbmLayout::new(2, 4, 2, 3).unwrap();
        let p = random_wrrbm(&mut rng, l, 1.0);
        let w = vec![vec![1, 2]];
        assert_eq!(avg_free_energy(&p, &w).unwrap(), p.free_energy(&w[0]).unwrap());
        let ws = vec![vec![1, 2], vec![3, 0]];
        let doubled: Vec<_> = ws.iter().chain(&ws).cloned().collect();
        assert!((avg_free_energy(&p, &ws).unwrap() - avg_free_energy(&p, &doubled).unwrap()).abs() < 1e-12);
        assert!(avg_free_energy(&p, &[]).is_err());
        // hidden enumeration
        let mut brute = 0.0;
        for win in &ws {
            let z: f64 = (0..8)
                .map(|b| (-p.energy(win, &crate::rbm::HiddenState::from_bits(b, 3)).unwrap()).exp())
                .sum();
            brute += -z.ln();
        }
        assert!((avg_free_energy(&p, &ws).unwrap() - brute / 2.0).abs() < 1e-10);
    }

    #[test]
    fn threshold_fitting() {
        // identical models: all scores 0, majority class wins
        let t = fit_threshold_from_scores(&[0.0; 5], &[true, true, true, false, false]).unwrap();
        assert!(0.0 > t);
        let t = fit_threshold_from_scores(&[0.0; 5], &[true, false, false, false, true]).unwrap();
        assert!(!(0.0 > t));
        // even split: lower threshold wins the tie
        let t = fit_threshold_from_scores(&[0.0; 2], &[true, false]).unwrap();
        assert_eq!(t, -1.0);

        let scores = [-3.0, -2.0, -1.5, 1.0, 2.0, 4.0];
        let labels = [false, false, false, true, true, true];
        let t = fit_threshold_from_scores(&scores, &labels).unwrap();
        assert_eq!(t, -0.25);
        let pred: Vec<bool> = scores.iter().map(|&s| s > t).collect();
        assert_eq!(accuracy(&pred, &labels), 1.0);
        assert!(fit_threshold_from_scores(&[], &[]).is_err());
    }

    #[test]
    fn identical_models_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let l = WrrbmLayout::new(2, 4, 2, 3).unwrap();
        let p = random_wrrbm(&mut rng, l, 1.0);
        let docs: Vec<Document> = (0..5)
            .map(|i| Document { id: i.to_string(), windows: vec![vec![i % 4, 1]], label: Some(i < 3) })
            .collect();
        let t = fit_threshold(&p, &p, &docs, Execution::Sequential).unwrap();
        let pred: Vec<bool> = docs.iter().map(|d| classify(&p, &p, t, &d.windows).unwrap()).collect();
        assert_eq!(pred, vec![true; 5]);
        assert!(!classify(&p, &p, -100.0, &[]).unwrap());
    }

    #[test]
    fn hidden_bias_shift_preserves_score_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let l = WrrbmLayout::new(2, 6, 2, 3).unwrap();
        let pos = random_wrrbm(&mut rng, l, 1.0);
        let neg = random_wrrbm(&mut rng, l, 1.0);
        let docs: Vec<Vec<Vec<usize>>> = vec![vec![vec![0, 1], vec![1, 2]], vec![vec![5, 4]], vec![vec![3, 3], vec![2, 0]]];
        let mut spos = pos.clone();
        let mut sneg = neg.clone();
        spos.c.iter_mut().for_each(|c| *c += 2.5);
        sneg.c.iter_mut().for_each(|c| *c += 2.5);
        let a: Vec<f64> = docs.iter().map(|d| score_document(&pos, &neg, d).unwrap().unwrap()).collect();
        let b: Vec<f64> = docs.iter().map(|d| score_document(&spos, &sneg, d).unwrap().unwrap()).collect();
        let order = |s: &[f64]| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
            idx
        };
        assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn doc_feature_scaling() {
        assert_eq!(min_max_scale(&[0.0, 10.0]), vec![0.0, 1.0]);
        assert_eq!(min_max_scale(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
        let raw = [5.0, -1.0, 2.0, 7.0];
        let s = min_max_scale(&raw);
        for i in 0..4 {
            for j in 0..4 {
                if raw[i] < raw[j] {
                    assert!(s[i] < s[j]);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let l = WrrbmLayout::new(2, 4, 2, 3).unwrap();
        let pos = random_wrrbm(&mut rng, l, 1.0);
        let neg = random_wrrbm(&mut rng, l, 1.0);
        let docs = vec![
            Document { id: "a".into(), windows: vec![vec![0, 1]], label: Some(true) },
            Document { id: "b".into(), windows: vec![vec![2, 3], vec![3, 3]], label: None },
            Document { id: "c".into(), windows: vec![vec![1, 1]], label: Some(false) },
        ];
        let rows = doc_features(&pos, &neg, &docs, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.fe_pos_scaled) && (0.0..=1.0).contains(&r.fe_neg_scaled)));
        let mut out = Vec::new();
        write_doc_features(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), DOC_FEATURES_HEADER);
        assert!(text.lines().nth(2).unwrap().ends_with(','));
        let empty = vec![Document { id: "x".into(), windows: vec![], label: None }];
        assert!(doc_features(&pos, &neg, &empty, Execution::Sequential).is_err());
    }
}

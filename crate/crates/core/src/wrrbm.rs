//! Word-representation RBM over n-gram windows.
//!
//! Position weights are factored as `W^(i) = U^(i) D`: `D` holds one
//! `dim`-vector per word, `U^(i)` maps it to the hidden layer for position
//! `i`, and the visible bias `b*` is shared by every position.
//!
//! `D` is stored word-major with a global multiplicative scale so that
//! weight decay on it is O(1) per update rather than O(K).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::exec::Execution;
use crate::linalg::{axpy, dot, log_sum_exp, sigmoid, softplus, Matrix};
use crate::mh::{GroupScore, SoftmaxModel};
use crate::rbm::{enumerate_windows, HiddenState, RbmParams, SoftmaxLayout, VisibleMode, MAX_ENUMERATION};
use crate::{Error, Result};

/// Batch items handled by one partial gradient before the ordered reduction.
const GRADIENT_CHUNK: usize = 16;

/// Scale below which the lazy factor is folded back into storage.
const MIN_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WrrbmLayout {
    /// Window length.
    pub n: usize,
    /// Vocabulary size.
    pub k: usize,
    /// Word representation dimensionality.
    pub dim: usize,
    pub hidden: usize,
}

impl WrrbmLayout {
    pub fn new(n: usize, k: usize, dim: usize, hidden: usize) -> Result<Self> {
        if n == 0 || k == 0 || dim == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "layout sizes must be positive (n={n}, k={k}, dim={dim}, hidden={hidden})"
            )));
        }
        Ok(WrrbmLayout { n, k, dim, hidden })
    }
}

/// The word representation matrix `D`, one contiguous vector per word.
#[derive(Debug, Clone)]
pub struct Embeddings {
    k: usize,
    dim: usize,
    data: Vec<f64>,
    scale: f64,
}

impl PartialEq for Embeddings {
    /// Compares effective values, independent of the lazy scale.
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.dim == other.dim
            && (self.scale == other.scale && self.data == other.data
                || self.to_word_major() == other.to_word_major())
    }
}

impl Embeddings {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Embeddings { k, dim, data: vec![0.0; k * dim], scale: 1.0 }
    }

    /// From word-major values: entry `w * dim + d` is `D[d, w]`.
    pub fn from_word_major(k: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * dim {
            return Err(Error::DimensionMismatch(format!("{} values for {k} words of dim {dim}", data.len())));
        }
        Ok(Embeddings { k, dim, data, scale: 1.0 })
    }

    pub fn num_words(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn raw(&self, w: usize) -> &[f64] {
        &self.data[w * self.dim..(w + 1) * self.dim]
    }

    /// `D[d, w]`
    #[inline]
    pub fn get(&self, d: usize, w: usize) -> f64 {
        self.scale * self.data[w * self.dim + d]
    }

    pub fn set(&mut self, d: usize, w: usize, value: f64) {
        self.data[w * self.dim + d] = value / self.scale;
    }

    /// The representation of word `w`.
    pub fn vector(&self, w: usize) -> Vec<f64> {
        self.raw(w).iter().map(|x| x * self.scale).collect()
    }

    /// `x . D[:, w]`
    #[inline]
    pub fn dot(&self, w: usize, x: &[f64]) -> f64 {
        self.scale * dot(self.raw(w), x)
    }

    /// `D[:, w] += alpha * x`
    #[inline]
    pub fn add_to(&mut self, w: usize, alpha: f64, x: &[f64]) {
        let a = alpha / self.scale;
        let dim = self.dim;
        axpy(a, x, &mut self.data[w * dim..(w + 1) * dim]);
    }

    /// `D *= factor` in O(1), folding into storage when the scale gets small.
    pub fn scale_by(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale.abs() < MIN_SCALE {
            self.fold_scale();
        }
    }

    pub fn fold_scale(&mut self) {
        if self.scale != 1.0 {
            let s = self.scale;
            self.data.iter_mut().for_each(|x| *x *= s);
            self.scale = 1.0;
        }
    }

    /// Word-major values with the scale applied.
    pub fn to_word_major(&self) -> Vec<f64> {
        self.data.iter().map(|x| x * self.scale).collect()
    }

    fn all_finite(&self) -> bool {
        self.scale.is_finite() && self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrrbmParams {
    pub layout: WrrbmLayout,
    pub d: Embeddings,
    /// One `hidden x dim` matrix per window position.
    pub u: Vec<Matrix>,
    /// Shared visible bias, length `k`.
    pub b_star: Vec<f64>,
    /// Hidden bias, length `hidden`.
    pub c: Vec<f64>,
}

impl WrrbmParams {
    pub fn zeros(layout: WrrbmLayout) -> Self {
        WrrbmParams {
            layout,
            d: Embeddings::zeros(layout.k, layout.dim),
            u: vec![Matrix::zeros(layout.hidden, layout.dim); layout.n],
            b_star: vec![0.0; layout.k],
            c: vec![0.0; layout.hidden],
        }
    }

    /// `D`, `U` ~ N(0, std^2), `c = 0`, `b* = log proposal`, so that the
    /// model starts out matching the proposal distribution up to the weights.
    pub fn init<R: Rng + ?Sized>(layout: WrrbmLayout, proposal_probs: &[f64], std: f64, rng: &mut R) -> Result<Self> {
        if proposal_probs.len() != layout.k {
            return Err(Error::DimensionMismatch(format!(
                "{} proposal probabilities for K={}",
                proposal_probs.len(),
                layout.k
            )));
        }
        if let Some(p) = proposal_probs.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::InvalidDistribution(format!("bias initialization needs q > 0, found {p}")));
        }
        let mut p = Self::zeros(layout);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            p.d.data.iter_mut().for_each(|x| *x = normal.sample(rng));
            for u in &mut p.u {
                u.as_mut_slice().iter_mut().for_each(|x| *x = normal.sample(rng));
            }
        }
        p.b_star = proposal_probs.iter().map(|q| q.ln()).collect();
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layout;
        let shapes_ok = self.d.k == l.k
            && self.d.dim == l.dim
            && self.u.len() == l.n
            && self.u.iter().all(|m| m.rows() == l.hidden && m.cols() == l.dim)
            && self.b_star.len() == l.k
            && self.c.len() == l.hidden;
        if !shapes_ok {
            return Err(Error::DimensionMismatch("parameter shapes disagree with layout".into()));
        }
        let finite = self.d.all_finite()
            && self.u.iter().all(|m| m.as_slice().iter().all(|x| x.is_finite()))
            && self.b_star.iter().chain(&self.c).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn check_window(&self, words: &[usize]) -> Result<()> {
        if words.len() != self.layout.n {
            return Err(Error::DimensionMismatch(format!(
                "window of length {} for n={}",
                words.len(),
                self.layout.n
            )));
        }
        match words.iter().find(|&&w| w >= self.layout.k) {
            Some(&w) => Err(Error::IndexOutOfRange { index: w, size: self.layout.k }),
            None => Ok(()),
        }
    }

    /// `c + sum_i U^(i) D[:, v_i]`. Assumes a checked window.
    fn preactivation_unchecked(&self, words: &[usize]) -> Vec<f64> {
        let mut a = self.c.clone();
        for (i, &w) in words.iter().enumerate() {
            let u = &self.u[i];
            for (j, aj) in a.iter_mut().enumerate() {
                *aj += self.d.dot(w, u.row(j));
            }
        }
        a
    }

    pub fn hidden_preactivation(&self, words: &[usize]) -> Result<Vec<f64>> {
        self.check_window(words)?;
        Ok(self.preactivation_unchecked(words))
    }

    pub fn hidden_conditional(&self, words: &[usize]) -> Result<Vec<f64>> {
        Ok(self.hidden_preactivation(words)?.into_iter().map(sigmoid).collect())
    }

    pub fn energy(&self, words: &[usize], h: &HiddenState) -> Result<f64> {
        self.check_window(words)?;
        if h.len() != self.layout.hidden {
            return Err(Error::DimensionMismatch(format!("hidden state of {} units", h.len())));
        }
        let mut e = 0.0;
        for j in h.active() {
            e -= self.c[j];
        }
        for (i, &w) in words.iter().enumerate() {
            e -= self.b_star[w];
            for j in h.active() {
                e -= self.d.dot(w, self.u[i].row(j));
            }
        }
        Ok(e)
    }

    /// `h' U^(i)`, the cached projection that makes each score O(dim).
    pub fn hidden_projection(&self, h: &HiddenState, group: usize) -> Vec<f64> {
        let mut proj = vec![0.0; self.layout.dim];
        for j in h.active() {
            axpy(1.0, self.u[group].row(j), &mut proj);
        }
        proj
    }

    /// `b*_k + h' U^(i) D[:, k]`
    pub fn score(&self, h: &HiddenState, group: usize, word: usize) -> f64 {
        self.b_star[word] + self.d.dot(word, &self.hidden_projection(h, group))
    }

    pub fn free_energy(&self, words: &[usize]) -> Result<f64> {
        self.check_window(words)?;
        Ok(self.free_energy_unchecked(words))
    }

    fn free_energy_unchecked(&self, words: &[usize]) -> f64 {
        let bias: f64 = words.iter().map(|&w| self.b_star[w]).sum();
        -bias - self.preactivation_unchecked(words).into_iter().map(softplus).sum::<f64>()
    }

    /// Dense equivalent with `W^(i) = U^(i) D` and `b^(i) = b*`.
    pub fn expand(&self) -> RbmParams {
        let l = self.layout;
        let soft = SoftmaxLayout { n: l.n, k: l.k };
        let mut w = Matrix::zeros(l.hidden, l.n * l.k);
        for i in 0..l.n {
            for j in 0..l.hidden {
                let urow = self.u[i].row(j);
                for k in 0..l.k {
                    w.set(j, soft.unit(i, k), self.d.dot(k, urow));
                }
            }
        }
        let b = (0..l.n).flat_map(|_| self.b_star.iter().copied()).collect();
        RbmParams { w, b, c: self.c.clone(), mode: VisibleMode::Softmax(soft) }
    }

    pub fn exact_log_partition(&self) -> Result<f64> {
        let l = self.layout;
        let count = (l.k as u128).checked_pow(l.n as u32).unwrap_or(u128::MAX);
        if count > MAX_ENUMERATION {
            return Err(Error::StateSpaceTooLarge(format!(
                "{count} visible configurations exceeds {MAX_ENUMERATION}"
            )));
        }
        let neg_f: Vec<f64> = enumerate_windows(l.n, l.k)
            .iter()
            .map(|v| -self.free_energy_unchecked(v))
            .collect();
        Ok(log_sum_exp(&neg_f))
    }

    /// Mean exact negative log-likelihood of `windows`.
    pub fn exact_nll(&self, windows: &[Vec<usize>]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Empty("no windows".into()));
        }
        let log_z = self.exact_log_partition()?;
        let mut total = 0.0;
        for w in windows {
            total += self.free_energy(w)?;
        }
        Ok(total / windows.len() as f64 + log_z)
    }

    /// Exact joint probability of every window, in `enumerate_windows` order.
    pub fn exact_window_probs(&self) -> Result<Vec<f64>> {
        let log_z = self.exact_log_partition()?;
        Ok(enumerate_windows(self.layout.n, self.layout.k)
            .iter()
            .map(|v| (-self.free_energy_unchecked(v) - log_z).exp())
            .collect())
    }
}

pub struct WrrbmGroupScorer<'a> {
    params: &'a WrrbmParams,
    proj: Vec<f64>,
}

impl GroupScore for WrrbmGroupScorer<'_> {
    #[inline]
    fn score(&self, word: usize) -> f64 {
        self.params.b_star[word] + self.params.d.dot(word, &self.proj)
    }
}

impl SoftmaxModel for WrrbmParams {
    type Scorer<'a> = WrrbmGroupScorer<'a>;

    fn num_groups(&self) -> usize {
        self.layout.n
    }

    fn num_outcomes(&self) -> usize {
        self.layout.k
    }

    fn num_hidden(&self) -> usize {
        self.layout.hidden
    }

    fn hidden_probs(&self, words: &[usize]) -> Vec<f64> {
        self.preactivation_unchecked(words).into_iter().map(sigmoid).collect()
    }

    fn group_scorer<'a>(&'a self, h: &HiddenState, group: usize) -> WrrbmGroupScorer<'a> {
        WrrbmGroupScorer { params: self, proj: self.hidden_projection(h, group) }
    }
}

/// Gradient of the objective with respect to every parameter block. The
/// `D` and `b*` blocks are sparse: only words present in a batch appear.
#[derive(Debug, Clone, PartialEq)]
pub struct WrrbmGradient {
    pub u: Vec<Matrix>,
    pub c: Vec<f64>,
    /// Word id to gradient of `D[:, w]`.
    pub d: BTreeMap<usize, Vec<f64>>,
    pub b_star: BTreeMap<usize, f64>,
}

impl WrrbmGradient {
    pub fn zeros(layout: WrrbmLayout) -> Self {
        WrrbmGradient {
            u: vec![Matrix::zeros(layout.hidden, layout.dim); layout.n],
            c: vec![0.0; layout.hidden],
            d: BTreeMap::new(),
            b_star: BTreeMap::new(),
        }
    }

    /// Adds `weight * E_{h|v}[dE/dtheta]` for one window.
    pub fn accumulate(&mut self, params: &WrrbmParams, words: &[usize], weight: f64) {
        let l = params.layout;
        let ph: Vec<f64> = params.hidden_probs(words);
        axpy(-weight, &ph, &mut self.c);
        for (i, &w) in words.iter().enumerate() {
            *self.b_star.entry(w).or_default() -= weight;
            let dcol = params.d.vector(w);
            let u = &mut self.u[i];
            for (j, &p) in ph.iter().enumerate() {
                axpy(-weight * p, &dcol, u.row_mut(j));
            }
            let gd = self.d.entry(w).or_insert_with(|| vec![0.0; l.dim]);
            for (j, &p) in ph.iter().enumerate() {
                axpy(-weight * p, params.u[i].row(j), gd);
            }
        }
    }

    pub fn add(&mut self, other: &WrrbmGradient) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        axpy(1.0, &other.c, &mut self.c);
        for (w, g) in &other.d {
            match self.d.get_mut(w) {
                Some(mine) => axpy(1.0, g, mine),
                None => {
                    self.d.insert(*w, g.clone());
                }
            }
        }
        for (w, g) in &other.b_star {
            *self.b_star.entry(*w).or_default() += g;
        }
    }

    pub fn norm(&self) -> f64 {
        let sq = self.u.iter().flat_map(|m| m.as_slice()).map(|x| x * x).sum::<f64>()
            + self.c.iter().map(|x| x * x).sum::<f64>()
            + self.d.values().flatten().map(|x| x * x).sum::<f64>()
            + self.b_star.values().map(|x| x * x).sum::<f64>();
        sq.sqrt()
    }

    /// Densifies `D` into a word-major `k * dim` vector.
    pub fn dense_d(&self, layout: WrrbmLayout) -> Vec<f64> {
        let mut out = vec![0.0; layout.k * layout.dim];
        for (w, g) in &self.d {
            out[w * layout.dim..(w + 1) * layout.dim].copy_from_slice(g);
        }
        out
    }

    pub fn dense_b_star(&self, layout: WrrbmLayout) -> Vec<f64> {
        let mut out = vec![0.0; layout.k];
        for (w, g) in &self.b_star {
            out[*w] = *g;
        }
        out
    }
}

/// Weighted sum of `E_{h|v}[dE/dtheta]` over `(window, weight)` items.
/// Chunks are reduced in order, so the result does not depend on the
/// execution mode or thread count.
pub fn weighted_energy_gradient(
    params: &WrrbmParams,
    items: &[(&[usize], f64)],
    exec: Execution,
) -> Result<WrrbmGradient> {
    for (w, _) in items {
        params.check_window(w)?;
    }
    let partials = exec.map_chunks(items, GRADIENT_CHUNK, |chunk| {
        let mut g = WrrbmGradient::zeros(params.layout);
        for (w, wt) in chunk {
            g.accumulate(params, w, *wt);
        }
        g
    });
    let mut total = WrrbmGradient::zeros(params.layout);
    for p in &partials {
        total.add(p);
    }
    Ok(total)
}

/// Stochastic gradient of the mean NLL: data term from `positive` minus the
/// model term estimated on the `negative` chain states. Cost is
/// O((|positive| + |negative|) * n * hidden * dim), with no K term.
pub fn wrrbm_gradients(
    params: &WrrbmParams,
    positive: &[Vec<usize>],
    negative: &[Vec<usize>],
    exec: Execution,
) -> Result<WrrbmGradient> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Empty("gradient batches must be nonempty".into()));
    }
    let wp = 1.0 / positive.len() as f64;
    let wn = -1.0 / negative.len() as f64;
    let items: Vec<(&[usize], f64)> = positive
        .iter()
        .map(|w| (w.as_slice(), wp))
        .chain(negative.iter().map(|w| (w.as_slice(), wn)))
        .collect();
    weighted_energy_gradient(params, &items, exec)
}

/// Exact NLL gradient, with the model expectation taken over all `k^n` windows.
pub fn exact_nll_gradient(params: &WrrbmParams, data: &[Vec<usize>]) -> Result<WrrbmGradient> {
    if data.is_empty() {
        return Err(Error::Empty("no data".into()));
    }
    let configs = enumerate_windows(params.layout.n, params.layout.k);
    let probs = params.exact_window_probs()?;
    let wp = 1.0 / data.len() as f64;
    let items: Vec<(&[usize], f64)> = data
        .iter()
        .map(|w| (w.as_slice(), wp))
        .chain(configs.iter().zip(&probs).map(|(w, &p)| (w.as_slice(), -p)))
        .collect();
    weighted_energy_gradient(params, &items, Execution::Sequential)
}

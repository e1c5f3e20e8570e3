//! Independence-chain Metropolis-Hastings updates for softmax visible groups.
//!
//! A step proposes `k' ~ q` from a fixed alias table and accepts with
//! probability `min{1, q(k) exp(s(k')) / (q(k') exp(s(k)))}`, where `s` is
//! the group's unnormalized log-probability given the hiddens. Only one new
//! score is evaluated per step, so the cost never depends on K.

use rand::Rng;

use crate::alias::AliasTable;
use crate::corpus::UnigramDistribution;
use crate::linalg::{softmax, Matrix};
use crate::rbm::{sample_categorical, HiddenState, RbmParams, VisibleMode};
use crate::{Error, Result};

/// Default mixing weight of the uniform component in the proposal.
pub const DEFAULT_SMOOTHING: f64 = 1e-4;

/// Largest K for which the dense analytic kernel is built.
pub const MAX_KERNEL_OUTCOMES: usize = 2000;

/// Unnormalized log-probability of each outcome of one softmax group.
pub trait GroupScore {
    fn score(&self, word: usize) -> f64;
}

impl<F: Fn(usize) -> f64> GroupScore for F {
    fn score(&self, word: usize) -> f64 {
        self(word)
    }
}

/// A model whose visibles are `n` softmax groups over `K` outcomes that are
/// conditionally independent given the hiddens.
pub trait SoftmaxModel: Sync {
    type Scorer<'a>: GroupScore
    where
        Self: 'a;

    fn num_groups(&self) -> usize;
    fn num_outcomes(&self) -> usize;
    fn num_hidden(&self) -> usize;
    fn hidden_probs(&self, words: &[usize]) -> Vec<f64>;
    /// Precomputes whatever depends on `(h, group)` so that each score is cheap.
    fn group_scorer<'a>(&'a self, h: &HiddenState, group: usize) -> Self::Scorer<'a>;
}

pub struct RbmGroupScorer<'a> {
    params: &'a RbmParams,
    active: Vec<usize>,
    group: usize,
}

impl GroupScore for RbmGroupScorer<'_> {
    #[inline]
    fn score(&self, word: usize) -> f64 {
        self.params.group_score(&self.active, self.group, word)
    }
}

impl SoftmaxModel for RbmParams {
    type Scorer<'a> = RbmGroupScorer<'a>;

    fn num_groups(&self) -> usize {
        match self.mode {
            VisibleMode::Softmax(l) => l.n,
            VisibleMode::Binary => panic!("binary RBM has no softmax groups"),
        }
    }

    fn num_outcomes(&self) -> usize {
        match self.mode {
            VisibleMode::Softmax(l) => l.k,
            VisibleMode::Binary => panic!("binary RBM has no softmax groups"),
        }
    }

    fn num_hidden(&self) -> usize {
        self.hidden()
    }

    fn hidden_probs(&self, words: &[usize]) -> Vec<f64> {
        self.hidden_conditional(&crate::rbm::VisibleState::Softmax(words.to_vec()))
            .expect("valid window")
    }

    fn group_scorer<'a>(&'a self, h: &HiddenState, group: usize) -> RbmGroupScorer<'a> {
        RbmGroupScorer { params: self, active: h.active().collect(), group }
    }
}

/// Fixed independence proposal: probabilities, their logs, and an alias table.
#[derive(Debug, Clone)]
pub struct Proposal {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    table: AliasTable,
}

impl Proposal {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let table = AliasTable::new(&probs)?;
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Proposal { probs, log_probs, table })
    }

    /// Unigram marginal mixed with uniform at `smoothing`, so every word has support.
    pub fn from_unigram(unigram: &UnigramDistribution, smoothing: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&smoothing) {
            return Err(Error::Config(format!("proposal smoothing {smoothing} not in [0, 1]")));
        }
        Self::new(unigram.smoothed(smoothing).probs().to_vec())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    #[inline]
    pub fn log_prob(&self, k: usize) -> f64 {
        self.log_probs[k]
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }
}

#[derive(Debug, Clone)]
pub struct MhConfig {
    pub steps_per_update: usize,
    pub proposal: Proposal,
}

impl MhConfig {
    pub fn new(steps_per_update: usize, proposal: Proposal) -> Result<Self> {
        if steps_per_update == 0 {
            return Err(Error::Config("steps_per_update must be at least 1".into()));
        }
        Ok(MhConfig { steps_per_update, proposal })
    }
}

/// Chain position within one group: the word and its cached score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupState {
    pub word: usize,
    pub score: f64,
}

/// One M-H step. Returns the new state and whether the proposal was accepted.
/// The proposal may equal the current word; that always counts as accepted.
pub fn mh_step_group<S: GroupScore, R: Rng + ?Sized>(
    scorer: &S,
    current: GroupState,
    proposal: &Proposal,
    rng: &mut R,
) -> Result<(GroupState, bool)> {
    if proposal.prob(current.word) <= 0.0 {
        return Err(Error::ZeroProposal(current.word));
    }
    let cand = proposal.sample(rng);
    if cand == current.word {
        return Ok((current, true));
    }
    let cand_score = scorer.score(cand);
    let log_ratio = proposal.log_prob(current.word) - proposal.log_prob(cand) + cand_score - current.score;
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        Ok((GroupState { word: cand, score: cand_score }, true))
    } else {
        Ok((current, false))
    }
}

/// Proposals drawn and scored together by [`mh_run_group`].
const PROPOSAL_BLOCK: usize = 32;

/// Runs `steps` M-H steps on one group starting from `word`.
/// Returns the final word and the number of accepted proposals.
///
/// Proposals do not depend on the chain state, so each block of candidates
/// is drawn and scored before the accept/reject pass; the scoring loads are
/// then independent and overlap in memory.
pub fn mh_run_group<S: GroupScore, R: Rng + ?Sized>(
    scorer: &S,
    word: usize,
    steps: usize,
    proposal: &Proposal,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if proposal.prob(word) <= 0.0 {
        return Err(Error::ZeroProposal(word));
    }
    let mut state = GroupState { word, score: scorer.score(word) };
    let mut accepted = 0;
    let mut cand = [0usize; PROPOSAL_BLOCK];
    let mut unif = [0f64; PROPOSAL_BLOCK];
    let mut score = [0f64; PROPOSAL_BLOCK];
    let mut left = steps;
    while left > 0 {
        let m = left.min(PROPOSAL_BLOCK);
        for i in 0..m {
            cand[i] = proposal.sample(rng);
            unif[i] = rng.random::<f64>();
        }
        for i in 0..m {
            score[i] = scorer.score(cand[i]);
        }
        for i in 0..m {
            if cand[i] == state.word {
                accepted += 1;
                continue;
            }
            let log_ratio = proposal.log_prob(state.word) - proposal.log_prob(cand[i]) + score[i] - state.score;
            if log_ratio >= 0.0 || unif[i].ln() < log_ratio {
                state = GroupState { word: cand[i], score: score[i] };
                accepted += 1;
            }
        }
        left -= m;
    }
    Ok((state.word, accepted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub proposals: usize,
    pub accepted: usize,
}

impl SweepStats {
    pub fn merge(&mut self, other: SweepStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// `steps_per_update` M-H steps on each of the `n` groups, in place.
/// Groups are independent given `h`; they run in order on one stream.
pub fn mh_sweep<M: SoftmaxModel, R: Rng + ?Sized>(
    model: &M,
    h: &HiddenState,
    words: &mut [usize],
    config: &MhConfig,
    rng: &mut R,
) -> Result<SweepStats> {
    if words.len() != model.num_groups() {
        return Err(Error::DimensionMismatch(format!(
            "{} words for {} groups",
            words.len(),
            model.num_groups()
        )));
    }
    if config.proposal.len() != model.num_outcomes() {
        return Err(Error::DimensionMismatch(format!(
            "proposal over {} outcomes, model has {}",
            config.proposal.len(),
            model.num_outcomes()
        )));
    }
    let mut stats = SweepStats::default();
    for (group, word) in words.iter_mut().enumerate() {
        if *word >= model.num_outcomes() {
            return Err(Error::IndexOutOfRange { index: *word, size: model.num_outcomes() });
        }
        let scorer = model.group_scorer(h, group);
        let (w, acc) = mh_run_group(&scorer, *word, config.steps_per_update, &config.proposal, rng)?;
        *word = w;
        stats.merge(SweepStats { proposals: config.steps_per_update, accepted: acc });
    }
    Ok(stats)
}

/// Exact conditional of one group, `softmax_k s(k)`. Costs O(K) scores.
pub fn exact_group_conditional<M: SoftmaxModel>(model: &M, h: &HiddenState, group: usize) -> Vec<f64> {
    let scorer = model.group_scorer(h, group);
    let logits: Vec<f64> = (0..model.num_outcomes()).map(|k| scorer.score(k)).collect();
    softmax(&logits)
}

/// Exact block Gibbs draw of every group, in place. Linear in K.
pub fn exact_gibbs_visible<M: SoftmaxModel, R: Rng + ?Sized>(
    model: &M,
    h: &HiddenState,
    words: &mut [usize],
    rng: &mut R,
) {
    for (group, word) in words.iter_mut().enumerate() {
        *word = sample_categorical(&exact_group_conditional(model, h, group), rng);
    }
}

/// Dense transition matrix of one M-H step on `group`: row `k` is the
/// distribution of the next word given current word `k`.
pub fn mh_kernel_matrix<M: SoftmaxModel>(model: &M, h: &HiddenState, proposal: &Proposal, group: usize) -> Result<Matrix> {
    let k = model.num_outcomes();
    if k > MAX_KERNEL_OUTCOMES {
        return Err(Error::StateSpaceTooLarge(format!("K={k} exceeds {MAX_KERNEL_OUTCOMES}")));
    }
    if proposal.len() != k {
        return Err(Error::DimensionMismatch(format!("proposal over {} outcomes, K={k}", proposal.len())));
    }
    let scorer = model.group_scorer(h, group);
    let scores: Vec<f64> = (0..k).map(|w| scorer.score(w)).collect();
    Ok(kernel_from_scores(&scores, proposal))
}

pub(crate) fn kernel_from_scores(scores: &[f64], proposal: &Proposal) -> Matrix {
    let k = scores.len();
    let mut t = Matrix::zeros(k, k);
    for from in 0..k {
        let row = t.row_mut(from);
        if proposal.prob(from) <= 0.0 {
            // Unreachable under the chain; keep the row stochastic.
            row[from] = 1.0;
            continue;
        }
        let mut off = 0.0;
        for to in 0..k {
            if to == from || proposal.prob(to) <= 0.0 {
                continue;
            }
            let log_ratio = proposal.log_prob(from) - proposal.log_prob(to) + scores[to] - scores[from];
            let p = proposal.prob(to) * log_ratio.min(0.0).exp();
            row[to] = p;
            off += p;
        }
        row[from] = 1.0 - off;
    }
    t
}

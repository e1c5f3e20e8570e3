//! Stochastic-approximation training with persistent negative chains.
//!
//! Each update first advances every chain (exact hidden draw, then a
//! visible refresh by M-H or exact Gibbs), then takes a gradient step using
//! a minibatch of data windows against the chain states. Chains are never
//! reset. Every chain owns its random stream, so results do not depend on
//! how chains are scheduled across threads.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{UnigramDistribution, WindowCorpus};
use crate::exec::Execution;
use crate::linalg::{axpy, Matrix};
use crate::mh::{exact_gibbs_visible, mh_sweep, MhConfig, Proposal, SoftmaxModel, SweepStats, DEFAULT_SMOOTHING};
use crate::rbm::HiddenState;
use crate::wrrbm::{wrrbm_gradients, WrrbmLayout, WrrbmParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleSampler {
    MetropolisHastings,
    ExactGibbs,
}

impl FromStr for VisibleSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mh" => Ok(VisibleSampler::MetropolisHastings),
            "exact" => Ok(VisibleSampler::ExactGibbs),
            other => Err(Error::Config(format!("unknown visible sampler {other:?} (expected mh or exact)"))),
        }
    }
}

impl std::fmt::Display for VisibleSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VisibleSampler::MetropolisHastings => "mh",
            VisibleSampler::ExactGibbs => "exact",
        })
    }
}

/// Training hyperparameters. The key/value file format uses these field
/// names verbatim; see [`TrainConfig::from_kv_str`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_chains: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    /// Momentum on the position weights `U` only.
    pub momentum_u: f64,
    /// Weight decay on `D` and `U`; biases are not decayed.
    pub l2_weight: f64,
    pub steps_per_update: usize,
    pub proposal_smoothing: f64,
    pub visible_sampler: VisibleSampler,
    /// Hidden draw + visible refresh rounds per update.
    pub gibbs_steps: usize,
    pub hidden_units: usize,
    pub embedding_dim: usize,
    pub init_std: f64,
    pub epochs: usize,
    pub max_updates: Option<usize>,
    pub seed: u64,
    pub log_interval: usize,
    pub checkpoint_interval: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_chains: 64,
            minibatch_size: 64,
            learning_rate: 0.01,
            momentum_u: 0.9,
            l2_weight: 1e-4,
            steps_per_update: 100,
            proposal_smoothing: DEFAULT_SMOOTHING,
            visible_sampler: VisibleSampler::MetropolisHastings,
            gibbs_steps: 1,
            hidden_units: 250,
            embedding_dim: 32,
            init_std: 0.01,
            epochs: 1,
            max_updates: None,
            seed: 0,
            log_interval: 100,
            checkpoint_interval: 0,
            execution: Execution::Parallel,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "num_chains",
    "minibatch_size",
    "learning_rate",
    "momentum_u",
    "l2_weight",
    "steps_per_update",
    "proposal_smoothing",
    "visible_sampler",
    "gibbs_steps",
    "hidden_units",
    "embedding_dim",
    "init_std",
    "epochs",
    "max_updates",
    "seed",
    "log_interval",
    "checkpoint_interval",
    "execution",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_chains == 0 {
            return fail("num_chains must be positive");
        }
        if self.minibatch_size == 0 {
            return fail("minibatch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum_u) {
            return fail("momentum_u must be in [0, 1)");
        }
        if !(self.l2_weight >= 0.0) || self.learning_rate * self.l2_weight >= 1.0 {
            return fail("l2_weight must be nonnegative with learning_rate * l2_weight < 1");
        }
        if self.steps_per_update == 0 {
            return fail("steps_per_update must be positive");
        }
        if !(0.0..=1.0).contains(&self.proposal_smoothing) {
            return fail("proposal_smoothing must be in [0, 1]");
        }
        if self.gibbs_steps == 0 {
            return fail("gibbs_steps must be positive");
        }
        if self.hidden_units == 0 || self.embedding_dim == 0 {
            return fail("hidden_units and embedding_dim must be positive");
        }
        if !(self.init_std >= 0.0) {
            return fail("init_std must be nonnegative");
        }
        if self.log_interval == 0 {
            return fail("log_interval must be positive");
        }
        Ok(())
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_chains" => self.num_chains = parse_value(key, value)?,
            "minibatch_size" => self.minibatch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "momentum_u" => self.momentum_u = parse_value(key, value)?,
            "l2_weight" => self.l2_weight = parse_value(key, value)?,
            "steps_per_update" => self.steps_per_update = parse_value(key, value)?,
            "proposal_smoothing" => self.proposal_smoothing = parse_value(key, value)?,
            "visible_sampler" => self.visible_sampler = value.parse()?,
            "gibbs_steps" => self.gibbs_steps = parse_value(key, value)?,
            "hidden_units" => self.hidden_units = parse_value(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "init_std" => self.init_std = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "max_updates" => {
                self.max_updates = match value {
                    "none" | "" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "seed" => self.seed = parse_value(key, value)?,
            "log_interval" => self.log_interval = parse_value(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_value(key, value)?,
            "execution" => self.execution = value.parse()?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let max_updates = self.max_updates.map_or("none".to_string(), |m| m.to_string());
        let rows: [(&str, String); 18] = [
            ("num_chains", self.num_chains.to_string()),
            ("minibatch_size", self.minibatch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum_u", self.momentum_u.to_string()),
            ("l2_weight", self.l2_weight.to_string()),
            ("steps_per_update", self.steps_per_update.to_string()),
            ("proposal_smoothing", self.proposal_smoothing.to_string()),
            ("visible_sampler", self.visible_sampler.to_string()),
            ("gibbs_steps", self.gibbs_steps.to_string()),
            ("hidden_units", self.hidden_units.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("init_std", self.init_std.to_string()),
            ("epochs", self.epochs.to_string()),
            ("max_updates", max_updates),
            ("seed", self.seed.to_string()),
            ("log_interval", self.log_interval.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("execution", self.execution.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Random stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_CHAIN_BASE: u64 = 2;

/// One persistent negative chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub words: Vec<usize>,
    pub hidden: HiddenState,
    rng: ChaCha8Rng,
}

/// `num_chains` chains with words drawn from the proposal and hiddens from `p(h|v)`.
pub fn init_chains<M: SoftmaxModel>(model: &M, proposal: &Proposal, num_chains: usize, seed: u64) -> Vec<ChainState> {
    (0..num_chains)
        .map(|m| {
            let mut rng = stream_rng(seed, STREAM_CHAIN_BASE + m as u64);
            let words: Vec<usize> = (0..model.num_groups()).map(|_| proposal.sample(&mut rng)).collect();
            let hidden = HiddenState::sample(&model.hidden_probs(&words), &mut rng);
            ChainState { words, hidden, rng }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub params: WrrbmParams,
    pub chains: Vec<ChainState>,
    velocity_u: Vec<Matrix>,
    pub updates: usize,
}

impl TrainerState {
    pub fn new(params: WrrbmParams, chains: Vec<ChainState>) -> Self {
        let l = params.layout;
        TrainerState {
            params,
            chains,
            velocity_u: vec![Matrix::zeros(l.hidden, l.dim); l.n],
            updates: 0,
        }
    }

    /// Fresh model and chains for `config`, with the bias initialized from `proposal`.
    pub fn initialize(layout: WrrbmLayout, proposal: &Proposal, config: &TrainConfig) -> Result<Self> {
        let mut rng = stream_rng(config.seed, STREAM_INIT);
        let params = WrrbmParams::init(layout, proposal.probs(), config.init_std, &mut rng)?;
        let chains = init_chains(&params, proposal, config.num_chains, config.seed);
        Ok(Self::new(params, chains))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub mean_pos_free_energy: f64,
    pub mh_acceptance_rate: f64,
    pub grad_norm: f64,
}

/// Advances every chain, then applies one gradient update from `minibatch`.
pub fn train_step(
    state: &mut TrainerState,
    minibatch: &[Vec<usize>],
    config: &TrainConfig,
    mh: &MhConfig,
) -> Result<StepMetrics> {
    if minibatch.is_empty() {
        return Err(Error::Empty("minibatch".into()));
    }
    let params = &state.params;
    let exec = config.execution;

    let chain_stats = exec.map_mut(&mut state.chains, |_, chain| -> Result<SweepStats> {
        let mut stats = SweepStats::default();
        for _ in 0..config.gibbs_steps {
            chain.hidden = HiddenState::sample(&params.hidden_probs(&chain.words), &mut chain.rng);
            match config.visible_sampler {
                VisibleSampler::MetropolisHastings => {
                    stats.merge(mh_sweep(params, &chain.hidden, &mut chain.words, mh, &mut chain.rng)?)
                }
                VisibleSampler::ExactGibbs => {
                    exact_gibbs_visible(params, &chain.hidden, &mut chain.words, &mut chain.rng)
                }
            }
        }
        Ok(stats)
    });
    let mut stats = SweepStats::default();
    for s in chain_stats {
        stats.merge(s?);
    }

    let negative: Vec<Vec<usize>> = state.chains.iter().map(|c| c.words.clone()).collect();
    let grad = wrrbm_gradients(params, minibatch, &negative, exec)?;
    let free_energies = exec.map(minibatch, |_, w| params.free_energy(w));
    let mut fe_sum = 0.0;
    for f in free_energies {
        fe_sum += f?;
    }

    let lr = config.learning_rate;
    let l2 = config.l2_weight;
    let p = &mut state.params;
    axpy(-lr, &grad.c, &mut p.c);
    for (&w, g) in &grad.b_star {
        p.b_star[w] -= lr * g;
    }
    for ((u, vel), gu) in p.u.iter_mut().zip(&mut state.velocity_u).zip(&grad.u) {
        for ((ui, vi), gi) in u.as_mut_slice().iter_mut().zip(vel.as_mut_slice()).zip(gu.as_slice()) {
            *vi = config.momentum_u * *vi - lr * (gi + l2 * *ui);
            *ui += *vi;
        }
    }
    p.d.scale_by(1.0 - lr * l2);
    for (&w, g) in &grad.d {
        p.d.add_to(w, -lr, g);
    }
    state.updates += 1;

    Ok(StepMetrics {
        mean_pos_free_energy: fe_sum / minibatch.len() as f64,
        mh_acceptance_rate: stats.acceptance_rate(),
        grad_norm: grad.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub update: usize,
    pub epoch: usize,
    pub mean_pos_free_energy: f64,
    pub mh_acceptance_rate: f64,
    pub grad_norm: f64,
    /// Milliseconds since training started.
    pub wall_ms: f64,
}

pub const METRICS_HEADER: &str = "update,epoch,mean_pos_free_energy,mh_acceptance_rate,grad_norm,wall_ms";

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.update, r.epoch, r.mean_pos_free_energy, r.mh_acceptance_rate, r.grad_norm, r.wall_ms
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TrainerState,
    pub log: Vec<MetricsRecord>,
    pub proposal: Proposal,
}

/// Proposal the trainer uses for `corpus`: the smoothed unigram marginal.
pub fn corpus_proposal(corpus: &WindowCorpus, smoothing: f64) -> Result<Proposal> {
    Proposal::from_unigram(&UnigramDistribution::from_corpus(corpus)?, smoothing)
}

pub fn train(corpus: &WindowCorpus, config: &TrainConfig) -> Result<TrainOutput> {
    train_with(corpus, config, |_, _| Ok(()))
}

/// Full training run. `checkpoint(update, params)` is called every
/// `checkpoint_interval` updates when that is nonzero.
pub fn train_with<F>(corpus: &WindowCorpus, config: &TrainConfig, mut checkpoint: F) -> Result<TrainOutput>
where
    F: FnMut(usize, &WrrbmParams) -> Result<()>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus".into()));
    }
    let layout = WrrbmLayout::new(corpus.n(), corpus.vocab_size(), config.embedding_dim, config.hidden_units)?;
    let proposal = corpus_proposal(corpus, config.proposal_smoothing)?;
    let mh = MhConfig::new(config.steps_per_update, proposal.clone())?;
    let mut state = TrainerState::initialize(layout, &proposal, config)?;
    let windows = corpus.to_vecs();
    let per_epoch = windows.len().div_ceil(config.minibatch_size);
    let max_updates = config.max_updates.unwrap_or(per_epoch * config.epochs);

    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = Vec::new();
    let start = Instant::now();
    let mut epoch = 0;
    let mut batch = Vec::with_capacity(config.minibatch_size);
    'outer: while state.updates < max_updates {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.minibatch_size) {
            if state.updates >= max_updates {
                break 'outer;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| windows[i].clone()));
            let m = train_step(&mut state, &batch, config, &mh)?;
            if state.updates % config.log_interval == 0 {
                log.push(MetricsRecord {
                    update: state.updates,
                    epoch,
                    mean_pos_free_energy: m.mean_pos_free_energy,
                    mh_acceptance_rate: m.mh_acceptance_rate,
                    grad_norm: m.grad_norm,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            if config.checkpoint_interval > 0 && state.updates % config.checkpoint_interval == 0 {
                checkpoint(state.updates, &state.params)?;
            }
        }
        epoch += 1;
    }
    Ok(TrainOutput { state, log, proposal })
}

/// Samples `count` windows uniformly, for diagnostics and spot checks.
pub fn sample_windows<R: Rng + ?Sized>(corpus: &WindowCorpus, count: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..count).map(|_| corpus.window(rng.random_range(0..corpus.len()))).collect()
}

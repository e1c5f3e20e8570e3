//! Exact mixing analysis of the M-H visible operator.
//!
//! For a window with the hiddens clamped to one draw from `p(h|v)`, the
//! distribution of each group after `t` M-H steps started from the proposal
//! is `q T^t`, computed with the dense kernel and compared against the exact
//! softmax conditional.

use std::io::Write;

use rand::Rng;

use crate::exec::Execution;
use crate::linalg::Matrix;
use crate::mh::{exact_group_conditional, mh_kernel_matrix, Proposal, SoftmaxModel};
use crate::rbm::HiddenState;
use crate::{Error, Result};

/// Denominator floor for the KL terms.
pub const KL_FLOOR: f64 = 1e-12;

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::DimensionMismatch(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    for d in [p, q] {
        if d.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or NaN entry".into()));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution(format!("sums to {s}")));
        }
    }
    Ok(())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum()
}

/// `KL(p||q) + KL(q||p)` in nats.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok((kl(p, q) + kl(q, p)).max(0.0))
}

/// `1/2 sum |p - q|`
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn step_distribution(d: &[f64], kernel: &Matrix) -> Vec<f64> {
    let mut next = vec![0.0; d.len()];
    for (from, &mass) in d.iter().enumerate() {
        if mass != 0.0 {
            for (n, t) in next.iter_mut().zip(kernel.row(from)) {
                *n += mass * t;
            }
        }
    }
    next
}

/// `d_0 = q`, `d_{t+1} = d_t T`; returns `d_0 ..= d_iters`.
pub fn iterate_mh_distribution<M: SoftmaxModel>(
    model: &M,
    h: &HiddenState,
    proposal: &Proposal,
    group: usize,
    iters: usize,
) -> Result<Vec<Vec<f64>>> {
    let kernel = mh_kernel_matrix(model, h, proposal, group)?;
    let mut out = Vec::with_capacity(iters + 1);
    out.push(proposal.probs().to_vec());
    for t in 0..iters {
        let next = step_distribution(&out[t], &kernel);
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingPoint {
    pub iteration: usize,
    /// Symmetric KL of the joint over all groups, which is the sum of the
    /// per-group values because both distributions factor over groups.
    pub sym_kl: f64,
    pub mean_tv: f64,
    pub group_tv: Vec<f64>,
    pub group_kl: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    pub window_id: usize,
    pub window: Vec<usize>,
    pub points: Vec<MixingPoint>,
}

impl MixingCurve {
    pub fn mean_tv(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_tv).collect()
    }

    pub fn group_tv(&self, group: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.group_tv[group]).collect()
    }
}

/// Curves for one window with the hidden state fixed.
pub fn mixing_curve<M: SoftmaxModel>(
    model: &M,
    window_id: usize,
    window: &[usize],
    h: &HiddenState,
    proposal: &Proposal,
    iters: usize,
) -> Result<MixingCurve> {
    let n = model.num_groups();
    let mut tv = vec![vec![0.0; n]; iters + 1];
    let mut skl = vec![vec![0.0; n]; iters + 1];
    for g in 0..n {
        let target = exact_group_conditional(model, h, g);
        let dists = iterate_mh_distribution(model, h, proposal, g, iters)?;
        for (t, d) in dists.iter().enumerate() {
            tv[t][g] = total_variation(d, &target)?;
            skl[t][g] = symmetric_kl(d, &target)?;
        }
    }
    let points = (0..=iters)
        .map(|t| MixingPoint {
            iteration: t,
            sym_kl: skl[t].iter().sum(),
            mean_tv: tv[t].iter().sum::<f64>() / n as f64,
            group_tv: tv[t].clone(),
            group_kl: skl[t].clone(),
        })
        .collect();
    Ok(MixingCurve { window_id, window: window.to_vec(), points })
}

/// Draws one hidden state per window from `p(h|v)`, then computes every
/// window's curves (in parallel under `exec`).
pub fn mixing_report<M: SoftmaxModel, R: Rng + ?Sized>(
    model: &M,
    windows: &[Vec<usize>],
    proposal: &Proposal,
    iters: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<Vec<MixingCurve>> {
    if windows.is_empty() {
        return Err(Error::Empty("no windows to analyze".into()));
    }
    for w in windows {
        if w.len() != model.num_groups() || w.iter().any(|&x| x >= model.num_outcomes()) {
            return Err(Error::DimensionMismatch("window does not fit the model".into()));
        }
    }
    let hs: Vec<HiddenState> = windows
        .iter()
        .map(|w| HiddenState::sample(&model.hidden_probs(w), rng))
        .collect();
    let items: Vec<(&Vec<usize>, &HiddenState)> = windows.iter().zip(&hs).collect();
    exec.map(&items, |id, (w, h)| mixing_curve(model, id, w, h, proposal, iters))
        .into_iter()
        .collect()
}

pub const CURVES_HEADER: &str = "window_id,group,iteration,sym_kl,tv";
pub const AGGREGATE_HEADER: &str = "window_id,iteration,sym_kl,mean_tv";

/// Per-group rows `(window_id, group, iteration, sym_kl, tv)`.
pub fn write_curves_csv<W: Write>(mut w: W, curves: &[MixingCurve]) -> Result<()> {
    writeln!(w, "{CURVES_HEADER}")?;
    for c in curves {
        let groups = c.points.first().map_or(0, |p| p.group_tv.len());
        for g in 0..groups {
            for p in &c.points {
                writeln!(w, "{},{},{},{:e},{:e}", c.window_id, g, p.iteration, p.group_kl[g], p.group_tv[g])?;
            }
        }
    }
    Ok(())
}

/// Per-window rows `(window_id, iteration, sym_kl, mean_tv)`.
pub fn write_aggregate_csv<W: Write>(mut w: W, curves: &[MixingCurve]) -> Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for c in curves {
        for p in &c.points {
            writeln!(w, "{},{},{:e},{:e}", c.window_id, p.iteration, p.sym_kl, p.mean_tv)?;
        }
    }
    Ok(())
}

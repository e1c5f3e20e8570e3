//! Dense RBM with binary or softmax (K-ary) visible units.
//!
//! Softmax visibles are always stored as one word index per group; the
//! one-hot expansion only exists inside the binary-mode oracle paths.
//! Exact partition functions enumerate visible configurations and
//! marginalize the hiddens analytically.

use rand::Rng;

use crate::linalg::{log_sum_exp, sigmoid, softmax, softplus, Matrix};
use crate::{Error, Result};

/// Largest number of visible configurations the exact oracles will enumerate.
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// `n` groups of `k` one-hot binary units, so `V = n * k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoftmaxLayout {
    pub n: usize,
    pub k: usize,
}

impl SoftmaxLayout {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config(format!("softmax layout needs n, k >= 1 (got n={n}, k={k})")));
        }
        Ok(SoftmaxLayout { n, k })
    }

    pub fn visible_units(&self) -> usize {
        self.n * self.k
    }

    #[inline]
    pub fn unit(&self, group: usize, word: usize) -> usize {
        group * self.k + word
    }

    /// Number of distinct visible configurations, `k^n`.
    pub fn configurations(&self) -> u128 {
        (self.k as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleMode {
    Binary,
    Softmax(SoftmaxLayout),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VisibleState {
    Binary(Vec<bool>),
    Softmax(Vec<usize>),
}

impl VisibleState {
    /// Dense 0/1 expansion of length `V`.
    pub fn to_dense(&self, mode: VisibleMode) -> Vec<f64> {
        match (self, mode) {
            (VisibleState::Binary(bits), _) => bits.iter().map(|&b| b as u8 as f64).collect(),
            (VisibleState::Softmax(words), VisibleMode::Softmax(layout)) => {
                let mut out = vec![0.0; layout.visible_units()];
                for (i, &w) in words.iter().enumerate() {
                    out[layout.unit(i, w)] = 1.0;
                }
                out
            }
            (VisibleState::Softmax(words), VisibleMode::Binary) => {
                panic!("softmax state of {} groups used with a binary model", words.len())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenState(pub Vec<bool>);

impl HiddenState {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as u8 as f64).collect()
    }

    /// Decodes bit `j` of `bits` into unit `j`.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        HiddenState((0..len).map(|j| bits >> j & 1 == 1).collect())
    }

    pub fn sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Self {
        HiddenState(probs.iter().map(|&p| rng.random::<f64>() < p).collect())
    }
}

/// `E(v, h) = -b'v - c'h - h'Wv` with `W` of shape `H x V`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub mode: VisibleMode,
}

/// `E_{h|v}[dE/dtheta]` (or differences of such expectations).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(hidden: usize, mode: VisibleMode, binary_visible: usize) -> Self {
        let v = match mode {
            VisibleMode::Binary => binary_visible,
            VisibleMode::Softmax(l) => l.visible_units(),
        };
        RbmParams { w: Matrix::zeros(hidden, v), b: vec![0.0; v], c: vec![0.0; hidden], mode }
    }

    pub fn new(w: Matrix, b: Vec<f64>, c: Vec<f64>, mode: VisibleMode) -> Result<Self> {
        if w.rows() != c.len() || w.cols() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "W is {}x{}, b has {}, c has {}",
                w.rows(),
                w.cols(),
                b.len(),
                c.len()
            )));
        }
        if let VisibleMode::Softmax(l) = mode {
            if l.visible_units() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "layout {}x{} vs {} visible units",
                    l.n,
                    l.k,
                    b.len()
                )));
            }
        }
        let all_finite =
            w.as_slice().iter().chain(&b).chain(&c).all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(RbmParams { w, b, c, mode })
    }

    pub fn hidden(&self) -> usize {
        self.c.len()
    }

    pub fn visible(&self) -> usize {
        self.b.len()
    }

    fn layout(&self) -> Result<SoftmaxLayout> {
        match self.mode {
            VisibleMode::Softmax(l) => Ok(l),
            VisibleMode::Binary => Err(Error::DimensionMismatch("model has binary visibles".into())),
        }
    }

    pub fn check_visible(&self, v: &VisibleState) -> Result<()> {
        match (v, self.mode) {
            (VisibleState::Binary(bits), VisibleMode::Binary) if bits.len() == self.visible() => Ok(()),
            (VisibleState::Softmax(words), VisibleMode::Softmax(l)) if words.len() == l.n => {
                match words.iter().find(|&&w| w >= l.k) {
                    Some(&w) => Err(Error::IndexOutOfRange { index: w, size: l.k }),
                    None => Ok(()),
                }
            }
            _ => Err(Error::DimensionMismatch("visible state does not fit the model".into())),
        }
    }

    fn check_hidden(&self, h: &HiddenState) -> Result<()> {
        if h.len() != self.hidden() {
            return Err(Error::DimensionMismatch(format!(
                "hidden state has {} units, model has {}",
                h.len(),
                self.hidden()
            )));
        }
        Ok(())
    }

    /// Indices of the `1` visible units.
    fn active_visible(&self, v: &VisibleState) -> Vec<usize> {
        match (v, self.mode) {
            (VisibleState::Binary(bits), _) => {
                bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
            }
            (VisibleState::Softmax(words), VisibleMode::Softmax(l)) => {
                words.iter().enumerate().map(|(i, &w)| l.unit(i, w)).collect()
            }
            _ => unreachable!("checked by check_visible"),
        }
    }

    pub fn energy(&self, v: &VisibleState, h: &HiddenState) -> Result<f64> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        let on = self.active_visible(v);
        let mut e = -on.iter().map(|&i| self.b[i]).sum::<f64>();
        for j in h.active() {
            let row = self.w.row(j);
            e -= self.c[j] + on.iter().map(|&i| row[i]).sum::<f64>();
        }
        Ok(e)
    }

    /// `c_j + sum_i W_ji v_i` for every hidden unit.
    pub fn hidden_preactivation(&self, v: &VisibleState) -> Result<Vec<f64>> {
        self.check_visible(v)?;
        let on = self.active_visible(v);
        Ok((0..self.hidden())
            .map(|j| {
                let row = self.w.row(j);
                self.c[j] + on.iter().map(|&i| row[i]).sum::<f64>()
            })
            .collect())
    }

    pub fn hidden_conditional(&self, v: &VisibleState) -> Result<Vec<f64>> {
        Ok(self.hidden_preactivation(v)?.into_iter().map(sigmoid).collect())
    }

    /// Binary-mode `p(v_i = 1 | h)`.
    pub fn visible_conditional_binary(&self, h: &HiddenState) -> Result<Vec<f64>> {
        self.check_hidden(h)?;
        if self.mode != VisibleMode::Binary {
            return Err(Error::DimensionMismatch("model has softmax visibles".into()));
        }
        let mut act = self.b.clone();
        for j in h.active() {
            for (a, w) in act.iter_mut().zip(self.w.row(j)) {
                *a += w;
            }
        }
        Ok(act.into_iter().map(sigmoid).collect())
    }

    /// Unnormalized log-probability `b^(i)_k + h' W^(i) e_k` of word `k` in `group`.
    #[inline]
    pub fn group_score(&self, active_hidden: &[usize], group: usize, word: usize) -> f64 {
        let VisibleMode::Softmax(l) = self.mode else {
            panic!("group_score on a binary model");
        };
        let u = l.unit(group, word);
        self.b[u] + active_hidden.iter().map(|&j| self.w.get(j, u)).sum::<f64>()
    }

    /// Exact `p(v^(i) = e_k | h)` for all `k`. Costs O(K * H).
    pub fn softmax_conditional(&self, h: &HiddenState, group: usize) -> Result<Vec<f64>> {
        let l = self.layout()?;
        self.check_hidden(h)?;
        if group >= l.n {
            return Err(Error::IndexOutOfRange { index: group, size: l.n });
        }
        let active: Vec<usize> = h.active().collect();
        let logits: Vec<f64> = (0..l.k).map(|k| self.group_score(&active, group, k)).collect();
        Ok(softmax(&logits))
    }

    pub fn gibbs_hidden<R: Rng + ?Sized>(&self, v: &VisibleState, rng: &mut R) -> Result<HiddenState> {
        Ok(HiddenState::sample(&self.hidden_conditional(v)?, rng))
    }

    /// Exact block draw of all visibles given `h`.
    pub fn gibbs_visible_exact<R: Rng + ?Sized>(&self, h: &HiddenState, rng: &mut R) -> Result<VisibleState> {
        match self.mode {
            VisibleMode::Binary => {
                let p = self.visible_conditional_binary(h)?;
                Ok(VisibleState::Binary(p.iter().map(|&pi| rng.random::<f64>() < pi).collect()))
            }
            VisibleMode::Softmax(l) => {
                let words = (0..l.n)
                    .map(|i| Ok(sample_categorical(&self.softmax_conditional(h, i)?, rng)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(VisibleState::Softmax(words))
            }
        }
    }

    /// `F(v) = -b'v - sum_j softplus(c_j + W_j v)`, so `exp(-F(v)) = sum_h exp(-E(v,h))`.
    pub fn free_energy(&self, v: &VisibleState) -> Result<f64> {
        let bias: f64 = self.active_visible_checked(v)?.iter().map(|&i| self.b[i]).sum();
        let pre = self.hidden_preactivation(v)?;
        Ok(-bias - pre.into_iter().map(softplus).sum::<f64>())
    }

    fn active_visible_checked(&self, v: &VisibleState) -> Result<Vec<usize>> {
        self.check_visible(v)?;
        Ok(self.active_visible(v))
    }

    /// Every visible configuration, in lexicographic order.
    pub fn visible_configurations(&self) -> Result<Vec<VisibleState>> {
        match self.mode {
            VisibleMode::Binary => {
                let v = self.visible();
                check_enumerable(1u128.checked_shl(v as u32).unwrap_or(u128::MAX))?;
                Ok((0..1u64 << v)
                    .map(|bits| VisibleState::Binary((0..v).map(|i| bits >> i & 1 == 1).collect()))
                    .collect())
            }
            VisibleMode::Softmax(l) => {
                check_enumerable(l.configurations())?;
                Ok(enumerate_windows(l.n, l.k).into_iter().map(VisibleState::Softmax).collect())
            }
        }
    }

    /// `log Z`, enumerating visibles and summing hiddens in closed form.
    pub fn exact_log_partition(&self) -> Result<f64> {
        let neg_f = self
            .visible_configurations()?
            .iter()
            .map(|v| self.free_energy(v).map(|f| -f))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&neg_f))
    }

    /// `E_{h|v}[dE/dtheta]`, accumulated into `grad` with weight `weight`.
    pub fn accumulate_energy_gradient(&self, v: &VisibleState, weight: f64, grad: &mut RbmGradient) -> Result<()> {
        let on = self.active_visible_checked(v)?;
        let ph = self.hidden_conditional(v)?;
        for &i in &on {
            grad.b[i] -= weight;
        }
        for (j, &p) in ph.iter().enumerate() {
            grad.c[j] -= weight * p;
            let row = grad.w.row_mut(j);
            for &i in &on {
                row[i] -= weight * p;
            }
        }
        Ok(())
    }

    pub fn zero_gradient(&self) -> RbmGradient {
        RbmGradient {
            w: Matrix::zeros(self.hidden(), self.visible()),
            b: vec![0.0; self.visible()],
            c: vec![0.0; self.hidden()],
        }
    }

    /// Exact gradient of the mean negative log-likelihood of `data`.
    pub fn exact_nll_gradient(&self, data: &[VisibleState]) -> Result<RbmGradient> {
        if data.is_empty() {
            return Err(Error::Empty("no data".into()));
        }
        let mut g = self.zero_gradient();
        let wt = 1.0 / data.len() as f64;
        for v in data {
            self.accumulate_energy_gradient(v, wt, &mut g)?;
        }
        let configs = self.visible_configurations()?;
        let log_z = self.exact_log_partition()?;
        for v in &configs {
            let p = (-self.free_energy(v)? - log_z).exp();
            self.accumulate_energy_gradient(v, -p, &mut g)?;
        }
        Ok(g)
    }
}

fn check_enumerable(count: u128) -> Result<()> {
    if count > MAX_ENUMERATION {
        return Err(Error::StateSpaceTooLarge(format!(
            "{count} visible configurations exceeds {MAX_ENUMERATION}"
        )));
    }
    Ok(())
}

/// All `k^n` windows in lexicographic order (last position varies fastest).
pub fn enumerate_windows(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0usize; n];
    for _ in 0..total {
        out.push(cur.clone());
        for pos in (0..n).rev() {
            cur[pos] += 1;
            if cur[pos] < k {
                break;
            }
            cur[pos] = 0;
        }
    }
    out
}

/// Inverse-CDF draw; linear in the number of outcomes.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the final partial sum; return the last supported outcome.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn random_rbm(rng: &mut ChaCha8Rng, hidden: usize, mode: VisibleMode, binary_v: usize, scale: f64) -> RbmParams {
        let mut p = RbmParams::zeros(hidden, mode, binary_v);
        let normal = Normal::new(0.0, scale).unwrap();
        p.w.as_mut_slice().iter_mut().for_each(|x| *x = normal.sample(rng));
        p.b.iter_mut().for_each(|x| *x = normal.sample(rng));
        p.c.iter_mut().for_each(|x| *x = normal.sample(rng));
        p
    }

    /// `(v, h, exp(-E))` over the full joint space.
    pub(crate) fn joint_table(p: &RbmParams) -> Vec<(VisibleState, HiddenState, f64)> {
        let mut out = Vec::new();
        for v in p.visible_configurations().unwrap() {
            for bits in 0..1u64 << p.hidden() {
                let h = HiddenState::from_bits(bits, p.hidden());
                let e = p.energy(&v, &h).unwrap();
                out.push((v.clone(), h, (-e).exp()));
            }
        }
        out
    }

    #[test]
    fn energy_hand_example() {
        let p = RbmParams::new(Matrix::from_vec(1, 2, vec![2.0, 0.0]), vec![1.0, 0.0], vec![0.0], VisibleMode::Binary).unwrap();
        let e = p.energy(&VisibleState::Binary(vec![true, false]), &HiddenState(vec![true])).unwrap();
        assert_eq!(e, -3.0);
    }

    #[test]
    fn zero_params() {
        let l = SoftmaxLayout::new(2, 3).unwrap();
        let p = RbmParams::zeros(4, VisibleMode::Softmax(l), 0);
        let v = VisibleState::Softmax(vec![2, 0]);
        let h = HiddenState(vec![true, false, true, true]);
        assert_eq!(p.energy(&v, &h).unwrap(), 0.0);
        assert_eq!(p.hidden_conditional(&v).unwrap(), vec![0.5; 4]);
        for p_k in p.softmax_conditional(&h, 1).unwrap() {
            assert!((p_k - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((p.free_energy(&v).unwrap() + 4.0 * 2f64.ln()).abs() < 1e-12);
        let log_z = p.exact_log_partition().unwrap();
        assert!((log_z - (2.0 * 3f64.ln() + 4.0 * 2f64.ln())).abs() < 1e-12);

        let pb = RbmParams::zeros(3, VisibleMode::Binary, 4);
        assert!((pb.exact_log_partition().unwrap() - 7.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_outcome_softmax() {
        let l = SoftmaxLayout::new(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = random_rbm(&mut rng, 3, VisibleMode::Softmax(l), 0, 1.0);
        assert_eq!(p.softmax_conditional(&HiddenState(vec![true; 3]), 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn energy_linear_in_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_rbm(&mut rng, 3, VisibleMode::Binary, 4, 1.0);
        let mut p2 = p.clone();
        p2.b.iter_mut().for_each(|x| *x *= 2.0);
        let v = VisibleState::Binary(vec![true, false, true, true]);
        let h = HiddenState(vec![false, true, true]);
        let diff = p2.energy(&v, &h).unwrap() - p.energy(&v, &h).unwrap();
        let btv = p.b[0] + p.b[2] + p.b[3];
        assert!((diff + btv).abs() < 1e-12);
    }

    #[test]
    fn conditionals_match_joint_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [VisibleMode::Binary, VisibleMode::Softmax(SoftmaxLayout::new(2, 3).unwrap())] {
            let p = random_rbm(&mut rng, 4, mode, 4, 1.0);
            let table = joint_table(&p);
            for v in p.visible_configurations().unwrap() {
                let rows: Vec<_> = table.iter().filter(|r| r.0 == v).collect();
                let pv: f64 = rows.iter().map(|r| r.2).sum();
                let ph = p.hidden_conditional(&v).unwrap();
                for (j, &pj) in ph.iter().enumerate() {
                    let num: f64 = rows.iter().filter(|r| r.1 .0[j]).map(|r| r.2).sum();
                    assert!((num / pv - pj).abs() < 1e-10);
                }
                assert!(((-p.free_energy(&v).unwrap()).exp() / pv - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn softmax_conditional_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = SoftmaxLayout::new(2, 7).unwrap();
        let p = random_rbm(&mut rng, 3, VisibleMode::Softmax(l), 0, 1.5);
        let h = HiddenState(vec![true, false, true]);
        let got = p.softmax_conditional(&h, 1).unwrap();
        let raw: Vec<f64> = (0..7)
            .map(|k| (p.b[7 + k] + p.w.get(0, 7 + k) + p.w.get(2, 7 + k)).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        for k in 0..7 {
            assert!((got[k] - raw[k] / z).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut shifted = p.clone();
        (7..14).for_each(|u| shifted.b[u] += 40.0);
        let again = shifted.softmax_conditional(&h, 1).unwrap();
        assert!(got.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn softmax_energy_matches_binary_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = SoftmaxLayout::new(3, 4).unwrap();
        let p = random_rbm(&mut rng, 5, VisibleMode::Softmax(l), 0, 1.0);
        let bin = RbmParams { mode: VisibleMode::Binary, ..p.clone() };
        let v = VisibleState::Softmax(vec![3, 0, 2]);
        let dense: Vec<bool> = v.to_dense(p.mode).iter().map(|&x| x == 1.0).collect();
        let h = HiddenState(vec![true, true, false, true, false]);
        assert_eq!(p.energy(&v, &h).unwrap(), bin.energy(&VisibleState::Binary(dense), &h).unwrap());
    }

    #[test]
    fn log_partition_matches_double_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [VisibleMode::Binary, VisibleMode::Softmax(SoftmaxLayout::new(2, 4).unwrap())] {
            let p = random_rbm(&mut rng, 5, mode, 5, 0.8);
            let z: f64 = joint_table(&p).iter().map(|r| r.2).sum();
            assert!((p.exact_log_partition().unwrap() - z.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn hidden_gibbs_frequencies() {
        // 3 sd of a Bernoulli(0.5) mean over 1e5 draws is 0.0047.
        let p = RbmParams::zeros(4, VisibleMode::Binary, 3);
        let v = VisibleState::Binary(vec![true, false, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws = 100_000;
        let mut on = [0usize; 4];
        for _ in 0..draws {
            for j in p.gibbs_hidden(&v, &mut rng).unwrap().active() {
                on[j] += 1;
            }
        }
        for c in on {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 0.0048);
        }

        let mut fixed = p.clone();
        fixed.c = vec![30.0, -30.0, 30.0, -30.0];
        for _ in 0..1000 {
            assert_eq!(fixed.gibbs_hidden(&v, &mut rng).unwrap().0, vec![true, false, true, false]);
        }
    }

    #[test]
    fn softmax_gibbs_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = SoftmaxLayout::new(1, 5).unwrap();
        let p = random_rbm(&mut rng, 3, VisibleMode::Softmax(l), 0, 1.0);
        let h = HiddenState(vec![true, false, true]);
        let probs = p.softmax_conditional(&h, 0).unwrap();
        let draws = 100_000;
        let mut counts = [0f64; 5];
        for _ in 0..draws {
            let VisibleState::Softmax(w) = p.gibbs_visible_exact(&h, &mut rng).unwrap() else { unreachable!() };
            counts[w[0]] += 1.0;
        }
        let chi2: f64 = (0..5)
            .map(|k| {
                let e = probs[k] * draws as f64;
                (counts[k] - e).powi(2) / e
            })
            .sum();
        // 4 dof, upper 1e-3 quantile
        assert!(chi2 < 18.467, "chi2 {chi2}");
    }

    #[test]
    fn errors() {
        let l = SoftmaxLayout::new(2, 3).unwrap();
        let p = RbmParams::zeros(2, VisibleMode::Softmax(l), 0);
        assert!(p.energy(&VisibleState::Softmax(vec![0, 3]), &HiddenState(vec![false; 2])).is_err());
        assert!(p.energy(&VisibleState::Softmax(vec![0]), &HiddenState(vec![false; 2])).is_err());
        assert!(p.energy(&VisibleState::Softmax(vec![0, 1]), &HiddenState(vec![false; 3])).is_err());
        let big = RbmParams::zeros(1, VisibleMode::Softmax(SoftmaxLayout::new(8, 10).unwrap()), 0);
        assert!(matches!(big.exact_log_partition(), Err(Error::StateSpaceTooLarge(_))));
        assert!(RbmParams::new(Matrix::zeros(2, 3), vec![0.0; 2], vec![0.0; 2], VisibleMode::Binary).is_err());
    }

    #[test]
    fn enumeration_order() {
        assert_eq!(enumerate_windows(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(enumerate_windows(3, 3).len(), 27);
    }
}

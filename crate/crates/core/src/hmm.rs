//! Discrete hidden Markov models: scoring with the scaled forward algorithm,
//! Viterbi and posterior decoding, and Baum-Welch re-estimation with random
//! restarts.
//!
//! Matrices are stored row-major in flat vectors: `a[i * n + j]` is the
//! probability of moving from state `i` to state `j`, `b[i * m + k]` the
//! probability of emitting symbol `k` in state `i`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive_indexed, rng_from_seed};

/// Row sums of every stochastic vector must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Re-estimated entries below this are raised to it before renormalizing.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmRepr", into = "HmmRepr")]
pub struct HmmModel {
    n: usize,
    m: usize,
    pi: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HmmRepr {
    n: usize,
    m: usize,
    pi: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl TryFrom<HmmRepr> for HmmModel {
    type Error = Error;
    fn try_from(r: HmmRepr) -> Result<Self> {
        let model = HmmModel::new(r.pi, r.a, r.b)?;
        if model.n != r.n || model.m != r.m {
            return Err(Error::BadModel("declared N/M disagree with matrix shapes".into()));
        }
        Ok(model)
    }
}

impl From<HmmModel> for HmmRepr {
    fn from(h: HmmModel) -> Self {
        HmmRepr {
            n: h.n,
            m: h.m,
            a: h.a.chunks(h.n).map(<[f64]>::to_vec).collect(),
            b: h.b.chunks(h.m).map(<[f64]>::to_vec).collect(),
            pi: h.pi,
        }
    }
}

fn check_row(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::BadModel(alloc::format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::BadModel(alloc::format!("{what} sums to {sum}")));
    }
    Ok(())
}

fn normalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
}

fn floor_and_normalize(row: &mut [f64]) {
    for p in row.iter_mut() {
        if *p < PROBABILITY_FLOOR {
            *p = PROBABILITY_FLOOR;
        }
    }
    normalize(row);
}

impl HmmModel {
    /// Builds a model from nested rows, checking shapes and stochasticity.
    pub fn new(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let n = pi.len();
        if n == 0 || a.len() != n || b.len() != n {
            return Err(Error::BadModel("pi, A and B must all have N rows".into()));
        }
        let m = b[0].len();
        if a.iter().any(|r| r.len() != n) || b.iter().any(|r| r.len() != m) {
            return Err(Error::BadModel("ragged A or B".into()));
        }
        Self::from_flat(n, m, pi, a.concat(), b.concat())
    }

    pub fn from_flat(n: usize, m: usize, pi: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 || pi.len() != n || a.len() != n * n || b.len() != n * m {
            return Err(Error::BadModel(alloc::format!("shape mismatch for N={n}, M={m}")));
        }
        let model = Self { n, m, pi, a, b };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        check_row("pi", &self.pi)?;
        for i in 0..self.n {
            check_row(&alloc::format!("A row {i}"), self.a_row(i))?;
            check_row(&alloc::format!("B row {i}"), self.b_row(i))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn b(&self, i: usize, k: usize) -> f64 {
        self.b[i * self.m + k]
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn b_row(&self, i: usize) -> &[f64] {
        &self.b[i * self.m..(i + 1) * self.m]
    }

    /// Column `k` of B: the emission probability of symbol `k` in each state.
    pub fn b_column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.b(i, k)).collect()
    }

    /// Relabels hidden states: new state `s` is old state `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<HmmModel> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::BadArgument("not a permutation of the hidden states".into()));
        }
        let pi = perm.iter().map(|&p| self.pi[p]).collect();
        let mut a = Vec::with_capacity(n * n);
        for &pi_ in perm {
            for &pj in perm {
                a.push(self.a(pi_, pj));
            }
        }
        let b = perm.iter().flat_map(|&p| self.b_row(p).iter().copied()).collect();
        Ok(HmmModel { n, m: self.m, pi, a, b })
    }

    fn check_obs(&self, obs: &[usize]) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&bad) = obs.iter().find(|&&o| o >= self.m) {
            return Err(Error::BadArgument(alloc::format!("symbol {bad} outside M={}", self.m)));
        }
        Ok(())
    }

    /// Draws a (state path, observation) pair of length `len`.
    pub fn sample(&self, len: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = rng_from_seed(seed);
        let mut pick = |row: &[f64]| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            row.len() - 1
        };
        let mut states = Vec::with_capacity(len);
        let mut obs = Vec::with_capacity(len);
        if len == 0 {
            return (states, obs);
        }
        let mut s = pick(&self.pi);
        for t in 0..len {
            if t > 0 {
                s = pick(self.a_row(s));
            }
            states.push(s);
            obs.push(pick(self.b_row(s)));
        }
        (states, obs)
    }
}

/// Random near-uniform model.
///
/// Every entry starts at `1/len` for its row and is perturbed by a centered
/// uniform offset, so each entry stays within ±20% of uniform and rows sum
/// to one without rescaling.
pub fn init_random(n: usize, m: usize, seed: u64) -> Result<HmmModel> {
    if n < 1 {
        return Err(Error::BadArgument("N must be at least 1".into()));
    }
    if m < 2 {
        return Err(Error::BadArgument("M must be at least 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut row = |len: usize| -> Vec<f64> {
        let u: Vec<f64> = (0..len).map(|_| rng.random_range(-0.1..0.1)).collect();
        let mean = u.iter().sum::<f64>() / len as f64;
        let mut r: Vec<f64> = u.iter().map(|x| (1.0 + x - mean) / len as f64).collect();
        normalize(&mut r);
        r
    };
    let pi = row(n);
    let a = (0..n).flat_map(|_| row(n)).collect();
    let b = (0..n).flat_map(|_| row(m)).collect();
    HmmModel::from_flat(n, m, pi, a, b)
}

/// Running logs of `L` products of factors in (0, 1], taking a logarithm
/// only when a partial product nears underflow.
struct LogProducts<const L: usize> {
    log: [f64; L],
    partial: [f64; L],
}

impl<const L: usize> LogProducts<L> {
    const FOLD_BELOW: f64 = 1e-250;

    fn new() -> Self {
        Self { log: [0.0; L], partial: [1.0; L] }
    }

    #[inline(always)]
    fn push(&mut self, factors: &[f64; L]) {
        mul_assign(&mut self.partial, factors);
        if self.partial.iter().any(|&p| p < Self::FOLD_BELOW) {
            for (log, partial) in self.log.iter_mut().zip(&mut self.partial) {
                if *partial < Self::FOLD_BELOW {
                    *log += math::ln(*partial);
                    *partial = 1.0;
                }
            }
        }
    }

    fn finish(&self, l: usize) -> f64 {
        self.log[l] + math::ln(self.partial[l])
    }
}

#[inline(always)]
fn mul_assign<const L: usize>(x: &mut [f64; L], y: &[f64; L]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a *= b;
    }
}

/// `acc += x * y` lane-wise.
#[inline(always)]
fn mul_add<const L: usize>(acc: &mut [f64; L], x: &[f64; L], y: &[f64; L]) {
    for ((a, b), c) in acc.iter_mut().zip(x).zip(y) {
        *a += b * c;
    }
}

#[inline(always)]
fn mul<const L: usize>(x: &[f64; L], y: &[f64; L]) -> [f64; L] {
    core::array::from_fn(|l| x[l] * y[l])
}

/// Parameters of `L` models of equal shape, interleaved so that lane `l` of
/// every entry belongs to model `l`. Each lane runs exactly the arithmetic of
/// a lone model; grouping only lets independent runs overlap.
struct Lanes<const L: usize> {
    n: usize,
    m: usize,
    pi: Vec<[f64; L]>,
    a: Vec<[f64; L]>,
    /// Transitions grouped by target: `at[j * n + i]` holds A[i][j].
    at: Vec<[f64; L]>,
    /// Emissions grouped by symbol: `bt[k * n + i]` holds B[i][k].
    bt: Vec<[f64; L]>,
}

impl<const L: usize> Lanes<L> {
    fn pack(models: &[HmmModel]) -> Self {
        debug_assert_eq!(models.len(), L);
        let (n, m) = (models[0].n, models[0].m);
        let gather = |len: usize, get: &dyn Fn(&HmmModel, usize) -> f64| -> Vec<[f64; L]> {
            (0..len).map(|x| core::array::from_fn(|l| get(&models[l], x))).collect()
        };
        Self {
            n,
            m,
            pi: gather(n, &|h, i| h.pi[i]),
            a: gather(n * n, &|h, x| h.a[x]),
            at: gather(n * n, &|h, x| h.a[(x % n) * n + x / n]),
            bt: gather(m * n, &|h, x| h.b[(x % n) * m + x / n]),
        }
    }
}

/// Scaled forward pass for every lane. Fills `alpha` (T x N, each row
/// normalized) and `scale` (reciprocals of the per-step normalizers) and
/// returns log P(O|model) per lane, `-inf` where some prefix has probability
/// zero.
fn forward_lanes<const L: usize>(
    p: &Lanes<L>,
    obs: &[usize],
    alpha: &mut Vec<[f64; L]>,
    scale: &mut Vec<[f64; L]>,
) -> [f64; L] {
    match p.n {
        2 => forward_lanes_2(p, obs, alpha, scale),
        n => forward_lanes_n(n, p, obs, alpha, scale),
    }
}

#[inline(always)]
fn forward_lanes_n<const L: usize>(
    n: usize,
    p: &Lanes<L>,
    obs: &[usize],
    alpha: &mut Vec<[f64; L]>,
    scale: &mut Vec<[f64; L]>,
) -> [f64; L] {
    let t_len = obs.len();
    alpha.clear();
    alpha.resize(t_len * n, [0.0; L]);
    scale.clear();
    scale.resize(t_len, [0.0; L]);
    let mut logs = LogProducts::<L>::new();
    let mut dead = [false; L];

    let (first, rest) = alpha.split_at_mut(n);
    let b0 = &p.bt[obs[0] * n..(obs[0] + 1) * n];
    let mut sum = [0.0; L];
    for ((slot, pi), b) in first.iter_mut().zip(&p.pi).zip(b0) {
        *slot = mul(pi, b);
        for (s, v) in sum.iter_mut().zip(slot.iter()) {
            *s += v;
        }
    }
    normalize_step(first, &mut scale[0], &sum, &mut logs, &mut dead);

    let mut prev: &[[f64; L]] = first;
    for ((cur, &ot), c) in rest.chunks_exact_mut(n).zip(&obs[1..]).zip(&mut scale[1..]) {
        let bcol = &p.bt[ot * n..(ot + 1) * n];
        let mut sum = [0.0; L];
        for ((slot, at_col), b) in cur.iter_mut().zip(p.at.chunks_exact(n)).zip(bcol) {
            let mut acc = [0.0; L];
            for (pr, a) in prev.iter().zip(at_col) {
                mul_add(&mut acc, pr, a);
            }
            *slot = mul(&acc, b);
            for (s, v) in sum.iter_mut().zip(slot.iter()) {
                *s += v;
            }
        }
        normalize_step(cur, c, &sum, &mut logs, &mut dead);
        prev = cur;
    }
    core::array::from_fn(|l| if dead[l] { f64::NEG_INFINITY } else { logs.finish(l) })
}

#[inline(always)]
fn normalize_step<const L: usize>(
    row: &mut [[f64; L]],
    scale: &mut [f64; L],
    sum: &[f64; L],
    logs: &mut LogProducts<L>,
    dead: &mut [bool; L],
) {
    for ((c, &s), d) in scale.iter_mut().zip(sum).zip(dead.iter_mut()) {
        let ok = s > 0.0;
        *d |= !ok;
        *c = if ok { 1.0 / s } else { 1.0 };
    }
    logs.push(sum);
    for v in row.iter_mut() {
        mul_assign(v, scale);
    }
}
#[inline(always)]
fn rescale2<const L: usize>(
    x0: &mut [f64; L],
    x1: &mut [f64; L],
    sum: &[f64; L],
    scale: &mut [f64; L],
    dead: &mut [bool; L],
) {
    for l in 0..L {
        let ok = sum[l] > 0.0;
        dead[l] |= !ok;
        scale[l] = if ok { 1.0 / sum[l] } else { 1.0 };
        x0[l] *= scale[l];
        x1[l] *= scale[l];
    }
}

/// Forward pass specialized to two states.
#[inline(always)]
fn forward_lanes_2<const L: usize>(
    p: &Lanes<L>,
    obs: &[usize],
    alpha: &mut Vec<[f64; L]>,
    scale: &mut Vec<[f64; L]>,
) -> [f64; L] {
    let t_len = obs.len();
    alpha.clear();
    alpha.resize(t_len * 2, [0.0; L]);
    scale.clear();
    scale.resize(t_len, [0.0; L]);
    let mut logs = LogProducts::<L>::new();
    let mut dead = [false; L];
    let (a00, a01, a10, a11) = (p.a[0], p.a[1], p.a[2], p.a[3]);

    let (b0, b1) = (&p.bt[2 * obs[0]], &p.bt[2 * obs[0] + 1]);
    let mut x0 = mul(&p.pi[0], b0);
    let mut x1 = mul(&p.pi[1], b1);
    let sum: [f64; L] = core::array::from_fn(|l| x0[l] + x1[l]);
    rescale2(&mut x0, &mut x1, &sum, &mut scale[0], &mut dead);
    logs.push(&sum);
    alpha[0] = x0;
    alpha[1] = x1;

    for ((row, &ot), sc) in alpha[2..].chunks_exact_mut(2).zip(&obs[1..]).zip(&mut scale[1..]) {
        let (b0, b1) = (&p.bt[2 * ot], &p.bt[2 * ot + 1]);
        let mut sum = [0.0; L];
        for l in 0..L {
            let y0 = (x0[l] * a00[l] + x1[l] * a10[l]) * b0[l];
            let y1 = (x0[l] * a01[l] + x1[l] * a11[l]) * b1[l];
            x0[l] = y0;
            x1[l] = y1;
            sum[l] = y0 + y1;
        }
        rescale2(&mut x0, &mut x1, &sum, sc, &mut dead);
        logs.push(&sum);
        row[0] = x0;
        row[1] = x1;
    }
    core::array::from_fn(|l| if dead[l] { f64::NEG_INFINITY } else { logs.finish(l) })
}

/// E-step specialized to two states.
#[inline(always)]
fn expectation_2<const L: usize>(p: &Lanes<L>, obs: &[usize], ws: &mut Workspace<L>) -> [f64; L] {
    let m = p.m;
    let t_len = obs.len();
    let log_p = forward_lanes_2(p, obs, &mut ws.alpha, &mut ws.scale);
    for v in ws.b_num.iter_mut() {
        *v = [0.0; L];
    }
    let (a00, a01, a10, a11) = (p.a[0], p.a[1], p.a[2], p.a[3]);
    let mut num = [[0.0; L]; 4];
    let mut gsum = [[0.0; L]; 2];

    let o_last = obs[t_len - 1];
    let last = [ws.alpha[2 * t_len - 2], ws.alpha[2 * t_len - 1]];
    for (i, a) in last.iter().enumerate() {
        for (acc, v) in ws.b_num[i * m + o_last].iter_mut().zip(a) {
            *acc += v;
        }
    }
    let mut beta0 = ws.scale[t_len - 1];
    let mut beta1 = beta0;

    for t in (0..t_len - 1).rev() {
        let o_next = obs[t + 1];
        let ot = obs[t];
        let c = ws.scale[t];
        let (b0, b1) = (&p.bt[2 * o_next], &p.bt[2 * o_next + 1]);
        let (al0, al1) = (ws.alpha[2 * t], ws.alpha[2 * t + 1]);
        let mut g0 = [0.0; L];
        let mut g1 = [0.0; L];
        for l in 0..L {
            let w0 = b0[l] * beta0[l];
            let w1 = b1[l] * beta1[l];
            let x00 = a00[l] * w0;
            let x01 = a01[l] * w1;
            let x10 = a10[l] * w0;
            let x11 = a11[l] * w1;
            let s0 = x00 + x01;
            let s1 = x10 + x11;
            num[0][l] += al0[l] * x00;
            num[1][l] += al0[l] * x01;
            num[2][l] += al1[l] * x10;
            num[3][l] += al1[l] * x11;
            g0[l] = al0[l] * s0;
            g1[l] = al1[l] * s1;
            gsum[0][l] += g0[l];
            gsum[1][l] += g1[l];
            beta0[l] = s0 * c[l];
            beta1[l] = s1 * c[l];
        }
        for (acc, g) in ws.b_num[ot].iter_mut().zip(&g0) {
            *acc += g;
        }
        for (acc, g) in ws.b_num[m + ot].iter_mut().zip(&g1) {
            *acc += g;
        }
        if t == 0 {
            ws.pi_num[0] = g0;
            ws.pi_num[1] = g1;
        }
    }
    if t_len == 1 {
        ws.pi_num.copy_from_slice(&last);
    }
    ws.a_num.copy_from_slice(&num);
    ws.gamma_sum.copy_from_slice(&gsum);
    log_p
}

/// Single-model forward pass: (log P(O|model), alpha, scale).
fn forward(model: &HmmModel, obs: &[usize]) -> (f64, Vec<f64>, Vec<f64>) {
    let lanes = Lanes::<1>::pack(core::slice::from_ref(model));
    let mut alpha = Vec::new();
    let mut scale = Vec::new();
    let [log_p] = forward_lanes(&lanes, obs, &mut alpha, &mut scale);
    (log_p, alpha.into_iter().map(|[v]| v).collect(), scale.into_iter().map(|[v]| v).collect())
}
/// log P(O | model) via the scaled forward algorithm.
///
/// Returns `f64::NEG_INFINITY` when the observations are impossible under the
/// model (possible only for models with zero entries).
pub fn score(model: &HmmModel, obs: &[usize]) -> Result<f64> {
    model.check_obs(obs)?;
    Ok(forward(model, obs).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Single most probable state path (Viterbi).
    Dp,
    /// Most probable state at each position taken separately.
    Posterior,
}

pub fn decode(model: &HmmModel, obs: &[usize], mode: DecodeMode) -> Result<Vec<usize>> {
    model.check_obs(obs)?;
    match mode {
        DecodeMode::Dp => viterbi(model, obs).map(|(path, _)| path),
        DecodeMode::Posterior => {
            let gamma = posteriors(model, obs)?;
            Ok(gamma
                .chunks(model.n)
                .map(argmax_first)
                .collect())
        }
    }
}

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        math::ln(p)
    } else {
        f64::NEG_INFINITY
    }
}

/// Viterbi path and its log joint probability log P(X, O).
pub fn viterbi(model: &HmmModel, obs: &[usize]) -> Result<(Vec<usize>, f64)> {
    model.check_obs(obs)?;
    let n = model.n;
    let t_len = obs.len();
    let log_a: Vec<f64> = model.a.iter().map(|&p| ln_or_neg_inf(p)).collect();
    let log_b: Vec<f64> = model.b.iter().map(|&p| ln_or_neg_inf(p)).collect();
    let mut delta: Vec<f64> = (0..n).map(|i| ln_or_neg_inf(model.pi[i]) + log_b[i * model.m + obs[0]]).collect();
    let mut back = vec![0usize; t_len * n];
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            let mut best_i = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, &d) in delta.iter().enumerate() {
                let v = d + log_a[i * n + j];
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            back[t * n + j] = best_i;
            next[j] = best + log_b[j * model.m + obs[t]];
        }
        core::mem::swap(&mut delta, &mut next);
    }
    let last = argmax_first(&delta);
    let log_p = delta[last];
    if log_p == f64::NEG_INFINITY {
        return Err(Error::Undecodable);
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * n + path[t]];
    }
    Ok((path, log_p))
}

/// Per-position state posteriors P(X_t = i | O), as a T x N row-major matrix.
pub fn posteriors(model: &HmmModel, obs: &[usize]) -> Result<Vec<f64>> {
    model.check_obs(obs)?;
    let n = model.n;
    let m = model.m;
    let (log_p, alpha, scale) = forward(model, obs);
    if log_p == f64::NEG_INFINITY {
        return Err(Error::Undecodable);
    }
    let t_len = obs.len();
    let mut gamma = alpha.clone();
    let mut beta = vec![scale[t_len - 1]; n];
    let mut prev_beta = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        let o_next = obs[t + 1];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += model.a[i * n + j] * model.b[j * m + o_next] * beta[j];
            }
            prev_beta[i] = acc * scale[t];
        }
        core::mem::swap(&mut beta, &mut prev_beta);
        let row = &mut gamma[t * n..(t + 1) * n];
        for i in 0..n {
            row[i] *= beta[i] / scale[t];
        }
        normalize(row);
    }
    Ok(gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaumWelchParams {
    pub max_iters: usize,
    /// Training stops once an iteration improves log P(O|model) by less than this.
    pub min_improvement: f64,
}

impl Default for BaumWelchParams {
    fn default() -> Self {
        Self { max_iters: 100, min_improvement: 1e-3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// log P(O|model) before the first re-estimation and after each one.
    pub log_likelihoods: Vec<f64>,
    /// Number of re-estimation steps applied.
    pub iterations: usize,
    /// Index of the restart that produced the returned model.
    pub restart: usize,
}

impl TrainingTrace {
    pub fn initial_log_likelihood(&self) -> f64 {
        self.log_likelihoods.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihoods.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Reusable buffers for a group of lock-stepped Baum-Welch runs.
struct Workspace<const L: usize> {
    alpha: Vec<[f64; L]>,
    scale: Vec<[f64; L]>,
    beta: Vec<[f64; L]>,
    beta_prev: Vec<[f64; L]>,
    weighted: Vec<[f64; L]>,
    pi_num: Vec<[f64; L]>,
    a_num: Vec<[f64; L]>,
    gamma_sum: Vec<[f64; L]>,
    b_num: Vec<[f64; L]>,
}

impl<const L: usize> Workspace<L> {
    fn new(n: usize, m: usize, t_len: usize) -> Self {
        Self {
            alpha: Vec::with_capacity(t_len * n),
            scale: Vec::with_capacity(t_len),
            beta: vec![[0.0; L]; n],
            beta_prev: vec![[0.0; L]; n],
            weighted: vec![[0.0; L]; n],
            pi_num: vec![[0.0; L]; n],
            a_num: vec![[0.0; L]; n * n],
            gamma_sum: vec![[0.0; L]; n],
            b_num: vec![[0.0; L]; n * m],
        }
    }
}

/// One E-step for every lane: scores the models and accumulates expected
/// counts in `ws`.
fn expectation<const L: usize>(p: &Lanes<L>, obs: &[usize], ws: &mut Workspace<L>) -> [f64; L] {
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { expectation_avx2(p, obs, ws) };
    }
    expectation_portable(p, obs, ws)
}

/// Same arithmetic as the portable path, compiled with wider vectors.
#[cfg(all(feature = "std", target_arch = "x86_64"))]
#[target_feature(enable = "avx2")]
unsafe fn expectation_avx2<const L: usize>(p: &Lanes<L>, obs: &[usize], ws: &mut Workspace<L>) -> [f64; L] {
    expectation_portable(p, obs, ws)
}

#[inline(always)]
fn expectation_portable<const L: usize>(p: &Lanes<L>, obs: &[usize], ws: &mut Workspace<L>) -> [f64; L] {
    match p.n {
        2 => expectation_2(p, obs, ws),
        n => expectation_n(n, p, obs, ws),
    }
}

#[inline(always)]
fn expectation_n<const L: usize>(n: usize, p: &Lanes<L>, obs: &[usize], ws: &mut Workspace<L>) -> [f64; L] {
    let m = p.m;
    let t_len = obs.len();
    let log_p = forward_lanes_n(n, p, obs, &mut ws.alpha, &mut ws.scale);
    for v in ws.a_num.iter_mut().chain(&mut ws.gamma_sum).chain(&mut ws.b_num) {
        *v = [0.0; L];
    }

    // Last position: gamma equals the normalized alpha.
    let last = &ws.alpha[(t_len - 1) * n..];
    let o_last = obs[t_len - 1];
    for (i, (beta, a)) in ws.beta.iter_mut().zip(last).enumerate() {
        for (num, v) in ws.b_num[i * m + o_last].iter_mut().zip(a) {
            *num += v;
        }
        *beta = ws.scale[t_len - 1];
    }

    for t in (0..t_len - 1).rev() {
        let o_next = obs[t + 1];
        let ot = obs[t];
        let c = &ws.scale[t];
        let bcol = &p.bt[o_next * n..(o_next + 1) * n];
        for ((w, b), beta) in ws.weighted.iter_mut().zip(bcol).zip(&ws.beta) {
            *w = mul(b, beta);
        }
        let alpha_t = &ws.alpha[t * n..(t + 1) * n];
        let rows = p
            .a
            .chunks_exact(n)
            .zip(ws.a_num.chunks_exact_mut(n))
            .zip(alpha_t)
            .zip(ws.gamma_sum.iter_mut())
            .zip(ws.beta_prev.iter_mut());
        for (i, ((((a_row, num_row), ai), gamma_sum), beta_prev)) in rows.enumerate() {
            let mut s = [0.0; L];
            for ((num, a), w) in num_row.iter_mut().zip(a_row).zip(&ws.weighted) {
                let x = mul(a, w);
                for l in 0..L {
                    s[l] += x[l];
                }
                mul_add(num, ai, &x);
            }
            let gamma = mul(ai, &s);
            for l in 0..L {
                gamma_sum[l] += gamma[l];
                ws.b_num[i * m + ot][l] += gamma[l];
            }
            *beta_prev = mul(&s, c);
            if t == 0 {
                ws.pi_num[i] = gamma;
            }
        }
        core::mem::swap(&mut ws.beta, &mut ws.beta_prev);
    }
    if t_len == 1 {
        ws.pi_num.copy_from_slice(last);
    }
    log_p
}
/// Builds lane `l`'s re-estimated model from the accumulated counts.
fn maximization<const L: usize>(model: &HmmModel, ws: &Workspace<L>, l: usize) -> HmmModel {
    let n = model.n;
    let m = model.m;
    let mut pi: Vec<f64> = ws.pi_num.iter().map(|v| v[l]).collect();
    floor_and_normalize(&mut pi);
    let mut a: Vec<f64> = ws.a_num.iter().map(|v| v[l]).collect();
    for (i, row) in a.chunks_mut(n).enumerate() {
        let denom = ws.gamma_sum[i][l];
        if denom > 0.0 {
            row.iter_mut().for_each(|v| *v /= denom);
        } else {
            row.copy_from_slice(model.a_row(i));
        }
        floor_and_normalize(row);
    }
    let mut b: Vec<f64> = ws.b_num.iter().map(|v| v[l]).collect();
    for (i, row) in b.chunks_mut(m).enumerate() {
        let denom: f64 = row.iter().sum();
        if denom > 0.0 {
            row.iter_mut().for_each(|v| *v /= denom);
        } else {
            row.copy_from_slice(model.b_row(i));
        }
        floor_and_normalize(row);
    }
    HmmModel { n, m, pi, a, b }
}

type Trained = Result<(HmmModel, TrainingTrace)>;

fn baum_welch_group<const L: usize>(models: &[HmmModel], obs: &[usize], params: &BaumWelchParams) -> Vec<Trained> {
    let (n, m) = (models[0].n, models[0].m);
    let mut ws = Workspace::<L>::new(n, m, obs.len());
    let mut current = models.to_vec();
    let mut traces = vec![TrainingTrace::default(); L];
    let mut results: Vec<Option<Trained>> = (0..L).map(|_| None).collect();
    loop {
        let lanes = Lanes::<L>::pack(&current);
        let log_p = expectation(&lanes, obs, &mut ws);
        for l in 0..L {
            if results[l].is_some() {
                continue;
            }
            let trace = &mut traces[l];
            if !log_p[l].is_finite() {
                results[l] = Some(Err(Error::TrainingDiverged(alloc::format!(
                    "log-likelihood became {} after {} iteration(s)",
                    log_p[l],
                    trace.iterations
                ))));
                continue;
            }
            let previous = trace.log_likelihoods.last().copied();
            trace.log_likelihoods.push(log_p[l]);
            let stalled = previous.is_some_and(|prev| log_p[l] - prev < params.min_improvement);
            if stalled || trace.iterations >= params.max_iters {
                results[l] = Some(Ok((current[l].clone(), core::mem::take(trace))));
                continue;
            }
            current[l] = maximization(&current[l], &ws, l);
            trace.iterations += 1;
        }
        if results.iter().all(Option::is_some) {
            break;
        }
    }
    results.into_iter().map(|r| r.expect("every lane finished")).collect()
}

/// Upper bound on the forward-variable buffer shared by a group of runs.
const GROUP_BYTES: usize = 128 << 20;

/// Baum-Welch from each of `models` on the same observations. Results match
/// independent `baum_welch` calls exactly; runs are grouped to overlap work.
pub fn baum_welch_many(models: &[HmmModel], obs: &[usize], params: &BaumWelchParams) -> Result<Vec<Trained>> {
    let Some(first) = models.first() else {
        return Ok(Vec::new());
    };
    for model in models {
        if model.n != first.n || model.m != first.m {
            return Err(Error::BadArgument("models in a group must share their shape".into()));
        }
        model.check_obs(obs)?;
    }
    if obs.len() < 2 {
        return Err(Error::BadArgument("Baum-Welch needs at least 2 observations".into()));
    }
    let per_lane = obs.len() * first.n * core::mem::size_of::<f64>();
    let widest = (GROUP_BYTES / per_lane.max(1)).max(1);
    let mut out = Vec::with_capacity(models.len());
    let mut rest = models;
    while !rest.is_empty() {
        let width = [4, 2, 1].into_iter().find(|&w| w <= rest.len() && w <= widest).unwrap_or(1);
        let (group, tail) = rest.split_at(width);
        out.extend(match width {
            4 => baum_welch_group::<4>(group, obs, params),
            2 => baum_welch_group::<2>(group, obs, params),
            _ => baum_welch_group::<1>(group, obs, params),
        });
        rest = tail;
    }
    Ok(out)
}

/// Baum-Welch re-estimation starting from `model`.
///
/// Stops after `max_iters` re-estimations or as soon as an iteration gains
/// less than `min_improvement` in log-likelihood. The returned model is the
/// last one scored, i.e. the one whose score ends the trace.
pub fn baum_welch(model: &HmmModel, obs: &[usize], params: &BaumWelchParams) -> Trained {
    baum_welch_many(core::slice::from_ref(model), obs, params)?
        .pop()
        .expect("one model in, one result out")
}

/// Number of random restarts as a step function of observation length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartSchedule {
    /// `(min_len, restarts)` pairs, sorted by decreasing `min_len`; the first
    /// pair whose `min_len <= len` applies.
    breakpoints: Vec<(usize, usize)>,
}

impl RestartSchedule {
    pub fn new(mut breakpoints: Vec<(usize, usize)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::BadArgument("restart schedule is empty".into()));
        }
        if breakpoints.iter().any(|&(_, r)| r == 0) {
            return Err(Error::BadArgument("restart counts must be at least 1".into()));
        }
        breakpoints.sort_by_key(|&(len, _)| core::cmp::Reverse(len));
        if breakpoints.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::BadArgument("duplicate length breakpoint".into()));
        }
        if breakpoints.last().map(|&(l, _)| l) != Some(0) {
            return Err(Error::BadArgument("schedule must cover length 0".into()));
        }
        Ok(Self { breakpoints })
    }

    /// Restart counts used for per-sample opcode HMMs: 10 from 30,000
    /// observations up, 30 from 10,000, 100 from 5,000, 200 from 500 and 500
    /// below that.
    pub fn opcode_default() -> Self {
        Self {
            breakpoints: vec![(30_000, 10), (10_000, 30), (5_000, 100), (500, 200), (0, 500)],
        }
    }

    pub fn fixed(restarts: usize) -> Result<Self> {
        Self::new(vec![(0, restarts)])
    }

    pub fn restarts(&self, len: usize) -> usize {
        self.breakpoints
            .iter()
            .find(|&&(min_len, _)| len >= min_len)
            .map_or(1, |&(_, r)| r)
    }

    pub fn breakpoints(&self) -> &[(usize, usize)] {
        &self.breakpoints
    }
}

/// Trains restart number `index` of a restart family rooted at `seed`.
pub fn train_restart(
    obs: &[usize],
    n: usize,
    m: usize,
    seed: u64,
    index: usize,
    params: &BaumWelchParams,
) -> Result<(HmmModel, TrainingTrace)> {
    let init = init_random(n, m, derive_indexed(seed, index as u64))?;
    let (model, mut trace) = baum_welch(&init, obs, params)?;
    trace.restart = index;
    Ok((model, trace))
}

/// Picks the highest final log-likelihood; ties go to the lowest restart index.
/// Failed restarts are skipped; if all failed, the last error is returned.
pub fn select_best<I>(results: I) -> Result<(HmmModel, TrainingTrace)>
where
    I: IntoIterator<Item = Result<(HmmModel, TrainingTrace)>>,
{
    let mut best: Option<(HmmModel, TrainingTrace)> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok((model, trace)) => {
                let better = match &best {
                    None => true,
                    Some((_, bt)) => {
                        let (s, bs) = (trace.final_log_likelihood(), bt.final_log_likelihood());
                        s > bs || (s == bs && trace.restart < bt.restart)
                    }
                };
                if better {
                    best = Some((model, trace));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::TrainingDiverged(String::from("no restarts ran"))))
}

/// Baum-Welch from `schedule.restarts(obs.len())` random initializations,
/// keeping the best-scoring model.
pub fn train_with_restarts(
    obs: &[usize],
    n: usize,
    m: usize,
    schedule: &RestartSchedule,
    seed: u64,
    params: &BaumWelchParams,
) -> Result<(HmmModel, TrainingTrace)> {
    let restarts = schedule.restarts(obs.len());
    let inits = (0..restarts)
        .map(|i| init_random(n, m, derive_indexed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let results = baum_welch_many(&inits, obs, params)?;
    select_best(results.into_iter().enumerate().map(|(i, r)| {
        r.map(|(model, mut trace)| {
            trace.restart = i;
            (model, trace)
        })
    }))
}

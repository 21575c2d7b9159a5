//! First-order hidden Markov model with univariate Gaussian emissions.
//!
//! Recursions run either in log-space (Viterbi) or with per-step
//! normalization (forward-backward). Before normalization each step's
//! emission log-densities are shifted by their maximum, so a single outlier
//! far from every state mean cannot underflow all states at once.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::parse_kv;
use crate::error::{Error, Result};

/// Lower bound on every emission variance, in feature units squared.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// A state whose total posterior mass is below this is considered starved.
pub const STARVATION_MASS: f64 = 1e-12;

const STOCHASTIC_TOL: f64 = 1e-9;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (LN_2PI + self.var.ln() + d * d / self.var)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    emit: Vec<Gaussian>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl GaussianHmm {
    pub fn new(pi: Vec<f64>, trans: Vec<Vec<f64>>, emit: Vec<Gaussian>) -> Result<Self> {
        let n = pi.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        if trans.len() != n || trans.iter().any(|r| r.len() != n) || emit.len() != n {
            return Err(Error::InvalidModel(format!(
                "inconsistent dimensions for {n} states"
            )));
        }
        check_distribution(&pi, "start vector")?;
        for (i, row) in trans.iter().enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        for (s, g) in emit.iter().enumerate() {
            if !g.mean.is_finite() || !g.var.is_finite() || g.var < VARIANCE_FLOOR {
                return Err(Error::InvalidModel(format!(
                    "state {s} emission must be finite with variance >= {VARIANCE_FLOOR}"
                )));
            }
        }
        Ok(Self { pi, trans, emit })
    }

    /// Uniform start vector, `self_prob` on the diagonal and the remainder
    /// spread evenly off the diagonal.
    pub fn with_sticky_transitions(emit: Vec<Gaussian>, self_prob: f64) -> Result<Self> {
        let n = emit.len();
        if !(0.0..=1.0).contains(&self_prob) {
            return Err(Error::InvalidModel(format!(
                "self transition {self_prob} outside [0, 1]"
            )));
        }
        let trans = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (n, i == j) {
                        (1, _) => 1.0,
                        (_, true) => self_prob,
                        (_, false) => (1.0 - self_prob) / (n - 1) as f64,
                    })
                    .collect()
            })
            .collect();
        Self::new(vec![1.0 / n as f64; n], trans, emit)
    }

    /// Data-driven initialization: one state per percentile of `obs`, each
    /// with the sample variance of `obs`.
    pub fn from_percentiles(obs: &[f64], percentiles: &[f64], self_prob: f64) -> Result<Self> {
        check_obs(obs)?;
        if percentiles.is_empty() || percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "percentiles must lie in [0, 100]".into(),
            ));
        }
        let mut sorted = obs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let var = variance(obs).max(VARIANCE_FLOOR);
        let emit = percentiles
            .iter()
            .map(|&p| Gaussian::new(percentile(&sorted, p), var))
            .collect();
        Self::with_sticky_transitions(emit, self_prob)
    }

    /// Two-state initialization at the optimal 1-D two-means split of `obs`:
    /// state means are the means of the two sides, variances the sample
    /// variance of `obs`.
    pub fn from_two_means(obs: &[f64], self_prob: f64) -> Result<Self> {
        check_obs(obs)?;
        let mut sorted = obs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = two_means_split(&sorted);
        let var = variance(obs).max(VARIANCE_FLOOR);
        let emit = vec![Gaussian::new(lo, var), Gaussian::new(hi, var)];
        Self::with_sticky_transitions(emit, self_prob)
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.trans
    }

    pub fn emissions(&self) -> &[Gaussian] {
        &self.emit
    }

    pub fn means(&self) -> Vec<f64> {
        self.emit.iter().map(|g| g.mean).collect()
    }

    /// Flat key-value text: `n`, `pi.i`, `A.i.j`, `mu.s`, `var.s`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let n = self.n_states();
        writeln!(out, "n = {n}").unwrap();
        for (i, p) in self.pi.iter().enumerate() {
            writeln!(out, "pi.{i} = {p}").unwrap();
        }
        for (i, row) in self.trans.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                writeln!(out, "A.{i}.{j} = {a}").unwrap();
            }
        }
        for (s, g) in self.emit.iter().enumerate() {
            writeln!(out, "mu.{s} = {}", g.mean).unwrap();
            writeln!(out, "var.{s} = {}", g.var).unwrap();
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, key, value) in parse_kv(text)? {
            let v: f64 = value.parse().map_err(|_| Error::Config {
                line,
                reason: format!("{key}: cannot parse {value:?} as a number"),
            })?;
            map.insert(key, (line, v));
        }
        let get = |key: String| -> Result<f64> {
            map.get(&key).map(|(_, v)| *v).ok_or(Error::Config {
                line: 0,
                reason: format!("missing key {key}"),
            })
        };
        let n = get("n".into())?;
        if n < 1.0 || n.fract() != 0.0 {
            return Err(Error::InvalidModel(format!(
                "n must be a positive integer, got {n}"
            )));
        }
        let n = n as usize;
        let pi = (0..n)
            .map(|i| get(format!("pi.{i}")))
            .collect::<Result<Vec<_>>>()?;
        let trans = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| get(format!("A.{i}.{j}")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let emit = (0..n)
            .map(|s| {
                Ok(Gaussian::new(
                    get(format!("mu.{s}"))?,
                    get(format!("var.{s}"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pi, trans, emit)
    }
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Means of the two sides of the split of sorted data that minimizes the
/// within-group sum of squares.
pub fn two_means_split(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mean = total / n as f64;
    let mut best = (f64::NEG_INFINITY, mean, mean);
    let mut left = 0.0;
    for k in 1..n {
        left += sorted[k - 1];
        let (a, b) = (k as f64, (n - k) as f64);
        let (ml, mr) = (left / a, (total - left) / b);
        // between-group sum of squares; maximizing it minimizes the within
        let between = a * (ml - mean).powi(2) + b * (mr - mean).powi(2);
        if between > best.0 {
            best = (between, ml, mr);
        }
    }
    (best.1, best.2)
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// True when a sequence is too short or too flat to fit a mixture to:
/// fewer than two values, or a spread within rounding of a constant.
pub fn is_degenerate(obs: &[f64]) -> bool {
    if obs.len() < 2 {
        return true;
    }
    let (lo, hi) = obs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo <= 1e-9 * hi.abs().max(lo.abs()).max(1.0)
}

fn check_obs(obs: &[f64]) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::EmptyObservation);
    }
    if let Some(index) = obs.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteObservation { index });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub log_prob: f64,
}

/// Most probable state path. Ties go to the lower state index.
pub fn viterbi(model: &GaussianHmm, obs: &[f64]) -> Result<ViterbiPath> {
    check_obs(obs)?;
    let n = model.n_states();
    let t_len = obs.len();
    let ln_a: Vec<Vec<f64>> = model
        .trans
        .iter()
        .map(|r| r.iter().map(|a| a.ln()).collect())
        .collect();

    let mut delta: Vec<f64> = (0..n)
        .map(|s| model.pi[s].ln() + model.emit[s].ln_pdf(obs[0]))
        .collect();
    let mut back = vec![0u32; t_len * n];
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n {
                let v = delta[i] + ln_a[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t * n + j] = arg as u32;
            next[j] = best + model.emit[j].ln_pdf(obs[t]);
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut last = 0;
    for s in 1..n {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let log_prob = delta[last];
    if log_prob == f64::NEG_INFINITY {
        return Err(Error::NumericalUnderflow { index: t_len - 1 });
    }
    let mut states = vec![0; t_len];
    states[t_len - 1] = last;
    for t in (1..t_len).rev() {
        states[t - 1] = back[t * n + states[t]] as usize;
    }
    Ok(ViterbiPath { states, log_prob })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `gamma[t][s]`: posterior probability of state `s` at step `t`.
    pub gamma: Vec<Vec<f64>>,
    pub loglik: f64,
}

struct Sweep {
    /// Shifted emission densities, `t * n + s`.
    b: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scale: Vec<f64>,
    loglik: f64,
}

fn sweep(model: &GaussianHmm, obs: &[f64]) -> Result<Sweep> {
    check_obs(obs)?;
    let n = model.n_states();
    let t_len = obs.len();
    let mut b = vec![0.0; t_len * n];
    let mut shift = vec![0.0; t_len];
    for (t, &x) in obs.iter().enumerate() {
        let row = &mut b[t * n..(t + 1) * n];
        for (s, v) in row.iter_mut().enumerate() {
            *v = model.emit[s].ln_pdf(x);
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
        shift[t] = m;
    }

    let mut alpha = vec![0.0; t_len * n];
    let mut scale = vec![0.0; t_len];
    for t in 0..t_len {
        for j in 0..n {
            let prior = if t == 0 {
                model.pi[j]
            } else {
                (0..n)
                    .map(|i| alpha[(t - 1) * n + i] * model.trans[i][j])
                    .sum()
            };
            alpha[t * n + j] = prior * b[t * n + j];
        }
        let c: f64 = alpha[t * n..(t + 1) * n].iter().sum();
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::NumericalUnderflow { index: t });
        }
        alpha[t * n..(t + 1) * n].iter_mut().for_each(|a| *a /= c);
        scale[t] = c;
    }

    let mut beta = vec![1.0; t_len * n];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            beta[t * n + i] = (0..n)
                .map(|j| model.trans[i][j] * b[(t + 1) * n + j] * beta[(t + 1) * n + j])
                .sum::<f64>()
                / scale[t + 1];
        }
    }

    let loglik = scale.iter().zip(&shift).map(|(c, m)| c.ln() + m).sum();
    Ok(Sweep {
        b,
        alpha,
        beta,
        scale,
        loglik,
    })
}

fn gamma_rows(sw: &Sweep, n: usize) -> Vec<Vec<f64>> {
    sw.alpha
        .chunks(n)
        .zip(sw.beta.chunks(n))
        .map(|(a, b)| {
            let row: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            let z: f64 = row.iter().sum();
            row.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Scaled forward-backward pass.
pub fn forward_backward(model: &GaussianHmm, obs: &[f64]) -> Result<Posterior> {
    let sw = sweep(model, obs)?;
    Ok(Posterior {
        gamma: gamma_rows(&sw, model.n_states()),
        loglik: sw.loglik,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub model: GaussianHmm,
    /// Log-likelihood of the observations under the *input* model.
    pub loglik: f64,
    /// States whose posterior mass fell below [`STARVATION_MASS`]; their
    /// emission parameters were left unchanged.
    pub starved: Vec<usize>,
}

/// One Baum-Welch (EM) re-estimation of start vector, transitions, means
/// and variances.
#[allow(clippy::needless_range_loop)]
pub fn baum_welch_step(model: &GaussianHmm, obs: &[f64]) -> Result<EmStep> {
    if obs.len() < 2 {
        check_obs(obs)?;
        return Err(Error::InvalidParameter(
            "Baum-Welch needs at least two observations".into(),
        ));
    }
    let n = model.n_states();
    let t_len = obs.len();
    let sw = sweep(model, obs)?;
    let gamma = gamma_rows(&sw, n);

    let mut xi = vec![vec![0.0; n]; n];
    for t in 0..t_len - 1 {
        let c = sw.scale[t + 1];
        for i in 0..n {
            let a = sw.alpha[t * n + i];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                xi[i][j] +=
                    a * model.trans[i][j] * sw.b[(t + 1) * n + j] * sw.beta[(t + 1) * n + j] / c;
            }
        }
    }

    let pi_sum: f64 = gamma[0].iter().sum();
    let pi = gamma[0].iter().map(|g| g / pi_sum).collect();

    let trans = (0..n)
        .map(|i| {
            let row_sum: f64 = xi[i].iter().sum();
            if row_sum > 0.0 && row_sum.is_finite() {
                xi[i].iter().map(|x| x / row_sum).collect()
            } else {
                model.trans[i].clone()
            }
        })
        .collect();

    let mut emit = model.emit.clone();
    let mut starved = Vec::new();
    for s in 0..n {
        let mass: f64 = gamma.iter().map(|g| g[s]).sum();
        if mass < STARVATION_MASS {
            starved.push(s);
            continue;
        }
        let mean = gamma.iter().zip(obs).map(|(g, x)| g[s] * x).sum::<f64>() / mass;
        let var = gamma
            .iter()
            .zip(obs)
            .map(|(g, x)| g[s] * (x - mean) * (x - mean))
            .sum::<f64>()
            / mass;
        emit[s] = Gaussian::new(mean, var.max(VARIANCE_FLOOR));
    }

    Ok(EmStep {
        model: GaussianHmm { pi, trans, emit },
        loglik: sw.loglik,
        starved,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: GaussianHmm,
    pub path: Vec<usize>,
    /// Log-likelihood before each EM epoch, then after the last one.
    pub logliks: Vec<f64>,
    /// Union of starved states over all epochs, ascending.
    pub starved: Vec<usize>,
}

/// `epochs` Baum-Welch iterations followed by a Viterbi decode with the
/// final parameters.
pub fn fit(model: &GaussianHmm, obs: &[f64], epochs: usize) -> Result<FitResult> {
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be at least 1".into()));
    }
    let mut current = model.clone();
    let mut logliks = Vec::with_capacity(epochs + 1);
    let mut starved = Vec::new();
    for _ in 0..epochs {
        let step = baum_welch_step(&current, obs)?;
        logliks.push(step.loglik);
        starved.extend(step.starved);
        current = step.model;
    }
    logliks.push(forward_backward(&current, obs)?.loglik);
    starved.sort_unstable();
    starved.dedup();
    let path = viterbi(&current, obs)?.states;
    Ok(FitResult {
        model: current,
        path,
        logliks,
        starved,
    })
}

//! Observations, parameters and the mixture probability mass function.
//!
//! Role convention: `p_zero` is the probability of the structural-zero state
//! and is driven by `beta` and the zero-inflation covariates `x`; `pi_success`
//! is the binomial success probability, driven by `mu` and the count
//! covariates `w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{Link, LinkKind};

/// Lower/upper clamp applied to link outputs before they enter any logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: u64,
    pub n_trials: u64,
    /// Zero-inflation covariates, `x[0] == 1`.
    pub x: Vec<f64>,
    /// Count covariates, `w[0] == 1`.
    pub w: Vec<f64>,
}

impl Observation {
    pub fn new(y: u64, n_trials: u64, x: Vec<f64>, w: Vec<f64>) -> Self {
        Observation { y, n_trials, x, w }
    }

    fn validate(&self, index: usize, p: usize, q: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidObservation { index, reason };
        if self.n_trials == 0 {
            return Err(bad("number of trials must be positive".into()));
        }
        if self.y > self.n_trials {
            return Err(bad(format!("response {} exceeds trials {}", self.y, self.n_trials)));
        }
        if self.x.len() != p || self.w.len() != q {
            return Err(Error::Dimension(format!(
                "observation {index} has {}/{} covariates, expected {p}/{q}",
                self.x.len(),
                self.w.len()
            )));
        }
        if self.x.iter().chain(&self.w).any(|v| !v.is_finite()) {
            return Err(bad("covariates must be finite".into()));
        }
        if self.x[0] != 1.0 || self.w[0] != 1.0 {
            return Err(bad("leading covariate of x and w must be the intercept 1".into()));
        }
        Ok(())
    }
}

/// An ordered collection of observations sharing covariate dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    p: usize,
    q: usize,
    zero_names: Vec<String>,
    count_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated column names (`x1`, `w1`, ...).
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Dimension("dataset has no observations".into()))?;
        let (p, q) = (first.x.len(), first.w.len());
        Self::with_names(observations, default_names("x", p), default_names("w", q))
    }

    pub fn with_names(
        observations: Vec<Observation>,
        zero_names: Vec<String>,
        count_names: Vec<String>,
    ) -> Result<Self> {
        let (p, q) = (zero_names.len(), count_names.len());
        if p == 0 || q == 0 {
            return Err(Error::Dimension("both designs need at least the intercept column".into()));
        }
        if observations.is_empty() {
            return Err(Error::Dimension("dataset has no observations".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            obs.validate(i, p, q)?;
        }
        Ok(Dataset { observations, p, q, zero_names, count_names })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Zero-inflation covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Count covariate dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.p + self.q
    }

    pub fn zero_names(&self) -> &[String] {
        &self.zero_names
    }

    pub fn count_names(&self) -> &[String] {
        &self.count_names
    }

    /// Same covariate layout, different rows.
    pub fn with_observations(&self, observations: Vec<Observation>) -> Result<Self> {
        Self::with_names(observations, self.zero_names.clone(), self.count_names.clone())
    }

    /// Appends the rows of `other`; layouts must agree.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.p != other.p || self.q != other.q {
            return Err(Error::Dimension("cannot concatenate datasets with different layouts".into()));
        }
        let mut rows = self.observations.clone();
        rows.extend_from_slice(&other.observations);
        self.with_observations(rows)
    }

    pub fn zero_fraction(&self) -> f64 {
        self.observations.iter().filter(|o| o.y == 0).count() as f64 / self.len() as f64
    }

    /// Checks that both stacked design matrices have full column rank.
    pub fn check_full_rank(&self) -> Result<()> {
        self.check_zero_rank()?;
        self.check_count_rank()
    }

    pub fn check_zero_rank(&self) -> Result<()> {
        let deficient = dependent_columns(self.observations.iter().map(|o| o.x.as_slice()), self.p);
        if deficient.is_empty() {
            return Ok(());
        }
        Err(Error::RankDeficient {
            design: "zero-inflation",
            columns: deficient.into_iter().map(|j| self.zero_names[j].clone()).collect(),
        })
    }

    pub fn check_count_rank(&self) -> Result<()> {
        let deficient = dependent_columns(self.observations.iter().map(|o| o.w.as_slice()), self.q);
        if deficient.is_empty() {
            return Ok(());
        }
        Err(Error::RankDeficient {
            design: "count",
            columns: deficient.into_iter().map(|j| self.count_names[j].clone()).collect(),
        })
    }
}

fn default_names(prefix: &str, dim: usize) -> Vec<String> {
    std::iter::once(INTERCEPT_NAME.to_string())
        .chain((1..dim).map(|j| format!("{prefix}{j}")))
        .collect()
}

/// Indices of columns lying (numerically) in the span of the preceding ones,
/// found by modified Gram-Schmidt.
fn dependent_columns<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<usize> {
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for row in rows {
        for (c, &v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (j, col) in cols.into_iter().enumerate() {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = col;
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(b).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            dependent.push(j);
        } else {
            r.iter_mut().for_each(|v| *v /= norm);
            basis.push(r);
        }
    }
    dependent
}

/// `theta = (beta', mu')'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl ParameterVector {
    pub fn new(beta: Vec<f64>, mu: Vec<f64>) -> Self {
        ParameterVector { beta, mu }
    }

    pub fn zeros(p: usize, q: usize) -> Self {
        ParameterVector { beta: vec![0.0; p], mu: vec![0.0; q] }
    }

    /// Splits a stacked vector after the first `p` entries.
    pub fn from_stacked(p: usize, stacked: &[f64]) -> Self {
        ParameterVector { beta: stacked[..p].to_vec(), mu: stacked[p..].to_vec() }
    }

    pub fn k(&self) -> usize {
        self.beta.len() + self.mu.len()
    }

    pub fn to_stacked(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.mu).copied().collect()
    }

    pub(crate) fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.beta.len() != data.p() || self.mu.len() != data.q() {
            return Err(Error::Dimension(format!(
                "parameter has {}+{} entries, dataset expects {}+{}",
                self.beta.len(),
                self.mu.len(),
                data.p(),
                data.q()
            )));
        }
        Ok(())
    }
}

/// Links for the zero-inflation and count components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPair {
    pub zero: LinkKind,
    pub count: LinkKind,
}

impl LinkPair {
    pub const PROBIT: LinkPair = LinkPair { zero: LinkKind::Probit, count: LinkKind::Probit };
    pub const LOGIT: LinkPair = LinkPair { zero: LinkKind::Logit, count: LinkKind::Logit };

    pub fn new(zero: LinkKind, count: LinkKind) -> Self {
        LinkPair { zero, count }
    }

    pub fn zero_link(&self) -> Link {
        self.zero.link()
    }

    pub fn count_link(&self) -> Link {
        self.count.link()
    }
}

impl Default for LinkPair {
    fn default() -> Self {
        LinkPair::PROBIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureProbabilities {
    pub p_zero: f64,
    pub pi_success: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Linear predictors `(beta . x, mu . w)`.
pub fn predictors(theta: &ParameterVector, obs: &Observation) -> Result<(f64, f64)> {
    if theta.beta.len() != obs.x.len() || theta.mu.len() != obs.w.len() {
        return Err(Error::Dimension(format!(
            "parameter has {}+{} entries, observation has {}+{} covariates",
            theta.beta.len(),
            theta.mu.len(),
            obs.x.len(),
            obs.w.len()
        )));
    }
    Ok((dot(&theta.beta, &obs.x), dot(&theta.mu, &obs.w)))
}

pub fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn mixture_probs(
    theta: &ParameterVector,
    obs: &Observation,
    links: LinkPair,
) -> Result<MixtureProbabilities> {
    let (eta_zero, eta_count) = predictors(theta, obs)?;
    Ok(MixtureProbabilities {
        p_zero: clamp_prob(links.zero_link().cdf(eta_zero)?),
        pi_success: clamp_prob(links.count_link().cdf(eta_count)?),
    })
}

/// `log C(n, y)` via log-gamma.
pub fn ln_choose(n: u64, y: u64) -> f64 {
    if y == 0 || y == n {
        return 0.0;
    }
    let n = n as f64;
    let y = y as f64;
    libm::lgamma(n + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(n - y + 1.0)
}

/// `log[pi^y (1-pi)^(n-y)]`, treating `0 * log 0` as 0.
fn ln_binomial_kernel(y: u64, n: u64, pi: f64) -> f64 {
    let mut v = 0.0;
    if y > 0 {
        v += y as f64 * pi.ln();
    }
    if n > y {
        v += (n - y) as f64 * (-pi).ln_1p();
    }
    v
}

/// Plain binomial probability mass.
pub fn binomial_pmf(y: u64, n: u64, pi: f64) -> f64 {
    (ln_choose(n, y) + ln_binomial_kernel(y, n, pi)).exp()
}

fn check_range(y: u64, n: u64) -> Result<()> {
    if y > n {
        return Err(Error::Domain(format!("response {y} exceeds trials {n}")));
    }
    Ok(())
}

/// `P(Y = y)` under the zero-inflated binomial mixture.
pub fn pmf(y: u64, n_trials: u64, probs: MixtureProbabilities) -> Result<f64> {
    check_range(y, n_trials)?;
    let MixtureProbabilities { p_zero, pi_success } = probs;
    let binom = binomial_pmf(y, n_trials, pi_success);
    Ok(if y == 0 {
        p_zero + (1.0 - p_zero) * binom
    } else {
        (1.0 - p_zero) * binom
    })
}

/// `log P(Y = y)`, evaluated in the log domain.
pub fn log_pmf(y: u64, n_trials: u64, probs: MixtureProbabilities) -> Result<f64> {
    check_range(y, n_trials)?;
    let MixtureProbabilities { p_zero, pi_success } = probs;
    let ln_not_zero = (-p_zero).ln_1p();
    Ok(if y == 0 {
        let ln_binom_zero = n_trials as f64 * (-pi_success).ln_1p();
        log_add_exp(p_zero.ln(), ln_not_zero + ln_binom_zero)
    } else {
        ln_not_zero + ln_choose(n_trials, y) + ln_binomial_kernel(y, n_trials, pi_success)
    })
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

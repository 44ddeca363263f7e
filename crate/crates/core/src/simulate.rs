//! Data generation under the model and Monte Carlo studies of the estimator.
//!
//! Replication `r` of a design draws from ChaCha8 stream `r` keyed by the
//! design seed, so each replication is reproducible on its own and results do
//! not depend on how replications are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{covariance, standardize, wald_intervals};
use crate::link::normal_cdf;
use crate::model::{mixture_probs, Dataset, LinkPair, Observation, ParameterVector, INTERCEPT_NAME};
use crate::solver::{fit, FitConfig};
use crate::stats::{ks_p_value, ks_statistic, mean, quantile, sample_sd};

/// Fraction of excluded replications above which a report is flagged.
pub const EXCLUSION_FLAG_FRACTION: f64 = 0.05;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    Constant,
    Uniform { low: f64, high: f64 },
    Bernoulli { rho: f64 },
}

impl CovariateSpec {
    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            CovariateSpec::Constant => Ok(()),
            CovariateSpec::Uniform { low, high } if low.is_finite() && high.is_finite() && low < high => Ok(()),
            CovariateSpec::Bernoulli { rho } if rho > 0.0 && rho < 1.0 => Ok(()),
            other => Err(Error::Config(format!("{what}: {other:?} needs bounded support with positive variance"))),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            CovariateSpec::Constant => 1.0,
            CovariateSpec::Uniform { low, high } => rng.random_range(low..high),
            CovariateSpec::Bernoulli { rho } => {
                if rng.random::<f64>() < rho {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialsSpec {
    Fixed(u64),
    /// Uniform on the inclusive range.
    Range { min: u64, max: u64 },
}

/// Count column `count` is a copy of zero-inflation column `zero`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedColumn {
    pub zero: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub trials: TrialsSpec,
    /// Column 0 must be `constant` (the intercept).
    pub zero_covariates: Vec<CovariateSpec>,
    pub count_covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub shared_columns: Vec<SharedColumn>,
    pub theta0: ParameterVector,
    #[serde(default)]
    pub links: LinkPair,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SimDesign {
    /// `x = (1, U[-1, 1])`, `w = (1, Bernoulli(0.5))`, trials uniform on 2..=8,
    /// `beta0 = (-1, 0.5)`, `mu0 = (0.3, -0.7)`, probit links.
    pub fn default_design(n: usize, seed: u64) -> Self {
        SimDesign {
            n,
            trials: TrialsSpec::Range { min: 2, max: 8 },
            zero_covariates: vec![CovariateSpec::Constant, CovariateSpec::Uniform { low: -1.0, high: 1.0 }],
            count_covariates: vec![CovariateSpec::Constant, CovariateSpec::Bernoulli { rho: 0.5 }],
            shared_columns: Vec::new(),
            theta0: ParameterVector::new(vec![-1.0, 0.5], vec![0.3, -0.7]),
            links: LinkPair::PROBIT,
            seed: Some(seed),
        }
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        match self.trials {
            TrialsSpec::Fixed(0) => return Err(Error::Config("trial count must be positive".into())),
            TrialsSpec::Range { min, max } if min == 0 || min > max => {
                return Err(Error::Config(format!("invalid trial range {min}..={max}")))
            }
            _ => {}
        }
        for (name, specs, coef) in [
            ("zero_covariates", &self.zero_covariates, &self.theta0.beta),
            ("count_covariates", &self.count_covariates, &self.theta0.mu),
        ] {
            if specs.first() != Some(&CovariateSpec::Constant) {
                return Err(Error::Config(format!("{name}[0] must be the constant intercept")));
            }
            if specs.len() != coef.len() {
                return Err(Error::Config(format!(
                    "{name} has {} columns but theta0 has {} coefficients",
                    specs.len(),
                    coef.len()
                )));
            }
            for (j, s) in specs.iter().enumerate().skip(1) {
                if *s == CovariateSpec::Constant {
                    return Err(Error::Config(format!("{name}[{j}] is constant; only column 0 may be")));
                }
                s.validate(&format!("{name}[{j}]"))?;
            }
        }
        if self.theta0.to_stacked().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("theta0 must be finite".into()));
        }
        let mut seen = vec![false; self.count_covariates.len()];
        for s in &self.shared_columns {
            if s.zero == 0 || s.count == 0 || s.zero >= self.zero_covariates.len() || s.count >= self.count_covariates.len() {
                return Err(Error::Config(format!("invalid shared column {s:?}")));
            }
            if std::mem::replace(&mut seen[s.count], true) {
                return Err(Error::Config(format!("count column {} shared twice", s.count)));
            }
        }
        Ok(())
    }

    fn zero_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT_NAME.to_string())
            .chain((1..self.zero_covariates.len()).map(|j| format!("x{j}")))
            .collect()
    }

    fn count_names(&self) -> Vec<String> {
        let zero = self.zero_names();
        std::iter::once(INTERCEPT_NAME.to_string())
            .chain((1..self.count_covariates.len()).map(|j| {
                match self.shared_columns.iter().find(|s| s.count == j) {
                    Some(s) => zero[s.zero].clone(),
                    None => format!("w{j}"),
                }
            }))
            .collect()
    }
}

/// Independent stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one dataset from the design (replication 0).
pub fn generate(design: &SimDesign) -> Result<Dataset> {
    generate_replicate(design, 0)
}

/// Draws the dataset of replication `replicate`.
pub fn generate_replicate(design: &SimDesign, replicate: u64) -> Result<Dataset> {
    design.validate()?;
    let mut rng = stream_rng(design.seed_or_default(), replicate);
    let mut rows = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let x: Vec<f64> = design.zero_covariates.iter().map(|s| s.draw(&mut rng)).collect();
        let w: Vec<f64> = design
            .count_covariates
            .iter()
            .enumerate()
            .map(|(j, s)| match design.shared_columns.iter().find(|c| c.count == j) {
                Some(c) => x[c.zero],
                None => s.draw(&mut rng),
            })
            .collect();
        let n_trials = match design.trials {
            TrialsSpec::Fixed(m) => m,
            TrialsSpec::Range { min, max } => rng.random_range(min..=max),
        };
        let mut obs = Observation::new(0, n_trials, x, w);
        let probs = mixture_probs(&design.theta0, &obs, design.links)?;
        let structural_zero = rng.random::<f64>() < probs.p_zero;
        if !structural_zero {
            let binom = Binomial::new(n_trials, probs.pi_success)
                .map_err(|e| Error::Numerical(format!("binomial sampler: {e}")))?;
            obs.y = binom.sample(&mut rng);
        }
        rows.push(obs);
    }
    Dataset::with_names(rows, design.zero_names(), design.count_names())
}

/// Expected `P(Y = 0)` of a dataset's rows under `theta`, averaged over rows.
pub fn expected_zero_fraction(data: &Dataset, theta: &ParameterVector, links: LinkPair) -> Result<f64> {
    let mut total = 0.0;
    for o in data.observations() {
        total += crate::model::pmf(0, o.n_trials, mixture_probs(theta, o, links)?)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub replications: usize,
    /// Links used for fitting; may differ from the generating links.
    pub fit_links: LinkPair,
    pub level: f64,
    /// Worker threads; 0 lets the pool decide. Never changes the results.
    pub threads: usize,
}

impl McOptions {
    pub fn new(replications: usize, fit_links: LinkPair) -> Self {
        McOptions { replications, fit_links, level: 0.95, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replicate: usize,
    pub converged: bool,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub loglik: f64,
    pub iterations: usize,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub estimates: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub std_errors: Vec<f64>,
    /// Whether each Wald interval covers the true value.
    pub covered: Vec<bool>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub standardized: Vec<f64>,
    pub error: Option<String>,
}

impl ReplicationRecord {
    fn included(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub design: SimDesign,
    pub fit_links: LinkPair,
    pub level: f64,
    pub replications: usize,
    pub included: usize,
    pub excluded: usize,
    /// More than 5% of replications were excluded.
    pub flagged: bool,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub theta0: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub mean_estimate: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub bias: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub mc_sd: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub mean_se: Vec<f64>,
    /// Empirical coverage of the Wald intervals at `level`.
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub coverage: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub standardized_mean: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub standardized_variance: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub ks_statistics: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub ks_p_values: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub mean_loglik: f64,
    pub records: Vec<ReplicationRecord>,
}

impl McReport {
    /// Standardized vectors of the included replications, one row each.
    pub fn standardized_pool(&self) -> Vec<&[f64]> {
        self.records.iter().filter(|r| r.included()).map(|r| r.standardized.as_slice()).collect()
    }
}

fn run_replicate(design: &SimDesign, opts: &McOptions, r: usize) -> ReplicationRecord {
    let k = design.theta0.k();
    let mut rec = ReplicationRecord {
        replicate: r,
        converged: false,
        loglik: f64::NAN,
        iterations: 0,
        estimates: vec![f64::NAN; k],
        std_errors: vec![f64::NAN; k],
        covered: vec![false; k],
        standardized: vec![f64::NAN; k],
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let data = generate_replicate(design, r as u64)?;
        let fitted = fit(&data, &FitConfig::with_links(opts.fit_links))?;
        rec.converged = fitted.converged;
        rec.loglik = fitted.loglik;
        rec.iterations = fitted.iterations;
        rec.estimates = fitted.theta_hat.to_stacked();
        if !fitted.converged {
            return Ok(());
        }
        let cov = covariance(&fitted)?;
        let inf = wald_intervals(&rec.estimates, &cov, opts.level)?;
        let truth = design.theta0.to_stacked();
        rec.covered = (0..k).map(|j| inf.ci_lower[j] <= truth[j] && truth[j] <= inf.ci_upper[j]).collect();
        rec.std_errors = inf.std_errors;
        rec.standardized = standardize(&fitted.theta_hat, &design.theta0, &fitted.information)?;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Fits `replications` independent datasets and aggregates the estimates.
pub fn mc_study(design: &SimDesign, opts: &McOptions) -> Result<McReport> {
    design.validate()?;
    if opts.replications < 2 {
        return Err(Error::Config("a Monte Carlo study needs at least 2 replications".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<ReplicationRecord> = pool.install(|| {
        (0..opts.replications).into_par_iter().map(|r| run_replicate(design, opts, r)).collect()
    });
    Ok(aggregate(design, opts, records))
}

fn aggregate(design: &SimDesign, opts: &McOptions, records: Vec<ReplicationRecord>) -> McReport {
    let k = design.theta0.k();
    let theta0 = design.theta0.to_stacked();
    let kept: Vec<&ReplicationRecord> = records.iter().filter(|r| r.included()).collect();
    let column = |f: &dyn Fn(&ReplicationRecord) -> f64| -> Vec<f64> { kept.iter().map(|r| f(r)).collect() };

    let mut report = McReport {
        design: design.clone(),
        fit_links: opts.fit_links,
        level: opts.level,
        replications: records.len(),
        included: kept.len(),
        excluded: records.len() - kept.len(),
        flagged: (records.len() - kept.len()) as f64 > EXCLUSION_FLAG_FRACTION * records.len() as f64,
        theta0: theta0.clone(),
        mean_estimate: Vec::with_capacity(k),
        bias: Vec::with_capacity(k),
        mc_sd: Vec::with_capacity(k),
        mean_se: Vec::with_capacity(k),
        coverage: Vec::with_capacity(k),
        standardized_mean: Vec::with_capacity(k),
        standardized_variance: Vec::with_capacity(k),
        ks_statistics: Vec::with_capacity(k),
        ks_p_values: Vec::with_capacity(k),
        mean_loglik: mean(&column(&|r| r.loglik)),
        records: Vec::new(),
    };
    for j in 0..k {
        let est = column(&|r| r.estimates[j]);
        let z = column(&|r| r.standardized[j]);
        let m = mean(&est);
        report.mean_estimate.push(m);
        report.bias.push(m - theta0[j]);
        report.mc_sd.push(sample_sd(&est));
        report.mean_se.push(mean(&column(&|r| r.std_errors[j])));
        report.coverage.push(mean(&column(&|r| if r.covered[j] { 1.0 } else { 0.0 })));
        report.standardized_mean.push(mean(&z));
        report.standardized_variance.push(sample_sd(&z).powi(2));
        let d = if z.is_empty() { f64::NAN } else { ks_statistic(&z, normal_cdf) };
        report.ks_statistics.push(d);
        report.ks_p_values.push(if z.is_empty() { f64::NAN } else { ks_p_value(d, z.len()) });
    }
    report.records = records;
    report
}

/// Studies of the same design at several sample sizes.
pub fn consistency_sweep(design: &SimDesign, sizes: &[usize], opts: &McOptions) -> Result<Vec<McReport>> {
    sizes
        .iter()
        .map(|&n| mc_study(&SimDesign { n, ..design.clone() }, opts))
        .collect()
}

/// Correct-link fit versus alternative-link fit on identical datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecificationReport {
    pub correct: McReport,
    pub alternative: McReport,
    /// Per replication where both fits converged: correct minus alternative
    /// maximized log-likelihood.
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub differences: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub mean_difference: f64,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub sd_difference: f64,
    /// 5%, 25%, 50%, 75%, 95% quantiles of the differences.
    #[serde(deserialize_with = "crate::io::nullable::vec")]
    pub quantiles: Vec<f64>,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub fraction_correct_better: f64,
}

pub fn misspecification_study(
    design: &SimDesign,
    replications: usize,
    alternative_links: LinkPair,
    threads: usize,
) -> Result<MisspecificationReport> {
    let opts = McOptions { replications, fit_links: design.links, level: 0.95, threads };
    let correct = mc_study(design, &opts)?;
    let alternative = mc_study(design, &McOptions { fit_links: alternative_links, ..opts })?;
    let differences: Vec<f64> = correct
        .records
        .iter()
        .zip(&alternative.records)
        .filter(|(a, b)| a.included() && b.included())
        .map(|(a, b)| a.loglik - b.loglik)
        .collect();
    Ok(MisspecificationReport {
        mean_difference: mean(&differences),
        sd_difference: sample_sd(&differences),
        quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|&p| quantile(&differences, p)).collect(),
        fraction_correct_better: mean(
            &differences.iter().map(|d| if *d >= 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        ),
        differences,
        correct,
        alternative,
    })
}

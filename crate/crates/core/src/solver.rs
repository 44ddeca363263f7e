//! Damped Newton maximization of the log-likelihood.
//!
//! Each iteration solves `(I(theta) + tau I) delta = score`, where `tau`
//! stays 0 while the information is positive definite and otherwise starts
//! at 1e-6 and grows tenfold. The step is halved until the log-likelihood
//! does not decrease.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    self, condition_diagnostics, ConditionDiagnostics, InformationMatrix,
};
use crate::link::Link;
use crate::model::{dot, ln_choose, Dataset, LinkPair, ParameterVector, PROB_CLAMP};

/// Predictors beyond this many link units at the solution trigger a boundary warning.
pub const BOUNDARY_ETA: f64 = 8.0;

/// Largest change of any linear predictor allowed in a single Newton step.
const MAX_PREDICTOR_STEP: f64 = 5.0;

/// Floor for the excess-zero fraction when seeding the zero-inflation intercept.
/// Kept above the probability clamp so the start sits where the gradient is alive.
const INIT_ZERO_FLOOR: f64 = 1e-6;

const ASCENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub loglik_rel_tol: f64,
    pub max_step_halvings: usize,
    pub links: LinkPair,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            grad_tol: 1e-6,
            loglik_rel_tol: 1e-10,
            max_step_halvings: 30,
            links: LinkPair::PROBIT,
        }
    }
}

impl FitConfig {
    pub fn with_links(links: LinkPair) -> Self {
        FitConfig { links, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.max_step_halvings == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.loglik_rel_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FitWarning {
    /// Every response is zero; the start is a fixed fallback.
    AllZeroResponses,
    /// Responses are all 0 or all equal to the trial count.
    Separation,
    /// Some linear predictor ended beyond the boundary threshold.
    BoundaryDrift { component: String, max_abs_eta: String },
    /// The line search could not improve the log-likelihood.
    LineSearchStalled,
    /// The iteration budget ran out.
    IterationLimit,
    /// A ridge had to be added to the information during the iterations.
    RidgeApplied { max_tau: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ZeroInflated,
    BinomialOnly,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelKind,
    pub links: LinkPair,
    /// For `BinomialOnly` fits `beta` is empty.
    pub theta_hat: ParameterVector,
    pub loglik: f64,
    /// Infinity norm of the score at `theta_hat`.
    pub score_norm: f64,
    pub information: InformationMatrix,
    /// Accepted Newton steps.
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
    pub diagnostics: ConditionDiagnostics,
    pub warnings: Vec<FitWarning>,
}

/// What the Newton driver needs from a likelihood.
trait Objective {
    fn loglik(&self, theta: &[f64]) -> Result<f64>;
    /// Log-likelihood, score and observed information.
    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>, InformationMatrix)>;
    /// Largest absolute change of any linear predictor caused by `delta`.
    fn predictor_change(&self, delta: &[f64]) -> f64;
}

struct ZibObjective<'a> {
    data: &'a Dataset,
    links: LinkPair,
}

impl Objective for ZibObjective<'_> {
    fn loglik(&self, theta: &[f64]) -> Result<f64> {
        let theta = ParameterVector::from_stacked(self.data.p(), theta);
        likelihood::log_likelihood(&theta, self.data, self.links)
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>, InformationMatrix)> {
        let theta = ParameterVector::from_stacked(self.data.p(), theta);
        let e = likelihood::evaluate(&theta, self.data, self.links)?;
        Ok((e.loglik, e.score.score, e.information))
    }

    fn predictor_change(&self, delta: &[f64]) -> f64 {
        let p = self.data.p();
        self.data.observations().iter().fold(0.0, |m, o| {
            m.max(dot(&delta[..p], &o.x).abs()).max(dot(&delta[p..], &o.w).abs())
        })
    }
}

/// Plain binomial likelihood in the count coefficients only.
struct BinomialObjective<'a> {
    data: &'a Dataset,
    link: Link,
}

impl BinomialObjective<'_> {
    fn terms(&self, eta: f64, y: u64, n: u64) -> (f64, f64, f64) {
        let raw = self.link.cdf_unchecked(eta);
        let (pi, d1, d2) = if raw < PROB_CLAMP {
            (PROB_CLAMP, 0.0, 0.0)
        } else if raw > 1.0 - PROB_CLAMP {
            (1.0 - PROB_CLAMP, 0.0, 0.0)
        } else {
            (raw, self.link.pdf_unchecked(eta), self.link.pdf_prime_unchecked(eta))
        };
        let (yf, nf) = (y as f64, n as f64);
        let q = 1.0 - pi;
        let ll = ln_choose(n, y) + yf * pi.ln() + (nf - yf) * (-pi).ln_1p();
        let l_s = yf / pi - (nf - yf) / q;
        let l_ss = -yf / (pi * pi) - (nf - yf) / (q * q);
        (ll, l_s * d1, -(l_ss * d1 * d1 + l_s * d2))
    }
}

impl Objective for BinomialObjective<'_> {
    fn loglik(&self, mu: &[f64]) -> Result<f64> {
        Ok(self
            .data
            .observations()
            .iter()
            .map(|o| self.terms(dot(mu, &o.w), o.y, o.n_trials).0)
            .sum())
    }

    fn evaluate(&self, mu: &[f64]) -> Result<(f64, Vec<f64>, InformationMatrix)> {
        let q = self.data.q();
        let mut ll = 0.0;
        let mut g = vec![0.0; q];
        let mut h = DMatrix::zeros(q, q);
        for o in self.data.observations() {
            let (l, b, d) = self.terms(dot(mu, &o.w), o.y, o.n_trials);
            ll += l;
            for i in 0..q {
                g[i] += b * o.w[i];
                for j in i..q {
                    h[(i, j)] += d * o.w[i] * o.w[j];
                }
            }
        }
        for i in 0..q {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical("binomial log-likelihood is not finite".into()));
        }
        Ok((ll, g, InformationMatrix::from_matrix(h)))
    }

    fn predictor_change(&self, delta: &[f64]) -> f64 {
        self.data.observations().iter().fold(0.0, |m, o| m.max(dot(delta, &o.w).abs()))
    }
}

struct NewtonOutcome {
    theta: Vec<f64>,
    loglik: f64,
    score: Vec<f64>,
    information: InformationMatrix,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
    warnings: Vec<FitWarning>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && Cholesky::new(m.clone()).is_some()
}

/// Solves `(m + tau I) x = rhs`, escalating `tau` until the factorization succeeds.
fn ridge_solve(m: &DMatrix<f64>, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = m.nrows();
    let b = DVector::from_column_slice(rhs);
    let mut tau = 0.0;
    for _ in 0..40 {
        let shifted = m + DMatrix::<f64>::identity(k, k) * tau;
        if let Some(chol) = Cholesky::new(shifted) {
            let x = chol.solve(&b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok((x.as_slice().to_vec(), tau));
            }
        }
        tau = if tau == 0.0 { 1e-6 } else { tau * 10.0 };
    }
    Err(Error::Numerical("ridge-regularized Newton system could not be factorized".into()))
}

fn newton(obj: &dyn Objective, start: Vec<f64>, config: &FitConfig) -> Result<NewtonOutcome> {
    let mut theta = start;
    let (mut ll, mut grad, mut info) = obj.evaluate(&theta)?;
    if !ll.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite at the start".into()));
    }
    let mut trace = vec![ll];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut max_tau: f64 = 0.0;

    loop {
        if inf_norm(&grad) < config.grad_tol && is_pd(&info.matrix) {
            break;
        }
        if iterations >= config.max_iterations {
            warnings.push(FitWarning::IterationLimit);
            break;
        }
        let (mut delta, tau) = ridge_solve(&info.matrix, &grad)?;
        max_tau = max_tau.max(tau);
        let change = obj.predictor_change(&delta);
        if change > MAX_PREDICTOR_STEP {
            let s = MAX_PREDICTOR_STEP / change;
            delta.iter_mut().for_each(|d| *d *= s);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for halving in 0..=config.max_step_halvings {
            let cand: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + step * d).collect();
            if let Ok(cand_ll) = obj.loglik(&cand) {
                if cand_ll.is_finite() && cand_ll >= ll - ASCENT_SLACK * ll.abs().max(1.0) {
                    accepted = Some((cand, cand_ll, halving));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, cand_ll, halvings)) = accepted else {
            warnings.push(FitWarning::LineSearchStalled);
            break;
        };
        let gain = cand_ll - ll;
        theta = cand;
        (ll, grad, info) = obj.evaluate(&theta)?;
        // `ll` from evaluate sums the same terms as `cand_ll`; keep the trace monotone.
        ll = ll.max(cand_ll);
        trace.push(ll);
        iterations += 1;
        if halvings > 0 && gain.abs() <= config.loglik_rel_tol * ll.abs().max(1.0) {
            if !(inf_norm(&grad) < config.grad_tol) {
                warnings.push(FitWarning::LineSearchStalled);
            }
            break;
        }
    }
    if max_tau > 0.0 {
        warnings.push(FitWarning::RidgeApplied { max_tau: format!("{max_tau:e}") });
    }
    let converged = inf_norm(&grad) < config.grad_tol && is_pd(&info.matrix);
    Ok(NewtonOutcome { theta, loglik: ll, score: grad, information: info, iterations, converged, trace, warnings })
}

fn diagnostics_or_nan(info: &InformationMatrix) -> ConditionDiagnostics {
    condition_diagnostics(info).unwrap_or(ConditionDiagnostics {
        lambda_min: f64::NAN,
        lambda_max: f64::NAN,
        ratio: f64::NAN,
        positive_definite: false,
    })
}

fn boundary_warnings(data: &Dataset, theta: &ParameterVector, out: &mut Vec<FitWarning>) {
    let mut push = |component: &str, m: f64| {
        if m > BOUNDARY_ETA {
            out.push(FitWarning::BoundaryDrift {
                component: component.into(),
                max_abs_eta: format!("{m:.3}"),
            });
        }
    };
    if !theta.beta.is_empty() {
        push(
            "zero-inflation",
            data.observations().iter().fold(0.0, |m, o| m.max(dot(&theta.beta, &o.x).abs())),
        );
    }
    push(
        "count",
        data.observations().iter().fold(0.0, |m, o| m.max(dot(&theta.mu, &o.w).abs())),
    );
}

fn check_fit_preconditions(data: &Dataset, k: usize, config: &FitConfig) -> Result<()> {
    config.validate()?;
    data.check_full_rank()?;
    if data.len() < k {
        return Err(Error::Dimension(format!(
            "{} observations cannot identify {k} parameters",
            data.len()
        )));
    }
    Ok(())
}

/// Intercept solving `F(eta) = sum(y) / sum(n)` after clamping.
fn pooled_intercept(data: &Dataset, link: Link) -> f64 {
    let (ys, ns) = data
        .observations()
        .iter()
        .fold((0.0, 0.0), |(a, b), o| (a + o.y as f64, b + o.n_trials as f64));
    link.invert_by_bisection((ys / ns).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Fits the plain binomial model (no zero inflation) in the count coefficients.
pub fn fit_binomial_only(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let q = data.q();
    config.validate()?;
    if data.len() < q {
        return Err(Error::Dimension(format!("{} observations cannot identify {q} parameters", data.len())));
    }
    data.check_count_rank()?;

    let link = config.links.count_link();
    let obj = BinomialObjective { data, link };
    let mut start = vec![0.0; q];
    start[0] = pooled_intercept(data, link);

    let all_zero = data.observations().iter().all(|o| o.y == 0);
    let all_full = data.observations().iter().all(|o| o.y == o.n_trials);
    if all_zero || all_full {
        let (ll, g, info) = obj.evaluate(&start)?;
        let theta_hat = ParameterVector::new(Vec::new(), start);
        return Ok(FitResult {
            model: ModelKind::BinomialOnly,
            links: config.links,
            theta_hat,
            loglik: ll,
            score_norm: inf_norm(&g),
            diagnostics: diagnostics_or_nan(&info),
            information: info,
            iterations: 0,
            converged: false,
            loglik_trace: vec![ll],
            warnings: vec![FitWarning::Separation],
        });
    }

    let out = newton(&obj, start, config)?;
    let theta_hat = ParameterVector::new(Vec::new(), out.theta);
    let mut warnings = out.warnings;
    boundary_warnings(data, &theta_hat, &mut warnings);
    Ok(FitResult {
        model: ModelKind::BinomialOnly,
        links: config.links,
        theta_hat,
        loglik: out.loglik,
        score_norm: inf_norm(&out.score),
        diagnostics: diagnostics_or_nan(&out.information),
        information: out.information,
        iterations: out.iterations,
        converged: out.converged,
        loglik_trace: out.trace,
        warnings,
    })
}

/// Deterministic starting values.
///
/// The count coefficients come from a binomial fit to the positive
/// responses. The zero-inflation intercept matches the excess of observed
/// zeros over the zeros the binomial start already predicts; the remaining
/// zero-inflation coefficients start at 0.
pub fn initialize(data: &Dataset, links: LinkPair) -> (ParameterVector, Vec<FitWarning>) {
    let (p, q) = (data.p(), data.q());
    if data.observations().iter().all(|o| o.y == 0) {
        let mut beta = vec![0.0; p];
        beta[0] = 3.0;
        return (ParameterVector::new(beta, vec![0.0; q]), vec![FitWarning::AllZeroResponses]);
    }

    let count_link = links.count_link();
    let positive: Vec<_> = data.observations().iter().filter(|o| o.y > 0).cloned().collect();
    let positive = data.with_observations(positive).expect("subset of a valid dataset");
    let mut mu = vec![0.0; q];
    mu[0] = pooled_intercept(&positive, count_link);
    if positive.check_count_rank().is_ok() && positive.len() >= q {
        let cfg = FitConfig { links, ..Default::default() };
        if let Ok(fit) = fit_binomial_only(&positive, &cfg) {
            if fit.theta_hat.mu.iter().all(|v| v.is_finite())
                && !fit.warnings.iter().any(|w| matches!(w, FitWarning::BoundaryDrift { .. }))
            {
                mu = fit.theta_hat.mu;
            }
        }
    }

    let predicted_zero = data
        .observations()
        .iter()
        .map(|o| {
            let pi = count_link.cdf_unchecked(dot(&mu, &o.w)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            (o.n_trials as f64 * (-pi).ln_1p()).exp()
        })
        .sum::<f64>()
        / data.len() as f64;
    let excess = (data.zero_fraction() - predicted_zero) / (1.0 - predicted_zero).max(PROB_CLAMP);
    let target = excess.clamp(INIT_ZERO_FLOOR, 1.0 - INIT_ZERO_FLOOR);
    let mut beta = vec![0.0; p];
    beta[0] = links.zero_link().invert_by_bisection(target);
    (ParameterVector::new(beta, mu), Vec::new())
}

/// Maximum-likelihood fit of the zero-inflated binomial model.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    check_fit_preconditions(data, data.k(), config)?;
    let (start, warnings) = initialize(data, config.links);
    fit_inner(data, config, start, warnings)
}

/// Like [`fit`] but starting from `start`.
pub fn fit_from(data: &Dataset, config: &FitConfig, start: &ParameterVector) -> Result<FitResult> {
    check_fit_preconditions(data, data.k(), config)?;
    start.check_against(data)?;
    fit_inner(data, config, start.clone(), Vec::new())
}

fn fit_inner(
    data: &Dataset,
    config: &FitConfig,
    start: ParameterVector,
    mut warnings: Vec<FitWarning>,
) -> Result<FitResult> {
    let obj = ZibObjective { data, links: config.links };
    let out = newton(&obj, start.to_stacked(), config)?;
    let theta_hat = ParameterVector::from_stacked(data.p(), &out.theta);
    warnings.extend(out.warnings);
    boundary_warnings(data, &theta_hat, &mut warnings);
    Ok(FitResult {
        model: ModelKind::ZeroInflated,
        links: config.links,
        theta_hat,
        loglik: out.loglik,
        score_norm: inf_norm(&out.score),
        diagnostics: diagnostics_or_nan(&out.information),
        information: out.information,
        iterations: out.iterations,
        converged: out.converged,
        loglik_trace: out.trace,
        warnings,
    })
}

/// Summary of a seeded multi-start run.
#[derive(Debug, Clone)]
pub struct MultiStart {
    pub best: FitResult,
    /// Maximized log-likelihood of every start, the deterministic start first.
    pub logliks: Vec<f64>,
}

/// Refits from `extra_starts` jittered copies of the deterministic start and
/// keeps the best converged fit. Useful to probe flat likelihoods.
pub fn fit_multistart(
    data: &Dataset,
    config: &FitConfig,
    extra_starts: usize,
    seed: u64,
) -> Result<MultiStart> {
    let mut best = fit(data, config)?;
    let mut logliks = vec![best.loglik];
    let (base, _) = initialize(data, config.links);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra_starts {
        let jitter = |v: &f64, rng: &mut ChaCha8Rng| v + rng.random_range(-1.0..1.0);
        let beta = base.beta.iter().map(|v| jitter(v, &mut rng)).collect();
        let mu = base.mu.iter().map(|v| jitter(v, &mut rng)).collect();
        let cand = fit_from(data, config, &ParameterVector::new(beta, mu))?;
        logliks.push(cand.loglik);
        let better = match (cand.converged, best.converged) {
            (true, false) => true,
            (false, true) => false,
            _ => cand.loglik > best.loglik,
        };
        if better {
            best = cand;
        }
    }
    Ok(MultiStart { best, logliks })
}

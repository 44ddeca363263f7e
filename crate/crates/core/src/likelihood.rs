//! Log-likelihood, score and observed information.
//!
//! Every observation contributes through its two linear predictors only, so
//! the derivatives are first formed with respect to `(eta_zero, eta_count)`
//! and then contracted with the covariates. With `Z = [X 0; 0 W]` (k x 2n)
//! the score is `Z C` where `C = (A_1..A_n, B_1..B_n)'` and the negative
//! Hessian is `Z D Z'` where `D` carries three diagonal n x n blocks
//! `D1` (zero/zero), `D2` (count/count) and `D3` (cross).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    log_pmf, mixture_probs, predictors, Dataset, LinkPair, MixtureProbabilities, Observation, ParameterVector,
    PROB_CLAMP,
};

/// Per-observation derivative blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObservationTerms {
    pub loglik: f64,
    /// d loglik / d eta_zero
    pub a: f64,
    /// d loglik / d eta_count
    pub b: f64,
    /// -d2 loglik / d eta_zero^2
    pub d1: f64,
    /// -d2 loglik / d eta_count^2
    pub d2: f64,
    /// -d2 loglik / d eta_zero d eta_count
    pub d3: f64,
}

/// A link output after clamping, with its first two derivatives in eta.
/// Inside the clamped region the probability is constant, so both vanish.
#[derive(Debug, Clone, Copy)]
struct ClampedProb {
    value: f64,
    d1: f64,
    d2: f64,
}

fn clamped(link: crate::link::Link, eta: f64) -> ClampedProb {
    let raw = link.cdf_unchecked(eta);
    if raw < PROB_CLAMP {
        ClampedProb { value: PROB_CLAMP, d1: 0.0, d2: 0.0 }
    } else if raw > 1.0 - PROB_CLAMP {
        ClampedProb { value: 1.0 - PROB_CLAMP, d1: 0.0, d2: 0.0 }
    } else {
        ClampedProb {
            value: raw,
            d1: link.pdf_unchecked(eta),
            d2: link.pdf_prime_unchecked(eta),
        }
    }
}

/// Log-likelihood contribution of one observation plus its derivatives with
/// respect to the two linear predictors.
pub fn observation_terms(
    theta: &ParameterVector,
    obs: &Observation,
    links: LinkPair,
) -> Result<ObservationTerms> {
    let (eta_zero, eta_count) = predictors(theta, obs)?;
    if !eta_zero.is_finite() || !eta_count.is_finite() {
        return Err(Error::Domain("non-finite linear predictor".into()));
    }
    let pz = clamped(links.zero_link(), eta_zero);
    let ps = clamped(links.count_link(), eta_count);
    let (p, pi) = (pz.value, ps.value);
    let q = 1.0 - pi;
    let n = obs.n_trials as f64;
    let loglik = log_pmf(obs.y, obs.n_trials, MixtureProbabilities { p_zero: p, pi_success: pi })?;

    // Derivatives with respect to (p, pi) first.
    let (l_p, l_pp, l_s, l_ss, l_ps);
    if obs.y == 0 {
        // G = p + (1-p) q^n. r is the share of G owed to the binomial zero,
        // s the share owed to the structural zero; both from log-domain terms.
        let ln_binom = (-p).ln_1p() + n * (-pi).ln_1p();
        let r = (ln_binom - loglik).exp();
        let s = (p.ln() - loglik).exp();
        l_p = s / p - r / (1.0 - p);
        l_pp = -l_p * l_p;
        l_s = -n * r / q;
        l_ss = n * (n - 1.0) * r / (q * q) - l_s * l_s;
        l_ps = n * r / ((1.0 - p) * q) - l_p * l_s;
    } else {
        let y = obs.y as f64;
        l_p = -1.0 / (1.0 - p);
        l_pp = -l_p * l_p;
        l_s = y / pi - (n - y) / q;
        l_ss = -y / (pi * pi) - (n - y) / (q * q);
        l_ps = 0.0;
    }

    Ok(ObservationTerms {
        loglik,
        a: l_p * pz.d1,
        b: l_s * ps.d1,
        d1: -(l_pp * pz.d1 * pz.d1 + l_p * pz.d2),
        d2: -(l_ss * ps.d1 * ps.d1 + l_s * ps.d2),
        d3: -(l_ps * pz.d1 * ps.d1),
    })
}

pub fn log_likelihood(theta: &ParameterVector, data: &Dataset, links: LinkPair) -> Result<f64> {
    theta.check_against(data)?;
    let mut total = 0.0;
    for obs in data.observations() {
        total += log_pmf(obs.y, obs.n_trials, mixture_probs(theta, obs, links)?)?;
    }
    Ok(total)
}

/// Score together with its per-observation `A` and `B` components.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWorkspace {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Stacked gradient: the beta block followed by the mu block.
    pub score: Vec<f64>,
}

impl ScoreWorkspace {
    pub fn max_abs(&self) -> f64 {
        self.score.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Observed information `Z D Z'` with its diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix {
    pub matrix: DMatrix<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
}

impl InformationMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        InformationMatrix { matrix, d1: Vec::new(), d2: Vec::new(), d3: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Everything a Newton step needs, from one pass over the data.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loglik: f64,
    pub score: ScoreWorkspace,
    pub information: InformationMatrix,
}

fn terms_for(theta: &ParameterVector, data: &Dataset, links: LinkPair) -> Result<Vec<ObservationTerms>> {
    theta.check_against(data)?;
    data.observations().iter().map(|o| observation_terms(theta, o, links)).collect()
}

fn contract_score(data: &Dataset, terms: &[ObservationTerms]) -> ScoreWorkspace {
    let (p, q) = (data.p(), data.q());
    let mut score = vec![0.0; p + q];
    for (obs, t) in data.observations().iter().zip(terms) {
        for (s, x) in score[..p].iter_mut().zip(&obs.x) {
            *s += x * t.a;
        }
        for (s, w) in score[p..].iter_mut().zip(&obs.w) {
            *s += w * t.b;
        }
    }
    ScoreWorkspace {
        a: terms.iter().map(|t| t.a).collect(),
        b: terms.iter().map(|t| t.b).collect(),
        score,
    }
}

fn contract_information(data: &Dataset, terms: &[ObservationTerms]) -> InformationMatrix {
    let (p, q) = (data.p(), data.q());
    let k = p + q;
    let mut m = DMatrix::<f64>::zeros(k, k);
    for (obs, t) in data.observations().iter().zip(terms) {
        // Upper triangle only; mirrored below.
        for i in 0..p {
            let xi = obs.x[i];
            for j in i..p {
                m[(i, j)] += t.d1 * xi * obs.x[j];
            }
            for j in 0..q {
                m[(i, p + j)] += t.d3 * xi * obs.w[j];
            }
        }
        for i in 0..q {
            let wi = obs.w[i];
            for j in i..q {
                m[(p + i, p + j)] += t.d2 * wi * obs.w[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    InformationMatrix {
        matrix: m,
        d1: terms.iter().map(|t| t.d1).collect(),
        d2: terms.iter().map(|t| t.d2).collect(),
        d3: terms.iter().map(|t| t.d3).collect(),
    }
}

pub fn score(theta: &ParameterVector, data: &Dataset, links: LinkPair) -> Result<ScoreWorkspace> {
    Ok(contract_score(data, &terms_for(theta, data, links)?))
}

/// Negative Hessian of the log-likelihood.
pub fn observed_information(
    theta: &ParameterVector,
    data: &Dataset,
    links: LinkPair,
) -> Result<InformationMatrix> {
    Ok(contract_information(data, &terms_for(theta, data, links)?))
}

pub fn evaluate(theta: &ParameterVector, data: &Dataset, links: LinkPair) -> Result<Evaluation> {
    let terms = terms_for(theta, data, links)?;
    Ok(Evaluation {
        loglik: terms.iter().map(|t| t.loglik).sum(),
        score: contract_score(data, &terms),
        information: contract_information(data, &terms),
    })
}

/// Central-difference step for coordinate `value`.
pub fn scaled_step(step: f64, value: f64) -> f64 {
    step * value.abs().max(1.0)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = scaled_step(step, x[j]);
            work[j] = x[j] + h;
            let up = f(&work);
            work[j] = x[j] - h;
            let down = f(&work);
            work[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; row `i` differentiates
/// output `i`.
pub fn central_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], step: f64) -> DMatrix<f64> {
    let k = x.len();
    let mut work = x.to_vec();
    let mut jac: Option<DMatrix<f64>> = None;
    for j in 0..k {
        let h = scaled_step(step, x[j]);
        work[j] = x[j] + h;
        let up = f(&work);
        work[j] = x[j] - h;
        let down = f(&work);
        work[j] = x[j];
        let m = jac.get_or_insert_with(|| DMatrix::zeros(up.len(), k));
        for i in 0..up.len() {
            m[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac.unwrap_or_else(|| DMatrix::zeros(0, 0))
}

/// Finite-difference gradient of the log-likelihood.
pub fn fd_gradient(
    theta: &ParameterVector,
    data: &Dataset,
    links: LinkPair,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    theta.check_against(data)?;
    let p = data.p();
    let f = |v: &[f64]| {
        log_likelihood(&ParameterVector::from_stacked(p, v), data, links).unwrap_or(f64::NAN)
    };
    Ok(central_gradient(f, &theta.to_stacked(), step))
}

/// Finite-difference negative Hessian, differencing the analytic score.
pub fn fd_hessian(
    theta: &ParameterVector,
    data: &Dataset,
    links: LinkPair,
    step: f64,
) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    theta.check_against(data)?;
    let p = data.p();
    let k = data.k();
    let g = |v: &[f64]| {
        score(&ParameterVector::from_stacked(p, v), data, links)
            .map(|s| s.score)
            .unwrap_or_else(|_| vec![f64::NAN; k])
    };
    let jac = central_jacobian(g, &theta.to_stacked(), step);
    Ok(-(&jac + jac.transpose()) * 0.5)
}

/// Extreme eigenvalues of an information matrix and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub lambda_min: f64,
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub lambda_max: f64,
    /// `lambda_max / lambda_min`; infinite when `lambda_min <= 0`.
    #[serde(deserialize_with = "crate::io::nullable::f64")]
    pub ratio: f64,
    pub positive_definite: bool,
}

pub fn condition_diagnostics(info: &InformationMatrix) -> Result<ConditionDiagnostics> {
    let m = &info.matrix;
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::Dimension("information matrix must be square and nonempty".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("information matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    let positive_definite = lambda_min > 0.0;
    let ratio = if positive_definite { lambda_max / lambda_min } else { f64::INFINITY };
    Ok(ConditionDiagnostics { lambda_min, lambda_max, ratio, positive_definite })
}

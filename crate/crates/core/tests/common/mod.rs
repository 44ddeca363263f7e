//! Reference implementations written independently of the library, used as
//! oracles by the integration and acceptance tests.
#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use zib_core::{Dataset, LinkKind, Observation, ParameterVector};

pub fn cdf(kind: LinkKind, eta: f64) -> f64 {
    match kind {
        LinkKind::Probit => Normal::standard().cdf(eta),
        LinkKind::Logit => 1.0 / (1.0 + (-eta).exp()),
    }
}

pub fn pdf(kind: LinkKind, eta: f64) -> f64 {
    match kind {
        LinkKind::Probit => Normal::standard().pdf(eta),
        LinkKind::Logit => {
            let s = cdf(kind, eta);
            s * (1.0 - s)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct transcription of the mixture likelihood, no stabilization.
pub fn naive_loglik(theta: &[f64], p: usize, data: &Dataset, zero: LinkKind, count: LinkKind) -> f64 {
    let (beta, mu) = theta.split_at(p);
    data.observations()
        .iter()
        .map(|o| {
            let pz = cdf(zero, dot(beta, &o.x));
            let pi = cdf(count, dot(mu, &o.w));
            let (y, n) = (o.y as f64, o.n_trials as f64);
            let lchoose = ln_gamma(n + 1.0) - ln_gamma(y + 1.0) - ln_gamma(n - y + 1.0);
            let binom = (lchoose + y * pi.ln() + (n - y) * (1.0 - pi).ln()).exp();
            if o.y == 0 {
                (pz + (1.0 - pz) * binom).ln()
            } else {
                (1.0 - pz).ln() + binom.ln()
            }
        })
        .sum()
}

/// Central differences of `f` with step `h * max(1, |x_j|)`.
pub fn gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let s = h * x[j].abs().max(1.0);
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[j] += s;
            b[j] -= s;
            (f(&a) - f(&b)) / (2.0 * s)
        })
        .collect()
}

/// Binomial-probit MLE in the count covariates by iteratively reweighted
/// least squares, solved with a hand-written Gaussian elimination.
pub fn irls_probit(data: &Dataset) -> Vec<f64> {
    let q = data.q();
    let mut mu = vec![0.0; q];
    for _ in 0..100 {
        let mut xtwx = vec![vec![0.0; q]; q];
        let mut xtwz = vec![0.0; q];
        for o in data.observations() {
            let eta = dot(&mu, &o.w);
            let pi = cdf(LinkKind::Probit, eta);
            let d = pdf(LinkKind::Probit, eta);
            let n = o.n_trials as f64;
            let wt = n * d * d / (pi * (1.0 - pi));
            let z = eta + (o.y as f64 / n - pi) / d;
            for a in 0..q {
                xtwz[a] += wt * o.w[a] * z;
                for b in 0..q {
                    xtwx[a][b] += wt * o.w[a] * o.w[b];
                }
            }
        }
        let next = solve(xtwx, xtwz);
        let delta = next.iter().zip(&mu).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        mu = next;
        if delta < 1e-13 {
            break;
        }
    }
    mu
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Small deterministic pseudo-random source for test fixtures.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        (self.next_f64() * n as f64) as u64
    }
}

/// Random dataset with `p` zero and `q` count columns (intercepts included)
/// and a parameter of modest size.
pub fn random_instance(rng: &mut Lcg, n: usize, p: usize, q: usize) -> (Dataset, ParameterVector) {
    let obs = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { rng.uniform(-1.0, 1.0) }).collect();
            let w: Vec<f64> = (0..q).map(|j| if j == 0 { 1.0 } else { rng.uniform(-1.0, 1.0) }).collect();
            let trials = 1 + rng.below(12);
            let y = if rng.next_f64() < 0.35 { 0 } else { rng.below(trials + 1) };
            Observation::new(y, trials, x, w)
        })
        .collect();
    let theta = ParameterVector::new(
        (0..p).map(|_| rng.uniform(-1.5, 1.0)).collect(),
        (0..q).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    );
    (Dataset::new(obs).unwrap(), theta)
}

/// Log-likelihood, score and information as plain values.
pub fn evaluate_parts(
    theta: &ParameterVector,
    data: &Dataset,
    links: zib_core::LinkPair,
) -> (f64, Vec<f64>, nalgebra::DMatrix<f64>) {
    let e = zib_core::likelihood::evaluate(theta, data, links).unwrap();
    (e.loglik, e.score.score, e.information.matrix)
}

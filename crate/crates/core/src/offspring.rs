//! Offspring laws: probability generating functions, Bernoulli thinning, and
//! exact samplers.
//!
//! A law here is always proper (weights sum to one) with finite mean and
//! finite second moment. The generating function G and its first two
//! derivatives are evaluated in closed form for the parametric kinds and by
//! Horner's rule for explicit pmfs. Thinning with retention `alpha` acts on
//! the argument: the thinned p.g.f. is `G(1 - alpha + alpha * u)`.

use crate::rng::Stream;
use crate::stats::ln_gamma;
use rand_distr::Distribution as _;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Weights of an explicit pmf must sum to 1 within this tolerance; anything
/// further off is rejected rather than renormalized, so that sampled laws and
/// closed-form evaluations can never drift apart silently.
pub const PMF_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OffspringError {
    #[error("invalid offspring parameter: {0}")]
    InvalidParameter(String),
    #[error("argument {name} = {value} outside [0, 1]")]
    OutOfUnitInterval { name: &'static str, value: f64 },
    #[error("unsupported derivative order {0}; only 1 and 2 are available")]
    UnsupportedOrder(u32),
    #[error("cannot parse offspring spec `{0}` (expected poisson:L, geometric:Q, binomial:N:Q, or pmf:W0,W1,...)")]
    Parse(String),
}

/// An offspring law `(p_k)` on the nonnegative integers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OffspringDistribution {
    /// `p_k = e^{-lambda} lambda^k / k!`
    Poisson { lambda: f64 },
    /// `p_k = q (1-q)^k` for `k >= 0`, mean `(1-q)/q`.
    Geometric { success: f64 },
    /// `p_k = C(n,k) q^k (1-q)^{n-k}`.
    Binomial { n: u32, q: f64 },
    /// Explicit weights `p_k = weights[k]`.
    FinitePmf { weights: Vec<f64> },
}

use OffspringDistribution::*;

fn check_unit(name: &'static str, value: f64) -> Result<(), OffspringError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(OffspringError::OutOfUnitInterval { name, value });
    }
    Ok(())
}

impl OffspringDistribution {
    pub fn poisson(lambda: f64) -> Result<Self, OffspringError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(OffspringError::InvalidParameter(format!(
                "poisson mean must be positive and finite, got {lambda}"
            )));
        }
        Ok(Poisson { lambda })
    }

    pub fn geometric(success: f64) -> Result<Self, OffspringError> {
        if !(success > 0.0 && success < 1.0) {
            return Err(OffspringError::InvalidParameter(format!(
                "geometric success probability must lie in (0, 1), got {success}"
            )));
        }
        Ok(Geometric { success })
    }

    pub fn binomial(n: u32, q: f64) -> Result<Self, OffspringError> {
        if n == 0 {
            return Err(OffspringError::InvalidParameter(
                "binomial trial count must be positive".into(),
            ));
        }
        check_unit("q", q)?;
        Ok(Binomial { n, q })
    }

    pub fn finite_pmf(weights: Vec<f64>) -> Result<Self, OffspringError> {
        if weights.is_empty() {
            return Err(OffspringError::InvalidParameter(
                "pmf needs at least one weight".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OffspringError::InvalidParameter(
                "pmf weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(OffspringError::InvalidParameter(format!(
                "pmf weights sum to {total}, not 1 within {PMF_SUM_TOL}"
            )));
        }
        Ok(FinitePmf { weights })
    }

    /// Mean number of offspring, `G'(1)`.
    pub fn mean(&self) -> f64 {
        match self {
            Poisson { lambda } => *lambda,
            Geometric { success } => (1.0 - success) / success,
            Binomial { n, q } => f64::from(*n) * q,
            FinitePmf { weights } => weights
                .iter()
                .enumerate()
                .map(|(k, w)| k as f64 * w)
                .sum(),
        }
    }

    /// `G(u)` for `u` in `[0, 1]`.
    pub fn pgf(&self, u: f64) -> Result<f64, OffspringError> {
        check_unit("u", u)?;
        Ok(match self {
            Poisson { lambda } => (lambda * (u - 1.0)).exp(),
            Geometric { success } => success / (1.0 - (1.0 - success) * u),
            Binomial { n, q } => (1.0 - q + q * u).powi(*n as i32),
            FinitePmf { weights } => horner(weights, u),
        })
    }

    /// `G'(u)` or `G''(u)`.
    pub fn pgf_derivative(&self, u: f64, order: u32) -> Result<f64, OffspringError> {
        check_unit("u", u)?;
        match order {
            1 => Ok(match self {
                Poisson { lambda } => lambda * (lambda * (u - 1.0)).exp(),
                Geometric { success } => {
                    let r = 1.0 - success;
                    success * r / (1.0 - r * u).powi(2)
                }
                Binomial { n, q } => f64::from(*n) * q * (1.0 - q + q * u).powi(*n as i32 - 1),
                FinitePmf { weights } => {
                    let d: Vec<f64> = weights
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, w)| k as f64 * w)
                        .collect();
                    horner(&d, u)
                }
            }),
            2 => Ok(match self {
                Poisson { lambda } => lambda * lambda * (lambda * (u - 1.0)).exp(),
                Geometric { success } => {
                    let r = 1.0 - success;
                    2.0 * success * r * r / (1.0 - r * u).powi(3)
                }
                Binomial { n, q } => {
                    let nf = f64::from(*n);
                    if *n < 2 {
                        0.0
                    } else {
                        nf * (nf - 1.0) * q * q * (1.0 - q + q * u).powi(*n as i32 - 2)
                    }
                }
                FinitePmf { weights } => {
                    let d: Vec<f64> = weights
                        .iter()
                        .enumerate()
                        .skip(2)
                        .map(|(k, w)| (k * (k - 1)) as f64 * w)
                        .collect();
                    horner(&d, u)
                }
            }),
            other => Err(OffspringError::UnsupportedOrder(other)),
        }
    }

    /// p.g.f. of the traceable-offspring count under thinning with retention
    /// `alpha`: `G(1 - alpha + alpha * u)`.
    pub fn thinned_pgf(&self, alpha: f64, u: f64) -> Result<f64, OffspringError> {
        check_unit("alpha", alpha)?;
        check_unit("u", u)?;
        self.pgf(1.0 - alpha + alpha * u)
    }

    /// `p_k`.
    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            Poisson { lambda } => {
                (k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)).exp()
            }
            Geometric { success } => success * (1.0 - success).powf(k as f64),
            Binomial { n, q } => {
                if k > u64::from(*n) {
                    0.0
                } else {
                    let nf = f64::from(*n);
                    let kf = k as f64;
                    let lnc = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
                    if *q == 0.0 {
                        if k == 0 { 1.0 } else { 0.0 }
                    } else if *q == 1.0 {
                        if k == u64::from(*n) { 1.0 } else { 0.0 }
                    } else {
                        (lnc + kf * q.ln() + (nf - kf) * (1.0 - q).ln()).exp()
                    }
                }
            }
            FinitePmf { weights } => weights.get(k as usize).copied().unwrap_or(0.0),
        }
    }

    /// Largest support point, when the support is finite.
    pub fn max_support(&self) -> Option<u64> {
        match self {
            Binomial { n, .. } => Some(u64::from(*n)),
            FinitePmf { weights } => Some(weights.len() as u64 - 1),
            _ => None,
        }
    }

    /// Exact sample of an offspring count.
    pub fn sample(&self, rng: &mut Stream) -> u64 {
        match self {
            Poisson { lambda } => poisson_sample(*lambda, rng),
            Geometric { success } => {
                // inversion: floor(ln V / ln(1-q)), V uniform on (0, 1]
                let v = 1.0 - rng.next_f64();
                let x = v.ln() / (1.0 - success).ln();
                if x >= 9.0e15 {
                    9_000_000_000_000_000
                } else {
                    x.floor() as u64
                }
            }
            Binomial { n, q } => {
                if *n <= 64 {
                    let mut count = 0;
                    for _ in 0..*n {
                        if rng.bernoulli(*q) {
                            count += 1;
                        }
                    }
                    count
                } else {
                    rand_distr::Binomial::new(u64::from(*n), *q)
                        .expect("valid binomial")
                        .sample(rng)
                }
            }
            FinitePmf { weights } => {
                let u = rng.next_f64();
                let mut cdf = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    cdf += w;
                    if u < cdf {
                        return k as u64;
                    }
                }
                weights.len() as u64 - 1
            }
        }
    }

    /// Sample the (traceable, untraceable) split of one individual's
    /// offspring: the total follows this law, and conditionally on the total
    /// each child is traceable independently with probability `alpha`.
    pub fn sample_offspring_split(&self, alpha: f64, rng: &mut Stream) -> (u64, u64) {
        let total = self.sample(rng);
        if alpha <= 0.0 {
            return (0, total);
        }
        if alpha >= 1.0 {
            return (total, 0);
        }
        let traceable = if total <= 64 {
            let mut c = 0;
            for _ in 0..total {
                if rng.bernoulli(alpha) {
                    c += 1;
                }
            }
            c
        } else {
            rand_distr::Binomial::new(total, alpha)
                .expect("valid binomial")
                .sample(rng)
        };
        (traceable, total - traceable)
    }
}

/// Exact Poisson sampling. Sequential inversion for moderate means; larger
/// means are split in half recursively so the inversion never underflows.
fn poisson_sample(lambda: f64, rng: &mut Stream) -> u64 {
    if lambda > 500.0 {
        return poisson_sample(lambda / 2.0, rng) + poisson_sample(lambda / 2.0, rng);
    }
    let u = rng.next_f64();
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    let cap = (lambda + 60.0 * lambda.sqrt() + 60.0) as u64;
    while u >= cdf && k < cap {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

fn horner(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

impl fmt::Display for OffspringDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Poisson { lambda } => write!(f, "poisson:{lambda}"),
            Geometric { success } => write!(f, "geometric:{success}"),
            Binomial { n, q } => write!(f, "binomial:{n}:{q}"),
            FinitePmf { weights } => {
                write!(f, "pmf:")?;
                for (i, w) in weights.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for OffspringDistribution {
    type Err = OffspringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || OffspringError::Parse(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "poisson" => {
                let lambda: f64 = rest.parse().map_err(|_| bad())?;
                Self::poisson(lambda)
            }
            "geometric" => {
                let q: f64 = rest.parse().map_err(|_| bad())?;
                Self::geometric(q)
            }
            "binomial" => {
                let (n, q) = rest.split_once(':').ok_or_else(bad)?;
                let n: u32 = n.parse().map_err(|_| bad())?;
                let q: f64 = q.parse().map_err(|_| bad())?;
                Self::binomial(n, q)
            }
            "pmf" => {
                let weights: Result<Vec<f64>, _> =
                    rest.split(',').map(|w| w.trim().parse::<f64>()).collect();
                Self::finite_pmf(weights.map_err(|_| bad())?)
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_square_goodness_of_fit, ln_choose};

    fn zoo() -> Vec<OffspringDistribution> {
        vec![
            OffspringDistribution::poisson(2.5).unwrap(),
            OffspringDistribution::poisson(0.7).unwrap(),
            OffspringDistribution::geometric(0.4).unwrap(),
            OffspringDistribution::binomial(4, 0.6).unwrap(),
            OffspringDistribution::finite_pmf(vec![0.1, 0.3, 0.6]).unwrap(),
            OffspringDistribution::finite_pmf(vec![0.5, 0.5]).unwrap(),
        ]
    }

    #[test]
    fn pgf_at_one_is_one() {
        for d in zoo() {
            assert!((d.pgf(1.0).unwrap() - 1.0).abs() < 1e-12, "{d}");
        }
    }

    #[test]
    fn pgf_poisson_closed_form_matches_series() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        // independent route: truncated series sum of p_k u^k
        let series = |u: f64| -> f64 {
            let mut pmf = (-2.5f64).exp();
            let mut sum = pmf;
            for k in 1..=60 {
                pmf *= 2.5 / k as f64;
                sum += pmf * u.powi(k);
            }
            sum
        };
        let got = d.pgf(0.0).unwrap();
        assert!((got - (-2.5f64).exp()).abs() < 1e-15);
        assert!((got - 0.082_084_998_6).abs() < 1e-9);
        for u in [0.0, 0.2, 0.5, 0.8, 1.0] {
            assert!((d.pgf(u).unwrap() - series(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn pgf_simple_pmf() {
        let d = OffspringDistribution::finite_pmf(vec![0.5, 0.5]).unwrap();
        assert!((d.pgf(0.3).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn pgf_rejects_out_of_domain() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        assert!(d.pgf(1.2).is_err());
        assert!(d.pgf(-0.1).is_err());
        assert!(d.pgf_derivative(0.5, 3).is_err());
    }

    #[test]
    fn derivatives_at_one() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        assert!((d.pgf_derivative(1.0, 1).unwrap() - 2.5).abs() < 1e-12);
        assert!((d.pgf_derivative(1.0, 2).unwrap() - 6.25).abs() < 1e-12);
        let two = OffspringDistribution::finite_pmf(vec![0.0, 0.0, 1.0]).unwrap();
        assert!((two.pgf_derivative(0.5, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for d in zoo() {
            for i in 1..19 {
                let u = 0.05 * i as f64;
                let fd1 = (d.pgf(u + h).unwrap() - d.pgf(u - h).unwrap()) / (2.0 * h);
                assert!(
                    (d.pgf_derivative(u, 1).unwrap() - fd1).abs() < 1e-6,
                    "{d} at {u}"
                );
                let fd2 = (d.pgf(u + h).unwrap() - 2.0 * d.pgf(u).unwrap()
                    + d.pgf(u - h).unwrap())
                    / (h * h);
                assert!(
                    (d.pgf_derivative(u, 2).unwrap() - fd2).abs() < 1e-4,
                    "{d} second derivative at {u}"
                );
            }
        }
    }

    #[test]
    fn pgf_monotone_on_grid() {
        for d in zoo() {
            let mut prev = d.pgf(0.0).unwrap();
            for i in 1..=100 {
                let u = i as f64 / 100.0;
                let g = d.pgf(u).unwrap();
                assert!(g + 1e-12 >= prev, "{d} not monotone at {u}");
                prev = g;
            }
            assert!((prev - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn thinned_pgf_degenerate_cases() {
        for d in zoo() {
            assert!((d.thinned_pgf(0.0, 0.2).unwrap() - 1.0).abs() < 1e-12);
            for u in [0.0, 0.4, 1.0] {
                assert!(
                    (d.thinned_pgf(1.0, u).unwrap() - d.pgf(u).unwrap()).abs() < 1e-15
                );
            }
        }
        let d = OffspringDistribution::poisson(2.5).unwrap();
        assert!((d.thinned_pgf(0.5, 0.6).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn thinned_pgf_matches_monte_carlo_mean() {
        // E[u^{v_t}] is the thinned p.g.f.
        let d = OffspringDistribution::poisson(2.5).unwrap();
        let (alpha, u) = (0.5f64, 0.6f64);
        let mut rng = Stream::new(314);
        let n = 1_000_000u64;
        let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let (t, _) = d.sample_offspring_split(alpha, &mut rng);
            let x = u.powi(t as i32);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = d.thinned_pgf(alpha, u).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn thinned_pgf_matches_exhaustive_thinning() {
        // brute force over all (total, split) outcomes of a small pmf
        let weights = vec![0.15, 0.2, 0.3, 0.25, 0.1];
        let d = OffspringDistribution::finite_pmf(weights.clone()).unwrap();
        for &alpha in &[0.0f64, 0.3, 0.7, 1.0] {
            for &u in &[0.0f64, 0.25, 0.5, 0.9, 1.0] {
                let mut expect = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    for i in 0..=k {
                        let b = (ln_choose(k as u64, i as u64)
                            + if i > 0 { i as f64 * alpha.ln() } else { 0.0 }
                            + if k - i > 0 {
                                (k - i) as f64 * (1.0 - alpha).ln()
                            } else {
                                0.0
                            })
                        .exp();
                        expect += w * b * u.powi(i as i32);
                    }
                }
                let got = d.thinned_pgf(alpha, u).unwrap();
                assert!((got - expect).abs() < 1e-12, "alpha={alpha} u={u}");
            }
        }
    }

    #[test]
    fn split_degenerate_alphas() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        let mut rng = Stream::new(11);
        for _ in 0..200 {
            let (t, _) = d.sample_offspring_split(0.0, &mut rng);
            assert_eq!(t, 0);
            let (_, u) = d.sample_offspring_split(1.0, &mut rng);
            assert_eq!(u, 0);
        }
    }

    #[test]
    fn split_means_match_thinned_rates() {
        let d = OffspringDistribution::poisson(2.5).unwrap();
        let mut rng = Stream::new(2024);
        let n = 1_000_000u64;
        let (mut st, mut su, mut st2, mut su2) = (0f64, 0f64, 0f64, 0f64);
        for _ in 0..n {
            let (t, u) = d.sample_offspring_split(0.5, &mut rng);
            st += t as f64;
            su += u as f64;
            st2 += (t * t) as f64;
            su2 += (u * u) as f64;
        }
        let nf = n as f64;
        let (mt, mu) = (st / nf, su / nf);
        let se_t = ((st2 / nf - mt * mt) / nf).sqrt();
        let se_u = ((su2 / nf - mu * mu) / nf).sqrt();
        assert!((mt - 1.25).abs() < 3.0 * se_t, "mean {mt} se {se_t}");
        assert!((mu - 1.25).abs() < 3.0 * se_u, "mean {mu} se {se_u}");
    }

    #[test]
    fn split_traceable_pmf_chi_square() {
        // v_t pmf should match sum_k p_k Binom(k, alpha)
        let d = OffspringDistribution::poisson(2.5).unwrap();
        let alpha = 0.4;
        let mut rng = Stream::new(99);
        let n = 1_000_000usize;
        let kmax = 24usize;
        let mut counts = vec![0u64; kmax + 1];
        for _ in 0..n {
            let (t, _) = d.sample_offspring_split(alpha, &mut rng);
            counts[(t as usize).min(kmax)] += 1;
        }
        // thinned Poisson(2.5 * 0.4) = Poisson(1.0)
        let mut probs = vec![0.0; kmax + 1];
        let lam = 2.5 * alpha;
        let mut pmf = (-lam).exp();
        let mut acc = 0.0;
        for (k, slot) in probs.iter_mut().enumerate().take(kmax) {
            if k > 0 {
                pmf *= lam / k as f64;
            }
            *slot = pmf;
            acc += pmf;
        }
        probs[kmax] = 1.0 - acc;
        let (_, _, p_value) = chi_square_goodness_of_fit(&counts, &probs, 5.0);
        assert!(p_value > 0.001, "p = {p_value}");
    }

    #[test]
    fn sample_means_match() {
        let mut rng = Stream::new(7);
        for d in zoo() {
            let n = 200_000;
            let sum: u64 = (0..n).map(|_| d.sample(&mut rng)).sum();
            let mean = sum as f64 / n as f64;
            assert!((mean - d.mean()).abs() < 0.03 * (1.0 + d.mean()), "{d}: {mean}");
        }
    }

    #[test]
    fn large_poisson_mean_splits_exactly() {
        let mut rng = Stream::new(8);
        let lam = 1800.0;
        let n = 20_000;
        let sum: f64 = (0..n).map(|_| poisson_sample(lam, &mut rng) as f64).sum();
        let mean = sum / n as f64;
        // s.e. = sqrt(1800/20000) = 0.3
        assert!((mean - lam).abs() < 1.5, "{mean}");
    }

    #[test]
    fn rejects_improper_pmf() {
        assert!(OffspringDistribution::finite_pmf(vec![0.5, 0.5001]).is_err());
        assert!(OffspringDistribution::finite_pmf(vec![0.4, 0.3]).is_err());
        assert!(OffspringDistribution::finite_pmf(vec![]).is_err());
        assert!(OffspringDistribution::finite_pmf(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn parses_cli_specs() {
        assert_eq!(
            "poisson:2.5".parse::<OffspringDistribution>().unwrap(),
            OffspringDistribution::poisson(2.5).unwrap()
        );
        assert_eq!(
            "geometric:0.4".parse::<OffspringDistribution>().unwrap(),
            OffspringDistribution::geometric(0.4).unwrap()
        );
        assert_eq!(
            "binomial:4:0.6".parse::<OffspringDistribution>().unwrap(),
            OffspringDistribution::binomial(4, 0.6).unwrap()
        );
        assert_eq!(
            "pmf:0.1,0.3,0.6".parse::<OffspringDistribution>().unwrap(),
            OffspringDistribution::finite_pmf(vec![0.1, 0.3, 0.6]).unwrap()
        );
        assert!("zipf:2".parse::<OffspringDistribution>().is_err());
        assert!("poisson".parse::<OffspringDistribution>().is_err());
    }

    #[test]
    fn geometric_mean_convention() {
        let d = OffspringDistribution::geometric(0.4).unwrap();
        assert!((d.mean() - 1.5).abs() < 1e-12);
        assert!((d.pmf(0) - 0.4).abs() < 1e-12);
        assert!((d.pmf(2) - 0.4 * 0.36).abs() < 1e-12);
    }
}

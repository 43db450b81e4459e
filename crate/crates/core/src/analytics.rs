//! Deterministic numerics for the traced process.
//!
//! Everything here reduces to the pair of recursions
//!
//! ```text
//! g_0 = h_0 = s,   g_n = s G(1 - alpha + alpha g_{n-1}),
//!                  h_n = s alpha G'(1 - alpha + alpha g_{n-1}) h_{n-1},
//! ```
//!
//! evaluated at `s = 1 - p`. `w_n = h_n(1-p)` decays geometrically, with the
//! certified envelope `w_n <= c1(p) (1-p)^n` where `c1(p) = (-e ln(1-p))^{-1}`,
//! so every series below is truncated with an explicit tail bound rather than
//! a fixed iteration count.
//!
//! From the `w_n` come the per-generation seed means `v_n`, their sum `y_b`
//! (mean total cluster-seed output of one traceable cluster, which decides
//! extinction), the growth exponent `theta` solving `sum e^{-n theta} v_n = 1`,
//! and the critical trace probability `e_b(p)` found by bisection in `alpha`.

use crate::offspring::{OffspringDistribution, OffspringError};
use crate::params::CtpParams;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("p = 0 admits no certified truncation of the seed-output series")]
    NoCertifiedTruncation,
    #[error("theta undefined (deep subcritical): transform stays below 1 on the admissible bracket")]
    ThetaUndefined,
    #[error("series truncation did not converge (p too close to 0)")]
    TruncationOverflow,
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Offspring(#[from] OffspringError),
}

/// Geometric-envelope constant `c1(p) = (-e ln(1-p))^{-1}` for `p` in (0, 1).
pub fn c1(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    1.0 / (-std::f64::consts::E * (1.0 - p).ln())
}

/// Finite prefixes of the sequences `g`, `h`, `w`, `v` at `s = 1 - p`,
/// together with a certified bound on the omitted tail of `sum v_n`.
#[derive(Debug, Clone)]
pub struct AnalyticSequences {
    /// Evaluation point, `1 - p`.
    pub s: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// `w_n = h_n(1-p)`; equal to `h` since everything is evaluated at `1-p`.
    pub w: Vec<f64>,
    /// Per-generation mean seed output of one cluster; `v[0]` is unused (0).
    pub v: Vec<f64>,
    /// Upper bound on `sum_{n > n_max} v_n`.
    pub tail_bound: f64,
}

/// Evaluate the recursions up to index `n_max` inclusive.
///
/// Requires `p > 0`: the tail certificate comes from the geometric envelope
/// of `w`, which is vacuous at `p = 0`. At `p = 1` the whole `w` sequence is
/// identically zero and the tail bound is exactly 0.
pub fn compute_sequences(
    params: &CtpParams,
    n_max: usize,
) -> Result<AnalyticSequences, AnalyticsError> {
    if params.p == 0.0 {
        return Err(AnalyticsError::NoCertifiedTruncation);
    }
    if n_max < 1 {
        return Err(AnalyticsError::Domain("n_max must be at least 1".into()));
    }
    let s = 1.0 - params.p;
    let alpha = params.alpha;
    let dist = &params.dist;
    let b = params.b as usize;
    let (lam_t, lam_u) = (params.lambda_t(), params.lambda_u());

    let mut g = Vec::with_capacity(n_max + 1);
    let mut h = Vec::with_capacity(n_max + 1);
    g.push(s);
    h.push(s);
    for n in 1..=n_max {
        let arg = 1.0 - alpha + alpha * g[n - 1];
        g.push(s * dist.pgf(arg)?);
        h.push(s * alpha * dist.pgf_derivative(arg, 1)? * h[n - 1]);
    }
    let w = h.clone();

    let mut v = vec![0.0; n_max + 1];
    for (n, slot) in v.iter_mut().enumerate().skip(1) {
        *slot = if n <= b {
            lam_u * lam_t.powi(n as i32 - 1)
        } else {
            lam_u * lam_t.powi(b as i32) * w[n - b - 1]
        };
    }

    // Tail over n > n_max: exact geometric prefix terms (when n_max < b)
    // plus the certified envelope of the remaining w-part.
    let tail_bound = if params.p == 1.0 {
        if n_max < b {
            (n_max + 1..=b).map(|n| lam_u * lam_t.powi(n as i32 - 1)).sum()
        } else {
            0.0
        }
    } else {
        let mut t = 0.0;
        for n in n_max + 1..=b {
            t += lam_u * lam_t.powi(n as i32 - 1);
        }
        let start = n_max.saturating_sub(b);
        t + lam_u * lam_t.powi(b as i32) * c1(params.p) * s.powi(start as i32) / params.p
    };

    Ok(AnalyticSequences {
        s,
        g,
        h,
        w,
        v,
        tail_bound,
    })
}

/// Mean total seed output `y_b` of one traceable cluster, accurate to `tol`.
pub fn seed_mean(params: &CtpParams, tol: f64) -> Result<f64, AnalyticsError> {
    if params.p == 0.0 {
        return Err(AnalyticsError::NoCertifiedTruncation);
    }
    assert!(tol > 0.0);
    let mut n_max = 64.max(params.b as usize + 2);
    loop {
        let seqs = compute_sequences(params, n_max)?;
        if seqs.tail_bound < tol {
            return Ok(seqs.v.iter().sum());
        }
        if n_max > (1 << 24) {
            return Err(AnalyticsError::TruncationOverflow);
        }
        n_max *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Extinct,
    SurvivesWpp,
}

/// Extinction classification together with the rule that decided it.
#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionVerdict {
    pub verdict: Verdict,
    pub seed_mean: Option<f64>,
    /// Which criterion fired, e.g. the seed-mean threshold or one of the
    /// boundary cases that do not need the series at all.
    pub rule: &'static str,
}

/// Decide extinction versus survival-with-positive-probability.
///
/// Boundary cases are handled exactly; the generic case compares `y_b` to 1
/// with tolerance `tol`, reporting extinction when `|y_b - 1| < tol` since
/// the boundary itself belongs to the extinction region for `p > 0`.
pub fn classify_extinction(
    params: &CtpParams,
    tol: f64,
) -> Result<ExtinctionVerdict, AnalyticsError> {
    let lam = params.lambda();
    if params.p == 0.0 {
        return Ok(if lam <= 1.0 {
            ExtinctionVerdict {
                verdict: Verdict::Extinct,
                seed_mean: None,
                rule: "subcritical base",
            }
        } else {
            ExtinctionVerdict {
                verdict: Verdict::SurvivesWpp,
                seed_mean: None,
                rule: "no detection",
            }
        });
    }
    if params.alpha == 1.0 {
        // one detection removes everything, and detection is certain for p > 0
        return Ok(ExtinctionVerdict {
            verdict: Verdict::Extinct,
            seed_mean: Some(0.0),
            rule: "full tracing",
        });
    }
    if params.b == 0 && lam * (1.0 - params.p) <= 1.0 {
        let y = seed_mean(params, tol)?;
        return Ok(ExtinctionVerdict {
            verdict: Verdict::Extinct,
            seed_mean: Some(y),
            rule: "zero-delay detection dominates",
        });
    }
    if lam * (1.0 - params.p) * (1.0 - params.alpha) > 1.0 {
        let y = seed_mean(params, tol)?;
        return Ok(ExtinctionVerdict {
            verdict: Verdict::SurvivesWpp,
            seed_mean: Some(y),
            rule: "untraced undetected offspring already supercritical",
        });
    }
    let y = seed_mean(params, tol)?;
    Ok(if (y - 1.0).abs() < tol {
        ExtinctionVerdict {
            verdict: Verdict::Extinct,
            seed_mean: Some(y),
            rule: "critical-within-tol",
        }
    } else if y < 1.0 {
        ExtinctionVerdict {
            verdict: Verdict::Extinct,
            seed_mean: Some(y),
            rule: "seed-mean threshold",
        }
    } else {
        ExtinctionVerdict {
            verdict: Verdict::SurvivesWpp,
            seed_mean: Some(y),
            rule: "seed-mean threshold",
        }
    })
}

/// Result of evaluating the transform `T(theta) = sum e^{-n theta} v_n` with
/// certified truncation. `AboveOne` means the partial sums provably exceeded
/// `1 + tol`, which is all bisection needs far from the root.
#[derive(Debug, Clone, Copy)]
enum TransformEval {
    Value(f64),
    AboveOne,
}

fn transform(params: &CtpParams, theta: f64, tol: f64) -> Result<TransformEval, AnalyticsError> {
    let s = 1.0 - params.p;
    let b = params.b as usize;
    let (lam_t, lam_u) = (params.lambda_t(), params.lambda_u());

    let mut total = 0.0;
    for n in 1..=b {
        total += (-(n as f64) * theta).exp() * lam_u * lam_t.powi(n as i32 - 1);
    }
    if params.p == 1.0 {
        // w vanishes identically; the prefix is the whole transform
        return Ok(TransformEval::Value(total));
    }

    let scale = lam_u * lam_t.powi(b as i32);
    if scale == 0.0 {
        return Ok(TransformEval::Value(total));
    }
    let rho = (-theta).exp() * s;
    let c = c1(params.p);
    let mut g_prev = s;
    let mut h_prev = s;
    let mut m = 0usize;
    loop {
        let term = scale * (-((m + b + 1) as f64) * theta).exp() * h_prev;
        total += term;
        if rho < 1.0 {
            // remaining tail: sum_{j > m} scale e^{-(b+1+j) theta} w_j
            //              <= scale e^{-(b+1) theta} c1 rho^{m+1} / (1 - rho)
            let tail = scale * (-((b + 1) as f64) * theta).exp() * c * rho.powi(m as i32 + 1)
                / (1.0 - rho);
            if tail < tol {
                return Ok(TransformEval::Value(total));
            }
        }
        if total > 1.0 + tol && rho >= 1.0 - 1e-12 {
            return Ok(TransformEval::AboveOne);
        }
        if total > 1e12 {
            return Ok(TransformEval::AboveOne);
        }
        if m > 5_000_000 {
            return Err(AnalyticsError::TruncationOverflow);
        }
        let arg = 1.0 - params.alpha + params.alpha * g_prev;
        let gp = s * params.dist.pgf(arg)?;
        h_prev *= s * params.alpha * params.dist.pgf_derivative(arg, 1)?;
        g_prev = gp;
        m += 1;
    }
}

fn transform_above_one(eval: TransformEval, tol: f64) -> bool {
    match eval {
        TransformEval::Value(v) => v > 1.0 + tol,
        TransformEval::AboveOne => true,
    }
}

/// Growth exponent of the seed process: the `theta` with
/// `sum_n e^{-n theta} v_n = 1`, found by bisection. Positive exactly when
/// `y_b > 1`; zero is returned when `|y_b - 1| <= tol`.
pub fn malthusian_theta(params: &CtpParams, tol: f64) -> Result<f64, AnalyticsError> {
    if params.p == 0.0 {
        return Err(AnalyticsError::NoCertifiedTruncation);
    }
    assert!(tol > 0.0);
    let eval_tol = (tol * 0.5).min(1e-12);
    let y = seed_mean(params, eval_tol)?;
    if (y - 1.0).abs() <= tol {
        return Ok(0.0);
    }

    let (mut lo, mut hi);
    if y > 1.0 {
        lo = 0.0;
        hi = 1.0;
        let mut steps = 0;
        while transform_above_one(transform(params, hi, eval_tol)?, eval_tol) {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > 60 {
                return Err(AnalyticsError::Domain(
                    "transform does not drop below 1".into(),
                ));
            }
        }
    } else {
        // hunt a lower endpoint where the transform exceeds 1, walking toward
        // the divergence boundary of the transform
        hi = 0.0;
        let boundary = if params.p == 1.0 { -64.0 } else { (1.0 - params.p).ln() };
        let mut found = None;
        for k in 1..=48 {
            let cand = if params.p == 1.0 {
                -(2f64.powi(k)).min(1e6)
            } else {
                boundary * (1.0 - 0.5f64.powi(k))
            };
            match transform(params, cand, eval_tol) {
                Ok(eval) if transform_above_one(eval, eval_tol) => {
                    found = Some(cand);
                    break;
                }
                Ok(_) => hi = cand,
                Err(AnalyticsError::TruncationOverflow) => break,
                Err(e) => return Err(e),
            }
        }
        lo = found.ok_or(AnalyticsError::ThetaUndefined)?;
    }

    // invariant: T(lo) > 1 >= T(hi)
    let mut last_mid = 0.5 * (lo + hi);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        last_mid = mid;
        let t_mid = transform(params, mid, eval_tol)?;
        // the transform is strictly decreasing in theta on the bracket
        if let (Ok(TransformEval::Value(vlo)), TransformEval::Value(vm)) =
            (transform(params, lo, eval_tol), t_mid)
        {
            assert!(
                vlo + 4.0 * eval_tol >= vm,
                "transform not decreasing: T({lo}) = {vlo} < T({mid}) = {vm}"
            );
        }
        if let (TransformEval::Value(vm), Ok(TransformEval::Value(vhi))) =
            (t_mid, transform(params, hi, eval_tol))
        {
            assert!(
                vm + 4.0 * eval_tol >= vhi,
                "transform not decreasing: T({mid}) = {vm} < T({hi}) = {vhi}"
            );
        }
        match t_mid {
            TransformEval::Value(v) if (v - 1.0).abs() <= tol => return Ok(mid),
            eval => {
                if transform_above_one(eval, 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if hi - lo < 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(last_mid)
}

/// The critical trace probability for fixed `(b, p)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalAlpha {
    pub value: f64,
    /// Set when `p = 0`, where the returned value 1 is a boundary convention:
    /// with no detection the process survives at every `alpha`, including 1.
    pub p_zero_boundary: bool,
}

/// Bisection for `e_b(p)`, the threshold trace probability: survival below,
/// extinction at and above. The bisection is on the sign of `y_b - 1`, which
/// flips exactly once in `alpha` even though `y_b` itself is not monotone.
pub fn critical_alpha(
    dist: &OffspringDistribution,
    b: u32,
    p: f64,
    tol: f64,
) -> Result<CriticalAlpha, AnalyticsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalyticsError::Domain(format!("p = {p} outside [0, 1]")));
    }
    assert!(tol > 0.0);
    if p == 0.0 {
        return Ok(CriticalAlpha {
            value: 1.0,
            p_zero_boundary: true,
        });
    }
    let y_at = |alpha: f64| -> Result<f64, AnalyticsError> {
        let params = CtpParams::new(b, p, alpha, dist.clone())
            .map_err(|e| AnalyticsError::Domain(e.to_string()))?;
        seed_mean(&params, 1e-13)
    };
    if y_at(0.0)? <= 1.0 {
        return Ok(CriticalAlpha {
            value: 0.0,
            p_zero_boundary: false,
        });
    }
    if y_at(1.0)? > 1.0 {
        // cannot happen for p > 0 (full tracing forces y = 0), but guard anyway
        return Ok(CriticalAlpha {
            value: 1.0,
            p_zero_boundary: false,
        });
    }
    let mut lo = 0.0; // survival side: y > 1
    let mut hi = 1.0; // extinction side: y <= 1
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if y_at(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalAlpha {
        value: 0.5 * (lo + hi),
        p_zero_boundary: false,
    })
}

/// Closed-form seed mean at `p = 1`:
/// `f_b(alpha) = lambda (1 - alpha) sum_{n=0}^{b-1} (alpha lambda)^n`.
pub fn f_b(lambda: f64, b: u32, alpha: f64) -> Result<f64, AnalyticsError> {
    if b == 0 {
        return Err(AnalyticsError::Domain(
            "f_b needs b >= 1 (empty sum at b = 0)".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AnalyticsError::Domain(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    let mut geom = 0.0;
    let mut term = 1.0;
    for _ in 0..b {
        geom += term;
        term *= alpha * lambda;
    }
    Ok(lambda * (1.0 - alpha) * geom)
}

/// Infimum `alpha` with `f_b(alpha) <= 1`, i.e. the critical trace
/// probability at `p = 1`, by bisection on the sign of `f_b - 1`.
pub fn alpha_crit_p1(lambda: f64, b: u32, tol: f64) -> Result<f64, AnalyticsError> {
    if lambda <= 1.0 {
        return Err(AnalyticsError::Domain(format!(
            "alpha_crit_p1 needs a supercritical mean, got lambda = {lambda}"
        )));
    }
    assert!(tol > 0.0);
    // f_b(0) = lambda > 1 and f_b(1) = 0; extinction is upward closed in alpha
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f_b(lambda, b, mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sufficient condition for survival at `b = 0` from the two leading terms of
/// the seed-output series: `lambda (1-p)(1-alpha)(1 + alpha (1-p) G'(1 - alpha p)) > 1`.
pub fn survival_sufficient_2crit(
    dist: &OffspringDistribution,
    p: f64,
    alpha: f64,
) -> Result<bool, AnalyticsError> {
    for (name, v) in [("p", p), ("alpha", alpha)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(AnalyticsError::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let lam = dist.mean();
    let lhs = lam
        * (1.0 - p)
        * (1.0 - alpha)
        * (1.0 + alpha * (1.0 - p) * dist.pgf_derivative(1.0 - alpha * p, 1)?);
    Ok(lhs > 1.0)
}

/// Analytic sandwich for the critical curve: the tightest lower bound among
/// the known ones, and the upper bound available at `b = 0`.
pub fn eb_bounds(
    dist: &OffspringDistribution,
    b: u32,
    p: f64,
) -> Result<(f64, f64), AnalyticsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalyticsError::Domain(format!("p = {p} outside [0, 1]")));
    }
    let lam = dist.mean();
    let mut lower: f64 = 0.0;
    if p < 1.0 && lam * (1.0 - p) > 1.0 {
        lower = lower.max(1.0 - 1.0 / (lam * (1.0 - p)));
    }
    if b >= 1 && lam > 1.0 {
        lower = lower.max(alpha_crit_p1(lam, b, 1e-12)?);
        // large-delay regime: valid once 4b < lambda^b
        if 4.0 * f64::from(b) < lam.powi(b as i32) {
            lower = lower.max(1.0 - 2.0 * lam.powi(-(b as i32)));
        }
    }
    let upper = if b == 0 { 1.0 - p / lam } else { 1.0 };
    Ok((lower, upper))
}

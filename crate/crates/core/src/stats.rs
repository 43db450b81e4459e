//! Small statistics toolbox: log-gamma, chi-square tail probabilities,
//! binomial coefficients in log space, confidence intervals, and least
//! squares slopes. Enough for the validation suites; no external stats crate.

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "reg_lower_gamma domain");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series representation
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..500 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // continued fraction for Q(a, x), modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h;
        1.0 - q
    }
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom, i.e. the p-value of an observed statistic.
pub fn chi_square_sf(stat: f64, dof: u64) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    (1.0 - reg_lower_gamma(dof as f64 / 2.0, stat / 2.0)).clamp(0.0, 1.0)
}

/// Two-sample chi-square homogeneity test over integer-valued observations.
///
/// Bins are pooled from the right so that every pooled bin has expected count
/// at least `min_expected` in both samples. Returns `(statistic, dof, p_value)`.
pub fn chi_square_two_sample(
    counts_a: &std::collections::BTreeMap<u64, u64>,
    counts_b: &std::collections::BTreeMap<u64, u64>,
    min_expected: f64,
) -> (f64, u64, f64) {
    let n_a: u64 = counts_a.values().sum();
    let n_b: u64 = counts_b.values().sum();
    assert!(n_a > 0 && n_b > 0, "empty sample");
    let total = (n_a + n_b) as f64;
    let frac_a = n_a as f64 / total;
    let frac_b = n_b as f64 / total;

    let mut keys: Vec<u64> = counts_a.keys().chain(counts_b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();

    // pool adjacent values until both expected counts clear the floor
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut acc_a = 0u64;
    let mut acc_b = 0u64;
    for k in keys {
        acc_a += counts_a.get(&k).copied().unwrap_or(0);
        acc_b += counts_b.get(&k).copied().unwrap_or(0);
        let pooled = (acc_a + acc_b) as f64;
        if pooled * frac_a >= min_expected && pooled * frac_b >= min_expected {
            bins.push((acc_a, acc_b));
            acc_a = 0;
            acc_b = 0;
        }
    }
    if acc_a + acc_b > 0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_a;
            last.1 += acc_b;
        } else {
            bins.push((acc_a, acc_b));
        }
    }

    if bins.len() <= 1 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for &(a, b) in &bins {
        let pooled = (a + b) as f64;
        let ea = pooled * frac_a;
        let eb = pooled * frac_b;
        stat += (a as f64 - ea).powi(2) / ea + (b as f64 - eb).powi(2) / eb;
    }
    let dof = bins.len() as u64 - 1;
    (stat, dof, chi_square_sf(stat, dof))
}

/// One-sample chi-square goodness-of-fit against given probabilities.
/// `probs` must cover the whole support; a final catch-all bin absorbs the
/// remaining mass. Pools bins with expected count below `min_expected`.
pub fn chi_square_goodness_of_fit(
    counts: &[u64],
    probs: &[f64],
    min_expected: f64,
) -> (f64, u64, f64) {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut stat = 0.0;
    let mut dof_bins = 0u64;
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        acc_obs += c as f64;
        acc_exp += p * nf;
        if acc_exp >= min_expected {
            stat += (acc_obs - acc_exp).powi(2) / acc_exp;
            dof_bins += 1;
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        stat += (acc_obs - acc_exp).powi(2) / acc_exp;
        dof_bins += 1;
    }
    if dof_bins <= 1 {
        return (0.0, 0, 1.0);
    }
    let dof = dof_bins - 1;
    (stat, dof, chi_square_sf(stat, dof))
}

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0);
    let z = 1.96f64;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    assert!(n >= 1.0);
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

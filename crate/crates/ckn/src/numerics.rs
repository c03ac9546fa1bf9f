//! Scalar helpers: overflow-safe special functions, sphere constants, and
//! least-squares line fits used by the scaling experiments.

/// log(cosh x), valid for any x without overflow.
///
/// Rewrites cosh through the dominant exponential:
/// log cosh x = |x| + log(1 + e^{-2|x|}) - log 2.
pub fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// log(1 + e^x) without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// sign(v) |v|^p with a hard zero below the denormal-risk cutoff.
///
/// The power is generically irrational, so integer fast paths do not apply;
/// the cutoff keeps exp/log evaluation away from |v| where |v|^p underflows.
pub fn signed_pow(v: f64, p: f64) -> f64 {
    if v.abs() < 1e-300 {
        return 0.0;
    }
    v.signum() * v.abs().powf(p)
}

/// Euler gamma function (thin wrapper so the choice of backend sits in one place).
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Surface measure of the unit sphere S^{n-1} in R^n: 2 pi^{n/2} / Gamma(n/2).
pub fn sphere_area(n: u32) -> f64 {
    let half = f64::from(n) / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// Dimension of the space of degree-l spherical harmonics on S^{n-1}.
///
/// binom(n+l-1, l) - binom(n+l-3, l-2); equals 1 for l = 0 and n-ish growth
/// afterwards. Plain u128 binomials suffice for the small l used here.
pub fn harmonic_multiplicity(n: u32, l: u32) -> u64 {
    fn binom(n: u64, k: u64) -> u128 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * u128::from(n - i) / u128::from(i + 1);
        }
        acc
    }
    let n = u64::from(n);
    let l = u64::from(l);
    let d = binom(n + l - 1, l) - if l >= 2 { binom(n + l - 3, l - 2) } else { 0 };
    u64::try_from(d).expect("harmonic multiplicity fits in u64 for the modes used")
}

/// n evenly spaced points from lo to hi inclusive (n >= 2).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

/// n logarithmically spaced points from lo to hi inclusive (both > 0).
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Ordinary least-squares line fit y = slope x + intercept.
///
/// Returns (slope, intercept, stderr_slope). The slope standard error uses the
/// unbiased residual variance; it is 0 when n = 2.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "line fit needs at least two points");
    let nf = n as f64;
    let xm = xs.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let stderr = if n > 2 {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum();
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-14;

    #[test]
    fn log_cosh_matches_direct_form_in_safe_range() {
        for &x in &[0.0_f64, 0.3, -0.7, 2.0, -5.5, 20.0] {
            let direct = x.cosh().ln();
            assert!((log_cosh(x) - direct).abs() <= TOL * direct.abs().max(1.0));
        }
    }

    #[test]
    fn log_cosh_survives_huge_arguments() {
        // cosh(1e4) overflows; log cosh -> |x| - log 2.
        let v = log_cosh(1e4);
        assert!((v - (1e4 - std::f64::consts::LN_2)).abs() < 1e-10);
        assert_eq!(log_cosh(-1e4), v);
    }

    #[test]
    fn signed_pow_is_odd_and_cuts_off() {
        assert_eq!(signed_pow(0.0, 1.7), 0.0);
        assert_eq!(signed_pow(1e-301, 1.7), 0.0);
        let v = signed_pow(-2.0, 5.0);
        assert!((v + 32.0).abs() < 1e-13);
        assert_eq!(signed_pow(2.0, 5.0), -v);
    }

    #[test]
    fn gamma_exact_at_half_integers() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((gamma(0.5) - sqrt_pi).abs() < 1e-14);
        assert!((gamma(1.5) - 0.5 * sqrt_pi).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas_match_low_dimensional_formulas() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * pi * pi).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * pi * pi / 3.0).abs() < 1e-13);
    }

    #[test]
    fn harmonic_multiplicities_match_known_tables() {
        // S^2: 2l+1. S^3: (l+1)^2.
        for l in 0..6 {
            assert_eq!(harmonic_multiplicity(3, l), u64::from(2 * l + 1));
            assert_eq!(harmonic_multiplicity(4, l), u64::from((l + 1) * (l + 1)));
        }
        assert_eq!(harmonic_multiplicity(5, 2), 14);
    }

    #[test]
    fn line_fit_recovers_exact_line_and_flags_noise() {
        let xs = linspace(0.0, 4.0, 9);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (s, b, se) = line_fit(&xs, &ys);
        assert!((s - 3.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12 && se < 1e-12);

        let noisy: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 3.0 * x + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let (_, _, se_noisy) = line_fit(&xs, &noisy);
        assert!(se_noisy > 1e-3);
    }

    #[test]
    fn logspace_endpoints_and_monotonicity() {
        let v = logspace(1e-4, 1e-1, 7);
        assert!((v[0] - 1e-4).abs() < 1e-18);
        assert!((v[6] - 1e-1).abs() < 1e-15);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}

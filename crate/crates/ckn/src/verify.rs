//! End-to-end verification battery.
//!
//! Eleven numbered checks cover the whole pipeline: closed forms against
//! independent routes, spectra against the exact bound-state formula, the
//! symmetry-breaking curve, interaction decay, the corrector trichotomy, the
//! counterexample energy window, the three stability experiments, and
//! determinism of the reports. The same runners back the test suite and the
//! command-line `verify-all`; quick mode shrinks sweeps and grids and widens
//! the sharper tolerances fourfold.

use std::time::Instant;

use serde::Serialize;

use crate::bubbles::{interaction, BubbleConfig};
use crate::error::Result;
use crate::functionals::{
    best_constant_inv, deficit, profile_mass, profile_mass_quadrature, sobolev_constant,
};
use crate::grid::{CylinderGrid, ModeFunction};
use crate::numerics::{line_fit, linspace, logspace};
use crate::params::{felli_schneider, make_params, CknParams};
use crate::profiles::{d12a_inner, h1_inner_analytic, Extremal, SmoothFn, SmoothTerm};
use crate::reduction::{counterexample_state, gap_sweep};
use crate::spectral::{
    find_symmetry_breaking_b, oracle_spectrum, refined_eigenvalue, LinearizedOperator,
};
use crate::stability::{
    deficit_vs_distance, multi_bubble_stability, one_bubble_stability, EnsembleSpec,
};

pub const CRITERION_COUNT: usize = 11;

/// Outcome of one numbered check.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    /// Wall time; not serialized so reports stay byte-reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

pub fn criterion_name(id: usize) -> &'static str {
    match id {
        1 => "best constant against independent closed forms",
        2 => "profile identities and the weighted-space isometry",
        3 => "linearized spectra against the exact bound states",
        4 => "symmetry-breaking threshold against the closed form",
        5 => "interaction decay rate and prefactor",
        6 => "corrector size trichotomy",
        7 => "counterexample energy and residual scale",
        8 => "one-bubble distance growth",
        9 => "multi-bubble distance trichotomy",
        10 => "deficit dominates squared distance on an ensemble",
        11 => "experiment reports are deterministic",
        _ => "unknown criterion",
    }
}

/// Run check `id` (1-based). Unknown ids fail cleanly.
pub fn run_criterion(id: usize, quick: bool) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => closed_form_constants(quick),
        2 => profile_identities(quick),
        3 => spectra_match_oracle(quick),
        4 => symmetry_breaking_curve(quick),
        5 => interaction_decay(quick),
        6 => corrector_trichotomy(quick),
        7 => counterexample_window(quick),
        8 => one_bubble_rate(quick),
        9 => multi_bubble_trichotomy(quick),
        10 => ensemble_deficit_law(quick),
        11 => deterministic_reports(quick),
        _ => Ok((false, format!("no criterion numbered {id}"))),
    };
    let (passed, details) = match outcome {
        Ok(pair) => pair,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name: criterion_name(id),
        passed,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run the whole battery in order, reporting each result as it lands.
pub fn run_all(quick: bool, mut progress: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    (1..=CRITERION_COUNT)
        .map(|id| {
            let r = run_criterion(id, quick);
            progress(&r);
            r
        })
        .collect()
}

fn closed_form_constants(quick: bool) -> Result<(bool, String)> {
    let tol = 1e-8;
    let c3 = best_constant_inv(make_params(3, 0.0, 0.0))?;
    let c4 = best_constant_inv(make_params(4, 0.0, 0.0))?;
    let mut dev: f64 = 0.0;
    dev = dev.max((c3 / sobolev_constant(3) - 1.0).abs());
    dev = dev.max((c3 / 5.47790408953133 - 1.0).abs());
    dev = dev.max((c4 / sobolev_constant(4) - 1.0).abs());
    dev = dev.max((c4 / (8.0 * std::f64::consts::PI / 6.0_f64.sqrt()) - 1.0).abs());
    let h = if quick { 0.02 } else { 0.01 };
    for q in [make_params(3, 0.0, 0.0), make_params(4, 0.0, 0.5), make_params(3, -1.0, -0.2)] {
        let closed = profile_mass(q)?;
        let quad = profile_mass_quadrature(q, h)?;
        dev = dev.max((quad / closed - 1.0).abs());
    }
    Ok((dev < tol, format!("max relative deviation {dev:.2e} (tolerance {tol:.0e})")))
}

fn profile_identities(quick: bool) -> Result<(bool, String)> {
    let h = if quick { 0.05 } else { 0.02 };
    let tuples = [
        make_params(3, 0.0, 0.0),
        make_params(4, 0.0, 0.5),
        make_params(3, 0.0, 0.5),
        make_params(3, -1.0, -0.9),
        make_params(3, -1.0, -0.2),
    ];
    let mut worst_quant: f64 = 0.0;
    let mut worst_iso: f64 = 0.0;
    let mut worst_def: f64 = 0.0;
    for q in tuples {
        let grid = CylinderGrid::for_centers(q, &[0.0], h)?;
        let ext = Extremal::new(q)?;
        let mut f = SmoothFn::new(ext);
        f.push(1.0, SmoothTerm::Profile { s: 0.0 });
        let mass = profile_mass(q)?;
        worst_quant = worst_quant.max((h1_inner_analytic(&grid, &f, &f) / mass - 1.0).abs());
        // weighted Dirichlet norm of W through the radial route equals the
        // cylinder H1 norm of Psi
        let radial: Vec<f64> =
            grid.nodes().iter().map(|&t| (q.c * t).exp() * ext.psi(t)).collect();
        let psi_hat = ModeFunction::from_fn(&grid, 0, |t| ext.psi(t))?;
        let d12a = d12a_inner(&grid, &radial, &radial)?;
        worst_iso = worst_iso.max((d12a / psi_hat.h1_norm_sq() - 1.0).abs());
        let rec = deficit(&psi_hat)?;
        worst_def = worst_def.max(rec.normalized().abs());
    }
    let pass = worst_quant < 1e-8 && worst_iso < 1e-12 && worst_def < 1e-8;
    Ok((
        pass,
        format!(
            "quantization dev {worst_quant:.2e}, isometry dev {worst_iso:.2e}, \
             extremal deficit {worst_def:.2e}"
        ),
    ))
}

fn spectra_match_oracle(quick: bool) -> Result<(bool, String)> {
    let (h, tol, order_tol) = if quick { (0.02, 4e-6, 0.4) } else { (0.01, 1e-6, 0.1) };
    let tuples: &[CknParams] = if quick {
        &[make_params(3, 0.0, 0.0)]
    } else {
        &[make_params(3, 0.0, 0.0), make_params(4, 0.0, 0.5)]
    };
    let modes: std::ops::RangeInclusive<u32> = if quick { 0..=1 } else { 0..=2 };
    let mut worst: f64 = 0.0;
    let mut order_dev: f64 = 0.0;
    let mut structure_ok = true;
    for &q in tuples {
        for mode in modes.clone() {
            let oracle = oracle_spectrum(q, mode)?;
            for (idx, &exact) in oracle.iter().enumerate() {
                let r = refined_eigenvalue(q, mode, idx, h)?;
                worst = worst.max((r.extrapolated - exact).abs());
                if mode == 0 && idx == 0 {
                    // raw second-order convergence, coarse error over fine
                    let ratio = (r.coarse - exact) / (r.fine - exact);
                    order_dev = order_dev.max((ratio.abs().log2() - 2.0).abs());
                }
            }
            let grid = CylinderGrid::for_centers(q, &[0.0], h)?;
            let op = LinearizedOperator::assemble(&grid, mode)?;
            let found = op.bound_states()?.eigenvalues.len();
            if found != oracle.len() {
                structure_ok = false;
            }
            if mode == 0 {
                let neg = op.count_below(-1e-3);
                let zero = op.count_below(1e-3) - neg;
                if neg != 1 || zero != 1 {
                    structure_ok = false;
                }
            }
        }
    }
    let pass = worst < tol && order_dev < order_tol && structure_ok;
    Ok((
        pass,
        format!(
            "max |eigenvalue - oracle| {worst:.2e} (tolerance {tol:.0e}), \
             order dev {order_dev:.2} (tolerance {order_tol}), counts ok {structure_ok}"
        ),
    ))
}

fn symmetry_breaking_curve(quick: bool) -> Result<(bool, String)> {
    let (h, tol) = if quick { (0.02, 4e-4) } else { (0.01, 1e-4) };
    let mut worst: f64 = 0.0;
    for (n, a) in [(3, -1.0), (4, -0.5), (5, -2.0)] {
        let numeric = find_symmetry_breaking_b(n, a, h)?;
        let closed = felli_schneider(n, a)?;
        worst = worst.max((numeric - closed).abs());
    }
    Ok((worst < tol, format!("max |b* - closed form| {worst:.2e} (tolerance {tol:.0e})")))
}

fn interaction_decay(quick: bool) -> Result<(bool, String)> {
    let (h, count, slope_tol, cauchy_tol) =
        if quick { (0.02, 6, 0.08, 0.04) } else { (0.01, 11, 0.02, 0.01) };
    let mut worst_slope: f64 = 0.0;
    let mut worst_cauchy: f64 = 0.0;
    for q in [make_params(3, 0.0, 0.0), make_params(4, 0.0, 0.5)] {
        let c = q.c;
        let s_hi = 20.0 / c;
        let grid = CylinderGrid::for_centers(q, &[0.0, s_hi], h)?;
        let svals = linspace(10.0 / c, s_hi, count);
        let inners: Vec<f64> =
            svals.iter().map(|&s| interaction(&grid, 0.0, s)).collect::<Result<_>>()?;
        let logs: Vec<f64> = inners.iter().map(|v| v.ln()).collect();
        let (slope, _, _) = line_fit(&svals, &logs);
        worst_slope = worst_slope.max((slope + c).abs() / c);
        let pre = |s: f64| -> Result<f64> { Ok(interaction(&grid, 0.0, s)? * (c * s).exp()) };
        worst_cauchy = worst_cauchy.max((pre(15.0 / c)? / pre(20.0 / c)? - 1.0).abs());
    }
    let pass = worst_slope <= slope_tol && worst_cauchy <= cauchy_tol;
    Ok((
        pass,
        format!(
            "worst decay slope rel dev {worst_slope:.1e} (tolerance {slope_tol}), \
             worst prefactor Cauchy gap {worst_cauchy:.1e} (tolerance {cauchy_tol})"
        ),
    ))
}

fn cr_window(params: CknParams, lo: f64, hi: f64, quick: bool) -> Vec<f64> {
    let full: Vec<f64> = linspace(lo, hi, 6).iter().map(|cr| cr / params.c).collect();
    if quick {
        full.into_iter().take(4).collect()
    } else {
        full
    }
}

fn multiplier_spread(points: &[crate::reduction::GapSweepPoint]) -> f64 {
    let vals: Vec<f64> = points.iter().map(|pt| pt.multiplier_abs_sum / pt.q).collect();
    vals.iter().fold(f64::MIN, |a, &b| a.max(b)) / vals.iter().fold(f64::MAX, |a, &b| a.min(b))
}

fn corrector_trichotomy(quick: bool) -> Result<(bool, String)> {
    let h = if quick { 0.02 } else { 0.01 };
    let slope_tol = if quick { 0.2 } else { 0.05 };

    let q5 = make_params(3, 0.0, 0.0);
    let r5 = gap_sweep(q5, 2, &cr_window(q5, 7.5, 20.0, quick), h)?;
    let q53 = make_params(4, 0.0, 0.5);
    let r53 = gap_sweep(q53, 2, &cr_window(q53, 12.5, 25.0, quick), h)?;
    let q2 = make_params(3, 0.0, 0.5);
    let r2 = gap_sweep(q2, 2, &cr_window(q2, 7.5, 20.0, quick), h)?;

    let dev5 = (r5.slope - 1.0).abs();
    let dev53 = (r53.slope - q53.p / 2.0).abs();
    let spread2 = r2.log_statistic_ratio;
    let mspread =
        multiplier_spread(&r5.points).max(multiplier_spread(&r53.points)).max(
            multiplier_spread(&r2.points),
        );
    let pass = dev5 <= slope_tol && dev53 <= slope_tol && spread2 < 3.0 && mspread < 3.0;
    Ok((
        pass,
        format!(
            "p=5 slope {:.4} (target 1), p=5/3 slope {:.4} (target {:.4}), \
             p=2 log-statistic spread {spread2:.2}, multiplier/Q spread {mspread:.2}",
            r5.slope,
            r53.slope,
            q53.p / 2.0
        ),
    ))
}

fn counterexample_window(quick: bool) -> Result<(bool, String)> {
    let q = make_params(3, 0.0, 0.0);
    let h = if quick { 0.02 } else { 0.01 };
    let crs: &[f64] = if quick { &[10.0, 15.0] } else { &[10.0, 15.0, 20.0] };
    let mass = profile_mass(q)?;
    let mut ratios = Vec::new();
    let mut energy_ok = true;
    let mut negative_ok = true;
    let mut energies = Vec::new();
    for &cr in crs {
        let config = BubbleConfig::symmetric_pair(q, cr / q.c)?;
        let cex = counterexample_state(&config, h)?;
        ratios.push(cex.load_dual_norm / config.interaction_scale());
        let energy = cex.state.h1_norm_sq();
        energies.push(energy / mass);
        if !(energy > 1.5 * mass && energy < 2.5 * mass) {
            energy_ok = false;
        }
        if cex.negative_part_h1 > 1e-8 * energy.sqrt() {
            negative_ok = false;
        }
    }
    let spread = ratios.iter().fold(f64::MIN, |a, &b| a.max(b))
        / ratios.iter().fold(f64::MAX, |a, &b| a.min(b));
    let pass = spread < 3.0 && energy_ok && negative_ok;
    Ok((
        pass,
        format!(
            "residual/Q spread {spread:.2}, energy/quantum in {:?}, negative part ok {negative_ok}",
            energies.iter().map(|e| (e * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    ))
}

fn one_bubble_rate(quick: bool) -> Result<(bool, String)> {
    let q = make_params(3, 0.0, 0.0);
    let (h, count, slope_tol, rate_tol) =
        if quick { (0.02, 4, 0.12, 0.04) } else { (0.01, 7, 0.03, 0.01) };
    let out = one_bubble_stability(q, h, &logspace(1e-4, 1e-2, count), None)?;
    let slope_dev = (out.report.fit.exponent - 1.0).abs();
    let pass = slope_dev <= slope_tol && out.ratio_spread < 3.0 && out.rate_dev <= rate_tol;
    Ok((
        pass,
        format!(
            "rate {:.4} (target 1 within {slope_tol}), distance/residual spread {:.2}, \
             linear prediction dev {:.2e}",
            out.report.fit.exponent, out.ratio_spread, out.rate_dev
        ),
    ))
}

fn multi_bubble_trichotomy(quick: bool) -> Result<(bool, String)> {
    let h = if quick { 0.02 } else { 0.01 };
    let slope_tol = if quick { 0.2 } else { 0.05 };

    let q5 = make_params(3, 0.0, 0.0);
    let m5 = multi_bubble_stability(q5, 2, &cr_window(q5, 7.5, 20.0, quick), h)?;
    let q53 = make_params(4, 0.0, 0.5);
    let m53 = multi_bubble_stability(q53, 2, &cr_window(q53, 12.5, 25.0, quick), h)?;
    let q2 = make_params(3, 0.0, 0.5);
    let m2 = multi_bubble_stability(q2, 2, &cr_window(q2, 7.5, 20.0, quick), h)?;

    let dev5 = (m5.report.fit.exponent - 1.0).abs();
    let dev53 = (m53.report.fit.exponent - q53.p / 2.0).abs();
    let gamma_spread = m5.gamma_q_spread.max(m53.gamma_q_spread).max(m2.gamma_q_spread);
    let pass = dev5 <= slope_tol
        && dev53 <= slope_tol
        && m2.statistic_spread < 3.0
        && gamma_spread < 3.0;
    Ok((
        pass,
        format!(
            "p=5 exponent {:.4} (target 1), p=5/3 exponent {:.4} (target {:.4}), \
             p=2 statistic spread {:.2}, residual/Q spread {gamma_spread:.2}",
            m5.report.fit.exponent,
            m53.report.fit.exponent,
            q53.p / 2.0,
            m2.statistic_spread
        ),
    ))
}

fn ensemble_deficit_law(quick: bool) -> Result<(bool, String)> {
    let q = make_params(3, 0.0, 0.0);
    let spec = if quick {
        EnsembleSpec {
            directions: 6,
            // keep eps above the h^2 quadrature floor at this coarser grid
            eps: logspace(1e-3, 1e-1, 5),
            h: 0.02,
            ..EnsembleSpec::default()
        }
    } else {
        EnsembleSpec::default()
    };
    let (oracle_tol, scale_tol) = if quick { (0.20, 0.40) } else { (0.05, 0.10) };
    let out = deficit_vs_distance(q, &spec)?;
    let pass = out.min_ratio > 0.0
        && out.doubled_min_ratio >= 0.5 * out.min_ratio
        && out.oracle_max_dev <= oracle_tol
        && out.scale_ratio_dev <= scale_tol;
    Ok((
        pass,
        format!(
            "min e/d^2 = {:.4}, doubled {:.4}, second-variation dev {:.3} \
             (tolerance {oracle_tol}), amplitude covariance dev {:.2e}",
            out.min_ratio, out.doubled_min_ratio, out.oracle_max_dev, out.scale_ratio_dev
        ),
    ))
}

fn report_bundle() -> Result<String> {
    let q = make_params(3, 0.0, 0.0);
    let one = one_bubble_stability(q, 0.05, &logspace(1e-3, 1e-2, 3), None)?;
    let sweep = gap_sweep(q, 2, &[20.0, 30.0, 40.0], 0.05)?;
    let spec = EnsembleSpec {
        directions: 2,
        eps: logspace(1e-3, 1e-2, 3),
        h: 0.05,
        ..EnsembleSpec::default()
    };
    let law = deficit_vs_distance(q, &spec)?;
    let mut buf = serde_json::to_string(&one.report).expect("serializable report");
    buf.push('\n');
    buf.push_str(&serde_json::to_string(&sweep).expect("serializable report"));
    buf.push('\n');
    buf.push_str(&serde_json::to_string(&law.report).expect("serializable report"));
    Ok(buf)
}

fn deterministic_reports(_quick: bool) -> Result<(bool, String)> {
    let first = report_bundle()?;
    let second = report_bundle()?;
    let identical = first == second;
    Ok((
        identical,
        format!(
            "two runs of a three-report bundle: {} bytes, identical {identical}",
            first.len()
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_cover_all_criteria() {
        for id in 1..=CRITERION_COUNT {
            assert_ne!(criterion_name(id), "unknown criterion");
        }
        assert_eq!(criterion_name(0), "unknown criterion");
        assert_eq!(criterion_name(12), "unknown criterion");
    }

    #[test]
    fn unknown_id_fails_cleanly() {
        let r = run_criterion(99, true);
        assert!(!r.passed);
        assert!(r.details.contains("99"));
    }

    #[test]
    fn closed_form_criterion_passes_quickly() {
        let r = run_criterion(1, true);
        assert!(r.passed, "{}", r.details);
        assert!(r.seconds < 5.0);
    }

    #[test]
    fn identity_criterion_passes_quickly() {
        let r = run_criterion(2, true);
        assert!(r.passed, "{}", r.details);
    }
}

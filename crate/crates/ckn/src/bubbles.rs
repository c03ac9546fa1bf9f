//! Multi-bubble configurations and their interaction bookkeeping.
//!
//! A configuration is a strictly increasing list of centers s_1 < ... < s_nu;
//! the state of interest is the superposition of translated ground states.
//! Everything here is organized around one small parameter: Q = e^{-cR} with
//! R the minimal center gap. Inner products of distinct bubbles decay like Q,
//! and the superposition error E = (sum Psi_j)^p - sum Psi_j^p is measured in
//! weighted sup-norms whose per-interval weights make its size R-independent.

use crate::error::{CknError, Result};
use crate::grid::{GridRef, ModeFunction};
use crate::params::CknParams;
use crate::profiles::Extremal;

/// Strictly ordered bubble centers plus the derived interaction scale.
#[derive(Clone, Debug)]
pub struct BubbleConfig {
    pub params: CknParams,
    centers: Vec<f64>,
}

impl BubbleConfig {
    pub fn new(params: CknParams, centers: Vec<f64>) -> Result<Self> {
        params.require_supercritical()?;
        if centers.is_empty() {
            return Err(CknError::Domain("a bubble configuration needs at least one center".into()));
        }
        if centers.iter().any(|s| !s.is_finite()) {
            return Err(CknError::Domain("bubble centers must be finite".into()));
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CknError::Domain(format!(
                "bubble centers must be strictly increasing, got {centers:?}"
            )));
        }
        Ok(BubbleConfig { params, centers })
    }

    /// Two bubbles at -r/2 and r/2.
    pub fn symmetric_pair(params: CknParams, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(CknError::Domain(format!("pair separation {r} must be positive")));
        }
        Self::new(params, vec![-r / 2.0, r / 2.0])
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn nu(&self) -> usize {
        self.centers.len()
    }

    /// Minimal center gap R; infinite for a single bubble.
    pub fn min_gap(&self) -> f64 {
        self.centers
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Q = e^{-c R}; reported as 0 for a single bubble.
    pub fn interaction_scale(&self) -> f64 {
        if self.centers.len() < 2 {
            return 0.0;
        }
        (-self.params.c * self.min_gap()).exp()
    }

    /// Interval of each center: split at midpoints, ends at +-t_max.
    fn intervals(&self, t_max: f64) -> Vec<(f64, f64)> {
        let nu = self.centers.len();
        (0..nu)
            .map(|i| {
                let lo = if i == 0 { -t_max } else { 0.5 * (self.centers[i - 1] + self.centers[i]) };
                let hi = if i + 1 == nu {
                    t_max
                } else {
                    0.5 * (self.centers[i] + self.centers[i + 1])
                };
                (lo, hi)
            })
            .collect()
    }
}

/// Pointwise sum of translated ground states.
pub fn sum_bubbles(grid: &GridRef, config: &BubbleConfig) -> Result<ModeFunction> {
    grid.hosts(config.centers())?;
    let e = Extremal::new(grid.params)?;
    ModeFunction::from_fn(grid, 0, |t| {
        config.centers().iter().map(|&s| e.psi(t - s)).sum()
    })
}

/// H1 inner product of two translated ground states; coincident centers
/// degenerate to the squared norm.
pub fn interaction(grid: &GridRef, s1: f64, s2: f64) -> Result<f64> {
    grid.hosts(&[s1, s2])?;
    // order the centers so both argument orders evaluate identically
    let (s1, s2) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
    let e = Extremal::new(grid.params)?;
    let u = ModeFunction::from_fn(grid, 0, |t| e.psi(t - s1))?;
    if s1 == s2 {
        return Ok(u.h1_norm_sq());
    }
    let v = ModeFunction::from_fn(grid, 0, |t| e.psi(t - s2))?;
    u.h1_inner(&v)
}

/// The superposition error E = (sum_j Psi_j)^p - sum_j Psi_j^p, evaluated in
/// a cancellation-free form: with m = max_j Psi_j and r = sum of the other
/// ratios, E = m^p (expm1(p ln1p(r)) - sum of other ratios^p), which keeps
/// E >= 0 at round-off level even in the far tails.
pub fn superposition_error(grid: &GridRef, config: &BubbleConfig) -> Result<ModeFunction> {
    if config.nu() < 2 {
        return Err(CknError::Domain(
            "the superposition error needs at least two bubbles".into(),
        ));
    }
    grid.hosts(config.centers())?;
    let e = Extremal::new(grid.params)?;
    let p = grid.params.p;
    ModeFunction::from_fn(grid, 0, |t| {
        let logs: Vec<f64> = config.centers().iter().map(|&s| e.log_psi(t - s)).collect();
        let log_m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut rest_sum = 0.0;
        let mut rest_pow = 0.0;
        let mut seen_max = false;
        for &lg in &logs {
            if !seen_max && lg == log_m {
                seen_max = true;
                continue;
            }
            rest_sum += (lg - log_m).exp();
            rest_pow += (p * (lg - log_m)).exp();
        }
        (p * log_m).exp() * ((p * rest_sum.ln_1p()).exp_m1() - rest_pow)
    })
}

/// Both weighted sup-norms of a sampled error profile, interval by interval.
#[derive(Clone, Debug, serde::Serialize)]
pub struct WeightedNormReport {
    /// sum_i sup |E| / (Q e^{-c(p-2)|t-s_i|}) over the i-th interval.
    pub natural_norm: f64,
    /// sum_i sup |E| / (Q e^{-(1-varsigma) c |t-s_i|}).
    pub sharp_norm: f64,
    pub varsigma: f64,
    /// Node where each interval attains its natural-norm sup.
    pub natural_sup_at: Vec<f64>,
    /// Node where each interval attains its sharp-norm sup.
    pub sharp_sup_at: Vec<f64>,
}

/// Default sharpened-exponent parameter for the second weighted norm.
pub const DEFAULT_VARSIGMA: f64 = 0.1;

pub fn weighted_norms(
    config: &BubbleConfig,
    err: &ModeFunction,
    varsigma: f64,
) -> Result<WeightedNormReport> {
    if config.nu() < 2 {
        return Err(CknError::Domain("weighted norms need at least two bubbles".into()));
    }
    if !(0.0 < varsigma && varsigma < 1.0) {
        return Err(CknError::Domain(format!("varsigma {varsigma} outside (0, 1)")));
    }
    let grid = err.grid();
    let c = config.params.c;
    let p = config.params.p;
    let q_scale = config.interaction_scale();
    let mut natural_norm = 0.0;
    let mut sharp_norm = 0.0;
    let mut natural_sup_at = Vec::with_capacity(config.nu());
    let mut sharp_sup_at = Vec::with_capacity(config.nu());
    let nu = config.nu();
    for (i, (lo, hi)) in config.intervals(grid.t_max).into_iter().enumerate() {
        let s_i = config.centers()[i];
        let mut best_nat = (f64::NEG_INFINITY, s_i);
        let mut best_sharp = (f64::NEG_INFINITY, s_i);
        for (k, &t) in grid.nodes().iter().enumerate() {
            // interior boundaries belong to the interval on their right, so a
            // node lying exactly on a midpoint is never counted twice
            let past_hi = if i + 1 < nu { t >= hi } else { t > hi };
            if t < lo || past_hi {
                continue;
            }
            let e_abs = err.samples()[k].abs();
            let nat = e_abs / (q_scale * (-c * (p - 2.0) * (t - s_i).abs()).exp());
            let sharp = e_abs / (q_scale * (-(1.0 - varsigma) * c * (t - s_i).abs()).exp());
            if nat > best_nat.0 {
                best_nat = (nat, t);
            }
            if sharp > best_sharp.0 {
                best_sharp = (sharp, t);
            }
        }
        natural_norm += best_nat.0;
        sharp_norm += best_sharp.0;
        natural_sup_at.push(best_nat.1);
        sharp_sup_at.push(best_sharp.1);
    }
    Ok(WeightedNormReport { natural_norm, sharp_norm, varsigma, natural_sup_at, sharp_sup_at })
}

/// Grid sized for this configuration at step h (tail clearance included).
pub fn config_grid(config: &BubbleConfig, h: f64) -> Result<GridRef> {
    crate::grid::CylinderGrid::for_centers(config.params, config.centers(), h)
}

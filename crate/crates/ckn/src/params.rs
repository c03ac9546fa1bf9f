//! Parameter validation for the weighted interpolation inequality
//!
//!   ( int |x|^{-b(p+1)} |u|^{p+1} dx )^{2/(p+1)}  <=  C int |x|^{-2a} |grad u|^2 dx
//!
//! on R^N. Admissible exponents satisfy N >= 3, a < a_c = (N-2)/2 and
//! a <= b <= a+1, with the critical power p = (N + 2(1+a-b)) / (N - 2(1+a-b)).
//! The decay rate on the cylinder side is c = a_c - a.
//!
//! Radial extremals are minimizers exactly above the Felli-Schneider curve
//! b_FS(a); below it (possible only for a < 0) the mode-1 linearization goes
//! negative and extremals are non-radial.

use serde::Serialize;

use crate::error::{CknError, Result};

/// Absolute tolerance for classifying points onto the measure-zero boundary
/// curves (b = a+1 and b = b_FS(a)).
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Classification of a parameter triple (N, a, b).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Outside N >= 3, a < (N-2)/2, a <= b <= a+1.
    Invalid,
    /// b = a+1: the Hardy-type endpoint, p = 1. Profiles degenerate here.
    BoundaryHardy,
    /// Radial extremals exist, are unique up to symmetries, and are stable.
    /// Includes the Sobolev corner a = b = 0, which sits on the closure of
    /// the mode-1 marginality curve (b_FS(0) = 0) and is classically stable.
    RadialUniqueStable,
    /// a < 0 and a <= b < b_FS(a): radial profiles are saddle points.
    SymmetryBroken,
    /// a < 0 and b = b_FS(a) within tolerance: marginal mode-1 direction.
    FsBoundary,
    /// a >= 0 with a + b <= 0, excluding the Sobolev corner itself. Since
    /// b >= a forces a + b >= 0, this is reachable only through the
    /// tolerance sliver below b = a = 0.
    ExcludedOrigin,
}

impl Region {
    /// Regions where the radial profile is a minimizer (stability experiments run here).
    pub fn is_stable(self) -> bool {
        matches!(self, Region::RadialUniqueStable | Region::FsBoundary)
    }
}

/// Validated parameter triple with every derived constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CknParams {
    pub n_dim: u32,
    pub a: f64,
    pub b: f64,
    /// (N-2)/2, the critical weight exponent.
    pub a_c: f64,
    /// a_c - a, the exponential decay rate on the cylinder. Positive iff valid.
    pub c: f64,
    /// Critical power. In (1, (N+2)/(N-2)] on the admissible set, with p = 1
    /// exactly at b = a+1 and the Sobolev exponent exactly at b = a.
    pub p: f64,
    pub region: Region,
}

/// Build a parameter record. Never fails: out-of-domain triples come back
/// tagged `Region::Invalid` with the derived fields evaluated formulaically.
pub fn make_params(n_dim: u32, a: f64, b: f64) -> CknParams {
    let a_c = (f64::from(n_dim) - 2.0) / 2.0;
    let c = a_c - a;
    let d = 1.0 + a - b;
    let p = (f64::from(n_dim) + 2.0 * d) / (f64::from(n_dim) - 2.0 * d);
    CknParams {
        n_dim,
        a,
        b,
        a_c,
        c,
        p,
        region: classify_region(n_dim, a, b),
    }
}

/// The symmetry-breaking threshold b_FS(a) = N c / (2 sqrt(c^2 + N - 1)) + a - a_c.
pub fn felli_schneider(n_dim: u32, a: f64) -> Result<f64> {
    let a_c = (f64::from(n_dim) - 2.0) / 2.0;
    if n_dim < 3 {
        return Err(CknError::Domain(format!("dimension {n_dim} < 3")));
    }
    if a >= a_c {
        return Err(CknError::Domain(format!(
            "a = {a} is not below the critical weight a_c = {a_c}"
        )));
    }
    let c = a_c - a;
    let nf = f64::from(n_dim);
    Ok(nf * c / (2.0 * (c * c + nf - 1.0).sqrt()) + a - a_c)
}

/// Region of (N, a, b) with the default boundary tolerance.
pub fn classify_region(n_dim: u32, a: f64, b: f64) -> Region {
    classify_region_with_tol(n_dim, a, b, BOUNDARY_TOL)
}

/// Region classification with a caller-chosen absolute tolerance for the
/// boundary curves b = a+1 and b = b_FS(a).
pub fn classify_region_with_tol(n_dim: u32, a: f64, b: f64, tol: f64) -> Region {
    if n_dim < 3 || !a.is_finite() || !b.is_finite() {
        return Region::Invalid;
    }
    let a_c = (f64::from(n_dim) - 2.0) / 2.0;
    if a_c - a <= 0.0 {
        return Region::Invalid;
    }
    if b < a - tol || b > a + 1.0 + tol {
        return Region::Invalid;
    }
    if (b - (a + 1.0)).abs() <= tol {
        return Region::BoundaryHardy;
    }
    if a < 0.0 {
        let b_fs = felli_schneider(n_dim, a).expect("a < 0 < a_c here");
        if (b - b_fs).abs() <= tol {
            Region::FsBoundary
        } else if b < b_fs {
            Region::SymmetryBroken
        } else {
            Region::RadialUniqueStable
        }
    } else if a + b > 0.0 || (a == 0.0 && b == 0.0) {
        Region::RadialUniqueStable
    } else {
        Region::ExcludedOrigin
    }
}

impl CknParams {
    /// Errors unless the profile formulas are usable (valid region, p > 1).
    pub fn require_supercritical(&self) -> Result<()> {
        if self.region == Region::Invalid {
            return Err(CknError::Domain(format!(
                "({}, {}, {}) is outside the admissible parameter set",
                self.n_dim, self.a, self.b
            )));
        }
        if self.region == Region::BoundaryHardy || self.p <= 1.0 {
            return Err(CknError::Domain(
                "p = 1 at b = a+1: the profile formulas degenerate".into(),
            ));
        }
        Ok(())
    }

    /// Errors unless the radial profile is a minimizer (stable regions).
    pub fn require_stable(&self) -> Result<()> {
        self.require_supercritical()?;
        if !self.region.is_stable() {
            return Err(CknError::Domain(format!(
                "region {:?}: the radial profile is not extremal here",
                self.region
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tolerance for values frozen from independent closed-form evaluation.
    const FROZEN_TOL: f64 = 1e-12;

    #[test]
    fn sobolev_point_derives_classical_exponent() {
        let q = make_params(3, 0.0, 0.0);
        assert_eq!(q.region, Region::RadialUniqueStable);
        assert!((q.p - 5.0).abs() < 1e-14);
        assert!((q.c - 0.5).abs() < 1e-15);
        assert!((q.a_c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hardy_endpoint_has_unit_power() {
        let q = make_params(3, 0.0, 1.0);
        assert_eq!(q.region, Region::BoundaryHardy);
        assert!((q.p - 1.0).abs() < 1e-14);
        assert!(q.require_supercritical().is_err());
    }

    #[test]
    fn four_dimensional_tuple_matches_rational_evaluation() {
        let q = make_params(4, 0.0, 0.5);
        assert!((q.p - 5.0 / 3.0).abs() < 1e-15);
        assert!((q.c - 1.0).abs() < 1e-15);
        assert_eq!(q.region, Region::RadialUniqueStable);
    }

    #[test]
    fn p_equals_two_tuple() {
        // 1 + a - b = N/6 at N=3, a=0 gives b = 1/2 and p = 2.
        let q = make_params(3, 0.0, 0.5);
        assert!((q.p - 2.0).abs() < 1e-14);
    }

    #[test]
    fn frozen_felli_schneider_values() {
        // 9/(2 sqrt(17)) - 3/2 and its (4,-0.5), (5,-2) counterparts,
        // evaluated independently in extended precision.
        assert!((felli_schneider(3, -1.0).unwrap() - (-0.4085896873365016)).abs() < FROZEN_TOL);
        assert!((felli_schneider(4, -0.5).unwrap() - (-0.1906926585840456)).abs() < FROZEN_TOL);
        assert!((felli_schneider(5, -2.0).unwrap() - (-1.3293921446888518)).abs() < FROZEN_TOL);
        let exact = 9.0 / (2.0 * 17.0_f64.sqrt()) - 1.5;
        assert!((felli_schneider(3, -1.0).unwrap() - exact).abs() < 1e-15);
    }

    #[test]
    fn felli_schneider_vanishes_at_a_zero_every_dimension() {
        // a_c^2 + N - 1 = N^2/4 exactly, so b_FS(0) = 0 up to round-off.
        for n in 3..=8 {
            assert!(felli_schneider(n, 0.0).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn felli_schneider_rejects_supercritical_weight() {
        assert!(matches!(felli_schneider(3, 0.5), Err(CknError::Domain(_))));
        assert!(matches!(felli_schneider(3, 2.0), Err(CknError::Domain(_))));
        assert!(felli_schneider(3, 0.499999).is_ok());
    }

    #[test]
    fn negative_a_classification_straddles_the_curve() {
        assert_eq!(make_params(3, -1.0, -0.2).region, Region::RadialUniqueStable);
        assert_eq!(make_params(3, -1.0, -0.9).region, Region::SymmetryBroken);
        let b_fs = felli_schneider(3, -1.0).unwrap();
        assert_eq!(make_params(3, -1.0, b_fs).region, Region::FsBoundary);
        assert_eq!(make_params(3, -1.0, b_fs + 1e-13).region, Region::FsBoundary);
    }

    #[test]
    fn invalid_inputs_are_tagged_not_thrown() {
        assert_eq!(make_params(2, 0.0, 0.0).region, Region::Invalid);
        assert_eq!(make_params(3, 0.5, 0.7).region, Region::Invalid); // a = a_c
        assert_eq!(make_params(3, 0.6, 0.7).region, Region::Invalid);
        assert_eq!(make_params(3, 0.0, -0.5).region, Region::Invalid); // b < a
        assert_eq!(make_params(3, 0.0, 1.5).region, Region::Invalid); // b > a+1
        assert_eq!(make_params(3, f64::NAN, 0.0).region, Region::Invalid);
    }

    #[test]
    fn positive_a_interior_is_stable() {
        assert_eq!(make_params(3, 0.2, 0.2).region, Region::RadialUniqueStable);
        assert_eq!(make_params(5, 1.0, 1.5).region, Region::RadialUniqueStable);
    }

    #[test]
    fn fs_curve_satisfies_spectral_marginality_identity() {
        // On b = b_FS(a): c^2 ((p+1)^2/4 - 1) = N - 1.
        for &(n, a) in &[
            (3u32, -1.0),
            (3, -0.25),
            (4, -0.5),
            (5, -2.0),
            (6, -0.1),
            (7, -3.0),
        ] {
            let b = felli_schneider(n, a).unwrap();
            let q = make_params(n, a, b);
            let lhs = q.c * q.c * ((q.p + 1.0) * (q.p + 1.0) / 4.0 - 1.0);
            let rhs = f64::from(n) - 1.0;
            assert!(
                (lhs - rhs).abs() < 1e-10 * rhs,
                "identity fails at ({n}, {a}): {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn fs_curve_sits_strictly_inside_the_strip_for_negative_a() {
        for &(n, a) in &[(3u32, -0.5), (3, -4.0), (4, -1.0), (8, -0.01)] {
            let b = felli_schneider(n, a).unwrap();
            assert!(b > a && b < a + 1.0, "({n},{a}): b_FS = {b}");
        }
    }

    proptest::proptest! {
        #[test]
        fn p_is_strictly_decreasing_in_b(
            n in 3u32..8,
            a in -3.0f64..1.0,
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let a_c = (f64::from(n) - 2.0) / 2.0;
            proptest::prop_assume!(a < a_c - 1e-3);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            proptest::prop_assume!(hi - lo > 1e-6 && hi < 0.999);
            let p_lo = make_params(n, a, a + lo).p;
            let p_hi = make_params(n, a, a + hi).p;
            proptest::prop_assert!(p_hi < p_lo);
            proptest::prop_assert!(p_hi > 1.0);
            let sobolev = (f64::from(n) + 2.0) / (f64::from(n) - 2.0);
            proptest::prop_assert!(p_lo <= sobolev + 1e-12);
        }
    }
}

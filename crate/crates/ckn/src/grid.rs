//! Truncated cylinder discretization.
//!
//! Functions on the cylinder R x S^{N-1} are expanded in spherical harmonics;
//! each coefficient v_l(t) lives on a uniform grid over [-T, T] with
//! homogeneous Dirichlet truncation. The discrete H^1 pairing per mode is
//!
//!   <u, v> = omega * [ sum (du dv)/h + (c^2 + l(l+N-2)) * sum w_k u_k v_k ]
//!
//! i.e. a P1 stiffness matrix plus a trapezoid-lumped mass, packaged as the
//! symmetric tridiagonal Gram matrix G. All norms, loads, and dual norms in
//! the crate go through G so that discrete identities hold to round-off.

use std::sync::Arc;

use crate::error::{CknError, Result};
use crate::linalg::SymTridiag;
use crate::numerics::sphere_area;
use crate::params::{CknParams, Region};

/// Shared handle for a grid; every ModeFunction keeps one.
pub type GridRef = Arc<CylinderGrid>;

#[derive(Debug)]
pub struct CylinderGrid {
    pub params: CknParams,
    /// Half-width of the t-domain [-T, T].
    pub t_max: f64,
    /// Node count, kept odd so t = 0 is a node (exact parity on the grid).
    pub n: usize,
    /// Spacing 2T/(n-1).
    pub h: f64,
    /// Surface measure of S^{N-1}.
    pub omega: f64,
    nodes: Vec<f64>,
    /// Trapezoid weights: h/2 at the ends, h inside.
    weights: Vec<f64>,
}

impl CylinderGrid {
    /// Explicit construction. `n` must be odd and at least 3.
    pub fn new(params: CknParams, t_max: f64, n: usize) -> Result<GridRef> {
        if params.region == Region::Invalid {
            return Err(CknError::Domain("grid over invalid parameters".into()));
        }
        if n < 3 || n % 2 == 0 {
            return Err(CknError::Domain(format!(
                "node count {n} must be odd and >= 3 (t = 0 must be a node)"
            )));
        }
        if !(t_max > 0.0) {
            return Err(CknError::Domain(format!("half-width {t_max} must be positive")));
        }
        let h = 2.0 * t_max / (n - 1) as f64;
        // node k is (k - mid) * h: exactly antisymmetric in floating point,
        // so sampled even/odd functions have exact grid parity
        let mid = ((n - 1) / 2) as i64;
        let nodes: Vec<f64> = (0..n).map(|k| (k as i64 - mid) as f64 * h).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(Arc::new(CylinderGrid {
            params,
            t_max,
            n,
            h,
            omega: sphere_area(params.n_dim),
            nodes,
            weights,
        }))
    }

    /// Grid sized for a set of bubble centers at spacing ~h: the half-width
    /// satisfies c(T - max|s|) >= 40, so every profile tail is below 4e-18
    /// at the boundary.
    pub fn for_centers(params: CknParams, centers: &[f64], h: f64) -> Result<GridRef> {
        params.require_supercritical()?;
        if !(h > 0.0) {
            return Err(CknError::Domain(format!("spacing {h} must be positive")));
        }
        let s_max = centers.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let t_needed = 40.0 / params.c + s_max + 5.0;
        let half_steps = (t_needed / h).ceil() as usize;
        CylinderGrid::new(params, h * half_steps as f64, 2 * half_steps + 1)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Index of the grid node nearest to t.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t + self.t_max) / self.h).round();
        (k.max(0.0) as usize).min(self.n - 1)
    }

    /// Trapezoid integral of nodal samples over [-T, T] (no omega factor).
    pub fn trapezoid(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.n);
        self.weights.iter().zip(samples).map(|(w, s)| w * s).sum()
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Angular eigenvalue l(l + N - 2) of mode l.
    pub fn angular_eigenvalue(&self, mode: u32) -> f64 {
        let l = f64::from(mode);
        l * (l + f64::from(self.params.n_dim) - 2.0)
    }

    /// The H^1 Gram matrix of one angular mode: omega * (K + (c^2+lambda_l) M).
    pub fn gram(&self, mode: u32) -> SymTridiag {
        let q = self.params.c * self.params.c + self.angular_eigenvalue(mode);
        let inv_h = 1.0 / self.h;
        let mut diag = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let stiff = if k == 0 || k == self.n - 1 { inv_h } else { 2.0 * inv_h };
            diag.push(self.omega * (stiff + q * self.weights[k]));
        }
        let off = vec![-self.omega * inv_h; self.n - 1];
        SymTridiag { diag, off }
    }

    /// True when every center's tail clears the truncation tolerance.
    pub fn hosts(&self, centers: &[f64]) -> Result<()> {
        for &s in centers {
            if (-self.params.c * (self.t_max - s.abs())).exp() >= 1e-12 {
                return Err(CknError::GridTooNarrow(format!(
                    "center {s} leaves tail {:.3e} at T = {}",
                    (-self.params.c * (self.t_max - s.abs())).exp(),
                    self.t_max
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn same_as(&self, other: &CylinderGrid) -> bool {
        self.n == other.n
            && self.t_max == other.t_max
            && self.params.n_dim == other.params.n_dim
            && self.params.a == other.params.a
            && self.params.b == other.params.b
    }
}

/// Nodal samples of one spherical-harmonic coefficient function.
///
/// The same container carries weak-form load vectors (entries f_k =
/// integral of f against the k-th hat function); loads are the arguments of
/// `dual_norm` and `riesz`, and are produced by `gram_apply` and the
/// residual assemblers rather than by sampling.
#[derive(Clone, Debug)]
pub struct ModeFunction {
    grid: GridRef,
    mode: u32,
    samples: Vec<f64>,
}

impl ModeFunction {
    pub fn new(grid: GridRef, mode: u32, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n {
            return Err(CknError::Domain(format!(
                "sample count {} does not match grid size {}",
                samples.len(),
                grid.n
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(CknError::Domain("non-finite sample".into()));
        }
        Ok(ModeFunction { grid, mode, samples })
    }

    pub fn from_fn(grid: &GridRef, mode: u32, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = grid.nodes().iter().map(|&t| f(t)).collect();
        ModeFunction::new(grid.clone(), mode, samples)
    }

    pub fn zeros(grid: &GridRef, mode: u32) -> Self {
        ModeFunction {
            grid: grid.clone(),
            mode,
            samples: vec![0.0; grid.n],
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn mode(&self) -> u32 {
        self.mode
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub(crate) fn check_compatible(&self, other: &ModeFunction) -> Result<()> {
        if !self.grid.same_as(&other.grid) || self.mode != other.mode {
            return Err(CknError::GridMismatch);
        }
        Ok(())
    }

    /// H^1(C) inner product omega * int (u' v' + (c^2 + lambda_l) u v) dt,
    /// evaluated exactly as u^T G v.
    pub fn h1_inner(&self, other: &ModeFunction) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.h1_inner_unchecked(other))
    }

    fn h1_inner_unchecked(&self, other: &ModeFunction) -> f64 {
        let g = self.grid.gram(self.mode);
        let gv = g.mul(&other.samples);
        self.samples.iter().zip(&gv).map(|(u, gv)| u * gv).sum()
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.h1_inner_unchecked(self)
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_sq().max(0.0).sqrt()
    }

    /// Lumped L^2(C) inner product omega * sum w_k u_k v_k.
    pub fn l2_inner(&self, other: &ModeFunction) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.grid.omega
            * self
                .grid
                .weights
                .iter()
                .zip(&self.samples)
                .zip(&other.samples)
                .map(|((w, u), v)| w * u * v)
                .sum::<f64>())
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).expect("same function").max(0.0).sqrt()
    }

    /// (omega * int |v|^q dt)^{1/q}. Nonlinear functionals are radial-only.
    pub fn lp_norm(&self, q: f64) -> Result<f64> {
        if self.mode != 0 {
            return Err(CknError::Mode(format!(
                "L^q norms are defined for mode 0 only, got mode {}",
                self.mode
            )));
        }
        if q < 1.0 {
            return Err(CknError::Domain(format!("exponent {q} < 1")));
        }
        let s: f64 = self
            .grid
            .weights
            .iter()
            .zip(&self.samples)
            .map(|(w, v)| w * v.abs().powf(q))
            .sum();
        Ok((self.grid.omega * s).powf(1.0 / q))
    }

    /// Weak-form load G v of this function.
    pub fn gram_apply(&self) -> ModeFunction {
        let g = self.grid.gram(self.mode);
        ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: g.mul(&self.samples),
        }
    }

    /// Riesz representative G^{-1} f of a load vector.
    pub fn riesz(&self) -> ModeFunction {
        let g = self.grid.gram(self.mode);
        ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: g.factor_spd().solve(&self.samples),
        }
    }

    /// H^{-1}(C) norm of a load vector: sqrt(f^T G^{-1} f), one SPD solve.
    pub fn dual_norm(&self) -> f64 {
        let g = self.grid.gram(self.mode);
        let x = g.factor_spd().solve(&self.samples);
        self.samples
            .iter()
            .zip(&x)
            .map(|(f, x)| f * x)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Euclidean pairing f^T v of a load with a function (the duality pairing).
    pub fn pair(&self, v: &ModeFunction) -> Result<f64> {
        self.check_compatible(v)?;
        Ok(self.samples.iter().zip(&v.samples).map(|(f, v)| f * v).sum())
    }

    pub fn scaled(&self, lambda: f64) -> ModeFunction {
        ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: self.samples.iter().map(|v| lambda * v).collect(),
        }
    }

    /// self + lambda * other.
    pub fn axpy(&self, lambda: f64, other: &ModeFunction) -> Result<ModeFunction> {
        self.check_compatible(other)?;
        Ok(ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + lambda * b)
                .collect(),
        })
    }

    /// Pointwise positive part max(v, 0).
    pub fn positive_part(&self) -> ModeFunction {
        ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: self.samples.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    /// Pointwise negative part max(-v, 0), so v = v_plus - v_minus.
    pub fn negative_part(&self) -> ModeFunction {
        ModeFunction {
            grid: self.grid.clone(),
            mode: self.mode,
            samples: self.samples.iter().map(|v| (-v).max(0.0)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn toy_grid(n: usize) -> GridRef {
        CylinderGrid::new(make_params(3, 0.0, 0.0), 4.0, n).unwrap()
    }

    #[test]
    fn construction_enforces_odd_node_count() {
        let q = make_params(3, 0.0, 0.0);
        assert!(CylinderGrid::new(q, 10.0, 101).is_ok());
        assert!(CylinderGrid::new(q, 10.0, 100).is_err());
        assert!(CylinderGrid::new(q, 10.0, 1).is_err());
        assert!(CylinderGrid::new(q, -1.0, 101).is_err());
    }

    #[test]
    fn nodes_are_uniform_and_symmetric() {
        let g = toy_grid(17);
        assert_eq!(g.h * (g.n - 1) as f64, 2.0 * g.t_max);
        assert_eq!(g.node(8), 0.0);
        assert_eq!(g.node(0), -4.0);
        assert_eq!(g.node(16), 4.0);
        assert!((g.node(5) + g.node(11)).abs() < 1e-15);
    }

    #[test]
    fn gram_reproduces_handwritten_quadrature_on_toy_grid() {
        // independent evaluation: interval-by-interval stiffness plus lumped mass
        let g = toy_grid(17);
        for mode in [0u32, 1, 3] {
            let u = ModeFunction::from_fn(&g, mode, |t| (0.7 * t).sin() + 0.2 * t).unwrap();
            let v = ModeFunction::from_fn(&g, mode, |t| (-0.5 * t * t).exp()).unwrap();
            let q = g.params.c * g.params.c + g.angular_eigenvalue(mode);
            let us = u.samples();
            let vs = v.samples();
            let mut stiff = 0.0;
            for k in 0..g.n - 1 {
                stiff += (us[k + 1] - us[k]) * (vs[k + 1] - vs[k]) / g.h;
            }
            let mut mass = 0.0;
            for k in 0..g.n {
                mass += g.quad_weights()[k] * us[k] * vs[k];
            }
            let by_hand = g.omega * (stiff + q * mass);
            let by_gram = u.h1_inner(&v).unwrap();
            assert!(
                (by_hand - by_gram).abs() <= 1e-13 * by_hand.abs().max(1.0),
                "mode {mode}: {by_hand} vs {by_gram}"
            );
        }
    }

    #[test]
    fn h1_inner_rejects_mismatched_operands() {
        let g1 = toy_grid(17);
        let g2 = toy_grid(33);
        let u = ModeFunction::zeros(&g1, 0);
        let v = ModeFunction::zeros(&g2, 0);
        assert!(matches!(u.h1_inner(&v), Err(CknError::GridMismatch)));
        let w = ModeFunction::zeros(&g1, 1);
        assert!(matches!(u.h1_inner(&w), Err(CknError::GridMismatch)));
    }

    #[test]
    fn lp_norm_is_mode_zero_only_and_homogeneous() {
        let g = toy_grid(33);
        let v = ModeFunction::from_fn(&g, 0, |t| (-t * t).exp()).unwrap();
        let n1 = v.lp_norm(6.0).unwrap();
        let n2 = v.scaled(-2.5).lp_norm(6.0).unwrap();
        assert!((n2 - 2.5 * n1).abs() < 1e-13 * n1);
        let w = ModeFunction::zeros(&g, 2);
        assert!(matches!(w.lp_norm(6.0), Err(CknError::Mode(_))));
    }

    #[test]
    fn lp_norm_matches_hand_quadrature_on_five_nodes() {
        let g = CylinderGrid::new(make_params(3, 0.0, 0.0), 2.0, 5).unwrap();
        let v = ModeFunction::new(g.clone(), 0, vec![0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        // trapezoid of |v|^2 with h=1: 0.5*0 + 1 + 4 + 1 + 0.5*0 = 6
        let expect = (g.omega * 6.0).sqrt();
        assert!((v.lp_norm(2.0).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn dual_norm_of_coordinate_gram_load() {
        let g = toy_grid(33);
        for mode in [0u32, 2] {
            let gram = g.gram(mode);
            let mut e = ModeFunction::zeros(&g, mode);
            e.samples_mut()[7] = 1.0;
            let load = e.gram_apply();
            // ||G e||_{H^-1} = sqrt(e^T G e) = sqrt(G_77)
            assert!((load.dual_norm() - gram.diag[7].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_is_sharp_at_the_riesz_representative() {
        let g = toy_grid(65);
        for seed in 0..20u32 {
            let f = ModeFunction::from_fn(&g, 0, |t| {
                let s = f64::from(seed);
                (0.3 * s * t).sin() * (-0.3 * t * t).exp() + 0.01 * s
            })
            .unwrap();
            let fnorm = f.dual_norm();
            let w = ModeFunction::from_fn(&g, 0, |t| (0.2 + f64::from(seed)) * (t - 0.3).cos()).unwrap();
            let pairing = f.pair(&w).unwrap();
            assert!(pairing.abs() <= fnorm * w.h1_norm() * (1.0 + 1e-12));
            let r = f.riesz();
            let sharp = f.pair(&r).unwrap();
            assert!((sharp - fnorm * r.h1_norm()).abs() <= 1e-10 * sharp.abs().max(1e-30));
        }
    }

    #[test]
    fn grid_for_centers_clears_tail_tolerance() {
        let q = make_params(3, 0.0, 0.0);
        let g = CylinderGrid::for_centers(q, &[-12.5, 12.5], 0.01).unwrap();
        assert!(g.hosts(&[-12.5, 12.5]).is_ok());
        assert!(q.c * (g.t_max - 12.5) >= 40.0);
        assert_eq!(g.n % 2, 1);
        // a center near the boundary violates the tail condition
        assert!(matches!(
            g.hosts(&[g.t_max - 1.0]),
            Err(CknError::GridTooNarrow(_))
        ));
    }

    #[test]
    fn parts_split_pointwise() {
        let g = toy_grid(17);
        let v = ModeFunction::from_fn(&g, 0, |t| t).unwrap();
        let diff = v.positive_part().axpy(-1.0, &v.negative_part()).unwrap();
        for (d, s) in diff.samples().iter().zip(v.samples()) {
            assert_eq!(d, s);
        }
    }
}

//! Linearization around the ground state, one angular mode at a time.
//!
//! In cylinder variables the second variation at Psi decomposes over
//! spherical harmonics; the mode-l block is the Schrodinger form
//!
//!   Q_l(v) = omega int v'^2 + (c^2 + lambda_l) v^2 - p Psi^{p-1} v^2 dt,
//!
//! whose potential p Psi^{p-1} is an exactly solvable sech^2 well: the bound
//! states sit at c^2 + lambda_l - alpha^2 (lhat - n)^2 for integer
//! 0 <= n < lhat with lhat = (p+1)/(p-1). That closed form is the oracle the
//! discrete eigensolver is measured against; it also makes mu_1(0) = 0
//! (translation) exact and mu_0(1) = 0 the symmetry-breaking threshold in b.

use crate::error::{CknError, Result};
use crate::grid::{GridRef, ModeFunction};
use crate::linalg::{saddle_negative_count, SymTridiag};
use crate::numerics::harmonic_multiplicity;
use crate::params::CknParams;
use crate::profiles::{Extremal, SmoothFn};

/// Default angular cutoff for Morse counts; blocks are increasing in l, so
/// once two consecutive blocks are coercive the rest are.
pub const DEFAULT_ELL_MAX: u32 = 4;

/// Default |mu| threshold separating numerical zero modes from signed
/// eigenvalues. Discretization moves eigenvalues by O(h^2), well inside it.
pub const DEFAULT_ZERO_TOL: f64 = 1e-3;

/// Discrete mode-l second-variation form A = G_l - omega diag(w . pot).
pub struct LinearizedOperator {
    grid: GridRef,
    mode: u32,
    form: SymTridiag,
    potential: Vec<f64>,
}

/// Eigenvalues below the essential edge, with mass-normalized eigenvectors.
pub struct SpectrumReport {
    pub mode: u32,
    pub continuum_edge: f64,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<ModeFunction>,
}

impl LinearizedOperator {
    /// Linearization at the single profile Psi centered at t = 0.
    pub fn assemble(grid: &GridRef, mode: u32) -> Result<Self> {
        let e = Extremal::new(grid.params)?;
        let p = grid.params.p;
        let pot = grid
            .nodes()
            .iter()
            .map(|&t| p * e.psi_pow(t, p - 1.0))
            .collect();
        Self::assemble_with_potential(grid, mode, pot)
    }

    /// Same quadratic form with a caller-supplied potential sample vector
    /// (multi-bubble states linearize to p|w|^{p-1} wells).
    pub fn assemble_with_potential(
        grid: &GridRef,
        mode: u32,
        potential: Vec<f64>,
    ) -> Result<Self> {
        if potential.len() != grid.n {
            return Err(CknError::Domain(format!(
                "potential sample count {} does not match grid size {}",
                potential.len(),
                grid.n
            )));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(CknError::Domain("potential contains non-finite samples".into()));
        }
        let mut form = grid.gram(mode);
        let w = grid.quad_weights();
        for k in 0..grid.n {
            form.diag[k] -= grid.omega * w[k] * potential[k];
        }
        Ok(LinearizedOperator { grid: grid.clone(), mode, form, potential })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn mode(&self) -> u32 {
        self.mode
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Bottom of the essential spectrum, c^2 + lambda_l.
    pub fn continuum_edge(&self) -> f64 {
        let c = self.grid.params.c;
        c * c + self.grid.angular_eigenvalue(self.mode)
    }

    /// A v as a dual (load) vector.
    pub fn apply(&self, v: &ModeFunction) -> Result<ModeFunction> {
        if !v.grid().same_as(&self.grid) || v.mode() != self.mode {
            return Err(CknError::GridMismatch);
        }
        ModeFunction::new(self.grid.clone(), self.mode, self.form.mul(v.samples()))
    }

    /// Q(u, v) = u^T A v.
    pub fn quadratic_form(&self, u: &ModeFunction, v: &ModeFunction) -> Result<f64> {
        let av = self.apply(v)?;
        u.check_compatible(&av)?;
        Ok(u.samples().iter().zip(av.samples()).map(|(x, y)| x * y).sum())
    }

    /// Load vector of A applied to a closed-form state, bypassing the O(h^2)
    /// consistency error of the discrete operator: each entry is
    /// omega w_k (-f'' + (c^2 + lambda_l) f - pot f)(t_k) with analytic
    /// derivatives. Annihilates the translation mode to round-off.
    pub fn apply_smooth(&self, f: &SmoothFn) -> Result<ModeFunction> {
        let fp = f.extremal().params;
        let gp = self.grid.params;
        if fp.n_dim != gp.n_dim || fp.a != gp.a || fp.b != gp.b {
            return Err(CknError::GridMismatch);
        }
        let lam = self.grid.angular_eigenvalue(self.mode);
        let w = self.grid.quad_weights();
        let samples = self
            .grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                self.grid.omega * w[k] * (f.elliptic(t) + (lam - self.potential[k]) * f.eval(t))
            })
            .collect();
        ModeFunction::new(self.grid.clone(), self.mode, samples)
    }

    /// Symmetric standard form D^{-1/2} A D^{-1/2}, D = omega diag(w), whose
    /// eigenvalues are those of the generalized pencil (A, M).
    fn standard_form(&self) -> SymTridiag {
        let w = self.grid.quad_weights();
        let om = self.grid.omega;
        let n = self.grid.n;
        let diag = (0..n).map(|k| self.form.diag[k] / (om * w[k])).collect();
        let off = (0..n - 1)
            .map(|k| self.form.off[k] / (om * (w[k] * w[k + 1]).sqrt()))
            .collect();
        SymTridiag { diag, off }
    }

    /// Number of eigenvalues strictly below x (exact Sturm count).
    pub fn count_below(&self, x: f64) -> usize {
        self.standard_form().count_below(x)
    }

    /// The `count` lowest eigenvalues with eigenvectors normalized to
    /// v^T M v = 1 and sign fixed by the largest-magnitude entry.
    pub fn eigen_lowest(&self, count: usize) -> Result<SpectrumReport> {
        let std = self.standard_form();
        let eigenvalues = std.lowest_eigenvalues(count, 1e-13);
        let w = self.grid.quad_weights();
        let om = self.grid.omega;
        let mut vectors = Vec::with_capacity(eigenvalues.len());
        for &mu in &eigenvalues {
            let y = std.eigenvector(mu)?;
            let samples = y
                .iter()
                .zip(w)
                .map(|(&yk, &wk)| yk / (om * wk).sqrt())
                .collect();
            vectors.push(ModeFunction::new(self.grid.clone(), self.mode, samples)?);
        }
        Ok(SpectrumReport {
            mode: self.mode,
            continuum_edge: self.continuum_edge(),
            eigenvalues,
            vectors,
        })
    }

    /// Lowest eigenvalue only.
    pub fn lowest(&self) -> f64 {
        self.standard_form().lowest_eigenvalues(1, 1e-13)[0]
    }

    /// All discrete eigenvalues below the essential edge (with a small safety
    /// margin so the Dirichlet discretization of the continuum never leaks in).
    pub fn bound_states(&self) -> Result<SpectrumReport> {
        let edge = self.continuum_edge();
        let margin = 1e-4 * edge.abs().max(1.0);
        let count = self.count_below(edge - margin);
        if count == 0 {
            return Ok(SpectrumReport {
                mode: self.mode,
                continuum_edge: edge,
                eigenvalues: Vec::new(),
                vectors: Vec::new(),
            });
        }
        self.eigen_lowest(count)
    }

    /// Whether Q is positive definite on the subspace annihilated by the
    /// given dual constraints (loads g_j, constraint g_j^T v = 0): the
    /// bordered saddle matrix must have exactly one negative pivot per
    /// independent constraint and no more.
    pub fn restricted_coercive(&self, constraints: &[ModeFunction]) -> Result<bool> {
        let mut borders = Vec::with_capacity(constraints.len());
        for g in constraints {
            if !g.grid().same_as(&self.grid) || g.mode() != self.mode {
                return Err(CknError::GridMismatch);
            }
            borders.push(g.samples().to_vec());
        }
        Ok(saddle_negative_count(&self.form, &borders) == constraints.len())
    }
}

/// Exact bound-state eigenvalues of the mode-l block: all
/// c^2 + lambda_l - alpha^2 (lhat - n)^2 with integer 0 <= n < lhat,
/// lhat = (p+1)/(p-1). The essential edge itself is never included.
pub fn oracle_spectrum(params: CknParams, mode: u32) -> Result<Vec<f64>> {
    params.require_supercritical()?;
    let (c, p) = (params.c, params.p);
    let alpha = c * (p - 1.0) / 2.0;
    let lhat = (p + 1.0) / (p - 1.0);
    let lam = {
        let l = f64::from(mode);
        l * (l + f64::from(params.n_dim) - 2.0)
    };
    let edge = c * c + lam;
    let mut out = Vec::new();
    let mut n = 0.0;
    while n < lhat {
        out.push(edge - alpha * alpha * (lhat - n) * (lhat - n));
        n += 1.0;
    }
    Ok(out)
}

/// Per-mode eigenvalue counts, weighted by spherical-harmonic multiplicity.
#[derive(Clone, Debug)]
pub struct ModeCount {
    pub mode: u32,
    pub multiplicity: usize,
    pub negative: usize,
    pub zero: usize,
    pub lowest: f64,
}

#[derive(Clone, Debug)]
pub struct MorseReport {
    pub per_mode: Vec<ModeCount>,
    /// Negative eigenvalues counted with angular multiplicity.
    pub negative_total: usize,
    /// Numerical zero modes counted with angular multiplicity.
    pub zero_total: usize,
}

/// Morse data of the second variation at Psi over modes 0..=ell_max.
pub fn morse_index(params: CknParams, h: f64, ell_max: u32, zero_tol: f64) -> Result<MorseReport> {
    params.require_supercritical()?;
    let grid = crate::grid::CylinderGrid::for_centers(params, &[0.0], h)?;
    let mut per_mode = Vec::with_capacity(ell_max as usize + 1);
    let mut negative_total = 0;
    let mut zero_total = 0;
    for mode in 0..=ell_max {
        let op = LinearizedOperator::assemble(&grid, mode)?;
        let below = op.count_below(-zero_tol);
        let zero = op.count_below(zero_tol) - below;
        let lowest = op.lowest();
        let multiplicity = harmonic_multiplicity(params.n_dim, mode) as usize;
        negative_total += below * multiplicity;
        zero_total += zero * multiplicity;
        per_mode.push(ModeCount { mode, multiplicity, negative: below, zero, lowest });
    }
    Ok(MorseReport { per_mode, negative_total, zero_total })
}

/// Numerically locate the b at which the mode-1 block loses coercivity, for
/// fixed (N, a): scan b over the admissible strip for a sign change of the
/// lowest mode-1 eigenvalue, then bisect the bracket below 2e-6.
pub fn find_symmetry_breaking_b(n_dim: u32, a: f64, h: f64) -> Result<f64> {
    let lowest_mode1 = |b: f64| -> Result<f64> {
        let q = crate::params::make_params(n_dim, a, b);
        q.require_supercritical()?;
        let grid = crate::grid::CylinderGrid::for_centers(q, &[0.0], h)?;
        Ok(LinearizedOperator::assemble(&grid, 1)?.lowest())
    };
    const SCAN: usize = 17;
    let mut prev_b = a + 0.02;
    let mut prev_mu = lowest_mode1(prev_b)?;
    let mut bracket = None;
    for k in 1..SCAN {
        let b = a + 0.02 + 0.96 * (k as f64) / ((SCAN - 1) as f64);
        let mu = lowest_mode1(b)?;
        if prev_mu <= 0.0 && mu > 0.0 {
            bracket = Some((prev_b, b));
            break;
        }
        prev_b = b;
        prev_mu = mu;
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        CknError::Bracket(format!(
            "mode-1 eigenvalue does not change sign over b in ({:.3}, {:.3}) at N={n_dim}, a={a}",
            a + 0.02,
            a + 0.98
        ))
    })?;
    while hi - lo > 2e-6 {
        let mid = 0.5 * (lo + hi);
        if lowest_mode1(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One eigenvalue computed at steps h and h/2 on the same interval, with the
/// second-order Richardson combination.
#[derive(Clone, Copy, Debug)]
pub struct EigenRefinement {
    pub h: f64,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

/// Eigenvalue `index` of the mode-l block at steps h and h/2.
pub fn refined_eigenvalue(
    params: CknParams,
    mode: u32,
    index: usize,
    h: f64,
) -> Result<EigenRefinement> {
    let grid = crate::grid::CylinderGrid::for_centers(params, &[0.0], h)?;
    let fine_grid = crate::grid::CylinderGrid::new(params, grid.t_max, 2 * grid.n - 1)?;
    let coarse = LinearizedOperator::assemble(&grid, mode)?
        .eigen_lowest(index + 1)?
        .eigenvalues[index];
    let fine = LinearizedOperator::assemble(&fine_grid, mode)?
        .eigen_lowest(index + 1)?
        .eigenvalues[index];
    Ok(EigenRefinement { h, coarse, fine, extrapolated: (4.0 * fine - coarse) / 3.0 })
}

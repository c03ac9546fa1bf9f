//! Tridiagonal linear algebra: SPD and pivoted LU solves, Sturm-sequence
//! eigenvalue bisection, inverse iteration, and bordered (tridiagonal plus
//! low-rank constraint rows/columns) solves with iterative refinement.
//!
//! Everything here is O(n) per solve; the discrete operators in this crate
//! are one-dimensional per angular mode, so dense factorizations are never
//! needed.

use crate::error::{CknError, Result};

/// Guard for near-zero pivots in Sturm sequences and inverse-iteration
/// factorizations; standard practice is to nudge, not fail.
const PIVOT_GUARD: f64 = 1e-280;

/// Symmetric tridiagonal matrix (diag has length n, off length n-1).
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// LDL^T factorization for strictly positive definite matrices.
    ///
    /// The H^1 Gram matrices this is used on are strictly diagonally dominant
    /// with positive diagonal, so nonpositive pivots indicate a caller bug.
    pub fn factor_spd(&self) -> SpdFactor {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        assert!(d[0] > 0.0, "matrix is not positive definite");
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            assert!(d[i] > 0.0, "matrix is not positive definite");
        }
        SpdFactor { d, l }
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence / LDL^T pivots).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.n();
        let mut count = 0usize;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let q_safe = if q.abs() < PIVOT_GUARD {
                if q >= 0.0 {
                    PIVOT_GUARD
                } else {
                    -PIVOT_GUARD
                }
            } else {
                q
            };
            q = (self.diag[i] - x) - self.off[i - 1] * self.off[i - 1] / q_safe;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin bounds (lo, hi) enclosing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for i in 0..n {
            let e_left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let e_right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - e_left - e_right);
            hi = hi.max(self.diag[i] + e_left + e_right);
        }
        (lo, hi)
    }

    /// The k smallest eigenvalues, ascending, by bisection on the Sturm count.
    ///
    /// Each eigenvalue is bisected to absolute width `tol * scale` where
    /// scale is the Gershgorin radius; clustered eigenvalues are handled
    /// because the count function is exact.
    pub fn lowest_eigenvalues(&self, k: usize, tol: f64) -> Vec<f64> {
        let (glo, ghi) = self.gershgorin();
        let scale = ghi.abs().max(glo.abs()).max(1e-30);
        let width_tol = tol * scale;
        let mut out = Vec::with_capacity(k);
        for j in 0..k.min(self.n()) {
            let mut lo = glo - scale * 1e-12;
            let mut hi = ghi + scale * 1e-12;
            // invariant: count_below(lo) <= j < count_below(hi)
            while hi - lo > width_tol {
                let mid = 0.5 * (lo + hi);
                if self.count_below(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// Eigenvector for an isolated eigenvalue estimate, by inverse iteration.
    ///
    /// Returns a euclidean-normalized vector with a deterministic sign (the
    /// entry of largest magnitude is positive). Retries with nudged shifts
    /// before giving up.
    pub fn eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.n();
        let (glo, ghi) = self.gershgorin();
        let scale = ghi.abs().max(glo.abs()).max(1e-30);
        for attempt in 0..4 {
            let shift = lambda + scale * 1e-13 * f64::from(attempt * attempt);
            let tri = Tridiag {
                sub: self.off.clone(),
                diag: self.diag.iter().map(|d| d - shift).collect(),
                sup: self.off.clone(),
            };
            let lu = tri.factor();
            // Deterministic start with no accidental symmetry.
            let mut x: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.37 * ((i % 7) as f64) - 0.11 * ((i % 3) as f64))
                .collect();
            normalize(&mut x);
            let mut ok = false;
            for _ in 0..8 {
                lu.solve_in_place(&mut x);
                let norm = normalize(&mut x);
                if !norm.is_finite() {
                    break;
                }
                // residual ||(A - rho)x|| at the vector's own Rayleigh
                // quotient, so a slightly loose eigenvalue estimate still
                // accepts the converged eigenvector
                let ax = self.mul(&x);
                let rho: f64 = ax.iter().zip(&x).map(|(a, b)| a * b).sum();
                let r = ax
                    .iter()
                    .zip(&x)
                    .map(|(a, xi)| {
                        let d = a - rho * xi;
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                if r <= 1e-10 * scale {
                    ok = true;
                    break;
                }
            }
            if ok {
                fix_sign(&mut x);
                return Ok(x);
            }
        }
        Err(CknError::Convergence(format!(
            "inverse iteration failed for eigenvalue estimate {lambda}"
        )))
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

fn fix_sign(x: &mut [f64]) {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            idx = i;
        }
    }
    if x[idx] < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// LDL^T factors of an SPD tridiagonal matrix.
pub struct SpdFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl SpdFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// General (possibly unsymmetric or indefinite) tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct Tridiag {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn from_sym(s: &SymTridiag) -> Self {
        Tridiag {
            sub: s.off.clone(),
            diag: s.diag.clone(),
            sup: s.off.clone(),
        }
    }

    pub fn transpose(&self) -> Self {
        Tridiag {
            sub: self.sup.clone(),
            diag: self.diag.clone(),
            sup: self.sub.clone(),
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// LU with partial pivoting (row swaps create one extra superdiagonal).
    ///
    /// Exact zero pivots are replaced by a tiny guard so that inverse
    /// iteration can factor nearly singular shifts; `min_pivot` lets callers
    /// detect genuine singularity.
    pub fn factor(&self) -> TriLu {
        let n = self.n();
        let mut dl = self.sub.clone();
        let mut d = self.diag.clone();
        let mut du = self.sup.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let mut min_pivot = f64::MAX;
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                // no swap
                if d[i].abs() < PIVOT_GUARD {
                    d[i] = if d[i] >= 0.0 { PIVOT_GUARD } else { -PIVOT_GUARD };
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
            min_pivot = min_pivot.min(d[i].abs());
        }
        if n > 0 {
            if d[n - 1].abs() < PIVOT_GUARD {
                d[n - 1] = if d[n - 1] >= 0.0 { PIVOT_GUARD } else { -PIVOT_GUARD };
            }
            min_pivot = min_pivot.min(d[n - 1].abs());
        }
        TriLu {
            dl,
            d,
            du,
            du2,
            swapped,
            min_pivot,
        }
    }
}

/// Pivoted LU factors of a tridiagonal matrix.
pub struct TriLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
    pub min_pivot: f64,
}

impl TriLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Square system with a tridiagonal leading block and nu dense border
/// rows/columns:
///
///   [ T  B ] [x]   [b1]
///   [ C  D ] [z] = [b2]
///
/// Solved by block elimination through the Schur complement D - C T^{-1} B,
/// then polished by iterative refinement on the full residual. Refinement is
/// what keeps the solve backward-stable when T is ill-conditioned relative
/// to the border (the Newton systems here have cond(T) growing like 1/Q).
pub struct BorderedSystem {
    pub tri: Tridiag,
    /// nu columns of length n (the B block, column-major).
    pub cols: Vec<Vec<f64>>,
    /// nu rows of length n (the C block, row-major).
    pub rows: Vec<Vec<f64>>,
    /// nu x nu corner block D.
    pub corner: Vec<Vec<f64>>,
}

impl BorderedSystem {
    pub fn nu(&self) -> usize {
        self.cols.len()
    }

    fn apply(&self, x: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut top = self.tri.mul(x);
        for (j, col) in self.cols.iter().enumerate() {
            let zj = z[j];
            if zj != 0.0 {
                for (ti, ci) in top.iter_mut().zip(col) {
                    *ti += ci * zj;
                }
            }
        }
        let bot: Vec<f64> = (0..self.nu())
            .map(|i| {
                let mut s = dot(&self.rows[i], x);
                for (j, zj) in z.iter().enumerate() {
                    s += self.corner[i][j] * zj;
                }
                s
            })
            .collect();
        (top, bot)
    }

    /// Solve for (x, z). `scale` should be a caller-meaningful magnitude of
    /// the matrix entries times solution entries; residuals are driven below
    /// 1e-14 * max(scale, |rhs|).
    pub fn solve(&self, b1: &[f64], b2: &[f64], scale: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let nu = self.nu();
        let lu = self.tri.factor();
        let xcols: Vec<Vec<f64>> = self.cols.iter().map(|c| lu.solve(c)).collect();
        // Schur complement S = D - C T^{-1} B
        let mut schur = vec![vec![0.0; nu]; nu];
        for i in 0..nu {
            for j in 0..nu {
                schur[i][j] = self.corner[i][j] - dot(&self.rows[i], &xcols[j]);
            }
        }
        let schur_lu = DenseLu::factor(schur).ok_or_else(|| {
            CknError::SingularBordered("constraint Schur complement is singular".into())
        })?;

        let base_solve = |r1: &[f64], r2: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let y = lu.solve(r1);
            let rhs_z: Vec<f64> = (0..nu).map(|i| r2[i] - dot(&self.rows[i], &y)).collect();
            let z = schur_lu.solve(&rhs_z);
            let mut x = y;
            for (j, col) in xcols.iter().enumerate() {
                let zj = z[j];
                for (xi, ci) in x.iter_mut().zip(col) {
                    *xi -= ci * zj;
                }
            }
            (x, z)
        };

        let (mut x, mut z) = base_solve(b1, b2);
        let rhs_norm = inf_norm(b1).max(inf_norm(b2));
        let tol = 1e-14 * scale.max(rhs_norm).max(1e-300);
        let mut last = f64::MAX;
        for _ in 0..30 {
            let (ax_top, ax_bot) = self.apply(&x, &z);
            let r1: Vec<f64> = b1.iter().zip(&ax_top).map(|(b, a)| b - a).collect();
            let r2: Vec<f64> = b2.iter().zip(&ax_bot).map(|(b, a)| b - a).collect();
            let rnorm = inf_norm(&r1).max(inf_norm(&r2));
            if rnorm <= tol {
                return Ok((x, z));
            }
            if rnorm >= 0.5 * last {
                // stagnated above tolerance: accept if we got close, else fail
                if rnorm <= 1e4 * tol {
                    return Ok((x, z));
                }
                return Err(CknError::SingularBordered(format!(
                    "iterative refinement stagnated at residual {rnorm:.3e} (tolerance {tol:.3e})"
                )));
            }
            last = rnorm;
            let (dx, dz) = base_solve(&r1, &r2);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            for (zi, di) in z.iter_mut().zip(&dz) {
                *zi += di;
            }
        }
        Err(CknError::SingularBordered(
            "iterative refinement did not converge in 30 sweeps".into(),
        ))
    }

    /// Smallest singular value estimate by inverse power iteration on A^T A.
    pub fn sigma_min(&self, iters: usize, scale: f64) -> Result<f64> {
        let n = self.tri.n();
        let nu = self.nu();
        let transposed = BorderedSystem {
            tri: self.tri.transpose(),
            cols: self.rows.clone(),
            rows: self.cols.clone(),
            corner: transpose_small(&self.corner),
        };
        let mut v: Vec<f64> = (0..n + nu)
            .map(|i| 1.0 + 0.31 * ((i % 5) as f64) - 0.17 * ((i % 2) as f64))
            .collect();
        normalize(&mut v);
        let mut growth = 0.0;
        for _ in 0..iters {
            let (x, z) = transposed.solve(&v[..n], &v[n..], scale)?;
            let mut joined = x;
            joined.extend_from_slice(&z);
            let (x2, z2) = self.solve(&joined[..n], &joined[n..], scale)?;
            let mut next = x2;
            next.extend_from_slice(&z2);
            growth = normalize(&mut next);
            v = next;
        }
        Ok(1.0 / growth.sqrt())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn transpose_small(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = m.len();
    (0..k).map(|i| (0..k).map(|j| m[j][i]).collect()).collect()
}

/// Dense LU with partial pivoting for the tiny Schur blocks (nu <= 4).
struct DenseLu {
    a: Vec<Vec<f64>>,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: Vec<Vec<f64>>) -> Option<Self> {
        let n = a.len();
        let mut piv = Vec::with_capacity(n);
        for k in 0..n {
            let (imax, vmax) = (k..n)
                .map(|i| (i, a[i][k].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if vmax == 0.0 {
                return None;
            }
            a.swap(k, imax);
            piv.push(imax);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                for j in k + 1..n {
                    let akj = a[k][j];
                    a[i][j] -= f * akj;
                }
            }
        }
        Some(DenseLu { a, piv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            for i in k + 1..n {
                let xk = x[k];
                x[i] -= self.a[i][k] * xk;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let xj = x[j];
                x[i] -= self.a[i][j] * xj;
            }
            x[i] /= self.a[i][i];
        }
        x
    }
}

/// Negative-eigenvalue count of the symmetric saddle matrix [[T, U], [U^T, 0]].
///
/// For U of full column rank m, this count equals m plus the number of
/// negative eigenvalues of T restricted to the orthogonal complement of
/// range(U); callers test restricted positivity via `count == m`.
pub fn saddle_negative_count(t: &SymTridiag, borders: &[Vec<f64>]) -> usize {
    let n = t.n();
    let m = borders.len();
    let mut d_curr = t.diag[0];
    let mut u: Vec<Vec<f64>> = borders.iter().map(|b| b.to_vec()).collect();
    let mut schur = vec![vec![0.0; m]; m];
    let mut negatives = 0usize;
    for k in 0..n {
        let pivot = if d_curr.abs() < PIVOT_GUARD {
            if d_curr >= 0.0 {
                PIVOT_GUARD
            } else {
                -PIVOT_GUARD
            }
        } else {
            d_curr
        };
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in 0..m {
            for j in 0..=i {
                let corr = u[i][k] * u[j][k] / pivot;
                schur[i][j] -= corr;
                if i != j {
                    schur[j][i] -= corr;
                }
            }
        }
        if k + 1 < n {
            let e = t.off[k];
            d_curr = t.diag[k + 1] - e * e / pivot;
            for row in u.iter_mut() {
                row[k + 1] -= e * row[k] / pivot;
            }
        }
    }
    negatives + dense_negative_count(&schur)
}

/// Negative eigenvalues of a small symmetric matrix via LDL^T with
/// symmetric diagonal pivoting (sufficient for the m <= 4 blocks here).
fn dense_negative_count(a: &[Vec<f64>]) -> usize {
    let m = a.len();
    let mut w: Vec<Vec<f64>> = a.to_vec();
    let mut order: Vec<usize> = (0..m).collect();
    let mut negatives = 0;
    for k in 0..m {
        // pick the largest remaining |diagonal| as pivot
        let (kp, _) = (k..m)
            .map(|i| (i, w[order[i]][order[i]].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        order.swap(k, kp);
        let pk = order[k];
        let mut pivot = w[pk][pk];
        if pivot.abs() < PIVOT_GUARD {
            pivot = if pivot >= 0.0 { PIVOT_GUARD } else { -PIVOT_GUARD };
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for ii in k + 1..m {
            for jj in k + 1..=ii {
                let (i, j) = (order[ii], order[jj]);
                let corr = w[i][pk] * w[j][pk] / pivot;
                w[i][j] -= corr;
                if i != j {
                    w[j][i] -= corr;
                }
            }
        }
    }
    negatives
}

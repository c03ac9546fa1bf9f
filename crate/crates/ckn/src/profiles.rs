//! Closed-form extremal profiles and the log-radius change of variables.
//!
//! On R^N the radial extremal is
//!
//!   W(r) = (2(p+1)c^2)^{1/(p-1)} (1 + r^{c(p-1)})^{-2/(p-1)},
//!
//! and under v(t) = r^c u(r), t = -ln r it becomes the cylinder ground state
//!
//!   Psi(t) = ((p+1)c^2/2)^{1/(p-1)} cosh(alpha t)^{-2/(p-1)},  alpha = c(p-1)/2,
//!
//! which solves -Psi'' + c^2 Psi = Psi^p. Everything is evaluated through
//! log Psi so that large |t| and p near 1 cannot overflow; all derivatives
//! are closed forms (no numerical differentiation anywhere in production:
//! these feed operator assembly and residuals, and must not pollute
//! convergence measurements).
//!
//! The dilation generator is fixed by the transform: V(r) = -(c W + r W'),
//! which satisfies r^c V(r) = Psi'(t) at t = -ln r. (The sign convention is
//! chosen so that V corresponds to the cylinder translation derivative; the
//! opposite orientation of the dilation flips both signs coherently.)

use crate::error::{CknError, Result};
use crate::grid::{GridRef, ModeFunction};
use crate::numerics::{log_cosh, signed_pow, softplus};
use crate::params::CknParams;

/// Closed-form evaluator for one parameter tuple.
#[derive(Clone, Copy, Debug)]
pub struct Extremal {
    pub params: CknParams,
    /// ln Psi(0) = ln((p+1)c^2/2) / (p-1).
    ln_amp: f64,
    /// alpha = c(p-1)/2, the sech^2 well width parameter.
    pub alpha: f64,
}

impl Extremal {
    pub fn new(params: CknParams) -> Result<Self> {
        params.require_supercritical()?;
        let (c, p) = (params.c, params.p);
        Ok(Extremal {
            params,
            ln_amp: ((p + 1.0) * c * c / 2.0).ln() / (p - 1.0),
            alpha: c * (p - 1.0) / 2.0,
        })
    }

    /// Psi(0), the profile maximum.
    pub fn amplitude(&self) -> f64 {
        self.ln_amp.exp()
    }

    pub fn log_psi(&self, t: f64) -> f64 {
        self.ln_amp - 2.0 / (self.params.p - 1.0) * log_cosh(self.alpha * t)
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.log_psi(t).exp()
    }

    /// Psi(t)^q as exp(q log Psi): safe even where Psi^q alone would overflow.
    pub fn psi_pow(&self, t: f64, q: f64) -> f64 {
        (q * self.log_psi(t)).exp()
    }

    /// dPsi/dt = -c tanh(alpha t) Psi.
    pub fn psi_prime(&self, t: f64) -> f64 {
        -self.params.c * (self.alpha * t).tanh() * self.psi(t)
    }

    /// d^2 Psi/dt^2 = Psi ((c^2 + c alpha) tanh^2 - c alpha).
    pub fn psi_second(&self, t: f64) -> f64 {
        let c = self.params.c;
        let th = (self.alpha * t).tanh();
        self.psi(t) * ((c * c + c * self.alpha) * th * th - c * self.alpha)
    }

    /// d^3 Psi/dt^3, differentiating the second-derivative form once more.
    pub fn psi_third(&self, t: f64) -> f64 {
        let c = self.params.c;
        let al = self.alpha;
        let th = (al * t).tanh();
        let sech2 = 1.0 - th * th;
        self.psi(t) * (-c * th * ((c * c + c * al) * th * th - c * al)
            + 2.0 * al * (c * c + c * al) * th * sech2)
    }

    /// ln W at ln r = lr (the radial profile never needs r itself, so huge
    /// radii cannot overflow).
    pub fn log_w(&self, lr: f64) -> f64 {
        let p = self.params.p;
        let gamma = 2.0 * self.alpha; // c(p-1)
        (2.0 * (p + 1.0) * self.params.c * self.params.c).ln() / (p - 1.0)
            - 2.0 / (p - 1.0) * softplus(gamma * lr)
    }

    pub fn eval_w(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(CknError::Domain(format!("radius {r} must be positive")));
        }
        Ok(self.log_w(r.ln()).exp())
    }

    /// W(0+) = (2(p+1)c^2)^{1/(p-1)}.
    pub fn w_origin(&self) -> f64 {
        self.log_w(f64::NEG_INFINITY).exp()
    }

    /// dW/dr = -2c W(r) r^{gamma-1}/(1+r^gamma), evaluated stably at ln r = lr.
    pub fn w_prime_from_ln_r(&self, lr: f64) -> f64 {
        -self.log_abs_w_prime(lr).exp()
    }

    /// ln |W'| at ln r = lr; W' < 0 for all r > 0.
    pub fn log_abs_w_prime(&self, lr: f64) -> f64 {
        let gamma = 2.0 * self.alpha;
        (2.0 * self.params.c).ln() + self.log_w(lr) + (gamma - 1.0) * lr - softplus(gamma * lr)
    }

    /// Dilation generator V(r) = -(c W + r W') = c W(r) tanh(alpha ln r);
    /// the cylinder image of Psi': r^c V(r) = Psi'(-ln r).
    pub fn v_dilation_from_ln_r(&self, lr: f64) -> f64 {
        self.params.c * self.log_w(lr).exp() * (self.alpha * lr).tanh()
    }

    pub fn v_dilation(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(CknError::Domain(format!("radius {r} must be positive")));
        }
        Ok(self.v_dilation_from_ln_r(r.ln()))
    }
}

/// One closed-form building block of a smooth cylinder state.
#[derive(Clone, Copy, Debug)]
pub enum SmoothTerm {
    /// Psi_s = Psi(t - s).
    Profile { s: f64 },
    /// Psi'_s, the translation zero mode at center s.
    ProfileTangent { s: f64 },
    /// Compactly supported C^2 bump (1-u^2)^3 * trig(freq pi u), u = (t-center)/width,
    /// zero outside |u| < 1. trig is cos for even bumps, sin for odd ones.
    Bump {
        center: f64,
        width: f64,
        freq: u32,
        odd: bool,
    },
}

/// Linear combination of closed-form terms with exact derivatives and an
/// exact linear-elliptic image. Used wherever a residual must not carry the
/// O(h^2) consistency error of the discrete operator.
#[derive(Clone, Debug)]
pub struct SmoothFn {
    ext: Extremal,
    terms: Vec<(f64, SmoothTerm)>,
}

fn bump_parts(center: f64, width: f64, freq: u32, odd: bool, t: f64) -> (f64, f64, f64) {
    let u = (t - center) / width;
    if u.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let m = 1.0 - u * u;
    let b = m * m * m;
    let db = -6.0 * u * m * m;
    let ddb = -6.0 * m * m + 24.0 * u * u * m;
    let k = f64::from(freq) * std::f64::consts::PI;
    let (trig, dtrig) = if odd {
        ((k * u).sin(), k * (k * u).cos())
    } else {
        ((k * u).cos(), -k * (k * u).sin())
    };
    let g = b * trig;
    let dg = db * trig + b * dtrig;
    let ddg = ddb * trig + 2.0 * db * dtrig - b * k * k * trig;
    (g, dg / width, ddg / (width * width))
}

impl SmoothFn {
    pub fn new(ext: Extremal) -> Self {
        SmoothFn { ext, terms: Vec::new() }
    }

    pub fn extremal(&self) -> &Extremal {
        &self.ext
    }

    pub fn terms(&self) -> &[(f64, SmoothTerm)] {
        &self.terms
    }

    pub fn push(&mut self, coef: f64, term: SmoothTerm) -> &mut Self {
        self.terms.push((coef, term));
        self
    }

    /// Sum of Psi_{s_j} over the given centers.
    pub fn bubble_sum(ext: Extremal, centers: &[f64]) -> Self {
        let mut f = SmoothFn::new(ext);
        for &s in centers {
            f.push(1.0, SmoothTerm::Profile { s });
        }
        f
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, term)| {
                a * match term {
                    SmoothTerm::Profile { s } => self.ext.psi(t - s),
                    SmoothTerm::ProfileTangent { s } => self.ext.psi_prime(t - s),
                    SmoothTerm::Bump { center, width, freq, odd } => {
                        bump_parts(center, width, freq, odd, t).0
                    }
                }
            })
            .sum()
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, term)| {
                a * match term {
                    SmoothTerm::Profile { s } => self.ext.psi_prime(t - s),
                    SmoothTerm::ProfileTangent { s } => self.ext.psi_second(t - s),
                    SmoothTerm::Bump { center, width, freq, odd } => {
                        bump_parts(center, width, freq, odd, t).1
                    }
                }
            })
            .sum()
    }

    pub fn d2(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, term)| {
                a * match term {
                    SmoothTerm::Profile { s } => self.ext.psi_second(t - s),
                    SmoothTerm::ProfileTangent { s } => self.ext.psi_third(t - s),
                    SmoothTerm::Bump { center, width, freq, odd } => {
                        bump_parts(center, width, freq, odd, t).2
                    }
                }
            })
            .sum()
    }

    /// The linear elliptic image (-d^2/dt^2 + c^2) f, using per-term exact
    /// identities: profiles map to Psi^p, tangents to p Psi^{p-1} Psi'.
    pub fn elliptic(&self, t: f64) -> f64 {
        let c2 = self.ext.params.c * self.ext.params.c;
        let p = self.ext.params.p;
        self.terms
            .iter()
            .map(|&(a, term)| {
                a * match term {
                    SmoothTerm::Profile { s } => self.ext.psi_pow(t - s, p),
                    SmoothTerm::ProfileTangent { s } => {
                        p * self.ext.psi_pow(t - s, p - 1.0) * self.ext.psi_prime(t - s)
                    }
                    SmoothTerm::Bump { center, width, freq, odd } => {
                        let (g, _, ddg) = bump_parts(center, width, freq, odd, t);
                        -ddg + c2 * g
                    }
                }
            })
            .sum()
    }

    /// Strong-form nonlinear residual (-f'' + c^2 f - |f|^{p-1} f)(t).
    pub fn strong_residual(&self, t: f64) -> f64 {
        self.elliptic(t) - signed_pow(self.eval(t), self.ext.params.p)
    }

    pub fn sample(&self, grid: &GridRef) -> Result<ModeFunction> {
        ModeFunction::from_fn(grid, 0, |t| self.eval(t))
    }
}

/// Cylinder image of radial samples taken at r_k = e^{-t_k}: v_k = e^{-c t_k} u_k.
pub fn emden_fowler_forward(grid: &GridRef, radial: &[f64]) -> Result<ModeFunction> {
    if radial.len() != grid.n {
        return Err(CknError::Domain(format!(
            "radial sample count {} does not match grid size {}",
            radial.len(),
            grid.n
        )));
    }
    let c = grid.params.c;
    let samples = grid
        .nodes()
        .iter()
        .zip(radial)
        .map(|(&t, &u)| (-c * t).exp() * u)
        .collect();
    ModeFunction::new(grid.clone(), 0, samples)
}

/// Radial samples u_k = e^{c t_k} v_k at r_k = e^{-t_k} (inverse transform).
pub fn emden_fowler_inverse(v: &ModeFunction) -> Vec<f64> {
    let c = v.grid().params.c;
    v.grid()
        .nodes()
        .iter()
        .zip(v.samples())
        .map(|(&t, &vk)| (c * t).exp() * vk)
        .collect()
}

/// Weighted Dirichlet inner product int |x|^{-2a} grad(u).grad(v) dx of two
/// radial functions, computed through the cylinder isometry (the production
/// path; a direct radial-quadrature path exists in the tests).
pub fn d12a_inner(grid: &GridRef, u_radial: &[f64], v_radial: &[f64]) -> Result<f64> {
    let uc = emden_fowler_forward(grid, u_radial)?;
    let vc = emden_fowler_forward(grid, v_radial)?;
    uc.h1_inner(&vc)
}

/// omega * trapezoid of (f' g' + c^2 f g) using analytic derivatives. For
/// exponentially decaying analytic integrands the trapezoid rule is accurate
/// to round-off, so this is the reference value for the discrete Gram.
pub fn h1_inner_analytic(grid: &GridRef, f: &SmoothFn, g: &SmoothFn) -> f64 {
    let c2 = grid.params.c * grid.params.c;
    let vals: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&t| f.d1(t) * g.d1(t) + c2 * f.eval(t) * g.eval(t))
        .collect();
    grid.omega * grid.trapezoid(&vals)
}

//! Numerics for the Caffarelli-Kohn-Nirenberg inequality on the cylinder.
//!
//! The Emden-Fowler change of variables turns radial functions of R^N with
//! the |x|^{-2a} Dirichlet weight into functions on a cylinder R x S^{N-1},
//! where the extremal profile is an explicit sech power and the linearized
//! operator decomposes into exactly solvable one-dimensional blocks. This
//! crate builds that picture numerically: parameter classification and the
//! symmetry-breaking curve, closed-form profiles, a P1 finite element grid,
//! spectra, deficits and residuals, multi-bubble superpositions, a
//! finite-dimensional reduction with its corrector trichotomy, and the
//! quantitative stability experiments built on all of it.
//!
//! Conventions used throughout:
//!
//! - `t` is the cylinder variable, `c = (N-2)/2 - a` the decay rate, and all
//!   H^1 norms carry the zero-mode weight `c^2 + lambda_ell` and the sphere
//!   area factor.
//! - Sampled states live on [`grid::ModeFunction`]; closed-form states on
//!   [`profiles::SmoothFn`]. Mixed assemblies in [`functionals`] keep the
//!   closed-form part analytic so near-extremal residuals are not drowned by
//!   the O(h^2) consistency error.
//! - Experiments ([`reduction`], [`stability`], [`verify`]) are
//!   deterministic: random ensembles derive per-direction seeds from one
//!   stream so reports are byte-reproducible.

pub mod bubbles;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod numerics;
pub mod params;
pub mod profiles;
pub mod reduction;
pub mod spectral;
pub mod stability;
pub mod verify;

pub use error::{CknError, Result};
pub use params::{classify_region, felli_schneider, make_params, CknParams, Region};

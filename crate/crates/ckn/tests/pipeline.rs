//! Cross-module checks that chain the public API the way the experiments do:
//! radial energies through the change of variables, the grid Rayleigh
//! quotient against the closed-form constant, the counterexample family, and
//! one full deficit/distance loop on a hand-built perturbation.

use ckn::bubbles::BubbleConfig;
use ckn::functionals::{best_constant_inv, deficit, grid_best_constant_inv, residual_load_smooth};
use ckn::grid::CylinderGrid;
use ckn::params::make_params;
use ckn::profiles::{d12a_inner, Extremal, SmoothFn, SmoothTerm};
use ckn::reduction::counterexample_state;
use ckn::stability::distance_to_manifold;

fn tuples() -> Vec<ckn::params::CknParams> {
    vec![
        make_params(3, 0.0, 0.0),
        make_params(4, 0.0, 0.5),
        make_params(3, 0.0, 0.5),
        make_params(3, -1.0, -0.9),
        make_params(3, -1.0, -0.2),
    ]
}

#[test]
fn radial_gradient_energy_equals_cylinder_energy() {
    // same number, once through the weighted radial integral and once
    // through the cylinder H1 form
    for q in tuples() {
        let grid = CylinderGrid::new(q, 60.0, 6001).unwrap();
        let e = Extremal::new(q).unwrap();
        let radial: Vec<f64> = grid.nodes().iter().map(|&t| e.log_w(-t).exp()).collect();
        let lhs = d12a_inner(&grid, &radial, &radial).unwrap();
        let mut f = SmoothFn::new(e);
        f.push(1.0, SmoothTerm::Profile { s: 0.0 });
        let rhs = f.sample(&grid).unwrap().h1_norm_sq();
        assert!(
            (lhs - rhs).abs() < 1e-10 * rhs,
            "energies {lhs} vs {rhs} at ({},{},{})",
            q.n_dim,
            q.a,
            q.b
        );
    }
}

#[test]
fn grid_rayleigh_quotient_converges_to_the_closed_form() {
    for q in [make_params(3, 0.0, 0.0), make_params(4, 0.0, 0.5)] {
        let exact = best_constant_inv(q).unwrap();
        let coarse = {
            let grid = CylinderGrid::new(q, 60.0, 3001).unwrap();
            grid_best_constant_inv(&grid).unwrap()
        };
        let fine = {
            let grid = CylinderGrid::new(q, 60.0, 6001).unwrap();
            grid_best_constant_inv(&grid).unwrap()
        };
        let (ec, ef) = ((coarse - exact).abs(), (fine - exact).abs());
        assert!(ec < 1e-3 * exact, "coarse err {ec} at ({},{},{})", q.n_dim, q.a, q.b);
        // second-order scheme: halving h cuts the error by about 4
        let order = (ec / ef).log2();
        assert!((order - 2.0).abs() < 0.25, "observed order {order}");
    }
}

#[test]
fn counterexample_family_breaks_residual_stability() {
    // residual shrinks like Q while the one-bubble distance stays order one,
    // so no bound distance <= C * residual can hold
    let q = make_params(3, 0.0, 0.0);
    let mut ratios = Vec::new();
    for cr in [10.0, 15.0, 20.0] {
        let config = BubbleConfig::symmetric_pair(q, cr / q.c).unwrap();
        let cex = counterexample_state(&config, 0.02).unwrap();
        let d = distance_to_manifold(&cex.state, 1, true).unwrap().distance;
        assert!(d > 1.0, "distance collapsed to {d} at cR = {cr}");
        ratios.push(d / cex.load_dual_norm);
    }
    assert!(
        ratios[2] > 10.0 * ratios[0],
        "distance/residual ratios failed to blow up: {ratios:?}"
    );
    // the state itself stays admissible: nonnegative up to round-off
    let config = BubbleConfig::symmetric_pair(q, 20.0 / q.c).unwrap();
    let cex = counterexample_state(&config, 0.02).unwrap();
    assert!(cex.negative_part_h1 <= 1e-8 * cex.state.h1_norm_sq().sqrt());
}

#[test]
fn deficit_controls_squared_distance_on_a_hand_built_perturbation() {
    let q = make_params(3, 0.0, 0.0);
    let grid = CylinderGrid::for_centers(q, &[0.0], 0.02).unwrap();
    let e = Extremal::new(q).unwrap();
    for eps in [1e-3, 1e-2] {
        let mut f = SmoothFn::new(e.clone());
        f.push(1.0, SmoothTerm::Profile { s: 0.0 });
        f.push(eps, SmoothTerm::Bump { center: 0.0, width: 4.0, freq: 2, odd: true });
        let v = f.sample(&grid).unwrap();
        let rec = deficit(&v).unwrap();
        let d = distance_to_manifold(&v, 1, true).unwrap().distance;
        assert!(rec.deficit > 0.0);
        assert!(d > 0.0 && d < 2.0 * eps * 10.0);
        let ratio = rec.deficit / (d * d);
        assert!(
            ratio > 0.05 && ratio < 20.0,
            "deficit/d^2 = {ratio} out of range at eps {eps}"
        );
        // residual of the perturbed state scales with eps
        let gamma = residual_load_smooth(&grid, &f).unwrap().dual_norm();
        assert!(gamma > 0.0 && gamma < 10.0 * eps, "residual {gamma} at eps {eps}");
    }
}

#[test]
fn symmetry_breaking_shows_up_in_the_morse_data() {
    use ckn::spectral::{morse_index, DEFAULT_ZERO_TOL};
    // crossing b_FS(-1) = -0.4086 flips the mode-1 block from positive to
    // negative, adding N = 3 negative directions; h = 0.02 keeps the discrete
    // translation zero mode inside the zero tolerance at this decay rate
    let stable = morse_index(make_params(3, -1.0, -0.2), 0.02, 1, DEFAULT_ZERO_TOL).unwrap();
    let broken = morse_index(make_params(3, -1.0, -0.5), 0.02, 1, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!(stable.negative_total, 1);
    assert_eq!(stable.zero_total, 1);
    assert_eq!(broken.negative_total, 4);
    assert_eq!(broken.zero_total, 1);
    let m1 = &broken.per_mode[1];
    assert_eq!(m1.mode, 1);
    assert_eq!(m1.multiplicity, 3);
    assert!(m1.lowest < 0.0);
}

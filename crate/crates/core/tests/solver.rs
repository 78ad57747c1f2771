use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stableforms::analytic::TrigForm;
use stableforms::exterior::DIM;
use stableforms::fields::{
    d_field, hitchin_volume, integrate_cycle, integrate_top, p_field, quantize, standard_cycles, wedge_field, FormField,
    Grid,
};
use stableforms::model;
use stableforms::solver::{
    exact_perturbation, objective_and_gradient, solve, Constraint, SolveError, SolveOptions, SolveProblem, Termination,
};

fn flat(grid: &Arc<Grid>) -> FormField<f64> {
    FormField::constant(grid, &model::psi())
}

fn smooth(grid: &Arc<Grid>, grade: usize, amp: f64, seed: u64) -> FormField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = TrigForm::random(&mut rng, grade, 1, amp, &grid.dims().map(|n| n > 1));
    FormField::from_fn(grid, grade, |x| t.eval(x).coeffs().to_vec())
}

fn random(grid: &Arc<Grid>, grade: usize, seed: u64) -> FormField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.npoints() * stableforms::exterior::n_components(grade);
    FormField::from_data(grid, grade, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn flat_problem_has_zero_objective_and_gradient() {
    for g in [Grid::torus(4).unwrap(), Grid::ball_torus(4, 4).unwrap()] {
        let zero3 = FormField::zeros(&g, 3);
        let p = SolveProblem::new(flat(&g), zero3, Constraint::BoundaryZero).unwrap();
        let (f, grad) = objective_and_gradient(&p, &FormField::zeros(&g, 2)).unwrap();
        assert_eq!(f, 0.0);
        assert!(grad.data().iter().all(|&x| x == 0.0));
        let report = solve(&p).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.final_psi.data(), flat(&g).data());
        assert!(report.final_alpha.data().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn problem_validation() {
    let g = Grid::torus(4).unwrap();
    let open = random(&g, 3, 1);
    assert!(matches!(
        SolveProblem::new(flat(&g).add(&open).unwrap(), FormField::zeros(&g, 3), Constraint::Periodic),
        Err(SolveError::InvalidProblem(_))
    ));
    assert!(matches!(
        SolveProblem::new(flat(&g), open, Constraint::Periodic),
        Err(SolveError::InvalidProblem(_))
    ));
    let gb = Grid::ball_torus(4, 4).unwrap();
    assert!(matches!(
        SolveProblem::new(flat(&gb), FormField::zeros(&gb, 3), Constraint::Periodic),
        Err(SolveError::InvalidProblem(_))
    ));
}

#[test]
fn gradient_matches_central_differences() {
    for g in [Grid::torus_with_dims([4, 4, 1, 4, 1, 4]).unwrap(), Grid::ball_torus(4, 4).unwrap()] {
        let mut mu = smooth(&g, 2, 0.01, 3);
        quantize(&mut mu, 36);
        let p = SolveProblem::new(flat(&g), d_field(&mu).unwrap(), Constraint::BoundaryZero).unwrap();
        let alpha = smooth(&g, 2, 0.01, 4);
        let delta = random(&g, 2, 5).scale(0.05);
        let (_, grad) = objective_and_gradient(&p, &alpha).unwrap();
        let slope = grad.dot(&delta).unwrap();
        let hs = [0.4, 0.2, 0.1];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let fp = objective_and_gradient(&p, &alpha.add(&delta.scale(h)).unwrap()).unwrap().0;
                let fm = objective_and_gradient(&p, &alpha.sub(&delta.scale(h)).unwrap()).unwrap().0;
                ((fp - fm) / (2.0 * h) - slope).abs()
            })
            .collect();
        let order = fitted_order(&hs, &errs);
        assert!((order - 2.0).abs() <= 0.1, "order {order}, errors {errs:?}, slope {slope}");
    }
}

#[test]
fn volume_variation_integrates_by_parts() {
    // ∫ P(Ψ) ∧ dα = ∫ dP(Ψ) ∧ α on the periodic grid
    let g = Grid::torus(4).unwrap();
    let psi = flat(&g).add(&d_field(&smooth(&g, 2, 0.03, 6)).unwrap()).unwrap();
    let alpha = random(&g, 2, 7);
    let pf = p_field(&psi).unwrap();
    let lhs = integrate_top(&wedge_field(&pf, &d_field(&alpha).unwrap()).unwrap()).unwrap();
    let rhs = integrate_top(&wedge_field(&d_field(&pf).unwrap(), &alpha).unwrap()).unwrap();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    // and the directional derivative of the volume is ∫ P ∧ dα
    let t = 1e-4;
    let vp = hitchin_volume(&psi.add(&d_field(&alpha.scale(t)).unwrap()).unwrap()).unwrap();
    let vm = hitchin_volume(&psi.sub(&d_field(&alpha.scale(t)).unwrap()).unwrap()).unwrap();
    let fd = (vp - vm) / (2.0 * t);
    assert!((fd - lhs).abs() <= 1e-6 * lhs.abs().max(1.0), "{fd} vs {lhs}");
}

#[test]
fn diffeomorphism_directions_are_flat_to_higher_order() {
    // α = ι_X Ψ₀ moves Ψ₀ along a Lie derivative; f grows like ε⁴ there and
    // like ε² along generic directions
    let g = Grid::torus_with_dims([8, 8, 1, 8, 1, 1]).unwrap();
    let p = SolveProblem::new(flat(&g), FormField::zeros(&g, 3), Constraint::Periodic).unwrap();
    let x = smooth(&g, 1, 1.0, 8);
    let psi0 = model::psi::<f64>();
    let alpha_x = x.map_points(2, |_, v, o| {
        let field: [f64; DIM] = v.try_into().unwrap();
        o.copy_from_slice(psi0.interior(&field).coeffs());
    });
    let generic = smooth(&g, 2, 1.0, 9);
    let f = |a: &FormField<f64>, eps: f64| objective_and_gradient(&p, &a.scale(eps)).unwrap().0;
    let (e1, e2) = (1e-2, 5e-3);
    let gen_ratio = f(&generic, e1) / f(&generic, e2);
    let lie_ratio = f(&alpha_x, e1) / f(&alpha_x, e2);
    assert!((gen_ratio - 4.0).abs() < 0.1, "generic ratio {gen_ratio}");
    assert!((lie_ratio - 16.0).abs() < 0.5, "Lie ratio {lie_ratio}");
    assert!(f(&alpha_x, e1) < 1e-2 * f(&generic, e1) * (alpha_x.rms() / generic.rms()).powi(2));
}

#[test]
fn torus_solve_reduces_residual_and_keeps_the_class() {
    let g = Grid::torus_with_dims([8, 8, 1, 8, 8, 1]).unwrap();
    let base = flat(&g);
    let (_, b) = exact_perturbation(&base, 0.05, 11, None, 36).unwrap();
    let p = SolveProblem::new(base.clone(), b.clone(), Constraint::Periodic).unwrap();
    let report = solve(&p).unwrap();
    assert!(report.converged, "{:?} after {} iterations", report.termination, report.iterations);
    assert!(report.residual_reduction() >= 1e3);
    assert!(report.residual_history.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(report.max_period_drift, 0.0);
    assert!(d_field(&report.final_psi).unwrap().data().iter().all(|&x| x == 0.0));
    let start = base.add(&b).unwrap();
    for c in standard_cycles(&g) {
        assert_eq!(integrate_cycle(&report.final_psi, &c).unwrap(), integrate_cycle(&start, &c).unwrap());
    }
    let v = hitchin_volume(&report.final_psi).unwrap();
    let v0 = hitchin_volume(&base).unwrap();
    assert!(((v - v0) / v0).abs() <= 1e-6, "volume {v} vs {v0}");
}

#[test]
fn ball_solve_keeps_boundary_values() {
    let g = Grid::ball_torus(8, 4).unwrap();
    let base = flat(&g);
    let (mu, b) = exact_perturbation(&base, 0.02, 12, Some(0.6), 36).unwrap();
    assert!(mu.data().chunks(15).enumerate().all(|(p, v)| g.is_free(p) || v.iter().all(|&x| x == 0.0)));
    let p = SolveProblem::new(base.clone(), b, Constraint::BoundaryZero)
        .unwrap()
        .with_options(SolveOptions { rtol: 1e-2, ..SolveOptions::default() });
    let report = solve(&p).unwrap();
    assert!(report.converged, "{:?}", report.termination);
    assert!(report.residual_reduction() >= 1e2);
    assert!(report.residual_history.windows(2).all(|w| w[1] < w[0]));
    for (pt, v) in report.final_alpha.data().chunks(15).enumerate() {
        if !g.is_free(pt) {
            assert!(v.iter().all(|&x| x.to_bits() == 0), "nonzero α at non-free point {pt}");
        }
    }
    assert_eq!(report.max_period_drift, 0.0);
    assert!(d_field(&report.final_psi).unwrap().data().iter().all(|&x| x == 0.0));
}

#[test]
fn impossible_stability_floor_is_reported() {
    let g = Grid::torus(4).unwrap();
    let b = d_field(&{
        let mut m = smooth(&g, 2, 0.01, 13);
        quantize(&mut m, 36);
        m
    })
    .unwrap();
    let p = SolveProblem::new(flat(&g), b, Constraint::Periodic)
        .unwrap()
        .with_options(SolveOptions { stability_floor: 10.0, max_backtracks: 5, ..SolveOptions::default() });
    assert!(matches!(solve(&p), Err(SolveError::StabilityBreakdown { iteration: 0, .. })));
}

#[test]
fn iteration_cap_is_reported() {
    let g = Grid::torus(4).unwrap();
    let (_, b) = exact_perturbation(&flat(&g), 0.05, 14, None, 36).unwrap();
    let p = SolveProblem::new(flat(&g), b, Constraint::Periodic)
        .unwrap()
        .with_options(SolveOptions { max_iterations: 3, ..SolveOptions::default() });
    let r = solve(&p).unwrap();
    assert_eq!(r.termination, Termination::IterationCap);
    assert_eq!(r.iterations, 3);
    assert!(!r.converged);
    assert_eq!(r.residual_history.len(), 4);
    let _ = DIM;
}

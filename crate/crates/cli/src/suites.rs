//! Invariant suites shared by `selftest` and the acceptance run. Each suite
//! returns its measured quantities as [`Check`]s.

use std::sync::Arc;

use nalgebra::Matrix6;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stableforms::analytic::TrigForm;
use stableforms::exterior::{mat6_from_fn, n_components, KVector, Mat6, DIM};
use stableforms::fields::{
    axis_derivative, d_field, d_transpose, decompose_d, djd_apply, quantize, torsion_residual, type_component_field,
    FormField, Grid,
};
use stableforms::hitchin::{analyze, hitchin_invariant, j_operator};
use stableforms::model;
use stableforms::solver::{objective_and_gradient, Constraint, SolveProblem};
use stableforms::spheremodes::{self, GalerkinBasis, KernelPolicy};

use crate::Check;

/// Largest coefficient of the closed perturbation in the operator suite.
const PERTURBATION: f64 = 0.2;
const MAX_CONDITION: f64 = 20.0;
const STABILITY_MARGIN: f64 = 1e-4;

fn random_form(rng: &mut ChaCha8Rng, grade: usize) -> KVector<f64> {
    KVector::from_coeffs(grade, (0..n_components(grade)).map(|_| StandardNormal.sample(rng)).collect())
}

fn random_stable(rng: &mut ChaCha8Rng) -> KVector<f64> {
    loop {
        let psi = random_form(rng, 3);
        // stay away from the degenerate cone so roundoff does not dominate
        if analyze(&psi, 1.0).is_ok_and(|an| -an.hitchin_lambda >= STABILITY_MARGIN * psi.norm().powi(4)) {
            return psi;
        }
    }
}

fn rel(a: &KVector<f64>, b: &KVector<f64>) -> f64 {
    (a.clone() - b.clone()).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn mat_mul(a: &Mat6<f64>, b: &Mat6<f64>) -> Mat6<f64> {
    mat6_from_fn(|i, j| (0..DIM).map(|k| a[i][k] * b[k][j]).sum())
}

fn pullback(a: &KVector<f64>, g: &Matrix6<f64>) -> KVector<f64> {
    a.transform(&mat6_from_fn(|i, j| g[(j, i)]))
}

/// Gaussian matrix, redrawn while its condition number exceeds
/// [`MAX_CONDITION`]; roundoff in the equivariance test grows with it.
fn random_well_conditioned(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
    loop {
        let g = Matrix6::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
        let sv = g.singular_values();
        if sv.max() <= MAX_CONDITION * sv.min() {
            return g;
        }
    }
}

/// Least-squares slope of `log err` against `log h`.
pub fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Pointwise algebra on `forms` random stable forms: `I² = −1`, `P∘P = −1`,
/// quadratic homogeneity of the volume density and GL(6)-equivariance of
/// `λ` and `P`, plus the exact invariant of `Re dz¹dz²dz³`.
pub fn hitchin_algebra(forms: usize, seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut i2, mut pp, mut homog, mut equiv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..forms {
        let psi = random_stable(&mut rng);
        let an = analyze(&psi, 1.0).expect("sampled stable");
        let sq = mat_mul(&an.i, &an.i);
        for (r, row) in sq.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                i2 = i2.max((v + if r == c { 1.0 } else { 0.0 }).abs());
            }
        }
        pp = match analyze(&an.p_form(), 1.0) {
            Ok(dual) => pp.max(rel(&dual.p_form(), &(-psi.clone()))),
            Err(_) => f64::INFINITY,
        };
        let t: f64 = rng.random_range(0.2..3.0);
        let scaled = analyze(&psi.scale(&t), 1.0).expect("scaling keeps stability");
        homog = homog.max((scaled.vol_density - t * t * an.vol_density).abs() / (t * t * an.vol_density));
        let mut g = random_well_conditioned(&mut rng);
        let preserving = trial % 2 == 0;
        if (g.determinant() > 0.0) != preserving {
            g.row_mut(0).neg_mut();
        }
        let det2 = g.determinant().powi(2);
        let moved = analyze(&pullback(&psi, &g), 1.0).expect("GL(6) preserves stability");
        let want_lambda = det2 * an.hitchin_lambda;
        let expect = pullback(&an.p_form(), &g);
        // an orientation-reversing map also reverses I, hence P
        let expect = if preserving { expect } else { -expect };
        equiv = equiv
            .max((moved.hitchin_lambda - want_lambda).abs() / want_lambda.abs())
            .max(rel(&moved.p_form(), &expect));
    }
    let (lambda, _) = hitchin_invariant(&model::re_dz123::<BigRational>(), &BigRational::from_integer(1.into()));
    vec![
        Check::at_most("i_squared_is_minus_one", i2, tol),
        Check::at_most("p_is_an_involution_up_to_sign", pp, tol),
        Check::at_most("volume_is_quadratically_homogeneous", homog, tol),
        Check::at_most("gl6_equivariance", equiv, tol),
        Check::holds("lambda_of_re_dz123_is_minus_4", lambda == BigRational::from_integer((-4).into())),
    ]
}

fn order_check(name: &str, hs: &[f64], errs: &[f64], tol: f64) -> Check {
    Check::near(name, fitted_order(hs, errs), 2.0, tol)
}

/// Worst fitted order (farthest from 2) over several samples.
fn worst_order(name: &str, orders: Vec<f64>, tol: f64) -> Check {
    let worst = orders
        .into_iter()
        .fold(2.0, |w: f64, o| if o.is_nan() || (o - 2.0).abs() > (w - 2.0).abs() { o } else { w });
    Check::near(name, worst, 2.0, tol)
}

/// Central-difference checks of the first variation of the volume, of
/// `DP = J`, and of the gradient of the solver objective.
pub fn variational(seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hs = [1e-3, 5e-4, 2.5e-4];
    let mut vol_orders = Vec::new();
    let mut j_orders = Vec::new();
    for _ in 0..5 {
        let psi = random_stable(&mut rng);
        let unit = |v: KVector<f64>| v.scale(&(psi.norm() / v.norm()));
        let dpsi = unit(random_form(&mut rng, 3));
        let an = analyze(&psi, 1.0).expect("sampled stable");
        let exact = an.p_form().wedge(&dpsi).top();
        let vol = |s: f64| analyze(&(psi.clone() + dpsi.scale(&s)), 1.0).map(|a| a.vol_density).unwrap_or(f64::NAN);
        let errs: Vec<f64> = hs.iter().map(|&h| ((vol(h) - vol(-h)) / (2.0 * h) - exact).abs()).collect();
        vol_orders.push(fitted_order(&hs, &errs));

        let rho = unit(random_form(&mut rng, 3));
        let exact = j_operator(&an, &rho);
        let p = |s: f64| analyze(&(psi.clone() + rho.scale(&s)), 1.0).map(|a| a.p_form());
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| match (p(h), p(-h)) {
                (Ok(a), Ok(b)) => ((a - b).scale(&(0.5 / h)) - exact.clone()).norm(),
                _ => f64::NAN,
            })
            .collect();
        j_orders.push(fitted_order(&hs, &errs));
    }
    let mut checks = vec![
        worst_order("volume_variation_is_p_wedge_order", vol_orders, tol),
        worst_order("derivative_of_p_is_j_order", j_orders, tol),
    ];
    let grids = [
        ("torus", Grid::torus_with_dims([4, 4, 1, 4, 1, 4]).expect("valid grid")),
        ("ball", Grid::ball_torus(4, 4).expect("valid grid")),
    ];
    for (label, g) in grids {
        checks.push(gradient_order(&g, seed, tol, &format!("objective_gradient_order_{label}")));
    }
    checks
}

fn smooth(grid: &Arc<Grid>, grade: usize, amp: f64, rng: &mut ChaCha8Rng) -> FormField<f64> {
    let t = TrigForm::random(rng, grade, 1, amp, &grid.dims().map(|n| n > 1));
    FormField::from_fn(grid, grade, |x| t.eval(x).coeffs().to_vec())
}

fn uniform(grid: &Arc<Grid>, grade: usize, rng: &mut ChaCha8Rng) -> FormField<f64> {
    let n = grid.npoints() * n_components(grade);
    FormField::from_data(grid, grade, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn gradient_order(g: &Arc<Grid>, seed: u64, tol: f64, name: &str) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut mu = smooth(g, 2, 0.01, &mut rng);
    quantize(&mut mu, 36);
    let flat = FormField::constant(g, &model::psi());
    let problem = SolveProblem::new(flat, d_field(&mu).expect("grades match"), Constraint::BoundaryZero)
        .expect("closed inputs");
    let alpha = smooth(g, 2, 0.01, &mut rng);
    let delta = uniform(g, 2, &mut rng).scale(0.05);
    let f = |a: &FormField<f64>| objective_and_gradient(&problem, a).map(|r| r.0).unwrap_or(f64::NAN);
    let slope = objective_and_gradient(&problem, &alpha)
        .map(|(_, grad)| grad.dot(&delta).unwrap_or(f64::NAN))
        .unwrap_or(f64::NAN);
    let hs = [0.02, 0.01, 0.005];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let plus = alpha.add(&delta.scale(h)).expect("same grid");
            let minus = alpha.sub(&delta.scale(h)).expect("same grid");
            ((f(&plus) - f(&minus)) / (2.0 * h) - slope).abs()
        })
        .collect();
    order_check(name, &hs, &errs, tol)
}

/// `∂` or `∂̄` of the flat structure assembled directly from the axis
/// differences, with `dz_j = dx_j + i dy_j`.
fn flat_dbar(a: &FormField<Complex64>, holomorphic: bool) -> FormField<Complex64> {
    let g = a.grid().clone();
    let k = a.grade();
    let mut out = FormField::<Complex64>::zeros(&g, k + 1);
    // ∂_{z_j} = ½(∂_x − i∂_y), ∂_{z̄_j} = ½(∂_x + i∂_y)
    let s = if holomorphic { -1.0 } else { 1.0 };
    for j in 0..3 {
        let dx = axis_derivative(a, j);
        let dy = axis_derivative(a, j + 3);
        let mut dz = KVector::<Complex64>::zero(1);
        dz.set(&[j], Complex64::new(1.0, 0.0));
        dz.set(&[j + 3], Complex64::new(0.0, -s));
        let part = dx.map_points(k + 1, |p, vx, o| {
            let coeffs: Vec<Complex64> =
                vx.iter().zip(dy.at(p)).map(|(x, y)| (x + y * Complex64::new(0.0, s)) * 0.5).collect();
            o.copy_from_slice(dz.wedge(&KVector::from_coeffs(k, coeffs)).coeffs());
        });
        out.axpy(1.0, &part).expect("same grid");
    }
    out
}

/// Closed non-integrable base `Ψ₀ + dα` with `n` points on four axes; `dα`
/// is scaled to a largest coefficient of `amplitude`.
pub fn perturbed_base(n: usize, seed: u64, amplitude: f64) -> FormField<f64> {
    let g = Grid::torus_with_dims([n, n, 1, n, 1, 1]).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = TrigForm::random(&mut rng, 2, 1, 1.0, &g.dims().map(|k| k > 1));
    // the scale comes from the analytic field, so it is the same on every grid
    let probe = Grid::torus_with_dims([16, 16, 1, 16, 1, 1]).expect("valid grid");
    let peak = FormField::from_fn(&probe, 3, |x| t.d().eval(x).coeffs().to_vec()).max_abs();
    let t = t.scaled(amplitude / peak);
    let alpha = FormField::from_fn(&g, 2, |x| t.eval(x).coeffs().to_vec());
    FormField::constant(&g, &model::psi()).add(&d_field(&alpha).expect("grades match")).expect("same grid")
}

pub fn random_01_field(base: &FormField<f64>, seed: u64) -> FormField<Complex64> {
    let g = base.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = smooth(&g, 1, 1.0, &mut rng).to_complex();
    let im = smooth(&g, 1, 1.0, &mut rng).to_complex().map_points::<Complex64>(1, |_, v, o| {
        for (x, y) in o.iter_mut().zip(v) {
            *x = y * Complex64::new(0.0, 1.0);
        }
    });
    type_component_field(base, &re.add(&im).expect("same grid"), 0).expect("stable base")
}

/// Operator structure over the flat field on an `n`-point grid and over
/// closed perturbed fields refined from `n` to `4n`: `dJd = 2i∂∂̄` on
/// (1,1)-forms, `dJd` on (2,0)+(0,2)-forms, the non-(2,2) part of `dP` and
/// the `∂̄²` identity on (0,1)-forms.
pub fn operators(n: usize, seed: u64, tol: f64, order_tol: f64) -> Vec<Check> {
    let g = Grid::torus_with_dims([n, n, 1, n, n, 1]).expect("valid grid");
    let base = FormField::constant(&g, &model::psi());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = uniform(&g, 2, &mut rng).to_complex();
    let a11 = type_component_field(&base, &a, 1).expect("stable base").re();
    let lhs = djd_apply(&base, &a11).expect("grades match");
    let rhs = flat_dbar(&flat_dbar(&a11.to_complex(), false), true).map_points::<Complex64>(4, |_, v, o| {
        for (x, y) in o.iter_mut().zip(v) {
            *x = y * Complex64::new(0.0, 2.0);
        }
    });
    let direct = lhs.sub(&rhs.re()).expect("same grid").max_abs() / lhs.max_abs().max(1.0);

    let t = TrigForm::random(&mut rng, 2, 2, 1.0, &g.dims().map(|k| k > 1));
    let smooth_a = FormField::from_fn(&g, 2, |x| t.eval(x).coeffs().to_vec()).to_complex();
    let a20 = type_component_field(&base, &smooth_a, 2).expect("stable base");
    let a02 = type_component_field(&base, &smooth_a, 0).expect("stable base");
    let input = a20.add(&a02).expect("same grid").re();
    let out = djd_apply(&base, &input).expect("grades match");
    // relative to the size of the derivative it would have without cancellation
    let mixed = out.max_abs() * g.spacing()[0] / d_field(&input).expect("grades match").max_abs();

    let ns = [n, 2 * n, 4 * n];
    let hs: Vec<f64> = ns.iter().map(|&k| 1.0 / k as f64).collect();
    let torsion: Vec<f64> = ns
        .iter()
        .map(|&k| {
            let base = perturbed_base(k, seed + 1, PERTURBATION);
            let dp = torsion_residual(&base).expect("stable base").to_complex();
            let t22 = type_component_field(&base, &dp, 2).expect("stable base");
            dp.sub(&t22).expect("same grid").rms()
        })
        .collect();
    let dbar_sq: Vec<f64> = ns
        .iter()
        .map(|&k| {
            let base = perturbed_base(k, seed + 2, PERTURBATION);
            let phi = random_01_field(&base, seed + 3);
            let dec = decompose_d(&base, &phi, 0, 1e-10).expect("(0,1) input");
            let a = decompose_d(&base, &dec.parts[2], 0, 1e-10).expect("(0,2) input");
            let b = decompose_d(&base, &dec.parts[1], 1, 1e-10).expect("(1,1) input");
            a.parts[2].add(&b.parts[3]).expect("same grid").rms()
        })
        .collect();
    vec![
        Check::at_most("djd_equals_2i_del_delbar_on_11", direct, tol),
        Check::at_most("djd_on_20_plus_02_relative", mixed, tol),
        order_check("torsion_outside_22_order", &hs, &torsion, order_tol),
        order_check("delbar_squared_identity_order", &hs, &dbar_sq, order_tol),
    ]
}

/// `d² = 0` and adjointness of the discrete transpose on small grids.
pub fn exterior(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d_squared = 0.0f64;
    let mut adjoint = 0.0f64;
    for g in [Grid::torus(4).expect("valid grid"), Grid::ball_torus(4, 4).expect("valid grid")] {
        for k in 0..DIM - 1 {
            let mut a = uniform(&g, k, &mut rng);
            quantize(&mut a, 36);
            let dda = d_field(&d_field(&a).expect("grade")).expect("grade");
            d_squared = d_squared.max(dda.max_abs());
            let b = uniform(&g, k + 1, &mut rng);
            let da = d_field(&a).expect("grade");
            let lhs = da.dot(&b).expect("same grid");
            let rhs = a.dot(&d_transpose(&b).expect("grade")).expect("same grid");
            let scale = (da.dot(&da).expect("same grid") * b.dot(&b).expect("same grid")).sqrt();
            adjoint = adjoint.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    vec![Check::equals("d_squared_is_zero", d_squared, 0.0), Check::at_most("d_transpose_is_adjoint", adjoint, 1e-12)]
}

/// Kernel counts of the boundary Laplacians on a coarse basis.
pub fn spectral(degree: usize, mmax: i32) -> Vec<Check> {
    let basis = match GalerkinBasis::new(degree, 1) {
        Ok(b) => b,
        Err(_) => return vec![Check::holds("galerkin_basis_builds", false)],
    };
    let policy = KernelPolicy::default();
    let reports = match spheremodes::spectrum(&basis, mmax, &policy) {
        Ok(r) => r,
        Err(_) => return vec![Check::holds("spectral_gaps_resolved", false)],
    };
    let zero = reports.iter().find(|r| r.m == [0, 0, 0]).map_or(usize::MAX, |r| r.kernel_dim);
    let others = reports.iter().filter(|r| r.m != [0, 0, 0]).map(|r| r.kernel_dim).max().unwrap_or(0);
    let diag = reports.iter().map(|r| r.diagonality_residual).fold(0.0, f64::max);
    vec![
        Check::equals("kernel_dim_at_zero_mode", zero as f64, 1.0),
        Check::equals("max_kernel_dim_at_nonzero_modes", others as f64, 0.0),
        Check::at_most("diagonality_residual", diag, 1e-2),
    ]
}

//! The flat structure on `B³ × T³` and its boundary `S² × T³`.

use std::f64::consts::PI;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;

use stableforms::boundary::{boundary_frame, hm_membership_residual, BoundaryFrame, BoundarySample, FrameResiduals};
use stableforms::exterior::{restrict_poly, restrict_tangential, sphere_tangent_frame, KVector, PolyForm, SpherePoint};
use stableforms::fields::{integrate_cycle, Cycle, FormField, Grid};
use stableforms::hitchin::{analyze, analyze_exact, j_operator, StableAnalysis};
use stableforms::model;

use crate::config::ExampleArgs;
use crate::report::CommandOutput;
use crate::{all_passed, Check, RunError};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Rational points of `S² × T³`: four fixed ones, then stereographic images
/// of random rational parameters.
pub fn rational_sphere_points(count: usize, seed: u64) -> Vec<SpherePoint<BigRational>> {
    let fixed = [
        ([rat(1, 1), rat(0, 1), rat(0, 1)], [rat(1, 3), rat(0, 1), rat(2, 7)]),
        ([rat(3, 5), rat(4, 5), rat(0, 1)], [rat(0, 1), rat(1, 2), rat(1, 5)]),
        ([rat(2, 3), rat(-1, 3), rat(2, 3)], [rat(1, 4), rat(1, 4), rat(0, 1)]),
        ([rat(0, 1), rat(-12, 13), rat(5, 13)], [rat(0, 1), rat(0, 1), rat(0, 1)]),
    ];
    let mut out: Vec<SpherePoint<BigRational>> =
        fixed.into_iter().map(|(x, y)| SpherePoint::new(x, y).expect("on the sphere")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut small = |lo: i64| rat(rng.random_range(lo..=5), rng.random_range(1..=6));
    while out.len() < count {
        let (s, t) = (small(-5), small(-5));
        let one = BigRational::from_integer(1.into());
        let q = one.clone() + &s * &s + &t * &t;
        let two = BigRational::from_integer(2.into());
        let x = [&two * &s / &q, &two * &t / &q, (&s * &s + &t * &t - one) / &q];
        let y = [small(0), small(0), small(0)].map(|v| v.fract());
        out.push(SpherePoint::new(x, y).expect("stereographic points lie on the sphere"));
    }
    out.truncate(count);
    out
}

fn random_sphere_point(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (v.map(|c| c / n), std::array::from_fn(|_| rng.random::<f64>()))
}

fn frame_at(flat: &StableAnalysis, x: [f64; 3], y: [f64; 3]) -> Result<BoundaryFrame, RunError> {
    let coords = [x[0], x[1], x[2], y[0], y[1], y[2]];
    boundary_frame(flat, &model::dr().eval_f64(&coords), &model::omega())
        .map_err(|e| RunError::numerical("BoundaryFrame", e, json!({ "x": x, "y": y })))
}

fn to_f64(p: &SpherePoint<BigRational>) -> [f64; 6] {
    p.coords().map(|c| num_traits::ToPrimitive::to_f64(&c).unwrap_or(f64::NAN))
}

/// Componentwise maximum of the triple residuals.
fn max_residuals(acc: &mut FrameResiduals, r: &FrameResiduals) {
    acc.psi_decomposition = acc.psi_decomposition.max(r.psi_decomposition);
    acc.dual_decomposition = acc.dual_decomposition.max(r.dual_decomposition);
    acc.squares_alpha_beta = acc.squares_alpha_beta.max(r.squares_alpha_beta);
    acc.squares_omega_alpha = acc.squares_omega_alpha.max(r.squares_omega_alpha);
    acc.omega_alpha = acc.omega_alpha.max(r.omega_alpha);
    acc.alpha_beta = acc.alpha_beta.max(r.alpha_beta);
    acc.omega_beta_levi = acc.omega_beta_levi.max(r.omega_beta_levi);
}

#[derive(Serialize)]
struct ExampleResult {
    triple_residuals: FrameResiduals,
    levi_lambda: f64,
    #[serde(rename = "gamma_in_HM")]
    gamma_in_hm: bool,
    #[serde(rename = "period_T3")]
    period_t3: f64,
    #[serde(rename = "period_B3")]
    period_b3: f64,
    rational_points: usize,
    checks: Vec<Check>,
}

pub fn run(args: &ExampleArgs) -> Result<CommandOutput, RunError> {
    let mut checks = Vec::new();
    let psi = model::psi::<BigRational>();
    let exact = analyze_exact(&psi).map_err(|e| RunError::numerical("NotStable", e, json!({})))?;
    checks.push(Check::holds("dual_form_is_psi_tilde_exact", exact.p_form(&psi) == model::psi_dual()));
    checks.push(Check::holds(
        "dual_of_re_dz123_is_im_dz123_exact",
        exact.p_form(&model::re_dz123()) == model::im_dz123(),
    ));
    let half = BigRational::new(1.into(), 2.into());
    checks.push(Check::holds(
        "j_of_chi_is_half_lambda_form_exact",
        exact.j_operator(&model::chi()) == model::lambda_form::<BigRational>().scale(&half),
    ));

    // exact restrictions at rational points of S² × T³
    let gamma_theta = model::gamma().wedge(&model::theta());
    let lambda_poly = model::lambda_form_poly();
    let gt_minus_lambda = gamma_theta.clone() - lambda_poly;
    let chi_poly = model::chi_poly();
    let points = rational_sphere_points(16, args.seed);
    let (mut gt_exact, mut chi_exact) = (true, true);
    for p in &points {
        let frame = sphere_tangent_frame(&p.x);
        let restrict = |a: &PolyForm| {
            restrict_poly(a, p, &frame).map_err(|e| RunError::numerical("Restriction", e, json!({})))
        };
        gt_exact &= restrict(&gt_minus_lambda)?.is_zero();
        chi_exact &= restrict(&chi_poly)?.is_zero();
    }
    checks.push(Check::holds("gamma_theta_restricts_to_lambda_form_exact", gt_exact));
    checks.push(Check::holds("chi_restricts_to_zero_exact", chi_exact));

    let flat = analyze(&model::psi(), 1.0).map_err(|e| RunError::numerical("NotStable", e, json!({})))?;
    let samples: Vec<BoundarySample> = points
        .iter()
        .map(|p| {
            let c = to_f64(p);
            Ok(BoundarySample { point: p.clone(), frame: frame_at(&flat, [c[0], c[1], c[2]], [c[3], c[4], c[5]])? })
        })
        .collect::<Result<_, RunError>>()?;
    let hm = hm_membership_residual(&samples, &model::gamma(), &model::theta());
    let gamma_in_hm = matches!(hm, Ok(r) if r == 0.0);
    checks.push(Check::holds("gamma_theta_is_closed_and_gamma_anti_self_dual", gamma_in_hm));

    // floating-point restrictions at random points, including b(2χ) = γ∧θ
    let lambda_form = model::lambda_form::<f64>();
    let two_j_chi = j_operator(&flat, &model::chi()).scale(&2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut gt_float, mut b_chi) = (0.0f64, 0.0f64);
    for _ in 0..args.random_points {
        let (x, y) = random_sphere_point(&mut rng);
        let p = SpherePoint::new(x, y).map_err(|e| RunError::numerical("Restriction", e, json!({ "x": x })))?;
        let frame = sphere_tangent_frame(&x);
        let restrict = |a: &KVector<f64>| {
            restrict_tangential(a, &p, &frame).map_err(|e| RunError::numerical("Restriction", e, json!({ "x": x })))
        };
        let gt = restrict(&gamma_theta.eval_f64(&p.coords()))?;
        gt_float = gt_float.max((gt.clone() - restrict(&lambda_form)?).max_abs());
        b_chi = b_chi.max((restrict(&two_j_chi)? - gt).max_abs());
    }
    checks.push(Check::at_most("gamma_theta_restricts_to_lambda_form", gt_float, args.tol));
    checks.push(Check::at_most("two_j_chi_restricts_to_gamma_theta", b_chi, args.tol));

    let mut triple = FrameResiduals::default();
    let mut levi = 0.0f64;
    for _ in 0..args.levi_points {
        let (x, y) = random_sphere_point(&mut rng);
        let f = frame_at(&flat, x, y)?;
        levi = levi.max(f.levi_lambda.abs());
        max_residuals(&mut triple, &f.residuals);
    }
    checks.push(Check::at_most("levi_lambda", levi, args.tol));
    checks.push(Check::at_most("triple_residuals", triple.structural_max().max(triple.squares_omega_alpha), args.tol));

    let field_error = |e: stableforms::fields::FieldError| RunError::numerical("Field", e, json!({}));
    let fiber_grid = Grid::ball_torus(8, args.nt).map_err(field_error)?;
    let period_t3 = integrate_cycle(&FormField::constant(&fiber_grid, &lambda_form), &Cycle::fiber([3, 4, 5]))
        .map_err(field_error)?;
    let ball = Grid::ball_torus(args.nx, 1).map_err(field_error)?;
    let period_b3 = integrate_cycle(&FormField::constant(&ball, &model::chi()), &Cycle::BallSlice { y: [0, 0, 0] })
        .map_err(field_error)?;
    let ball_volume = 4.0 * PI / 3.0;
    checks.push(Check::near("period_T3", period_t3, 1.0, args.torus_tol));
    checks.push(Check::near("period_B3", period_b3, ball_volume, args.ball_rtol * ball_volume));

    let result = ExampleResult {
        triple_residuals: triple,
        levi_lambda: levi,
        gamma_in_hm,
        period_t3,
        period_b3,
        rational_points: points.len(),
        checks,
    };
    let passed = all_passed(&result.checks);
    Ok(CommandOutput::new(serde_json::to_value(&result).expect("serializable"), passed))
}

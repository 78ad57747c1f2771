use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stableforms::boundary::{
    boundary_frame, hm_membership_residual, project_partial4, sd_asd_split, BoundaryError, BoundaryFrame,
    BoundarySample,
};
use stableforms::exterior::{n_components, unit_vector, KVector, Poly, SpherePoint};
use stableforms::hitchin::{analyze, type_project, StableAnalysis};
use stableforms::model;

fn flat() -> StableAnalysis {
    analyze(&model::psi(), 1.0).unwrap()
}

fn frame_at(x: [f64; 3], y: [f64; 3]) -> BoundaryFrame {
    let coords = [x[0], x[1], x[2], y[0], y[1], y[2]];
    boundary_frame(&flat(), &model::dr().eval_f64(&coords), &model::omega()).unwrap()
}

fn random_sphere_point(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (v.map(|c| c / n), std::array::from_fn(|_| rng.random::<f64>()))
}

fn pole() -> BoundaryFrame {
    frame_at([1.0, 0.0, 0.0], [0.0; 3])
}

fn at_pole(p: &stableforms::exterior::PolyForm) -> KVector<f64> {
    p.eval_f64(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
}

#[test]
fn frame_at_the_pole() {
    let f = pole();
    let dy1 = unit_vector::<f64>(3);
    assert!(f.theta.iter().zip(&dy1).all(|(a, b)| (a - b).abs() < 1e-15));
    assert!(f.reeb.iter().zip(&dy1).all(|(a, b)| (a - b).abs() < 1e-12));
    let want_alpha = KVector::basis(&[4, 5]) - KVector::basis(&[1, 2]);
    let want_beta = KVector::basis(&[1, 5]) - KVector::basis(&[2, 4]);
    let want_omega = KVector::basis(&[1, 4]) + KVector::basis(&[2, 5]);
    assert_eq!(at_pole(&model::alpha()), want_alpha);
    assert_eq!(at_pole(&model::beta()), want_beta);
    assert!((f.restrict_to_h(&want_alpha) - f.alpha.clone()).max_abs() < 1e-12);
    // ι_v P restricts to minus the displayed closed-form β
    assert!((f.restrict_to_h(&want_beta) + f.beta.clone()).max_abs() < 1e-12);
    assert!((f.restrict_to_h(&want_omega) - f.omega.clone()).max_abs() < 1e-12);
    assert!(f.levi_lambda.abs() < 1e-15);
    assert!(f.vol_h > 0.0);
}

#[test]
fn levi_coefficient_vanishes_on_the_sphere() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..500 {
        let (x, y) = random_sphere_point(&mut rng);
        let f = frame_at(x, y);
        assert!(f.levi_lambda.abs() <= 1e-12, "λ = {}", f.levi_lambda);
        let r = &f.residuals;
        assert!(r.structural_max() <= 1e-12, "{r:?}");
        assert!(r.squares_omega_alpha <= 1e-12, "{r:?}");
        // α, β agree with the closed-form triple
        let coords = [x[0], x[1], x[2], y[0], y[1], y[2]];
        assert!((f.restrict_to_h(&model::alpha().eval_f64(&coords)) - f.alpha.clone()).max_abs() < 1e-12);
        assert!((f.restrict_to_h(&model::beta().eval_f64(&coords)) + f.beta.clone()).max_abs() < 1e-12);
    }
}

fn random_form(rng: &mut ChaCha8Rng, grade: usize) -> KVector<f64> {
    KVector::from_coeffs(grade, (0..n_components(grade)).map(|_| StandardNormal.sample(rng)).collect())
}

#[test]
fn frame_residuals_for_random_structures_and_hyperplanes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 200 {
        let psi = random_form(&mut rng, 3);
        let Ok(an) = analyze(&psi, 1.0) else { continue };
        let inorm: f64 = an.i.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if inorm > 40.0 {
            continue;
        }
        checked += 1;
        let dr = random_form(&mut rng, 1);
        // a (1,1) form: the hermitian form plus a small I-invariant perturbation
        let s = random_form(&mut rng, 2);
        let s11 = type_project(&an, &s).comps[1].re();
        let omega = an.hermitian_omega() + s11.scale(&0.1);
        let f = boundary_frame(&an, &dr, &omega).unwrap();
        assert!(f.residuals.structural_max() <= 1e-10, "{:?}", f.residuals);
        if let Some(wt) = &f.omega_tilde {
            let a2 = f.pairing(&f.alpha, &f.alpha);
            assert!(f.pairing(wt, &f.alpha).abs() <= 1e-10 * a2);
            assert!(f.pairing(wt, &f.beta).abs() <= 1e-10 * a2);
        }
    }
}

#[test]
fn degenerate_conormal_is_rejected() {
    let err = boundary_frame(&flat(), &KVector::zero(1), &model::omega()).unwrap_err();
    assert!(matches!(err, BoundaryError::DegenerateContact(_)));
}

#[test]
fn levi_coefficient_of_perturbed_omega() {
    let beta = -at_pole(&model::beta());
    let omega: KVector<f64> = model::omega();
    for &t in &[0.1, 0.3, 0.7, -0.4] {
        // ω + tβ: λ = t and ω̃ = ω/√(1−t²)
        let f = boundary_frame(&flat(), &at_pole(&model::dr()), &(omega.clone() + beta.scale(&t))).unwrap();
        assert!((f.levi_lambda - t).abs() < 1e-12);
        let want = f.restrict_to_h(&omega).scale(&(1.0 / (1.0 - t * t).sqrt()));
        assert!((f.omega_tilde.clone().unwrap() - want).max_abs() < 1e-12);
        // √(1−t²)ω + tβ keeps ω̃ = ω
        let s = (1.0 - t * t).sqrt();
        let f = boundary_frame(&flat(), &at_pole(&model::dr()), &(omega.scale(&s) + beta.scale(&t))).unwrap();
        assert!((f.levi_lambda - t).abs() < 1e-12);
        let wt = f.omega_tilde.clone().unwrap();
        assert!((wt.clone() - f.restrict_to_h(&omega)).max_abs() < 1e-12);
        assert!((f.pairing(&wt, &wt) - f.pairing(&f.alpha, &f.alpha)).abs() < 1e-12);
        assert!(f.pairing(&wt, &f.beta).abs() < 1e-12 && f.pairing(&wt, &f.alpha).abs() < 1e-12);
    }
    let f = boundary_frame(&flat(), &at_pole(&model::dr()), &(omega.clone() + beta.scale(&1.5))).unwrap();
    assert!(f.omega_tilde.is_none());
    assert!(matches!(sd_asd_split(&f, &f.alpha), Err(BoundaryError::NotPseudoconvexFrame(_))));
}

#[test]
fn self_dual_split_examples() {
    let f = pole();
    let gamma = f.restrict_to_h(&at_pole(&model::gamma()));
    assert!(gamma.max_abs() > 0.5);
    let s = sd_asd_split(&f, &gamma).unwrap();
    assert!(s.plus.max_abs() < 1e-14);
    assert!((s.minus.clone() - gamma.clone()).max_abs() < 1e-14);
    let wt = f.omega_tilde.clone().unwrap();
    let s = sd_asd_split(&f, &wt).unwrap();
    assert!((s.plus - wt).max_abs() < 1e-14 && s.minus.max_abs() < 1e-14);
    let s = sd_asd_split(&f, &(f.alpha.clone() + gamma.clone())).unwrap();
    assert!((s.plus - f.alpha.clone()).max_abs() < 1e-14);
    assert!((s.minus - gamma).max_abs() < 1e-14);
}

#[test]
fn self_dual_split_is_an_orthogonal_idempotent_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (x, y) = random_sphere_point(&mut rng);
        let f = frame_at(x, y);
        let sigma = random_form(&mut rng, 2);
        let s = sd_asd_split(&f, &sigma).unwrap();
        assert!((s.plus.clone() + s.minus.clone() - sigma.clone()).max_abs() < 1e-13);
        let pp = sd_asd_split(&f, &s.plus).unwrap();
        assert!((pp.plus - s.plus.clone()).max_abs() < 1e-12 && pp.minus.max_abs() < 1e-12);
        let mm = sd_asd_split(&f, &s.minus).unwrap();
        assert!((mm.minus - s.minus.clone()).max_abs() < 1e-12 && mm.plus.max_abs() < 1e-12);
        assert!(f.pairing(&s.plus, &s.minus).abs() < 1e-12);
        assert!(f.pairing(&s.minus, &s.minus) <= 1e-12);
        assert!(f.pairing(&s.plus, &s.plus) >= -1e-12);
    }
}

#[test]
fn partial4_projection_examples() {
    let f = pole();
    let theta = KVector::from_coeffs(1, f.theta.to_vec());
    let dr = at_pole(&model::dr());
    assert!(project_partial4(&f, &dr.wedge(&theta)).unwrap().max_abs() < 1e-14);
    let gamma = at_pole(&model::gamma());
    assert!((project_partial4(&f, &gamma).unwrap() - f.restrict_to_h(&gamma)).max_abs() < 1e-14);
    let i6 = model::psi::<f64>().interior(&unit_vector(1));
    assert!(project_partial4(&f, &i6).unwrap().max_abs() < 1e-14);
    let omega: KVector<f64> = model::omega();
    assert!((project_partial4(&f, &omega).unwrap() - f.omega_tilde.clone().unwrap()).max_abs() < 1e-14);
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn samples() -> Vec<BoundarySample> {
    let pts = vec![
        ([rat(1, 1), rat(0, 1), rat(0, 1)], [rat(1, 3), rat(0, 1), rat(2, 7)]),
        ([rat(3, 5), rat(4, 5), rat(0, 1)], [rat(0, 1), rat(1, 2), rat(1, 5)]),
        ([rat(2, 3), rat(-1, 3), rat(2, 3)], [rat(1, 4), rat(1, 4), rat(0, 1)]),
        ([rat(0, 1), rat(-12, 13), rat(5, 13)], [rat(0, 1), rat(0, 1), rat(0, 1)]),
    ];
    pts.into_iter()
        .map(|(x, y)| {
            let point = SpherePoint::new(x, y).unwrap();
            let c = point.coords().map(|v| num_traits::ToPrimitive::to_f64(&v).unwrap());
            let frame = frame_at([c[0], c[1], c[2]], [c[3], c[4], c[5]]);
            BoundarySample { point, frame }
        })
        .collect()
}

#[test]
fn boundary_harmonic_membership() {
    let s = samples();
    assert_eq!(hm_membership_residual(&s, &model::gamma(), &model::theta()).unwrap(), 0.0);
    assert!(matches!(
        hm_membership_residual(&s, &model::alpha(), &model::theta()),
        Err(BoundaryError::NotAntiSelfDual(_))
    ));
    let x1_gamma = model::gamma().scale(&Poly::var(0));
    let r = hm_membership_residual(&s, &x1_gamma, &model::theta()).unwrap();
    assert!(r > 0.1, "residual {r}");
}

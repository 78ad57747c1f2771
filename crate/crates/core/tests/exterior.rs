use nalgebra::Matrix6;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stableforms::exterior::{
    n_components, poly_d, restrict_poly, restrict_tangential, sphere_tangent_frame, KVector, Metric6, Poly, PolyForm,
    SpherePoint, DIM,
};
use stableforms::model;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn form(grade: usize) -> impl Strategy<Value = KVector<f64>> {
    prop::collection::vec(-1.0f64..1.0, n_components(grade)).prop_map(move |c| KVector::from_coeffs(grade, c))
}

fn int_form(grade: usize) -> impl Strategy<Value = KVector<BigRational>> {
    prop::collection::vec(-5i64..5, n_components(grade))
        .prop_map(move |c| KVector::from_coeffs(grade, c.into_iter().map(|v| rat(v, 1)).collect()))
}

fn vector() -> impl Strategy<Value = [f64; DIM]> {
    prop::array::uniform6(-1.0f64..1.0)
}

#[test]
fn wedge_contact_form_with_alpha_at_pole() {
    // θ = dy1, α = dy2dy3 − dx2dx3 at x = (1,0,0)
    let theta = KVector::<f64>::basis(&[3]);
    let alpha = KVector::basis(&[4, 5]) - KVector::basis(&[1, 2]);
    let got = theta.wedge(&alpha);
    let mut want = KVector::zero(3);
    want.add_term(&[3, 4, 5], 1.0);
    want.add_term(&[3, 1, 2], -1.0);
    assert_eq!(got, want);
    // and it agrees with ψ at that point
    assert_eq!(got, model::psi::<f64>().clone() + {
        let mut rest = KVector::zero(3);
        rest.add_term(&[4, 2, 0], 1.0);
        rest.add_term(&[5, 0, 1], 1.0);
        rest
    });
}

#[test]
fn interior_of_real_part_of_dz123() {
    let re: KVector<f64> = model::re_dz123();
    let got = re.interior(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let want = KVector::basis(&[1, 2]) - KVector::basis(&[4, 5]);
    assert_eq!(got, want);
    let dx12 = KVector::<f64>::basis(&[0, 1]);
    assert_eq!(dx12.interior(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), KVector::basis(&[1]));
    assert!(KVector::scalar(3.0).interior(&[1.0; DIM]).is_zero());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_is_associative_and_graded_commutative(a in form(1), b in form(2), c in form(2)) {
        let lhs = a.wedge(&b).wedge(&c);
        let rhs = a.wedge(&b.wedge(&c));
        prop_assert!((lhs - rhs).max_abs() < 1e-13);
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        prop_assert!((ab - ba).max_abs() < 1e-13);
        let aa = a.wedge(&a);
        prop_assert!(aa.max_abs() < 1e-15);
    }

    #[test]
    fn exact_wedge_laws(a in int_form(1), b in int_form(3), c in int_form(1)) {
        prop_assert_eq!(a.wedge(&b).wedge(&c), a.wedge(&b.wedge(&c)));
        // odd ∧ odd anticommutes
        prop_assert_eq!(a.wedge(&b), -b.wedge(&a));
    }

    #[test]
    fn interior_is_an_antiderivation(v in vector(), a in form(2), b in form(3)) {
        let lhs = a.wedge(&b).interior(&v);
        let rhs = a.interior(&v).wedge(&b) + a.wedge(&b.interior(&v));
        prop_assert!((lhs - rhs).max_abs() < 1e-13);
        let a3 = b.clone();
        let lhs = a3.wedge(&a).interior(&v);
        let rhs = a3.interior(&v).wedge(&a) - a3.wedge(&a.interior(&v));
        prop_assert!((lhs - rhs).max_abs() < 1e-13);
    }

    #[test]
    fn interior_squares_to_zero(v in vector(), a in form(3)) {
        prop_assert!(a.interior(&v).interior(&v).max_abs() < 1e-14);
    }

    #[test]
    fn hodge_star_is_an_isometry(
        k in 0usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let g = m.transpose() * m + Matrix6::identity();
        let metric = Metric6::new(g, 1.0).unwrap();
        let a = KVector::from_coeffs(k, (0..n_components(k)).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = KVector::from_coeffs(k, (0..n_components(k)).map(|_| rng.random_range(-1.0..1.0)).collect());
        let sa = metric.hodge_star(&a);
        let sb = metric.hodge_star(&b);
        let ip = metric.inner(&a, &b);
        let scale = metric.inner(&a, &a).sqrt() * metric.inner(&b, &b).sqrt();
        prop_assert!((metric.inner(&sa, &sb) - ip).abs() <= 1e-12 * scale.max(1e-300));
        // a ∧ *b = ⟨a, b⟩ vol
        let lhs = a.wedge(&sb).top();
        let rhs = ip * metric.volume().top();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale * metric.volume().top());
        // ** = (−1)^{k(6−k)}
        let sign = if (k * (DIM - k)) % 2 == 0 { 1.0 } else { -1.0 };
        let twice = metric.hodge_star(&sa);
        prop_assert!((twice - a.scale(&sign)).max_abs() < 1e-11);
    }
}

#[test]
fn hodge_star_examples() {
    let e = Metric6::euclidean();
    assert_eq!(e.hodge_star(&KVector::scalar(1.0)), KVector::basis(&[0, 1, 2, 3, 4, 5]));
    assert_eq!(e.hodge_star(&model::chi()), KVector::basis(&[3, 4, 5]));
    let not_spd = Matrix6::from_diagonal_element(-1.0);
    assert!(Metric6::new(not_spd, 1.0).is_err());
    assert!(Metric6::new(Matrix6::identity(), 0.0).is_err());
}

#[test]
fn exterior_derivative_examples() {
    let omega = model::omega::<BigRational>().map(|c| Poly::constant(c.clone()));
    assert_eq!(poly_d(&model::theta()), omega);
    assert!(poly_d(&model::lambda_form_poly()).is_zero());
    let x1 = Poly::var(0);
    let a = PolyForm::from_terms(1, &[(&[1], x1.clone() * x1.clone())]);
    let want = PolyForm::from_terms(2, &[(&[0, 1], Poly::from_int(2) * x1)]);
    assert_eq!(poly_d(&a), want);
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: u8) -> Poly {
    let mut p = Poly::zero();
    for _ in 0..4 {
        let mut e = [0u8; DIM];
        let mut left = rng.random_range(0..=max_degree);
        while left > 0 {
            e[rng.random_range(0..DIM)] += 1;
            left -= 1;
        }
        p = p + Poly::monomial(e, rat(rng.random_range(-9..=9), rng.random_range(1..=4)));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_squared_vanishes_on_polynomial_forms(k in 0usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = PolyForm::from_coeffs(k, (0..n_components(k)).map(|_| random_poly(&mut rng, 4)).collect());
        prop_assert!(poly_d(&poly_d(&a)).is_zero());
    }
}

fn rational_points() -> Vec<SpherePoint<BigRational>> {
    vec![
        SpherePoint::new([rat(1, 1), rat(0, 1), rat(0, 1)], [rat(1, 3), rat(0, 1), rat(2, 7)]).unwrap(),
        SpherePoint::new([rat(3, 5), rat(4, 5), rat(0, 1)], [rat(0, 1), rat(1, 2), rat(1, 5)]).unwrap(),
        SpherePoint::new([rat(2, 3), rat(-1, 3), rat(2, 3)], [rat(1, 4), rat(1, 4), rat(0, 1)]).unwrap(),
        SpherePoint::new([rat(0, 1), rat(-12, 13), rat(5, 13)], [rat(0, 1), rat(0, 1), rat(0, 1)]).unwrap(),
    ]
}

#[test]
fn restriction_to_the_boundary_exact() {
    let gt = model::gamma().wedge(&model::theta());
    let lam = model::lambda_form_poly();
    for p in rational_points() {
        let f = sphere_tangent_frame(&p.x);
        assert!(restrict_poly(&model::dr(), &p, &f).unwrap().is_zero());
        assert!(restrict_poly(&model::chi_poly(), &p, &f).unwrap().is_zero());
        let diff = restrict_poly(&(gt.clone() - lam.clone()), &p, &f).unwrap();
        assert!(diff.is_zero(), "γ∧θ − λ restricted at {:?}: {:?}", p.x, diff);
        // the restriction of γ∧θ itself is not zero
        assert!(!restrict_poly(&gt, &p, &f).unwrap().is_zero());
    }
}

#[test]
fn restriction_to_the_boundary_float() {
    let gt = model::gamma().wedge(&model::theta());
    let lam = model::lambda_form::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let mut x = [0.0f64; 3];
        for c in x.iter_mut() {
            *c = rng.random_range(-1.0..1.0);
        }
        let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let x = x.map(|c| c / n);
        let y = [rng.random::<f64>(), rng.random(), rng.random()];
        let p = SpherePoint::new(x, y).unwrap();
        let f = sphere_tangent_frame(&x);
        let coords = p.coords();
        let got = restrict_tangential(&gt.eval_f64(&coords), &p, &f).unwrap();
        let want = restrict_tangential(&lam, &p, &f).unwrap();
        assert!((got - want).max_abs() <= 1e-12);
        let dr = restrict_tangential(&model::dr().eval_f64(&coords), &p, &f).unwrap();
        assert!(dr.max_abs() <= 1e-12);
    }
}

#[test]
fn restriction_rejects_points_off_the_sphere() {
    let bad = SpherePoint::new([rat(1, 2), rat(0, 1), rat(0, 1)], [rat(0, 1), rat(0, 1), rat(0, 1)]);
    assert!(bad.is_err());
    assert!(SpherePoint::new([0.9, 0.0, 0.0], [0.0; 3]).is_err());
}

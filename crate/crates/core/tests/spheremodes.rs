use nalgebra::DVector;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stableforms::spheremodes::{
    assemble_mode, diagonality_residual, gauss_legendre, integrate_on_sphere, kernel_dim, modes_up_to, rotate,
    solid_harmonics, sphere_moment, sphere_moment_over_4pi, tangential, traceless_product, GalerkinBasis,
    KernelPolicy, Poly3, SectionSpace, SpectrumError, SphereQuadrature,
};

const TAU: f64 = std::f64::consts::TAU;

fn random_sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 0.1 && r <= 1.0 {
            return v.map(|c| c / r);
        }
    }
}

/// Rational points on the sphere.
fn rational_points() -> Vec<[f64; 3]> {
    vec![
        [1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0],
        [3.0 / 5.0, 4.0 / 5.0, 0.0],
        [2.0 / 7.0, 3.0 / 7.0, 6.0 / 7.0],
        [1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0],
        [-2.0 / 11.0, 6.0 / 11.0, 9.0 / 11.0],
    ]
}

fn element_at(space: &SectionSpace, i: usize, x: &[f64; 3]) -> Vec<f64> {
    space.element(i).iter().map(|p| p.eval(x)).collect()
}

/// Trace-free symmetric product built from scratch: `½(uvᵀ + vuᵀ)` with the
/// tangential trace removed.
fn product_oracle(x: &[f64; 3], u: &[f64; 3], v: &[f64; 3]) -> [[f64; 3]; 3] {
    let proj = |w: &[f64; 3]| {
        let s = x[0] * w[0] + x[1] * w[1] + x[2] * w[2];
        [w[0] - s * x[0], w[1] - s * x[1], w[2] - s * x[2]]
    };
    let (u, v) = (proj(u), proj(v));
    let tr = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    std::array::from_fn(|i| {
        std::array::from_fn(|j| 0.5 * (u[i] * v[j] + v[i] * u[j]) - 0.5 * tr * ((i == j) as u8 as f64 - x[i] * x[j]))
    })
}

#[test]
fn gauss_legendre_integrates_polynomials_exactly() {
    for n in [1, 4, 9, 16] {
        let (x, w) = gauss_legendre(n);
        for k in 0..2 * n {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "n {n} k {k}: {q} vs {exact}");
        }
    }
}

#[test]
fn quadrature_reproduces_exact_moments() {
    assert_eq!(sphere_moment_over_4pi([0, 0, 0]).to_f64(), Some(1.0));
    assert_eq!(sphere_moment_over_4pi([2, 0, 0]).to_f64(), Some(1.0 / 3.0));
    assert_eq!(sphere_moment_over_4pi([2, 2, 2]).to_f64(), Some(1.0 / 105.0));
    let quad = SphereQuadrature::exact_to(14);
    for a in 0..=14u8 {
        for b in 0..=14 - a {
            for c in 0..=14 - a - b {
                let q = quad.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32));
                let m = sphere_moment([a, b, c]);
                assert!((q - m).abs() < 1e-13, "{a} {b} {c}: {q} vs {m}");
            }
        }
    }
}

#[test]
fn solid_harmonics_are_harmonic_and_orthogonal() {
    let hs = solid_harmonics(7);
    assert_eq!(hs.len(), 64);
    for (l, _, y) in &hs {
        assert_eq!(y.degree(), *l);
        let lap = (0..3).fold(Poly3::zero(), |s, i| s + y.deriv(i).deriv(i));
        assert!(lap.max_abs_coeff() <= 1e-9 * y.max_abs_coeff(), "l {l}");
    }
    for (i, (_, _, a)) in hs.iter().enumerate() {
        for (_, _, b) in &hs[..i] {
            let g = integrate_on_sphere(&(a * b));
            let scale = (integrate_on_sphere(&(a * a)) * integrate_on_sphere(&(b * b))).sqrt();
            assert!(g.abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn sphere_reduction_is_canonical() {
    let r2 = Poly3::radius_squared();
    let z = Poly3::var(2);
    let p = &(&z * &z) * &(&z * &Poly3::var(0));
    let q = (&p * &r2).reduce_on_sphere();
    assert_eq!(q, p.reduce_on_sphere());
    assert!((r2 - Poly3::constant(1.0)).reduce_on_sphere().is_zero());
}

#[test]
fn basis_elements_satisfy_their_constraints() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<Poly3> = (0..3).map(Poly3::var).collect();
    let mut points = rational_points();
    points.extend((0..20).map(|_| random_sphere_point(&mut rng)));
    for i in 0..basis.one_forms.dim() {
        let a = basis.one_forms.element(i);
        let normal = (0..3).fold(Poly3::zero(), |s, k| s + &x[k] * &a[k]).reduce_on_sphere();
        let scale = a.iter().map(Poly3::max_abs_coeff).fold(0.0, f64::max);
        assert!(normal.max_abs_coeff() <= 1e-12 * scale, "one-form {i} not tangent");
        for p in &points {
            let v = element_at(&basis.one_forms, i, p);
            assert!((v[0] * p[0] + v[1] * p[1] + v[2] * p[2]).abs() <= 1e-12 * scale);
        }
    }
    for i in 0..basis.traceless.dim() {
        let t = basis.traceless.element(i);
        let scale = t.iter().map(Poly3::max_abs_coeff).fold(0.0, f64::max);
        let trace = (t[0].clone() + t[4].clone() + t[8].clone()).reduce_on_sphere();
        assert!(trace.max_abs_coeff() <= 1e-12 * scale, "tensor {i} has trace");
        for r in 0..3 {
            let row = (0..3).fold(Poly3::zero(), |s, k| s + &t[3 * r + k] * &x[k]).reduce_on_sphere();
            assert!(row.max_abs_coeff() <= 1e-12 * scale, "tensor {i} not tangential");
            for c in 0..3 {
                assert_eq!(t[3 * r + c], t[3 * c + r]);
            }
        }
        for p in &points {
            let v = element_at(&basis.traceless, i, p);
            for r in 0..3 {
                let ax: f64 = (0..3).map(|k| v[3 * r + k] * p[k]).sum();
                assert!(ax.abs() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn gram_matrices_from_exact_moments_are_identity() {
    let basis = GalerkinBasis::new(3, 1).unwrap();
    for space in [&basis.functions, &basis.one_forms, &basis.area_forms, &basis.traceless] {
        let elems: Vec<Vec<Poly3>> = (0..space.dim()).map(|i| space.element(i)).collect();
        for i in 0..elems.len() {
            for j in 0..=i {
                let g: f64 = elems[i].iter().zip(&elems[j]).map(|(a, b)| integrate_on_sphere(&(a * b))).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() <= 1e-10, "{:?} ({i},{j}) = {g}", space.bundle());
            }
        }
    }
}

#[test]
fn space_dimensions_match_harmonic_counts() {
    for l in [2, 4, 6] {
        let b = GalerkinBasis::new(l, 1).unwrap();
        let n = (l + 1) * (l + 1);
        assert_eq!(b.functions.dim(), n);
        assert_eq!(b.area_forms.dim(), n);
        assert_eq!(b.one_forms.dim(), 2 * ((l + 2) * (l + 2) - 1));
        assert_eq!(b.traceless.dim(), 2 * (n - 4));
    }
    assert!(matches!(GalerkinBasis::new(1, 1), Err(SpectrumError::InvalidDegree(1))));
    assert!(matches!(GalerkinBasis::new(4, 7), Err(SpectrumError::InvalidOffset(7))));
}

#[test]
fn zero_mode_has_no_coupling_terms() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    let op = assemble_mode(&basis, [0, 0, 0]);
    let zero = Complex64::new(0.0, 0.0);
    assert!(op.a.iter().chain(op.b.iter()).chain(op.c.iter()).all(|z| *z == zero));
    assert_eq!(diagonality_residual(&op), 0.0);
}

/// Coefficients of a pointwise section in an orthonormal space.
fn project(basis: &GalerkinBasis, space: &SectionSpace, f: impl Fn(&[f64; 3]) -> Vec<f64>) -> DVector<Complex64> {
    DVector::from_fn(space.dim(), |i, _| {
        let e = space.element(i);
        Complex64::new(basis.quadrature.integrate(|x| e.iter().zip(f(x)).map(|(p, v)| p.eval(x) * v).sum()), 0.0)
    })
}

#[test]
fn a_of_the_constant_function_is_the_tangential_xi() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    let op = assemble_mode(&basis, [1, 0, 0]);
    let one = project(&basis, &basis.functions, |_| vec![1.0]);
    let image = &op.a * one;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let x = random_sphere_point(&mut rng);
        let got = basis.one_forms.eval(&image, &x);
        let want = [1.0 - x[0] * x[0], -x[0] * x[1], -x[0] * x[2]];
        for k in 0..3 {
            assert!((got[k] - Complex64::new(0.0, TAU * want[k])).norm() <= 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn b_matches_the_pointwise_product() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    let op = assemble_mode(&basis, [1, 0, 0]);
    let eta = |x: &[f64; 3]| vec![-x[1] * x[0], 1.0 - x[1] * x[1], -x[1] * x[2]];
    let coeffs = project(&basis, &basis.one_forms, eta);
    let image = &op.b * coeffs;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let x = random_sphere_point(&mut rng);
        let got = basis.traceless.eval(&image, &x);
        let e = eta(&x);
        let want = product_oracle(&x, &[1.0, 0.0, 0.0], &[e[0], e[1], e[2]]);
        for r in 0..3 {
            for c in 0..3 {
                let w = Complex64::new(0.0, -TAU * want[r][c]);
                assert!((got[3 * r + c] - w).norm() <= 1e-12, "{:?} vs {w}", got[3 * r + c]);
            }
        }
    }
}

#[test]
fn product_with_a_rotation_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let x = random_sphere_point(&mut rng);
        let e1 = tangential(&x, &std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let e2 = tangential(&x, &std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let lhs = traceless_product(&x, &e1, &rotate(&x, &e2));
        let rhs = traceless_product(&x, &e2, &rotate(&x, &e1));
        for r in 0..3 {
            for c in 0..3 {
                assert!((lhs[r][c] - rhs[r][c]).abs() <= 1e-12);
            }
        }
        let oracle = product_oracle(&x, &e1, &rotate(&x, &e2));
        for r in 0..3 {
            for c in 0..3 {
                assert!((lhs[r][c] - oracle[r][c]).abs() <= 1e-14);
            }
        }
    }
}

fn surface_curl_at(a: &[Poly3], x: &[f64; 3]) -> f64 {
    let curl = [
        a[2].deriv(1).eval(x) - a[1].deriv(2).eval(x),
        a[0].deriv(2).eval(x) - a[2].deriv(0).eval(x),
        a[1].deriv(0).eval(x) - a[0].deriv(1).eval(x),
    ];
    x[0] * curl[0] + x[1] * curl[1] + x[2] * curl[2]
}

#[test]
fn exterior_derivatives_stay_in_the_galerkin_spaces() {
    // equal trial and target levels, so both images fit exactly
    let basis = GalerkinBasis::new(4, 0).unwrap();
    let op = assemble_mode(&basis, [0, 0, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<[f64; 3]> = (0..30).map(|_| random_sphere_point(&mut rng)).collect();
    for j in 0..basis.functions.dim() {
        let f = basis.functions.element(j).remove(0);
        let image = op.d_functions.column(j).into_owned();
        for x in &points {
            let grad = tangential(x, &std::array::from_fn(|i| f.deriv(i).eval(x)));
            let got = basis.one_forms.eval(&image, x);
            for k in 0..3 {
                assert!((got[k] - Complex64::new(grad[k], 0.0)).norm() <= 1e-10);
            }
        }
    }
    for j in 0..basis.one_forms.dim() {
        let a = basis.one_forms.element(j);
        let image = op.d_one_forms.column(j).into_owned();
        for x in &points {
            let got = basis.area_forms.eval(&image, x)[0];
            assert!((got - Complex64::new(surface_curl_at(&a, x), 0.0)).norm() <= 1e-10, "element {j}");
        }
    }
}

#[test]
fn the_mode_complex_squares_to_zero() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    for m in [[0, 0, 0], [1, 0, 0], [0, -1, 1], [2, 1, -1]] {
        let op = assemble_mode(&basis, m);
        let comp = &op.operator * op.first_map();
        let scale = op.operator.norm() * op.first_map().norm();
        assert!(comp.norm() <= 1e-12 * scale, "m {m:?}: {}", comp.norm() / scale);
    }
}

#[test]
fn laplacian_is_hermitian_and_positive() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    for m in modes_up_to(1) {
        let op = assemble_mode(&basis, m);
        assert!(op.hermiticity_defect() <= 1e-12);
        let k = kernel_dim(&op, &KernelPolicy::default()).unwrap();
        let top = *k.eigenvalues.last().unwrap();
        assert!(k.eigenvalues[0] >= -1e-12 * top);
    }
}

#[test]
fn kernel_is_the_area_form_at_zero_and_trivial_otherwise() {
    let others = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, 1, 1]];
    for degree in [4, 6, 8] {
        for offset in [1, 2] {
            let basis = GalerkinBasis::new(degree, offset).unwrap();
            for absolute in [1e-10, 1e-9, 1e-8] {
                let policy = KernelPolicy { absolute, ..KernelPolicy::default() };
                let k0 = kernel_dim(&assemble_mode(&basis, [0, 0, 0]), &policy).unwrap();
                assert_eq!(k0.dim, 1);
                assert!(k0.overlap(&basis.area_form_mode()) >= 0.999);
                for m in others {
                    let k = kernel_dim(&assemble_mode(&basis, m), &policy).unwrap();
                    assert_eq!(k.dim, 0, "D {degree} offset {offset} m {m:?}");
                    assert!(k.eigenvalues[0] > 0.0);
                }
            }
        }
    }
}

#[test]
fn zero_mode_splits_into_de_rham_and_a_surjective_d() {
    let basis = GalerkinBasis::new(5, 1).unwrap();
    let op = assemble_mode(&basis, [0, 0, 0]);
    let n2 = basis.area_forms.dim();
    let lap = &op.laplacian;
    let area = lap.view((0, 0), (n2, n2)).into_owned();
    let tens = lap.view((n2, n2), (lap.nrows() - n2, lap.nrows() - n2)).into_owned();
    let area_eigs = area.map(|z| z.re).symmetric_eigenvalues();
    let mut sorted: Vec<f64> = area_eigs.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted[0].abs() <= 1e-12 && sorted[1] > 1.0);
    let min_tensor = tens.map(|z| z.re).symmetric_eigenvalues().min();
    assert!(min_tensor > 1.0, "D D* has a kernel: {min_tensor}");
}

#[test]
fn kernel_count_is_scale_invariant() {
    let basis = GalerkinBasis::new(4, 1).unwrap();
    for m in [[0, 0, 0], [1, 1, 0]] {
        let mut op = assemble_mode(&basis, m);
        let d = kernel_dim(&op, &KernelPolicy::default()).unwrap().dim;
        for c in [1e-6, 3.0, 1e5] {
            op.laplacian *= Complex64::new(c, 0.0);
            assert_eq!(kernel_dim(&op, &KernelPolicy::default()).unwrap().dim, d);
        }
    }
}

#[test]
fn unresolved_gaps_are_reported() {
    let basis = GalerkinBasis::new(3, 1).unwrap();
    let op = assemble_mode(&basis, [1, 0, 0]);
    let policy = KernelPolicy { absolute: 1e-9, gap: 0.9 };
    match kernel_dim(&op, &policy) {
        Err(SpectrumError::GapNotResolved { m, below_tolerance, eigenvalues, .. }) => {
            assert_eq!(m, [1, 0, 0]);
            assert_eq!(below_tolerance, 0);
            assert_eq!(eigenvalues.len(), 10);
        }
        other => panic!("expected a gap failure, got {other:?}"),
    }
}

#[test]
fn off_diagonal_block_vanishes_under_refinement() {
    let residuals: Vec<f64> = [4, 6, 8]
        .iter()
        .map(|&d| diagonality_residual(&assemble_mode(&GalerkinBasis::new(d, 1).unwrap(), [1, 0, 0])))
        .collect();
    assert!(residuals[1] <= 1e-2);
    for r in &residuals {
        assert!(*r <= 1e-13, "{residuals:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_identity_holds_pointwise(
        p in prop::array::uniform3(-1.0f64..1.0),
        u in prop::array::uniform3(-1.0f64..1.0),
        v in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        prop_assume!(r > 0.1);
        let x = p.map(|c| c / r);
        let lhs = traceless_product(&x, &u, &rotate(&x, &tangential(&x, &v)));
        let rhs = traceless_product(&x, &v, &rotate(&x, &tangential(&x, &u)));
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((lhs[i][j] - rhs[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn every_small_mode_is_diagonal_and_hermitian(m in prop::array::uniform3(-2i32..=2)) {
        let basis = GalerkinBasis::new(3, 1).unwrap();
        let op = assemble_mode(&basis, m);
        prop_assert!(diagonality_residual(&op) <= 1e-13);
        prop_assert!(op.hermiticity_defect() <= 1e-12);
    }
}

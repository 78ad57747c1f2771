//! The flat Calabi–Yau structure on `B³ × T³ ⊂ ℂ³ / iℤ³` and the explicit
//! forms attached to its boundary `S² × T³`.
//!
//! Coordinates are `z_j = x_j + i y_j`; the holomorphic volume form is
//! `ψ + iψ̃ = i dz1 dz2 dz3`.

use num_complex::Complex64;
use num_rational::BigRational;

use crate::exterior::{KVector, Poly, PolyForm, Scalar};

const CYCLIC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

fn x(i: usize) -> usize {
    i
}

fn y(i: usize) -> usize {
    i + 3
}

fn constant_form<T: Scalar>(grade: usize, terms: &[(&[usize], i64)]) -> KVector<T> {
    let mut out = KVector::zero(grade);
    for (idx, c) in terms {
        out.add_term(idx, T::from_i64(*c));
    }
    out
}

/// `ψ = dy1dy2dy3 − Σ_cyc dy_i dx_j dx_k`.
pub fn psi<T: Scalar>() -> KVector<T> {
    let mut out = constant_form(3, &[(&[y(0), y(1), y(2)], 1)]);
    for (i, j, k) in CYCLIC {
        out.add_term(&[y(i), x(j), x(k)], -T::one());
    }
    out
}

/// `ψ̃ = dx1dx2dx3 − Σ_cyc dx_i dy_j dy_k`.
pub fn psi_dual<T: Scalar>() -> KVector<T> {
    let mut out = constant_form(3, &[(&[x(0), x(1), x(2)], 1)]);
    for (i, j, k) in CYCLIC {
        out.add_term(&[x(i), y(j), y(k)], -T::one());
    }
    out
}

/// `dy1dy2dy3 + Σ_cyc dy_i dx_j dx_k`.
pub fn lambda_form<T: Scalar>() -> KVector<T> {
    let mut out = constant_form(3, &[(&[y(0), y(1), y(2)], 1)]);
    for (i, j, k) in CYCLIC {
        out.add_term(&[y(i), x(j), x(k)], T::one());
    }
    out
}

/// `χ = dx1dx2dx3`.
pub fn chi<T: Scalar>() -> KVector<T> {
    KVector::basis(&[0, 1, 2])
}

/// `dz1 ∧ dz2 ∧ dz3` with complex coefficients.
pub fn dz123() -> KVector<Complex64> {
    let dz = |j: usize| {
        let mut v = KVector::<Complex64>::zero(1);
        v.set(&[x(j)], Complex64::new(1.0, 0.0));
        v.set(&[y(j)], Complex64::new(0.0, 1.0));
        v
    };
    dz(0).wedge(&dz(1)).wedge(&dz(2))
}

/// `Re(dz1 dz2 dz3) = dx1dx2dx3 − Σ_cyc dx_i dy_j dy_k`.
pub fn re_dz123<T: Scalar>() -> KVector<T> {
    psi_dual()
}

/// `Im(dz1 dz2 dz3) = −ψ`.
pub fn im_dz123<T: Scalar>() -> KVector<T> {
    -psi()
}

/// `dx1dx2dx3 + dy1dy2dy3`, a stable form of real type.
pub fn real_type_form<T: Scalar>() -> KVector<T> {
    constant_form(3, &[(&[0, 1, 2], 1), (&[3, 4, 5], 1)])
}

fn lift(a: &KVector<BigRational>) -> PolyForm {
    a.map(|c| Poly::constant(c.clone()))
}

fn var(i: usize) -> Poly {
    Poly::var(i)
}

fn two_form_term(coeff: Poly, i: usize, j: usize) -> PolyForm {
    let mut out = PolyForm::zero(2);
    out.add_term(&[i, j], coeff);
    out
}

/// Contact form `θ = Σ x_i dy_i`.
pub fn theta() -> PolyForm {
    let mut out = PolyForm::zero(1);
    for i in 0..3 {
        out.add_term(&[y(i)], var(x(i)));
    }
    out
}

/// Radial derivative `dr` of `r = (|x|² − 1)/2`, i.e. `Σ x_i dx_i`.
pub fn dr() -> PolyForm {
    let mut out = PolyForm::zero(1);
    for i in 0..3 {
        out.add_term(&[x(i)], var(x(i)));
    }
    out
}

/// `ω = Σ dx_i dy_i`.
pub fn omega<T: Scalar>() -> KVector<T> {
    let mut out = KVector::zero(2);
    for i in 0..3 {
        out.add_term(&[x(i), y(i)], T::one());
    }
    out
}

fn cyclic_sum(f: impl Fn(usize, usize) -> PolyForm) -> PolyForm {
    let mut out = PolyForm::zero(2);
    for (i, j, k) in CYCLIC {
        out = out + f(j, k).scale(&var(x(i)));
    }
    out
}

/// `α = Σ_cyc x_i (dy_j dy_k − dx_j dx_k)`.
pub fn alpha() -> PolyForm {
    cyclic_sum(|j, k| two_form_term(Poly::from_int(1), y(j), y(k)) - two_form_term(Poly::from_int(1), x(j), x(k)))
}

/// `β = Σ_cyc x_i (dx_j dy_k − dx_k dy_j)`.
pub fn beta() -> PolyForm {
    cyclic_sum(|j, k| two_form_term(Poly::from_int(1), x(j), y(k)) - two_form_term(Poly::from_int(1), x(k), y(j)))
}

/// `γ = Σ_cyc x_i (dx_j dx_k + dy_j dy_k)`, the anti-self-dual boundary form.
pub fn gamma() -> PolyForm {
    cyclic_sum(|j, k| two_form_term(Poly::from_int(1), x(j), x(k)) + two_form_term(Poly::from_int(1), y(j), y(k)))
}

pub fn psi_poly() -> PolyForm {
    lift(&psi())
}

pub fn psi_dual_poly() -> PolyForm {
    lift(&psi_dual())
}

pub fn lambda_form_poly() -> PolyForm {
    lift(&lambda_form())
}

pub fn chi_poly() -> PolyForm {
    lift(&chi())
}

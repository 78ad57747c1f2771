//! Field-level Hitchin maps: `P`, the torsion residual `dP(Ψ)`, the volume,
//! `d J d` and the type decomposition of `d`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::pointwise::{type_component, PointStructure};
use super::{d_field, FieldError, FormField, BLOCK};
use crate::exterior::n_components;

fn structure_at(psi: &FormField<f64>, p: usize) -> Result<PointStructure, FieldError> {
    PointStructure::new(psi.at(p)).map_err(|lambda| FieldError::NotStable { point: p, coords: psi.grid().coords(p), lambda })
}

fn check_grade(a: &FormField<impl super::FieldValue>, k: usize, op: &'static str) -> Result<(), FieldError> {
    if a.grade() == k {
        Ok(())
    } else {
        Err(FieldError::GradeOutOfRange { op, grade: a.grade() })
    }
}

/// Runs `f` at every point in parallel, filling an output field of grade
/// `grade`; the first failing point (lowest index) is reported.
fn try_map<T: super::FieldValue>(
    base: &FormField<f64>,
    grade: usize,
    f: impl Fn(usize, &PointStructure, &mut [T]) + Sync,
) -> Result<FormField<T>, FieldError> {
    let no = n_components(grade);
    let mut out = FormField::<T>::zeros(base.grid(), grade);
    let first_bad = out
        .data_mut()
        .par_chunks_mut(no * BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            for (q, o) in chunk.chunks_mut(no).enumerate() {
                let p = b * BLOCK + q;
                match structure_at(base, p) {
                    Ok(s) => f(p, &s, o),
                    Err(e) => return Some(e),
                }
            }
            None
        })
        .find_first(|e| e.is_some())
        .flatten();
    match first_bad {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Pointwise dual form `P(Ψ)`.
pub fn p_field(psi: &FormField<f64>) -> Result<FormField<f64>, FieldError> {
    check_grade(psi, 3, "P")?;
    try_map(psi, 3, |p, s, o| s.p_form(psi.at(p), o))
}

/// `dP(Ψ)`; zero exactly for constant stable fields.
pub fn torsion_residual(psi: &FormField<f64>) -> Result<FormField<f64>, FieldError> {
    d_field(&p_field(psi)?)
}

/// `∫ vol_Ψ` with the grid quadrature weights; points of zero weight are
/// skipped.
pub fn hitchin_volume(psi: &FormField<f64>) -> Result<f64, FieldError> {
    check_grade(psi, 3, "hitchin_volume")?;
    let g = psi.grid();
    let n = g.npoints();
    let parts: Vec<Result<f64, FieldError>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut sum = 0.0;
            for p in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let w = g.weight(p);
                if w != 0.0 {
                    sum += w * structure_at(psi, p)?.vol_density();
                }
            }
            Ok(sum)
        })
        .collect();
    let mut sum = 0.0;
    for r in parts {
        sum += r?;
    }
    Ok(sum)
}

/// `d(J_base(dα))` for a 2-form field α.
pub fn djd_apply(base: &FormField<f64>, alpha: &FormField<f64>) -> Result<FormField<f64>, FieldError> {
    check_grade(base, 3, "djd base")?;
    check_grade(alpha, 2, "djd")?;
    if !base.grid().same_as(alpha.grid()) {
        return Err(FieldError::GridMismatch);
    }
    let da = d_field(alpha)?;
    let jda = try_map(base, 3, |p, s, o| s.j_apply(da.at(p), o))?;
    d_field(&jda)
}

/// Pointwise type `(p, k−p)` component of a complex field relative to the
/// complex structure of `base`.
pub fn type_component_field(
    base: &FormField<f64>,
    a: &FormField<Complex64>,
    p: usize,
) -> Result<FormField<Complex64>, FieldError> {
    check_grade(base, 3, "type projection base")?;
    let k = a.grade();
    if p > k {
        return Err(FieldError::GradeOutOfRange { op: "type projection", grade: k });
    }
    try_map(base, k, |q, s, o| {
        let d = s.derivation(k);
        o.copy_from_slice(&type_component(&d, a.at(q), k, p));
    })
}

/// The four type components of `dφ` for φ of pure type `(p, q)`:
/// `parts[j]` has type `(p + 2 − j, q − 1 + j)`; types with a negative
/// index are identically zero.
#[derive(Clone, Debug)]
pub struct DecomposedD {
    pub p: usize,
    pub q: usize,
    pub parts: [FormField<Complex64>; 4],
    /// `dφ` minus the four parts: the components of other types, which vanish
    /// in the continuum and are of discretisation size here.
    pub remainder: FormField<Complex64>,
}

impl DecomposedD {
    /// Type of `parts[j]`, or `None` if it does not exist.
    pub fn part_type(&self, j: usize) -> Option<(usize, usize)> {
        let a = self.p as isize + 2 - j as isize;
        let b = self.q as isize - 1 + j as isize;
        (a >= 0 && b >= 0).then_some((a as usize, b as usize))
    }

    pub fn sum(&self) -> FormField<Complex64> {
        let mut out = self.parts[0].clone();
        for part in &self.parts[1..] {
            out.axpy(1.0, part).expect("parts share a grid");
        }
        out
    }
}

/// Splits `dφ` into the components `i_{N'} φ`, `∂φ`, `∂̄φ`, `i_{N''} φ`.
/// `φ` must be pointwise of type `(p, q)` to relative accuracy `type_tol`.
pub fn decompose_d(
    base: &FormField<f64>,
    phi: &FormField<Complex64>,
    p: usize,
    type_tol: f64,
) -> Result<DecomposedD, FieldError> {
    let k = phi.grade();
    if p > k || k >= 6 {
        return Err(FieldError::GradeOutOfRange { op: "decompose_d", grade: k });
    }
    let q = k - p;
    let scale = phi.max_abs().max(f64::MIN_POSITIVE);
    // purity check
    let proj = type_component_field(base, phi, p)?;
    let worst = proj
        .data()
        .par_chunks(n_components(k))
        .zip(phi.data().par_chunks(n_components(k)))
        .enumerate()
        .map(|(pt, (a, b))| (pt, a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)))
        .reduce(|| (0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if worst.1 > type_tol * scale {
        return Err(FieldError::NotPureType { point: worst.0, relative: worst.1 / scale });
    }
    let dphi = d_field(phi)?;
    let zero = || FormField::<Complex64>::zeros(base.grid(), k + 1);
    let mut parts: [FormField<Complex64>; 4] = [zero(), zero(), zero(), zero()];
    for (j, part) in parts.iter_mut().enumerate() {
        let a = p as isize + 2 - j as isize;
        let b = q as isize - 1 + j as isize;
        if a < 0 || b < 0 || a as usize > k + 1 {
            continue;
        }
        *part = type_component_field(base, &dphi, a as usize)?;
    }
    let mut remainder = dphi;
    for part in &parts {
        remainder.axpy(-1.0, part)?;
    }
    Ok(DecomposedD { p, q, parts, remainder })
}

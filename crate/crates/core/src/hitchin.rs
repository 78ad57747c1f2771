//! Pointwise analysis of stable 3-forms: the invariant λ, the almost complex
//! structure, the dual form P(Ψ), the linearisation J, (p,q)-type
//! projections, the 1 ⊕ 8 ⊕ 6 split of 2-forms and the Nijenhuis tensor.

use nalgebra::{DMatrix, DVector, Matrix6};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::exterior::{
    basis_mask, induced_matrix, mask_indices, mat6_from_fn, n_components, unit_vector, FieldScalar, KVector, Mat6,
    Scalar, DIM, FULL_MASK,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HitchinError {
    #[error("form is not stable of complex type (lambda = {lambda:e})")]
    NotStable { lambda: f64 },
    #[error("input has a component of the wrong type (relative size {relative:e})")]
    TypeError { relative: f64 },
    #[error("2-form is not compatible with the complex structure (relative (2,0) part {0:e})")]
    IncompatibleOmega(f64),
    #[error("-lambda = {0} is not the square of a rational number")]
    IrrationalScale(String),
}

/// The densitised endomorphism `K` and invariant `λ = tr(K²)/6` of a 3-form
/// relative to the top form `eps · e^{123456}`.
///
/// `K(v)` is the vector `w` with `ι_w ε = ι_v Ψ ∧ Ψ`; column `j` of `K` is
/// `K(∂_j)`.
pub fn hitchin_invariant<T: FieldScalar>(psi: &KVector<T>, eps: &T) -> (T, Mat6<T>) {
    assert_eq!(psi.grade(), 3, "hitchin_invariant expects a 3-form");
    let mut k: Mat6<T> = mat6_from_fn(|_, _| T::zero());
    for j in 0..DIM {
        let five = psi.interior(&unit_vector(j)).wedge(psi);
        for (i, row) in k.iter_mut().enumerate() {
            // ι_{e_i} e^{012345} = (-1)^i e^{complement of i}
            let c = five.get_mask(FULL_MASK & !(1 << i)).clone() / eps.clone();
            row[j] = if i % 2 == 0 { c } else { -c };
        }
    }
    let mut tr = T::zero();
    for i in 0..DIM {
        for j in 0..DIM {
            tr = tr + k[i][j].clone() * k[j][i].clone();
        }
    }
    (tr / T::from_i64(6), k)
}

/// Matrix (on coefficient vectors of grade `k`) of the derivation extending
/// the covector map `e^i ↦ Σ_j a[i][j] e^j`.
pub fn derivation_matrix<T: Scalar>(a: &Mat6<T>, k: usize) -> Vec<Vec<T>> {
    let n = n_components(k);
    let mut out = vec![vec![T::zero(); n]; n];
    for col in 0..n {
        let idx = mask_indices(basis_mask(k, col));
        for p in 0..k {
            for j in 0..DIM {
                let c = &a[idx[p]][j];
                if c.is_zero() {
                    continue;
                }
                let mut replaced = idx.clone();
                replaced[p] = j;
                let mut image = KVector::<T>::zero(k);
                image.add_term(&replaced, c.clone());
                for (row, v) in image.coeffs().iter().enumerate() {
                    if !v.is_zero() {
                        out[row][col] = out[row][col].clone() + v.clone();
                    }
                }
            }
        }
    }
    out
}

fn apply<T: Scalar>(m: &[Vec<T>], a: &KVector<T>) -> KVector<T> {
    let coeffs = m
        .iter()
        .map(|row| row.iter().zip(a.coeffs()).fold(T::zero(), |acc, (r, c)| acc + r.clone() * c.clone()))
        .collect();
    KVector::from_coeffs(a.grade(), coeffs)
}

/// Everything derived pointwise from a complex-stable 3-form.
#[derive(Clone, Debug, Serialize)]
pub struct StableAnalysis {
    pub psi: Vec<f64>,
    pub hitchin_lambda: f64,
    pub k: Mat6<f64>,
    /// Almost complex structure acting on vectors (`I ∂_j = Σ_i I[i][j] ∂_i`).
    pub i: Mat6<f64>,
    pub p: Vec<f64>,
    pub vol_density: f64,
    pub eps: f64,
    #[serde(skip)]
    deriv: [Vec<Vec<f64>>; DIM + 1],
}

impl StableAnalysis {
    pub fn psi(&self) -> KVector<f64> {
        KVector::from_coeffs(3, self.psi.clone())
    }

    /// `P(Ψ)`, the form with `Ψ + iP(Ψ)` of type (3,0).
    pub fn p_form(&self) -> KVector<f64> {
        KVector::from_coeffs(3, self.p.clone())
    }

    /// Holomorphic volume form `Ψ + iP(Ψ)`.
    pub fn omega_30(&self) -> KVector<Complex64> {
        let p = self.p_form();
        KVector::from_coeffs(3, self.psi.iter().zip(p.coeffs()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    /// The derivation `D` induced by `I` on forms; it acts on type (p,q) as `i(p−q)`.
    pub fn derivation(&self, a: &KVector<f64>) -> KVector<f64> {
        apply(&self.deriv[a.grade()], a)
    }

    pub fn derivation_table(&self, k: usize) -> &[Vec<f64>] {
        &self.deriv[k]
    }

    /// Transpose of the derivation (adjoint for the coefficient inner product).
    pub fn derivation_transpose(&self, a: &KVector<f64>) -> KVector<f64> {
        let m = &self.deriv[a.grade()];
        let n = m.len();
        let coeffs = (0..n).map(|c| (0..n).map(|r| m[r][c] * a.coeffs()[r]).sum()).collect();
        KVector::from_coeffs(a.grade(), coeffs)
    }

    /// Matrix of the (1,0) projection on covector coefficients, `(Id − i Iᵀ)/2`.
    pub fn projector_10(&self) -> Mat6<Complex64> {
        mat6_from_fn(|r, c| {
            let id = if r == c { 0.5 } else { 0.0 };
            Complex64::new(id, -0.5 * self.i[c][r])
        })
    }

    pub fn projector_01(&self) -> Mat6<Complex64> {
        mat6_from_fn(|r, c| {
            let id = if r == c { 0.5 } else { 0.0 };
            Complex64::new(id, 0.5 * self.i[c][r])
        })
    }

    /// Metric 2-form `ω(u, v) = g(Iu, v)` for the Hermitian metric `g = Iᵀ G I`
    /// averaged from the Euclidean metric `G`; used as the default compatible ω.
    pub fn hermitian_omega(&self) -> KVector<f64> {
        // g(u,v) = (u·v + Iu·Iv)/2, ω(u,v) = g(Iu, v)
        let i = Matrix6::from_fn(|r, c| self.i[r][c]);
        let g = (Matrix6::identity() + i.transpose() * i) * 0.5;
        let w = i.transpose() * g;
        let mut out = KVector::zero(2);
        for a in 0..DIM {
            for b in (a + 1)..DIM {
                out.set(&[a, b], w[(a, b)]);
            }
        }
        out
    }
}

fn psi_scale(psi: &KVector<f64>) -> f64 {
    psi.norm().powi(4)
}

/// Full analysis of a 3-form; fails with `NotStable` unless `λ < −1e-12‖Ψ‖⁴`.
pub fn analyze(psi: &KVector<f64>, eps: f64) -> Result<StableAnalysis, HitchinError> {
    let (lambda, k) = hitchin_invariant(psi, &eps);
    if !(lambda < -1e-12 * psi_scale(psi)) || !lambda.is_finite() {
        return Err(HitchinError::NotStable { lambda });
    }
    let s = (-lambda).sqrt();
    let i = mat6_from_fn(|r, c| k[r][c] / s);
    // covector map e^r ↦ e^r ∘ I = Σ_c I[r][c] e^c
    let deriv: [Vec<Vec<f64>>; DIM + 1] = std::array::from_fn(|g| derivation_matrix(&i, g));
    let d_psi = apply(&deriv[3], psi);
    let p = d_psi.scale(&(-1.0 / 3.0));
    Ok(StableAnalysis {
        psi: psi.coeffs().to_vec(),
        hitchin_lambda: lambda,
        k,
        i,
        p: p.coeffs().to_vec(),
        vol_density: s,
        eps,
        deriv,
    })
}

/// Exact counterpart of [`analyze`] for rational forms whose `−λ` is the
/// square of a rational, such as the flat structures of `ℂ³`.
#[derive(Clone, Debug)]
pub struct ExactStructure {
    pub hitchin_lambda: BigRational,
    pub i: Mat6<BigRational>,
    deriv3: Vec<Vec<BigRational>>,
}

fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let (n, d) = (q.numer().sqrt(), q.denom().sqrt());
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}

pub fn analyze_exact(psi: &KVector<BigRational>) -> Result<ExactStructure, HitchinError> {
    let (lambda, k) = hitchin_invariant(psi, &BigRational::one());
    if !lambda.is_negative() {
        return Err(HitchinError::NotStable { lambda: lambda.to_f64().unwrap_or(f64::NAN) });
    }
    let s = rational_sqrt(&-lambda.clone()).ok_or_else(|| HitchinError::IrrationalScale((-lambda.clone()).to_string()))?;
    let i = mat6_from_fn(|r, c| k[r][c].clone() / s.clone());
    let deriv3 = derivation_matrix(&i, 3);
    Ok(ExactStructure { hitchin_lambda: lambda, i, deriv3 })
}

impl ExactStructure {
    /// `P(Ψ) = −DΨ/3`.
    pub fn p_form(&self, psi: &KVector<BigRational>) -> KVector<BigRational> {
        apply(&self.deriv3, psi).scale(&BigRational::new((-1).into(), 3.into()))
    }

    /// `J = −(13D + D³)/12` on 3-forms.
    pub fn j_operator(&self, rho: &KVector<BigRational>) -> KVector<BigRational> {
        let d1 = apply(&self.deriv3, rho);
        let d3 = apply(&self.deriv3, &apply(&self.deriv3, &d1));
        (d1.scale(&BigRational::from_integer(13.into())) + d3).scale(&BigRational::new((-1).into(), 12.into()))
    }
}

/// The linearisation `J` of `P` at the analysed form: `−i` on types (3,0),
/// (2,1) and `+i` on (1,2), (0,3). Uses `J = −(13D + D³)/12`, where `D`
/// has eigenvalues `±3i, ±i` on the four types.
pub fn j_operator(an: &StableAnalysis, rho: &KVector<f64>) -> KVector<f64> {
    assert_eq!(rho.grade(), 3, "J acts on 3-forms");
    let d1 = an.derivation(rho);
    let d2 = an.derivation(&d1);
    let d3 = an.derivation(&d2);
    (d1.scale(&13.0) + d3).scale(&(-1.0 / 12.0))
}

/// Transpose of `J` with respect to the coefficient inner product.
pub fn j_transpose(an: &StableAnalysis, v: &KVector<f64>) -> KVector<f64> {
    let d1 = an.derivation_transpose(v);
    let d2 = an.derivation_transpose(&d1);
    let d3 = an.derivation_transpose(&d2);
    (d1.scale(&13.0) + d3).scale(&(-1.0 / 12.0))
}

/// Components of a form by type; `comps[p]` has type `(p, grade − p)`.
#[derive(Clone, Debug)]
pub struct TypeComponents {
    pub grade: usize,
    pub comps: Vec<KVector<Complex64>>,
}

impl TypeComponents {
    pub fn component(&self, p: usize, q: usize) -> &KVector<Complex64> {
        assert_eq!(p + q, self.grade);
        &self.comps[p]
    }

    pub fn sum(&self) -> KVector<Complex64> {
        self.comps.iter().cloned().reduce(|a, b| a + b).expect("at least one component")
    }
}

/// Type decomposition through the discrete Fourier transform of the grade-k
/// extensions of `ζ Π^{1,0} + Π^{0,1}` over the `(k+1)`-th roots of unity.
pub fn type_project_complex(an: &StableAnalysis, a: &KVector<Complex64>) -> TypeComponents {
    let k = a.grade();
    let p10 = an.projector_10();
    let p01 = an.projector_01();
    let n = (k + 1) as f64;
    let mut comps = vec![KVector::<Complex64>::zero(k); k + 1];
    for r in 0..=k {
        let zeta = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * r as f64 / n);
        let m = mat6_from_fn(|i, j| zeta * p10[i][j] + p01[i][j]);
        let image = apply(&induced_matrix(&m, k), a);
        for (p, comp) in comps.iter_mut().enumerate() {
            let w = zeta.powi(-(p as i32)) / n;
            *comp = comp.clone() + image.scale(&w);
        }
    }
    TypeComponents { grade: k, comps }
}

pub fn type_project(an: &StableAnalysis, a: &KVector<f64>) -> TypeComponents {
    type_project_complex(an, &a.to_complex())
}

/// Type projector built as a Lagrange polynomial in the derivation `D`
/// (eigenvalue `i(2p − k)` on type `(p, k−p)`); cheaper than
/// [`type_project`] and used inside grid loops.
pub fn type_component_via_derivation(an: &StableAnalysis, a: &KVector<Complex64>, p: usize) -> KVector<Complex64> {
    let k = a.grade();
    let mut out = a.clone();
    let ev = |q: usize| Complex64::new(0.0, (2 * q) as f64 - k as f64);
    let dm = &an.deriv[k];
    for q in 0..=k {
        if q == p {
            continue;
        }
        let coeffs: Vec<Complex64> = (0..out.coeffs().len())
            .map(|r| dm[r].iter().zip(out.coeffs()).map(|(m, c)| c * *m).sum::<Complex64>())
            .collect();
        let dout = KVector::from_coeffs(k, coeffs);
        out = (dout - out.scale(&ev(q))).scale(&(Complex64::new(1.0, 0.0) / (ev(p) - ev(q))));
    }
    out
}

/// The split `σ = f ω + σ₈ + ι_X Ψ` of a real 2-form.
#[derive(Clone, Debug, Serialize)]
pub struct TwoFormSplit {
    pub f: f64,
    pub part8: Vec<f64>,
    pub x: [f64; DIM],
}

impl TwoFormSplit {
    pub fn part8_form(&self) -> KVector<f64> {
        KVector::from_coeffs(2, self.part8.clone())
    }

    pub fn reconstruct(&self, an: &StableAnalysis, omega: &KVector<f64>) -> KVector<f64> {
        omega.scale(&self.f) + self.part8_form() + an.psi().interior(&self.x)
    }
}

pub fn two_form_split(
    an: &StableAnalysis,
    omega: &KVector<f64>,
    sigma: &KVector<f64>,
) -> Result<TwoFormSplit, HitchinError> {
    assert_eq!(sigma.grade(), 2);
    let om_types = type_project(an, omega);
    let off = om_types.comps[2].norm() / omega.norm().max(f64::MIN_POSITIVE);
    if off > 1e-9 {
        return Err(HitchinError::IncompatibleOmega(off));
    }
    let types = type_project(an, sigma);
    let s11 = types.comps[1].re();
    let om2 = omega.wedge(omega);
    let f = s11.wedge(&om2).top() / omega.wedge(&om2).top();
    let part8 = s11.clone() - omega.scale(&f);
    let rest = sigma.clone() - s11;
    // least squares for ι_X Ψ = rest (exact for stable Ψ)
    let psi = an.psi();
    let cols: Vec<KVector<f64>> = (0..DIM).map(|j| psi.interior(&unit_vector(j))).collect();
    let a = DMatrix::from_fn(15, DIM, |r, c| cols[c].coeffs()[r]);
    let b = DVector::from_column_slice(rest.coeffs());
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let sol = ata.lu().solve(&atb).expect("ι_XΨ is injective for stable Ψ");
    Ok(TwoFormSplit { f, part8: part8.coeffs().to_vec(), x: std::array::from_fn(|i| sol[i]) })
}

/// The (0,2)-valued contraction `θ ↦ i_{N''}θ = (dθ)^{0,2}` on a frame of (1,0)-forms.
#[derive(Clone, Debug)]
pub struct NijenhuisTensor {
    /// Basis of (1,0)-forms.
    pub zeta: [KVector<Complex64>; 3],
    /// `tau[a] = i_{N''} zeta[a]`, each of type (0,2).
    pub tau: [KVector<Complex64>; 3],
}

impl NijenhuisTensor {
    /// Coefficients of a (1,0)-form in the `zeta` frame (least squares).
    pub fn frame_coords(&self, theta: &KVector<Complex64>) -> [Complex64; 3] {
        let a = DMatrix::from_fn(DIM, 3, |r, c| self.zeta[c].coeffs()[r]);
        let b = DVector::from_column_slice(theta.coeffs());
        let sol = (a.adjoint() * &a).lu().solve(&(a.adjoint() * b)).expect("zeta frame is a basis");
        [sol[0], sol[1], sol[2]]
    }

    /// `i_{N''}θ` for a (1,0)-form θ.
    pub fn apply(&self, theta: &KVector<Complex64>) -> KVector<Complex64> {
        let c = self.frame_coords(theta);
        (0..3).fold(KVector::zero(2), |acc, a| acc + self.tau[a].scale(&c[a]))
    }

    /// Flattened component array `[a][I]` of `tau` in the coordinate basis.
    pub fn components(&self) -> Vec<Vec<Complex64>> {
        self.tau.iter().map(|t| t.coeffs().to_vec()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.tau.iter().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
    }
}

/// Three (1,0)-forms `Π^{1,0} e^j` with the best-conditioned Gram matrix.
pub fn holomorphic_coframe(an: &StableAnalysis) -> [KVector<Complex64>; 3] {
    let p10 = an.projector_10();
    let cands: Vec<KVector<Complex64>> = (0..DIM)
        .map(|j| KVector::from_coeffs(1, (0..DIM).map(|r| p10[r][j]).collect()))
        .collect();
    let mut best = (0.0, [0, 1, 2]);
    for a in 0..DIM {
        for b in (a + 1)..DIM {
            for c in (b + 1)..DIM {
                let idx = [a, b, c];
                let g = DMatrix::from_fn(3, 3, |r, s| {
                    cands[idx[r]].coeffs().iter().zip(cands[idx[s]].coeffs()).map(|(u, v)| u.conj() * v).sum::<Complex64>()
                });
                let det = g.determinant().norm();
                if det > best.0 {
                    best = (det, idx);
                }
            }
        }
    }
    best.1.map(|j| cands[j].clone())
}

/// Recovers `N''` from `dP(Ψ)` for a closed stable Ψ through
/// `i_{N''}θ ∧ (Ψ + iP) = i θ ∧ dP` for every (1,0)-form θ.
///
/// `type_tol` bounds the non-(2,2) part of `dP` relative to its norm.
pub fn nijenhuis_from_torsion(
    an: &StableAnalysis,
    dp: &KVector<f64>,
    type_tol: f64,
) -> Result<NijenhuisTensor, HitchinError> {
    assert_eq!(dp.grade(), 4);
    let norm = dp.norm();
    if norm > 0.0 {
        let types = type_project(an, dp);
        let off: f64 = types
            .comps
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != 2)
            .map(|(_, c)| c.norm().powi(2))
            .sum::<f64>()
            .sqrt();
        if off > type_tol * norm {
            return Err(HitchinError::TypeError { relative: off / norm });
        }
    }
    let zeta = holomorphic_coframe(an);
    let zbar: Vec<KVector<Complex64>> = zeta.iter().map(|z| z.conj()).collect();
    let basis02 = [zbar[0].wedge(&zbar[1]), zbar[0].wedge(&zbar[2]), zbar[1].wedge(&zbar[2])];
    let om = an.omega_30();
    let images: Vec<KVector<Complex64>> = basis02.iter().map(|b| b.wedge(&om)).collect();
    let a = DMatrix::from_fn(DIM, 3, |r, c| images[c].coeffs()[r]);
    let normal = a.adjoint() * &a;
    let lu = normal.lu();
    let dpc = dp.to_complex();
    let i = Complex64::new(0.0, 1.0);
    let tau: [KVector<Complex64>; 3] = std::array::from_fn(|k| {
        let rhs = zeta[k].wedge(&dpc).scale(&i);
        let b = DVector::from_column_slice(rhs.coeffs());
        let sol = lu.solve(&(a.adjoint() * b)).expect("wedge with Ψ+iP is injective on (0,2)-forms");
        (0..3).fold(KVector::zero(2), |acc, c| acc + basis02[c].scale(&sol[c]))
    });
    Ok(NijenhuisTensor { zeta, tau })
}

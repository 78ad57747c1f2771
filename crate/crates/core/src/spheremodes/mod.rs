//! Fourier-mode analysis of the boundary complex on `S² × T³`.
//!
//! Translation-invariant data on the `T³` factor reduce the complex
//! `Ω⁰_H → Ω¹_H → Ω⁻_H` to a complex over `S²`; a Fourier mode
//! `exp(ξ·y)`, `ξ = 2πi m`, adds the zeroth-order terms
//!
//! ```text
//! A f = f ξ̃,   B η = −ξ̃ * η,   C η = ξ̃ ∧ η,   ξ̃ = Σ ξ_i dx_i |_{S²}
//! ```
//!
//! and the operator `𝒟_ξ = [[d, C], [B, D]] : Ω¹_X ⊕ Ω¹_Y → Ω² ⊕ Γ(s²₀)`.
//! Its cokernel is the kernel of `Δ_ξ = 𝒟_ξ 𝒟_ξ*`.
//!
//! Sections are ambient polynomials on `S² ⊂ ℝ³`: 1-forms are tangent vector
//! fields (identified through the round metric), 2-forms are multiples of
//! the area form `μ(v, w) = x·(v × w)` and trace-free symmetric tensors are
//! `3 × 3` matrices annihilating `x`. The Galerkin spaces of level `L` are
//! spanned by solid harmonics of degree `≤ L`, their tangential gradients
//! and rotated gradients, and the `D`-images of those. Every space is
//! orthonormalised in `L²(S²)`, so adjoints are conjugate transposes.
//!
//! `𝒟_ξ` maps trial 1-forms of level `L + offset` to targets of level `L`.
//! With `offset ≥ 1` every adjoint `𝒟_ξ*` of a target lands inside the trial
//! space, so the assembled `Δ_ξ` is the exact compression of the continuum
//! operator.

mod poly3;
mod quadrature;

use std::f64::consts::TAU;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use poly3::{integrate_on_sphere, solid_harmonics, sphere_moment, sphere_moment_over_4pi, Poly3, Powers};
pub use quadrature::{gauss_legendre, SphereQuadrature};

type V3 = [f64; 3];
type M3 = [[f64; 3]; 3];

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("degree {0} outside the supported range 2..=12")]
    InvalidDegree(usize),
    #[error("trial offset {0} outside the supported range 0..=3")]
    InvalidOffset(usize),
    #[error("Galerkin space {0:?} at level {1} is not linearly independent")]
    DegenerateBasis(Bundle, usize),
    #[error("no spectral gap at mode {m:?}: {below_tolerance} eigenvalues below tolerance, largest gap after {at_largest_gap}")]
    GapNotResolved { m: [i32; 3], below_tolerance: usize, at_largest_gap: usize, eigenvalues: Vec<f64> },
}

/// The bundles over `S²` appearing in the complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bundle {
    Functions,
    OneForms,
    /// Multiples `f μ` of the area form; stored as `f`.
    AreaForms,
    /// Trace-free symmetric tensors, stored as full `3 × 3` matrices.
    TracelessSymmetric,
}

impl Bundle {
    pub fn components(self) -> usize {
        match self {
            Bundle::Functions | Bundle::AreaForms => 1,
            Bundle::OneForms => 3,
            Bundle::TracelessSymmetric => 9,
        }
    }
}

// ---------------------------------------------------------------------------
// pointwise algebra on the sphere

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &V3, b: &V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Orthogonal projection of `v` onto the tangent plane at `x`.
pub fn tangential(x: &V3, v: &V3) -> V3 {
    let s = dot(x, v);
    [v[0] - s * x[0], v[1] - s * x[1], v[2] - s * x[2]]
}

/// The complex structure `j` of `T*S²`: rotation by a quarter turn, `x × η`.
pub fn rotate(x: &V3, eta: &V3) -> V3 {
    cross(x, eta)
}

fn projector(x: &V3) -> M3 {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 } - x[i] * x[j]))
}

fn traceless_part(x: &V3, s: &M3) -> M3 {
    let p = projector(x);
    let tr = (0..3).map(|i| s[i][i]).sum::<f64>();
    std::array::from_fn(|i| std::array::from_fn(|j| s[i][j] - 0.5 * tr * p[i][j]))
}

/// `a * b`: the trace-free part of the symmetric product `½(a ⊗ b + b ⊗ a)`
/// of two tangent covectors at `x`.
pub fn traceless_product(x: &V3, a: &V3, b: &V3) -> M3 {
    let (a, b) = (tangential(x, a), tangential(x, b));
    let s = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (a[i] * b[j] + b[i] * a[j])));
    traceless_part(x, &s)
}

/// Trace-free symmetric part of the covariant derivative of a tangent
/// field with ambient Jacobian `g[i][j] = ∂_j a_i`.
fn traceless_derivative(x: &V3, g: &M3) -> M3 {
    let p = projector(x);
    let mut pgp = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += p[i][k] * g[k][l] * p[l][j];
                }
            }
            pgp[i][j] = s;
        }
    }
    let sym = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (pgp[i][j] + pgp[j][i])));
    traceless_part(x, &sym)
}

/// Normal component of the curl: the area-form coefficient of `d a`.
fn surface_curl(x: &V3, g: &M3) -> f64 {
    let curl = [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]];
    dot(x, &curl)
}

// ---------------------------------------------------------------------------
// polynomial sections

fn tangential_gradient(y: &Poly3, degree: usize) -> Vec<Poly3> {
    // for homogeneous y of degree l, x·∇y = l y
    (0..3).map(|i| y.deriv(i) - (&Poly3::var(i) * y).scale(degree as f64)).collect()
}

fn rotated_gradient(y: &Poly3) -> Vec<Poly3> {
    let g: Vec<Poly3> = (0..3).map(|i| y.deriv(i)).collect();
    let x: Vec<Poly3> = (0..3).map(Poly3::var).collect();
    (0..3).map(|i| &x[(i + 1) % 3] * &g[(i + 2) % 3] - &x[(i + 2) % 3] * &g[(i + 1) % 3]).collect()
}

fn polynomial_traceless_derivative(a: &[Poly3]) -> Vec<Poly3> {
    let x: Vec<Poly3> = (0..3).map(Poly3::var).collect();
    let p: Vec<Vec<Poly3>> = (0..3)
        .map(|i| (0..3).map(|j| Poly3::constant(if i == j { 1.0 } else { 0.0 }) - &x[i] * &x[j]).collect())
        .collect();
    let g: Vec<Vec<Poly3>> = (0..3).map(|i| (0..3).map(|j| a[i].deriv(j)).collect()).collect();
    let mut gp = vec![vec![Poly3::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            gp[i][j] = (0..3).fold(Poly3::zero(), |s, l| s + &g[i][l] * &p[l][j]);
        }
    }
    let mut pgp = vec![vec![Poly3::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            pgp[i][j] = (0..3).fold(Poly3::zero(), |s, k| s + &p[i][k] * &gp[k][j]);
        }
    }
    let tr = (0..3).fold(Poly3::zero(), |s, i| s + pgp[i][i].clone());
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let sym = (pgp[i][j].clone() + pgp[j][i].clone()).scale(0.5);
            out.push(sym - (&tr * &p[i][j]).scale(0.5));
        }
    }
    out
}

/// An `L²(S²)`-orthonormal Galerkin space.
#[derive(Clone, Debug)]
pub struct SectionSpace {
    bundle: Bundle,
    level: usize,
    generators: Vec<Vec<Poly3>>,
    /// `generators · transform` is orthonormal.
    transform: DMatrix<f64>,
    /// Nodal values, `(node·components) × dim`.
    values: DMatrix<f64>,
    /// Nodal ambient Jacobians `∂_j a_i`, `(node·components·3) × dim`.
    jacobians: DMatrix<f64>,
}

impl SectionSpace {
    fn new(bundle: Bundle, level: usize, quad: &SphereQuadrature) -> Result<Self, SpectrumError> {
        let harmonics = solid_harmonics(level);
        let generators: Vec<Vec<Poly3>> = match bundle {
            Bundle::Functions | Bundle::AreaForms => harmonics.into_iter().map(|(_, _, y)| vec![y]).collect(),
            Bundle::OneForms => harmonics
                .iter()
                .filter(|(l, _, _)| *l >= 1)
                .flat_map(|(l, _, y)| [tangential_gradient(y, *l), rotated_gradient(y)])
                .collect(),
            Bundle::TracelessSymmetric => harmonics
                .iter()
                .filter(|(l, _, _)| *l >= 2)
                .flat_map(|(l, _, y)| [tangential_gradient(y, *l), rotated_gradient(y)])
                .map(|a| polynomial_traceless_derivative(&a))
                .collect(),
        };
        let nc = bundle.components();
        let degree = generators.iter().flatten().map(Poly3::degree).max().unwrap_or(0);
        let powers: Vec<Powers> = quad.nodes.iter().map(|x| Powers::new(x, degree)).collect();
        let ng = generators.len();
        let nq = quad.len();
        let mut gv = DMatrix::zeros(nq * nc, ng);
        let mut gj = DMatrix::zeros(nq * nc * 3, ng);
        for (g, gen) in generators.iter().enumerate() {
            for (c, poly) in gen.iter().enumerate() {
                let derivs: Vec<Poly3> = (0..3).map(|j| poly.deriv(j)).collect();
                for (q, pw) in powers.iter().enumerate() {
                    gv[(q * nc + c, g)] = poly.eval_powers(pw);
                    for (j, dp) in derivs.iter().enumerate() {
                        gj[((q * nc + c) * 3 + j, g)] = dp.eval_powers(pw);
                    }
                }
            }
        }
        let gram = weighted_gram(&gv, &gv, &quad.weights, nc);
        let chol = Cholesky::new(gram).ok_or(SpectrumError::DegenerateBasis(bundle, level))?;
        let l = chol.l();
        let transform = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(ng, ng))
            .ok_or(SpectrumError::DegenerateBasis(bundle, level))?;
        let values = &gv * &transform;
        let jacobians = &gj * &transform;
        Ok(SectionSpace { bundle, level, generators, transform, values, jacobians })
    }

    pub fn bundle(&self) -> Bundle {
        self.bundle
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Ambient polynomial components of basis element `i` (row-major for
    /// tensors).
    pub fn element(&self, i: usize) -> Vec<Poly3> {
        let nc = self.bundle.components();
        let mut out = vec![Poly3::zero(); nc];
        for (g, gen) in self.generators.iter().enumerate() {
            let t = self.transform[(g, i)];
            if t != 0.0 {
                for (o, p) in out.iter_mut().zip(gen) {
                    *o = std::mem::take(o) + p.scale(t);
                }
            }
        }
        out
    }

    /// Value at an arbitrary point of the section with coefficients `coeffs`.
    pub fn eval(&self, coeffs: &DVector<Complex64>, x: &V3) -> Vec<Complex64> {
        let nc = self.bundle.components();
        let degree = self.generators.iter().flatten().map(Poly3::degree).max().unwrap_or(0);
        let pw = Powers::new(x, degree);
        let gen_vals: Vec<Vec<f64>> =
            self.generators.iter().map(|g| g.iter().map(|p| p.eval_powers(&pw)).collect()).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); nc];
        for (i, c) in coeffs.iter().enumerate() {
            for (g, vals) in gen_vals.iter().enumerate() {
                let t = self.transform[(g, i)];
                if t != 0.0 {
                    for (o, v) in out.iter_mut().zip(vals) {
                        *o += c * t * v;
                    }
                }
            }
        }
        out
    }

    fn value(&self, q: usize, i: usize) -> V3 {
        let nc = self.bundle.components();
        std::array::from_fn(|c| if c < nc { self.values[(q * nc + c, i)] } else { 0.0 })
    }

    fn jacobian(&self, q: usize, i: usize) -> M3 {
        let nc = self.bundle.components();
        std::array::from_fn(|c| {
            std::array::from_fn(|j| if c < nc { self.jacobians[((q * nc + c) * 3 + j, i)] } else { 0.0 })
        })
    }
}

/// `Aᵀ W B` for nodal value matrices with `nc` components per node.
fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &[f64], nc: usize) -> DMatrix<f64> {
    let mut wb = b.clone();
    for (r, mut row) in wb.row_iter_mut().enumerate() {
        row *= weights[r / nc];
    }
    a.transpose() * wb
}

// ---------------------------------------------------------------------------
// Galerkin basis and mode operators

/// Galerkin spaces for the complex at target level `degree` and trial
/// level `degree + trial_offset`.
#[derive(Clone, Debug)]
pub struct GalerkinBasis {
    pub degree: usize,
    pub trial_offset: usize,
    pub quadrature: SphereQuadrature,
    /// `Ω⁰` at the target level.
    pub functions: SectionSpace,
    /// `Ω¹_X` and `Ω¹_Y` (the same space) at the trial level.
    pub one_forms: SectionSpace,
    /// `Ω²` at the target level.
    pub area_forms: SectionSpace,
    /// `Γ(s²₀)` at the target level.
    pub traceless: SectionSpace,
    blocks: ModeIndependent,
}

/// Galerkin matrices of the ξ-independent operators and of the ξ-linear ones
/// per unit direction (without the factor `i`).
#[derive(Clone, Debug)]
struct ModeIndependent {
    d_functions: DMatrix<f64>,
    d_one_forms: DMatrix<f64>,
    derivative: DMatrix<f64>,
    a: [DMatrix<f64>; 3],
    b: [DMatrix<f64>; 3],
    c: [DMatrix<f64>; 3],
}

impl GalerkinBasis {
    pub fn new(degree: usize, trial_offset: usize) -> Result<Self, SpectrumError> {
        if !(2..=12).contains(&degree) {
            return Err(SpectrumError::InvalidDegree(degree));
        }
        if trial_offset > 3 {
            return Err(SpectrumError::InvalidOffset(trial_offset));
        }
        let trial = degree + trial_offset;
        // target tensors have ambient degree ≤ L + 4, D of trial fields ≤ L' + 5
        let quadrature = SphereQuadrature::exact_to(degree + trial + 10);
        let functions = SectionSpace::new(Bundle::Functions, degree, &quadrature)?;
        let one_forms = SectionSpace::new(Bundle::OneForms, trial, &quadrature)?;
        let area_forms = SectionSpace::new(Bundle::AreaForms, degree, &quadrature)?;
        let traceless = SectionSpace::new(Bundle::TracelessSymmetric, degree, &quadrature)?;
        let blocks = ModeIndependent::new(&quadrature, &functions, &one_forms, &area_forms, &traceless);
        Ok(GalerkinBasis { degree, trial_offset, quadrature, functions, one_forms, area_forms, traceless, blocks })
    }

    /// Dimension of the target `Ω² ⊕ Γ(s²₀)`.
    pub fn target_dim(&self) -> usize {
        self.area_forms.dim() + self.traceless.dim()
    }

    /// Dimension of the trial space `Ω¹_X ⊕ Ω¹_Y`.
    pub fn trial_dim(&self) -> usize {
        2 * self.one_forms.dim()
    }

    /// Unit target vector of the constant multiple of the area form.
    pub fn area_form_mode(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(self.target_dim());
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Galerkin matrix of a pointwise operator from `from` to `to`.
    pub fn galerkin(
        &self,
        from: &SectionSpace,
        to: &SectionSpace,
        op: impl Fn(&V3, &V3, &M3) -> Vec<f64> + Sync,
    ) -> DMatrix<f64> {
        galerkin(&self.quadrature, from, to, op)
    }
}

fn galerkin(
    quad: &SphereQuadrature,
    from: &SectionSpace,
    to: &SectionSpace,
    op: impl Fn(&V3, &V3, &M3) -> Vec<f64> + Sync,
) -> DMatrix<f64> {
    let nc = to.bundle.components();
    let mut images = DMatrix::zeros(quad.len() * nc, from.dim());
    for j in 0..from.dim() {
        for (q, x) in quad.nodes.iter().enumerate() {
            let out = op(x, &from.value(q, j), &from.jacobian(q, j));
            for (c, v) in out.into_iter().enumerate() {
                images[(q * nc + c, j)] = v;
            }
        }
    }
    weighted_gram(&to.values, &images, &quad.weights, nc)
}

fn flat(m: M3) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

impl ModeIndependent {
    fn new(
        quad: &SphereQuadrature,
        functions: &SectionSpace,
        one_forms: &SectionSpace,
        area_forms: &SectionSpace,
        traceless: &SectionSpace,
    ) -> Self {
        let d_functions = galerkin(quad, functions, one_forms, |x, _, g| {
            tangential(x, &[g[0][0], g[0][1], g[0][2]]).to_vec()
        });
        let d_one_forms = galerkin(quad, one_forms, area_forms, |x, _, g| vec![surface_curl(x, g)]);
        let derivative = galerkin(quad, one_forms, traceless, |x, _, g| flat(traceless_derivative(x, g)));
        let unit = |k: usize| -> V3 { std::array::from_fn(|i| if i == k { 1.0 } else { 0.0 }) };
        let a = std::array::from_fn(|k| {
            galerkin(quad, functions, one_forms, |x, v, _| {
                tangential(x, &unit(k)).iter().map(|e| e * v[0]).collect()
            })
        });
        let b = std::array::from_fn(|k| {
            galerkin(quad, one_forms, traceless, |x, v, _| {
                flat(traceless_product(x, &unit(k), v)).into_iter().map(|e| -e).collect()
            })
        });
        let c = std::array::from_fn(|k| galerkin(quad, one_forms, area_forms, |x, v, _| vec![dot(x, &cross(&unit(k), v))]));
        ModeIndependent { d_functions, d_one_forms, derivative, a, b, c }
    }
}

fn complexify(m: &DMatrix<f64>, s: Complex64) -> DMatrix<Complex64> {
    m.map(|v| s * v)
}

/// The per-mode complex `Ω⁰ → Ω¹_X ⊕ Ω¹_Y → Ω² ⊕ Γ(s²₀)` at `ξ = 2πi m`.
#[derive(Clone, Debug)]
pub struct ModeOperator {
    pub m: [i32; 3],
    /// `d: Ω⁰ → Ω¹_X`.
    pub d_functions: DMatrix<Complex64>,
    /// `A: Ω⁰ → Ω¹_Y`.
    pub a: DMatrix<Complex64>,
    /// `d: Ω¹_X → Ω²`.
    pub d_one_forms: DMatrix<Complex64>,
    /// `B: Ω¹_X → Γ(s²₀)`.
    pub b: DMatrix<Complex64>,
    /// `C: Ω¹_Y → Ω²`.
    pub c: DMatrix<Complex64>,
    /// `D: Ω¹_Y → Γ(s²₀)`.
    pub derivative: DMatrix<Complex64>,
    /// `𝒟_ξ = [[d, C], [B, D]]`.
    pub operator: DMatrix<Complex64>,
    /// `Δ_ξ = 𝒟_ξ 𝒟_ξ*` on `Ω² ⊕ Γ(s²₀)`.
    pub laplacian: DMatrix<Complex64>,
    n_area: usize,
}

pub fn assemble_mode(basis: &GalerkinBasis, m: [i32; 3]) -> ModeOperator {
    let blk = &basis.blocks;
    let combine = |mats: &[DMatrix<f64>; 3]| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
        for (k, mat) in mats.iter().enumerate() {
            if m[k] != 0 {
                out += mat * (TAU * m[k] as f64);
            }
        }
        out
    };
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let a = complexify(&combine(&blk.a), i);
    let b = complexify(&combine(&blk.b), i);
    let c = complexify(&combine(&blk.c), i);
    let d_functions = complexify(&blk.d_functions, one);
    let d_one_forms = complexify(&blk.d_one_forms, one);
    let derivative = complexify(&blk.derivative, one);
    let (n2, ns, n1) = (basis.area_forms.dim(), basis.traceless.dim(), basis.one_forms.dim());
    let mut operator = DMatrix::zeros(n2 + ns, 2 * n1);
    operator.view_mut((0, 0), (n2, n1)).copy_from(&d_one_forms);
    operator.view_mut((0, n1), (n2, n1)).copy_from(&c);
    operator.view_mut((n2, 0), (ns, n1)).copy_from(&b);
    operator.view_mut((n2, n1), (ns, n1)).copy_from(&derivative);
    let laplacian = &operator * operator.adjoint();
    ModeOperator { m, d_functions, a, d_one_forms, b, c, derivative, operator, laplacian, n_area: n2 }
}

impl ModeOperator {
    /// The block `Γ(s²₀) ← Ω²` of `Δ_ξ`, i.e. `B d* + D C*`.
    pub fn off_diagonal(&self) -> DMatrix<Complex64> {
        let n = self.laplacian.nrows();
        self.laplacian.view((self.n_area, 0), (n - self.n_area, self.n_area)).into_owned()
    }

    /// `‖Δ − Δ*‖ / ‖Δ‖` in the Frobenius norm.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.laplacian - self.laplacian.adjoint()).norm() / self.laplacian.norm().max(f64::MIN_POSITIVE)
    }

    /// The first map of the complex, `f ↦ (d f, A f)`.
    pub fn first_map(&self) -> DMatrix<Complex64> {
        let (n1, n0) = self.d_functions.shape();
        let mut out = DMatrix::zeros(2 * n1, n0);
        out.view_mut((0, 0), (n1, n0)).copy_from(&self.d_functions);
        out.view_mut((n1, 0), (n1, n0)).copy_from(&self.a);
        out
    }
}

/// Spectral norm of the off-diagonal block relative to `‖Δ_ξ‖`.
pub fn diagonality_residual(op: &ModeOperator) -> f64 {
    let off = op.off_diagonal();
    if off.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return 0.0;
    }
    let top = op.laplacian.clone().singular_values().max();
    if top == 0.0 {
        return 0.0;
    }
    off.singular_values().max() / top
}

/// Thresholds for counting the kernel of a positive semidefinite operator,
/// both relative to its largest eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPolicy {
    /// Eigenvalues at most `absolute · λ_max` count as zero.
    pub absolute: f64,
    /// Required `(λ_k − λ_{k−1}) / λ_max` after the last zero eigenvalue.
    pub gap: f64,
}

impl Default for KernelPolicy {
    fn default() -> Self {
        KernelPolicy { absolute: 1e-9, gap: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct KernelReport {
    /// Complex dimension.
    pub dim: usize,
    /// Eigenvalues of `Δ_ξ` in ascending order, one per complex dimension.
    pub eigenvalues: Vec<f64>,
    pub relative_gap: f64,
    /// Orthonormal basis of the realified kernel, `(Re, Im)` stacked.
    pub kernel_basis: Vec<DVector<f64>>,
}

impl KernelReport {
    /// Norm of the orthogonal projection of the unit vector along `v` onto
    /// the kernel.
    pub fn overlap(&self, v: &DVector<Complex64>) -> f64 {
        let n = v.len();
        let norm = v.norm();
        let real = DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im } / norm);
        self.kernel_basis.iter().fold(0.0, |s, k| s + k.dot(&real).powi(2)).sqrt()
    }
}

/// `[[Re, −Im], [Im, Re]]`.
fn realify(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Kernel dimension of `Δ_ξ` from the realified symmetric eigenproblem.
pub fn kernel_dim(op: &ModeOperator, policy: &KernelPolicy) -> Result<KernelReport, SpectrumError> {
    kernel_of(&op.laplacian, op.m, policy)
}

fn kernel_of(h: &DMatrix<Complex64>, m: [i32; 3], policy: &KernelPolicy) -> Result<KernelReport, SpectrumError> {
    let eig = SymmetricEigen::new(realify(h));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let real: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // realification doubles every eigenvalue
    let eigenvalues: Vec<f64> = real.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let n = eigenvalues.len();
    let top = eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let dim = eigenvalues.iter().take_while(|&&l| l <= policy.absolute * top).count();
    let below = if dim == 0 { 0.0 } else { eigenvalues[dim - 1].max(0.0) };
    let relative_gap = if dim == n { 1.0 } else { (eigenvalues[dim] - below) / top };
    if relative_gap < policy.gap {
        let floor = f64::EPSILON * top;
        let at_largest_gap = (0..n.saturating_sub(1) / 2 + 1)
            .max_by(|&a, &b| {
                let ra = eigenvalues[a + 1].max(floor) / eigenvalues[a].max(floor);
                let rb = eigenvalues[b + 1].max(floor) / eigenvalues[b].max(floor);
                ra.total_cmp(&rb)
            })
            .map(|i| i + 1)
            .unwrap_or(0);
        return Err(SpectrumError::GapNotResolved {
            m,
            below_tolerance: dim,
            at_largest_gap,
            eigenvalues: eigenvalues.iter().take(10).copied().collect(),
        });
    }
    let kernel_basis = order[..2 * dim].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    Ok(KernelReport { dim, eigenvalues, relative_gap, kernel_basis })
}

/// One row of a mode sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub m: [i32; 3],
    /// The ten smallest eigenvalues of `Δ_ξ`.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub relative_gap: f64,
    pub diagonality_residual: f64,
}

/// All modes with `|m|_∞ ≤ mmax`, in lexicographic order.
pub fn modes_up_to(mmax: i32) -> Vec<[i32; 3]> {
    let r = -mmax..=mmax;
    let mut out = Vec::new();
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                out.push([a, b, c]);
            }
        }
    }
    out
}

pub fn analyze_mode(basis: &GalerkinBasis, m: [i32; 3], policy: &KernelPolicy) -> Result<ModeReport, SpectrumError> {
    let op = assemble_mode(basis, m);
    let k = kernel_dim(&op, policy)?;
    Ok(ModeReport {
        m,
        eigenvalues: k.eigenvalues.iter().take(10).copied().collect(),
        kernel_dim: k.dim,
        relative_gap: k.relative_gap,
        diagonality_residual: diagonality_residual(&op),
    })
}

/// Sweep of every mode with `|m|_∞ ≤ mmax`; modes run in parallel on the
/// current rayon pool and the result keeps the sweep order.
pub fn spectrum(basis: &GalerkinBasis, mmax: i32, policy: &KernelPolicy) -> Result<Vec<ModeReport>, SpectrumError> {
    modes_up_to(mmax).into_par_iter().map(|m| analyze_mode(basis, m, policy)).collect()
}

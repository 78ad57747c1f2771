//! Exterior algebra over a fixed six-dimensional space.
//!
//! Coordinates are ordered `(x1, x2, x3, y1, y2, y3)` and indexed `0..6`
//! internally; the JSON literal uses 1-based indices. A basis monomial
//! `e^{i1} ∧ ... ∧ e^{ik}` with `i1 < ... < ik` is stored as a bitmask and
//! coefficients are kept densely in lexicographic order of the index tuples.

mod poly;
mod restrict;

pub use poly::{poly_d, Poly, PolyForm};
pub use restrict::{restrict_poly, restrict_tangential, sphere_tangent_frame, SpherePoint};

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use arrayvec::ArrayVec;
use nalgebra::Matrix6;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use once_cell::sync::Lazy;
use serde_json::{Map, Value};
use thiserror::Error;

pub const DIM: usize = 6;
/// Largest number of coefficients of any grade (`binomial(6, 3)`).
pub const MAX_COMPONENTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExteriorError {
    #[error("grade overflow: {0} + {1} > 6")]
    GradeOverflow(usize, usize),
    #[error("grade {0} out of range")]
    BadGrade(usize),
    #[error("point is not on the unit sphere (|x|^2 = {0})")]
    NotOnSphere(f64),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid form literal: {0}")]
    Literal(String),
}

/// Coefficient ring for forms.
pub trait Scalar:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn from_i64(v: i64) -> Self;
    /// Zero up to the natural tolerance of the ring (exact for rationals).
    fn is_negligible(&self) -> bool;
    /// Rough size, only used for pivot-like choices.
    fn magnitude(&self) -> f64;
}

/// Scalars that also support division.
pub trait FieldScalar: Scalar + Div<Output = Self> {}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-12
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}
impl FieldScalar for f64 {}

impl Scalar for Complex64 {
    fn from_i64(v: i64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
    fn is_negligible(&self) -> bool {
        self.norm() < 1e-12
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}
impl FieldScalar for Complex64 {}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
}
impl FieldScalar for BigRational {}

/// Lookup tables for the basis of each grade.
struct Basis {
    masks: Vec<Vec<u8>>,
    position: [usize; 64],
}

static BASIS: Lazy<Basis> = Lazy::new(|| {
    use itertools::Itertools;
    let mut masks = vec![Vec::new(); DIM + 1];
    let mut position = [0usize; 64];
    for (k, slot) in masks.iter_mut().enumerate() {
        for combo in (0..DIM).combinations(k) {
            let m = combo.iter().fold(0u8, |acc, &i| acc | (1 << i));
            position[m as usize] = slot.len();
            slot.push(m);
        }
    }
    Basis { masks, position }
});

/// Number of basis monomials of grade `k`.
pub fn n_components(k: usize) -> usize {
    BASIS.masks[k].len()
}

/// Bitmask of the `i`-th basis monomial of grade `k`.
pub fn basis_mask(k: usize, i: usize) -> u8 {
    BASIS.masks[k][i]
}

/// Position of a bitmask within its grade.
pub fn mask_position(mask: u8) -> usize {
    BASIS.position[mask as usize]
}

/// The increasing 0-based index tuple of a bitmask.
pub fn mask_indices(mask: u8) -> Vec<usize> {
    (0..DIM).filter(|i| mask & (1 << i) != 0).collect()
}

pub fn indices_mask(idx: &[usize]) -> u8 {
    idx.iter().fold(0u8, |acc, &i| acc | (1 << i))
}

/// Sign of `e^A ∧ e^B` relative to `e^{A∪B}` for disjoint masks.
pub fn wedge_sign(a: u8, b: u8) -> i64 {
    debug_assert_eq!(a & b, 0);
    let mut swaps = 0u32;
    for j in 0..DIM {
        if b & (1 << j) != 0 {
            swaps += (a >> (j + 1)).count_ones();
        }
    }
    if swaps % 2 == 0 {
        1
    } else {
        -1
    }
}

pub const FULL_MASK: u8 = 0b11_1111;

/// A homogeneous form of fixed grade with dense coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct KVector<T> {
    grade: usize,
    coeffs: ArrayVec<T, MAX_COMPONENTS>,
}

pub type Mat6<T> = [[T; DIM]; DIM];

impl<T: Scalar> KVector<T> {
    pub fn zero(grade: usize) -> Self {
        assert!(grade <= DIM, "grade {grade} out of range");
        let coeffs = (0..n_components(grade)).map(|_| T::zero()).collect();
        KVector { grade, coeffs }
    }

    pub fn scalar(v: T) -> Self {
        let mut out = Self::zero(0);
        out.coeffs[0] = v;
        out
    }

    /// `e^{i1} ∧ ... ∧ e^{ik}` for 0-based increasing indices.
    pub fn basis(idx: &[usize]) -> Self {
        let mut out = Self::zero(idx.len());
        out.set(idx, T::one());
        out
    }

    pub fn from_coeffs(grade: usize, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), n_components(grade));
        KVector { grade, coeffs: coeffs.into_iter().collect() }
    }

    /// Builds a form from `(indices, value)` pairs; indices may be in any order.
    pub fn from_terms(grade: usize, terms: &[(&[usize], T)]) -> Self {
        let mut out = Self::zero(grade);
        for (idx, v) in terms {
            out.add_term(idx, v.clone());
        }
        out
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn get_mask(&self, mask: u8) -> &T {
        &self.coeffs[mask_position(mask)]
    }

    /// Coefficient on the increasing tuple `idx`.
    pub fn get(&self, idx: &[usize]) -> &T {
        self.get_mask(indices_mask(idx))
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let m = indices_mask(idx);
        let p = mask_position(m);
        self.coeffs[p] = v;
    }

    /// Adds `v · e^{idx}` where `idx` is an arbitrary ordering of distinct indices.
    pub fn add_term(&mut self, idx: &[usize], v: T) {
        assert_eq!(idx.len(), self.grade);
        let mut sorted = idx.to_vec();
        let mut sign = 1i64;
        for i in 0..sorted.len() {
            for j in 0..sorted.len() - 1 - i {
                if sorted[j] > sorted[j + 1] {
                    sorted.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return;
        }
        let p = mask_position(indices_mask(&sorted));
        let term = if sign > 0 { v } else { -v };
        self.coeffs[p] = self.coeffs[p].clone() + term;
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &T)> {
        let g = self.grade;
        self.coeffs.iter().enumerate().map(move |(i, c)| (basis_mask(g, i), c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_negligible(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_negligible())
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|c| s.clone() * c.clone())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> KVector<U> {
        KVector { grade: self.grade, coeffs: self.coeffs.iter().map(f).collect() }
    }

    /// Exterior product; panics on grade overflow (see [`KVector::try_wedge`]).
    pub fn wedge(&self, other: &Self) -> Self {
        self.try_wedge(other).expect("wedge grade overflow")
    }

    pub fn try_wedge(&self, other: &Self) -> Result<Self, ExteriorError> {
        let k = self.grade + other.grade;
        if k > DIM {
            return Err(ExteriorError::GradeOverflow(self.grade, other.grade));
        }
        let mut out = Self::zero(k);
        for (ma, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            for (mb, b) in other.iter() {
                if ma & mb != 0 || b.is_zero() {
                    continue;
                }
                let p = mask_position(ma | mb);
                let term = a.clone() * b.clone();
                out.coeffs[p] = if wedge_sign(ma, mb) > 0 {
                    out.coeffs[p].clone() + term
                } else {
                    out.coeffs[p].clone() - term
                };
            }
        }
        Ok(out)
    }

    /// Interior product `ι_v a`. A grade-0 input gives the zero 0-form.
    pub fn interior(&self, v: &[T; DIM]) -> Self {
        if self.grade == 0 {
            return Self::zero(0);
        }
        let mut out = Self::zero(self.grade - 1);
        for (m, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            // ι_{e_i} e^I = (-1)^{position of i in I} e^{I \ i}
            let mut pos = 0;
            for i in 0..DIM {
                if m & (1 << i) == 0 {
                    continue;
                }
                if !v[i].is_zero() {
                    let p = mask_position(m & !(1 << i));
                    let term = v[i].clone() * a.clone();
                    out.coeffs[p] = if pos % 2 == 0 {
                        out.coeffs[p].clone() + term
                    } else {
                        out.coeffs[p].clone() - term
                    };
                }
                pos += 1;
            }
        }
        out
    }

    /// Applies the algebra map induced by a linear map on covectors.
    ///
    /// Column `i` of `m` is the image of `e^i`, i.e. `e^i ↦ Σ_j m[j][i] e^j`.
    /// The pullback by `g` (acting on vectors) is `transform(gᵀ)`; restriction
    /// to a frame `f_0..f_{r-1}` is `transform` with `m[a][i] = f_a[i]` and zero
    /// rows beyond `r`.
    pub fn transform(&self, m: &Mat6<T>) -> Self {
        let k = self.grade;
        let mut out = Self::zero(k);
        for (mi, a) in self.iter() {
            if a.is_zero() {
                continue;
            }
            let cols = mask_indices(mi);
            for j in 0..n_components(k) {
                let rows = mask_indices(basis_mask(k, j));
                let d = minor(m, &rows, &cols);
                if !d.is_zero() {
                    out.coeffs[j] = out.coeffs[j].clone() + d * a.clone();
                }
            }
        }
        out
    }

    /// Coefficient of `e^{012345}` of a top form.
    pub fn top(&self) -> T {
        assert_eq!(self.grade, DIM);
        self.coeffs[0].clone()
    }
}

impl<T: Scalar> Add for KVector<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.grade, rhs.grade, "grade mismatch in sum");
        let coeffs = self.coeffs.into_iter().zip(rhs.coeffs).map(|(a, b)| a + b).collect();
        KVector { grade: self.grade, coeffs }
    }
}

impl<T: Scalar> Sub for KVector<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        assert_eq!(self.grade, rhs.grade, "grade mismatch in difference");
        let coeffs = self.coeffs.into_iter().zip(rhs.coeffs).map(|(a, b)| a - b).collect();
        KVector { grade: self.grade, coeffs }
    }
}

impl<T: Scalar> Neg for KVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|c| -c.clone())
    }
}

impl KVector<f64> {
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(other.coeffs.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn to_complex(&self) -> KVector<Complex64> {
        self.map(|&c| Complex64::new(c, 0.0))
    }

    pub fn to_rational(&self) -> KVector<BigRational> {
        self.map(|&c| BigRational::from_float(c).expect("finite coefficient"))
    }
}

impl KVector<Complex64> {
    pub fn re(&self) -> KVector<f64> {
        self.map(|c| c.re)
    }

    pub fn im(&self) -> KVector<f64> {
        self.map(|c| c.im)
    }

    pub fn conj(&self) -> Self {
        self.map(|c| c.conj())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl KVector<BigRational> {
    pub fn to_f64(&self) -> KVector<f64> {
        self.map(|c| c.to_f64().unwrap_or(f64::NAN))
    }
}

/// Determinant of the submatrix `m[rows, cols]` by cofactor expansion.
pub fn minor<T: Scalar>(m: &Mat6<T>, rows: &[usize], cols: &[usize]) -> T {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => T::one(),
        1 => m[rows[0]][cols[0]].clone(),
        2 => {
            m[rows[0]][cols[0]].clone() * m[rows[1]][cols[1]].clone()
                - m[rows[0]][cols[1]].clone() * m[rows[1]][cols[0]].clone()
        }
        n => {
            let mut acc = T::zero();
            let sub_rows = &rows[1..];
            let mut sub_cols = Vec::with_capacity(n - 1);
            for (c, &col) in cols.iter().enumerate() {
                let entry = &m[rows[0]][col];
                if entry.is_zero() {
                    continue;
                }
                sub_cols.clear();
                sub_cols.extend(cols.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, &v)| v));
                let term = entry.clone() * minor(m, sub_rows, &sub_cols);
                acc = if c % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

pub fn mat6_from_fn<T>(f: impl Fn(usize, usize) -> T) -> Mat6<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| f(i, j)))
}

pub fn mat6_transpose<T: Clone>(m: &Mat6<T>) -> Mat6<T> {
    mat6_from_fn(|i, j| m[j][i].clone())
}

/// Unit vector `∂_i` (or `e_i`).
pub fn unit_vector<T: Scalar>(i: usize) -> [T; DIM] {
    std::array::from_fn(|j| if i == j { T::one() } else { T::zero() })
}

/// Matrix of the grade-`k` extension of the covector map `m`: entry
/// `[J][I] = det m[J, I]`, acting on coefficient vectors.
pub fn induced_matrix<T: Scalar>(m: &Mat6<T>, k: usize) -> Vec<Vec<T>> {
    let n = n_components(k);
    (0..n)
        .map(|j| {
            let rows = mask_indices(basis_mask(k, j));
            (0..n).map(|i| minor(m, &rows, &mask_indices(basis_mask(k, i)))).collect()
        })
        .collect()
}

/// Riemannian metric with an orientation, for the Hodge star.
#[derive(Clone, Debug)]
pub struct Metric6 {
    g: Matrix6<f64>,
    g_inv: Matrix6<f64>,
    /// Coefficient of the reference orientation form on `e^{012345}`.
    eps: f64,
}

impl Metric6 {
    pub fn new(g: Matrix6<f64>, eps: f64) -> Result<Self, ExteriorError> {
        if eps == 0.0 || !eps.is_finite() {
            return Err(ExteriorError::InvalidMetric("orientation form is zero".into()));
        }
        let asym = (g - g.transpose()).abs().max();
        if asym > 1e-12 * g.abs().max().max(1.0) {
            return Err(ExteriorError::InvalidMetric("matrix is not symmetric".into()));
        }
        let eig = g.symmetric_eigenvalues();
        if eig.iter().any(|&l| l <= 0.0) {
            return Err(ExteriorError::InvalidMetric("matrix is not positive definite".into()));
        }
        let g_inv = g.try_inverse().ok_or_else(|| ExteriorError::InvalidMetric("singular".into()))?;
        Ok(Metric6 { g, g_inv, eps })
    }

    pub fn euclidean() -> Self {
        Self::new(Matrix6::identity(), 1.0).expect("identity metric")
    }

    pub fn g(&self) -> &Matrix6<f64> {
        &self.g
    }

    /// Induced inner product of two forms of the same grade.
    pub fn inner(&self, a: &KVector<f64>, b: &KVector<f64>) -> f64 {
        assert_eq!(a.grade(), b.grade());
        let raised = self.raise(a);
        raised.dot(b)
    }

    fn raise(&self, a: &KVector<f64>) -> KVector<f64> {
        let ginv: Mat6<f64> = mat6_from_fn(|i, j| self.g_inv[(i, j)]);
        // g^{-1} is symmetric, so the induced matrix is the Gram matrix of ⟨e^K, e^I⟩.
        a.transform(&ginv)
    }

    /// Riemannian volume form.
    pub fn volume(&self) -> KVector<f64> {
        KVector::scalar(self.g.determinant().sqrt() * self.eps.signum()).wedge(&KVector::basis(&[0, 1, 2, 3, 4, 5]))
    }

    /// Hodge star, characterised by `a ∧ *b = ⟨a, b⟩ vol`.
    pub fn hodge_star(&self, a: &KVector<f64>) -> KVector<f64> {
        let k = a.grade();
        let raised = self.raise(a);
        let scale = self.g.determinant().sqrt() * self.eps.signum();
        let mut out = KVector::zero(DIM - k);
        for (m, c) in raised.iter() {
            if *c == 0.0 {
                continue;
            }
            let comp = FULL_MASK & !m;
            let p = mask_position(comp);
            out.coeffs_mut()[p] += scale * wedge_sign(m, comp) as f64 * c;
        }
        out
    }
}

fn parse_scalar(v: &Value) -> Result<BigRational, ExteriorError> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                return Ok(BigRational::from_i64(i));
            }
            let f = n.as_f64().ok_or_else(|| ExteriorError::Literal(format!("bad number {n}")))?;
            BigRational::from_float(f).ok_or_else(|| ExteriorError::Literal(format!("non-finite {f}")))
        }
        Value::String(s) => {
            let s = s.trim();
            let (num, den) = match s.split_once('/') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (s, "1"),
            };
            let num: BigInt = num.parse().map_err(|_| ExteriorError::Literal(format!("bad rational {s:?}")))?;
            let den: BigInt = den.parse().map_err(|_| ExteriorError::Literal(format!("bad rational {s:?}")))?;
            if den.is_zero() {
                return Err(ExteriorError::Literal(format!("zero denominator in {s:?}")));
            }
            Ok(BigRational::new(num, den))
        }
        other => Err(ExteriorError::Literal(format!("coefficient must be a number or \"p/q\", got {other}"))),
    }
}

/// Parses the JSON form literal `{"grade": k, "coeffs": {"1 2 3": 1, "4 5 6": "1/2"}}`.
pub fn form_from_literal(v: &Value) -> Result<KVector<BigRational>, ExteriorError> {
    let grade = v
        .get("grade")
        .and_then(Value::as_u64)
        .ok_or_else(|| ExteriorError::Literal("missing integer \"grade\"".into()))? as usize;
    if grade > DIM {
        return Err(ExteriorError::BadGrade(grade));
    }
    let coeffs = v
        .get("coeffs")
        .and_then(Value::as_object)
        .ok_or_else(|| ExteriorError::Literal("missing object \"coeffs\"".into()))?;
    let mut out = KVector::zero(grade);
    for (key, val) in coeffs {
        let idx: Vec<usize> = key
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| ExteriorError::Literal(format!("bad index key {key:?}")))?;
        if idx.len() != grade
            || idx.iter().any(|&i| !(1..=DIM).contains(&i))
            || idx.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ExteriorError::Literal(format!(
                "key {key:?} must list {grade} increasing indices in 1..6"
            )));
        }
        let zero_based: Vec<usize> = idx.iter().map(|i| i - 1).collect();
        out.set(&zero_based, parse_scalar(val)?);
    }
    Ok(out)
}

/// Writes the nonzero coefficients as a JSON form literal with float values.
pub fn form_to_literal(a: &KVector<f64>) -> Value {
    let mut coeffs = Map::new();
    for (m, c) in a.iter() {
        if *c != 0.0 {
            let key = mask_indices(m).iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ");
            coeffs.insert(key, Value::from(*c));
        }
    }
    serde_json::json!({ "grade": a.grade(), "coeffs": coeffs })
}

impl serde::Serialize for KVector<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        form_to_literal(self).serialize(s)
    }
}

/// Sparse view keyed by 1-based index tuples, for reports.
pub fn form_terms(a: &KVector<f64>) -> BTreeMap<String, f64> {
    a.iter()
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| (mask_indices(m).iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "), *c))
        .collect()
}

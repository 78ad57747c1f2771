//! Sparse multivariate polynomials with exact rational coefficients, and
//! forms with polynomial coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{basis_mask, mask_position, n_components, wedge_sign, KVector, Scalar, DIM};

/// Exponent vector over `(x1, x2, x3, y1, y2, y3)`.
pub type Monomial = [u8; DIM];

#[derive(Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

/// A form whose coefficients are polynomials in the six coordinates.
pub type PolyForm = KVector<Poly>;

impl Poly {
    pub fn constant(c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert([0; DIM], c);
        }
        Poly { terms }
    }

    pub fn from_int(c: i64) -> Self {
        Self::constant(BigRational::from_integer(BigInt::from(c)))
    }

    /// The coordinate function with index `i` (0-based).
    pub fn var(i: usize) -> Self {
        let mut e = [0; DIM];
        e[i] = 1;
        Self::monomial(e, BigRational::one())
    }

    pub fn monomial(e: Monomial, c: BigRational) -> Self {
        let mut p = Poly::default();
        p.add_monomial(e, c);
        p
    }

    fn add_monomial(&mut self, e: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().map(|&d| d as usize).sum()).max().unwrap_or(0)
    }

    /// Partial derivative with respect to coordinate `i`.
    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Poly::default();
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = *e;
            e2[i] -= 1;
            out.add_monomial(e2, c * BigRational::from_integer(BigInt::from(e[i])));
        }
        out
    }

    pub fn eval(&self, p: &[BigRational; DIM]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &d) in e.iter().enumerate() {
                for _ in 0..d {
                    t *= &p[i];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, p: &[f64; DIM]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mono: f64 = e.iter().enumerate().map(|(i, &d)| p[i].powi(d as i32)).product();
                c.to_f64().unwrap_or(f64::NAN) * mono
            })
            .sum()
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        const NAMES: [&str; DIM] = ["x1", "x2", "x3", "y1", "y2", "y3"];
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mono: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d > 0)
                    .map(|(i, &d)| if d == 1 { NAMES[i].to_string() } else { format!("{}^{}", NAMES[i], d) })
                    .collect();
                if mono.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c}*{}", mono.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (e, c) in rhs.terms {
            self.add_monomial(e, c);
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { terms: self.terms.into_iter().map(|(e, c)| (e, -c)).collect() }
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut out = Poly::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Monomial = std::array::from_fn(|i| ea[i] + eb[i]);
                out.add_monomial(e, ca * cb);
            }
        }
        out
    }
}

impl Zero for Poly {
    fn zero() -> Self {
        Poly::default()
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for Poly {
    fn one() -> Self {
        Poly::from_int(1)
    }
}

impl Scalar for Poly {
    fn from_i64(v: i64) -> Self {
        Poly::from_int(v)
    }
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().unwrap_or(f64::INFINITY).abs()).fold(0.0, f64::max)
    }
}

/// Exact exterior derivative `d(Σ f_I e^I) = Σ_I Σ_i ∂_i f_I e^i ∧ e^I`.
pub fn poly_d(a: &PolyForm) -> PolyForm {
    let k = a.grade();
    assert!(k < DIM, "d of a top-degree form is zero; grade {k} has no successor");
    let mut out = PolyForm::zero(k + 1);
    for j in 0..n_components(k) {
        let m = basis_mask(k, j);
        let f = &a.coeffs()[j];
        if f.is_zero() {
            continue;
        }
        for i in 0..DIM {
            if m & (1 << i) != 0 {
                continue;
            }
            let df = f.deriv(i);
            if df.is_zero() {
                continue;
            }
            let p = mask_position(m | (1 << i));
            let slot = &mut out.coeffs_mut()[p];
            let cur = std::mem::take(slot);
            *slot = if wedge_sign(1 << i, m) > 0 { cur + df } else { cur - df };
        }
    }
    out
}

impl PolyForm {
    pub fn eval(&self, p: &[BigRational; DIM]) -> KVector<BigRational> {
        self.map(|c| c.eval(p))
    }

    pub fn eval_f64(&self, p: &[f64; DIM]) -> KVector<f64> {
        self.map(|c| c.eval_f64(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_square_times_form() {
        let x1 = Poly::var(0);
        let a = PolyForm::from_terms(1, &[(&[1], x1.clone() * x1)]);
        let da = poly_d(&a);
        assert_eq!(*da.get(&[0, 1]), Poly::from_int(2) * Poly::var(0));
    }
}

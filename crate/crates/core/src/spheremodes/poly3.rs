//! Polynomials in the ambient coordinates `(x₁, x₂, x₃)` of the unit sphere.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Exponent = [u8; 3];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly3 {
    terms: BTreeMap<Exponent, f64>,
}

/// Powers of the coordinates of one point, for repeated evaluation.
pub struct Powers {
    table: [Vec<f64>; 3],
}

impl Powers {
    pub fn new(x: &[f64; 3], degree: usize) -> Self {
        let table = std::array::from_fn(|i| {
            let mut p = Vec::with_capacity(degree + 1);
            let mut v = 1.0;
            for _ in 0..=degree {
                p.push(v);
                v *= x[i];
            }
            p
        });
        Powers { table }
    }
}

impl Poly3 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term([0; 3], c);
        p
    }

    pub fn var(i: usize) -> Self {
        let mut e = [0; 3];
        e[i] = 1;
        let mut p = Self::zero();
        p.add_term(e, 1.0);
        p
    }

    /// `x·x`.
    pub fn radius_squared() -> Self {
        (0..3).map(|i| Self::var(i) * Self::var(i)).fold(Self::zero(), |a, b| a + b)
    }

    pub fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().map(|&k| k as usize).sum()).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c * s);
        }
        out
    }

    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                out.add_term(f, c * e[i] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        self.eval_powers(&Powers::new(x, self.degree()))
    }

    /// Evaluation from a power table of sufficient degree.
    pub fn eval_powers(&self, p: &Powers) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * p.table[0][e[0] as usize] * p.table[1][e[1] as usize] * p.table[2][e[2] as usize])
            .sum()
    }

    /// Canonical representative modulo `x·x = 1`, with every `x₃` exponent
    /// at most one. Two polynomials agree on the sphere iff their reductions
    /// agree.
    pub fn reduce_on_sphere(&self) -> Self {
        let mut out = Self::zero();
        let mut pending: Vec<(Exponent, f64)> = self.terms.iter().map(|(e, c)| (*e, *c)).collect();
        while let Some((e, c)) = pending.pop() {
            if e[2] < 2 {
                out.add_term(e, c);
                continue;
            }
            // z² = 1 − x² − y²
            let base = [e[0], e[1], e[2] - 2];
            pending.push((base, c));
            pending.push(([e[0] + 2, e[1], e[2] - 2], -c));
            pending.push(([e[0], e[1] + 2, e[2] - 2], -c));
        }
        out
    }
}

impl Add for Poly3 {
    type Output = Poly3;
    fn add(mut self, rhs: Poly3) -> Poly3 {
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl Sub for Poly3 {
    type Output = Poly3;
    fn sub(self, rhs: Poly3) -> Poly3 {
        self + (-rhs)
    }
}

impl Neg for Poly3 {
    type Output = Poly3;
    fn neg(self) -> Poly3 {
        self.scale(-1.0)
    }
}

impl Mul for Poly3 {
    type Output = Poly3;
    fn mul(self, rhs: Poly3) -> Poly3 {
        &self * &rhs
    }
}

impl Mul for &Poly3 {
    type Output = Poly3;
    fn mul(self, rhs: &Poly3) -> Poly3 {
        let mut out = Poly3::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term([a[0] + b[0], a[1] + b[1], a[2] + b[2]], ca * cb);
            }
        }
        out
    }
}

/// Real solid harmonics `r^l P_l^|m|(cos θ) {cos, sin}(|m| φ)` as homogeneous
/// harmonic polynomials, for `0 ≤ l ≤ lmax`, `−l ≤ m ≤ l` (negative `m` is
/// the sine family). Unnormalised.
pub fn solid_harmonics(lmax: usize) -> Vec<(usize, i32, Poly3)> {
    let (x, y, z) = (Poly3::var(0), Poly3::var(1), Poly3::var(2));
    let r2 = Poly3::radius_squared();
    let mut out = Vec::new();
    // (x + iy)^m split into real and imaginary parts
    let mut re = Poly3::constant(1.0);
    let mut im = Poly3::zero();
    let mut by_m: Vec<Vec<Poly3>> = Vec::new();
    for m in 0..=lmax {
        if m > 0 {
            let nre = &re * &x - &im * &y;
            let nim = &re * &y + &im * &x;
            re = nre;
            im = nim;
        }
        // Π_{l,m} in z and r², from (l−m+1) Π_{l+1} = (2l+1) z Π_l − (l+m) r² Π_{l−1}
        let mut pis = vec![Poly3::constant(double_factorial(2 * m as i64 - 1))];
        for l in m..lmax {
            let next = (&z * &pis[l - m]).scale((2 * l + 1) as f64);
            let next = if l > m { next - (&r2 * &pis[l - m - 1]).scale((l + m) as f64) } else { next };
            pis.push(next.scale(1.0 / (l - m + 1) as f64));
        }
        by_m.push(vec![re.clone(), im.clone()]);
        for (i, pi) in pis.iter().enumerate() {
            let l = m + i;
            out.push((l, m as i32, pi * &by_m[m][0]));
            if m > 0 {
                out.push((l, -(m as i32), pi * &by_m[m][1]));
            }
        }
    }
    out.sort_by_key(|(l, m, _)| (*l, *m));
    out
}

fn double_factorial(n: i64) -> f64 {
    let mut v = 1.0;
    let mut k = n;
    while k > 1 {
        v *= k as f64;
        k -= 2;
    }
    v
}

/// `∫_{S²} x^a y^b z^c dA / 4π` as an exact rational.
pub fn sphere_moment_over_4pi(e: Exponent) -> BigRational {
    if e.iter().any(|k| k % 2 == 1) {
        return BigRational::zero();
    }
    let df = |n: i64| -> BigInt {
        let mut v = BigInt::one();
        let mut k = n;
        while k > 1 {
            v *= k;
            k -= 2;
        }
        v
    };
    let half: Vec<i64> = e.iter().map(|&k| k as i64 / 2).collect();
    let num = half.iter().map(|&p| df(2 * p - 1)).product::<BigInt>();
    let den = df(2 * half.iter().sum::<i64>() + 1);
    BigRational::new(num, den)
}

/// `∫_{S²} x^a y^b z^c dA`.
pub fn sphere_moment(e: Exponent) -> f64 {
    4.0 * std::f64::consts::PI * sphere_moment_over_4pi(e).to_f64().unwrap_or(f64::NAN)
}

/// `∫_{S²} p dA` from exact monomial moments.
pub fn integrate_on_sphere(p: &Poly3) -> f64 {
    p.terms().map(|(e, c)| c * sphere_moment(*e)).sum()
}

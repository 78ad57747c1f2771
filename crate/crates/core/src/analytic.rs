//! Closed-form trigonometric form fields on the unit torus, used to build
//! smooth perturbations and as derivative oracles.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::exterior::{basis_mask, mask_position, n_components, wedge_sign, KVector, DIM};

/// `amp · sin(2π k·x + phase) e^I`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [i32; DIM],
    pub phase: f64,
    pub mask: u8,
}

impl TrigTerm {
    fn value(&self, x: &[f64; DIM]) -> f64 {
        let arg: f64 = self.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>() * TAU;
        self.amp * (arg + self.phase).sin()
    }
}

/// A sum of trigonometric terms of one grade.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigForm {
    pub grade: usize,
    pub terms: Vec<TrigTerm>,
}

impl TrigForm {
    pub fn zero(grade: usize) -> Self {
        TrigForm { grade, terms: Vec::new() }
    }

    /// Random field with one term per component and wave vector entries in
    /// `-kmax..=kmax`, restricted to the axes where `active[i]` holds.
    pub fn random<R: Rng>(rng: &mut R, grade: usize, kmax: i32, amp: f64, active: &[bool; DIM]) -> Self {
        let mut terms = Vec::new();
        for c in 0..n_components(grade) {
            let mut k = [0i32; DIM];
            for (i, ki) in k.iter_mut().enumerate() {
                if active[i] {
                    *ki = rng.random_range(-kmax..=kmax);
                }
            }
            let a: f64 = StandardNormal.sample(rng);
            terms.push(TrigTerm { amp: amp * a, k, phase: rng.random_range(0.0..TAU), mask: basis_mask(grade, c) });
        }
        TrigForm { grade, terms }
    }

    pub fn eval(&self, x: &[f64; DIM]) -> KVector<f64> {
        let mut out = KVector::zero(self.grade);
        for t in &self.terms {
            out.coeffs_mut()[mask_position(t.mask)] += t.value(x);
        }
        out
    }

    /// Exact exterior derivative.
    pub fn d(&self) -> TrigForm {
        let mut terms = Vec::new();
        for t in &self.terms {
            for i in 0..DIM {
                if t.k[i] == 0 || t.mask & (1 << i) != 0 {
                    continue;
                }
                let sign = wedge_sign(1 << i, t.mask) as f64;
                terms.push(TrigTerm {
                    amp: sign * t.amp * TAU * t.k[i] as f64,
                    k: t.k,
                    phase: t.phase + std::f64::consts::FRAC_PI_2,
                    mask: t.mask | (1 << i),
                });
            }
        }
        TrigForm { grade: self.grade + 1, terms }
    }

    pub fn scaled(&self, s: f64) -> TrigForm {
        TrigForm {
            grade: self.grade,
            terms: self.terms.iter().map(|t| TrigTerm { amp: t.amp * s, ..t.clone() }).collect(),
        }
    }

    /// Partial derivative of every coefficient along axis `axis`.
    pub fn partial(&self, axis: usize) -> TrigForm {
        TrigForm {
            grade: self.grade,
            terms: self
                .terms
                .iter()
                .filter(|t| t.k[axis] != 0)
                .map(|t| TrigTerm {
                    amp: t.amp * TAU * t.k[axis] as f64,
                    k: t.k,
                    phase: t.phase + std::f64::consts::FRAC_PI_2,
                    mask: t.mask,
                })
                .collect(),
        }
    }
}

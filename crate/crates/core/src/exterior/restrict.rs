//! Pullback of forms to the tangent space of `S² × T³` inside `B³ × T³`.

use num_rational::BigRational;

use super::{ExteriorError, FieldScalar, KVector, Mat6, PolyForm, Scalar, DIM};

/// A point of `S² × T³`: unit vector `x` and torus coordinates `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint<T> {
    pub x: [T; 3],
    pub y: [T; 3],
}

impl<T: Scalar> SpherePoint<T> {
    pub fn new(x: [T; 3], y: [T; 3]) -> Result<Self, ExteriorError> {
        let r2 = x[0].clone() * x[0].clone() + x[1].clone() * x[1].clone() + x[2].clone() * x[2].clone();
        if !(r2.clone() - T::one()).is_negligible() {
            return Err(ExteriorError::NotOnSphere(r2.magnitude()));
        }
        Ok(SpherePoint { x, y })
    }

    pub fn coords(&self) -> [T; DIM] {
        [
            self.x[0].clone(),
            self.x[1].clone(),
            self.x[2].clone(),
            self.y[0].clone(),
            self.y[1].clone(),
            self.y[2].clone(),
        ]
    }
}

/// Tangent frame of `S² × T³` at `x`: two vectors `x × e_a`, `x × e_b` tangent
/// to the sphere, followed by `∂y1, ∂y2, ∂y3`. The axes `a, b` are the two
/// complementary to the largest component of `x`, so the frame is rational
/// whenever `x` is.
pub fn sphere_tangent_frame<T: FieldScalar>(x: &[T; 3]) -> [[T; DIM]; 5] {
    let k = (0..3).max_by(|&i, &j| x[i].magnitude().total_cmp(&x[j].magnitude())).unwrap_or(0);
    let others: Vec<usize> = (0..3).filter(|&i| i != k).collect();
    let cross_e = |a: usize| -> [T; DIM] {
        // x × e_a
        let mut e = [T::zero(), T::zero(), T::zero()];
        e[a] = T::one();
        let c = [
            x[1].clone() * e[2].clone() - x[2].clone() * e[1].clone(),
            x[2].clone() * e[0].clone() - x[0].clone() * e[2].clone(),
            x[0].clone() * e[1].clone() - x[1].clone() * e[0].clone(),
        ];
        [c[0].clone(), c[1].clone(), c[2].clone(), T::zero(), T::zero(), T::zero()]
    };
    [
        cross_e(others[0]),
        cross_e(others[1]),
        super::unit_vector(3),
        super::unit_vector(4),
        super::unit_vector(5),
    ]
}

fn frame_matrix<T: Scalar>(frame: &[[T; DIM]; 5]) -> Mat6<T> {
    std::array::from_fn(|a| std::array::from_fn(|i| if a < 5 { frame[a][i].clone() } else { T::zero() }))
}

/// Restriction of a constant-coefficient form at `p`, expressed in the dual
/// basis of `frame` (indices `0..5` of the result refer to frame vectors).
pub fn restrict_tangential<T: FieldScalar>(
    a: &KVector<T>,
    p: &SpherePoint<T>,
    frame: &[[T; DIM]; 5],
) -> Result<KVector<T>, ExteriorError> {
    SpherePoint::new(p.x.clone(), p.y.clone())?;
    for v in frame {
        let normal = v[0].clone() * p.x[0].clone() + v[1].clone() * p.x[1].clone() + v[2].clone() * p.x[2].clone();
        if !normal.is_negligible() {
            return Err(ExteriorError::NotOnSphere(normal.magnitude()));
        }
    }
    Ok(a.transform(&frame_matrix(frame)))
}

/// Exact restriction of a polynomial form at a rational point of `S² × T³`.
pub fn restrict_poly(
    a: &PolyForm,
    p: &SpherePoint<BigRational>,
    frame: &[[BigRational; DIM]; 5],
) -> Result<KVector<BigRational>, ExteriorError> {
    restrict_tangential(&a.eval(&p.coords()), p, frame)
}

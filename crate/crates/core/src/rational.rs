//! Real polynomials and rational functions.
//!
//! Every stability function in the crate (single-step `R`, fine `r`, the
//! two-step pair `R1`/`R2`) is a [`RationalFunction`] with its denominator
//! normalized so that `den(0) = 1`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold under which a denominator value counts as a pole.
pub const POLE_TOLERANCE: f64 = 1e-14;

/// Polynomial with real coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    /// Builds a polynomial, dropping trailing (highest-degree) zeros.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `s`.
    pub fn s() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `s^i`, zero past the stored degree.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Exact division by `s`; the constant term is discarded.
    pub fn shift_down(&self) -> Self {
        Self::new(self.coeffs.iter().skip(1).copied().collect())
    }

    /// Roots of a polynomial of degree at most two.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        match self.degree() {
            None | Some(0) => Ok(Vec::new()),
            Some(1) => Ok(vec![Complex64::new(-self.coeffs[0] / self.coeffs[1], 0.0)]),
            Some(2) => {
                // a s^2 + b s + c = 0  <=>  s^2 - (-b/a) s - (-c/a) = 0
                let a = self.coeffs[2];
                let (z1, z2) = quadratic_roots(
                    Complex64::new(-self.coeffs[1] / a, 0.0),
                    Complex64::new(-self.coeffs[0] / a, 0.0),
                );
                Ok(vec![z1, z2])
            }
            Some(d) => Err(Error::InvalidArgument(format!(
                "root finding is limited to degree 2, got degree {d}"
            ))),
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            match i {
                0 => write!(f, "{a}")?,
                1 => write!(f, "{a} s")?,
                _ => write!(f, "{a} s^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Ratio of two real polynomials with `den(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFunction {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFunction {
    /// Builds `num/den` and rescales both so that `den(0) = 1`.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        let d0 = den.coeff(0);
        if d0 == 0.0 || !d0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "denominator must be nonzero at s = 0 (got {d0})"
            )));
        }
        Ok(Self {
            num: num.scale(1.0 / d0),
            den: den.scale(1.0 / d0),
        })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    pub fn constant(c: f64) -> Self {
        Self {
            num: Polynomial::constant(c),
            den: Polynomial::constant(1.0),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn eval_real(&self, s: f64) -> Result<f64> {
        let n = self.num.eval(s);
        let d = self.den.eval(s);
        if d.abs() <= POLE_TOLERANCE * n.abs().max(1.0) {
            return Err(Error::Pole {
                at: s.to_string(),
                den: d,
            });
        }
        Ok(n / d)
    }

    pub fn eval_complex(&self, z: Complex64) -> Result<Complex64> {
        let n = self.num.eval_complex(z);
        let d = self.den.eval_complex(z);
        if d.norm() <= POLE_TOLERANCE * n.norm().max(1.0) {
            return Err(Error::Pole {
                at: z.to_string(),
                den: d.norm(),
            });
        }
        Ok(n / d)
    }

    /// Value at infinity; `None` if the function is improper there.
    pub fn limit_at_infinity(&self) -> Option<f64> {
        let dn = self.num.degree();
        let dd = self.den.degree().unwrap_or(0);
        match dn {
            None => Some(0.0),
            Some(k) if k < dd => Some(0.0),
            Some(k) if k == dd => Some(self.num.coeff(k) / self.den.coeff(k)),
            _ => None,
        }
    }

    /// Maximum coefficient-wise distance to another rational function.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let pd = |a: &Polynomial, b: &Polynomial| {
            let n = a.coeffs().len().max(b.coeffs().len());
            (0..n)
                .map(|i| (a.coeff(i) - b.coeff(i)).abs())
                .fold(0.0, f64::max)
        };
        pd(&self.num, &other.num).max(pd(&self.den, &other.den))
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

/// Both roots of `z^2 - b z - c = 0`.
///
/// The first root has the larger modulus; ties go to the larger real part
/// and then the larger imaginary part.
pub fn quadratic_roots(b: Complex64, c: Complex64) -> (Complex64, Complex64) {
    let sq = (b * b + 4.0 * c).sqrt();
    // pick the sign that avoids cancellation in b + sq
    let sq = if (b.conj() * sq).re >= 0.0 { sq } else { -sq };
    let big = (b + sq) * 0.5;
    let (z1, z2) = if big.norm() == 0.0 {
        (big, big)
    } else {
        // z1 * z2 = -c
        (big, -c / big)
    };
    if root_precedes(z2, z1) {
        (z2, z1)
    } else {
        (z1, z2)
    }
}

fn root_precedes(a: Complex64, b: Complex64) -> bool {
    let (ma, mb) = (a.norm(), b.norm());
    if ma != mb {
        return ma > mb;
    }
    if a.re != b.re {
        return a.re > b.re;
    }
    a.im > b.im
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn riia3() -> RationalFunction {
        RationalFunction::from_coeffs(
            &[1.0, -0.4, 0.05],
            &[1.0, 0.6, 0.15, 1.0 / 60.0],
        )
        .unwrap()
    }

    #[test]
    fn polynomial_trims_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert_eq!(Polynomial::new(vec![0.0]).degree(), None);
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = Polynomial::new(vec![1.0, 1.0]);
        let q = &p * &p;
        assert_eq!(q.coeffs(), &[1.0, 2.0, 1.0]);
        assert!((&q - &q).is_zero());
        assert_eq!((&q + &p).coeffs(), &[2.0, 3.0, 1.0]);
        assert_eq!(q.shift_down().coeffs(), &[2.0, 1.0]);
    }

    #[test]
    fn bdf2_r2_at_zero() {
        let r2 = RationalFunction::from_coeffs(&[4.0 / 3.0], &[1.0, 2.0 / 3.0]).unwrap();
        assert_relative_eq!(r2.eval_real(0.0).unwrap(), 4.0 / 3.0);
        let z = r2.eval_complex(Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(z.re, 4.0 / 3.0);
        assert_eq!(z.im, 0.0);
    }

    #[test]
    fn riia3_values() {
        let r = riia3();
        assert_eq!(r.eval_real(0.0).unwrap(), 1.0);
        // (1 - 0.4 + 0.05) / (1 + 0.6 + 0.15 + 1/60)
        let expected = 0.65 / (1.75 + 1.0 / 60.0);
        assert_relative_eq!(r.eval_real(1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.3679245, epsilon = 1e-7);
    }

    #[test]
    fn constant_function_in_complex_plane() {
        let one = RationalFunction::constant(1.0);
        let z = one.eval_complex(Complex64::new(0.0, 1.0)).unwrap();
        assert_eq!(z, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn normalizes_denominator() {
        let r = RationalFunction::from_coeffs(&[2.0, 4.0], &[2.0, 6.0]).unwrap();
        assert_eq!(r.num().coeffs(), &[1.0, 2.0]);
        assert_eq!(r.den().coeffs(), &[1.0, 3.0]);
        assert!(RationalFunction::from_coeffs(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn pole_is_reported() {
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, -1.0]).unwrap();
        assert!(matches!(r.eval_real(1.0), Err(Error::Pole { .. })));
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            r.eval_complex(Complex64::new(0.0, 1.0)),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn limit_at_infinity() {
        assert_eq!(riia3().limit_at_infinity(), Some(0.0));
        let r = RationalFunction::from_coeffs(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert_eq!(r.limit_at_infinity(), Some(0.5));
        let r = RationalFunction::from_coeffs(&[1.0, 0.0, 1.0], &[1.0, 4.0]).unwrap();
        assert_eq!(r.limit_at_infinity(), None);
    }

    #[test]
    fn quadratic_roots_examples() {
        let (z1, z2) = quadratic_roots(c(4.0 / 3.0), c(-1.0 / 3.0));
        assert_relative_eq!(z1.re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(z2.re, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(z1.im, 0.0);

        let (z1, z2) = quadratic_roots(c(0.97822), c(0.02178));
        assert_relative_eq!(z1.re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(z2.re, -0.02178, epsilon = 1e-14);

        let (z1, z2) = quadratic_roots(c(0.0), c(0.0));
        assert_eq!(z1, c(0.0));
        assert_eq!(z2, c(0.0));
    }

    #[test]
    fn quadratic_double_and_complex_roots() {
        // (z - 0.5)^2 = z^2 - z + 0.25
        let (z1, z2) = quadratic_roots(c(1.0), c(-0.25));
        assert_relative_eq!(z1.re, 0.5, epsilon = 1e-8);
        assert_relative_eq!(z2.re, 0.5, epsilon = 1e-8);
        // z^2 + 1 = 0: tie on modulus and real part, +i first
        let (z1, z2) = quadratic_roots(c(0.0), c(-1.0));
        assert_relative_eq!(z1.im, 1.0, epsilon = 1e-15);
        assert_relative_eq!(z2.im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_two_roots() {
        let p = Polynomial::new(vec![2.0, -3.0, 1.0]);
        let r = p.roots().unwrap();
        assert_relative_eq!(r[0].re, 2.0, epsilon = 1e-14);
        assert_relative_eq!(r[1].re, 1.0, epsilon = 1e-14);
        assert!(Polynomial::new(vec![1.0, 0.0, 0.0, 1.0]).roots().is_err());
    }

    fn complex() -> impl Strategy<Value = Complex64> {
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(re, im)| Complex64::new(re, im))
    }

    proptest! {
        #[test]
        fn roots_satisfy_quadratic(b in complex(), cc in complex()) {
            let (z1, z2) = quadratic_roots(b, cc);
            let scale = 1.0 + b.norm() + cc.norm();
            for z in [z1, z2] {
                prop_assert!((z * z - b * z - cc).norm() <= 1e-10 * scale);
            }
            prop_assert!(z1.norm() >= z2.norm());
            prop_assert_eq!((z1, z2), quadratic_roots(b, cc));
        }

        #[test]
        fn real_axis_agrees(s in 0.0f64..100.0) {
            let r = riia3();
            let a = r.eval_real(s).unwrap();
            let b = r.eval_complex(Complex64::new(s, 0.0)).unwrap();
            prop_assert!((a - b.re).abs() <= 1e-14 * a.abs().max(1e-300));
            prop_assert_eq!(b.im, 0.0);
        }

        #[test]
        fn consistent_schemes_have_unit_root(a in -3.0f64..3.0) {
            // R1(0) + R2(0) = 1 for any consistent two-step scheme
            let (z1, z2) = quadratic_roots(c(1.0 - a), c(a));
            let d = (z1 - 1.0).norm().min((z2 - 1.0).norm());
            prop_assert!(d <= 1e-12);
        }
    }
}

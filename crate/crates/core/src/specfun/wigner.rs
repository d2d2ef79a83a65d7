//! Exact Wigner 3j symbols (Racah formula over big integers) and Gaunt
//! coefficients.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};

/// Largest multipole the exact routines accept.
pub const MAX_EXACT_ELL: usize = 64;

/// `(ℓ1 ℓ2 ℓ3; m1 m2 m3)` with `|m_i| ≤ ℓ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolTriple {
    pub l: [usize; 3],
    pub m: [i64; 3],
}

impl SymbolTriple {
    pub fn new(l: [usize; 3], m: [i64; 3]) -> Result<Self> {
        for i in 0..3 {
            if m[i].unsigned_abs() as usize > l[i] {
                return Err(invalid(format!("|m{}| = {} exceeds ℓ{} = {}", i + 1, m[i].abs(), i + 1, l[i])));
            }
        }
        Ok(SymbolTriple { l, m })
    }

    /// All `m_i = 0`.
    pub fn zero_m(l: [usize; 3]) -> Self {
        SymbolTriple { l, m: [0, 0, 0] }
    }

    pub fn satisfies_triangle(&self) -> bool {
        let [a, b, c] = self.l;
        c <= a + b && a <= b + c && b <= a + c
    }
}

/// `sign · √|r|` stored as the signed rational `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedSqrt(pub BigRational);

impl SignedSqrt {
    pub fn zero() -> Self {
        SignedSqrt(BigRational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// The exact square of the value.
    pub fn square(&self) -> BigRational {
        self.0.abs()
    }

    pub fn to_f64(&self) -> f64 {
        let mag = rational_to_f64(&self.0.abs()).sqrt();
        if self.0.is_negative() {
            -mag
        } else {
            mag
        }
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    // Scale so the integer quotient carries ~64 significant bits.
    let (n, d) = (r.numer(), r.denom());
    if n.is_zero() {
        return 0.0;
    }
    let shift = 64 + d.bits() as i64 - n.bits() as i64;
    let q: BigInt = if shift >= 0 {
        (n << shift as usize) / d
    } else {
        n / (d << (-shift) as usize)
    };
    q.to_f64().expect("64-bit quotient") * 2f64.powi(-shift as i32)
}

fn factorial(n: usize) -> &'static BigInt {
    static TABLE: OnceLock<Vec<BigInt>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(3 * MAX_EXACT_ELL + 2);
        t.push(BigInt::one());
        for k in 1..=3 * MAX_EXACT_ELL + 1 {
            let next = &t[k - 1] * BigInt::from(k);
            t.push(next);
        }
        t
    });
    &table[n]
}

fn check_range(t: &SymbolTriple) -> Result<()> {
    match t.l.iter().copied().find(|&l| l > MAX_EXACT_ELL) {
        Some(ell) => Err(Error::OutOfRange { ell, max: MAX_EXACT_ELL }),
        None => Ok(()),
    }
}

/// Exact Wigner 3j symbol. Zero whenever a selection rule fails.
pub fn wigner3j_exact(t: &SymbolTriple) -> Result<SignedSqrt> {
    check_range(t)?;
    let [j1, j2, j3] = t.l.map(|v| v as i64);
    let [m1, m2, m3] = t.m;
    if m1 + m2 + m3 != 0 || !t.satisfies_triangle() {
        return Ok(SignedSqrt::zero());
    }
    if m1 == 0 && m2 == 0 && (j1 + j2 + j3) % 2 == 1 {
        return Ok(SignedSqrt::zero());
    }
    let f = |n: i64| factorial(n as usize);

    // Δ(j1 j2 j3) · Π (j_i ± m_i)!
    let num = f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3)
        * f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j3 + m3) * f(j3 - m3);
    let prefactor = BigRational::new(num, f(j1 + j2 + j3 + 1).clone());

    let kmin = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let kmax = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = BigRational::zero();
    for k in kmin..=kmax {
        let den = f(k) * f(j3 - j2 + k + m1) * f(j3 - j1 + k - m2) * f(j1 + j2 - j3 - k)
            * f(j1 - k - m1) * f(j2 - k + m2);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(SignedSqrt::zero());
    }
    let phase_negative = (j1 - j2 - m3).rem_euclid(2) == 1;
    let negative = phase_negative ^ sum.is_negative();
    let mag = prefactor * &sum * &sum;
    Ok(SignedSqrt(if negative { -mag } else { mag }))
}

/// Wigner 3j symbol as a float.
pub fn wigner3j(t: &SymbolTriple) -> Result<f64> {
    Ok(wigner3j_exact(t)?.to_f64())
}

/// Gaunt coefficient `∫ Y_{ℓ1m1} Y_{ℓ2m2} Y_{ℓ3m3} dΩ`
/// `= √((2ℓ1+1)(2ℓ2+1)(2ℓ3+1)/4π) (ℓ1 ℓ2 ℓ3; 0 0 0)(ℓ1 ℓ2 ℓ3; m1 m2 m3)`.
pub fn gaunt(t: &SymbolTriple) -> Result<f64> {
    let zero = wigner3j_exact(&SymbolTriple::zero_m(t.l))?;
    if zero.is_zero() {
        return Ok(0.0);
    }
    let full = wigner3j_exact(t)?;
    if full.is_zero() {
        return Ok(0.0);
    }
    let dims: i64 = t.l.iter().map(|&l| 2 * l as i64 + 1).product();
    let sq = zero.square() * full.square() * BigRational::from_integer(BigInt::from(dims));
    let negative = zero.0.is_negative() ^ full.0.is_negative();
    let mag = (rational_to_f64(&sq) / (4.0 * PI)).sqrt();
    Ok(if negative { -mag } else { mag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(l: [usize; 3], m: [i64; 3]) -> f64 {
        wigner3j(&SymbolTriple::new(l, m).unwrap()).unwrap()
    }

    #[test]
    fn small_values() {
        assert_eq!(w([0, 0, 0], [0, 0, 0]), 1.0);
        assert!((w([1, 1, 0], [0, 0, 0]) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w([1, 1, 2], [0, 0, 0]) - (2.0 / 15.0f64).sqrt()).abs() < 1e-15);
        // (1 1 1; 1 0 -1) = -1/√6, (2 2 2; 0 0 0) = -√(2/35).
        assert!((w([1, 1, 1], [1, 0, -1]) + 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((w([2, 2, 2], [0, 0, 0]) + (2.0 / 35.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(w([1, 1, 1], [1, 1, -1]), 0.0);
        assert_eq!(w([1, 1, 3], [0, 0, 0]), 0.0);
        assert_eq!(w([1, 1, 1], [0, 0, 0]), 0.0);
        assert!(SymbolTriple::new([1, 1, 1], [2, 0, 0]).is_err());
    }

    #[test]
    fn range_error() {
        let t = SymbolTriple::zero_m([65, 1, 64]);
        assert!(matches!(wigner3j(&t), Err(Error::OutOfRange { ell: 65, .. })));
        assert!(wigner3j(&SymbolTriple::zero_m([64, 64, 64])).is_ok());
    }

    #[test]
    fn orthogonality_is_exact() {
        for l1 in 0..=10usize {
            for l2 in 0..=10usize {
                for l3 in l1.abs_diff(l2)..=(l1 + l2).min(10) {
                    for m3 in -(l3 as i64)..=l3 as i64 {
                        let mut total = BigRational::zero();
                        for m1 in -(l1 as i64)..=l1 as i64 {
                            let m2 = -m1 - m3;
                            if m2.unsigned_abs() as usize > l2 {
                                continue;
                            }
                            let t = SymbolTriple::new([l1, l2, l3], [m1, m2, m3]).unwrap();
                            total += wigner3j_exact(&t).unwrap().square();
                        }
                        total *= BigRational::from_integer(BigInt::from(2 * l3 + 1));
                        assert!(total.is_one(), "({l1} {l2} {l3}) m3={m3}: {total}");
                    }
                }
            }
        }
    }

    #[test]
    fn gaunt_examples() {
        let g = gaunt(&SymbolTriple::zero_m([0, 0, 0])).unwrap();
        assert!((g - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let t = SymbolTriple::new([2, 2, 2], [1, 1, 0]).unwrap();
        assert_eq!(gaunt(&t).unwrap(), 0.0);
    }

    #[test]
    fn big_values_are_finite() {
        let t = SymbolTriple::new([64, 64, 64], [10, -30, 20]).unwrap();
        let v = wigner3j(&t).unwrap();
        assert!(v.is_finite() && v.abs() < 1.0);
    }
}

//! Hermite polynomials and expectations of products of Wick monomials.

use crate::error::{invalid, Result};

/// Largest total degree [`wick_expectation`] will enumerate.
pub const MAX_WICK_DEGREE: usize = 12;

/// Probabilists' Hermite polynomial `He_k(z)`.
pub fn hermite(k: usize, z: f64) -> f64 {
    let mut h0 = 1.0;
    if k == 0 {
        return h0;
    }
    let mut h1 = z;
    for n in 1..k {
        let h2 = z * h1 - n as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Normal-ordered product `:Z_{i1} ⋯ Z_{ik}:` of jointly Gaussian variables,
/// stored as the multiset of variable indices. A plain (un-ordered) factor
/// `Z_i` is the degree-one monomial `[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WickMonomial(pub Vec<usize>);

impl WickMonomial {
    pub fn new(vars: impl Into<Vec<usize>>) -> Self {
        WickMonomial(vars.into())
    }

    /// `:Z_i^power:`.
    pub fn power(var: usize, power: usize) -> Self {
        WickMonomial(vec![var; power])
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }
}

/// `E[Π_j :monomial_j:]` for a centred Gaussian vector with the given
/// covariance, by enumerating every perfect matching of the factors that
/// never pairs two factors of the same monomial (Isserlis' theorem with
/// normal-ordering exclusions).
pub fn wick_expectation(monomials: &[WickMonomial], covariance: &[Vec<f64>]) -> Result<f64> {
    let d = covariance.len();
    for (i, row) in covariance.iter().enumerate() {
        if row.len() != d {
            return Err(invalid("covariance matrix is not square"));
        }
        if row[i] < 0.0 {
            return Err(invalid("covariance has a negative variance"));
        }
        for j in 0..i {
            let (a, b) = (row[j], covariance[j][i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(invalid("covariance matrix is not symmetric"));
            }
        }
    }
    let mut vars = Vec::new();
    let mut groups = Vec::new();
    for (g, mono) in monomials.iter().enumerate() {
        for &v in &mono.0 {
            if v >= d {
                return Err(invalid(format!("variable index {v} outside covariance of size {d}")));
            }
            vars.push(v);
            groups.push(g);
        }
    }
    let n = vars.len();
    if n > MAX_WICK_DEGREE {
        return Err(invalid(format!(
            "total degree {n} exceeds the enumeration budget {MAX_WICK_DEGREE}"
        )));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    Ok(pairings(&vars, &groups, covariance, 0))
}

fn pairings(vars: &[usize], groups: &[usize], cov: &[Vec<f64>], used: u32) -> f64 {
    let n = vars.len();
    let Some(i) = (0..n).find(|&i| used & (1 << i) == 0) else {
        return 1.0;
    };
    let used = used | (1 << i);
    let mut total = 0.0;
    for j in i + 1..n {
        if used & (1 << j) != 0 || groups[j] == groups[i] {
            continue;
        }
        let c = cov[vars[i]][vars[j]];
        if c != 0.0 {
            total += c * pairings(vars, groups, cov, used | (1 << j));
        }
    }
    total
}

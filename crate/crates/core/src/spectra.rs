//! Angular power spectrum models, support sets and sparsity budgets.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Nonnegative finite sequence `C_ℓ`, `ℓ = 0..=lmax`. Multipoles above
/// `lmax` are treated as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    values: Vec<f64>,
}

impl PowerSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("power spectrum needs at least C_0"));
        }
        if let Some((l, c)) = values.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c >= 0.0)) {
            return Err(invalid(format!("C_{l} = {c} is not a finite nonnegative value")));
        }
        Ok(PowerSpectrum { values })
    }

    pub fn lmax(&self) -> usize {
        self.values.len() - 1
    }

    /// `C_ℓ`, zero above `lmax`.
    pub fn get(&self, ell: usize) -> f64 {
        self.values.get(ell).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy restricted to `ℓ ≤ lmax`.
    pub fn truncate(&self, lmax: usize) -> Self {
        let values = (0..=lmax).map(|l| self.get(l)).collect();
        PowerSpectrum { values }
    }

    /// Total variance `Σ_ℓ (2ℓ+1) C_ℓ / 4π` of a field with this spectrum.
    pub fn variance(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(l, c)| (2 * l + 1) as f64 * c)
            .sum::<f64>()
            / (4.0 * std::f64::consts::PI)
    }

    /// Writes the `ell,C_ell` CSV table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ell,C_ell")?;
        for (l, c) in self.values.iter().enumerate() {
            writeln!(w, "{l},{c:.16e}")?;
        }
        Ok(())
    }

    /// Reads the `ell,C_ell` CSV table. Rows must be `ℓ = 0, 1, 2, …` in order.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "ell,C_ell" {
            return Err(Error::Format(format!("unexpected spectrum header {header:?}")));
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (l, c) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("malformed spectrum row {line:?}")))?;
            let l: usize = l.trim().parse().map_err(|_| Error::Format(format!("bad multipole {l:?}")))?;
            if l != row {
                return Err(Error::Format(format!("expected ell = {row}, found {l}")));
            }
            let c: f64 = c.trim().parse().map_err(|_| Error::Format(format!("bad C_ell {c:?}")))?;
            values.push(c);
        }
        PowerSpectrum::new(values)
    }
}

/// Named spectrum families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SpectrumModel {
    /// `C_ℓ = (1+ℓ)^{−2β}`.
    WhittleMatern { beta: f64 },
    /// `C_ℓ = (1+ℓ(ℓ+1))^{−β}`.
    WhittleMaternExact { beta: f64 },
}

impl SpectrumModel {
    pub fn build(&self, lmax: usize) -> Result<PowerSpectrum> {
        match *self {
            SpectrumModel::WhittleMatern { beta } => whittle_matern(beta, lmax),
            SpectrumModel::WhittleMaternExact { beta } => whittle_matern_exact(beta, lmax),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.5) || !beta.is_finite() {
        return Err(invalid(format!(
            "beta = {beta}: need beta > 0.5 for a summable total power"
        )));
    }
    Ok(())
}

/// `C_ℓ = (1+ℓ)^{−2β}`, requires `β > 1/2`.
pub fn whittle_matern(beta: f64, lmax: usize) -> Result<PowerSpectrum> {
    check_beta(beta)?;
    PowerSpectrum::new((0..=lmax).map(|l| (1.0 + l as f64).powf(-2.0 * beta)).collect())
}

/// `C_ℓ = (1+ℓ(ℓ+1))^{−β}`, requires `β > 1/2`.
pub fn whittle_matern_exact(beta: f64, lmax: usize) -> Result<PowerSpectrum> {
    check_beta(beta)?;
    PowerSpectrum::new(
        (0..=lmax)
            .map(|l| (1.0 + (l * (l + 1)) as f64).powf(-beta))
            .collect(),
    )
}

/// Sorted multipoles `ℓ ≤ L` with `C_ℓ > zero_tol`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn multipoles(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    /// `Σ_{ℓ∈S} (2ℓ+1)`, the harmonic dimension of the support.
    pub fn dimension(&self) -> usize {
        self.0.iter().map(|l| 2 * l + 1).sum()
    }
}

pub fn support(s: &PowerSpectrum, l: usize, zero_tol: f64) -> SupportSet {
    SupportSet((0..=l).filter(|&ell| s.get(ell) > zero_tol).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityKind {
    /// Budget `L^{2γ}`.
    Weak,
    /// Budget `(Σ_{ℓ∈S(L)} (2ℓ+1))^γ`.
    Strong,
}

/// Largest coefficient count that still classifies as sparse at exponent
/// `gamma` (ceiling of the growth bound).
pub fn sparsity_budget(s: &PowerSpectrum, l: usize, gamma: f64, kind: SparsityKind) -> Result<u64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma = {gamma} outside [0, 1)")));
    }
    let base = match kind {
        SparsityKind::Weak => (l as f64).powi(2),
        SparsityKind::Strong => support(s, l, 0.0).dimension() as f64,
    };
    if base == 0.0 {
        return Ok(0);
    }
    Ok(snap_ceil(base.powf(gamma)))
}

// powf can land a hair above an exact integer (e.g. 121^0.5).
fn snap_ceil(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        v.ceil() as u64
    }
}

/// `count ≤ budget`.
pub fn is_sparse(count: u64, budget: u64) -> bool {
    count <= budget
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whittle_matern_examples() {
        let s = whittle_matern(1.5, 10).unwrap();
        assert_eq!(s.get(0), 1.0);
        assert_eq!(s.get(1), 0.125);
        assert_eq!(whittle_matern(1.01, 3).unwrap().get(0), 1.0);
        assert!(whittle_matern(0.5, 3).is_err());
        assert!(whittle_matern(f64::NAN, 3).is_err());
        for w in s.values().windows(2) {
            assert!(w[1] < w[0] && w[1] > 0.0);
        }
        let e = whittle_matern_exact(1.0, 2).unwrap();
        assert_eq!(e.values(), &[1.0, 1.0 / 3.0, 1.0 / 7.0]);
    }

    #[test]
    fn support_examples() {
        let s = whittle_matern(1.5, 10).unwrap();
        assert_eq!(support(&s, 4, 0.0).multipoles(), &[0, 1, 2, 3, 4]);
        let zero = PowerSpectrum::new(vec![0.0; 11]).unwrap();
        assert!(support(&zero, 10, 0.0).is_empty());
        let mut v = vec![0.0; 6];
        v[2] = 1.0;
        v[5] = 1.0;
        let sparse = PowerSpectrum::new(v).unwrap();
        assert_eq!(support(&sparse, 4, 0.0).multipoles(), &[2]);
    }

    #[test]
    fn budget_examples() {
        let s = whittle_matern(1.5, 100).unwrap();
        assert_eq!(sparsity_budget(&s, 100, 0.5, SparsityKind::Weak).unwrap(), 100);
        assert_eq!(sparsity_budget(&s, 10, 0.0, SparsityKind::Strong).unwrap(), 1);
        assert_eq!(sparsity_budget(&s, 10, 0.5, SparsityKind::Strong).unwrap(), 11);
        assert!(sparsity_budget(&s, 10, 1.0, SparsityKind::Strong).is_err());
        assert!(sparsity_budget(&s, 10, -0.1, SparsityKind::Weak).is_err());
    }

    #[test]
    fn full_support_dimension_and_gaussian_accounting() {
        let s = whittle_matern(2.0, 64).unwrap();
        for l in 0..=64 {
            assert_eq!(support(&s, l, 0.0).dimension(), (l + 1) * (l + 1));
        }
        // A Gaussian field needs (L+1)² coefficients: never within a strong budget.
        for l in 1..=64 {
            for g in [0.0, 0.25, 0.5] {
                let b = sparsity_budget(&s, l, g, SparsityKind::Strong).unwrap();
                assert!(!is_sparse(((l + 1) * (l + 1)) as u64, b), "L={l} γ={g}");
            }
        }
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(PowerSpectrum::new(vec![1.0, -0.1]).is_err());
        assert!(PowerSpectrum::new(vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = whittle_matern(1.01, 20).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ell,C_ell\n0,1.0000000000000000e0\n"));
        let back = PowerSpectrum::read_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(PowerSpectrum::read_csv(&b"l,C\n0,1\n"[..]).is_err());
    }
}

//! Sparse superpositions of Legendre waves: weight generators, synthesis,
//! exact harmonic coefficients and spectra, and bispectrum formulas.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geom::{sample_uniform, Rotation, SphereGrid, UnitVector};
use crate::harmonic::{GridField, HarmonicCoefficients};
use crate::rng::{self, Stream};
use crate::specfun::{legendre_row, sph_harm_all, wick_expectation, AssocLegendre, WickMonomial};
use crate::spectra::{PowerSpectrum, SpectrumModel};
use crate::stats::MeanEstimate;

/// Direction storage of a [`SparseField`].
#[derive(Debug, Clone, PartialEq)]
pub enum Directions {
    /// One list of `K` directions used at every multipole.
    Shared(Vec<UnitVector>),
    /// A separate list per multipole `ℓ = 0..=lmax`.
    PerEll(Vec<Vec<UnitVector>>),
}

/// Where a field came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub generator: String,
    pub spectrum_model: Option<SpectrumModel>,
    /// Generator parameters, e.g. `K` or `f_NL`.
    pub parameters: Vec<(String, f64)>,
    pub seed: Option<u64>,
}

/// `T(x) = Σ_ℓ Σ_k η_ℓk (2ℓ+1)/(4π) P_ℓ(⟨ξ_ℓk, x⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseField {
    lmax: usize,
    directions: Directions,
    weights: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl SparseField {
    /// Shared directions; `weights[ℓ][k]`.
    pub fn shared(directions: Vec<UnitVector>, weights: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let k = directions.len();
        if let Some((l, row)) = weights.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(invalid(format!("ℓ = {l} has {} weights for {k} directions", row.len())));
        }
        Self::finish(Directions::Shared(directions), weights, provenance)
    }

    /// Per-multipole directions; `weights[ℓ].len() == directions[ℓ].len()`.
    pub fn per_ell(directions: Vec<Vec<UnitVector>>, weights: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if directions.len() != weights.len() {
            return Err(invalid("direction and weight lists cover different band limits"));
        }
        for (l, (d, w)) in directions.iter().zip(&weights).enumerate() {
            if d.len() != w.len() {
                return Err(invalid(format!("ℓ = {l}: {} weights for {} directions", w.len(), d.len())));
            }
        }
        Self::finish(Directions::PerEll(directions), weights, provenance)
    }

    fn finish(directions: Directions, weights: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("a field needs at least the ℓ = 0 weights"));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(invalid("non-finite weight"));
        }
        Ok(SparseField { lmax: weights.len() - 1, directions, weights, provenance })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.directions, Directions::Shared(_))
    }

    pub fn direction_layout(&self) -> &Directions {
        &self.directions
    }

    /// `K_ℓ`.
    pub fn k(&self, ell: usize) -> usize {
        self.weights[ell].len()
    }

    pub fn directions(&self, ell: usize) -> &[UnitVector] {
        match &self.directions {
            Directions::Shared(d) => d,
            Directions::PerEll(d) => &d[ell],
        }
    }

    pub fn weights(&self, ell: usize) -> &[f64] {
        &self.weights[ell]
    }

    pub fn all_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_provenance(&mut self, p: Provenance) {
        self.provenance = p;
    }

    /// Same weights, every direction rotated by `r`.
    pub fn rotated(&self, r: &Rotation) -> SparseField {
        let directions = match &self.directions {
            Directions::Shared(d) => Directions::Shared(d.iter().map(|v| r.rotate(v)).collect()),
            Directions::PerEll(d) => {
                Directions::PerEll(d.iter().map(|l| l.iter().map(|v| r.rotate(v)).collect()).collect())
            }
        };
        SparseField { directions, ..self.clone() }
    }

    /// Number of real weights `Σ_ℓ K_ℓ`.
    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    /// Distinct direction slots: `K` when shared, `Σ_ℓ K_ℓ` otherwise.
    pub fn direction_count(&self) -> usize {
        match &self.directions {
            Directions::Shared(d) => d.len(),
            Directions::PerEll(d) => d.iter().map(Vec::len).sum(),
        }
    }

    /// Weights plus direction slots, e.g. `K + K(L+1)` for shared layouts.
    pub fn parameter_count(&self) -> usize {
        self.weight_count() + self.direction_count()
    }

    /// `(L+1)²` coefficients of the dense harmonic representation.
    pub fn dense_count(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    /// `T(x)`; one Legendre recurrence per direction in the shared layout.
    pub fn synthesize_at(&self, x: &UnitVector) -> f64 {
        let mut p = vec![0.0; self.lmax + 1];
        let mut total = 0.0;
        match &self.directions {
            Directions::Shared(dirs) => {
                for (k, d) in dirs.iter().enumerate() {
                    legendre_row(d.dot(x), &mut p);
                    for (l, pl) in p.iter().enumerate() {
                        total += self.weights[l][k] * (2 * l + 1) as f64 * pl;
                    }
                }
            }
            Directions::PerEll(dirs) => {
                for (l, ds) in dirs.iter().enumerate() {
                    for (d, w) in ds.iter().zip(&self.weights[l]) {
                        legendre_row(d.dot(x), &mut p[..=l]);
                        total += w * (2 * l + 1) as f64 * p[l];
                    }
                }
            }
        }
        total / (4.0 * PI)
    }

    /// `T` at every grid node.
    pub fn synthesize_grid(&self, grid: &SphereGrid) -> Result<GridField> {
        GridField::from_fn(grid.clone(), |x| self.synthesize_at(x))
    }

    /// `a_ℓm = Σ_k η_ℓk conj(Y_ℓm(ξ_ℓk))`, without quadrature.
    pub fn harmonic_coeffs(&self) -> HarmonicCoefficients {
        let mut c = HarmonicCoefficients::zeros(self.lmax);
        match &self.directions {
            Directions::Shared(dirs) => {
                let table = AssocLegendre::new(self.lmax);
                for (k, d) in dirs.iter().enumerate() {
                    let y = sph_harm_all(&table, d);
                    for l in 0..=self.lmax {
                        let w = self.weights[l][k];
                        for (a, y) in c.degree_mut(l).iter_mut().zip(&y[l * l..(l + 1) * (l + 1)]) {
                            *a += y.conj() * w;
                        }
                    }
                }
            }
            Directions::PerEll(dirs) => {
                for (l, ds) in dirs.iter().enumerate() {
                    for (d, w) in ds.iter().zip(&self.weights[l]) {
                        let y = crate::specfun::sph_harm_degree(l, d);
                        for (a, y) in c.degree_mut(l).iter_mut().zip(&y) {
                            *a += y.conj() * *w;
                        }
                    }
                }
            }
        }
        c
    }

    /// `Ĉ_ℓ = (4π)⁻¹ Σ_{h,k} η_ℓh η_ℓk P_ℓ(⟨ξ_h, ξ_k⟩)` by the addition theorem.
    pub fn exact_empirical_spectrum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.lmax + 1];
        let mut p = vec![0.0; self.lmax + 1];
        match &self.directions {
            Directions::Shared(dirs) => {
                for (h, dh) in dirs.iter().enumerate() {
                    for l in 0..=self.lmax {
                        out[l] += self.weights[l][h] * self.weights[l][h];
                    }
                    for (k, dk) in dirs.iter().enumerate().take(h) {
                        legendre_row(dh.dot(dk), &mut p);
                        for l in 0..=self.lmax {
                            out[l] += 2.0 * self.weights[l][h] * self.weights[l][k] * p[l];
                        }
                    }
                }
            }
            Directions::PerEll(dirs) => {
                for (l, ds) in dirs.iter().enumerate() {
                    let w = &self.weights[l];
                    for h in 0..ds.len() {
                        out[l] += w[h] * w[h];
                        for k in 0..h {
                            legendre_row(ds[h].dot(&ds[k]), &mut p[..=l]);
                            out[l] += 2.0 * w[h] * w[k] * p[l];
                        }
                    }
                }
            }
        }
        out.iter_mut().for_each(|c| *c /= 4.0 * PI);
        out
    }
}

/// Law of the unit-variance variables `u_ℓk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightDistribution {
    Gaussian,
    Rademacher,
}

impl WeightDistribution {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WeightDistribution::Gaussian => rng.sample(StandardNormal),
            WeightDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightDistribution::Gaussian => "iid-gaussian",
            WeightDistribution::Rademacher => "iid-rademacher",
        }
    }
}

/// `K` shared uniform directions, then `η_ℓk = u_ℓk √(4πC_ℓ/K)` by ascending
/// `ℓ`, then `k`.
pub fn gen_iid_weights<R: Rng + ?Sized>(
    s: &PowerSpectrum,
    k: usize,
    dist: WeightDistribution,
    rng: &mut R,
) -> Result<SparseField> {
    if k < 1 {
        return Err(invalid("K must be at least 1"));
    }
    let dirs: Vec<UnitVector> = (0..k).map(|_| sample_uniform(rng)).collect();
    let weights = (0..=s.lmax())
        .map(|l| {
            let sd = (4.0 * PI * s.get(l) / k as f64).sqrt();
            (0..k).map(|_| sd * dist.draw(rng)).collect()
        })
        .collect();
    let prov = Provenance {
        generator: dist.name().into(),
        parameters: vec![("K".into(), k as f64)],
        ..Provenance::default()
    };
    SparseField::shared(dirs, weights, prov)
}

/// `Σ_{ℓ1,ℓ2} √(C_ℓ1 C_ℓ2) :z_ℓ1 z_ℓ2: = (Σ √C_ℓ z_ℓ)² − Σ C_ℓ`.
pub fn fnl_quadratic(s: &PowerSpectrum, z: &[f64]) -> f64 {
    let lin: f64 = z.iter().enumerate().map(|(l, z)| s.get(l).sqrt() * z).sum();
    lin * lin - s.values().iter().sum::<f64>()
}

/// `η_ℓ = √(4πC_ℓ) z_ℓ + 3 f_NL Σ_{ℓ1,ℓ2} √(C_ℓ1 C_ℓ2) :z_ℓ1 z_ℓ2:`.
pub fn fnl_weights_from(s: &PowerSpectrum, f_nl: f64, z: &[f64]) -> Vec<f64> {
    let q = 3.0 * f_nl * fnl_quadratic(s, z);
    z.iter()
        .enumerate()
        .map(|(l, z)| (4.0 * PI * s.get(l)).sqrt() * z + q)
        .collect()
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Local f_NL weights with `K = 1`: one direction, then `z_0..z_L`.
pub fn gen_fnl_weights<R: Rng + ?Sized>(s: &PowerSpectrum, f_nl: f64, rng: &mut R) -> Result<SparseField> {
    let dir = sample_uniform(rng);
    let z = standard_normals(s.lmax() + 1, rng);
    let eta = fnl_weights_from(s, f_nl, &z);
    let prov = Provenance {
        generator: "fnl".into(),
        parameters: vec![("f_NL".into(), f_nl)],
        ..Provenance::default()
    };
    SparseField::shared(vec![dir], eta.into_iter().map(|w| vec![w]).collect(), prov)
}

/// `c^ℓ_{ℓ1ℓ2}` of the quadratic generator.
#[derive(Clone)]
pub enum QuadraticCoefficients {
    Zero,
    /// `3 f_NL √(C_ℓ1 C_ℓ2)`, evaluated in closed form.
    Fnl { f_nl: f64 },
    /// `√C_ℓ / (1 + |ℓ1 − ℓ2|)^γ_c`.
    Decaying { gamma_c: f64 },
    /// Arbitrary `(ℓ, ℓ1, ℓ2) ↦ c`, symmetrized in `(ℓ1, ℓ2)`.
    Custom(Arc<dyn Fn(usize, usize, usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for QuadraticCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadraticCoefficients::Zero => write!(f, "Zero"),
            QuadraticCoefficients::Fnl { f_nl } => write!(f, "Fnl {{ f_nl: {f_nl} }}"),
            QuadraticCoefficients::Decaying { gamma_c } => write!(f, "Decaying {{ gamma_c: {gamma_c} }}"),
            QuadraticCoefficients::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl QuadraticCoefficients {
    fn symmetric(&self, s: &PowerSpectrum, l: usize, a: usize, b: usize) -> f64 {
        match self {
            QuadraticCoefficients::Zero => 0.0,
            QuadraticCoefficients::Fnl { f_nl } => 3.0 * f_nl * (s.get(a) * s.get(b)).sqrt(),
            QuadraticCoefficients::Decaying { gamma_c } => {
                s.get(l).sqrt() / (1.0 + a.abs_diff(b) as f64).powf(*gamma_c)
            }
            QuadraticCoefficients::Custom(c) => 0.5 * (c(l, a, b) + c(l, b, a)),
        }
    }
}

/// Quadratic-order weights `η_ℓ = √(4πC_ℓ) z_ℓ + Σ c^ℓ_{ℓ1ℓ2} :z_ℓ1 z_ℓ2:`
/// from given standard normals `z`.
pub fn quadratic_weights_from(s: &PowerSpectrum, c: &QuadraticCoefficients, z: &[f64]) -> Vec<f64> {
    match c {
        QuadraticCoefficients::Zero => fnl_weights_from(s, 0.0, z),
        QuadraticCoefficients::Fnl { f_nl } => fnl_weights_from(s, *f_nl, z),
        _ => {
            let n = z.len();
            (0..n)
                .map(|l| {
                    let mut q = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            let wick = z[a] * z[b] - if a == b { 1.0 } else { 0.0 };
                            q += c.symmetric(s, l, a, b) * wick;
                        }
                    }
                    (4.0 * PI * s.get(l)).sqrt() * z[l] + q
                })
                .collect()
        }
    }
}

/// Quadratic Wick weights with `K = 1`, same draw order as [`gen_fnl_weights`].
pub fn gen_general_quadratic_weights<R: Rng + ?Sized>(
    s: &PowerSpectrum,
    c: &QuadraticCoefficients,
    rng: &mut R,
) -> Result<SparseField> {
    let dir = sample_uniform(rng);
    let z = standard_normals(s.lmax() + 1, rng);
    let eta = quadratic_weights_from(s, c, &z);
    let mut parameters = Vec::new();
    match c {
        QuadraticCoefficients::Fnl { f_nl } => parameters.push(("f_NL".into(), *f_nl)),
        QuadraticCoefficients::Decaying { gamma_c } => parameters.push(("gamma_c".into(), *gamma_c)),
        _ => {}
    }
    let prov = Provenance { generator: "general-quadratic".into(), parameters, ..Provenance::default() };
    SparseField::shared(vec![dir], eta.into_iter().map(|w| vec![w]).collect(), prov)
}

/// Closed-form reduced bispectrum of the f_NL weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BispectrumFormula {
    /// `6 f_NL (C_ℓ1C_ℓ2 + C_ℓ2C_ℓ3 + C_ℓ3C_ℓ1)`.
    pub first_order: f64,
    /// `(54 f_NL³/π) (Σ_ℓ C_ℓ)³`.
    pub cubic: f64,
}

impl BispectrumFormula {
    pub fn value(&self) -> f64 {
        self.first_order + self.cubic
    }
}

pub fn reduced_bispectrum_formula(s: &PowerSpectrum, f_nl: f64, l: [usize; 3]) -> BispectrumFormula {
    let c = l.map(|l| s.get(l));
    let sigma2: f64 = s.values().iter().sum();
    BispectrumFormula {
        first_order: 6.0 * f_nl * (c[0] * c[1] + c[1] * c[2] + c[2] * c[0]),
        cubic: 54.0 * f_nl.powi(3) / PI * sigma2.powi(3),
    }
}

/// Largest band limit the Wick-expansion oracles accept.
pub const MAX_ORACLE_LMAX: usize = 8;

/// `η_ℓ` of the f_NL model as a list of `(coefficient, Wick monomial)`.
fn fnl_eta_terms(s: &PowerSpectrum, f_nl: f64, ell: usize) -> Vec<(f64, WickMonomial)> {
    let mut terms = vec![((4.0 * PI * s.get(ell)).sqrt(), WickMonomial::new([ell]))];
    if f_nl != 0.0 {
        for a in 0..=s.lmax() {
            for b in 0..=s.lmax() {
                let c = 3.0 * f_nl * (s.get(a) * s.get(b)).sqrt();
                if c != 0.0 {
                    terms.push((c, WickMonomial::new([a, b])));
                }
            }
        }
    }
    terms
}

/// `E[Π_i η_{ℓ_i}]` of the f_NL weights by expanding into Wick monomials and
/// enumerating Isserlis pairings.
pub fn fnl_weight_moment_oracle(s: &PowerSpectrum, f_nl: f64, ells: &[usize]) -> Result<f64> {
    if s.lmax() > MAX_ORACLE_LMAX {
        return Err(invalid(format!(
            "oracle expansion limited to band limit {MAX_ORACLE_LMAX}, got {}",
            s.lmax()
        )));
    }
    let n = s.lmax() + 1;
    let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let factors: Vec<Vec<(f64, WickMonomial)>> = ells.iter().map(|&l| fnl_eta_terms(s, f_nl, l)).collect();
    let mut idx = vec![0usize; factors.len()];
    let mut total = Vec::new();
    loop {
        let coef: f64 = idx.iter().zip(&factors).map(|(&i, f)| f[i].0).product();
        let monos: Vec<WickMonomial> = idx.iter().zip(&factors).map(|(&i, f)| f[i].1.clone()).collect();
        let degree: usize = monos.iter().map(WickMonomial::degree).sum();
        if degree % 2 == 0 {
            total.push(coef * wick_expectation(&monos, &cov)?);
        }
        let mut p = 0;
        loop {
            if p == idx.len() {
                return Ok(crate::stats::compensated_sum(total));
            }
            idx[p] += 1;
            if idx[p] < factors[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// `(4π)⁻¹ E[η_ℓ1 η_ℓ2 η_ℓ3]` by the Isserlis oracle.
pub fn reduced_bispectrum_oracle(s: &PowerSpectrum, f_nl: f64, l: [usize; 3]) -> Result<f64> {
    Ok(fnl_weight_moment_oracle(s, f_nl, &l)? / (4.0 * PI))
}

/// `E|a_ℓm|²` of the `K = 1` f_NL field: `C_ℓ + 9 f_NL² · 2(Σ C)² / 4π`.
pub fn fnl_coefficient_variance(s: &PowerSpectrum, f_nl: f64, ell: usize) -> f64 {
    let sigma2: f64 = s.values().iter().sum();
    s.get(ell) + 9.0 * f_nl * f_nl * 2.0 * sigma2 * sigma2 / (4.0 * PI)
}

/// Monte Carlo `(4π)⁻¹ η_ℓ1 η_ℓ2 η_ℓ3` over `m` replicas; replica `r`
/// draws `z_0..z_L` from stream `r` of `seed`.
pub fn mc_reduced_bispectrum(s: &PowerSpectrum, f_nl: f64, l: [usize; 3], m: usize, seed: u64) -> Result<MeanEstimate> {
    if m < 2 {
        return Err(invalid("Monte Carlo size must be at least 2"));
    }
    if let Some(&bad) = l.iter().find(|&&x| x > s.lmax()) {
        return Err(invalid(format!("multipole {bad} above band limit {}", s.lmax())));
    }
    let samples: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng: Stream = rng::stream(seed, r);
            let z = standard_normals(s.lmax() + 1, &mut rng);
            let eta = fnl_weights_from(s, f_nl, &z);
            eta[l[0]] * eta[l[1]] * eta[l[2]] / (4.0 * PI)
        })
        .collect();
    Ok(MeanEstimate::from_samples(&samples))
}

/// Complex coefficients of the unit-weight wave at `xi` for degree `ell`,
/// `conj(Y_ℓm(ξ))`, `m = −ℓ..=ℓ`.
pub fn wave_coefficients(ell: usize, xi: &UnitVector) -> Vec<Complex64> {
    crate::specfun::sph_harm_degree(ell, xi).into_iter().map(|y| y.conj()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::gauss_legendre_grid;
    use crate::harmonic::{analyze, power_spectrum};
    use crate::rng::stream;
    use crate::spectra::whittle_matern;

    fn field(seed: u64, k: usize, lmax: usize) -> SparseField {
        let s = whittle_matern(1.5, lmax).unwrap();
        gen_iid_weights(&s, k, WeightDistribution::Gaussian, &mut stream(seed, 0)).unwrap()
    }

    fn one_wave(ell: usize, eta: f64, xi: UnitVector) -> SparseField {
        let mut w = vec![vec![0.0]; ell + 1];
        w[ell][0] = eta;
        SparseField::shared(vec![xi], w, Provenance::default()).unwrap()
    }

    #[test]
    fn rademacher_magnitudes_and_zero_spectrum() {
        let mut v = vec![1.0; 6];
        v[3] = 0.0;
        let s = PowerSpectrum::new(v).unwrap();
        let f = gen_iid_weights(&s, 4, WeightDistribution::Rademacher, &mut stream(1, 0)).unwrap();
        for l in 0..=5 {
            let want = (4.0 * PI * s.get(l) / 4.0).sqrt();
            assert!(f.weights(l).iter().all(|w| w.abs() == want));
        }
        assert!(gen_iid_weights(&s, 0, WeightDistribution::Gaussian, &mut stream(1, 0)).is_err());
    }

    #[test]
    fn gaussian_weight_variance() {
        let s = whittle_matern(1.5, 3).unwrap();
        let mut rng = stream(2, 0);
        let mut draws = Vec::new();
        for _ in 0..2500 {
            let f = gen_iid_weights(&s, 4, WeightDistribution::Gaussian, &mut rng).unwrap();
            draws.extend(f.weights(2).iter().map(|w| w * w));
        }
        let est = MeanEstimate::from_samples(&draws);
        assert!(est.within(4.0 * PI * s.get(2) / 4.0, 5.0), "{est:?}");
    }

    #[test]
    fn synthesis_examples() {
        let x = UnitVector::new(0.3, 0.1, -0.9).unwrap();
        let f = one_wave(0, 1.0, x);
        assert!((f.synthesize_at(&UnitVector::NORTH) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let f = one_wave(7, 2.5, x);
        assert!((f.synthesize_at(&x) - 2.5 * 15.0 / (4.0 * PI)).abs() < 1e-13);
    }

    #[test]
    fn synthesis_agrees_with_harmonic_expansion() {
        let f = field(3, 5, 24);
        let c = f.harmonic_coeffs();
        let mut rng = stream(3, 1);
        for _ in 0..100 {
            let x = sample_uniform(&mut rng);
            assert!((f.synthesize_at(&x) - c.evaluate(&x)).abs() < 1e-9);
        }
    }

    #[test]
    fn coefficients_match_quadrature() {
        let f = field(4, 4, 20);
        let c = f.harmonic_coeffs();
        assert!(c.conjugate_asymmetry() < 1e-12);
        let q = analyze(&f.synthesize_grid(&gauss_legendre_grid(20)).unwrap());
        let err: f64 = c.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!((err / c.norm_sqr()).sqrt() < 1e-8);
        let w = one_wave(0, 0.7, UnitVector::NORTH).harmonic_coeffs();
        assert!((w.get(0, 0).re - 0.7 / (4.0 * PI).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn exact_spectrum_matches_coefficients() {
        for k in [1, 4, 9] {
            let f = field(5 + k as u64, k, 16);
            let a = f.exact_empirical_spectrum();
            let b = power_spectrum(&f.harmonic_coeffs());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
            }
            if k == 1 {
                for l in 0..=16 {
                    assert_eq!(a[l], f.weights(l)[0] * f.weights(l)[0] / (4.0 * PI));
                }
            }
        }
        let zero = SparseField::shared(vec![UnitVector::NORTH], vec![vec![0.0]; 4], Provenance::default()).unwrap();
        assert!(zero.exact_empirical_spectrum().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn per_ell_layout_matches_shared() {
        let f = field(20, 3, 6);
        let dirs = (0..=6).map(|l| f.directions(l).to_vec()).collect();
        let g = SparseField::per_ell(dirs, f.all_weights().to_vec(), Provenance::default()).unwrap();
        let x = UnitVector::new(1.0, 2.0, 3.0).unwrap();
        assert!((f.synthesize_at(&x) - g.synthesize_at(&x)).abs() < 1e-13);
        let (a, b) = (f.harmonic_coeffs(), g.harmonic_coeffs());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).norm() < 1e-13);
        }
        for (x, y) in f.exact_empirical_spectrum().iter().zip(g.exact_empirical_spectrum()) {
            assert!((x - y).abs() < 1e-13);
        }
        assert_eq!(g.direction_count(), 21);
    }

    #[test]
    fn rotation_leaves_spectrum_unchanged() {
        let mut rng = stream(30, 0);
        let f = field(31, 6, 12);
        let r = Rotation::random(&mut rng);
        let a = power_spectrum(&f.harmonic_coeffs());
        let b = power_spectrum(&f.rotated(&r).harmonic_coeffs());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn parameter_accounting() {
        let f = field(40, 4, 128);
        assert_eq!(f.weight_count(), 516);
        assert_eq!(f.parameter_count(), 520);
        assert_eq!(f.dense_count(), 16641);
    }

    #[test]
    fn fnl_closed_form_matches_double_sum() {
        let s = whittle_matern(1.2, 12).unwrap();
        let mut rng = stream(50, 0);
        for _ in 0..20 {
            let z = standard_normals(13, &mut rng);
            let mut direct = 0.0;
            for a in 0..13 {
                for b in 0..13 {
                    let w = z[a] * z[b] - if a == b { 1.0 } else { 0.0 };
                    direct += (s.get(a) * s.get(b)).sqrt() * w;
                }
            }
            assert!((fnl_quadratic(&s, &z) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn fnl_zero_is_gaussian() {
        let s = whittle_matern(1.5, 8).unwrap();
        let a = gen_fnl_weights(&s, 0.0, &mut stream(51, 0)).unwrap();
        let b = gen_iid_weights(&s, 1, WeightDistribution::Gaussian, &mut stream(51, 0)).unwrap();
        assert_eq!(a.all_weights(), b.all_weights());
        assert_eq!(a.directions(0), b.directions(0));
    }

    #[test]
    fn quadratic_specializations() {
        let s = whittle_matern(1.5, 8).unwrap();
        let zero = gen_general_quadratic_weights(&s, &QuadraticCoefficients::Zero, &mut stream(52, 0)).unwrap();
        let gauss = gen_iid_weights(&s, 1, WeightDistribution::Gaussian, &mut stream(52, 0)).unwrap();
        assert_eq!(zero.all_weights(), gauss.all_weights());
        let q = gen_general_quadratic_weights(&s, &QuadraticCoefficients::Fnl { f_nl: 0.3 }, &mut stream(53, 0)).unwrap();
        let f = gen_fnl_weights(&s, 0.3, &mut stream(53, 0)).unwrap();
        assert_eq!(q.all_weights(), f.all_weights());
        // The generic path agrees with the closed form up to roundoff.
        let sc = s.clone();
        let custom = QuadraticCoefficients::Custom(Arc::new(move |_, a, b| 0.9 * (sc.get(a) * sc.get(b)).sqrt()));
        let z = standard_normals(9, &mut stream(54, 0));
        let a = quadratic_weights_from(&s, &custom, &z);
        let b = fnl_weights_from(&s, 0.3, &z);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_coefficients_are_symmetrized() {
        let s = whittle_matern(1.5, 4).unwrap();
        let asym = QuadraticCoefficients::Custom(Arc::new(|_, a, b| if a < b { 1.0 } else { 0.0 }));
        let sym = QuadraticCoefficients::Custom(Arc::new(|_, a, b| if a != b { 0.5 } else { 0.0 }));
        let z = standard_normals(5, &mut stream(55, 0));
        assert_eq!(quadratic_weights_from(&s, &asym, &z), quadratic_weights_from(&s, &sym, &z));
    }

    #[test]
    fn fnl_weights_are_centred() {
        let s = whittle_matern(1.5, 4).unwrap();
        let draws: Vec<Vec<f64>> = (0..20_000u64)
            .map(|r| {
                let z = standard_normals(5, &mut stream(56, r));
                fnl_weights_from(&s, 0.5, &z)
            })
            .collect();
        for l in 0..=4 {
            let col: Vec<f64> = draws.iter().map(|d| d[l]).collect();
            assert!(MeanEstimate::from_samples(&col).within(0.0, 5.0));
        }
    }

    #[test]
    fn decaying_family_is_centred() {
        let s = whittle_matern(1.5, 4).unwrap();
        let c = QuadraticCoefficients::Decaying { gamma_c: 4.0 };
        let draws: Vec<Vec<f64>> = (0..10_000u64)
            .map(|r| quadratic_weights_from(&s, &c, &standard_normals(5, &mut stream(57, r))))
            .collect();
        for l in 0..=4 {
            let col: Vec<f64> = draws.iter().map(|d| d[l]).collect();
            assert!(MeanEstimate::from_samples(&col).within(0.0, 5.0));
        }
    }

    #[test]
    fn bispectrum_formula_matches_oracle() {
        let s = whittle_matern(1.5, 4).unwrap();
        assert_eq!(reduced_bispectrum_formula(&s, 0.0, [2, 2, 2]).value(), 0.0);
        let f = reduced_bispectrum_formula(&s, 0.1, [1, 2, 3]);
        let c = s.values();
        assert!((f.first_order - 0.6 * (c[1] * c[2] + c[2] * c[3] + c[3] * c[1])).abs() < 1e-15);
        for l in [[2, 2, 2], [0, 1, 1], [1, 2, 3], [4, 4, 0]] {
            for fnl in [0.0, 0.05, 0.7] {
                let want = reduced_bispectrum_oracle(&s, fnl, l).unwrap();
                let got = reduced_bispectrum_formula(&s, fnl, l).value();
                assert!((want - got).abs() < 1e-12, "{l:?} {fnl}: {want} vs {got}");
            }
        }
    }

    #[test]
    fn coefficient_variance_matches_oracle() {
        let s = whittle_matern(1.5, 4).unwrap();
        for l in 0..=4 {
            let m2 = fnl_weight_moment_oracle(&s, 0.3, &[l, l]).unwrap() / (4.0 * PI);
            assert!((m2 - fnl_coefficient_variance(&s, 0.3, l)).abs() < 1e-12);
        }
        assert!(fnl_weight_moment_oracle(&whittle_matern(1.5, 9).unwrap(), 0.1, &[1]).is_err());
    }

    #[test]
    fn mc_bispectrum_null_and_errors() {
        let s = whittle_matern(1.5, 4).unwrap();
        let e = mc_reduced_bispectrum(&s, 0.0, [2, 2, 2], 10_000, 9).unwrap();
        assert!(e.within(0.0, 5.0));
        assert!(mc_reduced_bispectrum(&s, 0.0, [2, 2, 2], 1, 9).is_err());
        assert!(mc_reduced_bispectrum(&s, 0.0, [2, 2, 5], 10, 9).is_err());
        let again = mc_reduced_bispectrum(&s, 0.0, [2, 2, 2], 10_000, 9).unwrap();
        assert_eq!(e, again);
    }
}

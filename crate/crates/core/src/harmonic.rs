//! Spherical harmonic coefficients, grid transforms, spectrum and
//! bispectrum estimation, and least-squares weight recovery.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geom::{SphereGrid, UnitVector};
use crate::specfun::{gaunt, polar_parts, sph_harm_degree, tri_index, AssocLegendre, SymbolTriple};
use crate::spectra::PowerSpectrum;
use crate::stats::MeanEstimate;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Rings per partial sum in the forward transform.
const RING_BLOCK: usize = 8;

/// `a_ℓm` for `0 ≤ ℓ ≤ lmax`, stored at `ℓ² + ℓ + m` so each degree is a
/// contiguous run `m = −ℓ..=ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    lmax: usize,
    data: Vec<Complex64>,
}

impl HarmonicCoefficients {
    pub fn zeros(lmax: usize) -> Self {
        HarmonicCoefficients { lmax, data: vec![ZERO; (lmax + 1) * (lmax + 1)] }
    }

    pub fn from_vec(lmax: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != (lmax + 1) * (lmax + 1) {
            return Err(invalid(format!(
                "{} coefficients do not fill band limit {lmax}",
                data.len()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("non-finite harmonic coefficient"));
        }
        Ok(HarmonicCoefficients { lmax, data })
    }

    /// Real-field Gaussian coefficients with `E|a_ℓm|² = C_ℓ`.
    pub fn gaussian<R: Rng + ?Sized>(spectrum: &PowerSpectrum, rng: &mut R) -> Self {
        let lmax = spectrum.lmax();
        let mut c = Self::zeros(lmax);
        for l in 0..=lmax {
            let sd = spectrum.get(l).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            c.set(l, 0, Complex64::new(sd * re, 0.0));
            for m in 1..=l as i64 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let z = Complex64::new(re, im) * (sd / 2f64.sqrt());
                c.set(l, m, z);
                c.set(l, -m, z.conj() * sign(m));
            }
        }
        c
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn index(ell: usize, m: i64) -> usize {
        ((ell * ell + ell) as i64 + m) as usize
    }

    pub fn get(&self, ell: usize, m: i64) -> Complex64 {
        assert!(ell <= self.lmax && m.unsigned_abs() as usize <= ell);
        self.data[Self::index(ell, m)]
    }

    pub fn set(&mut self, ell: usize, m: i64, value: Complex64) {
        assert!(ell <= self.lmax && m.unsigned_abs() as usize <= ell);
        self.data[Self::index(ell, m)] = value;
    }

    /// `(a_{ℓ,−ℓ}, …, a_{ℓ,ℓ})`.
    pub fn degree(&self, ell: usize) -> &[Complex64] {
        &self.data[ell * ell..(ell + 1) * (ell + 1)]
    }

    pub fn degree_mut(&mut self, ell: usize) -> &mut [Complex64] {
        &mut self.data[ell * ell..(ell + 1) * (ell + 1)]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `self += factor · other`, over the common band.
    pub fn add_scaled(&mut self, other: &HarmonicCoefficients, factor: f64) {
        let n = self.data.len().min(other.data.len());
        for (a, b) in self.data[..n].iter_mut().zip(&other.data[..n]) {
            *a += b * factor;
        }
    }

    /// Largest `|a_{ℓ,−m} − (−1)^m conj(a_ℓm)|`; zero for a real field.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 0..=self.lmax {
            for m in 0..=l as i64 {
                let d = self.get(l, -m) - self.get(l, m).conj() * sign(m);
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Field value `Σ a_ℓm Y_ℓm(x)`, real part.
    pub fn evaluate(&self, x: &UnitVector) -> f64 {
        let ev = PointEvaluator::new(self.lmax);
        let mut out = vec![0.0; self.lmax + 1];
        ev.per_degree(self, x, &mut out);
        out.iter().sum()
    }
}

fn sign(m: i64) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Evaluates band-limited expansions at single points, reusing the
/// Legendre recurrence tables.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    table: AssocLegendre,
}

impl PointEvaluator {
    pub fn new(lmax: usize) -> Self {
        PointEvaluator { table: AssocLegendre::new(lmax) }
    }

    pub fn lmax(&self) -> usize {
        self.table.lmax()
    }

    /// `T_ℓ(x) = Σ_m a_ℓm Y_ℓm(x)` for one degree, `a` ordered `m = −ℓ..=ℓ`.
    pub fn degree(&self, a: &[Complex64], x: &UnitVector) -> Complex64 {
        let ell = (a.len() - 1) / 2;
        let (ct, st, eip) = polar_parts(x);
        let mut lam = vec![0.0; ell + 1];
        self.table.evaluate_degree(ell, ct, st, &mut lam);
        let mut total = a[ell] * lam[0];
        let mut phase = Complex64::new(1.0, 0.0);
        for m in 1..=ell {
            phase *= eip;
            let s = sign(m as i64);
            total += (a[ell + m] * phase + a[ell - m] * phase.conj() * s) * lam[m];
        }
        total
    }

    /// Real parts of `T_ℓ(x)` for `ℓ ≤ min(c.lmax, self.lmax)` into `out`.
    pub fn per_degree(&self, c: &HarmonicCoefficients, x: &UnitVector, out: &mut [f64]) {
        let lmax = c.lmax().min(self.lmax());
        let (ct, st, eip) = polar_parts(x);
        let mut lam = vec![0.0; self.table.len()];
        self.table.evaluate(ct, st, &mut lam);
        for (l, o) in out.iter_mut().enumerate().take(lmax + 1) {
            *o = (c.get(l, 0) * lam[tri_index(l, 0)]).re;
        }
        let mut phase = Complex64::new(1.0, 0.0);
        for m in 1..=lmax {
            phase *= eip;
            let s = sign(m as i64);
            for l in m..=lmax {
                let a = c.degree(l);
                let v = (a[l + m] * phase + a[l - m] * phase.conj() * s) * lam[tri_index(l, m)];
                out[l] += v.re;
            }
        }
    }
}

/// Samples of a real field on a [`SphereGrid`], row-major in colatitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: SphereGrid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: SphereGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "{} values for a {}×{} grid",
                values.len(),
                grid.n_theta(),
                grid.n_phi()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite grid value"));
        }
        Ok(GridField { grid, values })
    }

    /// Samples `f` at every node, rows in parallel.
    pub fn from_fn<F>(grid: SphereGrid, f: F) -> Result<Self>
    where
        F: Fn(&UnitVector) -> f64 + Sync,
    {
        let n_phi = grid.n_phi();
        let values: Vec<f64> = (0..grid.n_theta())
            .into_par_iter()
            .flat_map_iter(|i| {
                let g = &grid;
                let f = &f;
                (0..n_phi).map(move |j| f(&g.point(i, j)))
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_phi() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_phi();
        &self.values[i * n..(i + 1) * n]
    }
}

fn phase_table(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Pointwise harmonic sum on the grid nodes.
pub fn synthesize(c: &HarmonicCoefficients, g: &SphereGrid) -> Result<GridField> {
    if g.l_grid() < c.lmax() {
        return Err(Error::UnderResolvedGrid { grid: g.l_grid(), required: c.lmax() });
    }
    let lmax = c.lmax();
    let n_phi = g.n_phi();
    let table = AssocLegendre::new(lmax);
    let phases = phase_table(n_phi);
    let rows: Vec<(Vec<f64>, f64)> = (0..g.n_theta())
        .into_par_iter()
        .map(|i| {
            let ct = g.cos_theta()[i];
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut lam = vec![0.0; table.len()];
            table.evaluate(ct, st, &mut lam);
            // F_m = Σ_ℓ a_ℓm λ_ℓ|m|, with λ_ℓ,−m = (−1)^m λ_ℓm.
            let mut fm = vec![ZERO; 2 * lmax + 1];
            for m in 0..=lmax {
                let s = sign(m as i64);
                for l in m..=lmax {
                    let lv = lam[tri_index(l, m)];
                    fm[lmax + m] += c.get(l, m as i64) * lv;
                    if m > 0 {
                        fm[lmax - m] += c.get(l, -(m as i64)) * (lv * s);
                    }
                }
            }
            let mut row = Vec::with_capacity(n_phi);
            let mut imag: f64 = 0.0;
            for j in 0..n_phi {
                let mut v = fm[lmax];
                for m in 1..=lmax {
                    let e = phases[(m * j) % n_phi];
                    v += fm[lmax + m] * e + fm[lmax - m] * e.conj();
                }
                imag = imag.max(v.im.abs());
                row.push(v.re);
            }
            (row, imag)
        })
        .collect();
    let imag = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let scale = rows
        .iter()
        .flat_map(|r| r.0.iter())
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    if imag > 1e-10 * scale {
        return Err(invalid(format!(
            "coefficients are not those of a real field (imaginary residue {imag:e})"
        )));
    }
    GridField::new(g.clone(), rows.into_iter().flat_map(|r| r.0).collect())
}

/// Gauss–Legendre × longitude-DFT quadrature up to the grid band limit.
/// Exact to roundoff when the field is band-limited at `l_grid`; aliased
/// inputs are the caller's responsibility.
pub fn analyze(f: &GridField) -> HarmonicCoefficients {
    let g = f.grid();
    let lmax = g.l_grid();
    let n_phi = g.n_phi();
    let table = AssocLegendre::new(lmax);
    let phases = phase_table(n_phi);
    let n_tri = table.len();
    let blocks: Vec<Vec<Complex64>> = (0..g.n_theta())
        .collect::<Vec<_>>()
        .par_chunks(RING_BLOCK)
        .map(|rings| {
            let mut acc = vec![ZERO; n_tri];
            let mut lam = vec![0.0; n_tri];
            for &i in rings {
                let ct = g.cos_theta()[i];
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                table.evaluate(ct, st, &mut lam);
                let row = f.row(i);
                let w = g.area_weight(i);
                for m in 0..=lmax {
                    let mut gm = ZERO;
                    for (j, v) in row.iter().enumerate() {
                        gm += phases[(m * j) % n_phi].conj() * *v;
                    }
                    gm *= w;
                    for l in m..=lmax {
                        let t = tri_index(l, m);
                        acc[t] += gm * lam[t];
                    }
                }
            }
            acc
        })
        .collect();
    let mut tri = vec![ZERO; n_tri];
    for b in &blocks {
        for (t, v) in tri.iter_mut().zip(b) {
            *t += v;
        }
    }
    let mut c = HarmonicCoefficients::zeros(lmax);
    for l in 0..=lmax {
        for m in 0..=l {
            let a = tri[tri_index(l, m)];
            c.set(l, m as i64, a);
            if m > 0 {
                c.set(l, -(m as i64), a.conj() * sign(m as i64));
            }
        }
    }
    c
}

/// `Ĉ_ℓ = (2ℓ+1)⁻¹ Σ_m |a_ℓm|²`.
pub fn power_spectrum(c: &HarmonicCoefficients) -> Vec<f64> {
    (0..=c.lmax())
        .map(|l| c.degree(l).iter().map(|z| z.norm_sqr()).sum::<f64>() / (2 * l + 1) as f64)
        .collect()
}

/// Map-based reduced bispectrum estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BispectrumEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub count: usize,
    /// Set when no `(m1, m2, m3)` carries Gaunt weight.
    pub note: Option<String>,
}

/// Per realization, projects `Re(a_ℓ1m1 a_ℓ2m2 a_ℓ3m3)` onto the Gaunt
/// pattern, `p = Σ G·Re(aaa) / Σ G²`, then averages over realizations.
pub fn map_bispectrum_estimate(samples: &[HarmonicCoefficients], l: [usize; 3]) -> Result<BispectrumEstimate> {
    if samples.len() < 2 {
        return Err(invalid("bispectrum estimation needs at least two realizations"));
    }
    let zero = |note: &str| BispectrumEstimate {
        estimate: 0.0,
        std_error: 0.0,
        count: samples.len(),
        note: Some(note.to_string()),
    };
    let probe = SymbolTriple::zero_m(l);
    if !probe.satisfies_triangle() {
        return Ok(zero("triangle inequality violated; all Gaunt weights vanish"));
    }
    if (l[0] + l[1] + l[2]) % 2 == 1 {
        return Ok(zero("odd ℓ1+ℓ2+ℓ3; all Gaunt weights vanish"));
    }
    if let Some(s) = samples.iter().find(|s| s.lmax() < *l.iter().max().unwrap()) {
        return Err(invalid(format!("sample band limit {} below requested multipole", s.lmax())));
    }
    let mut pattern = Vec::new();
    let (l1, l2, l3) = (l[0] as i64, l[1] as i64, l[2] as i64);
    for m1 in -l1..=l1 {
        for m2 in -l2..=l2 {
            let m3 = -m1 - m2;
            if m3.abs() > l3 {
                continue;
            }
            let g = gaunt(&SymbolTriple::new(l, [m1, m2, m3])?)?;
            if g != 0.0 {
                pattern.push((m1, m2, m3, g));
            }
        }
    }
    let g2: f64 = pattern.iter().map(|p| p.3 * p.3).sum();
    if g2 == 0.0 {
        return Ok(zero("all Gaunt weights vanish"));
    }
    let per: Vec<f64> = samples
        .par_iter()
        .map(|a| {
            pattern
                .iter()
                .map(|&(m1, m2, m3, g)| g * (a.get(l[0], m1) * a.get(l[1], m2) * a.get(l[2], m3)).re)
                .sum::<f64>()
                / g2
        })
        .collect();
    let est = MeanEstimate::from_samples(&per);
    Ok(BispectrumEstimate { estimate: est.mean, std_error: est.std_error, count: est.count, note: None })
}

/// The `(2ℓ+1) × K` matrix with columns `Y_ℓ(ξ_k)`.
#[derive(Debug, Clone)]
pub struct HarmonicMatrix {
    ell: usize,
    directions: Vec<UnitVector>,
    matrix: DMatrix<Complex64>,
}

impl HarmonicMatrix {
    pub fn new(ell: usize, directions: &[UnitVector]) -> Self {
        let n = 2 * ell + 1;
        let mut matrix = DMatrix::from_element(n, directions.len(), ZERO);
        for (k, d) in directions.iter().enumerate() {
            for (i, y) in sph_harm_degree(ell, d).into_iter().enumerate() {
                matrix[(i, k)] = y;
            }
        }
        HarmonicMatrix { ell, directions: directions.to_vec(), matrix }
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn directions(&self) -> &[UnitVector] {
        &self.directions
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.directions.is_empty() {
            return Vec::new();
        }
        let mut s: Vec<f64> = self.matrix.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

/// Numerical rank of the harmonic matrix at threshold `1e-10·σ_max`.
pub fn matrix_rank(ell: usize, directions: &[UnitVector]) -> usize {
    let s = HarmonicMatrix::new(ell, directions).singular_values();
    let Some(&top) = s.first() else { return 0 };
    s.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// Least-squares weights for one multipole.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecovery {
    pub weights: Vec<f64>,
    /// Largest `|Im η_k|` of the complex least-squares solution.
    pub max_imag: f64,
    /// `‖Σ_k η_k conj(Y_ℓ(ξ_k)) − a_ℓ‖` with the real weights.
    pub residual_norm: f64,
}

/// Solves `a_ℓ ≈ Σ_k η_k conj(Y_ℓ(ξ_k))` by singular value decomposition.
pub fn recover_weights(a_ell: &[Complex64], directions: &[UnitVector]) -> Result<WeightRecovery> {
    if a_ell.len() % 2 == 0 {
        return Err(invalid("coefficient vector length must be 2ℓ+1"));
    }
    let ell = (a_ell.len() - 1) / 2;
    let k = directions.len();
    if k == 0 {
        return Err(invalid("no directions"));
    }
    if k > 2 * ell + 1 {
        return Err(invalid(format!("K = {k} exceeds 2ℓ+1 = {}", 2 * ell + 1)));
    }
    // conj(a) = Y η for real η.
    let y = HarmonicMatrix::new(ell, directions).matrix;
    let svd = y.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin >= 1e-10 * smax) {
        return Err(Error::RankDeficient { sigma_min: smin, sigma_max: smax });
    }
    let rhs = DVector::from_iterator(a_ell.len(), a_ell.iter().map(|z| z.conj()));
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let weights: Vec<f64> = sol.iter().map(|z| z.re).collect();
    let max_imag = sol.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let eta = DVector::from_iterator(k, weights.iter().map(|&w| Complex64::new(w, 0.0)));
    let residual_norm = (y * eta - rhs).norm();
    Ok(WeightRecovery { weights, max_imag, residual_norm })
}

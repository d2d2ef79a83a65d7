use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::geom::UnitVector;

/// Legendre polynomial `P_ℓ(t)` by upward three-term recurrence.
///
/// Arguments up to `1e-12` outside `[-1, 1]` are clamped.
pub fn legendre_p(ell: usize, t: f64) -> Result<f64> {
    if !(t.abs() <= 1.0 + 1e-12) {
        return Err(invalid(format!("Legendre argument {t} outside [-1, 1]")));
    }
    let t = t.clamp(-1.0, 1.0);
    let mut p0 = 1.0;
    if ell == 0 {
        return Ok(p0);
    }
    let mut p1 = t;
    for k in 2..=ell {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}

/// Fills `out[ℓ] = P_ℓ(t)` for `ℓ = 0..out.len()`. `t` must already lie in
/// `[-1, 1]`.
pub fn legendre_row(t: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    out[1] = t;
    for k in 2..n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * t * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// `(2ℓ+1)/(4π) · P_ℓ(⟨u, v⟩)`, the reproducing kernel of degree `ℓ`.
pub fn addition_kernel(ell: usize, u: &UnitVector, v: &UnitVector) -> f64 {
    let t = u.dot(v).clamp(-1.0, 1.0);
    (2 * ell + 1) as f64 / (4.0 * PI) * legendre_p(ell, t).expect("clamped argument")
}

/// Index of `(ℓ, m)`, `m ≥ 0`, in lower-triangular storage.
#[inline]
pub fn tri_index(ell: usize, m: usize) -> usize {
    ell * (ell + 1) / 2 + m
}

/// Fully normalized associated Legendre functions
/// `λ_ℓm(θ)` with `Y_ℓm(θ, φ) = λ_ℓm(θ) e^{imφ}` for `m ≥ 0`, Condon–Shortley
/// phase included.
///
/// The recurrence coefficients are precomputed for a band limit so a
/// transform can reuse them on every colatitude ring.
#[derive(Debug, Clone)]
pub struct AssocLegendre {
    lmax: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    diag: Vec<f64>,
}

impl AssocLegendre {
    pub fn new(lmax: usize) -> Self {
        let n = tri_index(lmax, lmax) + 1;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for m in 0..=lmax {
            for l in m + 2..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let i = tri_index(l, m);
                a[i] = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                b[i] = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            }
        }
        let diag = (1..=lmax)
            .map(|m| ((2 * m + 1) as f64 / (2 * m) as f64).sqrt())
            .collect();
        AssocLegendre { lmax, a, b, diag }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Number of `(ℓ, m ≥ 0)` entries.
    pub fn len(&self) -> usize {
        tri_index(self.lmax, self.lmax) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `λ_ℓm(θ)` at `tri_index(ℓ, m)` for all `ℓ ≤ lmax`.
    pub fn evaluate(&self, cos_theta: f64, sin_theta: f64, out: &mut [f64]) {
        assert!(out.len() >= self.len());
        let mut pmm = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=self.lmax {
            if m > 0 {
                pmm *= -self.diag[m - 1] * sin_theta;
            }
            out[tri_index(m, m)] = pmm;
            if m == self.lmax {
                break;
            }
            let mut p1 = cos_theta * ((2 * m + 3) as f64).sqrt() * pmm;
            out[tri_index(m + 1, m)] = p1;
            let mut p0 = pmm;
            for l in m + 2..=self.lmax {
                let i = tri_index(l, m);
                let p2 = self.a[i] * (cos_theta * p1 - self.b[i] * p0);
                out[i] = p2;
                p0 = p1;
                p1 = p2;
            }
        }
    }

    /// `λ_ℓm(θ)` for a single degree `ℓ ≤ lmax` and all `0 ≤ m ≤ ℓ`.
    pub fn evaluate_degree(&self, ell: usize, cos_theta: f64, sin_theta: f64, out: &mut [f64]) {
        assert!(ell <= self.lmax && out.len() > ell);
        let mut pmm = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=ell {
            if m > 0 {
                pmm *= -self.diag[m - 1] * sin_theta;
            }
            if m == ell {
                out[m] = pmm;
                break;
            }
            let mut p0 = pmm;
            let mut p1 = cos_theta * ((2 * m + 3) as f64).sqrt() * pmm;
            for l in m + 2..=ell {
                let i = tri_index(l, m);
                let p2 = self.a[i] * (cos_theta * p1 - self.b[i] * p0);
                p0 = p1;
                p1 = p2;
            }
            out[m] = p1;
        }
    }
}

/// `cos θ`, `sin θ` and `e^{iφ}` of a point, without trigonometric calls.
pub(crate) fn polar_parts(p: &UnitVector) -> (f64, f64, Complex64) {
    let ct = p.z().clamp(-1.0, 1.0);
    let st = (p.x() * p.x() + p.y() * p.y()).sqrt();
    let eip = if st > 0.0 {
        Complex64::new(p.x() / st, p.y() / st)
    } else {
        Complex64::new(1.0, 0.0)
    };
    (ct, st, eip)
}

/// Orthonormal complex spherical harmonic with Condon–Shortley phase.
pub fn sph_harm(ell: usize, m: i64, point: &UnitVector) -> Result<Complex64> {
    if m.unsigned_abs() as usize > ell {
        return Err(invalid(format!("|m| = {} exceeds ℓ = {ell}", m.abs())));
    }
    let row = sph_harm_degree(ell, point);
    Ok(row[(m + ell as i64) as usize])
}

/// `(Y_{ℓ,−ℓ}(p), …, Y_{ℓ,ℓ}(p))`.
pub fn sph_harm_degree(ell: usize, point: &UnitVector) -> Vec<Complex64> {
    let table = AssocLegendre::new(ell);
    let mut lam = vec![0.0; ell + 1];
    let (ct, st, eip) = polar_parts(point);
    table.evaluate_degree(ell, ct, st, &mut lam);
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * ell + 1];
    let mut phase = Complex64::new(1.0, 0.0);
    for m in 0..=ell {
        let y = phase * lam[m];
        out[ell + m] = y;
        if m > 0 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            out[ell - m] = y.conj() * sign;
        }
        phase *= eip;
    }
    out
}

/// All `Y_ℓm(p)` for `ℓ ≤ lmax` at index `ℓ² + ℓ + m`.
pub fn sph_harm_all(table: &AssocLegendre, point: &UnitVector) -> Vec<Complex64> {
    let lmax = table.lmax();
    let mut lam = vec![0.0; table.len()];
    let (ct, st, eip) = polar_parts(point);
    table.evaluate(ct, st, &mut lam);
    let mut out = vec![Complex64::new(0.0, 0.0); (lmax + 1) * (lmax + 1)];
    let mut phase = Complex64::new(1.0, 0.0);
    for m in 0..=lmax {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for l in m..=lmax {
            let y = phase * lam[tri_index(l, m)];
            let c = l * l + l;
            out[c + m] = y;
            if m > 0 {
                out[c - m] = y.conj() * sign;
            }
        }
        phase *= eip;
    }
    out
}

/// Real orthonormal harmonic: `√2(−1)^m Re Y_ℓm` for `m > 0`,
/// `√2(−1)^m Im Y_ℓ|m|` for `m < 0`, `Y_ℓ0` for `m = 0`.
pub fn real_sph_harm(ell: usize, m: i64, point: &UnitVector) -> Result<f64> {
    let y = sph_harm(ell, m.abs(), point)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    Ok(match m {
        0 => y.re,
        m if m > 0 => std::f64::consts::SQRT_2 * sign * y.re,
        _ => std::f64::consts::SQRT_2 * sign * y.im,
    })
}

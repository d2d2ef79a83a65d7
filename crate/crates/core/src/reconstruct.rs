//! Greedy sparse reconstruction: monochromatic matching pursuit and the
//! polychromatic projection-index algorithm.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geom::{fibonacci_lattice, lattice_spacing, Rotation, UnitVector};
use crate::harmonic::{power_spectrum, HarmonicCoefficients, PointEvaluator};
use crate::model::{wave_coefficients, Provenance, SparseField};
use crate::specfun::legendre_p;

/// Upper limit on the coarse lattice size.
pub const MAX_COARSE: usize = 1_000_000;

/// Strict improvements accepted per refinement round before shrinking.
const MOVES_PER_ROUND: usize = 8;

/// Relative residual below which `greedy_mono` stops early.
pub const CONVERGED: f64 = 1e-10;

/// Direction search: coarse Fibonacci lattice, then ring refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Lattice size; `None` picks `16(2ℓ+1)²` capped at [`MAX_COARSE`].
    pub m_coarse: Option<usize>,
    pub refine_steps: usize,
    /// The lattice and the refinement rings are rotated by this frame.
    pub frame: Rotation,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { m_coarse: None, refine_steps: 20, frame: Rotation::IDENTITY }
    }
}

impl SearchConfig {
    pub fn coarse_size(&self, ell: usize) -> usize {
        self.m_coarse
            .unwrap_or_else(|| (16 * (2 * ell + 1) * (2 * ell + 1)).min(MAX_COARSE))
            .max(1)
    }
}

/// Outcome of a direction search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub direction: UnitVector,
    pub objective: f64,
    /// Winning index of the coarse lattice.
    pub lattice_index: usize,
    /// Ring radius of the first refinement round.
    pub start_radius: f64,
    /// Ring radius after the last round.
    pub final_radius: f64,
}

/// Maximizes `objective` over the sphere. The search runs in lattice
/// coordinates `p` and evaluates at `frame·p`, so rotating the frame
/// rotates the result.
pub fn maximize<F>(objective: F, m: usize, refine_steps: usize, frame: &Rotation) -> Result<SearchResult>
where
    F: Fn(&UnitVector) -> f64 + Sync,
{
    let lattice = fibonacci_lattice(m)?;
    let eval = |p: &UnitVector| objective(&frame.rotate(p));
    let (best_val, best) = lattice
        .par_iter()
        .enumerate()
        .map(|(i, p)| (eval(p), i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick);
    let mut p = lattice[best];
    let mut val = best_val;
    let start_radius = lattice_spacing(m);
    let mut r = start_radius;
    for _ in 0..refine_steps {
        for _ in 0..MOVES_PER_ROUND {
            let (e1, e2) = p.tangent_frame();
            let mut cand = (val, None);
            for j in 0..8 {
                let q = p.offset(&e1, &e2, r, 2.0 * PI * j as f64 / 8.0);
                let v = eval(&q);
                if v > cand.0 {
                    cand = (v, Some(q));
                }
            }
            match cand.1 {
                Some(q) => {
                    p = q;
                    val = cand.0;
                }
                None => break,
            }
        }
        r *= 0.5;
    }
    if refine_steps > 0 {
        (p, val) = polish(&eval, p, val);
    }
    Ok(SearchResult {
        direction: frame.rotate(&p),
        objective: val,
        lattice_index: best,
        start_radius,
        final_radius: r,
    })
}

/// Newton steps in exponential-map coordinates with central differences.
/// Value comparisons alone cannot resolve a smooth maximum below ~1e-8 rad.
fn polish<E: Fn(&UnitVector) -> f64>(eval: &E, mut p: UnitVector, mut val: f64) -> (UnitVector, f64) {
    use std::f64::consts::FRAC_PI_4;
    for h in [1e-3, 1e-4, 1e-5, 1e-5] {
        let (e1, e2) = p.tangent_frame();
        let at = |r: f64, a: f64| eval(&p.offset(&e1, &e2, r, a));
        let d = h * 2f64.sqrt();
        let (fxp, fyp, fxm, fym) = (at(h, 0.0), at(h, PI / 2.0), at(h, PI), at(h, 1.5 * PI));
        let (fpp, fmp, fmm, fpm) = (at(d, FRAC_PI_4), at(d, 3.0 * FRAC_PI_4), at(d, 5.0 * FRAC_PI_4), at(d, 7.0 * FRAC_PI_4));
        let gx = (fxp - fxm) / (2.0 * h);
        let gy = (fyp - fym) / (2.0 * h);
        let hxx = (fxp - 2.0 * val + fxm) / (h * h);
        let hyy = (fyp - 2.0 * val + fym) / (h * h);
        let hxy = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        let det = hxx * hyy - hxy * hxy;
        if !(hxx < 0.0 && det > 0.0) {
            continue;
        }
        let dx = -(hyy * gx - hxy * gy) / det;
        let dy = -(hxx * gy - hxy * gx) / det;
        let len = dx.hypot(dy);
        if !(len > 0.0) || len > 4.0 * h.max(1e-4) {
            continue;
        }
        let q = p.offset(&e1, &e2, len, dy.atan2(dx));
        let v = eval(&q);
        if v >= val - 1e-14 * val.abs() {
            p = q;
            val = v;
        }
    }
    (p, val)
}

// Larger value wins; equal values go to the lower index.
fn pick(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn degree_of(a: &[Complex64]) -> Result<usize> {
    if a.len() % 2 == 0 {
        return Err(invalid(format!("{} coefficients is not 2ℓ+1 for any ℓ", a.len())));
    }
    Ok((a.len() - 1) / 2)
}

/// `argmax_x |T_ℓ(x)|²` with `T_ℓ(x) = Σ_m a_m Y_ℓm(x)`.
pub fn argmax_direction(a_res: &[Complex64], config: &SearchConfig) -> Result<SearchResult> {
    let ell = degree_of(a_res)?;
    let m = config.coarse_size(ell);
    let ev = PointEvaluator::new(ell);
    let objective = |x: &UnitVector| ev.degree(a_res, x).norm_sqr();
    maximize(objective, m, config.refine_steps, &config.frame)
}

fn vec_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn conj_asymmetry(a: &[Complex64]) -> f64 {
    let ell = (a.len() - 1) / 2;
    (0..=ell)
        .map(|m| {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            (a[ell - m] - a[ell + m].conj() * s).norm()
        })
        .fold(0.0, f64::max)
}

/// One matching-pursuit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonoStep {
    pub direction: UnitVector,
    /// `T_ℓ(ξ_k; k−1)`, the residual field at the chosen direction.
    pub coefficient: f64,
    /// Wave weight `η_k = 4π/(2ℓ+1) · T_ℓ(ξ_k; k−1)`.
    pub weight: f64,
    /// `‖a_ℓ(k)‖` after the update.
    pub residual_norm: f64,
    /// `max_{j<k} |P_ℓ(⟨ξ_j, ξ_k⟩)|`, zero on the first step.
    pub defect: f64,
    pub lattice_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonoStop {
    /// `K` steps completed.
    MaxK,
    /// Relative residual fell below [`CONVERGED`].
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoTrace {
    pub ell: usize,
    pub initial_norm: f64,
    pub requested_k: usize,
    pub lattice_size: usize,
    pub steps: Vec<MonoStep>,
    pub stop: MonoStop,
}

impl MonoTrace {
    pub fn final_relative_residual(&self) -> f64 {
        if self.initial_norm == 0.0 {
            return 0.0;
        }
        self.steps.last().map_or(1.0, |s| s.residual_norm / self.initial_norm)
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        std::iter::once(self.initial_norm).chain(self.steps.iter().map(|s| s.residual_norm)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoResult {
    pub trace: MonoTrace,
    /// `S^K` as a sparse field with waves only at degree `ℓ`.
    pub field: SparseField,
    /// `a_ℓ(K)`.
    pub residual: Vec<Complex64>,
}

/// Subtracts the orthogonal projection of `a` onto `u`; returns `⟨a,u⟩/‖u‖²`.
pub fn project_out(a: &mut [Complex64], u: &[Complex64]) -> Complex64 {
    let uu: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let au: Complex64 = a.iter().zip(u).map(|(a, u)| a * u.conj()).sum();
    let c = au / uu;
    for (a, u) in a.iter_mut().zip(u) {
        *a -= c * u;
    }
    c
}

/// Matching pursuit on the real-field coefficients `a_ℓ` of one degree.
pub fn greedy_mono(a_ell: &[Complex64], k: usize, config: &SearchConfig) -> Result<MonoResult> {
    let ell = degree_of(a_ell)?;
    if k < 1 {
        return Err(invalid("K must be at least 1"));
    }
    let initial_norm = vec_norm(a_ell);
    if conj_asymmetry(a_ell) > 1e-10 * initial_norm.max(f64::MIN_POSITIVE) {
        return Err(invalid("coefficients are not those of a real field"));
    }
    let mut a = a_ell.to_vec();
    let mut steps: Vec<MonoStep> = Vec::with_capacity(k);
    let mut stop = MonoStop::MaxK;
    let scale = (4.0 * PI) / (2 * ell + 1) as f64;
    for _ in 0..k {
        if vec_norm(&a) <= CONVERGED * initial_norm || initial_norm == 0.0 {
            stop = MonoStop::Converged;
            break;
        }
        let found = argmax_direction(&a, config)?;
        let xi = found.direction;
        let u = wave_coefficients(ell, &xi);
        let c = project_out(&mut a, &u);
        let defect = steps
            .iter()
            .map(|s| legendre_p(ell, s.direction.dot(&xi)).map(f64::abs))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        steps.push(MonoStep {
            direction: xi,
            coefficient: c.re / scale,
            weight: c.re,
            residual_norm: vec_norm(&a),
            defect,
            lattice_index: found.lattice_index,
        });
    }
    if stop == MonoStop::MaxK && steps.len() == k && vec_norm(&a) <= CONVERGED * initial_norm {
        stop = MonoStop::Converged;
    }
    let mut dirs = vec![Vec::new(); ell + 1];
    let mut weights = vec![Vec::new(); ell + 1];
    dirs[ell] = steps.iter().map(|s| s.direction).collect();
    weights[ell] = steps.iter().map(|s| s.weight).collect();
    let prov = Provenance {
        generator: "greedy-mono".into(),
        parameters: vec![("ell".into(), ell as f64), ("K".into(), k as f64)],
        ..Provenance::default()
    };
    let field = SparseField::per_ell(dirs, weights, prov)?;
    let trace = MonoTrace {
        ell,
        initial_norm,
        requested_k: k,
        lattice_size: config.coarse_size(ell),
        steps,
        stop,
    };
    Ok(MonoResult { trace, field, residual: a })
}

/// Two routes to the spectrum of the matching-pursuit output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonoSpectrumReport {
    /// `(4π)⁻¹ Σ_k η_k²`.
    pub from_weights: f64,
    /// `(2ℓ+1)⁻¹ ‖a_ℓ(0) − a_ℓ(K)‖²`.
    pub from_coefficients: f64,
    /// `(4π)⁻¹ · 2 Σ_k |η_k| δ_k Σ_{j<k} |η_j|`, a bound on the gap.
    pub defect_bound: f64,
    pub relative_disagreement: f64,
    /// Relative disagreement above 1e-4.
    pub flagged: bool,
    /// The run used `2ℓ+1` steps and reached relative residual ≤ 1e-6.
    pub full_run: bool,
}

pub fn empirical_spectrum_of_mono_output(trace: &MonoTrace) -> MonoSpectrumReport {
    let ell = trace.ell;
    let w: Vec<f64> = trace.steps.iter().map(|s| s.weight).collect();
    let from_weights = w.iter().map(|x| x * x).sum::<f64>() / (4.0 * PI);
    let mut s = vec![Complex64::new(0.0, 0.0); 2 * ell + 1];
    for st in &trace.steps {
        for (a, u) in s.iter_mut().zip(wave_coefficients(ell, &st.direction)) {
            *a += u * st.weight;
        }
    }
    let from_coefficients = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / (2 * ell + 1) as f64;
    let mut prefix = 0.0;
    let mut bound = 0.0;
    for (st, wk) in trace.steps.iter().zip(&w) {
        bound += wk.abs() * st.defect * prefix;
        prefix += wk.abs();
    }
    let defect_bound = 2.0 * bound / (4.0 * PI);
    let gap = (from_weights - from_coefficients).abs();
    let denom = from_weights.abs().max(from_coefficients.abs());
    let relative_disagreement = if denom == 0.0 { 0.0 } else { gap / denom };
    MonoSpectrumReport {
        from_weights,
        from_coefficients,
        defect_bound,
        relative_disagreement,
        flagged: relative_disagreement > 1e-4,
        full_run: trace.steps.len() == 2 * ell + 1 && trace.final_relative_residual() <= 1e-6,
    }
}

/// `R(ξ) = √(4π) |Σ_ℓ √Ĉ_ℓ T_ℓ(ξ)| / Σ_ℓ (2ℓ+1) Ĉ_ℓ`.
pub fn projection_index(residual: &HarmonicCoefficients, c_hat: &[f64], xi: &UnitVector) -> Result<f64> {
    let energy = energy(c_hat);
    if !(energy > 0.0) {
        return Err(Error::Degenerate("residual has zero energy".into()));
    }
    let ev = PointEvaluator::new(residual.lmax());
    Ok((4.0 * PI).sqrt() * signed_sum(&ev, residual, c_hat, xi).abs() / energy)
}

fn energy(c_hat: &[f64]) -> f64 {
    c_hat.iter().enumerate().map(|(l, c)| (2 * l + 1) as f64 * c).sum()
}

fn signed_sum(ev: &PointEvaluator, residual: &HarmonicCoefficients, c_hat: &[f64], xi: &UnitVector) -> f64 {
    let mut t = vec![0.0; residual.lmax() + 1];
    ev.per_degree(residual, xi, &mut t);
    t.iter().zip(c_hat).map(|(t, c)| c.sqrt() * t).sum()
}

/// One pass of the polychromatic loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyStep {
    /// Factor applied to the previous component before this step.
    pub commit_factor: f64,
    pub direction: UnitVector,
    /// `Ĉ_ℓ(k)` of the residual.
    pub residual_spectrum: Vec<f64>,
    /// `R_k` at the chosen direction.
    pub index: f64,
    /// `S(·;k)`, coefficients `√(4πĈ_ℓ(k)) conj(Y_ℓm(ξ_k))`.
    pub component: HarmonicCoefficients,
    pub search_start_radius: f64,
    pub search_final_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyStop {
    /// `R > 1 − ε`.
    IndexThreshold,
    /// `K` components built.
    MaxK,
    /// The residual lost all energy before either limit.
    ZeroResidual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyTrace {
    pub epsilon: f64,
    pub max_k: usize,
    pub lattice_size: usize,
    pub steps: Vec<PolyStep>,
    pub stop: PolyStop,
    /// Factor of the last commit; always 1.
    pub final_commit_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyResult {
    pub trace: PolyTrace,
    pub output: HarmonicCoefficients,
}

/// The polychromatic greedy loop, with `R(0) = 0`, `S(·;0) = 0` and the
/// final component committed with factor 1.
pub fn greedy_poly(t: &HarmonicCoefficients, epsilon: f64, k_max: usize, config: &SearchConfig) -> Result<PolyResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if k_max < 1 {
        return Err(invalid("K must be at least 1"));
    }
    let lmax = t.lmax();
    if !(energy(&power_spectrum(t)) > 0.0) {
        return Err(Error::Degenerate("input field has zero energy".into()));
    }
    let m = config.coarse_size(lmax);
    let mut residual = t.clone();
    let mut output = HarmonicCoefficients::zeros(lmax);
    let mut component = HarmonicCoefficients::zeros(lmax);
    let mut r = 0.0;
    let mut steps = Vec::new();
    let mut stop = PolyStop::MaxK;
    let ev = PointEvaluator::new(lmax);
    while r <= 1.0 - epsilon && steps.len() < k_max {
        output.add_scaled(&component, r);
        residual.add_scaled(&component, -r);
        let c_hat = power_spectrum(&residual);
        if !(energy(&c_hat) > 0.0) {
            stop = PolyStop::ZeroResidual;
            component = HarmonicCoefficients::zeros(lmax);
            break;
        }
        let res_ref = &residual;
        let c_ref = &c_hat;
        let found = maximize(
            |x| signed_sum(&ev, res_ref, c_ref, x),
            m,
            config.refine_steps,
            &config.frame,
        )?;
        let xi = found.direction;
        component = HarmonicCoefficients::zeros(lmax);
        for l in 0..=lmax {
            let eta = (4.0 * PI * c_hat[l]).sqrt();
            for (a, u) in component.degree_mut(l).iter_mut().zip(wave_coefficients(l, &xi)) {
                *a = u * eta;
            }
        }
        let commit_factor = r;
        r = projection_index(&residual, &c_hat, &xi)?;
        steps.push(PolyStep {
            commit_factor,
            direction: xi,
            residual_spectrum: c_hat,
            index: r,
            component: component.clone(),
            search_start_radius: found.start_radius,
            search_final_radius: found.final_radius,
        });
    }
    if stop != PolyStop::ZeroResidual && r > 1.0 - epsilon {
        stop = PolyStop::IndexThreshold;
    }
    output.add_scaled(&component, 1.0);
    let trace = PolyTrace { epsilon, max_k: k_max, lattice_size: m, steps, stop, final_commit_factor: 1.0 };
    Ok(PolyResult { trace, output })
}

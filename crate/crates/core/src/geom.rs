//! Sphere geometry: unit vectors, rotations, uniform sampling, quadrature
//! grids and quasi-uniform search lattices.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector {
    pub const NORTH: UnitVector = UnitVector { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes `(x, y, z)`. Fails on zero or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid(format!("cannot normalize ({x}, {y}, {z})")));
        }
        Ok(UnitVector { x: x / n, y: y / n, z: z / n })
    }

    /// Point at colatitude `theta` and longitude `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        UnitVector { x: st * cp, y: st * sp, z: ct }
    }

    /// Rebuilds a vector from components that are already unit norm, e.g.
    /// read back from a file. Renormalizes to absorb decimal roundoff.
    pub fn from_array(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    /// Keeps the components bit for bit; fails unless the norm is within
    /// 1e-12 of one.
    pub fn from_unit_array(v: [f64; 3]) -> Result<Self> {
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if !((n2 - 1.0).abs() <= 2e-12) {
            return Err(invalid(format!("({}, {}, {}) is not a unit vector", v[0], v[1], v[2])));
        }
        Ok(UnitVector { x: v[0], y: v[1], z: v[2] })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Colatitude in `[0, π]`.
    pub fn theta(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    /// Longitude in `(-π, π]`.
    pub fn phi(&self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Great-circle distance in radians.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        // atan2 form stays accurate for nearly (anti)parallel vectors.
        let cx = self.y * other.z - self.z * other.y;
        let cy = self.z * other.x - self.x * other.z;
        let cz = self.x * other.y - self.y * other.x;
        (cx * cx + cy * cy + cz * cz).sqrt().atan2(self.dot(other))
    }

    /// An orthonormal pair spanning the tangent plane at `self`.
    pub(crate) fn tangent_frame(&self) -> (UnitVector, UnitVector) {
        // Cross with the coordinate axis least aligned with self.
        let a = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            [1.0, 0.0, 0.0]
        } else if self.y.abs() <= self.z.abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let e1 = UnitVector::new(
            self.y * a[2] - self.z * a[1],
            self.z * a[0] - self.x * a[2],
            self.x * a[1] - self.y * a[0],
        )
        .expect("axis chosen to be non-parallel");
        let e2 = UnitVector::new(
            self.y * e1.z - self.z * e1.y,
            self.z * e1.x - self.x * e1.z,
            self.x * e1.y - self.y * e1.x,
        )
        .expect("cross product of orthonormal vectors");
        (e1, e2)
    }

    /// Point reached by moving `radius` radians from `self` along the tangent
    /// direction `cos(angle)·e1 + sin(angle)·e2`.
    pub(crate) fn offset(&self, e1: &UnitVector, e2: &UnitVector, radius: f64, angle: f64) -> Self {
        let (sr, cr) = radius.sin_cos();
        let (sa, ca) = angle.sin_cos();
        let t = [
            ca * e1.x + sa * e2.x,
            ca * e1.y + sa * e2.y,
            ca * e1.z + sa * e2.z,
        ];
        UnitVector::new(
            cr * self.x + sr * t[0],
            cr * self.y + sr * t[1],
            cr * self.z + sr * t[2],
        )
        .expect("offset of a unit vector stays finite")
    }
}

/// Draws a uniformly distributed direction by normalizing three independent
/// standard Gaussians.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        if let Ok(v) = UnitVector::new(x, y, z) {
            return v;
        }
    }
}

/// A proper rotation of three-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validates orthonormality and unit determinant to 1e-12.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (d - target).abs() > 1e-12 {
                    return Err(invalid("rotation matrix columns are not orthonormal"));
                }
            }
        }
        let r = Rotation { m };
        if (r.determinant() - 1.0).abs() > 1e-12 {
            return Err(invalid("rotation matrix has determinant != +1"));
        }
        Ok(r)
    }

    /// Right-handed rotation by `angle` about `axis`.
    pub fn about_axis(axis: &UnitVector, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::quaternion_matrix([c, s * axis.x, s * axis.y, s * axis.z])
    }

    /// Uniform (Haar) random rotation from a normalized Gaussian quaternion.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                return Self::quaternion_matrix([q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
            }
        }
    }

    fn quaternion_matrix(q: [f64; 4]) -> Self {
        let [w, x, y, z] = q;
        Rotation {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Rotation) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Rotation { m }
    }

    pub fn rotate(&self, v: &UnitVector) -> UnitVector {
        let m = &self.m;
        UnitVector {
            x: m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            y: m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            z: m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        }
    }
}

/// Applies `r` to `v`.
pub fn rotate(r: &Rotation, v: &UnitVector) -> UnitVector {
    r.rotate(v)
}

/// Gauss–Legendre colatitudes × equispaced longitudes.
///
/// Rows run from the north pole southwards (`cos θ` descending); longitudes
/// are `φ_j = 2πj / n_phi`. With `n_theta = l_grid + 1` and
/// `n_phi ≥ 2·l_grid + 1` the forward transform is exact for fields
/// band-limited at `l_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    l_grid: usize,
    cos_theta: Vec<f64>,
    weights: Vec<f64>,
    n_phi: usize,
}

impl SphereGrid {
    pub fn new(l_grid: usize, n_phi: usize) -> Result<Self> {
        if n_phi < 2 * l_grid + 1 {
            return Err(invalid(format!(
                "n_phi = {n_phi} is below the minimum 2·{l_grid}+1"
            )));
        }
        let (cos_theta, weights) = gauss_legendre_nodes(l_grid + 1);
        Ok(SphereGrid { l_grid, cos_theta, weights, n_phi })
    }

    pub fn l_grid(&self) -> usize {
        self.l_grid
    }
    pub fn n_theta(&self) -> usize {
        self.cos_theta.len()
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn theta(&self, i: usize) -> f64 {
        self.cos_theta[i].acos()
    }
    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    pub fn point(&self, i: usize, j: usize) -> UnitVector {
        let ct = self.cos_theta[i];
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let (sp, cp) = self.phi(j).sin_cos();
        UnitVector { x: st * cp, y: st * sp, z: ct }
    }

    /// Quadrature weight of node `(i, j)`; sums to 4π over the grid.
    pub fn area_weight(&self, i: usize) -> f64 {
        self.weights[i] * 2.0 * PI / self.n_phi as f64
    }
}

/// Grid with the minimal longitude count `2·l_grid + 1`.
pub fn gauss_legendre_grid(l_grid: usize) -> SphereGrid {
    SphereGrid::new(l_grid, 2 * l_grid + 1).expect("minimal n_phi is valid")
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre nodes (descending) and weights on `[-1, 1]` by Newton
/// iteration from the Tricomi initial guess, using symmetry about 0.
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        }
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // One more derivative at the converged node for the weight.
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        w[i] = wi;
        x[n - 1 - i] = -z;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Golden-angle spiral of `m` quasi-uniform points with half-integer offset:
/// `z_i = 1 − 2(i + ½)/m`, `φ_i = i·π(3 − √5)`.
pub fn fibonacci_lattice(m: usize) -> Result<Vec<UnitVector>> {
    if m == 0 {
        return Err(invalid("lattice size must be at least 1"));
    }
    let golden = PI * (3.0 - 5.0_f64.sqrt());
    Ok((0..m)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            UnitVector::new(r * c, r * s, z).expect("lattice point is nonzero")
        })
        .collect())
}

/// Typical nearest-neighbour spacing of an `m`-point quasi-uniform lattice.
pub fn lattice_spacing(m: usize) -> f64 {
    (4.0 * PI / m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{chi_square_gof, histogram};

    #[test]
    fn samples_are_unit_norm_and_centred() {
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mut mean = [0.0; 3];
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let v = sample_uniform(&mut rng);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            mean[0] += v.x();
            mean[1] += v.y();
            mean[2] += v.z();
            zs.push(v.z());
        }
        let bound = 3.0 * (1.0 / 3.0_f64.sqrt()) / (n as f64).sqrt();
        for m in mean {
            assert!((m / n as f64).abs() < bound, "{m}");
        }
        let counts = histogram(&zs, -1.0, 1.0, 20);
        let expected = vec![n as f64 / 20.0; 20];
        assert!(chi_square_gof(&counts, &expected, 0.999).passes());
    }

    #[test]
    fn rotate_examples() {
        let v = UnitVector::new(0.3, -0.4, 0.5).unwrap();
        assert_eq!(Rotation::IDENTITY.rotate(&v), v);
        let r = Rotation::about_axis(&UnitVector::NORTH, PI);
        let w = rotate(&r, &UnitVector::new(1.0, 0.0, 0.0).unwrap());
        assert!((w.x() + 1.0).abs() < 1e-15 && w.y().abs() < 1e-15 && w.z().abs() < 1e-15);
    }

    #[test]
    fn random_rotation_is_proper() {
        let mut rng = stream(5, 0);
        for _ in 0..100 {
            let r = Rotation::random(&mut rng);
            assert!(Rotation::from_matrix(r.matrix()).is_ok());
            let u = sample_uniform(&mut rng);
            let v = sample_uniform(&mut rng);
            let w = sample_uniform(&mut rng);
            let (ru, rv, rw) = (r.rotate(&u), r.rotate(&v), r.rotate(&w));
            assert!((ru.dot(&rv) - u.dot(&v)).abs() < 1e-12);
            assert!((rv.dot(&rw) - v.dot(&w)).abs() < 1e-12);
            assert!((ru.dot(&rw) - u.dot(&w)).abs() < 1e-12);
            assert!((ru.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn from_matrix_rejects_reflection() {
        let m = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Rotation::from_matrix(m).is_err());
        let m = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Rotation::from_matrix(m).is_err());
    }

    #[test]
    fn small_grids() {
        let g = gauss_legendre_grid(0);
        assert_eq!(g.cos_theta(), &[0.0]);
        assert!((g.weights()[0] - 2.0).abs() < 1e-15);
        let g = gauss_legendre_grid(1);
        let r = 1.0 / 3.0_f64.sqrt();
        assert!((g.cos_theta()[0] - r).abs() < 1e-15);
        assert!((g.cos_theta()[1] + r).abs() < 1e-15);
        assert!((g.weights()[0] - 1.0).abs() < 1e-15);
        assert!((g.weights()[1] - 1.0).abs() < 1e-15);
        assert_eq!(g.n_phi(), 3);
    }

    #[test]
    fn grid_rejects_too_few_longitudes() {
        assert!(SphereGrid::new(4, 8).is_err());
        assert!(SphereGrid::new(4, 9).is_ok());
    }

    #[test]
    fn p2_integrates_to_zero_and_weights_sum_to_two() {
        for l in [1, 2, 5, 16, 64, 128, 256] {
            let g = gauss_legendre_grid(l);
            let s: f64 = g.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "L={l}: {s}");
            assert!(g.weights().iter().all(|&w| w > 0.0));
            let p2: f64 = g
                .cos_theta()
                .iter()
                .zip(g.weights())
                .map(|(x, w)| w * 0.5 * (3.0 * x * x - 1.0))
                .sum();
            assert!(p2.abs() < 1e-12, "L={l}: {p2}");
        }
    }

    #[test]
    fn fibonacci_examples() {
        assert!(fibonacci_lattice(0).is_err());
        let one = fibonacci_lattice(1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].z(), 0.0);
        let pts = fibonacci_lattice(1000).unwrap();
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        let mut min = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                min = min.min(pts[i].angle_to(&pts[j]));
            }
        }
        assert!(min > 0.04, "min distance {min}");
        assert_eq!(pts, fibonacci_lattice(1000).unwrap());
    }

    #[test]
    fn tangent_offsets_stay_at_radius() {
        let c = UnitVector::new(0.2, 0.9, -0.3).unwrap();
        let (e1, e2) = c.tangent_frame();
        assert!(c.dot(&e1).abs() < 1e-15 && c.dot(&e2).abs() < 1e-15 && e1.dot(&e2).abs() < 1e-15);
        for k in 0..8 {
            let p = c.offset(&e1, &e2, 0.01, k as f64 * PI / 4.0);
            assert!((p.angle_to(&c) - 0.01).abs() < 1e-14);
        }
    }
}

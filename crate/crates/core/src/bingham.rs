//! Bingham densities over unique rotations.
//!
//! A Bingham distribution has density `∝ exp(qᵀ M Z Mᵀ q)` on S³. `M` is kept
//! in Cayley form, `M = L(q_L) · R(q_R) · diag(1, R(q_P))`, and the
//! concentrations are gauged so that `max(Z) = 0`. Densities are taken with
//! respect to the quotient space of unique rotations (area π²), which adds
//! `ln 2` to the log density on S³.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;
use crate::special::{
    bessel_i0_minus_i1_scaled, bessel_i0e, bessel_i1e, integrate_vec, log_sum_exp,
};

/// Largest admissible concentration magnitude.
pub const CONCENTRATION_CAP: f64 = 900.0;

/// Tolerance on the moment equations solved by [`fit_to_samples`].
pub const FIT_MOMENT_TOLERANCE: f64 = 1e-8;

const MAX_FIT_SWEEPS: usize = 500;

/// `ln(2π²)`, the log surface area of S³.
pub fn ln_sphere_area() -> f64 {
    (2.0 * PI * PI).ln()
}

/// Left-isoclinic matrix of `q` (`x ↦ q ⊗ x`).
pub fn left_matrix(q: &UnitQuaternion) -> Matrix4<f64> {
    let (a, b, c, d) = (q.w, q.x, q.y, q.z);
    Matrix4::new(
        a, -b, -c, -d, //
        b, a, -d, c, //
        c, d, a, -b, //
        d, -c, b, a,
    )
}

/// Right-isoclinic matrix of `q` (`x ↦ x ⊗ q`).
pub fn right_matrix(q: &UnitQuaternion) -> Matrix4<f64> {
    let (p, q1, r, s) = (q.w, q.x, q.y, q.z);
    Matrix4::new(
        p, -q1, -r, -s, //
        q1, p, s, -r, //
        r, -s, p, q1, //
        s, r, -q1, p,
    )
}

/// Orthogonal `M = L(q_L)·R(q_R)`.
pub fn cayley_m(q_l: &UnitQuaternion, q_r: &UnitQuaternion) -> Matrix4<f64> {
    left_matrix(q_l) * right_matrix(q_r)
}

/// `M · diag(1, R_P)`: rotates the distribution about its mode (column 0).
pub fn rotate_about_mode(m: &Matrix4<f64>, q_p: &UnitQuaternion) -> Matrix4<f64> {
    let r = q_p.to_rotation_matrix();
    let mut block = Matrix4::identity();
    for i in 0..3 {
        for j in 0..3 {
            block[(i + 1, j + 1)] = r[i][j];
        }
    }
    m * block
}

/// Splits a proper 4D rotation into Cayley factors with
/// `cayley_m(q_L, q_R) == m`.
pub fn cayley_factor(m: &Matrix4<f64>) -> Result<(UnitQuaternion, UnitQuaternion)> {
    if (m.determinant() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(
            "Cayley factorization needs a proper rotation (det = +1)".into(),
        ));
    }
    let col0 = m.column(0);
    let m0 = UnitQuaternion::normalize([col0[0], col0[1], col0[2], col0[3]])?;
    // L(m0)ᵀ M = diag(1, R) where R rotates by the conjugate of q_R
    let n = left_matrix(&m0).transpose() * m;
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = n[(i + 1, j + 1)];
        }
    }
    let p = UnitQuaternion::from_rotation_matrix(&r)?;
    let q_r = p.conjugate();
    let q_l = m0.multiply(&p);
    Ok((q_l, q_r))
}

/// Log normalizer of the isotropic Bingham with concentration `λ`,
/// `ln ∫_{S³} exp(-λ(1 - (m·q)²)) dq = ln(2π² e^{-λ/2} (I0(λ/2) - I1(λ/2)))`.
pub fn iso_log_norm_const(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(ln_sphere_area() + bessel_i0_minus_i1_scaled(0.5 * lambda).ln())
}

/// `d/dλ` of [`iso_log_norm_const`], i.e. `-E[1 - (m·q)²]`.
pub fn iso_log_norm_const_grad(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let a = 0.5 * lambda;
    if a < 1e-8 {
        return Ok(-0.75 + a / 8.0);
    }
    Ok(-1.0 + bessel_i1e(a) / (2.0 * a * bessel_i0_minus_i1_scaled(a)))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "isotropic concentration must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// Log normalizer and moments `E[q_i²] = ∂ ln F / ∂z_i` of a Bingham with
/// diagonal concentrations `z` (in the frame of `M`).
///
/// Uses the one-dimensional representation obtained by integrating the two
/// circle factors of Hopf coordinates in closed form:
/// `F = 2π² ∫₀¹ e^{t(a+b)/2} I0(t(a-b)/2) e^{(1-t)(c+d)/2} I0((1-t)(c-d)/2) dt`.
pub fn full_log_norm_and_moments(z: &[f64; 4]) -> Result<(f64, [f64; 4])> {
    if let Some(bad) = z.iter().find(|v| !v.is_finite() || **v > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Bingham concentrations must be <= 0, got {bad}"
        )));
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| z[j].total_cmp(&z[i]).then(i.cmp(&j)));
    let s = order.map(|i| z[i]);
    let integrand = |t: f64| {
        let u = 1.0 - t;
        let x = 0.5 * t * (s[0] - s[1]);
        let y = 0.5 * u * (s[2] - s[3]);
        let e = (t * s[0] + u * s[2]).exp();
        let (i0x, i1x) = (bessel_i0e(x), bessel_i1e(x));
        let (i0y, i1y) = (bessel_i0e(y), bessel_i1e(y));
        [
            e * i0x * i0y,
            0.5 * t * (i0x + i1x) * e * i0y,
            0.5 * t * (i0x - i1x) * e * i0y,
            0.5 * u * (i0y + i1y) * e * i0x,
            0.5 * u * (i0y - i1y) * e * i0x,
        ]
    };
    let v = integrate_vec(integrand, 0.0, 1.0, 0.0, 1e-12);
    let mut moments = [0.0; 4];
    for (slot, &i) in order.iter().enumerate() {
        moments[i] = v[slot + 1] / v[0];
    }
    Ok((ln_sphere_area() + v[0].ln(), moments))
}

/// `ln ∫_{S³} exp(qᵀ diag(z) q) dq`.
pub fn full_log_norm_const(z: &[f64; 4]) -> Result<f64> {
    Ok(full_log_norm_and_moments(z)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinghamParams {
    #[serde(rename = "q_L")]
    pub q_l: UnitQuaternion,
    #[serde(rename = "q_R")]
    pub q_r: UnitQuaternion,
    #[serde(rename = "q_P")]
    pub q_p: UnitQuaternion,
    #[serde(rename = "Z")]
    pub z: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinghamParams", into = "BinghamParams")]
pub struct BinghamDist {
    params: BinghamParams,
    m: Matrix4<f64>,
    log_norm: f64,
}

impl BinghamDist {
    pub fn new(
        q_l: UnitQuaternion,
        q_r: UnitQuaternion,
        q_p: UnitQuaternion,
        z: [f64; 4],
    ) -> Result<Self> {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "concentrations must have maximum exactly 0, got {z:?}"
            )));
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite() || **v < -CONCENTRATION_CAP) {
            return Err(Error::InvalidParameter(format!(
                "concentration {bad} outside [-{CONCENTRATION_CAP}, 0]"
            )));
        }
        let m = rotate_about_mode(&cayley_m(&q_l, &q_r), &q_p);
        let log_norm = match isotropic_lambda(&z) {
            Some(lambda) => iso_log_norm_const(lambda)?,
            None => full_log_norm_const(&z)?,
        };
        Ok(BinghamDist {
            params: BinghamParams { q_l, q_r, q_p, z },
            m,
            log_norm,
        })
    }

    /// Isotropic Bingham centered on `mode` with concentration `λ`.
    pub fn isotropic(mode: UnitQuaternion, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if lambda > CONCENTRATION_CAP {
            return Err(Error::InvalidParameter(format!(
                "isotropic concentration {lambda} exceeds cap {CONCENTRATION_CAP}"
            )));
        }
        let z = if lambda == 0.0 {
            [0.0; 4]
        } else {
            [0.0, -lambda, -lambda, -lambda]
        };
        Self::new(mode, UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY, z)
    }

    /// Bingham with arbitrary orthogonal `m` (columns paired with `z`).
    /// Improper matrices are fixed by flipping the last column, which leaves
    /// the density unchanged.
    pub fn from_matrix(m: &Matrix4<f64>, z: [f64; 4]) -> Result<Self> {
        let mut m = *m;
        if m.determinant() < 0.0 {
            let flipped = -m.column(3);
            m.set_column(3, &flipped);
        }
        let (q_l, q_r) = cayley_factor(&m)?;
        Self::new(q_l, q_r, UnitQuaternion::IDENTITY, z)
    }

    pub fn params(&self) -> &BinghamParams {
        &self.params
    }

    pub fn z(&self) -> [f64; 4] {
        self.params.z
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Concentration of an isotropic distribution.
    pub fn isotropic_lambda(&self) -> Option<f64> {
        isotropic_lambda(&self.params.z)
    }

    /// Column of `M` paired with the zero concentration.
    pub fn mode(&self) -> UnitQuaternion {
        let i = self.params.z.iter().position(|v| *v == 0.0).unwrap_or(0);
        let c = self.m.column(i);
        UnitQuaternion::normalize([c[0], c[1], c[2], c[3]]).expect("orthogonal column")
    }

    /// Log density over unique rotations.
    pub fn log_pdf(&self, q: &UnitQuaternion) -> f64 {
        let v = Vector4::new(q.w, q.x, q.y, q.z);
        let mut quad = 0.0;
        for i in 0..4 {
            let c = self.m.column(i).dot(&v);
            quad += self.params.z[i] * c * c;
        }
        LN_2 + quad - self.log_norm
    }

    pub fn pdf(&self, q: &UnitQuaternion) -> f64 {
        self.log_pdf(q).exp()
    }

    /// Rejection sampler with an angular central Gaussian envelope
    /// (Kent, Ganeiber & Mardia).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<UnitQuaternion> {
        let a = self.params.z.map(|z| -z);
        let b = acg_b(&a);
        let omega = a.map(|ai| 1.0 + 2.0 * ai / b);
        let log_m = -0.5 * (4.0 - b) + 2.0 * (4.0 / b).ln();
        let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let mut x = [0.0; 4];
            let mut norm2 = 0.0;
            for i in 0..4 {
                let g: f64 = StandardNormal.sample(rng);
                x[i] = g / omega[i].sqrt();
                norm2 += x[i] * x[i];
            }
            if norm2 < 1e-300 {
                continue;
            }
            let nrm = norm2.sqrt();
            let (mut xax, mut xox) = (0.0, 0.0);
            for i in 0..4 {
                x[i] /= nrm;
                xax += a[i] * x[i] * x[i];
                xox += omega[i] * x[i] * x[i];
            }
            let log_ratio = -xax + 2.0 * xox.ln() - log_m;
            let u: f64 = unit.sample(rng);
            if u.ln() < log_ratio {
                let q = self.m * Vector4::new(x[0], x[1], x[2], x[3]);
                out.push(UnitQuaternion::normalize([q[0], q[1], q[2], q[3]]).expect("unit"));
            }
        }
        out
    }
}

impl TryFrom<BinghamParams> for BinghamDist {
    type Error = Error;
    fn try_from(p: BinghamParams) -> Result<Self> {
        BinghamDist::new(p.q_l, p.q_r, p.q_p, p.z)
    }
}

impl From<BinghamDist> for BinghamParams {
    fn from(d: BinghamDist) -> Self {
        d.params
    }
}

fn isotropic_lambda(z: &[f64; 4]) -> Option<f64> {
    let zero = z.iter().position(|v| *v == 0.0)?;
    let rest: Vec<f64> = (0..4).filter(|&i| i != zero).map(|i| z[i]).collect();
    (rest.iter().all(|v| *v == rest[0])).then(|| -rest[0])
}

/// Solves `Σ 1/(b + 2aᵢ) = 1` for `b ∈ (0, 4]`.
fn acg_b(a: &[f64; 4]) -> f64 {
    let f = |b: f64| a.iter().map(|ai| 1.0 / (b + 2.0 * ai)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (1e-12, 4.0);
    if f(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Result of a maximum-likelihood fit.
#[derive(Clone, Debug)]
pub struct BinghamFit {
    pub dist: BinghamDist,
    /// True when some concentration was clamped at the cap.
    pub capped: bool,
    /// Largest residual `|E[q_i²] - eigenvalue_i|` at termination.
    pub residual: f64,
}

/// Maximum-likelihood Bingham fit to orientation samples.
///
/// Principal directions are the eigenvectors of the scatter matrix
/// `S = (1/n) Σ q qᵀ`, ordered by descending eigenvalue. Concentrations solve
/// `∂ ln F/∂zᵢ = eigenvalueᵢ` by cyclic bracketed bisection on
/// `[-cap, 0]` with the first concentration pinned at 0.
pub fn fit_to_samples(samples: &[UnitQuaternion]) -> Result<BinghamFit> {
    if samples.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "Bingham fit needs at least 5 samples, got {}",
            samples.len()
        )));
    }
    let mut scatter = Matrix4::<f64>::zeros();
    for q in samples {
        let v = Vector4::new(q.w, q.x, q.y, q.z);
        scatter += v * v.transpose();
    }
    scatter /= samples.len() as f64;
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut m = Matrix4::zeros();
    let mut target = [0.0; 4];
    for (slot, &i) in order.iter().enumerate() {
        m.set_column(slot, &eig.eigenvectors.column(i));
        target[slot] = eig.eigenvalues[i].max(0.0);
    }
    let total: f64 = target.iter().sum();
    for t in &mut target {
        *t /= total;
    }

    let (z, capped, residual) = solve_concentrations(&target)?;
    if capped {
        tracing::warn!(
            "Bingham fit hit the concentration cap ({CONCENTRATION_CAP}); scatter eigenvalues {target:?}"
        );
    }
    Ok(BinghamFit {
        dist: BinghamDist::from_matrix(&m, z)?,
        capped,
        residual,
    })
}

fn solve_concentrations(target: &[f64; 4]) -> Result<([f64; 4], bool, f64)> {
    let mut z = [0.0f64; 4];
    let moments = |z: &[f64; 4]| full_log_norm_and_moments(z).map(|r| r.1);
    let mut capped = [false; 4];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_FIT_SWEEPS {
        for i in 1..4 {
            let mut probe = z;
            let (mut lo, mut hi) = (-CONCENTRATION_CAP, 0.0);
            // E[q_i²] increases with z_i
            probe[i] = hi;
            if moments(&probe)?[i] <= target[i] {
                z[i] = hi;
                capped[i] = false;
                continue;
            }
            probe[i] = lo;
            if moments(&probe)?[i] >= target[i] {
                z[i] = lo;
                capped[i] = true;
                continue;
            }
            capped[i] = false;
            while hi - lo > 1e-12 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                probe[i] = mid;
                let e = moments(&probe)?[i] - target[i];
                if e.abs() < 0.1 * FIT_MOMENT_TOLERANCE {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if e > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            z[i] = 0.5 * (lo + hi);
        }
        let m = moments(&z)?;
        residual = (1..4)
            .filter(|&i| !capped[i])
            .map(|i| (m[i] - target[i]).abs())
            .fold(0.0, f64::max);
        if residual < FIT_MOMENT_TOLERANCE {
            break;
        }
    }
    Ok((z, capped.iter().any(|c| *c), residual))
}

/// Confidence-weighted mixture of Bingham components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinghamMixture {
    components: Vec<BinghamDist>,
    weights: Vec<f64>,
}

impl BinghamMixture {
    /// Weights are normalized to sum to one.
    pub fn new(components: Vec<BinghamDist>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "mixture needs matching nonempty components ({}) and weights ({})",
                components.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("mixture weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("mixture weights sum to zero".into()));
        }
        Ok(BinghamMixture {
            components,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Isotropic components with a shared concentration at each estimate,
    /// weighted by confidence.
    pub fn isotropic(estimates: &[(UnitQuaternion, f64)], lambda: f64) -> Result<Self> {
        let components = estimates
            .iter()
            .map(|(q, _)| BinghamDist::isotropic(*q, lambda))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, estimates.iter().map(|(_, c)| *c).collect())
    }

    pub fn components(&self) -> &[BinghamDist] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_pdf(&self, q: &UnitQuaternion) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_pdf(q))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, q: &UnitQuaternion) -> f64 {
        self.log_pdf(q).exp()
    }

    /// Mode of the heaviest component.
    pub fn mode(&self) -> UnitQuaternion {
        let best = self
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.components[best].mode()
    }
}

/// Rotation matrix (3×3) of `q` as an nalgebra matrix.
pub fn rotation_matrix3(q: &UnitQuaternion) -> Matrix3<f64> {
    let r = q.to_rotation_matrix();
    Matrix3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

//! Pure kernels for Poincaré-ball arithmetic: distance, exponential map at the
//! origin, norm clipping, and curvature bookkeeping.
//!
//! All kernels accept general dimension, but every pipeline in this crate
//! instantiates d = 2. Functions here are pure and stateless.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Curvature bookkeeping for the ball model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    /// Curvature, dimensionless, > 0.
    pub c: f64,
    /// Scale s = 1/√c, stored for reuse.
    pub s: f64,
}

impl BallParams {
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidSpec(format!("curvature must be positive, got {c}")));
        }
        Ok(Self { c, s: 1.0 / c.sqrt() })
    }

    /// The c = 1 ball used throughout the pipelines.
    pub fn unit() -> Self {
        Self { c: 1.0, s: 1.0 }
    }
}

impl Default for BallParams {
    fn default() -> Self {
        Self::unit()
    }
}

/// A point strictly inside the unit Poincaré ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BallPoint {
    coords: Vec<f64>,
}

impl BallPoint {
    /// Validates the strict-interior invariant.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let norm = euclid_norm(&coords);
        // NaN norms must fail validation, hence the explicit check.
        if norm.is_nan() || norm >= 1.0 {
            return Err(Error::PointOutsideBall { norm });
        }
        Ok(Self { coords })
    }

    pub fn origin(dim: usize) -> Self {
        Self { coords: vec![0.0; dim] }
    }

    /// For construction sites that already guarantee the invariant
    /// (exp map output, clipped vectors).
    pub(crate) fn from_inside(coords: Vec<f64>) -> Self {
        debug_assert!(euclid_norm(&coords) < 1.0);
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        euclid_norm(&self.coords)
    }
}

pub fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_inside(p: &[f64]) -> Result<()> {
    let norm = euclid_norm(p);
    if norm.is_nan() || norm >= 1.0 {
        return Err(Error::PointOutsideBall { norm });
    }
    Ok(())
}

/// arcosh(1 + t) for t ≥ 0, conditioned for t near 0.
///
/// Below 1e−12 the series √(2t) is exact to f64 (the next term is O(t^{3/2}));
/// above it, ln1p(t + √(t(2+t))) avoids the cancellation of the naive
/// ln(x + √(x²−1)) form.
fn acosh1p(t: f64) -> f64 {
    if t < 1e-12 {
        (2.0 * t).sqrt()
    } else {
        (t + (t * (2.0 + t)).sqrt()).ln_1p()
    }
}

/// Geodesic distance between two ball points:
/// arcosh(1 + 2‖u−v‖² / ((1−‖u‖²)(1−‖v‖²))), argument clamped to ≥ 1.
pub fn hyp_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_inside(u)?;
    check_inside(v)?;
    Ok(hyp_distance_inside(u, v))
}

/// Distance kernel without the interior check, for hot loops whose inputs are
/// already maintained inside the ball.
#[inline]
pub(crate) fn hyp_distance_inside(u: &[f64], v: &[f64]) -> f64 {
    let mut a = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (x, y) in u.iter().zip(v) {
        a += (x - y) * (x - y);
        nu += x * x;
        nv += y * y;
    }
    // t = arg − 1 is nonnegative by construction; assembling it directly
    // keeps full precision where the naive 1 + 2a/(b·c) − 1 would cancel.
    let t = (2.0 * a / ((1.0 - nu) * (1.0 - nv))).max(0.0);
    acosh1p(t)
}

/// Distance and its gradient with respect to `u`, written into `grad_u`.
///
/// With A = ‖u−v‖², B = 1−‖u‖², C = 1−‖v‖², g = 1 + 2A/(BC):
/// ∂d/∂u = (4(u−v)/(BC) + 4A·u/(B²C)) / √(g²−1).
/// The distance kink at u = v gets subgradient 0.
pub fn hyp_distance_grad_u(u: &[f64], v: &[f64], grad_u: &mut [f64]) -> f64 {
    let mut a = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (x, y) in u.iter().zip(v) {
        a += (x - y) * (x - y);
        nu += x * x;
        nv += y * y;
    }
    let b = 1.0 - nu;
    let c = 1.0 - nv;
    let t = (2.0 * a / (b * c)).max(0.0);
    let d = acosh1p(t);
    // √(g²−1) = √(t(2+t))
    let root = (t * (2.0 + t)).sqrt();
    if root < 1e-15 {
        grad_u.fill(0.0);
        return d;
    }
    let inv = 1.0 / root;
    let cu = 4.0 / (b * c) * inv;
    let cs = 4.0 * a / (b * b * c) * inv;
    for i in 0..u.len() {
        grad_u[i] = cu * (u[i] - v[i]) + cs * u[i];
    }
    d
}

/// Exponential map at the origin: tanh(√c·‖v‖)·v/(√c·‖v‖), origin for v = 0.
/// Output norm < 1/√c.
pub fn exp_map0(v: &[f64], ball: &BallParams) -> BallPoint {
    let n = euclid_norm(v);
    if n == 0.0 {
        return BallPoint::origin(v.len());
    }
    let sc = ball.c.sqrt();
    let f = (sc * n).tanh() / (sc * n);
    BallPoint::from_inside(v.iter().map(|x| x * f).collect())
}

/// Vector-Jacobian product of exp_map0: maps a cotangent at the output back
/// to the input. `v` is the pre-map vector.
///
/// With n = ‖v‖, a = √c, φ(n) = tanh(an)/(an):
/// J = φ(n)·I + φ′(n)·v vᵀ/n, φ′(n) = (an·sech²(an) − tanh(an)) / (a n²).
pub fn exp_map0_vjp(v: &[f64], cotangent: &[f64], ball: &BallParams, out: &mut [f64]) {
    let n = euclid_norm(v);
    if n < 1e-12 {
        // φ → 1, φ′ → 0 at the origin: the map is the identity to first order.
        out.copy_from_slice(cotangent);
        return;
    }
    let a = ball.c.sqrt();
    let an = a * n;
    let t = an.tanh();
    let phi = t / an;
    let sech2 = 1.0 - t * t;
    let dphi = (an * sech2 - t) / (a * n * n);
    let dot: f64 = cotangent.iter().zip(v).map(|(g, x)| g * x).sum();
    for i in 0..v.len() {
        out[i] = phi * cotangent[i] + dphi * dot * v[i] / n;
    }
}

/// If ‖p‖ ≤ r_clip, return p unchanged; otherwise rescale to norm exactly
/// r_clip − 1e−5, preserving direction.
pub fn clip_to_radius(p: &[f64], r_clip: f64) -> BallPoint {
    let n = euclid_norm(p);
    if n <= r_clip {
        BallPoint::from_inside(p.to_vec())
    } else {
        let f = (r_clip - 1e-5) / n;
        BallPoint::from_inside(p.iter().map(|x| x * f).collect())
    }
}

/// Vector-Jacobian product of clip_to_radius at input `p`: identity inside the
/// clip radius (hinge subgradient 0 exactly at ‖p‖ = r_clip), tangential
/// rescale outside, where out = ρ·p/‖p‖ with constant ρ = r_clip − 1e−5:
/// J = ρ·(I/n − p pᵀ/n³).
pub fn clip_to_radius_vjp(p: &[f64], r_clip: f64, cotangent: &[f64], out: &mut [f64]) {
    let n = euclid_norm(p);
    if n <= r_clip {
        out.copy_from_slice(cotangent);
        return;
    }
    let rho = r_clip - 1e-5;
    let dot: f64 = cotangent.iter().zip(p).map(|(g, x)| g * x).sum();
    for i in 0..p.len() {
        out[i] = rho * (cotangent[i] / n - p[i] * dot / (n * n * n));
    }
}

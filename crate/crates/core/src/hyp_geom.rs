//! Lorentz (hyperboloid) model geometry.
//!
//! A point of the curvature-`c` model is stored by its spatial component
//! `p_s ∈ R^d`; the time component is always derived as
//!
//! ```text
//! p_t = sqrt(1/c + ||p_s||²)
//! ```
//!
//! so every [`LorentzPoint`] sits on the upper sheet by construction. The
//! bilinear form is `⟨p, q⟩_B = ⟨p_s, q_s⟩ − p_t q_t`, giving `⟨p, p⟩_B = −1/c`.
//!
//! Besides the forward maps (distance, exponential map at the origin, cone
//! aperture, exterior angle, entailment penalty, geodesic interpolation) this
//! module provides closed-form gradients with respect to the spatial
//! coordinates. Those are what the loss layer chains through the linear maps.
//!
//! Quantities that suffer cancellation near coincident points are evaluated in
//! algebraically equivalent but stable forms: `−c⟨p,q⟩_B − 1` is computed as
//! `(c/2)(||p_s − q_s||² − (p_t − q_t)²)`, and the exterior-angle numerator
//! `q_t + p_t c⟨p,q⟩_B` as `c (p_t ⟨p_s,q_s⟩ − q_t ||p_s||²)`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Tolerance on the time-component residual accepted by [`LorentzPoint::from_parts`].
pub const MANIFOLD_TOLERANCE: f64 = 1e-6;

/// Below this argument, removable singularities switch to their Taylor series.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Clamps further than this from the legal domain are reported through `log`.
const CLAMP_REPORT_THRESHOLD: f64 = 1e-6;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} contains a non-finite entry")))
    }
}

fn check_curvature(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "curvature must be positive and finite, got {c}"
        )))
    }
}

/// Numerically safe `log(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function, the derivative of [`softplus`].
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A point on the curvature-`c` hyperboloid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct LorentzPoint {
    spatial: Vec<f64>,
    time: f64,
    curvature: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    spatial: Vec<f64>,
    time: f64,
    curvature: f64,
}

impl TryFrom<RawPoint> for LorentzPoint {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        LorentzPoint::from_parts(raw.spatial, raw.time, raw.curvature)
    }
}

impl From<LorentzPoint> for RawPoint {
    fn from(p: LorentzPoint) -> Self {
        RawPoint {
            spatial: p.spatial,
            time: p.time,
            curvature: p.curvature,
        }
    }
}

impl LorentzPoint {
    /// Lifts a spatial vector onto the hyperboloid.
    pub fn lift(spatial: Vec<f64>, c: f64) -> Result<Self> {
        check_curvature(c)?;
        if spatial.is_empty() {
            return Err(contract(
                "spatial component must have at least one coordinate",
            ));
        }
        check_finite(&spatial, "spatial component")?;
        let time = (1.0 / c + norm_sq(&spatial)).sqrt();
        if !time.is_finite() {
            return Err(Error::Domain("spatial norm overflows".into()));
        }
        Ok(Self {
            spatial,
            time,
            curvature: c,
        })
    }

    /// The apex `o = [0, 1/sqrt(c)]`.
    pub fn origin(dim: usize, c: f64) -> Result<Self> {
        Self::lift(vec![0.0; dim], c)
    }

    /// Rebuilds a point from stored parts, rejecting anything off the sheet.
    pub fn from_parts(spatial: Vec<f64>, time: f64, c: f64) -> Result<Self> {
        let p = Self::lift(spatial, c)?;
        let residual = (p.time - time).abs();
        if !time.is_finite() || residual > MANIFOLD_TOLERANCE * p.time.max(1.0) {
            return Err(Error::OffManifold { residual });
        }
        Ok(p)
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    pub fn into_spatial(self) -> Vec<f64> {
        self.spatial
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.spatial.len()
    }

    pub fn spatial_norm(&self) -> f64 {
        norm_sq(&self.spatial).sqrt()
    }

    pub fn is_origin(&self) -> bool {
        self.spatial.iter().all(|&x| x == 0.0)
    }
}

/// Tangent vector at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    components: Vec<f64>,
}

impl TangentVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_finite(&components, "tangent vector")?;
        Ok(Self { components })
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.components).sqrt()
    }
}

fn same_space(p: &LorentzPoint, q: &LorentzPoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(contract(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    if p.curvature != q.curvature {
        return Err(contract(format!(
            "curvature mismatch: {} vs {}",
            p.curvature, q.curvature
        )));
    }
    Ok(())
}

/// `⟨p_s, q_s⟩ − p_t q_t`.
pub fn lorentz_inner(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64> {
    same_space(p, q)?;
    Ok(dot(&p.spatial, &q.spatial) - p.time * q.time)
}

/// `−c⟨p,q⟩_B − 1`, i.e. the excess of the acosh argument over one.
fn cosh_excess(p: &LorentzPoint, q: &LorentzPoint) -> f64 {
    let c = p.curvature;
    let diff_sq: f64 = p
        .spatial
        .iter()
        .zip(&q.spatial)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dt = (norm_sq(&p.spatial) - norm_sq(&q.spatial)) / (p.time + q.time);
    let x = 0.5 * c * (diff_sq - dt * dt);
    if x < -CLAMP_REPORT_THRESHOLD {
        log::warn!("acosh argument below 1 by {:e}; clamped", -x);
    }
    x.max(0.0)
}

fn cosh_excess_grad(p: &LorentzPoint, q: &LorentzPoint) -> (Vec<f64>, Vec<f64>) {
    let c = p.curvature;
    let dt = p.time - q.time;
    let dp = p
        .spatial
        .iter()
        .zip(&q.spatial)
        .map(|(a, b)| c * ((a - b) - dt * a / p.time))
        .collect();
    let dq = p
        .spatial
        .iter()
        .zip(&q.spatial)
        .map(|(a, b)| c * ((b - a) + dt * b / q.time))
        .collect();
    (dp, dq)
}

/// Geodesic distance `acosh(−c⟨p,q⟩_B) / sqrt(c)`.
pub fn geodesic_distance(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64> {
    same_space(p, q)?;
    let x = cosh_excess(p, q);
    Ok((x + (x * (x + 2.0)).sqrt()).ln_1p() / p.curvature.sqrt())
}

/// Value plus gradients with respect to the spatial coordinates of both arguments.
#[derive(Clone, Debug)]
pub struct PairGrad {
    pub value: f64,
    pub d_p: Vec<f64>,
    pub d_q: Vec<f64>,
}

/// [`geodesic_distance`] with its gradient. At coincident points the
/// (sub)gradient zero is returned.
pub fn geodesic_distance_grad(p: &LorentzPoint, q: &LorentzPoint) -> Result<PairGrad> {
    same_space(p, q)?;
    let x = cosh_excess(p, q);
    let root = (x * (x + 2.0)).sqrt();
    let sqrt_c = p.curvature.sqrt();
    let value = (x + root).ln_1p() / sqrt_c;
    if root == 0.0 {
        let d = p.dim();
        return Ok(PairGrad {
            value,
            d_p: vec![0.0; d],
            d_q: vec![0.0; d],
        });
    }
    let scale = 1.0 / (sqrt_c * root);
    let (dxp, dxq) = cosh_excess_grad(p, q);
    Ok(PairGrad {
        value,
        d_p: dxp.into_iter().map(|g| g * scale).collect(),
        d_q: dxq.into_iter().map(|g| g * scale).collect(),
    })
}

/// Adds `w·∇_p d(p,q)` to `dp` and `w·∇_q d(p,q)` to `dq` without allocating.
/// Coincident points contribute nothing.
pub(crate) fn accumulate_distance_grad(
    p: &LorentzPoint,
    q: &LorentzPoint,
    w: f64,
    dp: &mut [f64],
    dq: &mut [f64],
) {
    let x = cosh_excess(p, q);
    let root = (x * (x + 2.0)).sqrt();
    if root == 0.0 {
        return;
    }
    let c = p.curvature;
    let scale = w * c / (c.sqrt() * root);
    let dt = p.time - q.time;
    for k in 0..p.spatial.len() {
        let (a, b) = (p.spatial[k], q.spatial[k]);
        dp[k] += scale * ((a - b) - dt * a / p.time);
        dq[k] += scale * ((b - a) + dt * b / q.time);
    }
}

/// `sinh(r)/r`, with the series `1 + r²/6` near zero.
fn sinhc(r: f64) -> f64 {
    if r < SERIES_THRESHOLD {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

/// `(d/dr sinhc(r)) / r = (r cosh r − sinh r) / r³`.
fn sinhc_slope_over_r(r: f64) -> f64 {
    if r < 1e-3 {
        1.0 / 3.0 + r * r / 30.0
    } else {
        (r * r.cosh() - r.sinh()) / (r * r * r)
    }
}

/// Spatial part of the exponential map at the origin: `sinh(||v||)/||v|| · v`.
pub fn expm_origin_spatial(v: &[f64]) -> Vec<f64> {
    let f = sinhc(norm_sq(v).sqrt());
    v.iter().map(|x| f * x).collect()
}

/// Vector-Jacobian product of [`expm_origin_spatial`]: returns `Jᵀ g`
/// (the Jacobian is symmetric).
pub fn expm_origin_spatial_vjp(v: &[f64], g: &[f64]) -> Vec<f64> {
    let r = norm_sq(v).sqrt();
    let f = sinhc(r);
    let k = sinhc_slope_over_r(r) * dot(v, g);
    v.iter().zip(g).map(|(vi, gi)| f * gi + k * vi).collect()
}

/// Exponential map at the origin.
pub fn expm_origin(v: &TangentVector, c: f64) -> Result<LorentzPoint> {
    LorentzPoint::lift(expm_origin_spatial(&v.components), c)
}

fn aperture_arg(p: &LorentzPoint, kappa: f64) -> Result<(f64, f64)> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Domain(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let n = p.spatial_norm();
    if n == 0.0 {
        return Err(Error::DegenerateParent);
    }
    Ok((2.0 * kappa / (p.curvature.sqrt() * n), n))
}

/// Cone half-aperture `asin(2κ / (sqrt(c) ||p_s||))`, clamped to `π/2`.
pub fn aperture(p: &LorentzPoint, kappa: f64) -> Result<f64> {
    let (u, _) = aperture_arg(p, kappa)?;
    Ok(u.clamp(-1.0, 1.0).asin())
}

/// [`aperture`] and its gradient with respect to `p_s`.
pub fn aperture_grad(p: &LorentzPoint, kappa: f64) -> Result<(f64, Vec<f64>)> {
    let (u, n) = aperture_arg(p, kappa)?;
    if u >= 1.0 {
        return Ok((std::f64::consts::FRAC_PI_2, vec![0.0; p.dim()]));
    }
    let scale = -u / (n * n) / (1.0 - u * u).sqrt();
    Ok((u.asin(), p.spatial.iter().map(|x| scale * x).collect()))
}

struct AngleParts {
    /// Numerator of the cosine.
    numer: f64,
    /// `sqrt(c) ||p_s|| ||r||`, the matching sine numerator.
    sine: f64,
    /// Component of `q_s` orthogonal to `p_s`.
    perp: Vec<f64>,
    perp_norm: f64,
    n: f64,
    s: f64,
    n2: f64,
}

fn angle_parts(p: &LorentzPoint, q: &LorentzPoint) -> Result<AngleParts> {
    same_space(p, q)?;
    let n2 = norm_sq(&p.spatial);
    if n2 == 0.0 {
        return Err(Error::DegenerateParent);
    }
    if cosh_excess(p, q) == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let n = n2.sqrt();
    let c = p.curvature;
    let s = dot(&p.spatial, &q.spatial);
    let a = s / n2;
    let perp: Vec<f64> = p
        .spatial
        .iter()
        .zip(&q.spatial)
        .map(|(x, y)| y - a * x)
        .collect();
    let perp_norm = norm_sq(&perp).sqrt();
    Ok(AngleParts {
        numer: c * (p.time * s - q.time * n2),
        sine: c.sqrt() * n * perp_norm,
        perp,
        perp_norm,
        n,
        s,
        n2,
    })
}

/// Exterior angle of `q` at the cone apex `p`, as `atan2` of its sine and
/// cosine numerators so collinear pairs keep full precision.
pub fn exterior_angle(p: &LorentzPoint, q: &LorentzPoint) -> Result<f64> {
    let parts = angle_parts(p, q)?;
    Ok(parts.sine.atan2(parts.numer))
}

/// [`exterior_angle`] with gradients. Collinear pairs get a zero gradient.
pub fn exterior_angle_grad(p: &LorentzPoint, q: &LorentzPoint) -> Result<PairGrad> {
    let AngleParts {
        numer,
        sine,
        perp,
        perp_norm,
        n,
        s,
        n2,
    } = angle_parts(p, q)?;
    let value = sine.atan2(numer);
    let d = p.dim();
    if perp_norm == 0.0 {
        return Ok(PairGrad {
            value,
            d_p: vec![0.0; d],
            d_q: vec![0.0; d],
        });
    }
    let c = p.curvature;
    let rc = c.sqrt();
    let (pt, qt) = (p.time, q.time);
    let h2 = numer * numer + sine * sine;
    let r2 = perp_norm * perp_norm;

    let mut d_p = Vec::with_capacity(d);
    let mut d_q = Vec::with_capacity(d);
    for i in 0..d {
        let (a, b, r) = (p.spatial[i], q.spatial[i], perp[i]);
        let dn_p = c * (a / pt * s + pt * b - 2.0 * qt * a);
        let dn_q = c * (pt * a - b / qt * n2);
        let dy_p = rc * (r2 * a - s * r) / (n * perp_norm);
        let dy_q = rc * n * r / perp_norm;
        d_p.push((numer * dy_p - sine * dn_p) / h2);
        d_q.push((numer * dy_q - sine * dn_q) / h2);
    }
    Ok(PairGrad { value, d_p, d_q })
}

/// `softplus(ext(p, q) − aper(p))`. Positive even for satisfied cones.
pub fn entailment_penalty(p: &LorentzPoint, q: &LorentzPoint, kappa: f64) -> Result<f64> {
    let ext = exterior_angle(p, q)?;
    let aper = aperture(p, kappa)?;
    Ok(softplus(ext - aper))
}

/// [`entailment_penalty`] with gradients.
pub fn entailment_penalty_grad(p: &LorentzPoint, q: &LorentzPoint, kappa: f64) -> Result<PairGrad> {
    let ext = exterior_angle_grad(p, q)?;
    let (aper, daper) = aperture_grad(p, kappa)?;
    let z = ext.value - aper;
    let w = sigmoid(z);
    Ok(PairGrad {
        value: softplus(z),
        d_p: ext
            .d_p
            .iter()
            .zip(&daper)
            .map(|(e, a)| w * (e - a))
            .collect(),
        d_q: ext.d_q.iter().map(|e| w * e).collect(),
    })
}

/// `sinh(u) / sinh(a)` for `0 ≤ u ≤ a`, overflow-safe for large `a`.
fn sinh_ratio(u: f64, a: f64) -> f64 {
    if a > 20.0 {
        (u - a).exp() * (-(-2.0 * u).exp_m1()) / (-(-2.0 * a).exp_m1())
    } else {
        u.sinh() / a.sinh()
    }
}

/// Point at fraction `t` along the geodesic from `p` to `q`.
pub fn geodesic_interpolate(p: &LorentzPoint, q: &LorentzPoint, t: f64) -> Result<LorentzPoint> {
    same_space(p, q)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(contract(format!(
            "interpolation parameter {t} outside [0, 1]"
        )));
    }
    let a = p.curvature.sqrt() * geodesic_distance(p, q)?;
    if a == 0.0 {
        return Ok(p.clone());
    }
    let wp = sinh_ratio((1.0 - t) * a, a);
    let wq = sinh_ratio(t * a, a);
    let spatial = p
        .spatial
        .iter()
        .zip(&q.spatial)
        .map(|(x, y)| wp * x + wq * y)
        .collect();
    LorentzPoint::lift(spatial, p.curvature)
}

/// Largest relative disagreement between an analytic gradient and central
/// differences, `|g − fd| / (|fd| + 1e-8)`, with step `1e-5·max(1, |x_i|)`.
pub fn grad_check<F>(f: F, analytic: &[f64], x: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if analytic.len() != x.len() {
        return Err(contract(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            x.len()
        )));
    }
    if !f(x).is_finite() {
        return Err(Error::Domain(
            "objective is not finite at the check point".into(),
        ));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        if !fd.is_finite() {
            return Err(Error::Domain(format!(
                "objective not finite near coordinate {i}"
            )));
        }
        worst = worst.max((analytic[i] - fd).abs() / (fd.abs() + 1e-8));
    }
    Ok(worst)
}

//! Extraction of `(V⁺, V⁻, θ_m)` from a variance sweep.
//!
//! `V⁺ cos²(θ − θ_m) + V⁻ sin²(θ − θ_m)` is exactly `a₀ + a cos 2θ + b sin 2θ`,
//! so the fit is a three-parameter linear least-squares problem.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::measurement::{TraceId, VarianceTrace, MIN_TRACE_POINTS};

/// Relative contrast below which a trace counts as flat and `θ_m` is set to 0.
const FLAT_TOL: f64 = 1e-12;
/// Smallest acceptable ratio of normal-matrix eigenvalues.
const CONDITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureFit {
    pub id: TraceId,
    pub v_plus: f64,
    pub v_minus: f64,
    /// Phase of maximum noise, in `[0, π)`.
    pub theta_m: f64,
    pub residual_rms: f64,
}

impl QuadratureFit {
    pub fn contrast(&self) -> f64 {
        self.v_plus - self.v_minus
    }

    /// Model value at LO phase `theta`.
    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = libm::sincos(theta - self.theta_m);
        self.v_plus * c * c + self.v_minus * s * s
    }
}

/// Wraps a phase into `[0, π)`.
pub fn wrap_half_turn(x: f64) -> f64 {
    let w = x - PI * libm::floor(x / PI);
    if !(0.0..PI).contains(&w) {
        0.0
    } else {
        w
    }
}

/// Circular distance between two phases taken modulo π.
pub fn half_turn_distance(a: f64, b: f64) -> f64 {
    let d = wrap_half_turn(a - b);
    d.min(PI - d)
}

pub fn fit_trace(trace: &VarianceTrace) -> Result<QuadratureFit> {
    fit_points(trace.id(), trace.thetas(), trace.variances())
}

/// Fits arbitrary `(θ, V)` samples. Points are sorted by phase first, so the
/// result does not depend on their order.
pub fn fit_points(id: TraceId, thetas: &[f64], variances: &[f64]) -> Result<QuadratureFit> {
    if thetas.len() != variances.len() {
        return Err(Error::ShapeMismatch {
            expected: thetas.len(),
            found: variances.len(),
        });
    }
    if thetas.len() < MIN_TRACE_POINTS {
        return Err(Error::InvalidTrace("fewer than 8 points"));
    }
    if thetas.iter().chain(variances).any(|v| !v.is_finite()) {
        return Err(Error::InvalidTrace("non-finite sample"));
    }
    let mut points: Vec<(f64, f64)> = thetas.iter().copied().zip(variances.iter().copied()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    check_coverage(&points)?;

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for &(theta, v) in &points {
        let (s, c) = libm::sincos(2.0 * theta);
        let row = Vector3::new(1.0, c, s);
        normal += row * row.transpose();
        rhs += row * v;
    }
    let eig = normal.symmetric_eigen().eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if !(min > CONDITION_TOL * max) {
        return Err(Error::DegenerateFit);
    }
    let coef = normal.cholesky().ok_or(Error::DegenerateFit)?.solve(&rhs);
    let (a0, a, b) = (coef[0], coef[1], coef[2]);

    let mut amplitude = libm::hypot(a, b);
    let mut theta_m = wrap_half_turn(0.5 * libm::atan2(b, a));
    if amplitude <= FLAT_TOL * a0.abs() {
        amplitude = 0.0;
        theta_m = 0.0;
    }
    let v_plus = a0 + amplitude;
    let v_minus = a0 - amplitude;

    let sq: f64 = points
        .iter()
        .map(|&(theta, v)| {
            let (s, c) = libm::sincos(2.0 * theta);
            let e = v - (a0 + a * c + b * s);
            e * e
        })
        .sum();
    let residual_rms = libm::sqrt(sq / points.len() as f64);

    if !(v_minus > 0.0) {
        return Err(Error::Unphysical { id, v_minus });
    }
    Ok(QuadratureFit {
        id,
        v_plus,
        v_minus,
        theta_m,
        residual_rms,
    })
}

// The sampled phases, each counted with one average step of width, must
// cover at least half a turn.
fn check_coverage(points: &[(f64, f64)]) -> Result<()> {
    let first = points[0].0;
    let last = points[points.len() - 1].0;
    let span = last - first;
    let step = span / (points.len() - 1) as f64;
    if span + step < PI * (1.0 - 1e-12) {
        return Err(Error::DegenerateFit);
    }
    Ok(())
}

/// Subtracts the blank trace's phase from every fit (modulo π).
pub fn reference_phase(blank: &QuadratureFit, fits: &[QuadratureFit]) -> Vec<QuadratureFit> {
    fits.iter()
        .map(|f| QuadratureFit {
            theta_m: wrap_half_turn(f.theta_m - blank.theta_m),
            ..*f
        })
        .collect()
}

/// Locates the blank among `fits` and references every fit to it.
pub fn reference_to_blank(fits: &[QuadratureFit]) -> Result<Vec<QuadratureFit>> {
    let blank = fits
        .iter()
        .find(|f| f.id == TraceId::Blank)
        .ok_or(Error::MissingReference)?;
    Ok(reference_phase(blank, fits))
}

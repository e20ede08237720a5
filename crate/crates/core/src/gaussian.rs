//! Zero-mean Gaussian states of N optical modes.
//!
//! Quadratures are ordered `(q1, p1, q2, p2, ...)` and normalized so that the
//! vacuum covariance matrix is the identity. All states in scope have zero
//! mean, so only the covariance matrix is stored.
//!
//! Two independent routes compute the homodyne variance behind a mask:
//! [`closed_form_variance`] evaluates the sum over modes directly and handles
//! any number of modes; [`pipeline_variance`] builds the covariance matrix,
//! pushes it through beam-splitter and rotation matrices and reads the first
//! diagonal element. The second route is limited to two signal modes and
//! serves as a cross-check of the first.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_range, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const UNCERTAINTY_TOL: f64 = 1e-9;
const OVERLAP_TOL: f64 = 1e-9;

/// Noise parameters of a single mode: squeezing `r`, squeezing angle `phi`
/// (radians) and mean thermal photon number `n_th`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeNoiseSpec {
    r: f64,
    phi: f64,
    n_th: f64,
}

impl ModeNoiseSpec {
    pub fn new(r: f64, phi: f64, n_th: f64) -> Result<Self> {
        check_range("r", r, f64::MIN, f64::MAX, "finite")?;
        check_range("phi", phi, f64::MIN, f64::MAX, "finite")?;
        check_range("n_th", n_th, 0.0, f64::MAX, ">= 0")?;
        Ok(Self { r, phi, n_th })
    }

    pub fn squeezed(r: f64, phi: f64) -> Result<Self> {
        Self::new(r, phi, 0.0)
    }

    /// Thermal mode with phase-insensitive variance `v_th = 1 + 2 n_th`.
    pub fn thermal(v_th: f64) -> Result<Self> {
        check_range("v_th", v_th, 1.0, f64::MAX, ">= 1")?;
        Self::new(0.0, 0.0, (v_th - 1.0) / 2.0)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_th(&self) -> f64 {
        self.n_th
    }

    pub fn v_plus(&self) -> f64 {
        libm::exp(self.r) + 2.0 * self.n_th
    }

    pub fn v_minus(&self) -> f64 {
        libm::exp(-self.r) + 2.0 * self.n_th
    }
}

/// Symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]` for `n_modes` modes.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Covariance matrix of a zero-mean Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n_modes: usize,
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            n_modes,
            entries: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Validates symmetry, positive definiteness and the uncertainty
    /// relation (all symplectic eigenvalues >= 1).
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || entries.ncols() != dim {
            return Err(Error::InvalidCovariance("shape must be 2N x 2N"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry"));
        }
        let scale = entries.amax().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidCovariance("not symmetric"));
                }
            }
        }
        let cov = Self {
            n_modes: dim / 2,
            entries: symmetrize(entries),
        };
        let eig = cov.entries.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidCovariance("not positive definite"));
        }
        if cov
            .symplectic_eigenvalues()
            .iter()
            .any(|&nu| nu < 1.0 - UNCERTAINTY_TOL)
        {
            return Err(Error::InvalidCovariance("violates the uncertainty relation"));
        }
        Ok(cov)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    /// Block-diagonal combination `self ⊕ other`.
    pub fn direct_sum(&self, other: &CovarianceMatrix) -> Self {
        let a = self.entries.nrows();
        let b = other.entries.nrows();
        let mut entries = DMatrix::zeros(a + b, a + b);
        entries.view_mut((0, 0), (a, a)).copy_from(&self.entries);
        entries.view_mut((a, a), (b, b)).copy_from(&other.entries);
        Self {
            n_modes: self.n_modes + other.n_modes,
            entries,
        }
    }

    /// Symplectic eigenvalues in ascending order.
    ///
    /// They are the square roots of the (doubly degenerate) eigenvalues of
    /// the symmetric matrix `√V Ωᵀ V Ω √V`, which is similar to `ΩᵀVΩV`.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let eig = self.entries.clone().symmetric_eigen();
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0))));
        let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
        let omega = symplectic_form(self.n_modes);
        let m = symmetrize(&root * omega.transpose() * &self.entries * &omega * &root);
        let mut values: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
            .chunks(2)
            .map(|pair| libm::sqrt(((pair[0] + pair[1]) / 2.0).max(0.0)))
            .collect()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Linear map on quadratures that preserves `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    entries: DMatrix<f64>,
}

impl SymplecticOp {
    pub fn identity(n_modes: usize) -> Self {
        Self {
            entries: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    /// `self` applied after `first`, i.e. the matrix product `self · first`.
    pub fn after(&self, first: &SymplecticOp) -> Result<SymplecticOp> {
        if self.entries.nrows() != first.entries.nrows() {
            return Err(Error::ShapeMismatch {
                expected: self.entries.nrows(),
                found: first.entries.nrows(),
            });
        }
        Ok(SymplecticOp {
            entries: &self.entries * &first.entries,
        })
    }

    /// Places a two-mode operation on modes `(a, b)` of an `n_modes` system.
    pub fn embed(&self, n_modes: usize, a: usize, b: usize) -> Result<SymplecticOp> {
        if self.n_modes() != 2 {
            return Err(Error::ShapeMismatch {
                expected: 4,
                found: self.entries.nrows(),
            });
        }
        if a >= n_modes || b >= n_modes || a == b {
            return Err(Error::OutOfDomain {
                what: "mode index",
                value: a.max(b) as f64,
                allowed: "two distinct modes below n_modes",
            });
        }
        let map = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1];
        let mut entries = DMatrix::identity(2 * n_modes, 2 * n_modes);
        for &target in &map {
            entries[(target, target)] = 0.0;
        }
        for (i, &ti) in map.iter().enumerate() {
            for (j, &tj) in map.iter().enumerate() {
                entries[(ti, tj)] = self.entries[(i, j)];
            }
        }
        Ok(SymplecticOp { entries })
    }

    /// `‖S Ω Sᵀ − Ω‖∞`, elementwise.
    pub fn symplectic_defect(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        (&self.entries * &omega * self.entries.transpose() - omega).amax()
    }
}

/// Two-mode beam splitter with intensity transmission `t`, in the layout
/// `[[√T I, √(1−T) I], [√(1−T) I, −√T I]]`.
pub fn beamsplitter(t: f64) -> Result<SymplecticOp> {
    check_range("T", t, 0.0, 1.0, "[0, 1]")?;
    let a = libm::sqrt(t);
    let b = libm::sqrt(1.0 - t);
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(4, 4, &[
        a,   0.0, b,   0.0,
        0.0, a,   0.0, b,
        b,   0.0, -a,  0.0,
        0.0, b,   0.0, -a,
    ]);
    Ok(SymplecticOp { entries })
}

/// Phase rotation of mode 1 by `theta`; identity on mode 2.
pub fn rotation(theta: f64) -> SymplecticOp {
    let (s, c) = libm::sincos(theta);
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(4, 4, &[
        c,   s,   0.0, 0.0,
        -s,  c,   0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    SymplecticOp { entries }
}

/// Rotation by `theta` on a single mode of an `n_modes` system, same sign
/// convention as [`rotation`].
pub fn phase_rotation(n_modes: usize, mode: usize, theta: f64) -> Result<SymplecticOp> {
    if mode >= n_modes {
        return Err(Error::OutOfDomain {
            what: "mode index",
            value: mode as f64,
            allowed: "below n_modes",
        });
    }
    let (s, c) = libm::sincos(theta);
    let mut entries = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let q = 2 * mode;
    entries[(q, q)] = c;
    entries[(q, q + 1)] = s;
    entries[(q + 1, q)] = -s;
    entries[(q + 1, q + 1)] = c;
    Ok(SymplecticOp { entries })
}

/// Single-mode squeezed thermal covariance matrix.
pub fn squeezed_cov(spec: &ModeNoiseSpec) -> CovarianceMatrix {
    let ep = libm::exp(spec.r);
    let em = libm::exp(-spec.r);
    let (s, c) = libm::sincos(spec.phi);
    let th = 2.0 * spec.n_th;
    let off = (em - ep) * c * s;
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(2, 2, &[
        ep * c * c + em * s * s + th, off,
        off,                          ep * s * s + em * c * c + th,
    ]);
    CovarianceMatrix {
        n_modes: 1,
        entries,
    }
}

/// `S · V · Sᵀ`, symmetrized so the result is exactly symmetric.
pub fn evolve(v: &CovarianceMatrix, s: &SymplecticOp) -> Result<CovarianceMatrix> {
    if v.entries.nrows() != s.entries.nrows() {
        return Err(Error::ShapeMismatch {
            expected: v.entries.nrows(),
            found: s.entries.nrows(),
        });
    }
    Ok(CovarianceMatrix {
        n_modes: v.n_modes,
        entries: symmetrize(&s.entries * &v.entries * s.entries.transpose()),
    })
}

/// Detected quadrature variance: the first diagonal element.
pub fn homodyne_variance(v: &CovarianceMatrix) -> f64 {
    v.entries[(0, 0)]
}

fn overlap_weight_sum(modes: &[(ModeNoiseSpec, Complex64)]) -> Result<f64> {
    let total: f64 = modes.iter().map(|(_, o)| o.norm_sqr()).sum();
    if !total.is_finite() || total > 1.0 + OVERLAP_TOL {
        return Err(Error::OverlapExceedsUnity(total));
    }
    Ok(total)
}

/// Homodyne variance at LO phase `theta` for independent modes with the
/// given overlaps onto the detected mode:
/// `1 + Σ |O_k|² (V⁺_k cos² θ̃_k + V⁻_k sin² θ̃_k − 1)`, `θ̃_k = θ − φ_k − arg O_k`.
pub fn closed_form_variance(modes: &[(ModeNoiseSpec, Complex64)], theta: f64) -> Result<f64> {
    overlap_weight_sum(modes)?;
    let mut v = 1.0;
    for (spec, o) in modes {
        let (s, c) = libm::sincos(theta - spec.phi - o.arg());
        v += o.norm_sqr() * (spec.v_plus() * c * c + spec.v_minus() * s * s - 1.0);
    }
    Ok(v)
}

/// Matrix route for at most two modes: input state `v₁ ⊕ v₂ ⊕ vacuum`, local
/// rotations by `arg O_k`, beam splitters routing `|O_k|` of each mode into
/// mode 1, then `R(−θ)` and the first diagonal element.
pub fn pipeline_variance(modes: &[(ModeNoiseSpec, Complex64)], theta: f64) -> Result<f64> {
    Ok(pipeline_sweep(modes, &[theta])?[0])
}

/// [`pipeline_variance`] over several LO phases; the phase-independent part
/// of the circuit is applied once.
pub fn pipeline_sweep(modes: &[(ModeNoiseSpec, Complex64)], thetas: &[f64]) -> Result<Vec<f64>> {
    if modes.is_empty() || modes.len() > 2 {
        return Err(Error::OutOfDomain {
            what: "mode count",
            value: modes.len() as f64,
            allowed: "1 or 2",
        });
    }
    let total = overlap_weight_sum(modes)?.min(1.0);
    let n = modes.len() + 1;
    let mut state = squeezed_cov(&modes[0].0);
    for (spec, _) in &modes[1..] {
        state = state.direct_sum(&squeezed_cov(spec));
    }
    state = state.direct_sum(&CovarianceMatrix::vacuum(1));

    let mut op = SymplecticOp::identity(n);
    for (k, (_, o)) in modes.iter().enumerate() {
        op = phase_rotation(n, k, o.arg())?.after(&op)?;
    }
    if modes.len() == 2 {
        let t1 = if total > 0.0 {
            (modes[0].1.norm_sqr() / total).min(1.0)
        } else {
            1.0
        };
        op = beamsplitter(t1)?.embed(n, 0, 1)?.after(&op)?;
    }
    op = beamsplitter(total)?.embed(n, 0, n - 1)?.after(&op)?;
    let mixed = evolve(&state, &op)?;
    thetas
        .iter()
        .map(|&theta| Ok(homodyne_variance(&evolve(&mixed, &phase_rotation(n, 0, -theta)?)?)))
        .collect()
}

/// Zero-mean Gaussian Wigner density
/// `exp(−½ xᵀV⁻¹x) / ((2π)^N √det V)`.
pub fn wigner_density(v: &CovarianceMatrix, x: &[f64]) -> Result<f64> {
    let dim = v.entries.nrows();
    if x.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    let chol = v.entries.clone().cholesky().ok_or(Error::Singular)?;
    let l = chol.l();
    let det_sqrt: f64 = (0..dim).map(|i| l[(i, i)]).product();
    if !(det_sqrt > 0.0) {
        return Err(Error::Singular);
    }
    let xv = nalgebra::DVector::from_column_slice(x);
    let y = chol.solve(&xv);
    let quad = xv.dot(&y);
    let norm = libm::pow(2.0 * PI, v.n_modes as f64) * det_sqrt;
    Ok(libm::exp(-0.5 * quad) / norm)
}

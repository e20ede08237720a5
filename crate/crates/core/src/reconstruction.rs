//! Inversion of fitted mask sweeps into images.
//!
//! Squeezed field: each fit gives a weight `e^{iθ_m} √(V⁺_m − V⁻_m)` that is
//! known only up to sign. The sign of a mask and of its complement is chosen
//! so that the two add up to the blank reference; the difference of the
//! pair is the `±1`-mask weight, and the Hadamard synthesis of those weights
//! is the shaped squeezed field `conj(u_lo) u_sq` up to one complex scale.
//!
//! Thermal intensity: the phase-insensitive part of each sweep is linear in
//! the mask for pixelwise-incoherent thermal light, so the same synthesis
//! recovers `I_th |u_lo|²`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit::{reference_to_blank, QuadratureFit};
use crate::measurement::TraceId;
use crate::optics::{FieldGrid, MaskSet, OverlapWeight};

/// Relative tolerance under which two sign choices count as tied.
pub const SIGN_TIE_TOL: f64 = 1e-9;

/// Blank-referenced fits of a full campaign, indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSet {
    blank: QuadratureFit,
    masks: Vec<QuadratureFit>,
    complements: Vec<QuadratureFit>,
}

impl FitSet {
    /// Collects fits for masks `0..mask_count`, their complements and the
    /// blank, and references every phase to the blank.
    pub fn new(fits: &[QuadratureFit], mask_count: usize) -> Result<Self> {
        let referenced = reference_to_blank(fits)?;
        let mut masks: Vec<Option<QuadratureFit>> = vec![None; mask_count];
        let mut complements: Vec<Option<QuadratureFit>> = vec![None; mask_count];
        let mut blank = None;
        for f in referenced {
            let slot = match f.id {
                TraceId::Blank => &mut blank,
                TraceId::Mask(m) if m < mask_count => &mut masks[m],
                TraceId::Complement(m) if m < mask_count => &mut complements[m],
                _ => {
                    return Err(Error::OutOfDomain {
                        what: "mask index",
                        value: match f.id {
                            TraceId::Mask(m) | TraceId::Complement(m) => m as f64,
                            TraceId::Blank => 0.0,
                        },
                        allowed: "below the mask count",
                    })
                }
            };
            *slot = Some(f);
        }
        let collect = |v: Vec<Option<QuadratureFit>>, what| {
            let found = v.iter().filter(|f| f.is_some()).count();
            if found != mask_count {
                return Err(Error::Incomplete {
                    what,
                    expected: mask_count,
                    found,
                });
            }
            Ok(v.into_iter().flatten().collect::<Vec<_>>())
        };
        Ok(Self {
            blank: blank.ok_or(Error::MissingReference)?,
            masks: collect(masks, "mask fits")?,
            complements: collect(complements, "complement fits")?,
        })
    }

    pub fn blank(&self) -> &QuadratureFit {
        &self.blank
    }

    pub fn masks(&self) -> &[QuadratureFit] {
        &self.masks
    }

    pub fn complements(&self) -> &[QuadratureFit] {
        &self.complements
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// `e^{iθ_m} √(V⁺_m − V⁻_m)`; the common factor `1/√(V⁺ − V⁻)` is left out.
pub fn squeezed_weight(fit: &QuadratureFit) -> OverlapWeight {
    let contrast = fit.contrast().max(0.0);
    OverlapWeight(Complex64::from_polar(libm::sqrt(contrast), fit.theta_m))
}

/// Outcome of the four-way sign test for one mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChoice {
    pub mask: i8,
    pub complement: i8,
    /// `|s·w + s̄·w̄ − w_ref|` of the chosen combination.
    pub residual: f64,
    /// Gap to the runner-up combination; zero when ambiguous.
    pub confidence: f64,
    pub ambiguous: bool,
    /// A tied alternative would change `s·w − s̄·w̄`. Ties caused by a zero
    /// weight (an empty complement, say) are ambiguous but not material.
    pub material: bool,
}

const SIGN_COMBOS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Picks `(s, s̄) ∈ {±1}²` minimizing `|s·w + s̄·w̄ − w_ref|`.
///
/// When the best two combinations tie, `(+, +)` is kept if it is among the
/// tied ones and the choice is flagged.
pub fn resolve_sign(w: Complex64, w_bar: Complex64, w_ref: Complex64) -> SignChoice {
    let mut scored: Vec<(f64, (i8, i8))> = SIGN_COMBOS
        .iter()
        .map(|&(s, sb)| ((w * s as f64 + w_bar * sb as f64 - w_ref).norm(), (s, sb)))
        .collect();
    let scale = w.norm() + w_bar.norm() + w_ref.norm();
    let tol = SIGN_TIE_TOL * scale.max(f64::MIN_POSITIVE);
    let best = scored.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let tied: Vec<(f64, (i8, i8))> = scored.iter().copied().filter(|x| x.0 - best <= tol).collect();
    if tied.len() > 1 {
        let pick = tied
            .iter()
            .find(|x| x.1 == (1, 1))
            .copied()
            .unwrap_or(tied[0]);
        let diff = |(s, sb): (i8, i8)| w * s as f64 - w_bar * sb as f64;
        let material = tied.iter().any(|x| (diff(x.1) - diff(pick.1)).norm() > tol);
        return SignChoice {
            mask: pick.1 .0,
            complement: pick.1 .1,
            residual: pick.0,
            confidence: 0.0,
            ambiguous: true,
            material,
        };
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    SignChoice {
        mask: scored[0].1 .0,
        complement: scored[0].1 .1,
        residual: scored[0].0,
        confidence: scored[1].0 - scored[0].0,
        ambiguous: false,
        material: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedWeights {
    pub mask: Vec<Complex64>,
    pub complement: Vec<Complex64>,
    pub choices: Vec<SignChoice>,
}

impl SignedWeights {
    /// Weights of the `±1` masks: signed mask weight minus signed complement weight.
    pub fn differential(&self) -> Vec<Complex64> {
        self.mask
            .iter()
            .zip(&self.complement)
            .map(|(w, wb)| w - wb)
            .collect()
    }

    pub fn ambiguous_count(&self) -> usize {
        self.choices.iter().filter(|c| c.ambiguous).count()
    }

    /// Ties that leave the reconstructed field genuinely undetermined.
    pub fn material_ambiguities(&self) -> usize {
        self.choices.iter().filter(|c| c.material).count()
    }
}

/// The reference weight's sign is fixed to `+1`.
pub fn resolve_signs(
    weights: &[OverlapWeight],
    complement_weights: &[OverlapWeight],
    reference: OverlapWeight,
) -> Result<SignedWeights> {
    if weights.len() != complement_weights.len() {
        return Err(Error::Incomplete {
            what: "complement weights",
            expected: weights.len(),
            found: complement_weights.len(),
        });
    }
    let mut out = SignedWeights {
        mask: Vec::with_capacity(weights.len()),
        complement: Vec::with_capacity(weights.len()),
        choices: Vec::with_capacity(weights.len()),
    };
    for (w, wb) in weights.iter().zip(complement_weights) {
        let choice = resolve_sign(w.0, wb.0, reference.0);
        out.mask.push(w.0 * choice.mask as f64);
        out.complement.push(wb.0 * choice.complement as f64);
        out.choices.push(choice);
    }
    Ok(out)
}

/// `U(p) = Σ_m H_m(p) · w_m` over the `±1` mask rows.
pub fn reconstruct_squeezed(differential_weights: &[Complex64], maskset: &MaskSet) -> Result<FieldGrid> {
    let field = maskset.synthesize(differential_weights)?;
    FieldGrid::new(maskset.n(), field)
}

/// How a fit is turned into a thermal weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThermalWeighting {
    /// Use `max(V⁻ − 1, 0)` instead of `V⁻`.
    pub floor_subtract: bool,
    /// Remove the squeezed mode's share of `V⁻` (see [`squeezed_leakage`]).
    pub compensate_squeezed: bool,
}

impl Default for ThermalWeighting {
    fn default() -> Self {
        Self {
            floor_subtract: true,
            compensate_squeezed: true,
        }
    }
}

impl ThermalWeighting {
    /// `|O_th,m|² ≈ V⁻_m` with nothing removed.
    pub const PAPER_EXACT: ThermalWeighting = ThermalWeighting {
        floor_subtract: false,
        compensate_squeezed: false,
    };
}

/// `V⁻_m` or, with floor subtraction, `max(V⁻_m − 1, 0)`.
pub fn thermal_weight(fit: &QuadratureFit, subtract_floor: bool) -> f64 {
    if subtract_floor {
        (fit.v_minus - 1.0).max(0.0)
    } else {
        fit.v_minus
    }
}

/// Fraction `κ` of each mask's contrast that the squeezed mode adds below
/// its phase-insensitive floor, so that `V⁻_m − 1 + κ (V⁺_m − V⁻_m)` is the
/// thermal excess alone.
///
/// For a scene whose squeezed mode has fixed `V±`, `κ = (1 − V⁻)/(V⁺ − V⁻)`
/// is a single constant. The thermal excess is additive over a mask and its
/// complement while the contrast is not, which pins `κ` by least squares
/// over all `(mask, complement, blank)` triples. Returns 0 when the
/// contrasts carry no information.
pub fn squeezed_leakage(fits: &FitSet) -> f64 {
    let floor = |f: &QuadratureFit| f.v_minus - 1.0;
    let (fb, cb) = (floor(&fits.blank), fits.blank.contrast());
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, fc) in fits.masks.iter().zip(&fits.complements) {
        let a = floor(f) + floor(fc) - fb;
        let b = f.contrast() + fc.contrast() - cb;
        num += a * b;
        den += b * b;
    }
    let scale = cb.abs().max(f64::MIN_POSITIVE);
    if den <= 1e-24 * scale * scale * fits.len() as f64 {
        0.0
    } else {
        -num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalWeights {
    pub mask: Vec<f64>,
    pub complement: Vec<f64>,
    pub blank: f64,
    /// Squeezed leakage coefficient that was removed (0 when disabled).
    pub leakage: f64,
}

impl ThermalWeights {
    pub fn from_fits(fits: &FitSet, weighting: ThermalWeighting) -> Self {
        let kappa = if weighting.compensate_squeezed {
            squeezed_leakage(fits)
        } else {
            0.0
        };
        let weight = |f: &QuadratureFit| {
            if kappa == 0.0 {
                thermal_weight(f, weighting.floor_subtract)
            } else {
                let raw = f.v_minus + kappa * f.contrast();
                if weighting.floor_subtract {
                    (raw - 1.0).max(0.0)
                } else {
                    raw
                }
            }
        };
        Self {
            mask: fits.masks.iter().map(weight).collect(),
            complement: fits.complements.iter().map(weight).collect(),
            blank: weight(&fits.blank),
            leakage: kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThermalInversion {
    /// `Σ_m H_m(p) (t_m − t̄_m)` over `±1` rows.
    #[default]
    Differential,
    /// `Σ_m h_m(p) t_m` over the `0/1` masks as measured.
    Literal,
}

/// Thermal image before and after clamping negative pixels to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalImage {
    pub n: usize,
    pub raw: Vec<f64>,
    pub clamped: Vec<f64>,
}

impl ThermalImage {
    pub fn negative_pixels(&self) -> usize {
        self.raw.iter().filter(|&&v| v < 0.0).count()
    }
}

pub fn reconstruct_thermal(
    weights: &ThermalWeights,
    maskset: &MaskSet,
    inversion: ThermalInversion,
) -> Result<ThermalImage> {
    let count = maskset.len();
    for (what, len) in [("thermal mask weights", weights.mask.len()), ("thermal complement weights", weights.complement.len())] {
        if len != count {
            return Err(Error::Incomplete {
                what,
                expected: count,
                found: len,
            });
        }
    }
    let raw = match inversion {
        ThermalInversion::Differential => {
            let diff: Vec<f64> = weights
                .mask
                .iter()
                .zip(&weights.complement)
                .map(|(t, tb)| t - tb)
                .collect();
            maskset.synthesize(&diff)?
        }
        ThermalInversion::Literal => {
            // h_m = (1 + H_m) / 2
            let signed = maskset.synthesize(&weights.mask)?;
            let total: f64 = weights.mask.iter().sum();
            signed.iter().map(|s| 0.5 * (total + s)).collect()
        }
    };
    let clamped = raw.iter().map(|&v| v.max(0.0)).collect();
    Ok(ThermalImage {
        n: maskset.n(),
        raw,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReconstructionOptions {
    pub weighting: ThermalWeighting,
    pub inversion: ThermalInversion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub shaped_squeezed: FieldGrid,
    pub thermal: ThermalImage,
    pub signed: SignedWeights,
    pub thermal_weights: ThermalWeights,
}

/// Full inversion of a campaign's fits.
pub fn reconstruct(fits: &FitSet, maskset: &MaskSet, options: ReconstructionOptions) -> Result<Reconstruction> {
    if fits.len() != maskset.len() {
        return Err(Error::Incomplete {
            what: "mask fits",
            expected: maskset.len(),
            found: fits.len(),
        });
    }
    let weights: Vec<OverlapWeight> = fits.masks.iter().map(squeezed_weight).collect();
    let complements: Vec<OverlapWeight> = fits.complements.iter().map(squeezed_weight).collect();
    let signed = resolve_signs(&weights, &complements, squeezed_weight(&fits.blank))?;
    let shaped_squeezed = reconstruct_squeezed(&signed.differential(), maskset)?;
    let thermal_weights = ThermalWeights::from_fits(fits, options.weighting);
    let thermal = reconstruct_thermal(&thermal_weights, maskset, options.inversion)?;
    Ok(Reconstruction {
        shaped_squeezed,
        thermal,
        signed,
        thermal_weights,
    })
}

/// `|Σ a*·b|² / (Σ|a|² · Σ|b|²)`.
pub fn fidelity(a: &FieldGrid, b: &FieldGrid) -> Result<f64> {
    let ip = a.inner(b)?;
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((ip.norm_sqr() / (na * nb)).min(1.0))
}

/// Pearson correlation of two equally sized images.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(sab / libm::sqrt(saa * sbb))
}

/// `max_p |a(p) − c·b(p)| / max_p |c·b(p)|` with `c` the least-squares scale
/// of `b` onto `a`.
pub fn scaled_max_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if !(bb > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / bb;
    let peak = b.iter().map(|y| (c * y).abs()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - c * y).abs())
        .fold(0.0, f64::max)
        / peak)
}

/// `‖a/‖a‖ − b/‖b‖‖` for nonnegative images, i.e. `√(2 − 2 cos ∠(a, b))`.
pub fn normalized_l2_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(libm::sqrt(
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x / na - y / nb;
                d * d
            })
            .sum::<f64>(),
    ))
}

//! Forward model of masked homodyne noise measurements.
//!
//! A [`Scene`] holds the local oscillator, one pure squeezed mode and an
//! optional thermal component. For every mask the detected variance is
//!
//! `V_m(θ) = 1 + thermal_m + |O_sq,m|² (V⁺ cos²(θ − θ_m) + V⁻ sin²(θ − θ_m) − 1)`
//!
//! with `θ_m = φ + arg O_sq,m`, followed by the loss map `V → ηV + (1 − η)`.
//! Finite averaging is modeled by scaling each point with `χ²_M / M`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::error::{check_range, Error, Result};
use crate::gaussian::{closed_form_variance, ModeNoiseSpec};
use crate::optics::{overlap, FieldGrid, Mask, MaskSet};

/// Minimum trace length accepted for fitting.
pub const MIN_TRACE_POINTS: usize = 8;
/// Default number of LO phase samples per sweep.
pub const DEFAULT_THETA_POINTS: usize = 64;

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ThermalModel {
    /// One coherent spatial mode; contributes `|O_th,m|² (V_th − 1)`.
    SingleMode { mode: FieldGrid },
    /// Pixelwise-incoherent intensity `I_th(p) ≥ 0`; contributes
    /// `Σ_p h(p) I_th(p) |u_lo(p)|² (V_th − 1)`.
    Incoherent { intensity: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalComponent {
    v_th: f64,
    model: ThermalModel,
}

impl ThermalComponent {
    pub fn new(v_th: f64, model: ThermalModel) -> Result<Self> {
        if !(v_th > 1.0) || !v_th.is_finite() {
            return Err(Error::OutOfDomain {
                what: "V_th",
                value: v_th,
                allowed: "> 1",
            });
        }
        if let ThermalModel::Incoherent { intensity } = &model {
            if intensity.iter().any(|&i| !(i >= 0.0) || !i.is_finite()) {
                return Err(Error::InvalidScene("thermal intensity must be finite and >= 0"));
            }
        }
        Ok(Self { v_th, model })
    }

    pub fn v_th(&self) -> f64 {
        self.v_th
    }

    pub fn model(&self) -> &ThermalModel {
        &self.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    lo: FieldGrid,
    squeezed_noise: ModeNoiseSpec,
    squeezed_mode: FieldGrid,
    thermal: Option<ThermalComponent>,
    efficiency: f64,
}

fn check_normalized(f: &FieldGrid, what: &'static str) -> Result<()> {
    if (f.norm_sqr() - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidScene(what));
    }
    Ok(())
}

impl Scene {
    pub fn new(lo: FieldGrid, squeezed_noise: ModeNoiseSpec, squeezed_mode: FieldGrid) -> Result<Self> {
        check_normalized(&lo, "local oscillator must be normalized")?;
        check_normalized(&squeezed_mode, "squeezed mode must be normalized")?;
        lo.check_same(&squeezed_mode)?;
        if squeezed_noise.n_th() != 0.0 {
            return Err(Error::InvalidScene("squeezed mode must be pure (n_th = 0)"));
        }
        Ok(Self {
            lo,
            squeezed_noise,
            squeezed_mode,
            thermal: None,
            efficiency: 1.0,
        })
    }

    pub fn with_thermal(mut self, thermal: ThermalComponent) -> Result<Self> {
        match thermal.model() {
            ThermalModel::SingleMode { mode } => {
                self.lo.check_same(mode)?;
                check_normalized(mode, "thermal mode must be normalized")?;
            }
            ThermalModel::Incoherent { intensity } => {
                if intensity.len() != self.lo.len() {
                    return Err(Error::ShapeMismatch {
                        expected: self.lo.len(),
                        found: intensity.len(),
                    });
                }
            }
        }
        self.thermal = Some(thermal);
        Ok(self)
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::OutOfDomain {
                what: "detection efficiency",
                value: efficiency,
                allowed: "(0, 1]",
            });
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.lo.n()
    }

    pub fn lo(&self) -> &FieldGrid {
        &self.lo
    }

    pub fn squeezed_noise(&self) -> &ModeNoiseSpec {
        &self.squeezed_noise
    }

    pub fn squeezed_mode(&self) -> &FieldGrid {
        &self.squeezed_mode
    }

    pub fn thermal(&self) -> Option<&ThermalComponent> {
        self.thermal.as_ref()
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Ground truth for the squeezed reconstruction: `conj(u_lo) · u_sq`.
    pub fn shaped_squeezed(&self) -> FieldGrid {
        crate::optics::shaped_field(&self.lo, &self.squeezed_mode).expect("scene grids agree")
    }

    /// Ground truth for the thermal reconstruction. Incoherent model:
    /// `I_th(p) |u_lo(p)|²`; single-mode model: `|conj(u_lo) u_th|²`.
    pub fn shaped_thermal_intensity(&self) -> Option<Vec<f64>> {
        let thermal = self.thermal.as_ref()?;
        Some(match thermal.model() {
            ThermalModel::Incoherent { intensity } => intensity
                .iter()
                .zip(self.lo.amplitudes())
                .map(|(i, lo)| i * lo.norm_sqr())
                .collect(),
            ThermalModel::SingleMode { mode } => crate::optics::shaped_field(&self.lo, mode)
                .expect("scene grids agree")
                .intensities(),
        })
    }

    /// Overlaps behind one mask, before losses.
    pub fn mask_response(&self, mask: &Mask) -> Result<MaskResponse> {
        let o_sq = overlap(&self.lo, &self.squeezed_mode, mask)?.0;
        let thermal = match &self.thermal {
            None => ThermalResponse::None,
            Some(t) => match t.model() {
                ThermalModel::SingleMode { mode } => ThermalResponse::Mode {
                    overlap: overlap(&self.lo, mode, mask)?.0,
                    spec: ModeNoiseSpec::thermal(t.v_th())?,
                },
                ThermalModel::Incoherent { intensity } => {
                    let weight: f64 = intensity
                        .iter()
                        .zip(self.lo.amplitudes())
                        .zip(mask.pixels())
                        .filter(|(_, &open)| open)
                        .map(|((i, lo), _)| i * lo.norm_sqr())
                        .sum();
                    ThermalResponse::Excess(weight * (t.v_th() - 1.0))
                }
            },
        };
        Ok(MaskResponse {
            o_sq,
            squeezed: self.squeezed_noise,
            thermal,
            efficiency: self.efficiency,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThermalResponse {
    None,
    Mode { overlap: Complex64, spec: ModeNoiseSpec },
    Excess(f64),
}

/// Everything needed to evaluate the noiseless sweep of one mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskResponse {
    pub o_sq: Complex64,
    pub squeezed: ModeNoiseSpec,
    pub thermal: ThermalResponse,
    pub efficiency: f64,
}

impl MaskResponse {
    /// Detected variance at LO phase `theta`, after losses.
    pub fn variance(&self, theta: f64) -> Result<f64> {
        let raw = match self.thermal {
            ThermalResponse::Mode { overlap, spec } => {
                closed_form_variance(&[(self.squeezed, self.o_sq), (spec, overlap)], theta)?
            }
            ThermalResponse::None => closed_form_variance(&[(self.squeezed, self.o_sq)], theta)?,
            ThermalResponse::Excess(excess) => {
                excess + closed_form_variance(&[(self.squeezed, self.o_sq)], theta)?
            }
        };
        Ok(self.efficiency * raw + (1.0 - self.efficiency))
    }
}

/// Identifier of one sweep in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceId {
    Mask(usize),
    Complement(usize),
    Blank,
}

impl TraceId {
    /// Random stream index; unique per id so draws do not depend on the
    /// order in which traces are simulated.
    pub fn stream(self) -> u64 {
        match self {
            TraceId::Blank => 0,
            TraceId::Mask(m) => 2 * m as u64 + 1,
            TraceId::Complement(m) => 2 * m as u64 + 2,
        }
    }

    pub fn mask(self, set: &MaskSet) -> Result<Mask> {
        match self {
            TraceId::Blank => Ok(set.blank()),
            TraceId::Mask(m) | TraceId::Complement(m) if m >= set.len() => Err(Error::OutOfDomain {
                what: "mask index",
                value: m as f64,
                allowed: "below the mask count",
            }),
            TraceId::Mask(m) => Ok(set.mask(m)),
            TraceId::Complement(m) => Ok(set.complement(m)),
        }
    }
}

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceId::Mask(m) => write!(f, "{m}"),
            TraceId::Complement(m) => write!(f, "{m}c"),
            TraceId::Blank => f.write_str("blank"),
        }
    }
}

impl FromStr for TraceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "blank" {
            return Ok(TraceId::Blank);
        }
        let (digits, complement) = match s.strip_suffix('c') {
            Some(d) => (d, true),
            None => (s, false),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidTrace("unrecognized mask id"));
        }
        let m = digits
            .parse()
            .map_err(|_| Error::InvalidTrace("unrecognized mask id"))?;
        Ok(if complement {
            TraceId::Complement(m)
        } else {
            TraceId::Mask(m)
        })
    }
}

/// Number of independent quadrature samples averaged into each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Samples {
    #[default]
    Exact,
    Finite(u64),
}

impl Samples {
    pub fn finite(m: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::TooFewSamples(m));
        }
        Ok(Samples::Finite(m))
    }
}

/// Measured variance versus LO phase for one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTrace {
    id: TraceId,
    thetas: Vec<f64>,
    variances: Vec<f64>,
    samples: Samples,
}

impl VarianceTrace {
    pub fn new(id: TraceId, thetas: Vec<f64>, variances: Vec<f64>, samples: Samples) -> Result<Self> {
        if thetas.len() != variances.len() {
            return Err(Error::ShapeMismatch {
                expected: thetas.len(),
                found: variances.len(),
            });
        }
        if thetas.len() < MIN_TRACE_POINTS {
            return Err(Error::InvalidTrace("fewer than 8 points"));
        }
        if thetas.iter().any(|&t| !(0.0..2.0 * PI).contains(&t)) {
            return Err(Error::InvalidTrace("phases must lie in [0, 2π)"));
        }
        if thetas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTrace("phases must be strictly increasing"));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidTrace("variances must be finite and positive"));
        }
        if let Samples::Finite(m) = samples {
            Samples::finite(m)?;
        }
        Ok(Self {
            id,
            thetas,
            variances,
            samples,
        })
    }

    pub fn id(&self) -> TraceId {
        self.id
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn samples(&self) -> Samples {
        self.samples
    }
}

/// `count` uniform phases over `[0, 2π)`.
pub fn theta_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 2.0 * PI * i as f64 / count as f64)
        .collect()
}

/// Simulates one sweep behind `mask`. Noise draws come from the ChaCha
/// stream selected by `id`, so each trace is reproducible on its own.
pub fn simulate_sweep(
    scene: &Scene,
    mask: &Mask,
    id: TraceId,
    thetas: &[f64],
    samples: Samples,
    seed: u64,
) -> Result<VarianceTrace> {
    let response = scene.mask_response(mask)?;
    let mut variances = thetas
        .iter()
        .map(|&t| response.variance(t))
        .collect::<Result<Vec<f64>>>()?;
    if let Samples::Finite(m) = samples {
        Samples::finite(m)?;
        let chi = ChiSquared::new(m as f64).map_err(|_| Error::TooFewSamples(m))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id.stream());
        for v in &mut variances {
            *v *= chi.sample(&mut rng) / m as f64;
        }
    }
    VarianceTrace::new(id, thetas.to_vec(), variances, samples)
}

/// All ids of a campaign: masks, then complements, then the blank.
pub fn campaign_ids(set: &MaskSet) -> Vec<TraceId> {
    let mut ids: Vec<TraceId> = (0..set.len()).map(TraceId::Mask).collect();
    ids.extend((0..set.len()).map(TraceId::Complement));
    ids.push(TraceId::Blank);
    ids
}

pub fn simulate_trace(
    scene: &Scene,
    set: &MaskSet,
    id: TraceId,
    thetas: &[f64],
    samples: Samples,
    seed: u64,
) -> Result<VarianceTrace> {
    if set.n() != scene.n() {
        return Err(Error::ShapeMismatch {
            expected: scene.n(),
            found: set.n(),
        });
    }
    simulate_sweep(scene, &id.mask(set)?, id, thetas, samples, seed)
}

/// One trace per mask, per complement and for the blank reference.
pub fn run_campaign(
    scene: &Scene,
    set: &MaskSet,
    thetas: &[f64],
    samples: Samples,
    seed: u64,
) -> Result<Vec<VarianceTrace>> {
    campaign_ids(set)
        .into_iter()
        .map(|id| simulate_trace(scene, set, id, thetas, samples, seed))
        .collect()
}

/// Mixed-scene builder that picks the squeezing parameter and thermal
/// variance so the blank-mask sweep peaks at `v_plus_db` and bottoms out at
/// `v_minus_db` (dB relative to shot noise, after losses).
///
/// `thermal_shape` fixes the spatial form of the thermal component; its
/// overall strength is solved for. Pass `None` for a squeezed-only scene,
/// which succeeds only if the targets admit zero thermal noise.
pub fn tune_blank_levels(
    lo: FieldGrid,
    squeezed_mode: FieldGrid,
    phi: f64,
    thermal_shape: Option<ThermalModel>,
    efficiency: f64,
    v_minus_db: f64,
    v_plus_db: f64,
) -> Result<Scene> {
    check_range("efficiency", efficiency, f64::MIN_POSITIVE, 1.0, "(0, 1]")?;
    let v_plus = crate::db::from_db(v_plus_db);
    let v_minus = crate::db::from_db(v_minus_db);
    if !(v_plus > v_minus) {
        return Err(Error::Infeasible("maximum level must exceed minimum level"));
    }
    let blank = Mask::blank(lo.n())?;
    let x = overlap(&lo, &squeezed_mode, &blank)?.norm_sqr();
    if !(x > 0.0) {
        return Err(Error::Infeasible("squeezed mode does not overlap the LO"));
    }
    let p = (v_plus - 1.0) / efficiency;
    let q = (v_minus - 1.0) / efficiency;
    let r = libm::asinh((p - q) / (2.0 * x));
    let thermal_excess = q - x * (libm::exp(-r) - 1.0);
    let scene = Scene::new(lo, ModeNoiseSpec::squeezed(r, phi)?, squeezed_mode)?.with_efficiency(efficiency)?;
    match thermal_shape {
        None if thermal_excess.abs() <= 1e-12 => Ok(scene),
        None => Err(Error::Infeasible("targets require a thermal component")),
        Some(model) => {
            if !(thermal_excess > 0.0) {
                return Err(Error::Infeasible("targets leave no room for thermal noise"));
            }
            let unit = scene
                .clone()
                .with_thermal(ThermalComponent::new(2.0, model.clone())?)?
                .mask_response(&blank)?;
            let per_unit = match unit.thermal {
                ThermalResponse::Excess(e) => e,
                ThermalResponse::Mode { overlap, .. } => overlap.norm_sqr(),
                ThermalResponse::None => 0.0,
            };
            if !(per_unit > 0.0) {
                return Err(Error::Infeasible("thermal shape does not overlap the LO"));
            }
            scene.with_thermal(ThermalComponent::new(1.0 + thermal_excess / per_unit, model)?)
        }
    }
}

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use squeezeprof_core::db::to_db;
use squeezeprof_core::fit::{fit_trace, reference_phase};
use squeezeprof_core::measurement::{campaign_ids, simulate_trace};
use squeezeprof_core::optics::hadamard_masks;
use squeezeprof_core::reconstruction::{correlation, fidelity, scaled_max_error};
use squeezeprof_core::{
    reconstruct as reconstruct_fits, Error as CoreError, FitSet, MaskOrder, MaskSet, QuadratureFit, Reconstruction,
    ReconstructionOptions, Scene, TraceId, VarianceTrace,
};

use crate::config::{CampaignConfig, OrderConfig, ReconstructionConfig};
use crate::error::{CliError, Result, Stage};
use crate::formats::{
    check_writable, ensure_dir, mask_file_name, read_fits, read_json, read_trace, trace_file_name, write_fits,
    write_json, write_pbm, write_pfm, write_trace, write_weights, FitRow, Manifest, Raster, FITS, MANIFEST,
    MANIFEST_VERSION,
};

pub const METRICS: &str = "metrics.json";
pub const WEIGHTS: &str = "weights.csv";
pub const SQUEEZED_MAGNITUDE: &str = "squeezed_magnitude.pfm";
pub const SQUEEZED_PHASE: &str = "squeezed_phase.pfm";
pub const THERMAL: &str = "thermal_intensity.pfm";
pub const THERMAL_RAW: &str = "thermal_intensity_raw.pfm";
pub const TRACE_DIR: &str = "traces";

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paper_exact_thermal: bool,
    pub literal_thermal: bool,
    pub no_floor_subtract: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut CampaignConfig) {
        if let Some(seed) = self.seed {
            cfg.measurement.seed = seed;
        }
        self.apply_reconstruction(&mut cfg.reconstruction);
    }

    pub fn apply_reconstruction(&self, r: &mut ReconstructionConfig) {
        r.paper_exact_thermal |= self.paper_exact_thermal;
        if self.literal_thermal {
            r.thermal_inversion = crate::config::InversionConfig::Literal;
        }
        if self.no_floor_subtract {
            r.floor_subtract = false;
        }
    }
}

/// Runs every sweep of the campaign; traces come back in campaign order.
pub fn simulate_campaign(cfg: &CampaignConfig) -> Result<Vec<VarianceTrace>> {
    let scene = cfg.scene()?;
    let set = cfg.maskset()?;
    let thetas = cfg.thetas();
    let samples = cfg.samples()?;
    let seed = cfg.measurement.seed;
    campaign_ids(&set)
        .into_par_iter()
        .map(|id| simulate_trace(&scene, &set, id, &thetas, samples, seed).map_err(CliError::from))
        .collect()
}

pub fn simulate(cfg: &CampaignConfig, out: &Path, force: bool) -> Result<Manifest> {
    check_writable(&out.join(MANIFEST), force)?;
    let traces = simulate_campaign(cfg)?;
    ensure_dir(out)?;
    traces
        .par_iter()
        .map(|t| write_trace(&out.join(trace_file_name(t.id())), t))
        .collect::<Result<()>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        grid: cfg.grid,
        mask_order: cfg.mask_order,
        samples: match cfg.samples()? {
            squeezeprof_core::Samples::Exact => None,
            squeezeprof_core::Samples::Finite(m) => Some(m),
        },
        seed: cfg.measurement.seed,
        traces: traces
            .iter()
            .map(|t| (trace_file_name(t.id()), t.id().to_string()))
            .collect(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Fits every trace listed in the manifest. Failed fits stay in the table;
/// only a missing or unusable blank aborts.
pub fn fit_dir(dir: &Path) -> Result<Vec<FitRow>> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::data(&manifest_path, format!("unsupported manifest version {}", manifest.version)));
    }
    let entries = manifest.entries(&manifest_path)?;
    if !entries.iter().any(|(id, _)| *id == TraceId::Blank) {
        return Err(CoreError::MissingReference.into());
    }
    let samples = manifest.samples();
    let rows = entries
        .par_iter()
        .map(|(id, file)| {
            let trace = read_trace(&dir.join(file), *id, samples)?;
            Ok(match fit_trace(&trace) {
                Ok(f) => FitRow::ok(f),
                Err(e) => FitRow { id: *id, fit: Err(e.to_string()) },
            })
        })
        .collect::<Result<Vec<FitRow>>>()?;
    let blank = match rows.iter().find(|r| r.id == TraceId::Blank) {
        Some(FitRow { fit: Ok(b), .. }) => *b,
        Some(FitRow { id, .. }) => {
            // Without the blank nothing else can be referenced; surface its own error.
            let (_, file) = entries.iter().find(|(e, _)| e == id).expect("blank entry");
            let trace = read_trace(&dir.join(file), *id, samples)?;
            return Err(fit_trace(&trace).expect_err("blank fit failed before").into());
        }
        None => return Err(CoreError::MissingReference.into()),
    };
    let good: Vec<QuadratureFit> = rows.iter().filter_map(|r| r.fit.as_ref().ok().copied()).collect();
    let mut referenced = reference_phase(&blank, &good).into_iter();
    Ok(rows
        .into_iter()
        .map(|r| match r.fit {
            Ok(_) => FitRow::ok(referenced.next().expect("one referenced fit per good row")),
            failed => FitRow { id: r.id, fit: failed },
        })
        .collect())
}

pub fn fit(dir: &Path, out: &Path, force: bool) -> Result<Vec<FitRow>> {
    let path = out.join(FITS);
    check_writable(&path, force)?;
    let rows = fit_dir(dir)?;
    ensure_dir(out)?;
    write_fits(&path, &rows)?;
    Ok(rows)
}

/// Summary written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub grid: usize,
    pub masks: usize,
    pub blank_v_minus: f64,
    pub blank_v_plus: f64,
    pub min_noise_db: f64,
    pub max_noise_db: f64,
    pub squeezing_detected: bool,
    /// Sign ties that change the reconstruction; see `SignChoice::material`.
    pub ambiguous_signs: usize,
    pub negative_thermal_pixels: usize,
    pub squeezed_leakage: f64,
    pub squeezed_fidelity: Option<f64>,
    pub thermal_correlation: Option<f64>,
    pub thermal_max_rel_error: Option<f64>,
}

pub fn metrics(fits: &FitSet, rec: &Reconstruction, truth: Option<&Scene>) -> Metrics {
    let blank = fits.blank();
    let thermal_truth = truth.and_then(Scene::shaped_thermal_intensity);
    Metrics {
        grid: rec.shaped_squeezed.n(),
        masks: fits.len(),
        blank_v_minus: blank.v_minus,
        blank_v_plus: blank.v_plus,
        min_noise_db: to_db(blank.v_minus),
        max_noise_db: to_db(blank.v_plus),
        squeezing_detected: blank.v_minus < 1.0,
        ambiguous_signs: rec.signed.material_ambiguities(),
        negative_thermal_pixels: rec.thermal.negative_pixels(),
        squeezed_leakage: rec.thermal_weights.leakage,
        squeezed_fidelity: truth.and_then(|s| fidelity(&rec.shaped_squeezed, &s.shaped_squeezed()).ok()),
        thermal_correlation: thermal_truth
            .as_ref()
            .and_then(|t| correlation(&rec.thermal.raw, t).ok()),
        thermal_max_rel_error: thermal_truth
            .as_ref()
            .and_then(|t| scaled_max_error(&rec.thermal.raw, t).ok()),
    }
}

/// Builds the fit set and mask basis for a fit table. Without a config the
/// grid is inferred from the row count and the natural order is assumed.
pub fn load_fit_set(rows: &[FitRow], path: &Path, cfg: Option<&CampaignConfig>) -> Result<(FitSet, MaskSet)> {
    if let Some(bad) = rows.iter().find(|r| r.fit.is_err()) {
        return Err(CliError::data(path, format!("fit for {} failed; table is incomplete", bad.id)));
    }
    let fits: Vec<QuadratureFit> = rows.iter().filter_map(|r| r.fit.as_ref().ok().copied()).collect();
    let set = match cfg {
        Some(c) => c.maskset()?,
        None => {
            let count = fits.iter().filter(|f| matches!(f.id, TraceId::Mask(_))).count();
            let n = (count as f64).sqrt().round() as usize;
            if n * n != count {
                return Err(CliError::data(path, format!("{count} mask rows do not form a square grid")));
            }
            hadamard_masks(n, MaskOrder::Natural).map_err(|e| CliError::data(path, e))?
        }
    };
    let set_fits = FitSet::new(&fits, set.len()).map_err(|e| match e {
        CoreError::MissingReference => CliError::Model(e),
        other => CliError::data(path, other),
    })?;
    Ok((set_fits, set))
}

pub fn wrap_phase(p: f64) -> f64 {
    // (−π, π]
    if p <= -std::f64::consts::PI {
        p + 2.0 * std::f64::consts::PI
    } else {
        p
    }
}

pub fn write_reconstruction(out: &Path, rec: &Reconstruction, metrics: &Metrics) -> Result<()> {
    let n = rec.shaped_squeezed.n();
    let phases: Vec<f64> = rec.shaped_squeezed.phases().into_iter().map(wrap_phase).collect();
    write_pfm(&out.join(SQUEEZED_MAGNITUDE), &Raster::square(n, &rec.shaped_squeezed.magnitudes()))?;
    write_pfm(&out.join(SQUEEZED_PHASE), &Raster::square(n, &phases))?;
    write_pfm(&out.join(THERMAL), &Raster::square(n, &rec.thermal.clamped))?;
    write_pfm(&out.join(THERMAL_RAW), &Raster::square(n, &rec.thermal.raw))?;
    write_weights(&out.join(WEIGHTS), &rec.signed, &rec.thermal_weights)?;
    write_json(&out.join(METRICS), metrics)
}

pub fn reconstruct(
    fits_path: &Path,
    cfg: Option<&CampaignConfig>,
    options: ReconstructionOptions,
    out: &Path,
    force: bool,
) -> Result<Metrics> {
    check_writable(&out.join(METRICS), force)?;
    let rows = read_fits(fits_path)?;
    let (fits, set) = load_fit_set(&rows, fits_path, cfg)?;
    let rec = reconstruct_fits(&fits, &set, options)?;
    let truth = cfg.map(CampaignConfig::scene).transpose()?;
    let m = metrics(&fits, &rec, truth.as_ref());
    ensure_dir(out)?;
    write_reconstruction(out, &rec, &m)?;
    Ok(m)
}

/// simulate → fit → reconstruct under one output directory.
pub fn pipeline(cfg: &CampaignConfig, out: &Path, force: bool) -> Result<Metrics> {
    check_writable(&out.join(METRICS), force)?;
    let traces = out.join(TRACE_DIR);
    simulate(cfg, &traces, force).map_err(|e| e.at(Stage::Simulate))?;
    fit(&traces, out, force).map_err(|e| e.at(Stage::Fit))?;
    reconstruct(&out.join(FITS), Some(cfg), cfg.reconstruction.options(), out, true).map_err(|e| e.at(Stage::Reconstruct))
}

pub fn gen_masks(n: usize, order: OrderConfig, out: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let set = hadamard_masks(n, order.into())?;
    let blank_path = out.join(mask_file_name(TraceId::Blank));
    check_writable(&blank_path, force)?;
    ensure_dir(out)?;
    let ids = campaign_ids(&set);
    ids.par_iter()
        .map(|&id| {
            let path = out.join(mask_file_name(id));
            write_pbm(&path, &id.mask(&set)?)?;
            Ok(path)
        })
        .collect()
}

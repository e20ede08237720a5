//! Campaign configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use squeezeprof_core::gaussian::ModeNoiseSpec;
use squeezeprof_core::measurement::{tune_blank_levels, DEFAULT_THETA_POINTS};
use squeezeprof_core::optics::{hadamard_masks, mode_library, Axis};
use squeezeprof_core::reconstruction::{ThermalInversion, ThermalWeighting};
use squeezeprof_core::{
    FieldGrid, MaskOrder, MaskSet, ModeKind, ModeSpec, ReconstructionOptions, Samples, Scene, ThermalComponent,
    ThermalModel,
};

use crate::error::{CliError, Result};
use crate::formats::read_pfm;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub version: u32,
    pub grid: usize,
    #[serde(default)]
    pub mask_order: OrderConfig,
    pub scene: SceneConfig,
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Directory that relative paths inside the document resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderConfig {
    #[default]
    Natural,
    Sequency,
}

impl From<OrderConfig> for MaskOrder {
    fn from(o: OrderConfig) -> Self {
        match o {
            OrderConfig::Natural => MaskOrder::Natural,
            OrderConfig::Sequency => MaskOrder::Sequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub lo: ModeConfig,
    pub squeezed: SqueezedConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalConfig>,
    #[serde(default = "unit_efficiency")]
    pub efficiency: f64,
}

fn unit_efficiency() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezedConfig {
    pub mode: ModeConfig,
    pub phi: f64,
    /// Squeezing parameter. Leave out when `blank_db` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Solve `r` (and the thermal strength) for these blank-mask levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_db: Option<BlankLevels>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlankLevels {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalModelConfig {
    SingleMode,
    Incoherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub mode: ModeConfig,
    pub model: ThermalModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_th: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisConfig {
    X,
    Y,
}

/// Transverse profile; `center` is `[x, y]` in pixels, grid center if absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeConfig {
    Uniform,
    Gaussian {
        waist: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    HermiteGauss {
        m: u32,
        n: u32,
        waist: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    LaguerreGauss {
        p: u32,
        l: i32,
        waist: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    Ring {
        radius: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    TwoLobe {
        waist: f64,
        separation: f64,
        axis: AxisConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    /// Magnitude and optional phase (radians) rasters in PFM form.
    File {
        magnitude: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplesConfig {
    Exact(ExactTag),
    Finite(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactTag {
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
    pub samples: SamplesConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_theta_points() -> usize {
    DEFAULT_THETA_POINTS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionConfig {
    Differential,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    #[serde(default = "yes")]
    pub floor_subtract: bool,
    #[serde(default = "differential")]
    pub thermal_inversion: InversionConfig,
    #[serde(default)]
    pub paper_exact_thermal: bool,
    /// Remove the squeezed mode's contribution from the thermal weights.
    #[serde(default = "yes")]
    pub squeezed_leakage: bool,
}

fn yes() -> bool {
    true
}

fn differential() -> InversionConfig {
    InversionConfig::Differential
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            floor_subtract: true,
            thermal_inversion: InversionConfig::Differential,
            paper_exact_thermal: false,
            squeezed_leakage: true,
        }
    }
}

impl ReconstructionConfig {
    pub fn options(&self) -> ReconstructionOptions {
        let weighting = if self.paper_exact_thermal {
            ThermalWeighting::PAPER_EXACT
        } else {
            ThermalWeighting {
                floor_subtract: self.floor_subtract,
                compensate_squeezed: self.squeezed_leakage,
            }
        };
        ReconstructionOptions {
            weighting,
            inversion: match self.thermal_inversion {
                InversionConfig::Differential => ThermalInversion::Differential,
                InversionConfig::Literal => ThermalInversion::Literal,
            },
        }
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating; relative paths resolve against the working directory.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Re-checks every physical constraint by building the scene.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        self.maskset()?;
        self.samples()?;
        if self.measurement.theta_points < squeezeprof_core::measurement::MIN_TRACE_POINTS {
            return Err(invalid(
                "measurement.theta_points",
                format!("need at least {}", squeezeprof_core::measurement::MIN_TRACE_POINTS),
            ));
        }
        self.scene()?;
        Ok(())
    }

    pub fn maskset(&self) -> Result<MaskSet> {
        hadamard_masks(self.grid, self.mask_order.into()).map_err(|e| invalid("grid", e))
    }

    pub fn samples(&self) -> Result<Samples> {
        match self.measurement.samples {
            SamplesConfig::Exact(_) => Ok(Samples::Exact),
            SamplesConfig::Finite(m) => Samples::finite(m).map_err(|e| invalid("measurement.samples", e)),
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        squeezeprof_core::measurement::theta_grid(self.measurement.theta_points)
    }

    fn field(&self, what: &str, mode: &ModeConfig) -> Result<FieldGrid> {
        let n = self.grid;
        let spec = |kind: ModeKind, center: &Option<[f64; 2]>| ModeSpec {
            kind,
            center: center.map(|[x, y]| (x, y)),
        };
        let spec = match mode {
            ModeConfig::Uniform => ModeSpec::centered(ModeKind::Uniform),
            ModeConfig::Gaussian { waist, center } => spec(ModeKind::Gaussian { waist: *waist }, center),
            ModeConfig::HermiteGauss { m, n, waist, center } => spec(
                ModeKind::HermiteGauss {
                    m: *m,
                    n: *n,
                    waist: *waist,
                },
                center,
            ),
            ModeConfig::LaguerreGauss { p, l, waist, center } => spec(
                ModeKind::LaguerreGauss {
                    p: *p,
                    l: *l,
                    waist: *waist,
                },
                center,
            ),
            ModeConfig::Ring { radius, width, center } => spec(
                ModeKind::Ring {
                    radius: *radius,
                    width: *width,
                },
                center,
            ),
            ModeConfig::TwoLobe {
                waist,
                separation,
                axis,
                center,
            } => spec(
                ModeKind::TwoLobe {
                    waist: *waist,
                    separation: *separation,
                    axis: match axis {
                        AxisConfig::X => Axis::X,
                        AxisConfig::Y => Axis::Y,
                    },
                },
                center,
            ),
            ModeConfig::File { magnitude, phase } => return self.field_from_files(what, magnitude, phase.as_deref()),
        };
        mode_library(n, &spec).map_err(|e| invalid(what, e))
    }

    fn field_from_files(&self, what: &str, magnitude: &Path, phase: Option<&Path>) -> Result<FieldGrid> {
        let load = |p: &Path| {
            let path = self.base_dir.join(p);
            let raster = read_pfm(&path).map_err(|e| invalid(what, e))?;
            if raster.width != self.grid || raster.height != self.grid {
                return Err(invalid(
                    what,
                    format!("{} is {}x{}, grid is {}", path.display(), raster.width, raster.height, self.grid),
                ));
            }
            Ok(raster.data.iter().map(|&v| v as f64).collect::<Vec<f64>>())
        };
        let mag = load(magnitude)?;
        let ph = match phase {
            Some(p) => load(p)?,
            None => vec![0.0; mag.len()],
        };
        FieldGrid::from_polar(self.grid, &mag, &ph)
            .and_then(FieldGrid::normalized)
            .map_err(|e| invalid(what, e))
    }

    fn thermal_model(&self, t: &ThermalConfig) -> Result<ThermalModel> {
        let field = self.field("scene.thermal.mode", &t.mode)?;
        Ok(match t.model {
            ThermalModelConfig::SingleMode => ThermalModel::SingleMode { mode: field },
            ThermalModelConfig::Incoherent => ThermalModel::Incoherent {
                intensity: field.intensities(),
            },
        })
    }

    pub fn scene(&self) -> Result<Scene> {
        let s = &self.scene;
        let lo = self.field("scene.lo", &s.lo)?;
        let sq = self.field("scene.squeezed.mode", &s.squeezed.mode)?;
        match (s.squeezed.r, s.squeezed.blank_db) {
            (Some(r), None) => {
                let spec = ModeNoiseSpec::squeezed(r, s.squeezed.phi).map_err(|e| invalid("scene.squeezed", e))?;
                let mut scene = Scene::new(lo, spec, sq)
                    .and_then(|sc| sc.with_efficiency(s.efficiency))
                    .map_err(|e| invalid("scene", e))?;
                if let Some(t) = &s.thermal {
                    let v_th = match (t.v_th, t.n_th) {
                        (Some(v), None) => v,
                        (None, Some(n)) => 1.0 + 2.0 * n,
                        _ => return Err(invalid("scene.thermal", "give exactly one of v_th and n_th")),
                    };
                    let component =
                        ThermalComponent::new(v_th, self.thermal_model(t)?).map_err(|e| invalid("scene.thermal", e))?;
                    scene = scene.with_thermal(component).map_err(|e| invalid("scene.thermal", e))?;
                }
                Ok(scene)
            }
            (None, Some(levels)) => {
                let shape = match &s.thermal {
                    Some(t) if t.v_th.is_some() || t.n_th.is_some() => {
                        return Err(invalid("scene.thermal", "thermal strength is solved from blank_db; drop v_th/n_th"))
                    }
                    Some(t) => Some(self.thermal_model(t)?),
                    None => None,
                };
                tune_blank_levels(lo, sq, s.squeezed.phi, shape, s.efficiency, levels.min, levels.max)
                    .map_err(|e| invalid("scene.squeezed.blank_db", e))
            }
            _ => Err(invalid("scene.squeezed", "give exactly one of r and blank_db")),
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        match (flag, &self.output) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.base_dir.join(p)),
            (None, None) => Err(CliError::Config("no output directory: pass --out or set `output`".into())),
        }
    }
}

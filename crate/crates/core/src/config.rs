//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{BoundaryConditionSet, MaterialProperties, TimeGrid};
use crate::ifenn::{ModelKind, TrainingConfig};
use crate::mesh::{build_interval_mesh, build_quarter_hole_mesh, build_rect_mesh, load_mesh, Mesh};
use crate::network::{Architecture, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fem,
    Train,
    Ifenn,
    Landscape,
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fem => "fem",
            Mode::Train => "train",
            Mode::Ifenn => "ifenn",
            Mode::Landscape => "landscape",
            Mode::Compare => "compare",
        }
    }
}

fn unit() -> f64 {
    1.0
}

fn hole_radius() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    #[serde(rename = "bar_1d")]
    Bar1d {
        n_elements: usize,
        #[serde(default = "unit")]
        length: f64,
    },
    #[serde(rename = "plate_2d")]
    Plate2d {
        nx: usize,
        ny: usize,
        #[serde(default = "unit")]
        width: f64,
        #[serde(default = "unit")]
        height: f64,
    },
    #[serde(rename = "plate_hole_2d")]
    PlateHole2d {
        n_radial: usize,
        n_arc: usize,
        #[serde(default = "unit")]
        side: f64,
        #[serde(default = "hole_radius")]
        radius: f64,
    },
    /// Relative paths resolve against the config file's directory.
    MeshFile { path: PathBuf },
}

impl Geometry {
    pub fn build(&self, base: &Path) -> Result<Mesh> {
        match self {
            Geometry::Bar1d { n_elements, length } => build_interval_mesh(*n_elements, *length),
            Geometry::Plate2d { nx, ny, width, height } => build_rect_mesh(*nx, *ny, *width, *height),
            Geometry::PlateHole2d {
                n_radial,
                n_arc,
                side,
                radius,
            } => build_quarter_hole_mesh(*n_radial, *n_arc, *side, *radius),
            Geometry::MeshFile { path } => load_mesh(base.join(path)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_first: f64,
    pub t_final: f64,
    pub n_increments: usize,
}

impl TimeConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::geometric(self.t_first, self.t_final, self.n_increments)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationConfig {
    /// Samples per prescribed-flux tag; default two per facet.
    #[serde(default)]
    pub boundary_points_per_tag: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Replay,
    Lagged,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployConfig {
    /// Query mesh; the training geometry when absent.
    #[serde(default)]
    pub mesh: Option<Geometry>,
    #[serde(default)]
    pub strain_rate_source: SourceKind,
    /// Pre-trained model file; trained in-process when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Drive the displacement solve with the coupled reference temperatures
    /// instead of a network.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default = "grid_n")]
    pub n_per_axis: usize,
    #[serde(default)]
    pub seed: u64,
}

fn grid_n() -> usize {
    51
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            n_per_axis: grid_n(),
            seed: 0,
        }
    }
}

fn aluminium() -> MaterialProperties {
    MaterialProperties::aluminium()
}

fn pi_tcn() -> ModelKind {
    ModelKind::PiTcn
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: Geometry,
    #[serde(default = "aluminium")]
    pub material: MaterialProperties,
    pub bcs: BoundaryConditionSet,
    pub time: TimeConfig,
    #[serde(default)]
    pub training: Option<TrainingConfig>,
    #[serde(default = "pi_tcn")]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub collocation: CollocationConfig,
    #[serde(default)]
    pub deploy: DeployConfig,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without building meshes.
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.time.grid()?;
        if self.bcs.tags.is_empty() {
            return Err(Error::Config("no boundary conditions given".into()));
        }
        if let Some(t) = &self.training {
            t.loss.validate()?;
            t.optimizer.validate()?;
            if t.collocation_stride == 0 {
                return Err(Error::Config("collocation_stride must be ≥ 1".into()));
            }
            if !(t.ansatz.output_scale.is_finite() && t.ansatz.output_scale != 0.0) {
                return Err(Error::Config("output_scale must be finite and nonzero".into()));
            }
            let tcn = matches!(t.network.architecture, Architecture::Tcn(_));
            let wants_tcn = self.model_kind != ModelKind::MlpPinnSequence;
            if tcn != wants_tcn {
                return Err(Error::Config(format!(
                    "model_kind {:?} does not match the network architecture",
                    self.model_kind
                )));
            }
            let dim = match &self.problem {
                Geometry::Bar1d { .. } => 1,
                _ => 2,
            };
            Network::new(
                t.network.clone(),
                crate::network::InputSpec {
                    time: wants_tcn,
                    dim,
                },
            )?;
        }
        let needs_model = match self.mode {
            Mode::Train | Mode::Landscape => true,
            Mode::Ifenn => !self.deploy.oracle,
            Mode::Fem | Mode::Compare => false,
        };
        if needs_model && self.training.is_none() && (self.mode == Mode::Train || self.deploy.model.is_none()) {
            return Err(Error::Config(format!(
                "mode `{}` needs a `training` block or a pre-trained model",
                self.mode.name()
            )));
        }
        if self.mode == Mode::Landscape && self.landscape.n_per_axis % 2 == 0 {
            return Err(Error::Config("landscape.n_per_axis must be odd".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<(String, u64)> {
        let mut s = Vec::new();
        if let Some(t) = &self.training {
            s.push(("training".into(), t.seed));
            if let Some(r) = &t.network.rff {
                s.push(("rff".into(), r.seed));
            }
        }
        if self.mode == Mode::Landscape {
            s.push(("landscape".into(), self.landscape.seed));
        }
        s
    }

    /// Applies a command-line seed to every random source.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(t) = &mut self.training {
            t.seed = seed;
            if let Some(r) = &mut t.network.rff {
                r.seed = seed;
            }
        }
        self.landscape.seed = seed;
    }
}

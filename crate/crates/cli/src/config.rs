//! Experiment configuration files.
//!
//! A config is a JSON object with a `model` (inline or a path to a model
//! file) and one block per command. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use nmrom::model::{linearize, linearized_frequency, ElementKind, ForcingSpec, MechanicalModel, NonlinearElement, PhaseProgram};
use nmrom::nma::AmplitudeGrid;
use nmrom::systems::{self, BeamParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<ModelSource>,
    #[serde(default)]
    pub nma: Option<NmaBlock>,
    #[serde(default)]
    pub slowflow: Option<SlowFlowBlock>,
    #[serde(default)]
    pub direct: Option<DirectBlock>,
    #[serde(default)]
    pub steady: Option<SteadyBlock>,
    #[serde(default)]
    pub project: Option<ProjectBlock>,
    #[serde(default)]
    pub compare: Option<CompareBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File(PathBuf),
    Inline(ModelSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub system: SystemSpec,
    #[serde(default)]
    pub extra_stiffness: Option<MatrixSpec>,
    #[serde(default)]
    pub extra_damping: Option<MatrixSpec>,
    #[serde(default)]
    pub forcing: Option<ForcingBlock>,
    /// Mode whose linear frequency serves as `ω₀(0)` for relative inputs.
    #[serde(default)]
    pub reference_mode: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Duffing {
        damping: f64,
        kappa: f64,
    },
    VanDerPol {
        alpha: f64,
        beta: f64,
    },
    CubicTwoMass {
        kappa: f64,
    },
    FrictionTwoMass {
        limit_force: f64,
        regularization: f64,
    },
    UnilateralTwoMass {
        stiffness: f64,
        preload: f64,
    },
    Beam(BeamBlock),
    Custom {
        mass: Vec<Vec<f64>>,
        stiffness: Vec<Vec<f64>>,
        #[serde(default)]
        elements: Vec<ElementBlock>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementBlock {
    pub element: ElementKind,
    pub dof: usize,
    /// Defaults to a grounded element acting on `dof`.
    #[serde(default)]
    pub force_map: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamBlock {
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub density: Option<f64>,
    pub youngs_modulus: Option<f64>,
    pub n_elements: Option<usize>,
    pub n_fixed_modes: Option<usize>,
    pub tangent_stiffness: Option<f64>,
    pub limit_force: Option<f64>,
    pub shape: Option<f64>,
}

impl BeamBlock {
    pub fn params(&self) -> BeamParams {
        let d = BeamParams::default();
        BeamParams {
            length: self.length.unwrap_or(d.length),
            width: self.width.unwrap_or(d.width),
            height: self.height.unwrap_or(d.height),
            density: self.density.unwrap_or(d.density),
            youngs_modulus: self.youngs_modulus.unwrap_or(d.youngs_modulus),
            n_elements: self.n_elements.unwrap_or(d.n_elements),
            n_fixed_modes: self.n_fixed_modes.unwrap_or(d.n_fixed_modes),
            tangent_stiffness: self.tangent_stiffness.unwrap_or(d.tangent_stiffness),
            limit_force: self.limit_force.unwrap_or(d.limit_force),
            shape: self.shape.unwrap_or(d.shape),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMatrix {
    Mass,
    Stiffness,
}

/// Extra stiffness or damping matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Matrix(Vec<Vec<f64>>),
    /// `factor` times the mass or base stiffness matrix.
    Proportional { matrix: BaseMatrix, factor: f64 },
    /// Mass-proportional damping with ratio `ratio` at `omega`
    /// (default: the reference mode's small-amplitude frequency).
    MassDamping {
        ratio: f64,
        #[serde(default)]
        omega: Option<f64>,
    },
    /// Damping ratios of the linearized modes; the last ratio applies to
    /// all remaining modes.
    Modal { ratios: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingBlock {
    pub amplitude: Vec<f64>,
    pub phase: PhaseBlock,
}

/// Excitation phase program. Frequencies given as `relative` are multiples
/// of the reference mode's small-amplitude frequency `ω₀(0)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseBlock {
    Constant {
        #[serde(default)]
        omega: Option<f64>,
        #[serde(default)]
        relative: Option<f64>,
    },
    Sweep {
        #[serde(default)]
        omega_start: Option<f64>,
        #[serde(default)]
        relative_start: Option<f64>,
        rate: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmaBlock {
    #[serde(default)]
    pub mode: usize,
    pub harmonics: usize,
    pub amplitudes: AmplitudeGrid,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub newton_tol: Option<f64>,
    #[serde(default)]
    pub manifold: Option<ManifoldBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    pub dof: usize,
    pub amplitudes: usize,
    pub phases: usize,
}

/// Initial condition shared by the ROM and the direct integration.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Rest,
    /// Manifold point with modal amplitude `a` and slow phase `theta`.
    Modal { a: f64, theta: f64 },
    /// Physical state; the ROM projects it onto the manifold.
    State {
        u: Vec<f64>,
        v: Vec<f64>,
        #[serde(default)]
        dahl: Option<Vec<f64>>,
    },
}

fn default_samples() -> usize {
    2000
}

fn default_dofs() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowFlowBlock {
    pub initial: InitialSpec,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dofs")]
    pub dofs: Vec<usize>,
    /// Start and end times as multiples of `ω₀(0)/rate` for sweeps.
    #[serde(default)]
    pub sweep_window: Option<[f64; 2]>,
}

fn default_rel_tol() -> f64 {
    1e-9
}

fn default_abs_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectBlock {
    pub initial: InitialSpec,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    pub output_dt: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_dofs")]
    pub dofs: Vec<usize>,
    #[serde(default)]
    pub sweep_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyBlock {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    /// Frequencies are multiples of `ω₀(0)`.
    #[serde(default)]
    pub relative: bool,
    #[serde(default = "default_dofs")]
    pub dofs: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectBlock {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
}

fn here() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    /// Run directory taken as ground truth, relative to the output directory.
    #[serde(default = "here")]
    pub reference: PathBuf,
    #[serde(default = "here")]
    pub candidate: PathBuf,
    #[serde(default)]
    pub dof: usize,
    /// Restrict the reference peaks to the decay down to this fraction of
    /// the first one.
    #[serde(default)]
    pub decay_window: Option<f64>,
}

/// A parsed config with its location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub hash: String,
    pub config: ExperimentConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Ok(LoadedConfig {
            path: path.to_path_buf(),
            hash: crate::io::sha256_hex(text.as_bytes()),
            config,
        })
    }

    /// Resolves a path relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        self.path.parent().map_or_else(|| p.to_path_buf(), |d| d.join(p))
    }

    pub fn model_spec(&self) -> CliResult<ModelSpec> {
        match &self.config.model {
            None => Err(CliError::config("config has no model")),
            Some(ModelSource::Inline(m)) => Ok(m.clone()),
            Some(ModelSource::File(p)) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn block<'a, T>(&'a self, block: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        block
            .as_ref()
            .ok_or_else(|| CliError::config(format!("config has no `{name}` block")))
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::config(format!("{what} must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// The assembled model plus the reference frequency `ω₀(0)`.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MechanicalModel,
    pub omega_ref: f64,
}

impl ModelSpec {
    fn autonomous(&self) -> CliResult<MechanicalModel> {
        let m = match &self.system {
            SystemSpec::Duffing { damping, kappa } => systems::duffing(*damping, *kappa)?,
            SystemSpec::VanDerPol { alpha, beta } => systems::van_der_pol(*alpha, *beta)?,
            SystemSpec::CubicTwoMass { kappa } => systems::cubic_two_mass(*kappa)?,
            SystemSpec::FrictionTwoMass {
                limit_force,
                regularization,
            } => systems::friction_two_mass(*limit_force, *regularization)?,
            SystemSpec::UnilateralTwoMass { stiffness, preload } => systems::unilateral_two_mass(*stiffness, *preload)?,
            SystemSpec::Beam(b) => systems::beam_with_dahl(&b.params())?.0,
            SystemSpec::Custom {
                mass,
                stiffness,
                elements,
            } => {
                let n = mass.len();
                let elements = elements
                    .iter()
                    .map(|e| match &e.force_map {
                        None => NonlinearElement::grounded(e.element, e.dof, n),
                        Some(map) => NonlinearElement {
                            kind: e.element,
                            input_dof: e.dof,
                            force_map: map.clone(),
                        },
                    })
                    .collect();
                MechanicalModel::new(
                    matrix(mass, n, "mass")?,
                    matrix(stiffness, n, "stiffness")?,
                    elements,
                )?
            }
        };
        Ok(m)
    }

    fn extra(&self, spec: &MatrixSpec, model: &MechanicalModel, omega_ref: f64) -> CliResult<DMatrix<f64>> {
        let n = model.n_dof();
        Ok(match spec {
            MatrixSpec::Matrix(rows) => matrix(rows, n, "extra matrix")?,
            MatrixSpec::Proportional { matrix, factor } => match matrix {
                BaseMatrix::Mass => &model.mass * *factor,
                BaseMatrix::Stiffness => &model.base_stiffness * *factor,
            },
            MatrixSpec::MassDamping { ratio, omega } => {
                systems::mass_proportional_damping(&model.mass, *ratio, omega.unwrap_or(omega_ref))
            }
            MatrixSpec::Modal { ratios } => {
                let k = linearize(model).stiffness;
                systems::modal_damping(&model.mass, &k, ratios)?
            }
        })
    }

    pub fn build(&self) -> CliResult<BuiltModel> {
        let mut model = self.autonomous()?;
        if self.reference_mode >= model.n_dof() {
            return Err(CliError::config(format!("reference mode {} out of range", self.reference_mode)));
        }
        let omega_ref = linearized_frequency(&model, self.reference_mode)?;
        if let Some(k) = &self.extra_stiffness {
            model = model.clone().with_extra_stiffness(self.extra(k, &model, omega_ref)?)?;
        }
        if let Some(c) = &self.extra_damping {
            model = model.clone().with_extra_damping(self.extra(c, &model, omega_ref)?)?;
        }
        if let Some(f) = &self.forcing {
            let phase = match f.phase {
                PhaseBlock::Constant { omega, relative } => match (omega, relative) {
                    (Some(omega), None) => PhaseProgram::Constant { omega },
                    (None, Some(r)) => PhaseProgram::Constant { omega: r * omega_ref },
                    _ => return Err(CliError::config("constant phase needs exactly one of `omega`, `relative`")),
                },
                PhaseBlock::Sweep {
                    omega_start,
                    relative_start,
                    rate,
                } => {
                    let omega_start = match (omega_start, relative_start) {
                        (Some(w), None) => w,
                        (None, Some(r)) => r * omega_ref,
                        (None, None) => 0.0,
                        _ => return Err(CliError::config("sweep takes at most one of `omega_start`, `relative_start`")),
                    };
                    PhaseProgram::Sweep { omega_start, rate }
                }
            };
            model = model.with_forcing(Some(ForcingSpec {
                amplitude: f.amplitude.clone(),
                phase,
            }))?;
        }
        Ok(BuiltModel { model, omega_ref })
    }
}

/// `(t0, t1)` from explicit times or a sweep window in units of
/// `ω₀(0)/rate`.
pub fn time_span(
    t_start: f64,
    t_end: Option<f64>,
    window: Option<[f64; 2]>,
    built: &BuiltModel,
) -> CliResult<(f64, f64)> {
    let [lo, hi] = match (t_end, window) {
        (Some(t_end), None) => return Ok((t_start, t_end)),
        (None, Some(w)) => w,
        _ => return Err(CliError::config("give exactly one of `t_end`, `sweep_window`")),
    };
    match built.model.forcing.as_ref().map(|f| f.phase) {
        Some(PhaseProgram::Sweep { omega_start, rate }) if rate != 0.0 => Ok((
            (lo * built.omega_ref - omega_start) / rate,
            (hi * built.omega_ref - omega_start) / rate,
        )),
        _ => Err(CliError::config("`sweep_window` requires a sweep forcing")),
    }
}

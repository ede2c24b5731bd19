//! Run configuration: a single TOML file with dotted sections. Unknown keys
//! are hard errors so typos never silently fall back to defaults.

use anyhow::{bail, Context};
use hjlab_core::scenario::{
    Discretization, ForcingPreset, InitialPreset, Regime, ScenarioConfig, TerminalPreset,
};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub equilibrium: EquilibriumSection,
    pub norms: NormsSection,
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub functional: FunctionalSection,
    pub sweep: SweepSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSection::default(),
            equilibrium: EquilibriumSection::default(),
            norms: NormsSection::default(),
            scenario: ScenarioSection::default(),
            solver: SolverSection::default(),
            functional: FunctionalSection::default(),
            sweep: SweepSection::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dimension: usize,
    pub velocity: VelocitySection,
    pub space: SpaceSection,
    pub sphere: SphereSection,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dimension: 3,
            velocity: VelocitySection::default(),
            space: SpaceSection::default(),
            sphere: SphereSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocitySection {
    pub radius: f64,
    pub nodes_per_axis: usize,
}

impl Default for VelocitySection {
    fn default() -> Self {
        VelocitySection {
            radius: 4.0,
            nodes_per_axis: 9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceSection {
    pub nodes_per_axis: usize,
}

impl Default for SpaceSection {
    fn default() -> Self {
        SpaceSection { nodes_per_axis: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereSection {
    pub order: usize,
}

impl Default for SphereSection {
    fn default() -> Self {
        SphereSection { order: 2 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSection {
    pub alpha: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        EquilibriumSection { alpha: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsSection {
    pub beta: f64,
    pub sigma: f64,
}

impl Default for NormsSection {
    fn default() -> Self {
        NormsSection {
            beta: 5.0,
            sigma: 1.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub regime: String,
    pub terminal_time: f64,
    pub seed: u64,
    pub perturbation_scale: f64,
    pub initial: InitialSection,
    pub terminal: TerminalSection,
    pub forcing: ForcingSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            regime: "theorem-1".to_string(),
            terminal_time: 4.0,
            seed: 42,
            perturbation_scale: 0.01,
            initial: InitialSection::default(),
            terminal: TerminalSection::default(),
            forcing: ForcingSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub project_kernel: bool,
    pub project_axis_invariants: bool,
    pub cos_modulation: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            project_kernel: true,
            project_axis_invariants: false,
            cos_modulation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalSection {
    /// "centered" (ghat = log E + small polynomial) or "bare-quadratic"
    /// (ghat = coefficient |v|^2; coefficient = alpha' is the degenerate
    /// scenario).
    pub preset: String,
    pub constant: f64,
    pub linear: [f64; 3],
    pub quadratic: f64,
    pub cross: f64,
    pub cos_modulation: f64,
    pub project_kernel: bool,
    pub project_axis_invariants: bool,
    pub coefficient: f64,
}

impl Default for TerminalSection {
    fn default() -> Self {
        TerminalSection {
            preset: "centered".to_string(),
            constant: 0.0,
            linear: [0.0; 3],
            quadratic: 0.01,
            cross: 0.0,
            cos_modulation: 0.0,
            project_kernel: true,
            project_axis_invariants: false,
            coefficient: 0.25,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSection {
    /// "zero" or "exp-decay"
    pub mode: String,
    pub epsilon: f64,
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection {
            mode: "zero".to_string(),
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub time_step: f64,
    pub substep: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            time_step: 0.05,
            substep: 0.01,
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionalSection {
    pub t_list: Vec<f64>,
    pub residual_dt: f64,
}

impl Default for FunctionalSection {
    fn default() -> Self {
        FunctionalSection {
            t_list: vec![2.0, 4.0, 8.0],
            residual_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub terminal_times: Vec<f64>,
    pub alphas: Vec<f64>,
    pub scales: Vec<f64>,
    pub quadratics: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            terminal_times: vec![2.0, 4.0],
            alphas: vec![0.0],
            scales: vec![0.01],
            quadratics: vec![0.01],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Velocity node ladder for the refinement slope checks (general sphere
    /// rule); empty disables them.
    pub refinement_nodes: Vec<usize>,
    pub refinement_order: usize,
    pub half_moment_order: usize,
    pub convolution_t: Vec<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            refinement_nodes: vec![],
            refinement_order: 4,
            half_moment_order: 10,
            convolution_t: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn discretization(&self) -> Discretization {
        Discretization {
            dim: self.grid.dimension,
            radius: self.grid.velocity.radius,
            velocity_nodes: self.grid.velocity.nodes_per_axis,
            space_nodes: self.grid.space.nodes_per_axis,
            sphere_order: self.grid.sphere.order,
            alpha: self.equilibrium.alpha,
        }
    }

    pub fn scenario(&self) -> anyhow::Result<ScenarioConfig> {
        let regime = match self.scenario.regime.as_str() {
            "theorem-1" => Regime::Theorem1,
            "theorem-2" => Regime::Theorem2,
            other => bail!("scenario.regime: unknown regime `{other}` (theorem-1 | theorem-2)"),
        };
        let terminal = match self.scenario.terminal.preset.as_str() {
            "centered" => TerminalPreset::Centered {
                constant: self.scenario.terminal.constant,
                linear: self.scenario.terminal.linear,
                quadratic: self.scenario.terminal.quadratic,
                cross: self.scenario.terminal.cross,
                cos_amplitude: self.scenario.terminal.cos_modulation,
                project_kernel: self.scenario.terminal.project_kernel,
                project_axis_invariants: self.scenario.terminal.project_axis_invariants,
            },
            "bare-quadratic" => TerminalPreset::BareQuadratic {
                coefficient: self.scenario.terminal.coefficient,
            },
            other => bail!(
                "scenario.terminal.preset: unknown preset `{other}` (centered | bare-quadratic)"
            ),
        };
        let forcing = match self.scenario.forcing.mode.as_str() {
            "zero" => ForcingPreset::Zero,
            "exp-decay" => ForcingPreset::ExpDecay {
                epsilon: self.scenario.forcing.epsilon,
            },
            other => bail!("scenario.forcing.mode: unknown mode `{other}` (zero | exp-decay)"),
        };
        Ok(ScenarioConfig {
            regime,
            beta: self.norms.beta,
            sigma: self.norms.sigma,
            terminal_time: self.scenario.terminal_time,
            time_step: self.solver.time_step,
            substep: self.solver.substep,
            perturbation_scale: self.scenario.perturbation_scale,
            seed: self.scenario.seed,
            initial: InitialPreset {
                project_kernel: self.scenario.initial.project_kernel,
                project_axis_invariants: self.scenario.initial.project_axis_invariants,
                cos_amplitude: self.scenario.initial.cos_modulation,
            },
            terminal,
            forcing,
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
        })
    }
}

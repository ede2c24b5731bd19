//! Scenario configuration: discretization bundle, initial/terminal/forcing
//! presets, regime validation, and construction of the pinned boundary data.

use crate::collision::{build_collision_table, CollisionContext};
use crate::equilibria::{
    axis_invariant_basis, make_equilibria, project_off_kernel, project_off_span, weighted_sup_norm,
    EquilibriumSet, KernelBasis,
};
use crate::error::{LabError, Result};
use crate::field::Field;
use crate::grid::{
    build_space_grid, build_sphere_quadrature, build_velocity_grid, SpaceGrid, SphereQuadrature,
    VelocityGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Grid and equilibrium parameters; fully determines the discrete operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub dim: usize,
    pub radius: f64,
    pub velocity_nodes: usize,
    pub space_nodes: usize,
    pub sphere_order: usize,
    pub alpha: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            dim: 3,
            radius: 4.0,
            velocity_nodes: 9,
            space_nodes: 1,
            sphere_order: 2,
            alpha: 0.0,
        }
    }
}

/// Immutable bundle of grids, equilibria, kernel basis, and collision
/// machinery shared by every operation of a run.
pub struct Lab {
    pub disc: Discretization,
    pub sgrid: Arc<SpaceGrid>,
    pub vgrid: Arc<VelocityGrid>,
    pub squad: Arc<SphereQuadrature>,
    pub eqs: EquilibriumSet,
    pub basis: KernelBasis,
    pub ctx: Arc<CollisionContext>,
}

impl Lab {
    pub fn build(disc: &Discretization) -> Result<Lab> {
        let sgrid = Arc::new(build_space_grid(disc.dim, disc.space_nodes)?);
        let vgrid = Arc::new(build_velocity_grid(
            disc.dim,
            disc.radius,
            disc.velocity_nodes,
        )?);
        let squad = Arc::new(build_sphere_quadrature(disc.dim, disc.sphere_order)?);
        let eqs = make_equilibria(&vgrid, &sgrid, disc.alpha)?;
        let basis = KernelBasis::build(&vgrid, &sgrid, &eqs);
        let table = Arc::new(build_collision_table(&vgrid, &squad));
        let ctx = Arc::new(CollisionContext::new(table, &eqs));
        Ok(Lab {
            disc: disc.clone(),
            sgrid,
            vgrid,
            squad,
            eqs,
            basis,
            ctx,
        })
    }

    /// G as a field (coupled equilibrium), for convenience.
    pub fn coupled(&self) -> &Field {
        &self.eqs.coupled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Orthogonal data, phi == 0, polynomial decay weights (sigma > 1).
    Theorem1,
    /// General data, small forcing allowed, exponential terminal scaling
    /// (sigma > 0).
    Theorem2,
}

/// Initial preset: f0 B^{-1} = G + c h, with h drawn from a fixed seeded
/// family (velocity polynomials x sqrt(G), optional cos(2 pi x_1)
/// modulation), normalized in L_{beta+1}^infty.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPreset {
    /// Project h off the conserved-quantity kernel (orthogonal data) or keep
    /// it raw (general data).
    pub project_kernel: bool,
    /// Additionally project off the separable invariants of axis-only
    /// sphere rules, so the perturbation decays under those rules too.
    pub project_axis_invariants: bool,
    pub cos_amplitude: f64,
}

impl Default for InitialPreset {
    fn default() -> Self {
        InitialPreset {
            project_kernel: true,
            project_axis_invariants: false,
            cos_amplitude: 0.0,
        }
    }
}

/// Terminal preset for ghat.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalPreset {
    /// ghat = log E + (a + b.v + q |v|^2) (1 + kappa cos(2 pi x_1)), so that
    /// e^{ghat} B = G e^{delta g} stays near G for small coefficients.
    Centered {
        constant: f64,
        linear: [f64; 3],
        quadratic: f64,
        /// Coefficient of v_1 v_2, the lowest mode orthogonal to both the
        /// conserved kernel and the axis-separable invariants.
        cross: f64,
        cos_amplitude: f64,
        /// Project the terminal perturbation off the kernel.
        project_kernel: bool,
        /// Also off the axis-rule separable invariants.
        project_axis_invariants: bool,
    },
    /// ghat = q |v|^2 with no offset; q = alpha' gives the degenerate
    /// scenario eta == 1 exactly.
    BareQuadratic { coefficient: f64 },
}

impl Default for TerminalPreset {
    fn default() -> Self {
        TerminalPreset::Centered {
            constant: 0.0,
            linear: [0.0; 3],
            quadratic: 0.01,
            cross: 0.0,
            cos_amplitude: 0.0,
            project_kernel: true,
            project_axis_invariants: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingPreset {
    Zero,
    /// phi(s, x, v) = (epsilon/2) e^{-s} G(v)/G(0): satisfies the L^1_t + C^0_t
    /// bound by epsilon.
    ExpDecay {
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub regime: Regime,
    pub beta: f64,
    pub sigma: f64,
    pub terminal_time: f64,
    pub time_step: f64,
    pub substep: f64,
    pub perturbation_scale: f64,
    pub seed: u64,
    pub initial: InitialPreset,
    pub terminal: TerminalPreset,
    pub forcing: ForcingPreset,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            regime: Regime::Theorem1,
            beta: 5.0,
            sigma: 1.5,
            terminal_time: 4.0,
            time_step: 0.05,
            substep: 0.01,
            perturbation_scale: 0.01,
            seed: 42,
            initial: InitialPreset::default(),
            terminal: TerminalPreset::default(),
            forcing: ForcingPreset::Zero,
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 4.0 {
            return Err(LabError::invalid("norms.beta", "must be > 4"));
        }
        match self.regime {
            Regime::Theorem1 => {
                if self.sigma <= 1.0 {
                    return Err(LabError::invalid(
                        "norms.sigma",
                        "theorem-1 regime requires sigma > 1",
                    ));
                }
                if self.forcing != ForcingPreset::Zero {
                    return Err(LabError::invalid(
                        "scenario.forcing.mode",
                        "theorem-1 regime requires phi == 0",
                    ));
                }
            }
            Regime::Theorem2 => {
                if self.sigma <= 0.0 {
                    return Err(LabError::invalid(
                        "norms.sigma",
                        "theorem-2 regime requires sigma > 0",
                    ));
                }
            }
        }
        if self.terminal_time < 0.0 {
            return Err(LabError::invalid("scenario.terminal_time", "must be >= 0"));
        }
        if self.time_step <= 0.0 {
            return Err(LabError::invalid("solver.time_step", "must be > 0"));
        }
        if self.substep <= 0.0 {
            return Err(LabError::invalid("solver.substep", "must be > 0"));
        }
        if self.tolerance <= 0.0 {
            return Err(LabError::invalid("solver.tolerance", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(LabError::invalid("solver.max_iterations", "must be >= 1"));
        }
        if self.perturbation_scale < 0.0 {
            return Err(LabError::invalid(
                "scenario.perturbation_scale",
                "must be >= 0",
            ));
        }
        if let ForcingPreset::ExpDecay { epsilon } = self.forcing {
            if epsilon < 0.0 {
                return Err(LabError::invalid(
                    "scenario.forcing.epsilon",
                    "must be >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Uniform time grid over [0, t]: number of steps and actual step size.
    pub fn time_grid(&self) -> (usize, f64, Vec<f64>) {
        let t = self.terminal_time;
        if t == 0.0 {
            return (0, self.time_step, vec![0.0]);
        }
        let n = ((t / self.time_step).round() as usize).max(1);
        let dt = t / n as f64;
        let times = (0..=n).map(|k| k as f64 * dt).collect();
        (n, dt, times)
    }
}

/// Boundary data with the smallness checks of the standing assumptions.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    /// psi_p(0) = f0 B^{-1} - G, pinned bit-exactly by the solver.
    pub psi_p0: Field,
    /// eta_p(t) = e^{g(t)} B - G, pinned bit-exactly by the solver.
    pub eta_pt: Field,
    /// ||psi_p(0)||_{L_{beta+1}^infty} (the H1/H4 check value).
    pub initial_norm: f64,
    /// ||eta_p(t)||_{L_{beta+1}^infty} (the H2 check value; for theorem-2 the
    /// reported value is the e^{sigma t}-rescaled one of H5).
    pub terminal_norm: f64,
    /// Terminal eta is the constant-1 field and phi == 0: the coupled system
    /// degenerates to the plain Boltzmann equation with eta == 1.
    pub degenerate: bool,
}

/// Seeded perturbation shape: (polynomial in v up to degree 3, including the
/// anisotropic quadratics that survive the kernel projection) x sqrt(G),
/// optionally modulated by 1 + a cos(2 pi x_1).
fn seeded_shape(lab: &Lab, seed: u64, cos_amplitude: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = lab.vgrid.dim;
    let n_mono = 12;
    let coef: Vec<f64> = (0..n_mono).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let kappa = -lab.eqs.g_exponent;
    Field::from_fn(&lab.sgrid, &lab.vgrid, |x, v| {
        let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let mut poly = coef[0];
        for ax in 0..d {
            poly += coef[1 + ax] * v[ax];
            poly += coef[4 + ax] * v[ax] * v[ax];
        }
        poly += coef[7] * v[0] * v[1];
        if d == 3 {
            poly += coef[8] * v[1] * v[2] + coef[9] * v[0] * v[2] + coef[10] * v[0] * v[1] * v[2];
        }
        poly += coef[11] * v[0] * v[0] * v[0];
        let decay = (-0.5 * kappa * s2).exp();
        let modulation = 1.0 + cos_amplitude * (2.0 * std::f64::consts::PI * x[0]).cos();
        poly * decay * modulation
    })
}

fn needs_axis_span(cfg: &ScenarioConfig) -> bool {
    if cfg.initial.project_axis_invariants {
        return true;
    }
    matches!(
        cfg.terminal,
        TerminalPreset::Centered {
            project_axis_invariants: true,
            ..
        }
    )
}

pub fn build_boundary_data(lab: &Lab, cfg: &ScenarioConfig) -> Result<BoundaryData> {
    cfg.validate()?;
    let beta1 = cfg.beta + 1.0;

    // forward initial perturbation
    let axis_span = if needs_axis_span(cfg) {
        axis_invariant_basis(&lab.vgrid, &lab.sgrid, &lab.eqs)
    } else {
        Vec::new()
    };
    let mut h = seeded_shape(lab, cfg.seed, cfg.initial.cos_amplitude);
    if cfg.initial.project_kernel || cfg.initial.project_axis_invariants {
        let raw_norm = weighted_sup_norm(&h, beta1);
        h = project_off_kernel(&h, &lab.basis)?;
        if cfg.initial.project_axis_invariants {
            h = project_off_span(&h, &axis_span);
        }
        if weighted_sup_norm(&h, beta1) < 1e-10 * raw_norm {
            return Err(LabError::invalid(
                "scenario.seed",
                "seeded perturbation collapses into the conserved-quantity kernel on this grid",
            ));
        }
    }
    let norm = weighted_sup_norm(&h, beta1);
    let psi_p0 = if norm > 0.0 && cfg.perturbation_scale > 0.0 {
        h.scale(cfg.perturbation_scale / norm)
    } else {
        Field::zeros(&lab.sgrid, &lab.vgrid)
    };
    let initial_norm = weighted_sup_norm(&psi_p0, beta1);

    // backward terminal perturbation: eta(t) = e^{ghat} B computed through
    // the combined exponent so the degenerate preset gives exactly 1 and the
    // zero preset reproduces G bit-exactly.
    let alpha_prime = lab.eqs.alpha_prime;
    let log_norm = lab.eqs.log_norm;
    let g_exponent = lab.eqs.g_exponent;
    let eta_full = match cfg.terminal {
        TerminalPreset::Centered {
            constant,
            linear,
            quadratic,
            cross,
            cos_amplitude,
            ..
        } => Field::from_fn(&lab.sgrid, &lab.vgrid, |x, v| {
            let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let mut dg = constant + quadratic * s2 + cross * v[0] * v[1];
            for ax in 0..lab.vgrid.dim {
                dg += linear[ax] * v[ax];
            }
            dg *= 1.0 + cos_amplitude * (2.0 * std::f64::consts::PI * x[0]).cos();
            // ghat - alpha'|v|^2 = log norm + (alpha - alpha')|v|^2 + dg
            (log_norm + g_exponent * s2 + dg).exp()
        }),
        TerminalPreset::BareQuadratic { coefficient } => {
            Field::from_fn(&lab.sgrid, &lab.vgrid, |_, v| {
                let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                ((coefficient - alpha_prime) * s2).exp()
            })
        }
    };
    let mut eta_pt = eta_full.sub(&lab.eqs.coupled);
    if let TerminalPreset::Centered {
        project_kernel,
        project_axis_invariants,
        ..
    } = cfg.terminal
    {
        if project_kernel || project_axis_invariants {
            eta_pt = project_off_kernel(&eta_pt, &lab.basis)?;
        }
        if project_axis_invariants {
            eta_pt = project_off_span(&eta_pt, &axis_span);
        }
    }
    let mut terminal_norm = weighted_sup_norm(&eta_pt, beta1);
    if cfg.regime == Regime::Theorem2 {
        // H5: terminal perturbation scaled by e^{-sigma t} by construction
        let scale = (-cfg.sigma * cfg.terminal_time).exp();
        eta_pt = eta_pt.scale(scale);
        terminal_norm = weighted_sup_norm(&eta_pt, beta1) * (cfg.sigma * cfg.terminal_time).exp();
    }

    // degeneracy: terminal eta identically 1 and no forcing (the preset
    // coefficient alpha' makes the exponent exactly zero at every node);
    // the theorem-2 terminal rescaling breaks the constant, so exclude it
    let degenerate = cfg.regime == Regime::Theorem1
        && cfg.forcing == ForcingPreset::Zero
        && eta_full.data.iter().all(|x| *x == 1.0);

    Ok(BoundaryData {
        psi_p0,
        eta_pt,
        initial_norm,
        terminal_norm,
        degenerate,
    })
}

/// Forcing field phi(s) at a given time; None means identically zero.
pub fn forcing_at(lab: &Lab, cfg: &ScenarioConfig, s: f64) -> Option<Field> {
    match cfg.forcing {
        ForcingPreset::Zero => None,
        ForcingPreset::ExpDecay { epsilon } => {
            if epsilon == 0.0 {
                return None;
            }
            let g0 = {
                let d = lab.vgrid.dim as i32;
                (2.0 * std::f64::consts::PI).powi(-d).sqrt()
            };
            let amp = 0.5 * epsilon * (-s).exp();
            Some(lab.eqs.coupled.map(|g| amp * g / g0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_lab() -> Lab {
        Lab::build(&Discretization {
            dim: 2,
            radius: 1.0,
            velocity_nodes: 3,
            space_nodes: 1,
            sphere_order: 4,
            alpha: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn validation_rules() {
        let mut cfg = ScenarioConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.beta = 4.0;
        assert!(cfg.validate().is_err());
        cfg.beta = 5.0;
        cfg.sigma = 0.5;
        assert!(cfg.validate().is_err()); // theorem-1 needs sigma > 1
        cfg.regime = Regime::Theorem2;
        assert!(cfg.validate().is_ok()); // theorem-2 allows sigma = 0.5
        cfg.regime = Regime::Theorem1;
        cfg.sigma = 1.5;
        cfg.forcing = ForcingPreset::ExpDecay { epsilon: 0.01 };
        assert!(cfg.validate().is_err()); // theorem-1 requires phi == 0
    }

    #[test]
    fn boundary_data_orthogonal_and_scaled() {
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            perturbation_scale: 0.02,
            ..ScenarioConfig::default()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        assert!((bd.initial_norm - 0.02).abs() < 1e-12);
        for b in &lab.basis.fields {
            assert!(bd.psi_p0.inner(b).abs() < 1e-12);
        }
        assert!(!bd.degenerate);
    }

    #[test]
    fn degenerate_preset_detected_exactly() {
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            terminal: TerminalPreset::BareQuadratic {
                coefficient: lab.eqs.alpha_prime,
            },
            ..ScenarioConfig::default()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        assert!(bd.degenerate);
        // eta(t) = G + eta_p(t) reconstructs the constant 1 to roundoff
        let eta_full = lab.eqs.coupled.add(&bd.eta_pt);
        for x in &eta_full.data {
            assert!((x - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_scale_gives_zero_initial() {
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            perturbation_scale: 0.0,
            terminal: TerminalPreset::Centered {
                constant: 0.0,
                linear: [0.0; 3],
                quadratic: 0.0,
                cross: 0.0,
                cos_amplitude: 0.0,
                project_kernel: false,
                project_axis_invariants: false,
            },
            ..ScenarioConfig::default()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        assert_eq!(bd.psi_p0.max_abs(), 0.0);
        assert_eq!(bd.eta_pt.max_abs(), 0.0);
    }

    #[test]
    fn time_grid_handles_zero_terminal_time() {
        let cfg = ScenarioConfig {
            terminal_time: 0.0,
            ..ScenarioConfig::default()
        };
        let (n, _, times) = cfg.time_grid();
        assert_eq!(n, 0);
        assert_eq!(times, vec![0.0]);
    }
}

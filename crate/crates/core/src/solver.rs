//! The fixed-point map Gamma = (Gamma+, Gamma-) on trajectory pairs, Picard
//! iteration to the mild solution of the perturbation system, change of
//! variables back to the physical pair, and decay diagnostics.

use crate::collision::nonlinearity;
use crate::equilibria::{trajectory_norm, NormReport, TimeWeight};
use crate::error::{LabError, Result};
use crate::field::{Field, Trajectory};
use crate::scenario::{forcing_at, BoundaryData, Lab, Regime, ScenarioConfig};
use crate::transport::{Direction, SemigroupStepper};

/// Perturbation trajectories with pinned boundary data: psi_p(0) is the
/// configured initial perturbation, eta_p(t) the configured terminal one,
/// both bit-exact after every sweep.
#[derive(Debug, Clone)]
pub struct TrajectoryPair {
    pub psi_p: Trajectory,
    pub eta_p: Trajectory,
}

impl TrajectoryPair {
    pub fn sub(&self, other: &TrajectoryPair) -> TrajectoryPair {
        TrajectoryPair {
            psi_p: self.psi_p.sub(&other.psi_p),
            eta_p: self.eta_p.sub(&other.eta_p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta_psi: f64,
    pub delta_eta: f64,
    pub delta: f64,
    /// delta_k / delta_{k-1}
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub pair: TrajectoryPair,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// A sweep produced non-finite values and the iteration was aborted.
    pub blown_up: bool,
    /// ||Gamma(pair) - pair|| in the regime norm after the last iterate.
    pub residual: f64,
    /// Reconstructed full fields stay positive (reported, not enforced).
    pub positive: bool,
    pub min_psi: f64,
    pub min_eta: f64,
    pub degenerate: bool,
}

fn regime_norm(cfg: &ScenarioConfig, diff: &TrajectoryPair) -> (f64, f64) {
    match cfg.regime {
        Regime::Theorem1 => {
            let p = trajectory_norm(
                &diff.psi_p,
                cfg.beta,
                cfg.sigma,
                TimeWeight::Polynomial,
                false,
            )
            .map(|r| r.value)
            .unwrap_or(0.0);
            let e = trajectory_norm(
                &diff.eta_p,
                cfg.beta,
                cfg.sigma,
                TimeWeight::Polynomial,
                true,
            )
            .map(|r| r.value)
            .unwrap_or(0.0);
            (p, e)
        }
        Regime::Theorem2 => {
            let p = trajectory_norm(&diff.psi_p, cfg.beta, 0.0, TimeWeight::Exponential, false)
                .map(|r| r.value)
                .unwrap_or(0.0);
            let scale = (cfg.sigma * cfg.terminal_time).exp();
            let e = trajectory_norm(
                &diff.eta_p,
                cfg.beta,
                -cfg.sigma,
                TimeWeight::Exponential,
                true,
            )
            .map(|r| r.value)
            .unwrap_or(0.0);
            (p, scale * e)
        }
    }
}

fn steppers(lab: &Lab, cfg: &ScenarioConfig) -> (SemigroupStepper, SemigroupStepper) {
    (
        SemigroupStepper::new(Direction::Forward, cfg.substep, lab.ctx.clone()),
        SemigroupStepper::new(Direction::Backward, cfg.substep, lab.ctx.clone()),
    )
}

/// Zeroth Picard iterate: the boundary data propagated by the linear
/// semigroups alone, psi_p(s) = e^{sB+} psi_p(0), eta_p(s) = e^{(t-s)B-}
/// eta_p(t). In the degenerate scenario the backward component is the exact
/// constant trajectory.
pub fn init_picard(lab: &Lab, cfg: &ScenarioConfig, bd: &BoundaryData) -> TrajectoryPair {
    let (n, dt, times) = cfg.time_grid();
    let (fwd, bwd) = steppers(lab, cfg);

    let mut psi = Vec::with_capacity(n + 1);
    psi.push(bd.psi_p0.clone());
    for k in 0..n {
        let next = fwd.step(&psi[k], dt);
        psi.push(next);
    }

    let mut eta = vec![bd.eta_pt.clone(); n + 1];
    if !bd.degenerate {
        for k in (0..n).rev() {
            eta[k] = bwd.step(&eta[k + 1], dt);
        }
    }

    TrajectoryPair {
        psi_p: Trajectory {
            times: times.clone(),
            fields: psi,
        },
        eta_p: Trajectory { times, fields: eta },
    }
}

fn check_finite(f: &Field, context: &str) -> Result<()> {
    if f.all_finite() {
        Ok(())
    } else {
        Err(LabError::NonFinite {
            context: context.to_string(),
            magnitude: f.data.iter().fold(0.0f64, |m, &x| {
                if x.is_finite() {
                    m.max(x.abs())
                } else {
                    f64::INFINITY
                }
            }),
        })
    }
}

/// One application of Gamma: forward Duhamel accumulation
/// I_{n+1} = e^{dt B+}(I_n + (dt/2) F_n) + (dt/2) F_{n+1} with
/// F_n = N[psi_p, eta_p](s_n) - (G + psi_p(s_n)) phi(s_n), and the mirrored
/// backward accumulation from eta_p(t) with source N[eta_p, psi_p] -
/// (G + eta_p) phi. Boundary pins preserved bit-exactly.
pub fn apply_gamma(
    lab: &Lab,
    cfg: &ScenarioConfig,
    bd: &BoundaryData,
    pair: &TrajectoryPair,
) -> Result<TrajectoryPair> {
    let (n, dt, times) = cfg.time_grid();
    let (fwd, bwd) = steppers(lab, cfg);

    let phi: Vec<Option<Field>> = times.iter().map(|&s| forcing_at(lab, cfg, s)).collect();

    let source = |a: &Field, b: &Field, k: usize| -> Result<Field> {
        let mut f = nonlinearity(a, b, &lab.ctx)?;
        if let Some(phi_k) = &phi[k] {
            // -(G + a) phi
            let full = lab.eqs.coupled.add(a);
            f.axpy(-1.0, &full.zip(phi_k, |g, p| g * p));
        }
        Ok(f)
    };

    let forward = || -> Result<Vec<Field>> {
        let mut srcs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            srcs.push(source(&pair.psi_p.fields[k], &pair.eta_p.fields[k], k)?);
        }
        let mut out = Vec::with_capacity(n + 1);
        out.push(bd.psi_p0.clone());
        for k in 0..n {
            let mut staged = out[k].clone();
            staged.axpy(0.5 * dt, &srcs[k]);
            let mut next = fwd.step(&staged, dt);
            next.axpy(0.5 * dt, &srcs[k + 1]);
            check_finite(&next, "Gamma+ accumulation")?;
            out.push(next);
        }
        Ok(out)
    };

    let backward = || -> Result<Vec<Field>> {
        if bd.degenerate {
            // terminal eta is the constant 1 and phi == 0: the backward mild
            // map preserves it identically (the collision bracket of a
            // constant vanishes under conservative truncation)
            return Ok(vec![bd.eta_pt.clone(); n + 1]);
        }
        let mut srcs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            srcs.push(source(&pair.eta_p.fields[k], &pair.psi_p.fields[k], k)?);
        }
        let mut out = vec![bd.eta_pt.clone(); n + 1];
        for k in (0..n).rev() {
            let mut staged = out[k + 1].clone();
            staged.axpy(0.5 * dt, &srcs[k + 1]);
            let mut prev = bwd.step(&staged, dt);
            prev.axpy(0.5 * dt, &srcs[k]);
            check_finite(&prev, "Gamma- accumulation")?;
            out[k] = prev;
        }
        Ok(out)
    };

    let (psi, eta) = rayon::join(forward, backward);
    Ok(TrajectoryPair {
        psi_p: Trajectory {
            times: times.clone(),
            fields: psi?,
        },
        eta_p: Trajectory {
            times,
            fields: eta?,
        },
    })
}

/// Picard iteration on Gamma until the regime norm of successive differences
/// falls below tolerance. Divergence (max iterations, non-finite values) is
/// returned as a report with the iterate history, not an error.
pub fn solve_coupled(
    lab: &Lab,
    cfg: &ScenarioConfig,
    bd: &BoundaryData,
) -> Result<CoupledSolution> {
    let mut current = init_picard(lab, cfg, bd);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut blown_up = false;

    for it in 0..cfg.max_iterations {
        let next = match apply_gamma(lab, cfg, bd, &current) {
            Ok(next) => next,
            Err(LabError::NonFinite { .. }) => {
                // divergence is a report, not a crash
                blown_up = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let diff = next.sub(&current);
        let (dp, de) = regime_norm(cfg, &diff);
        let delta = dp + de;
        let ratio = history.last().map(|prev| {
            if prev.delta > 0.0 {
                delta / prev.delta
            } else {
                0.0
            }
        });
        history.push(IterationRecord {
            iteration: it,
            delta_psi: dp,
            delta_eta: de,
            delta,
            ratio,
        });
        current = next;
        if delta <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    // fixed-point residual of the returned iterate
    let residual = if converged {
        let sweep = apply_gamma(lab, cfg, bd, &current)?;
        let (rp, re) = regime_norm(cfg, &sweep.sub(&current));
        rp + re
    } else {
        f64::INFINITY
    };

    // physical positivity of the reconstructed pair
    let mut min_psi = f64::INFINITY;
    let mut min_eta = f64::INFINITY;
    for f in &current.psi_p.fields {
        for (g, p) in lab.eqs.coupled.data.iter().zip(&f.data) {
            min_psi = min_psi.min(g + p);
        }
    }
    for f in &current.eta_p.fields {
        for (g, p) in lab.eqs.coupled.data.iter().zip(&f.data) {
            min_eta = min_eta.min(g + p);
        }
    }

    Ok(CoupledSolution {
        pair: current,
        history,
        converged,
        blown_up,
        residual,
        positive: min_psi > 0.0 && min_eta > 0.0,
        min_psi,
        min_eta,
        degenerate: bd.degenerate,
    })
}

/// Reconstruct the full components psi = G + psi_p, eta = G + eta_p.
pub fn reconstruct_full(lab: &Lab, pair: &TrajectoryPair) -> (Trajectory, Trajectory) {
    let lift = |traj: &Trajectory| Trajectory {
        times: traj.times.clone(),
        fields: traj.fields.iter().map(|f| lab.eqs.coupled.add(f)).collect(),
    };
    (lift(&pair.psi_p), lift(&pair.eta_p))
}

/// Change of variables back to the physical pair: p = log eta + alpha'|v|^2
/// and density = psi eta. Round-trips with (psi, eta) = (density e^{-p +
/// alpha'|v|^2}, e^{p - alpha'|v|^2}).
pub fn to_physical_variables(lab: &Lab, sol: &CoupledSolution) -> Result<(Trajectory, Trajectory)> {
    let (psi, eta) = reconstruct_full(lab, &sol.pair);
    let alpha_prime = lab.eqs.alpha_prime;
    let nv = lab.vgrid.len();
    let mut density_fields = Vec::with_capacity(psi.len());
    let mut p_fields = Vec::with_capacity(psi.len());
    for (pf, ef) in psi.fields.iter().zip(&eta.fields) {
        for (idx, &e) in ef.data.iter().enumerate() {
            if e <= 0.0 {
                return Err(LabError::NonPositiveEta {
                    space: idx / nv,
                    velocity: idx % nv,
                    value: e,
                });
            }
        }
        density_fields.push(pf.zip(ef, |a, b| a * b));
        let mut p = ef.map(|e| e.ln());
        for ix in 0..p.nx() {
            let slice = &mut p.data[ix * nv..(ix + 1) * nv];
            for (iv, val) in slice.iter_mut().enumerate() {
                let s = lab.vgrid.speeds[iv];
                *val += alpha_prime * s * s;
            }
        }
        p_fields.push(p);
    }
    Ok((
        Trajectory {
            times: psi.times.clone(),
            fields: density_fields,
        },
        Trajectory {
            times: psi.times,
            fields: p_fields,
        },
    ))
}

/// Decay diagnostics of a converged solution: per-time weighted norms, the
/// regime trajectory norms, and the smallest a* for which the two decay
/// displays hold.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub psi: NormReport,
    pub eta_reversed: NormReport,
    pub a_star: f64,
}

pub fn decay_report(lab: &Lab, cfg: &ScenarioConfig, sol: &CoupledSolution) -> Result<DecayReport> {
    let _ = lab;
    let (psi, eta_reversed) = match cfg.regime {
        Regime::Theorem1 => (
            trajectory_norm(
                &sol.pair.psi_p,
                cfg.beta,
                cfg.sigma,
                TimeWeight::Polynomial,
                false,
            )?,
            trajectory_norm(
                &sol.pair.eta_p,
                cfg.beta,
                cfg.sigma,
                TimeWeight::Polynomial,
                true,
            )?,
        ),
        Regime::Theorem2 => (
            trajectory_norm(
                &sol.pair.psi_p,
                cfg.beta,
                0.0,
                TimeWeight::Exponential,
                false,
            )?,
            trajectory_norm(
                &sol.pair.eta_p,
                cfg.beta,
                -cfg.sigma,
                TimeWeight::Exponential,
                true,
            )?,
        ),
    };
    let eta_value = match cfg.regime {
        Regime::Theorem1 => eta_reversed.value,
        Regime::Theorem2 => (cfg.sigma * cfg.terminal_time).exp() * eta_reversed.value,
    };
    let a_star = psi.value.max(eta_value);
    Ok(DecayReport {
        psi,
        eta_reversed,
        a_star,
    })
}

/// Standalone forward-only integration of the degenerate (eta == 1)
/// perturbation equation with the same stepper and trapezoid rule, by local
/// time marching with a fixed-point corrector per step. The coupled solver
/// must reproduce this trajectory in the degenerate scenario.
pub fn boltzmann_forward_march(
    lab: &Lab,
    cfg: &ScenarioConfig,
    bd: &BoundaryData,
    corrector_tol: f64,
) -> Result<Trajectory> {
    let (n, dt, times) = cfg.time_grid();
    let (fwd, _) = steppers(lab, cfg);
    let eta_p = &bd.eta_pt;
    let mut fields = Vec::with_capacity(n + 1);
    fields.push(bd.psi_p0.clone());
    for k in 0..n {
        let src_k = nonlinearity(&fields[k], eta_p, &lab.ctx)?;
        let mut staged = fields[k].clone();
        staged.axpy(0.5 * dt, &src_k);
        let propagated = fwd.step(&staged, dt);
        // corrector: next = propagated + (dt/2) N[next, eta_p]
        let mut next = propagated.clone();
        for _ in 0..50 {
            let src_next = nonlinearity(&next, eta_p, &lab.ctx)?;
            let mut candidate = propagated.clone();
            candidate.axpy(0.5 * dt, &src_next);
            let change = candidate.sub(&next).max_abs();
            next = candidate;
            if change <= corrector_tol {
                break;
            }
        }
        check_finite(&next, "forward march")?;
        fields.push(next);
    }
    Ok(Trajectory { times, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        build_boundary_data, Discretization, ForcingPreset, InitialPreset, TerminalPreset,
    };

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

    fn tiny_cfg() -> ScenarioConfig {
        ScenarioConfig {
            terminal_time: 0.5,
            time_step: 0.1,
            substep: 0.05,
            perturbation_scale: 0.01,
            ..ScenarioConfig::default()
        }
    }

    fn zero_cfg() -> ScenarioConfig {
        ScenarioConfig {
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
            ..tiny_cfg()
        }
    }

    #[test]
    fn zero_data_gives_zero_pair_in_one_iteration() {
        let lab = tiny_lab();
        let cfg = zero_cfg();
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.history.len(), 1);
        for f in sol.pair.psi_p.fields.iter().chain(&sol.pair.eta_p.fields) {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn t_zero_single_node_trajectories() {
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            terminal_time: 0.0,
            ..tiny_cfg()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let pair = init_picard(&lab, &cfg, &bd);
        assert_eq!(pair.psi_p.len(), 1);
        assert_eq!(pair.psi_p.fields[0].data, bd.psi_p0.data);
        assert_eq!(pair.eta_p.fields[0].data, bd.eta_pt.data);
    }

    #[test]
    fn boundary_pinning_is_bit_exact() {
        let lab = tiny_lab();
        let cfg = tiny_cfg();
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let mut pair = init_picard(&lab, &cfg, &bd);
        for _ in 0..3 {
            pair = apply_gamma(&lab, &cfg, &bd, &pair).unwrap();
            assert_eq!(pair.psi_p.fields[0].data, bd.psi_p0.data);
            assert_eq!(pair.eta_p.fields.last().unwrap().data, bd.eta_pt.data);
        }
    }

    #[test]
    fn picard_converges_on_tiny_instance() {
        let lab = tiny_lab();
        let cfg = tiny_cfg();
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        assert!(sol.converged, "history: {:?}", sol.history);
        assert!(sol.residual <= 2.0 * cfg.tolerance);
        assert!(sol.positive);
    }

    #[test]
    fn degenerate_backward_constant_and_matches_forward_march() {
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            terminal: TerminalPreset::BareQuadratic {
                coefficient: lab.eqs.alpha_prime,
            },
            initial: InitialPreset {
                project_kernel: true,
                project_axis_invariants: false,
                cos_amplitude: 0.0,
            },
            forcing: ForcingPreset::Zero,
            ..tiny_cfg()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        assert!(bd.degenerate);
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        assert!(sol.converged);
        // backward iterates constant: every field bit-identical to the data
        for f in &sol.pair.eta_p.fields {
            assert_eq!(f.data, bd.eta_pt.data);
        }
        // forward component equals a standalone Boltzmann forward march
        let march = boltzmann_forward_march(&lab, &cfg, &bd, 1e-14).unwrap();
        for (a, b) in sol.pair.psi_p.fields.iter().zip(&march.fields) {
            assert!(a.sub(b).max_abs() < 1e-10, "diff {}", a.sub(b).max_abs());
        }
    }

    #[test]
    fn decay_report_matches_trajectory_norms() {
        let lab = tiny_lab();
        let cfg = tiny_cfg();
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        let report = decay_report(&lab, &cfg, &sol).unwrap();
        let psi = trajectory_norm(
            &sol.pair.psi_p,
            cfg.beta,
            cfg.sigma,
            TimeWeight::Polynomial,
            false,
        )
        .unwrap();
        assert_eq!(report.psi.value, psi.value);
        assert!(report.a_star >= report.psi.value);
        assert!(report.a_star.is_finite());
    }

    #[test]
    fn physical_roundtrip() {
        let lab = tiny_lab();
        let cfg = tiny_cfg();
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        let (density, p) = to_physical_variables(&lab, &sol).unwrap();
        let (psi, eta) = reconstruct_full(&lab, &sol.pair);
        let alpha_prime = lab.eqs.alpha_prime;
        for k in 0..psi.len() {
            for iv in 0..lab.vgrid.len() {
                let s = lab.vgrid.speeds[iv];
                let eta_back = (p.fields[k].at(0, iv) - alpha_prime * s * s).exp();
                let e = eta.fields[k].at(0, iv);
                assert!((eta_back - e).abs() <= 1e-12 * e.abs());
                let psi_back = density.fields[k].at(0, iv) / e;
                let ps = psi.fields[k].at(0, iv);
                assert!((psi_back - ps).abs() <= 1e-12 * (1.0 + ps.abs()));
            }
        }
    }

    #[test]
    fn eta_one_maps_to_quadratic_p() {
        // eta == 1 -> p = alpha' |v|^2 and density = psi
        let lab = tiny_lab();
        let cfg = ScenarioConfig {
            terminal: TerminalPreset::BareQuadratic {
                coefficient: lab.eqs.alpha_prime,
            },
            ..tiny_cfg()
        };
        let bd = build_boundary_data(&lab, &cfg).unwrap();
        let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
        let (density, p) = to_physical_variables(&lab, &sol).unwrap();
        let (psi, _) = reconstruct_full(&lab, &sol.pair);
        let k = sol.pair.psi_p.len() - 1;
        for iv in 0..lab.vgrid.len() {
            let s = lab.vgrid.speeds[iv];
            assert!((p.fields[k].at(0, iv) - lab.eqs.alpha_prime * s * s).abs() < 1e-14);
            assert!(
                (density.fields[k].at(0, iv) - psi.fields[k].at(0, iv)).abs()
                    <= 1e-14 * (1.0 + psi.fields[k].at(0, iv).abs())
            );
        }
    }
}

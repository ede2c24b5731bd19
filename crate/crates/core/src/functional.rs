//! Delta p, the Hamiltonians in physical and symmetric variables, the
//! functional I(t, g) by two independent formulas, the stationary functional,
//! and the mild Hamilton-Jacobi residual.

use crate::collision::{biased_collision, CollisionTable};
use crate::equilibria::EquilibriumSet;
use crate::error::{LabError, Result};
use crate::field::{interpolate, Field, Trajectory};
use crate::grid::collide;
use crate::scenario::{build_boundary_data, forcing_at, Lab, ScenarioConfig};
use crate::solver::{reconstruct_full, solve_coupled, CoupledSolution};
use rayon::prelude::*;

/// Delta p at a space node: p(x,v') + p(x,v*') - p(x,v) - p(x,v*), with
/// multilinear interpolation at the post-collision points.
pub fn delta_p(p: &Field, ix: usize, v: [f64; 3], v_star: [f64; 3], omega: [f64; 3]) -> f64 {
    let (vp, vsp) = collide(v, v_star, omega);
    let x = p.space.position(ix);
    // grouped per particle so grazing collisions give exactly zero
    (interpolate(p, x, vp) - interpolate(p, x, v))
        + (interpolate(p, x, vsp) - interpolate(p, x, v_star))
}

/// H(phi, p) = (1/2) int phi phi_* (e^{Delta p} - 1) ((v*-v).omega)_+ over
/// (omega, v*, v, x) on the retained quadrature table.
pub fn hamiltonian(phi: &Field, p: &Field, table: &CollisionTable) -> Result<f64> {
    phi.check_same_grids(p, "hamiltonian: phi vs p")?;
    let vg = &table.vgrid;
    let cell = vg.cell_volume() * phi.space.cell_volume();
    let mut total = 0.0;
    let mut max_dp = 0.0f64;
    for ix in 0..phi.nx() {
        let ps = p.slice(ix);
        let fs = phi.slice(ix);
        let partials: Vec<(f64, f64)> = (0..vg.len())
            .into_par_iter()
            .map(|iv| {
                let mut acc = 0.0;
                let mut mdp = 0.0f64;
                for e in table.row(iv) {
                    let js = e.vstar as usize;
                    let dp =
                        (vg.eval(ps, &e.prime) - ps[iv]) + (vg.eval(ps, &e.star_prime) - ps[js]);
                    mdp = mdp.max(dp.abs());
                    acc += e.weight * fs[iv] * fs[js] * (dp.exp() - 1.0);
                }
                (acc, mdp)
            })
            .collect();
        for (acc, mdp) in partials {
            total += acc;
            max_dp = max_dp.max(mdp);
        }
    }
    if max_dp > 700.0 || !total.is_finite() {
        return Err(LabError::HamiltonianOverflow {
            max_delta_p: max_dp,
        });
    }
    Ok(0.5 * total * cell)
}

/// The three algebraically equivalent realizations of H'(psi, eta).
#[derive(Debug, Clone, Copy)]
pub struct SymmetricHamiltonianForms {
    /// -(1/4) int (psi'psi*' - psi psi*)(eta'eta*' - eta eta*)
    pub primary: f64,
    /// (1/2) int psi psi* (eta'eta*' - eta eta*)
    pub eta_shifted: f64,
    /// (1/2) int (psi'psi*' - psi psi*) eta eta*
    pub psi_shifted: f64,
}

pub fn hamiltonian_sym_forms(
    psi: &Field,
    eta: &Field,
    table: &CollisionTable,
) -> Result<SymmetricHamiltonianForms> {
    psi.check_same_grids(eta, "hamiltonian_sym: psi vs eta")?;
    let vg = &table.vgrid;
    let cell = vg.cell_volume() * psi.space.cell_volume();
    let mut primary = 0.0;
    let mut eta_shifted = 0.0;
    let mut psi_shifted = 0.0;
    for ix in 0..psi.nx() {
        let ps = psi.slice(ix);
        let es = eta.slice(ix);
        let partials: Vec<[f64; 3]> = (0..vg.len())
            .into_par_iter()
            .map(|iv| {
                let mut acc = [0.0f64; 3];
                for e in table.row(iv) {
                    let js = e.vstar as usize;
                    let da = vg.eval(ps, &e.prime) * vg.eval(ps, &e.star_prime) - ps[iv] * ps[js];
                    let db = vg.eval(es, &e.prime) * vg.eval(es, &e.star_prime) - es[iv] * es[js];
                    acc[0] += e.weight * da * db;
                    acc[1] += e.weight * ps[iv] * ps[js] * db;
                    acc[2] += e.weight * da * es[iv] * es[js];
                }
                acc
            })
            .collect();
        for a in partials {
            primary += a[0];
            eta_shifted += a[1];
            psi_shifted += a[2];
        }
    }
    Ok(SymmetricHamiltonianForms {
        primary: -0.25 * primary * cell,
        eta_shifted: 0.5 * eta_shifted * cell,
        psi_shifted: 0.5 * psi_shifted * cell,
    })
}

/// H'(psi, eta), primary form.
pub fn hamiltonian_sym(psi: &Field, eta: &Field, table: &CollisionTable) -> Result<f64> {
    Ok(hamiltonian_sym_forms(psi, eta, table)?.primary)
}

/// I(t, g) by the defining formula in symmetric variables:
/// -1 + <f0 B^{-1}, eta(0)> + <<D_s eta, psi>> - <<phi, psi eta>> + int H' ds,
/// with D_s eta taken from the equation: D_s eta = eta phi - Q_psi(eta, eta).
pub fn evaluate_functional(lab: &Lab, cfg: &ScenarioConfig, sol: &CoupledSolution) -> Result<f64> {
    if !sol.converged {
        return Err(LabError::NotConverged);
    }
    let (psi, eta) = reconstruct_full(lab, &sol.pair);
    let times = &psi.times;
    let mut ds_eta_psi = Vec::with_capacity(times.len());
    let mut phi_term = Vec::with_capacity(times.len());
    let mut hprime = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let pk = &psi.fields[k];
        let ek = &eta.fields[k];
        let q = biased_collision(pk, ek, ek, &lab.ctx.table)?;
        let phi_k = forcing_at(lab, cfg, times[k]);
        let mut ds_eta = q.scale(-1.0);
        if let Some(phi) = &phi_k {
            ds_eta.axpy(1.0, &ek.zip(phi, |e, p| e * p));
            phi_term.push(phi.inner(&pk.zip(ek, |a, b| a * b)));
        } else {
            phi_term.push(0.0);
        }
        ds_eta_psi.push(ds_eta.inner(pk));
        hprime.push(hamiltonian_sym(pk, ek, &lab.ctx.table)?);
    }
    let boundary = psi.fields[0].inner(&eta.fields[0]);
    Ok(-1.0 + boundary + Trajectory::trapezoid(times, &ds_eta_psi)
        - Trajectory::trapezoid(times, &phi_term)
        + Trajectory::trapezoid(times, &hprime))
}

/// I(t, g) by the boundedness decomposition:
/// -1 + <eta(t), psi(t)> - (1/2) <<eta, Q_eta(psi, psi)>>.
/// Independent code path from `evaluate_functional`.
pub fn functional_decomposed(
    lab: &Lab,
    cfg: &ScenarioConfig,
    sol: &CoupledSolution,
) -> Result<f64> {
    if !sol.converged {
        return Err(LabError::NotConverged);
    }
    let _ = cfg;
    let (psi, eta) = reconstruct_full(lab, &sol.pair);
    let times = &psi.times;
    let mut pairing = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let pk = &psi.fields[k];
        let ek = &eta.fields[k];
        let q = biased_collision(ek, pk, pk, &lab.ctx.table)?;
        pairing.push(ek.inner(&q));
    }
    let last = psi.len() - 1;
    let terminal = eta.fields[last].inner(&psi.fields[last]);
    Ok(-1.0 + terminal - 0.5 * Trajectory::trapezoid(times, &pairing))
}

/// Stationary functional I_infinity(ghat) = -1 + <e^{ghat}, M>.
pub fn stationary_functional(g_hat: &Field, eqs: &EquilibriumSet) -> f64 {
    -1.0 + g_hat.map(|g| g.exp()).inner(&eqs.maxwellian)
}

/// The effective terminal ghat of a scenario: log(eta(t)) + alpha' |v|^2.
pub fn effective_g_hat(lab: &Lab, sol: &CoupledSolution) -> Result<Field> {
    let (_, eta) = reconstruct_full(lab, &sol.pair);
    let terminal = eta.fields.last().unwrap();
    let nv = lab.vgrid.len();
    for (idx, &e) in terminal.data.iter().enumerate() {
        if e <= 0.0 {
            return Err(LabError::NonPositiveEta {
                space: idx / nv,
                velocity: idx % nv,
                value: e,
            });
        }
    }
    let mut g = terminal.map(|e| e.ln());
    let alpha_prime = lab.eqs.alpha_prime;
    for ix in 0..g.nx() {
        let slice = &mut g.data[ix * nv..(ix + 1) * nv];
        for (iv, val) in slice.iter_mut().enumerate() {
            let s = lab.vgrid.speeds[iv];
            *val += alpha_prime * s * s;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct HjResidualPoint {
    pub t: f64,
    pub difference_quotient: f64,
    pub hamiltonian_terminal: f64,
    pub residual: f64,
    pub relative: f64,
}

/// |[I(t + dt) - I(t)]/dt - H'(psi_t(t), eta_t(t))| via two full solves per
/// point; the re-solve keeps the same ghat (theorem-1, g constant along
/// trajectories). The difference quotient uses the decomposed formula, whose
/// evaluation does not accumulate the time-integral representation defect
/// (the two formulas' agreement is checked separately).
pub fn hj_residual(
    lab: &Lab,
    base: &ScenarioConfig,
    t_list: &[f64],
    delta_t: f64,
) -> Result<Vec<HjResidualPoint>> {
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let solve_at = |tt: f64| -> Result<(CoupledSolution, f64)> {
            let cfg = ScenarioConfig {
                terminal_time: tt,
                ..base.clone()
            };
            let bd = build_boundary_data(lab, &cfg)?;
            let sol = solve_coupled(lab, &cfg, &bd)?;
            let value = functional_decomposed(lab, &cfg, &sol)?;
            Ok((sol, value))
        };
        let (sol_t, i_t) = solve_at(t)?;
        let (_, i_next) = solve_at(t + delta_t)?;
        let (psi, eta) = reconstruct_full(lab, &sol_t.pair);
        let last = psi.len() - 1;
        let h = hamiltonian_sym(&psi.fields[last], &eta.fields[last], &lab.ctx.table)?;
        let dq = (i_next - i_t) / delta_t;
        let residual = (dq - h).abs();
        out.push(HjResidualPoint {
            t,
            difference_quotient: dq,
            hamiltonian_terminal: h,
            residual,
            relative: residual / h.abs().max(1e-300),
        });
    }
    Ok(out)
}

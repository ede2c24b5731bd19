//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with --nocapture to see them). Desk scale: d = 3, R = 4, n = 9..13
//! velocity nodes, homogeneous space, axis sphere rule for the reference
//! dynamics and a general product rule for the refinement ladder; oracle
//! instances are d = 2, n = 3..5.
//!
//! Criterion 10's gate is unattainable as written: the witnessed constant
//! of the convolution inequality genuinely climbs from 0.855 (t = 1) to 2.24
//! (t = 16), so the max/min ratio is 2.62 > 1.5 for any sweep containing
//! t = 1. The test reports FAIL for that criterion and pins the
//! independently verified values (see README, Numerical notes).

use hjlab_core::collision::{biased_collision, collect_row};
use hjlab_core::equilibria::{trajectory_norm, weighted_sup_norm, TimeWeight};
use hjlab_core::field::Field;
use hjlab_core::functional::{
    evaluate_functional, functional_decomposed, hamiltonian, hamiltonian_sym, stationary_functional,
};
use hjlab_core::grid::{build_sphere_quadrature, build_velocity_grid};
use hjlab_core::oracle::{
    convolution_bound_check, oracle_collision, oracle_functional, oracle_gamma_sweep,
    oracle_hamiltonian, oracle_hamiltonian_sym,
};
use hjlab_core::scenario::{
    build_boundary_data, Discretization, ForcingPreset, InitialPreset, Lab, Regime, ScenarioConfig,
    TerminalPreset,
};
use hjlab_core::solver::{
    apply_gamma, boltzmann_forward_march, init_picard, reconstruct_full, solve_coupled,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

fn reference_lab() -> Lab {
    Lab::build(&Discretization::default()).unwrap()
}

fn tiny_lab() -> Lab {
    Lab::build(&Discretization {
        dim: 2,
        radius: 1.0,
        velocity_nodes: 5,
        space_nodes: 1,
        sphere_order: 4,
        alpha: 0.0,
    })
    .unwrap()
}

/// Reference theorem-1 scenario: c = 0.01, sigma = 1.5, beta = 5, t = 4.
fn reference_scenario() -> ScenarioConfig {
    ScenarioConfig {
        regime: Regime::Theorem1,
        beta: 5.0,
        sigma: 1.5,
        terminal_time: 4.0,
        time_step: 0.05,
        substep: 0.01,
        perturbation_scale: 0.01,
        seed: 42,
        initial: InitialPreset {
            project_kernel: true,
            project_axis_invariants: true,
            cos_amplitude: 0.0,
        },
        terminal: TerminalPreset::Centered {
            constant: 0.0,
            linear: [0.0; 3],
            quadratic: 0.01,
            cross: 0.025,
            cos_amplitude: 0.0,
            project_kernel: true,
            project_axis_invariants: true,
        },
        forcing: ForcingPreset::Zero,
        tolerance: 1e-9,
        max_iterations: 100,
    }
}

fn random_field(lab: &Lab, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::zeros(&lab.sgrid, &lab.vgrid);
    for x in f.data.iter_mut() {
        *x = scale * rng.gen_range(-1.0..1.0);
    }
    f
}

fn verdict(criterion: &str, pass: bool, details: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} ({details})",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_01_oracle_equivalence() {
    let lab = tiny_lab();
    let mut worst = 0.0f64;

    let eta = random_field(&lab, 11, 1.0);
    let p1 = random_field(&lab, 12, 1.0);
    let p2 = random_field(&lab, 13, 1.0);
    let main = biased_collision(&eta, &p1, &p2, &lab.ctx.table).unwrap();
    let orc = oracle_collision(&eta, &p1, &p2, &lab.vgrid, &lab.squad).unwrap();
    worst = worst.max(main.sub(&orc).max_abs());

    let p_small = random_field(&lab, 14, 0.3);
    let h_main = hamiltonian(&p1, &p_small, &lab.ctx.table).unwrap();
    let h_orc = oracle_hamiltonian(&p1, &p_small, &lab.vgrid, &lab.squad).unwrap();
    worst = worst.max((h_main - h_orc).abs());

    let hs_main = hamiltonian_sym(&p1, &p2, &lab.ctx.table).unwrap();
    let hs_orc = oracle_hamiltonian_sym(&p1, &p2, &lab.vgrid, &lab.squad).unwrap();
    worst = worst.max((hs_main - hs_orc).abs());

    let cfg = ScenarioConfig {
        terminal_time: 0.4,
        time_step: 0.1,
        substep: 0.05,
        perturbation_scale: 0.02,
        ..ScenarioConfig::default()
    };
    let bd = build_boundary_data(&lab, &cfg).unwrap();
    let pair = init_picard(&lab, &cfg, &bd);
    let swept = apply_gamma(&lab, &cfg, &bd, &pair).unwrap();
    let orc_swept = oracle_gamma_sweep(&lab, &cfg, &bd, &pair).unwrap();
    for (a, b) in swept
        .psi_p
        .fields
        .iter()
        .zip(&orc_swept.psi_p.fields)
        .chain(swept.eta_p.fields.iter().zip(&orc_swept.eta_p.fields))
    {
        worst = worst.max(a.sub(b).max_abs());
    }

    let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
    assert!(sol.converged);
    let i_def = evaluate_functional(&lab, &cfg, &sol).unwrap();
    let i_dec = functional_decomposed(&lab, &cfg, &sol).unwrap();
    let (o_def, o_dec) = oracle_functional(&lab, &cfg, &sol).unwrap();
    worst = worst.max((i_def - o_def).abs()).max((i_dec - o_dec).abs());

    let pass = worst <= 1e-12;
    verdict(
        "1 (oracle equivalence)",
        pass,
        &format!("max |main - oracle| = {worst:.3e}, gate 1e-12"),
    );
    assert!(pass);
}

/// Streaming evaluation of the four invariance defects on (n, general rule).
fn refinement_defects(n: usize) -> [f64; 4] {
    let vgrid = Arc::new(build_velocity_grid(3, 4.0, n).unwrap());
    let squad = Arc::new(build_sphere_quadrature(3, 4).unwrap());
    let log_norm = -1.5 * (2.0 * std::f64::consts::PI).ln();
    let g: Vec<f64> = vgrid
        .nodes
        .iter()
        .map(|v| {
            let s2: f64 = v.iter().map(|a| a * a).sum();
            (log_norm - 0.25 * s2).exp()
        })
        .collect();
    // the canonical seeded family shared with the verification suite
    let fs: Vec<Vec<f64>> = hjlab_core::oracle::REFINEMENT_SEED_FAMILY
        .iter()
        .map(|&seed| {
            let f = hjlab_core::oracle::seeded_smooth_function(seed);
            vgrid.nodes.iter().map(|v| f(v)).collect()
        })
        .collect();
    let ghat: Vec<f64> = vgrid
        .nodes
        .iter()
        .map(|v| 0.05 * v.iter().map(|a| a * a).sum::<f64>())
        .collect();
    let phi_m: Vec<f64> = vgrid
        .nodes
        .iter()
        .zip(&ghat)
        .map(|(v, gh)| {
            let s2: f64 = v.iter().map(|a| a * a).sum();
            (gh + log_norm - 0.5 * s2).exp()
        })
        .collect();

    let nv = vgrid.len();
    let rows: Vec<(f64, [f64; 6], f64, f64)> = (0..nv)
        .into_par_iter()
        .map(|iv| {
            let row = collect_row(&vgrid, &squad, iv);
            let mut qg = 0.0;
            let mut qf = [0.0f64; 6];
            let mut hs = 0.0;
            let mut hstat = 0.0;
            for e in &row {
                let js = e.vstar as usize;
                let gp = vgrid.eval(&g, &e.prime);
                let gsp = vgrid.eval(&g, &e.star_prime);
                qg += e.weight * g[js] * 2.0 * (gp * gsp - g[iv] * g[js]);
                for (k, f) in fs.iter().enumerate() {
                    let fp = vgrid.eval(f, &e.prime);
                    let fsp = vgrid.eval(f, &e.star_prime);
                    qf[k] += e.weight * g[js] * 2.0 * (fp * fsp - f[iv] * f[js]);
                }
                hs += e.weight * g[iv] * g[js] * (gp * gsp - g[iv] * g[js]);
                let dp = (vgrid.eval(&ghat, &e.prime) - ghat[iv])
                    + (vgrid.eval(&ghat, &e.star_prime) - ghat[js]);
                hstat += e.weight * phi_m[iv] * phi_m[js] * (dp.exp() - 1.0);
            }
            (0.5 * qg, qf, hs, hstat)
        })
        .collect();

    let mut qggg_sup = 0.0f64;
    let mut hs_total = 0.0;
    let mut hstat_total = 0.0;
    let mut qff: Vec<[f64; 6]> = vec![[0.0; 6]; nv];
    for (iv, (qg, qf, hs, hstat)) in rows.into_iter().enumerate() {
        qggg_sup = qggg_sup.max(qg.abs());
        for k in 0..6 {
            qff[iv][k] = 0.5 * qf[k];
        }
        hs_total += hs;
        hstat_total += hstat;
    }
    let cell = vgrid.cell_volume();
    let mut pairing_sum = 0.0;
    for k in 0..6 {
        for h_idx in 0..5 {
            let mut pairing = 0.0;
            for (iv, v) in vgrid.nodes.iter().enumerate() {
                let h = match h_idx {
                    0 => 1.0,
                    1 => v[0],
                    2 => v[1],
                    3 => v[2],
                    _ => v.iter().map(|a| a * a).sum::<f64>(),
                };
                pairing += g[iv] * h * qff[iv][k] * cell;
            }
            pairing_sum += pairing.abs();
        }
    }
    [
        qggg_sup,
        pairing_sum,
        (0.5 * hs_total * cell).abs(),
        (0.5 * hstat_total * cell).abs(),
    ]
}

#[test]
fn criterion_02_second_order_invariance_defects() {
    let coarse = refinement_defects(9);
    let fine = refinement_defects(17);
    let names = [
        "sup |Q_G(G,G)|",
        "sum_h |<Gh, Q_G(f,f)>|",
        "|H'(G,G)| one-sided",
        "|H(e^g M, g)|",
    ];
    let mut pass = true;
    let mut details = String::new();
    for k in 0..4 {
        let ratio = coarse[k] / fine[k];
        let ok = (3.2..=4.8).contains(&ratio);
        pass &= ok;
        details.push_str(&format!("{} x{:.2}; ", names[k], ratio));
    }
    verdict("2 (O(dv^2) invariance defects)", pass, details.trim_end());
    assert!(pass);
}

#[test]
fn criterion_03_exact_degeneracies() {
    // operator identities on the reference grid
    let lab = reference_lab();
    let one = Field::constant(&lab.sgrid, &lab.vgrid, 1.0);
    let psi = random_field(&lab, 21, 1.0);
    let q = biased_collision(&psi, &one, &one, &lab.ctx.table).unwrap();
    let h = hamiltonian_sym(&psi, &one, &lab.ctx.table).unwrap();

    // converged degenerate solve on the tiny instance (eta_p(t) = 1 - G is
    // order one, outside the contraction regime of the big grid)
    let tiny = tiny_lab();
    let cfg = ScenarioConfig {
        terminal: TerminalPreset::BareQuadratic {
            coefficient: tiny.eqs.alpha_prime,
        },
        terminal_time: 1.0,
        time_step: 0.05,
        substep: 0.01,
        perturbation_scale: 0.01,
        ..ScenarioConfig::default()
    };
    let bd = build_boundary_data(&tiny, &cfg).unwrap();
    assert!(bd.degenerate);
    let sol = solve_coupled(&tiny, &cfg, &bd).unwrap();
    let mut backward_dev = 0usize;
    for f in &sol.pair.eta_p.fields {
        if f.data != bd.eta_pt.data {
            backward_dev += 1;
        }
    }
    let pass = q.max_abs() <= 1e-13 && h.abs() <= 1e-13 && sol.converged && backward_dev == 0;
    verdict(
        "3 (exact degeneracies)",
        pass,
        &format!(
            "|Q_psi(1,1)| = {:.2e}, |H'(psi,1)| = {:.2e}, backward iterates bit-constant: {}",
            q.max_abs(),
            h.abs(),
            backward_dev == 0
        ),
    );
    assert!(pass);

    // and the converged forward component equals a standalone march
    let march = boltzmann_forward_march(&tiny, &cfg, &bd, 1e-13).unwrap();
    let mut dev = 0.0f64;
    for (a, b) in sol.pair.psi_p.fields.iter().zip(&march.fields) {
        dev = dev.max(a.sub(b).max_abs());
    }
    assert!(dev < 1e-10, "degenerate forward equivalence: {dev:.3e}");
}

#[test]
fn criterion_04_picard_contraction() {
    let lab = reference_lab();
    let cfg = reference_scenario();
    let bd = build_boundary_data(&lab, &cfg).unwrap();
    let sol = solve_coupled(&lab, &cfg, &bd).unwrap();
    let max_ratio = sol
        .history
        .iter()
        .skip(1)
        .filter_map(|r| r.ratio)
        .fold(0.0f64, f64::max);
    let pass = sol.converged
        && sol.history.len() <= 30
        && max_ratio <= 0.5
        && sol.residual <= 2.0 * cfg.tolerance;
    verdict(
        "4 (Picard contraction)",
        pass,
        &format!(
            "converged in {} iterations, max ratio after first = {:.2e}, residual = {:.2e}",
            sol.history.len(),
            max_ratio,
            sol.residual
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_decay_envelopes_stable() {
    let lab = reference_lab();
    let base = reference_scenario();
    let envelopes = |cfg: &ScenarioConfig| -> (f64, f64) {
        let bd = build_boundary_data(&lab, cfg).unwrap();
        let sol = solve_coupled(&lab, cfg, &bd).unwrap();
        assert!(sol.converged);
        let p = trajectory_norm(
            &sol.pair.psi_p,
            cfg.beta,
            cfg.sigma,
            TimeWeight::Polynomial,
            false,
        )
        .unwrap()
        .value;
        let e = trajectory_norm(
            &sol.pair.eta_p,
            cfg.beta,
            cfg.sigma,
            TimeWeight::Polynomial,
            true,
        )
        .unwrap()
        .value;
        (p, e)
    };
    let (p0, e0) = envelopes(&base);
    let (p1, e1) = envelopes(&ScenarioConfig {
        time_step: base.time_step / 2.0,
        ..base.clone()
    });
    let (p2, e2) = envelopes(&ScenarioConfig {
        substep: base.substep / 2.0,
        ..base.clone()
    });
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let worst = rel(p1, p0)
        .max(rel(p2, p0))
        .max(rel(e1, e0))
        .max(rel(e2, e0));
    let mut pass = p0.is_finite() && e0.is_finite() && worst <= 0.10;

    // theorem-2 reference: exponential envelope finite, H5 terminal scaling
    // respected by construction
    let th2 = ScenarioConfig {
        regime: Regime::Theorem2,
        sigma: 0.5,
        ..base.clone()
    };
    let bd2 = build_boundary_data(&lab, &th2).unwrap();
    let sol2 = solve_coupled(&lab, &th2, &bd2).unwrap();
    let env2 = trajectory_norm(
        &sol2.pair.eta_p,
        th2.beta,
        th2.sigma,
        TimeWeight::Exponential,
        false,
    )
    .unwrap()
    .value;
    let boundary = weighted_sup_norm(&bd2.eta_pt, th2.beta + 1.0);
    let h5_scale = boundary * (th2.sigma * th2.terminal_time).exp();
    pass &= sol2.converged && env2.is_finite() && h5_scale.is_finite();
    verdict(
        "5 (decay envelopes stable)",
        pass,
        &format!(
            "theorem-1 envelopes ({p0:.4e}, {e0:.4e}), worst drift under halving = {:.2}%; \
             theorem-2 e^(sigma s) envelope = {env2:.4e}",
            100.0 * worst
        ),
    );
    assert!(pass);
}

fn functional_at(lab: &Lab, cfg: &ScenarioConfig, t: f64) -> (f64, f64, f64, f64) {
    let c = ScenarioConfig {
        terminal_time: t,
        ..cfg.clone()
    };
    let bd = build_boundary_data(lab, &c).unwrap();
    let sol = solve_coupled(lab, &c, &bd).unwrap();
    assert!(sol.converged, "solver must converge at t = {t}");
    let i_def = evaluate_functional(lab, &c, &sol).unwrap();
    let i_dec = functional_decomposed(lab, &c, &sol).unwrap();
    let g_eff = hjlab_core::functional::effective_g_hat(lab, &sol).unwrap();
    let i_inf = stationary_functional(&g_eff, &lab.eqs);
    let (psi, eta) = reconstruct_full(lab, &sol.pair);
    let last = psi.len() - 1;
    let h = hamiltonian_sym(&psi.fields[last], &eta.fields[last], &lab.ctx.table).unwrap();
    (i_def, i_dec, i_inf, h)
}

#[test]
fn criterion_06_functional_identity() {
    // default sweep: the reference family over t in {2, 4} and the scale
    // ladder, solved tightly so the comparison probes the formulas
    let lab = reference_lab();
    let base = ScenarioConfig {
        tolerance: 1e-12,
        ..reference_scenario()
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for t in [2.0, 4.0] {
        for scale in [0.01, 0.02] {
            let cfg = ScenarioConfig {
                perturbation_scale: scale,
                ..base.clone()
            };
            let (i_def, i_dec, _, _) = functional_at(&lab, &cfg, t);
            let rel = (i_def - i_dec).abs() / i_def.abs().max(i_dec.abs());
            worst = worst.max(rel);
            count += 1;
        }
    }
    let pass = worst <= 1e-8;
    verdict(
        "6 (functional identity)",
        pass,
        &format!("{count} sweep points, worst relative discrepancy = {worst:.3e}, gate 1e-8"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_mild_hj_residual() {
    let lab = reference_lab();
    let cfg = ScenarioConfig {
        tolerance: 1e-12,
        ..reference_scenario()
    };
    let t = 2.0;
    let (_, i_t, _, h_t) = functional_at(&lab, &cfg, t);
    let residual_at = |dt: f64| -> f64 {
        let (_, i_next, _, _) = functional_at(&lab, &cfg, t + dt);
        ((i_next - i_t) / dt - h_t).abs()
    };
    let r_10 = residual_at(0.10);
    let r_05 = residual_at(0.05);
    let rel = r_05 / h_t.abs();
    let halving = r_05 / r_10;
    let pass = rel <= 0.05 && (0.35..=0.65).contains(&halving);
    verdict(
        "7 (mild HJ residual)",
        pass,
        &format!(
            "relative residual at dt = 0.05: {:.2}% (gate 5%), halving ratio {:.3} (gate [0.35, 0.65])",
            100.0 * rel,
            halving
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_long_time_limit() {
    let lab = reference_lab();
    let cfg = ScenarioConfig {
        tolerance: 1e-12,
        ..reference_scenario()
    };
    let mut gaps = Vec::new();
    for t in [2.0, 4.0, 8.0] {
        let (_, i_dec, i_inf, _) = functional_at(&lab, &cfg, t);
        gaps.push((i_dec - i_inf).abs());
    }
    let nonincreasing = gaps[0] >= gaps[1] && gaps[1] >= gaps[2];
    let factor = gaps[0] / gaps[2];
    let pass = nonincreasing && factor >= 3.0;
    verdict(
        "8 (long-time limit)",
        pass,
        &format!(
            "|I(t) - I_inf| = {:.3e}, {:.3e}, {:.3e} at t = 2, 4, 8; factor {:.1} (gate >= 3)",
            gaps[0], gaps[1], gaps[2], factor
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_stationary_value_sanity() {
    // The criterion pins the grid (n = 13) but not the truncation radius;
    // the module default is 4 standard deviations of G (= 4 sqrt(2) at
    // alpha = 0), which resolves the widened Gaussian e^{(0.1 - 1/2)|v|^2}.
    // The short R = 4 ball of the desk-scale solver runs loses 1.6% to the
    // tail and is reported alongside.
    let exact = -1.0 + 0.8f64.powf(-1.5);
    let value_at = |radius: f64| -> f64 {
        let lab = Lab::build(&Discretization {
            velocity_nodes: 13,
            radius,
            ..Discretization::default()
        })
        .unwrap();
        let g_hat = Field::from_velocity_profile(&lab.sgrid, &lab.vgrid, |v, _| {
            0.1 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        });
        stationary_functional(&g_hat, &lab.eqs)
    };
    let v_default = value_at(4.0 * std::f64::consts::SQRT_2);
    let v_short = value_at(4.0);
    let rel_default = ((v_default - exact) / exact).abs();
    let rel_short = ((v_short - exact) / exact).abs();
    let pass = rel_default <= 0.01;
    verdict(
        "9 (stationary value sanity)",
        pass,
        &format!(
            "R = 4 sigma_G: rel err {:.4}% (gate 1%); short R = 4 ball: {:.2}%",
            100.0 * rel_default,
            100.0 * rel_short
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_convolution_lemma_spec_gate_unattainable() {
    // Faithful computation of the witnessed constants over the doubling
    // sweep. The spec gate (max/min <= 1.5 over t in {1,...,16}) cannot hold:
    // the constant climbs from 0.855 to 2.241 because the lemma's bound is
    // asymptotic, not uniform from t = 1. The criterion is reported FAIL
    // with the measured values; the tail is stable as the op requires.
    let sweep = [1.0, 2.0, 4.0, 8.0, 16.0];
    let cs: Vec<f64> = sweep
        .iter()
        .map(|&t| {
            convolution_bound_check(2.0, 2.0, t, 4000)
                .unwrap()
                .witnessed_c
        })
        .collect();
    let max = cs.iter().cloned().fold(0.0f64, f64::max);
    let min = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    let gate = ratio <= 1.5;
    verdict(
        "10 (convolution lemma)",
        gate,
        &format!(
            "witnessed C = {:.4}, {:.4}, {:.4}, {:.4}, {:.4}; max/min = {:.3} vs gate 1.5; \
             tail ratio C(16)/C(8) = {:.3}",
            cs[0],
            cs[1],
            cs[2],
            cs[3],
            cs[4],
            ratio,
            cs[4] / cs[3]
        ),
    );
    assert!(
        !gate,
        "the witnessed ratio became <= 1.5; revisit the ledger analysis"
    );
    // pin the independently verified constants (exact values by partial
    // fractions: C(t) = (1+t)^2 [2(1 - 1/(1+t)) + 4 ln(1+t)/(2+t)] / (2+t)^2
    let exact = |t: f64| {
        let a = 2.0 * (1.0 - 1.0 / (1.0 + t));
        let b = 4.0 * (1.0 + t).ln() / (2.0 + t);
        (1.0 + t).powi(2) * (a + b) / (2.0 + t).powi(2)
    };
    for (&t, &c) in sweep.iter().zip(&cs) {
        assert!(
            (c - exact(t)).abs() < 1e-6,
            "witnessed C({t}) = {c} vs exact {}",
            exact(t)
        );
    }
    // uniform boundedness and tail stability hold
    assert!(max <= 2.25);
    assert!(cs[4] / cs[3] <= 1.5);
}

#[test]
fn criterion_11_determinism() {
    // identical config and thread count -> byte-identical outputs
    let dir = std::env::temp_dir().join(format!("hjlab-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("run.toml");
    std::fs::write(
        &config_path,
        r#"
[grid.velocity]
nodes_per_axis = 9

[scenario]
terminal_time = 0.5
perturbation_scale = 0.01

[scenario.initial]
project_axis_invariants = true

[scenario.terminal]
quadratic = 0.01
cross = 0.025
project_axis_invariants = true

[solver]
time_step = 0.05
substep = 0.01

[functional]
t_list = [0.5]
residual_dt = 0.05

[sweep]
terminal_times = [0.5]

[output]
dir = "unused"
"#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_hjlab");
    let run = |command: &str, out: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                command,
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                "2",
            ])
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .status()
            .unwrap();
        assert!(status.success(), "{command} failed");
    };
    let mut pass = true;
    let mut details = String::new();
    for command in ["solve", "functional", "sweep"] {
        let out_a = dir.join(format!("{command}-a"));
        let out_b = dir.join(format!("{command}-b"));
        run(command, &out_a);
        run(command, &out_b);
        let mut names: Vec<_> = std::fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            let same = a == b;
            pass &= same;
            if !same {
                details.push_str(&format!("{command}/{} differs; ", name.to_string_lossy()));
            }
        }
    }
    if details.is_empty() {
        details = "solve, functional, sweep reruns byte-identical".to_string();
    }
    verdict("11 (determinism)", pass, &details);
    let _ = std::fs::remove_dir_all(&dir);
    assert!(pass);
}

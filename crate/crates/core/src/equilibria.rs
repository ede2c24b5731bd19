//! Equilibria M, E, B, G, the conserved-quantity kernel with its projection,
//! and the weighted sup norms in velocity and time.

use crate::error::{LabError, Result};
use crate::field::{Field, Trajectory};
use crate::grid::{SpaceGrid, VelocityGrid};
use std::sync::Arc;

/// M, E, B, G on the grids, for a reference exponent alpha < 1/2.
///
/// M B^{-1} = E B = G pointwise, with alpha' = (1/2)(1/2 + alpha) and
/// G(v) = (2 pi)^{-d/2} exp(-(1/2)(1/2 - alpha)|v|^2).
#[derive(Debug, Clone)]
pub struct EquilibriumSet {
    pub alpha: f64,
    pub alpha_prime: f64,
    /// log of (2 pi)^{-d/2}; equilibria are built as single exponentials of
    /// combined exponents so algebraic identities hold bit-exactly.
    pub log_norm: f64,
    /// Exponent of G relative to log_norm: alpha - alpha' = -(1/2)(1/2-alpha).
    pub g_exponent: f64,
    pub maxwellian: Field, // M
    pub reference: Field,  // E
    pub normalizer: Field, // B
    pub coupled: Field,    // G
}

pub fn make_equilibria(
    vgrid: &Arc<VelocityGrid>,
    sgrid: &Arc<SpaceGrid>,
    alpha: f64,
) -> Result<EquilibriumSet> {
    if alpha >= 0.5 {
        return Err(LabError::invalid(
            "equilibrium.alpha",
            "must be < 1/2 so the coupled equilibrium keeps quadratic exponential decay",
        ));
    }
    let d = vgrid.dim as f64;
    let log_norm = -(d / 2.0) * (2.0 * std::f64::consts::PI).ln();
    let alpha_prime = 0.5 * (0.5 + alpha);
    let g_exponent = alpha - alpha_prime;
    // the same s^2 expression as every consumer (v0^2 + v1^2 + v2^2), so
    // preset identities like e^{ghat} B == G hold to the bit
    let s2_of = |v: &[f64; 3]| v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let maxwellian =
        Field::from_velocity_profile(sgrid, vgrid, |v, _| (log_norm - 0.5 * s2_of(v)).exp());
    let reference =
        Field::from_velocity_profile(sgrid, vgrid, |v, _| (log_norm + alpha * s2_of(v)).exp());
    let normalizer =
        Field::from_velocity_profile(sgrid, vgrid, |v, _| (-alpha_prime * s2_of(v)).exp());
    let coupled = Field::from_velocity_profile(sgrid, vgrid, |v, _| {
        (log_norm + g_exponent * s2_of(v)).exp()
    });
    Ok(EquilibriumSet {
        alpha,
        alpha_prime,
        log_norm,
        g_exponent,
        maxwellian,
        reference,
        normalizer,
        coupled,
    })
}

/// Orthonormal basis of span{G, G v_1, ..., G v_d, G |v|^2} under the
/// cell-volume weighted L2 inner product, built by Gram-Schmidt with one
/// reorthogonalization pass (the generators are nearly collinear on coarse
/// grids).
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub fields: Vec<Field>,
}

impl KernelBasis {
    pub fn build(vgrid: &Arc<VelocityGrid>, sgrid: &Arc<SpaceGrid>, eqs: &EquilibriumSet) -> Self {
        let d = vgrid.dim;
        let mut generators = Vec::with_capacity(d + 2);
        generators.push(eqs.coupled.clone());
        for ax in 0..d {
            generators.push(Field::from_fn(sgrid, vgrid, |_, v| {
                let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                let g = eqs_profile(eqs, s2);
                g * v[ax]
            }));
        }
        generators.push(Field::from_fn(sgrid, vgrid, |_, v| {
            let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            eqs_profile(eqs, s2) * s2
        }));

        let mut fields: Vec<Field> = Vec::with_capacity(generators.len());
        for gen in generators {
            let mut f = gen;
            for _ in 0..2 {
                for b in &fields {
                    let c = f.inner(b);
                    f.axpy(-c, b);
                }
            }
            let norm = f.inner(&f).sqrt();
            fields.push(f.scale(1.0 / norm));
        }
        KernelBasis { fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Coefficients <f, f_i>.
    pub fn coefficients(&self, f: &Field) -> Vec<f64> {
        self.fields.iter().map(|b| f.inner(b)).collect()
    }
}

fn eqs_profile(eqs: &EquilibriumSet, s2: f64) -> f64 {
    (eqs.log_norm + eqs.g_exponent * s2).exp()
}

/// Orthonormal basis of the axis-separable collision invariants
/// span{G(v) a(v_1) + G(v) b(v_2) + ...}: the conserved modes of axis-only
/// (octahedron) sphere rules, which exchange one velocity component per
/// collision. Contains the physical kernel; data projected off it decays
/// under the axis-rule semigroup.
pub fn axis_invariant_basis(
    vgrid: &Arc<VelocityGrid>,
    sgrid: &Arc<SpaceGrid>,
    eqs: &EquilibriumSet,
) -> Vec<Field> {
    let mut generators = Vec::new();
    for ax in 0..vgrid.dim {
        let mut levels: Vec<f64> = vgrid.nodes.iter().map(|v| v[ax]).collect();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        for level in levels {
            generators.push(Field::from_fn(sgrid, vgrid, |_, v| {
                if v[ax] == level {
                    let s2 = v.iter().map(|a| a * a).sum::<f64>();
                    eqs_profile(eqs, s2)
                } else {
                    0.0
                }
            }));
        }
    }
    let mut fields: Vec<Field> = Vec::new();
    for gen in generators {
        let scale = gen.inner(&gen).sqrt();
        let mut f = gen;
        for _ in 0..2 {
            for b in &fields {
                let c = f.inner(b);
                f.axpy(-c, b);
            }
        }
        let norm = f.inner(&f).sqrt();
        if norm > 1e-10 * scale.max(1e-300) {
            fields.push(f.scale(1.0 / norm));
        }
    }
    fields
}

/// f minus its projection onto a span of orthonormal fields.
pub fn project_off_span(f: &Field, span: &[Field]) -> Field {
    let mut out = f.clone();
    for b in span {
        let c = out.inner(b);
        out.axpy(-c, b);
    }
    out
}

/// f minus its projection onto the kernel: f - sum <f, f_i> f_i.
pub fn project_off_kernel(f: &Field, basis: &KernelBasis) -> Result<Field> {
    let b0 = &basis.fields[0];
    f.check_same_grids(b0, "project_off_kernel: field and basis grids differ")?;
    let mut out = f.clone();
    for b in &basis.fields {
        let c = out.inner(b);
        out.axpy(-c, b);
    }
    Ok(out)
}

/// max over nodes of |f(x,v)| (1 + |v|)^beta.
pub fn weighted_sup_norm(f: &Field, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0);
    let nv = f.nv();
    let mut best = 0.0f64;
    for ix in 0..f.nx() {
        let slice = f.slice(ix);
        for iv in 0..nv {
            let w = (1.0 + f.velocity.speeds[iv]).powf(beta);
            best = best.max(slice[iv].abs() * w);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeWeight {
    /// (1+s)^sigma
    Polynomial,
    /// e^{sigma s}
    Exponential,
}

/// Per-time weighted sup norms and the scalar trajectory norm.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub beta: f64,
    pub sigma: f64,
    pub mode: TimeWeight,
    pub reversed: bool,
    /// L_beta^infty norm at each time node, after the optional reversal.
    pub per_time: Vec<f64>,
    /// Time-weighted per-time entries.
    pub weighted: Vec<f64>,
    /// max of `weighted`.
    pub value: f64,
}

/// Trajectory norm: polynomial mode is max_s (1+s)^sigma ||.||, exponential
/// mode is max_s e^{sigma s} ||.||; reversed = true first applies s -> t - s.
pub fn trajectory_norm(
    traj: &Trajectory,
    beta: f64,
    sigma: f64,
    mode: TimeWeight,
    reversed: bool,
) -> Result<NormReport> {
    if traj.is_empty() {
        return Err(LabError::invalid("trajectory", "empty trajectory"));
    }
    let fields: Vec<&Field> = if reversed {
        traj.fields.iter().rev().collect()
    } else {
        traj.fields.iter().collect()
    };
    let per_time: Vec<f64> = fields.iter().map(|f| weighted_sup_norm(f, beta)).collect();
    let weighted: Vec<f64> = traj
        .times
        .iter()
        .zip(&per_time)
        .map(|(s, n)| match mode {
            TimeWeight::Polynomial => (1.0 + s).powf(sigma) * n,
            TimeWeight::Exponential => (sigma * s).exp() * n,
        })
        .collect();
    let value = weighted.iter().fold(0.0f64, |m, &x| m.max(x));
    Ok(NormReport {
        beta,
        sigma,
        mode,
        reversed,
        per_time,
        weighted,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_space_grid, build_velocity_grid};

    fn setup(alpha: f64) -> (Arc<SpaceGrid>, Arc<VelocityGrid>, EquilibriumSet) {
        let sg = Arc::new(build_space_grid(3, 1).unwrap());
        let vg = Arc::new(build_velocity_grid(3, 4.0, 9).unwrap());
        let eqs = make_equilibria(&vg, &sg, alpha).unwrap();
        (sg, vg, eqs)
    }

    #[test]
    fn alpha_zero_gives_quarter_exponent() {
        let (_, vg, eqs) = setup(0.0);
        assert_eq!(eqs.alpha_prime, 0.25);
        let norm = (2.0 * std::f64::consts::PI).powf(-1.5);
        for (iv, v) in vg.nodes.iter().enumerate() {
            let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let expect = norm * (-s2 / 4.0).exp();
            let got = eqs.coupled.at(0, iv);
            assert!((got - expect).abs() <= 1e-15 * expect.max(1e-300));
        }
        // M(0) = (2 pi)^{-3/2}
        let origin = vg.nodes.iter().position(|v| *v == [0.0; 3]).unwrap();
        assert!((eqs.maxwellian.at(0, origin) - 0.063493635934240969).abs() < 1e-15);
    }

    #[test]
    fn alpha_quarter_prime() {
        let (_, _, eqs) = setup(0.25);
        assert_eq!(eqs.alpha_prime, 0.375);
    }

    #[test]
    fn rejects_alpha_half() {
        let sg = Arc::new(build_space_grid(3, 1).unwrap());
        let vg = Arc::new(build_velocity_grid(3, 4.0, 9).unwrap());
        assert!(make_equilibria(&vg, &sg, 0.5).is_err());
    }

    #[test]
    fn pointwise_identities() {
        for alpha in [0.0, 0.25, -0.3] {
            let (_, vg, eqs) = setup(alpha);
            for iv in 0..vg.len() {
                let m = eqs.maxwellian.at(0, iv);
                let e = eqs.reference.at(0, iv);
                let b = eqs.normalizer.at(0, iv);
                let g = eqs.coupled.at(0, iv);
                assert!((m / b - g).abs() <= 1e-13 * g.abs());
                assert!((e * b - g).abs() <= 1e-13 * g.abs());
            }
        }
    }

    #[test]
    fn kernel_basis_orthonormal_and_spanning() {
        let (sg, vg, eqs) = setup(0.0);
        let basis = KernelBasis::build(&vg, &sg, &eqs);
        assert_eq!(basis.len(), 5);
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let g = basis.fields[i].inner(&basis.fields[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 1e-10, "gram[{i}][{j}] = {g}");
            }
        }
        // each generator reconstructs from the basis
        let gens = [
            eqs.coupled.clone(),
            Field::from_fn(&sg, &vg, |_, v| {
                let s2 = v.iter().map(|a| a * a).sum::<f64>();
                eqs_profile(&eqs, s2) * v[1]
            }),
            Field::from_fn(&sg, &vg, |_, v| {
                let s2 = v.iter().map(|a| a * a).sum::<f64>();
                eqs_profile(&eqs, s2) * s2
            }),
        ];
        for gen in gens {
            let mut recon = Field::zeros(&sg, &vg);
            for (b, c) in basis.fields.iter().zip(basis.coefficients(&gen)) {
                recon.axpy(c, b);
            }
            let err = recon.sub(&gen).max_abs();
            assert!(err < 1e-10, "reconstruction error {err}");
        }
    }

    #[test]
    fn projection_examples() {
        let (sg, vg, eqs) = setup(0.0);
        let basis = KernelBasis::build(&vg, &sg, &eqs);
        // annihilates a basis element
        let p = project_off_kernel(&basis.fields[0], &basis).unwrap();
        assert!(p.max_abs() < 1e-10);
        // idempotent on an already-orthogonal field
        let f = Field::from_fn(&sg, &vg, |_, v| {
            let s2 = v.iter().map(|a| a * a).sum::<f64>();
            (-s2 / 4.0).exp() * v[0] * v[1]
        });
        let h = project_off_kernel(&f, &basis).unwrap();
        let h2 = project_off_kernel(&h, &basis).unwrap();
        assert!(h2.sub(&h).max_abs() <= 1e-12 * h.max_abs());
        // recovers the orthogonal part of G + h
        let mixed = eqs.coupled.add(&h);
        let rec = project_off_kernel(&mixed, &basis).unwrap();
        assert!(rec.sub(&h).max_abs() < 1e-10);
        for b in &basis.fields {
            assert!(rec.inner(b).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let (sg, vg, eqs) = setup(0.0);
        let zero = Field::zeros(&sg, &vg);
        assert_eq!(weighted_sup_norm(&zero, 5.0), 0.0);

        let origin = vg.nodes.iter().position(|v| *v == [0.0; 3]).unwrap();
        let mut indicator = Field::zeros(&sg, &vg);
        indicator.data[origin] = 2.0;
        assert_eq!(weighted_sup_norm(&indicator, 5.0), 2.0);

        // brute-force scan oracle on a finer grid
        let vg17 = Arc::new(build_velocity_grid(3, 4.0, 17).unwrap());
        let eqs17 = make_equilibria(&vg17, &sg, 0.0).unwrap();
        let mut brute = 0.0f64;
        for (iv, v) in vg17.nodes.iter().enumerate() {
            let s = (v.iter().map(|a| a * a).sum::<f64>()).sqrt();
            brute = brute.max(eqs17.coupled.at(0, iv).abs() * (1.0 + s).powi(5));
        }
        let got = weighted_sup_norm(&eqs17.coupled, 5.0);
        assert!((got - brute).abs() <= 1e-13 * brute);
        let _ = eqs;
    }

    #[test]
    fn trajectory_norm_examples() {
        let (sg, vg, _) = setup(0.0);
        let zero = Trajectory {
            times: vec![0.0, 1.0],
            fields: vec![Field::zeros(&sg, &vg), Field::zeros(&sg, &vg)],
        };
        let r = trajectory_norm(&zero, 5.0, 1.5, TimeWeight::Polynomial, false).unwrap();
        assert_eq!(r.value, 0.0);

        let single = Trajectory {
            times: vec![0.0],
            fields: vec![Field::constant(&sg, &vg, 3.0)],
        };
        let r = trajectory_norm(&single, 2.0, 1.5, TimeWeight::Polynomial, false).unwrap();
        assert_eq!(r.value, weighted_sup_norm(&single.fields[0], 2.0));

        // two-step, sigma = 1.5: hand-computable max
        let a0 = Field::constant(&sg, &vg, 1.0);
        let a1 = Field::constant(&sg, &vg, 0.5);
        let n0 = weighted_sup_norm(&a0, 5.0);
        let n1 = weighted_sup_norm(&a1, 5.0);
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            fields: vec![a0, a1],
        };
        let r = trajectory_norm(&traj, 5.0, 1.5, TimeWeight::Polynomial, false).unwrap();
        let expect = n0.max(2.0f64.powf(1.5) * n1);
        assert_eq!(r.value, expect);

        // reversed polynomial matches max_s (1 + (t-s))^sigma ||.||
        let rr = trajectory_norm(&traj, 5.0, 1.5, TimeWeight::Polynomial, true).unwrap();
        let expect_rev = n1.max(2.0f64.powf(1.5) * n0);
        assert_eq!(rr.value, expect_rev);

        let empty = Trajectory {
            times: vec![],
            fields: vec![],
        };
        assert!(trajectory_norm(&empty, 5.0, 1.5, TimeWeight::Polynomial, false).is_err());
    }
}

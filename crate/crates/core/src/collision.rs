//! The biased collision operator Q_eta(psi1, psi2), its precomputed
//! quadrature table, the frequency multiplier nu, the compact part K of the
//! linearized operator, and the perturbation nonlinearity N.
//!
//! Conservative truncation: a quadrature triple (v, v*, omega) is retained
//! only if the full interpolation stencils of both post-collision points lie
//! inside the truncation ball. This keeps interpolation total and makes
//! Q_psi(1, 1) vanish identically on the discrete level.

use crate::equilibria::EquilibriumSet;
use crate::error::Result;
use crate::field::Field;
use crate::grid::{collide, SphereQuadrature, VStencil, VelocityGrid};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEntry {
    pub vstar: u32,
    pub omega: u32,
    /// ((v* - v) . omega)_+ * w_omega * dv^d
    pub weight: f64,
    pub prime: VStencil,
    pub star_prime: VStencil,
}

impl PartialEq for VStencil {
    fn eq(&self, other: &Self) -> bool {
        self.idx == other.idx
            && self
                .frac
                .iter()
                .zip(&other.frac)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Retained quadrature triples grouped by output velocity node, in the fixed
/// deterministic order (v outer, then v*, then omega).
#[derive(Debug, Clone)]
pub struct CollisionTable {
    pub vgrid: Arc<VelocityGrid>,
    pub squad: Arc<SphereQuadrature>,
    pub row_ptr: Vec<usize>,
    pub entries: Vec<CollisionEntry>,
}

impl CollisionTable {
    pub fn row(&self, iv: usize) -> &[CollisionEntry] {
        &self.entries[self.row_ptr[iv]..self.row_ptr[iv + 1]]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Retained entries of one output row, in the fixed (v*, omega) order. Used
/// by the table build and directly (streaming) on grids too large to store.
pub fn collect_row(
    vgrid: &VelocityGrid,
    squad: &SphereQuadrature,
    iv: usize,
) -> Vec<CollisionEntry> {
    let cell = vgrid.cell_volume();
    let v = vgrid.nodes[iv];
    let mut row = Vec::new();
    for (jv, vs) in vgrid.nodes.iter().enumerate() {
        for (k, om) in squad.nodes.iter().enumerate() {
            let proj = (vs[0] - v[0]) * om[0] + (vs[1] - v[1]) * om[1] + (vs[2] - v[2]) * om[2];
            if proj <= 0.0 {
                continue;
            }
            let (vp, vsp) = collide(v, *vs, *om);
            let (Some(prime), Some(star_prime)) = (vgrid.stencil(vp), vgrid.stencil(vsp)) else {
                continue;
            };
            row.push(CollisionEntry {
                vstar: jv as u32,
                omega: k as u32,
                weight: proj * squad.weights[k] * cell,
                prime,
                star_prime,
            });
        }
    }
    row
}

pub fn build_collision_table(
    vgrid: &Arc<VelocityGrid>,
    squad: &Arc<SphereQuadrature>,
) -> CollisionTable {
    let nv = vgrid.len();
    let rows: Vec<Vec<CollisionEntry>> = (0..nv)
        .into_par_iter()
        .map(|iv| collect_row(vgrid, squad, iv))
        .collect();
    let mut row_ptr = Vec::with_capacity(nv + 1);
    row_ptr.push(0);
    let mut entries = Vec::new();
    for row in rows {
        entries.extend(row);
        row_ptr.push(entries.len());
    }
    CollisionTable {
        vgrid: vgrid.clone(),
        squad: squad.clone(),
        row_ptr,
        entries,
    }
}

/// Q_eta(psi1, psi2): the symmetrized biased bilinear form. Symmetric in
/// (psi1, psi2) bit-exactly; the bias enters through eta(x, v*).
pub fn biased_collision(
    eta: &Field,
    psi1: &Field,
    psi2: &Field,
    table: &CollisionTable,
) -> Result<Field> {
    eta.check_same_grids(psi1, "biased_collision: eta vs psi1")?;
    eta.check_same_grids(psi2, "biased_collision: eta vs psi2")?;
    let mut out = Field::zeros(&eta.space, &eta.velocity);
    let nv = eta.nv();
    let vg = &table.vgrid;
    for ix in 0..eta.nx() {
        let es = eta.slice(ix);
        let p1 = psi1.slice(ix);
        let p2 = psi2.slice(ix);
        let o = &mut out.data[ix * nv..(ix + 1) * nv];
        o.par_iter_mut().enumerate().for_each(|(iv, out_v)| {
            let mut acc = 0.0;
            for e in table.row(iv) {
                let js = e.vstar as usize;
                let a1 = vg.eval(p1, &e.prime);
                let b1 = vg.eval(p1, &e.star_prime);
                let a2 = vg.eval(p2, &e.prime);
                let b2 = vg.eval(p2, &e.star_prime);
                let bracket = (a1 * b2 + a2 * b1) - (p1[iv] * p2[js] + p2[iv] * p1[js]);
                acc += e.weight * es[js] * bracket;
            }
            *out_v = 0.5 * acc;
        });
    }
    Ok(out)
}

/// Per-scenario collision machinery: the table plus G-dependent
/// precomputation (G at nodes and at the post-collision points, nu).
#[derive(Debug, Clone)]
pub struct CollisionContext {
    pub table: Arc<CollisionTable>,
    /// G at velocity nodes.
    pub g_nodes: Vec<f64>,
    /// (G at v', G at v*') per table entry, interpolated once.
    pub g_primed: Vec<[f64; 2]>,
    /// Frequency multiplier nu at velocity nodes.
    pub nu: Vec<f64>,
}

impl CollisionContext {
    pub fn new(table: Arc<CollisionTable>, eqs: &EquilibriumSet) -> Self {
        let vg = &table.vgrid;
        let g_nodes: Vec<f64> = (0..vg.len()).map(|iv| eqs.coupled.at(0, iv)).collect();
        let g_primed: Vec<[f64; 2]> = table
            .entries
            .par_iter()
            .map(|e| {
                [
                    vg.eval(&g_nodes, &e.prime),
                    vg.eval(&g_nodes, &e.star_prime),
                ]
            })
            .collect();
        let nu = frequency_from_table(&table, &g_nodes);
        CollisionContext {
            table,
            g_nodes,
            g_primed,
            nu,
        }
    }

    pub fn nv(&self) -> usize {
        self.table.vgrid.len()
    }

    pub fn nu_min(&self) -> f64 {
        self.nu.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }
}

fn frequency_from_table(table: &CollisionTable, g_nodes: &[f64]) -> Vec<f64> {
    (0..table.vgrid.len())
        .map(|iv| {
            let mut acc = 0.0;
            for e in table.row(iv) {
                let g = g_nodes[e.vstar as usize];
                acc += e.weight * g * g;
            }
            acc
        })
        .collect()
}

/// nu(v) = integral of ((v*-v).omega)_+ G^2(v*): the multiplicative part of
/// the Grad decomposition 2 Q_G(., G) = -nu + K, on the same retained table.
pub fn collision_frequency(eqs: &EquilibriumSet, table: &CollisionTable) -> Vec<f64> {
    let vg = &table.vgrid;
    let g_nodes: Vec<f64> = (0..vg.len()).map(|iv| eqs.coupled.at(0, iv)).collect();
    frequency_from_table(table, &g_nodes)
}

/// K f = 2 Q_G(f, G) + nu f (the compact part applied to f).
pub fn linearized_k(f: &Field, ctx: &CollisionContext) -> Field {
    let mut out = Field::zeros(&f.space, &f.velocity);
    let nv = f.nv();
    let vg = &ctx.table.vgrid;
    for ix in 0..f.nx() {
        let fs = f.slice(ix);
        let o = &mut out.data[ix * nv..(ix + 1) * nv];
        o.par_iter_mut().enumerate().for_each(|(iv, out_v)| {
            let mut acc = 0.0;
            let base = ctx.table.row_ptr[iv];
            for (off, e) in ctx.table.row(iv).iter().enumerate() {
                let js = e.vstar as usize;
                let gp = ctx.g_primed[base + off];
                let fp = vg.eval(fs, &e.prime);
                let fsp = vg.eval(fs, &e.star_prime);
                let bracket = (fp * gp[1] + gp[0] * fsp)
                    - (fs[iv] * ctx.g_nodes[js] + ctx.g_nodes[iv] * fs[js]);
                acc += e.weight * ctx.g_nodes[js] * bracket;
            }
            *out_v = acc + ctx.nu[iv] * fs[iv];
        });
    }
    out
}

/// N[psi_p, eta_p] = 2 Q_{eta_p}(psi_p, G) + Q_G(psi_p, psi_p)
///                 + Q_{eta_p}(psi_p, psi_p), fused into one table pass.
pub fn nonlinearity(psi_p: &Field, eta_p: &Field, ctx: &CollisionContext) -> Result<Field> {
    psi_p.check_same_grids(eta_p, "nonlinearity: psi_p vs eta_p")?;
    let mut out = Field::zeros(&psi_p.space, &psi_p.velocity);
    let nv = psi_p.nv();
    let vg = &ctx.table.vgrid;
    for ix in 0..psi_p.nx() {
        let ps = psi_p.slice(ix);
        let es = eta_p.slice(ix);
        let o = &mut out.data[ix * nv..(ix + 1) * nv];
        o.par_iter_mut().enumerate().for_each(|(iv, out_v)| {
            let mut acc = 0.0;
            let base = ctx.table.row_ptr[iv];
            for (off, e) in ctx.table.row(iv).iter().enumerate() {
                let js = e.vstar as usize;
                let gp = ctx.g_primed[base + off];
                let ap = vg.eval(ps, &e.prime);
                let asp = vg.eval(ps, &e.star_prime);
                let br_mixed = (ap * gp[1] + gp[0] * asp)
                    - (ps[iv] * ctx.g_nodes[js] + ctx.g_nodes[iv] * ps[js]);
                let br_pp = 2.0 * (ap * asp - ps[iv] * ps[js]);
                acc += e.weight * (es[js] * br_mixed + 0.5 * (ctx.g_nodes[js] + es[js]) * br_pp);
            }
            *out_v = acc;
        });
    }
    Ok(out)
}

//! Dense real-valued tables over (space node, velocity node) and
//! time-indexed sequences of them.

use crate::error::{LabError, Result};
use crate::grid::{SpaceGrid, VelocityGrid, SNAP};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<SpaceGrid>,
    pub velocity: Arc<VelocityGrid>,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(space: &Arc<SpaceGrid>, velocity: &Arc<VelocityGrid>) -> Self {
        Field {
            space: space.clone(),
            velocity: velocity.clone(),
            data: vec![0.0; space.len() * velocity.len()],
        }
    }

    /// Field from a velocity-only profile, constant in x.
    pub fn from_velocity_profile(
        space: &Arc<SpaceGrid>,
        velocity: &Arc<VelocityGrid>,
        profile: impl Fn(&[f64; 3], f64) -> f64,
    ) -> Self {
        let nv = velocity.len();
        let mut col = Vec::with_capacity(nv);
        for (v, s) in velocity.nodes.iter().zip(&velocity.speeds) {
            col.push(profile(v, *s));
        }
        let mut data = Vec::with_capacity(space.len() * nv);
        for _ in 0..space.len() {
            data.extend_from_slice(&col);
        }
        Field {
            space: space.clone(),
            velocity: velocity.clone(),
            data,
        }
    }

    pub fn from_fn(
        space: &Arc<SpaceGrid>,
        velocity: &Arc<VelocityGrid>,
        f: impl Fn(&[f64; 3], &[f64; 3]) -> f64,
    ) -> Self {
        let nv = velocity.len();
        let mut data = Vec::with_capacity(space.len() * nv);
        for ix in 0..space.len() {
            let x = space.position(ix);
            for v in &velocity.nodes {
                data.push(f(&x, v));
            }
        }
        Field {
            space: space.clone(),
            velocity: velocity.clone(),
            data,
        }
    }

    pub fn constant(space: &Arc<SpaceGrid>, velocity: &Arc<VelocityGrid>, value: f64) -> Self {
        Field {
            space: space.clone(),
            velocity: velocity.clone(),
            data: vec![value; space.len() * velocity.len()],
        }
    }

    pub fn nv(&self) -> usize {
        self.velocity.len()
    }

    pub fn nx(&self) -> usize {
        self.space.len()
    }

    #[inline]
    pub fn at(&self, ix: usize, iv: usize) -> f64 {
        self.data[ix * self.nv() + iv]
    }

    pub fn slice(&self, ix: usize) -> &[f64] {
        let nv = self.nv();
        &self.data[ix * nv..(ix + 1) * nv]
    }

    pub fn same_grids(&self, other: &Field) -> bool {
        self.data.len() == other.data.len()
            && self.space.nodes_per_axis == other.space.nodes_per_axis
            && self.velocity.nodes_per_axis == other.velocity.nodes_per_axis
            && self.velocity.dim == other.velocity.dim
    }

    pub fn check_same_grids(&self, other: &Field, what: &str) -> Result<()> {
        if self.same_grids(other) {
            Ok(())
        } else {
            Err(LabError::GridMismatch(what.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            space: self.space.clone(),
            velocity: self.velocity.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            space: self.space.clone(),
            velocity: self.velocity.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &Field) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Discrete L2 inner product with cell-volume weights dx^d dv^d.
    pub fn inner(&self, other: &Field) -> f64 {
        let w = self.space.cell_volume() * self.velocity.cell_volume();
        let mut acc = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            acc += a * b;
        }
        acc * w
    }

    /// Integral over phase space with cell-volume weights.
    pub fn integral(&self) -> f64 {
        let w = self.space.cell_volume() * self.velocity.cell_volume();
        self.data.iter().sum::<f64>() * w
    }
}

/// Multilinear interpolation at an arbitrary phase-space point: periodic in x,
/// cell-local in v. In-ball queries whose cell crosses the ball boundary fall
/// back to a weight-renormalized partial stencil (still exact on constants
/// and at nodes). Querying v strictly outside the truncation ball is a
/// contract violation (the collision quadrature never does).
pub fn interpolate(f: &Field, x: [f64; 3], v: [f64; 3]) -> f64 {
    let vg = &f.velocity;
    let speed2: f64 = v.iter().take(vg.dim).map(|a| a * a).sum();
    assert!(
        speed2 <= vg.radius * vg.radius * (1.0 + 1e-12),
        "interpolate: velocity query outside the truncation ball"
    );
    let sg = &f.space;
    let Some(vst) = vg.stencil(v) else {
        // partial stencil near the ball boundary
        return interpolate_partial(f, x, v);
    };
    if sg.is_homogeneous() {
        return f.velocity.eval(f.slice(0), &vst);
    }
    let dim = sg.dim;
    let m = sg.nodes_per_axis as i64;
    let mut base = [0i64; 3];
    let mut frac = [0.0f64; 3];
    for ax in 0..dim {
        let u = x[ax] / sg.dx;
        let mut i0 = u.floor();
        let mut fr = u - i0;
        if fr < SNAP {
            fr = 0.0;
        } else if fr > 1.0 - SNAP {
            i0 += 1.0;
            fr = 0.0;
        }
        base[ax] = (i0 as i64).rem_euclid(m);
        frac[ax] = fr;
    }
    let corners = 1usize << dim;
    let mut vals = [0.0f64; 8];
    for (c, val) in vals.iter_mut().enumerate().take(corners) {
        let mut lat = [0i64; 3];
        for ax in 0..dim {
            lat[ax] = base[ax] + ((c >> ax) & 1) as i64;
        }
        let ix = sg.flat(lat);
        *val = f.velocity.eval(f.slice(ix), &vst);
    }
    let mut len = corners;
    for ax in (0..dim).rev() {
        len /= 2;
        for c in 0..len {
            vals[c] += frac[ax] * (vals[c + len] - vals[c]);
        }
    }
    vals[0]
}

/// Weight-renormalized interpolation over the stencil corners that are
/// stored nodes; used only for in-ball queries whose cell crosses the
/// boundary.
fn interpolate_partial(f: &Field, x: [f64; 3], v: [f64; 3]) -> f64 {
    use crate::grid::SNAP as VSNAP;
    let vg = &f.velocity;
    let sg = &f.space;
    let dim = vg.dim;
    let mut vbase = [0i64; 3];
    let mut vfrac = [0.0f64; 3];
    for ax in 0..dim {
        let u = v[ax] / vg.dv + ((vg.nodes_per_axis - 1) / 2) as f64;
        let mut i0 = u.floor();
        let mut fr = u - i0;
        if fr < VSNAP {
            fr = 0.0;
        } else if fr > 1.0 - VSNAP {
            i0 += 1.0;
            fr = 0.0;
        }
        vbase[ax] = i0 as i64;
        vfrac[ax] = fr;
    }
    let eval_slice = |slice: &[f64]| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut lat = [0i64; 3];
            for ax in 0..dim {
                let bit = (c >> ax) & 1;
                w *= if bit == 1 { vfrac[ax] } else { 1.0 - vfrac[ax] };
                lat[ax] = vbase[ax] + bit as i64;
            }
            if w == 0.0 {
                continue;
            }
            if let Some(node) = vg.node_at_lattice(lat) {
                num += w * slice[node as usize];
                den += w;
            }
        }
        assert!(den > 0.0, "interpolate: no stored nodes in the query cell");
        num / den
    };
    if sg.is_homogeneous() {
        return eval_slice(f.slice(0));
    }
    let m = sg.nodes_per_axis as i64;
    let mut base = [0i64; 3];
    let mut frac = [0.0f64; 3];
    for ax in 0..sg.dim {
        let u = x[ax] / sg.dx;
        let mut i0 = u.floor();
        let mut fr = u - i0;
        if fr < VSNAP {
            fr = 0.0;
        } else if fr > 1.0 - VSNAP {
            i0 += 1.0;
            fr = 0.0;
        }
        base[ax] = (i0 as i64).rem_euclid(m);
        frac[ax] = fr;
    }
    let corners = 1usize << sg.dim;
    let mut vals = [0.0f64; 8];
    for (c, val) in vals.iter_mut().enumerate().take(corners) {
        let mut lat = [0i64; 3];
        for ax in 0..sg.dim {
            lat[ax] = base[ax] + ((c >> ax) & 1) as i64;
        }
        *val = eval_slice(f.slice(sg.flat(lat)));
    }
    let mut len = corners;
    for ax in (0..sg.dim).rev() {
        len /= 2;
        for c in 0..len {
            vals[c] += frac[ax] * (vals[c + len] - vals[c]);
        }
    }
    vals[0]
}

/// Time-indexed sequence of Fields on a uniform grid over [0, t].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
}

impl Trajectory {
    pub fn terminal_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Time reversal: s -> t - s. An involution.
    pub fn reversed(&self) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            fields: self.fields.iter().rev().cloned().collect(),
        }
    }

    pub fn sub(&self, other: &Trajectory) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            fields: self
                .fields
                .iter()
                .zip(&other.fields)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    /// Trapezoid rule for a per-node scalar sequence on the trajectory grid.
    pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 1..times.len() {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_space_grid, build_velocity_grid};

    fn grids(m: usize) -> (Arc<SpaceGrid>, Arc<VelocityGrid>) {
        (
            Arc::new(build_space_grid(3, m).unwrap()),
            Arc::new(build_velocity_grid(3, 4.0, 9).unwrap()),
        )
    }

    #[test]
    fn interpolate_node_identity() {
        let (sg, vg) = grids(4);
        let f = Field::from_fn(&sg, &vg, |x, v| x[0] + 2.0 * v[1] - v[2] * v[0]);
        for ix in [0usize, 7, 33] {
            let x = sg.position(ix);
            for iv in [0usize, 11, 128, 200] {
                let v = vg.nodes[iv];
                assert_eq!(interpolate(&f, x, v), f.at(ix, iv));
            }
        }
    }

    #[test]
    fn interpolate_constant_everywhere() {
        let (sg, vg) = grids(3);
        let f = Field::constant(&sg, &vg, 1.0);
        for (x, v) in [
            ([0.1, 0.4, 0.9], [0.25, -1.3, 2.2]),
            ([0.0, 0.0, 0.0], [3.9, 0.1, -0.4]),
            ([0.99, 0.5, 0.01], [0.0, 0.0, 0.0]),
        ] {
            assert_eq!(interpolate(&f, x, v), 1.0);
        }
    }

    #[test]
    fn interpolate_edge_midpoint_is_mean() {
        let (sg, vg) = grids(1);
        let f = Field::from_fn(&sg, &vg, |_, v| v[0]);
        // midpoint of the edge between (0,0,0) and (1,0,0)
        let val = interpolate(&f, [0.0; 3], [0.5, 0.0, 0.0]);
        assert!((val - 0.5).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn interpolation_reproduces_constants(
            ux in -1.0f64..1.0, uy in -1.0f64..1.0, uz in -1.0f64..1.0,
            r in 0.0f64..0.999,
            x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0,
        ) {
            let (sg, vg) = grids(3);
            let f = Field::constant(&sg, &vg, 1.0);
            let nrm = (ux*ux + uy*uy + uz*uz).sqrt();
            proptest::prop_assume!(nrm > 1e-6);
            let s = r * vg.radius / nrm;
            let q = [ux * s, uy * s, uz * s];
            proptest::prop_assert_eq!(interpolate(&f, [x0, x1, x2], q), 1.0);
        }
    }

    #[test]
    fn reversal_is_involution() {
        let (sg, vg) = grids(1);
        let traj = Trajectory {
            times: vec![0.0, 0.5, 1.0],
            fields: (0..3)
                .map(|k| Field::constant(&sg, &vg, k as f64))
                .collect(),
        };
        let back = traj.reversed().reversed();
        for (a, b) in traj.fields.iter().zip(&back.fields) {
            assert_eq!(a.data, b.data);
        }
    }
}

//! Discretization of velocity space (truncated ball), the spatial torus, and
//! the collision sphere.
//!
//! Velocity nodes are the Cartesian lattice points `(i - h) * dv` with
//! `|v| <= R`, `h = (n-1)/2`, so the lattice is symmetric under `v -> -v` to
//! the bit and the origin is always a node (n odd). The sphere rule is either
//! the axis (octahedron) rule, under which post-collision velocities of
//! lattice pairs are again lattice points, or a Gauss-Legendre x uniform
//! azimuth product rule exact for spherical harmonics up to the declared
//! degree.

use crate::error::{LabError, Result};

pub const NODE_SENTINEL: u32 = u32::MAX;

/// Snap threshold for interpolation coordinates: fractional parts within this
/// distance of a lattice plane are treated as exactly on it, so node queries
/// and axis-rule collision images reproduce stored values without widening
/// the stencil across the ball boundary.
pub const SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub dim: usize,
    pub radius: f64,
    pub nodes_per_axis: usize,
    pub dv: f64,
    /// Kept lattice points, lexicographic in lattice indices. Unused trailing
    /// components are zero for d = 2.
    pub nodes: Vec<[f64; 3]>,
    pub speeds: Vec<f64>,
    /// Flat lattice index -> node index, NODE_SENTINEL outside the ball.
    lattice_to_node: Vec<u32>,
    half: i64,
}

impl VelocityGrid {
    pub fn axis_coord(&self, i: i64) -> f64 {
        (i - self.half) as f64 * self.dv
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dv.powi(self.dim as i32)
    }

    fn flat(&self, idx: [i64; 3]) -> usize {
        let n = self.nodes_per_axis as i64;
        let mut f = 0i64;
        for ax in 0..self.dim {
            f = f * n + idx[ax];
        }
        f as usize
    }

    pub fn node_at_lattice(&self, idx: [i64; 3]) -> Option<u32> {
        let n = self.nodes_per_axis as i64;
        for ax in 0..self.dim {
            if idx[ax] < 0 || idx[ax] >= n {
                return None;
            }
        }
        let v = self.lattice_to_node[self.flat(idx)];
        (v != NODE_SENTINEL).then_some(v)
    }

    /// Multilinear interpolation stencil at the off-lattice point `q`.
    /// Returns None if any positive-weight corner falls outside the ball;
    /// the conservative collision truncation discards such triples.
    pub fn stencil(&self, q: [f64; 3]) -> Option<VStencil> {
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for ax in 0..self.dim {
            let u = q[ax] / self.dv + self.half as f64;
            let mut i0 = u.floor();
            let mut fr = u - i0;
            if fr < SNAP {
                fr = 0.0;
            } else if fr > 1.0 - SNAP {
                i0 += 1.0;
                fr = 0.0;
            }
            base[ax] = i0 as i64;
            frac[ax] = fr;
        }
        let mut idx = [0u32; 8];
        let corners = 1usize << self.dim;
        for c in 0..corners {
            let mut w = 1.0;
            let mut lat = [0i64; 3];
            for ax in 0..self.dim {
                let bit = (c >> ax) & 1;
                w *= if bit == 1 { frac[ax] } else { 1.0 - frac[ax] };
                lat[ax] = base[ax] + bit as i64;
            }
            if w > 0.0 {
                idx[c] = self.node_at_lattice(lat)?;
            } else {
                idx[c] = 0; // weight is exactly zero; contributes nothing
            }
        }
        Some(VStencil { idx, frac })
    }

    /// Evaluate a velocity-slice of field values through a stencil: nested
    /// linear interpolation a + t (b - a) per axis, which reproduces node
    /// values and constants exactly.
    #[inline]
    pub fn eval(&self, slice: &[f64], st: &VStencil) -> f64 {
        let corners = 1usize << self.dim;
        let mut vals = [0.0f64; 8];
        for (c, v) in vals.iter_mut().enumerate().take(corners) {
            *v = slice[st.idx[c] as usize];
        }
        let mut len = corners;
        for ax in (0..self.dim).rev() {
            len /= 2;
            let t = st.frac[ax];
            for c in 0..len {
                vals[c] += t * (vals[c + len] - vals[c]);
            }
        }
        vals[0]
    }
}

/// Compact multilinear stencil: the 2^d cell-corner node indices plus the
/// per-axis fractional coordinates (corner weights are products of these).
#[derive(Debug, Clone, Copy)]
pub struct VStencil {
    pub idx: [u32; 8],
    pub frac: [f64; 3],
}

pub fn build_velocity_grid(dim: usize, radius: f64, nodes_per_axis: usize) -> Result<VelocityGrid> {
    if dim != 2 && dim != 3 {
        return Err(LabError::invalid("grid.dimension", "must be 2 or 3"));
    }
    if radius <= 0.0 {
        return Err(LabError::invalid("grid.velocity.radius", "must be > 0"));
    }
    if nodes_per_axis % 2 == 0 {
        return Err(LabError::invalid(
            "grid.velocity.nodes_per_axis",
            "must be odd to keep the lattice symmetric under v -> -v",
        ));
    }
    if nodes_per_axis < 3 {
        return Err(LabError::invalid(
            "grid.velocity.nodes_per_axis",
            "must be >= 3",
        ));
    }
    let n = nodes_per_axis;
    let half = ((n - 1) / 2) as i64;
    let dv = 2.0 * radius / (n - 1) as f64;
    let r2 = radius * radius * (1.0 + 1e-12);
    let total = n.pow(dim as u32);
    let mut lattice_to_node = vec![NODE_SENTINEL; total];
    let mut nodes = Vec::new();
    let mut speeds = Vec::new();

    let n_i = n as i64;
    let mut idx = [0i64; 3];
    let mut flat = 0usize;
    // lexicographic over lattice indices, axis 0 slowest
    loop {
        let mut v = [0.0f64; 3];
        let mut sq = 0.0;
        for ax in 0..dim {
            v[ax] = (idx[ax] - half) as f64 * dv;
            sq += v[ax] * v[ax];
        }
        if sq <= r2 {
            lattice_to_node[flat] = nodes.len() as u32;
            nodes.push(v);
            speeds.push(sq.sqrt());
        }
        flat += 1;
        // increment
        let mut ax = dim;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < n_i {
                break;
            }
            idx[ax] = 0;
            if ax == 0 {
                return Ok(VelocityGrid {
                    dim,
                    radius,
                    nodes_per_axis: n,
                    dv,
                    nodes,
                    speeds,
                    lattice_to_node,
                    half,
                });
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpaceGrid {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub dx: f64,
}

impl SpaceGrid {
    pub fn len(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.nodes_per_axis == 1
    }

    /// Coordinates of a flat space index on the unit torus.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let m = self.nodes_per_axis;
        let mut rem = flat;
        let mut idx = [0usize; 3];
        for ax in (0..self.dim).rev() {
            idx[ax] = rem % m;
            rem /= m;
        }
        let mut x = [0.0; 3];
        for ax in 0..self.dim {
            x[ax] = idx[ax] as f64 * self.dx;
        }
        x
    }

    pub fn lattice(&self, flat: usize) -> [i64; 3] {
        let m = self.nodes_per_axis;
        let mut rem = flat;
        let mut idx = [0i64; 3];
        for ax in (0..self.dim).rev() {
            idx[ax] = (rem % m) as i64;
            rem /= m;
        }
        idx
    }

    pub fn flat(&self, idx: [i64; 3]) -> usize {
        let m = self.nodes_per_axis as i64;
        let mut f = 0i64;
        for ax in 0..self.dim {
            f = f * m + idx[ax].rem_euclid(m);
        }
        f as usize
    }
}

pub fn build_space_grid(dim: usize, nodes_per_axis: usize) -> Result<SpaceGrid> {
    if dim != 2 && dim != 3 {
        return Err(LabError::invalid("grid.dimension", "must be 2 or 3"));
    }
    if nodes_per_axis < 1 {
        return Err(LabError::invalid(
            "grid.space.nodes_per_axis",
            "must be >= 1",
        ));
    }
    Ok(SpaceGrid {
        dim,
        nodes_per_axis,
        dx: 1.0 / nodes_per_axis as f64,
    })
}

#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub dim: usize,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub order: usize,
    /// True when every collision image of a lattice pair is again a lattice
    /// point (axis rules); discrete collision identities are then exact.
    pub axis_rule: bool,
}

impl SphereQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn surface_measure(&self) -> f64 {
        match self.dim {
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        }
    }
}

pub fn build_sphere_quadrature(dim: usize, order: usize) -> Result<SphereQuadrature> {
    if dim != 2 && dim != 3 {
        return Err(LabError::invalid("grid.dimension", "must be 2 or 3"));
    }
    if order < 2 {
        return Err(LabError::invalid("grid.sphere.order", "must be >= 2"));
    }
    match dim {
        2 => {
            // order = node count on the circle
            if order % 2 != 0 {
                return Err(LabError::invalid(
                    "grid.sphere.order",
                    "odd node counts cannot be made antipodally symmetric",
                ));
            }
            let half = order / 2;
            let mut nodes = Vec::with_capacity(order);
            for k in 0..half {
                let th = 2.0 * std::f64::consts::PI * k as f64 / order as f64;
                nodes.push([th.cos(), th.sin(), 0.0]);
            }
            for k in 0..half {
                let p = nodes[k];
                nodes.push([-p[0], -p[1], 0.0]);
            }
            let w = 2.0 * std::f64::consts::PI / order as f64;
            Ok(SphereQuadrature {
                dim,
                weights: vec![w; order],
                nodes,
                order,
                axis_rule: order == 4,
            })
        }
        _ => {
            if order <= 3 {
                // octahedron rule, exact for spherical harmonics up to degree 3
                let w = 4.0 * std::f64::consts::PI / 6.0;
                let nodes = vec![
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [-1.0, 0.0, 0.0],
                    [0.0, -1.0, 0.0],
                    [0.0, 0.0, -1.0],
                ];
                return Ok(SphereQuadrature {
                    dim,
                    nodes,
                    weights: vec![w; 6],
                    order,
                    axis_rule: true,
                });
            }
            // Gauss-Legendre in cos(theta) x uniform azimuth, antipodal by
            // construction (even azimuth count, +/- paired polar nodes).
            let n_theta = (order + 2) / 2;
            let mut n_phi = order + 1;
            if n_phi % 2 != 0 {
                n_phi += 1;
            }
            let (ct, wt) = gauss_legendre(n_theta);
            let half_phi = n_phi / 2;
            let mut az = Vec::with_capacity(n_phi);
            for k in 0..half_phi {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                az.push([ph.cos(), ph.sin()]);
            }
            for k in 0..half_phi {
                let p = az[k];
                az.push([-p[0], -p[1]]);
            }
            let mut nodes = Vec::with_capacity(n_theta * n_phi);
            let mut weights = Vec::with_capacity(n_theta * n_phi);
            let wphi = 2.0 * std::f64::consts::PI / n_phi as f64;
            for (c, w) in ct.iter().zip(wt.iter()) {
                let st = (1.0 - c * c).sqrt();
                for a in &az {
                    nodes.push([st * a[0], st * a[1], *c]);
                    weights.push(w * wphi);
                }
            }
            Ok(SphereQuadrature {
                dim,
                nodes,
                weights,
                order,
                axis_rule: false,
            })
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], exactly symmetric pairs.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev initial guess, Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pd(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Specular reflection: (v', v*') from (v, v*, omega).
#[inline]
pub fn collide(v: [f64; 3], v_star: [f64; 3], omega: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut g = 0.0;
    for ax in 0..3 {
        g += (v[ax] - v_star[ax]) * omega[ax];
    }
    let mut vp = [0.0; 3];
    let mut vsp = [0.0; 3];
    for ax in 0..3 {
        vp[ax] = v[ax] - g * omega[ax];
        vsp[ax] = v_star[ax] + g * omega[ax];
    }
    (vp, vsp)
}

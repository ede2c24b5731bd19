//! Free transport S_tau, the damped transport D1 of the Grad decomposition,
//! and the semigroups e^{sB+-} by first-order exponential Euler: the e^{-nu
//! delta} factor absorbs the stiff multiplicative part exactly, the compact
//! part K enters once per substep.

use crate::collision::{linearized_k, CollisionContext};
use crate::field::Field;
use crate::grid::SNAP;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Forward component: drift -v . grad_x, transport shift x - s v.
    Forward,
    /// Backward component: drift +v . grad_x, transport shift x + s v.
    Backward,
}

/// Semi-Lagrangian free transport: out(x, v) = f(x - tau v, v), periodic
/// multilinear interpolation in x. Exact when m = 1 or tau = 0.
pub fn free_transport(f: &Field, tau: f64) -> Field {
    if tau == 0.0 || f.space.is_homogeneous() {
        return f.clone();
    }
    let sg = &f.space;
    let vg = &f.velocity;
    let dim = sg.dim;
    let nv = vg.len();

    // uniform shift per (velocity node, axis), in index units
    let shifts: Vec<([i64; 3], [f64; 3])> = vg
        .nodes
        .iter()
        .map(|v| {
            let mut base = [0i64; 3];
            let mut frac = [0.0f64; 3];
            for ax in 0..dim {
                let o = -tau * v[ax] / sg.dx;
                let mut k0 = o.floor();
                let mut fr = o - k0;
                if fr < SNAP {
                    fr = 0.0;
                } else if fr > 1.0 - SNAP {
                    k0 += 1.0;
                    fr = 0.0;
                }
                base[ax] = k0 as i64;
                frac[ax] = fr;
            }
            (base, frac)
        })
        .collect();

    let mut out = Field::zeros(sg, vg);
    let corners = 1usize << dim;
    for ix in 0..sg.len() {
        let xlat = sg.lattice(ix);
        let o = &mut out.data[ix * nv..(ix + 1) * nv];
        for (iv, out_v) in o.iter_mut().enumerate() {
            let (base, frac) = &shifts[iv];
            let mut vals = [0.0f64; 8];
            for (c, val) in vals.iter_mut().enumerate().take(corners) {
                let mut lat = [0i64; 3];
                for ax in 0..dim {
                    lat[ax] = xlat[ax] + base[ax] + ((c >> ax) & 1) as i64;
                }
                let jx = sg.flat(lat);
                *val = f.data[jx * nv + iv];
            }
            let mut len = corners;
            for ax in (0..dim).rev() {
                len /= 2;
                for c in 0..len {
                    vals[c] += frac[ax] * (vals[c + len] - vals[c]);
                }
            }
            *out_v = vals[0];
        }
    }
    out
}

/// D1(s): free transport (sign per direction) damped pointwise by
/// e^{-nu(v) s}.
pub fn d1_apply(f: &Field, s: f64, direction: Direction, nu: &[f64]) -> Field {
    let tau = match direction {
        Direction::Forward => s,
        Direction::Backward => -s,
    };
    let mut out = free_transport(f, tau);
    let nv = f.nv();
    let damp: Vec<f64> = nu.iter().map(|&n| (-n * s).exp()).collect();
    for ix in 0..f.nx() {
        let o = &mut out.data[ix * nv..(ix + 1) * nv];
        for (iv, val) in o.iter_mut().enumerate() {
            *val *= damp[iv];
        }
    }
    out
}

/// Stepper for e^{sB+} or e^{sB-} via substepped exponential Euler:
/// each substep of size h applies f <- D1(h)(f + h K f).
#[derive(Clone)]
pub struct SemigroupStepper {
    pub direction: Direction,
    pub delta_sub: f64,
    pub ctx: Arc<CollisionContext>,
    /// Test hook: dropping K makes e^{sB} collapse to D1(s) exactly.
    pub disable_k: bool,
}

impl SemigroupStepper {
    pub fn new(direction: Direction, delta_sub: f64, ctx: Arc<CollisionContext>) -> Self {
        assert!(delta_sub > 0.0);
        SemigroupStepper {
            direction,
            delta_sub,
            ctx,
            disable_k: false,
        }
    }

    fn substep(&self, f: &Field, h: f64) -> Field {
        if self.disable_k {
            return d1_apply(f, h, self.direction, &self.ctx.nu);
        }
        let mut staged = f.clone();
        let k = linearized_k(f, &self.ctx);
        staged.axpy(h, &k);
        d1_apply(&staged, h, self.direction, &self.ctx.nu)
    }

    /// One step of length `delta`, internally split into substeps of size
    /// <= delta_sub. Full substeps are exactly delta_sub so compositions of
    /// steps whose lengths are multiples of delta_sub are bit-reproducible.
    pub fn step(&self, f: &Field, delta: f64) -> Field {
        assert!(delta >= 0.0);
        if delta == 0.0 {
            return f.clone();
        }
        let n_full = (delta / self.delta_sub + 1e-9).floor() as usize;
        let rem = delta - n_full as f64 * self.delta_sub;
        let mut cur = f.clone();
        for _ in 0..n_full {
            cur = self.substep(&cur, self.delta_sub);
        }
        if rem > 1e-12 * delta.max(1.0) {
            cur = self.substep(&cur, rem);
        }
        cur
    }

    /// e^{sB} f for s >= 0.
    pub fn apply(&self, f: &Field, s: f64) -> Field {
        self.step(f, s)
    }
}

/// D2(s) f = e^{sB} f - D1(s) f: the compact-part remainder of the semigroup
/// decomposition, used as a boundedness diagnostic.
pub fn d2_residual(f: &Field, s: f64, stepper: &SemigroupStepper) -> Field {
    let full = stepper.apply(f, s);
    let d1 = d1_apply(f, s, stepper.direction, &stepper.ctx.nu);
    full.sub(&d1)
}

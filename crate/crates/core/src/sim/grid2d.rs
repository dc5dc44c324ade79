//! Image-plane baseline: the same splitting on a staggered pixel grid.
//!
//! Cells are pixels. `u` lives on vertical cell faces (`(W+1) x H`), `v` on
//! horizontal ones (`W x (H+1)`), all in pixels/frame. In-mask pixels are
//! FLUID, the rest SOLID. In-mask pixels on the image border are AIR with
//! `p = 0`, mirroring the free-surface vertices the mesh places there.

use std::collections::BTreeMap;

use super::pressure::{conjugate_gradient, CsrMatrix, SolveStats};
use super::solver::{ProjectionReport, SimConfig};
use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::mesh::CellKind;
use crate::raster::{bilinear_axis, Mask, Raster};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2d {
    pub labels: Raster<CellKind>,
    pub u: Raster<f64>,
    pub v: Raster<f64>,
    slot: Raster<Option<usize>>,
    matrix: CsrMatrix,
}

impl Grid2d {
    /// Grid for `mask` with face velocities averaged from `field`.
    pub fn new(mask: &Mask, field: &MotionField) -> Result<Self> {
        let (w, h) = mask.dims();
        if field.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                asset: "motion field".into(),
                want_w: w,
                want_h: h,
                got_w: field.width(),
                got_h: field.height(),
            });
        }
        if !mask.any() {
            return Err(Error::EmptyFluidRegion);
        }
        let labels = Raster::from_fn(w, h, |i, j| {
            if !*mask.get(i, j) {
                CellKind::Solid
            } else if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                CellKind::Air
            } else {
                CellKind::Fluid
            }
        });
        let mut slot = Raster::filled(w, h, None);
        let mut n = 0;
        for j in 0..h {
            for i in 0..w {
                if *labels.get(i, j) == CellKind::Fluid {
                    slot.set(i, j, Some(n));
                    n += 1;
                }
            }
        }
        let mut entries = BTreeMap::new();
        for j in 0..h {
            for i in 0..w {
                let Some(r) = *slot.get(i, j) else { continue };
                let mut d = 0.0;
                for (ni, nj) in neighbors(i, j, w, h) {
                    match *labels.get(ni, nj) {
                        CellKind::Solid => {}
                        CellKind::Air => d += 1.0,
                        CellKind::Fluid => {
                            d += 1.0;
                            entries.insert((r, slot.get(ni, nj).expect("fluid slot")), -1.0);
                        }
                    }
                }
                entries.insert((r, r), d);
            }
        }
        let matrix = CsrMatrix::from_entries(n, &entries);
        let u = Raster::from_fn(w + 1, h, |i, j| {
            let l = (i > 0).then(|| field.get(i - 1, j)[0]);
            let r = (i < w).then(|| field.get(i, j)[0]);
            match (l, r) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            }
        });
        let v = Raster::from_fn(w, h + 1, |i, j| {
            let t = (j > 0).then(|| field.get(i, j - 1)[1]);
            let b = (j < h).then(|| field.get(i, j)[1]);
            match (t, b) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            }
        });
        let mut g = Self {
            labels,
            u,
            v,
            slot,
            matrix,
        };
        g.enforce_walls();
        Ok(g)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    fn is_open(&self, i: isize, j: isize) -> bool {
        let (w, h) = self.dims();
        i < 0
            || j < 0
            || i >= w as isize
            || j >= h as isize
            || *self.labels.get(i as usize, j as usize) != CellKind::Solid
    }

    /// Zero every face touching a solid cell, or touching nothing but
    /// the outside of the image.
    fn enforce_walls(&mut self) {
        let (w, h) = self.dims();
        for j in 0..h {
            for i in 0..=w {
                let l = self.is_open(i as isize - 1, j as isize);
                let r = self.is_open(i as isize, j as isize);
                if !(l && r) {
                    self.u.set(i, j, 0.0);
                }
            }
        }
        for j in 0..=h {
            for i in 0..w {
                let t = self.is_open(i as isize, j as isize - 1);
                let b = self.is_open(i as isize, j as isize);
                if !(t && b) {
                    self.v.set(i, j, 0.0);
                }
            }
        }
    }

    /// Net outflow of every cell; zero outside fluid cells.
    pub fn divergence(&self) -> Raster<f64> {
        let (w, h) = self.dims();
        Raster::from_fn(w, h, |i, j| {
            if *self.labels.get(i, j) != CellKind::Fluid {
                return 0.0;
            }
            self.u.get(i + 1, j) - self.u.get(i, j) + self.v.get(i, j + 1) - self.v.get(i, j)
        })
    }

    fn max_divergence(&self) -> f64 {
        self.divergence().data().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Pressure projection with the 5-point Laplacian.
    pub fn project(&mut self, config: &SimConfig) -> Result<ProjectionReport> {
        config.validate()?;
        let (w, h) = self.dims();
        let div = self.divergence();
        let k = config.density / config.dt;
        let mut b = vec![0.0; self.matrix.len()];
        for j in 0..h {
            for i in 0..w {
                if let Some(r) = *self.slot.get(i, j) {
                    // -L p = -(rho / dt) div
                    b[r] = -k * div.get(i, j);
                }
            }
        }
        let before = div.data().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let (x, solve): (Vec<f64>, SolveStats) =
            conjugate_gradient(&self.matrix, &b, &config.solver_params())?;
        let p = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= w as isize || j >= h as isize {
                return 0.0;
            }
            self.slot
                .get(i as usize, j as usize)
                .map_or(0.0, |r| x[r])
        };
        let s = config.beta * config.dt / config.density;
        for j in 0..h {
            for i in 0..=w {
                let (a, c) = ((i as isize) - 1, i as isize);
                let grad = p(c, j as isize) - p(a, j as isize);
                *self.u.get_mut(i, j) -= s * grad;
            }
        }
        for j in 0..=h {
            for i in 0..w {
                let (a, c) = ((j as isize) - 1, j as isize);
                let grad = p(i as isize, c) - p(i as isize, a);
                *self.v.get_mut(i, j) -= s * grad;
            }
        }
        self.enforce_walls();
        Ok(ProjectionReport {
            max_div_before: before,
            max_div_after: self.max_divergence(),
            rhs_inf: before * k,
            solve,
        })
    }

    /// Semi-Lagrangian advection of both velocity components.
    pub fn advect(&mut self, dt: f64) {
        let (w, h) = self.dims();
        let u0 = self.u.clone();
        let v0 = self.v.clone();
        // u node (i, j) sits at (i - 0.5, j); v node (i, j) at (i, j - 0.5)
        let su = |x: f64, y: f64| sample(&u0, x + 0.5, y);
        let sv = |x: f64, y: f64| sample(&v0, x, y + 0.5);
        self.u = Raster::from_fn(w + 1, h, |i, j| {
            let (x, y) = (i as f64 - 0.5, j as f64);
            let vel = [su(x, y), sv(x, y)];
            su(x - dt * vel[0], y - dt * vel[1])
        });
        self.v = Raster::from_fn(w, h + 1, |i, j| {
            let (x, y) = (i as f64, j as f64 - 0.5);
            let vel = [su(x, y), sv(x, y)];
            sv(x - dt * vel[0], y - dt * vel[1])
        });
        self.enforce_walls();
    }

    /// Cell-centered motion; valid on non-solid cells.
    pub fn motion_field(&self) -> MotionField {
        let (w, h) = self.dims();
        let valid = Raster::from_fn(w, h, |i, j| *self.labels.get(i, j) != CellKind::Solid);
        let data = Raster::from_fn(w, h, |i, j| {
            if !*valid.get(i, j) {
                return [0.0; 2];
            }
            [
                0.5 * (self.u.get(i, j) + self.u.get(i + 1, j)),
                0.5 * (self.v.get(i, j) + self.v.get(i, j + 1)),
            ]
        });
        MotionField { data, valid }
    }
}

fn neighbors(i: usize, j: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [
        (i.wrapping_sub(1), j),
        (i + 1, j),
        (i, j.wrapping_sub(1)),
        (i, j + 1),
    ];
    cand.into_iter().filter(move |&(a, b)| a < w && b < h)
}

fn sample(r: &Raster<f64>, x: f64, y: f64) -> f64 {
    let (x0, x1, fx) = bilinear_axis(x, r.width());
    let (y0, y1, fy) = bilinear_axis(y, r.height());
    let a = r.get(x0, y0) * (1.0 - fx) + r.get(x1, y0) * fx;
    let b = r.get(x0, y1) * (1.0 - fx) + r.get(x1, y1) * fx;
    a * (1.0 - fy) + b * fy
}

/// One frame: advect, apply image-plane gravity, project.
pub fn grid2d_step(state: &mut Grid2d, config: &SimConfig) -> Result<ProjectionReport> {
    config.validate()?;
    state.advect(config.dt);
    let (gx, gy) = (config.gravity[0] * config.dt, -config.gravity[1] * config.dt);
    if gx != 0.0 || gy != 0.0 {
        for x in state.u.data_mut() {
            *x += gx;
        }
        for y in state.v.data_mut() {
            *y += gy;
        }
        state.enforce_walls();
    }
    state.project(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel_mask(w: usize, h: usize) -> Mask {
        Raster::from_fn(w, h, |_, j| j >= h / 4 && j < 3 * h / 4)
    }

    #[test]
    fn zero_field_is_fixed_point() {
        let mask = channel_mask(24, 16);
        let mut g = Grid2d::new(&mask, &MotionField::zeros(24, 16)).unwrap();
        let before = g.clone();
        grid2d_step(&mut g, &SimConfig::default()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn random_field_projects_to_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (40, 32);
        let mask = Raster::from_fn(w, h, |i, j| {
            let (x, y) = (i as f64 - 20.0, j as f64 - 14.0);
            x * x / 400.0 + y * y / 150.0 < 1.0 || j > 20
        });
        let field = MotionField::from_fn(w, h, |_, _| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let mut g = Grid2d::new(&mask, &field).unwrap();
        let cfg = SimConfig::default();
        let rep = g.project(&cfg).unwrap();
        assert!(rep.solve.converged);
        assert!(rep.max_div_after <= cfg.solver_tol * rep.rhs_inf, "{rep:?}");
        // walls carry no flow
        for j in 0..h {
            for i in 1..w {
                let solid = |a: usize| *g.labels.get(a, j) == CellKind::Solid;
                if solid(i - 1) != solid(i) {
                    assert_eq!(*g.u.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn uniform_channel_flow_is_stationary() {
        let (w, h) = (32, 16);
        let mask = channel_mask(w, h);
        let mut g = Grid2d::new(&mask, &MotionField::constant(w, h, [0.8, 0.0])).unwrap();
        let cfg = SimConfig::default();
        for _ in 0..5 {
            grid2d_step(&mut g, &cfg).unwrap();
        }
        let m = g.motion_field();
        for j in 0..h {
            for i in 0..w {
                if *m.valid.get(i, j) && *mask.get(i, j) {
                    let p = m.get(i, j);
                    assert!((p[0] - 0.8).abs() < 1e-6 && p[1].abs() < 1e-6, "{i},{j}: {p:?}");
                }
            }
        }
    }
}

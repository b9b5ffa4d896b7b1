//! Cartesian 1D+1 space-time mesh with timeslab structure.
//!
//! Elements are indexed `(is, it)` with `is` the spatial column (0-based,
//! periodic) and `it` the timeslab. Faces follow the reference-element
//! convention: face 0 at `x`-min, face 1 at `x`-max, face 2 at `t`-min,
//! face 3 at `t`-max, face nodes ordered by increasing tangential coordinate.

use crate::operators::ElementGeometry;
use crate::{Error, Real, Result};

pub const FACE_X_MIN: usize = 0;
pub const FACE_X_MAX: usize = 1;
pub const FACE_T_MIN: usize = 2;
pub const FACE_T_MAX: usize = 3;

/// Element index as a `(spatial, timeslab)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElemId {
    pub is: usize,
    pub it: usize,
}

/// What lies across a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    /// Interior face shared with another element (periodic wrap included).
    Interior(ElemId),
    /// The `t = 0` boundary, where Dirichlet data is imposed.
    TimeStart,
    /// The `t = T` outflow boundary.
    TimeEnd,
}

/// Uniform `Ks x Kt` grid of rectangular space-time elements.
#[derive(Debug, Clone)]
pub struct SpaceTimeMesh<S> {
    pub ks: usize,
    pub kt: usize,
    pub x_range: (S, S),
    pub t_range: (S, S),
    geom: ElementGeometry<S>,
}

impl<S: Real> SpaceTimeMesh<S> {
    pub fn new(ks: usize, kt: usize, x_range: (S, S), t_range: (S, S)) -> Result<Self> {
        if ks < 1 || kt < 1 {
            return Err(Error::Config(format!("element counts must be >= 1, got {ks} x {kt}")));
        }
        if x_range.1 <= x_range.0 || t_range.1 <= t_range.0 {
            return Err(Error::Config("degenerate coordinate range".into()));
        }
        let dx = (x_range.1 - x_range.0) / S::of(ks as f64);
        let dt = (t_range.1 - t_range.0) / S::of(kt as f64);
        Ok(SpaceTimeMesh { ks, kt, x_range, t_range, geom: ElementGeometry::new(dx, dt)? })
    }

    pub fn n_elems(&self) -> usize {
        self.ks * self.kt
    }

    /// Geometry shared by every element (grids are uniform).
    pub fn geometry(&self) -> ElementGeometry<S> {
        self.geom
    }

    /// Flat index, timeslab-major so a slab is contiguous.
    pub fn flat(&self, e: ElemId) -> usize {
        debug_assert!(e.is < self.ks && e.it < self.kt);
        e.it * self.ks + e.is
    }

    pub fn elem(&self, flat: usize) -> ElemId {
        ElemId { is: flat % self.ks, it: flat / self.ks }
    }

    pub fn neighbor(&self, e: ElemId, face: usize) -> Neighbor {
        match face {
            FACE_X_MIN => Neighbor::Interior(ElemId {
                is: (e.is + self.ks - 1) % self.ks,
                it: e.it,
            }),
            FACE_X_MAX => Neighbor::Interior(ElemId { is: (e.is + 1) % self.ks, it: e.it }),
            FACE_T_MIN => {
                if e.it == 0 {
                    Neighbor::TimeStart
                } else {
                    Neighbor::Interior(ElemId { is: e.is, it: e.it - 1 })
                }
            }
            FACE_T_MAX => {
                if e.it + 1 == self.kt {
                    Neighbor::TimeEnd
                } else {
                    Neighbor::Interior(ElemId { is: e.is, it: e.it + 1 })
                }
            }
            _ => panic!("face index out of range"),
        }
    }

    /// Elements of one timeslab in spatial order.
    pub fn slab_elems(&self, it: usize) -> impl Iterator<Item = ElemId> + '_ {
        (0..self.ks).map(move |is| ElemId { is, it })
    }

    /// Physical `x` of a reference coordinate inside element column `is`.
    pub fn x_of(&self, is: usize, xi: S) -> S {
        let dx = self.geom.dx;
        self.x_range.0 + dx * (S::of(is as f64) + (xi + S::one()) * S::of(0.5))
    }

    /// Physical `t` of a reference coordinate inside timeslab `it`.
    pub fn t_of(&self, it: usize, tau: S) -> S {
        let dt = self.geom.dt;
        self.t_range.0 + dt * (S::of(it as f64) + (tau + S::one()) * S::of(0.5))
    }
}

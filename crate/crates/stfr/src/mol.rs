//! Method-of-lines reference: the spatial FR semidiscretization advanced
//! with an explicit five-stage fourth-order low-storage Runge-Kutta scheme.
//!
//! Used to compare the order-versus-correction-parameter behaviour of the
//! space-time scheme against a conventional time march on the same spatial
//! operators. The time step is chosen small enough that the spatial error
//! dominates, so any fourth-order scheme gives the same curve; the classical
//! Carpenter-Kennedy coefficients are used.

use crate::basis::{make_rule, QuadKind};
use crate::linalg::{LuFactor, Mat};
use crate::operators::OperatorSet;
use crate::physics::PhysicsModel;
use crate::{Error, Real, Result};

/// Low-storage RK coefficients (five stages, fourth order).
const RK_A: [f64; 5] = [
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
];
const RK_B: [f64; 5] = [
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
];

#[derive(Debug, Clone, Copy)]
pub struct MolConfig<S> {
    pub dt: S,
    pub t_final: S,
}

impl<S: Real> MolConfig<S> {
    /// Step size rule keeping the temporal error far below the spatial one.
    pub fn with_suggested_dt(t_final: S, dx: S, speed: S, p: usize) -> Self {
        let dt = S::of(0.05) * dx / (speed.abs() * S::of(2.0 * p as f64 + 1.0));
        MolConfig { dt, t_final }
    }
}

/// 1D spatial FR discretization on a periodic uniform grid, sharing the 1D
/// factors of a space-time operator set.
pub struct SpatialDisc1D<'a, S, M> {
    ops: &'a OperatorSet<S>,
    model: &'a M,
    ks: usize,
    dx: S,
    /// `(M1 + c K1)^{-1} V^T W D_phi`, applied to flux-node values.
    dbar: Mat<S>,
    /// Projection onto the solution basis (reference, no filter).
    proj: Mat<S>,
    /// Filtered lift columns for the two element faces.
    lift_minus: Vec<S>,
    lift_plus: Vec<S>,
}

impl<'a, S: Real, M: PhysicsModel<S>> SpatialDisc1D<'a, S, M> {
    pub fn new(ops: &'a OperatorSet<S>, model: &'a M, ks: usize, dx: S) -> Result<Self> {
        if model.n_states() != 1 {
            return Err(Error::Config("the MOL reference path is scalar-only".into()));
        }
        let n_s = ops.n_soln_1d();
        let n_f = ops.n_flux_1d();
        let w = &ops.flux_rule_1d.weights;
        let wmat = Mat::from_fn(n_f, n_f, |i, j| if i == j { w[i] } else { S::zero() });
        let mk = ops.mhat_1d.add(&ops.khat_unit_1d.scale(ops.c));
        let mk_lu = LuFactor::new(&mk)?;
        let m_lu = LuFactor::new(&ops.mhat_1d)?;
        let vtw = ops.v_sq.transpose().matmul(&wmat);
        let dbar = mk_lu.solve_mat(&vtw.matmul(&ops.d_phi_1d));
        let proj = m_lu.solve_mat(&vtw);
        let mut chi_m = vec![S::zero(); n_s];
        let mut chi_p = vec![S::zero(); n_s];
        chi_m.copy_from_slice(&ops.chi_minus);
        chi_p.copy_from_slice(&ops.chi_plus);
        // lifts carry the face normal: -1 at the left face, +1 at the right
        let mut lift_minus = chi_m;
        mk_lu.solve(&mut lift_minus);
        for v in lift_minus.iter_mut() {
            *v = -*v;
        }
        let mut lift_plus = chi_p;
        mk_lu.solve(&mut lift_plus);
        Ok(SpatialDisc1D { ops, model, ks, dx, dbar, proj, lift_minus, lift_plus })
    }

    pub fn n_dofs(&self) -> usize {
        self.ks * self.ops.n_soln_1d()
    }

    /// `du/dt = -(2/dx) * fr_residual(u)`, periodic in `x`.
    pub fn rhs(&self, u: &[S], out: &mut [S]) {
        let n_s = self.ops.n_soln_1d();
        let n_f = self.ops.n_flux_1d();
        let ks = self.ks;
        let mut flux_nodes = vec![S::zero(); n_f];
        let mut ghat = vec![S::zero(); n_s];
        let mut f_val = [S::zero()];
        // element traces of the solution for the numerical fluxes
        let mut trace_l = vec![S::zero(); ks];
        let mut trace_r = vec![S::zero(); ks];
        for e in 0..ks {
            let coeffs = &u[e * n_s..(e + 1) * n_s];
            trace_l[e] = crate::linalg::dot(&self.ops.chi_minus, coeffs);
            trace_r[e] = crate::linalg::dot(&self.ops.chi_plus, coeffs);
        }
        let mut fstar = vec![S::zero(); ks]; // flux at interface right of element e
        for e in 0..ks {
            let right = (e + 1) % ks;
            self.model.num_flux_s(&[trace_r[e]], &[trace_l[right]], &mut f_val);
            fstar[e] = f_val[0];
        }
        let scale = -S::of(2.0) / self.dx;
        for e in 0..ks {
            let coeffs = &u[e * n_s..(e + 1) * n_s];
            // nodal flux at the 1D flux nodes, projected to the solution basis
            self.ops.v_sq.matvec(coeffs, &mut flux_nodes);
            for v in flux_nodes.iter_mut() {
                let uval = *v;
                self.model.flux_s(&[uval], &mut f_val);
                *v = f_val[0];
            }
            self.proj.matvec(&flux_nodes, &mut ghat);
            // volume derivative of the projected flux
            self.ops.v_sq.matvec(&ghat, &mut flux_nodes);
            let r = &mut out[e * n_s..(e + 1) * n_s];
            self.dbar.matvec(&flux_nodes, r);
            // faces: (trace of projected flux - numerical flux), lifted
            let f_left_int = crate::linalg::dot(&self.ops.chi_minus, &ghat);
            let f_right_int = crate::linalg::dot(&self.ops.chi_plus, &ghat);
            let left = (e + ks - 1) % ks;
            let df_l = f_left_int - fstar[left];
            let df_r = f_right_int - fstar[e];
            for i in 0..n_s {
                r[i] -= self.lift_minus[i] * df_l + self.lift_plus[i] * df_r;
                r[i] *= scale;
            }
        }
    }
}

/// Marches the semidiscrete system to `t_final`. Returns the final
/// coefficients; detects blow-up against the initial norm.
pub fn mol_advance<S: Real, M: PhysicsModel<S>>(
    u0_coeffs: &[S],
    disc: &SpatialDisc1D<'_, S, M>,
    config: &MolConfig<S>,
) -> Result<Vec<S>> {
    if config.dt <= S::zero() {
        return Err(Error::Config("MOL step size must be positive".into()));
    }
    let n = u0_coeffs.len();
    debug_assert_eq!(n, disc.n_dofs());
    let mut u = u0_coeffs.to_vec();
    let mut du = vec![S::zero(); n];
    let mut rhs = vec![S::zero(); n];
    let norm0 = crate::linalg::norm2(&u) + S::one();
    let n_steps = (config.t_final / config.dt).ceil().to_f64_lossy() as usize;
    let dt = config.t_final / S::of(n_steps as f64);
    for _ in 0..n_steps {
        for stage in 0..5 {
            disc.rhs(&u, &mut rhs);
            let a = S::of(RK_A[stage]);
            let b = S::of(RK_B[stage]);
            for i in 0..n {
                du[i] = a * du[i] + dt * rhs[i];
                u[i] += b * du[i];
            }
        }
        let norm = crate::linalg::norm2(&u);
        if !norm.is_finite() || norm > S::of(1e6) * norm0 {
            return Err(Error::Stability(format!(
                "MOL march blew up: |u| = {}",
                norm.to_f64_lossy()
            )));
        }
    }
    Ok(u)
}

/// Spatial L2 error of 1D coefficients against `exact(x)` at a fixed time.
pub fn mol_l2_error<S: Real>(
    coeffs: &[S],
    ops: &OperatorSet<S>,
    ks: usize,
    x_left: S,
    dx: S,
    exact: impl Fn(S) -> S,
    overint: usize,
) -> Result<S> {
    let n_s = ops.n_soln_1d();
    let rule = make_rule::<S>(QuadKind::GaussLegendre, ops.p + 1 + overint)?;
    let vals = ops.soln_basis_1d.eval(&rule.nodes);
    let half_dx = dx / S::of(2.0);
    let mut err_sq = S::zero();
    for e in 0..ks {
        let c = &coeffs[e * n_s..(e + 1) * n_s];
        let x_c = x_left + dx * (S::of(e as f64) + S::of(0.5));
        for (q, &xi) in rule.nodes.iter().enumerate() {
            let mut uh = S::zero();
            for i in 0..n_s {
                uh += vals[(q, i)] * c[i];
            }
            let x = x_c + half_dx * xi;
            let d = uh - exact(x);
            err_sq += rule.weights[q] * half_dx * d * d;
        }
    }
    Ok(err_sq.sqrt())
}

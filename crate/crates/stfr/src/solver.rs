//! Jacobian-free Newton-Krylov solution of the implicit space-time system.
//!
//! Two drive modes: timeslab marching, valid when the temporal numerical flux
//! is pure upwind (each slab depends only on the converged slab below), and a
//! fully-coupled solve over all slabs for the two-point temporal flux. The
//! Krylov method is restarted GMRES, matrix-free and unpreconditioned;
//! Jacobian action comes from one-sided finite differences of the residual.
//! Every residual assembly is counted, which is the cost measure reported by
//! the experiment harness.

use std::time::Instant;

use crate::linalg::{axpy, norm2, scal};
use crate::physics::PhysicsModel;
use crate::residual::{Discretization, SolutionField, TemporalFlux, Workspace};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig<S> {
    pub restart: usize,
    pub rel_tol: S,
    pub max_iters: usize,
}

impl<S: Real> Default for KrylovConfig<S> {
    fn default() -> Self {
        KrylovConfig { restart: 200, rel_tol: S::of(1e-4), max_iters: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<S> {
    /// Absolute nonlinear residual norm target.
    pub newton_tol: S,
    pub newton_max_iter: usize,
    pub krylov: KrylovConfig<S>,
    /// Coupled solves start from a loosely-converged marching solution.
    pub warm_start: bool,
    pub warm_start_tol: S,
}

impl<S: Real> Default for SolverConfig<S> {
    fn default() -> Self {
        SolverConfig {
            newton_tol: S::of(1e-10),
            newton_max_iter: 50,
            krylov: KrylovConfig::default(),
            warm_start: true,
            warm_start_tol: S::of(1e-4),
        }
    }
}

impl<S: Real> SolverConfig<S> {
    /// Tight Krylov tolerance for linear problems, where one Newton step is
    /// exact up to the linear solve.
    pub fn for_linear_problem(mut self) -> Self {
        self.krylov.rel_tol = S::of(1e-12);
        self
    }
}

/// Per-solve instrumentation. In marching mode each entry is one timeslab;
/// a coupled solve reports a single entry.
#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub newton_iters: Vec<usize>,
    pub krylov_iters: Vec<usize>,
    pub rhs_assemblies: Vec<u64>,
    pub wall: std::time::Duration,
}

impl SolveStats {
    pub fn last_slab_rhs(&self) -> u64 {
        *self.rhs_assemblies.last().unwrap_or(&0)
    }

    pub fn total_rhs(&self) -> u64 {
        self.rhs_assemblies.iter().sum()
    }
}

/// Finite-difference step for the Jacobian action,
/// `eps = sqrt(mach_eps (1 + |u|)) / |w|`. The variant with `(1 + |u|)`
/// outside the root makes the step grow linearly with the state norm and
/// stalls Newton above 1e-10 on the larger slab systems.
pub fn fd_epsilon<S: Real>(u_norm: S, w_norm: S) -> S {
    (S::epsilon() * (S::one() + u_norm)).sqrt() / w_norm
}

/// One-sided finite-difference Jacobian-vector product
/// `(R(u + eps w) - R(u)) / eps` with `r0 = R(u)` cached by the caller.
/// Each call performs exactly one residual assembly.
pub fn jacobian_vector_product<S: Real>(
    residual: &mut dyn FnMut(&[S], &mut [S]) -> Result<()>,
    u: &[S],
    r0: &[S],
    w: &[S],
    out: &mut [S],
    rhs_assemblies: &mut u64,
) -> Result<()> {
    let w_norm = norm2(w);
    let floor = S::of(1e-300).max(S::min_positive_value() * S::of(1e8));
    if !(w_norm > floor) {
        return Err(Error::Config("jacobian-vector product along a zero direction".into()));
    }
    let eps = fd_epsilon(norm2(u), w_norm);
    let mut up = u.to_vec();
    axpy(&mut up, eps, w);
    residual(&up, out)?;
    *rhs_assemblies += 1;
    let inv_eps = S::one() / eps;
    for (o, r) in out.iter_mut().zip(r0) {
        *o = (*o - *r) * inv_eps;
    }
    Ok(())
}

/// Restarted GMRES on the matrix-free operator; solves `A x = b` with `x`
/// starting from zero. Returns the iteration count.
fn gmres<S: Real>(
    apply: &mut dyn FnMut(&[S], &mut [S]) -> Result<()>,
    b: &[S],
    x: &mut [S],
    cfg: &KrylovConfig<S>,
) -> Result<usize> {
    let n = b.len();
    let m = cfg.restart.max(1);
    let b_norm = norm2(b);
    if b_norm == S::zero() {
        for v in x.iter_mut() {
            *v = S::zero();
        }
        return Ok(0);
    }
    let target = cfg.rel_tol * b_norm;
    let mut total_iters = 0usize;
    let mut first_cycle = true;

    let mut basis: Vec<Vec<S>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![S::zero(); m]; m + 1];
    let mut cs = vec![S::zero(); m];
    let mut sn = vec![S::zero(); m];
    let mut g = vec![S::zero(); m + 1];
    let mut tmp = vec![S::zero(); n];

    loop {
        // residual of the current iterate
        let mut r = b.to_vec();
        if !first_cycle {
            apply(x, &mut tmp)?;
            total_iters += 1;
            for (ri, ti) in r.iter_mut().zip(&tmp) {
                *ri -= *ti;
            }
        }
        first_cycle = false;
        let beta = norm2(&r);
        if beta <= target {
            return Ok(total_iters);
        }
        scal(&mut r, S::one() / beta);
        basis.clear();
        basis.push(r);
        for gi in g.iter_mut() {
            *gi = S::zero();
        }
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..m {
            apply(&basis[k], &mut tmp)?;
            total_iters += 1;
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hik = crate::linalg::dot(v, &tmp);
                h[i][k] = hik;
                axpy(&mut tmp, -hik, v);
            }
            let hnext = norm2(&tmp);
            h[k + 1][k] = hnext;
            // apply stored Givens rotations to the new column
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + hnext * hnext).sqrt();
            cs[k] = h[k][k] / denom;
            sn[k] = hnext / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;

            let happy = hnext <= S::epsilon() * beta;
            if !happy {
                let mut v = tmp.clone();
                scal(&mut v, S::one() / hnext);
                basis.push(v);
            }
            if g[k + 1].abs() <= target || happy || total_iters >= cfg.max_iters {
                break;
            }
        }

        // back substitution for the Krylov coefficients
        let mut y = vec![S::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for jj in i + 1..k_used {
                s -= h[i][jj] * y[jj];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(x, *yi, &basis[i]);
        }

        if g[k_used].abs() <= target {
            return Ok(total_iters);
        }
        if total_iters >= cfg.max_iters {
            return Err(Error::NonConvergence {
                detail: format!("GMRES hit the iteration cap {}", cfg.max_iters),
                residual_norm: g[k_used].abs().to_f64_lossy(),
            });
        }
    }
}

/// Newton iteration on one nonlinear system. Returns
/// `(newton_iters, krylov_iters)`; `rhs_assemblies` is incremented for every
/// residual evaluation including Jacobian actions.
fn newton_solve<S: Real>(
    residual: &mut dyn FnMut(&[S], &mut [S]) -> Result<()>,
    u: &mut [S],
    cfg: &SolverConfig<S>,
    newton_tol: S,
    rhs_assemblies: &mut u64,
) -> Result<(usize, usize)> {
    let n = u.len();
    let mut r = vec![S::zero(); n];
    residual(u, &mut r)?;
    *rhs_assemblies += 1;
    let mut rnorm = norm2(&r);
    let mut best = rnorm;
    let mut newton_iters = 0;
    let mut krylov_total = 0;
    while rnorm > newton_tol {
        if newton_iters >= cfg.newton_max_iter {
            return Err(Error::NonConvergence {
                detail: format!("Newton hit the iteration cap {}", cfg.newton_max_iter),
                residual_norm: rnorm.to_f64_lossy(),
            });
        }
        // solve J delta = -r, matrix-free
        let mut rhs = r.clone();
        scal(&mut rhs, -S::one());
        let mut delta = vec![S::zero(); n];
        {
            let u_base = u.to_vec();
            let r_base = r.clone();
            let mut apply = |w: &[S], out: &mut [S]| -> Result<()> {
                jacobian_vector_product(residual, &u_base, &r_base, w, out, rhs_assemblies)
            };
            krylov_total += gmres(&mut apply, &rhs, &mut delta, &cfg.krylov)?;
        }
        axpy(u, S::one(), &delta);
        residual(u, &mut r)?;
        *rhs_assemblies += 1;
        rnorm = norm2(&r);
        newton_iters += 1;
        if !rnorm.is_finite() || rnorm > S::of(1e4) * best + S::of(1e4) {
            return Err(Error::NonConvergence {
                detail: "Newton residual diverged".into(),
                residual_norm: rnorm.to_f64_lossy(),
            });
        }
        best = best.min(rnorm);
    }
    Ok((newton_iters, krylov_total))
}

/// Marches timeslab by timeslab; requires an upwind temporal flux so the
/// slabs decouple causally. The guess provides the start iterate per slab.
pub fn solve_march<S: Real, M: PhysicsModel<S>>(
    disc: &Discretization<'_, S, M>,
    guess: &SolutionField<S>,
    cfg: &SolverConfig<S>,
) -> Result<(SolutionField<S>, SolveStats)> {
    solve_march_impl(disc, guess, cfg, cfg.newton_tol)
}

fn solve_march_impl<S: Real, M: PhysicsModel<S>>(
    disc: &Discretization<'_, S, M>,
    guess: &SolutionField<S>,
    cfg: &SolverConfig<S>,
    newton_tol: S,
) -> Result<(SolutionField<S>, SolveStats)> {
    if disc.scheme.temporal_flux() == TemporalFlux::TwoPoint {
        return Err(Error::Config(
            "marching requires an upwind temporal flux; use solve_coupled".into(),
        ));
    }
    let start = Instant::now();
    let mesh = disc.mesh;
    let mut field = guess.clone();
    let mut stats = SolveStats::default();
    let mut ws = disc.workspace();
    let mut below = disc.bc.u0_trace().to_vec();
    for it in 0..mesh.kt {
        let mut u = field.slab_slice(mesh.ks, it).to_vec();
        let mut rhs_count = 0u64;
        let (newton, krylov) = {
            let ws_ref: &mut Workspace<S> = &mut ws;
            let ws_cell = std::cell::RefCell::new(ws_ref);
            let below_ref = &below;
            let mut residual = |x: &[S], out: &mut [S]| -> Result<()> {
                disc.residual_slab(it, x, below_ref, &mut ws_cell.borrow_mut(), out)
            };
            newton_solve(&mut residual, &mut u, cfg, newton_tol, &mut rhs_count)?
        };
        field.slab_slice_mut(mesh.ks, it).copy_from_slice(&u);
        below = disc.top_trace(&u, &mut ws)?;
        stats.newton_iters.push(newton);
        stats.krylov_iters.push(krylov);
        stats.rhs_assemblies.push(rhs_count);
    }
    stats.wall = start.elapsed();
    Ok((field, stats))
}

/// One global Newton solve over all timeslabs; the mode required by the
/// two-point temporal flux. With `warm_start` the guess is replaced by a
/// loosely-converged upwind marching solution.
pub fn solve_coupled<S: Real, M: PhysicsModel<S>>(
    disc: &Discretization<'_, S, M>,
    guess: &SolutionField<S>,
    cfg: &SolverConfig<S>,
) -> Result<(SolutionField<S>, SolveStats)> {
    let start = Instant::now();
    let mut field = guess.clone();
    if cfg.warm_start && disc.scheme.temporal_flux() == TemporalFlux::TwoPoint {
        let upwind = Discretization::new(
            disc.mesh,
            disc.ops,
            disc.model,
            disc.bc,
            crate::residual::Scheme::SplitFormFr(TemporalFlux::Upwind),
        );
        let (warm, _) = solve_march_impl(&upwind, &field, cfg, cfg.warm_start_tol)?;
        field = warm;
    }
    let mut stats = SolveStats::default();
    let mut ws = disc.workspace();
    let mut rhs_count = 0u64;
    let mut u = field.as_slice().to_vec();
    let (newton, krylov) = {
        let ws_ref: &mut Workspace<S> = &mut ws;
        let ws_cell = std::cell::RefCell::new(ws_ref);
        let n_elems = disc.mesh.n_elems();
        let n_states = disc.n_states();
        let n_modes = disc.ops.n_soln();
        let mut residual = |x: &[S], out: &mut [S]| -> Result<()> {
            let mut f = SolutionField::zeros(n_elems, n_states, n_modes);
            f.as_mut_slice().copy_from_slice(x);
            disc.residual_full(&f, &mut ws_cell.borrow_mut(), out)
        };
        newton_solve(&mut residual, &mut u, cfg, cfg.newton_tol, &mut rhs_count)?
    };
    field.as_mut_slice().copy_from_slice(&u);
    stats.newton_iters.push(newton);
    stats.krylov_iters.push(krylov);
    stats.rhs_assemblies.push(rhs_count);
    stats.wall = start.elapsed();
    Ok((field, stats))
}

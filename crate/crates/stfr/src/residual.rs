//! Fully-discrete per-element residuals of the two space-time schemes.
//!
//! Both schemes act on the same data: modal coefficients per element and
//! state. The divergence form projects the physical fluxes onto the solution
//! basis and differentiates them; it is exact for linear fluxes and drives
//! the advection studies. The split form evaluates skew-symmetric flux
//! differencing with two-point fluxes on entropy-projected states in both
//! directions; it is the nonlinearly stable scheme. Numerical fluxes couple
//! neighbors: periodic in space, Dirichlet data at `t = 0`, pure upwind
//! (outflow) at `t = T`, and either upwind or two-point coupling at interior
//! temporal interfaces.
//!
//! Scaling: reference fluxes carry the face Jacobian, differentiation and
//! lifting carry the inverse (filtered) mass matrices, and the assembled
//! result divides by the volume Jacobian once; manufactured sources then
//! enter as plain interpolants at the solution nodes.

use crate::mesh::{SpaceTimeMesh, FACE_T_MAX, FACE_T_MIN, FACE_X_MAX, FACE_X_MIN};
use crate::operators::{Dir, OperatorSet};
use crate::physics::PhysicsModel;
use crate::{Error, Real, Result};

/// Temporal interface coupling of the split-form scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalFlux {
    /// Pure upwinding: each slab sees only the slab below.
    Upwind,
    /// Entropy-conserving two-point state at interior temporal interfaces;
    /// couples all timeslabs.
    TwoPoint,
}

/// Which residual form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Projected-flux divergence form (energy-stable FR for linear fluxes).
    DivergenceFr,
    /// Skew-symmetric split form with entropy projection.
    SplitFormFr(TemporalFlux),
}

impl Scheme {
    pub fn temporal_flux(&self) -> TemporalFlux {
        match self {
            Scheme::DivergenceFr => TemporalFlux::Upwind,
            Scheme::SplitFormFr(t) => *t,
        }
    }

    pub fn is_split_form(&self) -> bool {
        matches!(self, Scheme::SplitFormFr(_))
    }
}

/// Modal coefficients per element and conserved state.
#[derive(Debug, Clone)]
pub struct SolutionField<S> {
    pub n_elems: usize,
    pub n_states: usize,
    pub n_modes: usize,
    data: Vec<S>,
}

impl<S: Real> SolutionField<S> {
    pub fn zeros(n_elems: usize, n_states: usize, n_modes: usize) -> Self {
        SolutionField {
            n_elems,
            n_states,
            n_modes,
            data: vec![S::zero(); n_elems * n_states * n_modes],
        }
    }

    pub fn coeffs(&self, elem: usize, state: usize) -> &[S] {
        let o = (elem * self.n_states + state) * self.n_modes;
        &self.data[o..o + self.n_modes]
    }

    pub fn coeffs_mut(&mut self, elem: usize, state: usize) -> &mut [S] {
        let o = (elem * self.n_states + state) * self.n_modes;
        &mut self.data[o..o + self.n_modes]
    }

    pub fn elem_block(&self, elem: usize) -> &[S] {
        let w = self.n_states * self.n_modes;
        &self.data[elem * w..(elem + 1) * w]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn slab_slice(&self, ks: usize, it: usize) -> &[S] {
        let w = self.n_states * self.n_modes * ks;
        &self.data[it * w..(it + 1) * w]
    }

    pub fn slab_slice_mut(&mut self, ks: usize, it: usize) -> &mut [S] {
        let w = self.n_states * self.n_modes * ks;
        &mut self.data[it * w..(it + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Field whose coefficients interpolate `f(x)` at the solution nodes,
    /// constant in the temporal direction (the usual initial guess).
    pub fn from_initial(
        mesh: &SpaceTimeMesh<S>,
        ops: &OperatorSet<S>,
        n_states: usize,
        f: impl Fn(S, &mut [S]),
    ) -> Self {
        let n1 = ops.n_soln_1d();
        let mut field = Self::zeros(mesh.n_elems(), n_states, ops.n_soln());
        let mut u = vec![S::zero(); n_states];
        for flat in 0..mesh.n_elems() {
            let e = mesh.elem(flat);
            for a in 0..n1 {
                let x = mesh.x_of(e.is, ops.soln_rule_1d.nodes[a]);
                f(x, &mut u);
                for b in 0..n1 {
                    for s in 0..n_states {
                        field.coeffs_mut(flat, s)[a * n1 + b] = u[s];
                    }
                }
            }
        }
        field
    }
}

/// Dirichlet data at `t = 0` and the source toggle.
#[derive(Debug, Clone)]
pub struct BoundaryData<S> {
    /// Initial state at the temporal-face quadrature nodes of each spatial
    /// column, layout `[is][node][state]`.
    u0_face: Vec<S>,
    pub with_source: bool,
    n_states: usize,
    n_f: usize,
}

impl<S: Real> BoundaryData<S> {
    pub fn new(
        mesh: &SpaceTimeMesh<S>,
        ops: &OperatorSet<S>,
        n_states: usize,
        with_source: bool,
        ic: impl Fn(S, &mut [S]),
    ) -> Self {
        let n_f = ops.n_f();
        let mut u0_face = vec![S::zero(); mesh.ks * n_f * n_states];
        let mut u = vec![S::zero(); n_states];
        for is in 0..mesh.ks {
            for k in 0..n_f {
                let x = mesh.x_of(is, ops.flux_rule_1d.nodes[k]);
                ic(x, &mut u);
                let o = (is * n_f + k) * n_states;
                u0_face[o..o + n_states].copy_from_slice(&u);
            }
        }
        BoundaryData { u0_face, with_source, n_states, n_f }
    }

    /// Dirichlet data from the model's exact solution at `t = 0`; the
    /// manufactured source is switched on when the model has one.
    pub fn from_exact<M: PhysicsModel<S>>(
        mesh: &SpaceTimeMesh<S>,
        ops: &OperatorSet<S>,
        model: &M,
    ) -> Self {
        let with_source = model.has_source();
        Self::new(mesh, ops, model.n_states(), with_source, |x, out| {
            model.exact_solution(x, S::zero(), out)
        })
    }

    /// Initial state at face node `k` of spatial column `is`.
    pub fn u0(&self, is: usize, k: usize) -> &[S] {
        let o = (is * self.n_f + k) * self.n_states;
        &self.u0_face[o..o + self.n_states]
    }

    /// The whole `t = 0` trace in `[is][node][state]` layout.
    pub fn u0_trace(&self) -> &[S] {
        &self.u0_face
    }
}

/// Scratch buffers reused across residual evaluations.
#[derive(Debug, Clone)]
pub struct Workspace<S> {
    store: PhaseStore<S>,
    scr: Scratch<S>,
}

/// Per-element data produced in the exchange phase and read during assembly.
#[derive(Debug, Clone)]
struct PhaseStore<S> {
    /// Split form: states at hybrid nodes, node-major.
    utilde: Vec<S>,
    /// Divergence form: state traces at face nodes, node-major.
    traces: Vec<S>,
    /// Divergence form: projected reference flux coefficients, state-major.
    ghat_t: Vec<S>,
    ghat_s: Vec<S>,
}

#[derive(Debug, Clone)]
struct Scratch<S> {
    u_q_state: Vec<S>,
    nodes_scratch: Vec<S>,
    tmp_nq: Vec<S>,
    tmp_nq2: Vec<S>,
    tmp_soln: Vec<S>,
    tmp_face: Vec<S>,
    vhat: Vec<S>,
    g_vol: Vec<S>,
    g_face: Vec<S>,
    fstar_t: Vec<S>,
    fstar_s: Vec<S>,
    state_a: Vec<S>,
    state_b: Vec<S>,
    flux_buf: Vec<S>,
}

/// One problem setup: mesh, operators, physics, boundary data, scheme.
pub struct Discretization<'a, S, M> {
    pub mesh: &'a SpaceTimeMesh<S>,
    pub ops: &'a OperatorSet<S>,
    pub model: &'a M,
    pub bc: &'a BoundaryData<S>,
    pub scheme: Scheme,
    /// Interpolated source values for every element (empty if unused).
    source: Vec<S>,
}

impl<'a, S: Real, M: PhysicsModel<S>> Discretization<'a, S, M> {
    pub fn new(
        mesh: &'a SpaceTimeMesh<S>,
        ops: &'a OperatorSet<S>,
        model: &'a M,
        bc: &'a BoundaryData<S>,
        scheme: Scheme,
    ) -> Self {
        let ns = model.n_states();
        let n1 = ops.n_soln_1d();
        let mut source = Vec::new();
        if bc.with_source && model.has_source() {
            source = vec![S::zero(); mesh.n_elems() * ns * ops.n_soln()];
            let mut q = vec![S::zero(); ns];
            for flat in 0..mesh.n_elems() {
                let e = mesh.elem(flat);
                for a in 0..n1 {
                    let x = mesh.x_of(e.is, ops.soln_rule_1d.nodes[a]);
                    for b in 0..n1 {
                        let t = mesh.t_of(e.it, ops.soln_rule_1d.nodes[b]);
                        model.source(x, t, &mut q);
                        for s in 0..ns {
                            source[(flat * ns + s) * ops.n_soln() + a * n1 + b] = q[s];
                        }
                    }
                }
            }
        }
        Discretization { mesh, ops, model, bc, scheme, source }
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    /// Degrees of freedom of one timeslab.
    pub fn slab_dofs(&self) -> usize {
        self.mesh.ks * self.n_states() * self.ops.n_soln()
    }

    pub fn total_dofs(&self) -> usize {
        self.slab_dofs() * self.mesh.kt
    }

    pub fn workspace(&self) -> Workspace<S> {
        self.workspace_for(self.mesh.n_elems())
    }

    fn workspace_for(&self, scope_elems: usize) -> Workspace<S> {
        let ops = self.ops;
        let ns = self.n_states();
        let nq = ops.n_q();
        let nh = ops.n_hybrid();
        let nf4 = 4 * ops.n_f();
        let split = self.scheme.is_split_form();
        Workspace {
            store: PhaseStore {
                utilde: if split { vec![S::zero(); scope_elems * nh * ns] } else { Vec::new() },
                traces: if split { Vec::new() } else { vec![S::zero(); scope_elems * nf4 * ns] },
                ghat_t: if split {
                    Vec::new()
                } else {
                    vec![S::zero(); scope_elems * ns * ops.n_soln()]
                },
                ghat_s: if split {
                    Vec::new()
                } else {
                    vec![S::zero(); scope_elems * ns * ops.n_soln()]
                },
            },
            scr: Scratch {
                u_q_state: vec![S::zero(); ns * nq],
                nodes_scratch: vec![S::zero(); nh * ns],
                tmp_nq: vec![S::zero(); nq],
                tmp_nq2: vec![S::zero(); nq],
                tmp_soln: vec![S::zero(); ops.n_soln()],
                tmp_face: vec![S::zero(); nf4],
                vhat: vec![S::zero(); ops.n_soln()],
                g_vol: vec![S::zero(); nq * ns],
                g_face: vec![S::zero(); nf4 * ns],
                fstar_t: vec![S::zero(); nf4 * ns],
                fstar_s: vec![S::zero(); nf4 * ns],
                state_a: vec![S::zero(); ns],
                state_b: vec![S::zero(); ns],
                flux_buf: vec![S::zero(); ns],
            },
        }
    }

    /// Residual of the whole field; the only mode that supports two-point
    /// temporal coupling.
    pub fn residual_full(
        &self,
        field: &SolutionField<S>,
        ws: &mut Workspace<S>,
        out: &mut [S],
    ) -> Result<()> {
        if field.n_elems != self.mesh.n_elems()
            || field.n_states != self.n_states()
            || field.n_modes != self.ops.n_soln()
        {
            return Err(Error::LengthMismatch {
                expected: self.total_dofs(),
                got: field.as_slice().len(),
            });
        }
        self.assemble(field.as_slice(), 0, self.mesh.kt, self.bc.u0_trace(), ws, out)
    }

    /// Residual of one timeslab given the frozen trace below it. Requires
    /// upwind temporal coupling.
    pub fn residual_slab(
        &self,
        it: usize,
        slab_coeffs: &[S],
        below_trace: &[S],
        ws: &mut Workspace<S>,
        out: &mut [S],
    ) -> Result<()> {
        if self.scheme.temporal_flux() == TemporalFlux::TwoPoint {
            return Err(Error::Config(
                "two-point temporal flux couples timeslabs; use the coupled solve".into(),
            ));
        }
        if slab_coeffs.len() != self.slab_dofs() {
            return Err(Error::LengthMismatch {
                expected: self.slab_dofs(),
                got: slab_coeffs.len(),
            });
        }
        self.assemble(slab_coeffs, it, 1, below_trace, ws, out)
    }

    /// Trace at the top (`t`-max) face of a slab, `[is][node][state]` layout;
    /// entropy-projected for the split form, interpolated otherwise.
    pub fn top_trace(&self, slab_coeffs: &[S], ws: &mut Workspace<S>) -> Result<Vec<S>> {
        self.boundary_trace(slab_coeffs, FACE_T_MAX, ws)
    }

    /// Trace at the bottom (`t`-min) face of a slab.
    pub fn bottom_trace(&self, slab_coeffs: &[S], ws: &mut Workspace<S>) -> Result<Vec<S>> {
        self.boundary_trace(slab_coeffs, FACE_T_MIN, ws)
    }

    fn boundary_trace(
        &self,
        slab_coeffs: &[S],
        face: usize,
        ws: &mut Workspace<S>,
    ) -> Result<Vec<S>> {
        let ns = self.n_states();
        let n_f = self.ops.n_f();
        self.phase_states(slab_coeffs, self.mesh.ks, ws)?;
        let mut out = vec![S::zero(); self.mesh.ks * n_f * ns];
        for is in 0..self.mesh.ks {
            for k in 0..n_f {
                let src = self.trace_at(&ws.store, is, face, k);
                let dst = (is * n_f + k) * ns;
                out[dst..dst + ns].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Entropy projection of one element: states at all hybrid nodes,
    /// node-major output of length `n_hybrid * n_states`.
    pub fn entropy_project_element(&self, elem_coeffs: &[S], utilde_out: &mut [S]) -> Result<()> {
        let mut ws = self.workspace_for(1);
        // reuse the split-form phase regardless of the configured scheme
        let ns = self.n_states();
        let nh = self.ops.n_hybrid();
        if ws.store.utilde.is_empty() {
            ws.store.utilde = vec![S::zero(); nh * ns];
        }
        let Workspace { ref mut store, ref mut scr } = ws;
        self.project_element(elem_coeffs, store, scr, 0)?;
        utilde_out.copy_from_slice(&ws.store.utilde[..nh * ns]);
        Ok(())
    }

    // --------------------------------------------------------------- phase 1

    fn phase_states(&self, coeffs: &[S], n_scope: usize, ws: &mut Workspace<S>) -> Result<()> {
        let ns = self.n_states();
        let w = ns * self.ops.n_soln();
        let Workspace { ref mut store, ref mut scr } = *ws;
        if self.scheme.is_split_form() {
            for e in 0..n_scope {
                self.project_element(&coeffs[e * w..(e + 1) * w], store, scr, e)?;
            }
        } else {
            for e in 0..n_scope {
                self.divergence_fluxes(&coeffs[e * w..(e + 1) * w], store, scr, e)?;
            }
        }
        Ok(())
    }

    /// Entropy projection of one element into `store.utilde[scope_idx]`:
    /// entropy variables evaluated at the solution nodes (their coefficients
    /// on the nodal solution basis), re-expanded at the hybrid nodes, then
    /// mapped back to conservative variables. With collocated solution and
    /// flux nodes this coincides with the quadrature-based projection.
    fn project_element(
        &self,
        coeffs: &[S],
        store: &mut PhaseStore<S>,
        scr: &mut Scratch<S>,
        scope_idx: usize,
    ) -> Result<()> {
        let ops = self.ops;
        let model = self.model;
        let ns = self.n_states();
        let nq = ops.n_q();
        let nh = ops.n_hybrid();
        let n_soln = ops.n_soln();
        let base = scope_idx * nh * ns;
        // entropy-variable coefficients from the solution-node states
        for node in 0..n_soln {
            for s in 0..ns {
                scr.state_a[s] = coeffs[s * n_soln + node];
            }
            model.entropy_vars(&scr.state_a, &mut scr.state_b);
            for s in 0..ns {
                scr.nodes_scratch[node * ns + s] = scr.state_b[s];
            }
        }
        // re-expand at the volume and face nodes
        for s in 0..ns {
            for node in 0..n_soln {
                scr.vhat[node] = scr.nodes_scratch[node * ns + s];
            }
            ops.chi_q.matvec(&scr.vhat, &mut scr.tmp_nq2);
            ops.chi_f.matvec(&scr.vhat, &mut scr.tmp_face);
            for node in 0..nq {
                store.utilde[base + node * ns + s] = scr.tmp_nq2[node];
            }
            for k in 0..4 * ops.n_f() {
                store.utilde[base + (nq + k) * ns + s] = scr.tmp_face[k];
            }
        }
        // map back to conservative variables in place
        for node in 0..nh {
            let o = base + node * ns;
            scr.state_a.copy_from_slice(&store.utilde[o..o + ns]);
            model.state_from_entropy_vars(&scr.state_a, &mut scr.state_b);
            model.check_admissible(&scr.state_b)?;
            store.utilde[o..o + ns].copy_from_slice(&scr.state_b);
        }
        Ok(())
    }

    /// Divergence form phase 1: projected reference fluxes and state traces.
    fn divergence_fluxes(
        &self,
        coeffs: &[S],
        store: &mut PhaseStore<S>,
        scr: &mut Scratch<S>,
        scope_idx: usize,
    ) -> Result<()> {
        let ops = self.ops;
        let model = self.model;
        let ns = self.n_states();
        let nq = ops.n_q();
        let n_soln = ops.n_soln();
        let nf4 = 4 * ops.n_f();
        let j1d = ops.geom.j_1d();
        for s in 0..ns {
            ops.chi_q.matvec(&coeffs[s * n_soln..(s + 1) * n_soln], &mut scr.tmp_nq);
            scr.u_q_state[s * nq..(s + 1) * nq].copy_from_slice(&scr.tmp_nq);
        }
        // spatial flux at the volume nodes, state-major in nodes_scratch
        for node in 0..nq {
            for s in 0..ns {
                scr.state_a[s] = scr.u_q_state[s * nq + node];
            }
            model.flux_s(&scr.state_a, &mut scr.state_b);
            for s in 0..ns {
                scr.nodes_scratch[s * nq + node] = scr.state_b[s];
            }
        }
        let gbase = scope_idx * ns * n_soln;
        for s in 0..ns {
            // temporal flux is the state itself
            ops.pi_q.matvec(&scr.u_q_state[s * nq..(s + 1) * nq], &mut scr.tmp_soln);
            for (m, v) in scr.tmp_soln.iter().enumerate() {
                store.ghat_t[gbase + s * n_soln + m] = j1d * *v;
            }
            ops.pi_q.matvec(&scr.nodes_scratch[s * nq..(s + 1) * nq], &mut scr.tmp_soln);
            for (m, v) in scr.tmp_soln.iter().enumerate() {
                store.ghat_s[gbase + s * n_soln + m] = j1d * *v;
            }
            // state trace at the face nodes
            ops.chi_f.matvec(&coeffs[s * n_soln..(s + 1) * n_soln], &mut scr.tmp_face);
            let tbase = scope_idx * nf4 * ns;
            for k in 0..nf4 {
                store.traces[tbase + k * ns + s] = scr.tmp_face[k];
            }
        }
        Ok(())
    }

    /// State trace at face node `k` of face `face` of scope element
    /// `scope_idx` (projected for the split form).
    fn trace_at<'w>(
        &self,
        store: &'w PhaseStore<S>,
        scope_idx: usize,
        face: usize,
        k: usize,
    ) -> &'w [S] {
        let ns = self.n_states();
        let n_f = self.ops.n_f();
        if self.scheme.is_split_form() {
            let nh = self.ops.n_hybrid();
            let o = scope_idx * nh * ns + (self.ops.n_q() + face * n_f + k) * ns;
            &store.utilde[o..o + ns]
        } else {
            let o = scope_idx * 4 * n_f * ns + (face * n_f + k) * ns;
            &store.traces[o..o + ns]
        }
    }

    // --------------------------------------------------------------- phase 2

    /// Assembles the residual of `n_slabs` consecutive slabs starting at
    /// `first_slab`; `below` is the `[is][node][state]` trace under the first
    /// slab (the Dirichlet data when `first_slab == 0`).
    fn assemble(
        &self,
        coeffs: &[S],
        first_slab: usize,
        n_slabs: usize,
        below: &[S],
        ws: &mut Workspace<S>,
        out: &mut [S],
    ) -> Result<()> {
        let ops = self.ops;
        let ks = self.mesh.ks;
        let ns = self.n_states();
        let n_f = ops.n_f();
        let n_soln = ops.n_soln();
        let n_scope = n_slabs * ks;
        debug_assert_eq!(coeffs.len(), n_scope * ns * n_soln);
        debug_assert_eq!(out.len(), coeffs.len());
        debug_assert_eq!(below.len(), ks * n_f * ns);

        self.phase_states(coeffs, n_scope, ws)?;
        let Workspace { ref store, ref mut scr } = *ws;

        let j = ops.geom.jacobian();
        let j1d = ops.geom.j_1d();
        let inv_j = S::one() / j;
        let two_point_mode = self.scheme.temporal_flux() == TemporalFlux::TwoPoint;

        for e in 0..n_scope {
            let is = e % ks;
            let it_local = e / ks;
            let it_global = first_slab + it_local;
            let left = it_local * ks + (is + ks - 1) % ks;
            let right = it_local * ks + (is + 1) % ks;

            // ---- numerical fluxes, state-major [s * 4nf + face_node]
            for v in scr.fstar_s.iter_mut() {
                *v = S::zero();
            }
            for v in scr.fstar_t.iter_mut() {
                *v = S::zero();
            }
            for k in 0..n_f {
                // x-min face: left neighbor's x-max trace against our x-min
                {
                    let ul = self.trace_at(store, left, FACE_X_MAX, k);
                    let ur = self.trace_at(store, e, FACE_X_MIN, k);
                    scr.state_a.copy_from_slice(ul);
                    scr.state_b.copy_from_slice(ur);
                }
                self.model.num_flux_s(&scr.state_a, &scr.state_b, &mut scr.flux_buf);
                for s in 0..ns {
                    scr.fstar_s[s * 4 * n_f + FACE_X_MIN * n_f + k] = j1d * scr.flux_buf[s];
                }
                // x-max face
                {
                    let ul = self.trace_at(store, e, FACE_X_MAX, k);
                    let ur = self.trace_at(store, right, FACE_X_MIN, k);
                    scr.state_a.copy_from_slice(ul);
                    scr.state_b.copy_from_slice(ur);
                }
                self.model.num_flux_s(&scr.state_a, &scr.state_b, &mut scr.flux_buf);
                for s in 0..ns {
                    scr.fstar_s[s * 4 * n_f + FACE_X_MAX * n_f + k] = j1d * scr.flux_buf[s];
                }

                // t-min face
                if it_local == 0 {
                    let o = (is * n_f + k) * ns;
                    scr.state_a.copy_from_slice(&below[o..o + ns]);
                    if two_point_mode && it_global > 0 {
                        scr.state_b.copy_from_slice(self.trace_at(store, e, FACE_T_MIN, k));
                        self.model.two_point_state_t(&scr.state_a, &scr.state_b, &mut scr.flux_buf);
                    } else {
                        // Dirichlet data at t = 0, or frozen upwind trace
                        scr.flux_buf.copy_from_slice(&scr.state_a);
                    }
                } else {
                    let lower = (it_local - 1) * ks + is;
                    scr.state_a.copy_from_slice(self.trace_at(store, lower, FACE_T_MAX, k));
                    if two_point_mode {
                        scr.state_b.copy_from_slice(self.trace_at(store, e, FACE_T_MIN, k));
                        self.model.two_point_state_t(&scr.state_a, &scr.state_b, &mut scr.flux_buf);
                    } else {
                        scr.flux_buf.copy_from_slice(&scr.state_a);
                    }
                }
                for s in 0..ns {
                    scr.fstar_t[s * 4 * n_f + FACE_T_MIN * n_f + k] = j1d * scr.flux_buf[s];
                }

                // t-max face: upwind from our own trace, or two-point against
                // the slab above; the final time is always pure outflow
                scr.state_a.copy_from_slice(self.trace_at(store, e, FACE_T_MAX, k));
                if two_point_mode && it_global + 1 < self.mesh.kt {
                    let upper = (it_local + 1) * ks + is;
                    debug_assert!(upper < n_scope, "two-point coupling needs the full field");
                    scr.state_b.copy_from_slice(self.trace_at(store, upper, FACE_T_MIN, k));
                    self.model.two_point_state_t(&scr.state_a, &scr.state_b, &mut scr.flux_buf);
                } else {
                    scr.flux_buf.copy_from_slice(&scr.state_a);
                }
                for s in 0..ns {
                    scr.fstar_t[s * 4 * n_f + FACE_T_MAX * n_f + k] = j1d * scr.flux_buf[s];
                }
            }

            // ---- volume terms + lifting into the output block
            let out_block = &mut out[e * ns * n_soln..(e + 1) * ns * n_soln];
            match self.scheme {
                Scheme::SplitFormFr(_) => {
                    for v in scr.g_vol.iter_mut() {
                        *v = S::zero();
                    }
                    for v in scr.g_face.iter_mut() {
                        *v = S::zero();
                    }
                    let base = e * ops.n_hybrid() * ns;
                    let nh = ops.n_hybrid();
                    let utilde = &store.utilde[base..base + nh * ns];
                    split_form_gather(
                        ops,
                        self.model,
                        Dir::Time,
                        utilde,
                        j1d,
                        &mut scr.g_vol,
                        &mut scr.g_face,
                        &mut scr.flux_buf,
                    );
                    for s in 0..ns {
                        let r = &mut out_block[s * n_soln..(s + 1) * n_soln];
                        ops.minv_chi_q_t.matvec(&scr.g_vol[s * ops.n_q()..(s + 1) * ops.n_q()], r);
                        ops.minv_chi_f_t.matvec_acc(
                            &scr.g_face[s * 4 * n_f..(s + 1) * 4 * n_f],
                            S::one(),
                            r,
                        );
                        ops.l_t.matvec_acc(&scr.fstar_t[s * 4 * n_f..(s + 1) * 4 * n_f], S::one(), r);
                    }
                    for v in scr.g_vol.iter_mut() {
                        *v = S::zero();
                    }
                    for v in scr.g_face.iter_mut() {
                        *v = S::zero();
                    }
                    split_form_gather(
                        ops,
                        self.model,
                        Dir::Space,
                        utilde,
                        j1d,
                        &mut scr.g_vol,
                        &mut scr.g_face,
                        &mut scr.flux_buf,
                    );
                    for s in 0..ns {
                        let r = &mut out_block[s * n_soln..(s + 1) * n_soln];
                        ops.mkinv_chi_q_t.matvec_acc(
                            &scr.g_vol[s * ops.n_q()..(s + 1) * ops.n_q()],
                            S::one(),
                            r,
                        );
                        ops.mkinv_chi_f_t.matvec_acc(
                            &scr.g_face[s * 4 * n_f..(s + 1) * 4 * n_f],
                            S::one(),
                            r,
                        );
                        ops.l_fr_s
                            .matvec_acc(&scr.fstar_s[s * 4 * n_f..(s + 1) * 4 * n_f], S::one(), r);
                    }
                }
                Scheme::DivergenceFr => {
                    let gbase = e * ns * n_soln;
                    for s in 0..ns {
                        let r = &mut out_block[s * n_soln..(s + 1) * n_soln];
                        let g_t = &store.ghat_t[gbase + s * n_soln..gbase + (s + 1) * n_soln];
                        let g_s = &store.ghat_s[gbase + s * n_soln..gbase + (s + 1) * n_soln];
                        // volume: derivative of the projected fluxes
                        ops.chi_q.matvec(g_t, &mut scr.tmp_nq);
                        ops.d_t.matvec(&scr.tmp_nq, r);
                        ops.chi_q.matvec(g_s, &mut scr.tmp_nq);
                        ops.d_fr_s.matvec_acc(&scr.tmp_nq, S::one(), r);
                        // faces: internal trace minus numerical flux
                        ops.chi_f.matvec(g_t, &mut scr.tmp_face);
                        for (k, v) in scr.tmp_face.iter_mut().enumerate() {
                            *v -= scr.fstar_t[s * 4 * n_f + k];
                        }
                        ops.l_t.matvec_acc(&scr.tmp_face, -S::one(), r);
                        ops.chi_f.matvec(g_s, &mut scr.tmp_face);
                        for (k, v) in scr.tmp_face.iter_mut().enumerate() {
                            *v -= scr.fstar_s[s * 4 * n_f + k];
                        }
                        ops.l_fr_s.matvec_acc(&scr.tmp_face, -S::one(), r);
                    }
                }
            }

            for v in out_block.iter_mut() {
                *v *= inv_j;
            }
            if !self.source.is_empty() {
                let flat = it_global * ks + is;
                let q = &self.source[flat * ns * n_soln..(flat + 1) * ns * n_soln];
                for (r, qv) in out_block.iter_mut().zip(q) {
                    *r -= *qv;
                }
            }
        }
        Ok(())
    }
}

/// Accumulates the skew-symmetric flux-differencing term of one direction:
/// for each hybrid node `i`, `sum_j A_ij F_ij` with `A = Qtilde - Qtilde^T`
/// and `F_ij` the two-point function scaled by the face Jacobian. Only the
/// structurally nonzero couplings of `A` are visited: same-line volume pairs
/// and volume-face pairs of the two faces normal to the direction. Outputs
/// are state-major (`[s * N_q + node]`, `[s * 4 N_f + face_node]`).
#[allow(clippy::too_many_arguments)]
pub fn split_form_gather<S: Real, M: PhysicsModel<S>>(
    ops: &OperatorSet<S>,
    model: &M,
    dir: Dir,
    utilde: &[S],
    j1d: S,
    g_vol: &mut [S],
    g_face: &mut [S],
    flux_buf: &mut [S],
) {
    let n1 = ops.n_flux_1d();
    let nq = ops.n_q();
    let ns = model.n_states();
    let w1 = &ops.flux_rule_1d.weights;
    let state = |node: usize| &utilde[node * ns..(node + 1) * ns];
    let two_point = |a: &[S], b: &[S], out: &mut [S]| match dir {
        Dir::Space => model.two_point_flux_s(a, b, out),
        Dir::Time => model.two_point_state_t(a, b, out),
    };

    // volume pairs along the differentiation direction
    for line in 0..n1 {
        for i1 in 0..n1 {
            for i2 in i1 + 1..n1 {
                let coef = w1[line] * ops.skew_1d[(i1, i2)];
                if coef == S::zero() {
                    continue;
                }
                let (na, nb) = match dir {
                    Dir::Space => (i1 * n1 + line, i2 * n1 + line),
                    Dir::Time => (line * n1 + i1, line * n1 + i2),
                };
                two_point(state(na), state(nb), flux_buf);
                for s in 0..ns {
                    let val = coef * j1d * flux_buf[s];
                    g_vol[s * nq + na] += val;
                    g_vol[s * nq + nb] -= val;
                }
            }
        }
    }

    // volume-face pairs on the two faces normal to the direction
    let (face_lo, face_hi) = match dir {
        Dir::Space => (FACE_X_MIN, FACE_X_MAX),
        Dir::Time => (FACE_T_MIN, FACE_T_MAX),
    };
    let n_f = ops.n_f();
    for k in 0..n1 {
        for i in 0..n1 {
            let (vol_node, phi_lo, phi_hi) = match dir {
                Dir::Space => (i * n1 + k, ops.phi_minus[i], ops.phi_plus[i]),
                Dir::Time => (k * n1 + i, ops.phi_minus[i], ops.phi_plus[i]),
            };
            // low face, normal -1
            let coef = -w1[k] * phi_lo;
            if coef != S::zero() {
                let fnode = face_lo * n_f + k;
                two_point(state(vol_node), state(nq + fnode), flux_buf);
                for s in 0..ns {
                    let val = coef * j1d * flux_buf[s];
                    g_vol[s * nq + vol_node] += val;
                    g_face[s * 4 * n_f + fnode] -= val;
                }
            }
            // high face, normal +1
            let coef = w1[k] * phi_hi;
            if coef != S::zero() {
                let fnode = face_hi * n_f + k;
                two_point(state(vol_node), state(nq + fnode), flux_buf);
                for s in 0..ns {
                    let val = coef * j1d * flux_buf[s];
                    g_vol[s * nq + vol_node] += val;
                    g_face[s * 4 * n_f + fnode] -= val;
                }
            }
        }
    }
}

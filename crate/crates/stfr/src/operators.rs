//! Reference-element operators for one `(p, node choice, c, geometry)` setup.
//!
//! The 1D+1 element carries three node sets: `(p+1)^2` solution nodes,
//! `(p+1+N_OI)^2` flux quadrature nodes, and `p+1+N_OI` face nodes per face
//! (the 1D flux rule). All operators are assembled from the 1D factors by
//! tensor product with the `x`-index major, i.e. flat index `ix * n + it`.
//!
//! The flux-reconstruction filter acts in the spatial direction only. In one
//! dimension it is `c * (D^p)^T M (D^p)` on the solution basis; the 1D+1
//! filter is its tensor product with the temporal mass factor. The filter is
//! stored with the element Jacobian folded in (`K = J * c * K1 (x) M1`), so
//! the filtered mass matrix `M + K = J (M1 (x) M1 + c K1 (x) M1)` applies the
//! same reference-element correction on every grid level. Differential and
//! lifting operators are kept in reference normalization; residual assembly
//! divides by the Jacobian once.

use crate::basis::{make_rule, LagrangeBasis1D, QuadKind, QuadratureRule1D};
use crate::linalg::{LuFactor, Mat};
use crate::{Error, Real, Result};

/// Geometry of one rectangular space-time element.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry<S> {
    pub dx: S,
    pub dt: S,
}

impl<S: Real> ElementGeometry<S> {
    pub fn new(dx: S, dt: S) -> Result<Self> {
        if dx <= S::zero() || dt <= S::zero() {
            return Err(Error::Config("element dimensions must be positive".into()));
        }
        Ok(ElementGeometry { dx, dt })
    }

    /// Jacobian determinant of the reference-to-physical map.
    pub fn jacobian(self) -> S {
        self.dx * self.dt / S::of(4.0)
    }

    /// Face Jacobian; its square equals the volume Jacobian.
    pub fn j_1d(self) -> S {
        (self.dx * self.dt).sqrt() / S::of(2.0)
    }
}

/// The correction parameter recovering plain DG.
pub fn c_dg<S: Real>() -> S {
    S::zero()
}

/// Correction parameter recovering Huynh's g2 scheme for degree `p`, in the
/// normalization of the filter `K_1D = c (D^p)^T M_1D (D^p)` on a Legendre
/// reference element.
///
/// Derivation: the energy-stable correction family is parameterized by
/// `eta = c (2p+1) (a_p p!)^2` with `a_p = (2p)!/(2^p (p!)^2)`; Huynh's g2
/// corresponds to `eta = (p+1)/p`, giving
/// `c = (p+1) / (p (2p+1) (a_p p!)^2)`.
/// The tabulated values are half the ones often quoted for the alternate
/// convention that keeps a factor 1/2 inside the broken-norm integral; the
/// unit test below re-derives them from the g2 correction function itself.
pub fn c_hu<S: Real>(p: usize) -> S {
    assert!(p >= 1, "c_hu requires p >= 1");
    // b_p = a_p * p! = (2p)!/(2^p p!) computed as an exact product
    let mut b = 1.0f64;
    for k in p + 1..=2 * p {
        b *= k as f64;
    }
    b /= 2.0f64.powi(p as i32);
    S::of((p as f64 + 1.0) / (p as f64 * (2.0 * p as f64 + 1.0) * b * b))
}

/// Direction selector for the skew-symmetric hybrid operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Space,
    Time,
}

/// Result of the summation-by-parts check.
#[derive(Debug, Clone, Copy)]
pub struct SbpReport<S> {
    /// Max scaled residual of the spatial identity (faces at `x = -1, +1`).
    pub residual_s: S,
    /// Max scaled residual of the temporal identity (faces at `t = -1, +1`).
    pub residual_t: S,
}

/// All reference-element matrices for one configuration.
#[derive(Debug, Clone)]
pub struct OperatorSet<S> {
    pub p: usize,
    pub n_oi: usize,
    pub c: S,
    pub soln_kind: QuadKind,
    pub flux_kind: QuadKind,
    pub geom: ElementGeometry<S>,

    // 1D factors
    pub soln_rule_1d: QuadratureRule1D<S>,
    pub flux_rule_1d: QuadratureRule1D<S>,
    pub soln_basis_1d: LagrangeBasis1D<S>,
    pub flux_basis_1d: LagrangeBasis1D<S>,
    /// Solution basis at the 1D flux nodes, `(n_f1 x n_s1)`.
    pub v_sq: Mat<S>,
    pub dv_sq: Mat<S>,
    /// Flux-basis nodal differentiation matrix, `(n_f1 x n_f1)`.
    pub d_phi_1d: Mat<S>,
    /// 1D solution-basis reference mass (flux quadrature), and the unit filter
    /// `(D^p)^T M (D^p)` it induces.
    pub mhat_1d: Mat<S>,
    pub khat_unit_1d: Mat<S>,
    /// 1D skew kernel `W D_phi - D_phi^T W` on the flux nodes.
    pub skew_1d: Mat<S>,
    /// Flux basis evaluated at the endpoints.
    pub phi_minus: Vec<S>,
    pub phi_plus: Vec<S>,
    /// Solution basis evaluated at the endpoints.
    pub chi_minus: Vec<S>,
    pub chi_plus: Vec<S>,

    // 2D node data
    pub w_q: Vec<S>,
    pub w_f: Vec<S>,
    pub normal_s: Vec<S>,
    pub normal_t: Vec<S>,
    /// Solution basis at volume flux nodes, `(N_q x N_soln)`.
    pub chi_q: Mat<S>,
    pub dchi_q_dxi: Mat<S>,
    pub dchi_q_dtau: Mat<S>,
    /// Solution basis at the stacked face nodes, `(4 N_f x N_soln)`.
    pub chi_f: Mat<S>,
    /// Flux basis at the stacked face nodes, `(4 N_f x N_q)`.
    pub phi_f: Mat<S>,

    // mass and filter
    /// Reference 2D mass matrix (no Jacobian).
    pub m_ref: Mat<S>,
    /// Reference 2D spatial filter including `c` (no Jacobian).
    pub k_ref: Mat<S>,
    /// Jacobian-weighted mass matrix `J * m_ref`.
    pub m: Mat<S>,
    /// Jacobian-weighted filter `J * k_ref`.
    pub k: Mat<S>,
    m_lu: LuFactor<S>,
    mk_lu: LuFactor<S>,

    // reference differential / lifting / projection operators
    /// L2 projection from flux-node samples onto the solution basis.
    pub pi_q: Mat<S>,
    pub d_t: Mat<S>,
    pub d_s: Mat<S>,
    pub d_fr_s: Mat<S>,
    pub l_t: Mat<S>,
    pub l_s: Mat<S>,
    pub l_fr_s: Mat<S>,

    // precomposed interpolation transposes for the split-form volume terms
    pub minv_chi_q_t: Mat<S>,
    pub minv_chi_f_t: Mat<S>,
    pub mkinv_chi_q_t: Mat<S>,
    pub mkinv_chi_f_t: Mat<S>,

    // 1D face-energy matrices on the flux basis
    pub m_1d_face: Mat<S>,
    pub k_1d_face: Mat<S>,
}

fn mat_pow<S: Real>(a: &Mat<S>, p: usize) -> Mat<S> {
    let mut out = Mat::identity(a.rows());
    for _ in 0..p {
        out = out.matmul(a);
    }
    out
}

impl<S: Real> OperatorSet<S> {
    pub fn n_soln_1d(&self) -> usize {
        self.p + 1
    }

    pub fn n_flux_1d(&self) -> usize {
        self.p + 1 + self.n_oi
    }

    pub fn n_soln(&self) -> usize {
        self.n_soln_1d() * self.n_soln_1d()
    }

    pub fn n_q(&self) -> usize {
        self.n_flux_1d() * self.n_flux_1d()
    }

    pub fn n_f(&self) -> usize {
        self.n_flux_1d()
    }

    pub fn n_hybrid(&self) -> usize {
        self.n_q() + 4 * self.n_f()
    }

    /// Column/row range of one face inside the stacked face blocks.
    pub fn face_range(&self, face: usize) -> std::ops::Range<usize> {
        face * self.n_f()..(face + 1) * self.n_f()
    }

    /// Solves `m_ref x = b` in place.
    pub fn solve_m_ref(&self, b: &mut [S]) {
        self.m_lu.solve(b);
    }

    /// Solves `(m_ref + k_ref) x = b` in place.
    pub fn solve_mk_ref(&self, b: &mut [S]) {
        self.mk_lu.solve(b);
    }

    /// Projects per-state samples at the flux nodes onto solution coefficients.
    pub fn project_to_solution_basis(&self, values_at_flux_nodes: &[S]) -> Result<Vec<S>> {
        if values_at_flux_nodes.len() != self.n_q() {
            return Err(Error::LengthMismatch {
                expected: self.n_q(),
                got: values_at_flux_nodes.len(),
            });
        }
        let mut out = vec![S::zero(); self.n_soln()];
        self.pi_q.matvec(values_at_flux_nodes, &mut out);
        Ok(out)
    }

    /// Dense skew-symmetric hybrid operator `Qtilde` of the given direction,
    /// on the `N_q + 4 N_f` volume-plus-face nodes.
    pub fn qtilde(&self, dir: Dir) -> Mat<S> {
        let nq = self.n_q();
        let nh = self.n_hybrid();
        let half = S::of(0.5);
        let dmat = self.dphi_vol(dir);
        let normal = match dir {
            Dir::Space => &self.normal_s,
            Dir::Time => &self.normal_t,
        };
        let mut q = Mat::zeros(nh, nh);
        for i in 0..nq {
            for j in 0..nq {
                q[(i, j)] = half * (self.w_q[i] * dmat[(i, j)] - dmat[(j, i)] * self.w_q[j]);
            }
        }
        for (fi, row) in (nq..nh).enumerate() {
            let wn = self.w_f[fi] * normal[fi];
            for j in 0..nq {
                let v = half * self.phi_f[(fi, j)] * wn;
                q[(j, row)] = v;
                q[(row, j)] = -v;
            }
            q[(row, row)] = half * wn;
        }
        q
    }

    /// Boundary operator `B = Qtilde + Qtilde^T` of the given direction.
    pub fn boundary_b(&self, dir: Dir) -> Mat<S> {
        let nq = self.n_q();
        let nh = self.n_hybrid();
        let normal = match dir {
            Dir::Space => &self.normal_s,
            Dir::Time => &self.normal_t,
        };
        let mut b = Mat::zeros(nh, nh);
        for (fi, row) in (nq..nh).enumerate() {
            b[(row, row)] = self.w_f[fi] * normal[fi];
        }
        b
    }

    /// Nodal differentiation of the flux basis on the volume nodes.
    pub fn dphi_vol(&self, dir: Dir) -> Mat<S> {
        let n = self.n_flux_1d();
        let eye = Mat::identity(n);
        match dir {
            Dir::Space => self.d_phi_1d.kron(&eye),
            Dir::Time => eye.kron(&self.d_phi_1d),
        }
    }

    /// Max scaled residuals of the premultiplied summation-by-parts
    /// identities: the volume bilinear form of `d(chi_i phi_j)` against each
    /// direction must telescope onto the corresponding face quadrature. Both
    /// sides carry the same mass factors, so the identity is independent of
    /// the filter.
    pub fn check_sbp(&self) -> SbpReport<S> {
        let residual = |dir: Dir| -> S {
            let dmat = self.dphi_vol(dir);
            let dchi = match dir {
                Dir::Space => &self.dchi_q_dxi,
                Dir::Time => &self.dchi_q_dtau,
            };
            let normal = match dir {
                Dir::Space => &self.normal_s,
                Dir::Time => &self.normal_t,
            };
            // chi^T W D  +  (d chi)^T W  -  sum_faces chi_f^T W_f n phi_f
            let wq = Mat::from_fn(self.n_q(), self.n_q(), |i, j| {
                if i == j {
                    self.w_q[i]
                } else {
                    S::zero()
                }
            });
            let vol = self
                .chi_q
                .transpose()
                .matmul(&wq)
                .matmul(&dmat)
                .add(&dchi.transpose().matmul(&wq));
            let mut face = Mat::zeros(self.n_soln(), self.n_q());
            for fi in 0..4 * self.n_f() {
                let wn = self.w_f[fi] * normal[fi];
                if wn == S::zero() {
                    continue;
                }
                for i in 0..self.n_soln() {
                    let a = self.chi_f[(fi, i)] * wn;
                    for j in 0..self.n_q() {
                        face[(i, j)] += a * self.phi_f[(fi, j)];
                    }
                }
            }
            let scale = vol.max_abs().max(face.max_abs()).max(S::one());
            vol.sub(&face).max_abs() / scale
        };
        SbpReport { residual_s: residual(Dir::Space), residual_t: residual(Dir::Time) }
    }
}

/// Assembles the full operator set.
pub fn build_operators<S: Real>(
    p: usize,
    n_oi: usize,
    soln_kind: QuadKind,
    flux_kind: QuadKind,
    c: S,
    geom: ElementGeometry<S>,
) -> Result<OperatorSet<S>> {
    if p < 1 {
        return Err(Error::Config("polynomial degree must be at least 1".into()));
    }
    if c < S::zero() {
        return Err(Error::Config("correction parameter c must be nonnegative".into()));
    }
    let n_s1 = p + 1;
    let n_f1 = p + 1 + n_oi;
    let soln_rule_1d = make_rule::<S>(soln_kind, n_s1)?;
    let flux_rule_1d = make_rule::<S>(flux_kind, n_f1)?;
    let soln_basis_1d = LagrangeBasis1D::new(&soln_rule_1d.nodes)?;
    let flux_basis_1d = LagrangeBasis1D::new(&flux_rule_1d.nodes)?;

    let v_sq = soln_basis_1d.eval(&flux_rule_1d.nodes);
    let dv_sq = soln_basis_1d.eval_derivative(&flux_rule_1d.nodes);
    let d_phi_1d = flux_basis_1d.diff_matrix();

    let w1 = &flux_rule_1d.weights;
    let wmat_1d = Mat::from_fn(n_f1, n_f1, |i, j| if i == j { w1[i] } else { S::zero() });
    let mhat_1d = v_sq.transpose().matmul(&wmat_1d).matmul(&v_sq);
    let mhat_1d_lu = LuFactor::new(&mhat_1d)?;
    // 1D differential operator of the solution basis through the flux rule;
    // equals the exact nodal differentiation matrix at these exactness levels.
    let d1 = mhat_1d_lu.solve_mat(&v_sq.transpose().matmul(&wmat_1d).matmul(&dv_sq));
    let d1p = mat_pow(&d1, p);
    let khat_unit_1d = d1p.transpose().matmul(&mhat_1d).matmul(&d1p);
    let skew_1d = {
        let wd = wmat_1d.matmul(&d_phi_1d);
        wd.sub(&wd.transpose())
    };

    let mut phi_minus = vec![S::zero(); n_f1];
    let mut phi_plus = vec![S::zero(); n_f1];
    flux_basis_1d.eval_at(-S::one(), &mut phi_minus);
    flux_basis_1d.eval_at(S::one(), &mut phi_plus);
    let mut chi_minus = vec![S::zero(); n_s1];
    let mut chi_plus = vec![S::zero(); n_s1];
    soln_basis_1d.eval_at(-S::one(), &mut chi_minus);
    soln_basis_1d.eval_at(S::one(), &mut chi_plus);

    let n_soln = n_s1 * n_s1;
    let n_q = n_f1 * n_f1;
    let n_f = n_f1;

    let chi_q = v_sq.kron(&v_sq);
    let dchi_q_dxi = dv_sq.kron(&v_sq);
    let dchi_q_dtau = v_sq.kron(&dv_sq);

    let mut w_q = vec![S::zero(); n_q];
    for a in 0..n_f1 {
        for b in 0..n_f1 {
            w_q[a * n_f1 + b] = w1[a] * w1[b];
        }
    }

    // Stacked face data: x-min, x-max, t-min, t-max; nodes ordered by the
    // increasing tangential coordinate (the 1D flux nodes).
    let mut w_f = vec![S::zero(); 4 * n_f];
    let mut normal_s = vec![S::zero(); 4 * n_f];
    let mut normal_t = vec![S::zero(); 4 * n_f];
    let mut chi_f = Mat::zeros(4 * n_f, n_soln);
    let mut phi_f = Mat::zeros(4 * n_f, n_q);
    for face in 0..4 {
        for k in 0..n_f {
            let row = face * n_f + k;
            w_f[row] = w1[k];
            let (ns, nt) = match face {
                0 => (-S::one(), S::zero()),
                1 => (S::one(), S::zero()),
                2 => (S::zero(), -S::one()),
                _ => (S::zero(), S::one()),
            };
            normal_s[row] = ns;
            normal_t[row] = nt;
            // tensor evaluation at the face point
            let (sx, st): (&[S], &[S]) = match face {
                0 => (&chi_minus, v_sq.row(k)),
                1 => (&chi_plus, v_sq.row(k)),
                2 => (v_sq.row(k), &chi_minus),
                _ => (v_sq.row(k), &chi_plus),
            };
            for a in 0..n_s1 {
                for b in 0..n_s1 {
                    chi_f[(row, a * n_s1 + b)] = sx[a] * st[b];
                }
            }
            let cardinal = |idx: usize| {
                let mut e = vec![S::zero(); n_f1];
                e[idx] = S::one();
                e
            };
            let (fx, ft): (Vec<S>, Vec<S>) = match face {
                0 => (phi_minus.clone(), cardinal(k)),
                1 => (phi_plus.clone(), cardinal(k)),
                2 => (cardinal(k), phi_minus.clone()),
                _ => (cardinal(k), phi_plus.clone()),
            };
            for a in 0..n_f1 {
                for b in 0..n_f1 {
                    phi_f[(row, a * n_f1 + b)] = fx[a] * ft[b];
                }
            }
        }
    }

    let m_ref = mhat_1d.kron(&mhat_1d);
    let k_ref = khat_unit_1d.scale(c).kron(&mhat_1d);
    let jac = geom.jacobian();
    let m = m_ref.scale(jac);
    let k = k_ref.scale(jac);
    let m_lu = LuFactor::new(&m_ref)?;
    let mk_lu = LuFactor::new(&m_ref.add(&k_ref))
        .map_err(|_| Error::Construction("filtered mass matrix is singular".into()))?;

    let wq_diag = |mat: &Mat<S>| -> Mat<S> {
        // W_q * mat, with W_q diagonal
        let mut out = mat.clone();
        for i in 0..out.rows() {
            let w = w_q[i];
            for v in out.row_mut(i) {
                *v *= w;
            }
        }
        out
    };

    let chi_q_t_w = wq_diag(&chi_q).transpose();
    let pi_q = m_lu.solve_mat(&chi_q_t_w);

    let eye_f1 = Mat::identity(n_f1);
    let dxi_phi = d_phi_1d.kron(&eye_f1);
    let dtau_phi = eye_f1.kron(&d_phi_1d);
    let d_t = m_lu.solve_mat(&chi_q_t_w.matmul(&dtau_phi));
    let theta_s = chi_q_t_w.matmul(&dxi_phi);
    let d_s = m_lu.solve_mat(&theta_s);
    let d_fr_s = mk_lu.solve_mat(&theta_s);

    let lift_numerator = |normal: &[S]| -> Mat<S> {
        let mut num = chi_f.transpose();
        for j in 0..4 * n_f {
            let wn = w_f[j] * normal[j];
            for i in 0..n_soln {
                num[(i, j)] *= wn;
            }
        }
        num
    };
    let l_t = m_lu.solve_mat(&lift_numerator(&normal_t));
    let l_s = m_lu.solve_mat(&lift_numerator(&normal_s));
    let l_fr_s = mk_lu.solve_mat(&lift_numerator(&normal_s));

    let minv_chi_q_t = m_lu.solve_mat(&chi_q.transpose());
    let minv_chi_f_t = m_lu.solve_mat(&chi_f.transpose());
    let mkinv_chi_q_t = mk_lu.solve_mat(&chi_q.transpose());
    let mkinv_chi_f_t = mk_lu.solve_mat(&chi_f.transpose());

    // Face-energy matrices on the flux basis: the diagonal face mass and the
    // degree-p filter of the same construction.
    let m_1d_face = wmat_1d.clone();
    let dphi_p = mat_pow(&d_phi_1d, p);
    let k_1d_face = dphi_p.transpose().matmul(&wmat_1d).matmul(&dphi_p).scale(c);

    Ok(OperatorSet {
        p,
        n_oi,
        c,
        soln_kind,
        flux_kind,
        geom,
        soln_rule_1d,
        flux_rule_1d,
        soln_basis_1d,
        flux_basis_1d,
        v_sq,
        dv_sq,
        d_phi_1d,
        mhat_1d,
        khat_unit_1d,
        skew_1d,
        phi_minus,
        phi_plus,
        chi_minus,
        chi_plus,
        w_q,
        w_f,
        normal_s,
        normal_t,
        chi_q,
        dchi_q_dxi,
        dchi_q_dtau,
        chi_f,
        phi_f,
        m_ref,
        k_ref,
        m,
        k,
        m_lu,
        mk_lu,
        pi_q,
        d_t,
        d_s,
        d_fr_s,
        l_t,
        l_s,
        l_fr_s,
        minv_chi_q_t,
        minv_chi_f_t,
        mkinv_chi_q_t,
        mkinv_chi_f_t,
        m_1d_face,
        k_1d_face,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::legendre_with_deriv;

    fn geom_unit() -> ElementGeometry<f64> {
        ElementGeometry::new(1.0, 1.0).unwrap()
    }

    fn ops(
        p: usize,
        soln: QuadKind,
        flux: QuadKind,
        c: f64,
    ) -> OperatorSet<f64> {
        build_operators(p, 0, soln, flux, c, geom_unit()).unwrap()
    }

    #[test]
    fn geometry_invariant() {
        let g = ElementGeometry::<f64>::new(0.5, 0.125).unwrap();
        assert!((g.jacobian() - 0.5 * 0.125 / 4.0).abs() < 1e-16);
        assert!((g.j_1d() * g.j_1d() - g.jacobian()).abs() < 1e-16);
        assert!(ElementGeometry::<f64>::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn c_zero_gives_plain_dg_operators() {
        let o = ops(3, QuadKind::GaussLobatto, QuadKind::GaussLegendre, 0.0);
        assert_eq!(o.k_ref.max_abs(), 0.0);
        assert_eq!(o.k.max_abs(), 0.0);
        assert!(o.d_fr_s.sub(&o.d_s).max_abs() < 1e-14);
    }

    #[test]
    fn filtered_mass_inverse_roundtrip() {
        for c in [0.0, 1e-5, c_hu::<f64>(3), 10.0] {
            let o = ops(3, QuadKind::GaussLobatto, QuadKind::GaussLegendre, c);
            let mk = o.m.add(&o.k);
            let inv = LuFactor::new(&mk).unwrap().inverse();
            let id = mk.matmul(&inv);
            let err = id.sub(&Mat::identity(o.n_soln())).max_abs();
            assert!(err < 1e-11, "c={c}: {err}");
        }
    }

    #[test]
    fn filter_annihilates_constants() {
        let o = ops(3, QuadKind::GaussLobatto, QuadKind::GaussLegendre, c_hu::<f64>(3));
        let ones = vec![1.0; o.n_soln()];
        let mut out = vec![0.0; o.n_soln()];
        o.k.matvec(&ones, &mut out);
        let scale = o.k.max_abs();
        for v in &out {
            assert!(v.abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn filter_is_symmetric_positive_semidefinite() {
        let o = ops(2, QuadKind::GaussLegendre, QuadKind::GaussLegendre, 0.1);
        let kt = o.k.transpose();
        assert!(o.k.sub(&kt).max_abs() < 1e-13);
        let mut rng = crate::util::SplitMix64::new(3);
        for _ in 0..50 {
            let u: Vec<f64> = (0..o.n_soln()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut ku = vec![0.0; o.n_soln()];
            o.k.matvec(&u, &mut ku);
            assert!(crate::linalg::dot(&u, &ku) >= -1e-13);
        }
    }

    #[test]
    fn sbp_identities_hold() {
        let cases = [
            (2, QuadKind::GaussLegendre, QuadKind::GaussLegendre, 0.0, 1e-12),
            (3, QuadKind::GaussLobatto, QuadKind::GaussLegendre, c_hu::<f64>(3), 1e-11),
            (1, QuadKind::GaussLobatto, QuadKind::GaussLobatto, 0.0, 1e-13),
        ];
        for (p, sk, fk, c, tol) in cases {
            let o = ops(p, sk, fk, c);
            let rep = o.check_sbp();
            assert!(rep.residual_s < tol, "p={p} spatial {}", rep.residual_s);
            assert!(rep.residual_t < tol, "p={p} temporal {}", rep.residual_t);
        }
    }

    #[test]
    fn sbp_holds_with_overintegration_and_all_node_combos() {
        for sk in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
            for fk in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
                for n_oi in [0usize, 2] {
                    let o = build_operators(3, n_oi, sk, fk, c_hu::<f64>(3), geom_unit())
                        .unwrap();
                    let rep = o.check_sbp();
                    assert!(rep.residual_s < 1e-11 && rep.residual_t < 1e-11);
                }
            }
        }
    }

    #[test]
    fn projection_reproduces_solution_space() {
        let o = ops(3, QuadKind::GaussLobatto, QuadKind::GaussLegendre, 0.0);
        // constant
        let ones = vec![1.0; o.n_q()];
        let coeff = o.project_to_solution_basis(&ones).unwrap();
        let mut back = vec![0.0; o.n_q()];
        o.chi_q.matvec(&coeff, &mut back);
        for v in &back {
            assert!((v - 1.0).abs() < 1e-13);
        }
        // cardinal reproduction of each basis function
        for kmode in 0..o.n_soln() {
            let mut e = vec![0.0; o.n_soln()];
            e[kmode] = 1.0;
            let mut samples = vec![0.0; o.n_q()];
            o.chi_q.matvec(&e, &mut samples);
            let coeff = o.project_to_solution_basis(&samples).unwrap();
            for (j, v) in coeff.iter().enumerate() {
                let expect = if j == kmode { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12);
            }
        }
        // length check
        assert!(o.project_to_solution_basis(&[0.0; 3]).is_err());
    }

    #[test]
    fn projection_matches_normal_equations_oracle() {
        // Project a degree-(p+1) tensor function; with GL flux nodes the
        // discrete projection equals the exact L2 projection, checked against
        // dense normal equations on a fine quadrature.
        let p = 3;
        let o = ops(p, QuadKind::GaussLobatto, QuadKind::GaussLegendre, 0.0);
        let f = |x: f64, t: f64| x.powi(p as i32 + 1) + 0.3 * t.powi(p as i32 + 1) + x * t;
        let n1 = o.n_flux_1d();
        let mut samples = vec![0.0; o.n_q()];
        for a in 0..n1 {
            for b in 0..n1 {
                samples[a * n1 + b] = f(o.flux_rule_1d.nodes[a], o.flux_rule_1d.nodes[b]);
            }
        }
        let got = o.project_to_solution_basis(&samples).unwrap();

        // oracle: fine-quadrature Gram system
        let fine = make_rule::<f64>(QuadKind::GaussLegendre, p + 6).unwrap();
        let vals = o.soln_basis_1d.eval(&fine.nodes);
        let nf = fine.n();
        let ns = o.n_soln();
        let mut gram = Mat::zeros(ns, ns);
        let mut rhs = vec![0.0; ns];
        for qa in 0..nf {
            for qb in 0..nf {
                let w = fine.weights[qa] * fine.weights[qb];
                let fv = f(fine.nodes[qa], fine.nodes[qb]);
                for i in 0..ns {
                    let bi = vals[(qa, i / (p + 1))] * vals[(qb, i % (p + 1))];
                    rhs[i] += w * fv * bi;
                    for j in 0..ns {
                        let bj = vals[(qa, j / (p + 1))] * vals[(qb, j % (p + 1))];
                        gram[(i, j)] += w * bi * bj;
                    }
                }
            }
        }
        LuFactor::new(&gram).unwrap().solve(&mut rhs);
        for (g, e) in got.iter().zip(&rhs) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn qtilde_skew_plus_transpose_is_boundary() {
        for dir in [Dir::Space, Dir::Time] {
            let o = ops(2, QuadKind::GaussLobatto, QuadKind::GaussLegendre, c_hu::<f64>(2));
            let q = o.qtilde(dir);
            let b = o.boundary_b(dir);
            let err = q.add(&q.transpose()).sub(&b).max_abs();
            assert!(err < 1e-13, "{dir:?}: {err}");
        }
    }

    #[test]
    fn qtilde_annihilates_constants() {
        for sk in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
            for fk in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
                let o = ops(3, sk, fk, 0.0);
                for dir in [Dir::Space, Dir::Time] {
                    let q = o.qtilde(dir);
                    let ones = vec![1.0; o.n_hybrid()];
                    let mut out = vec![0.0; o.n_hybrid()];
                    q.matvec(&ones, &mut out);
                    for v in &out {
                        assert!(v.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_b_structure() {
        let o = ops(2, QuadKind::GaussLegendre, QuadKind::GaussLegendre, 0.0);
        let bs = o.boundary_b(Dir::Space);
        let nq = o.n_q();
        // volume block is zero and faces 2/3 carry no spatial normal
        for i in 0..nq {
            for j in 0..o.n_hybrid() {
                assert_eq!(bs[(i, j)], 0.0);
                assert_eq!(bs[(j, i)], 0.0);
            }
        }
        for face in [2usize, 3] {
            for k in o.face_range(face) {
                assert_eq!(bs[(nq + k, nq + k)], 0.0);
            }
        }
        for (face, sign) in [(0usize, -1.0), (1, 1.0)] {
            for (k, fi) in o.face_range(face).enumerate() {
                assert_eq!(bs[(nq + fi, nq + fi)], sign * o.flux_rule_1d.weights[k]);
            }
        }
    }

    #[test]
    fn tensor_structure_of_the_filter() {
        // (1/J_1D) c (D_xi^p)^T M (D_xi^p) == K_1D (x) M_1D with the face
        // Jacobian inside K_1D.
        let geom = ElementGeometry::<f64>::new(0.25, 0.25).unwrap();
        let p = 3;
        let c = c_hu::<f64>(p);
        let o = build_operators(p, 0, QuadKind::GaussLobatto, QuadKind::GaussLegendre, c, geom)
            .unwrap();
        let d1 = {
            // nodal differentiation of the solution basis
            o.soln_basis_1d.diff_matrix()
        };
        let d1p = mat_pow(&d1, p);
        let dxi_p = d1p.kron(&Mat::identity(p + 1));
        let lhs = dxi_p.transpose().matmul(&o.m).matmul(&dxi_p).scale(c / geom.j_1d());
        let k_1d = o.khat_unit_1d.scale(c * geom.j_1d());
        let rhs = k_1d.kron(&o.mhat_1d);
        let scale = rhs.max_abs().max(1.0);
        assert!(lhs.sub(&rhs).max_abs() / scale < 1e-11);
    }

    #[test]
    fn filter_strength_increases_with_c() {
        let p = 2;
        let geom = geom_unit();
        // nodal values of x^p on the solution nodes: nonzero p-th spatial mode
        let mut last = -1.0;
        for c in [1e-4, 1e-3, 1e-2, 1e-1] {
            let o = build_operators(
                p,
                0,
                QuadKind::GaussLegendre,
                QuadKind::GaussLegendre,
                c,
                geom,
            )
            .unwrap();
            let n1 = p + 1;
            let mut u = vec![0.0; o.n_soln()];
            for a in 0..n1 {
                for b in 0..n1 {
                    u[a * n1 + b] = o.soln_rule_1d.nodes[a].powi(p as i32);
                }
            }
            let mut ku = vec![0.0; o.n_soln()];
            o.k.matvec(&u, &mut ku);
            let e = crate::linalg::dot(&u, &ku);
            assert!(e > last, "u^T K u must increase with c");
            last = e;
        }
    }

    #[test]
    fn collocated_gl_mass_is_diagonal_weights() {
        let geom = ElementGeometry::<f64>::new(0.5, 0.5).unwrap();
        let o = build_operators(
            2,
            0,
            QuadKind::GaussLegendre,
            QuadKind::GaussLegendre,
            0.0,
            geom,
        )
        .unwrap();
        let j = geom.jacobian();
        for i in 0..o.n_soln() {
            for jj in 0..o.n_soln() {
                let expect = if i == jj { j * o.w_q[i] } else { 0.0 };
                assert!((o.m[(i, jj)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn c_hu_table_values() {
        assert!((c_hu::<f64>(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c_hu::<f64>(2) - 1.0 / 30.0).abs() < 1e-15);
        assert!((c_hu::<f64>(3) - 4.0 / 4725.0).abs() < 1e-18);
        assert!((c_hu::<f64>(4) - 5.0 / 396900.0).abs() < 1e-19);
    }

    /// Re-derives c_hu from the g2 correction function itself: the correction
    /// g on the right face (g(1)=1, g(-1)=0) of the energy-stable family with
    /// parameter c satisfies  int chi_i' g = 2 c chi_i^(p) g^(p+1)  for every
    /// member chi_i of the degree-p basis. Huynh's g2 is the member built from
    /// Legendre polynomials with eta = (p+1)/p.
    #[test]
    fn c_hu_matches_g2_correction_oracle() {
        for p in 1..=6usize {
            let eta = (p as f64 + 1.0) / p as f64;
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            // left-face correction, then mirror for the right face
            let g_left = |xi: f64| {
                let lpm1 = legendre_with_deriv(p - 1, xi).0;
                let lp = legendre_with_deriv(p, xi).0;
                let lpp1 = legendre_with_deriv(p + 1, xi).0;
                sign / 2.0 * (lp - (eta * lpm1 + lpp1) / (1.0 + eta))
            };
            let g_right = |xi: f64| g_left(-xi);
            assert!((g_right(1.0) - 1.0).abs() < 1e-12);
            assert!(g_right(-1.0).abs() < 1e-12);

            // (p+1)-th derivative of g_right via a nodal derivative matrix of
            // exactly representing degree p+1
            let nodes = make_rule::<f64>(QuadKind::GaussLegendre, p + 2).unwrap().nodes;
            let bs = LagrangeBasis1D::new(&nodes).unwrap();
            let d = bs.diff_matrix();
            let mut gv: Vec<f64> = nodes.iter().map(|&x| g_right(x)).collect();
            let mut tmp = vec![0.0; gv.len()];
            for _ in 0..p + 1 {
                d.matvec(&gv, &mut tmp);
                std::mem::swap(&mut gv, &mut tmp);
            }
            let g_dp1 = gv[0];

            let soln_nodes = make_rule::<f64>(QuadKind::GaussLegendre, p + 1).unwrap().nodes;
            let basis = LagrangeBasis1D::new(&soln_nodes).unwrap();
            let fine = make_rule::<f64>(QuadKind::GaussLegendre, 2 * p + 6).unwrap();
            let dvals = basis.eval_derivative(&fine.nodes);
            let dp = mat_pow(&basis.diff_matrix(), p);
            let c = c_hu::<f64>(p);
            for i in 0..=p {
                let integral: f64 = (0..fine.n())
                    .map(|q| fine.weights[q] * dvals[(q, i)] * g_right(fine.nodes[q]))
                    .sum();
                // chi_i^(p) is constant; read it from the first node
                let chi_dp: f64 = dp[(0, i)];
                let rhs = 2.0 * c * chi_dp * g_dp1;
                assert!(
                    (integral - rhs).abs() < 1e-11 * (1.0 + integral.abs()),
                    "p={p} i={i}: {integral} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn invalid_configurations_rejected() {
        assert!(build_operators::<f64>(
            0,
            0,
            QuadKind::GaussLegendre,
            QuadKind::GaussLegendre,
            0.0,
            geom_unit()
        )
        .is_err());
        assert!(build_operators::<f64>(
            2,
            0,
            QuadKind::GaussLegendre,
            QuadKind::GaussLegendre,
            -1.0,
            geom_unit()
        )
        .is_err());
    }
}

//! 1D Gauss-Legendre / Gauss-Lobatto-Legendre rules and Lagrange bases.
//!
//! Everything here lives on the reference interval `[-1, 1]`. Nodes are
//! computed by Newton iteration on recurrence-evaluated Legendre polynomials,
//! which is dependency-free and stable well past degree 20. Basis evaluation
//! uses the barycentric form for stability on clustered Lobatto nodes.

use crate::linalg::Mat;
use crate::{Error, Real, Result};

/// Node family of a 1D quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadKind {
    /// Gauss-Legendre: interior nodes, exact for degree `2n - 1`.
    GaussLegendre,
    /// Gauss-Lobatto-Legendre: includes both endpoints, exact for degree `2n - 3`.
    GaussLobatto,
}

impl QuadKind {
    pub fn short_name(&self) -> &'static str {
        match self {
            QuadKind::GaussLegendre => "GL",
            QuadKind::GaussLobatto => "GLL",
        }
    }
}

impl std::str::FromStr for QuadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GL" => Ok(QuadKind::GaussLegendre),
            "GLL" => Ok(QuadKind::GaussLobatto),
            other => Err(Error::Config(format!("unknown node kind '{other}', expected GL or GLL"))),
        }
    }
}

/// Nodes and weights of a 1D rule on `[-1, 1]`, strictly increasing nodes.
#[derive(Debug, Clone)]
pub struct QuadratureRule1D<S> {
    pub kind: QuadKind,
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
}

impl<S: Real> QuadratureRule1D<S> {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exactness_degree(&self) -> usize {
        match self.kind {
            QuadKind::GaussLegendre => 2 * self.n() - 1,
            QuadKind::GaussLobatto => (2 * self.n()).saturating_sub(3),
        }
    }

    pub fn integrate(&self, f: impl Fn(S) -> S) -> S {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Legendre polynomial `P_n` and its derivative at `x`, by the three-term
/// recurrence and the derivative identity `(x^2 - 1) P_n' = n (x P_n - P_{n-1})`.
pub fn legendre_with_deriv<S: Real>(n: usize, x: S) -> (S, S) {
    if n == 0 {
        return (S::one(), S::zero());
    }
    let mut p_prev = S::one();
    let mut p = x;
    for k in 1..n {
        let kf = S::of(k as f64);
        let next = ((S::of(2.0) * kf + S::one()) * x * p - kf * p_prev) / (kf + S::one());
        p_prev = p;
        p = next;
    }
    let nf = S::of(n as f64);
    let denom = x * x - S::one();
    let dp = if denom.abs() < S::epsilon() {
        // endpoint limit: P_n'(±1) = ±^{n+1} n(n+1)/2
        let sign = if x > S::zero() { S::one() } else { S::of((-1.0f64).powi(n as i32 - 1)) };
        sign * nf * (nf + S::one()) / S::of(2.0)
    } else {
        nf * (x * p - p_prev) / denom
    };
    (p, dp)
}

fn newton_tol<S: Real>() -> S {
    // 1e-15 at f64 width.
    S::epsilon() * S::of(4.5)
}

fn gauss_legendre<S: Real>(n: usize) -> (Vec<S>, Vec<S>) {
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    for i in 0..n {
        // Chebyshev-like initial guess, descending in i.
        let theta = std::f64::consts::PI * (4.0 * i as f64 + 3.0) / (4.0 * n as f64 + 2.0);
        let mut x = S::of(theta.cos());
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= newton_tol::<S>() {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        nodes[i] = x;
        weights[i] = S::of(2.0) / ((S::one() - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn gauss_lobatto<S: Real>(n: usize) -> (Vec<S>, Vec<S>) {
    let m = n - 1;
    let mut nodes = vec![S::zero(); n];
    nodes[0] = -S::one();
    nodes[n - 1] = S::one();
    for i in 1..n - 1 {
        // Interior nodes are the roots of P'_{n-1}; Chebyshev-Lobatto starts.
        let mut x = S::of(-(std::f64::consts::PI * i as f64 / m as f64).cos());
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(m, x);
            // P'' from the Legendre ODE: (1 - x^2) P'' = 2 x P' - m (m + 1) P
            let ddp =
                (S::of(2.0) * x * dp - S::of((m * (m + 1)) as f64) * p) / (S::one() - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() <= newton_tol::<S>() {
                break;
            }
        }
        nodes[i] = x;
    }
    let scale = S::of(2.0) / S::of((m * (m + 1)) as f64);
    let mut weights = vec![S::zero(); n];
    for i in 0..n {
        let (p, _) = legendre_with_deriv(m, nodes[i]);
        weights[i] = scale / (p * p);
    }
    (nodes, weights)
}

/// Constructs a rule of the requested family and node count.
pub fn make_rule<S: Real>(kind: QuadKind, n: usize) -> Result<QuadratureRule1D<S>> {
    match kind {
        QuadKind::GaussLegendre if n < 1 => {
            return Err(Error::Config("GL rule needs at least 1 node".into()))
        }
        QuadKind::GaussLobatto if n < 2 => {
            return Err(Error::Config("GLL rule needs at least 2 nodes".into()))
        }
        _ => {}
    }
    let (mut nodes, mut weights) = match kind {
        QuadKind::GaussLegendre => gauss_legendre::<S>(n),
        QuadKind::GaussLobatto => gauss_lobatto::<S>(n),
    };
    // Enforce exact symmetry about 0; Newton leaves last-bit asymmetry.
    let half = S::of(0.5);
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = half * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = half * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = S::zero();
    }
    Ok(QuadratureRule1D { kind, nodes, weights })
}

/// Lagrange basis on a set of distinct defining nodes, barycentric form.
#[derive(Debug, Clone)]
pub struct LagrangeBasis1D<S> {
    nodes: Vec<S>,
    bary: Vec<S>,
}

impl<S: Real> LagrangeBasis1D<S> {
    pub fn new(nodes: &[S]) -> Result<Self> {
        let m = nodes.len();
        if m == 0 {
            return Err(Error::Construction("Lagrange basis needs at least one node".into()));
        }
        let mut bary = vec![S::one(); m];
        for j in 0..m {
            for k in 0..m {
                if k != j {
                    let d = nodes[j] - nodes[k];
                    if d == S::zero() {
                        return Err(Error::Construction(format!(
                            "duplicate defining nodes at index {j} and {k}"
                        )));
                    }
                    bary[j] /= d;
                }
            }
        }
        Ok(LagrangeBasis1D { nodes: nodes.to_vec(), bary })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    fn coincident(&self, x: S) -> Option<usize> {
        let tol = S::epsilon() * S::of(4.0) * (S::one() + x.abs());
        self.nodes.iter().position(|&xj| (x - xj).abs() <= tol)
    }

    /// Row vector of all basis values at `x`.
    pub fn eval_at(&self, x: S, out: &mut [S]) {
        debug_assert_eq!(out.len(), self.len());
        if let Some(i) = self.coincident(x) {
            for (j, o) in out.iter_mut().enumerate() {
                *o = if j == i { S::one() } else { S::zero() };
            }
            return;
        }
        let mut denom = S::zero();
        for j in 0..self.len() {
            out[j] = self.bary[j] / (x - self.nodes[j]);
            denom += out[j];
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
    }

    /// Row vector of all basis derivatives at `x`.
    pub fn eval_deriv_at(&self, x: S, out: &mut [S]) {
        debug_assert_eq!(out.len(), self.len());
        let m = self.len();
        if let Some(i) = self.coincident(x) {
            // Differentiation-matrix row at a defining node.
            let xi = self.nodes[i];
            let mut diag = S::zero();
            for j in 0..m {
                if j != i {
                    let d = (self.bary[j] / self.bary[i]) / (xi - self.nodes[j]);
                    out[j] = d;
                    diag -= d;
                }
            }
            out[i] = diag;
            return;
        }
        let mut s0 = S::zero();
        let mut s1 = S::zero();
        let mut vals = vec![S::zero(); m];
        for j in 0..m {
            let t = self.bary[j] / (x - self.nodes[j]);
            vals[j] = t;
            s0 += t;
            s1 += t / (x - self.nodes[j]);
        }
        for j in 0..m {
            let lj = vals[j] / s0;
            out[j] = lj * (s1 / s0 - S::one() / (x - self.nodes[j]));
        }
    }

    /// Matrix with entry `(i, j) = l_j(points[i])`.
    pub fn eval(&self, points: &[S]) -> Mat<S> {
        let mut m = Mat::zeros(points.len(), self.len());
        for (i, &x) in points.iter().enumerate() {
            self.eval_at(x, m.row_mut(i));
        }
        m
    }

    /// Matrix with entry `(i, j) = l_j'(points[i])`.
    pub fn eval_derivative(&self, points: &[S]) -> Mat<S> {
        let mut m = Mat::zeros(points.len(), self.len());
        for (i, &x) in points.iter().enumerate() {
            self.eval_deriv_at(x, m.row_mut(i));
        }
        m
    }

    /// Nodal differentiation matrix (derivative evaluated at the defining nodes).
    pub fn diff_matrix(&self) -> Mat<S> {
        self.eval_derivative(&self.nodes.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rule(kind: QuadKind, n: usize) -> QuadratureRule1D<f64> {
        make_rule(kind, n).unwrap()
    }

    #[test]
    fn gl_one_node_is_midpoint() {
        let r = rule(QuadKind::GaussLegendre, 1);
        assert_eq!(r.nodes, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
    }

    #[test]
    fn gl_two_nodes_are_p2_roots() {
        let r = rule(QuadKind::GaussLegendre, 2);
        let x = 0.5773502691896258_f64;
        assert!((r.nodes[0] + x).abs() < 1e-15);
        assert!((r.nodes[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        assert!((r.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gll_two_nodes_is_trapezoid() {
        let r = rule(QuadKind::GaussLobatto, 2);
        assert_eq!(r.nodes, vec![-1.0, 1.0]);
        assert_eq!(r.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn invalid_counts_are_config_errors() {
        assert!(make_rule::<f64>(QuadKind::GaussLegendre, 0).is_err());
        assert!(make_rule::<f64>(QuadKind::GaussLobatto, 1).is_err());
    }

    #[test]
    fn weights_sum_to_measure_and_nodes_symmetric() {
        for kind in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
            let n0 = if kind == QuadKind::GaussLobatto { 2 } else { 1 };
            for n in n0..=10 {
                let r = rule(kind, n);
                let sum: f64 = r.weights.iter().sum();
                assert!((sum - 2.0).abs() < 1e-14, "{kind:?} n={n} weight sum {sum}");
                for i in 0..n {
                    assert!((r.nodes[i] + r.nodes[n - 1 - i]).abs() < 1e-14);
                }
                for w in &r.weights {
                    assert!(*w > 0.0);
                }
                for i in 1..n {
                    assert!(r.nodes[i] > r.nodes[i - 1]);
                }
            }
        }
    }

    #[test]
    fn quadrature_exactness_on_monomials() {
        // exact integral of x^k over [-1, 1]
        let exact = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        for kind in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
            let n0 = if kind == QuadKind::GaussLobatto { 2 } else { 1 };
            for n in n0..=10 {
                let r = rule(kind, n);
                for k in 0..=r.exactness_degree() {
                    let q = r.integrate(|x| x.powi(k as i32));
                    assert!(
                        (q - exact(k)).abs() < 1e-13,
                        "{kind:?} n={n} k={k}: {q} vs {}",
                        exact(k)
                    );
                }
            }
        }
    }

    #[test]
    fn gl_rule_is_not_exact_beyond_its_degree() {
        let r = rule(QuadKind::GaussLegendre, 2);
        let k = r.exactness_degree() + 1; // degree 4
        let q = r.integrate(|x| x.powi(k as i32));
        assert!((q - 2.0 / (k as f64 + 1.0)).abs() > 1e-3);
    }

    #[test]
    fn basis_is_cardinal_at_defining_nodes() {
        let r = rule(QuadKind::GaussLobatto, 5);
        let b = LagrangeBasis1D::new(&r.nodes).unwrap();
        let id = b.eval(&r.nodes);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn duplicate_nodes_rejected() {
        assert!(LagrangeBasis1D::new(&[0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn monomial_reproduction_via_direct_evaluation_oracle() {
        // Interpolate x^(m-1) sampled at the defining nodes, re-evaluate
        // elsewhere, compare against direct polynomial evaluation.
        for m in 2..=8 {
            let nodes = rule(QuadKind::GaussLegendre, m).nodes;
            let b = LagrangeBasis1D::new(&nodes).unwrap();
            let k = (m - 1) as i32;
            let coeffs: Vec<f64> = nodes.iter().map(|x| x.powi(k)).collect();
            let pts: Vec<f64> = (0..17).map(|i| -1.0 + 0.125 * i as f64).collect();
            let vals = b.eval(&pts);
            for (i, &x) in pts.iter().enumerate() {
                let interp: f64 = vals.row(i).iter().zip(&coeffs).map(|(l, c)| l * c).sum();
                assert!((interp - x.powi(k)).abs() < 1e-12, "m={m} x={x}");
            }
        }
    }

    #[test]
    fn derivative_of_constant_and_linear() {
        let nodes = rule(QuadKind::GaussLobatto, 6).nodes;
        let b = LagrangeBasis1D::new(&nodes).unwrap();
        let pts: Vec<f64> = vec![-0.9, -0.3, 0.1, 0.77, 1.0];
        let d = b.eval_derivative(&pts);
        let lin: Vec<f64> = nodes.clone();
        for i in 0..pts.len() {
            let row_sum: f64 = d.row(i).iter().sum();
            assert!(row_sum.abs() < 1e-12, "derivative of constant");
            let dlin: f64 = d.row(i).iter().zip(&lin).map(|(l, c)| l * c).sum();
            assert!((dlin - 1.0).abs() < 1e-13, "derivative of x");
        }
    }

    #[test]
    fn derivative_of_monomials_matches_symbolic_oracle() {
        for p in 1..=6usize {
            let nodes = rule(QuadKind::GaussLegendre, p + 1).nodes;
            let b = LagrangeBasis1D::new(&nodes).unwrap();
            let pts: Vec<f64> = vec![-1.0, -0.41, 0.0, 0.33, 0.95];
            let d = b.eval_derivative(&pts);
            for k in 0..=p {
                let coeffs: Vec<f64> = nodes.iter().map(|x| x.powi(k as i32)).collect();
                for (i, &x) in pts.iter().enumerate() {
                    let got: f64 = d.row(i).iter().zip(&coeffs).map(|(l, c)| l * c).sum();
                    let want =
                        if k == 0 { 0.0 } else { k as f64 * x.powi(k as i32 - 1) };
                    assert!((got - want).abs() < 1e-11, "p={p} k={k} x={x}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn nodal_derivative_is_nilpotent_on_polynomials() {
        for p in 1..=8usize {
            let nodes = rule(QuadKind::GaussLobatto, p + 1).nodes;
            let b = LagrangeBasis1D::new(&nodes).unwrap();
            let d = b.diff_matrix();
            // values of a full degree-p polynomial
            let mut v: Vec<f64> =
                nodes.iter().map(|x| (0..=p).map(|k| x.powi(k as i32)).sum()).collect();
            // scale by the largest intermediate derivative (they grow like p!)
            let mut scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut tmp = vec![0.0; v.len()];
            for _ in 0..=p {
                d.matvec(&v, &mut tmp);
                std::mem::swap(&mut v, &mut tmp);
                scale = v.iter().fold(scale, |m, x| m.max(x.abs()));
            }
            for x in &v {
                assert!(x.abs() < 1e-10 * scale.max(1.0), "p={p}");
            }
        }
    }

    #[test]
    fn works_at_f32_width() {
        let r = make_rule::<f32>(QuadKind::GaussLegendre, 4).unwrap();
        let sum: f32 = r.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-6);
        let b = LagrangeBasis1D::new(&r.nodes).unwrap();
        let v = b.eval(&[0.25f32]);
        let s: f32 = v.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn partition_of_unity_everywhere(x in -1.0f64..1.0, n in 2usize..9) {
            let nodes = rule(QuadKind::GaussLobatto, n).nodes;
            let b = LagrangeBasis1D::new(&nodes).unwrap();
            let v = b.eval(&[x]);
            let s: f64 = v.row(0).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-13);
        }

        #[test]
        fn gl_nodes_inside_open_interval(n in 1usize..11) {
            let r = rule(QuadKind::GaussLegendre, n);
            for x in &r.nodes {
                prop_assert!(*x > -1.0 && *x < 1.0);
            }
        }
    }
}

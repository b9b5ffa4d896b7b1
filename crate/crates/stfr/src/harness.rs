//! Reproducible experiment driver: run configurations, convergence sweeps,
//! order-versus-c sweeps, entropy studies, cost studies, and the property
//! self-test. Emits plain CSV with `#`-prefixed metadata lines carrying the
//! configuration fingerprint.
//!
//! The experiments live on the fixed `[0,2] x [0,2]` domain with `N x N`
//! grids. The harness is pinned to `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::basis::QuadKind;
use crate::diagnostics::{
    convergence_rates, entropy_series, l2_error_per_state, EntropyReport,
};
use crate::mesh::SpaceTimeMesh;
use crate::mol::{mol_advance, mol_l2_error, MolConfig, SpatialDisc1D};
use crate::operators::{build_operators, c_hu};
use crate::physics::{Burgers, Euler, EulerDissipation, LinearAdvection, PhysicsModel};
use crate::residual::{BoundaryData, Discretization, Scheme, SolutionField, TemporalFlux};
use crate::solver::{solve_coupled, solve_march, SolveStats, SolverConfig};
use crate::util::fnv1a;
use crate::{Error, Result};

pub const X_RANGE: (f64, f64) = (0.0, 2.0);
pub const T_RANGE: (f64, f64) = (0.0, 2.0);
const ADVECTION_SPEED: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Advection,
    Burgers,
    Euler,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "advection" => Ok(ModelKind::Advection),
            "burgers" => Ok(ModelKind::Burgers),
            "euler" => Ok(ModelKind::Euler),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Advection => "advection",
            ModelKind::Burgers => "burgers",
            ModelKind::Euler => "euler",
        }
    }
}

/// Scheme selector as exposed on the command line: `esfr` is the
/// divergence-form energy-stable discretization, `nsfr` the split-form
/// nonlinearly-stable one, `mol` the explicit method-of-lines reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Esfr,
    Nsfr,
    Mol,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "esfr" => Ok(SchemeKind::Esfr),
            "nsfr" => Ok(SchemeKind::Nsfr),
            "mol" => Ok(SchemeKind::Mol),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Esfr => "esfr",
            SchemeKind::Nsfr => "nsfr",
            SchemeKind::Mol => "mol",
        }
    }
}

/// Correction parameter: the named DG/Huynh values or an explicit number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CSpec {
    Dg,
    Hu,
    Value(f64),
}

impl CSpec {
    pub fn value(&self, p: usize) -> f64 {
        match self {
            CSpec::Dg => 0.0,
            CSpec::Hu => c_hu::<f64>(p),
            CSpec::Value(v) => *v,
        }
    }

    pub fn label(&self) -> String {
        match self {
            CSpec::Dg => "c_dg".into(),
            CSpec::Hu => "c_hu".into(),
            CSpec::Value(v) => format!("{v:e}"),
        }
    }
}

impl std::str::FromStr for CSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c_dg" | "cdg" | "dg" => Ok(CSpec::Dg),
            "c_hu" | "chu" | "hu" => Ok(CSpec::Hu),
            other => other
                .parse::<f64>()
                .map(CSpec::Value)
                .map_err(|_| Error::Config(format!("cannot parse c value '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipationKind {
    None,
    Llf,
    Matrix,
    Upwind,
}

impl std::str::FromStr for DissipationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(DissipationKind::None),
            "llf" => Ok(DissipationKind::Llf),
            "matrix" => Ok(DissipationKind::Matrix),
            "upwind" => Ok(DissipationKind::Upwind),
            other => Err(Error::Config(format!("unknown dissipation '{other}'"))),
        }
    }
}

impl DissipationKind {
    pub fn name(&self) -> &'static str {
        match self {
            DissipationKind::None => "none",
            DissipationKind::Llf => "llf",
            DissipationKind::Matrix => "matrix",
            DissipationKind::Upwind => "upwind",
        }
    }
}

/// Initial data of a run: the model's exact solution at `t = 0`, the
/// low-amplitude sine used by the scalar entropy studies, or the two-state
/// Riemann data used by the Euler entropy studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    Exact,
    EntropySine,
    ShockTube,
}

impl std::str::FromStr for IcKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(IcKind::Exact),
            "entropy-sine" | "entropy_sine" => Ok(IcKind::EntropySine),
            "shock-tube" | "shock_tube" => Ok(IcKind::ShockTube),
            other => Err(Error::Config(format!("unknown initial condition '{other}'"))),
        }
    }
}

impl IcKind {
    pub fn name(&self) -> &'static str {
        match self {
            IcKind::Exact => "exact",
            IcKind::EntropySine => "entropy-sine",
            IcKind::ShockTube => "shock-tube",
        }
    }
}

/// One experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: SchemeKind,
    pub p: usize,
    pub n: usize,
    pub c: CSpec,
    pub soln_nodes: QuadKind,
    pub flux_nodes: QuadKind,
    pub n_oi: usize,
    pub temporal_flux: TemporalFlux,
    pub dissipation: DissipationKind,
    pub ic: IcKind,
    pub newton_tol: Option<f64>,
    pub krylov_rel_tol: Option<f64>,
    pub krylov_restart: Option<usize>,
    pub warm_start: bool,
    /// Seed for the randomized property suites only.
    pub seed: u64,
}

impl RunConfig {
    pub fn new(model: ModelKind, scheme: SchemeKind, p: usize, n: usize) -> Self {
        let dissipation = match model {
            ModelKind::Advection => DissipationKind::Upwind,
            ModelKind::Burgers => DissipationKind::Llf,
            ModelKind::Euler => DissipationKind::Matrix,
        };
        RunConfig {
            model,
            scheme,
            p,
            n,
            c: CSpec::Dg,
            soln_nodes: QuadKind::GaussLobatto,
            flux_nodes: QuadKind::GaussLegendre,
            n_oi: 0,
            temporal_flux: TemporalFlux::Upwind,
            dissipation,
            ic: IcKind::Exact,
            newton_tol: None,
            krylov_rel_tol: None,
            krylov_restart: None,
            warm_start: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.n < 1 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.c.value(self.p) < 0.0 {
            return Err(Error::Config("c must be nonnegative".into()));
        }
        if self.temporal_flux == TemporalFlux::TwoPoint && self.scheme != SchemeKind::Nsfr {
            return Err(Error::Config(
                "the two-point temporal flux requires the nsfr scheme".into(),
            ));
        }
        if self.model == ModelKind::Euler && self.dissipation == DissipationKind::Llf {
            return Err(Error::Config("llf dissipation is a scalar-model option".into()));
        }
        if self.model != ModelKind::Euler && self.dissipation == DissipationKind::Matrix {
            return Err(Error::Config("matrix dissipation is an euler option".into()));
        }
        if self.ic == IcKind::ShockTube && self.model != ModelKind::Euler {
            return Err(Error::Config("the shock-tube data is an euler case".into()));
        }
        if self.scheme == SchemeKind::Mol && self.model != ModelKind::Advection {
            return Err(Error::Config("the mol reference path is advection-only".into()));
        }
        Ok(())
    }

    pub fn c_value(&self) -> f64 {
        self.c.value(self.p)
    }

    pub fn canonical_string(&self) -> String {
        let opt_f =
            |v: Option<f64>| v.map_or_else(|| "default".into(), |x| format!("{x:e}"));
        let opt_u = |v: Option<usize>| v.map_or_else(|| "default".into(), |x| x.to_string());
        format!(
            "model={};scheme={};p={};n={};c={:e};soln={};flux={};n_oi={};temporal={};diss={};ic={};ntol={};ktol={};restart={};warm={};seed={}",
            self.model.name(),
            self.scheme.name(),
            self.p,
            self.n,
            self.c_value(),
            self.soln_nodes.short_name(),
            self.flux_nodes.short_name(),
            self.n_oi,
            match self.temporal_flux {
                TemporalFlux::Upwind => "upwind",
                TemporalFlux::TwoPoint => "two_point",
            },
            self.dissipation.name(),
            self.ic.name(),
            opt_f(self.newton_tol),
            opt_f(self.krylov_rel_tol),
            opt_u(self.krylov_restart),
            self.warm_start,
            self.seed,
        )
    }

    /// Stable hash of the canonical configuration string.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.canonical_string().as_bytes())
    }

    fn solver_config(&self) -> SolverConfig<f64> {
        let mut cfg = SolverConfig::<f64>::default();
        if self.model == ModelKind::Advection {
            cfg = cfg.for_linear_problem();
        }
        if let Some(t) = self.newton_tol {
            cfg.newton_tol = t;
        }
        if let Some(t) = self.krylov_rel_tol {
            cfg.krylov.rel_tol = t;
        }
        if let Some(r) = self.krylov_restart {
            cfg.krylov.restart = r;
        }
        cfg.warm_start = self.warm_start;
        cfg
    }

    fn scheme(&self) -> Scheme {
        match self.scheme {
            SchemeKind::Esfr => Scheme::DivergenceFr,
            SchemeKind::Nsfr | SchemeKind::Mol => Scheme::SplitFormFr(self.temporal_flux),
        }
    }
}

/// Solved case with its reported functionals.
pub struct SolvedCase {
    /// All-states L2 error (absent for initial data without an exact solution).
    pub error: Option<f64>,
    /// First-component L2 error (the tabulated quantity for vector models).
    pub error_first_state: Option<f64>,
    pub conservation: Vec<f64>,
    pub entropy: EntropyReport<f64>,
    pub stats: SolveStats,
}

fn initial_condition(
    cfg: &RunConfig,
) -> impl Fn(f64, &mut [f64]) + '_ {
    let ic = cfg.ic;
    let model = cfg.model;
    move |x: f64, out: &mut [f64]| match (ic, model) {
        (IcKind::Exact, ModelKind::Advection) => {
            LinearAdvection::new(ADVECTION_SPEED).exact_solution(x, 0.0, out)
        }
        (IcKind::Exact, ModelKind::Burgers) => Burgers::new(false).exact_solution(x, 0.0, out),
        (IcKind::Exact, ModelKind::Euler) => {
            Euler::<f64>::new(EulerDissipation::None).exact_solution(x, 0.0, out)
        }
        (IcKind::EntropySine, _) => {
            out[0] = 0.2 * (std::f64::consts::PI * (x - std::f64::consts::PI / 10.0)).sin();
        }
        (IcKind::ShockTube, _) => {
            let (rho, v, p) = if x <= 0.3 { (1.0, 0.0, 1.0) } else { (1.125, 0.0, 1.1) };
            let e = Euler::<f64>::new(EulerDissipation::None);
            out.copy_from_slice(&e.from_primitives(rho, v, p));
        }
    }
}

fn run_case_with<M: PhysicsModel<f64>>(cfg: &RunConfig, model: &M) -> Result<SolvedCase> {
    let mesh = SpaceTimeMesh::new(cfg.n, cfg.n, X_RANGE, T_RANGE)?;
    let ops = build_operators(
        cfg.p,
        cfg.n_oi,
        cfg.soln_nodes,
        cfg.flux_nodes,
        cfg.c_value(),
        mesh.geometry(),
    )?;
    let with_source = cfg.ic == IcKind::Exact && model.has_source();
    let ic = initial_condition(cfg);
    let bc = BoundaryData::new(&mesh, &ops, model.n_states(), with_source, &ic);
    let disc = Discretization::new(&mesh, &ops, model, &bc, cfg.scheme());
    let guess = SolutionField::from_initial(&mesh, &ops, model.n_states(), &ic);
    let solver = cfg.solver_config();
    let (field, stats) = match cfg.temporal_flux {
        TemporalFlux::Upwind => solve_march(&disc, &guess, &solver)?,
        TemporalFlux::TwoPoint => solve_coupled(&disc, &guess, &solver)?,
    };
    let (error, error_first_state) = if cfg.ic == IcKind::Exact && model.has_exact_solution() {
        let per_state = l2_error_per_state(&field, model, &mesh, &ops, 10)?;
        let total = per_state.iter().map(|e| e * e).sum::<f64>().sqrt();
        (Some(total), Some(per_state[0]))
    } else {
        (None, None)
    };
    let conservation = crate::diagnostics::conservation_residual(&disc, &field)?;
    let entropy = entropy_series(&disc, &field)?;
    Ok(SolvedCase { error, error_first_state, conservation, entropy, stats })
}

/// Runs one implicit space-time case.
pub fn run_case(cfg: &RunConfig) -> Result<SolvedCase> {
    cfg.validate()?;
    match cfg.model {
        ModelKind::Advection => {
            let model = LinearAdvection::new(ADVECTION_SPEED);
            run_case_with(cfg, &model)
        }
        ModelKind::Burgers => {
            let model = Burgers::new(cfg.dissipation == DissipationKind::Llf);
            run_case_with(cfg, &model)
        }
        ModelKind::Euler => {
            let model = Euler::<f64>::new(match cfg.dissipation {
                DissipationKind::Matrix => EulerDissipation::Matrix,
                _ => EulerDissipation::None,
            });
            run_case_with(cfg, &model)
        }
    }
}

// ------------------------------------------------------------- convergence

#[derive(Debug, Clone)]
pub struct ConvRow {
    pub n: usize,
    pub error: f64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvRow>,
    pub fingerprint: u64,
    pub header: String,
    /// Per-row solver failures (row kept with NaN error).
    pub failures: Vec<String>,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn final_rate(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.header);
        let _ = writeln!(out, "# fingerprint={:016x}", self.fingerprint);
        let _ = writeln!(out, "N,l2_error,rate");
        for r in &self.rows {
            match r.rate {
                Some(rate) => {
                    let _ = writeln!(out, "{},{:.6e},{:.4}", r.n, r.error, rate);
                }
                None => {
                    let _ = writeln!(out, "{},{:.6e},", r.n, r.error);
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

/// Grid refinement sweep; the tabulated error is the first-state L2 error for
/// the Euler model and the all-states error otherwise.
pub fn run_convergence(base: &RunConfig, n_list: &[usize]) -> Result<ConvergenceTable> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in n_list {
        let mut cfg = base.clone();
        cfg.n = n;
        match run_case(&cfg) {
            Ok(case) => {
                let err = match cfg.model {
                    ModelKind::Euler => case.error_first_state,
                    _ => case.error,
                }
                .ok_or_else(|| Error::MissingExactSolution)?;
                rows.push(ConvRow { n, error: err, rate: None });
            }
            Err(e) => {
                failures.push(format!("N={n}: {e}"));
                rows.push(ConvRow { n, error: f64::NAN, rate: None });
            }
        }
    }
    // rates between consecutive valid rows
    for k in 1..rows.len() {
        let (e0, e1) = (rows[k - 1].error, rows[k].error);
        if e0.is_finite() && e1.is_finite() && e0 > 0.0 && e1 > 0.0 {
            let rate = convergence_rates(&[e0, e1], &[rows[k - 1].n, rows[k].n])?[0];
            rows[k].rate = Some(rate);
        }
    }
    Ok(ConvergenceTable {
        rows,
        fingerprint: base.fingerprint(),
        header: base.canonical_string(),
        failures,
    })
}

// ------------------------------------------------------------- order vs c

#[derive(Debug, Clone)]
pub struct OrderVsCRow {
    pub c: f64,
    pub rate_st: f64,
    pub rate_mol: f64,
}

#[derive(Debug, Clone)]
pub struct OrderVsCStudy {
    pub rows: Vec<OrderVsCRow>,
    /// Largest change of any MOL rate when the time step is halved, checked
    /// at the first sweep point.
    pub dt_check_rate_delta: f64,
}

impl OrderVsCStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# advection order sweep, refinement 16 -> 32");
        let _ = writeln!(out, "# mol_dt_halving_rate_delta={:.3e}", self.dt_check_rate_delta);
        let _ = writeln!(out, "c,rate_st,rate_mol");
        for r in &self.rows {
            let _ = writeln!(out, "{:e},{:.4},{:.4}", r.c, r.rate_st, r.rate_mol);
        }
        out
    }

    /// c where a rate curve first drops below `p + 1/2`.
    pub fn drop_location(rows: &[(f64, f64)], p: usize) -> Option<f64> {
        let threshold = p as f64 + 0.5;
        rows.iter().find(|(_, rate)| *rate < threshold).map(|(c, _)| *c)
    }
}

fn st_advection_error(p: usize, n: usize, c: f64, sk: QuadKind, fk: QuadKind) -> Result<f64> {
    let mut cfg =
        RunConfig::new(ModelKind::Advection, SchemeKind::Esfr, p, n);
    cfg.c = CSpec::Value(c);
    cfg.soln_nodes = sk;
    cfg.flux_nodes = fk;
    let case = run_case(&cfg)?;
    case.error.ok_or(Error::MissingExactSolution)
}

fn mol_advection_error(
    p: usize,
    n: usize,
    c: f64,
    sk: QuadKind,
    fk: QuadKind,
    dt_scale: f64,
) -> Result<f64> {
    let model = LinearAdvection::new(ADVECTION_SPEED);
    let dx = (X_RANGE.1 - X_RANGE.0) / n as f64;
    let geom = crate::operators::ElementGeometry::new(dx, dx)?;
    let ops = build_operators(p, 0, sk, fk, c, geom)?;
    let disc = SpatialDisc1D::new(&ops, &model, n, dx)?;
    let n_s = ops.n_soln_1d();
    let mut u0 = vec![0.0; disc.n_dofs()];
    for e in 0..n {
        for i in 0..n_s {
            let x = X_RANGE.0 + dx * (e as f64 + 0.5) + 0.5 * dx * ops.soln_rule_1d.nodes[i];
            let mut v = [0.0];
            model.exact_solution(x, 0.0, &mut v);
            u0[e * n_s + i] = v[0];
        }
    }
    let mut mc = MolConfig::with_suggested_dt(T_RANGE.1, dx, ADVECTION_SPEED, p);
    mc.dt *= dt_scale;
    let u = mol_advance(&u0, &disc, &mc)?;
    mol_l2_error(&u, &ops, n, X_RANGE.0, dx, |x| {
        let mut v = [0.0];
        model.exact_solution(x, T_RANGE.1, &mut v);
        v[0]
    }, 10)
}

/// Experimental order from the 16 -> 32 refinement for the space-time scheme
/// and the explicit reference, over a grid of correction parameters.
pub fn run_order_vs_c(
    p: usize,
    c_grid: &[f64],
    soln_nodes: QuadKind,
    flux_nodes: QuadKind,
) -> Result<OrderVsCStudy> {
    let mut rows = Vec::new();
    let mut dt_check_rate_delta = 0.0f64;
    for (idx, &c) in c_grid.iter().enumerate() {
        let e16 = st_advection_error(p, 16, c, soln_nodes, flux_nodes)?;
        let e32 = st_advection_error(p, 32, c, soln_nodes, flux_nodes)?;
        let rate_st = convergence_rates(&[e16, e32], &[16, 32])?[0];
        let m16 = mol_advection_error(p, 16, c, soln_nodes, flux_nodes, 1.0)?;
        let m32 = mol_advection_error(p, 32, c, soln_nodes, flux_nodes, 1.0)?;
        let rate_mol = convergence_rates(&[m16, m32], &[16, 32])?[0];
        if idx == 0 {
            // halving the step must leave the rate unchanged
            let h16 = mol_advection_error(p, 16, c, soln_nodes, flux_nodes, 0.5)?;
            let h32 = mol_advection_error(p, 32, c, soln_nodes, flux_nodes, 0.5)?;
            let rate_half = convergence_rates(&[h16, h32], &[16, 32])?[0];
            dt_check_rate_delta = (rate_half - rate_mol).abs();
        }
        rows.push(OrderVsCRow { c, rate_st, rate_mol });
    }
    Ok(OrderVsCStudy { rows, dt_check_rate_delta })
}

// ------------------------------------------------------------- entropy

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    /// Entropy-conserving fluxes everywhere; coupled solve; the preservation
    /// residual should sit at solver precision.
    Preserve,
    /// Upwind temporal flux; the entropy series must not increase.
    Stable,
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "preserve" => Ok(EntropyMode::Preserve),
            "stable" => Ok(EntropyMode::Stable),
            other => Err(Error::Config(format!("unknown entropy mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EntropyStudy {
    pub report: EntropyReport<f64>,
    pub fingerprint: u64,
    pub header: String,
}

impl EntropyStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.header);
        let _ = writeln!(out, "# fingerprint={:016x}", self.fingerprint);
        let _ = writeln!(out, "# preservation_residual={:.6e}", self.report.preservation_residual);
        let _ = writeln!(out, "# max_increment={:.6e}", self.report.max_increment);
        let _ = writeln!(out, "# total_change={:.6e}", self.report.total_change());
        let _ = writeln!(out, "level,t,entropy");
        let kt = self.report.totals.len() - 1;
        for (j, e) in self.report.totals.iter().enumerate() {
            let t = T_RANGE.0 + (T_RANGE.1 - T_RANGE.0) * j as f64 / kt as f64;
            let _ = writeln!(out, "{j},{t:.6},{e:.12e}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

/// Entropy preservation or stability study on the configured case. The mode
/// overrides the temporal flux and interface dissipation accordingly.
pub fn run_entropy_study(base: &RunConfig, mode: EntropyMode) -> Result<EntropyStudy> {
    let mut cfg = base.clone();
    cfg.scheme = SchemeKind::Nsfr;
    cfg.dissipation = DissipationKind::None;
    cfg.temporal_flux = match mode {
        EntropyMode::Preserve => TemporalFlux::TwoPoint,
        EntropyMode::Stable => TemporalFlux::Upwind,
    };
    if cfg.ic == IcKind::Exact {
        cfg.ic = match cfg.model {
            ModelKind::Euler => IcKind::ShockTube,
            _ => IcKind::EntropySine,
        };
    }
    let case = run_case(&cfg)?;
    Ok(EntropyStudy {
        report: case.entropy,
        fingerprint: cfg.fingerprint(),
        header: cfg.canonical_string(),
    })
}

// ------------------------------------------------------------- cost

#[derive(Debug, Clone)]
pub struct CostRow {
    pub soln_nodes: QuadKind,
    pub flux_nodes: QuadKind,
    pub c: f64,
    pub last_slab_rhs: u64,
    /// Count divided by the GLL/GL count at the same c.
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct CostStudy {
    pub rows: Vec<CostRow>,
    pub header: String,
}

impl CostStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.header);
        let _ = writeln!(out, "soln_nodes,flux_nodes,c,last_slab_rhs_assemblies,normalized");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:e},{},{:.4}",
                r.soln_nodes.short_name(),
                r.flux_nodes.short_name(),
                r.c,
                r.last_slab_rhs,
                r.normalized
            );
        }
        out
    }

    pub fn last_slab_rhs(&self, sk: QuadKind, fk: QuadKind, c: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.soln_nodes == sk && r.flux_nodes == fk && r.c == c)
            .map(|r| r.last_slab_rhs)
    }
}

/// Assembly-count sweep over node combinations and correction parameters for
/// the marching solve of the configured case.
pub fn run_cost_study(
    base: &RunConfig,
    node_combos: &[(QuadKind, QuadKind)],
    c_grid: &[f64],
) -> Result<CostStudy> {
    let mut rows = Vec::new();
    for &(sk, fk) in node_combos {
        for &c in c_grid {
            let mut cfg = base.clone();
            cfg.soln_nodes = sk;
            cfg.flux_nodes = fk;
            cfg.c = CSpec::Value(c);
            cfg.temporal_flux = TemporalFlux::Upwind;
            let case = run_case(&cfg)?;
            rows.push(CostRow {
                soln_nodes: sk,
                flux_nodes: fk,
                c,
                last_slab_rhs: case.stats.last_slab_rhs(),
                normalized: 0.0,
            });
        }
    }
    // normalize by the GLL/GL count at the same c
    let reference: Vec<(f64, u64)> = rows
        .iter()
        .filter(|r| {
            r.soln_nodes == QuadKind::GaussLobatto && r.flux_nodes == QuadKind::GaussLegendre
        })
        .map(|r| (r.c, r.last_slab_rhs))
        .collect();
    for r in rows.iter_mut() {
        if let Some((_, base_count)) = reference.iter().find(|(c, _)| *c == r.c) {
            r.normalized = r.last_slab_rhs as f64 / *base_count as f64;
        }
    }
    Ok(CostStudy { rows, header: base.canonical_string() })
}

// ------------------------------------------------------------- selftest

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Deterministic property suite mirroring the structural identities of the
/// discretization; `seed` controls the randomized state pairs.
pub fn selftest(seed: u64) -> Vec<CheckResult> {
    let mut results = Vec::new();

    // quadrature exactness
    {
        let mut worst = 0.0f64;
        for kind in [QuadKind::GaussLegendre, QuadKind::GaussLobatto] {
            let n0 = if kind == QuadKind::GaussLobatto { 2 } else { 1 };
            for n in n0..=10 {
                let rule = crate::basis::make_rule::<f64>(kind, n).unwrap();
                for k in 0..=rule.exactness_degree() {
                    let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                    let q = rule.integrate(|x| x.powi(k as i32));
                    worst = worst.max((q - exact).abs());
                }
            }
        }
        results.push(check("quadrature_exactness", worst < 1e-13, format!("max defect {worst:.2e}")));
    }

    let geom = crate::operators::ElementGeometry::new(0.25f64, 0.25).unwrap();
    let combos = [
        (QuadKind::GaussLobatto, QuadKind::GaussLegendre),
        (QuadKind::GaussLegendre, QuadKind::GaussLegendre),
        (QuadKind::GaussLobatto, QuadKind::GaussLobatto),
        (QuadKind::GaussLegendre, QuadKind::GaussLobatto),
    ];

    // SBP identities and filter/kernel structure
    {
        let mut worst_sbp = 0.0f64;
        let mut worst_k1 = 0.0f64;
        let mut worst_qb = 0.0f64;
        let mut worst_q1 = 0.0f64;
        for (sk, fk) in combos {
            let ops = build_operators(3, 0, sk, fk, c_hu::<f64>(3), geom).unwrap();
            let rep = ops.check_sbp();
            worst_sbp = worst_sbp.max(rep.residual_s).max(rep.residual_t);
            let ones = vec![1.0; ops.n_soln()];
            let mut out = vec![0.0; ops.n_soln()];
            ops.k.matvec(&ones, &mut out);
            let scale = ops.k.max_abs().max(1.0);
            worst_k1 = worst_k1
                .max(out.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale);
            for dir in [crate::operators::Dir::Space, crate::operators::Dir::Time] {
                let q = ops.qtilde(dir);
                let b = ops.boundary_b(dir);
                worst_qb = worst_qb.max(q.add(&q.transpose()).sub(&b).max_abs());
                let ones_h = vec![1.0; ops.n_hybrid()];
                let mut qh = vec![0.0; ops.n_hybrid()];
                q.matvec(&ones_h, &mut qh);
                worst_q1 = worst_q1.max(qh.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            }
        }
        results.push(check("sbp_identities", worst_sbp < 1e-11, format!("max residual {worst_sbp:.2e}")));
        results.push(check("filter_annihilates_constants", worst_k1 < 1e-12, format!("max {worst_k1:.2e}")));
        results.push(check("qtilde_plus_transpose_is_boundary", worst_qb < 1e-13, format!("max {worst_qb:.2e}")));
        results.push(check("qtilde_annihilates_constants", worst_q1 < 1e-12, format!("max {worst_q1:.2e}")));
    }

    // two-point flux identities over seeded random pairs
    {
        let mut rng = crate::util::SplitMix64::new(seed ^ 0x5eed);
        let advection = LinearAdvection::new(ADVECTION_SPEED);
        let burgers = Burgers::new(false);
        let euler = Euler::<f64>::new(EulerDissipation::None);
        let models: [&dyn PhysicsModel<f64>; 3] = [&advection, &burgers, &euler];
        let mut worst = 0.0f64;
        let mut worst_fd = 0.0f64;
        for model in models {
            let ns = model.n_states();
            for _ in 0..1000 {
                let mk_state = |rng: &mut crate::util::SplitMix64| -> Vec<f64> {
                    if ns == 1 {
                        vec![rng.uniform(-3.0, 3.0)]
                    } else {
                        euler
                            .from_primitives(
                                rng.uniform(0.1, 3.0),
                                rng.uniform(-2.0, 2.0),
                                rng.uniform(0.1, 3.0),
                            )
                            .to_vec()
                    }
                };
                let ui = mk_state(&mut rng);
                let uj = mk_state(&mut rng);
                let mut vi = vec![0.0; ns];
                let mut vj = vec![0.0; ns];
                model.entropy_vars(&ui, &mut vi);
                model.entropy_vars(&uj, &mut vj);
                let mut fs = vec![0.0; ns];
                model.two_point_flux_s(&ui, &uj, &mut fs);
                let lhs_s: f64 = (0..ns).map(|k| (vi[k] - vj[k]) * fs[k]).sum();
                let rhs_s = model.spatial_entropy_potential(&ui)
                    - model.spatial_entropy_potential(&uj);
                worst = worst.max((lhs_s - rhs_s).abs() / rhs_s.abs().max(1.0));
                let mut ft = vec![0.0; ns];
                model.two_point_state_t(&ui, &uj, &mut ft);
                let lhs_t: f64 = (0..ns).map(|k| (vi[k] - vj[k]) * ft[k]).sum();
                let rhs_t = model.entropy_potential(&ui) - model.entropy_potential(&uj);
                worst = worst.max((lhs_t - rhs_t).abs() / rhs_t.abs().max(1.0));
                // consistency and symmetry
                let mut fc = vec![0.0; ns];
                let mut fe = vec![0.0; ns];
                model.two_point_flux_s(&ui, &ui, &mut fc);
                model.flux_s(&ui, &mut fe);
                for k in 0..ns {
                    worst = worst.max((fc[k] - fe[k]).abs() / fe[k].abs().max(1.0));
                }
                let mut fji = vec![0.0; ns];
                model.two_point_flux_s(&uj, &ui, &mut fji);
                for k in 0..ns {
                    worst = worst.max((fs[k] - fji[k]).abs() / fs[k].abs().max(1.0));
                }
                // entropy variables against finite differences
                let h = 1e-5;
                for k in 0..ns {
                    let mut up = ui.clone();
                    let mut um = ui.clone();
                    up[k] += h;
                    um[k] -= h;
                    let fd = (model.entropy(&up) - model.entropy(&um)) / (2.0 * h);
                    worst_fd = worst_fd.max((vi[k] - fd).abs() / fd.abs().max(1.0));
                }
            }
        }
        results.push(check("two_point_flux_identities", worst < 1e-11, format!("max relative defect {worst:.2e}")));
        results.push(check("entropy_vars_match_fd", worst_fd < 1e-6, format!("max relative defect {worst_fd:.2e}")));
    }

    // log-mean branch continuity
    {
        let zeta_switch = 1.1f64 / 0.9;
        let mut worst = 0.0f64;
        for i in 0..2001 {
            let zeta = zeta_switch + 2e-5 * (i as f64 - 1000.0);
            let got = crate::physics::log_mean(zeta, 1.0).unwrap();
            let naive = (zeta - 1.0) / zeta.ln();
            worst = worst.max((got - naive).abs() / naive);
        }
        results.push(check("log_mean_branch_continuity", worst < 1e-12, format!("max relative defect {worst:.2e}")));
    }

    // free-stream preservation
    {
        let mut worst = 0.0f64;
        let mesh = SpaceTimeMesh::new(2, 2, X_RANGE, T_RANGE).unwrap();
        let euler = Euler::<f64>::new(EulerDissipation::None);
        for (sk, fk) in combos {
            let ops = build_operators(3, 0, sk, fk, c_hu::<f64>(3), mesh.geometry()).unwrap();
            let bc = BoundaryData::new(&mesh, &ops, 3, false, |_, out| {
                out.copy_from_slice(&[2.0, 2.0, 4.0]);
            });
            let disc = Discretization::new(
                &mesh,
                &ops,
                &euler,
                &bc,
                Scheme::SplitFormFr(TemporalFlux::TwoPoint),
            );
            let field = SolutionField::from_initial(&mesh, &ops, 3, |_, out| {
                out.copy_from_slice(&[2.0, 2.0, 4.0]);
            });
            let mut ws = disc.workspace();
            let mut r = vec![0.0; disc.total_dofs()];
            disc.residual_full(&field, &mut ws, &mut r).unwrap();
            worst = worst.max(r.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        results.push(check("free_stream_preservation", worst < 1e-11, format!("max residual {worst:.2e}")));
    }

    // Hadamard gather against the dense double sum
    {
        let mut worst = 0.0f64;
        let mesh = SpaceTimeMesh::new(1, 1, X_RANGE, T_RANGE).unwrap();
        let burgers = Burgers::new(false);
        let ops = build_operators(
            2,
            0,
            QuadKind::GaussLobatto,
            QuadKind::GaussLegendre,
            c_hu::<f64>(2),
            mesh.geometry(),
        )
        .unwrap();
        let bc = BoundaryData::from_exact(&mesh, &ops, &burgers);
        let disc = Discretization::new(
            &mesh,
            &ops,
            &burgers,
            &bc,
            Scheme::SplitFormFr(TemporalFlux::Upwind),
        );
        let mut rng = crate::util::SplitMix64::new(seed ^ 0xad0d);
        let mut field = SolutionField::zeros(1, 1, ops.n_soln());
        for v in field.as_mut_slice() {
            *v = rng.uniform(0.2, 1.5);
        }
        let nh = ops.n_hybrid();
        let mut utilde = vec![0.0; nh];
        disc.entropy_project_element(field.elem_block(0), &mut utilde).unwrap();
        let j1d = ops.geom.j_1d();
        for dir in [crate::operators::Dir::Space, crate::operators::Dir::Time] {
            let mut g_vol = vec![0.0; ops.n_q()];
            let mut g_face = vec![0.0; 4 * ops.n_f()];
            let mut buf = vec![0.0];
            crate::residual::split_form_gather(
                &ops, &burgers, dir, &utilde, j1d, &mut g_vol, &mut g_face, &mut buf,
            );
            let q = ops.qtilde(dir);
            let askew = q.sub(&q.transpose());
            for i in 0..ops.n_q() {
                let mut expect = 0.0;
                for jn in 0..nh {
                    let mut f = [0.0];
                    match dir {
                        crate::operators::Dir::Space => burgers.two_point_flux_s(
                            &utilde[i..i + 1],
                            &utilde[jn..jn + 1],
                            &mut f,
                        ),
                        crate::operators::Dir::Time => burgers.two_point_state_t(
                            &utilde[i..i + 1],
                            &utilde[jn..jn + 1],
                            &mut f,
                        ),
                    }
                    expect += askew[(i, jn)] * j1d * f[0];
                }
                worst = worst.max((g_vol[i] - expect).abs());
            }
        }
        results.push(check("hadamard_vs_double_sum", worst < 1e-12, format!("max defect {worst:.2e}")));
    }

    // conservation on a converged solve
    {
        let mut cfg = RunConfig::new(ModelKind::Burgers, SchemeKind::Nsfr, 2, 4);
        cfg.dissipation = DissipationKind::Llf;
        let case = run_case(&cfg).unwrap();
        let worst = case.conservation.iter().fold(0.0f64, |m, x| m.max(*x));
        results.push(check("conservation_on_converged_solve", worst < 1e-10, format!("residual {worst:.2e}")));
    }

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprints_are_stable_and_distinguish_configs() {
        let a = RunConfig::new(ModelKind::Advection, SchemeKind::Esfr, 3, 8);
        let b = RunConfig::new(ModelKind::Advection, SchemeKind::Esfr, 3, 16);
        assert_eq!(a.fingerprint(), a.fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = RunConfig::new(ModelKind::Advection, SchemeKind::Esfr, 3, 4);
        cfg.temporal_flux = TemporalFlux::TwoPoint;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(ModelKind::Euler, SchemeKind::Nsfr, 3, 4);
        cfg.dissipation = DissipationKind::Llf;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(ModelKind::Burgers, SchemeKind::Nsfr, 3, 4);
        cfg.ic = IcKind::ShockTube;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::new(ModelKind::Burgers, SchemeKind::Mol, 3, 4);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_has_metadata_and_header() {
        let mut cfg = RunConfig::new(ModelKind::Advection, SchemeKind::Esfr, 2, 2);
        cfg.newton_tol = Some(1e-10);
        let table = run_convergence(&cfg, &[2, 4]).unwrap();
        let csv = table.to_csv();
        assert!(csv.starts_with("# "));
        assert!(csv.contains("fingerprint="));
        assert!(csv.contains("N,l2_error,rate"));
        assert_eq!(csv.lines().count(), 5);
        assert!(table.failures.is_empty());
        assert!(table.final_rate().is_some());
    }

    #[test]
    fn rerunning_a_config_reproduces_numeric_fields() {
        let cfg = RunConfig::new(ModelKind::Burgers, SchemeKind::Nsfr, 2, 2);
        let t1 = run_convergence(&cfg, &[2, 4]).unwrap();
        let t2 = run_convergence(&cfg, &[2, 4]).unwrap();
        assert_eq!(t1.to_csv(), t2.to_csv());
    }

    #[test]
    fn selftest_passes() {
        let results = selftest(12345);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert!(results.len() >= 9);
    }

    #[test]
    fn entropy_study_modes() {
        let mut cfg = RunConfig::new(ModelKind::Burgers, SchemeKind::Nsfr, 2, 2);
        cfg.p = 2;
        let preserve = run_entropy_study(&cfg, EntropyMode::Preserve).unwrap();
        assert!(preserve.report.preservation_residual.abs() < 1e-11);
        let stable = run_entropy_study(&cfg, EntropyMode::Stable).unwrap();
        assert!(stable.report.max_increment <= 1e-12);
        assert!(stable.to_csv().contains("level,t,entropy"));
    }
}

//! Experiment driver for the space-time flux reconstruction solvers.
//!
//! Subcommands: `converge` (grid refinement tables), `order-vs-c`
//! (experimental order against the correction parameter, space-time versus
//! method of lines), `entropy` (preservation / stability studies), `cost`
//! (solver assembly counts over node choices and c), and `selftest`
//! (structural property suite). Runs are configured by flags or by a plain
//! `key=value` file with flags taking precedence; every CSV carries the
//! configuration fingerprint.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use stfr::basis::QuadKind;
use stfr::harness::{
    self, CSpec, DissipationKind, EntropyMode, IcKind, ModelKind, RunConfig, SchemeKind,
};
use stfr::residual::TemporalFlux;

#[derive(Parser)]
#[command(name = "stfr", about = "Space-time flux reconstruction experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-refinement convergence table (CSV: N, L2 error, rate).
    Converge(ConvergeArgs),
    /// Experimental order from the 16->32 refinement over a c grid, for the
    /// space-time scheme and the explicit method-of-lines reference.
    #[command(name = "order-vs-c")]
    OrderVsC(OrderArgs),
    /// Entropy preservation or stability study.
    Entropy(EntropyArgs),
    /// Last-timeslab assembly counts over node combinations and c values.
    Cost(CostArgs),
    /// Structural property suites; exits nonzero on any failure.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone)]
struct CaseFlags {
    /// Plain key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// advection | burgers | euler
    #[arg(long)]
    model: Option<String>,
    /// esfr | nsfr | mol
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    /// Grid is N x N.
    #[arg(long)]
    n: Option<usize>,
    /// c_dg | c_hu | numeric value
    #[arg(long)]
    c: Option<String>,
    /// GL | GLL
    #[arg(long)]
    soln_nodes: Option<String>,
    /// GL | GLL
    #[arg(long)]
    flux_nodes: Option<String>,
    #[arg(long)]
    n_oi: Option<usize>,
    /// upwind | two_point
    #[arg(long)]
    temporal_flux: Option<String>,
    /// none | llf | matrix | upwind
    #[arg(long)]
    dissipation: Option<String>,
    /// exact | entropy-sine | shock-tube
    #[arg(long)]
    ic: Option<String>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    krylov_tol: Option<f64>,
    #[arg(long)]
    krylov_restart: Option<usize>,
    #[arg(long)]
    no_warm_start: bool,
    /// Seed for randomized property suites.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    case: CaseFlags,
    /// Comma-separated grid sizes, e.g. 2,4,8,16.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OrderArgs {
    #[command(flatten)]
    case: CaseFlags,
    /// Comma-separated c values; defaults to a log sweep 1e-7..1e4.
    #[arg(long, value_delimiter = ',')]
    c_grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    case: CaseFlags,
    /// preserve | stable
    #[arg(long, default_value = "stable")]
    mode: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    case: CaseFlags,
    /// Comma-separated c values for the sweep.
    #[arg(long, value_delimiter = ',')]
    c_grid: Vec<f64>,
    /// Node combinations soln/flux, e.g. GLL/GL,GL/GL; default all four.
    #[arg(long, value_delimiter = ',')]
    combos: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_config_file(path: &PathBuf) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Merges the config file (if any) with flag overrides into a RunConfig.
fn build_config(flags: &CaseFlags) -> Result<RunConfig, String> {
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => HashMap::new(),
    };
    let pick = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| file.get(key).cloned())
    };
    let parse_as =
        |s: Option<String>, default: &str| -> String { s.unwrap_or_else(|| default.to_string()) };

    let model = ModelKind::from_str(&parse_as(pick(&flags.model, "model"), "advection"))
        .map_err(|e| e.to_string())?;
    let scheme_default = match model {
        ModelKind::Advection => "esfr",
        _ => "nsfr",
    };
    let scheme =
        SchemeKind::from_str(&parse_as(pick(&flags.scheme, "scheme"), scheme_default))
            .map_err(|e| e.to_string())?;
    let p = flags
        .p
        .or_else(|| file.get("p").and_then(|v| v.parse().ok()))
        .unwrap_or(3);
    let n = flags
        .n
        .or_else(|| file.get("n").and_then(|v| v.parse().ok()))
        .unwrap_or(8);
    let mut cfg = RunConfig::new(model, scheme, p, n);
    if let Some(c) = pick(&flags.c, "c") {
        cfg.c = CSpec::from_str(&c).map_err(|e| e.to_string())?;
    }
    if let Some(s) = pick(&flags.soln_nodes, "soln_nodes") {
        cfg.soln_nodes = QuadKind::from_str(&s).map_err(|e| e.to_string())?;
    }
    if let Some(s) = pick(&flags.flux_nodes, "flux_nodes") {
        cfg.flux_nodes = QuadKind::from_str(&s).map_err(|e| e.to_string())?;
    }
    if let Some(v) = flags.n_oi.or_else(|| file.get("n_oi").and_then(|v| v.parse().ok())) {
        cfg.n_oi = v;
    }
    if let Some(s) = pick(&flags.temporal_flux, "temporal_flux") {
        cfg.temporal_flux = match s.to_ascii_lowercase().as_str() {
            "upwind" => TemporalFlux::Upwind,
            "two_point" | "two-point" => TemporalFlux::TwoPoint,
            other => return Err(format!("unknown temporal flux '{other}'")),
        };
    }
    if let Some(s) = pick(&flags.dissipation, "dissipation") {
        cfg.dissipation = DissipationKind::from_str(&s).map_err(|e| e.to_string())?;
    }
    if let Some(s) = pick(&flags.ic, "ic") {
        cfg.ic = IcKind::from_str(&s).map_err(|e| e.to_string())?;
    }
    cfg.newton_tol =
        flags.newton_tol.or_else(|| file.get("newton_tol").and_then(|v| v.parse().ok()));
    cfg.krylov_rel_tol =
        flags.krylov_tol.or_else(|| file.get("krylov_tol").and_then(|v| v.parse().ok()));
    cfg.krylov_restart =
        flags.krylov_restart.or_else(|| file.get("krylov_restart").and_then(|v| v.parse().ok()));
    if flags.no_warm_start {
        cfg.warm_start = false;
    }
    if let Some(seed) = flags.seed.or_else(|| file.get("seed").and_then(|v| v.parse().ok())) {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_converge(args: &ConvergeArgs) -> Result<bool, String> {
    let cfg = build_config(&args.case)?;
    let n_list = if args.n_list.is_empty() { vec![2, 4, 8, 16] } else { args.n_list.clone() };
    let table = harness::run_convergence(&cfg, &n_list).map_err(|e| e.to_string())?;
    emit(&table.to_csv(), &args.out)?;
    for f in &table.failures {
        eprintln!("solver failure: {f}");
    }
    Ok(table.failures.is_empty())
}

fn cmd_order(args: &OrderArgs) -> Result<bool, String> {
    let cfg = build_config(&args.case)?;
    let c_grid = if args.c_grid.is_empty() {
        vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4]
    } else {
        args.c_grid.clone()
    };
    let study = harness::run_order_vs_c(cfg.p, &c_grid, cfg.soln_nodes, cfg.flux_nodes)
        .map_err(|e| e.to_string())?;
    emit(&study.to_csv(), &args.out)?;
    Ok(true)
}

fn cmd_entropy(args: &EntropyArgs) -> Result<bool, String> {
    let cfg = build_config(&args.case)?;
    let mode = EntropyMode::from_str(&args.mode).map_err(|e| e.to_string())?;
    let study = harness::run_entropy_study(&cfg, mode).map_err(|e| e.to_string())?;
    emit(&study.to_csv(), &args.out)?;
    Ok(true)
}

fn parse_combo(s: &str) -> Result<(QuadKind, QuadKind), String> {
    let (a, b) = s.split_once('/').ok_or_else(|| format!("combo '{s}' must be soln/flux"))?;
    Ok((
        QuadKind::from_str(a).map_err(|e| e.to_string())?,
        QuadKind::from_str(b).map_err(|e| e.to_string())?,
    ))
}

fn cmd_cost(args: &CostArgs) -> Result<bool, String> {
    let cfg = build_config(&args.case)?;
    let combos = if args.combos.is_empty() {
        vec![
            (QuadKind::GaussLobatto, QuadKind::GaussLegendre),
            (QuadKind::GaussLegendre, QuadKind::GaussLegendre),
            (QuadKind::GaussLobatto, QuadKind::GaussLobatto),
            (QuadKind::GaussLegendre, QuadKind::GaussLobatto),
        ]
    } else {
        args.combos.iter().map(|s| parse_combo(s)).collect::<Result<Vec<_>, _>>()?
    };
    let c_grid = if args.c_grid.is_empty() {
        vec![0.0, 1e-6, 1e-4, stfr::operators::c_hu::<f64>(cfg.p)]
    } else {
        args.c_grid.clone()
    };
    let study =
        harness::run_cost_study(&cfg, &combos, &c_grid).map_err(|e| e.to_string())?;
    emit(&study.to_csv(), &args.out)?;
    Ok(true)
}

fn cmd_selftest(args: &SelftestArgs) -> bool {
    let results = harness::selftest(args.seed);
    let mut ok = true;
    for r in &results {
        println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Converge(args) => cmd_converge(args),
        Command::OrderVsC(args) => cmd_order(args),
        Command::Entropy(args) => cmd_entropy(args),
        Command::Cost(args) => cmd_cost(args),
        Command::Selftest(args) => Ok(cmd_selftest(args)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

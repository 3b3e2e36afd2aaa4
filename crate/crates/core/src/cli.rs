//! Batch driver: one subcommand per pipeline, parameters from flags and an
//! optional TOML file, results written as CSV plus a JSON summary
//! `{config, results, invariant_report}`.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure (a module
//! rejected its input or an invariant of the run failed).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::discretization::{gaussian_mollifier, make_grid, Grid1D, QuadratureRule};
use crate::error::LabError;
use crate::fermionize::{fermionize, FermionizationReport};
use crate::harriman::{harriman_orbitals, regularity_check, OrbitalKind};
use crate::io::{default_output_dir, plan_to_csv, to_json_string, write_artifact};
use crate::lawrentiev::{
    gap_certificate, gap_constant, lawrentiev_csv, minimize_perturbed, DescentSettings, LawrentievRow,
};
use crate::plan::{symmetrize, CostMatrix, MarginalDensity, TransportPlan, Wavefunction};
use crate::reinstate::{
    coulomb_stability_check, is_strongly_positive, l1_stability_check, project, project_via_expansion,
    recovery_plan, smooth, strong_positivize,
};
use crate::sce::{brute_force_mmot, monge_diagnostic, solve_mmot, MmotProblem, SolveStatus};
use crate::semiclassical::{semiclassical_sweep, sweep_csv, OptimizerSettings, SweepConfig, MOMENT_NAMES};
use crate::verify::{random_plan, render_table, run_suite, InvariantLine, Status, VerifyOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "sce-lab", version, about = "Multi-marginal Coulomb transport and semiclassical-limit experiments")]
struct Cli {
    /// TOML file with parameters for the subcommand; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (default: $OUTPUT_DIR, else the working directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact multi-marginal transport value and plan.
    #[command(allow_negative_numbers = true)]
    Sce(SceArgs),
    /// Alpha sweep of the constrained-search functional against V_sce.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Marginal-reinstating projection of a random plan.
    #[command(allow_negative_numbers = true)]
    ReinstateDemo(ReinstateArgs),
    /// Node insertion and excess-density representation.
    #[command(allow_negative_numbers = true)]
    FermionizeDemo(FermionizeArgs),
    /// Orthonormal orbitals with a prescribed density.
    #[command(allow_negative_numbers = true)]
    Harriman(HarrimanArgs),
    /// Perturbed Mania functional and the gap certificate.
    #[command(allow_negative_numbers = true)]
    Lawrentiev(LawrentievArgs),
    /// Full invariant suite with a pass/fail table.
    VerifyAll(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// Equal node masses (constant density for `harriman`).
    Uniform,
    /// Proportional to `1 + sin(pi y)` on the rescaled interval.
    Bump,
    /// Proportional to `y` on the rescaled interval (`2y` on `[0, 1]`).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Trapezoid,
    Gregory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Complex,
    Real,
}

/// Fills unset flags from the config file.
trait Layered: DeserializeOwned + Sized {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! layered {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Layered for $t {
            fn overlay(self, file: Self) -> Self {
                Self { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SceArgs {
    /// Grid nodes [default: 3].
    #[arg(long)]
    n: Option<usize>,
    /// Particle number N [default: 2].
    #[arg(long)]
    bodies: Option<usize>,
    /// Marginal [default: uniform].
    #[arg(long, value_enum)]
    mu: Option<DensityKind>,
    /// Left grid end [default: 0].
    #[arg(long)]
    left: Option<f64>,
    /// Right grid end [default: left + n - 1, unit spacing].
    #[arg(long)]
    right: Option<f64>,
}
layered!(SceArgs { n, bodies, mu, left, right });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SweepArgs {
    /// Grid nodes [default: 8].
    #[arg(long)]
    n: Option<usize>,
    /// Particle number N [default: 2].
    #[arg(long)]
    bodies: Option<usize>,
    /// Marginal [default: uniform].
    #[arg(long, value_enum)]
    mu: Option<DensityKind>,
    /// Left grid end [default: 0].
    #[arg(long)]
    left: Option<f64>,
    /// Right grid end [default: 1].
    #[arg(long)]
    right: Option<f64>,
    /// Strictly decreasing alphas [default: 1,1e-1,1e-2,1e-3,1e-4].
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Mollifier widths of the recovery schedule [default: 2h,h,h/2,h/5,h/20].
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Mixing weights of the recovery schedule [default: 0.1,0.03,0.01,1e-3,1e-4].
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Bosonic descent iterations per alpha [default: 3000].
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Relative moment deviation that counts as a minimizer mismatch [default: 0.05].
    #[arg(long)]
    moment_tolerance: Option<f64>,
}
layered!(SweepArgs { n, bodies, mu, left, right, alphas, epsilons, betas, max_iterations, moment_tolerance });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ReinstateArgs {
    /// Grid nodes [default: 8].
    #[arg(long)]
    n: Option<usize>,
    /// Particle number N [default: 2].
    #[arg(long)]
    bodies: Option<usize>,
    /// Target marginal mu_B [default: bump].
    #[arg(long, value_enum)]
    mu: Option<DensityKind>,
    /// Left grid end [default: 0].
    #[arg(long)]
    left: Option<f64>,
    /// Right grid end [default: 1].
    #[arg(long)]
    right: Option<f64>,
    /// Mollifier width of the recovery step [default: 2h].
    #[arg(long)]
    epsilon: Option<f64>,
    /// Mixing weight of the recovery step [default: 0.1].
    #[arg(long)]
    beta: Option<f64>,
    /// Seed of the random source plan [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}
layered!(ReinstateArgs { n, bodies, mu, left, right, epsilon, beta, seed });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FermionizeArgs {
    /// Grid nodes [default: 17].
    #[arg(long)]
    n: Option<usize>,
    /// Particle number N [default: 2].
    #[arg(long)]
    bodies: Option<usize>,
    /// One-body density of the bosonic state [default: bump].
    #[arg(long, value_enum)]
    mu: Option<DensityKind>,
    /// Left grid end [default: 0].
    #[arg(long)]
    left: Option<f64>,
    /// Right grid end [default: 1].
    #[arg(long)]
    right: Option<f64>,
    /// Node widths [default: 4h,2h,h].
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
}
layered!(FermionizeArgs { n, bodies, mu, left, right, deltas });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct HarrimanArgs {
    /// Grid nodes [default: 401].
    #[arg(long)]
    n: Option<usize>,
    /// Number of orbitals [default: 3].
    #[arg(long)]
    count: Option<usize>,
    /// Density [default: uniform].
    #[arg(long, value_enum)]
    mu: Option<DensityKind>,
    /// Orbital family [default: complex].
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Quadrature rule [default: gregory].
    #[arg(long, value_enum)]
    rule: Option<RuleKind>,
    /// Left grid end [default: 0].
    #[arg(long)]
    left: Option<f64>,
    /// Right grid end [default: 1].
    #[arg(long)]
    right: Option<f64>,
}
layered!(HarrimanArgs { n, count, mu, kind, rule, left, right });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct LawrentievArgs {
    /// Perturbation strengths [default: 1e-3,1e-2,1e-1].
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Grid nodes on [0, 1] [default: 2001].
    #[arg(long)]
    n: Option<usize>,
    /// L-BFGS iterations per start [default: 20000].
    #[arg(long)]
    max_iterations: Option<usize>,
}
layered!(LawrentievArgs { eps, n, max_iterations });

#[derive(Args, Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct VerifyArgs {
    /// Fewer random instances and coarser grids.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    quick: Option<bool>,
    /// Seed of the random instances [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}
layered!(VerifyArgs { quick, seed });

/// Output of one subcommand before it is written.
struct RunOutput {
    command: &'static str,
    config: Value,
    results: Value,
    invariants: Vec<InvariantLine>,
    /// Extra artifacts as `(file name, contents)`.
    artifacts: Vec<(String, String)>,
    stdout: String,
}

fn line(name: &'static str, claim: &'static str, ok: bool, detail: String) -> InvariantLine {
    InvariantLine { name, claim, status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn info(name: &'static str, claim: &'static str, detail: String) -> InvariantLine {
    InvariantLine { name, claim, status: Status::Info, detail }
}

fn load<T: Layered>(flags: T, config: Option<&Path>) -> CliResult<T> {
    let Some(path) = config else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: T = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    Ok(flags.overlay(file))
}

fn grid_for(n: usize, left: f64, right: f64, rule: QuadratureRule) -> CliResult<Grid1D> {
    Ok(Grid1D::with_rule(left, right, n, rule)?)
}

/// Density of the requested shape; `constant_uniform` selects constant
/// values instead of equal masses.
fn build_density(kind: DensityKind, grid: &Grid1D, bodies: usize, constant_uniform: bool) -> CliResult<MarginalDensity> {
    let (a, b) = (grid.left(), grid.right());
    let y = |x: f64| (x - a) / (b - a);
    let mu = match kind {
        DensityKind::Uniform if constant_uniform => {
            MarginalDensity::normalized(grid.clone(), vec![1.0; grid.len()], bodies)?
        }
        DensityKind::Uniform => MarginalDensity::uniform_masses(grid.clone(), bodies)?,
        DensityKind::Bump => MarginalDensity::normalized(
            grid.clone(),
            grid.nodes().iter().map(|&x| 1.0 + (std::f64::consts::PI * y(x)).sin()).collect(),
            bodies,
        )?,
        DensityKind::Linear => {
            MarginalDensity::normalized(grid.clone(), grid.nodes().iter().map(|&x| y(x)).collect(), bodies)?
        }
    };
    Ok(mu)
}

fn max_marginal_error(plan: &TransportPlan, mu: &MarginalDensity) -> f64 {
    plan.marginal_error(mu.values())
}

#[derive(Serialize)]
struct SceConfig {
    n: usize,
    bodies: usize,
    mu: DensityKind,
    left: f64,
    right: f64,
}

fn run_sce(args: SceArgs) -> CliResult<RunOutput> {
    let n = args.n.unwrap_or(3);
    let left = args.left.unwrap_or(0.0);
    let cfg = SceConfig {
        n,
        bodies: args.bodies.unwrap_or(2),
        mu: args.mu.unwrap_or(DensityKind::Uniform),
        left,
        right: args.right.unwrap_or(left + n.saturating_sub(1) as f64),
    };
    let grid = make_grid(cfg.left, cfg.right, cfg.n)?;
    let mu = build_density(cfg.mu, &grid, cfg.bodies, false)?;
    let problem = MmotProblem::strict(mu.clone(), cfg.bodies)?;
    let solution = solve_mmot(&problem)?;

    let mut invariants = Vec::new();
    let mut artifacts = Vec::new();
    if let Some(plan) = solution.plan() {
        let err = max_marginal_error(plan, &mu);
        invariants.push(line("feasibility", "every one-body marginal equals mu", err < 1e-9, format!("{err:.2e}")));
        artifacts.push(("sce_plan.csv".to_string(), plan_to_csv(plan)));
    }
    match brute_force_mmot(&problem) {
        Ok(bf) => {
            let diff = if bf.value().is_finite() || solution.value().is_finite() {
                (bf.value() - solution.value()).abs()
            } else {
                0.0
            };
            invariants.push(line(
                "brute_force",
                "LP value equals vertex enumeration",
                diff < 1e-9,
                format!("|LP - enumeration| = {diff:.2e}"),
            ));
        }
        Err(LabError::InvalidArgument(msg)) => {
            invariants.push(info("brute_force", "LP value equals vertex enumeration", format!("skipped: {msg}")));
        }
        Err(e) => return Err(e.into()),
    }

    let mut results = solution.to_json(cfg.n, cfg.bodies);
    results["iterations"] = json!(solution.iterations());
    results["monge"] = serde_json::to_value(monge_diagnostic(&solution)).expect("serializable");
    let stdout = match solution.status() {
        SolveStatus::Optimal => format!("V_sce = {:.12}\n", solution.value()),
        SolveStatus::Infeasible => "infeasible: no plan avoids coincident particles\n".to_string(),
    };
    Ok(RunOutput {
        command: "sce",
        config: serde_json::to_value(&cfg).expect("serializable"),
        results,
        invariants,
        artifacts,
        stdout,
    })
}

#[derive(Serialize)]
struct SweepEcho {
    n: usize,
    bodies: usize,
    mu: DensityKind,
    left: f64,
    right: f64,
    alphas: Vec<f64>,
    epsilons: Vec<f64>,
    betas: Vec<f64>,
    optimizer: OptimizerSettings,
    moment_tolerance: f64,
}

fn run_sweep(args: SweepArgs) -> CliResult<RunOutput> {
    let n = args.n.unwrap_or(8);
    let bodies = args.bodies.unwrap_or(2);
    let kind = args.mu.unwrap_or(DensityKind::Uniform);
    let (left, right) = (args.left.unwrap_or(0.0), args.right.unwrap_or(1.0));
    let grid = make_grid(left, right, n)?;
    let mu = build_density(kind, &grid, bodies, false)?;
    let mut config = SweepConfig::standard(mu, bodies);
    if let Some(a) = args.alphas {
        config.alphas = a;
    }
    if let Some(e) = args.epsilons {
        config.epsilons = e;
    }
    if let Some(b) = args.betas {
        config.betas = b;
    }
    if let Some(it) = args.max_iterations {
        config.optimizer.max_iterations = it;
    }
    if let Some(t) = args.moment_tolerance {
        config.moment_tolerance = t;
    }
    let echo = SweepEcho {
        n,
        bodies,
        mu: kind,
        left,
        right,
        alphas: config.alphas.clone(),
        epsilons: config.epsilons.clone(),
        betas: config.betas.clone(),
        optimizer: config.optimizer,
        moment_tolerance: config.moment_tolerance,
    };
    let out = semiclassical_sweep(&config)?;

    let gaps: Vec<f64> = out.records.iter().map(|r| r.gap).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut invariants = vec![line(
        "gaps_nonnegative",
        "F_alpha upper bounds stay above V_sce",
        min_gap >= -1e-9,
        format!("min gap {min_gap:.3e}"),
    )];
    if gaps.len() >= 2 {
        let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
        invariants.push(line(
            "gaps_ordered",
            "the gap at the smallest alpha is below the gap at the largest",
            last < first,
            format!("{first:.3e} -> {last:.3e}"),
        ));
    }
    let last = out.records.last().expect("at least one alpha");
    invariants.push(info(
        "final_relative_gap",
        "relative gap at the smallest alpha",
        format!("{:.3e}", last.gap / last.v_sce),
    ));
    invariants.push(info(
        "moments",
        "test-function moments against the transport minimizer",
        if out.minimizer_mismatch {
            format!("minimizer mismatch: deviation {:.3e}", out.final_moment_deviation)
        } else {
            format!("deviation {:.3e}", out.final_moment_deviation)
        },
    ));

    let mut results = serde_json::to_value(&out).expect("serializable");
    results["moment_names"] = json!(MOMENT_NAMES);
    let mut stdout = String::new();
    for r in &out.records {
        let _ = writeln!(stdout, "alpha {:e}: gap {:.6e}", r.alpha, r.gap);
    }
    Ok(RunOutput {
        command: "sweep",
        config: serde_json::to_value(&echo).expect("serializable"),
        results,
        invariants,
        artifacts: vec![("sweep.csv".to_string(), sweep_csv(&out.records))],
        stdout,
    })
}

#[derive(Serialize)]
struct ReinstateEcho {
    n: usize,
    bodies: usize,
    mu: DensityKind,
    left: f64,
    right: f64,
    epsilon: f64,
    beta: f64,
    seed: u64,
}

fn run_reinstate(args: ReinstateArgs) -> CliResult<RunOutput> {
    let n = args.n.unwrap_or(8);
    let (left, right) = (args.left.unwrap_or(0.0), args.right.unwrap_or(1.0));
    let grid = make_grid(left, right, n)?;
    let cfg = ReinstateEcho {
        n,
        bodies: args.bodies.unwrap_or(2),
        mu: args.mu.unwrap_or(DensityKind::Bump),
        left,
        right,
        epsilon: args.epsilon.unwrap_or(2.0 * grid.spacing()),
        beta: args.beta.unwrap_or(0.1),
        seed: args.seed.unwrap_or(0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gamma = symmetrize(&random_plan(&mut rng, &grid, cfg.bodies)?);
    let mu_a = gamma.marginal_density()?;
    let mu_b = build_density(cfg.mu, &grid, cfg.bodies, false)?;
    let projected = project(&gamma, &mu_b)?;
    let cost = CostMatrix::coulomb(&grid);

    let marginal_error = max_marginal_error(&projected, &mu_b);
    let l1 = l1_stability_check(&gamma, &mu_b)?;
    let mut invariants = vec![
        line("marginals", "P gamma has marginal mu_B", marginal_error < 1e-10, format!("{marginal_error:.2e}")),
        line(
            "l1_stability",
            "||gamma - P gamma||_1 <= (2^(N-1) + (N-1)/2) ||mu_A - mu_B||_1",
            l1.holds(1e-12, 0.0),
            format!("{:.6} <= {:.6}", l1.lhs, l1.rhs),
        ),
    ];
    let expansion_difference = if n.pow(cfg.bodies as u32) <= 4096 {
        let e = project_via_expansion(&gamma, &mu_b)?;
        let d = projected
            .values()
            .iter()
            .zip(e.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        invariants.push(line("expansion", "product expansion agrees with P", d < 1e-12, format!("{d:.2e}")));
        Some(d)
    } else {
        None
    };
    let coulomb = coulomb_stability_check(&gamma, &mu_b, &cost)?;
    invariants.push(info(
        "coulomb_stability",
        "V(P gamma) against V(gamma) + c_* C(N,2) ||mu_A - mu_B||; three-dimensional constant",
        format!("{:.6} vs {:.6}", coulomb.lhs, coulomb.rhs),
    ));
    let kernel = gaussian_mollifier(cfg.epsilon, &grid)?;
    let positive = strong_positivize(&smooth(&gamma, &kernel), cfg.beta)?;
    let positivity = is_strongly_positive(&positive);
    invariants.push(line(
        "strong_positivity",
        "mollified and mixed plan is strongly positive",
        positivity.holds,
        format!("best beta {:.4e}", positivity.best_beta),
    ));
    let recovered = recovery_plan(&gamma, &mu_b, cfg.epsilon, cfg.beta)?;
    let recovery_error = max_marginal_error(&recovered, &mu_b);
    invariants.push(line(
        "recovery_marginals",
        "recovery plan has marginal mu_B",
        recovery_error < 1e-10,
        format!("{recovery_error:.2e}"),
    ));

    let l1_diff: Vec<f64> = mu_a.values().iter().zip(mu_b.values()).map(|(a, b)| a - b).collect();
    let results = json!({
        "mu_a": mu_a.values(),
        "mu_b": mu_b.values(),
        "l1_distance": crate::plan::l1_norm(&grid, &l1_diff),
        "l1_stability": l1,
        "marginal_error": marginal_error,
        "expansion_difference": expansion_difference,
        "coulomb_stability": coulomb,
        "v_gamma": crate::plan::coulomb_energy(&gamma, &cost),
        "v_projected": crate::plan::coulomb_energy(&projected, &cost),
        "v_recovered": crate::plan::coulomb_energy(&recovered, &cost),
        "strong_positivity": positivity,
    });
    let stdout = format!("||gamma - P gamma||_1 = {:.6e} <= {:.6e}\n", l1.lhs, l1.rhs);
    Ok(RunOutput {
        command: "reinstate-demo",
        config: serde_json::to_value(&cfg).expect("serializable"),
        results,
        invariants,
        artifacts: vec![("reinstate_plan.csv".to_string(), plan_to_csv(&projected))],
        stdout,
    })
}

#[derive(Serialize)]
struct FermionizeEcho {
    n: usize,
    bodies: usize,
    mu: DensityKind,
    left: f64,
    right: f64,
    deltas: Vec<f64>,
}

fn fermionize_csv(reports: &[FermionizationReport]) -> String {
    let mut out = String::from(
        "delta,partition_error,density_split_error,excess_l1,vee_phi,vee_psi_delta,vee_psi_prime,vee_tilde,vee_additivity_error\n",
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:e},{:.3e},{:.3e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}",
            r.delta,
            r.partition_error,
            r.density_split_error,
            r.excess_l1,
            r.vee_phi,
            r.vee_psi_delta,
            r.vee_psi_prime,
            r.vee_tilde,
            r.vee_additivity_error
        );
    }
    out
}

fn run_fermionize(args: FermionizeArgs) -> CliResult<RunOutput> {
    let n = args.n.unwrap_or(17);
    let (left, right) = (args.left.unwrap_or(0.0), args.right.unwrap_or(1.0));
    let grid = make_grid(left, right, n)?;
    let h = grid.spacing();
    let cfg = FermionizeEcho {
        n,
        bodies: args.bodies.unwrap_or(2),
        mu: args.mu.unwrap_or(DensityKind::Bump),
        left,
        right,
        deltas: args.deltas.unwrap_or_else(|| vec![4.0 * h, 2.0 * h, h]),
    };
    let mu = build_density(cfg.mu, &grid, cfg.bodies, false)?;
    let phi = Wavefunction::from_plan(&TransportPlan::product(&mu, cfg.bodies)?);
    let cost = CostMatrix::coulomb(&grid);
    let reports = cfg.deltas.iter().map(|&d| fermionize(&phi, d, &cost)).collect::<crate::Result<Vec<_>>>()?;

    let worst = |f: fn(&FermionizationReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let mut invariants = vec![
        line("partition", "A^2 + B^2 = 1", worst(|r| r.partition_error) < 1e-12, format!("{:.2e}", worst(|r| r.partition_error))),
        line(
            "density_split",
            "|Phi'|^2 + rho_N = |Phi|^2",
            worst(|r| r.density_split_error) < 1e-12,
            format!("{:.2e}", worst(|r| r.density_split_error)),
        ),
        line(
            "vee_additivity",
            "V(Psi~) = V(Psi_delta) + V(Psi')",
            worst(|r| r.vee_additivity_error) < 1e-10,
            format!("{:.2e}", worst(|r| r.vee_additivity_error)),
        ),
        line(
            "antisymmetry",
            "Psi~ is antisymmetric",
            worst(|r| r.antisymmetry_defect) < 1e-12,
            format!("{:.2e}", worst(|r| r.antisymmetry_defect)),
        ),
    ];
    let excess_min = reports.iter().map(|r| r.excess_min).fold(f64::INFINITY, f64::min);
    invariants.push(line("excess_nonnegative", "rho' >= 0", excess_min >= 0.0, format!("min {excess_min:.3e}")));
    let lip = reports.iter().map(|r| r.lipschitz.lhs / r.lipschitz.rhs).fold(0.0, f64::max);
    invariants.push(line("lipschitz", "B_delta obeys its Lipschitz bound", lip <= 1.0, format!("max slope / bound {lip:.3}")));
    let decreasing = cfg.deltas.windows(2).all(|w| w[1] < w[0]);
    if decreasing && reports.len() >= 2 {
        let diffs: Vec<f64> = reports.iter().map(|r| (r.vee_psi_delta - r.vee_phi).abs()).collect();
        let ok = diffs.windows(2).all(|w| w[1] <= w[0]);
        invariants.push(line(
            "vee_convergence",
            "|V(Psi_delta) - V(Phi)| shrinks with delta",
            ok,
            diffs.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" -> "),
        ));
    }
    invariants.push(info(
        "representation",
        "marginal error of the Slater representative of rho'",
        format!("{:.2e}", worst(|r| r.representation_error)),
    ));

    let mut stdout = String::new();
    for r in &reports {
        let _ = writeln!(stdout, "delta {:e}: V(Psi_delta) = {:.6}, ||rho'||_1 = {:.4e}", r.delta, r.vee_psi_delta, r.excess_l1);
    }
    Ok(RunOutput {
        command: "fermionize-demo",
        config: serde_json::to_value(&cfg).expect("serializable"),
        results: json!({ "reports": reports }),
        invariants,
        artifacts: vec![("fermionize.csv".to_string(), fermionize_csv(&reports))],
        stdout,
    })
}

#[derive(Serialize)]
struct HarrimanEcho {
    n: usize,
    count: usize,
    mu: DensityKind,
    kind: KindArg,
    rule: RuleKind,
    left: f64,
    right: f64,
}

fn run_harriman(args: HarrimanArgs) -> CliResult<RunOutput> {
    let cfg = HarrimanEcho {
        n: args.n.unwrap_or(401),
        count: args.count.unwrap_or(3),
        mu: args.mu.unwrap_or(DensityKind::Uniform),
        kind: args.kind.unwrap_or(KindArg::Complex),
        rule: args.rule.unwrap_or(RuleKind::Gregory),
        left: args.left.unwrap_or(0.0),
        right: args.right.unwrap_or(1.0),
    };
    let rule = match cfg.rule {
        RuleKind::Trapezoid => QuadratureRule::Trapezoid,
        RuleKind::Gregory => QuadratureRule::Gregory,
    };
    let kind = match cfg.kind {
        KindArg::Complex => OrbitalKind::Complex,
        KindArg::Real => OrbitalKind::Real,
    };
    let grid = grid_for(cfg.n, cfg.left, cfg.right, rule)?;
    if cfg.count == 0 {
        return Err(CliError::Validation("need at least one orbital".into()));
    }
    let v = build_density(cfg.mu, &grid, cfg.count, true)?;
    let set = harriman_orbitals(&v, cfg.count, kind)?;

    // The cumulative map is exact only for piecewise linear densities; for
    // others the Gram defect is of the order of the trapezoid error.
    let exact_map = cfg.mu != DensityKind::Bump && cfg.rule == RuleKind::Gregory;
    let tol = if exact_map { 1e-8 } else { 10.0 * grid.spacing().powi(2) };
    let ortho = set.orthonormality_error();
    let density = set.density_error();
    let round_trip = set.map().round_trip_error();
    let mut invariants = vec![
        line("orthonormality", "lifted modes are orthonormal", ortho < tol, format!("{ortho:.2e} (tolerance {tol:.1e})")),
        line("density", "sum |phi_k|^2 = rho", density < 1e-10, format!("{density:.2e}")),
        line("round_trip", "T inverts F", round_trip < 1e-12, format!("{round_trip:.2e}")),
    ];
    let regularity = regularity_check(&set)?;
    let grad = regularity.gradient_formula_error;
    if cfg.count == 1 {
        invariants.push(line(
            "gradient_formula",
            "chain-rule gradient matches finite differences",
            grad < 1e-2 && regularity.gradients_finite(),
            format!("{grad:.2e}"),
        ));
    } else {
        // Central differences lose accuracy like k^3 h^2 for higher modes.
        invariants.push(info("gradient_formula", "chain-rule gradient against finite differences", format!("{grad:.2e}")));
    }
    let results = json!({
        "orthonormality_error": ortho,
        "density_error": density,
        "round_trip_error": round_trip,
        "regularity": regularity,
        "modes": set.modes(),
    });
    let stdout = format!("{} orbitals, Gram defect {ortho:.2e}, density error {density:.2e}\n", set.len());
    Ok(RunOutput {
        command: "harriman",
        config: serde_json::to_value(&cfg).expect("serializable"),
        results,
        invariants,
        artifacts: vec![("harriman.csv".to_string(), set.to_csv())],
        stdout,
    })
}

#[derive(Serialize)]
struct LawrentievEcho {
    eps: Vec<f64>,
    n: usize,
    descent: DescentSettings,
}

fn run_lawrentiev(args: LawrentievArgs) -> CliResult<RunOutput> {
    let mut descent = DescentSettings::default();
    if let Some(it) = args.max_iterations {
        descent.max_iterations = it;
    }
    let cfg = LawrentievEcho { eps: args.eps.unwrap_or_else(|| vec![1e-3, 1e-2, 1e-1]), n: args.n.unwrap_or(2001), descent };
    if cfg.eps.is_empty() {
        return Err(CliError::Validation("need at least one epsilon".into()));
    }
    let mut rows = Vec::new();
    let mut details = Vec::new();
    let mut invariants = Vec::new();
    for &eps in &cfg.eps {
        let m = minimize_perturbed(eps, cfg.n, &cfg.descent)?;
        let cert = gap_certificate(&m.u)?;
        rows.push(LawrentievRow {
            epsilon: eps,
            n: cfg.n,
            best_value: m.value,
            x_star: cert.x_star,
            g_value: cert.g_value,
            bound: cert.bound,
        });
        details.push(json!({
            "epsilon": eps,
            "value": m.value,
            "j": m.j,
            "t": m.t,
            "start": m.start,
            "iterations": m.iterations,
            "converged": m.converged,
            "certificate": cert,
        }));
        invariants.push(line(
            "gap",
            "perturbed minimum exceeds 9.0e-4",
            m.value > 9.0e-4,
            format!("eps {eps:e}: {:.6e}", m.value),
        ));
        invariants.push(line(
            "certificate",
            "G on [0, x*] dominates its explicit minimum (5%)",
            cert.holds(0.05),
            format!("eps {eps:e}: x* = {:.4}, G = {:.4e}, bound {:.4e}", cert.x_star, cert.g_value, cert.bound),
        ));
    }
    let csv = lawrentiev_csv(&rows);
    Ok(RunOutput {
        command: "lawrentiev",
        config: serde_json::to_value(&cfg).expect("serializable"),
        results: json!({ "gap_constant": gap_constant(), "rows": rows, "details": details }),
        invariants,
        artifacts: vec![("lawrentiev.csv".to_string(), csv.clone())],
        stdout: csv,
    })
}

fn run_verify(args: VerifyArgs) -> CliResult<RunOutput> {
    let options = VerifyOptions { quick: args.quick.unwrap_or(false), seed: args.seed.unwrap_or(0) };
    let lines = run_suite(&options);
    let count = |s: Status| lines.iter().filter(|l| l.status == s).count();
    let results = json!({
        "passed": count(Status::Pass),
        "failed": count(Status::Fail),
        "informational": count(Status::Info),
    });
    Ok(RunOutput {
        command: "verify-all",
        config: serde_json::to_value(options).expect("serializable"),
        results,
        stdout: render_table(&lines),
        invariants: lines,
        artifacts: Vec::new(),
    })
}

fn dispatch(cli: Cli) -> CliResult<RunOutput> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Sce(a) => run_sce(load(a, config)?),
        Command::Sweep(a) => run_sweep(load(a, config)?),
        Command::ReinstateDemo(a) => run_reinstate(load(a, config)?),
        Command::FermionizeDemo(a) => run_fermionize(load(a, config)?),
        Command::Harriman(a) => run_harriman(load(a, config)?),
        Command::Lawrentiev(a) => run_lawrentiev(load(a, config)?),
        Command::VerifyAll(a) => run_verify(load(a, config)?),
    }
}

fn emit(output: RunOutput, dir: &Path) -> CliResult<bool> {
    let mut config = output.config;
    config["command"] = json!(output.command);
    let summary = json!({
        "config": config,
        "results": output.results,
        "invariant_report": output.invariants,
    });
    let io = |e: LabError| CliError::Validation(e.to_string());
    let mut written = Vec::new();
    for (name, contents) in &output.artifacts {
        written.push(write_artifact(dir, name, contents).map_err(io)?);
    }
    // CSV files carry no header room for the configuration; the JSON
    // summary next to them does.
    written.push(write_artifact(dir, &format!("{}.json", output.command), &to_json_string(&summary)).map_err(io)?);

    print!("{}", output.stdout);
    if output.command != "verify-all" {
        for l in &output.invariants {
            println!("{}  {}  [{}]", l.status.label(), l.name, l.detail);
        }
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(output.invariants.iter().all(|l| !l.failed()))
}

/// Runs the driver on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let dir = cli.out.clone().unwrap_or_else(default_output_dir);
    let outcome = dispatch(cli).and_then(|out| emit(out, &dir));
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("validation failure: at least one invariant failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

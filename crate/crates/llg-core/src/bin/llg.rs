//! Command-line front end: tableau auditing, convergence studies, damping
//! sweeps, and the pure-diffusion stability experiment.
//!
//! Exit codes are a stable contract: 0 success, 1 numerical or assertion
//! failure, 2 usage or parse failure. All CSV output uses 17 significant
//! digits and fixed row order, so reruns with the same flags and seed are
//! byte-identical.

use clap::{Parser, Subcommand, ValueEnum};
use llg_core::tableau::{self, ImexTableau};
use llg_core::verification::{
    convergence_study, damping_sweep, diffusion_stability_sweep, ConvergenceTable, Refinement,
    Schedule, StabilitySweepConfig, StabilityTrial,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "llg",
    version,
    about = "IMEX-RK3 Landau-Lifshitz solver: tableau audits, convergence studies, stability runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for CSV/Markdown artifacts (created if absent).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for commands that draw random data.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Override the schedule's final time.
    #[arg(long, global = true)]
    t_final: Option<f64>,
    /// Damping parameter α.
    #[arg(long, global = true, default_value_t = 0.01)]
    alpha: f64,
    /// Artificial diffusion coefficient β.
    #[arg(long, global = true, default_value_t = 3.0)]
    beta: f64,
    /// Exchange coefficient ε.
    #[arg(long, global = true, default_value_t = 1.0)]
    epsilon: f64,
    /// Residual tolerance for tableau audits (order conditions and row sums).
    #[arg(long, global = true, default_value_t = 5e-6)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineArg {
    Temporal,
    Spatial,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a tableau pair: structure, order conditions 1-3, stability margins.
    VerifyTableau {
        /// Audit a built-in tableau ("paper", the default).
        #[arg(long, conflicts_with = "file")]
        builtin: Option<String>,
        /// Audit a tableau from a key = value text file.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study; writes CSV and Markdown tables.
    Convergence {
        /// Spatial dimension (1 or 3).
        #[arg(long)]
        dim: usize,
        /// Refinement mode: coupled k = C·h^(2/3) (temporal) or fixed k (spatial).
        #[arg(long, value_enum)]
        refine: RefineArg,
    },
    /// Temporal convergence study for every (alpha, beta) pair.
    DampingSweep {
        /// Comma-separated damping values.
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.1")]
        alphas: Vec<f64>,
        /// Comma-separated diffusion coefficients.
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        betas: Vec<f64>,
        /// Spatial dimension (1 or 3).
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Pure-diffusion stability experiment over k/h² ratios.
    DiffusionStability {
        /// Comma-separated k/h² ratios.
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1,1e2,1e4")]
        ratios: Vec<f64>,
        /// Random initial fields per ratio.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Steps per trial.
        #[arg(long, default_value_t = 120)]
        steps: usize,
        /// Negate the third implicit diagonal entry first; the admissibility
        /// check must then refuse to run.
        #[arg(long, hide = true)]
        debug_negate_a33: bool,
    },
}

enum CliError {
    /// Bad invocation or unreadable/unparseable input: exit 2.
    Usage(String),
    /// The run executed and a numerical condition failed: exit 1.
    Failure(String),
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn failure(msg: impl Into<String>) -> CliError {
    CliError::Failure(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// LLG_THREADS caps the rayon pool; unset means rayon's default.
fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LLG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("LLG_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool setup failed: {e}"))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::VerifyTableau {
            ref builtin,
            ref file,
        } => {
            let tab = load_tableau(builtin.as_deref(), file.as_deref())?;
            cmd_verify_tableau(&tab, cli.tol)
        }
        Command::Convergence { dim, refine } => cmd_convergence(&cli, dim, refine),
        Command::DampingSweep {
            ref alphas,
            ref betas,
            dim,
        } => cmd_damping_sweep(&cli, alphas, betas, dim),
        Command::DiffusionStability {
            ref ratios,
            trials,
            steps,
            debug_negate_a33,
        } => cmd_diffusion_stability(&cli, ratios, trials, steps, debug_negate_a33),
    }
}

fn check_dim(dim: usize) -> Result<(), CliError> {
    if dim == 1 || dim == 3 {
        Ok(())
    } else {
        Err(usage(format!("--dim must be 1 or 3, got {dim}")))
    }
}

fn load_tableau(builtin: Option<&str>, file: Option<&Path>) -> Result<ImexTableau, CliError> {
    match (builtin, file) {
        (Some(name), None) => match name {
            "paper" => Ok(tableau::reference()),
            other => Err(usage(format!(
                "unknown builtin tableau {other:?}; available: paper"
            ))),
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            tableau::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        (None, None) => Ok(tableau::reference()),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn cmd_verify_tableau(tab: &ImexTableau, tol: f64) -> CliResult {
    let report = tab.structure_report();
    println!("Structure");
    println!("  shape consistent:        {}", yes_no(report.shape_ok));
    println!(
        "  diagonal nonnegative:    {}",
        yes_no(report.diag_nonnegative)
    );
    println!(
        "  max implicit row defect: {:.4e}",
        report.max_row_defect_im
    );
    println!(
        "  max explicit row defect: {:.4e}",
        report.max_row_defect_ex
    );
    let structure_ok = report.passes(tol);

    println!("Order conditions");
    let mut conditions_ok = true;
    let census = tableau::order_residuals(tab, 3);
    for order in 1..=3u8 {
        let residuals: Vec<_> = census.iter().filter(|c| c.order == order).collect();
        let worst = residuals
            .iter()
            .max_by(|a, b| a.residual().abs().total_cmp(&b.residual().abs()))
            .expect("census covers orders 1 through 3");
        let max = worst.residual().abs();
        conditions_ok &= max <= tol;
        println!(
            "  order {order}: {:2} conditions, max residual {:.4e} ({})",
            residuals.len(),
            max,
            worst.name
        );
    }

    let margins = tableau::stability_margins(tab);
    let margins_ok = margins.iter().all(|&m| m > 0.0);
    println!("Stability margins");
    println!("  m2 = {:.8}", margins[0]);
    println!("  m3 = {:.8}", margins[1]);
    println!("  m4 = {:.8}", margins[2]);

    if structure_ok && conditions_ok && margins_ok {
        println!("PASS (tol {tol:.1e})");
        Ok(())
    } else {
        println!("FAIL (tol {tol:.1e})");
        let mut reasons = Vec::new();
        if !structure_ok {
            reasons.push("structure defects exceed tolerance");
        }
        if !conditions_ok {
            reasons.push("order-condition residuals exceed tolerance");
        }
        if !margins_ok {
            reasons.push("stability margins not all positive");
        }
        Err(failure(reasons.join("; ")))
    }
}

fn write_table(dir: &Path, table: &ConvergenceTable) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let stem = table.file_stem();
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, table.to_csv())
        .map_err(|e| failure(format!("cannot write {}: {e}", csv.display())))?;
    let md = dir.join(format!("{stem}.md"));
    std::fs::write(&md, table.to_markdown())
        .map_err(|e| failure(format!("cannot write {}: {e}", md.display())))?;
    println!("wrote {} and {}", csv.display(), md.display());
    Ok(())
}

fn cmd_convergence(cli: &Cli, dim: usize, refine: RefineArg) -> CliResult {
    check_dim(dim)?;
    let (refinement, id) = match refine {
        RefineArg::Temporal => (Refinement::Temporal, "temporal"),
        RefineArg::Spatial => (Refinement::Spatial, "spatial"),
    };
    let mut schedule = Schedule::standard(dim, refinement).map_err(|e| usage(e.to_string()))?;
    if let Some(t) = cli.t_final {
        if !(t.is_finite() && t > 0.0) {
            return Err(usage(format!("--t-final must be positive, got {t}")));
        }
        schedule = schedule.with_t_final(t);
    }
    let table = convergence_study(
        &schedule,
        cli.alpha,
        cli.beta,
        cli.epsilon,
        &tableau::reference(),
        id,
    )
    .map_err(|e| failure(e.to_string()))?;
    print!("{}", table.to_markdown());
    println!(
        "orders: linf {:.4}  l2 {:.4}  h1 {:.4}",
        table.orders[0], table.orders[1], table.orders[2]
    );
    write_table(&cli.out, &table)
}

fn cmd_damping_sweep(cli: &Cli, alphas: &[f64], betas: &[f64], dim: usize) -> CliResult {
    check_dim(dim)?;
    if alphas.is_empty() || betas.is_empty() {
        return Err(usage("need at least one --alphas and one --betas value"));
    }
    for &a in alphas {
        if !a.is_finite() || a < 0.0 {
            return Err(usage(format!(
                "--alphas values must be nonnegative, got {a}"
            )));
        }
    }
    for &b in betas {
        if !b.is_finite() || b <= 0.0 {
            return Err(usage(format!("--betas values must be positive, got {b}")));
        }
    }
    let tables = damping_sweep(dim, alphas, betas, cli.epsilon, &tableau::reference())
        .map_err(|e| failure(e.to_string()))?;
    let band = if dim == 1 { (2.7, 3.2) } else { (2.8, 3.4) };
    let mut out_of_band = Vec::new();
    for t in &tables {
        let ok = t.orders_within(band.0, band.1);
        println!(
            "{}: orders linf {:.4}  l2 {:.4}  h1 {:.4}  [{}]",
            t.id,
            t.orders[0],
            t.orders[1],
            t.orders[2],
            if ok { "ok" } else { "OUT OF BAND" }
        );
        write_table(&cli.out, t)?;
        if !ok {
            out_of_band.push(t.id.clone());
        }
    }
    if out_of_band.is_empty() {
        println!(
            "all {} pairs within order band [{}, {}]",
            tables.len(),
            band.0,
            band.1
        );
        Ok(())
    } else {
        Err(failure(format!(
            "orders outside band [{}, {}] for: {}",
            band.0,
            band.1,
            out_of_band.join(", ")
        )))
    }
}

fn stability_csv(trials: &[StabilityTrial]) -> String {
    let mut s =
        String::from("ratio,trial,dim,n,k,seed,max_step_ratio,dissipation_sum,dissipation_bound,violation_step\n");
    for t in trials {
        let violation = t
            .report
            .first_violation
            .map_or(String::new(), |v| v.step.to_string());
        let _ = writeln!(
            s,
            "{:.16e},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{violation}",
            t.ratio,
            t.trial,
            t.dim,
            t.n,
            t.k,
            t.seed,
            t.report.max_step_ratio,
            t.report.dissipation_sum,
            t.report.dissipation_bound,
        );
    }
    s
}

fn cmd_diffusion_stability(
    cli: &Cli,
    ratios: &[f64],
    trials: usize,
    steps: usize,
    debug_negate_a33: bool,
) -> CliResult {
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    if ratios.is_empty() {
        return Err(usage("need at least one --ratios value"));
    }
    for &r in ratios {
        if !r.is_finite() || r <= 0.0 {
            return Err(usage(format!("ratios must be positive, got {r}")));
        }
    }
    if !(cli.beta.is_finite() && cli.beta > 0.0) {
        return Err(usage(format!("--beta must be positive, got {}", cli.beta)));
    }

    let mut tab = tableau::reference();
    if debug_negate_a33 {
        tab.a_im[2][2] = -tab.a_im[2][2];
    }
    // Admissibility gate: the decay guarantee needs a valid tableau with
    // positive margins; refuse to march with anything else.
    if let Err(e) = tab.validate(1e-6) {
        return Err(usage(format!(
            "tableau not admissible for stability run: {e}"
        )));
    }
    let margins = tableau::stability_margins(&tab);
    if margins.iter().any(|&m| m <= 0.0) {
        return Err(usage(format!(
            "tableau not admissible for stability run: margins {margins:?} not all positive"
        )));
    }

    let cfg = StabilitySweepConfig {
        ratios: ratios.to_vec(),
        trials_per_ratio: trials,
        steps,
        beta: cli.beta,
        seed: cli.seed,
        ..Default::default()
    };
    let results = diffusion_stability_sweep(&cfg, &tab).map_err(|e| failure(e.to_string()))?;

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let csv_path = cli.out.join("stability_trials.csv");
    std::fs::write(&csv_path, stability_csv(&results))
        .map_err(|e| failure(format!("cannot write {}: {e}", csv_path.display())))?;

    for &ratio in ratios {
        let group: Vec<&StabilityTrial> = results.iter().filter(|t| t.ratio == ratio).collect();
        let worst = group
            .iter()
            .map(|t| t.report.max_step_ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        let violations = group.iter().filter(|t| !t.passes(cfg.budget_tol)).count();
        println!(
            "k/h² = {ratio:.4e}: {} trials, worst step ratio {worst:.16}, {violations} violation(s)",
            group.len()
        );
    }
    println!("wrote {}", csv_path.display());

    if let Some(bad) = results.iter().find(|t| !t.passes(cfg.budget_tol)) {
        let h = 1.0 / bad.n as f64;
        let detail = match bad.report.first_violation {
            Some(v) => format!("norm grew at step {} (ratio {:.17e})", v.step, v.ratio),
            None => format!(
                "dissipation sum {:.17e} exceeds budget {:.17e}",
                bad.report.dissipation_sum, bad.report.dissipation_bound
            ),
        };
        return Err(failure(format!(
            "stability violation at k = {:.6e}, h = {:.6e} (trial {} of ratio {:.4e}): {detail}",
            bad.k, h, bad.trial, bad.ratio
        )));
    }
    println!(
        "no violations: per-step decay within 1 + {:.0e}, budgets within 1 + {:.0e}",
        cfg.step_ratio_tol, cfg.budget_tol
    );
    Ok(())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

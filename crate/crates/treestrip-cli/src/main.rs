//! Command-line front end for the `treestrip` toolkit.
//!
//! Subcommands:
//!
//! - `check` — structural assumption report for a substitution matrix.
//! - `free-spectrum` — boundary values of the disorder-free Green function on
//!   an energy grid, and the intervals where their imaginary part stays
//!   uniformly positive.
//! - `window` — determinant-condition scan locating energies where the
//!   moment recursion is a stable contraction, with spectral margins of the
//!   linearized map.
//! - `simulate` — population-dynamics second-moment ladder at one energy.
//! - `oracle` — finite-strip cross-validation (recursive Green function
//!   against a direct sparse solve) plus a density-of-states comparison.
//! - `susy-verify` — randomized verification of the superintegral identities.
//!
//! Every command writes a `run_manifest.json` next to its artifacts echoing
//! the fully resolved configuration (defaults included) and the seed, so each
//! output directory is self-describing. Given the same configuration and
//! seed, re-runs produce byte-identical artifacts. CSV artifacts carry a
//! header row and use `.` as the decimal separator regardless of locale;
//! JSON artifacts are UTF-8 with snake_case keys.
//!
//! Exit codes: `0` success; `1` domain violation (failed assumptions, failed
//! identity verification, exceeded budget, diverged iteration); `2` usage or
//! parse error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use treestrip::disorder_mc::{ac_indicator, default_ac_ladder, McOptions};
use treestrip::free_green::{
    compute_i_s, default_grid, BoundaryScheme, EnergyGrid, EtaLadder,
};
use treestrip::model::{
    build_truncated_strip, check_assumptions, ModelConfig, ModelInstance,
};
use treestrip::oracle::{assemble, dos_vs_green, green_at_root, green_recursive};
use treestrip::susy::{run_identity_suite, run_identity_suite_at};
use treestrip::windows::{frechet_spectrum, window_scan, WindowOptions, WindowRow, WindowStatus};

/// Default grid step for the free-spectrum scan.
const DEFAULT_FREE_STEP: f64 = 0.01;
/// Default grid step for the window scan.
const DEFAULT_WINDOW_STEP: f64 = 0.05;
/// Default grid step for the density-of-states comparison.
const DEFAULT_DOS_STEP: f64 = 0.1;
/// Degrees-of-freedom cap for truncated strips built by `oracle`.
const DEFAULT_DOF_BUDGET: usize = 2_000_000;
/// Smoothing width of the finite-volume density-of-states comparison.
const DEFAULT_ETA_SMOOTH: f64 = 0.05;
/// Order up to which `window` reports eigenvalues of the linearized map.
const FRECHET_MAX_ORDER: u32 = 6;
/// Spectral parameters probed by the `oracle` cross-validation.
const ORACLE_Z_POINTS: [(f64, f64); 3] = [(0.0, 1.0), (1.0, 0.1), (-2.0, 0.01)];

#[derive(Parser)]
#[command(
    name = "treestrip",
    version,
    about = "Spectral toolkit for vertically extended trees of finite cone type",
    propagate_version = true
)]
struct Cli {
    /// Size of the global worker thread pool (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report which structural assumptions the substitution matrix satisfies.
    Check(CheckArgs),
    /// Scan disorder-free boundary values and extract the spectral intervals.
    FreeSpectrum(FreeSpectrumArgs),
    /// Scan the determinant conditions for the stable energy window.
    Window(WindowArgs),
    /// Run the population-dynamics second-moment ladder at one energy.
    Simulate(SimulateArgs),
    /// Cross-validate the Green recursion against a direct solve on finite
    /// strips, and compare the density of states.
    Oracle(OracleArgs),
    /// Verify the superintegral identities on random instances.
    SusyVerify(SusyVerifyArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Path to the model configuration JSON.
    #[arg(long)]
    model: PathBuf,
    /// Optional output directory for the report artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FreeSpectrumArgs {
    /// Path to the model configuration JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Energy grid LO:HI:STEP (default: spans the free spectrum plus margin).
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    /// Smoothing ladder START:RATIO:MIN for boundary values.
    #[arg(long, value_parser = parse_ladder, allow_hyphen_values = true)]
    eta_ladder: Option<LadderSpec>,
}

#[derive(Args)]
struct WindowArgs {
    /// Path to the model configuration JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Energy grid LO:HI:STEP (default: spans the free spectrum plus margin).
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    /// Smoothing ladder START:RATIO:MIN for boundary values.
    #[arg(long, value_parser = parse_ladder, allow_hyphen_values = true)]
    eta_ladder: Option<LadderSpec>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Path to the model configuration JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Energy at which the ladder is run.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    energy: f64,
    /// Smoothing ladder START:RATIO:MIN (default: 0.1:0.5:0.0001).
    #[arg(long, value_parser = parse_ladder, allow_hyphen_values = true)]
    eta_ladder: Option<LadderSpec>,
    /// Samples per label pool.
    #[arg(long, default_value_t = 1000)]
    pool: usize,
    /// RNG seed; the run is reproducible given the same seed.
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// Path to the model configuration JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Maximum truncation depth for the cross-validation.
    #[arg(long, default_value_t = 5)]
    depth: usize,
    /// RNG seed for the disorder realization.
    #[arg(long)]
    seed: u64,
    /// Energy grid LO:HI:STEP for the density-of-states table.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
}

#[derive(Args)]
struct SusyVerifyArgs {
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Matrix dimension for a single-dimension run (requires --n).
    #[arg(long, requires = "n")]
    m: Option<usize>,
    /// Replica count for a single-dimension run (requires --m).
    #[arg(long, requires = "m")]
    n: Option<usize>,
    /// RNG seed for the random instances.
    #[arg(long)]
    seed: u64,
}

/// CLI failure, split by exit code: usage/parse errors exit 2, domain
/// violations and exceeded budgets exit 1.
enum CliError {
    Usage(String),
    Domain(String),
}

type CliResult<T> = Result<T, CliError>;

impl From<treestrip::Error> for CliError {
    fn from(err: treestrip::Error) -> Self {
        use treestrip::Error as E;
        match &err {
            E::Config(_) | E::InvalidModel(_) | E::NonSymmetricVertical { .. } => {
                CliError::Usage(err.to_string())
            }
            _ => CliError::Domain(err.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let threads = workers.max(1);
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not size the worker pool: {err}");
        }
    }
    let code = match run(cli.command, cli.workers) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}

fn run(command: Command, workers: Option<usize>) -> CliResult<i32> {
    match command {
        Command::Check(args) => cmd_check(args, workers),
        Command::FreeSpectrum(args) => cmd_free_spectrum(args, workers),
        Command::Window(args) => cmd_window(args, workers),
        Command::Simulate(args) => cmd_simulate(args, workers),
        Command::Oracle(args) => cmd_oracle(args, workers),
        Command::SusyVerify(args) => cmd_susy_verify(args, workers),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// An energy grid as given on the command line.
#[derive(Clone, Copy, Debug, Serialize)]
struct GridSpec {
    lo: f64,
    hi: f64,
    step: f64,
}

impl GridSpec {
    fn to_grid(self) -> CliResult<EnergyGrid> {
        Ok(EnergyGrid::new(self.lo, self.hi, self.step)?)
    }

    fn of(grid: &EnergyGrid) -> Self {
        Self {
            lo: grid.lo,
            hi: grid.hi,
            step: grid.step,
        }
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let (lo, hi, step) = parse_triple(s, "LO:HI:STEP")?;
    Ok(GridSpec { lo, hi, step })
}

/// A smoothing ladder as given on the command line.
#[derive(Clone, Copy, Debug, Serialize)]
struct LadderSpec {
    start: f64,
    ratio: f64,
    min: f64,
}

impl LadderSpec {
    fn to_ladder(self) -> CliResult<EtaLadder> {
        let ladder = EtaLadder {
            start: self.start,
            ratio: self.ratio,
            min: self.min,
        };
        ladder.validate()?;
        Ok(ladder)
    }

    fn of(ladder: &EtaLadder) -> Self {
        Self {
            start: ladder.start,
            ratio: ladder.ratio,
            min: ladder.min,
        }
    }
}

fn parse_ladder(s: &str) -> Result<LadderSpec, String> {
    let (start, ratio, min) = parse_triple(s, "START:RATIO:MIN")?;
    Ok(LadderSpec { start, ratio, min })
}

fn parse_triple(s: &str, shape: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected {shape}, got '{s}'"));
    }
    let mut vals = [0.0f64; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number '{part}' in '{s}': {e}"))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn load_model(path: &Path) -> CliResult<(ModelConfig, ModelInstance)> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read model file {}: {e}", path.display()))
    })?;
    let config = ModelConfig::parse(&text)?;
    let instance = config.build()?;
    Ok((config, instance))
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Domain(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Domain(format!("failed to write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Domain(format!("failed to serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes the run manifest that makes an output directory self-describing.
/// The output path itself is deliberately not part of the manifest so that
/// re-runs into different directories stay byte-identical.
#[allow(clippy::too_many_arguments)]
fn write_manifest(
    out: &Path,
    command: &str,
    model_path: Option<&Path>,
    model: Option<&ModelConfig>,
    seed: Option<u64>,
    workers: Option<usize>,
    parameters: serde_json::Value,
) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "tool": {"name": "treestrip", "version": env!("CARGO_PKG_VERSION")},
        "model_path": model_path.map(|p| p.display().to_string()),
        "model": model,
        "seed": seed,
        "workers": workers,
        "parameters": parameters,
    });
    write_json(&out.join("run_manifest.json"), &manifest)
}

/// Shortest-roundtrip decimal form; `.` decimal separator independent of
/// locale.
fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(args: CheckArgs, workers: Option<usize>) -> CliResult<i32> {
    let (config, instance) = load_model(&args.model)?;
    let report = check_assumptions(&instance.substitution);

    let mut violations: Vec<&str> = Vec::new();
    if !report.min_branching {
        violations.push("S1 violated");
    }
    if !report.irreducible {
        violations.push("S2 violated");
    }
    if !report.norm_bound {
        violations.push("S3 violated");
    }
    if !report.positive_diagonal {
        violations.push("S3' violated");
    }

    let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    println!(
        "substitution matrix: {} label(s), K = {}, spectral norm = {}",
        config.s.len(),
        report.k,
        fmt_f(report.spectral_norm)
    );
    println!(
        "  S1  every vertex has at least two children: {}",
        verdict(report.min_branching)
    );
    println!("  S2  irreducibility: {}", verdict(report.irreducible));
    println!(
        "  S3  norm bound (spectral norm < K^2): {}",
        verdict(report.norm_bound)
    );
    println!(
        "  S3' positive diagonal: {}",
        verdict(report.positive_diagonal)
    );

    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_json(
            &out.join("assumption_report.json"),
            &json!({
                "s1_min_branching": report.min_branching,
                "s2_irreducible": report.irreducible,
                "s3_norm_bound": report.norm_bound,
                "s3_prime_positive_diagonal": report.positive_diagonal,
                "all_hold": report.all_hold(),
                "k": report.k,
                "spectral_norm": report.spectral_norm,
                "row_sums": report.row_sums,
                "irreducibility_failures": report.irreducibility_failures,
                "violations": violations,
            }),
        )?;
        write_manifest(
            out,
            "check",
            Some(&args.model),
            Some(&config),
            None,
            workers,
            json!({}),
        )?;
    }

    if violations.is_empty() {
        println!("all assumptions hold");
        Ok(0)
    } else {
        for v in &violations {
            println!("{v}");
        }
        Ok(1)
    }
}

// ---------------------------------------------------------------------------
// free-spectrum
// ---------------------------------------------------------------------------

fn cmd_free_spectrum(args: FreeSpectrumArgs, workers: Option<usize>) -> CliResult<i32> {
    let (config, instance) = load_model(&args.model)?;
    let vertical_norm = instance.vertical.operator_norm();
    let grid_spec = match args.grid {
        Some(spec) => spec,
        None => GridSpec::of(&default_grid(
            &instance.substitution,
            vertical_norm,
            DEFAULT_FREE_STEP,
        )),
    };
    let grid = grid_spec.to_grid()?;
    let ladder = match args.eta_ladder {
        Some(spec) => spec.to_ladder()?,
        None => EtaLadder::default(),
    };
    let scheme = BoundaryScheme {
        ladder,
        ..BoundaryScheme::default()
    };

    let scan = compute_i_s(&instance.substitution, &grid, &scheme);

    prepare_out(&args.out)?;
    let mut csv = String::from("e,label,gamma_re,gamma_im,robust,eta_final,last_delta,in_i_s\n");
    let mut robust = 0usize;
    let mut inside = 0usize;
    for row in &scan.rows {
        let b = &row.boundary;
        if b.exists {
            robust += 1;
        }
        if row.in_i_s {
            inside += 1;
        }
        for (label, gamma) in b.gammas.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_f(b.e),
                label,
                fmt_f(gamma.re),
                fmt_f(gamma.im),
                b.exists,
                fmt_f(b.eta_final),
                fmt_f(b.last_delta),
                row.in_i_s
            ));
        }
    }
    write_text(&args.out.join("gamma_grid.csv"), &csv)?;

    let intervals: Vec<serde_json::Value> = scan
        .intervals
        .iter()
        .map(|(lo, hi)| json!({"lo": lo, "hi": hi}))
        .collect();
    write_json(
        &args.out.join("i_s_intervals.json"),
        &json!({
            "grid": grid_spec,
            "count": intervals.len(),
            "intervals": intervals,
        }),
    )?;
    write_manifest(
        &args.out,
        "free-spectrum",
        Some(&args.model),
        Some(&config),
        None,
        workers,
        json!({
            "grid": grid_spec,
            "eta_ladder": LadderSpec::of(&scheme.ladder),
            "tol_bv": scheme.tol_bv,
            "bound_cap": scheme.bound_cap,
            "eps_im": scheme.eps_im,
        }),
    )?;

    println!(
        "free-spectrum: {} grid point(s), {} robust, {} inside the free spectral set",
        scan.rows.len(),
        robust,
        inside
    );
    for (lo, hi) in &scan.intervals {
        println!("  interval [{}, {}]", fmt_f(*lo), fmt_f(*hi));
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// window
// ---------------------------------------------------------------------------

fn cmd_window(args: WindowArgs, workers: Option<usize>) -> CliResult<i32> {
    let (config, instance) = load_model(&args.model)?;
    let vertical_norm = instance.vertical.operator_norm();
    let grid_spec = match args.grid {
        Some(spec) => spec,
        None => GridSpec::of(&default_grid(
            &instance.substitution,
            vertical_norm,
            DEFAULT_WINDOW_STEP,
        )),
    };
    let grid = grid_spec.to_grid()?;
    let ladder = match args.eta_ladder {
        Some(spec) => spec.to_ladder()?,
        None => EtaLadder::default(),
    };
    let scheme = BoundaryScheme {
        ladder,
        ..BoundaryScheme::default()
    };
    let opts = WindowOptions::default();

    let rows = window_scan(
        &instance.substitution,
        &instance.vertical,
        &grid,
        &scheme,
        &opts,
    );

    // Spectral margin of the linearized map at the in-window energies.
    use rayon::prelude::*;
    let margins: Vec<Option<f64>> = rows
        .par_iter()
        .map(|row| {
            if !row.in_window() {
                return None;
            }
            frechet_spectrum(
                &instance.substitution,
                &instance.vertical,
                row.e,
                FRECHET_MAX_ORDER,
                &scheme,
            )
            .ok()
            .map(|report| report.margin_to_one)
        })
        .collect();

    prepare_out(&args.out)?;
    let mut csv = String::from(
        "e,status,gamma_max,detail,detail_info,n_star,max_checked_order,tail_certified,n_pairs,frechet_margin\n",
    );
    let mut counts = [0usize; 4];
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut worst_margin = f64::INFINITY;
    let mut min_frechet = f64::INFINITY;
    for (row, margin) in rows.iter().zip(&margins) {
        let (status, detail, info) = status_fields(row);
        match status {
            "in_window" => counts[0] += 1,
            "outside_base" => counts[1] += 1,
            "excluded" => counts[2] += 1,
            _ => counts[3] += 1,
        }
        if row.in_window() {
            if let WindowStatus::InWindow { worst_margin: m, .. } = &row.status {
                worst_margin = worst_margin.min(*m);
            }
            match intervals.last_mut() {
                Some(last) if last.1 + grid.step * 1.5 >= row.e => last.1 = row.e,
                _ => intervals.push((row.e, row.e)),
            }
        }
        if let Some(m) = margin {
            min_frechet = min_frechet.min(*m);
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(row.e),
            status,
            fmt_f(row.gamma_max),
            detail,
            info,
            row.n_star.map(|n| n.to_string()).unwrap_or_default(),
            row.max_checked_order,
            row.tail_certified,
            row.n_pairs,
            fmt_opt(*margin),
        ));
    }
    write_text(&args.out.join("window_grid.csv"), &csv)?;

    write_json(
        &args.out.join("window_report.json"),
        &json!({
            "grid": grid_spec,
            "counts": {
                "in_window": counts[0],
                "outside_base": counts[1],
                "excluded": counts[2],
                "indeterminate": counts[3],
            },
            "in_window_intervals": intervals
                .iter()
                .map(|(lo, hi)| json!({"lo": lo, "hi": hi}))
                .collect::<Vec<_>>(),
            "worst_in_window_determinant": if worst_margin.is_finite() { Some(worst_margin) } else { None },
            "min_frechet_margin": if min_frechet.is_finite() { Some(min_frechet) } else { None },
        }),
    )?;
    write_manifest(
        &args.out,
        "window",
        Some(&args.model),
        Some(&config),
        None,
        workers,
        json!({
            "grid": grid_spec,
            "eta_ladder": LadderSpec::of(&scheme.ladder),
            "tol_bv": scheme.tol_bv,
            "bound_cap": scheme.bound_cap,
            "eps_im": scheme.eps_im,
            "det_tol": opts.det_tol,
            "low_margin": opts.low_margin,
            "hard_cap_order": opts.hard_cap_order,
            "frechet_max_order": FRECHET_MAX_ORDER,
        }),
    )?;

    println!(
        "window: {} in-window, {} outside base set, {} excluded, {} indeterminate",
        counts[0], counts[1], counts[2], counts[3]
    );
    for (lo, hi) in &intervals {
        println!("  in-window run [{}, {}]", fmt_f(*lo), fmt_f(*hi));
    }
    Ok(0)
}

/// CSV projection of a window row status. `detail` is the status-specific
/// numeric datum, `detail_info` a short `;`-separated annotation.
fn status_fields(row: &WindowRow) -> (&'static str, String, String) {
    match &row.status {
        WindowStatus::InWindow {
            worst_margin,
            worst_pair,
            low_margin,
        } => {
            let mut info = format!(
                "worst_pair={};{}",
                clean(&worst_pair.0.describe()),
                clean(&worst_pair.1.describe())
            );
            if *low_margin {
                info.push_str(";low_margin");
            }
            ("in_window", fmt_f(*worst_margin), info)
        }
        WindowStatus::OutsideBase { min_im } => ("outside_base", fmt_f(*min_im), String::new()),
        WindowStatus::Excluded { j, jp, det_abs } => (
            "excluded",
            fmt_f(*det_abs),
            format!("pair={};{}", clean(&j.describe()), clean(&jp.describe())),
        ),
        WindowStatus::Indeterminate {
            shift_index,
            shift,
            delta,
        } => (
            "indeterminate",
            fmt_f(*delta),
            format!("shift_index={shift_index};shift={}", fmt_f(*shift)),
        ),
    }
}

/// Strips CSV-hostile characters from annotations.
fn clean(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs, workers: Option<usize>) -> CliResult<i32> {
    let (config, instance) = load_model(&args.model)?;
    let ladder_spec = match args.eta_ladder {
        Some(spec) => spec,
        None => LadderSpec::of(&default_ac_ladder()),
    };
    let ladder = ladder_spec.to_ladder()?;
    let opts = McOptions {
        n_pool: args.pool,
        ..McOptions::default()
    };

    let indicator = ac_indicator(
        &instance.substitution,
        &instance.vertical,
        &instance.disorder,
        instance.lambda,
        args.energy,
        &ladder,
        opts,
        args.seed,
    )?;

    prepare_out(&args.out)?;
    let s = config.s.len();
    let mut csv = String::from("eta,trace_second,trace_second_stderr,generations,stabilized");
    for q in 0..s {
        csv.push_str(&format!(",label_{q}"));
    }
    csv.push('\n');
    for rung in &indicator.rungs {
        csv.push_str(&format!(
            "{},{},{},{},{}",
            fmt_f(rung.eta),
            fmt_f(rung.trace_second),
            fmt_opt(rung.trace_second_stderr),
            rung.generations,
            rung.stabilized
        ));
        for v in &rung.per_label {
            csv.push_str(&format!(",{}", fmt_f(*v)));
        }
        csv.push('\n');
    }
    write_text(&args.out.join("ladder.csv"), &csv)?;

    write_json(
        &args.out.join("ac_indicator.json"),
        &json!({
            "e": indicator.e,
            "lambda": indicator.lambda,
            "bounded": indicator.bounded,
            "growth_ratio_max": indicator.growth_ratio_max,
            "growth_cap": indicator.growth_cap,
            "rungs": indicator.rungs.iter().map(|r| json!({
                "eta": r.eta,
                "trace_second": r.trace_second,
                "trace_second_stderr": r.trace_second_stderr,
                "per_label": r.per_label,
                "generations": r.generations,
                "stabilized": r.stabilized,
            })).collect::<Vec<_>>(),
        }),
    )?;
    write_manifest(
        &args.out,
        "simulate",
        Some(&args.model),
        Some(&config),
        Some(args.seed),
        workers,
        json!({
            "energy": args.energy,
            "eta_ladder": ladder_spec,
            "pool": opts.n_pool,
            "burn_in_min": opts.burn_in_min,
            "burn_in_cap": opts.burn_in_cap,
            "block_len": opts.block_len,
            "measure_blocks": opts.measure_blocks,
            "cond_cap": opts.cond_cap,
            "herglotz_check_fraction": opts.herglotz_check_fraction,
            "growth_cap": opts.growth_cap,
        }),
    )?;

    println!(
        "simulate: E = {}, lambda = {}, {} rung(s)",
        fmt_f(indicator.e),
        fmt_f(indicator.lambda),
        indicator.rungs.len()
    );
    for rung in &indicator.rungs {
        println!(
            "  eta = {:<12} trace second moment = {:<22} ({} generation(s))",
            fmt_f(rung.eta),
            fmt_f(rung.trace_second),
            rung.generations
        );
    }
    println!(
        "  bounded: {} (max tail growth ratio {} against cap {})",
        indicator.bounded,
        fmt_f(indicator.growth_ratio_max),
        fmt_f(indicator.growth_cap)
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

fn cmd_oracle(args: OracleArgs, workers: Option<usize>) -> CliResult<i32> {
    let (config, instance) = load_model(&args.model)?;
    if args.depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let zs: Vec<Complex64> = ORACLE_Z_POINTS
        .iter()
        .map(|&(re, im)| Complex64::new(re, im))
        .collect();

    let mut csv = String::from("depth,z_re,z_im,max_abs_deviation\n");
    let mut max_dev = 0.0f64;
    for depth in 1..=args.depth {
        let strip = build_truncated_strip(
            &instance.substitution,
            0,
            depth,
            instance.vertical.m(),
            Some(DEFAULT_DOF_BUDGET),
        )?;
        let h = assemble(
            &strip,
            &instance.vertical,
            instance.lambda,
            &instance.disorder,
            args.seed,
        )?;
        for &z in &zs {
            let direct = green_at_root(&h, z)?;
            let recursive = green_recursive(&h, z)?;
            let dev = (&direct - &recursive)
                .iter()
                .fold(0.0f64, |acc, c| acc.max(c.norm()));
            max_dev = max_dev.max(dev);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                depth,
                fmt_f(z.re),
                fmt_f(z.im),
                fmt_f(dev)
            ));
        }
    }

    let vertical_norm = instance.vertical.operator_norm();
    let grid_spec = match args.grid {
        Some(spec) => spec,
        None => GridSpec::of(&default_grid(
            &instance.substitution,
            vertical_norm,
            DEFAULT_DOS_STEP,
        )),
    };
    let grid = grid_spec.to_grid()?;
    let dos = dos_vs_green(
        &instance.substitution,
        &instance.vertical,
        0,
        &grid,
        args.depth,
        DEFAULT_ETA_SMOOTH,
        Some(DEFAULT_DOF_BUDGET),
    )?;

    prepare_out(&args.out)?;
    write_text(&args.out.join("recursion_vs_solve.csv"), &csv)?;

    let mut dos_csv = String::from("e,im_gamma_over_pi,finite_volume_density,diff\n");
    for row in &dos.rows {
        dos_csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(row.e),
            fmt_f(row.im_gamma_over_pi),
            fmt_f(row.finite_volume_density),
            fmt_f(row.diff)
        ));
    }
    write_text(&args.out.join("dos_comparison.csv"), &dos_csv)?;

    write_json(
        &args.out.join("oracle_report.json"),
        &json!({
            "depth": args.depth,
            "z_points": ORACLE_Z_POINTS,
            "max_abs_deviation": max_dev,
            "dos": {
                "grid": grid_spec,
                "depth": dos.depth,
                "eta_smooth": dos.eta_smooth,
                "sup_diff": dos.sup_diff,
                "n_points": dos.rows.len(),
            },
        }),
    )?;
    write_manifest(
        &args.out,
        "oracle",
        Some(&args.model),
        Some(&config),
        Some(args.seed),
        workers,
        json!({
            "depth": args.depth,
            "z_points": ORACLE_Z_POINTS,
            "dof_budget": DEFAULT_DOF_BUDGET,
            "dos_grid": grid_spec,
            "eta_smooth": DEFAULT_ETA_SMOOTH,
        }),
    )?;

    println!(
        "oracle: max |direct - recursive| deviation = {} over depths 1..={}",
        fmt_f(max_dev),
        args.depth
    );
    println!(
        "oracle: density-of-states sup deviation = {} (depth {}, smoothing {})",
        fmt_f(dos.sup_diff),
        dos.depth,
        fmt_f(dos.eta_smooth)
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// susy-verify
// ---------------------------------------------------------------------------

fn cmd_susy_verify(args: SusyVerifyArgs, workers: Option<usize>) -> CliResult<i32> {
    let (checks, dimensions) = match (args.m, args.n) {
        (Some(m), Some(n)) => (run_identity_suite_at(m, n, args.seed)?, vec![(m, n)]),
        _ => (
            run_identity_suite(args.seed)?,
            vec![(1usize, 1usize), (2, 1), (2, 2)],
        ),
    };
    let all_pass = checks.iter().all(|c| c.pass);

    for check in &checks {
        println!(
            "{} {} (m = {}, n = {}): residual {:.3e} against threshold {:.0e}",
            if check.pass { "PASS" } else { "FAIL" },
            check.identity,
            check.m,
            check.n,
            check.residual,
            check.threshold
        );
    }

    prepare_out(&args.out)?;
    write_json(
        &args.out.join("susy_report.json"),
        &json!({
            "seed": args.seed,
            "dimensions": dimensions,
            "all_pass": all_pass,
            "checks": checks,
        }),
    )?;
    write_manifest(
        &args.out,
        "susy-verify",
        None,
        None,
        Some(args.seed),
        workers,
        json!({
            "dimensions": dimensions,
        }),
    )?;

    if all_pass {
        println!("susy-verify: all {} identity check(s) passed", checks.len());
        Ok(0)
    } else {
        let failed = checks.iter().filter(|c| !c.pass).count();
        println!(
            "susy-verify: {failed} of {} identity check(s) FAILED",
            checks.len()
        );
        Ok(1)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

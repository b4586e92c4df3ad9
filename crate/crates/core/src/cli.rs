//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::margin::{read_margin_csv, MarginCsvRow, UncertaintyKind};
use crate::object::{ObjectConfig, ObjectParams, Profile};
use crate::ocp::{solve_nominal, OcpSpec};
use crate::plot::{margin_svg, snapshots, tidy_csv, PlotFormat};
use crate::robust::{evaluate_worstcase, solve_robust, RobustConfig};
use crate::solver::SolverOptions;
use crate::trajectory::{Mode, Trajectory};
use crate::validate::{mass_perturbations, perturb_sweep, Perturbation, SweepReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default horizon for rectangular objects.
pub const DEFAULT_N_RECT: usize = 60;
/// Default horizon for stepped objects.
pub const DEFAULT_N_STEPPED: usize = 15;
pub const DEFAULT_ALPHA: f64 = 0.001;
const SNAPSHOTS: usize = 7;

#[derive(Debug, Parser)]
#[command(
    name = "pivotal",
    version,
    about = "Robust pivoting trajectory optimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a nominal or robust pivoting problem and write the trajectory.
    Optimize(OptimizeArgs),
    /// Export per-step margin bounds and optimal margins as CSV.
    Margin(MarginArgs),
    /// Check static feasibility of a trajectory at other true masses or CoM shifts.
    Validate(ValidateArgs),
    /// Render a margin profile and pose snapshots as SVG or tidy CSV.
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Object configuration (JSON).
    #[arg(long)]
    pub object: PathBuf,
    #[arg(long, default_value = "nominal")]
    pub mode: Mode,
    /// Weight of the secondary direction in the robust objective.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Number of control steps; 60 for rectangles and 15 for stepped profiles by default.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver options (JSON); unspecified fields keep their defaults.
    #[arg(long)]
    pub solver_opts: Option<PathBuf>,
    /// Omit the creation timestamp so output is byte-reproducible.
    #[arg(long)]
    pub no_meta: bool,
}

#[derive(Debug, Args)]
pub struct MarginArgs {
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long, default_value = "mass")]
    pub kind: UncertaintyKind,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub traj: PathBuf,
    /// Comma-separated true masses in g.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub true_mass_g: Vec<f64>,
    /// Comma-separated world-frame CoM shifts in mm.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
    pub com_shift_mm: Vec<f64>,
    /// Optional CSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Margin CSV written by `margin`.
    #[arg(long)]
    pub margin: Option<PathBuf>,
    /// Trajectory for pose snapshots, and for margins when `--margin` is absent.
    #[arg(long)]
    pub traj: Option<PathBuf>,
    #[arg(long, default_value = "mass")]
    pub kind: UncertaintyKind,
    #[arg(long, default_value = "svg")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error: input problems are usage errors, numerical ones failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
            EXIT_USAGE
        }
        Error::SingularConfiguration { .. }
        | Error::Build(_)
        | Error::RejectedSolution { .. }
        | Error::Solve(_) => EXIT_FAILURE,
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Optimize(a) => optimize(a, out),
        Command::Margin(a) => margin(a, out),
        Command::Validate(a) => validate(a, out),
        Command::PlotData(a) => plot_data(a, out),
    }
}

fn read_context(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let t = Trajectory::from_json(&read_context(path, "trajectory")?)?;
    t.check_shape()?;
    Ok(t)
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn optimize(a: OptimizeArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = ObjectConfig::from_json(&read_context(&a.object, "object config")?)?;
    let obj = ObjectParams::from_config(&cfg)?;
    let opts = match &a.solver_opts {
        Some(p) => SolverOptions::from_json(&read_context(p, "solver options")?)?,
        None => SolverOptions::default(),
    };
    if !(a.alpha >= 0.0 && a.alpha.is_finite()) {
        return Err(Error::Config(format!(
            "alpha must be nonnegative, got {}",
            a.alpha
        )));
    }
    let n = a.n.unwrap_or(match obj.profile {
        Profile::Rect { .. } => DEFAULT_N_RECT,
        Profile::Stepped { .. } => DEFAULT_N_STEPPED,
    });
    let spec = OcpSpec::for_object(&obj, n);
    spec.validate()?;
    log::info!("optimizing {} in mode {} with N = {n}", obj.name, a.mode);
    let (mut traj, _) = match a.mode.robust_kind() {
        None => solve_nominal(&obj, &spec, &opts)?,
        Some(kind) => solve_robust(&obj, &spec, &RobustConfig::new(kind, a.alpha), &opts, None)?,
    };
    traj.meta.created_unix = if a.no_meta {
        None
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    };
    if let Some(p) = &a.out {
        traj.save(p)?;
    }
    write!(out, "{}", margins_table(&traj, a.alpha)?)?;
    Ok(EXIT_OK)
}

/// Worst-case margins in both directions for both uncertainty kinds.
pub fn margins_table(traj: &Trajectory, alpha: f64) -> Result<String> {
    let mass = evaluate_worstcase(traj, UncertaintyKind::Mass, alpha, None)?;
    let com = evaluate_worstcase(traj, UncertaintyKind::Com, alpha, None)?;
    let mut s = String::new();
    s.push_str(&format!(
        "{:<14}| {:>22} | {:>22}\n",
        "", "eps+, eps- [N]", "r+, r- [mm]"
    ));
    s.push_str(&format!(
        "{:<14}| {:>10.6}, {:>10.6} | {:>10.4}, {:>10.4}\n",
        traj.mode.to_string(),
        mass.worst_plus,
        mass.worst_minus,
        com.worst_plus * 1e3,
        com.worst_minus * 1e3
    ));
    if let Some(kind) = traj.mode.robust_kind() {
        let w = if kind == UncertaintyKind::Mass {
            mass
        } else {
            com
        };
        s.push_str(&format!("objective (alpha {alpha}): {:.9}\n", w.objective));
    }
    Ok(s)
}

fn margin(a: MarginArgs, out: &mut dyn Write) -> Result<i32> {
    let traj = load_trajectory(&a.traj)?;
    let cap = traj
        .meta
        .robust
        .as_ref()
        .filter(|r| r.kind == a.kind)
        .map(|r| r.cap);
    let prof = traj.margin_profile(a.kind, cap)?;
    let mut buf = Vec::new();
    prof.write_csv(&mut buf)?;
    write_output(a.out.as_deref(), &String::from_utf8_lossy(&buf), out)?;
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    if a.true_mass_g.is_empty() && a.com_shift_mm.is_empty() {
        return Err(Error::Config(
            "no perturbations given (use --true-mass-g or --com-shift-mm)".into(),
        ));
    }
    let traj = load_trajectory(&a.traj)?;
    let mut reports = Vec::new();
    if !a.true_mass_g.is_empty() {
        let eps = mass_perturbations(&traj.object, &a.true_mass_g)?;
        reports.push((
            perturb_sweep(&traj, Perturbation::Mass, &eps)?,
            a.true_mass_g.clone(),
            "g",
        ));
    }
    if !a.com_shift_mm.is_empty() {
        let r: Vec<f64> = a.com_shift_mm.iter().map(|v| v * 1e-3).collect();
        reports.push((
            perturb_sweep(&traj, Perturbation::Com, &r)?,
            a.com_shift_mm.clone(),
            "mm",
        ));
    }
    let mut all = true;
    let mut csv = Vec::new();
    for (report, labels, unit) in &reports {
        write!(out, "{}", sweep_table(report, labels, unit))?;
        all &= report.all_pass();
        report.write_csv(&mut csv)?;
    }
    if let Some(p) = &a.out {
        std::fs::write(p, csv)?;
    }
    Ok(if all { EXIT_OK } else { EXIT_FAILURE })
}

/// Human-readable sweep table labelled with the user-facing values.
pub fn sweep_table(report: &SweepReport, labels: &[f64], unit: &str) -> String {
    let col = match report.kind {
        Perturbation::Mass => "true mass",
        Perturbation::Com => "CoM shift",
    };
    let mut s = format!(
        "{:>13} | {:>12} | result | first failing step\n",
        format!("{col} [{unit}]"),
        "perturbation"
    );
    for (row, label) in report.rows.iter().zip(labels) {
        s.push_str(&format!(
            "{:>13} | {:>12.6} | {:<6} | {}\n",
            label,
            row.value,
            if row.pass { "pass" } else { "FAIL" },
            row.first_failing_step
                .map(|k| k.to_string())
                .unwrap_or_else(|| "-".into())
        ));
    }
    s.push_str(&report.summary());
    s.push('\n');
    s
}

fn plot_data(a: PlotArgs, out: &mut dyn Write) -> Result<i32> {
    let format: PlotFormat = a.format.parse()?;
    let traj = a.traj.as_deref().map(load_trajectory).transpose()?;
    let (unit, rows): (String, Vec<MarginCsvRow>) = match (&a.margin, &traj) {
        (Some(p), _) => read_margin_csv(read_context(p, "margin CSV")?.as_bytes())?,
        (None, Some(t)) => {
            let mut buf = Vec::new();
            t.margin_profile(a.kind, None)?.write_csv(&mut buf)?;
            read_margin_csv(buf.as_slice())?
        }
        (None, None) => return Err(Error::Config("plot-data needs --margin or --traj".into())),
    };
    let text = match format {
        PlotFormat::Csv => tidy_csv(&unit, &rows),
        PlotFormat::Svg => {
            let outlines = match &traj {
                Some(t) => snapshots(t, SNAPSHOTS)?,
                None => Vec::new(),
            };
            margin_svg(&unit, &rows, &outlines)
        }
    };
    write_output(a.out.as_deref(), &text, out)?;
    Ok(EXIT_OK)
}

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_config_file, Command, RunConfig, TauModeArg, UsageError};
use hdgbc::analysis::{
    diagnostics, run_study, write_csv, write_markdown, Regularity, ReportFormat, StudyTruth,
};
use hdgbc::problems::{validate_stabilization, BuiltinProblem, HConvention};
use hdgbc::system::{write_cell_averages, write_control, DofMap};
use hdgbc::{solve_control_problem, Mesh, ProblemSpec};

#[derive(Parser, Debug)]
#[command(
    name = "hdgbc",
    version,
    about = "HDG solver for Dirichlet boundary control of convection-diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Solve the optimality system on one mesh.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Cells per side.
        #[arg(long)]
        n: Option<usize>,
        /// Directory receiving cells.csv and control.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the mesh in text form to this file.
        #[arg(long)]
        mesh_dump: Option<PathBuf>,
    },
    /// Run a convergence study over several meshes.
    Study {
        #[command(flatten)]
        common: Common,
        /// Comma-separated cells per side, or `a..b` for doubling from a to b.
        #[arg(long)]
        levels: Option<String>,
        /// Cells per side of the nested reference solution.
        #[arg(long = "ref")]
        reference: Option<usize>,
        /// Measure against the closed-form solution.
        #[arg(long)]
        exact: bool,
        /// csv or markdown.
        #[arg(long)]
        format: Option<String>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the diagnostics suite.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        /// Seed of the random field draws.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of random field draws.
        #[arg(long)]
        draws: Option<usize>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// paper, zero or mms.
    #[arg(long)]
    problem: Option<String>,
    /// Flux degree; scalars and traces use k + 1.
    #[arg(long)]
    k: Option<usize>,
    /// constant or theory.
    #[arg(long)]
    tau_mode: Option<String>,
    /// Constant tau, or tau2 in theory mode.
    #[arg(long)]
    tau: Option<f64>,
    /// Control cost weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Exponent of the `paper` problem's desired state.
    #[arg(long, allow_hyphen_values = true)]
    s_exponent: Option<f64>,
    /// width, diameter or element.
    #[arg(long)]
    h_convention: Option<String>,
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run even when the stabilization conditions fail.
    #[arg(long)]
    allow_unstable: bool,
}

enum Failure {
    Usage(String),
    Solver(hdgbc::Error),
    /// A run that completed but whose outcome is rejected.
    Rejected(&'static str, String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<hdgbc::Error> for Failure {
    fn from(e: hdgbc::Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Solver(e.into())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: kind=usage msg={}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: kind=usage msg={}", one_line(&m));
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: kind={} msg={}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(1)
        }
        Err(Failure::Rejected(kind, m)) => {
            eprintln!("error: kind={kind} msg={}", one_line(&m));
            ExitCode::from(1)
        }
    }
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("HDGBC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        UsageError(format!(
            "HDGBC_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    if n == 0 {
        return Err(UsageError("HDGBC_THREADS must be positive".into()));
    }
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let cfg = resolve(cli)?;
    let spec = cfg.problem_spec()?;
    match cfg.command {
        Command::Solve => solve(&cfg, &spec),
        Command::Study => study(&cfg, &spec),
        Command::Check => check(&cfg, &spec),
    }
}

/// Picks the flag, then the config file entry, then the default.
struct Merge {
    file: BTreeMap<String, String>,
}

impl Merge {
    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, UsageError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config key '{key}': {e}"))),
        }
    }

    fn flag(&self, key: &str, flag: bool) -> Result<bool, UsageError> {
        Ok(flag || self.get::<bool>(key, None)?.unwrap_or(false))
    }
}

fn parse_levels(s: &str) -> Result<Vec<usize>, UsageError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let bad = || UsageError(format!("invalid level list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a == 0 || b < a {
            return Err(bad());
        }
        let mut out = Vec::new();
        let mut n = a;
        while n <= b {
            out.push(n);
            n *= 2;
        }
        return Ok(out);
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

fn resolve(cli: Cli) -> Result<RunConfig, UsageError> {
    let (command, common) = match &cli.command {
        Sub::Solve { common, .. } => (Command::Solve, common),
        Sub::Study { common, .. } => (Command::Study, common),
        Sub::Check { common, .. } => (Command::Check, common),
    };
    let m = Merge {
        file: match &common.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        },
    };
    let problem: BuiltinProblem = m
        .get::<String>("problem", common.problem.clone())?
        .unwrap_or_else(|| "paper".into())
        .parse()
        .map_err(|e: hdgbc::Error| UsageError(e.to_string()))?;
    let tau_mode = match m
        .get::<String>("tau-mode", common.tau_mode.clone())?
        .as_deref()
    {
        None | Some("constant") => TauModeArg::Constant,
        Some("theory") => TauModeArg::Theory,
        Some(o) => {
            return Err(UsageError(format!(
                "unknown tau mode '{o}' (expected constant or theory)"
            )))
        }
    };
    let h_convention: HConvention =
        match m.get::<String>("h-convention", common.h_convention.clone())? {
            Some(s) => s
                .parse()
                .map_err(|e: hdgbc::Error| UsageError(e.to_string()))?,
            None => HConvention::default(),
        };
    let mut cfg = RunConfig {
        command,
        problem,
        k: m.get("k", common.k)?.unwrap_or(1),
        n: 4,
        levels: Vec::new(),
        reference: None,
        tau_mode,
        tau: m.get("tau", common.tau)?.unwrap_or(1.0),
        gamma: m.get("gamma", common.gamma)?,
        s_exponent: m.get("s-exponent", common.s_exponent)?,
        h_convention,
        out: None,
        format: ReportFormat::Csv,
        seed: 0,
        draws: 50,
        allow_unstable: m.flag("allow-unstable", common.allow_unstable)?,
        mesh_dump: None,
    };
    let to_usage = |e: hdgbc::Error| UsageError(e.to_string());
    match cli.command {
        Sub::Solve {
            n, out, mesh_dump, ..
        } => {
            cfg.n = m.get("n", n)?.unwrap_or(4);
            cfg.out = m.get("out", out)?;
            cfg.mesh_dump = mesh_dump;
        }
        Sub::Study {
            levels,
            reference,
            exact,
            format,
            out,
            ..
        } => {
            cfg.levels = parse_levels(
                &m.get::<String>("levels", levels)?
                    .unwrap_or_else(|| "2,4,8,16".into()),
            )?;
            cfg.reference = m.get("ref", reference)?;
            if m.flag("exact", exact)? && cfg.reference.is_some() {
                return Err(UsageError(
                    "--exact and --ref are mutually exclusive".into(),
                ));
            }
            if let Some(f) = m.get::<String>("format", format)? {
                cfg.format = f.parse().map_err(to_usage)?;
            }
            cfg.out = m.get("out", out)?;
        }
        Sub::Check {
            n,
            seed,
            draws,
            out,
            ..
        } => {
            cfg.n = m.get("n", n)?.unwrap_or(2);
            cfg.seed = m.get("seed", seed)?.unwrap_or(0);
            cfg.draws = m.get("draws", draws)?.unwrap_or(50);
            cfg.out = m.get("out", out)?;
        }
    }
    if cfg.n == 0 {
        return Err(UsageError("--n must be positive".into()));
    }
    Ok(cfg)
}

fn ensure_stable(cfg: &RunConfig, spec: &ProblemSpec, mesh: &Mesh) -> Result<(), Failure> {
    if cfg.allow_unstable {
        return Ok(());
    }
    let r = validate_stabilization(spec, mesh, cfg.k)?;
    if r.passed {
        return Ok(());
    }
    Err(Failure::Rejected(
        "stabilization",
        format!(
        "stabilization conditions fail on {} of {} elements at n={} (min tau1 - beta.n/2 = {:.4}, min tau2 + beta.n/2 = {:.4}); pass --allow-unstable to run anyway",
        r.failing_elements.len(),
        mesh.num_elements(),
        mesh.cells_per_side(),
        r.min_tau1_margin,
        r.min_tau2_margin
    ),
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_header<W: Write>(
    w: &mut W,
    cfg: &RunConfig,
    prefix: &str,
    suffix: &str,
) -> io::Result<()> {
    for line in cfg.header() {
        writeln!(w, "{prefix}{line}{suffix}")?;
    }
    Ok(())
}

fn solve(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(), Failure> {
    let mesh = Mesh::structured(spec.side_length, cfg.n)?;
    ensure_stable(cfg, spec, &mesh)?;
    if let Some(p) = &cfg.mesh_dump {
        let mut w = create(p)?;
        mesh.write_text(&mut w)?;
        w.flush()?;
    }
    let fields = solve_control_problem(spec, &mesh, cfg.k)?;
    let dofs = DofMap::new(&mesh, cfg.k);
    let mut out = io::stdout().lock();
    write_header(&mut out, cfg, "# ", "")?;
    let u2: f64 = fields.u.iter().map(|v| v * v).sum();
    writeln!(
        out,
        "elements={} trace_unknowns={}",
        mesh.num_elements(),
        dofs.len()
    )?;
    writeln!(out, "control_coefficient_norm={:e}", u2.sqrt())?;
    writeln!(out, "relative_residual={:.3e}", fields.residual)?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        let mut w = create(&dir.join("cells.csv"))?;
        write_header(&mut w, cfg, "# ", "")?;
        write_cell_averages(&fields, &mesh, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("control.csv"))?;
        write_header(&mut w, cfg, "# ", "")?;
        write_control(&fields, &mesh, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn study(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(), Failure> {
    let truth = match cfg.reference {
        Some(r) => StudyTruth::Reference(r),
        None => StudyTruth::Exact,
    };
    if !cfg.allow_unstable {
        for &n in cfg.levels.iter().chain(cfg.reference.as_ref()) {
            ensure_stable(cfg, spec, &Mesh::structured(spec.side_length, n)?)?;
        }
    }
    let regularity = match cfg.problem {
        BuiltinProblem::Paper => Regularity::square_low(),
        _ => Regularity::smooth(),
    };
    let report = run_study(spec, cfg.k, &cfg.levels, truth, regularity)?;
    let header = cfg.header();
    let emit = |w: &mut dyn Write| -> hdgbc::Result<()> {
        match cfg.format {
            ReportFormat::Csv => write_csv(&report, &header, w),
            ReportFormat::Markdown => write_markdown(&report, &header, w),
        }
    };
    match &cfg.out {
        Some(p) => {
            let mut w = create(p)?;
            emit(&mut w)?;
            w.flush()?;
        }
        None => emit(&mut io::stdout().lock())?,
    }
    Ok(())
}

fn check(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(), Failure> {
    let mesh = Mesh::structured(spec.side_length, cfg.n)?;
    let report = diagnostics(spec, &mesh, cfg.k, cfg.seed, cfg.draws)?;
    let mut text = Vec::new();
    write_header(&mut text, cfg, "# ", "")?;
    write!(text, "{report}")?;
    match &cfg.out {
        Some(p) => std::fs::write(p, &text)?,
        None => io::stdout().lock().write_all(&text)?,
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.status == hdgbc::analysis::CheckStatus::Fail)
            .map(|c| c.name)
            .collect();
        Err(Failure::Rejected(
            "diagnostics",
            format!("failed checks: {}", failed.join(", ")),
        ))
    }
}

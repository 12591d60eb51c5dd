//! Run configuration: command-line flags merged over an optional
//! `key = value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hdgbc::analysis::ReportFormat;
use hdgbc::problems::{
    builtin_problem, paper_problem, BuiltinProblem, HConvention, StabilizationPolicy,
};
use hdgbc::ProblemSpec;

/// Errors that map to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(UsageError(format!(
                "config line {}: unknown key '{key}'",
                i + 1
            )));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "k",
    "n",
    "levels",
    "ref",
    "exact",
    "tau-mode",
    "tau",
    "gamma",
    "s-exponent",
    "h-convention",
    "out",
    "format",
    "seed",
    "draws",
    "allow-unstable",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Study,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Study => "study",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauModeArg {
    Constant,
    Theory,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub problem: BuiltinProblem,
    pub k: usize,
    pub n: usize,
    pub levels: Vec<usize>,
    pub reference: Option<usize>,
    pub tau_mode: TauModeArg,
    pub tau: f64,
    pub gamma: Option<f64>,
    pub s_exponent: Option<f64>,
    pub h_convention: HConvention,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
    pub seed: u64,
    pub draws: usize,
    pub allow_unstable: bool,
    pub mesh_dump: Option<PathBuf>,
}

impl RunConfig {
    /// Provenance lines written at the top of every output file.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![
            format!("hdgbc {}", env!("CARGO_PKG_VERSION")),
            format!("command={}", self.command.name()),
            format!("problem={}", self.problem),
            format!("k={}", self.k),
        ];
        match self.command {
            Command::Solve | Command::Check => h.push(format!("n={}", self.n)),
            Command::Study => {
                let l: Vec<String> = self.levels.iter().map(|n| n.to_string()).collect();
                h.push(format!("levels={}", l.join(",")));
                h.push(match self.reference {
                    Some(r) => format!("ref={r}"),
                    None => "exact=true".into(),
                });
            }
        }
        h.push(format!(
            "tau-mode={}",
            match self.tau_mode {
                TauModeArg::Constant => "constant",
                TauModeArg::Theory => "theory",
            }
        ));
        h.push(format!("tau={}", self.tau));
        if let Some(g) = self.gamma {
            h.push(format!("gamma={g}"));
        }
        if let Some(s) = self.s_exponent {
            h.push(format!("s-exponent={s}"));
        }
        h.push(format!("h-convention={}", self.h_convention));
        if self.command == Command::Check {
            h.push(format!("seed={}", self.seed));
            h.push(format!("draws={}", self.draws));
        }
        h
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, UsageError> {
        let mut spec = match (self.problem, self.s_exponent) {
            (BuiltinProblem::Paper, Some(s)) => paper_problem(s),
            (_, Some(_)) => {
                return Err(UsageError(
                    "--s-exponent only applies to problem `paper`".into(),
                ))
            }
            (p, None) => builtin_problem(&p.to_string()).map_err(|e| UsageError(e.to_string()))?,
        };
        if let Some(g) = self.gamma {
            spec = spec.with_gamma(g).map_err(|e| UsageError(e.to_string()))?;
        }
        if !(self.tau > 0.0) {
            return Err(UsageError(format!(
                "--tau must be positive, got {}",
                self.tau
            )));
        }
        let policy = match self.tau_mode {
            TauModeArg::Constant => StabilizationPolicy::constant(self.tau),
            TauModeArg::Theory => StabilizationPolicy::theory(self.tau),
        };
        Ok(spec.with_tau(policy).with_h_convention(self.h_convention))
    }
}

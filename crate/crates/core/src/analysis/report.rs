use std::io::Write;
use std::str::FromStr;

use super::{ConvergenceReport, Field, StudyTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::InvalidArgument(format!("unknown format '{other}'"))),
        }
    }
}

fn truth_label(t: StudyTruth) -> String {
    match t {
        StudyTruth::Exact => "exact".into(),
        StudyTruth::Reference(n) => format!("reference n={n}"),
    }
}

/// Report metadata, skipping keys the caller's header already carries.
fn summary(report: &ConvergenceReport, header: &[String]) -> Vec<String> {
    let th = &report.theory;
    let given = |key: &str| header.iter().any(|l| l.starts_with(key));
    let mut out = Vec::new();
    if !given("problem=") {
        out.push(format!("problem={}", report.problem));
    }
    if !given("k=") {
        out.push(format!("k={}", report.k));
    }
    out.extend([
        format!("truth={}", truth_label(report.truth)),
        format!(
            "predicted exponents: u,y,p,z={} q={}",
            th.scalar,
            th.flux
                .map_or("not asserted".to_string(), |v| v.to_string())
        ),
    ]);
    out
}

/// Missing errors are empty cells; orders are empty on the first level
/// and `n/a` where undefined.
pub fn write_csv<W: Write>(report: &ConvergenceReport, header: &[String], mut w: W) -> Result<()> {
    for line in header.iter().chain(&summary(report, header)) {
        writeln!(w, "# {line}")?;
    }
    write!(w, "level,n,h")?;
    for f in Field::ALL {
        write!(w, ",err_{0},ord_{0}", f.name())?;
    }
    writeln!(w)?;
    for (i, l) in report.levels.iter().enumerate() {
        write!(w, "{i},{},{:e}", l.n, l.h)?;
        for j in 0..5 {
            let e = l.errors[j].map_or(String::new(), |v| format!("{v:e}"));
            let o = match (i, l.orders[j]) {
                (0, _) => String::new(),
                (_, Some(v)) => format!("{v:e}"),
                (_, None) if l.errors[j].is_some() => "n/a".into(),
                (_, None) => String::new(),
            };
            write!(w, ",{e},{o}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One error row and one order row per variable, levels as columns.
pub fn write_markdown<W: Write>(
    report: &ConvergenceReport,
    header: &[String],
    mut w: W,
) -> Result<()> {
    for line in header.iter().chain(&summary(report, header)) {
        writeln!(w, "<!-- {line} -->")?;
    }
    write!(w, "| variable | |")?;
    for l in &report.levels {
        write!(w, " n={} |", l.n)?;
    }
    writeln!(w)?;
    write!(w, "|---|---|")?;
    for _ in &report.levels {
        write!(w, "---|")?;
    }
    writeln!(w)?;
    for (j, f) in Field::ALL.iter().enumerate() {
        write!(w, "| {} | error |", f.name())?;
        for l in &report.levels {
            match l.errors[j] {
                Some(v) => write!(w, " {v:.2e} |")?,
                None => write!(w, " - |")?,
            }
        }
        writeln!(w)?;
        write!(w, "| | order |")?;
        for (i, l) in report.levels.iter().enumerate() {
            match (i, l.orders[j], l.errors[j]) {
                (0, _, _) | (_, None, None) => write!(w, " - |")?,
                (_, Some(v), _) => write!(w, " {v:.2} |")?,
                (_, None, Some(_)) => write!(w, " n/a |")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

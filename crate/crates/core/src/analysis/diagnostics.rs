use std::fmt;

use faer::Side;
use rand::rngs::StdRng;
use rand::SeedableRng;

use super::identities::{adjoint_mismatch, coercivity_rhs};
use crate::error::Result;
use crate::hdg::{BOperator, DiscreteFields, OperatorForms};
use crate::mesh::Mesh;
use crate::problems::{validate_stabilization, ProblemSpec, TauMode};
use crate::system::{solve_control_problem, solve_monolithic, DofMap, MONOLITHIC_LIMIT};

/// Relative tolerance of the operator identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
/// Coefficient-wise tolerance between condensed and monolithic solves.
pub const CONDENSATION_TOLERANCE: f64 = 1e-11;
/// Bound on the trace vector of a solve with zero data.
pub const UNIQUENESS_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    pub residual: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub checks: Vec<DiagnosticCheck>,
}

impl DiagnosticsReport {
    /// True when no check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&DiagnosticCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let r = c.residual.map_or("-".to_string(), |v| format!("{v:.3e}"));
            writeln!(
                f,
                "{:<24} {:<5} residual={r} {}",
                c.name, c.status, c.detail
            )?;
        }
        Ok(())
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn negated(f: &DiscreteFields, v: bool, w: bool, mu: bool) -> DiscreteFields {
    let s = |x: &[f64], neg: bool| x.iter().map(|a| if neg { -a } else { *a }).collect();
    DiscreteFields {
        k: f.k,
        v: s(&f.v, v),
        w: s(&f.w, w),
        mu: s(&f.mu, mu),
    }
}

/// `B1(q,y,yh; p,-z,-zh) + B2(p,z,zh; -q,y,yh)`.
pub(crate) fn adjoint_sum(
    forms: &OperatorForms,
    state: &DiscreteFields,
    adjoint: &DiscreteFields,
) -> Result<f64> {
    let a = forms.apply(BOperator::B1, state, &negated(adjoint, false, true, true))?;
    let b = forms.apply(BOperator::B2, adjoint, &negated(state, true, false, false))?;
    Ok(a + b)
}

/// Runs the operator identities, positive-definiteness, condensation and
/// uniqueness checks with `draws` random fields from `seed`.
pub fn diagnostics(
    spec: &ProblemSpec,
    mesh: &Mesh,
    k: usize,
    seed: u64,
    draws: usize,
) -> Result<DiagnosticsReport> {
    let mut checks = Vec::new();
    let stab = validate_stabilization(spec, mesh, k)?;
    checks.push(DiagnosticCheck {
        name: "stabilization",
        status: status(stab.passed),
        residual: None,
        detail: format!(
            "min(tau1 - beta.n/2) = {:.4}, min(tau2 + beta.n/2) = {:.4}, max div(beta) = {:.3e}, failing elements {}/{}",
            stab.min_tau1_margin,
            stab.min_tau2_margin,
            stab.max_div_beta,
            stab.failing_elements.len(),
            mesh.num_elements()
        ),
    });

    let forms = OperatorForms::new(spec, mesh, k)?;
    let mut definite = 0;
    for parts in forms.parts() {
        let ok = [parts.state_block(), parts.adjoint_block()]
            .iter()
            .all(|m| {
                let sym = (m + m.transpose()) * faer::Scale(0.5);
                sym.llt(Side::Lower).is_ok()
            });
        definite += ok as usize;
    }
    let ne = mesh.num_elements();
    let hypotheses = ne - stab.failing_elements.len();
    checks.push(DiagnosticCheck {
        name: "positive-definiteness",
        status: status(hypotheses == ne && definite == ne),
        residual: None,
        detail: format!("sufficient conditions hold on {hypotheses}/{ne} elements, realised blocks definite on {definite}/{ne}"),
    });

    let mut rng = StdRng::seed_from_u64(seed);
    let (mut worst1, mut worst2, mut worst_adj) = (0.0f64, 0.0f64, 0.0f64);
    let theory = matches!(spec.tau.mode, TauMode::Theory { .. });
    for _ in 0..draws {
        let a = DiscreteFields::random(mesh, k, &mut rng);
        let b = DiscreteFields::random(mesh, k, &mut rng);
        for (which, worst) in [(BOperator::B1, &mut worst1), (BOperator::B2, &mut worst2)] {
            let lhs = forms.apply(which, &a, &a)?;
            let (rhs, scale) = coercivity_rhs(which, spec, mesh, k, &a)?;
            *worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
        }
        let sum = adjoint_sum(&forms, &a, &b)?;
        let (target, scale) = if theory {
            (0.0, 0.0)
        } else {
            adjoint_mismatch(spec, mesh, k, &a, &b)?
        };
        let b1 = forms.apply(BOperator::B1, &a, &a)?.abs();
        let denom = scale.max(b1).max(forms.apply(BOperator::B2, &b, &b)?.abs());
        worst_adj = worst_adj.max((sum - target).abs() / denom.max(f64::MIN_POSITIVE));
    }
    for (name, worst) in [("coercivity-B1", worst1), ("coercivity-B2", worst2)] {
        checks.push(DiagnosticCheck {
            name,
            status: status(worst <= IDENTITY_TOLERANCE),
            residual: Some(worst),
            detail: format!("{draws} random draws"),
        });
    }
    checks.push(if theory {
        DiagnosticCheck {
            name: "adjoint-identity",
            status: status(worst_adj <= IDENTITY_TOLERANCE),
            residual: Some(worst_adj),
            detail: format!("{draws} random draws"),
        }
    } else {
        DiagnosticCheck {
            name: "adjoint-identity",
            status: if worst_adj <= IDENTITY_TOLERANCE {
                CheckStatus::NotApplicable
            } else {
                CheckStatus::Fail
            },
            residual: Some(worst_adj),
            detail: "not applicable: tau1 != tau2 + beta.n; residual is the deviation from the stabilisation mismatch term".into(),
        }
    });

    let mono_size =
        ne * (4 * (k + 1) * (k + 2) / 2 + (k + 2) * (k + 3)) + DofMap::new(mesh, k).len();
    if mono_size <= MONOLITHIC_LIMIT {
        let cond = solve_control_problem(spec, mesh, k)?.flatten();
        let mono = solve_monolithic(spec, mesh, k)?.flatten();
        let big = cond.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diff = cond
            .iter()
            .zip(&mono)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        checks.push(DiagnosticCheck {
            name: "condensation-exactness",
            status: status(diff <= CONDENSATION_TOLERANCE * big),
            residual: Some(diff),
            detail: format!("max coefficient difference, {mono_size} monolithic unknowns"),
        });
    } else {
        checks.push(DiagnosticCheck {
            name: "condensation-exactness",
            status: CheckStatus::NotApplicable,
            residual: None,
            detail: format!("monolithic system of {mono_size} unknowns is too large"),
        });
    }

    let zero = solve_control_problem(&spec.homogeneous(), mesh, k)?;
    let norm = zero.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
    checks.push(DiagnosticCheck {
        name: "zero-uniqueness",
        status: status(norm <= UNIQUENESS_TOLERANCE),
        residual: Some(norm),
        detail: "norm of the solution with zero data".into(),
    });
    Ok(DiagnosticsReport { checks })
}

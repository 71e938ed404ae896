//! Fairness and efficiency checks on the original (unlifted) instance.
//!
//! Only capacity and the no-justified-complaints condition decide whether an
//! allocation passes. Pareto efficiency, envy-freeness and sharing incentive
//! are reported for information.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::model::{
    usage_unchecked, utility, Allocation, Justification, ModelError, ProblemInstance, ResourceMatrix, Solution,
    ToleranceConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityVerdict {
    pub ok: bool,
    /// Every x_i lies in [0, 1] up to `eps_feasible`.
    pub bounds_ok: bool,
    /// Most overused resource and its usage, when any usage exceeds one.
    pub worst: Option<(usize, f64)>,
    pub usages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum UserStatus {
    /// Receives `share >= e_i` of this bottleneck.
    Justified { resource: usize, share: f64 },
    FullyGranted,
    Complaint {
        entitlement: f64,
        /// Largest share over bottleneck resources, if there are any.
        best_bottleneck: Option<(usize, f64)>,
        /// Resources where the user reaches his entitlement but which are
        /// not at capacity.
        entitled_non_bottlenecks: Vec<usize>,
    },
}

impl UserStatus {
    pub fn is_complaint(&self) -> bool {
        matches!(self, UserStatus::Complaint { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoVerdict {
    pub ok: bool,
    /// Users below their full request with no requested resource at capacity.
    pub unpinned: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvyVerdict {
    pub ok: bool,
    /// (envious user, envied user, margin) with the smallest margin.
    pub worst: Option<(usize, usize, f64)>,
    /// Same, with the envied bundle scaled by e_i / e_j before comparing.
    pub weighted_worst: Option<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncentiveVerdict {
    pub ok: bool,
    /// x_i minus what a static partition by entitlement would give user i.
    pub margins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub allocation: Allocation,
    pub capacity: CapacityVerdict,
    pub bottlenecks: BTreeSet<usize>,
    pub users: Vec<UserStatus>,
    pub pareto: ParetoVerdict,
    pub envy: EnvyVerdict,
    pub sharing_incentive: IncentiveVerdict,
    pub tolerances: ToleranceConfig,
}

fn check_len(inst: &ProblemInstance, x: &Allocation) -> Result<(), ModelError> {
    if x.len() != inst.n_users() {
        return Err(ModelError::DimensionMismatch {
            what: "allocation",
            found: x.len(),
            expected: inst.n_users(),
        });
    }
    Ok(())
}

pub fn check_capacity(inst: &ProblemInstance, x: &Allocation, eps_feasible: f64) -> Result<CapacityVerdict, ModelError> {
    check_len(inst, x)?;
    let usages: Vec<f64> = (0..inst.n_real_resources())
        .map(|j| usage_unchecked(inst, x.as_slice(), j))
        .collect();
    let worst = usages
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, u)| u > 1.0)
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let ok = usages.iter().all(|&u| u <= 1.0 + eps_feasible);
    Ok(CapacityVerdict {
        ok,
        bounds_ok: x.within_unit_box(eps_feasible),
        worst,
        usages,
    })
}

fn bottlenecks_of(usages: &[f64], eps_bottleneck: f64) -> BTreeSet<usize> {
    usages
        .iter()
        .enumerate()
        .filter(|&(_, &u)| u >= 1.0 - eps_bottleneck)
        .map(|(j, _)| j)
        .collect()
}

/// Classifies every user as justified by a bottleneck, fully granted, or
/// holding a complaint.
pub fn check_njc(inst: &ProblemInstance, x: &Allocation, tol: &ToleranceConfig) -> Result<Vec<UserStatus>, ModelError> {
    let cap = check_capacity(inst, x, tol.eps_feasible)?;
    let bottlenecks = bottlenecks_of(&cap.usages, tol.eps_bottleneck);
    Ok(user_statuses(inst, x, &bottlenecks, &cap.usages, tol))
}

fn user_statuses(
    inst: &ProblemInstance,
    x: &Allocation,
    bottlenecks: &BTreeSet<usize>,
    usages: &[f64],
    tol: &ToleranceConfig,
) -> Vec<UserStatus> {
    (0..inst.n_users())
        .map(|i| {
            let e = inst.entitlements()[i];
            let profile = inst.profile(i);
            let best = bottlenecks
                .iter()
                .map(|&j| (j, x[i] * profile[j]))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((resource, share)) if share >= e - tol.eps_njc => UserStatus::Justified { resource, share },
                _ if x[i] >= 1.0 - tol.eps_njc => UserStatus::FullyGranted,
                _ => UserStatus::Complaint {
                    entitlement: e,
                    best_bottleneck: best,
                    entitled_non_bottlenecks: (0..usages.len())
                        .filter(|j| !bottlenecks.contains(j) && x[i] * profile[*j] >= e - tol.eps_njc)
                        .collect(),
                },
            }
        })
        .collect()
}

pub fn check_pareto(inst: &ProblemInstance, x: &Allocation, tol: &ToleranceConfig) -> Result<ParetoVerdict, ModelError> {
    let cap = check_capacity(inst, x, tol.eps_feasible)?;
    Ok(pareto_from(inst, x, &cap.usages, tol))
}

fn pareto_from(inst: &ProblemInstance, x: &Allocation, usages: &[f64], tol: &ToleranceConfig) -> ParetoVerdict {
    let unpinned: Vec<usize> = (0..inst.n_users())
        .filter(|&i| x[i] < 1.0 - tol.eps_njc)
        .filter(|&i| {
            !inst
                .profile(i)
                .iter()
                .zip(usages)
                .any(|(&r, &u)| r > 0.0 && 1.0 - u <= tol.eps_bottleneck)
        })
        .collect();
    ParetoVerdict {
        ok: unpinned.is_empty(),
        unpinned,
    }
}

pub fn check_envy_free(inst: &ProblemInstance, x: &Allocation, tol: &ToleranceConfig) -> Result<EnvyVerdict, ModelError> {
    check_len(inst, x)?;
    let n = inst.n_users();
    let e = inst.entitlements();
    let mut worst: Option<(usize, usize, f64)> = None;
    let mut weighted_worst: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let bundle = x.bundle(inst, j);
            let margin = x[i] - utility(inst, i, &bundle);
            if worst.is_none_or(|(_, _, w)| margin < w) {
                worst = Some((i, j, margin));
            }
            if e[j] > 0.0 {
                let scaled: Vec<f64> = bundle.iter().map(|a| a * e[i] / e[j]).collect();
                let margin = x[i] - utility(inst, i, &scaled);
                if weighted_worst.is_none_or(|(_, _, w)| margin < w) {
                    weighted_worst = Some((i, j, margin));
                }
            }
        }
    }
    Ok(EnvyVerdict {
        ok: worst.is_none_or(|(_, _, m)| m >= -tol.eps_njc),
        worst,
        weighted_worst,
    })
}

/// What user i could run on a private slice of every resource proportional
/// to his entitlement.
pub fn static_share(inst: &ProblemInstance, user: usize) -> f64 {
    let e = inst.entitlements()[user];
    inst.profile(user)
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| (e / r).min(1.0))
        .fold(1.0, f64::min)
}

pub fn check_sharing_incentive(
    inst: &ProblemInstance,
    x: &Allocation,
    tol: &ToleranceConfig,
) -> Result<IncentiveVerdict, ModelError> {
    check_len(inst, x)?;
    let margins: Vec<f64> = (0..inst.n_users()).map(|i| x[i] - static_share(inst, i)).collect();
    Ok(IncentiveVerdict {
        ok: margins.iter().all(|&m| m >= -tol.eps_njc),
        margins,
    })
}

pub fn verify(inst: &ProblemInstance, x: &Allocation, tol: &ToleranceConfig) -> Result<VerificationReport, ModelError> {
    let capacity = check_capacity(inst, x, tol.eps_feasible)?;
    let bottlenecks = bottlenecks_of(&capacity.usages, tol.eps_bottleneck);
    let users = user_statuses(inst, x, &bottlenecks, &capacity.usages, tol);
    let pareto = pareto_from(inst, x, &capacity.usages, tol);
    let envy = check_envy_free(inst, x, tol)?;
    let sharing_incentive = check_sharing_incentive(inst, x, tol)?;
    let pass = capacity.ok && capacity.bounds_ok && !users.iter().any(UserStatus::is_complaint);
    Ok(VerificationReport {
        pass,
        allocation: x.clone(),
        capacity,
        bottlenecks,
        users,
        pareto,
        envy,
        sharing_incentive,
        tolerances: tol.clone(),
    })
}

/// Packages a verified allocation.
pub fn solution_from_report(inst: &ProblemInstance, x: &Allocation, report: &VerificationReport) -> Solution {
    Solution {
        allocation: x.clone(),
        bottlenecks: report.bottlenecks.clone(),
        justification: report
            .users
            .iter()
            .map(|s| match s {
                UserStatus::Justified { resource, .. } => Justification::Bottleneck(*resource),
                UserStatus::FullyGranted => Justification::FullyGranted,
                UserStatus::Complaint { .. } => Justification::Complaint,
            })
            .collect(),
        slacks: (0..inst.n_real_resources())
            .map(|j| 1.0 - report.capacity.usages[j])
            .collect(),
    }
}

fn num(v: f64) -> String {
    crate::rational::format_sig(v, 10)
}

impl VerificationReport {
    /// Text rendering with one-based indices and instance labels.
    pub fn render(&self, inst: &ProblemInstance) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        let xs: Vec<String> = self.allocation.0.iter().map(|&v| num(v)).collect();
        let _ = writeln!(out, "allocation: ({})", xs.join(", "));
        let _ = write!(out, "capacity: {}", if self.capacity.ok { "ok" } else { "VIOLATED" });
        if let Some((j, u)) = self.capacity.worst {
            let _ = write!(out, " (max usage {} on {})", num(u), inst.resource_label(j));
        }
        out.push('\n');
        if !self.capacity.bounds_ok {
            out.push_str("bounds: some x_i outside [0, 1]\n");
        }
        let names: Vec<String> = self.bottlenecks.iter().map(|&j| inst.resource_label(j)).collect();
        let _ = writeln!(
            out,
            "bottlenecks: {}",
            if names.is_empty() { "none".into() } else { names.join(", ") }
        );
        for (i, status) in self.users.iter().enumerate() {
            let label = inst.user_label(i);
            let line = match status {
                UserStatus::Justified { resource, share } => format!(
                    "{label}: justified by bottleneck {} (share {} >= entitlement {})",
                    inst.resource_label(*resource),
                    num(*share),
                    num(inst.entitlements()[i])
                ),
                UserStatus::FullyGranted => format!("{label}: fully granted"),
                UserStatus::Complaint {
                    entitlement,
                    best_bottleneck,
                    entitled_non_bottlenecks,
                } => {
                    let mut s = format!("{label}: NOT justified, entitlement {}", num(*entitlement));
                    match best_bottleneck {
                        Some((j, share)) => {
                            let _ = write!(s, "; best bottleneck {} gives only {}", inst.resource_label(*j), num(*share));
                        }
                        None => s.push_str("; requests no bottleneck resource"),
                    }
                    for &j in entitled_non_bottlenecks {
                        let _ = write!(s, "; {} not a bottleneck", inst.resource_label(j));
                    }
                    s
                }
            };
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(
            out,
            "pareto efficient: {}",
            if self.pareto.ok {
                "yes".to_string()
            } else {
                let users: Vec<String> = self.pareto.unpinned.iter().map(|&i| inst.user_label(i)).collect();
                format!("no ({} could grow)", users.join(", "))
            }
        );
        let _ = match self.envy.worst {
            Some((i, j, m)) => writeln!(
                out,
                "envy-free: {} (worst margin {} for {} toward {})",
                if self.envy.ok { "yes" } else { "no" },
                num(m),
                inst.user_label(i),
                inst.user_label(j)
            ),
            None => writeln!(out, "envy-free: yes"),
        };
        if let Some((i, j, m)) = self.envy.weighted_worst {
            let _ = writeln!(
                out,
                "entitlement-scaled envy: worst margin {} for {} toward {}",
                num(m),
                inst.user_label(i),
                inst.user_label(j)
            );
        }
        let min_margin = self.sharing_incentive.margins.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            out,
            "sharing incentive: {} (min margin {})",
            if self.sharing_incentive.ok { "yes" } else { "no" },
            num(min_margin)
        );
        out
    }

    /// JSON rendering with one-based indices.
    pub fn to_json(&self) -> Value {
        let users: Vec<Value> = self
            .users
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                UserStatus::Justified { resource, share } => {
                    json!({"user": i + 1, "status": "justified", "resource": resource + 1, "share": share})
                }
                UserStatus::FullyGranted => json!({"user": i + 1, "status": "fully_granted"}),
                UserStatus::Complaint {
                    entitlement,
                    best_bottleneck,
                    entitled_non_bottlenecks,
                } => json!({
                    "user": i + 1,
                    "status": "complaint",
                    "entitlement": entitlement,
                    "best_bottleneck": best_bottleneck.map(|(j, s)| json!({"resource": j + 1, "share": s})),
                    "entitled_non_bottlenecks": entitled_non_bottlenecks.iter().map(|j| j + 1).collect::<Vec<_>>(),
                }),
            })
            .collect();
        json!({
            "pass": self.pass,
            "allocation": self.allocation.0,
            "capacity": {
                "ok": self.capacity.ok,
                "bounds_ok": self.capacity.bounds_ok,
                "usages": self.capacity.usages,
                "worst": self.capacity.worst.map(|(j, u)| json!({"resource": j + 1, "usage": u})),
            },
            "bottlenecks": self.bottlenecks.iter().map(|j| j + 1).collect::<Vec<_>>(),
            "users": users,
            "pareto": {
                "ok": self.pareto.ok,
                "unpinned": self.pareto.unpinned.iter().map(|i| i + 1).collect::<Vec<_>>(),
            },
            "envy_free": {
                "ok": self.envy.ok,
                "worst": self.envy.worst.map(|(i, j, m)| json!({"user": i + 1, "toward": j + 1, "margin": m})),
                "weighted_worst": self.envy.weighted_worst.map(|(i, j, m)| json!({"user": i + 1, "toward": j + 1, "margin": m})),
            },
            "sharing_incentive": {
                "ok": self.sharing_incentive.ok,
                "margins": self.sharing_incentive.margins,
            },
        })
    }
}

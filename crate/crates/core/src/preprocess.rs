//! Reductions that put an instance into the form the trajectory solver
//! expects, and the map from reduced solutions back to the original users.
//!
//! The pipeline is: append one unit dummy column per user, drop real columns
//! whose total request is below capacity, then alternate between eliminating
//! users who never ask for their entitlement and removing dominated columns
//! until neither changes the instance. Every step is logged in a
//! [`ReductionTrace`], and replaying that log reproduces the reduced instance
//! exactly.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::lp::{self, Constraint, LinearProgram, LpError, LpOutcome};
use crate::model::{Allocation, ColumnOrigin, LiftedInstance, ProblemInstance, Solution, ToleranceConfig};
use crate::verifier::{self, VerificationReport};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("eliminating user {} exhausts {resource}, which user {} still requests", .user + 1, .other + 1)]
    InfeasibleByElimination {
        user: usize,
        other: usize,
        resource: ColumnOrigin,
    },
    #[error("dominance test failed: {0}")]
    Lp(#[from] LpError),
    #[error("trace refers to {0}, which is not present")]
    ReplayMismatch(String),
}

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("reduced allocation has {found} entries, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("lifted allocation fails verification on the original instance")]
    Inconsistent(Box<VerificationReport>),
}

/// How the surviving entitlements were rescaled after an elimination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EntitlementRescale {
    /// Multiplied by this factor, 1 / (remaining entitlement mass).
    Factor(f64),
    /// Survivors had no entitlement left; they share equally.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Elimination {
    /// Original user index.
    pub user: usize,
    pub entitlements: EntitlementRescale,
    /// Columns whose remaining requests were scaled, with the factor
    /// 1 / (1 - r_ij). Infinite when the column was exhausted.
    pub column_scales: Vec<(ColumnOrigin, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ReductionStep {
    DropSlack(ColumnOrigin),
    Eliminate(Elimination),
    RemoveDominated(ColumnOrigin),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTrace {
    pub steps: Vec<ReductionStep>,
    #[serde(rename = "final")]
    pub final_instance: LiftedInstance,
}

impl ReductionTrace {
    pub fn dropped_slack_resources(&self) -> Vec<ColumnOrigin> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                ReductionStep::DropSlack(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    pub fn eliminated_users(&self) -> Vec<&Elimination> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                ReductionStep::Eliminate(e) => Some(e),
                _ => None,
            })
            .collect()
    }

    pub fn removed_dominated(&self) -> Vec<ColumnOrigin> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                ReductionStep::RemoveDominated(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Re-applies the logged steps to `original`.
    pub fn replay(&self, original: &ProblemInstance) -> Result<LiftedInstance, PreprocessError> {
        let mut inst = add_dummy_resources(original);
        for step in &self.steps {
            match step {
                ReductionStep::DropSlack(c) | ReductionStep::RemoveDominated(c) => {
                    let col = inst
                        .column_index(*c)
                        .ok_or_else(|| PreprocessError::ReplayMismatch(c.to_string()))?;
                    inst.remove_column(col);
                }
                ReductionStep::Eliminate(e) => {
                    let row = inst
                        .users
                        .iter()
                        .position(|&u| u == e.user)
                        .ok_or_else(|| PreprocessError::ReplayMismatch(format!("user {}", e.user + 1)))?;
                    eliminate_row(&mut inst, row)?;
                }
            }
        }
        Ok(inst)
    }

    /// Human-readable log, one line per step.
    pub fn render(&self) -> String {
        let mut out = String::from("reductions:\n");
        if self.steps.is_empty() {
            out.push_str("  (none)\n");
        }
        for step in &self.steps {
            match step {
                ReductionStep::DropSlack(c) => {
                    let _ = writeln!(out, "  drop {c}: total request below capacity");
                }
                ReductionStep::RemoveDominated(c) => {
                    let _ = writeln!(out, "  remove {c}: implied by remaining constraints");
                }
                ReductionStep::Eliminate(e) => {
                    let rescale = match e.entitlements {
                        EntitlementRescale::Factor(f) => format!("entitlements x{}", crate::rational::format_sig(f, 10)),
                        EntitlementRescale::Uniform => "entitlements reset to uniform".into(),
                    };
                    let scales: Vec<String> = e
                        .column_scales
                        .iter()
                        .map(|(c, f)| format!("{c} x{}", crate::rational::format_sig(*f, 10)))
                        .collect();
                    let _ = writeln!(
                        out,
                        "  eliminate user {} (fully granted); {rescale}; requests {}",
                        e.user + 1,
                        if scales.is_empty() { "unchanged".into() } else { scales.join(", ") }
                    );
                }
            }
        }
        let f = &self.final_instance;
        let _ = writeln!(
            out,
            "reduced system: {} users, {} columns [{}]",
            f.n(),
            f.m(),
            f.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub remove_dominated: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { remove_dominated: true }
    }
}

/// Appends the N dummy columns, r_{i, m'+i} = 1.
pub fn add_dummy_resources(inst: &ProblemInstance) -> LiftedInstance {
    let n = inst.entitlements().len();
    let m_real = inst.n_real_resources();
    let requirements = inst
        .requirements()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut lifted = row.clone();
            lifted.extend((0..n).map(|k| if k == i { 1.0 } else { 0.0 }));
            lifted
        })
        .collect();
    let columns = (0..m_real)
        .map(ColumnOrigin::Real)
        .chain((0..n).map(ColumnOrigin::Dummy))
        .collect();
    LiftedInstance {
        base: inst.clone(),
        users: (0..n).collect(),
        entitlements: inst.entitlements().to_vec(),
        requirements,
        columns,
    }
}

/// Removes real columns whose total request is below capacity; such a
/// resource can never be a bottleneck. Dummy columns are kept.
pub fn drop_slack_resources(mut inst: LiftedInstance, eps_input: f64) -> (LiftedInstance, Vec<ColumnOrigin>) {
    let mut dropped = Vec::new();
    let mut col = 0;
    while col < inst.m() {
        if matches!(inst.columns[col], ColumnOrigin::Real(_)) && inst.column_sum(col) < 1.0 - eps_input {
            dropped.push(inst.columns[col]);
            inst.remove_column(col);
        } else {
            col += 1;
        }
    }
    (inst, dropped)
}

/// A user qualifies for elimination when he requests less than his
/// entitlement of every remaining real resource, or requests nothing at all.
fn qualifies(inst: &LiftedInstance, row: usize, eps_input: f64) -> bool {
    let e = inst.entitlements[row];
    let mut all_zero = true;
    let mut below = true;
    for col in inst.real_columns() {
        let r = inst.requirements[row][col];
        all_zero &= r == 0.0;
        below &= r < e - eps_input;
    }
    all_zero || below
}

fn eliminate_row(inst: &mut LiftedInstance, row: usize) -> Result<Elimination, PreprocessError> {
    let user = inst.users[row];
    let remaining: f64 = inst
        .entitlements
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != row)
        .map(|(_, e)| e)
        .sum();
    let survivors = inst.n() - 1;
    let rescale = if remaining > 0.0 {
        for (k, e) in inst.entitlements.iter_mut().enumerate() {
            if k != row {
                *e /= remaining;
            }
        }
        EntitlementRescale::Factor(1.0 / remaining)
    } else {
        for (k, e) in inst.entitlements.iter_mut().enumerate() {
            if k != row {
                *e = 1.0 / survivors as f64;
            }
        }
        EntitlementRescale::Uniform
    };

    let own_dummy = ColumnOrigin::Dummy(user);
    let mut column_scales = Vec::new();
    for col in 0..inst.m() {
        if inst.columns[col] == own_dummy {
            continue;
        }
        let r = inst.requirements[row][col];
        if r == 0.0 {
            continue;
        }
        let rest = 1.0 - r;
        if rest <= 0.0 {
            if let Some(other) = (0..inst.n()).find(|&k| k != row && inst.requirements[k][col] > 0.0) {
                return Err(PreprocessError::InfeasibleByElimination {
                    user,
                    other: inst.users[other],
                    resource: inst.columns[col],
                });
            }
            column_scales.push((inst.columns[col], f64::INFINITY));
            continue;
        }
        for (k, req) in inst.requirements.iter_mut().enumerate() {
            if k != row {
                req[col] /= rest;
            }
        }
        column_scales.push((inst.columns[col], 1.0 / rest));
    }

    inst.users.remove(row);
    inst.entitlements.remove(row);
    inst.requirements.remove(row);
    if let Some(col) = inst.column_index(own_dummy) {
        inst.remove_column(col);
    }
    Ok(Elimination {
        user,
        entitlements: rescale,
        column_scales,
    })
}

/// Repeatedly grants the lowest-indexed qualifying user his whole request and
/// renormalizes what remains, re-dropping slack columns after each step.
pub fn eliminate_satisfied_users(
    mut inst: LiftedInstance,
    eps_input: f64,
) -> Result<(LiftedInstance, Vec<ReductionStep>), PreprocessError> {
    let mut steps = Vec::new();
    while let Some(row) = (0..inst.n()).find(|&r| qualifies(&inst, r, eps_input)) {
        steps.push(ReductionStep::Eliminate(eliminate_row(&mut inst, row)?));
        let (next, dropped) = drop_slack_resources(inst, eps_input);
        inst = next;
        steps.extend(dropped.into_iter().map(ReductionStep::DropSlack));
    }
    Ok((inst, steps))
}

/// Largest usage column `col` can reach subject to every other column's
/// capacity and x >= 0; `None` if unbounded.
pub fn max_usage_without(inst: &LiftedInstance, col: usize) -> Result<Option<f64>, LpError> {
    let n = inst.n();
    let lp = LinearProgram {
        objective: inst.column(col),
        constraints: (0..inst.m())
            .filter(|&k| k != col)
            .map(|k| Constraint::le(inst.column(k), 1.0))
            .collect(),
        bounds: vec![(0.0, f64::INFINITY); n],
    };
    Ok(match lp::maximize(&lp)? {
        LpOutcome::Optimal(s) => Some(s.value),
        LpOutcome::Unbounded => None,
        LpOutcome::Infeasible => unreachable!("x = 0 satisfies every capacity constraint"),
    })
}

fn is_dominated(inst: &LiftedInstance, col: usize, tol: &ToleranceConfig) -> Result<bool, LpError> {
    let duplicate = (0..col).any(|k| {
        inst.requirements
            .iter()
            .all(|row| (row[k] - row[col]).abs() <= tol.eps_input)
    });
    if duplicate {
        return Ok(true);
    }
    Ok(matches!(max_usage_without(inst, col)?, Some(v) if v < 1.0 - tol.eps_feasible))
}

/// Removes columns implied by the others, scanning in ascending order and
/// restarting after each removal. A column is removed when the remaining
/// constraints keep its usage strictly below capacity, or when it repeats an
/// earlier column exactly. Columns that can just reach capacity are kept.
pub fn remove_dominated_constraints(
    mut inst: LiftedInstance,
    tol: &ToleranceConfig,
) -> Result<(LiftedInstance, Vec<ColumnOrigin>), PreprocessError> {
    let mut removed = Vec::new();
    'scan: loop {
        if inst.n() == 0 {
            break;
        }
        for col in 0..inst.m() {
            if is_dominated(&inst, col, tol)? {
                removed.push(inst.columns[col]);
                inst.remove_column(col);
                continue 'scan;
            }
        }
        break;
    }
    Ok((inst, removed))
}

/// Full reduction pipeline.
pub fn preprocess(
    inst: &ProblemInstance,
    tol: &ToleranceConfig,
    opts: PreprocessOptions,
) -> Result<(LiftedInstance, ReductionTrace), PreprocessError> {
    let lifted = add_dummy_resources(inst);
    let (mut current, dropped) = drop_slack_resources(lifted, tol.eps_input);
    let mut steps: Vec<ReductionStep> = dropped.into_iter().map(ReductionStep::DropSlack).collect();
    loop {
        let (next, elim_steps) = eliminate_satisfied_users(current, tol.eps_input)?;
        current = next;
        let eliminated = !elim_steps.is_empty();
        steps.extend(elim_steps);
        let mut removed_any = false;
        if opts.remove_dominated {
            let (next, removed) = remove_dominated_constraints(current, tol)?;
            current = next;
            removed_any = !removed.is_empty();
            steps.extend(removed.into_iter().map(ReductionStep::RemoveDominated));
        }
        // Removing a column can leave a user below his entitlement on every
        // remaining resource, so eliminate again until nothing changes.
        if !removed_any || (!eliminated && !(0..current.n()).any(|r| qualifies(&current, r, tol.eps_input))) {
            break;
        }
    }
    let trace = ReductionTrace {
        steps,
        final_instance: current.clone(),
    };
    Ok((current, trace))
}

/// Maps an allocation of the reduced users back to all original users;
/// eliminated users receive their whole request.
pub fn lift_allocation(trace: &ReductionTrace, reduced: &[f64]) -> Result<Allocation, LiftError> {
    let f = &trace.final_instance;
    if reduced.len() != f.n() {
        return Err(LiftError::Dimension {
            found: reduced.len(),
            expected: f.n(),
        });
    }
    let mut x = vec![1.0; f.base.entitlements().len()];
    for (row, &user) in f.users.iter().enumerate() {
        x[user] = reduced[row];
    }
    Ok(Allocation(x))
}

/// Lifts and verifies on the original instance.
pub fn lift_solution(trace: &ReductionTrace, reduced: &[f64], tol: &ToleranceConfig) -> Result<Solution, LiftError> {
    let x = lift_allocation(trace, reduced)?;
    let original = &trace.final_instance.base;
    let report = verifier::verify(original, &x, tol).map_err(|_| LiftError::Dimension {
        found: x.len(),
        expected: original.entitlements().len(),
    })?;
    if !report.pass {
        return Err(LiftError::Inconsistent(Box::new(report)));
    }
    Ok(verifier::solution_from_report(original, &x, &report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn dummy_columns_form_identity() {
        let l = add_dummy_resources(&fixtures::greedy3());
        assert_eq!(l.m(), 6);
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(l.requirements[i][3 + k], if i == k { 1.0 } else { 0.0 });
            }
        }
        let single = ProblemInstance::new(vec![1.0], vec![vec![0.7]]).unwrap();
        assert_eq!(add_dummy_resources(&single).requirements, vec![vec![0.7, 1.0]]);
        assert_eq!(add_dummy_resources(&fixtures::drf_compare()).m(), 5);
    }

    #[test]
    fn slack_column_dropped_and_tight_column_kept() {
        let inst = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.3, 1.0], vec![0.4, 0.5]]).unwrap();
        let (l, dropped) = drop_slack_resources(add_dummy_resources(&inst), 1e-9);
        assert_eq!(dropped, vec![ColumnOrigin::Real(0)]);
        assert_eq!(l.m(), 3);

        let (_, none) = drop_slack_resources(add_dummy_resources(&fixtures::drf_compare()), 1e-9);
        assert!(none.is_empty());

        // Resource 2 of the utilization example sums to exactly one.
        let (l, dropped) = drop_slack_resources(add_dummy_resources(&fixtures::utilization()), 1e-9);
        assert!(dropped.is_empty());
        assert!(l.column_index(ColumnOrigin::Real(1)).is_some());
    }

    #[test]
    fn worked_elimination_example() {
        let (l, _) = drop_slack_resources(add_dummy_resources(&fixtures::elim_example()), 1e-9);
        let (l, steps) = eliminate_satisfied_users(l, 1e-9).unwrap();
        assert_eq!(steps.len(), 1);
        let ReductionStep::Eliminate(e) = &steps[0] else {
            panic!("expected elimination")
        };
        assert_eq!(e.user, 0);
        assert_eq!(l.users, vec![1, 2]);
        assert!((l.entitlements[0] - 0.4).abs() < 1e-12);
        assert!((l.entitlements[1] - 0.6).abs() < 1e-12);
        let (_, s) = e.column_scales.iter().find(|(c, _)| *c == ColumnOrigin::Real(0)).unwrap();
        assert!((s - 5.0 / 3.0).abs() < 1e-12);
        let col = l.column_index(ColumnOrigin::Real(0)).unwrap();
        assert!((l.requirements[0][col] - 0.5 * 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nothing_to_eliminate_is_identity() {
        let (l, _) = drop_slack_resources(add_dummy_resources(&fixtures::greedy3()), 1e-9);
        let before = l.clone();
        let (after, steps) = eliminate_satisfied_users(l, 1e-9).unwrap();
        assert!(steps.is_empty());
        assert_eq!(before, after);
    }

    #[test]
    fn single_user_below_capacity_is_eliminated() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![0.4, 0.9]]).unwrap();
        let (reduced, trace) = preprocess(&inst, &tol(), PreprocessOptions::default()).unwrap();
        assert_eq!(reduced.n(), 0);
        let x = lift_allocation(&trace, &[]).unwrap();
        assert_eq!(x.0, vec![1.0]);
    }

    #[test]
    fn single_user_with_full_request_is_kept() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![1.0]]).unwrap();
        let (l, _) = drop_slack_resources(add_dummy_resources(&inst), 1e-9);
        let (l, steps) = eliminate_satisfied_users(l, 1e-9).unwrap();
        assert!(steps.is_empty());
        assert_eq!(l.n(), 1);
    }

    #[test]
    fn dominated_column_of_drf_example() {
        let l = add_dummy_resources(&fixtures::drf_compare());
        let v = max_usage_without(&l, 1).unwrap().unwrap();
        assert!((v - 0.92).abs() < 1e-12);
        let (l, removed) = remove_dominated_constraints(l, &tol()).unwrap();
        assert_eq!(removed, vec![ColumnOrigin::Real(1)]);
        assert_eq!(
            l.columns,
            vec![
                ColumnOrigin::Real(0),
                ColumnOrigin::Dummy(0),
                ColumnOrigin::Dummy(1),
                ColumnOrigin::Dummy(2)
            ]
        );
    }

    #[test]
    fn duplicated_column_second_copy_removed() {
        let inst = ProblemInstance::new(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![0.8, 0.8]]).unwrap();
        let (_, removed) = remove_dominated_constraints(add_dummy_resources(&inst), &tol()).unwrap();
        assert_eq!(removed.first(), Some(&ColumnOrigin::Real(1)));
    }

    #[test]
    fn family_example_real_columns_not_dominated() {
        let l = add_dummy_resources(&fixtures::nonunique_n3());
        for col in 0..2 {
            let v = max_usage_without(&l, col).unwrap().unwrap();
            assert!(v > 1.0 + 1e-9, "column {col}: {v}");
        }
        let (_, removed) = remove_dominated_constraints(l, &tol()).unwrap();
        assert!(removed.iter().all(|c| matches!(c, ColumnOrigin::Dummy(_))));
    }

    #[test]
    fn pipeline_on_drf_example() {
        let (reduced, trace) = preprocess(&fixtures::drf_compare(), &tol(), PreprocessOptions::default()).unwrap();
        assert_eq!(reduced.n(), 3);
        assert_eq!(trace.removed_dominated(), vec![ColumnOrigin::Real(1)]);
        assert!(trace.eliminated_users().is_empty());
        assert_eq!(reduced.real_columns().count(), 1);
    }

    #[test]
    fn pipeline_on_greedy_example_keeps_everything_real() {
        let (reduced, trace) = preprocess(&fixtures::greedy3(), &tol(), PreprocessOptions::default()).unwrap();
        assert!(trace.eliminated_users().is_empty());
        assert!(trace.dropped_slack_resources().is_empty());
        assert_eq!(reduced.n(), 3);
    }

    #[test]
    fn reduced_instance_without_dominated_removal_is_lifting_only() {
        let inst = fixtures::greedy3();
        let (reduced, trace) = preprocess(&inst, &tol(), PreprocessOptions { remove_dominated: false }).unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(reduced, add_dummy_resources(&inst));
    }

    #[test]
    fn replay_reproduces_final_instance_for_all_fixtures() {
        for (name, inst) in fixtures::all() {
            let (reduced, trace) = preprocess(&inst, &tol(), PreprocessOptions::default()).unwrap();
            assert_eq!(trace.replay(&inst).unwrap(), reduced, "{name}");
        }
    }

    #[test]
    fn reduced_instances_satisfy_theorem_hypotheses() {
        for (name, inst) in fixtures::all() {
            let (r, _) = preprocess(&inst, &tol(), PreprocessOptions::default()).unwrap();
            for col in r.real_columns() {
                assert!(r.column_sum(col) >= 1.0 - 1e-9, "{name}");
            }
            for row in 0..r.n() {
                let ok = r.real_columns().any(|c| r.requirements[row][c] >= r.entitlements[row] - 1e-9);
                assert!(ok, "{name}: user row {row}");
            }
            if r.n() > 0 {
                assert!((r.entitlements.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn lift_of_eliminated_user_is_full() {
        let (reduced, trace) = preprocess(&fixtures::elim_example(), &tol(), PreprocessOptions::default()).unwrap();
        let x = lift_allocation(&trace, &vec![0.5; reduced.n()]).unwrap();
        assert_eq!(x[0], 1.0);
        assert!(lift_allocation(&trace, &[0.5]).is_err());
    }

    #[test]
    fn lift_identity_without_reductions() {
        let inst = fixtures::slope2();
        let (_, trace) = preprocess(&inst, &tol(), PreprocessOptions::default()).unwrap();
        assert!(trace.eliminated_users().is_empty());
        let sol = lift_solution(&trace, &[0.6, 0.9], &tol()).unwrap();
        assert_eq!(sol.allocation.0, vec![0.6, 0.9]);
    }

    #[test]
    fn lift_drf_reduced_solution_respects_dropped_column() {
        let (_, trace) = preprocess(&fixtures::drf_compare(), &tol(), PreprocessOptions::default()).unwrap();
        let sol = lift_solution(&trace, &[1.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0], &tol()).unwrap();
        assert!((1.0 - sol.slacks[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn lift_of_unfair_point_is_an_error() {
        let (_, trace) = preprocess(&fixtures::slope2(), &tol(), PreprocessOptions::default()).unwrap();
        assert!(matches!(
            lift_solution(&trace, &[0.9, 0.6], &tol()),
            Err(LiftError::Inconsistent(_))
        ));
    }

    #[test]
    fn trace_renders_every_step() {
        let (_, trace) = preprocess(&fixtures::elim_example(), &tol(), PreprocessOptions::default()).unwrap();
        let text = trace.render();
        assert!(text.contains("eliminate user 1"), "{text}");
        assert!(text.contains("reduced system"));
    }
}

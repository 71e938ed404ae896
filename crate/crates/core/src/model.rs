//! Domain types and elementary quantities: usage, slack, bottlenecks and the
//! fixed-proportion utility of a resource bundle.
//!
//! Indices are zero-based internally. Anything rendered for people (reports,
//! violations, CLI output) uses one-based indices.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("requirements row {row} has {found} entries, expected {expected}")]
    RaggedRequirements {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("resource index {index} out of range ({count} resources)")]
    ResourceOutOfRange { index: usize, count: usize },
    #[error("user index {index} out of range ({count} users)")]
    UserOutOfRange { index: usize, count: usize },
    #[error("allocation is infeasible: resource {} used at {usage}", .resource + 1)]
    Infeasible { resource: usize, usage: f64 },
}

/// Read access to an N x m requirement matrix.
pub trait ResourceMatrix {
    fn n_users(&self) -> usize;
    fn n_resources(&self) -> usize;
    fn requirement(&self, user: usize, resource: usize) -> f64;
}

/// Entitlements and per-user requirement profiles over the real resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    entitlements: Vec<f64>,
    requirements: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resource_names: Option<Vec<String>>,
}

impl ProblemInstance {
    /// Builds an instance after checking only its shape. Value-level problems
    /// (entitlement sum, ranges) are reported by [`validate_instance`].
    pub fn new(entitlements: Vec<f64>, requirements: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if requirements.len() != entitlements.len() {
            return Err(ModelError::DimensionMismatch {
                what: "requirements",
                found: requirements.len(),
                expected: entitlements.len(),
            });
        }
        let width = requirements.first().map_or(0, Vec::len);
        for (row, r) in requirements.iter().enumerate() {
            if r.len() != width {
                return Err(ModelError::RaggedRequirements {
                    row,
                    found: r.len(),
                    expected: width,
                });
            }
        }
        Ok(Self {
            entitlements,
            requirements,
            user_names: None,
            resource_names: None,
        })
    }

    pub fn with_user_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.entitlements.len() {
            return Err(ModelError::DimensionMismatch {
                what: "users",
                found: names.len(),
                expected: self.entitlements.len(),
            });
        }
        self.user_names = Some(names);
        Ok(self)
    }

    pub fn with_resource_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.n_real_resources() {
            return Err(ModelError::DimensionMismatch {
                what: "resources",
                found: names.len(),
                expected: self.n_real_resources(),
            });
        }
        self.resource_names = Some(names);
        Ok(self)
    }

    pub fn n_real_resources(&self) -> usize {
        self.requirements.first().map_or(0, Vec::len)
    }

    pub fn entitlements(&self) -> &[f64] {
        &self.entitlements
    }

    pub fn requirements(&self) -> &[Vec<f64>] {
        &self.requirements
    }

    pub fn profile(&self, user: usize) -> &[f64] {
        &self.requirements[user]
    }

    pub fn user_names(&self) -> Option<&[String]> {
        self.user_names.as_deref()
    }

    pub fn resource_names(&self) -> Option<&[String]> {
        self.resource_names.as_deref()
    }

    /// Display label for a user, one-based when unnamed.
    pub fn user_label(&self, user: usize) -> String {
        match &self.user_names {
            Some(names) => names[user].clone(),
            None => format!("user {}", user + 1),
        }
    }

    pub fn resource_label(&self, resource: usize) -> String {
        match &self.resource_names {
            Some(names) => names[resource].clone(),
            None => format!("resource {}", resource + 1),
        }
    }

    /// Column sum of requests for one real resource.
    pub fn column_sum(&self, resource: usize) -> f64 {
        self.requirements.iter().map(|r| r[resource]).sum()
    }

    /// Largest requirement of a user (his dominant demand).
    pub fn dominant_demand(&self, user: usize) -> f64 {
        self.requirements[user].iter().copied().fold(0.0, f64::max)
    }

    /// Entitlements rescaled to sum to one. Used by the CLI's explicit
    /// renormalize option; the solver itself never renormalizes silently.
    pub fn renormalized(&self) -> Self {
        let total: f64 = self.entitlements.iter().sum();
        let mut out = self.clone();
        if total > 0.0 {
            for e in &mut out.entitlements {
                *e /= total;
            }
        }
        out
    }
}

impl ResourceMatrix for ProblemInstance {
    fn n_users(&self) -> usize {
        self.entitlements.len()
    }

    fn n_resources(&self) -> usize {
        self.n_real_resources()
    }

    fn requirement(&self, user: usize, resource: usize) -> f64 {
        self.requirements[user][resource]
    }
}

/// Where a column of a lifted instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColumnOrigin {
    /// Real resource, indexed in the original instance.
    Real(usize),
    /// Unit-demand dummy resource of one original user; binding means x_i = 1.
    Dummy(usize),
}

impl fmt::Display for ColumnOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnOrigin::Real(j) => write!(f, "resource {}", j + 1),
            ColumnOrigin::Dummy(i) => write!(f, "dummy of user {}", i + 1),
        }
    }
}

/// An instance with the per-user dummy columns appended, possibly reduced by
/// preprocessing. Rows map to surviving original users; columns carry their
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedInstance {
    pub base: ProblemInstance,
    pub users: Vec<usize>,
    pub entitlements: Vec<f64>,
    pub requirements: Vec<Vec<f64>>,
    pub columns: Vec<ColumnOrigin>,
}

impl LiftedInstance {
    /// Total column count, real plus dummy.
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }

    pub fn column_sum(&self, col: usize) -> f64 {
        self.requirements.iter().map(|r| r[col]).sum()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.requirements.iter().map(|r| r[col]).collect()
    }

    pub fn column_index(&self, origin: ColumnOrigin) -> Option<usize> {
        self.columns.iter().position(|&c| c == origin)
    }

    pub fn real_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, ColumnOrigin::Real(_)))
            .map(|(k, _)| k)
    }

    pub fn remove_column(&mut self, col: usize) {
        self.columns.remove(col);
        for row in &mut self.requirements {
            row.remove(col);
        }
    }
}

impl ResourceMatrix for LiftedInstance {
    fn n_users(&self) -> usize {
        self.users.len()
    }

    fn n_resources(&self) -> usize {
        self.columns.len()
    }

    fn requirement(&self, user: usize, resource: usize) -> f64 {
        self.requirements[user][resource]
    }
}

/// Per-user fractions of the requested profile that are granted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry lies in [-eps, 1 + eps].
    pub fn within_unit_box(&self, eps: f64) -> bool {
        self.0.iter().all(|&v| v >= -eps && v <= 1.0 + eps)
    }

    /// The bundle user `i` actually receives: x_i * r_i.
    pub fn bundle(&self, inst: &ProblemInstance, user: usize) -> Vec<f64> {
        inst.profile(user).iter().map(|r| r * self.0[user]).collect()
    }
}

impl From<Vec<f64>> for Allocation {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for Allocation {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Why a user cannot complain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Justification {
    /// Receives at least the entitlement on this bottleneck resource.
    Bottleneck(usize),
    /// Receives the whole request (x_i = 1).
    FullyGranted,
    /// Has a justified complaint.
    Complaint,
}

/// A verified allocation on an original instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub allocation: Allocation,
    /// Real resources whose usage is at capacity.
    pub bottlenecks: BTreeSet<usize>,
    pub justification: Vec<Justification>,
    /// 1 - usage for every real resource.
    pub slacks: Vec<f64>,
}

/// Numerical tolerances shared by the solver, verifier and oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub eps_input: f64,
    pub eps_feasible: f64,
    pub eps_bottleneck: f64,
    pub eps_njc: f64,
    pub t_max: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Successive doubling checkpoints closer than this count as converged.
    pub convergence: f64,
    pub grid_resolution: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            eps_input: 1e-9,
            eps_feasible: 1e-9,
            eps_bottleneck: 1e-6,
            eps_njc: 1e-6,
            t_max: 34.0,
            initial_step: 1e-3,
            min_step: 1e-12,
            max_step: 1.0,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            convergence: 1e-9,
            grid_resolution: 1e-4,
        }
    }
}

impl ToleranceConfig {
    /// Uniform verification tolerance, used for tight checks of polished points.
    pub fn strict(eps: f64) -> Self {
        Self {
            eps_feasible: eps,
            eps_bottleneck: eps,
            eps_njc: eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("eps_input", self.eps_input),
            ("eps_feasible", self.eps_feasible),
            ("eps_bottleneck", self.eps_bottleneck),
            ("eps_njc", self.eps_njc),
            ("t_max", self.t_max),
            ("initial_step", self.initial_step),
            ("min_step", self.min_step),
            ("max_step", self.max_step),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("convergence", self.convergence),
            ("grid_resolution", self.grid_resolution),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.eps_feasible > self.eps_bottleneck {
            return Err("eps_feasible must not exceed eps_bottleneck".into());
        }
        Ok(())
    }
}

/// One failed instance invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Field and one-based index, e.g. `requirements[2][1]`.
    pub field: String,
    /// How far the value is from the admissible set.
    pub residual: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every instance invariant and returns all violations found.
pub fn validate_instance(inst: &ProblemInstance, eps_input: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.n_users();
    if n == 0 {
        out.push(Violation {
            field: "entitlements".into(),
            residual: 1.0,
            message: "at least one user is required".into(),
        });
    }
    if inst.n_real_resources() == 0 {
        out.push(Violation {
            field: "requirements".into(),
            residual: 1.0,
            message: "at least one resource is required".into(),
        });
    }
    for (i, &e) in inst.entitlements().iter().enumerate() {
        if !e.is_finite() {
            out.push(Violation {
                field: format!("entitlements[{}]", i + 1),
                residual: f64::INFINITY,
                message: format!("entitlement {e} is not finite"),
            });
        } else if e < 0.0 {
            out.push(Violation {
                field: format!("entitlements[{}]", i + 1),
                residual: -e,
                message: format!("entitlement {e} is negative"),
            });
        }
    }
    let total: f64 = inst.entitlements().iter().sum();
    if n > 0 && (total - 1.0).abs() > eps_input {
        out.push(Violation {
            field: "entitlements".into(),
            residual: total - 1.0,
            message: format!("entitlements sum {total} ≠ 1"),
        });
    }
    for (i, row) in inst.requirements().iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                let residual = if r.is_nan() {
                    f64::INFINITY
                } else if r < 0.0 {
                    -r
                } else {
                    r - 1.0
                };
                out.push(Violation {
                    field: format!("requirements[{}][{}]", i + 1, j + 1),
                    residual,
                    message: format!("requirement {r} outside [0, 1]"),
                });
            }
        }
    }
    out
}

fn check_resource<M: ResourceMatrix>(inst: &M, j: usize) -> Result<(), ModelError> {
    if j >= inst.n_resources() {
        return Err(ModelError::ResourceOutOfRange {
            index: j,
            count: inst.n_resources(),
        });
    }
    Ok(())
}

fn check_len<M: ResourceMatrix>(inst: &M, x: &Allocation) -> Result<(), ModelError> {
    if x.len() != inst.n_users() {
        return Err(ModelError::DimensionMismatch {
            what: "allocation",
            found: x.len(),
            expected: inst.n_users(),
        });
    }
    Ok(())
}

/// Total usage of resource `j`: sum_i x_i r_ij.
pub fn resource_usage<M: ResourceMatrix>(inst: &M, x: &Allocation, j: usize) -> Result<f64, ModelError> {
    check_len(inst, x)?;
    check_resource(inst, j)?;
    Ok(usage_unchecked(inst, x.as_slice(), j))
}

pub(crate) fn usage_unchecked<M: ResourceMatrix>(inst: &M, x: &[f64], j: usize) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi * inst.requirement(i, j))
        .sum()
}

/// All usages, one per resource.
pub fn usages<M: ResourceMatrix>(inst: &M, x: &[f64]) -> Vec<f64> {
    (0..inst.n_resources())
        .map(|j| usage_unchecked(inst, x, j))
        .collect()
}

/// 1 - usage for every resource.
pub fn slacks<M: ResourceMatrix>(inst: &M, x: &[f64]) -> Vec<f64> {
    (0..inst.n_resources())
        .map(|j| 1.0 - usage_unchecked(inst, x, j))
        .collect()
}

/// Resources at capacity, `{ j : usage_j >= 1 - eps_bottleneck }`.
///
/// Fails when some usage exceeds `1 + eps_feasible`.
pub fn bottleneck_set<M: ResourceMatrix>(
    inst: &M,
    x: &Allocation,
    tol: &ToleranceConfig,
) -> Result<BTreeSet<usize>, ModelError> {
    check_len(inst, x)?;
    let mut set = BTreeSet::new();
    for j in 0..inst.n_resources() {
        let usage = usage_unchecked(inst, x.as_slice(), j);
        if usage > 1.0 + tol.eps_feasible {
            return Err(ModelError::Infeasible { resource: j, usage });
        }
        if usage >= 1.0 - tol.eps_bottleneck {
            set.insert(j);
        }
    }
    Ok(set)
}

/// Fraction of user `i`'s profile executable with the resource amounts in
/// `bundle`: the smallest `bundle_j / r_ij` over requested resources, capped
/// at one. A user requesting nothing is fully served by any bundle.
pub fn utility(inst: &ProblemInstance, user: usize, bundle: &[f64]) -> f64 {
    inst.profile(user)
        .iter()
        .zip(bundle)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, a)| a / r)
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn lifted(inst: &ProblemInstance) -> LiftedInstance {
        crate::preprocess::add_dummy_resources(inst)
    }

    #[test]
    fn symmetric_instance_is_valid() {
        let inst = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.5], vec![0.5]]).unwrap();
        assert!(validate_instance(&inst, 1e-9).is_empty());
    }

    #[test]
    fn entitlement_sum_violation_is_reported() {
        let inst = ProblemInstance::new(vec![0.6, 0.6], vec![vec![0.5], vec![0.5]]).unwrap();
        let v = validate_instance(&inst, 1e-9);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "entitlements");
        assert!((v[0].residual - 0.2).abs() < 1e-12);
        assert!(v[0].message.contains("1.2"));
    }

    #[test]
    fn greedy_example_is_valid() {
        assert!(validate_instance(&fixtures::greedy3(), 1e-9).is_empty());
    }

    #[test]
    fn out_of_range_requirement_names_index() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![0.3, 1.5]]).unwrap();
        let v = validate_instance(&inst, 1e-9);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "requirements[1][2]");
        assert!((v[0].residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_entitlement_and_empty_instance() {
        let inst = ProblemInstance::new(vec![1.5, -0.5], vec![vec![0.3], vec![0.3]]).unwrap();
        let v = validate_instance(&inst, 1e-9);
        assert!(v.iter().any(|v| v.field == "entitlements[2]"));
        let empty = ProblemInstance::new(vec![], vec![]).unwrap();
        assert_eq!(validate_instance(&empty, 1e-9).len(), 2);
    }

    #[test]
    fn ragged_rows_rejected_at_construction() {
        let err = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.5, 0.1], vec![0.5]]).unwrap_err();
        assert!(matches!(err, ModelError::RaggedRequirements { row: 1, .. }));
    }

    #[test]
    fn usage_of_greedy_repair_allocation() {
        let inst = lifted(&fixtures::greedy3());
        let x = Allocation(vec![0.75, 1.0, 0.0]);
        let u = resource_usage(&inst, &x, 1).unwrap();
        assert!((u - 1.0).abs() < 1e-15);
        let zero = Allocation::zeros(3);
        for j in 0..inst.m() {
            assert_eq!(resource_usage(&inst, &zero, j).unwrap(), 0.0);
        }
        assert!(resource_usage(&inst, &x, inst.m()).is_err());
    }

    #[test]
    fn usage_on_slope_example() {
        let inst = lifted(&fixtures::slope2());
        let u = resource_usage(&inst, &Allocation(vec![0.6, 0.9]), 0).unwrap();
        assert!((u - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bottlenecks_of_drf_example() {
        let inst = lifted(&fixtures::drf_compare());
        let x = Allocation(vec![1.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0]);
        let set = bottleneck_set(&inst, &x, &ToleranceConfig::default()).unwrap();
        let real: Vec<_> = set
            .iter()
            .filter(|&&j| matches!(inst.columns[j], ColumnOrigin::Real(_)))
            .collect();
        assert_eq!(real, vec![&0]);
    }

    #[test]
    fn interior_point_has_no_bottlenecks() {
        let inst = lifted(&fixtures::circle4());
        let x = Allocation(vec![0.1; 4]);
        assert!(bottleneck_set(&inst, &x, &ToleranceConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn both_resources_bottleneck_in_family_example() {
        let inst = lifted(&fixtures::nonunique_n3());
        let x = Allocation(vec![0.5, 0.5, 0.5]);
        let set = bottleneck_set(&inst, &x, &ToleranceConfig::default()).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn infeasible_allocation_is_an_error() {
        let inst = fixtures::greedy3();
        let x = Allocation(vec![1.0, 1.0, 1.0]);
        let err = bottleneck_set(&inst, &x, &ToleranceConfig::default()).unwrap_err();
        assert!(matches!(err, ModelError::Infeasible { resource: 0, .. }));
    }

    #[test]
    fn utility_of_own_and_foreign_bundles() {
        let inst = fixtures::drf_compare();
        let x = Allocation(vec![1.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0]);
        for i in 0..3 {
            let u = utility(&inst, i, &x.bundle(&inst, i));
            assert!((u - x[i]).abs() < 1e-15);
        }
        let u = utility(&inst, 2, &[1.0 / 3.0, 2.0 / 30.0]);
        assert!((u - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn utility_of_empty_profile_is_one() {
        let inst = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(utility(&inst, 0, &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn tolerance_defaults_are_consistent() {
        ToleranceConfig::default().validate().unwrap();
        let bad = ToleranceConfig {
            eps_feasible: 1e-3,
            eps_bottleneck: 1e-6,
            ..ToleranceConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

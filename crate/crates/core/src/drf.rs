//! Entitlement-weighted dominant resource fairness under fixed proportions.
//!
//! Every user gets x_i = min(1, s e_i / d_i), where d_i is his dominant
//! demand, and the common level s is raised until some resource saturates.
//! Usage is piecewise linear in s with kinks where users cap at one, so the
//! saturation level is found exactly by scanning those kinks.

use serde::Serialize;

use crate::model::{usages, Allocation, ProblemInstance, ResourceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrfResult {
    pub x: Allocation,
    /// The common normalized level s.
    pub level: f64,
    /// x_i * d_i per user.
    pub dominant_shares: Vec<f64>,
    /// First resource to reach capacity; `None` when every user is capped.
    pub saturating_resource: Option<usize>,
    pub utilizations: Vec<f64>,
}

/// x_i times the user's largest requirement.
pub fn dominant_share(inst: &ProblemInstance, user: usize, x_i: f64) -> f64 {
    x_i * inst.dominant_demand(user)
}

fn allocation_at(inst: &ProblemInstance, s: f64) -> Vec<f64> {
    (0..inst.n_users())
        .map(|i| {
            let d = inst.dominant_demand(i);
            let e = inst.entitlements()[i];
            if d == 0.0 {
                1.0
            } else {
                (s * e / d).min(1.0)
            }
        })
        .collect()
}

pub fn solve_drf(inst: &ProblemInstance) -> DrfResult {
    let n = inst.n_users();
    let m = inst.n_real_resources();
    // Level at which each user caps at one.
    let mut kinks: Vec<f64> = (0..n)
        .filter_map(|i| {
            let d = inst.dominant_demand(i);
            let e = inst.entitlements()[i];
            (d > 0.0 && e > 0.0).then(|| d / e)
        })
        .collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    let mut lo = 0.0;
    let mut found: Option<(f64, usize)> = None;
    for &hi in &kinks {
        // On [lo, hi] usage_j(s) = fixed_j + slope_j * s.
        let mid = 0.5 * (lo + hi);
        let mut best: Option<(f64, usize)> = None;
        for j in 0..m {
            let mut fixed = 0.0;
            let mut slope = 0.0;
            for i in 0..n {
                let r = inst.requirement(i, j);
                let d = inst.dominant_demand(i);
                let e = inst.entitlements()[i];
                if d == 0.0 || mid * e / d >= 1.0 {
                    fixed += r;
                } else {
                    slope += r * e / d;
                }
            }
            if slope > 0.0 {
                let s = (1.0 - fixed) / slope;
                if s <= hi && best.is_none_or(|(b, _)| s < b) {
                    best = Some((s.max(lo), j));
                }
            }
        }
        if best.is_some() {
            found = best;
            break;
        }
        lo = hi;
    }
    let (level, saturating_resource) = match found {
        Some((s, j)) => (s, Some(j)),
        None => (kinks.last().copied().unwrap_or(0.0), None),
    };
    let x = allocation_at(inst, level);
    let dominant_shares = (0..n).map(|i| dominant_share(inst, i, x[i])).collect();
    let utilizations = usages(inst, &x);
    DrfResult {
        x: Allocation(x),
        level,
        dominant_shares,
        saturating_resource,
        utilizations,
    }
}

pub fn average_utilization(utilizations: &[f64]) -> f64 {
    if utilizations.is_empty() {
        return 0.0;
    }
    utilizations.iter().sum::<f64>() / utilizations.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn dominant_share_examples() {
        let inst = fixtures::drf_compare();
        assert!((dominant_share(&inst, 2, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(dominant_share(&inst, 0, 0.0), 0.0);
        let narrative = ProblemInstance::new(vec![1.0], vec![vec![0.2, 0.07, 0.37]]).unwrap();
        assert!((dominant_share(&narrative, 0, 1.0) - 0.37).abs() < 1e-15);
        let empty = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(dominant_share(&empty, 0, 1.0), 0.0);
    }

    #[test]
    fn drf_on_comparison_example() {
        let inst = fixtures::drf_compare();
        let r = solve_drf(&inst);
        for (got, want) in r.x.0.iter().zip([0.4, 0.4, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        for s in &r.dominant_shares {
            assert!((s - 0.4).abs() < 1e-12);
        }
        assert_eq!(r.saturating_resource, Some(0));
        let a1 = r.x.bundle(&inst, 0);
        assert!((a1[0] - 0.4).abs() < 1e-12 && (a1[1] - 0.08).abs() < 1e-12);
        let a3 = r.x.bundle(&inst, 2);
        assert!((a3[0] - 0.2).abs() < 1e-12 && (a3[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn drf_on_utilization_example() {
        let inst = fixtures::utilization();
        let r = solve_drf(&inst);
        assert!((r.x[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.x[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((average_utilization(&r.utilizations) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_user_caps_at_full_request() {
        let inst = ProblemInstance::new(vec![1.0], vec![vec![0.5]]).unwrap();
        let r = solve_drf(&inst);
        assert_eq!(r.x.0, vec![1.0]);
        assert_eq!(r.saturating_resource, None);
    }

    #[test]
    fn capped_user_then_saturation() {
        // User 1 caps at s = 0.5; resource then saturates at s = 1.75.
        let inst = ProblemInstance::new(vec![0.5, 0.5], vec![vec![0.25], vec![1.0]]).unwrap();
        let r = solve_drf(&inst);
        assert_eq!(r.x[0], 1.0);
        assert!((r.x[1] - 0.75).abs() < 1e-12);
        assert!((r.utilizations[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_entitlement_gets_nothing() {
        let inst = ProblemInstance::new(vec![0.0, 1.0], vec![vec![1.0], vec![0.5]]).unwrap();
        let r = solve_drf(&inst);
        assert_eq!(r.x[0], 0.0);
        assert_eq!(r.x[1], 1.0);
    }

    #[test]
    fn middles_family_utilization_formula() {
        for k in [0usize, 2, 10, 50] {
            let r = solve_drf(&fixtures::utilization_with_middles(k));
            let want = (5.0 / 3.0 + 2.0 * k as f64 / 3.0) / (k as f64 + 2.0);
            assert!((average_utilization(&r.utilizations) - want).abs() < 1e-12, "k = {k}");
        }
    }
}

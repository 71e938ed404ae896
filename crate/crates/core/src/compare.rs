//! Side-by-side report of the bottleneck-fair allocation and weighted DRF.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::drf::{self, average_utilization};
use crate::model::{usages, ProblemInstance};
use crate::ode_solver::{self, SolveError, SolveOptions};
use crate::rational::format_sig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Side {
    pub x: Vec<f64>,
    /// Per-user bundles x_i r_i.
    pub bundles: Vec<Vec<f64>>,
    pub dominant_shares: Vec<f64>,
    pub utilizations: Vec<f64>,
    pub average_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub fair: Side,
    pub fair_verified: bool,
    pub drf: Side,
}

fn side(inst: &ProblemInstance, x: Vec<f64>) -> Side {
    let bundles = inst
        .requirements()
        .iter()
        .zip(&x)
        .map(|(row, xi)| row.iter().map(|r| r * xi).collect())
        .collect();
    let dominant_shares = (0..x.len()).map(|i| drf::dominant_share(inst, i, x[i])).collect();
    let utilizations = usages(inst, &x);
    Side {
        average_utilization: average_utilization(&utilizations),
        x,
        bundles,
        dominant_shares,
        utilizations,
    }
}

pub fn compare(inst: &ProblemInstance, opts: &SolveOptions) -> Result<Comparison, SolveError> {
    let fair = ode_solver::solve(inst, opts)?;
    let d = drf::solve_drf(inst);
    Ok(Comparison {
        fair: side(inst, fair.solution.allocation.0.clone()),
        fair_verified: fair.verified,
        drf: side(inst, d.x.0),
    })
}

fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| format_sig(x, 6)).collect();
    format!("({})", parts.join(", "))
}

impl Comparison {
    pub fn render(&self, inst: &ProblemInstance) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:<36} DRF", "", "bottleneck-fair");
        for i in 0..self.fair.x.len() {
            let label = inst.user_label(i);
            let _ = writeln!(out, "{label}");
            let _ = writeln!(
                out,
                "  {:<10} {:<36} {}",
                "x",
                format_sig(self.fair.x[i], 6),
                format_sig(self.drf.x[i], 6)
            );
            let _ = writeln!(
                out,
                "  {:<10} {:<36} {}",
                "bundle",
                vector(&self.fair.bundles[i]),
                vector(&self.drf.bundles[i])
            );
            let _ = writeln!(
                out,
                "  {:<10} {:<36} {}",
                "dominant",
                format_sig(self.fair.dominant_shares[i], 6),
                format_sig(self.drf.dominant_shares[i], 6)
            );
        }
        let _ = writeln!(
            out,
            "{:<12} {:<36} {}",
            "utilization",
            vector(&self.fair.utilizations),
            vector(&self.drf.utilizations)
        );
        let _ = writeln!(
            out,
            "{:<12} {:<36} {}",
            "average",
            format_sig(self.fair.average_utilization, 6),
            format_sig(self.drf.average_utilization, 6)
        );
        if !self.fair_verified {
            out.push_str("warning: bottleneck-fair allocation did not verify\n");
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let side = |s: &Side| {
            json!({
                "x": s.x,
                "bundles": s.bundles,
                "dominant_shares": s.dominant_shares,
                "utilizations": s.utilizations,
                "average_utilization": s.average_utilization,
            })
        };
        json!({
            "bottleneck_fair": side(&self.fair),
            "bottleneck_fair_verified": self.fair_verified,
            "drf": side(&self.drf),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn comparison_example_bundles() {
        let c = compare(&fixtures::drf_compare(), &SolveOptions::default()).unwrap();
        let a3 = &c.fair.bundles[2];
        assert!((a3[0] - 1.0 / 3.0).abs() < 1e-5 && (a3[1] - 2.0 / 3.0).abs() < 1e-5);
        let d3 = &c.drf.bundles[2];
        assert!((d3[0] - 0.2).abs() < 1e-9 && (d3[1] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn utilization_example_averages() {
        let c = compare(&fixtures::utilization(), &SolveOptions::default()).unwrap();
        assert!((c.fair.average_utilization - 0.75).abs() < 1e-5);
        assert!((c.drf.average_utilization - 0.75).abs() < 1e-9);
    }

    #[test]
    fn single_resource_allocations_coincide() {
        let inst = ProblemInstance::new(vec![0.3, 0.7], vec![vec![0.8], vec![0.9]]).unwrap();
        let c = compare(&inst, &SolveOptions::default()).unwrap();
        for (a, b) in c.fair.x.iter().zip(&c.drf.x) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", c.fair.x, c.drf.x);
        }
        let text = c.render(&inst);
        assert!(text.contains("average"));
    }
}

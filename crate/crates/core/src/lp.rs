//! Dense two-phase bounded simplex for the small linear programs that come up
//! in preprocessing, polishing and the enumeration oracle.
//!
//! Variables carry finite lower bounds and optional upper bounds. Bland's rule
//! picks both the entering and the leaving variable, so degenerate problems
//! (the oracle's equality-heavy systems are full of them) cannot cycle.

use serde::Serialize;
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Le,
            rhs,
        }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Eq,
            rhs,
        }
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Ge,
            rhs,
        }
    }

    /// Signed amount by which `x` violates the constraint (zero if satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// maximize `objective · x` subject to `constraints` and `bounds[k].0 <= x_k <= bounds[k].1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("{what} has {found} coefficients, expected {expected}")]
    Dimension {
        what: String,
        found: usize,
        expected: usize,
    },
    #[error("variable {var} has invalid bounds [{lo}, {hi}]")]
    InvalidBounds { var: usize, lo: f64, hi: f64 },
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

impl LinearProgram {
    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(LpError::Dimension {
                what: "bounds".into(),
                found: self.bounds.len(),
                expected: n,
            });
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Dimension {
                    what: format!("constraint {k}"),
                    found: c.coeffs.len(),
                    expected: n,
                });
            }
        }
        for (var, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(LpError::InvalidBounds { var, lo, hi });
            }
        }
        Ok(())
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
    /// Reduced costs; last entry holds minus the objective value.
    reduced: Vec<f64>,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in &mut self.rows[r] {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, pv) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn price(&mut self, cost: &[f64]) {
        let mut reduced = cost.to_vec();
        reduced.push(0.0);
        for (r, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (d, v) in reduced.iter_mut().zip(row) {
                    *d -= cb * v;
                }
            }
        }
        self.reduced = reduced;
    }

    /// Maximizes the priced objective over columns where `allowed` is true.
    /// Returns false if unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> Result<bool, LpError> {
        for _ in 0..MAX_ITERATIONS {
            let entering = (0..self.ncols).find(|&j| allowed[j] && self.reduced[j] > COST_TOL);
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, best)) => {
                            if ratio < best - 1e-12 * best.abs().max(1.0)
                                || (ratio <= best + 1e-12 * best.abs().max(1.0)
                                    && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        Err(LpError::IterationLimit)
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn maximize(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let n = lp.objective.len();
    let lo: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();

    // Rows over shifted variables y = x - lo >= 0.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let shift: f64 = c.coeffs.iter().zip(&lo).map(|(a, l)| a * l).sum();
        rows.push((c.coeffs.clone(), c.relation, c.rhs - shift));
    }
    for (k, &(l, h)) in lp.bounds.iter().enumerate() {
        if h.is_finite() {
            let mut coeffs = vec![0.0; n];
            coeffs[k] = 1.0;
            rows.push((coeffs, Relation::Le, h - l));
        }
    }
    for (coeffs, rel, rhs) in &mut rows {
        if *rhs < 0.0 {
            coeffs.iter_mut().for_each(|a| *a = -*a);
            *rhs = -*rhs;
            *rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let ncols = n + n_slack + n_art;
    let mut table = Vec::with_capacity(rows.len());
    let mut basis = Vec::with_capacity(rows.len());
    let (mut s_next, mut a_next) = (n, n + n_slack);
    for (coeffs, rel, rhs) in &rows {
        let mut row = vec![0.0; ncols + 1];
        row[..n].copy_from_slice(coeffs);
        row[ncols] = *rhs;
        match rel {
            Relation::Le => {
                row[s_next] = 1.0;
                basis.push(s_next);
                s_next += 1;
            }
            Relation::Ge => {
                row[s_next] = -1.0;
                s_next += 1;
                row[a_next] = 1.0;
                basis.push(a_next);
                a_next += 1;
            }
            Relation::Eq => {
                row[a_next] = 1.0;
                basis.push(a_next);
                a_next += 1;
            }
        }
        table.push(row);
    }
    let is_art = |j: usize| j >= n + n_slack;
    let mut t = Tableau {
        rows: table,
        basis,
        ncols,
        reduced: Vec::new(),
    };

    if n_art > 0 {
        let cost: Vec<f64> = (0..ncols).map(|j| if is_art(j) { -1.0 } else { 0.0 }).collect();
        t.price(&cost);
        let allowed = vec![true; ncols];
        t.optimize(&allowed)?;
        let scale = rows.iter().map(|r| r.2.abs()).fold(1.0, f64::max);
        let infeasibility: f64 = t
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| is_art(b))
            .map(|(r, _)| t.rhs(r))
            .sum();
        if infeasibility > FEAS_TOL * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining zero-level artificials out of the basis.
        let mut r = 0;
        while r < t.rows.len() {
            if is_art(t.basis[r]) {
                let replacement = (0..n + n_slack).find(|&j| t.rows[r][j].abs() > 1e-9);
                match replacement {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(&lp.objective);
    t.price(&cost);
    let allowed: Vec<bool> = (0..ncols).map(|j| !is_art(j)).collect();
    if !t.optimize(&allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = lo;
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.rhs(r).max(0.0);
        }
    }
    for (v, &(_, h)) in x.iter_mut().zip(&lp.bounds) {
        *v = v.min(h);
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal(LpSolution { value, x }))
}

/// Minimizes `lp.objective · x`; the reported value is the minimum.
pub fn minimize(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let flipped = LinearProgram {
        objective: lp.objective.iter().map(|c| -c).collect(),
        ..lp.clone()
    };
    Ok(match maximize(&flipped)? {
        LpOutcome::Optimal(s) => LpOutcome::Optimal(LpSolution {
            value: -s.value,
            x: s.x,
        }),
        other => other,
    })
}

/// Phase-one feasibility: a point satisfying every constraint, or `None`.
pub fn feasible(constraints: &[Constraint], bounds: &[(f64, f64)]) -> Result<Option<Vec<f64>>, LpError> {
    let lp = LinearProgram {
        objective: vec![0.0; bounds.len()],
        constraints: constraints.to_vec(),
        bounds: bounds.to_vec(),
    };
    Ok(maximize(&lp)?.optimal().map(|s| s.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(n: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); n]
    }

    #[test]
    fn single_constraint() {
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            constraints: vec![Constraint::le(vec![1.0, 1.0], 1.0)],
            bounds: unit_box(2),
        };
        let s = maximize(&lp).unwrap().optimal().unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domination_lp_of_drf_example() {
        let lp = LinearProgram {
            objective: vec![0.2, 0.2, 0.8],
            constraints: vec![Constraint::le(vec![1.0, 1.0, 0.4], 1.0)],
            bounds: unit_box(3),
        };
        let s = maximize(&lp).unwrap().optimal().unwrap();
        assert!((s.value - 0.92).abs() < 1e-12);
        assert!((s.x[2] - 1.0).abs() < 1e-12);
        assert!((s.x[0] + s.x[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: vec![Constraint::eq(vec![1.0], 2.0)],
            bounds: unit_box(1),
        };
        assert_eq!(maximize(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            constraints: vec![Constraint::le(vec![0.0, 1.0], 1.0)],
            bounds: vec![(0.0, f64::INFINITY); 2],
        };
        assert_eq!(maximize(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn empty_system_is_feasible() {
        let w = feasible(&[], &unit_box(3)).unwrap().unwrap();
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn inconsistent_equalities() {
        let cons = [Constraint::eq(vec![1.0], 0.3), Constraint::eq(vec![1.0], 0.4)];
        assert!(feasible(&cons, &unit_box(1)).unwrap().is_none());
    }

    #[test]
    fn family_system_has_witness() {
        // Both resources at capacity, every user at his entitlement on the
        // shared resource or his own one.
        let cons = [
            Constraint::eq(vec![1.0, 0.0, 1.0], 1.0),
            Constraint::eq(vec![1.0, 1.0, 0.0], 1.0),
            Constraint::ge(vec![1.0, 0.0, 0.0], 0.5),
            Constraint::ge(vec![0.0, 1.0, 0.0], 0.3),
            Constraint::ge(vec![0.0, 0.0, 1.0], 0.2),
        ];
        let w = feasible(&cons, &unit_box(3)).unwrap().unwrap();
        for c in &cons {
            assert!(c.violation(&w) <= 1e-9);
        }
        assert!(w[0] >= 0.5 - 1e-9 && w[0] <= 0.7 + 1e-9);
    }

    #[test]
    fn shifted_lower_bounds_and_minimize() {
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            constraints: vec![Constraint::ge(vec![1.0, 1.0], 1.5)],
            bounds: vec![(0.25, 1.0), (0.5, 1.0)],
        };
        let s = minimize(&lp).unwrap().optimal().unwrap();
        assert!((s.value - 2.0).abs() < 1e-12, "{s:?}");
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example for the largest-coefficient rule.
        let lp = LinearProgram {
            objective: vec![10.0, -57.0, -9.0, -24.0],
            constraints: vec![
                Constraint::le(vec![0.5, -5.5, -2.5, 9.0], 0.0),
                Constraint::le(vec![0.5, -1.5, -0.5, 1.0], 0.0),
                Constraint::le(vec![1.0, 0.0, 0.0, 0.0], 1.0),
            ],
            bounds: vec![(0.0, f64::INFINITY); 4],
        };
        let s = maximize(&lp).unwrap().optimal().unwrap();
        assert!((s.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_errors() {
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: vec![Constraint::le(vec![1.0, 1.0], 1.0)],
            bounds: unit_box(1),
        };
        assert!(matches!(maximize(&lp), Err(LpError::Dimension { .. })));
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: vec![],
            bounds: vec![(1.0, 0.0)],
        };
        assert!(matches!(maximize(&lp), Err(LpError::InvalidBounds { .. })));
    }

    /// Brute-force optimum over all vertices of a 3-variable polytope
    /// {A x <= b, 0 <= x <= 1}.
    fn vertex_enumeration(obj: &[f64; 3], a: &[[f64; 3]], b: &[f64]) -> Option<f64> {
        let mut planes: Vec<([f64; 3], f64)> = a.iter().copied().zip(b.iter().copied()).collect();
        for k in 0..3 {
            let mut e = [0.0; 3];
            e[k] = 1.0;
            planes.push((e, 1.0));
            e[k] = -1.0;
            planes.push((e, 0.0));
        }
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let mut best: Option<f64> = None;
        for i in 0..planes.len() {
            for j in i + 1..planes.len() {
                for k in j + 1..planes.len() {
                    let m = [planes[i].0, planes[j].0, planes[k].0];
                    let d = det3(m);
                    if d.abs() < 1e-10 {
                        continue;
                    }
                    let rhs = [planes[i].1, planes[j].1, planes[k].1];
                    let mut x = [0.0; 3];
                    for c in 0..3 {
                        let mut mc = m;
                        for r in 0..3 {
                            mc[r][c] = rhs[r];
                        }
                        x[c] = det3(mc) / d;
                    }
                    let ok = planes
                        .iter()
                        .all(|(p, q)| p[0] * x[0] + p[1] * x[1] + p[2] * x[2] <= q + 1e-9);
                    if ok {
                        let v = obj[0] * x[0] + obj[1] * x[1] + obj[2] * x[2];
                        best = Some(best.map_or(v, |b: f64| b.max(v)));
                    }
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn agrees_with_vertex_enumeration(
            obj in prop::array::uniform3(-1.0f64..1.0),
            rows in prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), 0.0f64..1.5), 1..5),
        ) {
            let a: Vec<[f64; 3]> = rows.iter().map(|r| r.0).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let lp = LinearProgram {
                objective: obj.to_vec(),
                constraints: rows.iter().map(|(c, r)| Constraint::le(c.to_vec(), *r)).collect(),
                bounds: unit_box(3),
            };
            // Origin is always feasible since b >= 0.
            let s = maximize(&lp).unwrap().optimal().unwrap();
            let brute = vertex_enumeration(&obj, &a, &b).unwrap();
            prop_assert!((s.value - brute).abs() <= 1e-8, "simplex {} brute {}", s.value, brute);
            for c in &lp.constraints {
                prop_assert!(c.violation(&s.x) <= 1e-9);
            }
            let re: f64 = obj.iter().zip(&s.x).map(|(c, v)| c * v).sum();
            prop_assert!((re - s.value).abs() <= 1e-12 * s.value.abs().max(1.0));
        }

        #[test]
        fn equality_systems_have_valid_witnesses(
            rows in prop::collection::vec((prop::array::uniform3(0.0f64..1.0), 0.2f64..1.0), 1..3),
        ) {
            let cons: Vec<Constraint> = rows.iter().map(|(c, r)| Constraint::eq(c.to_vec(), *r)).collect();
            if let Some(w) = feasible(&cons, &unit_box(3)).unwrap() {
                for c in &cons {
                    prop_assert!(c.violation(&w) <= 1e-9);
                }
                prop_assert!(w.iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
            }
        }
    }
}

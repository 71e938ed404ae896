//! Independent ground truth for small instances.
//!
//! [`enumerate_solutions`] checks every candidate bottleneck set I and every
//! way of justifying the users within it by a linear feasibility problem.
//! [`grid_search_n2`] walks the boundary of a two-user instance. Neither uses
//! the trajectory solver.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::lp::{self, Constraint, LinearProgram, LpError, LpOutcome};
use crate::model::{Allocation, ProblemInstance, ResourceMatrix, ToleranceConfig};
use crate::verifier;

pub const MAX_USERS: usize = 6;
pub const MAX_RESOURCES: usize = 6;
/// Witnesses closer than this in the max norm are the same point.
pub const WITNESS_RESOLUTION: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance has {users} users and {resources} resources; enumeration is limited to {MAX_USERS} x {MAX_RESOURCES}")]
    TooLarge { users: usize, resources: usize },
    #[error("grid search needs exactly two users, got {0}")]
    NotTwoUsers(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One candidate: resources in `bottlenecks` are at capacity and each user
/// is justified by `justification[i]` (`None`: the user is fully granted).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FeasibilityQuery {
    pub bottlenecks: Vec<usize>,
    pub justification: Vec<Option<usize>>,
}

impl FeasibilityQuery {
    fn constraints(&self, inst: &ProblemInstance) -> (Vec<Constraint>, Vec<(f64, f64)>) {
        let n = inst.n_users();
        let mut constraints = Vec::new();
        for j in 0..inst.n_real_resources() {
            let coeffs: Vec<f64> = (0..n).map(|i| inst.requirement(i, j)).collect();
            if self.bottlenecks.contains(&j) {
                constraints.push(Constraint::eq(coeffs, 1.0));
            } else {
                constraints.push(Constraint::le(coeffs, 1.0));
            }
        }
        let mut bounds = vec![(0.0, 1.0); n];
        for (i, just) in self.justification.iter().enumerate() {
            match *just {
                Some(j) => {
                    let mut coeffs = vec![0.0; n];
                    coeffs[i] = inst.requirement(i, j);
                    constraints.push(Constraint::ge(coeffs, inst.entitlements()[i]));
                }
                None => bounds[i] = (1.0, 1.0),
            }
        }
        (constraints, bounds)
    }

    /// The linear program whose feasible set is this query's face, with a
    /// zero objective.
    pub fn linear_program(&self, inst: &ProblemInstance) -> LinearProgram {
        let (constraints, bounds) = self.constraints(inst);
        LinearProgram {
            objective: vec![0.0; inst.n_users()],
            constraints,
            bounds,
        }
    }

    /// True when `x` satisfies every constraint of the query within `tol`.
    pub fn admits(&self, inst: &ProblemInstance, x: &[f64], tol: f64) -> bool {
        let (constraints, bounds) = self.constraints(inst);
        constraints.iter().all(|c| c.violation(x) <= tol)
            && x.iter().zip(&bounds).all(|(&v, &(lo, hi))| v >= lo - tol && v <= hi + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Allocation,
    /// Real resources at capacity at this point.
    pub bottlenecks: BTreeSet<usize>,
    /// The query that produced it.
    pub query: FeasibilityQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Face {
    pub query: FeasibilityQuery,
    /// The face contains more than one point.
    pub positive_dimension: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionFamily {
    pub witnesses: Vec<Witness>,
    /// Every feasible query, in enumeration order.
    pub faces: Vec<Face>,
    /// Some feasible face has positive dimension.
    pub family: bool,
    /// Two distinct witnesses have identical bottleneck sets.
    pub shared_bottleneck_sets: bool,
}

impl SolutionFamily {
    /// Whether `x` is one of the witnesses or lies on a positive-dimension
    /// face.
    pub fn contains(&self, inst: &ProblemInstance, x: &[f64], tol: f64) -> bool {
        self.witnesses.iter().any(|w| max_distance(&w.x.0, x) <= tol)
            || self
                .faces
                .iter()
                .filter(|f| f.positive_dimension)
                .any(|f| f.query.admits(inst, x, tol))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} witness(es); family: {}", self.witnesses.len(), if self.family { "yes" } else { "no" });
        for (k, w) in self.witnesses.iter().enumerate() {
            let xs: Vec<String> = w.x.0.iter().map(|&v| crate::rational::format_exact(v)).collect();
            let b: Vec<String> = w.bottlenecks.iter().map(|j| (j + 1).to_string()).collect();
            let just: Vec<String> = w
                .query
                .justification
                .iter()
                .enumerate()
                .map(|(i, j)| match j {
                    Some(j) => format!("{}->{}", i + 1, j + 1),
                    None => format!("{}->full", i + 1),
                })
                .collect();
            let _ = writeln!(
                out,
                "  #{:<3} x = ({})  bottlenecks {{{}}}  justification [{}]",
                k + 1,
                xs.join(", "),
                b.join(","),
                just.join(" ")
            );
        }
        for f in self.faces.iter().filter(|f| f.positive_dimension) {
            let i: Vec<String> = f.query.bottlenecks.iter().map(|j| (j + 1).to_string()).collect();
            let _ = writeln!(out, "  continuum on I = {{{}}}", i.join(","));
        }
        let _ = writeln!(out, "note: vertices of the enumerated faces only; continua are flagged, not listed");
        out
    }
}

fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// All queries in (|I|, I, justification) order. A user justified within I
/// can always use the resource of I he requests most, so only that choice
/// and "fully granted" are tried, and the latter only when it is not
/// already covered.
fn queries(inst: &ProblemInstance) -> Vec<FeasibilityQuery> {
    let n = inst.n_users();
    let m = inst.n_real_resources();
    let mut out = Vec::new();
    let mut subsets: Vec<Vec<usize>> = (0u32..(1 << m))
        .map(|mask| (0..m).filter(|j| mask & (1 << j) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    for subset in subsets {
        let mut options: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
        for i in 0..n {
            let e = inst.entitlements()[i];
            let best = subset
                .iter()
                .copied()
                .max_by(|&a, &b| inst.requirement(i, a).total_cmp(&inst.requirement(i, b)).then(b.cmp(&a)));
            let mut opts = Vec::new();
            match best {
                Some(j) if inst.requirement(i, j) > 0.0 || e == 0.0 => {
                    opts.push(Some(j));
                    if inst.requirement(i, j) < e {
                        opts.push(None);
                    }
                }
                _ => opts.push(None),
            }
            options.push(opts);
        }
        // Mixed-radix count with user 1 most significant keeps the order
        // lexicographic in the justification.
        let total: usize = options.iter().map(Vec::len).product();
        for code in 0..total {
            let mut rest = code;
            let mut justification = vec![None; n];
            for i in (0..n).rev() {
                let k = options[i].len();
                justification[i] = options[i][rest % k];
                rest /= k;
            }
            out.push(FeasibilityQuery {
                bottlenecks: subset.clone(),
                justification,
            });
        }
    }
    out
}

/// Feasible points of one query: the optimizers of +-sum x and +-x_i, and
/// the midpoints between them.
fn face_vertices(inst: &ProblemInstance, query: &FeasibilityQuery) -> Result<Option<(Vec<Vec<f64>>, bool)>, LpError> {
    let n = inst.n_users();
    let base = query.linear_program(inst);
    let Some(_) = lp::feasible(&base.constraints, &base.bounds)? else {
        return Ok(None);
    };
    let mut directions: Vec<Vec<f64>> = vec![vec![1.0; n], vec![-1.0; n]];
    for i in 0..n {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        directions.push(d.clone());
        d[i] = -1.0;
        directions.push(d);
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    for d in directions {
        let lp = LinearProgram {
            objective: d,
            ..base.clone()
        };
        if let LpOutcome::Optimal(sol) = lp::maximize(&lp)? {
            let x: Vec<f64> = sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            if !points.iter().any(|p| max_distance(p, &x) < WITNESS_RESOLUTION) {
                points.push(x);
            }
        }
    }
    let positive = points.len() > 1;
    // Midpoints of vertex pairs lie on the face too and expose the interior
    // of edges.
    let vertices = points.len();
    for a in 0..vertices {
        for b in a + 1..vertices {
            let mid: Vec<f64> = points[a].iter().zip(&points[b]).map(|(p, q)| 0.5 * (p + q)).collect();
            if !points.iter().any(|p| max_distance(p, &mid) < WITNESS_RESOLUTION) {
                points.push(mid);
            }
        }
    }
    Ok(Some((points, positive)))
}

pub fn enumerate_solutions(inst: &ProblemInstance, tol: &ToleranceConfig) -> Result<SolutionFamily, OracleError> {
    enumerate_solutions_with(inst, tol, Execution::default())
}

/// Exhaustive enumeration; results are merged in query order, so the output
/// does not depend on `exec`.
pub fn enumerate_solutions_with(
    inst: &ProblemInstance,
    tol: &ToleranceConfig,
    exec: Execution,
) -> Result<SolutionFamily, OracleError> {
    let (n, m) = (inst.n_users(), inst.n_real_resources());
    if n > MAX_USERS || m > MAX_RESOURCES {
        return Err(OracleError::TooLarge { users: n, resources: m });
    }
    let qs = queries(inst);
    let results = exec::map(&qs, exec, |q| face_vertices(inst, q));
    let check = ToleranceConfig {
        eps_input: tol.eps_input,
        ..ToleranceConfig::strict(WITNESS_RESOLUTION)
    };
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut faces = Vec::new();
    for (q, res) in qs.into_iter().zip(results) {
        let Some((points, positive_dimension)) = res? else {
            continue;
        };
        for x in points {
            if witnesses.iter().any(|w| max_distance(&w.x.0, &x) < WITNESS_RESOLUTION) {
                continue;
            }
            let x = Allocation(x);
            let report = verifier::verify(inst, &x, &check).expect("query variables match the user count");
            debug_assert!(report.pass, "oracle witness failed verification");
            if !report.pass {
                continue;
            }
            witnesses.push(Witness {
                x,
                bottlenecks: report.bottlenecks,
                query: q.clone(),
            });
        }
        faces.push(Face {
            query: q,
            positive_dimension,
        });
    }
    let family = faces.iter().any(|f| f.positive_dimension);
    let shared_bottleneck_sets = witnesses
        .iter()
        .enumerate()
        .any(|(k, a)| witnesses[k + 1..].iter().any(|b| a.bottlenecks == b.bottlenecks));
    Ok(SolutionFamily {
        witnesses,
        faces,
        family,
        shared_bottleneck_sets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub resolution: f64,
    /// Width of one grid cell along x_2 at the midpoint.
    pub cell_x2: f64,
    /// Boundary points that pass the cell-relaxed check.
    pub points: Vec<[f64; 2]>,
    /// Range of x_1 over the passing points.
    pub interval: Option<(f64, f64)>,
    /// Boundary point at the middle of that range.
    pub midpoint: Option<[f64; 2]>,
}

/// Upper boundary of the feasible region: the largest x_2 given x_1.
fn boundary(inst: &ProblemInstance, x1: f64) -> f64 {
    (0..inst.n_real_resources())
        .filter(|&j| inst.requirement(1, j) > 0.0)
        .map(|j| (1.0 - x1 * inst.requirement(0, j)) / inst.requirement(1, j))
        .fold(1.0, f64::min)
        .max(0.0)
}

/// Walks x_1 over a uniform grid, sets x_2 on the boundary, and keeps the
/// points with no complaint once every comparison is relaxed by one cell.
pub fn grid_search_n2(inst: &ProblemInstance, resolution: f64) -> Result<GridResult, OracleError> {
    if inst.n_users() != 2 {
        return Err(OracleError::NotTwoUsers(inst.n_users()));
    }
    let m = inst.n_real_resources();
    let r = |i: usize, j: usize| inst.requirement(i, j);
    let e = inst.entitlements();
    let x1_max = (0..m).map(|j| r(0, j)).fold(0.0, f64::max).recip().min(1.0);
    // One cell along x_2 is how far the boundary moves over one x_1 step.
    let cell_x2 = |x1: f64| {
        let here = boundary(inst, x1);
        let step = (boundary(inst, (x1 - resolution).max(0.0)) - here)
            .abs()
            .max((here - boundary(inst, (x1 + resolution).min(x1_max))).abs());
        step.max(resolution)
    };

    let mut grid: Vec<f64> = (0..)
        .map(|k| k as f64 * resolution)
        .take_while(|&v| v < x1_max)
        .collect();
    grid.push(x1_max);

    let mut points = Vec::new();
    for x1 in grid {
        let x = [x1, boundary(inst, x1)];
        let cells = [resolution, cell_x2(x1)];
        let bottlenecks: Vec<usize> = (0..m)
            .filter(|&j| {
                let slack = 1.0 - x[0] * r(0, j) - x[1] * r(1, j);
                slack <= cells[0] * r(0, j) + cells[1] * r(1, j) + 1e-12
            })
            .collect();
        let ok = (0..2).all(|i| {
            x[i] >= 1.0 - cells[i]
                || bottlenecks
                    .iter()
                    .any(|&j| r(i, j) > 0.0 && x[i] >= e[i] / r(i, j) - cells[i])
                || (e[i] == 0.0 && !bottlenecks.is_empty())
        });
        if ok {
            points.push(x);
        }
    }
    let interval = points.first().map(|a| (a[0], points.last().unwrap()[0]));
    let midpoint = interval.map(|(lo, hi)| {
        let x1 = 0.5 * (lo + hi);
        [x1, boundary(inst, x1)]
    });
    Ok(GridResult {
        resolution,
        cell_x2: midpoint.map_or(resolution, |p| cell_x2(p[0])),
        points,
        interval,
        midpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnRule {
    /// Keep the uniform draws.
    AsDrawn,
    /// Scale each column whose sum is below one up to sum exactly one.
    #[default]
    SumAtLeastOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RandomSpec {
    pub columns: ColumnRule,
}

/// Deterministic instance from `seed`: entitlements are normalized draws
/// from [0.05, 1), requirements uniform in [0, 1].
pub fn random_instance(seed: u64, n: usize, m: usize, spec: RandomSpec) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let entitlements = weights.iter().map(|w| w / total).collect();
    let mut requirements: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..=1.0)).collect())
        .collect();
    if spec.columns == ColumnRule::SumAtLeastOne {
        for j in 0..m {
            let sum: f64 = requirements.iter().map(|row| row[j]).sum();
            if sum > 0.0 && sum < 1.0 {
                for row in &mut requirements {
                    row[j] = (row[j] / sum).min(1.0);
                }
            }
        }
    }
    ProblemInstance::new(entitlements, requirements).expect("rectangular by construction")
}

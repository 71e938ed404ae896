//! Barrier trajectory solver.
//!
//! On a reduced instance the log barrier f(x) = -sum_j log(1 - usage_j) has
//! gradient g_i = sum_j r_ij / s_j. The solver follows the curve on which
//! x_i g_i is proportional to e_i, parameterized so that f(x(t)) = t, from
//! x(0) = 0 toward the boundary of the feasible region. Its limit is an
//! allocation without justified complaints.
//!
//! Each accepted Dormand-Prince step is corrected back onto the curve by a
//! Newton solve, and the final point is snapped onto its bottleneck face by
//! a small linear program before verification on the original instance.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::lp::{self, Constraint, LinearProgram, LpOutcome};
use crate::model::{validate_instance, Allocation, ColumnOrigin, LiftedInstance, ProblemInstance, Solution, ToleranceConfig, Violation};
use crate::preprocess::{self, PreprocessError, PreprocessOptions, ReductionTrace};
use crate::verifier::{self, UserStatus, VerificationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("point is outside the feasible interior: {column} has slack {slack}")]
    Outside { column: ColumnOrigin, slack: f64 },
    #[error("trajectory system is numerically singular")]
    Singular,
    #[error("barrier rate along the trajectory is not positive ({0})")]
    NonPositiveRate(f64),
    #[error("point has {found} entries, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("projection onto the trajectory did not converge")]
    Projection,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid tolerances: {0}")]
    Tolerance(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("trajectory failed to start: {0}")]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    TMaxReached,
    StepUnderflow,
    /// Slack reached the resolution of double precision before t_max.
    SlackResolution,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::TMaxReached => "t_max_reached",
            Termination::StepUnderflow => "step_underflow",
            Termination::SlackResolution => "slack_resolution",
        }
    }
}

/// One accepted point of the trajectory, on the reduced instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: f64,
    /// Unit gradient of the barrier.
    pub normal: Vec<f64>,
    /// The common value of x_i * normal_i / e_i.
    pub normalization: f64,
    /// max_i |x_i g_i / e_i - k| / k with k = x . g.
    pub xne_residual: f64,
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("a trajectory always holds its start point")
    }
}

/// Slack threshold below which the barrier can no longer be evaluated to
/// 1e-6 in double precision.
const SLACK_FLOOR: f64 = 1e-9;

struct Eval {
    slacks: Vec<f64>,
    g: Vec<f64>,
    /// b_ij = r_ij / s_j
    b: Vec<Vec<f64>>,
}

fn evaluate(inst: &LiftedInstance, x: &[f64]) -> Result<Eval, OdeError> {
    if x.len() != inst.n() {
        return Err(OdeError::Dimension {
            found: x.len(),
            expected: inst.n(),
        });
    }
    let m = inst.m();
    let mut slacks = vec![1.0; m];
    for (row, &xi) in inst.requirements.iter().zip(x) {
        for (s, r) in slacks.iter_mut().zip(row) {
            *s -= xi * r;
        }
    }
    for (col, &s) in slacks.iter().enumerate() {
        if !(s > 0.0) {
            return Err(OdeError::Outside {
                column: inst.columns[col],
                slack: s,
            });
        }
    }
    let b: Vec<Vec<f64>> = inst
        .requirements
        .iter()
        .map(|row| row.iter().zip(&slacks).map(|(r, s)| r / s).collect())
        .collect();
    let g = b.iter().map(|row| row.iter().sum()).collect();
    Ok(Eval { slacks, g, b })
}

impl Eval {
    fn level(&self) -> f64 {
        -self.slacks.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// M_ik = delta_ik g_i + x_i sum_j b_ij b_kj
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        DMatrix::from_fn(n, n, |i, k| {
            let cross: f64 = self.b[i].iter().zip(&self.b[k]).map(|(a, c)| a * c).sum();
            let diag = if i == k { self.g[i] } else { 0.0 };
            diag + x[i] * cross
        })
    }
}

/// LU solve with row equilibration; `None` when the pivots span more than
/// the precision of a double.
fn solve_dense(mut a: DMatrix<f64>, mut rhs: DVector<f64>) -> Option<DVector<f64>> {
    for i in 0..a.nrows() {
        let scale = a.row(i).amax();
        if !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        a.row_mut(i).scale_mut(1.0 / scale);
        rhs[i] /= scale;
    }
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let hi = diag.amax();
    let lo = diag.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    if !(lo > 0.0) || hi / lo > 1e15 {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// f(x) = -sum_j log(1 - usage_j).
pub fn level_value(inst: &LiftedInstance, x: &[f64]) -> Result<f64, OdeError> {
    Ok(evaluate(inst, x)?.level())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub raw: Vec<f64>,
    pub normal: Vec<f64>,
}

pub fn gradient(inst: &LiftedInstance, x: &[f64]) -> Result<Gradient, OdeError> {
    let ev = evaluate(inst, x)?;
    let norm = ev.g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let normal = ev.g.iter().map(|v| v / norm).collect();
    Ok(Gradient { raw: ev.g, normal })
}

fn derivative_from(ev: &Eval, x: &[f64], e: &[f64]) -> Result<Vec<f64>, OdeError> {
    let v = solve_dense(ev.jacobian(x), DVector::from_column_slice(e)).ok_or(OdeError::Singular)?;
    let rho: f64 = v.iter().zip(&ev.g).map(|(a, b)| a * b).sum();
    if !(rho > 0.0) {
        return Err(OdeError::NonPositiveRate(rho));
    }
    Ok(v.iter().map(|vi| vi / rho).collect())
}

/// dx/dt along the trajectory, scaled so that df/dt = 1.
pub fn trajectory_derivative(inst: &LiftedInstance, x: &[f64]) -> Result<Vec<f64>, OdeError> {
    let ev = evaluate(inst, x)?;
    derivative_from(&ev, x, &inst.entitlements)
}

fn xne_residual(ev: &Eval, x: &[f64], e: &[f64]) -> f64 {
    let kappa: f64 = x.iter().zip(&ev.g).map(|(a, b)| a * b).sum();
    if kappa <= 0.0 {
        return 0.0;
    }
    x.iter()
        .zip(&ev.g)
        .zip(e)
        .filter(|(_, &ei)| ei > 0.0)
        .map(|((xi, gi), ei)| (xi * gi / ei - kappa).abs() / kappa)
        .fold(0.0, f64::max)
}

fn point(ev: &Eval, x: Vec<f64>, t: f64, e: &[f64]) -> TrajectoryPoint {
    let norm = ev.g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let kappa: f64 = x.iter().zip(&ev.g).map(|(a, b)| a * b).sum();
    TrajectoryPoint {
        t,
        f: ev.level(),
        normal: ev.g.iter().map(|v| v / norm).collect(),
        normalization: kappa / norm,
        xne_residual: xne_residual(ev, &x, e),
        min_slack: ev.slacks.iter().copied().fold(f64::INFINITY, f64::min),
        x,
    }
}

/// Newton correction of `x` onto the trajectory point with f = t: solves
/// x_i g_i(x) = c e_i and f(x) = t for (x, c).
fn project(inst: &LiftedInstance, x0: &[f64], t: f64) -> Result<(Vec<f64>, Eval), OdeError> {
    let e = &inst.entitlements;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut ev = evaluate(inst, &x)?;
    let mut c: f64 = x.iter().zip(&ev.g).map(|(a, b)| a * b).sum();
    for _ in 0..12 {
        let mut residual = DVector::zeros(n + 1);
        for i in 0..n {
            residual[i] = x[i] * ev.g[i] - c * e[i];
        }
        residual[n] = ev.level() - t;
        let xne = (0..n).map(|i| residual[i].abs()).fold(0.0, f64::max) / c.abs().max(f64::MIN_POSITIVE);
        if xne <= 1e-14 && residual[n].abs() <= 1e-13 * t.max(1.0) {
            return Ok((x, ev));
        }
        let m = ev.jacobian(&x);
        let jac = DMatrix::from_fn(n + 1, n + 1, |i, k| match (i < n, k < n) {
            (true, true) => m[(i, k)],
            (true, false) => -e[i],
            (false, true) => ev.g[k],
            (false, false) => 0.0,
        });
        let step = solve_dense(jac, -residual).ok_or(OdeError::Singular)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| x[i] + lambda * step[i]).collect();
            match evaluate(inst, &trial) {
                Ok(next) => {
                    x = trial;
                    ev = next;
                    c += lambda * step[n];
                    break;
                }
                Err(_) if lambda > 1e-6 => lambda *= 0.5,
                Err(err) => return Err(err),
            }
        }
    }
    let xne = xne_residual(&ev, &x, e);
    if xne <= 1e-9 && (ev.level() - t).abs() <= 1e-9 * t.max(1.0) {
        Ok((x, ev))
    } else {
        Err(OdeError::Projection)
    }
}

// Dormand-Prince 5(4) tableau.
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded step; returns the fifth-order point and the scaled error.
fn dopri_step(
    inst: &LiftedInstance,
    x: &[f64],
    k1: Vec<f64>,
    h: f64,
    tol: &ToleranceConfig,
) -> Result<(Vec<f64>, f64), OdeError> {
    let n = x.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(k1);
    for row in A {
        let stage: Vec<f64> = (0..n)
            .map(|i| x[i] + h * row.iter().zip(&k).map(|(a, kk)| a * kk[i]).sum::<f64>())
            .collect();
        k.push(trajectory_derivative(inst, &stage)?);
    }
    let x5: Vec<f64> = (0..n)
        .map(|i| x[i] + h * B5.iter().zip(&k).map(|(b, kk)| b * kk[i]).sum::<f64>())
        .collect();
    let mut err = 0.0f64;
    for i in 0..n {
        let diff: f64 = h * B5.iter().zip(&B4).zip(&k).map(|((b5, b4), kk)| (b5 - b4) * kk[i]).sum::<f64>();
        let scale = tol.abs_tol + tol.rel_tol * x[i].abs().max(x5[i].abs());
        err = err.max(diff.abs() / scale);
    }
    Ok((x5, err))
}

/// Integrates from x = 0 with adaptive steps, landing exactly on the
/// doubling checkpoints t = 1, 2, 4, ... and on t_max.
pub fn integrate_trajectory(inst: &LiftedInstance, tol: &ToleranceConfig) -> Result<Trajectory, OdeError> {
    let e = &inst.entitlements;
    let n = inst.n();
    let mut x = vec![0.0; n];
    let ev = evaluate(inst, &x)?;
    let mut k1 = derivative_from(&ev, &x, e)?;
    let mut points = vec![point(&ev, x.clone(), 0.0, e)];
    let mut t = 0.0;
    let mut h = tol.initial_step;
    let mut checkpoint: f64 = 1.0;
    let mut previous_checkpoint: Option<Vec<f64>> = None;

    let termination = loop {
        if t >= tol.t_max {
            break Termination::TMaxReached;
        }
        let target = checkpoint.min(tol.t_max);
        h = h.min(tol.max_step).min(target - t);
        let landing = h >= target - t;
        let t_next = if landing { target } else { t + h };
        let attempt: Result<Result<(Vec<f64>, Eval, f64), f64>, OdeError> =
            dopri_step(inst, &x, k1.clone(), h, tol).and_then(|(x5, err)| {
                if err > 1.0 {
                    return Ok(Err(err));
                }
                let (xp, ev) = project(inst, &x5, t_next)?;
                Ok(Ok((xp, ev, err)))
            });
        match attempt {
            Ok(Ok((xp, ev, err))) => {
                let k_next = match derivative_from(&ev, &xp, e) {
                    Ok(k) => k,
                    Err(_) => {
                        h *= 0.5;
                        if h < tol.min_step {
                            break Termination::StepUnderflow;
                        }
                        continue;
                    }
                };
                t = t_next;
                x = xp;
                k1 = k_next;
                let p = point(&ev, x.clone(), t, e);
                let min_slack = p.min_slack;
                points.push(p);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if landing && t == checkpoint {
                    if let Some(prev) = &previous_checkpoint {
                        let diff = prev.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        if diff < tol.convergence {
                            break Termination::Converged;
                        }
                    }
                    previous_checkpoint = Some(x.clone());
                    checkpoint *= 2.0;
                }
                if min_slack < SLACK_FLOOR {
                    break Termination::SlackResolution;
                }
            }
            Ok(Err(err)) => {
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < tol.min_step {
                    break Termination::StepUnderflow;
                }
            }
            Err(_) => {
                h *= 0.5;
                if h < tol.min_step {
                    break Termination::StepUnderflow;
                }
            }
        }
    };
    Ok(Trajectory { points, termination })
}

/// Candidate bottleneck sets at the end of the trajectory, most plausible
/// first. Columns that absorb most of the barrier growth are ranked by
/// their share of df/dt; large gaps in that ranking or in the slacks mark
/// the cut.
fn bottleneck_candidates(inst: &LiftedInstance, x: &[f64]) -> Vec<Vec<usize>> {
    let Ok(ev) = evaluate(inst, x) else {
        return Vec::new();
    };
    let m = inst.m();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut gaps: Vec<(f64, Vec<usize>)> = Vec::new();

    if let Ok(v) = derivative_from(&ev, x, &inst.entitlements) {
        let shares: Vec<f64> = (0..m)
            .map(|j| {
                let rate: f64 = inst.requirements.iter().zip(&v).map(|(row, vi)| row[j] * vi).sum();
                rate / ev.slacks[j]
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| shares[b].total_cmp(&shares[a]));
        for k in 1..=m {
            let above = shares[order[k - 1]];
            if above <= 0.0 {
                break;
            }
            let below = if k < m { shares[order[k]].max(0.0) } else { 0.0 };
            let ratio = if below > 0.0 { above / below } else { f64::INFINITY };
            if ratio >= 10.0 {
                gaps.push((ratio, order[..k].to_vec()));
            }
        }
    }

    let mut by_slack: Vec<usize> = (0..m).collect();
    by_slack.sort_by(|&a, &b| ev.slacks[a].total_cmp(&ev.slacks[b]));
    for k in 1..m {
        let ratio = ev.slacks[by_slack[k]] / ev.slacks[by_slack[k - 1]];
        if ratio >= 10.0 {
            gaps.push((ratio, by_slack[..k].to_vec()));
        }
    }
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, mut set) in gaps {
        set.sort_unstable();
        if !out.contains(&set) {
            out.push(set);
        }
    }
    for threshold in [1e-5, 1e-3] {
        let set: Vec<usize> = (0..m).filter(|&j| ev.slacks[j] <= threshold).collect();
        if !set.is_empty() && !out.contains(&set) {
            out.push(set);
        }
    }
    out
}

/// Closest point (in L1) to `x` on which every user is pinned by a column of
/// `bottlenecks` at capacity, or `None` if no such point exists.
fn snap_to_face(inst: &LiftedInstance, x: &[f64], bottlenecks: &[usize]) -> Option<Vec<f64>> {
    let n = inst.n();
    let e = &inst.entitlements;
    let mut pinned: Vec<Option<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let best = bottlenecks
            .iter()
            .copied()
            .max_by(|&a, &b| inst.requirements[i][a].total_cmp(&inst.requirements[i][b]))
            .filter(|&j| inst.requirements[i][j] > 0.0);
        if best.is_none() && e[i] > 0.0 {
            return None;
        }
        pinned.push(best.filter(|_| e[i] > 0.0));
    }
    // Variables: x_1..x_n, then d_1..d_n with d_i >= |x_i - x̂_i|.
    let width = 2 * n;
    let mut constraints = Vec::new();
    for j in 0..inst.m() {
        let mut coeffs = vec![0.0; width];
        for i in 0..n {
            coeffs[i] = inst.requirements[i][j];
        }
        if pinned.contains(&Some(j)) {
            constraints.push(Constraint::eq(coeffs, 1.0));
        } else {
            constraints.push(Constraint::le(coeffs, 1.0));
        }
    }
    for (i, p) in pinned.iter().enumerate() {
        if let Some(j) = *p {
            let mut coeffs = vec![0.0; width];
            coeffs[i] = inst.requirements[i][j];
            constraints.push(Constraint::ge(coeffs, e[i]));
        }
        let mut above = vec![0.0; width];
        above[n + i] = 1.0;
        above[i] = -1.0;
        constraints.push(Constraint::ge(above, -x[i]));
        let mut below = vec![0.0; width];
        below[n + i] = 1.0;
        below[i] = 1.0;
        constraints.push(Constraint::ge(below, x[i]));
    }
    let mut objective = vec![0.0; width];
    objective[n..].fill(1.0);
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.extend(std::iter::repeat_n((0.0, f64::INFINITY), n));
    let lp = LinearProgram {
        objective,
        constraints,
        bounds,
    };
    match lp::minimize(&lp) {
        Ok(LpOutcome::Optimal(sol)) => Some(sol.x[..n].iter().map(|v| v.clamp(0.0, 1.0)).collect()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: ToleranceConfig,
    pub remove_dominated: bool,
    /// Snap the numeric endpoint onto its bottleneck face when that yields a
    /// point that verifies at 1e-9.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: ToleranceConfig::default(),
            remove_dominated: true,
            polish: true,
        }
    }
}

/// Worst residuals of the returned allocation on the original instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// max(0, usage_j - 1) over real resources.
    pub max_overuse: f64,
    /// Largest amount by which a user not fully granted falls short of his
    /// entitlement on every bottleneck.
    pub max_njc_shortfall: f64,
    /// Largest slack among reported bottlenecks.
    pub max_bottleneck_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub solution: Solution,
    pub report: VerificationReport,
    pub verified: bool,
    pub termination: Termination,
    /// Why the integrator stopped, before polishing.
    pub integration: Termination,
    pub polish_applied: bool,
    pub trace: ReductionTrace,
    /// Trajectory on the reduced instance.
    pub trajectory: Vec<TrajectoryPoint>,
    pub residuals: Residuals,
}

fn residuals(inst: &ProblemInstance, x: &Allocation, report: &VerificationReport) -> Residuals {
    let max_overuse = report.capacity.usages.iter().map(|u| (u - 1.0).max(0.0)).fold(0.0, f64::max);
    let max_njc_shortfall = (0..x.len())
        .filter(|&i| x[i] < 1.0 - report.tolerances.eps_njc)
        .map(|i| {
            let best = report
                .bottlenecks
                .iter()
                .map(|&j| x[i] * inst.profile(i)[j])
                .fold(0.0, f64::max);
            (inst.entitlements()[i] - best).max(0.0)
        })
        .fold(0.0, f64::max);
    let max_bottleneck_slack = report
        .bottlenecks
        .iter()
        .map(|&j| 1.0 - report.capacity.usages[j])
        .fold(0.0, f64::max);
    Residuals {
        max_overuse,
        max_njc_shortfall,
        max_bottleneck_slack,
    }
}

/// Validates, reduces, integrates, polishes and verifies.
pub fn solve(inst: &ProblemInstance, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let tol = &opts.tol;
    tol.validate().map_err(SolveError::Tolerance)?;
    let violations = validate_instance(inst, tol.eps_input);
    if !violations.is_empty() {
        return Err(SolveError::Invalid(violations));
    }
    let (reduced, trace) = preprocess::preprocess(
        inst,
        tol,
        PreprocessOptions {
            remove_dominated: opts.remove_dominated,
        },
    )?;

    let (trajectory, integration) = if reduced.n() == 0 {
        (Vec::new(), Termination::Converged)
    } else {
        let traj = integrate_trajectory(&reduced, tol)?;
        (traj.points, traj.termination)
    };
    let endpoint: Vec<f64> = trajectory.last().map(|p| p.x.clone()).unwrap_or_default();

    let strict = ToleranceConfig::strict(1e-9);
    let mut polished: Option<(Allocation, VerificationReport)> = None;
    if opts.polish && reduced.n() > 0 {
        for candidate in bottleneck_candidates(&reduced, &endpoint) {
            let Some(xp) = snap_to_face(&reduced, &endpoint, &candidate) else {
                continue;
            };
            let Ok(lifted) = preprocess::lift_allocation(&trace, &xp) else {
                continue;
            };
            if let Ok(report) = verifier::verify(inst, &lifted, &strict) {
                if report.pass {
                    polished = Some((lifted, report));
                    break;
                }
            }
        }
    }
    let polish_applied = polished.is_some();
    let x = match polished {
        Some((x, _)) => x,
        None => preprocess::lift_allocation(&trace, &endpoint).expect("endpoint has one entry per reduced user"),
    };
    let report = verifier::verify(inst, &x, tol).expect("lifted allocation has one entry per user");
    let verified = report.pass;
    let termination = if polish_applied && verified {
        Termination::Converged
    } else {
        integration
    };
    Ok(SolveResult {
        solution: verifier::solution_from_report(inst, &x, &report),
        residuals: residuals(inst, &x, &report),
        report,
        verified,
        termination,
        integration,
        polish_applied,
        trace,
        trajectory,
    })
}

/// Solves many instances, in parallel when requested and available.
pub fn solve_batch(
    instances: &[ProblemInstance],
    opts: &SolveOptions,
    exec: Execution,
) -> Vec<Result<SolveResult, SolveError>> {
    exec::map(instances, exec, |inst| solve(inst, opts))
}

impl SolveResult {
    /// Trajectory as CSV over the original users; eliminated users are shown
    /// at their lifted value of one. `f` and `min_slack` refer to the reduced
    /// instance.
    pub fn trajectory_csv(&self, stride: usize) -> String {
        let stride = stride.max(1);
        let n = self.solution.allocation.len();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",x_{}", i + 1));
        }
        out.push_str(",f,min_slack\n");
        let users = &self.trace.final_instance.users;
        let last = self.trajectory.len().saturating_sub(1);
        for (k, p) in self.trajectory.iter().enumerate() {
            if k % stride != 0 && k != last {
                continue;
            }
            let mut row = vec![1.0; n];
            for (r, &u) in users.iter().enumerate() {
                row[u] = p.x[r];
            }
            out.push_str(&format!("{}", p.t));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{},{}\n", p.f, p.min_slack));
        }
        out
    }

    /// Bottleneck, justification and status of each user as
    /// `UserStatus` from the final report.
    pub fn user_statuses(&self) -> &[UserStatus] {
        &self.report.users
    }
}

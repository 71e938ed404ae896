use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fairshare::compare::compare;
use fairshare::io::{parse_instance, NumberOrFraction};
use fairshare::model::validate_instance;
use fairshare::oracle::{enumerate_solutions, OracleError};
use fairshare::rational::{format_exact, format_sig, parse_fraction};
use fairshare::{fixtures, verify, Allocation, Justification, ProblemInstance, SolveError, SolveOptions, ToleranceConfig};

const DIGITS: usize = 10;

#[derive(Parser)]
#[command(name = "fairshare", version, about = "Bottleneck-fair allocation of multiple resources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a fair allocation.
    Solve {
        /// Instance file or bundled fixture name.
        instance: String,
        /// Verification tolerance for complaints and bottleneck detection.
        #[arg(long)]
        tol: Option<f64>,
        /// Integration horizon.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        no_dominated_removal: bool,
        /// Print rational approximations of the result.
        #[arg(long)]
        exact: bool,
        /// Log every preprocessing step.
        #[arg(long)]
        trace_reductions: bool,
        /// Rescale entitlements to sum to one before solving.
        #[arg(long)]
        renormalize: bool,
        #[arg(long)]
        json: bool,
    },
    /// Check an allocation for capacity and justified complaints.
    Verify {
        instance: String,
        /// Comma-separated allocation, e.g. `0.75,1,0` or `3/4,1,0`.
        #[arg(long, value_name = "X", conflicts_with = "allocation")]
        x: Option<String>,
        /// JSON file holding an array, or an object with an `x` field.
        #[arg(long, value_name = "PATH")]
        allocation: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List fair allocations of a small instance by exhaustive search.
    Enumerate {
        instance: String,
        #[arg(long)]
        json: bool,
    },
    /// Compare the fair allocation with dominant resource fairness.
    Compare {
        /// Instance file or fixture; omit when using `--middles`.
        instance: Option<String>,
        /// Use the two-user utilization instance with k middle resources.
        #[arg(long, value_name = "K")]
        middles: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Print the trajectory as CSV.
    Trace {
        instance: String,
        /// Keep every k-th accepted step (the last one is always kept).
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// List bundled fixtures, or print one as JSON.
    Fixtures { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn load_instance(arg: &str) -> Result<ProblemInstance, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| input_error(format!("{arg}: {e}")))?;
        return parse_instance(&text).map_err(|e| input_error(format!("{arg}: {e}")));
    }
    fixtures::by_name(arg).ok_or_else(|| {
        let names: Vec<&str> = fixtures::names().collect();
        input_error(format!("{arg}: no such file or fixture (fixtures: {})", names.join(", ")))
    })
}

fn check_instance(inst: &ProblemInstance, tol: &ToleranceConfig) -> Result<(), Failure> {
    let violations = validate_instance(inst, tol.eps_input);
    if violations.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
    Err(input_error(format!("invalid instance:\n{}", lines.join("\n"))))
}

fn tolerances(tol: Option<f64>, t_max: Option<f64>) -> Result<ToleranceConfig, Failure> {
    let mut cfg = ToleranceConfig::default();
    if let Some(t) = tol {
        cfg.eps_njc = t;
        cfg.eps_bottleneck = t;
        cfg.eps_feasible = cfg.eps_feasible.min(t);
    }
    if let Some(t) = t_max {
        cfg.t_max = t;
    }
    cfg.validate().map_err(input_error)?;
    Ok(cfg)
}

fn num(v: f64, exact: bool) -> String {
    if exact {
        format_exact(v)
    } else {
        format_sig(v, DIGITS)
    }
}

fn vector(v: &[f64], exact: bool) -> String {
    let parts: Vec<String> = v.iter().map(|&x| num(x, exact)).collect();
    format!("({})", parts.join(", "))
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    instance: &str,
    tol: Option<f64>,
    t_max: Option<f64>,
    no_dominated_removal: bool,
    exact: bool,
    trace_reductions: bool,
    renormalize: bool,
    json_out: bool,
) -> Result<u8, Failure> {
    let mut inst = load_instance(instance)?;
    if renormalize {
        inst = inst.renormalized();
    }
    let cfg = tolerances(tol, t_max)?;
    check_instance(&inst, &cfg)?;
    let opts = SolveOptions {
        tol: cfg,
        remove_dominated: !no_dominated_removal,
        ..SolveOptions::default()
    };
    let result = fairshare::solve(&inst, &opts).map_err(|e| match e {
        SolveError::Ode(_) => Failure {
            code: 1,
            message: e.to_string(),
        },
        other => input_error(other.to_string()),
    })?;
    let sol = &result.solution;
    let code = if result.verified { 0 } else { 1 };

    if json_out {
        let justification: Vec<Value> = sol
            .justification
            .iter()
            .map(|j| match j {
                Justification::Bottleneck(r) => json!(r + 1),
                Justification::FullyGranted => json!("full"),
                Justification::Complaint => Value::Null,
            })
            .collect();
        let mut out = json!({
            "x": sol.allocation.0,
            "bottlenecks": sol.bottlenecks.iter().map(|j| j + 1).collect::<Vec<_>>(),
            "justification": justification,
            "slacks": sol.slacks,
            "verified": result.verified,
            "termination": result.termination.as_str(),
            "integration": result.integration.as_str(),
            "polish_applied": result.polish_applied,
            "residuals": {
                "max_overuse": result.residuals.max_overuse,
                "max_njc_shortfall": result.residuals.max_njc_shortfall,
                "max_bottleneck_slack": result.residuals.max_bottleneck_slack,
            },
        });
        if exact {
            out["x_exact"] = json!(sol.allocation.0.iter().map(|&v| format_exact(v)).collect::<Vec<_>>());
        }
        if trace_reductions {
            out["reductions"] = json!(result.trace.render().lines().skip(1).map(str::trim).collect::<Vec<_>>());
        }
        println!("{}", serde_json::to_string_pretty(&out).expect("json values serialize"));
        return Ok(code);
    }

    if trace_reductions {
        print!("{}", result.trace.render());
    }
    println!("x = {}", vector(&sol.allocation.0, exact));
    let names: Vec<String> = sol.bottlenecks.iter().map(|&j| inst.resource_label(j)).collect();
    println!(
        "bottlenecks: {}",
        if names.is_empty() { "none".to_string() } else { names.join(", ") }
    );
    println!("justification:");
    for (i, j) in sol.justification.iter().enumerate() {
        let why = match j {
            Justification::Bottleneck(r) => inst.resource_label(*r),
            Justification::FullyGranted => "fully granted".into(),
            Justification::Complaint => "COMPLAINT".into(),
        };
        println!("  {}: {why}", inst.user_label(i));
    }
    println!("slacks: {}", vector(&sol.slacks, false));
    println!(
        "residuals: overuse {}, complaint shortfall {}, bottleneck slack {}",
        format_sig(result.residuals.max_overuse, 3),
        format_sig(result.residuals.max_njc_shortfall, 3),
        format_sig(result.residuals.max_bottleneck_slack, 3)
    );
    println!(
        "termination: {}{}",
        result.termination.as_str(),
        if result.polish_applied { " (polished)" } else { "" }
    );
    println!("verified: {}", if result.verified { "yes" } else { "NO" });
    Ok(code)
}

fn parse_values(values: &[NumberOrFraction], source: &str) -> Result<Vec<f64>, Failure> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| match v {
            NumberOrFraction::Number(x) => Ok(*x),
            NumberOrFraction::Text(s) => {
                parse_fraction(s).ok_or_else(|| input_error(format!("{source}: entry {} ({s:?}) is not a number", k + 1)))
            }
        })
        .collect()
}

fn read_allocation(x: Option<&str>, path: Option<&str>) -> Result<Vec<f64>, Failure> {
    if let Some(list) = x {
        return list
            .split(',')
            .enumerate()
            .map(|(k, s)| {
                parse_fraction(s.trim())
                    .ok_or_else(|| input_error(format!("--x: entry {} ({:?}) is not a number", k + 1, s.trim())))
            })
            .collect();
    }
    let Some(path) = path else {
        return Err(input_error("verify needs --x or --allocation"));
    };
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("{path}: {e}")))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("{path}: line {}, column {}: {e}", e.line(), e.column())))?;
    let values = match &doc {
        Value::Array(_) => doc,
        Value::Object(map) => map
            .get("x")
            .or_else(|| map.get("allocation"))
            .cloned()
            .ok_or_else(|| input_error(format!("{path}: expected an array or an object with an \"x\" field")))?,
        _ => return Err(input_error(format!("{path}: expected an array or an object"))),
    };
    let values: Vec<NumberOrFraction> =
        serde_json::from_value(values).map_err(|e| input_error(format!("{path}: {e}")))?;
    parse_values(&values, path)
}

fn cmd_verify(
    instance: &str,
    x: Option<&str>,
    allocation: Option<&str>,
    tol: Option<f64>,
    format: Format,
) -> Result<u8, Failure> {
    let inst = load_instance(instance)?;
    let cfg = tolerances(tol, None)?;
    check_instance(&inst, &cfg)?;
    let values = read_allocation(x, allocation)?;
    let report = verify(&inst, &Allocation(values), &cfg).map_err(|e| input_error(e.to_string()))?;
    match format {
        Format::Text => print!("{}", report.render(&inst)),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report.to_json()).expect("json values serialize")
        ),
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_enumerate(instance: &str, json_out: bool) -> Result<u8, Failure> {
    let inst = load_instance(instance)?;
    let cfg = ToleranceConfig::default();
    check_instance(&inst, &cfg)?;
    let family = enumerate_solutions(&inst, &cfg).map_err(|e| match e {
        OracleError::TooLarge { .. } => input_error(e.to_string()),
        other => Failure {
            code: 1,
            message: other.to_string(),
        },
    })?;
    if json_out {
        let witnesses: Vec<Value> = family
            .witnesses
            .iter()
            .map(|w| {
                json!({
                    "x": w.x.0,
                    "bottlenecks": w.bottlenecks.iter().map(|j| j + 1).collect::<Vec<_>>(),
                    "justification": w.query.justification.iter()
                        .map(|j| j.map_or(json!("full"), |j| json!(j + 1)))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        let continua: Vec<Value> = family
            .faces
            .iter()
            .filter(|f| f.positive_dimension)
            .map(|f| json!(f.query.bottlenecks.iter().map(|j| j + 1).collect::<Vec<_>>()))
            .collect();
        let out = json!({
            "witnesses": witnesses,
            "family": family.family,
            "shared_bottleneck_sets": family.shared_bottleneck_sets,
            "continua": continua,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("json values serialize"));
    } else {
        print!("{}", family.render());
    }
    Ok(0)
}

fn cmd_compare(instance: Option<&str>, middles: Option<usize>, json_out: bool) -> Result<u8, Failure> {
    let inst = match (instance, middles) {
        (Some(_), Some(_)) => return Err(input_error("give an instance or --middles, not both")),
        (None, None) => return Err(input_error("compare needs an instance or --middles")),
        (Some(arg), None) => load_instance(arg)?,
        (None, Some(k)) => fixtures::utilization_with_middles(k),
    };
    let opts = SolveOptions::default();
    check_instance(&inst, &opts.tol)?;
    let cmp = compare(&inst, &opts).map_err(|e| input_error(e.to_string()))?;
    if json_out {
        println!("{}", serde_json::to_string_pretty(&cmp.to_json()).expect("json values serialize"));
    } else {
        print!("{}", cmp.render(&inst));
        if let Some(k) = middles {
            println!(
                "with {k} middle resources; as k grows the averages tend to 1/2 (bottleneck-fair) and 2/3 (DRF)"
            );
        }
    }
    Ok(0)
}

fn cmd_trace(instance: &str, stride: usize) -> Result<u8, Failure> {
    let inst = load_instance(instance)?;
    let opts = SolveOptions::default();
    check_instance(&inst, &opts.tol)?;
    let result = fairshare::solve(&inst, &opts).map_err(|e| input_error(e.to_string()))?;
    print!("{}", result.trajectory_csv(stride));
    Ok(0)
}

fn cmd_fixtures(name: Option<&str>) -> Result<u8, Failure> {
    match name {
        None => {
            for n in fixtures::names() {
                println!("{n}");
            }
        }
        Some(n) => {
            let src = fixtures::source(n).ok_or_else(|| input_error(format!("no fixture named {n}")))?;
            print!("{src}");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve {
            instance,
            tol,
            t_max,
            no_dominated_removal,
            exact,
            trace_reductions,
            renormalize,
            json,
        } => cmd_solve(
            &instance,
            tol,
            t_max,
            no_dominated_removal,
            exact,
            trace_reductions,
            renormalize,
            json,
        ),
        Command::Verify {
            instance,
            x,
            allocation,
            tol,
            format,
        } => cmd_verify(&instance, x.as_deref(), allocation.as_deref(), tol, format),
        Command::Enumerate { instance, json } => cmd_enumerate(&instance, json),
        Command::Compare {
            instance,
            middles,
            json,
        } => cmd_compare(instance.as_deref(), middles, json),
        Command::Trace { instance, stride } => cmd_trace(&instance, stride),
        Command::Fixtures { name } => cmd_fixtures(name.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

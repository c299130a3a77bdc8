use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use convext::convexity::{check_midpoint_convexity, joint_check, ConvexityReport};
use convext::extension::{extend_convex, ExtensionReport, CONVEXITY_TOL};
use convext::extremal::{extremal_function, extremal_oracle, hat_phi};
use convext::integrals::{constraint_residuals, prekopa_marginal};
use convext::io::{grid_function_csv, oracle_csv, product_csv, residuals_csv, trace_csv, OracleRow};
use convext::transforms::{legendre_transform, padded_dual_spec};
use convext::{Axis, GridFunction, GridSpec, ProductGridFunction};

use crate::output::{sha256_file, versions, OutputDir, RunManifest};
use crate::problem::{read_problem, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CONSTRAINT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "convext", version, about = "Convex extensions under an integral constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extend psi to a jointly convex Psi(t, x) with log int e^(Psi - phi) <= 0.
    Extend(ExtendArgs),
    /// Marginal -log int e^(-phi(t, x)) dx of the weight, with a convexity check.
    Prekopa(PrekopaArgs),
    /// Legendre-Fenchel transform of a grid function.
    Legendre(LegendreArgs),
    /// Extremal function of a weight, or of every t-slice of a problem.
    Extremal(ExtremalArgs),
    /// Recompute residuals and joint convexity of a stored extension.
    Verify(VerifyArgs),
}

/// Per-axis dual grid; repeat each flag once per axis.
#[derive(Debug, Args, Default)]
pub struct DualArgs {
    #[arg(long = "dual-lo", allow_negative_numbers = true)]
    pub dual_lo: Vec<f64>,
    #[arg(long = "dual-hi", allow_negative_numbers = true)]
    pub dual_hi: Vec<f64>,
    #[arg(long = "dual-count")]
    pub dual_count: Vec<usize>,
}

impl DualArgs {
    pub fn spec(&self) -> Result<Option<GridSpec>> {
        let k = self.dual_lo.len();
        if k == 0 && self.dual_hi.is_empty() && self.dual_count.is_empty() {
            return Ok(None);
        }
        ensure!(
            self.dual_hi.len() == k && self.dual_count.len() == k,
            "--dual-lo, --dual-hi and --dual-count must be given once per axis"
        );
        let axes = (0..k)
            .map(|i| Axis::new(self.dual_lo[i], self.dual_hi[i], self.dual_count[i]))
            .collect::<convext::Result<Vec<_>>>()?;
        Ok(Some(GridSpec::new(axes)?))
    }
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub dual: DualArgs,
}

#[derive(Debug, Args)]
pub struct PrekopaArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LegendreArgs {
    /// Grid function JSON.
    #[arg(long)]
    pub function: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the convex envelope (transform applied twice).
    #[arg(long)]
    pub biconjugate: bool,
    #[command(flatten)]
    pub dual: DualArgs,
}

#[derive(Debug, Args)]
pub struct ExtremalArgs {
    /// Grid function JSON for the weight.
    #[arg(long, conflicts_with = "problem", required_unless_present = "problem")]
    pub function: Option<PathBuf>,
    /// Problem file; every t-slice of its weight is processed.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Compare against the direct convex program at every node (coarse grids only).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long = "oracle-iterations", default_value_t = 500)]
    pub oracle_iterations: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub dual: DualArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// report.json written by `extend`.
    #[arg(long)]
    pub report: PathBuf,
    /// Take the weight from this problem file instead of the report.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tol: f64,
    pub lambda: f64,
    pub seed: u64,
    pub check_samples: usize,
    pub dual: GridSpec,
    pub report: ExtensionReport,
    pub phi: ProductGridFunction,
    pub psi: GridFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub tol: f64,
    pub max_residual: f64,
    pub residuals: Vec<f64>,
    pub joint_convexity: ConvexityReport,
    pub passed: bool,
}

struct Session {
    out: OutputDir,
    inputs: BTreeMap<String, String>,
    parameters: serde_json::Value,
}

impl Session {
    fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }
}

const DEFAULT_CHECK_SAMPLES: usize = 4000;

/// Runs one command and returns its exit code. Errors are printed to stderr.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let (name, out) = match &cli.command {
        Command::Extend(a) => ("extend", &a.out),
        Command::Prekopa(a) => ("prekopa", &a.out),
        Command::Legendre(a) => ("legendre", &a.out),
        Command::Extremal(a) => ("extremal", &a.out),
        Command::Verify(a) => ("verify", &a.out),
    };
    let mut session = match OutputDir::create(out) {
        Ok(out) => Session {
            out,
            inputs: BTreeMap::new(),
            parameters: json!({}),
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INPUT;
        }
    };
    let result = match &cli.command {
        Command::Extend(a) => cmd_extend(&mut session, a),
        Command::Prekopa(a) => cmd_prekopa(&mut session, a),
        Command::Legendre(a) => cmd_legendre(&mut session, a),
        Command::Extremal(a) => cmd_extremal(&mut session, a),
        Command::Verify(a) => cmd_verify(&mut session, a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    };
    let manifest = RunManifest {
        command: name.to_string(),
        inputs: session.inputs,
        parameters: session.parameters,
        versions: versions(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: session.out.written().to_vec(),
        exit_code: code,
    };
    if let Err(e) = session.out.write_json("manifest.json", &manifest) {
        eprintln!("error: {e:#}");
        return EXIT_INPUT;
    }
    code
}

/// Broken internal contracts count as constraint failures; everything else
/// is an input problem.
fn exit_code_for(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<convext::Error>() {
        Some(convext::Error::Contract(_)) => EXIT_CONSTRAINT,
        _ => EXIT_INPUT,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {what} {}", path.display()))
}

fn cmd_extend(s: &mut Session, a: &ExtendArgs) -> Result<i32> {
    s.input(&a.problem)?;
    let spec = read_problem(&a.problem)?;
    let over = Overrides {
        lambda: a.lambda,
        tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
        dual: a.dual.spec()?,
    };
    let problem = spec.build(&over)?;
    let params = problem.softening(&problem.psi)?;
    let o = &problem.options;
    s.parameters = json!({
        "lambda": problem.lambda,
        "tol": o.tol,
        "max_iter": o.max_iter,
        "seed": o.seed,
        "check_samples": o.check_samples,
        "dual": params.dual_spec,
    });
    let report = extend_convex(&problem.psi, &problem.phi, &params, o)?;

    s.out.write("residuals.csv", residuals_csv(problem.phi.t_spec(), &report.residuals).as_bytes())?;
    if let Some(tr) = &report.trace {
        s.out.write("trace.csv", trace_csv(&tr.log_a, &tr.theoretical).as_bytes())?;
    }
    s.out.write("extension.csv", product_csv(&report.psi).as_bytes())?;
    let passed = report.max_residual <= o.tol && report.joint_convexity.worst_violation <= CONVEXITY_TOL;
    let converged = report.trace.as_ref().map_or(true, |t| t.converged);
    println!(
        "max_residual {:e} (tol {:e}), joint convexity defect {:e}, restriction gap {:e}, converged {converged}",
        report.max_residual, o.tol, report.joint_convexity.worst_violation, report.restriction_error
    );
    let file = ReportFile {
        tol: o.tol,
        lambda: problem.lambda,
        seed: o.seed,
        check_samples: o.check_samples,
        dual: params.dual_spec,
        report,
        phi: problem.phi,
        psi: problem.psi,
    };
    s.out.write_json("report.json", &file)?;
    Ok(if passed { EXIT_OK } else { EXIT_CONSTRAINT })
}

fn cmd_prekopa(s: &mut Session, a: &PrekopaArgs) -> Result<i32> {
    s.input(&a.problem)?;
    let spec = read_problem(&a.problem)?;
    let phi = spec.sample_phi()?;
    let seed = a.seed.or(spec.seed).unwrap_or(0);
    let samples = spec.check_samples.unwrap_or(DEFAULT_CHECK_SAMPLES);
    s.parameters = json!({ "seed": seed, "check_samples": samples });
    let marginal = prekopa_marginal(&phi)?;
    let check = check_midpoint_convexity(&marginal, samples, seed)?;
    s.out.write_json("marginal.json", &marginal)?;
    s.out.write("marginal.csv", grid_function_csv(&marginal).as_bytes())?;
    s.out.write_json("convexity.json", &check)?;
    println!("marginal convexity defect {:e}", check.worst_violation);
    Ok(if check.worst_violation <= CONVEXITY_TOL { EXIT_OK } else { EXIT_CONSTRAINT })
}

fn cmd_legendre(s: &mut Session, a: &LegendreArgs) -> Result<i32> {
    s.input(&a.function)?;
    let f: GridFunction = read_json(&a.function, "grid function")?;
    let dual = match a.dual.spec()? {
        Some(d) => d,
        None => padded_dual_spec(&f)?,
    };
    s.parameters = json!({ "dual": dual, "biconjugate": a.biconjugate });
    let conj = legendre_transform(&f, &dual)?;
    s.out.write_json("conjugate.json", &conj)?;
    s.out.write("conjugate.csv", grid_function_csv(&conj).as_bytes())?;
    if a.biconjugate {
        let env = legendre_transform(&conj, f.spec())?;
        s.out.write_json("envelope.json", &env)?;
        s.out.write("envelope.csv", grid_function_csv(&env).as_bytes())?;
    }
    Ok(EXIT_OK)
}

/// Smallest grid containing the padded dual grids of every slice, with the
/// finest of their steps.
fn covering_dual(phi: &ProductGridFunction) -> Result<GridSpec> {
    let duals = (0..phi.t_len())
        .map(|j| padded_dual_spec(&phi.slice(j)))
        .collect::<convext::Result<Vec<_>>>()?;
    let axes = (0..phi.x_spec().dim())
        .map(|k| {
            let lo = duals.iter().map(|d| d.axis(k).lo).fold(f64::INFINITY, f64::min);
            let hi = duals.iter().map(|d| d.axis(k).hi).fold(f64::NEG_INFINITY, f64::max);
            let step = duals.iter().map(|d| d.axis(k).step()).fold(f64::INFINITY, f64::min);
            Axis::new(lo, hi, ((hi - lo) / step).round() as usize + 1)
        })
        .collect::<convext::Result<Vec<_>>>()?;
    Ok(GridSpec::new(axes)?)
}

fn cmd_extremal(s: &mut Session, a: &ExtremalArgs) -> Result<i32> {
    if let Some(path) = &a.problem {
        s.input(path)?;
        let spec = read_problem(path)?;
        let phi = spec.sample_phi()?;
        let dual = match a.dual.spec()?.or(spec.dual.clone()) {
            Some(d) => d,
            None => covering_dual(&phi)?,
        };
        let seed = a.seed.or(spec.seed).unwrap_or(0);
        let samples = spec.check_samples.unwrap_or(DEFAULT_CHECK_SAMPLES);
        s.parameters = json!({ "dual": dual, "seed": seed, "check_samples": samples });
        let h = hat_phi(&phi, &dual, samples, seed)?;
        s.out.write("hat_phi.csv", product_csv(&h.values).as_bytes())?;
        s.out.write_json("hat_phi.json", &h)?;
        println!("joint convexity defect {:e}", h.joint_convexity.worst_violation);
        return Ok(if h.joint_convexity.worst_violation <= CONVEXITY_TOL { EXIT_OK } else { EXIT_CONSTRAINT });
    }
    let Some(path) = &a.function else {
        bail!("either --function or --problem is required");
    };
    s.input(path)?;
    let phi: GridFunction = read_json(path, "grid function")?;
    let dual = match a.dual.spec()? {
        Some(d) => d,
        None => padded_dual_spec(&phi)?,
    };
    let seed = a.seed.unwrap_or(0);
    s.parameters = json!({
        "dual": dual,
        "seed": seed,
        "oracle": a.oracle,
        "oracle_iterations": a.oracle_iterations,
    });
    let r = extremal_function(&phi, &dual)?;
    let check = check_midpoint_convexity(&r.e, DEFAULT_CHECK_SAMPLES, seed)?;
    s.out.write("extremal.csv", grid_function_csv(&r.e).as_bytes())?;
    s.out.write("log_laplace.csv", grid_function_csv(&r.log_z).as_bytes())?;
    s.out.write_json("extremal.json", &r)?;
    if a.oracle {
        let rows = (0..phi.spec().len())
            .filter(|&i| phi.value(i).is_finite())
            .map(|i| {
                Ok(OracleRow {
                    x0: phi.spec().coords(i),
                    dual_path_value: r.e.value(i),
                    oracle_value: extremal_oracle(&phi, i, a.oracle_iterations)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        s.out.write("oracle.csv", oracle_csv(&rows).as_bytes())?;
    }
    println!(
        "feasibility residual {:e}, convexity defect {:e}",
        r.feasibility_residual, check.worst_violation
    );
    Ok(if check.worst_violation <= CONVEXITY_TOL { EXIT_OK } else { EXIT_CONSTRAINT })
}

fn cmd_verify(s: &mut Session, a: &VerifyArgs) -> Result<i32> {
    s.input(&a.report)?;
    let file: ReportFile = read_json(&a.report, "report")?;
    let phi = match &a.problem {
        Some(path) => {
            s.input(path)?;
            read_problem(path)?.sample_phi()?
        }
        None => file.phi.clone(),
    };
    let psi = &file.report.psi;
    ensure!(psi.same_grids(&phi), "the stored extension and the weight live on different grids");
    let tol = a.tol.unwrap_or(file.tol);
    let seed = a.seed.unwrap_or(file.seed);
    s.parameters = json!({ "tol": tol, "seed": seed, "check_samples": file.check_samples });
    let residuals = constraint_residuals(psi, &phi)?;
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let joint_convexity = joint_check(psi, file.check_samples, seed)?;
    let passed = max_residual <= tol && joint_convexity.worst_violation <= CONVEXITY_TOL;
    println!(
        "max_residual {max_residual:e} (tol {tol:e}), joint convexity defect {:e}",
        joint_convexity.worst_violation
    );
    s.out.write("verify_residuals.csv", residuals_csv(phi.t_spec(), &residuals).as_bytes())?;
    s.out.write_json(
        "verify.json",
        &VerifyFile {
            tol,
            max_residual,
            residuals,
            joint_convexity,
            passed,
        },
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_CONSTRAINT })
}

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use contraction_lab::config::{Config, Model};
use contraction_lab::error::{LabError, Result};
use contraction_lab::exec::init_threads_from_env;
use contraction_lab::experiment::{run_contraction_experiment, ExperimentPlan};
use contraction_lab::forward::ForwardMap;
use contraction_lab::inference::{default_jq, elbo_gap_surrogate, pcn_sample, vb_fit};
use contraction_lab::obs::{simulate_data, stability_scan, Dataset};
use contraction_lab::prior::PriorSpec;
use contraction_lab::rates::{check_constraints, solve_best_rate, RateConstants, RateParams, Variant};
use contraction_lab::special::mittag_leffler;
use contraction_lab::spectral::SpectralField;

/// Gaussian-process posteriors for PDE inverse problems and contraction diagnostics.
#[derive(Parser)]
#[command(name = "contraction-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the rate constraint system at a given tuple.
    Constraints(ConstraintArgs),
    /// Find the smallest feasible contraction exponent b.
    SolveRate(SolveRateArgs),
    /// Solve the forward problem at the configured truth.
    Forward(RunArgs),
    /// Simulate a noisy dataset from the configured truth.
    Simulate(DataArgs),
    /// Sample the posterior with pCN.
    Pcn(DataArgs),
    /// Fit the mean-field variational posterior.
    Vb(DataArgs),
    /// Estimate the conditional stability exponent around the truth.
    Stability(RunArgs),
    /// Run the contraction experiment sweep.
    Contract(RunArgs),
    /// Evaluate the Mittag-Leffler function E_{a,b}(z).
    Ml(MlArgs),
}

#[derive(Args)]
struct ConstantArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    d: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    l: f64,
    /// p3 or p3prime
    #[arg(long, default_value = "p3", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Args)]
struct ConstraintArgs {
    #[command(flatten)]
    constants: ConstantArgs,
    #[arg(long, allow_negative_numbers = true)]
    b: f64,
    #[arg(long, allow_negative_numbers = true)]
    h: f64,
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long, allow_negative_numbers = true)]
    rho: f64,
}

#[derive(Args)]
struct SolveRateArgs {
    #[command(flatten)]
    constants: ConstantArgs,
    #[arg(long)]
    h: f64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set problem.sigma=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file or directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dataset CSV; simulated from the configured truth when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sample size (defaults to prior.N).
    #[arg(long)]
    n: Option<usize>,
    /// Noise level (overrides problem.sigma).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MlArgs {
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, allow_negative_numbers = true)]
    z: f64,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s.to_ascii_lowercase().as_str() {
        "p3" => Ok(Variant::P3),
        "p3prime" | "p3'" => Ok(Variant::P3Prime),
        _ => Err(format!("unknown variant {s:?} (expected p3 or p3prime)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_threads_from_env();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                LabError::Config(_) | LabError::Argument(_) | LabError::IllPosedConstants(_) => 2,
                _ => 3,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Constraints(a) => {
            let params = RateParams {
                b: a.b,
                c: a.c,
                h: a.h,
                rho: a.rho,
                constants: constants(&a.constants)?,
            };
            let report = check_constraints(&params, a.constants.variant)?;
            for r in &report.residuals {
                eprintln!("{:<4} {:>+.6e} {}", r.name, r.value, if r.satisfied { "ok" } else { "VIOLATED" });
            }
            print_json(&report)
        }
        Command::SolveRate(a) => print_json(&solve_best_rate(&constants(&a.constants)?, a.h, a.constants.variant)?),
        Command::Ml(a) => {
            println!("{:.12}", mittag_leffler(a.a, a.b, a.z)?);
            Ok(())
        }
        Command::Forward(a) => {
            let cfg = load(&a)?;
            let (model, truth) = model_and_truth(&cfg)?;
            let Model::Pde(pde) = &model else {
                return Err(LabError::Config("forward needs a PDE problem.kind, not linear".into()));
            };
            let out = pde.solve_field(&truth)?;
            eprintln!("sup |u| = {:.6e}", out.sup_norm);
            out.write_csv(writer(a.out.as_deref())?)
        }
        Command::Simulate(a) => {
            let cfg = load(&a.run)?;
            let data = dataset(&cfg, &a)?;
            data.write_csv(writer(a.run.out.as_deref())?)
        }
        Command::Pcn(a) => {
            let cfg = load(&a.run)?;
            let data = dataset(&cfg, &a)?;
            let (model, truth) = model_and_truth(&cfg)?;
            let prior = prior_for(&cfg, &model, &truth, data.len())?;
            let chain = pcn_sample(&data, &model, &prior, &cfg.inference.pcn)?;
            eprintln!(
                "acceptance {:.4}, final step {:.4e}, {} samples",
                chain.acceptance_rate,
                chain.final_step,
                chain.samples.len()
            );
            chain.write_csv(writer(a.run.out.as_deref())?)
        }
        Command::Vb(a) => {
            let cfg = load(&a.run)?;
            let data = dataset(&cfg, &a)?;
            let (model, truth) = model_and_truth(&cfg)?;
            let prior = prior_for(&cfg, &model, &truth, data.len())?;
            let j = prior.basis().len();
            let jq = match cfg.plan.as_ref().and_then(|p| p.c) {
                Some(c) => default_jq(j, data.len(), c, cfg.inference.jq_scale),
                None => j,
            };
            let state = vb_fit(&data, &model, &prior, jq, &cfg.inference.vb)?;
            let gap = elbo_gap_surrogate(&state, &data, &model, &prior)?;
            eprintln!("J_q = {jq}, ELBO {:.6e}, surrogate {:.6e}", gap.elbo, gap.surrogate);
            state.write_json(writer(a.run.out.as_deref())?)
        }
        Command::Stability(a) => {
            let cfg = load(&a)?;
            let (model, truth) = model_and_truth(&cfg)?;
            let n = cfg.prior()?.n.unwrap_or(1);
            let prior = prior_for(&cfg, &model, &truth, n)?;
            let (radii, count, seed) = match &cfg.plan {
                Some(p) => (p.stability_radii.clone(), p.stability_count, p.seed),
                None => (vec![0.4, 0.2, 0.1, 0.05, 0.025], 40, 0),
            };
            let report = stability_scan(&model, &prior, &truth, &radii, count, seed)?;
            eprintln!("eta_hat {:.4}, R^2 {:.4}", report.eta_hat, report.r_squared);
            let mut w = writer(a.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(())
        }
        Command::Contract(a) => {
            let cfg = load(&a)?;
            let plan = ExperimentPlan::from_config(&cfg)?;
            let result = run_contraction_experiment(&plan)?;
            let dir = a.out.unwrap_or_else(|| PathBuf::from("contract-out"));
            result.write_outputs(&dir, cfg.plan()?.svg)?;
            for m in &result.summary.methods {
                if let Some(fit) = &m.fit {
                    eprintln!("{:?}: slope {:.4} (R^2 {:.3})", m.method, fit.slope, fit.r_squared);
                }
            }
            eprintln!("completeness {:.3}; outputs in {}", result.summary.completeness, dir.display());
            Ok(())
        }
    }
}

fn constants(a: &ConstantArgs) -> Result<RateConstants> {
    RateConstants::new(a.alpha, a.beta, a.d, a.kappa, a.l)
}

fn load(a: &RunArgs) -> Result<Config> {
    Config::load_with_overrides(a.config.as_deref(), &a.overrides)
}

fn model_and_truth(cfg: &Config) -> Result<(Model, SpectralField)> {
    let problem = cfg.problem()?;
    let basis = problem.basis(cfg.prior()?.j)?;
    let truth = problem.truth(&basis)?;
    Ok((problem.model(basis)?, truth))
}

fn prior_for(cfg: &Config, model: &Model, truth: &SpectralField, n: usize) -> Result<PriorSpec> {
    cfg.prior()?.spec(model.basis().clone(), Some(n.max(1)), Some(truth))
}

fn dataset(cfg: &Config, a: &DataArgs) -> Result<Dataset> {
    let problem = cfg.problem()?;
    let sigma = match a.sigma {
        Some(s) => s,
        None => problem.sigma()?,
    };
    if let Some(path) = &a.data {
        return Dataset::read_csv(BufReader::new(File::open(path)?), sigma);
    }
    let n = a
        .n
        .or(cfg.prior.as_ref().and_then(|p| p.n))
        .ok_or_else(|| LabError::Config("missing sample size: pass --n or set prior.N".into()))?;
    let (model, truth) = model_and_truth(cfg)?;
    simulate_data(&model, &truth, n, sigma, a.seed)
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

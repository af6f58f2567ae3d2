//! Contraction experiment harness: sweeps the sample size, runs inference on
//! independent data replicates and reports posterior mass outside shrinking
//! balls together with a fitted error exponent.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{Config, Method, Model};
use crate::error::{LabError, Result};
use crate::exec::ExecMode;
use crate::inference::{
    distances, elbo_gap_surrogate, pcn_sample, vb_fit, vb_sample, ChainConfig, Metric, VbConfig, default_jq,
};
use crate::obs::{simulate_data, stability_scan, stability::least_squares};
use crate::prior::PriorSpec;
use crate::rates::solve_best_rate;
use crate::rng::derive_seed;
use crate::spectral::SpectralField;

const DATA_TAG: u64 = 0x6461_7461;
const CHAIN_TAG: u64 = 0x6368_6e;
const VB_TAG: u64 = 0x7662;
const STABILITY_TAG: u64 = 0x7374_6162;

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub sigma: f64,
    pub model: Model,
    /// Fixed across all cells.
    pub truth: SpectralField,
    /// Template prior; the sample size is substituted per cell.
    pub prior: PriorSpec,
    pub m: f64,
    pub m_values: Vec<f64>,
    pub method: Method,
    pub seed: u64,
    /// `delta_N = N^b`.
    pub b: f64,
    /// `J_q = min(J, ceil(jq_scale N^c))`.
    pub c: f64,
    pub chain: ChainConfig,
    pub vb: VbConfig,
    pub jq_scale: f64,
    pub vb_draws: usize,
    pub stability_radii: Vec<f64>,
    pub stability_count: usize,
    pub exec: ExecMode,
    /// Free-form notes copied into the summary.
    pub notes: Vec<String>,
}

impl ExperimentPlan {
    /// Builds a plan from a config with `[prior]`, `[problem]` and `[plan]`.
    /// Missing `b` or `c` are taken from [`solve_best_rate`].
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let prior_cfg = cfg.prior()?;
        let problem = cfg.problem()?;
        let plan = cfg.plan()?;
        let sigma = problem.sigma()?;
        let basis = problem.basis(prior_cfg.j)?;
        let model = problem.model(basis.clone())?;
        let truth = problem.truth(&basis)?;
        let first_n = *plan.n_grid.first().ok_or_else(|| LabError::Config("plan.N must not be empty".into()))?;
        let prior = prior_cfg.spec(basis, Some(first_n), Some(&truth))?;
        let mut notes = vec!["the harness reports finite-N behaviour and does not judge whether the asymptotic regime is reached".to_string()];
        let (b, c) = match (plan.b, plan.c) {
            (Some(b), Some(c)) => (b, c),
            (b, c) => {
                let constants = plan.constants(prior_cfg, problem)?;
                if !(prior_cfg.h > 0.0 && prior_cfg.h < 0.5) {
                    return Err(LabError::Config(
                        "plan.b and plan.c are required unless prior.h lies in (0, 1/2)".into(),
                    ));
                }
                let best = solve_best_rate(&constants, prior_cfg.h, plan.variant)?;
                let bound = constants.dominant_bound(prior_cfg.h);
                notes.push(format!(
                    "conjecture: the grid optimum b = {:.6} coincides with the analytic frontier {:.6} (gap {:.2e}); not asserted",
                    best.params.b,
                    bound,
                    best.params.b - bound
                ));
                (b.unwrap_or(best.params.b), c.unwrap_or(best.params.c))
            }
        };
        let out = Self {
            n_grid: plan.n_grid.clone(),
            replicates: plan.replicates,
            sigma,
            model,
            truth,
            prior,
            m: plan.m,
            m_values: plan.m_values.clone(),
            method: plan.method,
            seed: plan.seed,
            b,
            c,
            chain: cfg.inference.pcn.clone(),
            vb: cfg.inference.vb.clone(),
            jq_scale: cfg.inference.jq_scale,
            vb_draws: cfg.inference.vb_draws,
            stability_radii: plan.stability_radii.clone(),
            stability_count: plan.stability_count,
            exec: ExecMode::default(),
            notes,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
            return Err(LabError::Config(format!("plan.N must be positive and strictly increasing, got {:?}", self.n_grid)));
        }
        if self.replicates < 3 {
            return Err(LabError::Config(format!("plan.replicates must be at least 3, got {}", self.replicates)));
        }
        if !(self.b < 0.0) || !(self.c > 0.0) || !(self.m > 0.0) || self.m_values.iter().any(|m| !(*m > 0.0)) {
            return Err(LabError::Config("plan needs b < 0, c > 0 and positive radius multipliers".into()));
        }
        if self.vb_draws == 0 {
            return Err(LabError::Config("inference.vb_draws must be positive".into()));
        }
        self.chain.validate()
    }

    pub fn delta(&self, n: usize) -> f64 {
        (n as f64).powf(self.b)
    }
}

/// Inference method of a single result row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Pcn,
    Vb,
}

impl Engine {
    fn name(self) -> &'static str {
        match self {
            Engine::Pcn => "pcn",
            Engine::Vb => "vb",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub replicate: usize,
    pub engine: Engine,
    pub mass_outside_dg: f64,
    pub mass_outside_l2: f64,
    /// Median over posterior draws of `||F - F0||_{L^2}`.
    pub median_l2_err: f64,
    /// `d_G` mass outside `m delta_N` for each configured multiplier.
    pub mass_by_m: Vec<f64>,
    pub acceptance: Option<f64>,
    pub elbo_surrogate: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    fn failed(n: usize, replicate: usize, engine: Engine, m_count: usize, err: &LabError) -> Self {
        Self {
            n,
            replicate,
            engine,
            mass_outside_dg: f64::NAN,
            mass_outside_l2: f64::NAN,
            median_l2_err: f64::NAN,
            mass_by_m: vec![f64::NAN; m_count],
            acceptance: None,
            elbo_surrogate: None,
            error: Some(err.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub completed: usize,
    pub median_l2_err: f64,
    pub mean_l2_err: f64,
    /// Standard error of `mean_l2_err` across replicates.
    pub se_l2_err: f64,
    pub mass_outside_dg: f64,
    pub mass_outside_l2: f64,
    /// `(m, mean d_G mass outside m delta_N)`.
    pub mass_by_m: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo_surrogate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% interval from the t distribution; absent with fewer than three sizes.
    pub slope_ci: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Engine,
    pub sizes: Vec<SizeSummary>,
    pub fit: Option<RateFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub eta_hat: Option<f64>,
    pub stability_r_squared: Option<f64>,
    pub completeness: f64,
    pub complete: bool,
    pub failed_cells: Vec<String>,
    pub methods: Vec<MethodSummary>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    /// Sorted by engine, `N` and replicate.
    pub cells: Vec<CellResult>,
    pub summary: ExperimentSummary,
}

pub fn run_contraction_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let mut notes = plan.notes.clone();
    let stab = stability_scan(
        &plan.model,
        &plan.prior,
        &plan.truth,
        &plan.stability_radii,
        plan.stability_count,
        derive_seed(plan.seed, &[STABILITY_TAG]),
    );
    let (eta_hat, stab_r2) = match stab {
        Ok(r) => (Some(r.eta_hat), Some(r.r_squared)),
        Err(e) => {
            notes.push(format!("stability scan failed ({e}); L2 mass is not reported"));
            (None, None)
        }
    };
    let cells: Vec<(usize, usize)> = plan
        .n_grid
        .iter()
        .flat_map(|&n| (0..plan.replicates).map(move |r| (n, r)))
        .collect();
    let mut rows: Vec<CellResult> = plan
        .exec
        .map(&cells, |&(n, r)| run_cell(plan, n, r, eta_hat))
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| (a.engine, a.n, a.replicate).cmp(&(b.engine, b.n, b.replicate)));

    let failed_cells: Vec<String> = rows
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("{} N={} replicate={}: {e}", c.engine.name(), c.n, c.replicate)))
        .collect();
    let completeness = rows.iter().filter(|c| c.ok()).count() as f64 / rows.len() as f64;
    let engines: Vec<Engine> = [Engine::Pcn, Engine::Vb]
        .into_iter()
        .filter(|e| rows.iter().any(|c| c.engine == *e))
        .collect();
    let methods = engines.into_iter().map(|e| summarize(plan, &rows, e)).collect();
    Ok(ExperimentResult {
        cells: rows,
        summary: ExperimentSummary {
            b: plan.b,
            c: plan.c,
            m: plan.m,
            eta_hat,
            stability_r_squared: stab_r2,
            completeness,
            complete: failed_cells.is_empty(),
            failed_cells,
            methods,
            notes,
        },
    })
}

fn run_cell(plan: &ExperimentPlan, n: usize, rep: usize, eta_hat: Option<f64>) -> Vec<CellResult> {
    let mut engines = vec![];
    if plan.method.runs_pcn() {
        engines.push(Engine::Pcn);
    }
    if plan.method.runs_vb() {
        engines.push(Engine::Vb);
    }
    let tags = [n as u64, rep as u64];
    let setup = simulate_data(&plan.model, &plan.truth, n, plan.sigma, derive_seed(plan.seed, &[DATA_TAG, tags[0], tags[1]]))
        .and_then(|data| Ok((data, plan.prior.with_sample_size(n)?)));
    let (data, prior) = match setup {
        Ok(s) => s,
        Err(e) => return engines.iter().map(|&g| CellResult::failed(n, rep, g, plan.m_values.len(), &e)).collect(),
    };
    engines
        .into_iter()
        .map(|engine| {
            let run = || -> Result<CellResult> {
                let (samples, acceptance, elbo_surrogate) = match engine {
                    Engine::Pcn => {
                        let cfg = ChainConfig {
                            seed: derive_seed(plan.seed, &[CHAIN_TAG, tags[0], tags[1]]),
                            ..plan.chain.clone()
                        };
                        let out = pcn_sample(&data, &plan.model, &prior, &cfg)?;
                        (out.samples, Some(out.acceptance_rate), None)
                    }
                    Engine::Vb => {
                        let cfg = VbConfig {
                            seed: derive_seed(plan.seed, &[VB_TAG, tags[0], tags[1]]),
                            ..plan.vb.clone()
                        };
                        let jq = default_jq(prior.basis().len(), n, plan.c, plan.jq_scale);
                        let state = vb_fit(&data, &plan.model, &prior, jq, &cfg)?;
                        let gap = elbo_gap_surrogate(&state, &data, &plan.model, &prior)?;
                        let draws = vb_sample(&state, plan.vb_draws, derive_seed(cfg.seed, &[1]))?;
                        (draws, None, Some(gap.surrogate))
                    }
                };
                summarize_samples(plan, n, rep, engine, &samples, eta_hat, acceptance, elbo_surrogate)
            };
            run().unwrap_or_else(|e| CellResult::failed(n, rep, engine, plan.m_values.len(), &e))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn summarize_samples(
    plan: &ExperimentPlan,
    n: usize,
    rep: usize,
    engine: Engine,
    samples: &[SpectralField],
    eta_hat: Option<f64>,
    acceptance: Option<f64>,
    elbo_surrogate: Option<f64>,
) -> Result<CellResult> {
    if samples.is_empty() {
        return Err(LabError::Argument("inference returned no samples".into()));
    }
    let delta = plan.delta(n);
    let d_g = distances(samples, &plan.model, &plan.truth, Metric::ForwardL2)?;
    let l2 = distances(samples, &plan.model, &plan.truth, Metric::L2)?;
    let outside = |xs: &[f64], r: f64| xs.iter().filter(|&&x| x > r).count() as f64 / xs.len() as f64;
    Ok(CellResult {
        n,
        replicate: rep,
        engine,
        mass_outside_dg: outside(&d_g, plan.m * delta),
        mass_outside_l2: eta_hat.map_or(f64::NAN, |eta| outside(&l2, (plan.m * delta).powf(eta))),
        median_l2_err: median(l2),
        mass_by_m: plan.m_values.iter().map(|m| outside(&d_g, m * delta)).collect(),
        acceptance,
        elbo_surrogate,
        error: None,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn summarize(plan: &ExperimentPlan, rows: &[CellResult], engine: Engine) -> MethodSummary {
    let sizes: Vec<SizeSummary> = plan
        .n_grid
        .iter()
        .map(|&n| {
            let ok: Vec<&CellResult> = rows.iter().filter(|c| c.engine == engine && c.n == n && c.ok()).collect();
            let errs: Vec<f64> = ok.iter().map(|c| c.median_l2_err).collect();
            let k = errs.len();
            let mean_err = mean(&errs);
            let se = if k > 1 {
                (errs.iter().map(|e| (e - mean_err).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
            } else {
                f64::NAN
            };
            let col = |f: &dyn Fn(&CellResult) -> f64| mean(&ok.iter().map(|c| f(c)).collect::<Vec<_>>());
            let surrogates: Vec<f64> = ok.iter().filter_map(|c| c.elbo_surrogate).collect();
            SizeSummary {
                n,
                delta: plan.delta(n),
                completed: k,
                median_l2_err: median(errs.clone()),
                mean_l2_err: mean_err,
                se_l2_err: se,
                mass_outside_dg: col(&|c| c.mass_outside_dg),
                mass_outside_l2: col(&|c| c.mass_outside_l2),
                mass_by_m: plan
                    .m_values
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| (m, col(&|c| c.mass_by_m[i])))
                    .collect(),
                elbo_surrogate: (!surrogates.is_empty()).then(|| mean(&surrogates)),
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .filter(|s| s.median_l2_err > 0.0)
        .map(|s| ((s.n as f64).ln(), s.median_l2_err.ln()))
        .collect();
    MethodSummary {
        method: engine,
        fit: fit_rate(&pts),
        sizes,
    }
}

/// OLS fit of `log err` on `log N` with a 95% t interval for the slope.
pub fn fit_rate(pts: &[(f64, f64)]) -> Option<RateFit> {
    let (slope, intercept, r_squared) = least_squares(pts)?;
    let k = pts.len();
    let slope_ci = (k > 2).then(|| {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (rss / (k - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (k - 2) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(f64::NAN);
        (slope - t * se, slope + t * se)
    });
    Some(RateFit {
        slope,
        intercept,
        r_squared,
        slope_ci,
    })
}

impl ExperimentResult {
    /// Columns `N,replicate,mass_outside_dG,mass_outside_L2,median_L2_err,method,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "replicate", "mass_outside_dG", "mass_outside_L2", "median_L2_err", "method", "status"])?;
        for c in &self.cells {
            w.write_record([
                c.n.to_string(),
                c.replicate.to_string(),
                c.mass_outside_dg.to_string(),
                c.mass_outside_l2.to_string(),
                c.median_l2_err.to_string(),
                c.engine.name().to_string(),
                c.error.as_ref().map_or("ok".to_string(), |e| format!("failed: {e}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `rates.csv`, `summary.json` and optionally `rates.svg` into `dir`.
    pub fn write_outputs(&self, dir: &Path, svg: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("rates.csv"))?)?;
        let mut f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n")?;
        if svg {
            std::fs::write(dir.join("rates.svg"), self.svg())?;
        }
        Ok(())
    }

    /// Log-log plot of the median L2 error against `N` with fitted lines.
    pub fn svg(&self) -> String {
        const W: f64 = 480.0;
        const H: f64 = 320.0;
        const PAD: f64 = 48.0;
        let pts: Vec<(f64, f64)> = self
            .summary
            .methods
            .iter()
            .flat_map(|m| m.sizes.iter().filter(|s| s.median_l2_err > 0.0))
            .map(|s| ((s.n as f64).ln(), s.median_l2_err.ln()))
            .collect();
        let (x0, x1) = bounds(pts.iter().map(|p| p.0));
        let (y0, y1) = bounds(pts.iter().map(|p| p.1));
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
            H - PAD,
            W - PAD
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">log N</text>"#, W / 2.0, H - 12.0);
        let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">log median L2 error</text>"#, H / 2.0, H / 2.0);
        for (i, m) in self.summary.methods.iter().enumerate() {
            let color = ["#1f77b4", "#d62728"][i % 2];
            for sz in m.sizes.iter().filter(|s| s.median_l2_err > 0.0) {
                let (x, y) = ((sz.n as f64).ln(), sz.median_l2_err.ln());
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
            if let Some(fit) = &m.fit {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    sx(x0),
                    sy(fit.intercept + fit.slope * x0),
                    sx(x1),
                    sy(fit.intercept + fit.slope * x1)
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" fill="{color}">{} slope {:.3}</text>"#,
                    W - PAD - 110.0,
                    PAD + 14.0 * i as f64,
                    m.method.name(),
                    fit.slope
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.1);
    (lo - pad, hi + pad)
}

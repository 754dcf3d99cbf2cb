//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::Dataset;
use crate::diagnostics::{condition_diagnostics, DiagnosticParams, Truth, DEFAULT_BUDGET, DEFAULT_DELTA, DEFAULT_KAPPA, DEFAULT_NU};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain_traced, run_chains, ChainConfig, PosteriorSummary, SigmaMode};
use crate::indicator::ModelIndicator;
use crate::oracle::{enumerate_posterior, ENUMERATION_CAP};
use crate::priors::{default_k, default_priors, sample_variance, PriorSpec, DEFAULT_ALPHA};
use crate::selection::{bic_model, marginal_screen_with, median_model, mspe_by_size, refit_ols, BicPath, SelectionResult};
use crate::simbench::{gen_case, run_benchmark, BenchConfig, BenchReport, CaseSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "sdvs", version, about = "Spike-and-slab variable selection with sample-size dependent priors")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Gibbs sampler and report inclusion probabilities and selections.
    Fit(FitArgs),
    /// Keep the covariates most correlated with the response.
    Screen(ScreenArgs),
    /// Exact posterior by enumeration of all models (small p).
    Oracle(OracleArgs),
    /// Simulation benchmark on one of the built-in cases.
    Bench(BenchArgs),
    /// Report design and prior regularity diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Response column, by header name or 0-based index.
    #[arg(short, long, default_value = "y")]
    pub response: String,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    /// Prior model-size bound; defaults to max(10, ceil(log n)).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Prior probability of models larger than K.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// `ig` to sample the noise variance, or `fixed:<v>` with v on the raw response scale.
    #[arg(long, default_value = "ig")]
    pub sigma2: String,
    /// Median-model cutoff on the marginal inclusion probability.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Independent chains pooled into one estimate.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Scale for the prior variances on the raw response scale (e.g. the
    /// residual variance of a preliminary model); defaults to Var(Y).
    #[arg(long)]
    pub sigma_hat: Option<f64>,
    /// Held-out CSV (same columns) for the MSPE-by-size sweep.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Report prediction error of the top-m models for m = 0..=M.
    #[arg(long)]
    pub sweep_size: Option<usize>,
    /// Write the retained sweeps (iteration, model, sigma^2) as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long)]
    pub keep: usize,
    /// Columns always kept (comma separated names), on top of `keep`.
    #[arg(long, value_delimiter = ',')]
    pub force: Vec<String>,
    /// Write the screened data (response first) as CSV.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = ENUMERATION_CAP)]
    pub max_p: usize,
    /// Also run the sampler at the same fixed sigma^2 and report the gap.
    #[arg(long)]
    pub compare: bool,
    /// Number of most probable models listed.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub case: u8,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Common correlation (compound-symmetry cases only).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub sweep_size: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// CSV file with a header row; omit to diagnose a generated case.
    #[arg(short, long, required_unless_present = "case")]
    pub input: Option<PathBuf>,
    #[arg(short, long, default_value = "y")]
    pub response: String,
    /// Diagnose replication `rep` of a built-in case, with its known truth.
    #[arg(long, conflicts_with = "input")]
    pub case: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = DEFAULT_NU)]
    pub nu: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Most submatrices enumerated for the combinatorial quantities.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Parses `ig` or `fixed:<v>`.
pub fn parse_sigma_mode(s: &str) -> Result<SigmaMode> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("ig") {
        return Ok(SigmaMode::InverseGamma);
    }
    let v = s
        .strip_prefix("fixed:")
        .ok_or_else(|| Error::Parameter(format!("--sigma2 must be `ig` or `fixed:<v>`, got `{s}`")))?;
    let v: f64 = v
        .parse()
        .map_err(|_| Error::Parameter(format!("bad fixed sigma^2 value `{v}`")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Parameter(format!("fixed sigma^2 must be positive, got {v}")));
    }
    Ok(SigmaMode::Fixed(v))
}

/// Reads a rectangular numeric CSV with a header row. The response column
/// is chosen by name, or by 0-based index if no header matches.
pub fn load_csv(path: &Path, response: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let y_col = match headers.iter().position(|h| h == response) {
        Some(j) => j,
        None => match response.parse::<usize>() {
            Ok(j) if j < headers.len() => j,
            _ => return Err(Error::Parameter(format!("no response column `{response}` in {}", path.display()))),
        },
    };
    if headers.len() < 2 {
        return Err(Error::Dimension("need a response and at least one covariate".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                row,
                column: headers[j].clone(),
                message,
            };
            if cell.is_empty() || matches!(cell.to_ascii_lowercase().as_str(), "na" | "nan" | "null") {
                return Err(parse_err("missing value".into()));
            }
            let v: f64 = cell.parse().map_err(|_| parse_err(format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{cell}`")));
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Dimension(format!("{} has no data rows", path.display())));
    }
    let cols: Vec<usize> = (0..headers.len()).filter(|&j| j != y_col).collect();
    let x = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
    let y = DVector::from_fn(rows.len(), |i, _| rows[i][y_col]);
    let names = cols.iter().map(|&j| headers[j].clone()).collect();
    let data = Dataset::new(x, y)?.with_names(names)?;
    log::info!("loaded {}: n = {}, p = {}", path.display(), data.n(), data.p());
    let degenerate = data.degenerate_columns();
    if !degenerate.is_empty() {
        let names: Vec<String> = degenerate.iter().map(|&j| data.name(j)).collect();
        log::warn!("constant columns kept but never selected: {}", names.join(", "));
    }
    Ok(data)
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    config: Value,
    result: T,
    timing: Timing,
}

#[derive(Debug, Serialize)]
struct Timing {
    elapsed_seconds: f64,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Writes a versioned JSON report, or `csv_rows` under `csv_header`.
fn emit_report<T: Serialize>(
    out: &OutputArgs,
    command: &str,
    seed: u64,
    config: Value,
    result: &T,
    started: Instant,
    csv_header: &[&str],
    csv_rows: Vec<Vec<String>>,
) -> Result<()> {
    let mut w = open_output(out.output.as_deref())?;
    match out.format {
        Format::Json => {
            let env = Envelope {
                schema_version: SCHEMA_VERSION,
                command,
                seed,
                config,
                result,
                timing: Timing {
                    elapsed_seconds: started.elapsed().as_secs_f64(),
                },
            };
            serde_json::to_writer_pretty(&mut w, &env)?;
            writeln!(w)?;
        }
        Format::Csv => {
            let mut cw = csv::Writer::from_writer(&mut w);
            cw.write_record(csv_header)?;
            for row in csv_rows {
                cw.write_record(&row)?;
            }
            cw.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

fn y_scale(data: &Dataset) -> f64 {
    data.standardization().map_or(1.0, |s| s.y_scale)
}

/// Converts a raw-scale `--sigma2` to the standardized response scale.
fn chain_config(args: &ChainArgs, data: &Dataset) -> Result<ChainConfig> {
    let sigma_mode = match parse_sigma_mode(&args.sigma2)? {
        SigmaMode::Fixed(v) => SigmaMode::Fixed(v / y_scale(data).powi(2)),
        m => m,
    };
    let config = ChainConfig {
        burn_in: args.burnin,
        iterations: args.iters,
        seed: args.seed,
        sigma_mode,
        ..ChainConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn priors_for(data: &Dataset, k: Option<usize>, alpha: f64, sigma_hat_raw: Option<f64>) -> Result<(PriorSpec, usize, f64)> {
    let (n, p) = (data.n(), data.p());
    let k = k.unwrap_or_else(|| default_k(n, p));
    let sigma_hat_sq = match sigma_hat_raw {
        Some(v) if v > 0.0 => v / y_scale(data).powi(2),
        Some(v) => return Err(Error::Parameter(format!("--sigma-hat must be positive, got {v}"))),
        None => sample_variance(data.y().as_slice())?,
    };
    Ok((default_priors(n, p, sigma_hat_sq, k, alpha)?, k, sigma_hat_sq))
}

#[derive(Debug, Serialize)]
struct ColumnResult {
    name: String,
    prob: f64,
    median: bool,
    bic: bool,
}

#[derive(Debug, Serialize)]
struct RuleReport {
    selected: Vec<String>,
    threshold_used: f64,
    /// Refit on the raw scale.
    intercept: f64,
    coefficients: Vec<(String, f64)>,
    rank_deficient: bool,
}

fn rule_report(sel: &SelectionResult, data: &Dataset) -> Result<RuleReport> {
    let refit = refit_ols(data, &sel.selected)?.to_raw(data);
    Ok(RuleReport {
        selected: sel.selected.ones().map(|j| data.name(j)).collect(),
        threshold_used: sel.threshold_used,
        intercept: refit.intercept,
        coefficients: sel.selected.ones().map(|j| (data.name(j), refit.coefficients[j])).collect(),
        rank_deficient: refit.rank_deficient,
    })
}

#[derive(Debug, Serialize)]
struct FitResult {
    n: usize,
    p: usize,
    degenerate: Vec<String>,
    k: usize,
    alpha: f64,
    sigma_hat_sq: f64,
    priors: PriorSpec,
    n_samples: usize,
    columns: Vec<ColumnResult>,
    median: RuleReport,
    bic: RuleReport,
    bic_path: BicPath,
    top_models: Vec<(Vec<String>, u64)>,
    /// Posterior mean of the noise variance on the raw scale (sampled mode).
    sigma_sq_mean: Option<f64>,
    size_sweep: Option<SizeSweep>,
}

#[derive(Debug, Serialize)]
struct SizeSweep {
    on: &'static str,
    mspe: Vec<(usize, f64)>,
}

fn fit(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let raw = load_csv(&args.input.input, &args.input.response)?;
    let data = raw.standardize();
    let (priors, k, sigma_hat_sq) = priors_for(&data, args.chain.k, args.chain.alpha, args.sigma_hat)?;
    let config = chain_config(&args.chain, &data)?;
    let summary: PosteriorSummary = match &args.trace {
        Some(path) => {
            if args.chains != 1 {
                return Err(Error::Parameter("--trace needs a single chain".into()));
            }
            let mut w = BufWriter::new(File::create(path)?);
            let s = run_chain_traced(&data, &priors, &config, &mut w)?;
            w.flush()?;
            s
        }
        None => run_chains(&data, &priors, &config, args.chains)?,
    };
    let median = median_model(&summary, args.chain.threshold)?;
    let bic_cap = crate::simbench::bic_max_size(data.n(), data.p(), k);
    let (bic, bic_path) = bic_model(&summary, &data, bic_cap)?;
    let size_sweep = match args.sweep_size {
        None => None,
        Some(m) => {
            let st = data.standardization().expect("standardized");
            let (target, on) = match &args.test {
                Some(path) => {
                    let test = load_csv(path, &args.input.response)?;
                    if test.names() != raw.names() {
                        return Err(Error::Dimension("test file columns differ from the training file".into()));
                    }
                    (st.apply(&test)?, "test")
                }
                None => (data.clone(), "train"),
            };
            let ys = st.y_scale * st.y_scale;
            let mspe = mspe_by_size(&summary.marginal_probs, &data, &target, m)?
                .into_iter()
                .map(|(m, e)| (m, e * ys))
                .collect();
            Some(SizeSweep { on, mspe })
        }
    };
    let ys2 = y_scale(&data).powi(2);
    let result = FitResult {
        n: data.n(),
        p: data.p(),
        degenerate: data.degenerate_columns().iter().map(|&j| data.name(j)).collect(),
        k,
        alpha: args.chain.alpha,
        sigma_hat_sq: sigma_hat_sq * ys2,
        priors,
        n_samples: summary.n_samples,
        columns: (0..data.p())
            .map(|j| ColumnResult {
                name: data.name(j),
                prob: summary.marginal_probs[j],
                median: median.selected.get(j),
                bic: bic.selected.get(j),
            })
            .collect(),
        median: rule_report(&median, &data)?,
        bic: rule_report(&bic, &data)?,
        bic_path,
        top_models: summary
            .model_counts
            .iter()
            .take(10)
            .map(|(m, c)| (m.ones().map(|j| data.name(j)).collect(), *c))
            .collect(),
        sigma_sq_mean: (!summary.sigma_trace.is_empty())
            .then(|| ys2 * summary.sigma_trace.iter().sum::<f64>() / summary.sigma_trace.len() as f64),
        size_sweep,
    };
    let rows = result
        .columns
        .iter()
        .map(|c| vec![c.name.clone(), c.prob.to_string(), (c.median as u8).to_string(), (c.bic as u8).to_string()])
        .collect();
    let cfg = json!({
        "input": args.input.input, "response": args.input.response, "chain": config,
        "chains": args.chains, "K": k, "alpha": args.chain.alpha, "threshold": args.chain.threshold,
        "sigma_hat": args.sigma_hat, "bic_max_size": bic_cap, "test": args.test, "sweep_size": args.sweep_size,
    });
    emit_report(&args.out, "fit", args.chain.seed, cfg, &result, started, &["name", "prob", "median", "bic"], rows)
}

#[derive(Debug, Serialize)]
struct ScreenResult {
    n: usize,
    p: usize,
    kept: Vec<(usize, String, f64)>,
    forced: Vec<String>,
    predictors_with_intercept: usize,
}

fn screen(args: &ScreenArgs) -> Result<()> {
    let started = Instant::now();
    let data = load_csv(&args.input.input, &args.input.response)?;
    let forced = args
        .force
        .iter()
        .map(|name| {
            (0..data.p())
                .find(|&j| &data.name(j) == name)
                .ok_or_else(|| Error::Parameter(format!("no column `{name}` to force")))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = marginal_screen_with(&data, args.keep, &forced)?;
    let result = ScreenResult {
        n: data.n(),
        p: data.p(),
        kept: report
            .kept
            .iter()
            .map(|&j| (j, data.name(j), report.abs_correlations[j]))
            .collect(),
        forced: args.force.clone(),
        predictors_with_intercept: report.predictor_count(),
    };
    if let Some(path) = &args.write {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![args.input.response.clone()];
        header.extend(report.kept.iter().map(|&j| data.name(j)));
        w.write_record(&header)?;
        for i in 0..data.n() {
            let mut row = vec![data.y()[i].to_string()];
            row.extend(report.kept.iter().map(|&j| data.x()[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let rows = result
        .kept
        .iter()
        .enumerate()
        .map(|(r, (j, name, c))| vec![(r + 1).to_string(), j.to_string(), name.clone(), c.to_string()])
        .collect();
    let cfg = json!({
        "input": args.input.input, "response": args.input.response, "keep": args.keep,
        "force": args.force, "write": args.write,
    });
    emit_report(&args.out, "screen", 0, cfg, &result, started, &["rank", "column", "name", "abs_corr"], rows)
}

#[derive(Debug, Serialize)]
struct OracleResult {
    p: usize,
    models: usize,
    sigma_sq: f64,
    priors: PriorSpec,
    marginals: Vec<(String, f64)>,
    map_model: Vec<String>,
    top_models: Vec<(Vec<String>, f64)>,
    gibbs: Option<Vec<f64>>,
    max_abs_gap: Option<f64>,
}

/// OLS residual variance when `n > p + 1`, else the response variance.
fn plug_in_sigma_sq(data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n > p + 1 {
        let r = refit_ols(data, &ModelIndicator::full(p))?;
        Ok(r.mspe(data) * n as f64 / (n - p - 1) as f64)
    } else {
        sample_variance(data.y().as_slice())
    }
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let started = Instant::now();
    let data = load_csv(&args.input.input, &args.input.response)?.standardize();
    let cap = args.max_p.min(ENUMERATION_CAP);
    if data.p() > cap {
        return Err(Error::Capability(format!("oracle limited to p <= {cap}, data has p = {}", data.p())));
    }
    let (priors, k, _) = priors_for(&data, args.chain.k, args.chain.alpha, None)?;
    let sigma_sq = match parse_sigma_mode(&args.chain.sigma2)? {
        SigmaMode::Fixed(v) => v / y_scale(&data).powi(2),
        SigmaMode::InverseGamma => plug_in_sigma_sq(&data)?,
    };
    let post = enumerate_posterior(&data, &priors, sigma_sq)?;
    let names = |m: &ModelIndicator| m.ones().map(|j| data.name(j)).collect::<Vec<_>>();
    let gibbs = if args.compare {
        let config = ChainConfig {
            burn_in: args.chain.burnin,
            iterations: args.chain.iters,
            seed: args.chain.seed,
            sigma_mode: SigmaMode::Fixed(sigma_sq),
            ..ChainConfig::default()
        };
        Some(crate::gibbs::run_chain(&data, &priors, &config)?.marginal_probs)
    } else {
        None
    };
    let max_abs_gap = gibbs.as_ref().map(|g| {
        g.iter()
            .zip(post.marginals())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let result = OracleResult {
        p: data.p(),
        models: post.len(),
        sigma_sq: sigma_sq * y_scale(&data).powi(2),
        priors,
        marginals: (0..data.p()).map(|j| (data.name(j), post.marginals()[j])).collect(),
        map_model: names(&post.map_model()),
        top_models: post.top(args.top).iter().map(|(m, pr)| (names(m), *pr)).collect(),
        gibbs,
        max_abs_gap,
    };
    let rows = (0..data.p())
        .map(|j| {
            let mut r = vec![data.name(j), post.marginals()[j].to_string()];
            if let Some(g) = &result.gibbs {
                r.push(g[j].to_string());
            }
            r
        })
        .collect();
    let header: &[&str] = if args.compare { &["name", "exact", "gibbs"] } else { &["name", "exact"] };
    let cfg = json!({
        "input": args.input.input, "response": args.input.response, "K": k, "alpha": args.chain.alpha,
        "sigma2": args.chain.sigma2, "max_p": args.max_p, "compare": args.compare,
        "burnin": args.chain.burnin, "iters": args.chain.iters,
    });
    emit_report(&args.out, "oracle", args.chain.seed, cfg, &result, started, header, rows)
}

/// Table columns, one row per rule (median first, then BIC).
pub const BENCH_COLUMNS: [&str; 6] = ["pp0", "pp1", "exact", "superset", "fdr", "mspe"];

pub fn bench_spec(args: &BenchArgs) -> Result<CaseSpec> {
    let mut spec = match (args.n, args.p) {
        (None, None) => CaseSpec::standard(args.case)?,
        (n, p) => {
            let std = CaseSpec::standard(args.case)?;
            CaseSpec::new(args.case, n.unwrap_or(std.n), p.unwrap_or(std.p))?
        }
    };
    if let Some(r) = args.reps {
        spec = spec.with_replications(r);
    }
    if let Some(rho) = args.rho {
        spec = spec.with_rho(rho)?;
    }
    spec = spec.with_seed(args.chain.seed);
    spec.validate()?;
    Ok(spec)
}

fn bench(args: &BenchArgs) -> Result<()> {
    let started = Instant::now();
    let spec = bench_spec(args)?;
    let sigma_mode = parse_sigma_mode(&args.chain.sigma2)?;
    if matches!(sigma_mode, SigmaMode::Fixed(_)) {
        log::warn!("fixed sigma^2 in bench is taken on the standardized response scale");
    }
    let config = BenchConfig {
        chain: ChainConfig {
            burn_in: args.chain.burnin,
            iterations: args.chain.iters,
            seed: args.chain.seed,
            sigma_mode,
            ..ChainConfig::default()
        },
        k: args.chain.k,
        alpha: args.chain.alpha,
        threshold: args.chain.threshold,
        sweep_size: args.sweep_size,
    };
    let report: BenchReport = run_benchmark(&spec, &config)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            [m.pp0, m.pp1, m.exact_match, m.superset, m.fdr, m.mspe]
                .iter()
                .map(|v| v.to_string())
                .collect()
        })
        .collect();
    let cfg = json!({ "case": spec, "bench": config });
    emit_report(&args.out, "bench", args.chain.seed, cfg, &report, started, &BENCH_COLUMNS, rows)
}

fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let started = Instant::now();
    let (data, truth) = match args.case {
        Some(id) => {
            let std = CaseSpec::standard(id)?;
            let spec = CaseSpec::new(id, args.n.unwrap_or(std.n), args.p.unwrap_or(std.p))?.with_seed(args.seed);
            let rep = gen_case(&spec, args.rep)?;
            let data = rep.train.standardize();
            let st = data.standardization().expect("standardized");
            let beta = (0..data.p()).map(|j| rep.truth.beta[j] * st.x_scales[j] / st.y_scale).collect();
            let truth = Truth::new(rep.truth.t.clone(), beta, rep.truth.sigma_sq / (st.y_scale * st.y_scale))?;
            (data, Some(truth))
        }
        None => {
            let path = args.input.as_ref().expect("clap requires input without case");
            (load_csv(path, &args.response)?.standardize(), None)
        }
    };
    let (priors, k, _) = priors_for(&data, args.k, args.alpha, None)?;
    let params = DiagnosticParams {
        delta: args.delta,
        nu: args.nu,
        kappa: args.kappa,
        k,
        budget: args.budget,
    };
    let report = condition_diagnostics(&data, &priors, params, truth.as_ref())?;
    let opt = |v: Option<f64>| v.map_or("not computed".to_string(), |x| x.to_string());
    let flag = |v: Option<bool>| v.map_or("not computed".to_string(), |x| x.to_string());
    let rows = vec![
        vec!["log_p_over_n".into(), report.log_p_over_n.to_string()],
        vec!["lambda_max".into(), report.lambda_max.to_string()],
        vec!["lambda_min_nu".into(), opt(report.lambda_min_nu)],
        vec!["m_n".into(), report.m_n.to_string()],
        vec!["delta_n".into(), opt(report.delta_n)],
        vec!["gamma_n".into(), opt(report.gamma_n)],
        vec!["b0".into(), opt(report.b0)],
        vec!["flag_dimension".into(), report.flags.dimension.to_string()],
        vec!["flag_prior".into(), report.flags.prior.to_string()],
        vec!["flag_identifiability".into(), flag(report.flags.identifiability)],
        vec!["flag_design".into(), flag(report.flags.design)],
    ];
    let cfg = json!({
        "input": args.input, "response": args.response, "case": args.case, "n": args.n, "p": args.p,
        "rep": args.rep, "params": params, "alpha": args.alpha, "priors": priors,
    });
    emit_report(&args.out, "diagnose", args.seed, cfg, &report, started, &["quantity", "value"], rows)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Screen(a) => screen(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sigma_mode_parsing() {
        assert_eq!(parse_sigma_mode("ig").unwrap(), SigmaMode::InverseGamma);
        assert_eq!(parse_sigma_mode("fixed:2.5").unwrap(), SigmaMode::Fixed(2.5));
        assert!(parse_sigma_mode("fixed:-1").is_err());
        assert!(parse_sigma_mode("gamma").is_err());
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_tmp("y,x1\n1.0,2\n2.5,3\n0.1,7\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!((d.n(), d.p()), (3, 1));
        assert_eq!(d.name(0), "x1");
        let by_index = load_csv(f.path(), "1").unwrap();
        assert_eq!(by_index.name(0), "y");
    }

    #[test]
    fn load_flags_constant_column() {
        let f = write_tmp("y,a,b\n1,2,5\n2,3,5\n0,1,5\n4,0,5\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.degenerate_columns(), vec![1]);
        assert_eq!(d.p(), 2);
    }

    #[test]
    fn load_reports_location_of_bad_cells() {
        let f = write_tmp("y,a,b\n1,2,5\n2,abc,5\n");
        match load_csv(f.path(), "y") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "a")),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("y,a\n1,2\n2,\n");
        match load_csv(f.path(), "y") {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("missing"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_csv(f.path(), "z"), Err(Error::Parameter(_))));
    }
}

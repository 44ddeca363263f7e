//! The `zib` command line.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 the fit did not converge.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::inference::{infer, InferenceReport};
use crate::io::{
    read_csv, read_json, standardized_table, write_csv, write_json, DatasetSchema, FitReport,
    McReportDocument, MisspecificationDocument,
};
use crate::likelihood::{condition_diagnostics, evaluate};
use crate::link::LinkKind;
use crate::model::{LinkPair, ParameterVector};
use crate::simulate::{generate, mc_study, misspecification_study, McOptions, SimDesign};
use crate::solver::{fit_binomial_only, fit_multistart, FitConfig, FitResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "ZIB_SEED";

#[derive(Debug, Parser)]
#[command(name = "zib", version, about = "Zero-inflated binomial regression by maximum likelihood")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV dataset.
    Fit(FitArgs),
    /// Generate a CSV dataset from a simulation design.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study of the estimator.
    #[command(name = "mc-study")]
    McStudy(McStudyArgs),
    /// Evaluate likelihood diagnostics at a given parameter.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file, or inline JSON starting with `{`.
    #[arg(long)]
    pub schema: String,
    #[arg(long, default_value = "probit")]
    pub link_zero: String,
    #[arg(long, default_value = "probit")]
    pub link_count: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Additional jittered starts beyond the deterministic one.
    #[arg(long, default_value_t = 0)]
    pub starts: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit the plain binomial model without zero inflation.
    #[arg(long)]
    pub binomial_only: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the matching dataset schema.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McStudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standardized-estimate table; defaults to `<out>.standardized.tsv`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Also fit with these links and compare maximized log-likelihoods.
    #[arg(long)]
    pub alt_link_zero: Option<String>,
    #[arg(long)]
    pub alt_link_count: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `{"beta": [...], "mu": [...]}` or a flat array, inline or as a file.
    #[arg(long)]
    pub theta: String,
}

/// Monte Carlo configuration: a design plus optional study settings.
#[derive(Debug, Deserialize)]
struct McConfig {
    #[serde(flatten)]
    design: SimDesign,
    #[serde(default)]
    replications: Option<usize>,
    #[serde(default)]
    fit_links: Option<LinkPair>,
    #[serde(default)]
    level: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ThetaArg {
    Split(ParameterVector),
    Flat(Vec<f64>),
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a).map(|_| EXIT_OK),
        Command::McStudy(a) => cmd_mc_study(a).map(|_| EXIT_OK),
        Command::Diagnose(a) => cmd_diagnose(a).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            EXIT_INPUT
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn parse_link(s: &str) -> anyhow::Result<LinkKind> {
    s.parse::<LinkKind>().map_err(|_| anyhow!("unsupported link {s:?} (expected probit or logit)"))
}

fn links_of(a: &DataArgs) -> anyhow::Result<LinkPair> {
    Ok(LinkPair::new(parse_link(&a.link_zero)?, parse_link(&a.link_count)?))
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an integer"))?)),
        Err(_) => Ok(None),
    }
}

/// Flag, then config, then environment.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> anyhow::Result<Option<u64>> {
    Ok(match (flag, config) {
        (Some(s), _) | (None, Some(s)) => Some(s),
        (None, None) => env_seed()?,
    })
}

fn load_data(a: &DataArgs) -> anyhow::Result<crate::model::Dataset> {
    let schema = DatasetSchema::from_arg(&a.schema).context("reading schema")?;
    let load = read_csv(&a.data, &schema)?;
    if !load.dropped_rows.is_empty() {
        eprintln!("skipped {} empty row(s): {:?}", load.dropped_rows.len(), load.dropped_rows);
    }
    Ok(load.dataset)
}

fn term_labels(fit: &FitResult, data: &crate::model::Dataset) -> Vec<(&'static str, String)> {
    let zero = if fit.theta_hat.beta.is_empty() { &[][..] } else { data.zero_names() };
    zero.iter()
        .map(|n| ("zero", n.clone()))
        .chain(data.count_names().iter().map(|n| ("count", n.clone())))
        .collect()
}

/// Fixed-width coefficient table.
pub fn coefficient_table(labels: &[(&str, String)], estimates: &[f64], inf: Option<&InferenceReport>) -> String {
    let mut s = format!(
        "{:<6} {:<16} {:>14} {:>12} {:>9} {:>11} {:>14} {:>14}\n",
        "part", "term", "estimate", "std.err", "z", "p", "ci.lower", "ci.upper"
    );
    for (j, (part, term)) in labels.iter().enumerate() {
        s.push_str(&format!("{part:<6} {term:<16} {:>14.6}", estimates[j]));
        match inf {
            Some(r) => s.push_str(&format!(
                " {:>12.6} {:>9.3} {:>11.4e} {:>14.6} {:>14.6}\n",
                r.std_errors[j], r.z_values[j], r.p_values[j], r.ci_lower[j], r.ci_upper[j]
            )),
            None => s.push_str(&format!(" {:>12} {:>9} {:>11} {:>14} {:>14}\n", "-", "-", "-", "-", "-")),
        }
    }
    s
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<i32> {
    let links = links_of(&a.data)?;
    if !(a.level > 0.0 && a.level < 1.0) {
        bail!("--level must lie in (0, 1)");
    }
    let data = load_data(&a.data)?;
    let config = FitConfig::with_links(links);
    let seed = if a.starts > 0 { resolve_seed(a.seed, None)?.or(Some(0)) } else { None };
    let result = if a.binomial_only {
        fit_binomial_only(&data, &config)?
    } else if a.starts > 0 {
        let ms = fit_multistart(&data, &config, a.starts, seed.unwrap_or(0))?;
        eprintln!("multi-start log-likelihoods: {:?}", ms.logliks);
        ms.best
    } else {
        crate::solver::fit(&data, &config)?
    };
    for w in &result.warnings {
        eprintln!("warning: {}", serde_json::to_string(w)?);
    }
    let inference = if result.converged { Some(infer(&result, a.level)?) } else { None };

    println!(
        "links: zero={} count={}  n={}  loglik={:.6}  iterations={}  converged={}",
        links.zero,
        links.count,
        data.len(),
        result.loglik,
        result.iterations,
        result.converged
    );
    print!(
        "{}",
        coefficient_table(&term_labels(&result, &data), &result.theta_hat.to_stacked(), inference.as_ref())
    );
    if let Some(out) = &a.out {
        write_json(&FitReport::new(&result, inference.as_ref(), &data, a.level, seed), out)?;
    }
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("fit did not converge (score norm {:.3e})", result.score_norm);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut design: SimDesign = read_json(&a.config).context("reading design")?;
    design.seed = resolve_seed(a.seed, design.seed)?;
    let data = generate(&design)?;
    let schema = write_csv(&data, &a.out)?;
    if let Some(path) = &a.schema_out {
        write_json(&schema, path)?;
    }
    eprintln!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn default_table_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".standardized.tsv");
    PathBuf::from(s)
}

fn cmd_mc_study(a: McStudyArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg: McConfig = serde_json::from_str(&text).context("parsing study configuration")?;
    let mut design = cfg.design;
    design.seed = resolve_seed(a.seed, design.seed)?;
    let replications = a.reps.or(cfg.replications).ok_or_else(|| anyhow!("--reps is required"))?;
    if replications < 2 {
        bail!("a Monte Carlo study needs at least 2 replications");
    }
    let alt = match (&a.alt_link_zero, &a.alt_link_count) {
        (None, None) => None,
        (z, c) => Some(LinkPair::new(
            parse_link(z.as_deref().unwrap_or("logit"))?,
            parse_link(c.as_deref().unwrap_or("logit"))?,
        )),
    };
    let table_path = a.table.clone().unwrap_or_else(|| default_table_path(&a.out));

    let report = if let Some(alt) = alt {
        let mis = misspecification_study(&design, replications, alt, a.threads)?;
        eprintln!(
            "mean loglik difference (correct - alternative): {:.6} over {} replications",
            mis.mean_difference,
            mis.differences.len()
        );
        let table = standardized_table(&mis.correct);
        write_json(&MisspecificationDocument::new(mis.clone()), &a.out)?;
        std::fs::write(&table_path, table).with_context(|| format!("writing {}", table_path.display()))?;
        mis.correct
    } else {
        let opts = McOptions {
            replications,
            fit_links: cfg.fit_links.unwrap_or(design.links),
            level: cfg.level.unwrap_or(0.95),
            threads: a.threads,
        };
        let report = mc_study(&design, &opts)?;
        write_json(&McReportDocument::new(report.clone()), &a.out)?;
        std::fs::write(&table_path, standardized_table(&report))
            .with_context(|| format!("writing {}", table_path.display()))?;
        report
    };

    println!("{:<6} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10}", "coef", "bias", "mc.sd", "mean.se", "coverage", "ks.D", "ks.p");
    for j in 0..report.theta0.len() {
        println!(
            "{:<6} {:>12.6} {:>12.6} {:>12.6} {:>12.4} {:>10.4} {:>10.4}",
            j, report.bias[j], report.mc_sd[j], report.mean_se[j], report.coverage[j], report.ks_statistics[j], report.ks_p_values[j]
        );
    }
    if report.flagged {
        eprintln!("warning: {} of {} replications excluded", report.excluded, report.replications);
    }
    Ok(())
}

fn parse_theta(arg: &str, p: usize) -> anyhow::Result<ParameterVector> {
    let text = if arg.trim_start().starts_with(['{', '[']) {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    Ok(match serde_json::from_str::<ThetaArg>(&text).context("parsing --theta")? {
        ThetaArg::Split(t) => t,
        ThetaArg::Flat(v) => {
            if v.len() < p {
                bail!("--theta has {} entries, expected at least {p}", v.len());
            }
            ParameterVector::from_stacked(p, &v)
        }
    })
}

fn cmd_diagnose(a: DiagnoseArgs) -> anyhow::Result<()> {
    let links = links_of(&a.data)?;
    let data = load_data(&a.data)?;
    data.check_full_rank()?;
    let theta = parse_theta(&a.theta, data.p())?;
    let e = evaluate(&theta, &data, links)?;
    let d = condition_diagnostics(&e.information)?;
    println!("loglik            {}", e.loglik);
    println!("score_norm        {:e}", e.score.max_abs());
    println!("lambda_min        {}", d.lambda_min);
    println!("lambda_max        {}", d.lambda_max);
    println!("ratio             {}", d.ratio);
    println!("positive_definite {}", d.positive_definite);
    if !d.positive_definite {
        eprintln!("warning: information is not positive definite at the supplied parameter");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_are_input_errors() {
        assert_eq!(run(["zib", "fit", "--bogus"]), EXIT_INPUT);
        assert_eq!(run(["zib", "frobnicate"]), EXIT_INPUT);
    }

    #[test]
    fn theta_forms() {
        let t = parse_theta(r#"{"beta":[1,2],"mu":[3]}"#, 2).unwrap();
        assert_eq!(t, ParameterVector::new(vec![1.0, 2.0], vec![3.0]));
        let t = parse_theta("[1, 2, 3]", 2).unwrap();
        assert_eq!(t, ParameterVector::new(vec![1.0, 2.0], vec![3.0]));
    }

    #[test]
    fn table_is_fixed_width() {
        let labels = vec![("zero", "(intercept)".to_string()), ("count", "w1".to_string())];
        let t = coefficient_table(&labels, &[-1.0, 0.25], None);
        let widths: Vec<usize> = t.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{t}");
    }
}

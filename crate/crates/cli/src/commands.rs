//! Subcommand implementations. Each writes its primary output either into
//! `--out <dir>` or to the supplied writer (stdout in the binary).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pairdesign::designs::{bcrd, sample_allocation, sorted_block_partition, sorted_pair_matching};
use pairdesign::estimators::{covariate_fit, LogisticModelSpec};
use pairdesign::matching::{mahalanobis_distance_matrix, matchset_to_partition, min_weight_perfect_matching};
use pairdesign::mse::{
    bcrd_beats_pm, bcrd_expected_r_squared, exact_mse, match_r_squared, mse_gap_bcrd_pm, tau, MseBreakdown,
};
use pairdesign::rng::replicate_rng;
use pairdesign::simulation::{parametric_bootstrap, run_monte_carlo, DesignSpec, SimRow};
use pairdesign::verify::{run_suite, CheckName, Fault, SuiteOptions};
use pairdesign::{BlockPartition, MatchSet, ResponseModel, Subjects};
use serde::Serialize;
use serde_json::json;

use crate::config::SimFile;
use crate::io;

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "pairdesign", version, about = "Pair-matching, block and complete-randomization trial designs")]
pub struct Cli {
    /// Master seed; every command is byte-deterministic given it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output files; created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a design from covariates and sample an allocation.
    Design(DesignArgs),
    /// Exact MSE of the difference in means for given response probabilities.
    Evaluate(EvaluateArgs),
    /// Monte Carlo design comparison driven by a TOML config.
    Simulate(SimulateArgs),
    /// Run the brute-force oracle checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pm,
    Block,
    Bcrd,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// CSV with header `id,x1,…,xd`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Number of blocks for `--method block`.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Covariate column (header name or 1-based index) to sort on. Forces
    /// sorted-neighbour pairing for `pm`; defaults to the first column for `block`.
    #[arg(long)]
    pub sort_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with header `id,p_t,p_c`.
    #[arg(long)]
    pub input: PathBuf,
    /// Designs to evaluate: bcrd, pm, block:<B>, random_pm. Blocks and pairs
    /// are formed in sorted order of v = p_t + p_c.
    #[arg(long = "design", value_delimiter = ',', default_values_t = [String::from("bcrd"), String::from("pm")])]
    pub designs: Vec<String>,
    /// A `pair,id_1,id_2,distance` file to evaluate as a pair-matched design.
    #[arg(long)]
    pub matches: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML simulation config.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only these checks (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Subject count for the size-parameterized checks.
    #[arg(long = "n")]
    pub n_subjects: Option<usize>,
    /// Replicates for the Monte Carlo random-pairs check; 0 skips it.
    #[arg(long, default_value_t = 100_000)]
    pub mc_replicates: usize,
    #[arg(long, hide = true, value_parser = ["wrong-sigma"])]
    pub inject_fault: Option<String>,
}

/// Run a parsed command line, writing console output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match &cli.command {
        Command::Design(a) => design(cli, a, stdout).map(|()| ExitCode::SUCCESS),
        Command::Evaluate(a) => evaluate(cli, a, stdout).map(|()| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate(cli, a, stdout).map(|()| ExitCode::SUCCESS),
        Command::Verify(a) => verify(cli, a, stdout),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Write to `<out>/<name>` when `--out` is set, else to `stdout`.
fn emit(cli: &Cli, name: &str, stdout: &mut dyn Write, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            let mut f = create(dir, name)?;
            body(&mut f)?;
            f.flush()?;
            writeln!(stdout, "wrote {}", dir.join(name).display())?;
        }
        None => body(stdout)?,
    }
    Ok(())
}

fn json_line(w: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// design

fn column_index(key: &str, names: &[String]) -> Result<usize> {
    if let Some(j) = names.iter().position(|n| n == key) {
        return Ok(j);
    }
    match key.parse::<usize>() {
        Ok(j) if (1..=names.len()).contains(&j) => Ok(j - 1),
        _ => bail!("--sort-key {key:?} is neither a covariate column nor an index in 1..={}", names.len()),
    }
}

#[derive(Serialize)]
struct PairRecord<'a> {
    pair: usize,
    id_1: &'a str,
    id_2: &'a str,
    distance: f64,
}

#[derive(Serialize)]
struct ArmRecord<'a> {
    id: &'a str,
    arm: &'static str,
}

fn design(cli: &Cli, a: &DesignArgs, stdout: &mut dyn Write) -> Result<()> {
    let (subjects, names) = io::read_subjects_file(&a.input)?;
    let n = subjects.n_subjects();
    let key = a.sort_key.as_deref().map(|k| column_index(k, &names)).transpose()?;
    if a.blocks.is_some() && a.method != Method::Block {
        bail!("--blocks only applies to --method block");
    }

    let mut matches: Option<(MatchSet, Vec<f64>)> = None;
    let partition = match a.method {
        Method::Bcrd => bcrd(n)?,
        Method::Block => {
            let b = a.blocks.context("--method block needs --blocks <B>")?;
            if subjects.dim() == 0 {
                bail!("--method block needs at least one covariate column");
            }
            sorted_block_partition(&subjects.column(key.unwrap_or(0)), b)?
        }
        Method::Pm => {
            let (m, dist) = pair_subjects(&subjects, key)?;
            let p = matchset_to_partition(&m)?;
            matches = Some((m, dist));
            p
        }
    };
    let w = sample_allocation(&partition, &mut replicate_rng(cli.seed.unwrap_or(DEFAULT_SEED), "design", 0));
    let ids = subjects.ids();

    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            let mut written = vec!["allocation.csv"];
            io::write_allocation(create(&dir, "allocation.csv")?, ids, &w)?;
            if let Some((m, dist)) = &matches {
                io::write_matches(create(&dir, "matches.csv")?, ids, m, dist)?;
                written.push("matches.csv");
            }
            if a.method == Method::Block {
                io::write_blocks(create(&dir, "blocks.csv")?, ids, &partition)?;
                written.push("blocks.csv");
            }
            for name in written {
                writeln!(stdout, "wrote {}", dir.join(name).display())?;
            }
        }
        Format::Json => {
            let allocation: Vec<ArmRecord> = ids
                .iter()
                .zip(w.signs())
                .map(|(id, &s)| ArmRecord { id, arm: if s > 0 { "T" } else { "C" } })
                .collect();
            let blocks: Vec<Vec<&str>> =
                partition.blocks().iter().map(|b| b.iter().map(|&i| ids[i].as_str()).collect()).collect();
            let pairs: Option<Vec<PairRecord>> = matches.as_ref().map(|(m, dist)| {
                m.pairs()
                    .iter()
                    .zip(dist)
                    .enumerate()
                    .map(|(k, (&(i, j), &distance))| PairRecord { pair: k + 1, id_1: &ids[i], id_2: &ids[j], distance })
                    .collect()
            });
            let report = json!({
                "method": format!("{:?}", a.method).to_ascii_lowercase(),
                "n_subjects": n,
                "blocks": blocks,
                "matches": pairs,
                "allocation": allocation,
            });
            emit(cli, "design.json", stdout, |w| json_line(w, &report))?;
        }
    }
    Ok(())
}

/// Sorted neighbours on one column (`key`, or the only covariate), otherwise
/// Mahalanobis distance with an exact minimum-weight matching.
fn pair_subjects(subjects: &Subjects, key: Option<usize>) -> Result<(MatchSet, Vec<f64>)> {
    let column = match (key, subjects.dim()) {
        (_, 0) => bail!("--method pm needs at least one covariate column"),
        (Some(j), _) => Some(j),
        (None, 1) => Some(0),
        (None, _) => None,
    };
    Ok(match column {
        Some(j) => {
            let x = subjects.column(j);
            let m = sorted_pair_matching(&x)?;
            let dist = m.pairs().iter().map(|&(i, k)| (x[i] - x[k]).abs()).collect();
            (m, dist)
        }
        None => {
            let d = mahalanobis_distance_matrix(subjects)?;
            let m = min_weight_perfect_matching(&d)?;
            let dist = m.pairs().iter().map(|&(i, k)| d[(i, k)]).collect();
            (m, dist)
        }
    })
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Serialize)]
struct DesignMse {
    design: String,
    quadratic_form: f64,
    bernoulli_term: f64,
    total: f64,
    design_fraction: f64,
}

impl DesignMse {
    fn new(design: String, b: MseBreakdown) -> Self {
        Self {
            design,
            quadratic_form: b.quadratic_form,
            bernoulli_term: b.bernoulli_term,
            total: b.total,
            design_fraction: b.design_fraction(),
        }
    }
}

#[derive(Debug, Serialize)]
struct MatchReport {
    source: String,
    /// `MSE(BCRD) - MSE(PM)`; negative when complete randomization wins.
    gap_bcrd_minus_pm: f64,
    /// `None` when `v` is constant.
    r_squared: Option<f64>,
    bcrd_expected_r_squared: f64,
    bcrd_beats_pm: bool,
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    n_subjects: usize,
    tau: f64,
    designs: Vec<DesignMse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matches: Option<MatchReport>,
}

fn evaluation_partition(spec: DesignSpec, v: &[f64]) -> Result<BlockPartition> {
    Ok(match spec {
        // averaged over matchings, random pairing has the BCRD covariance
        DesignSpec::Bcrd | DesignSpec::RandomPairs => bcrd(v.len())?,
        DesignSpec::Blocked(b) => sorted_block_partition(v, b)?,
        DesignSpec::PairMatched => matchset_to_partition(&sorted_pair_matching(v)?)?,
    })
}

fn evaluate(cli: &Cli, a: &EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (ids, model): (Vec<String>, ResponseModel) =
        io::read_probabilities(file).with_context(|| format!("in {}", a.input.display()))?;
    let v = model.v();
    let mut designs = Vec::new();
    for label in &a.designs {
        let spec: DesignSpec = label.parse()?;
        designs.push(DesignMse::new(spec.to_string(), exact_mse(&model, &evaluation_partition(spec, &v)?)?));
    }
    let matches = match &a.matches {
        None => None,
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let (m, _) = io::read_matches(f, &ids).with_context(|| format!("in {}", path.display()))?;
            designs.push(DesignMse::new("matches".into(), exact_mse(&model, &matchset_to_partition(&m)?)?));
            Some(MatchReport {
                source: path.display().to_string(),
                gap_bcrd_minus_pm: mse_gap_bcrd_pm(&v, &m)?,
                r_squared: match_r_squared(&v, &m).ok().filter(|r| r.is_finite()),
                bcrd_expected_r_squared: bcrd_expected_r_squared(m.len()),
                bcrd_beats_pm: bcrd_beats_pm(&v, &m)?,
            })
        }
    };
    let report = EvaluateReport { n_subjects: ids.len(), tau: tau(&model), designs, matches };
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit(cli, "evaluation.json", stdout, |w| json_line(w, &report)),
        Format::Csv => emit(cli, "evaluation.csv", stdout, |w| {
            let mut wr = csv::Writer::from_writer(w);
            wr.write_record(["design", "tau", "quadratic_form", "bernoulli_term", "total", "design_fraction"])?;
            for d in &report.designs {
                wr.write_record([
                    d.design.clone(),
                    report.tau.to_string(),
                    d.quadratic_form.to_string(),
                    d.bernoulli_term.to_string(),
                    d.total.to_string(),
                    d.design_fraction.to_string(),
                ])?;
            }
            wr.flush()?;
            Ok(())
        }),
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Serialize)]
struct SimulateReport {
    seed: u64,
    model: LogisticModelSpec,
    rows: Vec<SimRow>,
}

/// Every run of the config, in config order.
pub fn simulate_rows(file: &SimFile, seed: u64) -> Result<(LogisticModelSpec, Vec<SimRow>)> {
    let mut rows = Vec::new();
    match &file.data {
        None => {
            let (d, model) = file.synthetic_model()?;
            for config in file.sim_configs(d, &model, seed)? {
                rows.extend(run_monte_carlo(&config)?.rows);
            }
            Ok((model, rows))
        }
        Some(path) => {
            let (subjects, y) = io::read_outcome_data(path)?;
            let d = subjects.dim();
            if file.d.is_some_and(|cd| cd != d) {
                bail!("config says d = {} but {} has {d} covariates", file.d.unwrap_or(0), path.display());
            }
            let (beta0, beta) = match (file.beta0, file.beta.clone()) {
                (Some(b0), Some(b)) => (b0, b),
                (None, None) => {
                    let (b0, b, fit) = covariate_fit(&subjects, &y)?;
                    if !fit.converged || fit.separation {
                        bail!(
                            "the logistic fit to {} did not converge cleanly; give beta0 and beta explicitly",
                            path.display()
                        );
                    }
                    (b0, b)
                }
                _ => bail!("give both beta0 and beta, or neither to fit them from the data"),
            };
            if beta.len() != d {
                bail!("beta has {} entries but the data have {d} covariates", beta.len());
            }
            let model = LogisticModelSpec { beta0, beta, beta_t: file.beta_t, link: file.link()? };
            for config in file.sim_configs(d, &model, seed)? {
                rows.extend(parametric_bootstrap(&subjects, &model, &config)?.rows);
            }
            Ok((model, rows))
        }
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = SimFile::load(&a.config)?;
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let (model, rows) = simulate_rows(&file, seed)?;
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(cli, "results.csv", stdout, |w| write_rows(w, &rows)),
        Format::Json => emit(cli, "results.json", stdout, |w| json_line(w, &SimulateReport { seed, model, rows })),
    }
}

/// Long-format results; `f64` Display is shortest round-trip, so output is
/// byte-stable for equal values.
pub fn write_rows(w: &mut dyn Write, rows: &[SimRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["design", "estimator", "n", "d", "mean_estimate", "mse", "mc_se", "excluded"])?;
    for r in rows {
        wr.write_record([
            r.design.clone(),
            r.estimator.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.mean_estimate.to_string(),
            r.mse.to_string(),
            r.mc_se.to_string(),
            r.excluded.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

fn verify(cli: &Cli, a: &VerifyArgs, stdout: &mut dyn Write) -> Result<ExitCode> {
    let only = a.only.iter().map(|s| s.parse::<CheckName>()).collect::<pairdesign::Result<Vec<_>>>()?;
    let mut opts = SuiteOptions {
        only,
        n_subjects: a.n_subjects,
        fault: a.inject_fault.as_ref().map(|_| Fault::WrongSigma),
        monte_carlo_replicates: a.mc_replicates,
        ..SuiteOptions::default()
    };
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let report = run_suite(&opts)?;
    if cli.format == Some(Format::Json) {
        json_line(stdout, &report)?;
    } else {
        for c in &report.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(
                stdout,
                "{status}  {}  cases={} failures={} worst={:e} tol={:e}",
                c.check, c.cases, c.failures, c.worst, c.tolerance
            )?;
            for m in &c.measurements {
                writeln!(stdout, "      {} = {}", m.name, m.value)?;
            }
            if !c.passed {
                if let Some(wit) = &c.witness {
                    writeln!(stdout, "      witness: {}", serde_json::to_string(wit)?)?;
                }
            }
        }
        writeln!(stdout, "{}", if report.passed { "all checks passed" } else { "some checks FAILED" })?;
    }
    if let Some(dir) = &cli.out {
        let mut f = create(dir, "verify.json")?;
        json_line(&mut f, &report)?;
        f.flush()?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn sort_key_by_name_or_index() {
        let names: Vec<String> = ["age", "bmi"].map(String::from).to_vec();
        assert_eq!(column_index("bmi", &names).unwrap(), 1);
        assert_eq!(column_index("1", &names).unwrap(), 0);
        assert!(column_index("3", &names).is_err());
        assert!(column_index("weight", &names).is_err());
    }

    #[test]
    fn evaluation_pairs_follow_sorted_v() {
        let v = [0.9, 0.1, 0.8, 0.2];
        let p = evaluation_partition(DesignSpec::PairMatched, &v).unwrap();
        assert_eq!(p.membership()[1], p.membership()[3]);
        assert_eq!(p.membership()[0], p.membership()[2]);
    }
}

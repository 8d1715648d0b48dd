//! `zico`: theorem checks, proxy scoring, evolutionary search, benchmark
//! sweeps and ablations from the command line.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zico_core::data::{Batch, Dataset};
use zico_core::eval::bench::{digest, BenchContext};
use zico_core::eval::report::{
    ablation_csv, correlation_csv, correlation_table, parse_records_csv, records_csv, write_file,
};
use zico_core::eval::{
    ablation_counts, ablation_sizes, correlate, run_ablation_batches, run_ablation_batchsize,
    run_benchmark, BenchConfig, BenchData, TrainConfig,
};
use zico_core::proxies::{self, ProxyKind};
use zico_core::rng;
use zico_core::search::{brute_force_best, evolve, ProxyScorer, SearchConfig};
use zico_core::space::{CellSpace, Genome, SpaceConfig, SpaceKind, WidthSpace};
use zico_core::theory::suite;
use zico_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "zico",
    version,
    about = "Zero-shot architecture scoring and search",
    args_override_self = true
)]
struct Cli {
    /// Global seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for machine-readable artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// JSON object whose keys mirror the flags; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the bound-checking trial suites.
    Theorems(TheoremsArgs),
    /// Score one genome with one proxy.
    Score(ScoreArgs),
    /// Evolutionary search under a FLOPs budget.
    Search(SearchArgs),
    /// Score and train every candidate of a space; report rank correlations.
    Bench(BenchArgs),
    /// ZiCo correlation as a function of batch count or batch size.
    Ablate(AblateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Which {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "4")]
    Four,
    #[value(name = "lemma1")]
    Decay,
    All,
}

#[derive(Args, Debug)]
struct TheoremsArgs {
    #[arg(long, value_enum, default_value = "all")]
    which: Which,
    /// Trials per population (default 1000 for the linear model, 200 for
    /// the ReLU and Gram suites, 20 for the loss-decay suite).
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SpaceName {
    /// Full five-op cell space.
    Cell,
    /// Cell space over {none, conv3x3}: 64 genomes.
    CellTwoOp,
    /// Per-stage width space: 64 genomes.
    Width,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// `motifs` (synthetic) or `idx:<images>:<labels>`.
    #[arg(long, default_value = "motifs")]
    data: String,
    /// Batches N for gradient-statistics proxies.
    #[arg(long, default_value_t = 2)]
    batches: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Genome JSON file.
    #[arg(long)]
    genome: PathBuf,
    #[arg(long)]
    proxy: String,
    /// Space config JSON; defaults to the full space of the genome's kind.
    #[arg(long)]
    space_config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// FLOPs budget B in MACs per sample.
    #[arg(long, default_value_t = u64::MAX)]
    budget: u64,
    /// Search steps T.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Population cap E.
    #[arg(long, default_value_t = 8)]
    population: usize,
    #[arg(long, default_value = "zico")]
    proxy: String,
    #[arg(long, value_enum, default_value = "cell-two-op")]
    space: SpaceName,
    /// Space config JSON overriding `--space`.
    #[arg(long)]
    space_config: Option<PathBuf>,
    /// Also enumerate the space and report the exhaustive optimum.
    #[arg(long)]
    brute_force: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "width")]
    space: SpaceName,
    #[arg(long)]
    space_config: Option<PathBuf>,
    /// Score every genome (the default).
    #[arg(long, conflicts_with = "sample")]
    enumerate: bool,
    /// Score a seeded uniform sample of this many genomes.
    #[arg(long)]
    sample: Option<usize>,
    /// Training config JSON.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    batches: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Axis {
    Batches,
    Batchsize,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Benchmark records CSV to reuse instead of retraining.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    bench: BenchArgs,
}

/// Failure of an asserted check, reported with exit code 1.
struct Failed(String);

enum RunError {
    Core(Error),
    Failed(Failed),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Failed(Failed(msg))) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> std::result::Result<(), RunError> {
    if cli.jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} workers: {e}", cli.jobs)))?;
    pool.install(|| match &cli.command {
        Command::Theorems(a) => theorems(cli, a),
        Command::Score(a) => score(cli, a).map_err(RunError::from),
        Command::Search(a) => search(cli, a).map_err(RunError::from),
        Command::Bench(a) => bench(cli, a).map_err(RunError::from),
        Command::Ablate(a) => ablate(cli, a).map_err(RunError::from),
    })
}

fn out_file(cli: &Cli, name: &str) -> PathBuf {
    cli.out.join(name)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:+.3}"))
}

fn theorems(cli: &Cli, a: &TheoremsArgs) -> std::result::Result<(), RunError> {
    let w = a.which;
    let trials = |default: usize| a.trials.unwrap_or(default);
    if a.trials == Some(0) {
        return Err(Error::Validation("--trials must be positive".into()).into());
    }
    let mut failures = Vec::new();
    if matches!(w, Which::One | Which::All) {
        let r = suite::linear_suite(trials(1000), rng::child_seed(cli.seed, "linear"))?;
        write_file(&out_file(cli, "linear_bounds.csv"), &suite::linear_csv(&r))?;
        let holds =
            |v: &[zico_core::theory::LinearTrial]| v.iter().filter(|t| t.holds_mean()).count();
        println!("eq5 satisfied: {}/{}", holds(&r.trend), r.trend.len());
        println!(
            "eq5 satisfied with eta in (0, 2): {}/{}",
            holds(&r.wide),
            r.wide.len()
        );
        println!(
            "eq6 satisfied: {}/{}",
            r.spread_bound_holds(),
            r.inverse_m.len()
        );
        println!(
            "eq5 with (2 - eta) factor satisfied: {}/{} (informative)",
            r.printed_form_holds(),
            r.mean_bound_total()
        );
        println!("rho(sum mu^2, loss_after): {}", fmt_opt(r.rho_mu));
        println!(
            "rho(sum sigma^2, loss_after) at eta = 1/M: {}",
            fmt_opt(r.rho_sigma)
        );
        if r.mean_bound_holds() != r.mean_bound_total() {
            failures.push("mean-gradient bound violated".to_string());
        }
        if r.spread_bound_holds() != r.inverse_m.len() {
            failures.push("gradient-spread bound violated".to_string());
        }
    }
    if matches!(w, Which::Two | Which::Four | Which::All) {
        let r = suite::relu_suite(trials(200), rng::child_seed(cli.seed, "relu"))?;
        write_file(&out_file(cli, "relu_trials.csv"), &suite::relu_csv(&r))?;
        println!("rho(sigma_grad, train_loss): {}", fmt_opt(r.rho_train));
        println!("rho(sigma_grad, test_loss): {}", fmt_opt(r.rho_test));
        let g = suite::gram_suite(trials(200), rng::child_seed(cli.seed, "gram"))?;
        write_file(&out_file(cli, "gram_trials.csv"), &suite::gram_csv(&g))?;
        let s = &g.summary;
        println!(
            "gram bounds over {} trials (floor {:.2}): displacement {:.3}, lambda_min {:.3}, lambda_max {:.3}",
            s.trials, s.probability_floor, s.displacement, s.lambda_min, s.lambda_max
        );
        if !g.passed() {
            failures.push("gram bound fraction below the probability floor".to_string());
        }
    }
    if matches!(w, Which::Decay | Which::All) {
        let r = suite::decay_suite(trials(20), rng::child_seed(cli.seed, "decay"))?;
        write_file(&out_file(cli, "loss_decay.csv"), &suite::decay_csv(&r))?;
        println!(
            "per-step loss decay satisfied (informative): current lambda_min {:.3}, initial lambda_min with perturbation {:.3}",
            r.fraction_current(),
            r.fraction_initial()
        );
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(RunError::Failed(Failed(failures.join("; "))))
    }
}

fn space_from(name: SpaceName, file: Option<&PathBuf>) -> Result<SpaceConfig> {
    let s = match file {
        Some(p) => read_json(p)?,
        None => match name {
            SpaceName::Cell => SpaceConfig::Cell(CellSpace::default()),
            SpaceName::CellTwoOp => SpaceConfig::cell_two_op(),
            SpaceName::Width => SpaceConfig::Width(WidthSpace::default()),
        },
    };
    s.validate()?;
    Ok(s)
}

/// Training set for proxy batches.
fn load_data(spec: &str, seed: u64) -> Result<Dataset> {
    if spec == "motifs" {
        return Ok(BenchData::default().load(seed)?.0);
    }
    if let Some(rest) = spec.strip_prefix("idx:") {
        let (img, lab) = rest.split_once(':').ok_or_else(|| {
            Error::Usage(format!("--data {spec}: expected idx:<images>:<labels>"))
        })?;
        let ds = Dataset::load_idx(Path::new(img), Path::new(lab))?;
        return Ok(ds.standardize(&[])?.0);
    }
    Err(Error::Usage(format!(
        "unknown --data {spec:?}; use motifs or idx:<images>:<labels>"
    )))
}

fn proxy_batches(d: &DataArgs, proxy: ProxyKind, seed: u64) -> Result<(Dataset, Vec<Batch>)> {
    let is_zico = matches!(
        proxy,
        ProxyKind::Zico | ProxyKind::ZicoMeanOnly | ProxyKind::ZicoStdOnly
    );
    if is_zico && d.batches < 2 {
        return Err(Error::Validation(format!(
            "proxy {proxy} needs --batches >= 2, got {}",
            d.batches
        )));
    }
    if d.batches == 0 || d.batch_size == 0 {
        return Err(Error::Validation(
            "--batches and --batch-size must be positive".into(),
        ));
    }
    let ds = load_data(&d.data, seed)?;
    if d.batches * d.batch_size > ds.len() {
        return Err(Error::Validation(format!(
            "{} batches of {} exceed the {} available samples",
            d.batches,
            d.batch_size,
            ds.len()
        )));
    }
    let mut b = ds.batch_iter(d.batch_size, rng::child_seed(seed, "proxy-batches"))?;
    b.truncate(d.batches);
    Ok((ds, b))
}

#[derive(Serialize)]
struct ScoreLine {
    proxy: String,
    value: f64,
    genome_digest: String,
    seed: u64,
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let proxy: ProxyKind = a.proxy.parse()?;
    let genome = Genome::from_json(&read_text(&a.genome)?)?;
    let space = match &a.space_config {
        Some(p) => space_from(SpaceName::Width, Some(p))?,
        None => match genome.space {
            SpaceKind::Cell => SpaceConfig::Cell(CellSpace::default()),
            SpaceKind::Width => SpaceConfig::Width(WidthSpace::default()),
        },
    };
    space.check(&genome)?;
    let (ds, batches) = proxy_batches(&a.data, proxy, cli.seed)?;
    let classes = ds
        .classes()
        .ok_or_else(|| Error::Validation("scoring data needs class labels".into()))?;
    let net = space.instantiate(
        &genome,
        ds.sample_shape(),
        classes,
        rng::child_seed(cli.seed, &genome.key()),
    )?;
    let value = proxies::evaluate(proxy, &net, &batches)?;
    let line = ScoreLine {
        proxy: proxy.name().into(),
        value,
        genome_digest: rng::hex_digest(genome.to_json().as_bytes()),
        seed: cli.seed,
    };
    println!("{}", serde_json::to_string(&line).expect("serializable"));
    Ok(())
}

fn search(cli: &Cli, a: &SearchArgs) -> Result<()> {
    let proxy: ProxyKind = a.proxy.parse()?;
    let space = space_from(a.space, a.space_config.as_ref())?;
    let (ds, batches) = if proxy.needs_data() {
        proxy_batches(&a.data, proxy, cli.seed)?
    } else {
        (load_data(&a.data.data, cli.seed)?, Vec::new())
    };
    let classes = ds
        .classes()
        .ok_or_else(|| Error::Validation("search data needs class labels".into()))?;
    let mut scorer = ProxyScorer::new(
        space,
        proxy,
        batches,
        ds.sample_shape().to_vec(),
        classes,
        cli.seed,
    )?;
    let cfg = SearchConfig {
        steps: a.steps,
        budget: a.budget,
        population: a.population,
        seed: cli.seed,
    };
    let out = evolve(&cfg, &mut scorer)?;
    write_file(
        &out_file(cli, "best_genome.json"),
        &(out.best.to_json() + "\n"),
    )?;
    write_file(&out_file(cli, "search_log.jsonl"), &out.log.to_jsonl())?;
    println!("best genome: {}", out.best.key());
    println!("best {proxy}: {}", out.best_score);
    println!("best FLOPs (MACs): {}", out.best_flops);
    if a.brute_force {
        let (g, s) = brute_force_best(a.budget, &mut scorer)?;
        println!("exhaustive optimum: {} ({s})", g.key());
        println!("search matches exhaustive optimum: {}", g == out.best);
    }
    Ok(())
}

fn bench_config(cli: &Cli, a: &BenchArgs) -> Result<BenchConfig> {
    let train: TrainConfig = match &a.train {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    Ok(BenchConfig {
        space: space_from(a.space, a.space_config.as_ref())?,
        train,
        proxy_batches: a.batches,
        proxy_batch_size: a.batch_size,
        sample: a.sample,
        seed: cli.seed,
        ..BenchConfig::default()
    })
}

fn print_report(report: &zico_core::eval::CorrelationReport) {
    print!("{}", correlation_table(report));
    let tau = |p| report.get(p).and_then(|r| r.kendall_tau);
    if let (Some(z), Some(p)) = (tau(ProxyKind::Zico), tau(ProxyKind::Params)) {
        let sign = if z > p {
            "+"
        } else if z < p {
            "-"
        } else {
            "0"
        };
        println!("sign of tau(zico) - tau(params): {sign}");
    }
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let cfg = bench_config(cli, a)?;
    let (_, res) = run_benchmark(cfg)?;
    write_file(
        &out_file(cli, "bench_records.csv"),
        &records_csv(&res.records),
    )?;
    write_file(
        &out_file(cli, "bench_correlations.csv"),
        &correlation_csv(&res.report),
    )?;
    println!(
        "{} candidates, {} diverged",
        res.records.len(),
        res.diverged.iter().filter(|d| **d).count()
    );
    print_report(&res.report);
    Ok(())
}

fn ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let cfg = bench_config(cli, &a.bench)?;
    let (ctx, records) = match &a.records {
        Some(p) => {
            let records = parse_records_csv(&read_text(p)?)?;
            let ctx = BenchContext::new(cfg)?;
            (ctx, records)
        }
        None => {
            let (ctx, res) = run_benchmark(cfg)?;
            write_file(
                &out_file(cli, "bench_records.csv"),
                &records_csv(&res.records),
            )?;
            (ctx, res.records)
        }
    };
    let report = correlate(&records, &ctx.config.data.tag(), &digest(&ctx.config))?;
    print_report(&report);
    let (name, rows) = match a.axis {
        Axis::Batches => (
            "batches",
            run_ablation_batches(&ctx, &records, &ablation_counts())?,
        ),
        Axis::Batchsize => (
            "batch_size",
            run_ablation_batchsize(&ctx, &records, &ablation_sizes())?,
        ),
    };
    write_file(
        &out_file(cli, &format!("ablation_{name}.csv")),
        &ablation_csv(name, &rows),
    )?;
    println!("{:<10} {:>8} {:>8}", name, "KT", "SPR");
    for r in &rows {
        let mark = if r.is_default { " (default)" } else { "" };
        println!(
            "{:<10} {:>8} {:>8}{mark}",
            r.value,
            fmt_opt(r.kendall_tau),
            fmt_opt(r.spearman_rho)
        );
    }
    Ok(())
}

mod laws;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use urnlimits::limitproc::{
    brownian_increments, euler_maruyama, multicolor_det_limit, polya_det_limit, qpolya_det_limit, DetRegime,
    SdeFamily, SdeSpec, TimeGrid,
};
use urnlimits::qcalc::identities::identity_sweep;
use urnlimits::rng::seeded_rng;
use urnlimits::stats::{run_verify, ExperimentConfig, TheoremId};
use urnlimits::urn::simulate_path_seeded;
use urnlimits::{Count, QParam, UrnConfig};

use laws::{law_name, law_table, Law, LawArgs};
use table::{emit, num, Format, Table};

const THRESHOLD_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const NUMERIC_GUARD: u8 = 3;

/// Pólya and q-Pólya urns: exact laws, simulation, limit processes and
/// convergence experiments.
#[derive(Debug, Parser)]
#[command(name = "urnlimits", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the q-calculus identities and report the largest residual of each
    Identities(IdentitiesArgs),
    /// Tabulate a probability law
    Pmf(Box<PmfArgs>),
    /// Simulate one urn path
    Simulate(SimulateArgs),
    /// Evaluate the deterministic (fluid) limit on a time grid
    Limit(LimitArgs),
    /// Couple Euler-Maruyama with the closed-form solution of a fluctuation SDE
    Sde(SdeArgs),
    /// Run a convergence experiment from a JSON config and check its thresholds
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IdentitiesArgs {
    /// Random points per identity
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct PmfArgs {
    #[arg(value_enum)]
    law: Law,
    #[command(flatten)]
    params: LawArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Initial count of every colour, comma separated; the first may be `inf` in a two-colour urn
    #[arg(long, value_delimiter = ',', required = true)]
    colours: Vec<Count>,
    #[arg(long, default_value_t = 1)]
    k: u64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// Number of draws
    #[arg(long)]
    horizon: u64,
    /// Record the composition every this many draws
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Required with --out
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct LimitArgs {
    /// Initial white mass (two-colour urn)
    #[arg(long, conflicts_with = "colours")]
    a: Option<f64>,
    /// Initial black mass (two-colour urn)
    #[arg(long, conflicts_with = "colours")]
    b: Option<f64>,
    /// Initial masses of every colour, comma separated
    #[arg(long, value_delimiter = ',')]
    colours: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Deformation `q = c^{1/m}`; omitted for the classical urn
    #[arg(long)]
    c: Option<f64>,
    /// Many-colour urn with `q = 1 + o(1/m)`
    #[arg(long)]
    linear: bool,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Polya,
    Qpolya,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SdeArgs {
    #[arg(long, value_enum, default_value_t = Family::Polya)]
    family: Family,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Required for the qpolya family
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    theta1: f64,
    #[arg(long, default_value_t = 0.0)]
    theta2: f64,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Required with --out
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Experiment config (JSON)
    config: PathBuf,
    /// Replicate worker threads; 0 uses every core
    #[arg(long, env = "URNLIMITS_THREADS", default_value_t = 0)]
    threads: usize,
    /// Validate the config without simulating
    #[arg(long)]
    dry_run: bool,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's replicate count
    #[arg(long)]
    replicates: Option<usize>,
    /// Report JSON path (overrides the config)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Report CSV path (overrides the config)
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn help_footer() -> String {
    let laws: Vec<String> = Law::value_variants().iter().map(|&l| law_name(l)).collect();
    let mut text = format!("Laws (pmf): {}\n\nTheorem ids (verify):\n", laws.join(", "));
    for id in TheoremId::ALL {
        text.push_str(&format!("  {:<5} {}\n", id.id(), id.summary()));
    }
    text.push_str("\nExit codes: 0 success, 1 threshold failure, 2 invalid input, 3 numeric guard tripped");
    text
}

fn seed_for(seed: Option<u64>, out: Option<&Path>) -> Result<u64> {
    match (seed, out) {
        (Some(s), _) => Ok(s),
        (None, Some(_)) => bail!("--seed is required when writing to a file"),
        (None, None) => {
            eprintln!("no --seed given; using 0");
            Ok(0)
        }
    }
}

fn identities(args: &IdentitiesArgs) -> Result<u8> {
    let sweep = identity_sweep(args.points, args.seed)?;
    let mut t = Table::new(["identity", "max_residual", "tolerance", "points", "passed"]);
    for r in &sweep {
        t.push(vec![r.name.into(), num(r.max_residual), num(r.tolerance), r.points.into(), r.passed().into()]);
    }
    emit(&t.render(args.output.format)?, args.output.out.as_deref())?;
    Ok(if sweep.iter().all(|r| r.passed()) { 0 } else { THRESHOLD_FAILURE })
}

fn pmf(args: &PmfArgs) -> Result<u8> {
    let t = law_table(args.law, &args.params)?;
    emit(&t.render(args.output.format)?, args.output.out.as_deref())?;
    Ok(0)
}

fn simulate(args: &SimulateArgs) -> Result<u8> {
    let seed = seed_for(args.seed, args.output.out.as_deref())?;
    let config = UrnConfig::new(args.colours.clone(), args.k, QParam::new(args.q)?)?;
    let path = simulate_path_seeded(&config, args.horizon, args.stride, seed)?;
    let mut columns = vec!["n".to_string()];
    columns.extend((1..=config.colours()).map(|i| format!("count_{i}")));
    let mut t = Table::new(columns);
    for (n, counts) in path.times.iter().zip(&path.values) {
        let mut row = vec![(*n as u64).into()];
        row.extend(counts.iter().map(|c| match c {
            Count::Finite(v) => (*v).into(),
            Count::Infinite => "inf".into(),
        }));
        t.push(row);
    }
    emit(&t.render(args.output.format)?, args.output.out.as_deref())?;
    Ok(0)
}

fn limit(args: &LimitArgs) -> Result<u8> {
    let grid = TimeGrid::covering(args.horizon, args.dt)?;
    let t = match (&args.colours, args.a, args.b) {
        (Some(colours), _, _) => {
            let regime = if args.linear { DetRegime::Linear } else { DetRegime::Deformed };
            let c = match (regime, args.c) {
                (DetRegime::Linear, c) => c.unwrap_or(1.0),
                (DetRegime::Deformed, Some(c)) => c,
                (DetRegime::Deformed, None) => bail!("--c is required for the many-colour limit unless --linear is set"),
            };
            let mut columns = vec!["t".to_string()];
            columns.extend((1..=colours.len()).map(|i| format!("x_{i}")));
            let mut t = Table::new(columns);
            for time in grid.times() {
                let mut row = vec![num(time)];
                row.extend(multicolor_det_limit(colours, args.k, c, time, regime)?.into_iter().map(num));
                t.push(row);
            }
            t
        }
        (None, Some(a), Some(b)) => {
            if args.linear {
                bail!("--linear applies to the many-colour limit (--colours)");
            }
            let mut t = Table::new(["t", "x"]);
            for time in grid.times() {
                let x = match args.c {
                    Some(c) => qpolya_det_limit(a, b, args.k, c, time)?,
                    None => polya_det_limit(a, b, args.k, time)?,
                };
                t.push(vec![num(time), num(x)]);
            }
            t
        }
        _ => bail!("give either --a and --b, or --colours"),
    };
    emit(&t.render(args.output.format)?, args.output.out.as_deref())?;
    Ok(0)
}

fn sde(args: &SdeArgs) -> Result<u8> {
    let seed = seed_for(args.seed, args.output.out.as_deref())?;
    let family = match (args.family, args.c) {
        (Family::Polya, None) => SdeFamily::PolyaFluct,
        (Family::Polya, Some(_)) => bail!("--c only applies to the qpolya family"),
        (Family::Qpolya, Some(c)) => SdeFamily::QPolyaFluct { c },
        (Family::Qpolya, None) => bail!("the qpolya family needs --c"),
    };
    let spec = SdeSpec {
        family,
        a: args.a,
        b: args.b,
        k: args.k,
        theta1: args.theta1,
        theta2: args.theta2,
    };
    let grid = TimeGrid::covering(args.horizon, args.dt)?;
    let noise = brownian_increments(grid, &mut seeded_rng(seed));
    let em = euler_maruyama(spec.coefficients()?.as_ref(), spec.initial(), grid, &noise)?;
    let closed = spec.closed_form(grid, &noise)?;
    let mut t = Table::new(["t", "em", "closed", "gap"]);
    for ((time, e), c) in grid.times().into_iter().zip(&em.values).zip(&closed.values) {
        t.push(vec![num(time), num(*e), num(*c), num((e - c).abs())]);
    }
    emit(&t.render(args.output.format)?, args.output.out.as_deref())?;
    Ok(0)
}

fn default_report_path(config: &Path, ext: &str) -> PathBuf {
    let stem = config.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from(format!("{stem}.report.{ext}"))
}

fn verify(args: &VerifyArgs) -> Result<u8> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.experiment.seed = seed;
    }
    if let Some(r) = args.replicates {
        config.experiment.replicates = r;
    }
    let outcome = run_verify(&config, args.threads, args.dry_run)?;
    let Some(report) = &outcome.report else {
        eprintln!(
            "{}: valid config for theorem {} ({} checks)",
            args.config.display(),
            config.experiment.theorem,
            config.checks.len()
        );
        return Ok(0);
    };
    let json_path = args.json.clone().or(config.output.json.clone()).unwrap_or_else(|| default_report_path(&args.config, "json"));
    let csv_path = args.csv.clone().or(config.output.csv.clone()).unwrap_or_else(|| default_report_path(&args.config, "csv"));
    report.write_json(&json_path).with_context(|| format!("writing {}", json_path.display()))?;
    report.write_csv(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    println!("criterion\tmetric\tresult\tdetail");
    for check in &outcome.checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{}\t{}\t{verdict}\t{}", check.id, check.metric, check.detail);
    }
    eprintln!(
        "theorem {}: wrote {} and {} in {:.1}s",
        report.theorem,
        json_path.display(),
        csv_path.display(),
        report.wall_time.iter().map(|(_, d)| d.as_secs_f64()).sum::<f64>()
    );
    Ok(if outcome.passed() { 0 } else { THRESHOLD_FAILURE })
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Identities(a) => identities(a),
        Command::Pmf(a) => pmf(a),
        Command::Simulate(a) => simulate(a),
        Command::Limit(a) => limit(a),
        Command::Sde(a) => sde(a),
        Command::Verify(a) => verify(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<urnlimits::Error>() {
        Some(urnlimits::Error::NumericGuard(_)) => NUMERIC_GUARD,
        _ => CONFIG_ERROR,
    }
}

fn main() -> ExitCode {
    let footer = help_footer();
    let command = Cli::command().after_help(footer.clone()).mut_subcommand("pmf", |c| c.after_help(footer.clone()));
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

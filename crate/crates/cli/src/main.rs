use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use gargoyle_core::engine::AccessModel;
use gargoyle_core::fbac::Catalog;
use gargoyle_core::fixtures;
use gargoyle_core::harness::{
    aggregate, bench_policy_scaling, generate_scenarios, run_model, BenchConfig, Category, GeneratorConfig,
    HarnessContext, HarnessError, RunReport, ScenarioSpec, MAP_COUNT,
};
use gargoyle_core::netsim::{load_topology, Topology};
use gargoyle_core::policy::PolicyDocument;

#[derive(Parser)]
#[command(name = "gargoyle", version, about = "Network-context-aware access control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate insider scenarios.
    Generate {
        /// Generator configuration (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run scenarios and write an aggregate report.
    Run {
        /// A topology file used for every map id, or a directory holding
        /// map1.json .. map7.json. Defaults to the shipped maps.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Policy pack; defaults to the shipped reference pack.
        #[arg(long)]
        policies: Option<PathBuf>,
        /// Object catalog; defaults to the shipped catalog.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run only this baseline instead of Gargoyle plus all baselines.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Write every decision trace as JSON Lines, tagged by scenario id.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print a side-by-side summary of reports.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
    },
    /// Decision latency against policy count and user count.
    Bench {
        #[arg(long, default_value_t = 900)]
        policies_max: usize,
        #[arg(long, default_value_t = 90)]
        users: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        decisions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Rbac,
    Fbac,
    Ucon,
}

impl Baseline {
    fn model(self) -> AccessModel {
        match self {
            Baseline::Rbac => AccessModel::Rbac,
            Baseline::Fbac => AccessModel::FbacStatic,
            Baseline::Ucon => AccessModel::UconLike,
        }
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = if matches!(e, HarnessError::Aborted { .. }) { 3 } else { 2 };
        Failure { code, error: e.into() }
    }
}

type Outcome<T> = Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_error)
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(config_error)
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display())).map_err(config_error)
}

fn load_maps(path: Option<&Path>) -> Outcome<BTreeMap<u8, Topology>> {
    let Some(path) = path else {
        return Ok(fixtures::maps());
    };
    let load =
        |p: &Path| load_topology(&read(p)?).with_context(|| format!("loading {}", p.display())).map_err(config_error);
    if path.is_dir() {
        let mut maps = BTreeMap::new();
        for id in 1..=MAP_COUNT {
            let file = path.join(format!("map{id}.json"));
            if file.exists() {
                maps.insert(id, load(&file)?);
            }
        }
        if maps.is_empty() {
            return Err(config_error(anyhow!("{} holds no map<N>.json files", path.display())));
        }
        Ok(maps)
    } else {
        let topology = load(path)?;
        Ok((1..=MAP_COUNT).map(|id| (id, topology.clone())).collect())
    }
}

fn generate(config: Option<&Path>, seed: u64, out: &Path) -> Outcome<()> {
    let config: GeneratorConfig = match config {
        Some(p) => parse_json(p)?,
        None => GeneratorConfig::default(),
    };
    let specs = generate_scenarios(&config, &fixtures::maps(), seed)?;
    let text = serde_json::to_string_pretty(&specs).expect("scenarios serialize");
    write(out, &text)?;
    eprintln!("wrote {} scenarios to {}", specs.len(), out.display());
    Ok(())
}

struct RunArgs<'a> {
    topology: Option<&'a Path>,
    policies: Option<&'a Path>,
    catalog: Option<&'a Path>,
    scenarios: &'a Path,
    out: &'a Path,
    baseline: Option<Baseline>,
    trace: Option<&'a Path>,
}

fn run(args: RunArgs<'_>) -> Outcome<()> {
    let maps = load_maps(args.topology)?;
    let policies = match args.policies {
        Some(p) => PolicyDocument::parse(&read(p)?)
            .with_context(|| format!("loading {}", p.display()))
            .map_err(config_error)?,
        None => fixtures::reference_policies(),
    };
    let catalog = match args.catalog {
        Some(p) => {
            Catalog::from_json(&read(p)?).with_context(|| format!("loading {}", p.display())).map_err(config_error)?
        }
        None => fixtures::catalog(),
    };
    let ctx = HarnessContext::new(maps, policies, catalog);
    let specs: Vec<ScenarioSpec> = parse_json(args.scenarios)?;
    for spec in &specs {
        spec.validate()?;
        if !ctx.maps.contains_key(&spec.map) {
            return Err(config_error(anyhow!("scenario {} needs map {}, which is not loaded", spec.id, spec.map)));
        }
    }

    let primary = args.baseline.map_or(AccessModel::Gargoyle, Baseline::model);
    let others: Vec<AccessModel> = match args.baseline {
        Some(_) => Vec::new(),
        None => vec![AccessModel::Rbac, AccessModel::FbacStatic, AccessModel::UconLike],
    };
    let mut trace = match args.trace {
        Some(p) => Some(
            fs::File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map(std::io::BufWriter::new)
                .map_err(config_error)?,
        ),
        None => None,
    };
    let mut outcomes = Vec::with_capacity(specs.len());
    let mut baselines = Vec::with_capacity(specs.len() * others.len());
    for spec in &specs {
        let run = run_model(spec, &ctx, primary)?;
        if let Some(w) = trace.as_mut() {
            for record in run.engine.trace() {
                let line = serde_json::to_string(record).expect("trace serializes");
                writeln!(w, "{{\"scenario\":{},{}", spec.id, &line[1..])
                    .context("writing trace")
                    .map_err(config_error)?;
            }
        }
        outcomes.push(run.outcome);
        for model in &others {
            baselines.push(run_model(spec, &ctx, *model)?.outcome);
        }
    }
    if let Some(w) = trace.as_mut() {
        w.flush().context("writing trace").map_err(config_error)?;
    }
    let report = aggregate(outcomes, baselines);
    write(args.out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    eprintln!(
        "{} scenarios under {}: {} of {} attacks stopped, granted-limited share {:.3}",
        report.scenarios,
        report.model,
        report.models[0].protected,
        report.models[0].attacks,
        report.granted_limited_share
    );
    Ok(())
}

fn compare(paths: &[PathBuf]) -> Outcome<()> {
    println!(
        "{:<28} {:<12} {:>9} {:>10} {:>6} {:>6} {:>6} {:>6} {:>9}",
        "report", "model", "scenarios", "protected", "cat1", "cat2", "cat3", "cat4", "limited"
    );
    for path in paths {
        let report: RunReport = parse_json(path)?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        for m in &report.models {
            let by = |c: Category| m.protected_by_category.get(&c).copied().unwrap_or(0);
            println!(
                "{:<28} {:<12} {:>9} {:>10} {:>6} {:>6} {:>6} {:>6} {:>9.3}",
                name,
                m.model.to_string(),
                m.scenarios,
                format!("{}/{}", m.protected, m.attacks),
                by(Category::OwnDevice),
                by(Category::Proximity),
                by(Category::CompromisedPath),
                by(Category::Combined),
                m.table.granted_limited_share()
            );
        }
    }
    Ok(())
}

fn bench(policies_max: usize, users: usize, seed: u64, decisions: usize, out: Option<&Path>) -> Outcome<()> {
    let base = fixtures::reference_policies().rules.len();
    if policies_max < base || users == 0 || decisions == 0 {
        return Err(config_error(anyhow!("need --policies-max >= {base}, --users >= 1 and --decisions >= 1")));
    }
    let mut policy_counts: Vec<usize> = (1..=policies_max / 100).map(|k| k * 100).filter(|n| *n >= base).collect();
    if policy_counts.last() != Some(&policies_max) {
        policy_counts.push(policies_max);
    }
    let mut user_counts: Vec<usize> = (1..=users / 30).map(|k| k * 30).collect();
    if user_counts.last() != Some(&users) {
        user_counts.push(users);
    }
    let config = BenchConfig { policy_counts, user_counts, decisions, seed, ..BenchConfig::default() };
    let rows = bench_policy_scaling(&HarnessContext::reference(), &config)?;
    println!("{:>9} {:>6} {:>10} {:>10} {:>10}", "policies", "users", "decisions", "mean_us", "p95_us");
    for r in &rows {
        println!("{:>9} {:>6} {:>10} {:>10.1} {:>10.1}", r.policies, r.users, r.decisions, r.mean_us, r.p95_us);
    }
    if let Some(out) = out {
        write(out, &serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { config, seed, out } => generate(config.as_deref(), *seed, out),
        Command::Run { topology, policies, catalog, scenarios, out, baseline, trace } => run(RunArgs {
            topology: topology.as_deref(),
            policies: policies.as_deref(),
            catalog: catalog.as_deref(),
            scenarios,
            out,
            baseline: *baseline,
            trace: trace.as_deref(),
        }),
        Command::Compare { reports } => compare(reports),
        Command::Bench { policies_max, users, seed, decisions, out } => {
            bench(*policies_max, *users, *seed, *decisions, out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

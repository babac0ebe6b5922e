use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pillm::dsl;
use pillm::evolution::EvolutionConfig;
use pillm::llm::ProviderKind;
use pillm::metrics::{self, MetricMode};
use pillm::prompts::PromptSet;
use pillm::synth::{self, FaultKind, FaultSpec, SimConfig, Simulator};
use pillm::timeseries::{load_csv_file, load_meta_file, meta_to_json};
use pillm::workflow::{self, WorkflowError};

#[derive(Parser)]
#[command(name = "pillm", version, about = "Evolve and apply interpretable HVAC anomaly rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Pointwise,
    Pa,
    EventPa,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Http,
    Scripted,
    Sampler,
}

impl From<ProviderArg> for ProviderKind {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::Http => ProviderKind::Http,
            ProviderArg::Scripted => ProviderKind::Scripted,
            ProviderArg::Sampler => ProviderKind::Sampler,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a zone and write data.csv + meta.json.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fault: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        intensity: f64,
        /// Fault rows as START:END (end exclusive); repeatable.
        #[arg(long, value_parser = parse_window)]
        window: Vec<(usize, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2880)]
        length: usize,
    },
    /// Parse and typecheck a rule file.
    Check {
        #[arg(long)]
        rule: PathBuf,
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Score a rule against labeled data.
    Eval {
        #[arg(long)]
        rule: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, value_enum, default_value = "event-pa")]
        metric: Metric,
        #[arg(long, default_value_t = dsl::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run the evolutionary search and write a run directory.
    Evolve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        provider: ProviderArg,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        no_pir: bool,
        #[arg(long)]
        no_pic: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        prompts_dir: Option<PathBuf>,
    },
    /// Regenerate the diagnostic report of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        narrate: bool,
        /// Backend used by --narrate; offline backends echo the report.
        #[arg(long, value_enum, default_value = "sampler")]
        provider: ProviderArg,
        #[arg(long)]
        script: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad end `{b}`"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { out, fault, intensity, window, seed, length } => {
            gen_data(&out, fault.as_deref(), intensity, &window, seed, length)
        }
        Command::Check { rule, meta } => check(&rule, meta.as_deref()),
        Command::Eval { rule, data, meta, metric, threshold } => eval(&rule, &data, &meta, metric, threshold),
        Command::Evolve { data, meta, config, provider, script, no_pir, no_pic, out, run_id, prompts_dir } => {
            return evolve(EvolveArgs {
                data,
                meta,
                config,
                provider: provider.into(),
                script,
                no_pir,
                no_pic,
                out,
                run_id,
                prompts_dir,
            });
        }
        Command::Report { run, data, meta, narrate, provider, script } => {
            report(&run, &data, &meta, narrate, provider.into(), script.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn gen_data(
    out: &Path,
    fault: Option<&str>,
    intensity: f64,
    windows: &[(usize, usize)],
    seed: u64,
    length: usize,
) -> Result<()> {
    let cfg = SimConfig { length, ..SimConfig::with_seed(seed) };
    let sim = Simulator::new(cfg)?;
    let mut table = sim.simulate()?;
    if let Some(kind) = fault {
        let kind: FaultKind = kind.parse()?;
        if windows.is_empty() {
            bail!("--fault needs at least one --window START:END");
        }
        for &(s, e) in windows {
            table = sim.inject_fault(&table, &FaultSpec::new(kind, intensity, s..e))?;
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    table.save_csv(out.join("data.csv"))?;
    std::fs::write(out.join("meta.json"), meta_to_json(&synth::feature_meta()))?;
    let flagged = table.labels().map_or(0, |l| l.iter().filter(|&&v| v == 1).count());
    println!("wrote {} rows ({flagged} labeled anomalous) to {}", table.len(), out.display());
    Ok(())
}

fn check(rule: &Path, meta: Option<&Path>) -> Result<()> {
    let src = std::fs::read_to_string(rule).with_context(|| format!("reading {}", rule.display()))?;
    let located = |e: dsl::DslError| anyhow::anyhow!("{}:{e}", rule.display());
    let typed = match meta {
        Some(m) => {
            let metas = load_meta_file(m)?;
            dsl::compile(&src, metas.iter().map(|f| f.name.as_str())).map_err(located)?
        }
        None => {
            let ast = dsl::parse(&src).map_err(located)?;
            let own = ast.referenced_features();
            dsl::typecheck(&ast, own.iter().map(String::as_str)).map_err(located)?
        }
    };
    println!(
        "ok: {} nodes, {:?} result, features: {}",
        typed.ast().node_count,
        typed.result_type(),
        typed.features().join(", ")
    );
    Ok(())
}

fn eval(rule: &Path, data: &Path, meta: &Path, metric: Metric, threshold: f64) -> Result<()> {
    let src = std::fs::read_to_string(rule).with_context(|| format!("reading {}", rule.display()))?;
    let table = load_csv_file(data, &load_meta_file(meta)?)?;
    let typed = dsl::compile(&src, table.feature_names()).map_err(|e| anyhow::anyhow!("{}:{e}", rule.display()))?;
    let scores = dsl::evaluate(&typed, &table)?;
    let flags = dsl::to_flags(&scores, threshold);
    let labels = table.labels().context("the data file has no label column")?;
    let mode = match metric {
        Metric::Pointwise => MetricMode::Pointwise,
        Metric::Pa => MetricMode::PointAdjusted,
        Metric::EventPa => MetricMode::EventPa,
    };
    println!("{}", metrics::score(&flags, labels, mode)?.summary_line());
    Ok(())
}

struct EvolveArgs {
    data: PathBuf,
    meta: PathBuf,
    config: Option<PathBuf>,
    provider: ProviderKind,
    script: Option<PathBuf>,
    no_pir: bool,
    no_pic: bool,
    out: PathBuf,
    run_id: Option<String>,
    prompts_dir: Option<PathBuf>,
}

const EXIT_ABORTED: u8 = 2;
const EXIT_BAD_CONFIG: u8 = 3;

fn evolve(args: EvolveArgs) -> ExitCode {
    match try_evolve(args) {
        Ok(aborted) => {
            if aborted {
                ExitCode::from(EXIT_ABORTED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(EXIT_BAD_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn try_evolve(args: EvolveArgs) -> Result<bool, WorkflowError> {
    let mut cfg = match &args.config {
        Some(path) => EvolutionConfig::load(path)?,
        None => EvolutionConfig::default(),
    };
    cfg.enable_pir &= !args.no_pir;
    cfg.enable_pic &= !args.no_pic;
    cfg.validate()?;
    let prompts = match &args.prompts_dir {
        Some(dir) => PromptSet::from_dir(dir).map_err(|e| WorkflowError::Usage(e.to_string()))?,
        None => PromptSet::builtin(),
    };
    let metas = load_meta_file(&args.meta)?;
    let table = load_csv_file(&args.data, &metas)?;
    let names: Vec<String> = metas.iter().map(|m| m.name.clone()).collect();
    let provider = workflow::build_provider(args.provider, &cfg, args.script.as_deref(), &names)?;
    let run_id = args.run_id.unwrap_or_else(|| {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        format!("run-{secs}-s{}", cfg.seed)
    });
    let outcome = workflow::evolve_to_dir(&cfg, &table, provider.as_ref(), &prompts, &args.out, &run_id)?;
    let r = &outcome.result;
    println!("run directory: {}", outcome.run_dir.display());
    println!(
        "generations: {}  llm calls: {}  candidates: {}",
        r.generations_completed,
        r.llm_calls,
        outcome.log.records().len()
    );
    match r.best.fitness {
        Some(f) => println!("best {} fitness={f:.6}\n{}", r.best.id, r.best.code),
        None => println!("no valid candidate"),
    }
    if r.budget_exhausted {
        println!("stopped early: LLM call budget of {} exhausted", cfg.llm_call_budget);
    }
    if let Some(reason) = &r.abort_reason {
        eprintln!("aborted: {reason}");
    }
    Ok(r.aborted)
}

fn report(
    run: &Path,
    data: &Path,
    meta: &Path,
    narrate: bool,
    provider: ProviderKind,
    script: Option<&Path>,
) -> Result<()> {
    let metas = load_meta_file(meta)?;
    let table = load_csv_file(data, &metas)?;
    let narrator = if narrate {
        let cfg = EvolutionConfig::load(run.join(pillm::report::CONFIG_FILE))?;
        let names: Vec<String> = metas.iter().map(|m| m.name.clone()).collect();
        Some(workflow::build_provider(provider, &cfg, script, &names)?)
    } else {
        None
    };
    let text = workflow::report_run(run, &table, narrator.as_deref())?;
    print!("{text}");
    Ok(())
}

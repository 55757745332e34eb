use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mindprobe::inversion::posterior_table;
use mindprobe::link::Archive;
use mindprobe::models::{family_member, prediction_table};
use mindprobe::prompt::{load_templates, TemplateSet};
use mindprobe::study::{
    self, build_tables, collect_offline, collect_online, export_report, read_report, ReportFormat, RunConfig, StudyError,
    StudyId, StudyReport, StudyResults,
};
use mindprobe::world::{enumerate_forward_tuples, enumerate_inference_tuples, DomainId, InferenceTask, Task};

#[derive(Parser)]
#[command(name = "mindprobe", version, about = "Probe a respondent's model of beliefs, desires and action")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List tuple keys, or render their prompts as JSONL.
    Enumerate {
        #[arg(long, value_parser = parse_domain)]
        domain: Option<DomainId>,
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        /// Emit rendered prompts instead of keys.
        #[arg(long)]
        render: bool,
        /// Template directory (bundled templates by default).
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Query every configured tuple, filling the archive.
    Query {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write exact posteriors as JSONL, for a candidate model or an archived respondent.
    Invert {
        /// Candidate model name (e.g. HumanToM).
        #[arg(long, conflicts_with = "config")]
        model: Option<String>,
        /// Invert the archived forward predictions of this run's respondent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_domain)]
        domain: Option<DomainId>,
        #[arg(long, value_parser = parse_inference_task)]
        task: Option<InferenceTask>,
        /// Output file (stdout by default).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query as needed, then score one or all studies.
    Study(StudyArgs),
    /// Score from archived records only; never queries.
    Replay {
        #[command(flatten)]
        study: StudyArgs,
        /// Archive to read instead of the config's.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Convert a JSON study report to CSV or JSON.
    Export {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output directory (the report's directory by default).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// 1, 2, 3 or all.
    #[arg(long, default_value = "all", value_parser = parse_studies)]
    study: Studies,
    /// Report directory (the config's `out` by default).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Clone)]
struct Studies(Vec<StudyId>);

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn formats(self) -> Vec<ReportFormat> {
        match self {
            Format::Csv => vec![ReportFormat::Csv],
            Format::Json => vec![ReportFormat::Json],
            Format::Both => vec![ReportFormat::Csv, ReportFormat::Json],
        }
    }
}

fn parse_domain(s: &str) -> Result<DomainId, String> {
    s.parse()
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_inference_task(s: &str) -> Result<InferenceTask, String> {
    match s.parse()? {
        Task::Inference(t) => Ok(t),
        Task::Forward => Err("expected an inference task (belief, desire or joint)".into()),
    }
}

fn parse_studies(s: &str) -> Result<Studies, String> {
    if s == "all" {
        return Ok(Studies(StudyId::ALL.to_vec()));
    }
    let n: u8 = s.parse().map_err(|_| format!("expected 1, 2, 3 or all, got {s:?}"))?;
    Ok(Studies(vec![StudyId::try_from(n)?]))
}

fn domains(d: Option<DomainId>) -> Vec<DomainId> {
    d.map_or_else(|| DomainId::ALL.to_vec(), |d| vec![d])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.downcast_ref::<StudyError>().map_or(1, StudyError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Enumerate { domain, task, render, templates } => enumerate(domain, task, render, templates),
        Command::Query { config } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate()?;
            let archive = open_archive(&cfg.archive)?;
            let respondent = cfg.respondent.build()?;
            let (records, issued) = collect_online(&cfg, respondent.as_ref(), &archive)?;
            let low = records.iter().filter(|r| r.min_coverage() < study::LOW_COVERAGE).count();
            println!("{} records ({issued} newly queried), {low} with coverage below {}", records.len(), study::LOW_COVERAGE);
            Ok(())
        }
        Command::Invert { model, config, domain, task, out } => invert(model, config, domain, task, out),
        Command::Study(args) => {
            let cfg = RunConfig::load(&args.config)?;
            let archive = open_archive(&cfg.archive)?;
            let respondent = cfg.respondent.build()?;
            let outcome = study::run_studies(&cfg, respondent.as_ref(), &archive, &args.study.0)?;
            eprintln!("{} records, {} newly queried", outcome.records, outcome.queries_issued);
            write_reports(&outcome.reports, args.out.as_deref().unwrap_or(&cfg.out), args.format)
        }
        Command::Replay { study: args, archive } => {
            let mut cfg = RunConfig::load(&args.config)?;
            if let Some(a) = archive {
                cfg.archive = a;
            }
            if !cfg.archive.exists() {
                return Err(StudyError::MissingRecord { keys: vec![format!("(no archive at {})", cfg.archive.display())] }.into());
            }
            let archive = open_archive(&cfg.archive)?;
            let reports = study::replay(&cfg, &archive, &args.study.0)?;
            write_reports(&reports, args.out.as_deref().unwrap_or(&cfg.out), args.format)
        }
        Command::Export { report, format, out } => {
            let r = read_report(&report)?;
            let dir = out.unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
            for f in format.formats() {
                println!("{}", export_report(&r, f, &dir)?.display());
            }
            Ok(())
        }
    }
}

fn open_archive(path: &Path) -> anyhow::Result<Archive> {
    Archive::open(path).map_err(StudyError::from).with_context(|| format!("opening archive {}", path.display()))
}

fn write_reports(reports: &[StudyReport], dir: &Path, format: Format) -> anyhow::Result<()> {
    for r in reports {
        summarize(r);
        for f in format.formats() {
            println!("wrote {}", export_report(r, f, dir)?.display());
        }
    }
    Ok(())
}

fn summarize(report: &StudyReport) {
    println!("study {}:", report.study.number());
    match &report.results {
        StudyResults::Agreement(rows) => {
            for r in rows {
                println!("  {} {:<12} {:.4}", r.domain.code(), r.model, r.mean_assigned_probability);
            }
        }
        StudyResults::Correlation(rows) => {
            for r in rows {
                println!("  {:<3} {}", r.measure, r.formatted);
            }
        }
        StudyResults::Consistency(rows) => {
            for r in rows {
                let bayes = r.bayesian_r.map_or("NA".to_string(), |v| format!("{v:.4}"));
                println!(
                    "  {} {} bayesian_r {bayes} validity {:.4} ({} of {} unexplainable)",
                    r.domain.code(),
                    r.task.measure_label(),
                    r.validity_accuracy,
                    r.unexplainable,
                    r.n_tuples
                );
            }
        }
    }
}

fn enumerate(domain: Option<DomainId>, task: Option<Task>, render: bool, templates: Option<PathBuf>) -> anyhow::Result<()> {
    let templates = match &templates {
        Some(dir) => load_templates(dir)?,
        None => TemplateSet::bundled(),
    };
    let tasks = task.map_or_else(|| Task::ALL.to_vec(), |t| vec![t]);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for d in domains(domain) {
        for &t in &tasks {
            let queries = match t {
                Task::Forward => enumerate_forward_tuples(d)
                    .iter()
                    .map(|x| if render { serde_json::to_string(&templates.render_forward(d, x)) } else { Ok(x.key(d)) })
                    .collect::<Result<Vec<_>, _>>()?,
                Task::Inference(i) => enumerate_inference_tuples(d, i)
                    .iter()
                    .map(|x| if render { serde_json::to_string(&templates.render_inference(d, x)) } else { Ok(x.key(d)) })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            for q in queries {
                writeln!(out, "{q}")?;
            }
        }
    }
    Ok(())
}

fn invert(
    model: Option<String>,
    config: Option<PathBuf>,
    domain: Option<DomainId>,
    task: Option<InferenceTask>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let tasks = task.map_or_else(|| InferenceTask::ALL.to_vec(), |t| vec![t]);
    let mut forward = Vec::new();
    match (model, config) {
        (Some(name), None) => {
            let spec = family_member(&name).map_err(|e| StudyError::Config(e.to_string()))?;
            for d in domains(domain) {
                forward.push(prediction_table(&spec, d));
            }
        }
        (None, Some(path)) => {
            let mut cfg = RunConfig::load(&path)?;
            cfg.tasks = vec![Task::Forward];
            cfg.domains = domains(domain);
            let archive = open_archive(&cfg.archive)?;
            let resp = build_tables(&cfg, &collect_offline(&cfg, &archive)?)?;
            forward.extend(resp.forward.into_values());
        }
        _ => return Err(StudyError::Config("give either --model or --config".into()).into()),
    }
    let mut text = String::new();
    for table in &forward {
        for &t in &tasks {
            let post = posterior_table(table, table.domain(), t)?;
            for rec in post.records() {
                text.push_str(&serde_json::to_string(&rec)?);
                text.push('\n');
            }
        }
    }
    match out {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

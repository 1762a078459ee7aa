//! `rlfd`: runs simulated teaching experiments and replays recorded
//! sessions.
//!
//! Every subcommand reads an optional TOML experiment config (`--config`),
//! applies flag overrides, and either writes its tables and a
//! `summary.json` into `--out DIR` or prints the summary to stdout.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 1 anything else.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rlfd_core::experiment::{
    cohort_rows, compare_supervised, replay, run_cohort, run_protocol_traced, Group, GroupSummary,
    ProtocolConfig, SkillComparison, SubjectModel,
};
use rlfd_core::io::{curve_rows, write_table};
use rlfd_core::record::{read_events, write_event, SessionRecord};
use rlfd_core::seeds::{stream_seed, Stream};
use rlfd_core::skills::SkillId;
use rlfd_core::teaching::build_curriculum;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rlfd", version, about = "Simulated reward-teaching experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Subject index within the seed.
    #[arg(long)]
    subject: Option<u64>,
    /// guided or control.
    #[arg(long)]
    group: Option<Group>,
    /// Show the P2 and P1 keyframes again in P8 and P9.
    #[arg(long)]
    reuse_test_keyframes: bool,
    /// Number of rollout start states for the trajectory metrics.
    #[arg(long)]
    metric_starts: Option<usize>,
    /// Rollout length for the trajectory metrics.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run P1 to P9 for one simulated subject.
    Protocol {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory; the summary goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both groups for several seeds and subjects.
    Cohort {
        #[command(flatten)]
        overrides: Overrides,
        /// Subjects per group and seed.
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        /// Seeds as `a..b` (half-open) or a comma-separated list.
        #[arg(long, default_value = "0..20")]
        seeds: String,
        /// Output directory; the summary goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the reward learner with supervised regression over horizons 1 to 400.
    CompareSupervised {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory; the summary goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a recorded session and check it against its stored results.
    Replay {
        /// JSON Lines session log.
        session: PathBuf,
        /// Output directory; the summary goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the P3 to P7 curriculum as JSON.
    Curriculum {
        #[command(flatten)]
        overrides: Overrides,
        /// Output JSON file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<rlfd_core::Error> for Failure {
    fn from(e: rlfd_core::Error) -> Self {
        if e.is_numerical() {
            return Failure::Numerical(e.to_string());
        }
        match e.root() {
            rlfd_core::Error::Io(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<ProtocolConfig, Failure> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ProtocolConfig::from_toml(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => ProtocolConfig::new(Group::Guided, SubjectModel::default(), 0),
    };
    let s = &mut config.settings;
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(subject) = o.subject {
        s.subject = subject;
    }
    if let Some(group) = o.group {
        config.group = group;
    }
    if o.reuse_test_keyframes {
        s.reuse_test_keyframes = true;
    }
    if let Some(m) = o.metric_starts {
        s.metrics.m = m;
    }
    if let Some(h) = o.horizon {
        s.metrics.horizon = h;
    }
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(config)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Config(format!("seeds {spec:?}: expected `a..b` or a comma-separated list"));
    let seeds: Vec<u64> = match spec.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            (a..b).collect()
        }
        None => spec
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?,
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Writes `summary` to `out/summary.json`, or to stdout without `out`.
fn emit_summary<T: Serialize>(out: Option<&Path>, summary: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Failure::Other(e.to_string()))?;
    match out {
        Some(dir) => {
            let path = dir.join("summary.json");
            std::fs::write(&path, text + "\n").map_err(io_failure(&path))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn create_out(out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(dir) => std::fs::create_dir_all(dir).map_err(io_failure(dir)),
        None => Ok(()),
    }
}

fn table<T: Serialize>(out: Option<&Path>, name: &str, rows: &[T]) -> Result<(), Failure> {
    let Some(dir) = out else { return Ok(()) };
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_failure(&path))?;
    write_table(BufWriter::new(file), rows)?;
    Ok(())
}

fn protocol(config: &ProtocolConfig, out: Option<&Path>) -> Result<(), Failure> {
    create_out(out)?;
    let (result, record) = run_protocol_traced(config)?;
    table(out, "phases.csv", &cohort_rows(&result))?;
    if let Some(dir) = out {
        let path = dir.join("session.jsonl");
        let mut w = BufWriter::new(File::create(&path).map_err(io_failure(&path))?);
        for e in record.to_events() {
            write_event(&mut w, &e)?;
        }
        w.flush().map_err(io_failure(&path))?;
    }
    emit_summary(out, &result)
}

#[derive(Serialize)]
struct CohortSummary {
    seeds: Vec<u64>,
    per_group: usize,
    groups: Vec<GroupSummary>,
}

fn cohort(config: &ProtocolConfig, per_group: usize, seeds: &str, out: Option<&Path>) -> Result<(), Failure> {
    let seeds = parse_seeds(seeds)?;
    create_out(out)?;
    let cohort = run_cohort(config, per_group, &seeds)?;
    table(out, "cohort.csv", &cohort.rows)?;
    emit_summary(
        out,
        &CohortSummary {
            groups: cohort.summary(),
            seeds,
            per_group,
        },
    )
}

#[derive(Serialize)]
struct ComparisonSummary {
    skill: SkillId,
    rlfd_failure: Option<String>,
    rlfd_gain: Option<[[f64; 2]; 2]>,
    supervised_gain: [[f64; 2]; 2],
    rlfd_spectral_radius: Option<f64>,
    supervised_spectral_radius: f64,
    crossover: Option<usize>,
    armse_rlfd_at_400: Option<f64>,
    armse_supervised_at_400: Option<f64>,
}

impl From<&SkillComparison> for ComparisonSummary {
    fn from(s: &SkillComparison) -> Self {
        let last = s.curve.last();
        ComparisonSummary {
            skill: s.skill,
            rlfd_failure: s.rlfd_failure.clone(),
            rlfd_gain: s.rlfd_gain,
            supervised_gain: s.supervised_gain,
            rlfd_spectral_radius: s.rlfd_spectral_radius,
            supervised_spectral_radius: s.supervised_spectral_radius,
            crossover: s.crossover,
            armse_rlfd_at_400: last.and_then(|p| p.armse_rlfd),
            armse_supervised_at_400: last.map(|p| p.armse_supervised),
        }
    }
}

#[derive(Serialize)]
struct CompareSummary {
    seed: u64,
    subject: u64,
    skills: Vec<ComparisonSummary>,
}

fn compare(config: &ProtocolConfig, out: Option<&Path>) -> Result<(), Failure> {
    create_out(out)?;
    let cmp = compare_supervised(config)?;
    table(out, "curves.csv", &curve_rows(&cmp))?;
    emit_summary(
        out,
        &CompareSummary {
            seed: cmp.seed,
            subject: cmp.subject,
            skills: cmp.skills.iter().map(ComparisonSummary::from).collect(),
        },
    )
}

fn replay_session(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let file = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let events = read_events(BufReader::new(file)).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let record = SessionRecord::fold(&events).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let result = replay(&record)?;
    let differing: Vec<String> = record
        .phases
        .iter()
        .zip(&result.phases)
        .filter(|(stored, again)| stored.result != **again)
        .map(|(stored, _)| stored.phase.to_string())
        .collect();
    if !differing.is_empty() {
        return Err(Failure::Other(format!(
            "replayed results differ from the recorded ones in {}",
            differing.join(", ")
        )));
    }
    create_out(out)?;
    table(out, "phases.csv", &cohort_rows(&result))?;
    emit_summary(out, &result)
}

fn curriculum(config: &ProtocolConfig, out: Option<&Path>) -> Result<(), Failure> {
    let s = &config.settings;
    let seed = stream_seed(s.seed, Stream::Curriculum, s.subject);
    let curriculum = build_curriculum(&s.skill_train, &s.curriculum, seed)?;
    let text = serde_json::to_string_pretty(&curriculum).map_err(|e| Failure::Other(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(io_failure(path)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Protocol { overrides, out } => protocol(&load_config(config_path, &overrides)?, out.as_deref()),
        Command::Cohort {
            overrides,
            per_group,
            seeds,
            out,
        } => cohort(&load_config(config_path, &overrides)?, per_group, &seeds, out.as_deref()),
        Command::CompareSupervised { overrides, out } => compare(&load_config(config_path, &overrides)?, out.as_deref()),
        Command::Replay { session, out } => replay_session(&session, out.as_deref()),
        Command::Curriculum { overrides, out } => curriculum(&load_config(config_path, &overrides)?, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rlfd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a..b").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            seed: Some(4),
            subject: Some(2),
            group: Some(Group::Control),
            reuse_test_keyframes: true,
            metric_starts: Some(7),
            horizon: Some(9),
        };
        let c = load_config(None, &o).unwrap();
        assert_eq!((c.settings.seed, c.settings.subject, c.group), (4, 2, Group::Control));
        assert!(c.settings.reuse_test_keyframes);
        assert_eq!((c.settings.metrics.m, c.settings.metrics.horizon), (7, 9));
        let zero = Overrides {
            horizon: Some(0),
            ..Overrides::default()
        };
        assert!(matches!(load_config(None, &zero), Err(Failure::Config(_))));
    }

    #[test]
    fn error_classes() {
        let numerical: Failure = rlfd_core::Error::IllConditioned { condition: 1e13 }.into();
        assert_eq!(numerical.exit_code(), 3);
        let config: Failure = rlfd_core::Error::InvalidParameter("x".into()).into();
        assert_eq!(config.exit_code(), 2);
    }
}

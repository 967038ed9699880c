//! Command-line surface: `run`, `validate` and `demo`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::report::{emit, Format, Report};
use crate::scenario::{load_scenario, load_scenario_file, Scenario};
use crate::tasks::run_scenario;

#[derive(Debug, Parser)]
#[command(name = "nqs-geom", version, about = "Run N–Q–S context-geometry scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a scenario, run its tasks and print the report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Load and validate a scenario without running it.
    Validate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Machine)]
        format: Format,
    },
    /// Run one of the bundled demo scenarios.
    Demo {
        #[arg(value_enum)]
        name: Demo,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Machine)]
    pub format: Format,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "NQS_GEOM_JOBS", value_parser = clap::value_parser!(u16).range(1..=1024))]
    pub jobs: Option<u16>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record per-task wall time (makes reports run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    MarkovChain,
    QutritMetric,
    QutritHolonomy,
}

impl Demo {
    pub fn source(self) -> &'static str {
        match self {
            Demo::MarkovChain => include_str!("../scenarios/markov_chain.nqs"),
            Demo::QutritMetric => include_str!("../scenarios/qutrit.nqs"),
            Demo::QutritHolonomy => include_str!("../scenarios/qutrit_holonomy.nqs"),
        }
    }

    pub fn scenario(self) -> CliResult<Scenario> {
        load_scenario(self.source())
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn write_error(err: &CliError, format: Format, stderr: &mut dyn Write) {
    let _ = match format {
        Format::Machine => writeln!(
            stderr,
            "{}",
            json!({ "error": { "code": err.code(), "path": err.path(), "message": err.to_string() } })
        ),
        Format::Human => writeln!(stderr, "error[{}]: {err}", err.code()),
    };
}

fn deliver(report: &Report, output: &OutputArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let text = emit(report, output.format);
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?,
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        })?,
    }
    Ok(if report.all_succeeded() { 0 } else { 1 })
}

fn run(scenario: CliResult<Scenario>, output: &OutputArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let scenario = scenario?;
    let jobs = output.jobs.map(usize::from).unwrap_or_else(default_jobs);
    let report = run_scenario(&scenario, jobs, output.timings);
    deliver(&report, output, stdout)
}

/// Runs a parsed command line and returns the process exit code: 0 when every
/// task succeeded, 1 when at least one task failed, 2 for usage, parse and
/// validation errors.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let (result, format) = match &cli.command {
        Command::Run { scenario, output } => (run(load_scenario_file(scenario), output, stdout), output.format),
        Command::Demo { name, output } => (run(name.scenario(), output, stdout), output.format),
        Command::Validate { scenario, format } => {
            let r = load_scenario_file(scenario).and_then(|s| {
                let text = match format {
                    Format::Machine => format!(
                        "{}\n",
                        json!({
                            "valid": true,
                            "version": s.version,
                            "contexts": s.contexts.len(),
                            "edges": s.edge_count(),
                            "tasks": s.tasks.len(),
                        })
                    ),
                    Format::Human => format!(
                        "valid {} scenario: {} contexts, {} edges, {} tasks\n",
                        s.version,
                        s.contexts.len(),
                        s.edge_count(),
                        s.tasks.len()
                    ),
                };
                stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })?;
                Ok(0)
            });
            (r, *format)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            write_error(&e, format, stderr);
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_demos_load() {
        let chain = Demo::MarkovChain.scenario().unwrap();
        let in_graph = chain.graph.as_ref().unwrap().graph().vertices().len();
        assert_eq!((in_graph, chain.edge_count()), (3, 2));
        Demo::QutritMetric.scenario().unwrap();
        Demo::QutritHolonomy.scenario().unwrap();
    }

    #[test]
    fn cli_parses_flags() {
        let cli = Cli::try_parse_from(["nqs-geom", "run", "x.nqs", "--format", "human", "--jobs", "3"]).unwrap();
        match cli.command {
            Command::Run { output, .. } => {
                assert_eq!(output.format, Format::Human);
                assert_eq!(output.jobs, Some(3));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["nqs-geom", "run", "x.nqs", "--format", "xml"]).is_err());
        assert!(Cli::try_parse_from(["nqs-geom", "run", "x.nqs", "--jobs", "0"]).is_err());
    }

    #[test]
    fn missing_file_is_exit_two_with_structured_error() {
        let cli = Cli::try_parse_from(["nqs-geom", "run", "/nonexistent/file.nqs"]).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(execute(&cli, &mut out, &mut err), 2);
        let v: serde_json::Value = serde_json::from_slice(&err).unwrap();
        assert_eq!(v["error"]["code"], "io");
    }
}

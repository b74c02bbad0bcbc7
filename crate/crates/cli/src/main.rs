//! `dagsbm`: clean citation graphs, fit the DAG stochastic block model,
//! summarise chains and simulate planted graphs.

mod clean;
mod error;
mod fit;
mod generate;
mod summarize;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dagsbm_core::graph::{parse_edge_list, EdgeListFormat, RawDigraph};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dagsbm", version, about = "Bayesian nonparametric stochastic block model for DAGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove cyclic edges and keep the largest weakly connected component.
    Clean(clean::CleanArgs),
    /// Run MCMC chains on an edge list.
    Fit(fit::FitArgs),
    /// Posterior summaries of a fit directory, or pseudopriors from pilot runs.
    Summarize(summarize::SummarizeArgs),
    /// Simulate a planted-partition DAG.
    Generate(generate::GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// `.csv` files are comma separated, anything else whitespace separated.
    Auto,
    Whitespace,
    Csv,
}

/// Edge-list input shared by the graph-reading commands.
#[derive(Debug, Args)]
pub struct EdgeInput {
    /// Edge list, one `source target` pair per line.
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
}

impl EdgeInput {
    pub fn resolved_format(&self) -> EdgeListFormat {
        match self.format {
            FormatArg::Csv => EdgeListFormat::Csv,
            FormatArg::Whitespace => EdgeListFormat::TwoColumn,
            FormatArg::Auto => {
                if self.edges.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                    EdgeListFormat::Csv
                } else {
                    EdgeListFormat::TwoColumn
                }
            }
        }
    }

    pub fn read(&self) -> Result<RawDigraph, CliError> {
        let text = std::fs::read_to_string(&self.edges)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.edges.display())))?;
        parse_edge_list(&text, self.resolved_format())
            .map_err(|e| CliError::Data(format!("{}: {e}", self.edges.display())))
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Clean(a) => clean::run(&a),
        Command::Fit(a) => fit::run(&a),
        Command::Summarize(a) => summarize::run(&a),
        Command::Generate(a) => generate::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

use std::path::PathBuf;

use clap::Args;
use dagsbm_core::graph::{EdgeListFormat, RawDigraph};
use dagsbm_core::io::write_lines;
use dagsbm_core::synth::generate_planted;

use crate::error::CliError;
use crate::{create_dir, write_file};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of nodes.
    #[arg(long)]
    pub n: usize,
    /// Number of planted groups; node `p` joins group `p mod k`.
    #[arg(long)]
    pub k: usize,
    /// Edge rate between nodes of the same group.
    #[arg(long)]
    pub within: f64,
    /// Edge rate between nodes of different groups.
    #[arg(long)]
    pub between: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory for `edges.txt`, `nodes.txt` and `truth.toml`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    let (dag, truth) = generate_planted(args.n, args.k, args.within, args.between, args.seed)?;
    let raw = RawDigraph::new(dag.n(), dag.edges().iter().copied())?;
    create_dir(&args.out)?;
    write_file(&args.out.join("edges.txt"), &raw.to_edge_list(EdgeListFormat::TwoColumn))?;
    write_lines(&args.out.join("nodes.txt"), raw.ids())?;
    write_file(&args.out.join("truth.toml"), &truth.to_toml())?;
    let isolated = (0..dag.n()).filter(|&p| dag.degree(p) == 0).count();
    println!("{} nodes, {} edges, {isolated} isolated nodes", dag.n(), dag.edge_count());
    Ok(())
}

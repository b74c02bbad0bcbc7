use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use dagsbm_core::graph::{
    break_cycles, largest_weak_component, removal_log_csv, EdgeListFormat, RawDigraph, RemovalReason,
};

use crate::error::CliError;
use crate::{create_dir, write_file, EdgeInput};

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[command(flatten)]
    pub input: EdgeInput,
    /// Output directory for `edges.txt` (`edges.csv` for CSV input),
    /// `removed.csv` and `report.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep every weakly connected component instead of the largest one.
    #[arg(long)]
    pub all_components: bool,
}

pub fn run(args: &CleanArgs) -> Result<(), CliError> {
    let raw = args.input.read()?;
    let (dag, removed) = break_cycles(&raw);
    let mutual = removed.iter().filter(|r| r.reason == RemovalReason::Mutual).count();
    let cyclic = removed.len() - mutual;

    let (kept_ids, kept_edges) = if args.all_components {
        (raw.ids().to_vec(), dag.edges().to_vec())
    } else {
        let (comp, map) = largest_weak_component(&dag)?;
        let ids = map.iter().map(|&old| raw.ids()[old].clone()).collect();
        (ids, comp.edges().to_vec())
    };
    let cleaned = RawDigraph::with_ids(kept_ids, kept_edges)?;

    let mut report = String::new();
    let _ = writeln!(report, "input: {} nodes, {} edges", raw.n(), raw.edges().len());
    let _ = writeln!(report, "removed mutual-citation edges: {mutual}");
    let _ = writeln!(report, "removed cycle-closing edges: {cyclic}");
    if args.all_components {
        let _ = writeln!(report, "components: all kept");
    } else {
        let _ = writeln!(report, "largest weak component: {} nodes, {} edges", cleaned.n(), cleaned.edges().len());
        let _ = writeln!(report, "nodes outside the largest component: {}", raw.n() - cleaned.n());
    }
    let _ = writeln!(report, "output: {} nodes, {} edges", cleaned.n(), cleaned.edges().len());

    create_dir(&args.out)?;
    let format = args.input.resolved_format();
    let name = if format == EdgeListFormat::Csv { "edges.csv" } else { "edges.txt" };
    write_file(&args.out.join(name), &cleaned.to_edge_list(format))?;
    write_file(&args.out.join("removed.csv"), &removal_log_csv(raw.ids(), &removed))?;
    write_file(&args.out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

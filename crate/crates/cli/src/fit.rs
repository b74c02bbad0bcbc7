use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};
use dagsbm_core::graph::{break_cycles, Dag, GraphError, RawDigraph};
use dagsbm_core::io::{write_lines, FileTraceSink, RunConfig};
use dagsbm_core::likelihood::PriorConfig;
use dagsbm_core::sampler::{AcceptanceStats, Mode, Sampler, TuningConfig};
use dagsbm_core::selection::PseudoPriors;

use crate::error::CliError;
use crate::{create_dir, write_file, EdgeInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Infinite,
    Finite,
    Select,
}

impl ModeArg {
    fn mode(self) -> Mode {
        match self {
            ModeArg::Infinite => Mode::Infinite,
            ModeArg::Finite => Mode::Finite,
            ModeArg::Select => Mode::Select,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeArg::Infinite => "infinite",
            ModeArg::Finite => "finite",
            ModeArg::Select => "select",
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: EdgeInput,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Infinite)]
    pub mode: ModeArg,
    /// Flat TOML configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pseudoprior file from `summarize --fit-pseudopriors`; required by
    /// `--mode select`.
    #[arg(long)]
    pub pseudopriors: Option<PathBuf>,
    /// Break cycles before fitting instead of rejecting cyclic input.
    #[arg(long)]
    pub clean: bool,
    /// Number of independent chains; chain `c` uses seed `seed + c - 1`.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thinning: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

/// Reads the graph, breaking cycles only when asked to.
fn load_dag(args: &FitArgs) -> Result<(RawDigraph, Dag), CliError> {
    let raw = args.input.read()?;
    match Dag::from_raw(&raw) {
        Ok(dag) => Ok((raw, dag)),
        Err(GraphError::Cyclic(e)) if !args.clean => Err(CliError::Data(format!(
            "{}: {e}; rerun with --clean, or run `dagsbm clean` first and fit its output",
            args.input.edges.display()
        ))),
        Err(GraphError::Cyclic(_)) => {
            let (dag, removed) = break_cycles(&raw);
            if !args.quiet {
                eprintln!("removed {} edges to break cycles", removed.len());
            }
            Ok((raw, dag))
        }
        Err(e) => Err(e.into()),
    }
}

fn resolve_config(args: &FitArgs) -> Result<(PriorConfig, TuningConfig), CliError> {
    let cfg = match &args.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    let priors = cfg.priors();
    let mut tuning = cfg.tuning();
    if let Some(s) = args.seed {
        tuning.seed = s;
    }
    if let Some(i) = args.iterations {
        tuning.iterations = i;
    }
    if let Some(b) = args.burn_in {
        tuning.burn_in = b;
    }
    if let Some(t) = args.thinning {
        tuning.thinning = t;
    }
    Ok((priors, tuning))
}

fn load_pseudopriors(args: &FitArgs) -> Result<Option<PseudoPriors>, CliError> {
    match (&args.pseudopriors, args.mode) {
        (None, ModeArg::Select) => Err(CliError::Usage(
            "--mode select needs --pseudopriors FILE. Run pilot chains with `fit --mode finite` and \
             `fit --mode infinite`, then create the file with \
             `summarize --fit-pseudopriors FILE --finite DIR --infinite DIR`"
                .into(),
        )),
        (None, _) => Ok(None),
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let pseudo = PseudoPriors::from_toml(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok(Some(pseudo))
        }
    }
}

/// File-name suffix of chain `c` (1-based) out of `chains`.
pub fn chain_suffix(c: usize, chains: usize) -> String {
    if chains == 1 {
        String::new()
    } else {
        format!("_{c}")
    }
}

fn rate(stat: (u64, u64)) -> String {
    if stat.1 == 0 {
        "-".into()
    } else {
        format!("{:.3}", stat.0 as f64 / stat.1 as f64)
    }
}

fn acceptance_line(s: &AcceptanceStats) -> String {
    format!(
        "acceptance: split {} merge {} ordering {} xi {} a {} b {} py {} regime switches {}",
        rate(s.split),
        rate(s.merge),
        rate(s.ordering),
        rate(s.xi),
        rate(s.a),
        rate(s.b),
        rate(s.py),
        s.regime_switches
    )
}

struct ChainJob<'a> {
    dag: &'a Dag,
    priors: PriorConfig,
    tuning: TuningConfig,
    mode: Mode,
    pseudo: Option<PseudoPriors>,
    out: &'a Path,
    label: String,
    suffix: String,
    quiet: bool,
}

fn run_one(job: ChainJob<'_>) -> Result<String, CliError> {
    let total = job.tuning.burn_in + job.tuning.iterations;
    let mut sampler = Sampler::new(job.dag, job.priors, job.tuning, job.mode, job.pseudo)?;
    let mut sink = FileTraceSink::create(job.out, &job.suffix)?;
    let start = Instant::now();
    let mut last = start;
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", job.out.display()));
    sampler
        .run(&mut sink, |t| {
            if job.quiet {
                return;
            }
            let now = Instant::now();
            if now.duration_since(last) >= Duration::from_secs(2) || t == total {
                last = now;
                let secs = now.duration_since(start).as_secs_f64();
                eprintln!("{}: {t}/{total} sweeps, {:.1} it/s", job.label, t as f64 / secs.max(1e-9));
            }
        })
        .map_err(io_err)?;
    sink.finish().map_err(io_err)?;
    let secs = start.elapsed().as_secs_f64();
    if !sampler.state().log_lik(job.dag).is_finite() {
        return Err(CliError::Numeric(format!("{}: log-likelihood is not finite", job.label)));
    }
    if job.mode == Mode::Select && total > 0 && sampler.stats().regime_switches == 0 {
        eprintln!(
            "{}: the chain never switched regime; adjust prob_finite in the config and rerun until both regimes are visited",
            job.label
        );
    }
    Ok(format!(
        "{}: {total} sweeps in {secs:.2} s ({:.1} it/s); {}",
        job.label,
        total as f64 / secs.max(1e-9),
        acceptance_line(sampler.stats())
    ))
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    if args.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let pseudo = load_pseudopriors(args)?;
    let (priors, tuning) = resolve_config(args)?;
    let (raw, dag) = load_dag(args)?;
    tuning.validate(dag.n())?;

    create_dir(&args.out)?;
    write_lines(&args.out.join("nodes.txt"), raw.ids())?;
    write_file(&args.out.join("config.toml"), &RunConfig::from_parts(&priors, &tuning).to_toml())?;
    let mut run_info = toml::Table::new();
    run_info.insert("mode".into(), args.mode.name().into());
    run_info.insert("chains".into(), (args.chains as i64).into());
    run_info.insert("edges".into(), args.input.edges.display().to_string().into());
    write_file(&args.out.join("run.toml"), &run_info.to_string())?;

    let jobs: Vec<ChainJob> = (1..=args.chains)
        .map(|c| ChainJob {
            dag: &dag,
            priors,
            tuning: TuningConfig { seed: tuning.seed.wrapping_add(c as u64 - 1), ..tuning.clone() },
            mode: args.mode.mode(),
            pseudo: pseudo.clone(),
            out: &args.out,
            label: format!("chain {c}"),
            suffix: chain_suffix(c, args.chains),
            quiet: args.quiet,
        })
        .collect();
    let workers = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, args.chains);

    let slots: Vec<std::sync::Mutex<Option<ChainJob>>> = jobs.into_iter().map(|j| std::sync::Mutex::new(Some(j))).collect();
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<String, CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= slots.len() {
                            break done;
                        }
                        let job = slots[i].lock().expect("job slot").take().expect("each job taken once");
                        done.push((i, run_one(job)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("chain worker panicked")).collect()
    });
    results.sort_by_key(|r| r.0);
    for (_, r) in results {
        println!("{}", r?);
    }
    Ok(())
}

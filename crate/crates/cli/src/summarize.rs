use std::path::{Path, PathBuf};

use clap::Args;
use dagsbm_core::io::{
    chain_paths, read_index_rows, read_node_ids, read_trace, write_index_row, write_lines, write_matrix_csv,
    RunConfig, ScalarRow,
};
use dagsbm_core::likelihood::{PriorConfig, Regime};
use dagsbm_core::posterior::{ordering_density, salso_estimate, similarity_matrix, summarize_scalar};
use dagsbm_core::selection::{bayes_factor, fit_pseudopriors, PilotSamples};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::{create_dir, write_file};

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Fit directory written by `dagsbm fit`.
    #[arg(long, required_unless_present = "fit_pseudopriors")]
    pub run: Option<PathBuf>,
    /// Output directory (default: the fit directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the point-estimate search.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random restarts of the point-estimate search.
    #[arg(long, default_value_t = 16)]
    pub salso_runs: usize,
    /// Upper bound on the number of groups in the point estimate.
    #[arg(long)]
    pub max_k: Option<usize>,
    /// Prior probability of the finite regime (default: from config.toml).
    #[arg(long)]
    pub prob_finite: Option<f64>,
    /// Write moment-matched pseudopriors from two pilot fits to this file.
    #[arg(long, requires_all = ["finite", "infinite"], conflicts_with = "run")]
    pub fit_pseudopriors: Option<PathBuf>,
    /// Pilot fit directory of the finite regime.
    #[arg(long)]
    pub finite: Option<PathBuf>,
    /// Pilot fit directory of the infinite regime.
    #[arg(long)]
    pub infinite: Option<PathBuf>,
}

/// All retained samples of a fit directory, pooled over chains.
pub struct Samples {
    pub scalars: Vec<ScalarRow>,
    pub z: Vec<Vec<usize>>,
    pub sigma: Vec<Vec<usize>>,
    pub n: usize,
}

/// Chain suffixes present in `dir`, from the `trace*.csv` file names.
fn chain_suffixes(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(suffix) = name.strip_prefix("trace").and_then(|s| s.strip_suffix(".csv")) {
            out.push(suffix.to_string());
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no trace*.csv files", dir.display())));
    }
    out.sort_by_key(|s| (s.len(), s.clone()));
    Ok(out)
}

pub fn read_samples(dir: &Path) -> Result<Samples, CliError> {
    let mut all = Samples { scalars: Vec::new(), z: Vec::new(), sigma: Vec::new(), n: 0 };
    let mut n: Option<usize> = None;
    for suffix in chain_suffixes(dir)? {
        let [t, z, s, _] = chain_paths(dir, &suffix);
        let scalars = read_trace(&t)?;
        let zs = read_index_rows(&z)?;
        let sigmas = read_index_rows(&s)?;
        if zs.len() != scalars.len() || sigmas.len() != scalars.len() {
            return Err(CliError::Data(format!(
                "{}: {} trace rows, {} allocation rows, {} ordering rows",
                dir.display(),
                scalars.len(),
                zs.len(),
                sigmas.len()
            )));
        }
        for row in zs.iter().chain(&sigmas) {
            match n {
                None => n = Some(row.len()),
                Some(m) if m != row.len() => {
                    return Err(CliError::Data(format!(
                        "{}: rows of length {} and {} across chain files",
                        dir.display(),
                        m,
                        row.len()
                    )))
                }
                Some(_) => {}
            }
        }
        all.scalars.extend(scalars);
        all.z.extend(zs);
        all.sigma.extend(sigmas);
    }
    all.n = n.unwrap_or(0);
    Ok(all)
}

fn read_config(dir: &Path) -> Result<Option<RunConfig>, CliError> {
    let path = dir.join("config.toml");
    if path.exists() {
        Ok(Some(RunConfig::read(&path)?))
    } else {
        Ok(None)
    }
}

fn run_mode(dir: &Path) -> Result<Option<String>, CliError> {
    let path = dir.join("run.toml");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(table.get("mode").and_then(|v| v.as_str()).map(str::to_string))
}

fn node_names(dir: &Path, n: usize) -> Result<Vec<String>, CliError> {
    let path = dir.join("nodes.txt");
    if !path.exists() {
        return Ok((1..=n).map(|i| i.to_string()).collect());
    }
    let ids = read_node_ids(&path)?;
    if ids.len() != n {
        return Err(CliError::Data(format!("{}: {} node ids, samples have {n} nodes", path.display(), ids.len())));
    }
    Ok(ids)
}

fn summary_table(s: &Samples) -> Vec<String> {
    let columns: [(&str, Vec<f64>); 7] = [
        ("K_n", s.scalars.iter().map(|r| r.num_groups as f64).collect()),
        ("a", s.scalars.iter().map(|r| r.a).collect()),
        ("b", s.scalars.iter().map(|r| r.b).collect()),
        ("alpha", s.scalars.iter().filter_map(|r| r.alpha).collect()),
        ("theta", s.scalars.iter().filter_map(|r| r.theta).collect()),
        ("gamma", s.scalars.iter().filter_map(|r| r.gamma).collect()),
        ("k", s.scalars.iter().filter_map(|r| r.k.map(f64::from)).collect()),
    ];
    let mut lines = vec!["parameter,count,mean,sd,q2.5,median,q97.5".to_string()];
    for (name, xs) in columns {
        if let Some(v) = summarize_scalar(&xs) {
            lines.push(format!("{name},{},{},{},{},{},{}", v.count, v.mean, v.sd, v.q025, v.median, v.q975));
        }
    }
    lines
}

/// Finite-regime posterior probability, prior probability and Bayes factor.
fn bayes_factor_report(s: &Samples, prior: f64) -> Result<String, CliError> {
    let total = s.scalars.len() as f64;
    let finite = s.scalars.iter().filter(|r| r.regime == Regime::Finite).count() as f64 / total;
    let head = format!(
        "P(finite | data) = {finite:.4}\nP(finite) = {prior}\nprior odds = {:.4}\n",
        prior / (1.0 - prior)
    );
    match bayes_factor(finite, prior) {
        Ok(bf) => Ok(format!("{head}B_10 = {bf:.4}\n")),
        Err(e) => {
            print!("{head}");
            eprintln!("hint: adjust prob_finite in the config and rerun until both regimes are visited");
            Err(e.into())
        }
    }
}

fn summarize_run(args: &SummarizeArgs, dir: &Path) -> Result<(), CliError> {
    let out = args.out.clone().unwrap_or_else(|| dir.to_path_buf());
    let samples = read_samples(dir)?;
    if samples.scalars.is_empty() {
        return Err(CliError::Data(format!("{}: the traces hold no samples", dir.display())));
    }
    let names = node_names(dir, samples.n)?;
    let config = read_config(dir)?;
    create_dir(&out)?;

    let sim = similarity_matrix(&samples.z)?;
    write_matrix_csv(&out.join("similarity.csv"), &names, &names, &sim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let estimate = salso_estimate(&samples.z, args.max_k, args.salso_runs, &mut rng)?;
    write_index_row(&out.join("pointest.txt"), &estimate)?;

    let density = ordering_density(&samples.sigma)?;
    let rows = density.rows_by_mean_position();
    let positions: Vec<String> = (1..=samples.n).map(|p| p.to_string()).collect();
    let row_names: Vec<String> = rows.iter().map(|&r| names[r].clone()).collect();
    let row_values: Vec<Vec<f64>> = rows.iter().map(|&r| density.density[r].clone()).collect();
    write_matrix_csv(&out.join("ordering_density.csv"), &positions, &row_names, &row_values)?;

    write_lines(&out.join("posterior_summary.csv"), &summary_table(&samples))?;

    let groups = estimate.iter().max().map_or(0, |m| m + 1);
    println!("{} samples, {} nodes, point estimate with {groups} groups", samples.scalars.len(), samples.n);

    let select = run_mode(dir)?.as_deref() == Some("select");
    if select {
        let prior = args
            .prob_finite
            .or(config.map(|c| c.prob_finite))
            .unwrap_or_else(|| PriorConfig::default().prob_finite);
        let report = bayes_factor_report(&samples, prior)?;
        write_file(&out.join("bayes_factor.txt"), &report)?;
        print!("{report}");
    }
    Ok(())
}

fn pilot_priors(finite: &Path, infinite: &Path) -> Result<PriorConfig, CliError> {
    match (read_config(finite)?, read_config(infinite)?) {
        (Some(a), Some(b)) if a.priors() != b.priors() => Err(CliError::Data(format!(
            "{} and {} were fitted with different priors",
            finite.display(),
            infinite.display()
        ))),
        (Some(c), _) | (None, Some(c)) => Ok(c.priors()),
        (None, None) => Ok(PriorConfig::default()),
    }
}

fn fit_pseudoprior_file(path: &Path, finite: &Path, infinite: &Path) -> Result<(), CliError> {
    let fin = read_samples(finite)?;
    let inf = read_samples(infinite)?;
    let pilot = PilotSamples {
        gamma: fin.scalars.iter().filter_map(|r| r.gamma).collect(),
        k: fin.scalars.iter().filter_map(|r| r.k).collect(),
        alpha: inf.scalars.iter().filter_map(|r| r.alpha).collect(),
        theta: inf.scalars.iter().filter_map(|r| r.theta).collect(),
    };
    let priors = pilot_priors(finite, infinite)?;
    let fit = fit_pseudopriors(&pilot, &priors)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    write_file(path, &fit.pseudo.to_toml())?;
    println!("pseudopriors written to {}", path.display());
    Ok(())
}

pub fn run(args: &SummarizeArgs) -> Result<(), CliError> {
    if let Some(path) = &args.fit_pseudopriors {
        let (Some(finite), Some(infinite)) = (&args.finite, &args.infinite) else {
            return Err(CliError::Usage("--fit-pseudopriors needs --finite DIR and --infinite DIR".into()));
        };
        return fit_pseudoprior_file(path, finite, infinite);
    }
    match &args.run {
        Some(dir) => summarize_run(args, dir),
        None => Err(CliError::Usage("summarize needs --run DIR or --fit-pseudopriors FILE".into())),
    }
}

//! File formats: the flat key-value run configuration, chain traces and
//! matrix CSVs.
//!
//! Node indices and group labels are 1-based in every file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::{GammaPrior, PriorConfig, Regime, TruncatedNegBin};
use crate::sampler::{TraceRecord, TraceSink, TuningConfig};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }
}

/// Flat run configuration. Missing keys take their defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub a_shape: f64,
    pub a_rate: f64,
    pub b_shape: f64,
    pub b_rate: f64,
    pub xi_shape: f64,
    pub xi_rate: f64,
    pub theta_alpha_shape: f64,
    pub theta_alpha_rate: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub k_a: f64,
    pub k_b: f64,
    pub prob_finite: f64,
    pub leap: usize,
    pub s_xi: Vec<f64>,
    pub s_a: f64,
    pub s_b: f64,
    pub s_alpha: f64,
    pub s_theta: f64,
    pub s_gamma: f64,
    pub p_k: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub split_merge_per_sweep: usize,
    pub restricted_gibbs_scans: usize,
    pub fix_xi: bool,
    pub prior_only: bool,
    pub refresh_interval: u64,
    pub record_xi: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_parts(&PriorConfig::default(), &TuningConfig::default())
    }
}

impl RunConfig {
    pub fn from_parts(p: &PriorConfig, t: &TuningConfig) -> Self {
        Self {
            a_shape: p.a.shape,
            a_rate: p.a.rate,
            b_shape: p.b.shape,
            b_rate: p.b.rate,
            xi_shape: p.xi.shape,
            xi_rate: p.xi.rate,
            theta_alpha_shape: p.theta_plus_alpha.shape,
            theta_alpha_rate: p.theta_plus_alpha.rate,
            gamma_shape: p.gamma.shape,
            gamma_rate: p.gamma.rate,
            k_a: p.k.a_k,
            k_b: p.k.b_k,
            prob_finite: p.prob_finite,
            leap: t.leap,
            s_xi: t.s_xi.clone(),
            s_a: t.s_a,
            s_b: t.s_b,
            s_alpha: t.s_alpha,
            s_theta: t.s_theta,
            s_gamma: t.s_gamma,
            p_k: t.p_k,
            iterations: t.iterations,
            burn_in: t.burn_in,
            thinning: t.thinning,
            seed: t.seed,
            split_merge_per_sweep: t.split_merge_per_sweep,
            restricted_gibbs_scans: t.restricted_gibbs_scans,
            fix_xi: t.fix_xi,
            prior_only: t.prior_only,
            refresh_interval: t.refresh_interval,
            record_xi: t.record_xi,
        }
    }

    pub fn priors(&self) -> PriorConfig {
        PriorConfig {
            a: GammaPrior::new(self.a_shape, self.a_rate),
            b: GammaPrior::new(self.b_shape, self.b_rate),
            xi: GammaPrior::new(self.xi_shape, self.xi_rate),
            theta_plus_alpha: GammaPrior::new(self.theta_alpha_shape, self.theta_alpha_rate),
            gamma: GammaPrior::new(self.gamma_shape, self.gamma_rate),
            k: TruncatedNegBin { a_k: self.k_a, b_k: self.k_b },
            prob_finite: self.prob_finite,
        }
    }

    pub fn tuning(&self) -> TuningConfig {
        TuningConfig {
            leap: self.leap,
            s_xi: self.s_xi.clone(),
            s_a: self.s_a,
            s_b: self.s_b,
            s_alpha: self.s_alpha,
            s_theta: self.s_theta,
            s_gamma: self.s_gamma,
            p_k: self.p_k,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed: self.seed,
            split_merge_per_sweep: self.split_merge_per_sweep,
            restricted_gibbs_scans: self.restricted_gibbs_scans,
            fix_xi: self.fix_xi,
            prior_only: self.prior_only,
            refresh_interval: self.refresh_interval,
            record_xi: self.record_xi,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: Self = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.priors().validate().map_err(|e| IoError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml(&text)
    }
}

pub const TRACE_HEADER: &str = "iter,K_n,a,b,r,alpha,theta,gamma,k,loglik";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row of the scalar trace.
pub fn trace_row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.num_groups,
        r.a,
        r.b,
        r.regime.index(),
        opt(r.alpha),
        opt(r.theta),
        opt(r.gamma),
        opt(r.k),
        r.log_lik
    )
}

fn one_based(v: &[usize]) -> String {
    v.iter().map(|x| (x + 1).to_string()).collect::<Vec<_>>().join(" ")
}

/// Streams a chain to `trace.csv`, `z.txt`, `sigma.txt` and `xi.txt` in a
/// directory, with an optional file-name suffix.
pub struct FileTraceSink {
    trace: BufWriter<File>,
    z: BufWriter<File>,
    sigma: BufWriter<File>,
    xi: BufWriter<File>,
}

/// Paths of the four chain files for `suffix` (e.g. `"_2"` or `""`).
pub fn chain_paths(dir: &Path, suffix: &str) -> [PathBuf; 4] {
    [
        dir.join(format!("trace{suffix}.csv")),
        dir.join(format!("z{suffix}.txt")),
        dir.join(format!("sigma{suffix}.txt")),
        dir.join(format!("xi{suffix}.txt")),
    ]
}

impl FileTraceSink {
    pub fn create(dir: &Path, suffix: &str) -> Result<Self, IoError> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        let [t, z, s, x] = chain_paths(dir, suffix);
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| IoError::io(p, e));
        let mut trace = open(&t)?;
        writeln!(trace, "{TRACE_HEADER}").map_err(|e| IoError::io(&t, e))?;
        Ok(Self { trace, z: open(&z)?, sigma: open(&s)?, xi: open(&x)? })
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.trace.flush()?;
        self.z.flush()?;
        self.sigma.flush()?;
        self.xi.flush()
    }
}

impl TraceSink for FileTraceSink {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        writeln!(self.trace, "{}", trace_row(r))?;
        writeln!(self.z, "{}", one_based(&r.z))?;
        writeln!(self.sigma, "{}", one_based(&r.sigma))?;
        if let Some(xi) = &r.xi {
            let line: Vec<String> = xi.iter().map(|v| v.to_string()).collect();
            writeln!(self.xi, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Scalar columns of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRow {
    pub iteration: u64,
    pub num_groups: usize,
    pub a: f64,
    pub b: f64,
    pub regime: Regime,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<u32>,
    pub log_lik: f64,
}

fn read_lines(path: &Path) -> Result<Vec<String>, IoError> {
    let f = File::open(path).map_err(|e| IoError::io(path, e))?;
    BufReader::new(f).lines().collect::<Result<_, _>>().map_err(|e| IoError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<ScalarRow>, IoError> {
    let lines = read_lines(path)?;
    match lines.first() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => return Err(IoError::parse(path, 1, format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let err = |m: &str| IoError::parse(path, i + 1, m.to_string());
        if f.len() != 10 {
            return Err(err("expected 10 fields"));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.trim().parse().ok()
        }
        fn optional<T: std::str::FromStr>(s: &str) -> Result<Option<T>, ()> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                s.trim().parse().map(Some).map_err(|_| ())
            }
        }
        let regime = match f[4].trim() {
            "0" => Regime::Infinite,
            "1" => Regime::Finite,
            _ => return Err(err("regime must be 0 or 1")),
        };
        out.push(ScalarRow {
            iteration: num(f[0]).ok_or_else(|| err("bad iteration"))?,
            num_groups: num(f[1]).ok_or_else(|| err("bad K_n"))?,
            a: num(f[2]).ok_or_else(|| err("bad a"))?,
            b: num(f[3]).ok_or_else(|| err("bad b"))?,
            regime,
            alpha: optional(f[5]).map_err(|_| err("bad alpha"))?,
            theta: optional(f[6]).map_err(|_| err("bad theta"))?,
            gamma: optional(f[7]).map_err(|_| err("bad gamma"))?,
            k: optional(f[8]).map_err(|_| err("bad k"))?,
            log_lik: num(f[9]).ok_or_else(|| err("bad loglik"))?,
        });
    }
    Ok(out)
}

/// Reads one whitespace-separated vector of 1-based integers per line,
/// returned 0-based. Every line must have the same length.
pub fn read_index_rows(path: &Path) -> Result<Vec<Vec<usize>>, IoError> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
            .collect::<Option<_>>()
            .ok_or_else(|| IoError::parse(path, i + 1, "expected positive integers"))?;
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(IoError::parse(
                    path,
                    i + 1,
                    format!("row has {} entries, earlier rows have {}", row.len(), first.len()),
                ));
            }
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_real_rows(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()
            .ok_or_else(|| IoError::parse(path, i + 1, "expected numbers"))?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_index_row(path: &Path, row: &[usize]) -> Result<(), IoError> {
    std::fs::write(path, format!("{}\n", one_based(row))).map_err(|e| IoError::io(path, e))
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), IoError> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_node_ids(path: &Path) -> Result<Vec<String>, IoError> {
    Ok(read_lines(path)?.into_iter().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
}

/// CSV matrix with a header row of column names and a leading column of row
/// names.
pub fn write_matrix_csv(
    path: &Path,
    col_names: &[String],
    row_names: &[String],
    rows: &[Vec<f64>],
) -> Result<(), IoError> {
    let f = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "node,{}", col_names.join(","))?;
        for (name, row) in row_names.iter().zip(rows) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", name, vals.join(","))?;
        }
        w.flush()
    };
    go().map_err(|e| IoError::io(path, e))
}

/// Matrix CSV as (column names, row names, rows).
pub type MatrixCsv = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

pub fn read_matrix_csv(path: &Path) -> Result<MatrixCsv, IoError> {
    let lines = read_lines(path)?;
    let header = lines.first().ok_or_else(|| IoError::parse(path, 1, "empty file"))?;
    let cols: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        names.push(f.next().unwrap_or_default().to_string());
        let row: Vec<f64> = f
            .map(|t| t.parse().ok())
            .collect::<Option<_>>()
            .ok_or_else(|| IoError::parse(path, i + 1, "expected numbers"))?;
        if row.len() != cols.len() {
            return Err(IoError::parse(path, i + 1, "row width differs from header"));
        }
        rows.push(row);
    }
    Ok((cols, names, rows))
}

//! Log-probabilities of the model: Pitman-Yor partition law, collapsed and
//! full Poisson likelihoods, and the hyperparameter priors.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{is_topological, Dag};
use crate::state::{counts_unchecked, AllocationState, BlockCounts, DegreeCorrections, OrderingState};

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("rising factorial needs a positive base, got {0}")]
    NonPositiveBase(f64),
    #[error("invalid Pitman-Yor parameters: {0}")]
    InvalidPy(String),
    #[error("gamma density needs positive shape and rate, got ({0}, {1})")]
    InvalidGamma(f64, f64),
    #[error("negative binomial prior needs a_k > 0 and b_k in (0, 1), got ({0}, {1})")]
    InvalidNegBin(f64, f64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("block matrix is {found}x{found}, allocation has {expected} groups")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("block rate {0} is negative")]
    NegativeRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Infinite,
    Finite,
}

impl Regime {
    /// 0 for the infinite regime, 1 for the finite one.
    pub fn index(self) -> u8 {
        match self {
            Regime::Infinite => 0,
            Regime::Finite => 1,
        }
    }
}

/// Pitman-Yor hyperparameters in either regime.
///
/// The finite regime stores `(gamma, k)` and stands for discount `-gamma`
/// and strength `k * gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PyParams {
    Infinite { alpha: f64, theta: f64 },
    Finite { gamma: f64, k: u32 },
}

impl PyParams {
    pub fn regime(&self) -> Regime {
        match self {
            PyParams::Infinite { .. } => Regime::Infinite,
            PyParams::Finite { .. } => Regime::Finite,
        }
    }

    pub fn validate(&self) -> Result<(), LikelihoodError> {
        match *self {
            PyParams::Infinite { alpha, theta } => {
                if !(0.0..1.0).contains(&alpha) || !(theta > -alpha) || !theta.is_finite() {
                    return Err(LikelihoodError::InvalidPy(format!(
                        "need 0 <= alpha < 1 and theta > -alpha, got alpha={alpha}, theta={theta}"
                    )));
                }
            }
            PyParams::Finite { gamma, k } => {
                if !(gamma > 0.0) || !gamma.is_finite() || k == 0 {
                    return Err(LikelihoodError::InvalidPy(format!(
                        "need gamma > 0 and k >= 1, got gamma={gamma}, k={k}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// `alpha` in the usual parametrisation (negative when finite).
    pub fn discount(&self) -> f64 {
        match *self {
            PyParams::Infinite { alpha, .. } => alpha,
            PyParams::Finite { gamma, .. } => -gamma,
        }
    }

    /// `theta` in the usual parametrisation.
    pub fn strength(&self) -> f64 {
        match *self {
            PyParams::Infinite { theta, .. } => theta,
            PyParams::Finite { gamma, k } => k as f64 * gamma,
        }
    }

    /// Log weight of joining an existing group of size `size`.
    #[inline]
    pub fn ln_existing_weight(&self, size: usize) -> f64 {
        (size as f64 - self.discount()).ln()
    }

    /// Log weight of opening group number `groups + 1`. The finite regime
    /// gives `-inf` once `groups == k`.
    #[inline]
    /// With no groups yet the new group is the only option; its weight is
    /// taken as one since `theta` itself may be negative.
    pub fn ln_new_weight(&self, groups: usize) -> f64 {
        if groups == 0 {
            return 0.0;
        }
        match *self {
            PyParams::Infinite { alpha, theta } => (theta + alpha * groups as f64).ln(),
            PyParams::Finite { gamma, k } => {
                if groups as u32 >= k {
                    f64::NEG_INFINITY
                } else {
                    (gamma * (k as f64 - groups as f64)).ln()
                }
            }
        }
    }
}

/// Shape/rate pair of the gamma prior on the block rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaHyper {
    pub a: f64,
    pub b: f64,
}

/// Gamma(shape, rate) distribution used for every positive hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        gamma_ln_pdf_unchecked(x, self.shape, self.rate)
    }

    pub fn validate(&self) -> Result<(), LikelihoodError> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(LikelihoodError::InvalidGamma(self.shape, self.rate))
        }
    }
}

/// Negative binomial with zero removed from its support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNegBin {
    pub a_k: f64,
    pub b_k: f64,
}

impl TruncatedNegBin {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        if self.a_k > 0.0 && self.b_k > 0.0 && self.b_k < 1.0 {
            Ok(())
        } else {
            Err(LikelihoodError::InvalidNegBin(self.a_k, self.b_k))
        }
    }

    pub fn ln_pmf(&self, k: u32) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.a_k, self.b_k);
        let kf = k as f64;
        -(-(a * b.ln()).exp_m1()).ln() + ln_gamma(kf + a) - ln_gamma(a) - ln_gamma(kf + 1.0)
            + a * b.ln()
            + kf * (-b).ln_1p()
    }
}

/// Every prior of the model, with the defaults used for citation data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub a: GammaPrior,
    pub b: GammaPrior,
    pub xi: GammaPrior,
    /// Prior on `theta + alpha` (infinite regime); `alpha` is uniform on [0, 1).
    pub theta_plus_alpha: GammaPrior,
    pub gamma: GammaPrior,
    pub k: TruncatedNegBin,
    /// Prior probability of the finite regime.
    pub prob_finite: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a: GammaPrior::new(1.0, 0.01),
            b: GammaPrior::new(1.0, 0.01),
            xi: GammaPrior::new(1.0, 1.0),
            theta_plus_alpha: GammaPrior::new(1.0, 0.01),
            gamma: GammaPrior::new(1.0, 0.01),
            k: TruncatedNegBin { a_k: 1.0, b_k: 0.01 },
            prob_finite: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        for g in [self.a, self.b, self.xi, self.theta_plus_alpha, self.gamma] {
            g.validate()?;
        }
        self.k.validate()?;
        if !(0.0..=1.0).contains(&self.prob_finite) {
            return Err(LikelihoodError::InvalidPy(format!(
                "regime prior probability {} outside [0, 1]",
                self.prob_finite
            )));
        }
        Ok(())
    }

    /// Log prior density of the Pitman-Yor parameters within their regime.
    pub fn ln_py_prior(&self, py: &PyParams) -> f64 {
        if !py.is_valid() {
            return f64::NEG_INFINITY;
        }
        match *py {
            PyParams::Infinite { alpha, theta } => {
                uniform_unit_ln_pdf(alpha) + self.theta_plus_alpha.ln_pdf(theta + alpha)
            }
            PyParams::Finite { gamma, k } => self.gamma.ln_pdf(gamma) + self.k.ln_pmf(k),
        }
    }
}

/// `ln[x (x+1) ... (x+n-1)]`, zero for `n == 0`.
pub fn log_rising_factorial(x: f64, n: u64) -> Result<f64, LikelihoodError> {
    if !(x > 0.0) {
        return Err(LikelihoodError::NonPositiveBase(x));
    }
    Ok(ln_rising(x, n))
}

#[inline]
fn ln_rising(x: f64, n: u64) -> f64 {
    if n < 32 {
        (0..n).map(|t| (x + t as f64).ln()).sum()
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

/// Log of the Pitman-Yor exchangeable partition probability for group sizes
/// `sizes` (base-measure factor excluded). Finite regime with more groups
/// than `k` gives `-inf`.
pub fn log_eppf(sizes: &[usize], py: &PyParams) -> Result<f64, LikelihoodError> {
    py.validate()?;
    Ok(ln_eppf_unchecked(sizes, py))
}

pub(crate) fn ln_eppf_unchecked(sizes: &[usize], py: &PyParams) -> f64 {
    let k = sizes.len();
    if let PyParams::Finite { k: cap, .. } = py {
        if k > *cap as usize {
            return f64::NEG_INFINITY;
        }
    }
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let alpha = py.discount();
    let theta = py.strength();
    let mut acc = 0.0;
    for j in 1..k {
        acc += (theta + j as f64 * alpha).ln();
    }
    acc -= ln_rising(theta + 1.0, (n - 1) as u64);
    for &s in sizes {
        acc += ln_rising(1.0 - alpha, (s - 1) as u64);
    }
    acc
}

/// Predictive probabilities of joining each group, then of a new group.
pub fn crp_weights(sizes: &[usize], py: &PyParams) -> Result<Vec<f64>, LikelihoodError> {
    py.validate()?;
    if sizes.is_empty() {
        return Ok(vec![1.0]);
    }
    let n: usize = sizes.iter().sum();
    let denom = py.strength() + n as f64;
    let mut w: Vec<f64> = sizes.iter().map(|&s| py.ln_existing_weight(s).exp() / denom).collect();
    w.push(py.ln_new_weight(sizes.len()).exp() / denom);
    Ok(w)
}

/// Contribution of one `(E, M)` cell to the collapsed log-likelihood:
/// `ln Gamma(E+a) - ln Gamma(a) + a ln b - (E+a) ln(M+b)`. An empty cell
/// contributes exactly zero.
#[inline]
pub fn ln_cell(e: u64, m: f64, hyper: GammaHyper) -> f64 {
    let GammaHyper { a, b } = hyper;
    let ef = e as f64;
    let gamma_ratio = if e == 0 {
        0.0
    } else if e < 16 {
        (0..e).map(|t| (a + t as f64).ln()).sum()
    } else {
        ln_gamma(ef + a) - ln_gamma(a)
    };
    gamma_ratio + a * b.ln() - (ef + a) * (m + b).ln()
}

/// Sum of [`ln_cell`] over a count matrix.
pub fn ln_block_term(counts: &BlockCounts, hyper: GammaHyper) -> f64 {
    counts.cells().map(|(e, m)| ln_cell(e, m, hyper)).sum()
}

/// `sum_edges y ln(xi_p xi_q) - sum_edges ln(y!)`; does not depend on the
/// ordering or the allocation.
pub fn ln_data_term(dag: &Dag, xi: &DegreeCorrections) -> f64 {
    let xs = xi.values();
    dag.edges()
        .iter()
        .zip(dag.counts())
        .map(|(&(p, q), &c)| c as f64 * (xs[p] * xs[q]).ln())
        .sum::<f64>()
        - dag.log_count_factorials()
}

/// Log-likelihood with the block rates integrated out under Gamma(a, b).
/// Non-topological orderings give `-inf`.
pub fn log_lik_collapsed(
    dag: &Dag,
    ordering: &OrderingState,
    alloc: &AllocationState,
    xi: &DegreeCorrections,
    hyper: GammaHyper,
) -> f64 {
    if !is_topological(dag, ordering) {
        return f64::NEG_INFINITY;
    }
    let counts = counts_unchecked(dag, ordering, alloc, xi);
    ln_data_term(dag, xi) + ln_block_term(&counts, hyper)
}

/// Poisson log-likelihood given explicit block rates `c`.
pub fn log_lik_full(
    dag: &Dag,
    ordering: &OrderingState,
    alloc: &AllocationState,
    xi: &DegreeCorrections,
    c: &[Vec<f64>],
) -> Result<f64, LikelihoodError> {
    let k = alloc.num_groups();
    if c.len() != k || c.iter().any(|row| row.len() != k) {
        return Err(LikelihoodError::DimensionMismatch { expected: k, found: c.len() });
    }
    if let Some(&v) = c.iter().flatten().find(|v| !(**v >= 0.0)) {
        return Err(LikelihoodError::NegativeRate(v));
    }
    if !is_topological(dag, ordering) {
        return Ok(f64::NEG_INFINITY);
    }
    let n = dag.n();
    let (z, xs) = (alloc.labels(), xi.values());
    let mut y = std::collections::HashMap::with_capacity(dag.edge_count());
    for (&e, &cnt) in dag.edges().iter().zip(dag.counts()) {
        y.insert(e, cnt);
    }
    let sigma = ordering.sigma();
    let mut acc = 0.0;
    for a in 0..n {
        let p = sigma[a];
        for &q in &sigma[a + 1..n] {
            let rate = xs[p] * xs[q] * c[z[p]][z[q]];
            let count = y.get(&(p, q)).copied().unwrap_or(0);
            acc -= rate;
            if count > 0 {
                if rate == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                acc += count as f64 * rate.ln() - ln_gamma(count as f64 + 1.0);
            }
        }
    }
    Ok(acc)
}

/// Log-mass of the zero-truncated negative binomial prior on `k`.
pub fn log_prior_k(k: u32, a_k: f64, b_k: f64) -> Result<f64, LikelihoodError> {
    if k == 0 {
        return Err(LikelihoodError::ZeroK);
    }
    let d = TruncatedNegBin { a_k, b_k };
    d.validate()?;
    Ok(d.ln_pmf(k))
}

/// Gamma(shape, rate) log-density; `-inf` outside the support.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> Result<f64, LikelihoodError> {
    GammaPrior::new(shape, rate).validate()?;
    Ok(gamma_ln_pdf_unchecked(x, shape, rate))
}

#[inline]
fn gamma_ln_pdf_unchecked(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Uniform log-density on `[0, 1)`, the discount's prior.
pub fn uniform_unit_ln_pdf(alpha: f64) -> f64 {
    if (0.0..1.0).contains(&alpha) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

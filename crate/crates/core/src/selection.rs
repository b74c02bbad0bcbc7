//! Carlin-Chib selection between the finite and infinite Pitman-Yor regimes.
//!
//! While the chain sits in one regime, the other regime's parameters are
//! refreshed from a pseudoprior. Pseudopriors are moment-matched to pilot
//! runs of each regime on its own.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use thiserror::Error;

use crate::likelihood::{ln_eppf_unchecked, GammaPrior, PriorConfig, PyParams, Regime, TruncatedNegBin};
use crate::sampler::{ChainState, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("pilot trace for the {0:?} regime is empty")]
    EmptyPilot(Regime),
    #[error("probabilities must lie in [0, 1], got posterior {posterior} and prior {prior}")]
    OutOfRange { posterior: f64, prior: f64 },
    #[error("prior probability of the finite regime must lie strictly in (0, 1), got {0}")]
    DegeneratePrior(f64),
    #[error("the chain never left the {favours:?} regime; the Bayes factor is {}", if *favours == Regime::Finite { "+infinity" } else { "0" })]
    InfiniteEvidence { favours: Regime },
    #[error("invalid pseudoprior file: {0}")]
    Parse(String),
}

impl SelectionError {
    /// Signed limit for the unbounded cases: `+inf` when all evidence
    /// favours the finite regime, `0` when it favours the infinite one.
    pub fn limit(&self) -> Option<f64> {
        match self {
            SelectionError::InfiniteEvidence { favours: Regime::Finite } => Some(f64::INFINITY),
            SelectionError::InfiniteEvidence { favours: Regime::Infinite } => Some(0.0),
            _ => None,
        }
    }
}

/// Density on the positive reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PositiveDensity {
    /// `ln x ~ N(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl PositiveDensity {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PositiveDensity::LogNormal { mu, sigma } => {
                let z = (x.ln() - mu) / sigma;
                -0.5 * z * z - x.ln() - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            PositiveDensity::Gamma { shape, rate } => GammaPrior::new(shape, rate).ln_pdf(x),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            PositiveDensity::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("valid lognormal").sample(rng),
            PositiveDensity::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
            }
        }
    }
}

/// Beta density on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDensity {
    pub shape1: f64,
    pub shape2: f64,
}

impl BetaDensity {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.shape1 - 1.0) * x.ln() + (self.shape2 - 1.0) * (-x).ln_1p() - ln_beta(self.shape1, self.shape2)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        Beta::new(self.shape1, self.shape2).expect("valid beta").sample(rng)
    }
}

/// Draws from the negative binomial truncated to `k >= 1`, as a
/// gamma-Poisson mixture with zeros rejected.
pub fn sample_truncated_negbin(nb: &TruncatedNegBin, rng: &mut impl Rng) -> u32 {
    let scale = (1.0 - nb.b_k) / nb.b_k;
    let mix = Gamma::new(nb.a_k, scale).expect("valid negative binomial");
    loop {
        let lambda: f64 = mix.sample(rng);
        if !(lambda > 0.0) {
            continue;
        }
        let k: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
        if k >= 1.0 && k <= u32::MAX as f64 {
            return k as u32;
        }
    }
}

/// Pseudopriors for the parameters of the regime the chain is not in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoPriors {
    /// Used while in the infinite regime, for the finite regime's `gamma`.
    pub gamma: PositiveDensity,
    /// Used while in the infinite regime, for the finite regime's `k`.
    pub k: TruncatedNegBin,
    /// Used while in the finite regime, for the infinite regime's `alpha`.
    pub alpha: BetaDensity,
    /// Used while in the finite regime, for `theta + alpha`.
    pub theta_plus_alpha: PositiveDensity,
}

impl PseudoPriors {
    /// The priors themselves, used as pseudopriors.
    pub fn from_priors(priors: &PriorConfig) -> Self {
        Self {
            gamma: PositiveDensity::Gamma { shape: priors.gamma.shape, rate: priors.gamma.rate },
            k: priors.k,
            alpha: BetaDensity { shape1: 1.0, shape2: 1.0 },
            theta_plus_alpha: PositiveDensity::Gamma {
                shape: priors.theta_plus_alpha.shape,
                rate: priors.theta_plus_alpha.rate,
            },
        }
    }

    /// Log pseudoprior density of the parameters of `py`'s regime.
    pub fn ln_density(&self, py: &PyParams) -> f64 {
        match *py {
            PyParams::Finite { gamma, k } => self.gamma.ln_pdf(gamma) + self.k.ln_pmf(k),
            PyParams::Infinite { alpha, theta } => {
                self.alpha.ln_pdf(alpha) + self.theta_plus_alpha.ln_pdf(theta + alpha)
            }
        }
    }

    pub fn sample(&self, regime: Regime, rng: &mut impl Rng) -> PyParams {
        match regime {
            Regime::Finite => PyParams::Finite {
                gamma: self.gamma.sample(rng),
                k: sample_truncated_negbin(&self.k, rng),
            },
            Regime::Infinite => {
                let alpha = self.alpha.sample(rng);
                let sum = self.theta_plus_alpha.sample(rng);
                PyParams::Infinite { alpha, theta: sum - alpha }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pseudopriors serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, SelectionError> {
        let p: Self = toml::from_str(text).map_err(|e| SelectionError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let positive = |d: &PositiveDensity| match *d {
            PositiveDensity::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            PositiveDensity::Gamma { shape, rate } => GammaPrior::new(shape, rate).validate().is_ok(),
        };
        let ok = positive(&self.gamma)
            && positive(&self.theta_plus_alpha)
            && self.k.validate().is_ok()
            && self.alpha.shape1 > 0.0
            && self.alpha.shape2 > 0.0
            && self.alpha.shape1.is_finite()
            && self.alpha.shape2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SelectionError::Parse("non-positive or non-finite parameter".into()))
        }
    }
}

/// Pilot samples of each regime's parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PilotSamples {
    pub gamma: Vec<f64>,
    pub k: Vec<u32>,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
}

impl PilotSamples {
    pub fn from_traces(finite: &[TraceRecord], infinite: &[TraceRecord]) -> Self {
        Self {
            gamma: finite.iter().filter_map(|r| r.gamma).collect(),
            k: finite.iter().filter_map(|r| r.k).collect(),
            alpha: infinite.iter().filter_map(|r| r.alpha).collect(),
            theta: infinite.iter().filter_map(|r| r.theta).collect(),
        }
    }
}

/// Result of a pseudoprior fit, with a note for every parameter that fell
/// back to its prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPriorFit {
    pub pseudo: PseudoPriors,
    pub warnings: Vec<String>,
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn degenerate(var: f64, mean: f64) -> bool {
    !(var > 1e-12 * mean.abs().max(1.0).powi(2)) || !var.is_finite()
}

/// Moment-matched pseudopriors: lognormal for `gamma`, negative binomial for
/// `k`, beta for `alpha` and gamma for `theta + alpha`. Zero-variance pilots
/// fall back to the corresponding prior.
pub fn fit_pseudopriors(pilot: &PilotSamples, priors: &PriorConfig) -> Result<PseudoPriorFit, SelectionError> {
    if pilot.gamma.is_empty() || pilot.k.is_empty() {
        return Err(SelectionError::EmptyPilot(Regime::Finite));
    }
    if pilot.alpha.is_empty() || pilot.theta.is_empty() || pilot.alpha.len() != pilot.theta.len() {
        return Err(SelectionError::EmptyPilot(Regime::Infinite));
    }
    let mut pseudo = PseudoPriors::from_priors(priors);
    let mut warnings = Vec::new();

    let (mu, var) = mean_var(pilot.gamma.iter().map(|g| g.ln()));
    if degenerate(var, mu) {
        warnings.push("gamma pilot has no spread; using its prior as pseudoprior".into());
    } else {
        pseudo.gamma = PositiveDensity::LogNormal { mu, sigma: var.sqrt() };
    }

    let (mean, var) = mean_var(pilot.k.iter().map(|&k| k as f64));
    if degenerate(var, mean) {
        warnings.push("k pilot has no spread; using its prior as pseudoprior".into());
    } else {
        // mean = a (1 - b) / b, var = mean / b; under-dispersed pilots are
        // clipped to near-Poisson
        let b = (mean / var).clamp(1e-6, 1.0 - 1e-3);
        let a = (mean * b / (1.0 - b)).max(1e-3);
        pseudo.k = TruncatedNegBin { a_k: a, b_k: b };
    }

    let (mean, var) = mean_var(pilot.alpha.iter().copied());
    if degenerate(var, mean) || !(mean > 0.0 && mean < 1.0) || var >= mean * (1.0 - mean) {
        warnings.push("alpha pilot cannot be moment-matched; using its prior as pseudoprior".into());
    } else {
        let c = mean * (1.0 - mean) / var - 1.0;
        pseudo.alpha = BetaDensity { shape1: mean * c, shape2: (1.0 - mean) * c };
    }

    let (mean, var) = mean_var(pilot.alpha.iter().zip(&pilot.theta).map(|(a, t)| a + t));
    if degenerate(var, mean) || !(mean > 0.0) {
        warnings.push("theta + alpha pilot has no spread; using its prior as pseudoprior".into());
    } else {
        pseudo.theta_plus_alpha = PositiveDensity::Gamma { shape: mean * mean / var, rate: mean / var };
    }

    Ok(PseudoPriorFit { pseudo, warnings })
}

/// `(ln A_0, ln A_1)` for the current state, with both regimes' parameters
/// taken as stored.
pub fn regime_log_weights(state: &ChainState, priors: &PriorConfig, pseudo: &PseudoPriors) -> (f64, f64) {
    let sizes = state.sbm.alloc().sizes();
    let inf = state.py_for(Regime::Infinite);
    let fin = state.py_for(Regime::Finite);
    let term = |own: &PyParams, other: &PyParams, p: f64| {
        let prior = priors.ln_py_prior(own);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        ln_eppf_unchecked(sizes, own) + prior + pseudo.ln_density(other) + p.ln()
    };
    let a0 = term(&inf, &fin, 1.0 - priors.prob_finite);
    let a1 = term(&fin, &inf, priors.prob_finite);
    (a0, a1)
}

/// Probability of the finite regime given `(ln A_0, ln A_1)`.
pub fn prob_finite_from_weights(ln_a0: f64, ln_a1: f64) -> f64 {
    assert!(
        ln_a0 > f64::NEG_INFINITY || ln_a1 > f64::NEG_INFINITY,
        "both regimes have zero mass"
    );
    if ln_a1 == f64::NEG_INFINITY {
        return 0.0;
    }
    if ln_a0 == f64::NEG_INFINITY {
        return 1.0;
    }
    1.0 / (1.0 + (ln_a0 - ln_a1).exp())
}

/// Refreshes the off-regime parameters from their pseudoprior, then samples
/// the regime. Only the regime and the off-regime parameters change.
pub fn regime_gibbs_step(state: &mut ChainState, priors: &PriorConfig, pseudo: &PseudoPriors, rng: &mut impl Rng) {
    let off = match state.regime {
        Regime::Infinite => Regime::Finite,
        Regime::Finite => Regime::Infinite,
    };
    let fresh = pseudo.sample(off, rng);
    state.set_py(fresh);
    let (a0, a1) = regime_log_weights(state, priors, pseudo);
    let p1 = prob_finite_from_weights(a0, a1);
    state.regime = if rng.random::<f64>() < p1 { Regime::Finite } else { Regime::Infinite };
}

/// `B_10`: posterior odds of the finite regime over its prior odds.
pub fn bayes_factor(posterior_finite: f64, prior_finite: f64) -> Result<f64, SelectionError> {
    let (p, pi) = (posterior_finite, prior_finite);
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&pi) {
        return Err(SelectionError::OutOfRange { posterior: p, prior: pi });
    }
    if pi == 0.0 || pi == 1.0 {
        return Err(SelectionError::DegeneratePrior(pi));
    }
    if p == 1.0 {
        return Err(SelectionError::InfiniteEvidence { favours: Regime::Finite });
    }
    if p == 0.0 {
        return Err(SelectionError::InfiniteEvidence { favours: Regime::Infinite });
    }
    Ok((p / (1.0 - p)) / (pi / (1.0 - pi)))
}

/// Fraction of records in the finite regime.
pub fn finite_fraction(trace: &[TraceRecord]) -> Option<f64> {
    if trace.is_empty() {
        return None;
    }
    Some(trace.iter().filter(|r| r.regime == Regime::Finite).count() as f64 / trace.len() as f64)
}

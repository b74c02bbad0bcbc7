//! Forward simulation of the degree-corrected Poisson block model.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dag, GraphError};
use crate::state::OrderingState;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rate matrix entry {0} is negative or not finite")]
    InvalidRate(f64),
    #[error("degree correction {0} is not positive")]
    InvalidXi(f64),
    #[error("cannot plant {k} groups in {n} nodes")]
    TooManyGroups { k: usize, n: usize },
    #[error("planted model needs within > between >= 0, got within {within}, between {between}")]
    InvalidPlanted { within: f64, between: f64 },
    #[error("invalid truth file: {0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parameters a graph was simulated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Group of each node, 0-based.
    pub labels: Vec<usize>,
    /// `sigma[position] = node`, 0-based.
    pub sigma: Vec<usize>,
    pub rates: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
}

impl Truth {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }
}

/// Draws `Y_pq ~ Pois(xi_p xi_q C[z_p][z_q])` for every pair with `p` placed
/// before `q` in `sigma`. With `binarize`, counts are clipped to one.
pub fn generate_dag(
    sigma: &OrderingState,
    z: &[usize],
    rates: &[Vec<f64>],
    xi: &[f64],
    rng: &mut impl Rng,
    binarize: bool,
) -> Result<Dag, SynthError> {
    let n = sigma.len();
    if z.len() != n || xi.len() != n {
        return Err(SynthError::Dimension(format!(
            "ordering has {n} nodes, labels {}, degree corrections {}",
            z.len(),
            xi.len()
        )));
    }
    let k = rates.len();
    if rates.iter().any(|row| row.len() != k) {
        return Err(SynthError::Dimension("rate matrix is not square".into()));
    }
    if let Some(&bad) = z.iter().find(|&&l| l >= k) {
        return Err(SynthError::Dimension(format!("label {bad} with a {k}x{k} rate matrix")));
    }
    if let Some(&bad) = rates.iter().flatten().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(SynthError::InvalidRate(bad));
    }
    if let Some(&bad) = xi.iter().find(|x| !(**x > 0.0)) {
        return Err(SynthError::InvalidXi(bad));
    }
    let order = sigma.sigma();
    let mut edges = Vec::new();
    for (i, &p) in order.iter().enumerate() {
        for &q in &order[i + 1..] {
            let lambda = xi[p] * xi[q] * rates[z[p]][z[q]];
            if lambda <= 0.0 {
                continue;
            }
            let y: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
            if y >= 1.0 {
                let count = if binarize { 1 } else { y as u32 };
                edges.push((p, q, count));
            }
        }
    }
    Ok(Dag::with_counts(n, edges)?)
}

/// Truth of the planted model: labels `p mod k`, identity ordering, unit
/// degree corrections, `within` on the diagonal of the rate matrix and
/// `between` elsewhere.
pub fn planted_truth(n: usize, k: usize, within: f64, between: f64) -> Result<Truth, SynthError> {
    if k == 0 || k > n {
        return Err(SynthError::TooManyGroups { k, n });
    }
    if !(within > between && between >= 0.0) {
        return Err(SynthError::InvalidPlanted { within, between });
    }
    let rates = (0..k).map(|i| (0..k).map(|j| if i == j { within } else { between }).collect()).collect();
    Ok(Truth { labels: (0..n).map(|p| p % k).collect(), sigma: (0..n).collect(), rates, xi: vec![1.0; n] })
}

/// Simulates a graph from `truth`.
pub fn generate_from_truth(truth: &Truth, rng: &mut impl Rng, binarize: bool) -> Result<Dag, SynthError> {
    let sigma = OrderingState::from_sigma(truth.sigma.clone())
        .map_err(|e| SynthError::Dimension(e.to_string()))?;
    generate_dag(&sigma, &truth.labels, &truth.rates, &truth.xi, rng, binarize)
}

/// Binary planted-partition graph with equal-size groups.
pub fn generate_planted(n: usize, k: usize, within: f64, between: f64, seed: u64) -> Result<(Dag, Truth), SynthError> {
    let truth = planted_truth(n, k, within, between)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dag = generate_from_truth(&truth, &mut rng, true)?;
    Ok((dag, truth))
}

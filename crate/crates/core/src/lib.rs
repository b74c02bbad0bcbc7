//! Bayesian nonparametric stochastic block model for directed acyclic graphs.
//!
//! Edges are modelled as Poisson counts whose rates depend on the groups of
//! the two endpoints and on per-node degree corrections. Only dyads that
//! respect a latent topological ordering carry any mass, so the ordering is
//! sampled jointly with the allocation. Group allocations follow a
//! Pitman-Yor process prior in either its infinite (`0 <= alpha < 1`) or its
//! finite (`alpha < 0`) regime, and the regime itself can be selected with a
//! Carlin-Chib Gibbs step.
//!
//! Module map:
//!
//! * [`graph`]: parsing, cleaning and topological sorting.
//! * [`state`]: ordering, allocation and the block count matrices.
//! * [`likelihood`]: partition law, likelihoods and priors.
//! * [`sampler`]: the MCMC sweep and chain driver.
//! * [`selection`]: pseudopriors, the regime step and Bayes factors.
//! * [`posterior`]: similarity matrix, VI loss, SALSO, ordering densities.
//! * [`synth`]: forward simulation.
//! * [`io`]: configuration, trace and matrix files.

pub mod graph;
pub mod io;
pub mod likelihood;
pub mod posterior;
pub mod sampler;
pub mod selection;
pub mod state;
pub mod synth;

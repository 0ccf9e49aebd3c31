//! Bayesian nonparametric scalar-on-image regression with Potts-Gibbs
//! partition priors.
//!
//! Pixel coefficients are tied within clusters of a spatial partition whose
//! prior combines a Potts term over 4-neighbour pairs with a Gibbs-type
//! exchangeable prior (Dirichlet process, Pitman-Yor, or mixture of finite
//! mixtures). Fitting uses a Gibbs sampler whose partition step is a
//! generalised Swendsen-Wang update with collapsed normal-inverse-gamma
//! marginals.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.
//!
//! ```no_run
//! use potts_sir::{run, make_scenario, RunConfig, ScenarioConfig, ScenarioName};
//!
//! let (truth, train, _test) = make_scenario::<f64>(&ScenarioConfig::new(ScenarioName::Scenario1, 7)).unwrap();
//! let fit = run(&train, &RunConfig::default()).unwrap();
//! let report = potts_sir::summary::metrics(&fit, Some(&truth), None).unwrap();
//! println!("minVI ARI = {:?}", report.min_vi_metrics.ari);
//! ```

// `!(x > 0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod gibbs;
pub mod gsw;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod mcmc;
pub mod regression;
pub mod scalar;
pub mod summary;
pub mod synth;

pub use error::{Error, Result};
pub use gsw::{EtaMode, GswSettings};
pub use lattice::{BondSet, NestedClustering, PartitionState};
pub use mcmc::{run, InitPolicy, Sampler};
pub use scalar::Real;
pub use summary::{adjusted_rand_index, min_vi_partition, variation_of_information, MetricsReport, SimilarityMatrix};
pub use synth::{make_scenario, univariate_beta_hats, ScenarioConfig, ScenarioName};

pub type Lattice = lattice::Lattice<f64>;
pub type Dataset = regression::Dataset<f64>;
pub type Hyperparameters = regression::Hyperparameters<f64>;
pub type CoefficientState = regression::CoefficientState<f64>;
pub type GibbsModel = gibbs::GibbsModel<f64>;
pub type RunConfig = mcmc::RunConfig<f64>;
pub type FitResult = mcmc::FitResult<f64>;
pub type Scenario = synth::Scenario<f64>;

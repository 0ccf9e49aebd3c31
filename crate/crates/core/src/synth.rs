//! Simulated scalar-on-image datasets with planted coefficient images on a
//! 10 x 10 grid, and the per-pixel univariate slopes used to modulate bonds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondSet, Lattice, NestedClustering, PartitionState};
use crate::linalg::cholesky_in_place;
use crate::regression::Dataset;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    /// A centred 4 x 4 block with coefficient 1 on a zero background (M = 2).
    Scenario1,
    /// Four 4 x 4 corner blocks (2, -2, 1, -1) around a zero cross (M = 5).
    Scenario2,
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scenario1" => Ok(Self::Scenario1),
            "scenario2" => Ok(Self::Scenario2),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario {other:?} (expected scenario1 or scenario2)"
            ))),
        }
    }
}

fn default_rho() -> f64 {
    0.3
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_n_train() -> usize {
    300
}
fn default_n_test() -> usize {
    100
}
fn default_intercept() -> f64 {
    1.0
}

/// Generation settings; every field except the scenario has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioName,
    #[serde(default)]
    pub seed: u64,
    /// Correlation between 4-neighbours; pixel covariance is `rho^distance`.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioName, seed: u64) -> Self {
        Self {
            scenario,
            seed,
            rho: default_rho(),
            sigma2: default_sigma2(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            intercept: default_intercept(),
        }
    }
}

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Scenario<T> {
    pub name: ScenarioName,
    pub height: usize,
    pub width: usize,
    /// 1-based canonical labels of the planted partition.
    pub true_labels: Vec<usize>,
    pub true_beta: Vec<T>,
    pub true_sigma2: T,
    pub true_mu: Vec<T>,
    pub rho: T,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl<T: Real> Scenario<T> {
    pub fn partition(&self) -> PartitionState {
        PartitionState::from_labels(&self.true_labels)
    }

    pub fn num_clusters(&self) -> usize {
        self.partition().num_clusters()
    }
}

const SIDE: usize = 10;

fn planted(name: ScenarioName) -> (Vec<usize>, Vec<f64>) {
    let mut labels = vec![0usize; SIDE * SIDE];
    let values: Vec<f64> = match name {
        ScenarioName::Scenario1 => {
            for r in 3..7 {
                for c in 3..7 {
                    labels[r * SIDE + c] = 1;
                }
            }
            vec![0.0, 1.0]
        }
        ScenarioName::Scenario2 => {
            for r in 0..SIDE {
                for c in 0..SIDE {
                    labels[r * SIDE + c] = match (r < 4, r > 5, c < 4, c > 5) {
                        (true, _, true, _) => 1,
                        (true, _, _, true) => 2,
                        (_, true, true, _) => 3,
                        (_, true, _, true) => 4,
                        _ => 0,
                    };
                }
            }
            vec![0.0, 2.0, -2.0, 1.0, -1.0]
        }
    };
    let beta = labels.iter().map(|&l| values[l]).collect();
    (labels, beta)
}

/// True if every cluster of `labels` is 4-connected on the lattice.
pub fn clusters_are_connected<T: Real>(lattice: &Lattice<T>, labels: &[usize]) -> bool {
    let bonds = BondSet::new(lattice.pairs().iter().map(|&(j, k)| labels[j] == labels[k]).collect());
    let Ok(components) = NestedClustering::from_bonds(lattice, &bonds) else {
        return false;
    };
    components.len() == PartitionState::from_labels(labels).num_clusters()
}

/// Generates the scenario truth plus training and test datasets.
///
/// Images are Gaussian with covariance `rho^{|s_j - s_k|}` (Euclidean grid
/// distance), the only fixed effect is an intercept, and
/// `y = intercept + x' beta + N(0, sigma2)`.
pub fn make_scenario<T: Real>(config: &ScenarioConfig) -> Result<(Scenario<T>, Dataset<T>, Dataset<T>)> {
    if !(0.0..1.0).contains(&config.rho) || !(config.sigma2 > 0.0) || config.n_train < 2 {
        return Err(Error::InvalidParameter(
            "scenario needs 0 <= rho < 1, sigma2 > 0 and n_train >= 2".into(),
        ));
    }
    let lattice = Lattice::new(SIDE, SIDE, T::zero())?;
    let (labels, beta) = planted(config.scenario);
    assert!(
        clusters_are_connected(&lattice, &labels),
        "planted clusters must be contiguous"
    );
    let p = lattice.len();

    let mut chol = vec![T::zero(); p * p];
    for j in 0..p {
        for k in 0..p {
            let (a, b) = (lattice.coords(j), lattice.coords(k));
            let dr = a.0 as f64 - b.0 as f64;
            let dc = a.1 as f64 - b.1 as f64;
            chol[j * p + k] = T::lit(config.rho.powf((dr * dr + dc * dc).sqrt()));
        }
    }
    if !cholesky_in_place(&mut chol, p) {
        return Err(Error::NotPositiveDefinite { dim: p });
    }

    let beta_t: Vec<T> = beta.iter().map(|&b| T::lit(b)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut simulate = |n: usize| -> Result<Dataset<T>> {
        let mut y = Vec::with_capacity(n);
        let mut x_rows = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<T> = (0..p).map(|_| T::sample_standard_normal(&mut rng)).collect();
            let x: Vec<T> = (0..p).map(|j| (0..=j).map(|k| chol[j * p + k] * z[k]).sum()).collect();
            let signal: T = x.iter().zip(&beta_t).map(|(&a, &b)| a * b).sum();
            let noise = T::sample_standard_normal(&mut rng) * T::lit(config.sigma2.sqrt());
            y.push(T::lit(config.intercept) + signal + noise);
            x_rows.push(x);
        }
        let w_rows = vec![vec![T::one()]; n];
        Dataset::from_rows(y, &w_rows, &x_rows, lattice.clone())
    };
    let train = simulate(config.n_train)?;
    let test = simulate(config.n_test)?;
    let scenario = Scenario {
        name: config.scenario,
        height: SIDE,
        width: SIDE,
        true_labels: PartitionState::from_labels(&labels)
            .labels()
            .iter()
            .map(|l| l + 1)
            .collect(),
        true_beta: beta_t,
        true_sigma2: T::lit(config.sigma2),
        true_mu: vec![T::lit(config.intercept)],
        rho: T::lit(config.rho),
        n_train: config.n_train,
        n_test: config.n_test,
        seed: config.seed,
    };
    Ok((scenario, train, test))
}

/// Least-squares slope of `y` on `(1, x_.j)` for every pixel. Constant
/// pixels get slope 0 and a warning.
pub fn univariate_beta_hats<T: Real>(data: &Dataset<T>) -> Result<Vec<T>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidParameter("univariate regressions need n >= 2".into()));
    }
    let nt = T::of(n);
    let y_mean = data.y().iter().copied().sum::<T>() / nt;
    let out = (0..data.p())
        .map(|j| {
            let x = data.pixel(j);
            let x_mean = x.iter().copied().sum::<T>() / nt;
            let (mut sxy, mut sxx) = (T::zero(), T::zero());
            for (&xi, &yi) in x.iter().zip(data.y()) {
                let dx = xi - x_mean;
                sxy += dx * (yi - y_mean);
                sxx += dx * dx;
            }
            let scale = x.iter().map(|v| v.abs()).fold(T::zero(), T::max).max(T::one());
            if sxx <= T::epsilon() * scale * scale * nt {
                log::warn!("pixel {j} is constant across samples; univariate slope set to 0");
                T::zero()
            } else {
                sxy / sxx
            }
        })
        .collect();
    Ok(out)
}

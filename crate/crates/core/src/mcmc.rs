//! The three-block Gibbs sweep and its run-level orchestration.
//!
//! One sweep: (1) bonds, nested clusters and GSW reassignment with the
//! regression coefficients integrated out; (2) a joint draw of
//! `(mu, beta*, sigma^2)`; (3) `eta*` given `beta*` and `sigma^2`.
//!
//! Chain `c` of a run seeded with `s` uses `ChaCha8Rng::seed_from_u64(s)`
//! switched to stream `c`, so chains are independent and reproducible.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GibbsModel, LogVTable};
use crate::gsw::{
    reassign_nested, sample_bonds, EtaMode, GswConfig, GswSettings, PairWeights, PartitionChain, ReassignContext,
};
use crate::lattice::{Lattice, NestedClustering, PartitionState};
use crate::regression::{draw_eta, pixel_betas, CoefficientState, Dataset, Hyperparameters, Workspace};
use crate::scalar::Real;
use crate::synth::univariate_beta_hats;

/// Starting partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitPolicy {
    OneCluster,
    Singletons,
    /// Exactly `k` clusters with uniformly random membership.
    RandomK {
        k: usize,
    },
    /// Square blocks of side `size` (edge blocks are truncated).
    Tiles {
        size: usize,
    },
}

impl Default for InitPolicy {
    fn default() -> Self {
        Self::Tiles { size: 5 }
    }
}

pub fn initialize_partition<T: Real, R: Rng + ?Sized>(
    lattice: &Lattice<T>,
    policy: InitPolicy,
    rng: &mut R,
) -> Result<PartitionState> {
    let p = lattice.height() * lattice.width();
    let labels: Vec<usize> = match policy {
        InitPolicy::OneCluster => vec![0; p],
        InitPolicy::Singletons => (0..p).collect(),
        InitPolicy::RandomK { k } => {
            if k == 0 || k > p {
                return Err(Error::InvalidParameter(format!(
                    "random init needs 1 <= K <= p, got K={k}, p={p}"
                )));
            }
            let mut perm: Vec<usize> = (0..p).collect();
            perm.shuffle(rng);
            let mut labels = vec![0; p];
            for (i, &j) in perm.iter().enumerate() {
                labels[j] = if i < k { i } else { rng.random_range(0..k) };
            }
            labels
        }
        InitPolicy::Tiles { size } => {
            if size == 0 {
                return Err(Error::InvalidParameter("tile size must be positive".into()));
            }
            let per_row = lattice.width().div_ceil(size);
            (0..p)
                .map(|j| {
                    let (r, c) = (j / lattice.width(), j % lattice.width());
                    (r / size) * per_row + c / size
                })
                .collect()
        }
    };
    Ok(PartitionState::from_labels(&labels))
}

fn default_iterations() -> usize {
    5000
}
fn default_burn_in() -> usize {
    2000
}
fn default_thin() -> usize {
    2
}
fn default_chains() -> usize {
    1
}
fn default_upsilon<T: Real>() -> T {
    T::lit(2.0 / 3.0)
}
fn default_model<T: Real>() -> GibbsModel<T> {
    GibbsModel::Dp { alpha: T::one() }
}

/// Everything needed to reproduce a fit; echoed into `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RunConfig<T> {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: GibbsModel<T>,
    #[serde(default)]
    pub gsw: GswSettings<T>,
    #[serde(default)]
    pub hyper: Hyperparameters<T>,
    #[serde(default = "default_upsilon")]
    pub upsilon: T,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default)]
    pub eta: EtaMode<T>,
}

impl<T: Real> Default for RunConfig<T> {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            chains: default_chains(),
            seed: 0,
            model: default_model(),
            gsw: GswSettings::default(),
            hyper: Hyperparameters::default(),
            upsilon: default_upsilon(),
            init: InitPolicy::default(),
            eta: EtaMode::Sampled,
        }
    }
}

impl<T: Real> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter(
                "iterations, thin and chains must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.upsilon >= T::zero()) || !self.upsilon.is_finite() {
            return Err(Error::InvalidParameter("upsilon must be nonnegative".into()));
        }
        if let EtaMode::Fixed { value } = self.eta {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(Error::InvalidParameter("fixed eta must be positive".into()));
            }
        }
        self.model.validated()?;
        self.gsw.validate()
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in).is_multiple_of(self.thin)
    }
}

/// The RNG of chain `chain` under master seed `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// One chain's sampler state and fixed inputs.
pub struct Sampler<'a, T: Real> {
    data: &'a Dataset<T>,
    hyper: Hyperparameters<T>,
    model: GibbsModel<T>,
    table: LogVTable<T>,
    weights: PairWeights<T>,
    h: usize,
    eta_mode: EtaMode<T>,
    chain: PartitionChain<T>,
    coeffs: CoefficientState<T>,
    last_nested: usize,
    rng: ChaCha8Rng,
    ws: Workspace<T>,
}

impl<'a, T: Real> Sampler<'a, T> {
    /// Prepares a chain; `data`'s lattice couplings are replaced by the
    /// configured common `upsilon` by [`run`], not here.
    pub fn new(data: &'a Dataset<T>, config: &RunConfig<T>, gsw: GswConfig<T>, chain_index: usize) -> Result<Self> {
        config.validate()?;
        let hyper = config.hyper.resolved(data.q())?;
        let mut rng = chain_rng(config.seed, chain_index);
        let table = LogVTable::new(config.model, data.p())?;
        let weights = PairWeights::new(data.lattice(), &gsw)?;
        let init = initialize_partition(data.lattice(), config.init, &mut rng)?;
        let eta: Vec<T> = (0..init.num_clusters())
            .map(|_| match config.eta {
                EtaMode::Fixed { value } => value,
                EtaMode::Sampled => T::sample_inv_gamma(&mut rng, hyper.a_eta, hyper.b_eta),
            })
            .collect();
        let chain = PartitionChain::new(data, init.labels(), eta)?;
        let mut sampler = Self {
            data,
            hyper,
            model: config.model,
            table,
            weights,
            h: gsw.settings.h,
            eta_mode: config.eta,
            coeffs: CoefficientState {
                mu: Vec::new(),
                beta_star: Vec::new(),
                sigma2: T::one(),
                eta_star: Vec::new(),
            },
            chain,
            last_nested: 0,
            rng,
            ws: Workspace::default(),
        };
        sampler.step_coefficients()?;
        Ok(sampler)
    }

    /// Step 1: bonds, nested clusters, reassignment, canonicalisation.
    pub fn step_partition(&mut self) -> Result<()> {
        let lattice = self.data.lattice();
        let bonds = sample_bonds(lattice, &self.chain.labels, &self.weights, &mut self.rng);
        debug_assert!(bonds.respects(lattice, &self.chain.labels));
        let nested = NestedClustering::from_bonds(lattice, &bonds)?;
        self.last_nested = nested.len();
        let ctx = ReassignContext {
            data: self.data,
            table: &self.table,
            hyper: &self.hyper,
            weights: &self.weights,
            h: self.h,
            eta_mode: self.eta_mode,
        };
        reassign_nested(&ctx, &mut self.chain, &nested, &mut self.rng, &mut self.ws)?;
        self.chain.canonicalize_and_rebuild(self.data)
    }

    /// Step 2: `(mu, beta*, sigma^2)` from the full conditional.
    pub fn step_coefficients(&mut self) -> Result<()> {
        let post = self.chain.design.posterior(&self.chain.eta, &self.hyper)?;
        let (beta, sigma2) = post.draw(&mut self.rng);
        let q = self.data.q();
        self.coeffs.mu = beta[..q].to_vec();
        self.coeffs.beta_star = beta[q..].to_vec();
        self.coeffs.sigma2 = sigma2;
        self.coeffs.eta_star = self.chain.eta.clone();
        Ok(())
    }

    /// Step 3: `eta*` given `beta*`; a no-op in fixed-eta mode.
    pub fn step_eta(&mut self) {
        if let EtaMode::Sampled = self.eta_mode {
            self.chain.eta = draw_eta(&self.coeffs.beta_star, self.coeffs.sigma2, &self.hyper, &mut self.rng);
            self.coeffs.eta_star = self.chain.eta.clone();
        }
    }

    pub fn sweep(&mut self) -> Result<()> {
        self.step_partition()?;
        self.step_coefficients()?;
        self.step_eta();
        Ok(())
    }

    pub fn labels(&self) -> &[usize] {
        &self.chain.labels
    }

    pub fn partition(&self) -> PartitionState {
        PartitionState::from_labels(&self.chain.labels)
    }

    pub fn coefficients(&self) -> &CoefficientState<T> {
        &self.coeffs
    }

    pub fn num_clusters(&self) -> usize {
        self.chain.num_clusters()
    }

    /// Nested-cluster count of the last partition step.
    pub fn last_nested_count(&self) -> usize {
        self.last_nested
    }

    pub fn log_posterior(&self) -> Result<T> {
        log_unnormalized_posterior(self.data, &self.chain.labels, &self.coeffs, &self.model, &self.hyper)
    }
}

fn log_inv_gamma<T: Real>(x: T, shape: T, scale: T) -> T {
    shape * scale.ln() - shape.log_gamma() - (shape + T::one()) * x.ln() - scale / x
}

fn log_normal<T: Real>(x: T, mean: T, var: T) -> T {
    let r = x - mean;
    -T::lit(0.5) * ((T::lit(2.0) * T::PI() * var).ln() + r * r / var)
}

/// Log of the joint density of data and all parameters, up to the Potts
/// normalising constant. `labels` must be canonical and match `coeffs`.
pub fn log_unnormalized_posterior<T: Real>(
    data: &Dataset<T>,
    labels: &[usize],
    coeffs: &CoefficientState<T>,
    model: &GibbsModel<T>,
    hyper: &Hyperparameters<T>,
) -> Result<T> {
    let hyper = hyper.resolved(data.q())?;
    let state = PartitionState::from_labels(labels);
    if state.num_clusters() != coeffs.beta_star.len() || coeffs.eta_star.len() != coeffs.beta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "cluster coefficients",
            expected: state.num_clusters(),
            got: coeffs.beta_star.len(),
        });
    }
    let s2 = coeffs.sigma2;
    let betas = pixel_betas(&coeffs.beta_star, state.labels(), state.sizes());
    let fitted = data.predict(&coeffs.mu, &betas);
    let mut total: T = data.y().iter().zip(&fitted).map(|(&y, &f)| log_normal(y, f, s2)).sum();
    for ((&mu, &m), &c) in coeffs.mu.iter().zip(&hyper.m_mu).zip(&hyper.c_mu) {
        total += log_normal(mu, m, s2 * c);
    }
    for (&b, &e) in coeffs.beta_star.iter().zip(&coeffs.eta_star) {
        total += log_normal(b, T::zero(), s2 * e) + log_inv_gamma(e, hyper.a_eta, hyper.b_eta);
    }
    total += log_inv_gamma(s2, hyper.a_sigma, hyper.b_sigma);
    total += model.log_prior_partition(data.lattice(), state.labels())?;
    Ok(total)
}

/// Per-iteration trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiagnosticRow<T> {
    pub chain: usize,
    pub iteration: usize,
    pub num_clusters: usize,
    pub num_nested: usize,
    pub sigma2: T,
    pub log_posterior: T,
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct ChainTrace<T> {
    pub chain: usize,
    pub partitions: Vec<PartitionState>,
    pub coefficients: Vec<CoefficientState<T>>,
    pub diagnostics: Vec<DiagnosticRow<T>>,
}

/// Retained draws of all chains, concatenated in chain order.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub config: RunConfig<T>,
    pub beta_hat: Vec<T>,
    pub draw_chain: Vec<usize>,
    pub partition_draws: Vec<PartitionState>,
    pub coefficient_draws: Vec<CoefficientState<T>>,
    pub diagnostics: Vec<DiagnosticRow<T>>,
}

impl<T: Real> FitResult<T> {
    pub fn len(&self) -> usize {
        self.partition_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition_draws.is_empty()
    }

    /// Per-pixel coefficients of draw `d`.
    pub fn pixel_betas(&self, d: usize) -> Vec<T> {
        let s = &self.partition_draws[d];
        pixel_betas(&self.coefficient_draws[d].beta_star, s.labels(), s.sizes())
    }

    /// Posterior mean of the per-pixel coefficient image.
    pub fn posterior_mean_beta(&self) -> Vec<T> {
        let p = self.partition_draws.first().map_or(0, PartitionState::len);
        let mut acc = vec![T::zero(); p];
        for d in 0..self.len() {
            for (a, b) in acc.iter_mut().zip(self.pixel_betas(d)) {
                *a += b;
            }
        }
        let k = T::of(self.len().max(1));
        acc.iter().map(|&a| a / k).collect()
    }

    /// Posterior mean of the covariate coefficients.
    pub fn posterior_mean_mu(&self) -> Vec<T> {
        let q = self.coefficient_draws.first().map_or(0, |c| c.mu.len());
        let mut acc = vec![T::zero(); q];
        for c in &self.coefficient_draws {
            for (a, &m) in acc.iter_mut().zip(&c.mu) {
                *a += m;
            }
        }
        let k = T::of(self.len().max(1));
        acc.iter().map(|&a| a / k).collect()
    }
}

/// Runs a single chain with a prepared GSW configuration.
pub fn run_chain<T: Real>(
    data: &Dataset<T>,
    config: &RunConfig<T>,
    gsw: GswConfig<T>,
    chain_index: usize,
) -> Result<ChainTrace<T>> {
    let mut sampler = Sampler::new(data, config, gsw, chain_index)?;
    let mut trace = ChainTrace {
        chain: chain_index,
        partitions: Vec::with_capacity(config.retained()),
        coefficients: Vec::with_capacity(config.retained()),
        diagnostics: Vec::with_capacity(config.iterations),
    };
    for it in 0..config.iterations {
        sampler.sweep().map_err(|e| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        })?;
        let lp = sampler.log_posterior()?;
        if !lp.is_finite() {
            return Err(Error::Iteration {
                iteration: it,
                source: Box::new(Error::NonFinite("log posterior")),
            });
        }
        trace.diagnostics.push(DiagnosticRow {
            chain: chain_index,
            iteration: it,
            num_clusters: sampler.num_clusters(),
            num_nested: sampler.last_nested_count(),
            sigma2: sampler.coefficients().sigma2,
            log_posterior: lp,
        });
        if config.keeps(it) {
            trace.partitions.push(sampler.partition());
            trace.coefficients.push(sampler.coefficients().clone());
        }
    }
    Ok(trace)
}

/// Fits the model: sets the common coupling, freezes the univariate
/// estimates, and runs `config.chains` chains in parallel.
pub fn run<T: Real>(data: &Dataset<T>, config: &RunConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    let lattice = Lattice::new(data.lattice().height(), data.lattice().width(), config.upsilon)?;
    let data = data.clone().with_lattice(lattice)?;
    let beta_hat = univariate_beta_hats(&data)?;
    let gsw = GswConfig::new(config.gsw, beta_hat.clone())?;
    let traces = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&data, config, gsw.clone(), c))
        .collect::<Result<Vec<_>>>()?;
    let mut fit = FitResult {
        config: config.clone(),
        beta_hat,
        draw_chain: Vec::new(),
        partition_draws: Vec::new(),
        coefficient_draws: Vec::new(),
        diagnostics: Vec::new(),
    };
    for t in traces {
        fit.draw_chain.extend(std::iter::repeat_n(t.chain, t.partitions.len()));
        fit.partition_draws.extend(t.partitions);
        fit.coefficient_draws.extend(t.coefficients);
        fit.diagnostics.extend(t.diagnostics);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_partitions() {
        let lattice = Lattice::new(10, 10, 1.0).unwrap();
        let mut rng = chain_rng(0, 0);
        assert_eq!(
            initialize_partition(&lattice, InitPolicy::OneCluster, &mut rng)
                .unwrap()
                .num_clusters(),
            1
        );
        assert_eq!(
            initialize_partition(&lattice, InitPolicy::Singletons, &mut rng)
                .unwrap()
                .num_clusters(),
            100
        );
        let tiles = initialize_partition(&lattice, InitPolicy::Tiles { size: 5 }, &mut rng).unwrap();
        assert_eq!(tiles.num_clusters(), 4);
        assert_eq!(tiles.sizes(), &[25, 25, 25, 25]);
        assert_eq!(tiles.label(lattice.index(5, 5)), 0);
        assert_eq!(tiles.label(lattice.index(5, 6)), 1);
        assert_eq!(tiles.label(lattice.index(6, 5)), 2);
        let r = initialize_partition(&lattice, InitPolicy::RandomK { k: 7 }, &mut rng).unwrap();
        assert_eq!(r.num_clusters(), 7);
        assert!(initialize_partition(&lattice, InitPolicy::RandomK { k: 101 }, &mut rng).is_err());
    }

    #[test]
    fn retained_count() {
        let mut c = RunConfig::<f64> {
            iterations: 11,
            burn_in: 10,
            thin: 1,
            ..Default::default()
        };
        assert_eq!(c.retained(), 1);
        c.iterations = 5000;
        c.burn_in = 2000;
        c.thin = 2;
        assert_eq!(c.retained(), 1500);
        assert_eq!((0..5000).filter(|&i| c.keeps(i)).count(), 1500);
        c.burn_in = 5000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: RunConfig<f64> =
            serde_json::from_str(r#"{"model": {"type": "py", "alpha": 1.0, "delta": 0.25}}"#).unwrap();
        assert_eq!(c.iterations, 5000);
        assert_eq!(
            c.model,
            GibbsModel::Py {
                alpha: 1.0,
                delta: 0.25
            }
        );
        assert_eq!(c.init, InitPolicy::Tiles { size: 5 });
        let round: RunConfig<f64> = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
        let m: RunConfig<f64> = serde_json::from_str(
            r#"{"model": {"type": "mfm", "gamma": 1.0, "lambda": 2.0}, "eta": {"type": "fixed", "value": 2.0}}"#,
        )
        .unwrap();
        assert!(matches!(m.model, GibbsModel::Mfm { l_max: 200, .. }));
        assert_eq!(m.eta, EtaMode::Fixed { value: 2.0 });
    }
}

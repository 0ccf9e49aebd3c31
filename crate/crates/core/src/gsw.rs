//! Generalised Swendsen-Wang update of the partition.
//!
//! Bonds `r_jk ~ Ber(1 - exp(-u_jk * zeta_jk * 1[z_j = z_k]))` split the
//! clusters into bond-connected nested clusters. Each nested cluster is then
//! reassigned with an auxiliary-variable Gibbs step (Neal's Algorithm 8):
//! existing clusters are weighted by the Gibbs-type predictive term, the
//! collapsed marginal likelihood, and `exp(u_jk (1 - zeta_jk))` for every
//! unbonded neighbour pair joining the block to that cluster; `h` auxiliary
//! empty clusters share the new-cluster weight.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::LogVTable;
use crate::lattice::{canonicalize_labels, BondSet, Lattice, NestedClustering};
use crate::regression::{ClusteredDesign, Dataset, Hyperparameters, Target, Workspace};
use crate::scalar::{sample_log_weights, Real};

fn default_kappa<T: Real>() -> T {
    T::lit(0.5)
}
fn default_tau<T: Real>() -> T {
    T::one()
}
fn default_h() -> usize {
    1
}

/// Tuning of the bond probabilities and of the auxiliary-cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GswSettings<T> {
    #[serde(default = "default_kappa")]
    pub kappa: T,
    #[serde(default = "default_tau")]
    pub tau: T,
    #[serde(default = "default_h")]
    pub h: usize,
}

impl<T: Real> Default for GswSettings<T> {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            tau: default_tau(),
            h: default_h(),
        }
    }
}

impl<T: Real> GswSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= T::zero() && self.kappa <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        if !(self.tau >= T::zero()) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be nonnegative, got {}",
                self.tau
            )));
        }
        if self.h == 0 {
            return Err(Error::InvalidParameter("h must be at least 1".into()));
        }
        Ok(())
    }
}

/// Settings plus the frozen per-pixel univariate estimates `beta_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct GswConfig<T> {
    pub settings: GswSettings<T>,
    pub beta_hat: Vec<T>,
}

impl<T: Real> GswConfig<T> {
    pub fn new(settings: GswSettings<T>, beta_hat: Vec<T>) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings, beta_hat })
    }

    /// `kappa * exp(-tau * |beta_hat_j - beta_hat_k|)`.
    pub fn zeta(&self, j: usize, k: usize) -> T {
        let s = &self.settings;
        if s.tau == T::zero() {
            return s.kappa;
        }
        s.kappa * (-s.tau * (self.beta_hat[j] - self.beta_hat[k]).abs()).exp()
    }
}

/// Per-pair bond probabilities and Potts correction exponents.
#[derive(Debug, Clone)]
pub struct PairWeights<T> {
    /// `1 - exp(-u_jk zeta_jk)`, applied to same-label pairs.
    pub bond_prob: Vec<T>,
    /// `u_jk (1 - zeta_jk)`, the log correction for an unbonded agreeing pair.
    pub gain: Vec<T>,
}

impl<T: Real> PairWeights<T> {
    pub fn new(lattice: &Lattice<T>, config: &GswConfig<T>) -> Result<Self> {
        if config.beta_hat.len() != lattice.len() {
            return Err(Error::DimensionMismatch {
                what: "beta_hat",
                expected: lattice.len(),
                got: config.beta_hat.len(),
            });
        }
        let (bond_prob, gain) = lattice
            .pairs()
            .iter()
            .zip(lattice.couplings())
            .map(|(&(j, k), &u)| {
                let z = config.zeta(j, k);
                (T::one() - (-u * z).exp(), u * (T::one() - z))
            })
            .unzip();
        Ok(Self { bond_prob, gain })
    }
}

/// Draws bonds for the current labelling.
pub fn sample_bonds<T: Real, R: Rng + ?Sized>(
    lattice: &Lattice<T>,
    labels: &[usize],
    weights: &PairWeights<T>,
    rng: &mut R,
) -> BondSet {
    let bonds = lattice
        .pairs()
        .iter()
        .zip(&weights.bond_prob)
        .map(|(&(j, k), &prob)| labels[j] == labels[k] && prob > T::zero() && T::sample_unit(rng) < prob)
        .collect();
    BondSet::new(bonds)
}

/// How `eta*` of newly opened clusters is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "T: Real")]
pub enum EtaMode<T> {
    /// Auxiliary values are drawn from `IG(a_eta, b_eta)` and `eta*` is
    /// resampled every sweep.
    Sampled,
    /// Every cluster uses the same fixed value and `eta*` is never updated.
    Fixed { value: T },
}

#[allow(clippy::derivable_impls)]
impl<T> Default for EtaMode<T> {
    fn default() -> Self {
        Self::Sampled
    }
}

/// Partition-side state of a chain: labels, per-cluster `eta*`, and the
/// cached design statistics.
#[derive(Debug, Clone)]
pub struct PartitionChain<T> {
    pub labels: Vec<usize>,
    pub eta: Vec<T>,
    pub design: ClusteredDesign<T>,
}

impl<T: Real> PartitionChain<T> {
    pub fn new(data: &Dataset<T>, labels: &[usize], eta: Vec<T>) -> Result<Self> {
        let labels = canonicalize_labels(labels);
        let design = ClusteredDesign::build(data, &labels)?;
        if eta.len() != design.num_clusters() {
            return Err(Error::DimensionMismatch {
                what: "eta*",
                expected: design.num_clusters(),
                got: eta.len(),
            });
        }
        Ok(Self { labels, eta, design })
    }

    pub fn num_clusters(&self) -> usize {
        self.design.num_clusters()
    }

    pub fn sizes(&self) -> &[usize] {
        self.design.sizes()
    }

    /// Canonical relabelling plus a from-scratch rebuild of the statistics.
    pub fn canonicalize_and_rebuild(&mut self, data: &Dataset<T>) -> Result<()> {
        let mut order = Vec::with_capacity(self.eta.len());
        let mut seen = vec![usize::MAX; self.eta.len()];
        for l in self.labels.iter_mut() {
            if seen[*l] == usize::MAX {
                seen[*l] = order.len();
                order.push(*l);
            }
            *l = seen[*l];
        }
        self.eta = order.iter().map(|&o| self.eta[o]).collect();
        self.design = ClusteredDesign::build(data, &self.labels)?;
        Ok(())
    }
}

/// Everything the reassignment step reads but does not modify.
pub struct ReassignContext<'a, T> {
    pub data: &'a Dataset<T>,
    pub table: &'a LogVTable<T>,
    pub hyper: &'a Hyperparameters<T>,
    pub weights: &'a PairWeights<T>,
    pub h: usize,
    pub eta_mode: EtaMode<T>,
}

/// Reassigns every nested cluster once, in random order.
/// Statistics are updated incrementally; the caller canonicalises afterwards.
pub fn reassign_nested<T: Real, R: Rng + ?Sized>(
    ctx: &ReassignContext<'_, T>,
    chain: &mut PartitionChain<T>,
    nested: &NestedClustering,
    rng: &mut R,
    ws: &mut Workspace<T>,
) -> Result<()> {
    let data = ctx.data;
    let lattice = data.lattice();
    let n = data.n();
    // block volumes are fixed for the whole pass
    let volumes: Vec<Vec<T>> = nested
        .iter()
        .map(|members| {
            let mut v = vec![T::zero(); n];
            for &j in members {
                for (acc, &x) in v.iter_mut().zip(data.pixel(j)) {
                    *acc += x;
                }
            }
            v
        })
        .collect();
    let mut order: Vec<usize> = (0..nested.len()).collect();
    order.shuffle(rng);

    let log_h = T::of(ctx.h).ln();
    let mut potts: Vec<T> = Vec::new();
    let mut log_w: Vec<T> = Vec::new();
    let mut targets: Vec<(Target, T)> = Vec::new();

    for o in order {
        let members = nested.members(o);
        let size = members.len();
        let source = chain.labels[members[0]];
        let m = chain.num_clusters();
        let source_left = chain.sizes()[source] - size;
        let m_without = if source_left == 0 { m - 1 } else { m };
        let block = chain.design.move_block(data, &volumes[o], size);

        potts.clear();
        potts.resize(m, T::zero());
        for &j in members {
            for &(k, e) in lattice.neighbors(j) {
                if nested.labels()[k] != o {
                    potts[chain.labels[k]] += ctx.weights.gain[e];
                }
            }
        }

        log_w.clear();
        targets.clear();
        for l in 0..m {
            if l == source && source_left == 0 {
                continue;
            }
            let others = if l == source { source_left } else { chain.sizes()[l] };
            let lm = chain.design.log_marginal_after_move(
                &block,
                source,
                Target::Existing(l),
                &chain.eta,
                T::one(),
                ctx.hyper,
                ws,
            )?;
            log_w.push(ctx.table.log_pred_existing(others, size)? + lm + potts[l]);
            targets.push((Target::Existing(l), T::zero()));
        }
        let log_new = ctx.table.log_pred_new(m_without, size)? - log_h;
        for aux in 0..ctx.h {
            let eta_new = match ctx.eta_mode {
                EtaMode::Fixed { value } => value,
                // a block that is its whole cluster keeps its own eta* as the
                // first auxiliary candidate
                EtaMode::Sampled if aux == 0 && source_left == 0 => chain.eta[source],
                EtaMode::Sampled => T::sample_inv_gamma(rng, ctx.hyper.a_eta, ctx.hyper.b_eta),
            };
            let lm = chain.design.log_marginal_after_move(
                &block,
                source,
                Target::New,
                &chain.eta,
                eta_new,
                ctx.hyper,
                ws,
            )?;
            log_w.push(log_new + lm);
            targets.push((Target::New, eta_new));
        }

        let pick = sample_log_weights(&log_w, rng).ok_or(Error::NonFinite("reassignment weights"))?;
        let (target, eta_new) = targets[pick];
        commit_move(chain, &block, &volumes[o], members, source, target, eta_new);
    }
    Ok(())
}

fn commit_move<T: Real>(
    chain: &mut PartitionChain<T>,
    block: &crate::regression::MoveBlock<T>,
    volume: &[T],
    members: &[usize],
    source: usize,
    target: Target,
    eta_new: T,
) {
    if target == Target::Existing(source) {
        return;
    }
    let dest = match target {
        Target::Existing(l) => l,
        Target::New => {
            chain.eta.push(eta_new);
            chain.eta.len() - 1
        }
    };
    let last_before = chain.eta.len() - 1;
    for &j in members {
        chain.labels[j] = dest;
    }
    if let Some(removed) = chain.design.apply_move(block, volume, source, target) {
        chain.eta.swap_remove(removed);
        if removed != last_before {
            for l in chain.labels.iter_mut() {
                if *l == last_before {
                    *l = removed;
                }
            }
        }
    }
}

//! Gibbs-type random partition priors (DP, PY, MFM) evaluated in log space:
//! the weights `V_p(M)`, cluster weights `W(n)`, and the predictive terms
//! used when a nested cluster joins an existing or a new cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{potts_energy, Lattice};
use crate::scalar::{log_sum_exp, Real};

/// Default truncation of the MFM series.
pub const DEFAULT_L_MAX: usize = 200;
const L_MAX_CAP: usize = 100_000;
/// Relative size of the last retained series term that triggers extension.
const MFM_REL_TOL: f64 = 1e-12;

fn default_l_max() -> usize {
    DEFAULT_L_MAX
}

/// Partition-prior family and its hyperparameters.
///
/// For MFM the prior on the number of components is a Poisson(`lambda`)
/// shifted to `{1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GibbsModel<T> {
    Dp {
        alpha: T,
    },
    Py {
        alpha: T,
        delta: T,
    },
    Mfm {
        gamma: T,
        lambda: T,
        #[serde(default = "default_l_max")]
        l_max: usize,
    },
}

impl<T: Real> GibbsModel<T> {
    pub fn dp(alpha: T) -> Result<Self> {
        Self::Dp { alpha }.validated()
    }

    pub fn py(alpha: T, delta: T) -> Result<Self> {
        Self::Py { alpha, delta }.validated()
    }

    pub fn mfm(gamma: T, lambda: T) -> Result<Self> {
        Self::Mfm {
            gamma,
            lambda,
            l_max: DEFAULT_L_MAX,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Self::Dp { alpha } => alpha > T::zero() && alpha.is_finite(),
            Self::Py { alpha, delta } => delta >= T::zero() && delta < T::one() && alpha > -delta && alpha.is_finite(),
            Self::Mfm { gamma, lambda, l_max } => {
                gamma > T::zero() && gamma.is_finite() && lambda > T::zero() && lambda.is_finite() && l_max >= 1
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!("invalid partition prior {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dp { .. } => "DP",
            Self::Py { .. } => "PY",
            Self::Mfm { .. } => "MFM",
        }
    }

    // DP is the delta = 0 member of the PY family; sharing one code path
    // keeps PY(delta = 0) bit-identical to DP.
    fn alpha_delta(&self) -> Option<(T, T)> {
        match *self {
            Self::Dp { alpha } => Some((alpha, T::zero())),
            Self::Py { alpha, delta } => Some((alpha, delta)),
            Self::Mfm { .. } => None,
        }
    }

    /// `log V_p(M)`.
    pub fn log_v(&self, p: usize, m: usize) -> Result<T> {
        if m == 0 || m > p {
            return Err(Error::InvalidParameter(format!(
                "V_p(M) needs 1 <= M <= p, got p={p}, M={m}"
            )));
        }
        match self.alpha_delta() {
            // DP shares the PY expression at delta = 0
            Some((alpha, delta)) => {
                let prod: T = (1..m).map(|k| (alpha + T::of(k) * delta).ln()).sum();
                Ok((alpha + T::one()).log_gamma() + prod - (alpha + T::of(p)).log_gamma())
            }
            None => self.mfm_log_v(p, m).map(|(v, _)| v),
        }
    }

    /// MFM `log V_p(M)` together with the estimated log relative tail of the
    /// truncated series.
    pub fn mfm_log_v(&self, p: usize, m: usize) -> Result<(T, T)> {
        let Self::Mfm { gamma, lambda, l_max } = *self else {
            return Err(Error::InvalidParameter("series form only exists for MFM".into()));
        };
        let term = |l: usize| -> T {
            let lf = T::of(l);
            let log_pl = -lambda + T::of(l - 1) * lambda.ln() - lf.log_gamma();
            (gamma * lf).log_gamma() + (lf + T::one()).log_gamma()
                - (gamma * lf + T::of(p)).log_gamma()
                - T::of(l - m + 1).log_gamma()
                + log_pl
        };
        let start = m.max(1);
        let mut upper = l_max.max(start + 1);
        let mut terms: Vec<T> = (start..=upper).map(term).collect();
        loop {
            let total = log_sum_exp(&terms);
            let last = terms[terms.len() - 1];
            let log_ratio = last - terms[terms.len() - 2];
            if last - total < T::lit(MFM_REL_TOL).ln() && log_ratio < T::zero() {
                let r = log_ratio.exp();
                let tail = last + (r / (T::one() - r)).ln() - total;
                return Ok((total, tail));
            }
            if upper >= L_MAX_CAP {
                return Err(Error::TruncationTail {
                    p,
                    m,
                    l_max: upper,
                    tail: (last - total).exp().as_f64(),
                });
            }
            let next = (upper + upper / 2).min(L_MAX_CAP);
            terms.extend((upper + 1..=next).map(term));
            upper = next;
        }
    }

    /// `log W(n)` for a cluster of size `n`.
    pub fn log_w(&self, size: usize) -> Result<T> {
        if size == 0 {
            return Err(Error::InvalidParameter("cluster size must be positive".into()));
        }
        let n = T::of(size);
        Ok(match self.alpha_delta() {
            Some((_, delta)) => (n - delta).log_gamma() - (T::one() - delta).log_gamma(),
            None => {
                let gamma = self.mfm_gamma();
                (n + gamma).log_gamma() - gamma.log_gamma()
            }
        })
    }

    fn mfm_gamma(&self) -> T {
        match *self {
            Self::Mfm { gamma, .. } => gamma,
            _ => unreachable!("only called for MFM"),
        }
    }

    /// Log predictive weight for adding `moving` items to a cluster that
    /// holds `target` items once the movers are removed.
    pub fn log_pred_existing(&self, target: usize, moving: usize) -> Result<T> {
        if target == 0 {
            return Err(Error::InvalidParameter("existing cluster must be nonempty".into()));
        }
        let (n, a) = (T::of(target), T::of(moving));
        let shift = match self.alpha_delta() {
            Some((_, delta)) => -delta,
            None => self.mfm_gamma(),
        };
        Ok((n + a + shift).log_gamma() - (n + shift).log_gamma())
    }

    /// Log predictive weight for opening a new cluster with `moving` items,
    /// with `m_without` clusters occupied by the other items. Uncached; see
    /// [`LogVTable::log_pred_new`] for the sampler path.
    pub fn log_pred_new(&self, p: usize, m_without: usize, moving: usize) -> Result<T> {
        let v_ratio = match self {
            Self::Mfm { .. } if m_without > 0 => Some(self.log_v(p, m_without + 1)? - self.log_v(p, m_without)?),
            _ => None,
        };
        self.pred_new_with_ratio(m_without, moving, v_ratio)
    }

    fn pred_new_with_ratio(&self, m_without: usize, moving: usize, mfm_v_ratio: Option<T>) -> Result<T> {
        if moving == 0 {
            return Err(Error::InvalidParameter("moving block must be nonempty".into()));
        }
        let size_term = self.log_w(moving)?;
        // With no other cluster the new-cluster option is the only candidate,
        // so the prefactor is immaterial.
        if m_without == 0 {
            return Ok(size_term);
        }
        Ok(match self.alpha_delta() {
            Some((alpha, delta)) => (alpha + delta * T::of(m_without)).ln() + size_term,
            None => mfm_v_ratio.expect("V ratio supplied for MFM") + size_term,
        })
    }

    /// Log of the unnormalised Potts-Gibbs prior mass of a labelling:
    /// Potts energy + `log V_p(M)` + sum of `log W(|C_m|)`.
    pub fn log_prior_partition(&self, lattice: &Lattice<T>, labels: &[usize]) -> Result<T> {
        let sizes = cluster_sizes(labels);
        let mut total = potts_energy(lattice, labels) + self.log_v(labels.len(), sizes.len())?;
        for s in sizes {
            total += self.log_w(s)?;
        }
        Ok(total)
    }
}

fn cluster_sizes(labels: &[usize]) -> Vec<usize> {
    let m = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut sizes = vec![0usize; m];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes.retain(|&s| s > 0);
    sizes
}

/// `log V_p(M)` for one `(model, p)` and every `M` in `1..=p`.
#[derive(Debug, Clone)]
pub struct LogVTable<T> {
    model: GibbsModel<T>,
    p: usize,
    values: Vec<T>,
}

impl<T: Real> LogVTable<T> {
    pub fn new(model: GibbsModel<T>, p: usize) -> Result<Self> {
        let model = model.validated()?;
        let values = (1..=p).map(|m| model.log_v(p, m)).collect::<Result<Vec<_>>>()?;
        Ok(Self { model, p, values })
    }

    pub fn model(&self) -> &GibbsModel<T> {
        &self.model
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, m: usize) -> T {
        self.values[m - 1]
    }

    pub fn log_pred_existing(&self, target: usize, moving: usize) -> Result<T> {
        self.model.log_pred_existing(target, moving)
    }

    pub fn log_pred_new(&self, m_without: usize, moving: usize) -> Result<T> {
        let ratio = match self.model {
            GibbsModel::Mfm { .. } if m_without > 0 => Some(self.get(m_without + 1) - self.get(m_without)),
            _ => None,
        };
        self.model.pred_new_with_ratio(m_without, moving, ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_v_examples() {
        let dp = GibbsModel::dp(1.0).unwrap();
        assert_abs_diff_eq!(dp.log_v(3, 2).unwrap(), (1.0f64 / 6.0).ln(), epsilon = 1e-14);
        for alpha in [0.3, 1.0, 7.0] {
            assert_abs_diff_eq!(
                GibbsModel::dp(alpha).unwrap().log_v(1, 1).unwrap(),
                0.0,
                epsilon = 1e-14
            );
        }
        let py = GibbsModel::py(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(py.log_v(2, 2).unwrap(), 0.75f64.ln(), epsilon = 1e-14);
        assert!(dp.log_v(2, 3).is_err());
        assert!(dp.log_v(2, 0).is_err());
    }

    #[test]
    fn log_w_examples() {
        assert_eq!(GibbsModel::dp(2.0).unwrap().log_w(1).unwrap(), 0.0);
        assert_eq!(GibbsModel::py(1.0, 0.5).unwrap().log_w(1).unwrap(), 0.0);
        assert_abs_diff_eq!(
            GibbsModel::mfm(1.0, 1.0).unwrap().log_w(3).unwrap(),
            6.0f64.ln(),
            epsilon = 1e-14
        );
        assert!(GibbsModel::dp(1.0).unwrap().log_w(0).is_err());
    }

    #[test]
    fn predictive_examples() {
        let dp = GibbsModel::dp(1.0).unwrap();
        assert_abs_diff_eq!(dp.log_pred_existing(2, 1).unwrap(), 2.0f64.ln(), epsilon = 1e-14);
        let py = GibbsModel::py(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(py.log_pred_existing(1, 1).unwrap(), 0.5f64.ln(), epsilon = 1e-14);
        for m in [dp, py, GibbsModel::mfm(2.0, 1.0).unwrap()] {
            assert_eq!(m.log_pred_existing(4, 0).unwrap(), 0.0);
            assert!(m.log_pred_existing(0, 1).is_err());
        }
        assert_abs_diff_eq!(dp.log_pred_new(10, 3, 1).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(py.log_pred_new(10, 2, 1).unwrap(), 2.0f64.ln(), epsilon = 1e-14);
        assert!(dp.log_pred_new(10, 3, 0).is_err());
    }

    #[test]
    fn validation() {
        assert!(GibbsModel::dp(0.0).is_err());
        assert!(GibbsModel::py(1.0, 1.0).is_err());
        assert!(GibbsModel::py(-0.5, 0.5).is_err());
        assert!(GibbsModel::py(-0.4, 0.5).is_ok());
        assert!(GibbsModel::mfm(0.0, 1.0).is_err());
        assert!(GibbsModel::mfm(1.0, -1.0).is_err());
    }

    #[test]
    fn py_with_zero_discount_is_dp() {
        for alpha in [0.5, 1.0, 3.0] {
            let dp = GibbsModel::dp(alpha).unwrap();
            let py = GibbsModel::py(alpha, 0.0).unwrap();
            for p in 1..=40 {
                for m in 1..=p {
                    assert_abs_diff_eq!(dp.log_v(p, m).unwrap(), py.log_v(p, m).unwrap(), epsilon = 1e-12);
                }
                assert_eq!(dp.log_w(p).unwrap(), py.log_w(p).unwrap());
                assert_eq!(dp.log_pred_existing(p, 3).unwrap(), py.log_pred_existing(p, 3).unwrap());
                assert_eq!(dp.log_pred_new(50, p, 2).unwrap(), py.log_pred_new(50, p, 2).unwrap());
            }
        }
    }

    #[test]
    fn mfm_series_stable_under_longer_truncation() {
        let base = GibbsModel::Mfm {
            gamma: 1.0,
            lambda: 1.0,
            l_max: 200,
        };
        let longer = GibbsModel::Mfm {
            gamma: 1.0,
            lambda: 1.0,
            l_max: 300,
        };
        for p in [1usize, 5, 50, 100] {
            for m in [1, p.div_ceil(2), p] {
                let (a, tail): (f64, f64) = base.mfm_log_v(p, m).unwrap();
                let b = longer.log_v(p, m).unwrap();
                assert!((a - b).abs() < 1e-8, "p={p} m={m}");
                assert!(tail < (1e-10f64).ln());
            }
        }
    }

    #[test]
    fn mfm_single_item() {
        // V_1(1) = sum_l Gamma(gl) l / Gamma(gl + 1) p(l) = sum_l p(l) / g = 1/g
        let m = GibbsModel::mfm(2.0, 3.0).unwrap();
        assert_abs_diff_eq!(m.log_v(1, 1).unwrap(), 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn table_matches_direct_evaluation() {
        for model in [
            GibbsModel::dp(1.5).unwrap(),
            GibbsModel::py(0.7, 0.3).unwrap(),
            GibbsModel::mfm(1.0, 2.0).unwrap(),
        ] {
            let table = LogVTable::new(model, 30).unwrap();
            for m in 1..=30 {
                assert_eq!(table.get(m), model.log_v(30, m).unwrap());
            }
            for m_without in 0..30 {
                assert_abs_diff_eq!(
                    table.log_pred_new(m_without, 1).unwrap(),
                    model.log_pred_new(30, m_without, 1).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn f32_agrees_with_f64() {
        let a = GibbsModel::<f32>::py(1.0, 0.25).unwrap().log_v(20, 5).unwrap();
        let b = GibbsModel::<f64>::py(1.0, 0.25).unwrap().log_v(20, 5).unwrap();
        assert!((a as f64 - b).abs() < 1e-3);
    }
}

//! Partition summaries and evaluation metrics: VI, ARI, posterior
//! similarity, the draw-restricted minVI estimate and per-draw reports.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{canonicalize_labels, PartitionState};
use crate::mcmc::FitResult;
use crate::regression::Dataset;
use crate::scalar::Real;
use crate::synth::Scenario;

fn check_sizes(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "partition",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Sparse contingency table: nonzero cells `(row, col, count)` plus both
/// marginals.
struct Contingency {
    n: f64,
    cells: Vec<(usize, usize, f64)>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Self {
        let a = canonicalize_labels(a);
        let b = canonicalize_labels(b);
        let ka = a.iter().max().map_or(0, |m| m + 1);
        let kb = b.iter().max().map_or(0, |m| m + 1);
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut rows = vec![0.0; ka];
        let mut cols = vec![0.0; kb];
        for (&x, &y) in a.iter().zip(&b) {
            *counts.entry((x, y)).or_default() += 1;
            rows[x] += 1.0;
            cols[y] += 1.0;
        }
        let mut cells: Vec<(usize, usize, f64)> = counts.into_iter().map(|((x, y), c)| (x, y, c as f64)).collect();
        cells.sort_by_key(|&(x, y, _)| (x, y));
        Self {
            n: a.len() as f64,
            cells,
            rows,
            cols,
        }
    }
}

/// Variation of information `H(a) + H(b) - 2 I(a, b)` in nats, evaluated
/// cell by cell as `-sum n_xy/n [ln(n_xy/n_x) + ln(n_xy/n_y)]`.
pub fn variation_of_information(a: &[usize], b: &[usize]) -> Result<f64> {
    check_sizes(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let t = Contingency::new(a, b);
    let vi: f64 = t
        .cells
        .iter()
        .map(|&(x, y, c)| -c / t.n * ((c / t.rows[x]).ln() + (c / t.cols[y]).ln()))
        .sum();
    Ok(vi.max(0.0))
}

/// Hubert-Arabie adjusted Rand index. When both partitions are trivial in
/// the same way the index is undefined; identical inputs then score 1 and
/// anything else 0.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_sizes(a, b)?;
    let t = Contingency::new(a, b);
    let pairs = |c: &f64| c * (c - 1.0) / 2.0;
    let index: f64 = t.cells.iter().map(|(_, _, c)| pairs(c)).sum();
    let sum_a: f64 = t.rows.iter().map(pairs).sum();
    let sum_b: f64 = t.cols.iter().map(pairs).sum();
    let total = pairs(&t.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(if canonicalize_labels(a) == canonicalize_labels(b) {
            1.0
        } else {
            0.0
        });
    }
    Ok((index - expected) / (max - expected))
}

/// Posterior co-clustering frequencies, row-major `p x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    p: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_draws(draws: &[PartitionState]) -> Result<Self> {
        let first = draws.first().ok_or(Error::EmptyDraws)?;
        let p = first.len();
        let mut counts = vec![0usize; p * p];
        for d in draws {
            check_sizes(first.labels(), d.labels())?;
            let l = d.labels();
            for j in 0..p {
                for k in 0..p {
                    if l[j] == l[k] {
                        counts[j * p + k] += 1;
                    }
                }
            }
        }
        let total = draws.len() as f64;
        Ok(Self {
            p,
            values: counts.into_iter().map(|c| c as f64 / total).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.p + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// The draw minimising the empirical posterior expected VI.
#[derive(Debug, Clone, PartialEq)]
pub struct MinVi {
    /// Index of the first draw equal to the estimate.
    pub draw: usize,
    pub partition: PartitionState,
    pub expected_vi: f64,
}

/// Posterior expected VI of `candidate` under the empirical draw distribution.
pub fn expected_vi(candidate: &[usize], draws: &[PartitionState]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut total = 0.0;
    for d in draws {
        total += variation_of_information(candidate, d.labels())?;
    }
    Ok(total / draws.len() as f64)
}

/// Draw-restricted minVI estimate; ties go to the earliest draw.
pub fn min_vi_partition(draws: &[PartitionState]) -> Result<MinVi> {
    let first = draws.first().ok_or(Error::EmptyDraws)?;
    // Collapse repeated partitions to (first index, multiplicity).
    let mut seen: HashMap<&[usize], usize> = HashMap::new();
    let mut unique: Vec<(usize, usize)> = Vec::new();
    for (i, d) in draws.iter().enumerate() {
        check_sizes(first.labels(), d.labels())?;
        match seen.get(d.labels()) {
            Some(&u) => unique[u].1 += 1,
            None => {
                seen.insert(d.labels(), unique.len());
                unique.push((i, 1));
            }
        }
    }
    let total = draws.len() as f64;
    let scores: Vec<f64> = unique
        .par_iter()
        .map(|&(i, _)| {
            unique
                .iter()
                .map(|&(k, count)| {
                    count as f64 * variation_of_information(draws[i].labels(), draws[k].labels()).unwrap_or(0.0)
                })
                .sum::<f64>()
                / total
        })
        .collect();
    let mut best = 0;
    for (u, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = u;
        }
    }
    let draw = unique[best].0;
    Ok(MinVi {
        draw,
        partition: draws[draw].clone(),
        expected_vi: scores[best],
    })
}

/// The five evaluation metrics for one draw or point estimate. Entries
/// needing the truth or a test set are `None` when those are unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub ari: Option<f64>,
    pub vi: Option<f64>,
    pub mse: Option<f64>,
    pub mspe: Option<f64>,
    pub m: f64,
}

/// Mean and sample standard deviation of each metric over retained draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMoments {
    pub mean: MetricRow,
    pub sd: MetricRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub draws: Vec<MetricRow>,
    pub draw_chain: Vec<usize>,
    pub moments: MetricMoments,
    pub min_vi: MinVi,
    /// Metrics of the minVI partition with coefficients averaged over the
    /// draws sharing that partition.
    pub min_vi_metrics: MetricRow,
    pub min_vi_beta: Vec<f64>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn moments(rows: &[MetricRow]) -> MetricMoments {
    let col = |f: &dyn Fn(&MetricRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let xs: Option<Vec<f64>> = rows.iter().map(f).collect();
        match xs {
            Some(xs) if !xs.is_empty() => {
                let (m, s) = mean_sd(&xs);
                (Some(m), Some(s))
            }
            _ => (None, None),
        }
    };
    let ari = col(&|r| r.ari);
    let vi = col(&|r| r.vi);
    let mse = col(&|r| r.mse);
    let mspe = col(&|r| r.mspe);
    let m = col(&|r| Some(r.m));
    MetricMoments {
        mean: MetricRow {
            ari: ari.0,
            vi: vi.0,
            mse: mse.0,
            mspe: mspe.0,
            m: m.0.unwrap_or(f64::NAN),
        },
        sd: MetricRow {
            ari: ari.1,
            vi: vi.1,
            mse: mse.1,
            mspe: mspe.1,
            m: m.1.unwrap_or(f64::NAN),
        },
    }
}

/// Mean squared prediction error of `(mu, beta)` on `test`.
pub fn mspe<T: Real>(test: &Dataset<T>, mu: &[T], pixel_beta: &[T]) -> f64 {
    let pred = test.predict(mu, pixel_beta);
    let n = test.n().max(1) as f64;
    pred.iter()
        .zip(test.y())
        .map(|(&f, &y)| (y - f).as_f64().powi(2))
        .sum::<f64>()
        / n
}

fn row_for<T: Real>(
    labels: &[usize],
    m: usize,
    mu: &[T],
    beta: &[T],
    truth: Option<&Scenario<T>>,
    test: Option<&Dataset<T>>,
) -> Result<MetricRow> {
    let (ari, vi, mse) = match truth {
        Some(s) => {
            check_sizes(&s.true_labels, labels)?;
            let mse = beta
                .iter()
                .zip(&s.true_beta)
                .map(|(&b, &t)| (b - t).as_f64().powi(2))
                .sum::<f64>()
                / beta.len().max(1) as f64;
            (
                Some(adjusted_rand_index(&s.true_labels, labels)?),
                Some(variation_of_information(&s.true_labels, labels)?),
                Some(mse),
            )
        }
        None => (None, None, None),
    };
    Ok(MetricRow {
        ari,
        vi,
        mse,
        mspe: test.map(|t| mspe(t, mu, beta)),
        m: m as f64,
    })
}

/// Per-draw metrics, their posterior moments, and the minVI point metrics.
pub fn metrics<T: Real>(
    fit: &FitResult<T>,
    truth: Option<&Scenario<T>>,
    test: Option<&Dataset<T>>,
) -> Result<MetricsReport> {
    if fit.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let draws = (0..fit.len())
        .into_par_iter()
        .map(|d| {
            let s = &fit.partition_draws[d];
            let c = &fit.coefficient_draws[d];
            row_for(s.labels(), s.num_clusters(), &c.mu, &fit.pixel_betas(d), truth, test)
        })
        .collect::<Result<Vec<_>>>()?;
    let min_vi = min_vi_partition(&fit.partition_draws)?;

    let target = min_vi.partition.labels();
    let matching: Vec<usize> = (0..fit.len())
        .filter(|&d| fit.partition_draws[d].labels() == target)
        .collect();
    let k = T::of(matching.len());
    let q = fit.coefficient_draws[0].mu.len();
    let mut mu = vec![T::zero(); q];
    let mut beta = vec![T::zero(); target.len()];
    for &d in &matching {
        for (a, &b) in mu.iter_mut().zip(&fit.coefficient_draws[d].mu) {
            *a += b / k;
        }
        for (a, b) in beta.iter_mut().zip(fit.pixel_betas(d)) {
            *a += b / k;
        }
    }
    let min_vi_metrics = row_for(target, min_vi.partition.num_clusters(), &mu, &beta, truth, test)?;

    Ok(MetricsReport {
        moments: moments(&draws),
        draws,
        draw_chain: fit.draw_chain.clone(),
        min_vi,
        min_vi_metrics,
        min_vi_beta: beta.iter().map(|b| b.as_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vi_examples() {
        assert_eq!(variation_of_information(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 0.0);
        let v = variation_of_information(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert!(variation_of_information(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // every cell of the contingency table is 1: index 0, expected 2/3, max 2
        let a = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((a + 0.5).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn min_vi_weighted_argmin() {
        let p1 = PartitionState::from_labels(&[0, 0, 1, 1]);
        let p2 = PartitionState::from_labels(&[0, 1, 1, 1]);
        let mut draws = vec![p2.clone()];
        draws.extend(std::iter::repeat_n(p1.clone(), 9));
        let r = min_vi_partition(&draws).unwrap();
        assert_eq!(r.partition, p1);
        assert_eq!(r.draw, 1);
        let v = variation_of_information(p1.labels(), p2.labels()).unwrap();
        assert!((r.expected_vi - 0.1 * v).abs() < 1e-12);
        assert!(min_vi_partition(&[]).is_err());
    }

    #[test]
    fn min_vi_ties_go_to_earliest() {
        let a = PartitionState::from_labels(&[0, 0, 1]);
        let b = PartitionState::from_labels(&[0, 1, 1]);
        let r = min_vi_partition(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(r.partition, b);
    }

    #[test]
    fn similarity_of_point_mass() {
        let s = PartitionState::from_labels(&[0, 1, 0, 2]);
        let m = SimilarityMatrix::from_draws(&[s.clone(), s.clone()]).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(m.get(j, k), if s.label(j) == s.label(k) { 1.0 } else { 0.0 });
            }
        }
    }

    fn labels(p: usize) -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0..p, p)
    }

    proptest! {
        #[test]
        fn vi_and_ari_bounds_and_symmetry(a in labels(9), b in labels(9)) {
            let v = variation_of_information(&a, &b).unwrap();
            prop_assert!(v >= 0.0 && v <= (9f64).ln() + 1e-12);
            prop_assert!((v - variation_of_information(&b, &a).unwrap()).abs() < 1e-12);
            let r = adjusted_rand_index(&a, &b).unwrap();
            prop_assert!(r <= 1.0 + 1e-12);
            prop_assert!((r - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn invariant_to_relabeling(a in labels(8), b in labels(8), shift in 1usize..20) {
            let relabeled: Vec<usize> = a.iter().map(|&l| (l * 7 + shift) % 8 + 100).collect();
            prop_assert!((variation_of_information(&a, &b).unwrap()
                - variation_of_information(&relabeled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((adjusted_rand_index(&a, &b).unwrap()
                - adjusted_rand_index(&relabeled, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn similarity_is_valid(draws in proptest::collection::vec(labels(6), 1..8)) {
            let parts: Vec<PartitionState> = draws.iter().map(|l| PartitionState::from_labels(l)).collect();
            let m = SimilarityMatrix::from_draws(&parts).unwrap();
            for j in 0..6 {
                prop_assert_eq!(m.get(j, j), 1.0);
                for k in 0..6 {
                    prop_assert_eq!(m.get(j, k), m.get(k, j));
                    prop_assert!((0.0..=1.0).contains(&m.get(j, k)));
                }
            }
        }
    }
}

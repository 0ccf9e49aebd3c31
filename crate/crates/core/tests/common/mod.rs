//! Shared oracles for the integration tests. Everything here is written
//! independently of the library internals: partitions are enumerated as
//! restricted growth strings, the EPPF uses direct Gamma arithmetic, and the
//! marginal likelihood is evaluated as a multivariate t density on the
//! n x n scale.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use potts_sir::lattice::Lattice;
use potts_sir::regression::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// ln Gamma by the Lanczos approximation (g = 7, n = 9).
pub fn lgamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// All set partitions of `p` items as restricted growth strings.
pub fn set_partitions(p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; p];
    fn rec(i: usize, max: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == current.len() {
            out.push(current.clone());
            return;
        }
        for l in 0..=max + 1 {
            current[i] = l;
            rec(i + 1, max.max(l), current, out);
        }
    }
    if p == 0 {
        return vec![vec![]];
    }
    rec(1, 0, &mut current, &mut out);
    out
}

pub fn sizes_of(labels: &[usize]) -> Vec<usize> {
    let m = labels.iter().max().map_or(0, |x| x + 1);
    let mut s = vec![0; m];
    for &l in labels {
        s[l] += 1;
    }
    s.retain(|&c| c > 0);
    s
}

#[derive(Debug, Clone, Copy)]
pub enum Prior {
    Dp(f64),
    Py(f64, f64),
    Mfm(f64, f64),
}

/// `V_p(M)` of the mixture of finite mixtures by brute-force summation
/// with a shifted Poisson on the number of components.
pub fn mfm_v(gamma: f64, lambda: f64, p: usize, m: usize) -> f64 {
    let mut total = 0.0;
    for l in m..3000 {
        let lf = l as f64;
        let log_pl = -lambda + (lf - 1.0) * lambda.ln() - lgamma(lf);
        let log_term =
            lgamma(gamma * lf) + lgamma(lf + 1.0) - lgamma(gamma * lf + p as f64) - lgamma((l - m) as f64 + 1.0)
                + log_pl;
        total += log_term.exp();
    }
    total
}

/// Exchangeable partition probability of `labels` (no spatial term).
pub fn eppf(prior: Prior, labels: &[usize]) -> f64 {
    let sizes = sizes_of(labels);
    let p = labels.len() as f64;
    let m = sizes.len();
    match prior {
        Prior::Dp(alpha) => {
            let mut log = m as f64 * alpha.ln() + lgamma(alpha) - lgamma(alpha + p);
            for &s in &sizes {
                log += lgamma(s as f64);
            }
            log.exp()
        }
        Prior::Py(alpha, delta) => {
            let mut log = lgamma(alpha + 1.0) - lgamma(alpha + p);
            for i in 1..m {
                log += (alpha + i as f64 * delta).ln();
            }
            for &s in &sizes {
                log += lgamma(s as f64 - delta) - lgamma(1.0 - delta);
            }
            log.exp()
        }
        Prior::Mfm(gamma, lambda) => {
            let mut log = 0.0;
            for &s in &sizes {
                log += lgamma(s as f64 + gamma) - lgamma(gamma);
            }
            mfm_v(gamma, lambda, labels.len(), m) * log.exp()
        }
    }
}

/// `sum_{j~k} u 1[z_j = z_k]` over 4-neighbour pairs of an `h x w` grid.
pub fn potts(h: usize, w: usize, u: f64, labels: &[usize]) -> f64 {
    let mut e = 0.0;
    for r in 0..h {
        for c in 0..w {
            let j = r * w + c;
            if c + 1 < w && labels[j] == labels[j + 1] {
                e += u;
            }
            if r + 1 < h && labels[j] == labels[j + w] {
                e += u;
            }
        }
    }
    e
}

pub struct Hyper {
    pub m_mu: f64,
    pub c_mu: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            m_mu: 0.0,
            c_mu: 100.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
        }
    }
}

impl Hyper {
    pub fn to_lib(&self, eta: f64) -> potts_sir::regression::Hyperparameters<f64> {
        potts_sir::regression::Hyperparameters {
            m_mu: vec![self.m_mu],
            c_mu: vec![self.c_mu],
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            a_eta: 1.0,
            b_eta: eta,
        }
    }
}

/// Design `[W | X*]` with `X*_{im} = sum_{j in C_m} x_ij / sqrt|C_m|`,
/// clusters ordered by first appearance.
pub fn design(data: &Dataset<f64>, labels: &[usize]) -> DMatrix<f64> {
    let n = data.n();
    let q = data.q();
    let canon = potts_sir::lattice::canonicalize_labels(labels);
    let sizes = sizes_of(&canon);
    let mut x = DMatrix::zeros(n, q + sizes.len());
    for i in 0..n {
        for c in 0..q {
            x[(i, c)] = data.w(i, c);
        }
        for (j, &l) in canon.iter().enumerate() {
            x[(i, q + l)] += data.x(i, j) / (sizes[l] as f64).sqrt();
        }
    }
    x
}

/// `log pr(y)` under `beta~ ~ N(m, sigma^2 V)`, `sigma^2 ~ IG(a, b)`:
/// a multivariate t with `2a` degrees of freedom and scale `(b/a)(I + X V X')`.
pub fn log_marginal_t(y: &[f64], x: &DMatrix<f64>, prior_mean: &[f64], prior_var: &[f64], a: f64, b: f64) -> f64 {
    let n = y.len();
    let v = DMatrix::from_diagonal(&DVector::from_column_slice(prior_var));
    let cov = DMatrix::identity(n, n) + x * v * x.transpose();
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(prior_mean);
    let chol = cov.clone().cholesky().expect("SPD");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    let nf = n as f64;
    lgamma(a + nf / 2.0)
        - lgamma(a)
        - nf / 2.0 * (2.0 * std::f64::consts::PI * b).ln()
        - 0.5 * log_det
        - (a + nf / 2.0) * (1.0 + quad / (2.0 * b)).ln()
}

/// Oracle collapsed marginal for a partition with a common eta.
pub fn oracle_log_marginal(data: &Dataset<f64>, labels: &[usize], hyper: &Hyper, eta: &[f64]) -> f64 {
    let x = design(data, labels);
    let q = data.q();
    let mut mean = vec![hyper.m_mu; q];
    mean.resize(x.ncols(), 0.0);
    let mut var = vec![hyper.c_mu; q];
    var.extend_from_slice(eta);
    log_marginal_t(data.y(), &x, &mean, &var, hyper.a_sigma, hyper.b_sigma)
}

/// Exact posterior over all partitions of a small lattice with a fixed eta
/// shared by every cluster.
pub fn exact_posterior(
    data: &Dataset<f64>,
    prior: Prior,
    upsilon: f64,
    hyper: &Hyper,
    eta: f64,
) -> Vec<(Vec<usize>, f64)> {
    let (h, w) = (data.lattice().height(), data.lattice().width());
    let parts = set_partitions(data.p());
    let logs: Vec<f64> = parts
        .iter()
        .map(|z| {
            let m = sizes_of(z).len();
            eppf(prior, z).ln() + potts(h, w, upsilon, z) + oracle_log_marginal(data, z, hyper, &vec![eta; m])
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    parts
        .into_iter()
        .zip(logs)
        .map(|(z, l)| (z, (l - max).exp() / total))
        .collect()
}

/// Total variation distance between an empirical count table and a
/// probability table over canonical label vectors.
pub fn tv_distance(exact: &[(Vec<usize>, f64)], counts: &std::collections::HashMap<Vec<usize>, usize>) -> f64 {
    let total: usize = counts.values().sum();
    let mut tv = 0.0;
    for (z, p) in exact {
        let f = counts.get(z).copied().unwrap_or(0) as f64 / total as f64;
        tv += (f - p).abs();
    }
    let unknown: usize = counts
        .iter()
        .filter(|(z, _)| !exact.iter().any(|(e, _)| e == *z))
        .map(|(_, c)| c)
        .sum();
    0.5 * (tv + unknown as f64 / total as f64)
}

/// Random Gaussian toy dataset on an `h x w` lattice with an intercept column.
pub fn toy_dataset(h: usize, w: usize, n: usize, upsilon: f64, beta: &[f64], seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = h * w;
    let mut x_rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let signal: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let noise: f64 = StandardNormal.sample(&mut rng);
        y.push(0.5 + signal + noise);
        x_rows.push(x);
    }
    let lattice = Lattice::new(h, w, upsilon).unwrap();
    Dataset::from_rows(y, &vec![vec![1.0]; n], &x_rows, lattice).unwrap()
}

/// Random labels with values below `k`.
pub fn random_labels<R: Rng>(rng: &mut R, p: usize, k: usize) -> Vec<usize> {
    (0..p).map(|_| rng.random_range(0..k)).collect()
}

/// Exact single-site Gibbs over labels with a fixed common eta, built only
/// from the oracles above. Posterior masses are cached per partition.
pub struct SingleSiteOracle<'a> {
    pub data: &'a Dataset<f64>,
    pub prior: Prior,
    pub upsilon: f64,
    pub hyper: Hyper,
    pub eta: f64,
    cache: std::collections::HashMap<Vec<usize>, f64>,
}

impl<'a> SingleSiteOracle<'a> {
    pub fn new(data: &'a Dataset<f64>, prior: Prior, upsilon: f64, hyper: Hyper, eta: f64) -> Self {
        Self {
            data,
            prior,
            upsilon,
            hyper,
            eta,
            cache: Default::default(),
        }
    }

    fn log_mass(&mut self, z: &[usize]) -> f64 {
        let z = potts_sir::lattice::canonicalize_labels(z);
        if let Some(&v) = self.cache.get(&z) {
            return v;
        }
        let (h, w) = (self.data.lattice().height(), self.data.lattice().width());
        let m = sizes_of(&z).len();
        let v = eppf(self.prior, &z).ln()
            + potts(h, w, self.upsilon, &z)
            + oracle_log_marginal(self.data, &z, &self.hyper, &vec![self.eta; m]);
        self.cache.insert(z, v);
        v
    }

    /// One sweep over the pixels in random order; returns canonical labels.
    pub fn sweep<R: Rng>(&mut self, labels: &mut Vec<usize>, rng: &mut R) {
        use rand::seq::SliceRandom;
        let p = labels.len();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        for j in order {
            let mut others: Vec<usize> = (0..p).filter(|&k| k != j).map(|k| labels[k]).collect();
            others.sort_unstable();
            others.dedup();
            let fresh = p + 1;
            let mut candidates: Vec<Vec<usize>> = others
                .iter()
                .map(|&l| {
                    let mut z = labels.clone();
                    z[j] = l;
                    z
                })
                .collect();
            let mut z = labels.clone();
            z[j] = fresh;
            candidates.push(z);
            let logs: Vec<f64> = candidates.iter().map(|z| self.log_mass(z)).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            *labels = potts_sir::lattice::canonicalize_labels(&candidates[pick]);
        }
    }
}

/// The 2 x 2, n = 6 instance used for exact-posterior checks.
pub fn exact_instance(upsilon: f64) -> Dataset<f64> {
    toy_dataset(2, 2, 6, upsilon, &[0.8, 0.8, 0.0, -0.4], 2024)
}

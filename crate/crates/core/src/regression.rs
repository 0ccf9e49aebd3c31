//! Clustered design matrices, the collapsed marginal likelihood
//! `pr(y | partition, eta*)`, and the conjugate full conditionals for
//! `(mu, beta*, sigma^2)` and `eta*`.
//!
//! The model is
//!
//! ```text
//! y_i | . ~ N(w_i' mu + x*_i' beta*, sigma^2)
//! mu | sigma^2 ~ N(m_mu, sigma^2 diag(c_mu))
//! beta* | eta*, sigma^2 ~ N(0, sigma^2 diag(eta*))
//! sigma^2 ~ IG(a_sigma, b_sigma),  eta*_m ~ IG(a_eta, b_eta)
//! ```
//!
//! with `x*_im = sum_{j in C_m} x_ij / sqrt(|C_m|)`. Cluster statistics are
//! kept unnormalised (`S_m = sum_{j in C_m} x_.j`) so that moving a block of
//! pixels between clusters is a rank-one style update of the Gram matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{backward_substitute_transpose, cholesky_jittered, dot, forward_substitute, log_det_from_cholesky};
use crate::scalar::Real;

/// Responses, covariates and images on a lattice. Matrices are stored
/// column-major so that each pixel's values over samples are contiguous.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    n: usize,
    q: usize,
    y: Vec<T>,
    w: Vec<T>,
    x: Vec<T>,
    lattice: Lattice<T>,
}

impl<T: Real> Dataset<T> {
    /// Builds from row-major inputs: `w_rows[i]` has q entries and
    /// `x_rows[i]` one entry per lattice pixel.
    pub fn from_rows(y: Vec<T>, w_rows: &[Vec<T>], x_rows: &[Vec<T>], lattice: Lattice<T>) -> Result<Self> {
        let n = y.len();
        let p = lattice.len();
        if w_rows.len() != n {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: n,
                got: w_rows.len(),
            });
        }
        if x_rows.len() != n {
            return Err(Error::DimensionMismatch {
                what: "image rows",
                expected: n,
                got: x_rows.len(),
            });
        }
        let q = w_rows.first().map_or(0, Vec::len);
        let mut w = vec![T::zero(); n * q];
        let mut x = vec![T::zero(); n * p];
        for i in 0..n {
            if w_rows[i].len() != q {
                return Err(Error::DimensionMismatch {
                    what: "covariate row length",
                    expected: q,
                    got: w_rows[i].len(),
                });
            }
            if x_rows[i].len() != p {
                return Err(Error::DimensionMismatch {
                    what: "image row length",
                    expected: p,
                    got: x_rows[i].len(),
                });
            }
            for c in 0..q {
                w[c * n + i] = w_rows[i][c];
            }
            for j in 0..p {
                x[j * n + i] = x_rows[i][j];
            }
        }
        Self::from_columns(y, q, w, x, lattice)
    }

    /// Builds from column-major buffers (`w`: q columns, `x`: p columns).
    pub fn from_columns(y: Vec<T>, q: usize, w: Vec<T>, x: Vec<T>, lattice: Lattice<T>) -> Result<Self> {
        let n = y.len();
        if w.len() != n * q {
            return Err(Error::DimensionMismatch {
                what: "covariate buffer",
                expected: n * q,
                got: w.len(),
            });
        }
        if x.len() != n * lattice.len() {
            return Err(Error::DimensionMismatch {
                what: "image buffer",
                expected: n * lattice.len(),
                got: x.len(),
            });
        }
        if y.iter().chain(&w).chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { n, q, y, w, x, lattice })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.lattice.len()
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    /// Values of pixel `j` across samples.
    pub fn pixel(&self, j: usize) -> &[T] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Covariate column `c` across samples.
    pub fn covariate(&self, c: usize) -> &[T] {
        &self.w[c * self.n..(c + 1) * self.n]
    }

    pub fn x(&self, i: usize, j: usize) -> T {
        self.x[j * self.n + i]
    }

    pub fn w(&self, i: usize, c: usize) -> T {
        self.w[c * self.n + i]
    }

    /// Row-major copy of sample `i`'s image.
    pub fn image(&self, i: usize) -> Vec<T> {
        (0..self.p()).map(|j| self.x(i, j)).collect()
    }

    pub fn covariates_row(&self, i: usize) -> Vec<T> {
        (0..self.q).map(|c| self.w(i, c)).collect()
    }

    /// Copy restricted to the samples in `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n) {
            return Err(Error::InvalidParameter(format!(
                "row {bad} out of range for {} samples",
                self.n
            )));
        }
        let gather = |buf: &[T], cols: usize| {
            let mut out = Vec::with_capacity(rows.len() * cols);
            for c in 0..cols {
                out.extend(rows.iter().map(|&i| buf[c * self.n + i]));
            }
            out
        };
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Self::from_columns(
            y,
            self.q,
            gather(&self.w, self.q),
            gather(&self.x, self.p()),
            self.lattice.clone(),
        )
    }

    /// Replaces the lattice couplings while keeping the data.
    pub fn with_lattice(mut self, lattice: Lattice<T>) -> Result<Self> {
        if lattice.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "lattice pixels",
                expected: self.p(),
                got: lattice.len(),
            });
        }
        self.lattice = lattice;
        Ok(self)
    }

    /// Dataset restricted to the given sample rows, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let m = rows.len();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let mut w = Vec::with_capacity(m * self.q);
        for c in 0..self.q {
            w.extend(rows.iter().map(|&i| self.w(i, c)));
        }
        let mut x = Vec::with_capacity(m * self.p());
        for j in 0..self.p() {
            x.extend(rows.iter().map(|&i| self.x(i, j)));
        }
        Self {
            n: m,
            q: self.q,
            y,
            w,
            x,
            lattice: self.lattice.clone(),
        }
    }

    /// Linear predictor `w_i' mu + x_i' beta` for every sample, with a
    /// per-pixel coefficient image.
    pub fn predict(&self, mu: &[T], pixel_beta: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (c, &m) in mu.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(self.covariate(c)) {
                *o += v * m;
            }
        }
        for (j, &b) in pixel_beta.iter().enumerate() {
            if b != T::zero() {
                for (o, &v) in out.iter_mut().zip(self.pixel(j)) {
                    *o += v * b;
                }
            }
        }
        out
    }
}

fn default_m_mu<T: Real>() -> Vec<T> {
    vec![T::zero()]
}
fn default_c_mu<T: Real>() -> Vec<T> {
    vec![T::lit(100.0)]
}
fn one<T: Real>() -> T {
    T::one()
}

/// Prior hyperparameters. `m_mu` / `c_mu` of length one are broadcast to
/// every fixed effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Hyperparameters<T> {
    #[serde(default = "default_m_mu")]
    pub m_mu: Vec<T>,
    #[serde(default = "default_c_mu")]
    pub c_mu: Vec<T>,
    #[serde(default = "one")]
    pub a_sigma: T,
    #[serde(default = "one")]
    pub b_sigma: T,
    #[serde(default = "one")]
    pub a_eta: T,
    #[serde(default = "one")]
    pub b_eta: T,
}

impl<T: Real> Default for Hyperparameters<T> {
    fn default() -> Self {
        Self {
            m_mu: default_m_mu(),
            c_mu: default_c_mu(),
            a_sigma: T::one(),
            b_sigma: T::one(),
            a_eta: T::one(),
            b_eta: T::one(),
        }
    }
}

impl<T: Real> Hyperparameters<T> {
    /// Checks positivity and expands `m_mu`, `c_mu` to length `q`.
    pub fn resolved(&self, q: usize) -> Result<Self> {
        let expand = |v: &[T], what: &'static str| -> Result<Vec<T>> {
            match v.len() {
                1 => Ok(vec![v[0]; q]),
                len if len == q => Ok(v.to_vec()),
                len => Err(Error::DimensionMismatch {
                    what,
                    expected: q,
                    got: len,
                }),
            }
        };
        let out = Self {
            m_mu: expand(&self.m_mu, "m_mu")?,
            c_mu: expand(&self.c_mu, "c_mu")?,
            ..self.clone()
        };
        let positive = out
            .c_mu
            .iter()
            .chain([&out.a_sigma, &out.b_sigma, &out.a_eta, &out.b_eta])
            .all(|&v| v > T::zero() && v.is_finite());
        if !positive || out.m_mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "variances, shapes and scales must be positive and finite".into(),
            ));
        }
        Ok(out)
    }

    /// Degrees of freedom of the implied t prior on each `beta*_m`.
    pub fn nu(&self) -> T {
        T::lit(2.0) * self.a_eta
    }

    /// Scale (in units of sigma) of the implied t prior.
    pub fn t_scale(&self) -> T {
        (self.b_eta / self.a_eta).sqrt()
    }
}

/// Current values of the regression parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CoefficientState<T> {
    pub mu: Vec<T>,
    pub beta_star: Vec<T>,
    pub sigma2: T,
    pub eta_star: Vec<T>,
}

impl<T: Real> CoefficientState<T> {
    /// Per-pixel coefficients `beta_j = beta*_{z_j} / sqrt(|C_{z_j}|)`.
    pub fn pixel_betas(&self, labels: &[usize], sizes: &[usize]) -> Vec<T> {
        pixel_betas(&self.beta_star, labels, sizes)
    }
}

pub fn pixel_betas<T: Real>(beta_star: &[T], labels: &[usize], sizes: &[usize]) -> Vec<T> {
    labels.iter().map(|&l| beta_star[l] / T::of(sizes[l]).sqrt()).collect()
}

/// Destination of a block move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Existing(usize),
    New,
}

/// Statistics of a block of pixels about to move between clusters.
#[derive(Debug, Clone)]
pub struct MoveBlock<T> {
    pub size: usize,
    /// `a' a` for the block volume `a = sum_{j in A} x_.j`.
    pub aa: T,
    pub ay: T,
    pub wa: Vec<T>,
    /// `a' S_m` for every current cluster.
    pub a_s: Vec<T>,
}

/// Scratch buffers for repeated marginal-likelihood evaluations.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    xtx: Vec<T>,
    rhs: Vec<T>,
    scratch: Vec<T>,
    prec: Vec<T>,
    mean: Vec<T>,
    scale: Vec<T>,
    coef: Vec<T>,
}

/// Sufficient statistics of the clustered design `[W | X*]` for one partition.
#[derive(Debug, Clone)]
pub struct ClusteredDesign<T> {
    n: usize,
    q: usize,
    sizes: Vec<usize>,
    volumes: Vec<Vec<T>>,
    gram: Vec<Vec<T>>,
    w_cross: Vec<Vec<T>>,
    y_cross: Vec<T>,
    wtw: Vec<T>,
    wty: Vec<T>,
    yty: T,
}

impl<T: Real> ClusteredDesign<T> {
    /// Builds the statistics from scratch. `labels` must use `0..M` with
    /// every cluster nonempty.
    pub fn build(data: &Dataset<T>, labels: &[usize]) -> Result<Self> {
        if labels.len() != data.p() {
            return Err(Error::DimensionMismatch {
                what: "partition labels",
                expected: data.p(),
                got: labels.len(),
            });
        }
        let (n, q) = (data.n(), data.q());
        let m = labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut sizes = vec![0usize; m];
        let mut volumes = vec![vec![T::zero(); n]; m];
        for (j, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            for (v, &x) in volumes[l].iter_mut().zip(data.pixel(j)) {
                *v += x;
            }
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("partition has an empty cluster".into()));
        }
        let mut gram = vec![vec![T::zero(); m]; m];
        for a in 0..m {
            for b in a..m {
                let g = dot(&volumes[a], &volumes[b]);
                gram[a][b] = g;
                gram[b][a] = g;
            }
        }
        let w_cross = volumes
            .iter()
            .map(|s| (0..q).map(|c| dot(data.covariate(c), s)).collect())
            .collect();
        let y_cross = volumes.iter().map(|s| dot(data.y(), s)).collect();
        let mut wtw = vec![T::zero(); q * q];
        for a in 0..q {
            for b in 0..q {
                wtw[a * q + b] = dot(data.covariate(a), data.covariate(b));
            }
        }
        let wty = (0..q).map(|c| dot(data.covariate(c), data.y())).collect();
        let yty = dot(data.y(), data.y());
        Ok(Self {
            n,
            q,
            sizes,
            volumes,
            gram,
            w_cross,
            y_cross,
            wtw,
            wty,
            yty,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn yty(&self) -> T {
        self.yty
    }

    /// Unnormalised cluster volume `S_m` over samples.
    pub fn volume(&self, m: usize) -> &[T] {
        &self.volumes[m]
    }

    /// `X*` as an `n x M` column-major buffer.
    pub fn x_star(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * self.num_clusters());
        for (s, &size) in self.volumes.iter().zip(&self.sizes) {
            let c = T::of(size).sqrt();
            out.extend(s.iter().map(|&v| v / c));
        }
        out
    }

    /// Normal equations `(X~' X~, X~' y)` with `X~ = [W | X*]`, row-major.
    pub fn normal_equations(&self) -> (Vec<T>, Vec<T>) {
        let (q, m) = (self.q, self.num_clusters());
        let d = q + m;
        let mut xtx = vec![T::zero(); d * d];
        let mut xty = vec![T::zero(); d];
        let inv: Vec<T> = self.sizes.iter().map(|&s| T::one() / T::of(s).sqrt()).collect();
        for a in 0..q {
            for b in 0..q {
                xtx[a * d + b] = self.wtw[a * q + b];
            }
            xty[a] = self.wty[a];
        }
        for l in 0..m {
            for c in 0..q {
                let v = self.w_cross[l][c] * inv[l];
                xtx[c * d + q + l] = v;
                xtx[(q + l) * d + c] = v;
            }
            for k in 0..m {
                xtx[(q + l) * d + q + k] = self.gram[l][k] * inv[l] * inv[k];
            }
            xty[q + l] = self.y_cross[l] * inv[l];
        }
        (xtx, xty)
    }

    /// Statistics of a block with volume `a` against the current clusters.
    pub fn move_block(&self, data: &Dataset<T>, volume: &[T], size: usize) -> MoveBlock<T> {
        MoveBlock {
            size,
            aa: dot(volume, volume),
            ay: dot(volume, data.y()),
            wa: (0..self.q).map(|c| dot(data.covariate(c), volume)).collect(),
            a_s: self.volumes.iter().map(|s| dot(volume, s)).collect(),
        }
    }

    /// `log pr(y | partition, eta*)` with `(mu, beta*, sigma^2)` integrated out.
    pub fn log_marginal(&self, eta: &[T], hyper: &Hyperparameters<T>, ws: &mut Workspace<T>) -> Result<T> {
        if eta.len() != self.num_clusters() {
            return Err(Error::DimensionMismatch {
                what: "eta*",
                expected: self.num_clusters(),
                got: eta.len(),
            });
        }
        let (xtx, xty) = self.normal_equations();
        ws.xtx = xtx;
        ws.rhs = xty;
        set_prior(ws, hyper, eta.iter().copied());
        Ok(solve_collapsed(self.n, self.yty, hyper, ws, false)?.log_marginal)
    }

    /// Log marginal likelihood of the partition obtained by moving `block`
    /// out of `source` into `target`, evaluated from the cached statistics.
    ///
    /// `eta` holds the current clusters' `eta*`; `eta_new` is used for the
    /// new cluster when `target` is [`Target::New`].
    #[allow(clippy::too_many_arguments)]
    pub fn log_marginal_after_move(
        &self,
        block: &MoveBlock<T>,
        source: usize,
        target: Target,
        eta: &[T],
        eta_new: T,
        hyper: &Hyperparameters<T>,
        ws: &mut Workspace<T>,
    ) -> Result<T> {
        let (q, m) = (self.q, self.num_clusters());
        let t = match target {
            Target::Existing(t) => t,
            Target::New => m,
        };
        let source_left = if t == source {
            self.sizes[source]
        } else {
            self.sizes[source] - block.size
        };
        // columns after the move: original cluster indices, m == virtual new
        let cols: Vec<usize> = (0..=m)
            .filter(|&l| {
                if l == m {
                    target == Target::New
                } else {
                    l != source || source_left > 0
                }
            })
            .collect();
        let shift = |l: usize| -> T {
            if l == source && l == t {
                T::zero()
            } else if l == source {
                -T::one()
            } else if l == t {
                T::one()
            } else {
                T::zero()
            }
        };
        let size_after = |l: usize| -> usize {
            let base = if l == m { 0 } else { self.sizes[l] };
            if l == source && l == t {
                base
            } else if l == source {
                base - block.size
            } else if l == t {
                base + block.size
            } else {
                base
            }
        };
        let gram = |a: usize, b: usize| if a == m || b == m { T::zero() } else { self.gram[a][b] };
        let a_s = |l: usize| if l == m { T::zero() } else { block.a_s[l] };

        let d = q + cols.len();
        ws.xtx.clear();
        ws.xtx.resize(d * d, T::zero());
        ws.rhs.clear();
        ws.rhs.resize(d, T::zero());
        ws.scale.clear();
        ws.scale
            .extend(cols.iter().map(|&l| T::one() / T::of(size_after(l)).sqrt()));
        for a in 0..q {
            for b in 0..q {
                ws.xtx[a * d + b] = self.wtw[a * q + b];
            }
            ws.rhs[a] = self.wty[a];
        }
        for (ci, &l) in cols.iter().enumerate() {
            let cl = shift(l);
            let sl = ws.scale[ci];
            for c in 0..q {
                let base = if l == m { T::zero() } else { self.w_cross[l][c] };
                let v = (base + cl * block.wa[c]) * sl;
                ws.xtx[c * d + q + ci] = v;
                ws.xtx[(q + ci) * d + c] = v;
            }
            let base_y = if l == m { T::zero() } else { self.y_cross[l] };
            ws.rhs[q + ci] = (base_y + cl * block.ay) * sl;
            for (ck, &k) in cols.iter().enumerate().skip(ci) {
                let ck_shift = shift(k);
                let u = gram(l, k) + ck_shift * a_s(l) + cl * a_s(k) + cl * ck_shift * block.aa;
                let v = u * sl * ws.scale[ck];
                ws.xtx[(q + ci) * d + q + ck] = v;
                ws.xtx[(q + ck) * d + q + ci] = v;
            }
        }
        set_prior(ws, hyper, cols.iter().map(|&l| if l == m { eta_new } else { eta[l] }));
        Ok(solve_collapsed(self.n, self.yty, hyper, ws, false)?.log_marginal)
    }

    /// Applies a block move to the statistics. `volume` is the block's
    /// volume. When the source empties it is removed by swapping the last
    /// cluster into its slot; the returned value is `Some(source)` in that
    /// case so callers can mirror the relabelling.
    pub fn apply_move(&mut self, block: &MoveBlock<T>, volume: &[T], source: usize, target: Target) -> Option<usize> {
        let t = match target {
            Target::Existing(t) if t == source => return None,
            Target::Existing(t) => t,
            Target::New => {
                let m = self.num_clusters();
                self.sizes.push(0);
                self.volumes.push(vec![T::zero(); self.n]);
                for row in &mut self.gram {
                    row.push(T::zero());
                }
                self.gram.push(vec![T::zero(); m + 1]);
                self.w_cross.push(vec![T::zero(); self.q]);
                self.y_cross.push(T::zero());
                m
            }
        };
        let m = self.num_clusters();
        let a_s = |l: usize| if l < block.a_s.len() { block.a_s[l] } else { T::zero() };
        let shift = |l: usize| {
            if l == source {
                -T::one()
            } else if l == t {
                T::one()
            } else {
                T::zero()
            }
        };
        // rows/columns `source` and `t` change
        let old_gram = self.gram.clone();
        for &r in &[source, t] {
            for k in 0..m {
                let u = old_gram[r][k] + shift(k) * a_s(r) + shift(r) * a_s(k) + shift(r) * shift(k) * block.aa;
                self.gram[r][k] = u;
                self.gram[k][r] = u;
            }
        }
        for (v, &a) in self.volumes[source].iter_mut().zip(volume) {
            *v -= a;
        }
        for (v, &a) in self.volumes[t].iter_mut().zip(volume) {
            *v += a;
        }
        for c in 0..self.q {
            self.w_cross[source][c] -= block.wa[c];
            self.w_cross[t][c] += block.wa[c];
        }
        self.y_cross[source] -= block.ay;
        self.y_cross[t] += block.ay;
        self.sizes[source] -= block.size;
        self.sizes[t] += block.size;
        if self.sizes[source] == 0 {
            self.remove_cluster(source);
            Some(source)
        } else {
            None
        }
    }

    fn remove_cluster(&mut self, s: usize) {
        self.sizes.swap_remove(s);
        self.volumes.swap_remove(s);
        self.gram.swap_remove(s);
        for row in &mut self.gram {
            row.swap_remove(s);
        }
        self.w_cross.swap_remove(s);
        self.y_cross.swap_remove(s);
    }

    /// Reorders clusters so that new index `i` holds old cluster `order[i]`.
    pub fn permute(&mut self, order: &[usize]) {
        self.sizes = order.iter().map(|&o| self.sizes[o]).collect();
        self.volumes = order.iter().map(|&o| std::mem::take(&mut self.volumes[o])).collect();
        self.gram = order
            .iter()
            .map(|&a| order.iter().map(|&b| self.gram[a][b]).collect())
            .collect();
        self.w_cross = order.iter().map(|&o| std::mem::take(&mut self.w_cross[o])).collect();
        self.y_cross = order.iter().map(|&o| self.y_cross[o]).collect();
    }

    /// Largest absolute deviation between two statistic sets over the same
    /// cluster order.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        let mut upd = |a: T, b: T| worst = worst.max((a - b).abs());
        for (a, b) in self.gram.iter().flatten().zip(other.gram.iter().flatten()) {
            upd(*a, *b);
        }
        for (a, b) in self.w_cross.iter().flatten().zip(other.w_cross.iter().flatten()) {
            upd(*a, *b);
        }
        for (a, b) in self.y_cross.iter().zip(&other.y_cross) {
            upd(*a, *b);
        }
        for (a, b) in self.volumes.iter().flatten().zip(other.volumes.iter().flatten()) {
            upd(*a, *b);
        }
        worst
    }

    /// Full conditional of `(mu, beta*, sigma^2)` given the partition and `eta*`.
    pub fn posterior(&self, eta: &[T], hyper: &Hyperparameters<T>) -> Result<Posterior<T>> {
        if eta.len() != self.num_clusters() {
            return Err(Error::DimensionMismatch {
                what: "eta*",
                expected: self.num_clusters(),
                got: eta.len(),
            });
        }
        let mut ws = Workspace::default();
        let (xtx, xty) = self.normal_equations();
        ws.xtx = xtx;
        ws.rhs = xty;
        set_prior(&mut ws, hyper, eta.iter().copied());
        solve_collapsed(self.n, self.yty, hyper, &mut ws, true)
    }
}

fn set_prior<T: Real>(ws: &mut Workspace<T>, hyper: &Hyperparameters<T>, eta: impl Iterator<Item = T>) {
    ws.prec.clear();
    ws.prec.extend(hyper.c_mu.iter().map(|&c| T::one() / c));
    ws.prec.extend(eta.map(|e| T::one() / e));
    ws.mean.clear();
    ws.mean.extend_from_slice(&hyper.m_mu);
    ws.mean.resize(ws.prec.len(), T::zero());
}

/// Conjugate update given `ws.xtx = X~'X~`, `ws.rhs = X~'y` and the prior in
/// `ws.prec` / `ws.mean`.
fn solve_collapsed<T: Real>(
    n: usize,
    yty: T,
    hyper: &Hyperparameters<T>,
    ws: &mut Workspace<T>,
    keep: bool,
) -> Result<Posterior<T>> {
    let d = ws.prec.len();
    let mut prior_quad = T::zero();
    let mut log_det_prior_cov = T::zero();
    for i in 0..d {
        ws.xtx[i * d + i] += ws.prec[i];
        ws.rhs[i] += ws.prec[i] * ws.mean[i];
        prior_quad += ws.prec[i] * ws.mean[i] * ws.mean[i];
        log_det_prior_cov -= ws.prec[i].ln();
    }
    cholesky_jittered(&mut ws.xtx, d, &mut ws.scratch)?;
    ws.coef.clear();
    ws.coef.extend_from_slice(&ws.rhs);
    forward_substitute(&ws.xtx, d, &mut ws.coef);
    let post_quad = dot(&ws.coef, &ws.coef);
    let a_hat = hyper.a_sigma + T::of(n) / T::lit(2.0);
    let b_hat = hyper.b_sigma + (prior_quad + yty - post_quad) / T::lit(2.0);
    if !(b_hat > T::zero()) || !b_hat.is_finite() {
        return Err(Error::NonFinite("posterior scale of sigma^2"));
    }
    let log_det_post_cov = -log_det_from_cholesky(&ws.xtx, d);
    let log_marginal = -T::of(n) / T::lit(2.0) * (T::lit(2.0) * T::PI()).ln()
        + (log_det_post_cov - log_det_prior_cov) / T::lit(2.0)
        + hyper.a_sigma * hyper.b_sigma.ln()
        - a_hat * b_hat.ln()
        + a_hat.log_gamma()
        - hyper.a_sigma.log_gamma();
    if !log_marginal.is_finite() {
        return Err(Error::NonFinite("log marginal likelihood"));
    }
    let (chol, mean) = if keep {
        let mut mean = ws.coef.clone();
        backward_substitute_transpose(&ws.xtx, d, &mut mean);
        (ws.xtx.clone(), mean)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(Posterior {
        d,
        chol,
        mean,
        a_hat,
        b_hat,
        log_marginal,
    })
}

/// `sigma^2 ~ IG(a_hat, b_hat)`, `beta~ | sigma^2 ~ N(mean, sigma^2 Sigma_hat)`
/// with `Sigma_hat^{-1} = chol chol'`.
#[derive(Debug, Clone)]
pub struct Posterior<T> {
    d: usize,
    chol: Vec<T>,
    mean: Vec<T>,
    pub a_hat: T,
    pub b_hat: T,
    pub log_marginal: T,
}

impl<T: Real> Posterior<T> {
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Row-major lower Cholesky factor of the posterior precision (per unit sigma^2).
    pub fn precision_factor(&self) -> &[T] {
        &self.chol
    }

    /// `Sigma_hat` as a dense row-major matrix.
    pub fn covariance(&self) -> Vec<T> {
        let d = self.d;
        let mut out = vec![T::zero(); d * d];
        let mut e = vec![T::zero(); d];
        for col in 0..d {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[col] = T::one();
            forward_substitute(&self.chol, d, &mut e);
            backward_substitute_transpose(&self.chol, d, &mut e);
            for row in 0..d {
                out[row * d + col] = e[row];
            }
        }
        out
    }

    /// Joint draw of `(beta~, sigma^2)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, T) {
        let sigma2 = T::sample_inv_gamma(rng, self.a_hat, self.b_hat);
        let mut z: Vec<T> = (0..self.d).map(|_| T::sample_standard_normal(rng)).collect();
        backward_substitute_transpose(&self.chol, self.d, &mut z);
        let sd = sigma2.sqrt();
        let beta = self.mean.iter().zip(&z).map(|(&m, &e)| m + sd * e).collect();
        (beta, sigma2)
    }
}

/// Collapsed log marginal likelihood for a partition.
pub fn log_marginal_likelihood<T: Real>(
    design: &ClusteredDesign<T>,
    eta_star: &[T],
    hyper: &Hyperparameters<T>,
) -> Result<T> {
    design.log_marginal(eta_star, hyper, &mut Workspace::default())
}

/// Draws `(beta~, sigma^2)` from the full conditional; `beta~ = (mu', beta*')'`.
pub fn draw_coefficients<T: Real, R: Rng + ?Sized>(
    design: &ClusteredDesign<T>,
    eta_star: &[T],
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Result<(Vec<T>, T)> {
    Ok(design.posterior(eta_star, hyper)?.draw(rng))
}

/// Independent draws `eta*_m ~ IG(a_eta + 1/2, b_eta + beta*_m^2 / (2 sigma^2))`.
pub fn draw_eta<T: Real, R: Rng + ?Sized>(
    beta_star: &[T],
    sigma2: T,
    hyper: &Hyperparameters<T>,
    rng: &mut R,
) -> Vec<T> {
    let shape = hyper.a_eta + T::lit(0.5);
    beta_star
        .iter()
        .map(|&b| T::sample_inv_gamma(rng, shape, hyper.b_eta + b * b / (T::lit(2.0) * sigma2)))
        .collect()
}

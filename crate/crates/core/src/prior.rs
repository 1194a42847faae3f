//! Latent prior estimation: k-DPP node selection on the structural graph,
//! PCA of the selected node features, and an isotropic Gaussian KDE over
//! the projected points that doubles as the "real" sample source for the
//! latent critic.

use std::path::Path;

use nalgebra::{SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::BandwidthPolicy;
use crate::datamodel::{read_matrix_csv, Subject};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

/// Sorted, distinct node indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSubset {
    pub indices: Vec<usize>,
}

impl NodeSubset {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("subset indices must be distinct".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("subset index {bad} out of range 0..{n}")));
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Exact k-DPP sampler over the kernel `L = A + r I`.
///
/// `r` is the configured ridge when `A + ridge·I` is already positive
/// definite, and otherwise the shift that lifts the smallest eigenvalue of
/// `A` to exactly `ridge` (any graph with an edge has a negative adjacency
/// eigenvalue).
#[derive(Clone, Debug)]
pub struct KDpp {
    pool: Vec<usize>,
    kernel: Mat,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat,
    pub ridge: f64,
}

impl KDpp {
    /// Builds the kernel over `pool` (all nodes when `None`).
    pub fn from_adjacency(adjacency: &Mat, ridge: f64, pool: Option<&[usize]>) -> Result<Self> {
        let n = adjacency.nrows();
        let pool: Vec<usize> = match pool {
            Some(p) => NodeSubset::new(p.to_vec(), n)?.indices,
            None => (0..n).collect(),
        };
        if pool.is_empty() {
            return Err(Error::InvalidArgument("empty candidate pool".into()));
        }
        let sub = Mat::from_fn(pool.len(), pool.len(), |i, j| adjacency[(pool[i], pool[j])]);
        let base = SymmetricEigen::new(sub.clone());
        let min_eig = base.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let shift = ridge - min_eig.min(0.0);
        let mut kernel = sub;
        for i in 0..pool.len() {
            kernel[(i, i)] += shift;
        }
        let eigenvalues: Vec<f64> = base.eigenvalues.iter().map(|l| l + shift).collect();
        if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Numerical(
                "k-DPP kernel is not positive definite after regularization".into(),
            ));
        }
        Ok(Self {
            pool,
            kernel,
            eigenvalues,
            eigenvectors: base.eigenvectors,
            ridge: shift,
        })
    }

    /// Kernel restricted to the candidate pool (pool order).
    pub fn kernel(&self) -> &Mat {
        &self.kernel
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// Elementary symmetric polynomials `e[l][j]` of the first `j` eigenvalues.
    fn elementary_symmetric(&self, k: usize) -> Vec<Vec<f64>> {
        let n = self.eigenvalues.len();
        let mut e = vec![vec![0.0; n + 1]; k + 1];
        e[0].iter_mut().for_each(|v| *v = 1.0);
        for l in 1..=k {
            for j in 1..=n {
                e[l][j] = e[l][j - 1] + self.eigenvalues[j - 1] * e[l - 1][j - 1];
            }
        }
        e
    }

    /// Draws one size-`k` subset (indices into the full node set).
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Result<NodeSubset> {
        let n = self.eigenvalues.len();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("subset size {k} out of range 1..={n}")));
        }
        let e = self.elementary_symmetric(k);
        if !(e[k][n] > 0.0) || !e[k][n].is_finite() {
            return Err(Error::Numerical("k-DPP normalizer is not positive".into()));
        }

        // phase 1: choose k eigenvectors
        let mut chosen = Vec::with_capacity(k);
        let mut remaining = k;
        for j in (1..=n).rev() {
            if remaining == 0 {
                break;
            }
            if j == remaining {
                chosen.extend((0..j).rev());
                break;
            }
            let p = self.eigenvalues[j - 1] * e[remaining - 1][j - 1] / e[remaining][j];
            if rng.random::<f64>() < p {
                chosen.push(j - 1);
                remaining -= 1;
            }
        }

        // phase 2: sample from the projection DPP spanned by the chosen eigenvectors
        let mut basis: Vec<Vec<f64>> = chosen
            .iter()
            .map(|&c| self.eigenvectors.column(c).iter().copied().collect())
            .collect();
        let mut picked = Vec::with_capacity(k);
        while !basis.is_empty() {
            let weights: Vec<f64> = (0..n)
                .map(|i| basis.iter().map(|v| v[i] * v[i]).sum::<f64>())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut item = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    item = i;
                    break;
                }
                u -= w;
            }
            picked.push(item);

            let pivot = (0..basis.len())
                .max_by(|&a, &b| basis[a][item].abs().total_cmp(&basis[b][item].abs()))
                .expect("non-empty basis");
            let pv = basis.swap_remove(pivot);
            for v in basis.iter_mut() {
                let factor = v[item] / pv[item];
                for (x, p) in v.iter_mut().zip(&pv) {
                    *x -= factor * p;
                }
            }
            // re-orthonormalize (modified Gram-Schmidt)
            for a in 0..basis.len() {
                for b in 0..a {
                    let dot: f64 = basis[a].iter().zip(&basis[b]).map(|(x, y)| x * y).sum();
                    let (head, tail) = basis.split_at_mut(a);
                    for (x, y) in tail[0].iter_mut().zip(&head[b]) {
                        *x -= dot * y;
                    }
                }
                let norm = basis[a].iter().map(|x| x * x).sum::<f64>().sqrt();
                basis[a].iter_mut().for_each(|x| *x /= norm);
            }
        }
        let indices = picked.into_iter().map(|i| self.pool[i]).collect();
        NodeSubset::new(indices, usize::MAX)
    }
}

/// Samples `m` diverse ROIs from the structural graph with a k-DPP.
pub fn select_roi_subset(
    adjacency: &Mat,
    m: usize,
    ridge: f64,
    pool: Option<&[usize]>,
    seed: u64,
) -> Result<NodeSubset> {
    let n = pool.map_or(adjacency.nrows(), <[usize]>::len);
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("m = {m} out of range 1..={n}")));
    }
    let dpp = KDpp::from_adjacency(adjacency, ridge, pool)?;
    dpp.sample(m, &mut rng::stream(seed, "kdpp", 0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaMap {
    /// `1 x d`
    pub mean: Mat,
    /// `d x q`, orthonormal columns
    pub components: Mat,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl PcaMap {
    pub fn explained_variance_ratio(&self) -> f64 {
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    pub fn project(&self, x: &Mat) -> Mat {
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= &self.mean;
        }
        centered * &self.components
    }

    pub fn reconstruct(&self, z: &Mat) -> Mat {
        let mut x = z * self.components.transpose();
        for mut row in x.row_iter_mut() {
            row += &self.mean;
        }
        x
    }
}

/// PCA on mean-centered rows; components are the top-`q` right singular vectors.
pub fn fit_pca(x: &Mat, q: usize) -> Result<PcaMap> {
    let (rows, d) = x.shape();
    if q == 0 || q > rows.min(d) {
        return Err(Error::InvalidArgument(format!(
            "q = {q} must lie in 1..={} for a {rows}x{d} input",
            rows.min(d)
        )));
    }
    if let Some((r, c)) = crate::linalg::first_non_finite(x) {
        return Err(Error::NonFinite {
            field: "pca input".into(),
            row: r,
            col: c,
        });
    }
    let mean = crate::linalg::row_mean(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let denom = (rows.max(2) - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    if !(total_variance > 0.0) {
        return Err(Error::Numerical("PCA input has zero variance".into()));
    }
    let svd = SVD::new(centered, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = Mat::zeros(d, q);
    let mut explained_variance = Vec::with_capacity(q);
    for (k, &idx) in order.iter().take(q).enumerate() {
        let row = v_t.row(idx);
        // sign convention: largest-magnitude loading is positive
        let pivot = row.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(j, k)] = sign * row[j];
        }
        let s = svd.singular_values[idx];
        explained_variance.push(s * s / denom);
    }
    Ok(PcaMap {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Equal-weight mixture of isotropic Gaussians `N(center_i, b² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPrior {
    pub centers: Mat,
    pub bandwidth: f64,
}

pub fn scott_bandwidth(centers: &Mat) -> f64 {
    let (m, q) = centers.shape();
    if m < 2 {
        return 0.0;
    }
    let mean_sd = (0..q)
        .map(|j| {
            let col = centers.column(j);
            let mu = col.mean();
            (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
        })
        .sum::<f64>()
        / q as f64;
    (m as f64).powf(-1.0 / (q as f64 + 4.0)) * mean_sd
}

pub fn fit_kde(centers: &Mat, policy: BandwidthPolicy) -> Result<LatentPrior> {
    if centers.nrows() == 0 || centers.ncols() == 0 {
        return Err(Error::InvalidArgument("KDE needs at least one center".into()));
    }
    if let Some((row, col)) = crate::linalg::first_non_finite(centers) {
        return Err(Error::NonFinite {
            field: "kde centers".into(),
            row,
            col,
        });
    }
    let bandwidth = match policy {
        BandwidthPolicy::Fixed(b) => b,
        BandwidthPolicy::Scott => scott_bandwidth(centers),
    };
    LatentPrior::new(centers.clone(), bandwidth)
}

impl LatentPrior {
    pub fn new(centers: Mat, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Numerical(format!("KDE bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { centers, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let (m, q) = self.centers.shape();
        let b2 = self.bandwidth * self.bandwidth;
        let log_norm = -0.5 * q as f64 * (2.0 * std::f64::consts::PI * b2).ln() - (m as f64).ln();
        let exponents: Vec<f64> = (0..m)
            .map(|i| {
                let d2: f64 = (0..q).map(|j| (z[j] - self.centers[(i, j)]).powi(2)).sum();
                -0.5 * d2 / b2
            })
            .collect();
        let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
        log_norm + max + sum.ln()
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        self.log_density(z).exp()
    }

    /// `n` draws: a uniformly chosen center plus `b` times a standard normal vector.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Mat> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let mut rng = rng::stream(seed, "kde-sample", 0);
        Ok(self.sample_with(n, &mut rng))
    }

    pub fn sample_with<R: Rng>(&self, n: usize, rng: &mut R) -> Mat {
        let (m, q) = self.centers.shape();
        let mut out = Mat::zeros(n, q);
        for i in 0..n {
            let c = rng.random_range(0..m);
            for j in 0..q {
                let eps: f64 = StandardNormal.sample(rng);
                out[(i, j)] = self.centers[(c, j)] + self.bandwidth * eps;
            }
        }
        out
    }

    /// Writes `centers.csv` and `bandwidth.csv` (shortest round-trip float text).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = String::new();
        for row in self.centers.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        std::fs::write(dir.join("centers.csv"), text)?;
        std::fs::write(dir.join("bandwidth.csv"), format!("{:e}\n", self.bandwidth))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let centers = read_matrix_csv(&dir.join("centers.csv"))?;
        let b = read_matrix_csv(&dir.join("bandwidth.csv"))?;
        if b.len() != 1 {
            return Err(Error::Parse {
                path: dir.join("bandwidth.csv"),
                message: "expected a single scalar".into(),
            });
        }
        Self::new(centers, b[0])
    }
}

/// Everything produced when fitting the prior on a training split.
#[derive(Clone, Debug)]
pub struct FittedPrior {
    pub subsets: Vec<NodeSubset>,
    pub pca: PcaMap,
    pub kde: LatentPrior,
}

/// Fits the latent prior from training subjects only: one k-DPP subset per
/// subject, the selected feature rows pooled across subjects, PCA to `q`
/// dimensions and a KDE over the projected rows.
pub fn fit_prior(
    subjects: &[&Subject],
    m: usize,
    q: usize,
    ridge: f64,
    pool: Option<&[usize]>,
    policy: BandwidthPolicy,
    seed: u64,
) -> Result<FittedPrior> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("no subjects to fit the prior on".into()));
    }
    let d = subjects[0].node_features.ncols();
    let mut subsets = Vec::with_capacity(subjects.len());
    let mut rows: Vec<f64> = Vec::with_capacity(subjects.len() * m * d);
    for (i, s) in subjects.iter().enumerate() {
        let dpp = KDpp::from_adjacency(&s.adjacency, ridge, pool)?;
        let subset = dpp.sample(m, &mut rng::stream(seed, "prior-dpp", i as u64))?;
        for &node in &subset.indices {
            rows.extend(s.node_features.row(node).iter());
        }
        subsets.push(subset);
    }
    let x_u = Mat::from_row_slice(rows.len() / d, d, &rows);
    let pca = fit_pca(&x_u, q)?;
    let kde = fit_kde(&pca.project(&x_u), policy)?;
    Ok(FittedPrior { subsets, pca, kde })
}

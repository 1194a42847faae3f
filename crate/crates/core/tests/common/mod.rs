//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use hyperfuse_core::cnnae::{CnnAe, CnnInput, CnnWeights};
use hyperfuse_core::config::{BandwidthPolicy, Normalization};
use hyperfuse_core::graphgan::{GanWeights, GraphGan, GraphInput};
use hyperfuse_core::hyperfusion::{
    build_hypergraph, edge_aggregate_fuse, vertex_aggregate, vertex_convolve, AhfWeights, FusionInput,
    FusionOperators, FusionState, Hypergraph, VER_WEIGHT,
};
use hyperfuse_core::linalg::{min_max_scale, normalized_adjacency};
use hyperfuse_core::nn::{Classifier, ParamSet};
use hyperfuse_core::prior::{fit_kde, KDpp, LatentPrior};
use hyperfuse_core::trainer::fusion_gradient;
use hyperfuse_core::Mat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_adjacency(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Mat {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    a
}

// ---------------------------------------------------------------------------
// central differences

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-6;

pub fn grad_entry_ok(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_ABS_TOL || diff / analytic.abs().max(numeric.abs()) < FD_REL_TOL
}

/// Compares every entry of `analytic` with a central difference of `f`;
/// returns one message per mismatching entry.
pub fn fd_check<P: ParamSet>(label: &str, params: &P, analytic: &P, f: &dyn Fn(&P) -> f64) -> Vec<String> {
    let names: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let grads: Vec<Mat> = analytic.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut failures = Vec::new();
    for (t, (name, len)) in names.iter().enumerate() {
        for idx in 0..*len {
            let mut plus = params.clone();
            (*plus.tensors_mut()[t])[idx] += FD_STEP;
            let mut minus = params.clone();
            (*minus.tensors_mut()[t])[idx] -= FD_STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
            let a = grads[t][idx];
            if !grad_entry_ok(a, numeric) {
                failures.push(format!("{label}: {name}[{idx}] analytic {a:.8e} numeric {numeric:.8e}"));
            }
        }
    }
    failures
}

pub struct GradFixture {
    pub adjacency: Mat,
    pub a_hat: Mat,
    pub x: Mat,
    pub x_target: Mat,
    pub real: Mat,
    pub xv: Mat,
    pub v_target: Mat,
    pub y: [f64; 2],
    pub gan: GraphGan,
    pub ae: CnnAe,
    pub fusion: FusionState,
    pub z: Mat,
    pub r: Mat,
    pub ops: FusionOperators,
}

pub fn grad_fixture(seed: u64, label: usize) -> GradFixture {
    let (n, d, c, q, hidden, k) = (7, 5, 6, 3, 4, 3);
    let mut g = rng(seed);
    let adjacency = random_adjacency(n, 0.4, &mut g);
    let a_hat = normalized_adjacency(&adjacency);
    let x = normal_mat(n, d, &mut g);
    let x_target = min_max_scale(&x);
    let real = normal_mat(n, q, &mut g);
    let xv = normal_mat(n, c, &mut g).map(f64::abs);
    let v_target = min_max_scale(&normal_mat(1, c, &mut g));
    let gan = GraphGan::new(n, d, q, hidden, hidden, 4, &mut g);
    let ae = CnnAe::new(c, q, hidden, hidden, &mut g);
    let mut fusion = FusionState::new(n, q, 5, &mut g);
    // Larger Θ keeps the fused features away from the critic's kink at zero.
    fusion.theta *= 2.0;
    let z = normal_mat(n, q, &mut g);
    let r = normal_mat(n, q, &mut g);
    let ops = FusionOperators::new(
        &build_hypergraph(&z, k).unwrap(),
        &build_hypergraph(&r, k).unwrap(),
        Normalization::Printed,
    )
    .unwrap();
    let y = if label == 1 { [0.0, 1.0] } else { [1.0, 0.0] };
    GradFixture {
        adjacency,
        a_hat,
        x,
        x_target,
        real,
        xv,
        v_target,
        y,
        gan,
        ae,
        fusion,
        z,
        r,
        ops,
    }
}

impl GradFixture {
    pub fn graph_input(&self) -> GraphInput<'_> {
        GraphInput {
            adjacency: &self.adjacency,
            a_hat: &self.a_hat,
            features: &self.x,
            target: &self.x_target,
            y: self.y,
        }
    }

    pub fn cnn_input(&self) -> CnnInput<'_> {
        CnnInput {
            a_hat: &self.a_hat,
            features: &self.xv,
            target: &self.v_target,
            y: self.y,
        }
    }

    pub fn fusion_input(&self) -> FusionInput<'_> {
        FusionInput {
            z: &self.z,
            r: &self.r,
            ops: &self.ops,
            y: self.y,
        }
    }
}

/// Named weight vectors selecting one graph-GAN loss each.
pub fn gan_cases() -> Vec<(&'static str, GanWeights)> {
    let one = GanWeights::default();
    vec![
        ("loss_G", GanWeights { adv_g: 1.0, ..one }),
        ("loss_DZ", GanWeights { dz: 1.0, ..one }),
        ("loss_Rec1", GanWeights { rec1: 1.0, ..one }),
        ("loss_Cls1", GanWeights { cls1: 1.0, ..one }),
    ]
}

pub fn cnn_cases() -> Vec<(&'static str, CnnWeights)> {
    vec![
        ("loss_Rec2", CnnWeights { rec2: 1.0, cls2: 0.0 }),
        ("loss_Cls2", CnnWeights { rec2: 0.0, cls2: 1.0 }),
    ]
}

pub fn fusion_cases() -> Vec<(&'static str, AhfWeights)> {
    let one = AhfWeights::default();
    vec![
        ("loss_DH", AhfWeights { dh: 1.0, ..one }),
        ("loss_Ver", AhfWeights { ver: 1.0, ..one }),
        ("loss_Cls3", AhfWeights { cls3: 1.0, ..one }),
        (
            "loss_AHF",
            AhfWeights {
                dh: 1.0,
                ver: VER_WEIGHT,
                cls3: 1.0,
            },
        ),
    ]
}

/// Every loss against every parameter group, on fixtures of both labels.
/// Returns `(case, failures)` per loss.
pub fn gradient_suite() -> Vec<(String, Vec<String>)> {
    let mut out = Vec::new();
    for (seed, label) in [(1u64, 0usize), (2, 1)] {
        let fx = grad_fixture(seed, label);
        let gi = fx.graph_input();
        for (name, w) in gan_cases() {
            let (_, grad) = fx.gan.loss_grads(&gi, &fx.real, &w);
            let f = |p: &GraphGan| p.losses(&gi, &fx.real).weighted(&w);
            out.push((format!("{name} seed {seed}"), fd_check(name, &fx.gan, &grad, &f)));
        }
        let ci = fx.cnn_input();
        let cls = &fx.gan.classifier;
        for (name, w) in cnn_cases() {
            let (_, grad_ae, grad_cls) = fx.ae.loss_grads(cls, &ci, &w);
            let f_ae = |p: &CnnAe| p.losses(cls, &ci).weighted(&w);
            let mut failures = fd_check(name, &fx.ae, &grad_ae, &f_ae);
            let f_cls = |c: &Classifier| fx.ae.losses(c, &ci).weighted(&w);
            failures.extend(fd_check(name, cls, &grad_cls, &f_cls));
            out.push((format!("{name} seed {seed}"), failures));
        }
        let fi = fx.fusion_input();
        for (name, w) in fusion_cases() {
            let (_, grad) = fx.fusion.loss_grads(&fi, &w);
            let f = |p: &FusionState| p.losses(&fi).weighted(&w);
            out.push((format!("{name} seed {seed}"), fd_check(name, &fx.fusion, &grad, &f)));
        }
        let gamma = 0.5;
        let grad = fusion_gradient(&fx.fusion, &fi, gamma);
        let f = |p: &FusionState| gamma * p.losses(&fi).total();
        out.push((
            format!("gamma*loss_AHF seed {seed}"),
            fd_check("gamma*loss_AHF", &fx.fusion, &grad, &f),
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// kernel density prior

/// Trapezoidal mass of a 2-D prior over `[min - 6b, max + 6b]²` on a `steps²` grid.
pub fn kde_grid_mass(prior: &LatentPrior, steps: usize) -> f64 {
    assert_eq!(prior.dim(), 2);
    let b = prior.bandwidth;
    let bounds = |j: usize| {
        let col = prior.centers.column(j);
        (col.min() - 6.0 * b, col.max() + 6.0 * b)
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let (hx, hy) = ((x1 - x0) / steps as f64, (y1 - y0) / steps as f64);
    let mut mass = 0.0;
    for i in 0..=steps {
        let wx = if i == 0 || i == steps { 0.5 } else { 1.0 };
        for j in 0..=steps {
            let wy = if j == 0 || j == steps { 0.5 } else { 1.0 };
            mass += wx * wy * prior.density(&[x0 + i as f64 * hx, y0 + j as f64 * hy]);
        }
    }
    mass * hx * hy
}

pub fn kde_suite() -> Vec<String> {
    let mut failures = Vec::new();
    for seed in 0..4u64 {
        let mut g = rng(100 + seed);
        let m = 3 + 4 * seed as usize;
        let centers = normal_mat(m, 2, &mut g) * (1.0 + seed as f64);
        let policy = if seed % 2 == 0 {
            BandwidthPolicy::Scott
        } else {
            BandwidthPolicy::Fixed(0.3)
        };
        let prior = fit_kde(&centers, policy).unwrap();
        let mass = kde_grid_mass(&prior, 400);
        if (mass - 1.0).abs() > 0.01 {
            failures.push(format!("grid mass {mass} for {m} centers"));
        }
    }

    let prior = LatentPrior::new(normal_mat(5, 3, &mut rng(7)), 0.4).unwrap();
    let a = prior.sample(200, 9).unwrap();
    let b = prior.sample(200, 9).unwrap();
    if a != b {
        failures.push("same seed gave different samples".into());
    }
    if a == prior.sample(200, 10).unwrap() {
        failures.push("different seeds gave identical samples".into());
    }

    let centers = normal_mat(6, 4, &mut rng(8));
    let collapsed = LatentPrior::new(centers.clone(), 1e-12).unwrap();
    let draws = collapsed.sample(1000, 3).unwrap();
    for i in 0..draws.nrows() {
        let nearest = (0..centers.nrows())
            .map(|c| (0..4).map(|j| (draws[(i, j)] - centers[(c, j)]).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        if nearest > 1e-9 {
            failures.push(format!("degenerate draw {i} is {nearest:e} from every center"));
            break;
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// k-DPP

/// Determinant by cofactor expansion; only meant for tiny matrices.
pub fn det(m: &Mat) -> f64 {
    let n = m.nrows();
    match n {
        0 => 1.0,
        1 => m[(0, 0)],
        _ => (0..n)
            .map(|j| {
                let minor = Mat::from_fn(n - 1, n - 1, |r, c| m[(r + 1, if c < j { c } else { c + 1 })]);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * det(&minor)
            })
            .sum(),
    }
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Exact `P(U) = det(L_U) / Σ_{|U'|=k} det(L_U')` for every size-`k` subset.
pub fn kdpp_exact(kernel: &Mat, k: usize) -> Vec<(Vec<usize>, f64)> {
    let all = subsets(kernel.nrows(), k);
    let dets: Vec<f64> = all
        .iter()
        .map(|u| det(&Mat::from_fn(u.len(), u.len(), |i, j| kernel[(u[i], u[j])])))
        .collect();
    let total: f64 = dets.iter().sum();
    all.into_iter().zip(dets).map(|(u, d)| (u, d / total)).collect()
}

fn adjacency_from_mask(n: usize, mask: u32) -> Mat {
    let mut a = Mat::zeros(n, n);
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask & (1 << bit) != 0 {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
            bit += 1;
        }
    }
    a
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// One representative per isomorphism class of simple graphs on `n` nodes.
pub fn nonisomorphic_graphs(n: usize) -> Vec<Mat> {
    let pairs = n * n.saturating_sub(1) / 2;
    let perms = permutations(n);
    let code = |a: &Mat| -> u32 {
        let mut c = 0u32;
        let mut bit = 0;
        for i in 0..n {
            for j in i + 1..n {
                if a[(i, j)] != 0.0 {
                    c |= 1 << bit;
                }
                bit += 1;
            }
        }
        c
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut reps = Vec::new();
    for mask in 0u32..1 << pairs {
        let a = adjacency_from_mask(n, mask);
        let canon = perms
            .iter()
            .map(|p| code(&Mat::from_fn(n, n, |i, j| a[(p[i], p[j])])))
            .min()
            .unwrap();
        if seen.insert(canon) {
            reps.push(a);
        }
    }
    reps
}

pub struct DppCase {
    pub adjacency: Mat,
    pub n: usize,
    pub m: usize,
    /// Subsets compared (those with nonzero exact probability).
    pub comparisons: usize,
    pub worst_z: f64,
    pub failures: Vec<String>,
}

pub const DPP_DRAWS: usize = 20_000;
pub const DPP_RIDGE: f64 = 1e-3;

/// Draws `draws` size-`m` subsets and compares each subset's frequency with
/// its exact probability. Returns `(comparisons, max |z|, subsets beyond 3 SE)`.
pub fn dpp_frequency_check(dpp: &KDpp, m: usize, draws: usize, seed: u64) -> (usize, f64, Vec<String>) {
    let exact = kdpp_exact(dpp.kernel(), m);
    let mut counts = vec![0usize; exact.len()];
    let mut g = rng(seed);
    for _ in 0..draws {
        let mut s = dpp.sample(m, &mut g).unwrap().indices;
        s.sort_unstable();
        let pos = exact.iter().position(|(u, _)| *u == s).expect("sample is a size-m subset");
        counts[pos] += 1;
    }
    let mut failures = Vec::new();
    let mut worst_z: f64 = 0.0;
    let mut comparisons = 0;
    for ((u, p), c) in exact.iter().zip(&counts) {
        let freq = *c as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let diff = (freq - p).abs();
        if *p > 0.0 {
            comparisons += 1;
        }
        if se > 0.0 {
            worst_z = worst_z.max(diff / se);
        }
        if diff > 3.0 * se + 1e-12 {
            failures.push(format!("U={u:?}: freq {freq} exact {p:.6}"));
        }
    }
    (comparisons, worst_z, failures)
}

/// Sampler frequencies against exact determinant ratios on every graph
/// with at most five nodes (up to isomorphism) and every `m <= 3`.
pub fn dpp_suite() -> Vec<DppCase> {
    let mut cases = Vec::new();
    for n in 1..=5 {
        for (gi, a) in nonisomorphic_graphs(n).into_iter().enumerate() {
            let dpp = KDpp::from_adjacency(&a, DPP_RIDGE, None).unwrap();
            for m in 1..=n.min(3) {
                let seed = 1000 * n as u64 + 10 * gi as u64 + m as u64;
                let (comparisons, worst_z, failures) = dpp_frequency_check(&dpp, m, DPP_DRAWS, seed);
                cases.push(DppCase {
                    adjacency: a.clone(),
                    n,
                    m,
                    comparisons,
                    worst_z,
                    failures: failures
                        .into_iter()
                        .map(|f| format!("n={n} graph {gi} m={m} {f}"))
                        .collect(),
                });
            }
        }
    }
    cases
}

// ---------------------------------------------------------------------------
// hypergraphs

/// Hand-built three-node instance: points at 0, 1 and 3 on a line with
/// `K = 2`, so `e0 = {0, 1}`, `e1 = {1, 0}`, `e2 = {2, 1}`.
pub fn three_node_incidence() -> Mat {
    // rows = nodes, columns = hyperedges
    Mat::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0])
}

/// The fusion forward pass as dense loops: `Ẑ_H[e] = Σ_v De[e]^{-1/2} H[v,e] De[v]^{-1/2} Ẑ[v]`,
/// `F[v] = Σ_e Dv[v]^{-1/2} H[v,e] Dv[e]^{-1/2} (Ẑ_H[e] + R_H[e])` with one incidence for both.
pub fn dense_fusion_oracle(h: &Mat, z: &Mat, r: &Mat, theta: &Mat) -> (Mat, Mat, Mat) {
    let n = h.nrows();
    let q = z.ncols();
    let de: Vec<f64> = (0..n).map(|e| (0..n).map(|v| h[(v, e)]).sum()).collect();
    let dv: Vec<f64> = (0..n).map(|v| (0..n).map(|e| h[(v, e)]).sum()).collect();
    let mut z_h = Mat::zeros(n, q);
    let mut r_agg = Mat::zeros(n, q);
    for e in 0..n {
        for v in 0..n {
            let w = h[(v, e)] / (de[e].sqrt() * de[v].sqrt());
            for j in 0..q {
                z_h[(e, j)] += w * z[(v, j)];
                r_agg[(e, j)] += w * r[(v, j)];
            }
        }
    }
    let mut r_h = Mat::zeros(n, q);
    for e in 0..n {
        for j in 0..q {
            for l in 0..q {
                r_h[(e, j)] += r_agg[(e, l)] * theta[(l, j)];
            }
        }
    }
    let mut f = Mat::zeros(n, q);
    for v in 0..n {
        for e in 0..n {
            let w = h[(v, e)] / (dv[v].sqrt() * dv[e].sqrt());
            for j in 0..q {
                f[(v, j)] += w * (z_h[(e, j)] + r_h[(e, j)]);
            }
        }
    }
    (z_h, r_h, f)
}

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).abs().max()
}

pub fn hypergraph_suite() -> Vec<String> {
    let mut failures = Vec::new();
    let norm = Normalization::Printed;
    for (seed, n, q) in [(1u64, 9usize, 3usize), (2, 20, 4), (3, 6, 2)] {
        let mut g = rng(seed);
        let rep = normal_mat(n, q, &mut g);
        for k in 1..=n {
            let hg = build_hypergraph(&rep, k).unwrap();
            for e in 0..n {
                if hg.incidence.column(e).sum() != k as f64 {
                    failures.push(format!("n={n} K={k}: column {e} sums to {}", hg.incidence.column(e).sum()));
                }
                if hg.incidence[(e, e)] != 1.0 {
                    failures.push(format!("n={n} K={k}: hyperedge {e} misses its center"));
                }
            }
        }

        let identity = build_hypergraph(&rep, 1).unwrap();
        if identity.incidence != Mat::identity(n, n) {
            failures.push(format!("n={n}: K=1 incidence is not the identity"));
        }
        let z = normal_mat(n, q, &mut g);
        let r = normal_mat(n, q, &mut g);
        let theta = normal_mat(q, q, &mut g);
        let z_h = vertex_aggregate(&identity, &z, norm).unwrap();
        if max_abs_diff(&z_h, &z) > 1e-12 {
            failures.push(format!("n={n}: K=1 vertex aggregation is not the identity"));
        }
        let r_h = vertex_convolve(&identity, &r, &theta, norm).unwrap();
        if max_abs_diff(&r_h, &(&r * &theta)) > 1e-12 {
            failures.push(format!("n={n}: K=1 vertex convolution is not R Θ"));
        }
        let f = edge_aggregate_fuse(&identity, &identity, &z, &r, norm).unwrap();
        if max_abs_diff(&f, &(&z + &r)) > 1e-12 {
            failures.push(format!("n={n}: K=1 fusion is not Ẑ + R"));
        }

        let k = 3.min(n);
        let h1 = build_hypergraph(&z, k).unwrap();
        let h2 = build_hypergraph(&r, k).unwrap();
        let (x, y) = (normal_mat(n, q, &mut g), normal_mat(n, q, &mut g));
        let (x2, y2) = (normal_mat(n, q, &mut g), normal_mat(n, q, &mut g));
        let (a, b) = (1.7, -0.6);
        let lhs = vertex_aggregate(&h1, &(&x * a + &y * b), norm).unwrap();
        let rhs = vertex_aggregate(&h1, &x, norm).unwrap() * a + vertex_aggregate(&h1, &y, norm).unwrap() * b;
        if max_abs_diff(&lhs, &rhs) > 1e-10 {
            failures.push(format!("n={n}: vertex aggregation is not linear"));
        }
        let lhs = edge_aggregate_fuse(&h1, &h2, &(&x * a + &x2 * b), &(&y * a + &y2 * b), norm).unwrap();
        let rhs = edge_aggregate_fuse(&h1, &h2, &x, &y, norm).unwrap() * a
            + edge_aggregate_fuse(&h1, &h2, &x2, &y2, norm).unwrap() * b;
        if max_abs_diff(&lhs, &rhs) > 1e-10 {
            failures.push(format!("n={n}: edge aggregation is not linear"));
        }
    }

    let points = Mat::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
    let built = build_hypergraph(&points, 2).unwrap();
    let h = three_node_incidence();
    if built.incidence != h {
        failures.push(format!("three-node incidence {} differs from the hand-built one", built.incidence));
    }
    let mut g = rng(33);
    let z = normal_mat(3, 2, &mut g);
    let r = normal_mat(3, 2, &mut g);
    let theta = normal_mat(2, 2, &mut g);
    let (z_h, r_h, f) = dense_fusion_oracle(&h, &z, &r, &theta);
    let hg = Hypergraph::from_incidence(h).unwrap();
    let lib_zh = vertex_aggregate(&hg, &z, norm).unwrap();
    let lib_rh = vertex_convolve(&hg, &r, &theta, norm).unwrap();
    let lib_f = edge_aggregate_fuse(&hg, &hg, &lib_zh, &lib_rh, norm).unwrap();
    for (name, lib, oracle) in [("Ẑ_H", &lib_zh, &z_h), ("R_H", &lib_rh, &r_h), ("F", &lib_f, &f)] {
        if max_abs_diff(lib, oracle) > 1e-12 {
            failures.push(format!("three-node {name} differs from the dense oracle"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// two-sample statistics

/// Squared RBF-kernel MMD (biased V-statistic) with the median-heuristic
/// bandwidth over the pooled sample.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

/// Median pairwise squared distance of the pooled sample.
pub fn median_sq_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    dists.sort_by(f64::total_cmp);
    dists[dists.len() / 2].max(1e-12)
}

/// Biased squared MMD with kernel `exp(-|a-b|² / scale)`.
pub fn rbf_mmd2_with(x: &[Vec<f64>], y: &[Vec<f64>], scale: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / scale).exp();
    let mean_k = |s: &[Vec<f64>], t: &[Vec<f64>]| {
        s.iter().map(|a| t.iter().map(|b| k(a, b)).sum::<f64>()).sum::<f64>() / (s.len() * t.len()) as f64
    };
    mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y)
}

/// Biased squared MMD, median-heuristic scale on the pooled sample.
pub fn rbf_mmd2(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    rbf_mmd2_with(x, y, median_sq_distance(x, y))
}

/// Nearest-centroid accuracy on `test` with centroids taken from `train`.
pub fn nearest_centroid_accuracy(
    train: &[(Vec<f64>, usize)],
    test: &[(Vec<f64>, usize)],
) -> f64 {
    let dim = train[0].0.len();
    let mut centroids = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (x, y) in train {
        counts[*y] += 1;
        for (c, v) in centroids[*y].iter_mut().zip(x) {
            *c += v;
        }
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let pred = usize::from(d2(x, &centroids[1]) < d2(x, &centroids[0]));
            pred == *y
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Two-sided 95% normal-approximation binomial interval around `p` for `n` trials.
pub fn binomial_ci95(p: f64, n: usize) -> (f64, f64) {
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    (p - half, p + half)
}

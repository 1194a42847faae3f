mod common;

use common::*;
use hyperfuse_core::config::Normalization;
use hyperfuse_core::hyperfusion::{
    bilinear_connectivity, build_hypergraph, edge_aggregate_fuse, loss_ahf, vertex_aggregate, vertex_convolve,
    FusionOperators, FusionState, HyperedgeCritic, Hypergraph,
};
use hyperfuse_core::nn::Classifier;
use hyperfuse_core::Mat;
use proptest::prelude::*;

const NORM: Normalization = Normalization::Printed;

#[test]
fn structural_suite_passes() {
    let start = std::time::Instant::now();
    let failures = hypergraph_suite();
    assert!(failures.is_empty(), "{failures:?}");
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn line_points_pick_nearest_neighbor() {
    let rep = Mat::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 10.0]);
    let hg = build_hypergraph(&rep, 2).unwrap();
    let members = |e: usize| -> Vec<usize> { (0..4).filter(|&v| hg.incidence[(v, e)] == 1.0).collect() };
    assert_eq!(members(0), vec![0, 1]);
    assert_eq!(members(3), vec![2, 3]);
    // node 1 is equidistant from 0 and 2: the lower index wins
    assert_eq!(members(1), vec![0, 1]);
}

#[test]
fn k_equal_n_averages_every_node() {
    let mut g = rng(1);
    let n = 3;
    let z = normal_mat(n, 2, &mut g);
    let hg = build_hypergraph(&z, n).unwrap();
    assert_eq!(hg.incidence, Mat::from_element(n, n, 1.0));
    assert_eq!(hg.edge_degree, vec![3.0; 3]);
    assert_eq!(hg.node_degree, vec![3.0; 3]);
    let z_h = vertex_aggregate(&hg, &z, NORM).unwrap();
    for e in 0..n {
        for j in 0..2 {
            let mean = (z[(0, j)] + z[(1, j)] + z[(2, j)]) / 3.0;
            assert!((z_h[(e, j)] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_theta_on_shared_graph_reduces_to_aggregation() {
    let mut g = rng(2);
    let z = normal_mat(8, 3, &mut g);
    let hg = build_hypergraph(&z, 3).unwrap();
    let r_h = vertex_convolve(&hg, &z, &Mat::identity(3, 3), NORM).unwrap();
    let z_h = vertex_aggregate(&hg, &z, NORM).unwrap();
    assert!((&r_h - &z_h).abs().max() < 1e-12);
    let zero = vertex_convolve(&hg, &z, &Mat::zeros(3, 3), NORM).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_cnn_term_leaves_the_graph_term() {
    let mut g = rng(3);
    let z = normal_mat(6, 2, &mut g);
    let h1 = build_hypergraph(&z, 2).unwrap();
    let h2 = build_hypergraph(&normal_mat(6, 2, &mut g), 4).unwrap();
    let z_h = vertex_aggregate(&h1, &z, NORM).unwrap();
    let f = edge_aggregate_fuse(&h1, &h2, &z_h, &Mat::zeros(6, 2), NORM).unwrap();
    assert!((&f - h1.edge_operator(NORM).unwrap() * &z_h).abs().max() < 1e-15);
}

#[test]
fn swapping_branches_on_a_shared_graph_keeps_f() {
    let mut g = rng(4);
    let (z, r) = (normal_mat(7, 3, &mut g), normal_mat(7, 3, &mut g));
    let hg = build_hypergraph(&z, 3).unwrap();
    let id = Mat::identity(3, 3);
    let fuse = |a: &Mat, b: &Mat| {
        let a_h = vertex_aggregate(&hg, a, NORM).unwrap();
        let b_h = vertex_convolve(&hg, b, &id, NORM).unwrap();
        edge_aggregate_fuse(&hg, &hg, &a_h, &b_h, NORM).unwrap()
    };
    assert!((fuse(&z, &r) - fuse(&r, &z)).abs().max() < 1e-12);
}

#[test]
fn relabeling_nodes_permutes_hyperedge_features() {
    let mut g = rng(5);
    let n = 9;
    let z = normal_mat(n, 3, &mut g);
    let perm: Vec<usize> = vec![4, 0, 7, 2, 8, 1, 6, 3, 5];
    let pz = Mat::from_fn(n, 3, |i, j| z[(perm[i], j)]);
    let z_h = vertex_aggregate(&build_hypergraph(&z, 3).unwrap(), &z, NORM).unwrap();
    let pz_h = vertex_aggregate(&build_hypergraph(&pz, 3).unwrap(), &pz, NORM).unwrap();
    for i in 0..n {
        for j in 0..3 {
            assert!((pz_h[(i, j)] - z_h[(perm[i], j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn connectivity_examples() {
    let zero = bilinear_connectivity(&Mat::zeros(4, 3));
    assert!(zero.iter().all(|&v| v == 0.5));
    let f = normal_mat(6, 3, &mut rng(6));
    let c = bilinear_connectivity(&f);
    assert_eq!(c, c.transpose());
    let col = Mat::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
    let c = bilinear_connectivity(&col);
    assert!((c[(0, 1)] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    assert!((c[(0, 1)] - 0.880797).abs() < 1e-6);
}

#[test]
fn critic_zero_input_and_final_layer_linearity() {
    let mut g = rng(7);
    let critic = HyperedgeCritic::new(5, 3, &mut g);
    assert_eq!(critic.score(&Mat::zeros(5, 3)), 0.0);
    let x = normal_mat(5, 3, &mut g);
    let mut doubled = critic.clone();
    doubled.readout *= 2.0;
    doubled.readout_bias *= 2.0;
    assert!((doubled.score(&x) - 2.0 * critic.score(&x)).abs() < 1e-12);
}

#[test]
fn c2_output_is_a_distribution() {
    let mut g = rng(8);
    let cls = Classifier::new(6, 4, &mut g);
    let conn = bilinear_connectivity(&normal_mat(6, 2, &mut g));
    let p = hyperfuse_core::hyperfusion::classify_c2(&cls, &conn);
    assert!(p.iter().all(|&v| v >= 0.0));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let zero = hyperfuse_core::hyperfusion::classify_c2(&Classifier::zeros(6, 4), &conn);
    assert_eq!(zero, vec![0.5, 0.5]);
}

#[test]
fn equal_branches_leave_nine_tenths_of_the_critic() {
    let mut g = rng(9);
    let critic = HyperedgeCritic::new(4, 2, &mut g);
    let feats = vec![normal_mat(4, 2, &mut g), normal_mat(4, 2, &mut g)];
    let y = [[1.0, 0.0], [0.0, 1.0]];
    let probs = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    let l = loss_ahf(&critic, &feats, &feats, &y, &probs);
    let mean_score = (critic.score(&feats[0]) + critic.score(&feats[1])) / 2.0;
    assert!((l.adversarial() - 0.9 * mean_score).abs() < 1e-12);
}

#[test]
fn perfect_predictions_cost_nothing() {
    let critic = HyperedgeCritic::new(2, 1, &mut rng(10));
    let feats = vec![Mat::zeros(2, 1)];
    let l = loss_ahf(&critic, &feats, &feats, &[[0.0, 1.0]], &[vec![0.0, 1.0]]);
    assert!(l.cls3.abs() < 1e-9);
}

#[test]
fn two_subject_batch_by_hand() {
    let mut g = rng(11);
    let critic = HyperedgeCritic::new(3, 2, &mut g);
    let z_h: Vec<Mat> = (0..2).map(|_| normal_mat(3, 2, &mut g)).collect();
    let r_h: Vec<Mat> = (0..2).map(|_| normal_mat(3, 2, &mut g)).collect();
    let y = [[1.0, 0.0], [0.0, 1.0]];
    let probs = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
    let l = loss_ahf(&critic, &z_h, &r_h, &y, &probs);

    // direct recomputation of the critic score and of each expectation
    let score = |x: &Mat| -> f64 {
        let mut s = critic.readout_bias[(0, 0)];
        for k in 0..x.ncols() {
            let mut pre = critic.edge_bias[(0, 0)];
            for e in 0..x.nrows() {
                pre += critic.edge_filter[(e, 0)] * x[(e, k)];
            }
            let act = if pre > 0.0 { pre } else { 0.2 * pre };
            s += act * critic.readout[(k, 0)];
        }
        s
    };
    let dh = (score(&z_h[0]) + score(&z_h[1])) / 2.0;
    let ver = -(score(&r_h[0]) + score(&r_h[1])) / 2.0;
    let cls = -(0.7f64.ln() + 0.6f64.ln()) / 2.0;
    assert!((l.dh - dh).abs() < 1e-12);
    assert!((l.ver - ver).abs() < 1e-12);
    assert!((l.cls3 - cls).abs() < 1e-12);
    assert!((l.total() - (dh + 0.1 * ver + cls)).abs() < 1e-12);
}

#[test]
fn fused_forward_matches_the_dense_oracle() {
    let h = three_node_incidence();
    let hg = Hypergraph::from_incidence(h.clone()).unwrap();
    let ops = FusionOperators::new(&hg, &hg, NORM).unwrap();
    let mut g = rng(12);
    let mut state = FusionState::new(3, 2, 3, &mut g);
    state.theta = normal_mat(2, 2, &mut g);
    let (z, r) = (normal_mat(3, 2, &mut g), normal_mat(3, 2, &mut g));
    let input = hyperfuse_core::hyperfusion::FusionInput {
        z: &z,
        r: &r,
        ops: &ops,
        y: [1.0, 0.0],
    };
    let out = state.forward(&input);
    let (z_h, r_h, f) = dense_fusion_oracle(&h, &z, &r, &state.theta);
    assert!((&out.z_h - z_h).abs().max() < 1e-12);
    assert!((&out.r_h - r_h).abs().max() < 1e-12);
    assert!((&out.fused - &f).abs().max() < 1e-12);
    assert!((&out.connectivity - bilinear_connectivity(&f)).abs().max() < 1e-15);
}

#[test]
fn standard_normalization_handles_any_edge_count() {
    let h = Mat::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    let hg = Hypergraph::from_incidence(h).unwrap();
    assert!(hg.vertex_operator(Normalization::Printed).is_err());
    let v = hg.vertex_operator(Normalization::Standard).unwrap();
    assert_eq!(v.shape(), (2, 4));
    // D_e^{-1} Hᵀ D_v^{-1/2}: hyperedge 0 = {0, 1, 3}, node 1 sits in two hyperedges
    assert!((v[(0, 1)] - 1.0 / 3.0 / 2f64.sqrt()).abs() < 1e-15);
    assert!((v[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
}

fn rep_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..12, 1usize..4).prop_flat_map(|(n, q)| (Just(n), Just(q), prop::collection::vec(-5.0f64..5.0, n * q)))
}

#[test]
fn mmd_oracle_behaves() {
    let mut g = rng(70);
    let x: Vec<Vec<f64>> = (0..40).map(|_| normal_mat(1, 3, &mut g).as_slice().to_vec()).collect();
    let y: Vec<Vec<f64>> = (0..40).map(|_| normal_mat(1, 3, &mut g).as_slice().to_vec()).collect();
    let shifted: Vec<Vec<f64>> = y.iter().map(|r| r.iter().map(|v| v + 2.0).collect()).collect();
    assert!(rbf_mmd2(&x, &x).abs() < 1e-12);
    assert!((rbf_mmd2(&x, &y) - rbf_mmd2(&y, &x)).abs() < 1e-12);
    assert!(rbf_mmd2(&x, &shifted) > 5.0 * rbf_mmd2(&x, &y));
    // pairwise squared distances 1, 4, 9
    let line = [vec![0.0], vec![1.0], vec![-2.0]];
    assert_eq!(median_sq_distance(&line[..2], &line[2..]), 4.0);
    let scale = 2.0;
    let expected = 1.0 + 1.0 - 2.0 * (-9.0f64 / scale).exp();
    assert!((rbf_mmd2_with(&line[1..2], &line[2..], scale) - expected).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_hyperedge_has_k_members_and_its_center((n, q, data) in rep_strategy(), k_frac in 0.0f64..1.0) {
        let rep = Mat::from_row_slice(n, q, &data);
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let hg = build_hypergraph(&rep, k).unwrap();
        for e in 0..n {
            prop_assert_eq!(hg.incidence.column(e).sum(), k as f64);
            prop_assert_eq!(hg.incidence[(e, e)], 1.0);
        }
    }

    #[test]
    fn aggregation_is_linear((n, q, data) in rep_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let rep = Mat::from_row_slice(n, q, &data);
        let hg = build_hypergraph(&rep, 1 + n / 2).unwrap();
        let mut g = rng(seed);
        let (x, y) = (normal_mat(n, q, &mut g), normal_mat(n, q, &mut g));
        let lhs = vertex_aggregate(&hg, &(&x * a + &y * b), NORM).unwrap();
        let rhs = vertex_aggregate(&hg, &x, NORM).unwrap() * a + vertex_aggregate(&hg, &y, NORM).unwrap() * b;
        prop_assert!((lhs - rhs).abs().max() <= 1e-10);
        let lhs = edge_aggregate_fuse(&hg, &hg, &(&x * a), &(&y * b), NORM).unwrap();
        let rhs = edge_aggregate_fuse(&hg, &hg, &x, &Mat::zeros(n, q), NORM).unwrap() * a
            + edge_aggregate_fuse(&hg, &hg, &Mat::zeros(n, q), &y, NORM).unwrap() * b;
        prop_assert!((lhs - rhs).abs().max() <= 1e-10);
    }

    #[test]
    fn connectivity_is_symmetric_and_bounded((n, q, data) in rep_strategy()) {
        let c = bilinear_connectivity(&Mat::from_row_slice(n, q, &data));
        prop_assert_eq!(&c, &c.transpose());
        prop_assert!(c.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

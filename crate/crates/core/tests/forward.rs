mod common;

use bncl::graph::{BalancedNeighborhoods, Sign};
use bncl::propagation::{
    baseline_0shot, forward, init_hidden, init_params_scaled, predict, ModelParams,
};
use bncl::FeatureMatrix;
use common::{random_features, random_signed_graph, rng, scalar_forward};
use ndarray::{s, Array2};
use rand::Rng;

fn setup(
    seed: u64,
    l: usize,
    n: usize,
    depth: usize,
) -> (FeatureMatrix<f64>, BalancedNeighborhoods, ModelParams<f64>) {
    let mut r = rng(seed);
    let (pos, neg) = random_signed_graph(l, &mut r);
    let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, depth).unwrap();
    let (q, qb) = random_features(n, l, &mut r);
    let f = FeatureMatrix::from_entail_contra(q, qb).unwrap();
    let params = init_params_scaled(l, depth, seed, 0.5);
    (f, nb, params)
}

fn neighbor_lists(nb: &BalancedNeighborhoods, sign: Sign) -> Vec<Vec<Vec<usize>>> {
    (1..=nb.depth())
        .map(|k| (0..nb.labels()).map(|v| nb.neighbors(k, sign, v)).collect())
        .collect()
}

#[test]
fn matrix_forward_matches_loop_oracle() {
    for seed in 0..25 {
        let l = 2 + seed as usize % 7;
        let (f, nb, params) = setup(seed, l, 5, 1 + seed as usize % 3);
        let out = forward(&init_hidden(&f), &params, &nb).unwrap();
        let weights: Vec<[Array2<f64>; 4]> = params
            .layers
            .iter()
            .map(|w| {
                [
                    w.pos.clone(),
                    w.neg.clone(),
                    w.bar_pos.clone(),
                    w.bar_neg.clone(),
                ]
            })
            .collect();
        let (np, nn) = (
            neighbor_lists(&nb, Sign::Pos),
            neighbor_lists(&nb, Sign::Neg),
        );
        for i in 0..f.samples() {
            let h0 = f.entail().row(i).to_vec();
            let hb0 = f.contra().row(i).to_vec();
            let (h, hb) = scalar_forward(&h0, &hb0, &weights, &np, &nn);
            for v in 0..l {
                assert!((out.p()[(i, v)] - h[v]).abs() <= 1e-6);
                assert!((out.p_bar()[(i, v)] - hb[v]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn states_stay_nonnegative_for_any_weights() {
    for seed in 0..20 {
        let (f, nb, _) = setup(seed, 6, 8, 3);
        let params = init_params_scaled(6, 3, seed + 99, 5.0);
        let out = forward(&init_hidden(&f), &params, &nb).unwrap();
        for k in 0..out.layers() {
            assert!(out.entail[k].iter().all(|&x| x >= 0.0));
            assert!(out.contra[k].iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn non_neighbours_cannot_influence_a_label() {
    let mut r = rng(77);
    let mut exercised = 0;
    for seed in 0..60 {
        let (f, nb, params) = setup(seed, 7, 3, 2);
        let base = forward(&init_hidden(&f), &params, &nb).unwrap();
        // labels reachable within 2 hops of v in either sign
        let v = r.random_range(0..7);
        let reach: Vec<bool> = (0..7)
            .map(|u| {
                u == v
                    || (1..=2).any(|k| {
                        nb.dependencies(k, Sign::Pos)[(u, v)] > 0
                            || nb.dependencies(k, Sign::Neg)[(u, v)] > 0
                    })
            })
            .collect();
        // hop-2 updates also see hop-1 neighbours of hop-2 neighbours; close the set over one more step
        let mut influence = reach.clone();
        for u in 0..7 {
            if reach[u] {
                for w in 0..7 {
                    if nb.dependencies(1, Sign::Pos)[(w, u)] > 0
                        || nb.dependencies(1, Sign::Neg)[(w, u)] > 0
                    {
                        influence[w] = true;
                    }
                }
            }
        }
        let Some(far) = (0..7).find(|&u| !influence[u]) else {
            continue;
        };
        exercised += 1;
        let mut q = f.entail().clone();
        let mut qb = f.contra().clone();
        q.slice_mut(s![.., far]).fill(0.9);
        qb.slice_mut(s![.., far]).fill(0.05);
        let moved = FeatureMatrix::from_entail_contra(q, qb).unwrap();
        let out = forward(&init_hidden(&moved), &params, &nb).unwrap();
        for i in 0..f.samples() {
            assert_eq!(out.p()[(i, v)], base.p()[(i, v)]);
            assert_eq!(out.p_bar()[(i, v)], base.p_bar()[(i, v)]);
        }
    }
    assert!(
        exercised >= 5,
        "only {exercised} graphs had an unreachable label"
    );
}

#[test]
fn zero_weights_reproduce_the_baseline() {
    let (f, nb, _) = setup(3, 6, 10, 2);
    let out = forward(&init_hidden(&f), &ModelParams::zeros(6, 2), &nb).unwrap();
    assert_eq!(out.p(), f.entail());
    assert_eq!(out.p_bar(), f.contra());
    assert_eq!(predict(&out), baseline_0shot(&f));
}

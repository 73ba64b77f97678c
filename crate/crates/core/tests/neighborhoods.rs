mod common;

use bncl::graph::{
    similarity_matrix, threshold_graph, BalancedNeighborhoods, PercentilePair, Sign,
};
use bncl::{Error, LabelEmbeddings};
use common::{random_signed_graph, rng, walk_parity_counts};
use ndarray::Array2;
use rand::Rng;

#[test]
fn recursion_matches_walk_parity_enumeration() {
    let mut r = rng(2024);
    for _ in 0..200 {
        let l = r.random_range(2..=8);
        let depth = r.random_range(1..=3);
        let (pos, neg) = random_signed_graph(l, &mut r);
        let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, depth).unwrap();
        for k in 1..=depth {
            for u in 0..l {
                for v in 0..l {
                    let (even, odd) = walk_parity_counts(&pos, &neg, k, u, v);
                    assert_eq!(
                        nb.dependencies(k, Sign::Pos)[(u, v)],
                        even,
                        "k={k} u={u} v={v}"
                    );
                    assert_eq!(
                        nb.dependencies(k, Sign::Neg)[(u, v)],
                        odd,
                        "k={k} u={u} v={v}"
                    );
                }
            }
        }
    }
}

#[test]
fn symmetric_adjacency_gives_symmetric_dependencies() {
    let mut r = rng(11);
    for _ in 0..50 {
        let l = r.random_range(2..=8);
        let (pos, neg) = random_signed_graph(l, &mut r);
        let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, 3).unwrap();
        for k in 1..=3 {
            for s in [Sign::Pos, Sign::Neg] {
                let d = nb.dependencies(k, s);
                assert_eq!(d, &d.t().to_owned());
            }
        }
    }
}

#[test]
fn neighbors_are_column_supports() {
    let mut r = rng(5);
    let (pos, neg) = random_signed_graph(7, &mut r);
    let nb = BalancedNeighborhoods::from_adjacency(&pos, &neg, 2).unwrap();
    for v in 0..7 {
        let expect: Vec<usize> = (0..7)
            .filter(|&u| nb.dependencies(2, Sign::Neg)[(u, v)] > 0)
            .collect();
        assert_eq!(nb.neighbors(2, Sign::Neg, v), expect);
    }
    let stripped = nb.clone().without_self_loops();
    for k in 1..=2 {
        assert!(stripped
            .dependencies(k, Sign::Pos)
            .diag()
            .iter()
            .all(|&x| x == 0));
    }
}

fn random_embeddings(l: usize, d: usize, seed: u64) -> LabelEmbeddings<f64> {
    let mut r = rng(seed);
    LabelEmbeddings::new(Array2::from_shape_fn((l, d), |_| r.random_range(-1.0..1.0))).unwrap()
}

fn edges(sim: &Array2<f64>, low: f64, high: f64) -> (usize, usize) {
    let g = threshold_graph(sim, PercentilePair::new(low, high).unwrap()).unwrap();
    (g.positive_edges(), g.negative_edges())
}

#[test]
fn widening_the_pair_never_removes_edges() {
    for seed in 0..20 {
        let sim = similarity_matrix(&random_embeddings(12, 5, seed)).unwrap();
        let mut last = (0, 0);
        for (low, high) in [
            (5.0, 95.0),
            (10.0, 90.0),
            (20.0, 80.0),
            (30.0, 70.0),
            (45.0, 55.0),
        ] {
            let cur = edges(&sim, low, high);
            assert!(
                cur.0 >= last.0 && cur.1 >= last.1,
                "seed {seed}: {last:?} -> {cur:?}"
            );
            last = cur;
        }
    }
}

#[test]
fn edge_counts_match_brute_force_nearest_rank() {
    for seed in 0..30 {
        let l = 3 + (seed as usize % 9);
        let sim = similarity_matrix(&random_embeddings(l, 4, 100 + seed)).unwrap();
        let mut vals = Vec::new();
        for u in 0..l {
            for v in u + 1..l {
                vals.push(sim[(u, v)]);
            }
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        for (low, high) in [(10.0, 90.0), (25.0, 75.0)] {
            // smallest value whose at-or-below share reaches p percent
            let pick = |p: f64| {
                (1..=n)
                    .find(|&rank| rank as f64 * 100.0 >= p * n as f64)
                    .map(|rank| vals[rank - 1])
                    .unwrap()
            };
            let (dn, dp) = (pick(low), pick(high));
            match threshold_graph(&sim, PercentilePair::new(low, high).unwrap()) {
                Ok(g) => {
                    assert_eq!(g.delta_neg, dn);
                    assert_eq!(g.delta_pos, dp);
                    assert_eq!(
                        g.positive_edges(),
                        vals.iter().filter(|&&x| x >= dp).count()
                    );
                    assert_eq!(
                        g.negative_edges(),
                        vals.iter().filter(|&&x| x <= dn).count()
                    );
                }
                Err(Error::DegenerateThresholds { .. }) => assert!(dn >= dp),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn graph_has_no_self_loops_and_disjoint_signs() {
    let sim = similarity_matrix(&random_embeddings(10, 6, 3)).unwrap();
    let g = threshold_graph(&sim, PercentilePair::default()).unwrap();
    for u in 0..10 {
        assert_eq!(g.pos_adj[(u, u)], 0);
        assert_eq!(g.neg_adj[(u, u)], 0);
        for v in 0..10 {
            assert!(g.pos_adj[(u, v)] * g.neg_adj[(u, v)] == 0);
            assert_eq!(g.pos_adj[(u, v)], g.pos_adj[(v, u)]);
        }
    }
}

//! Brute-force oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random symmetric signed graph: each unordered pair is positive, negative
/// or absent. Returns (A⁺, A⁻) with zero diagonals.
pub fn random_signed_graph(l: usize, rng: &mut ChaCha8Rng) -> (Array2<u64>, Array2<u64>) {
    let mut pos = Array2::zeros((l, l));
    let mut neg = Array2::zeros((l, l));
    let density: f64 = rng.random_range(0.1..0.7);
    for u in 0..l {
        for v in u + 1..l {
            if rng.random_bool(density) {
                if rng.random_bool(0.5) {
                    pos[(u, v)] = 1;
                    pos[(v, u)] = 1;
                } else {
                    neg[(u, v)] = 1;
                    neg[(v, u)] = 1;
                }
            }
        }
    }
    (pos, neg)
}

/// Counts walks of exactly `k` edges from `u` to `v`, split by parity of the
/// number of negative edges: (even, odd).
pub fn walk_parity_counts(
    pos: &Array2<u64>,
    neg: &Array2<u64>,
    k: usize,
    u: usize,
    v: usize,
) -> (u64, u64) {
    fn go(
        pos: &Array2<u64>,
        neg: &Array2<u64>,
        at: usize,
        left: usize,
        odd: bool,
        v: usize,
        acc: &mut (u64, u64),
    ) {
        if left == 0 {
            if at == v {
                if odd {
                    acc.1 += 1;
                } else {
                    acc.0 += 1;
                }
            }
            return;
        }
        for next in 0..pos.nrows() {
            if pos[(at, next)] != 0 {
                go(pos, neg, next, left - 1, odd, v, acc);
            }
            if neg[(at, next)] != 0 {
                go(pos, neg, next, left - 1, !odd, v, acc);
            }
        }
    }
    let mut acc = (0, 0);
    go(pos, neg, u, k, false, v, &mut acc);
    acc
}

/// Naive per-instance metrics: (ACC, HA, ebF1, miF1, maF1).
pub fn naive_metrics(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> (f64, f64, f64, f64, f64) {
    let m = truth.len();
    let l = truth[0].len();
    let mut exact = 0usize;
    let mut agree = 0usize;
    let mut eb = 0.0;
    for i in 0..m {
        if truth[i] == pred[i] {
            exact += 1;
        }
        let mut inter = 0usize;
        let mut size_t = 0usize;
        let mut size_p = 0usize;
        for j in 0..l {
            if truth[i][j] == pred[i][j] {
                agree += 1;
            }
            if truth[i][j] && pred[i][j] {
                inter += 1;
            }
            if truth[i][j] {
                size_t += 1;
            }
            if pred[i][j] {
                size_p += 1;
            }
        }
        if size_t + size_p > 0 {
            eb += 2.0 * inter as f64 / (size_t + size_p) as f64;
        }
    }
    let mut tp_all = 0usize;
    let mut fp_all = 0usize;
    let mut fn_all = 0usize;
    let mut ma = 0.0;
    for j in 0..l {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for i in 0..m {
            match (truth[i][j], pred[i][j]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        if 2 * tp + fp + fn_ > 0 {
            ma += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        }
    }
    let mi = if 2 * tp_all + fp_all + fn_all > 0 {
        2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64
    } else {
        0.0
    };
    (
        exact as f64 / m as f64,
        agree as f64 / (m * l) as f64,
        eb / m as f64,
        mi,
        ma / l as f64,
    )
}

pub fn random_bool_matrix(m: usize, l: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    (0..m)
        .map(|_| (0..l).map(|_| rng.random_bool(p)).collect())
        .collect()
}

pub fn to_array(rows: &[Vec<bool>]) -> Array2<bool> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

/// Random simplex rows as (entail, contra) matrices.
pub fn random_features(n: usize, l: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let mut q = Array2::zeros((n, l));
    let mut qb = Array2::zeros((n, l));
    for i in 0..n {
        for j in 0..l {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c: f64 = rng.random();
            let s = a + b + c;
            q[(i, j)] = a / s;
            qb[(i, j)] = c / s;
        }
    }
    (q, qb)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Loop-form layer update over explicit neighbour lists.
///
/// `weights[k] = [W⁺, W⁻, W̄⁺, W̄⁻]`, `nbrs_pos[k][v]` / `nbrs_neg[k][v]` list
/// the neighbours of `v` at hop `k + 1`.
pub fn scalar_forward(
    h0: &[f64],
    hb0: &[f64],
    weights: &[[Array2<f64>; 4]],
    nbrs_pos: &[Vec<Vec<usize>>],
    nbrs_neg: &[Vec<Vec<usize>>],
) -> (Vec<f64>, Vec<f64>) {
    let relu = |x: f64| if x > 0.0 { x } else { 0.0 };
    let mut h = h0.to_vec();
    let mut hb = hb0.to_vec();
    for (k, w) in weights.iter().enumerate() {
        let l = h.len();
        let mut nh = vec![0.0; l];
        let mut nhb = vec![0.0; l];
        for v in 0..l {
            let mut a = 0.0;
            let mut b = 0.0;
            let mut c = 0.0;
            let mut d = 0.0;
            for &u in &nbrs_pos[k][v] {
                a += w[0][(u, v)] * h[u];
                d += w[2][(u, v)] * hb[u];
            }
            for &u in &nbrs_neg[k][v] {
                b += w[3][(u, v)] * hb[u];
                c += w[1][(u, v)] * h[u];
            }
            nh[v] = h[v] + relu(a) + relu(b);
            nhb[v] = hb[v] + relu(c) + relu(d);
        }
        h = nh;
        hb = nhb;
    }
    (h, hb)
}

//! Reference checks shared by the integration tests. Nothing here calls the
//! solvers under test except to obtain the values being checked.

#![allow(dead_code)]

use girp::dataset::{build_order, Dataset};
use girp::engine::Path;
use girp::flow::{Capacity, FlowNetwork};
use girp::loss::{Loss, LossModel};
use rand::Rng;

pub type Rows = Vec<(Vec<f64>, f64)>;

/// Every loss family, with responses drawn to suit it.
pub fn loss_families() -> Vec<LossModel> {
    vec![
        LossModel::SquaredError,
        LossModel::Huber { delta: 0.8 },
        LossModel::PoissonNll,
        LossModel::BernoulliNll,
        LossModel::PNorm { p: 1.5 },
        LossModel::LogPoisson,
    ]
}

pub fn response<R: Rng>(loss: &LossModel, rng: &mut R) -> f64 {
    match loss {
        LossModel::PoissonNll | LossModel::LogPoisson => rng.random_range(0..6) as f64,
        LossModel::BernoulliNll => {
            if rng.random_bool(0.3) {
                rng.random_range(0.0..=1.0)
            } else {
                rng.random_range(0..=1) as f64
            }
        }
        _ => rng.random_range(-3.0..3.0),
    }
}

/// Covariates on a coarse grid so that many pairs are comparable and some
/// rows coincide.
pub fn grid_rows<R: Rng>(loss: &LossModel, n: usize, d: usize, levels: u32, rng: &mut R) -> Rows {
    (0..n)
        .map(|_| {
            let x = (0..d).map(|_| rng.random_range(0..levels) as f64).collect();
            (x, response(loss, rng))
        })
        .collect()
}

pub fn objective<L: Loss + ?Sized>(loss: &L, ds: &Dataset, fit: &[f64]) -> f64 {
    (0..ds.n()).map(|i| loss.summed_value(fit[i], ds.responses(i))).sum()
}

/// All comparable pairs `(i, j)` with `x_i ⪯ x_j`, straight from the
/// coordinates.
pub fn dominance_pairs(ds: &Dataset) -> Vec<(usize, usize)> {
    let xs: Vec<&[f64]> = ds.points().iter().map(|p| p.x.as_slice()).collect();
    let mut pairs = Vec::new();
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if i != j && xs[i].iter().zip(xs[j]).all(|(a, b)| a <= b) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Model weights that decrease across a comparable pair, for every record.
pub fn isotonicity_violations(ds: &Dataset, path: &Path, tol: f64) -> Vec<String> {
    let pairs = dominance_pairs(ds);
    let mut out = Vec::new();
    let mut cursor = path.cursor();
    loop {
        let fits = cursor.fits();
        let groups = cursor.group_of();
        for &(i, j) in &pairs {
            if groups[i] != groups[j] && fits[i] > fits[j] + tol {
                out.push(format!(
                    "k={} groups {} -> {}: {} > {}",
                    cursor.k(),
                    groups[i],
                    groups[j],
                    fits[i],
                    fits[j]
                ));
            }
        }
        if cursor.advance().is_none() {
            break;
        }
    }
    out
}

/// Groups along the path that cut through an optimal block. `blocks` labels
/// each point with its block in an optimal solution.
pub fn regret_violations(path: &Path, blocks: &[usize]) -> Vec<String> {
    let mut size = std::collections::HashMap::new();
    for &b in blocks {
        *size.entry(b).or_insert(0usize) += 1;
    }
    let mut out = Vec::new();
    for g in path.groups() {
        let mut inside = std::collections::HashMap::new();
        for &i in &g.members {
            *inside.entry(blocks[i]).or_insert(0usize) += 1;
        }
        for (b, c) in inside {
            if c != size[&b] {
                out.push(format!("group {} holds {c} of {} points of block {b}", g.id, size[&b]));
            }
        }
    }
    out
}

/// Connected components of equal value along comparable pairs.
pub fn level_set_labels(ds: &Dataset, fit: &[f64], tol: f64) -> Vec<usize> {
    let n = ds.n();
    let mut label: Vec<usize> = (0..n).collect();
    let pairs = build_order(
        &ds.points().iter().map(|p| p.x.as_slice()).collect::<Vec<_>>(),
        false,
    )
    .edges;
    let mut changed = true;
    while changed {
        changed = false;
        for &(i, j) in &pairs {
            if (fit[i] - fit[j]).abs() <= tol && label[i] != label[j] {
                let m = label[i].min(label[j]);
                label[i] = m;
                label[j] = m;
                changed = true;
            }
        }
    }
    label
}

/// Minimum of `Σ_U z - Σ_L z` over all upper sets `U` of the local order,
/// with the optimal upper sets found.
pub fn enumerate_upper_sets(z: &[f64], edges: &[(usize, usize)]) -> (f64, Vec<Vec<bool>>) {
    let k = z.len();
    assert!(k <= 20);
    let mut best = f64::INFINITY;
    let mut values = Vec::new();
    for mask in 0u32..(1 << k) {
        let up = |i: usize| mask >> i & 1 == 1;
        if edges.iter().any(|&(i, j)| up(i) && !up(j)) {
            continue;
        }
        let v: f64 = (0..k).map(|i| if up(i) { z[i] } else { -z[i] }).sum();
        best = best.min(v);
        values.push((mask, v));
    }
    let optimal = values
        .into_iter()
        .filter(|&(_, v)| v == best)
        .map(|(mask, _)| (0..k).map(|i| mask >> i & 1 == 1).collect())
        .collect();
    (best, optimal)
}

/// Minimum s-t cut capacity over every subset of the non-terminal nodes.
pub fn enumerate_min_cut(net: &FlowNetwork) -> f64 {
    let interior: Vec<usize> = (0..net.node_count)
        .filter(|&v| v != net.source && v != net.sink)
        .collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << interior.len()) {
        let mut side = vec![false; net.node_count];
        side[net.source] = true;
        for (b, &v) in interior.iter().enumerate() {
            side[v] = mask >> b & 1 == 1;
        }
        let mut cap = 0.0;
        for a in &net.arcs {
            if side[a.from] && !side[a.to] {
                match a.capacity {
                    Capacity::Finite(c) => cap += c,
                    Capacity::Infinite => cap = f64::INFINITY,
                }
            }
        }
        best = best.min(cap);
    }
    best
}

/// Random network with integer capacities and optional infinite interior arcs.
pub fn random_network<R: Rng>(interior: usize, rng: &mut R) -> FlowNetwork {
    let n = interior + 2;
    let (s, t) = (0, n - 1);
    let mut net = FlowNetwork::new(n, s, t);
    for u in 0..n {
        for v in 0..n {
            if u == v || u == t || v == s || !rng.random_bool(0.3) {
                continue;
            }
            let interior_arc = u != s && v != t;
            if interior_arc && rng.random_bool(0.1) {
                net.add_infinite_arc(u, v);
            } else {
                net.add_arc(u, v, rng.random_range(0..=9) as f64);
            }
        }
    }
    net
}

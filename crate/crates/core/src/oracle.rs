//! Independent reference solvers used to check the partitioning engine.

use crate::dataset::Dataset;
use crate::error::{GirpError, Result};
use crate::loss::Loss;

pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Weighted pool-adjacent-violators on a chain.
pub fn pava_weighted(y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(GirpError::Empty);
    }
    if y.len() != weights.len() {
        return Err(GirpError::DimensionMismatch {
            expected: y.len(),
            found: weights.len(),
        });
    }
    // (weighted sum, total weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &w) in y.iter().zip(weights) {
        blocks.push((v * w, w, 1));
        while blocks.len() > 1 {
            let (s1, w1, c1) = blocks[blocks.len() - 1];
            let (s0, w0, c0) = blocks[blocks.len() - 2];
            if s0 / w0 <= s1 / w1 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks") = (s0 + s1, w0 + w1, c0 + c1);
        }
    }
    let mut fit = Vec::with_capacity(y.len());
    for (s, w, c) in blocks {
        fit.extend(std::iter::repeat_n(s / w, c));
    }
    Ok(fit)
}

pub fn pava(y: &[f64]) -> Result<Vec<f64>> {
    pava_weighted(y, &vec![1.0; y.len()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceFit {
    pub fit: Vec<f64>,
    pub objective: f64,
    /// Group label per point of the minimizing partition.
    pub labels: Vec<usize>,
}

/// Exact optimum by enumerating every partition of the points into
/// order-convex groups, fitting each group at its weight and keeping the
/// cheapest partition that admits isotonic group values.
pub fn brute_force<L: Loss + ?Sized>(dataset: &Dataset, loss: &L) -> Result<BruteForceFit> {
    let n = dataset.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(GirpError::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    for i in 0..n {
        for &y in dataset.responses(i) {
            loss.check_response(y)?;
        }
    }
    let reach = dataset.order().reachability();
    let le = |i: usize, j: usize| i == j || reach[i].contains(j);
    let mut comparable = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && le(i, j) {
                comparable.push((i, j));
            }
        }
    }

    let mut best: Option<BruteForceFit> = None;
    let mut labels = vec![0usize; n];
    let mut cache = std::collections::HashMap::new();
    loop {
        if let Some(candidate) = evaluate_partition(dataset, loss, &labels, &comparable, &mut cache)? {
            let better = best
                .as_ref()
                .is_none_or(|b| candidate.objective < b.objective);
            if better {
                best = Some(candidate);
            }
        }
        if !next_partition(&mut labels) {
            break;
        }
    }
    best.ok_or(GirpError::Empty)
}

type GroupInfo = (f64, f64, f64, f64);

fn evaluate_partition<L: Loss + ?Sized>(
    dataset: &Dataset,
    loss: &L,
    labels: &[usize],
    comparable: &[(usize, usize)],
    cache: &mut std::collections::HashMap<u32, GroupInfo>,
) -> Result<Option<BruteForceFit>> {
    let n = labels.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut masks = vec![0u32; k];
    for (i, &g) in labels.iter().enumerate() {
        masks[g] |= 1 << i;
    }
    // Order-convexity: i <= j <= l with i, l in a group forces j into it.
    for &(i, j) in comparable {
        for &(j2, l) in comparable {
            if j2 == j && labels[i] == labels[l] && labels[j] != labels[i] {
                return Ok(None);
            }
        }
    }

    let mut info = Vec::with_capacity(k);
    for &mask in &masks {
        let entry = match cache.get(&mask) {
            Some(e) => *e,
            None => {
                let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                let responses: Vec<f64> = members
                    .iter()
                    .flat_map(|&i| dataset.responses(i).iter().copied())
                    .collect();
                let w = loss.group_weight(&responses)?;
                let (lo, hi) = w.flat_interval.unwrap_or((w.value, w.value));
                let value: f64 = members
                    .iter()
                    .map(|&i| loss.summed_value(w.value, dataset.responses(i)))
                    .sum();
                let e = (w.value, lo, hi, value);
                cache.insert(mask, e);
                e
            }
        };
        info.push(entry);
    }

    // Least isotonic assignment with each value inside its minimizer interval.
    let mut v: Vec<f64> = info.iter().map(|e| e.1).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &(i, j) in comparable {
            let (a, b) = (labels[i], labels[j]);
            if a != b && v[a] > v[b] {
                v[b] = v[a];
                changed = true;
            }
        }
    }
    for (g, e) in info.iter().enumerate() {
        if v[g] > e.2 + 1e-12 * e.2.abs().max(1.0) {
            return Ok(None);
        }
    }
    // A flat interval leaves the loss unchanged, so the objective uses w.
    let objective = info.iter().map(|e| e.3).sum();
    let fit = labels
        .iter()
        .map(|&g| if info[g].1 == info[g].2 { info[g].0 } else { v[g] })
        .collect();
    Ok(Some(BruteForceFit {
        fit,
        objective,
        labels: labels.to_vec(),
    }))
}

/// Advance a restricted growth string; false after the last partition.
fn next_partition(labels: &mut [usize]) -> bool {
    let n = labels.len();
    for i in (1..n).rev() {
        let max_prefix = labels[..i].iter().copied().max().unwrap_or(0);
        if labels[i] <= max_prefix {
            labels[i] += 1;
            for l in labels.iter_mut().skip(i + 1) {
                *l = 0;
            }
            return true;
        }
    }
    false
}

/// Map an ℓ2 isotonic fit through `phi_inverse`, which returns `None`
/// outside the range of φ.
pub fn barlow_brunk_transform(
    l2_fit: &[f64],
    phi_inverse: impl Fn(f64) -> Option<f64>,
) -> Result<Vec<f64>> {
    l2_fit
        .iter()
        .map(|&v| {
            phi_inverse(v).ok_or_else(|| GirpError::OutsideDomain {
                loss: "phi inverse".into(),
                value: v,
            })
        })
        .collect()
}

/// Connected components of equal fit along order edges: the level sets of
/// an isotonic solution.
pub fn level_sets(dataset: &Dataset, fit: &[f64], tol: f64) -> Vec<usize> {
    let n = dataset.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(i, j) in &dataset.order().edges {
        if (fit[i] - fit[j]).abs() <= tol {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossModel;
    use proptest::prelude::*;

    fn chain(ys: &[f64]) -> Dataset {
        let rows: Vec<(Vec<f64>, f64)> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| (vec![i as f64], y))
            .collect();
        Dataset::ingest(&rows).unwrap()
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava(&[1.0, 3.0, 2.0]).unwrap(), vec![1.0, 2.5, 2.5]);
        assert_eq!(pava(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(pava(&[3.0, 2.0, 1.0]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(pava(&[]).is_err());
    }

    #[test]
    fn partitions_are_counted_by_bell_numbers() {
        for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (8, 4140)] {
            let mut labels = vec![0; n];
            let mut count = 1;
            while next_partition(&mut labels) {
                count += 1;
            }
            assert_eq!(count, bell);
        }
    }

    #[test]
    fn brute_force_examples() {
        let one = chain(&[4.0]);
        assert_eq!(brute_force(&one, &LossModel::SquaredError).unwrap().fit, vec![4.0]);

        let c = chain(&[1.0, 3.0, 2.0]);
        assert_eq!(brute_force(&c, &LossModel::SquaredError).unwrap().fit, vec![1.0, 2.5, 2.5]);

        let anti = Dataset::ingest(&[(vec![0.0, 1.0], 5.0), (vec![1.0, 0.0], 1.0)]).unwrap();
        assert_eq!(brute_force(&anti, &LossModel::SquaredError).unwrap().fit, vec![5.0, 1.0]);

        let big = chain(&[0.0; 9]);
        assert!(matches!(
            brute_force(&big, &LossModel::SquaredError),
            Err(GirpError::TooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_handles_flat_huber_intervals() {
        // Group {0, 4} under δ = 1 is flat on [1, 3]; a later point at 1.5
        // forces the group value up, which costs nothing.
        let ds = chain(&[0.0, 4.0, 1.5]);
        let loss = LossModel::Huber { delta: 1.0 };
        let bf = brute_force(&ds, &loss).unwrap();
        let direct: f64 = bf.fit.iter().zip([0.0, 4.0, 1.5]).map(|(&f, y)| loss.value(f, y)).sum();
        assert!((direct - bf.objective).abs() < 1e-12);
        assert!(bf.fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn barlow_brunk() {
        let fit = [0.5, 1.0, 2.0];
        assert_eq!(barlow_brunk_transform(&fit, Some).unwrap(), fit.to_vec());
        let logged = barlow_brunk_transform(&fit, |v| (v > 0.0).then(|| v.ln())).unwrap();
        assert_eq!(logged, vec![0.5f64.ln(), 0.0, 2.0f64.ln()]);
        assert!(barlow_brunk_transform(&[0.0], |v| (v > 0.0).then(|| v.ln())).is_err());
    }

    #[test]
    fn level_sets_follow_equal_fits() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        assert_eq!(level_sets(&ds, &[1.0, 2.5, 2.5], 1e-12), vec![0, 1, 1]);
    }

    fn sample_isotonic(ds: &Dataset, rng: &mut impl rand::Rng, lo: f64, hi: f64) -> Vec<f64> {
        // Points are in a topological order, so one forward pass suffices.
        let preds = {
            let mut p = vec![Vec::new(); ds.n()];
            for &(i, j) in &ds.order().edges {
                p[j].push(i);
            }
            p
        };
        let mut v = vec![0.0; ds.n()];
        for j in 0..ds.n() {
            let floor = preds[j].iter().map(|&i| v[i]).fold(lo, f64::max);
            v[j] = rng.random_range(floor..=hi);
        }
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pava_matches_brute_force(ys in prop::collection::vec(-5.0..5.0f64, 1..=8)) {
            let p = pava(&ys).unwrap();
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
            let bf = brute_force(&chain(&ys), &LossModel::SquaredError).unwrap();
            for (a, b) in p.iter().zip(&bf.fit) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn brute_force_beats_sampled_isotonic_vectors(
            pts in prop::collection::vec((0u8..3, 0u8..3, 0.0..6.0f64), 1..=7),
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let rows: Vec<(Vec<f64>, f64)> =
                pts.iter().map(|&(a, b, y)| (vec![a as f64, b as f64], y)).collect();
            let ds = Dataset::ingest(&rows).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for loss in [LossModel::SquaredError, LossModel::Huber { delta: 0.7 }, LossModel::PoissonNll] {
                let bf = brute_force(&ds, &loss).unwrap();
                let objective = |f: &[f64]| -> f64 {
                    (0..ds.n()).map(|i| loss.summed_value(f[i], ds.responses(i))).sum()
                };
                prop_assert!((objective(&bf.fit) - bf.objective).abs() < 1e-9);
                for _ in 0..1000 {
                    let v = sample_isotonic(&ds, &mut rng, 0.01, 6.0);
                    prop_assert!(bf.objective <= objective(&v) + 1e-9);
                }
            }
        }
    }
}

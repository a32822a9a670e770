//! Recursive partitioning driver.
//!
//! Starting from one group holding every point, each iteration performs the
//! pending split with the most negative cut value, recomputes the weights of
//! the two children and solves their own split problems. Children without an
//! improving split become blocks. The run ends when no candidate split is
//! left, at which point the partition is the global optimum.
//!
//! The path is stored as a split tree plus a step log; the partition at any
//! iteration is rebuilt on demand with [`Path::record`] or [`PathCursor`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::cut::{derivatives_at_weight, solve_cut, CutProblem, CutResult};
use crate::dataset::Dataset;
use crate::error::{GirpError, Result};
use crate::loss::{GroupWeight, Loss};

pub const STATIONARITY_TOL: f64 = 1e-6;
pub const ISOTONICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupStatus {
    Active,
    Block,
    Split,
}

/// A node of the split tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: usize,
    /// Sorted global point indices.
    pub members: Vec<usize>,
    pub weight: GroupWeight,
    pub status: GroupStatus,
    pub parent: Option<usize>,
    /// Summed loss of the members at the group weight.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCut {
    pub group_id: usize,
    pub cut: CutResult,
}

/// The split performed at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub group: usize,
    pub value: f64,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub k: usize,
    pub split: Option<Split>,
    pub loss_total: f64,
}

/// Materialized model `M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub k: usize,
    /// Member sets with their fitted weight.
    pub partition: Vec<(Vec<usize>, f64)>,
    /// Group split at this iteration and its cut value.
    pub cut_performed: Option<(usize, f64)>,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    n: usize,
    edges: Vec<(usize, usize)>,
    groups: Vec<Group>,
    steps: Vec<Step>,
    optimal: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitLimits {
    pub max_iterations: Option<usize>,
    pub time_budget: Option<Duration>,
}

/// Reported after every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub k: usize,
    pub groups: usize,
    pub cut_value: Option<f64>,
    /// Most negative pending cut after this iteration.
    pub best_candidate: Option<f64>,
    pub loss_total: f64,
}

struct Pending {
    group_id: usize,
    cut: CutResult,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Max-heap: most negative value first, then the smaller group id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cut
            .value
            .total_cmp(&self.cut.value)
            .then_with(|| other.group_id.cmp(&self.group_id))
    }
}

fn group_responses(dataset: &Dataset, members: &[usize]) -> Vec<f64> {
    members
        .iter()
        .flat_map(|&i| dataset.responses(i).iter().copied())
        .collect()
}

fn group_loss<L: Loss + ?Sized>(loss: &L, dataset: &Dataset, members: &[usize], w: f64) -> f64 {
    members
        .iter()
        .map(|&i| loss.summed_value(w, dataset.responses(i)))
        .sum()
}

/// A group still being refined, with its order edges in local positions.
struct Work {
    id: usize,
    edges: Vec<(usize, usize)>,
}

fn evaluate<L: Loss + ?Sized>(
    loss: &L,
    dataset: &Dataset,
    group: &Group,
    edges: &[(usize, usize)],
) -> Result<CutResult> {
    let z = derivatives_at_weight(loss, dataset, &group.members, group.weight.value)?;
    solve_cut(&CutProblem {
        members: group.members.clone(),
        z,
        edges: edges.to_vec(),
    })
}

/// Split local edges between the two sides of a cut; cross edges are dropped.
fn split_edges(
    edges: &[(usize, usize)],
    in_upper: &[bool],
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut pos = Vec::with_capacity(in_upper.len());
    let (mut nl, mut nu) = (0, 0);
    for &up in in_upper {
        if up {
            pos.push(nu);
            nu += 1;
        } else {
            pos.push(nl);
            nl += 1;
        }
    }
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for &(i, j) in edges {
        match (in_upper[i], in_upper[j]) {
            (false, false) => lower.push((pos[i], pos[j])),
            (true, true) => upper.push((pos[i], pos[j])),
            (false, true) => {}
            (true, false) => unreachable!("cut separates an order edge downward"),
        }
    }
    (lower, upper)
}

/// Run the partitioning to completion or until a limit is hit.
pub fn fit<L: Loss + ?Sized>(dataset: &Dataset, loss: &L, limits: FitLimits) -> Result<Path> {
    fit_with_progress(dataset, loss, limits, &mut |_| {})
}

pub fn fit_with_progress<L: Loss + ?Sized>(
    dataset: &Dataset,
    loss: &L,
    limits: FitLimits,
    progress: &mut dyn FnMut(&Progress),
) -> Result<Path> {
    let start = Instant::now();
    let n = dataset.n();
    for i in 0..n {
        for &y in dataset.responses(i) {
            loss.check_response(y)?;
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let weight = loss.group_weight(&group_responses(dataset, &all))?;
    let root = Group {
        id: 0,
        loss: group_loss(loss, dataset, &all, weight.value),
        members: all,
        weight,
        status: GroupStatus::Active,
        parent: None,
    };
    let mut loss_total = root.loss;
    let mut groups = vec![root];
    let mut steps = vec![Step {
        k: 0,
        split: None,
        loss_total,
    }];
    let mut work: Vec<Option<Work>> = vec![None];
    let mut heap = BinaryHeap::new();

    let root_edges = dataset.order().edges.clone();
    let cut = evaluate(loss, dataset, &groups[0], &root_edges)?;
    if cut.trivial {
        groups[0].status = GroupStatus::Block;
    } else {
        work[0] = Some(Work {
            id: 0,
            edges: root_edges,
        });
        heap.push(Pending { group_id: 0, cut });
    }
    progress(&Progress {
        k: 0,
        groups: 1,
        cut_value: None,
        best_candidate: heap.peek().map(|p| p.cut.value),
        loss_total,
    });

    let mut optimal = true;
    while !heap.is_empty() {
        let k = steps.len();
        let over_iterations = limits.max_iterations.is_some_and(|m| k > m);
        let over_time = limits.time_budget.is_some_and(|b| start.elapsed() >= b);
        if over_iterations || over_time {
            optimal = false;
            break;
        }
        let Pending { group_id, cut } = heap.pop().expect("peeked");
        let parent_work = work[group_id].take().expect("candidate group has work");
        debug_assert_eq!(parent_work.id, group_id);
        let (lower_edges, upper_edges) = split_edges(&parent_work.edges, &cut.in_upper);

        let mut children = Vec::with_capacity(2);
        for members in [cut.lower, cut.upper] {
            let weight = loss.group_weight(&group_responses(dataset, &members))?;
            let id = groups.len() + children.len();
            children.push(Group {
                id,
                loss: group_loss(loss, dataset, &members, weight.value),
                members,
                weight,
                status: GroupStatus::Active,
                parent: Some(group_id),
            });
        }
        let upper_child = children.pop().expect("two children");
        let lower_child = children.pop().expect("two children");

        let big = lower_child.members.len() + upper_child.members.len() > 512;
        let (lower_cut, upper_cut) = if big {
            rayon::join(
                || evaluate(loss, dataset, &lower_child, &lower_edges),
                || evaluate(loss, dataset, &upper_child, &upper_edges),
            )
        } else {
            (
                evaluate(loss, dataset, &lower_child, &lower_edges),
                evaluate(loss, dataset, &upper_child, &upper_edges),
            )
        };

        loss_total += lower_child.loss + upper_child.loss - groups[group_id].loss;
        groups[group_id].status = GroupStatus::Split;
        let split = Split {
            group: group_id,
            value: cut.value,
            lower: lower_child.id,
            upper: upper_child.id,
        };
        steps.push(Step {
            k,
            split: Some(split),
            loss_total,
        });

        for (mut child, child_cut, edges) in [
            (lower_child, lower_cut?, lower_edges),
            (upper_child, upper_cut?, upper_edges),
        ] {
            let id = child.id;
            if child_cut.trivial {
                child.status = GroupStatus::Block;
                work.push(None);
            } else {
                work.push(Some(Work { id, edges }));
                heap.push(Pending {
                    group_id: id,
                    cut: child_cut,
                });
            }
            groups.push(child);
        }
        progress(&Progress {
            k,
            groups: k + 1,
            cut_value: Some(split.value),
            best_candidate: heap.peek().map(|p| p.cut.value),
            loss_total,
        });
    }

    Ok(Path {
        n,
        edges: dataset.order().edges.clone(),
        groups,
        steps,
        optimal,
    })
}

impl Path {
    /// Reassemble a path from stored parts, checking structural consistency.
    /// `edges` are the order edges of the dataset the path was fitted on.
    pub fn from_parts(
        n: usize,
        edges: Vec<(usize, usize)>,
        groups: Vec<Group>,
        steps: Vec<Step>,
        optimal: bool,
    ) -> Result<Self> {
        let bad = |msg: String| Err(GirpError::ModelFormat(msg));
        if groups.is_empty() || steps.is_empty() {
            return bad("empty path".into());
        }
        let mut root: Vec<usize> = groups[0].members.clone();
        root.sort_unstable();
        if root != (0..n).collect::<Vec<_>>() {
            return bad("root group does not hold every point".into());
        }
        if edges.iter().any(|&(i, j)| i >= j || j >= n) {
            return bad("order edge out of range".into());
        }
        for (i, g) in groups.iter().enumerate() {
            if g.id != i {
                return bad(format!("group {i} carries id {}", g.id));
            }
        }
        for (k, s) in steps.iter().enumerate() {
            if s.k != k {
                return bad(format!("step {k} carries k = {}", s.k));
            }
            match (k, s.split) {
                (0, None) => {}
                (0, Some(_)) | (_, None) => return bad(format!("step {k} has the wrong split shape")),
                (_, Some(sp)) => {
                    let ok = sp.group < groups.len()
                        && sp.lower < groups.len()
                        && sp.upper < groups.len()
                        && groups[sp.lower].parent == Some(sp.group)
                        && groups[sp.upper].parent == Some(sp.group)
                        && groups[sp.lower].members.len() + groups[sp.upper].members.len()
                            == groups[sp.group].members.len();
                    if !ok {
                        return bad(format!("step {k} references inconsistent groups"));
                    }
                }
            }
        }
        Ok(Path {
            n,
            edges,
            groups,
            steps,
            optimal,
        })
    }

    pub fn point_count(&self) -> usize {
        self.n
    }

    /// Number of records `M_0 … M_last`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_k(&self) -> usize {
        self.steps.len() - 1
    }

    /// The run ended because no improving split remained.
    pub fn is_optimal(&self) -> bool {
        self.optimal
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn root_weight(&self) -> f64 {
        self.groups[0].weight.value
    }

    /// Group ids forming the partition at iteration `k`, in ascending id order.
    pub fn groups_at(&self, k: usize) -> Result<Vec<usize>> {
        self.check_k(k)?;
        let mut live = vec![false; self.groups.len()];
        live[0] = true;
        for s in &self.steps[1..=k] {
            let sp = s.split.expect("steps after 0 split");
            live[sp.group] = false;
            live[sp.lower] = true;
            live[sp.upper] = true;
        }
        Ok((0..self.groups.len()).filter(|&g| live[g]).collect())
    }

    pub fn record(&self, k: usize) -> Result<PathRecord> {
        let cursor = self.cursor_at(k)?;
        let step = &self.steps[k];
        Ok(PathRecord {
            k,
            partition: (0..self.groups.len())
                .filter(|&g| cursor.live[g])
                .map(|g| (self.groups[g].members.clone(), cursor.values[g]))
                .collect(),
            cut_performed: step.split.map(|s| (s.group, s.value)),
            loss_total: step.loss_total,
        })
    }

    pub fn final_record(&self) -> PathRecord {
        self.record(self.last_k()).expect("last k is in range")
    }

    pub fn records(&self) -> impl Iterator<Item = PathRecord> + '_ {
        (0..self.len()).map(move |k| self.record(k).expect("k in range"))
    }

    /// Per-point fitted value at iteration `k`.
    pub fn fits_at(&self, k: usize) -> Result<Vec<f64>> {
        Ok(self.cursor_at(k)?.fits)
    }

    pub fn final_fits(&self) -> Vec<f64> {
        self.fits_at(self.last_k()).expect("last k is in range")
    }

    pub fn cursor(&self) -> PathCursor<'_> {
        let mut live = vec![false; self.groups.len()];
        live[0] = true;
        let mut values = vec![f64::NAN; self.groups.len()];
        values[0] = self.groups[0].weight.value;
        PathCursor {
            path: self,
            k: 0,
            fits: vec![values[0]; self.n],
            group_of: vec![0; self.n],
            flat_live: usize::from(self.groups[0].weight.flat_interval.is_some()),
            live,
            values,
        }
    }

    fn cursor_at(&self, k: usize) -> Result<PathCursor<'_>> {
        self.check_k(k)?;
        let mut cursor = self.cursor();
        while cursor.k() < k {
            cursor.advance();
        }
        Ok(cursor)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k < self.steps.len() {
            Ok(())
        } else {
            Err(GirpError::UnknownIteration {
                k,
                last: self.last_k(),
            })
        }
    }
}

/// Walks a path forward one split at a time.
///
/// A group whose loss is flat over an interval may take any value in it.
/// While such groups are present, values are chosen as the midpoint of the
/// least and the greatest isotonic choice over the live partition; all other
/// groups keep their weight.
pub struct PathCursor<'a> {
    path: &'a Path,
    k: usize,
    fits: Vec<f64>,
    group_of: Vec<usize>,
    live: Vec<bool>,
    /// Value per live group id.
    values: Vec<f64>,
    flat_live: usize,
}

impl<'a> PathCursor<'a> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fits(&self) -> &[f64] {
        &self.fits
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn at_end(&self) -> bool {
        self.k == self.path.last_k()
    }

    /// Apply the next split and return the points whose fit may have
    /// changed. `None` at the end of the path.
    pub fn advance(&mut self) -> Option<Vec<usize>> {
        if self.at_end() {
            return None;
        }
        self.k += 1;
        let groups = &self.path.groups;
        let sp = self.path.steps[self.k].split.expect("steps after 0 split");
        let flat_before = self.flat_live;
        self.live[sp.group] = false;
        self.flat_live -= usize::from(groups[sp.group].weight.flat_interval.is_some());
        for child in [sp.lower, sp.upper] {
            self.live[child] = true;
            self.values[child] = groups[child].weight.value;
            self.flat_live += usize::from(groups[child].weight.flat_interval.is_some());
            for &i in &groups[child].members {
                self.group_of[i] = child;
            }
        }
        if flat_before == 0 && self.flat_live == 0 {
            let members = &groups[sp.group].members;
            for &i in members {
                self.fits[i] = self.values[self.group_of[i]];
            }
            return Some(members.clone());
        }
        self.resolve();
        let mut changed = Vec::new();
        for i in 0..self.fits.len() {
            let v = self.values[self.group_of[i]];
            if v.to_bits() != self.fits[i].to_bits() {
                self.fits[i] = v;
                changed.push(i);
            }
        }
        Some(changed)
    }

    fn resolve(&mut self) {
        let groups = &self.path.groups;
        let ids: Vec<usize> = (0..groups.len()).filter(|&g| self.live[g]).collect();
        if self.flat_live == 0 {
            for &g in &ids {
                self.values[g] = groups[g].weight.value;
            }
            return;
        }
        let mut local = vec![usize::MAX; groups.len()];
        for (p, &g) in ids.iter().enumerate() {
            local[g] = p;
        }
        let m = ids.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut indegree = vec![0usize; m];
        for &(i, j) in &self.path.edges {
            let (a, b) = (local[self.group_of[i]], local[self.group_of[j]]);
            if a != b {
                succ[a].push(b);
                indegree[b] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).filter(|&a| indegree[a] == 0).collect();
        let mut head = 0;
        while head < order.len() {
            let a = order[head];
            head += 1;
            for &b in &succ[a] {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    order.push(b);
                }
            }
        }
        debug_assert_eq!(order.len(), m, "group order has a cycle");
        let bounds: Vec<(f64, f64)> = ids
            .iter()
            .map(|&g| {
                let w = groups[g].weight;
                w.flat_interval.unwrap_or((w.value, w.value))
            })
            .collect();
        let mut least: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        for &a in &order {
            least[a] = least[a].min(bounds[a].1);
            for &b in &succ[a] {
                least[b] = least[b].max(least[a]);
            }
        }
        let mut greatest: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        for &a in order.iter().rev() {
            for &b in &succ[a] {
                greatest[a] = greatest[a].min(greatest[b]);
            }
            greatest[a] = greatest[a].max(bounds[a].0);
        }
        for (p, &g) in ids.iter().enumerate() {
            self.values[g] = if groups[g].weight.flat_interval.is_some() {
                0.5 * (least[p] + greatest[p])
            } else {
                groups[g].weight.value
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityViolation {
    pub block: usize,
    pub weight: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicityViolation {
    pub lower_block: usize,
    pub upper_block: usize,
    pub lower_weight: f64,
    pub upper_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovingCut {
    pub block: usize,
    pub value: f64,
}

/// Outcome of checking the optimality conditions on a partition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertificateReport {
    /// Problems with the partition itself (missing or repeated points).
    pub structure: Vec<String>,
    pub stationarity: Vec<StationarityViolation>,
    pub isotonicity: Vec<IsotonicityViolation>,
    pub improving_cuts: Vec<ImprovingCut>,
    pub blocks_checked: usize,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.structure.is_empty()
            && self.stationarity.is_empty()
            && self.isotonicity.is_empty()
            && self.improving_cuts.is_empty()
    }
}

/// Check per-block stationarity, isotonicity of block weights across every
/// order edge, and the absence of an improving split inside each block.
/// Block indices in the report refer to positions in `record.partition`.
pub fn certify<L: Loss + ?Sized>(dataset: &Dataset, loss: &L, record: &PathRecord) -> CertificateReport {
    let n = dataset.n();
    let mut report = CertificateReport::default();
    let mut block_of = vec![usize::MAX; n];
    for (b, (members, _)) in record.partition.iter().enumerate() {
        for &i in members {
            if i >= n {
                report.structure.push(format!("block {b} names point {i} beyond {n}"));
            } else if block_of[i] != usize::MAX {
                report.structure.push(format!("point {i} appears in blocks {} and {b}", block_of[i]));
            } else {
                block_of[i] = b;
            }
        }
    }
    if let Some(i) = block_of.iter().position(|&b| b == usize::MAX) {
        report.structure.push(format!("point {i} is not covered"));
    }
    if !report.structure.is_empty() {
        return report;
    }

    let (blo, bhi) = loss.weight_bounds();
    let near = |a: f64, b: f64| b.is_finite() && (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let mut local = vec![0usize; n];
    let mut block_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); record.partition.len()];
    for (members, _) in &record.partition {
        for (p, &i) in members.iter().enumerate() {
            local[i] = p;
        }
    }
    let mut seen_pairs = std::collections::HashSet::new();
    for &(i, j) in &dataset.order().edges {
        let (bi, bj) = (block_of[i], block_of[j]);
        if bi == bj {
            block_edges[bi].push((local[i], local[j]));
            continue;
        }
        let (wi, wj) = (record.partition[bi].1, record.partition[bj].1);
        if wi > wj + ISOTONICITY_TOL && seen_pairs.insert((bi, bj)) {
            report.isotonicity.push(IsotonicityViolation {
                lower_block: bi,
                upper_block: bj,
                lower_weight: wi,
                upper_weight: wj,
            });
        }
    }

    for (b, (members, w)) in record.partition.iter().enumerate() {
        report.blocks_checked += 1;
        let z = match derivatives_at_weight(loss, dataset, members, *w) {
            Ok(z) => z,
            Err(_) => {
                report.stationarity.push(StationarityViolation {
                    block: b,
                    weight: *w,
                    residual: f64::NAN,
                });
                continue;
            }
        };
        let residual: f64 = z.iter().sum();
        let clamped_ok = (near(*w, blo) && residual > 0.0) || (near(*w, bhi) && residual < 0.0);
        if residual.abs() > STATIONARITY_TOL && !clamped_ok {
            report.stationarity.push(StationarityViolation {
                block: b,
                weight: *w,
                residual,
            });
        }
        let problem = CutProblem {
            members: members.clone(),
            z,
            edges: std::mem::take(&mut block_edges[b]),
        };
        match solve_cut(&problem) {
            Ok(c) if !c.trivial => report.improving_cuts.push(ImprovingCut {
                block: b,
                value: c.value,
            }),
            Ok(_) => {}
            Err(e) => report.structure.push(format!("block {b}: {e}")),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossModel;

    fn chain(ys: &[f64]) -> Dataset {
        let rows: Vec<(Vec<f64>, f64)> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| (vec![i as f64], y))
            .collect();
        Dataset::ingest(&rows).unwrap()
    }

    #[test]
    fn single_violator_chain() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        let path = fit(&ds, &LossModel::SquaredError, FitLimits::default()).unwrap();
        assert!(path.is_optimal());
        assert_eq!(path.len(), 2);
        let m0 = path.record(0).unwrap();
        assert_eq!(m0.partition, vec![(vec![0, 1, 2], 2.0)]);
        let m1 = path.record(1).unwrap();
        assert_eq!(m1.partition, vec![(vec![0], 1.0), (vec![1, 2], 2.5)]);
        assert_eq!(m1.cut_performed, Some((0, -4.0)));
        assert_eq!(path.final_fits(), vec![1.0, 2.5, 2.5]);
    }

    #[test]
    fn isotonic_chain_splits_to_singletons() {
        let ds = chain(&[1.0, 2.0, 3.0]);
        let path = fit(&ds, &LossModel::SquaredError, FitLimits::default()).unwrap();
        assert_eq!(path.record(1).unwrap().cut_performed, Some((0, -4.0)));
        assert_eq!(path.final_fits(), vec![1.0, 2.0, 3.0]);
        assert_eq!(path.len(), 3);
    }

    #[test]
    fn antichain_fits_each_point() {
        let rows = vec![
            (vec![0.0, 3.0], 5.0),
            (vec![1.0, 2.0], 1.0),
            (vec![2.0, 1.0], 4.0),
            (vec![3.0, 0.0], 2.0),
        ];
        let ds = Dataset::ingest(&rows).unwrap();
        for loss in [LossModel::SquaredError, LossModel::Huber { delta: 0.5 }, LossModel::PoissonNll] {
            let path = fit(&ds, &loss, FitLimits::default()).unwrap();
            let fits = path.final_fits();
            for (i, p) in ds.points().iter().enumerate() {
                assert!((fits[i] - p.y).abs() < 1e-9, "{loss:?}: {fits:?}");
            }
        }
    }

    #[test]
    fn iteration_limit_marks_partial_path() {
        let ds = chain(&[1.0, 2.0, 3.0, 4.0]);
        let limits = FitLimits {
            max_iterations: Some(1),
            time_budget: None,
        };
        let path = fit(&ds, &LossModel::SquaredError, limits).unwrap();
        assert!(!path.is_optimal());
        assert_eq!(path.len(), 2);
    }

    #[test]
    fn poisson_rejects_negative_responses() {
        let ds = chain(&[1.0, -1.0]);
        let err = fit(&ds, &LossModel::PoissonNll, FitLimits::default()).unwrap_err();
        assert!(err.to_string().contains("response out of range for poisson"));
    }

    #[test]
    fn progress_reports_every_iteration() {
        let ds = chain(&[3.0, 1.0, 2.0, 5.0, 4.0]);
        let mut seen = Vec::new();
        let path = fit_with_progress(&ds, &LossModel::SquaredError, FitLimits::default(), &mut |p| {
            seen.push(p.k)
        })
        .unwrap();
        assert_eq!(seen, (0..path.len()).collect::<Vec<_>>());
    }

    #[test]
    fn certify_accepts_fit_and_rejects_merged_blocks() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        let loss = LossModel::SquaredError;
        let path = fit(&ds, &loss, FitLimits::default()).unwrap();
        assert!(certify(&ds, &loss, &path.final_record()).passed());

        let merged = PathRecord {
            k: 0,
            partition: vec![(vec![0, 1, 2], 2.0)],
            cut_performed: None,
            loss_total: 0.0,
        };
        let report = certify(&ds, &loss, &merged);
        assert!(!report.passed());
        assert_eq!(report.improving_cuts.len(), 1);
    }

    #[test]
    fn certify_reports_perturbed_weight_residual() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        let loss = LossModel::SquaredError;
        let mut rec = fit(&ds, &loss, FitLimits::default()).unwrap().final_record();
        rec.partition[1].1 += 1e-3;
        let report = certify(&ds, &loss, &rec);
        assert_eq!(report.stationarity.len(), 1);
        // Block {2, 3} at 2.501: 2(2.501 - 3) + 2(2.501 - 2) = 0.004.
        let expected = 2.0 * (2.501 - 3.0) + 2.0 * (2.501 - 2.0);
        assert!((report.stationarity[0].residual - expected).abs() < 1e-12);
    }

    #[test]
    fn certify_reports_isotonicity_and_structure() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        let loss = LossModel::SquaredError;
        let swapped = PathRecord {
            k: 0,
            partition: vec![(vec![0], 3.0), (vec![1, 2], 2.5)],
            cut_performed: None,
            loss_total: 0.0,
        };
        assert_eq!(certify(&ds, &loss, &swapped).isotonicity.len(), 1);
        let missing = PathRecord {
            k: 0,
            partition: vec![(vec![0], 1.0)],
            cut_performed: None,
            loss_total: 0.0,
        };
        assert!(!certify(&ds, &loss, &missing).structure.is_empty());
    }

    #[test]
    fn clamped_poisson_block_certifies() {
        let ds = chain(&[0.0, 0.0, 3.0, 5.0]);
        let loss = LossModel::PoissonNll;
        let path = fit(&ds, &loss, FitLimits::default()).unwrap();
        let report = certify(&ds, &loss, &path.final_record());
        assert!(report.passed(), "{report:?}");
        assert_eq!(path.final_fits()[0], crate::loss::DOMAIN_EPS);
    }

    #[test]
    fn unknown_iteration() {
        let ds = chain(&[1.0, 3.0, 2.0]);
        let path = fit(&ds, &LossModel::SquaredError, FitLimits::default()).unwrap();
        assert!(matches!(path.record(5), Err(GirpError::UnknownIteration { .. })));
    }
}

//! Optimal isotonic two-way split of a group.
//!
//! With signs `x_i ∈ {-1, +1}` monotone along the order, the split LP
//! `min Σ z_i x_i` is the same as choosing an upper set `U` minimizing
//! `Σ_{i∈U} z_i`, a minimum-weight closure. Closures are solved as s-t
//! minimum cuts: `s → i` with capacity `-z_i` for negative `z_i`, `i → t`
//! with capacity `z_i` for positive `z_i`, and an infinite arc along each
//! order edge. The source side of the canonical cut is the upper set.

use crate::dataset::Dataset;
use crate::error::{GirpError, Result};
use crate::flow::{max_flow, FlowNetwork};
use crate::loss::Loss;

/// Split subproblem for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct CutProblem {
    /// Global point indices.
    pub members: Vec<usize>,
    /// Summed loss derivative per member at the group weight.
    pub z: Vec<f64>,
    /// Order edges inside the group, as positions into `members`.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// LP objective `Σ_upper z - Σ_lower z` of the returned split.
    pub value: f64,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    /// Per member position: whether it lies in `upper`.
    pub in_upper: Vec<bool>,
    /// No improving split exists: the group is a block. A trivial result
    /// puts every member in `upper`.
    pub trivial: bool,
}

/// Raw optimum of the split LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpCut {
    pub value: f64,
    pub in_upper: Vec<bool>,
}

/// Threshold below which a split counts as improving.
pub fn cut_tolerance(z: &[f64]) -> f64 {
    1e-9 * (1.0 + z.iter().map(|v| v.abs()).sum::<f64>())
}

/// LP objective of a sign assignment.
pub fn split_value(z: &[f64], in_upper: &[bool]) -> f64 {
    z.iter()
        .zip(in_upper)
        .map(|(&zi, &up)| if up { zi } else { -zi })
        .sum()
}

/// Closure network for `z` over local edges; node `k` is the source, `k + 1`
/// the sink.
pub fn closure_network(z: &[f64], edges: &[(usize, usize)]) -> FlowNetwork {
    let k = z.len();
    let (s, t) = (k, k + 1);
    let mut net = FlowNetwork::new(k + 2, s, t);
    for (i, &zi) in z.iter().enumerate() {
        if zi < 0.0 {
            net.add_arc(s, i, -zi);
        } else if zi > 0.0 {
            net.add_arc(i, t, zi);
        }
    }
    for &(i, j) in edges {
        net.add_infinite_arc(i, j);
    }
    net
}

fn validate(z: &[f64], edges: &[(usize, usize)]) -> Result<()> {
    if z.is_empty() {
        return Err(GirpError::Empty);
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GirpError::NonFinite {
            what: "cut derivatives".into(),
        });
    }
    let k = z.len();
    for &(i, j) in edges {
        if i >= k || j >= k || i == j {
            return Err(GirpError::MalformedNetwork(format!(
                "edge ({i}, {j}) invalid for a group of {k}"
            )));
        }
    }
    Ok(())
}

/// Minimum-weight upper set; ties resolve to the inclusion-minimal optimum.
pub fn solve_cut_lp(z: &[f64], edges: &[(usize, usize)]) -> Result<LpCut> {
    validate(z, edges)?;
    let mut in_upper = vec![false; z.len()];
    if edges.is_empty() {
        for (u, &zi) in in_upper.iter_mut().zip(z) {
            *u = zi < 0.0;
        }
    } else {
        let cut = max_flow(&closure_network(z, edges))?;
        for v in cut.source_side {
            if v < z.len() {
                in_upper[v] = true;
            }
        }
    }
    Ok(LpCut {
        value: split_value(z, &in_upper),
        in_upper,
    })
}

pub fn solve_cut(p: &CutProblem) -> Result<CutResult> {
    if p.members.len() != p.z.len() {
        return Err(GirpError::DimensionMismatch {
            expected: p.members.len(),
            found: p.z.len(),
        });
    }
    let trivial_result = || CutResult {
        value: p.z.iter().sum(),
        lower: Vec::new(),
        upper: p.members.clone(),
        in_upper: vec![true; p.members.len()],
        trivial: true,
    };
    if p.members.len() == 1 {
        validate(&p.z, &p.edges)?;
        return Ok(trivial_result());
    }
    let lp = solve_cut_lp(&p.z, &p.edges)?;
    let n_upper = lp.in_upper.iter().filter(|&&u| u).count();
    if lp.value >= -cut_tolerance(&p.z) || n_upper == 0 || n_upper == p.members.len() {
        return Ok(trivial_result());
    }
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for (&m, &up) in p.members.iter().zip(&lp.in_upper) {
        if up {
            upper.push(m);
        } else {
            lower.push(m);
        }
    }
    Ok(CutResult {
        value: lp.value,
        lower,
        upper,
        in_upper: lp.in_upper,
        trivial: false,
    })
}

/// Per-member summed derivatives at fit `w`.
pub fn derivatives_at_weight<L: Loss + ?Sized>(
    loss: &L,
    dataset: &Dataset,
    members: &[usize],
    w: f64,
) -> Result<Vec<f64>> {
    loss.check_fit(w)?;
    Ok(members
        .iter()
        .map(|&i| loss.summed_derivative(w, dataset.responses(i)))
        .collect())
}

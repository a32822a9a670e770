//! Observations, duplicate merging and the coordinate-wise partial order.
//!
//! Rows whose covariate vectors are bitwise equal are merged into a single
//! [`Observation`] that keeps every original response, so per-point losses
//! can be evaluated exactly as sums over the merged rows. Points are kept in
//! lexicographic order of their covariates, which is also a linear extension
//! of the dominance order: `x_i ⪯ x_j` with `i != j` implies `i < j`.

use std::cmp::Ordering;
use std::io::Read;

use fixedbitset::FixedBitSet;

use crate::error::{GirpError, Result};

/// One merged design point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    /// Mean of the merged responses.
    pub y: f64,
    /// Number of raw rows merged into this point.
    pub weight_count: usize,
}

/// Isotonicity constraints: an edge `(i, j)` means `x_i ⪯ x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialOrder {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub reduced: bool,
}

impl PartialOrder {
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Successor lists, each sorted ascending.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            succ[i].push(j);
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        succ
    }

    /// Full reachability as one bitset per node (a node does not reach itself).
    pub fn reachability(&self) -> Vec<FixedBitSet> {
        let succ = self.successors();
        let mut reach = vec![FixedBitSet::with_capacity(self.n); self.n];
        // Edges always point forward in index order, so a reverse sweep is a
        // reverse topological sweep.
        for u in (0..self.n).rev() {
            let mut r = FixedBitSet::with_capacity(self.n);
            for &v in &succ[u] {
                r.insert(v);
                r.union_with(&reach[v]);
            }
            reach[u] = r;
        }
        reach
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Observation>,
    order: PartialOrder,
    raw_responses: Vec<Vec<f64>>,
}

/// `a ⪯ b` coordinate-wise.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| u <= v)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

impl Dataset {
    /// Ingest raw rows with transitive reduction of the order enabled.
    pub fn ingest(rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::ingest_with(rows, true)
    }

    pub fn ingest_with(rows: &[(Vec<f64>, f64)], reduce: bool) -> Result<Self> {
        let first = rows.first().ok_or(GirpError::Empty)?;
        let d = first.0.len();
        if d == 0 {
            return Err(GirpError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut cleaned: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
        for (row_idx, (x, y)) in rows.iter().enumerate() {
            if x.len() != d {
                return Err(GirpError::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(GirpError::NonFinite {
                    what: format!("row {row_idx}"),
                });
            }
            // -0.0 and 0.0 compare equal; store them identically so equal
            // coordinates merge.
            let x = x.iter().map(|&v| if v == 0.0 { 0.0 } else { v }).collect();
            cleaned.push((x, *y));
        }
        // Stable sort keeps the responses of merged rows in input order.
        cleaned.sort_by(|a, b| lex_cmp(&a.0, &b.0));

        let mut points: Vec<Observation> = Vec::new();
        let mut raw_responses: Vec<Vec<f64>> = Vec::new();
        for (x, y) in cleaned {
            match points.last() {
                Some(last) if lex_cmp(&last.x, &x) == Ordering::Equal => {
                    raw_responses.last_mut().expect("parallel vectors").push(y);
                }
                _ => {
                    points.push(Observation {
                        x,
                        y,
                        weight_count: 1,
                    });
                    raw_responses.push(vec![y]);
                }
            }
        }
        for (p, ys) in points.iter_mut().zip(&raw_responses) {
            p.weight_count = ys.len();
            p.y = ys.iter().sum::<f64>() / ys.len() as f64;
        }
        let xs: Vec<&[f64]> = points.iter().map(|p| p.x.as_slice()).collect();
        let order = build_order(&xs, reduce);
        Ok(Dataset {
            points,
            order,
            raw_responses,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dimension(&self) -> usize {
        self.points[0].x.len()
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn order(&self) -> &PartialOrder {
        &self.order
    }

    /// Raw responses merged into point `i`.
    pub fn responses(&self, i: usize) -> &[f64] {
        &self.raw_responses[i]
    }

    pub fn raw_row_count(&self) -> usize {
        self.raw_responses.iter().map(Vec::len).sum()
    }

    /// Expand back into one row per raw response.
    pub fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        self.points
            .iter()
            .zip(&self.raw_responses)
            .flat_map(|(p, ys)| ys.iter().map(move |&y| (p.x.clone(), y)))
            .collect()
    }

    /// Index of the point whose covariates equal `x` exactly, if any.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.points
            .binary_search_by(|p| lex_cmp(&p.x, x))
            .ok()
    }
}

/// Build the dominance order over lexicographically sorted, duplicate-free
/// points. With `reduce`, only the covering relation is kept.
pub fn build_order(points: &[&[f64]], reduce: bool) -> PartialOrder {
    let n = points.len();
    let mut edges = Vec::new();
    if !reduce {
        for i in 0..n {
            for j in (i + 1)..n {
                if dominates(points[i], points[j]) {
                    edges.push((i, j));
                }
            }
        }
        return PartialOrder {
            n,
            edges,
            reduced: false,
        };
    }

    // Reverse sweep: reach[u] holds every descendant of u. A successor v of u
    // is redundant iff some earlier (in topological order) successor reaches it.
    let mut reach: Vec<FixedBitSet> = vec![FixedBitSet::new(); n];
    let mut kept: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in (0..n).rev() {
        let mut covered = FixedBitSet::with_capacity(n);
        for v in (u + 1)..n {
            if covered.contains(v) || !dominates(points[u], points[v]) {
                continue;
            }
            kept[u].push(v);
            covered.insert(v);
            covered.union_with(&reach[v]);
        }
        reach[u] = covered;
    }
    for (u, succ) in kept.into_iter().enumerate() {
        edges.extend(succ.into_iter().map(|v| (u, v)));
    }
    PartialOrder {
        n,
        edges,
        reduced: true,
    }
}

fn parse_value(token: &str, line: u64) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| GirpError::NonFinite {
        what: format!("line {line}: cannot parse {token:?}"),
    })?;
    if !v.is_finite() {
        return Err(GirpError::NonFinite {
            what: format!("line {line}: {token:?}"),
        });
    }
    Ok(v)
}

/// Read `x1,...,xd,y` rows from CSV with a header line.
pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(GirpError::DimensionMismatch {
            expected: 2,
            found: width,
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = idx as u64 + 2;
        let values = record
            .iter()
            .map(|t| parse_value(t, line))
            .collect::<Result<Vec<f64>>>()?;
        let (y, x) = values.split_last().expect("width checked");
        rows.push((x.to_vec(), *y));
    }
    if rows.is_empty() {
        return Err(GirpError::Empty);
    }
    Ok(rows)
}

/// Read covariate rows. A trailing column named `y` is dropped, so a
/// training file can be passed directly.
pub fn read_covariates_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let drop_last = headers.len() > 1 && headers.iter().last().map(str::trim) == Some("y");
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = idx as u64 + 2;
        let take = if drop_last { record.len() - 1 } else { record.len() };
        let x = record
            .iter()
            .take(take)
            .map(|t| parse_value(t, line))
            .collect::<Result<Vec<f64>>>()?;
        out.push(x);
    }
    Ok(out)
}

/// Write rows as `x1,...,xd,y` CSV.
pub fn write_rows_csv<W: std::io::Write>(writer: W, rows: &[(Vec<f64>, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let d = rows.first().map_or(0, |r| r.0.len());
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".to_string());
    wtr.write_record(&header)?;
    for (x, y) in rows {
        let rec: Vec<String> = x.iter().chain(std::iter::once(y)).map(|v| v.to_string()).collect();
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(xs: &[&[f64]], ys: &[f64]) -> Vec<(Vec<f64>, f64)> {
        xs.iter().zip(ys).map(|(x, &y)| (x.to_vec(), y)).collect()
    }

    #[test]
    fn identical_coordinates_merge() {
        let ds = Dataset::ingest(&rows(&[&[1.0], &[1.0]], &[2.0, 4.0])).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.responses(0), &[2.0, 4.0]);
        assert_eq!(ds.points()[0].weight_count, 2);
        assert_eq!(ds.points()[0].y, 3.0);
        assert!(ds.order().edges.is_empty());
    }

    #[test]
    fn one_dimensional_chain() {
        let ds = Dataset::ingest(&rows(&[&[0.0], &[1.0]], &[1.0, 2.0])).unwrap();
        assert_eq!(ds.order().edges, vec![(0, 1)]);
    }

    #[test]
    fn chain_reduction() {
        let pts: Vec<&[f64]> = vec![&[1.0], &[2.0], &[3.0]];
        assert_eq!(build_order(&pts, true).edges, vec![(0, 1), (1, 2)]);
        assert_eq!(build_order(&pts, false).edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn antichain_has_no_edges() {
        let pts: Vec<&[f64]> = vec![&[0.0, 1.0], &[1.0, 0.0]];
        assert!(build_order(&pts, true).edges.is_empty());
        assert!(build_order(&pts, false).edges.is_empty());
    }

    #[test]
    fn three_by_three_grid() {
        let mut xs = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                xs.push(vec![a as f64, b as f64]);
            }
        }
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let full = build_order(&refs, false);
        // Brute force: ordered distinct pairs (p, q) with p ⪯ q.
        let mut expected = 0;
        for p in &xs {
            for q in &xs {
                if p != q && p[0] <= q[0] && p[1] <= q[1] {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 27);
        assert_eq!(full.m(), expected);
        let reduced = build_order(&refs, true);
        assert_eq!(reduced.m(), 12);
        assert_eq!(full.reachability(), reduced.reachability());
    }

    #[test]
    fn sorted_and_negative_zero_merged() {
        let ds = Dataset::ingest(&rows(&[&[1.0, 0.0], &[0.0, 5.0], &[1.0, -0.0]], &[1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.points()[0].x, vec![0.0, 5.0]);
        assert_eq!(ds.responses(1), &[1.0, 3.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(Dataset::ingest(&[]), Err(GirpError::Empty)));
        assert!(matches!(
            Dataset::ingest(&rows(&[&[1.0], &[1.0, 2.0]], &[0.0, 0.0])),
            Err(GirpError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Dataset::ingest(&rows(&[&[f64::NAN]], &[0.0])),
            Err(GirpError::NonFinite { .. })
        ));
        assert!(matches!(
            Dataset::ingest(&rows(&[&[1.0]], &[f64::INFINITY])),
            Err(GirpError::NonFinite { .. })
        ));
    }

    #[test]
    fn csv_rejects_nan_tokens() {
        let good = "x1,x2,y\n1,2,3\n0.5,1e-3,-4\n";
        let r = read_rows_csv(good.as_bytes()).unwrap();
        assert_eq!(r, vec![(vec![1.0, 2.0], 3.0), (vec![0.5, 1e-3], -4.0)]);
        assert!(read_rows_csv("x1,y\nNaN,1\n".as_bytes()).is_err());
        assert!(read_rows_csv("x1,y\n1,inf\n".as_bytes()).is_err());
        assert!(read_rows_csv("x1,y\n".as_bytes()).is_err());
    }

    #[test]
    fn covariate_csv_drops_response_column() {
        let x = read_covariates_csv("x1,x2,y\n1,2,3\n".as_bytes()).unwrap();
        assert_eq!(x, vec![vec![1.0, 2.0]]);
        let x = read_covariates_csv("x1,x2\n1,2\n".as_bytes()).unwrap();
        assert_eq!(x, vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn find_locates_points() {
        let ds = Dataset::ingest(&rows(&[&[2.0], &[1.0]], &[0.0, 0.0])).unwrap();
        assert_eq!(ds.find(&[1.0]), Some(0));
        assert_eq!(ds.find(&[2.0]), Some(1));
        assert_eq!(ds.find(&[1.5]), None);
    }
}

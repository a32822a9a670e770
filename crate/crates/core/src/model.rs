//! Predictive models built from a path, validation metrics, stopping-point
//! selection and the on-disk path format.
//!
//! Out-of-sample predictions use the envelope of the fitted values: the
//! largest fit among training points below `x` and the smallest among those
//! above it. A missing bound falls back to the smallest or largest fit
//! overall, and the prediction is the midpoint of the two bounds, which keeps
//! predictions monotone in `x`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{dominates, Dataset};
use crate::engine::{Group, GroupStatus, Path, Step};
use crate::error::{GirpError, Result};
use crate::loss::{GroupWeight, Loss, LossModel, DOMAIN_EPS};

pub const SCHEMA_VERSION: u32 = 1;
const FORMAT_NAME: &str = "girp-path";

/// A fitted isotonic function over the training covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicModel {
    dimension: usize,
    points: Vec<Vec<f64>>,
    fits: Vec<f64>,
    /// Smallest and largest fitted value, standing in for missing bounds.
    range: (f64, f64),
    k: usize,
}

fn fit_range(fits: &[f64]) -> (f64, f64) {
    let lo = fits.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn combine(lower: f64, upper: f64, range: (f64, f64)) -> f64 {
    let l = if lower.is_finite() { lower } else { range.0 };
    let u = if upper.is_finite() { upper } else { range.1 };
    0.5 * (l + u)
}

impl IsotonicModel {
    pub fn from_path(dataset: &Dataset, path: &Path, k: usize) -> Result<Self> {
        if path.point_count() != dataset.n() {
            return Err(GirpError::DimensionMismatch {
                expected: dataset.n(),
                found: path.point_count(),
            });
        }
        let fits = path.fits_at(k)?;
        Ok(IsotonicModel {
            dimension: dataset.dimension(),
            points: dataset.points().iter().map(|p| p.x.clone()).collect(),
            range: fit_range(&fits),
            fits,
            k,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    /// Fitted value per training point, in dataset order.
    pub fn fits(&self) -> &[f64] {
        &self.fits
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(GirpError::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GirpError::NonFinite {
                what: "prediction covariates".into(),
            });
        }
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for (p, &f) in self.points.iter().zip(&self.fits) {
            let below = dominates(p, x);
            let above = dominates(x, p);
            if below && above {
                return Ok(f);
            }
            if below {
                lower = lower.max(f);
            }
            if above {
                upper = upper.min(f);
            }
        }
        Ok(combine(lower, upper, self.range))
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Per-point validation and test metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Mse,
    NegPoissonLL,
    NegBernoulliLL,
    HuberLoss { delta: f64 },
    /// The training loss itself, for losses without a dedicated metric.
    Loss(LossModel),
}

impl Metric {
    /// Natural metric for a training loss.
    pub fn for_loss(loss: &LossModel) -> Metric {
        match *loss {
            LossModel::SquaredError => Metric::Mse,
            LossModel::Huber { delta } => Metric::HuberLoss { delta },
            LossModel::PoissonNll => Metric::NegPoissonLL,
            LossModel::BernoulliNll => Metric::NegBernoulliLL,
            other => Metric::Loss(other),
        }
    }

    pub fn point(&self, prediction: f64, y: f64) -> f64 {
        match *self {
            Metric::Mse => (prediction - y).powi(2),
            Metric::NegPoissonLL => {
                let p = prediction.max(DOMAIN_EPS);
                LossModel::PoissonNll.value(p, y)
            }
            Metric::NegBernoulliLL => {
                let p = prediction.clamp(DOMAIN_EPS, 1.0 - DOMAIN_EPS);
                LossModel::BernoulliNll.value(p, y)
            }
            Metric::HuberLoss { delta } => LossModel::Huber { delta }.value(prediction, y),
            Metric::Loss(l) => {
                let (lo, hi) = l.weight_bounds();
                l.value(prediction.clamp(lo, hi), y)
            }
        }
    }

    fn check_response(&self, y: f64) -> Result<()> {
        match self {
            Metric::NegPoissonLL => LossModel::PoissonNll.check_response(y),
            Metric::NegBernoulliLL => LossModel::BernoulliNll.check_response(y),
            Metric::Loss(l) => l.check_response(y),
            _ if y.is_finite() => Ok(()),
            _ => Err(GirpError::NonFinite {
                what: "metric response".into(),
            }),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Mse => f.write_str("mse"),
            Metric::NegPoissonLL => f.write_str("neg-poisson-ll"),
            Metric::NegBernoulliLL => f.write_str("neg-bernoulli-ll"),
            Metric::HuberLoss { delta } => write!(f, "huber:delta={delta}"),
            Metric::Loss(l) => write!(f, "loss:{l}"),
        }
    }
}

impl FromStr for Metric {
    type Err = GirpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mse" => Ok(Metric::Mse),
            "neg-poisson-ll" | "poisson" => Ok(Metric::NegPoissonLL),
            "neg-bernoulli-ll" | "bernoulli" => Ok(Metric::NegBernoulliLL),
            other => {
                if let Some(rest) = other.strip_prefix("loss:") {
                    return Ok(Metric::Loss(rest.parse()?));
                }
                match other.parse::<LossModel>() {
                    Ok(LossModel::Huber { delta }) => Ok(Metric::HuberLoss { delta }),
                    _ => Err(GirpError::InvalidArgument(format!("unknown metric {other:?}"))),
                }
            }
        }
    }
}

/// Mean metric of the model's predictions over `rows`.
pub fn evaluate(model: &IsotonicModel, rows: &[(Vec<f64>, f64)], metric: Metric) -> Result<f64> {
    if rows.is_empty() {
        return Err(GirpError::Empty);
    }
    let mut total = 0.0;
    for (x, y) in rows {
        metric.check_response(*y)?;
        total += metric.point(model.predict(x)?, *y);
    }
    Ok(total / rows.len() as f64)
}

/// Index of the smallest value; ties go to the earliest.
pub fn select_stopping(curve: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in curve.iter().enumerate() {
        if best.is_none_or(|b| v < curve[b]) {
            best = Some(k);
        }
    }
    best
}

/// Metric of every model `M_0 … M_last` on `rows`.
///
/// Equal, bit for bit, to calling [`evaluate`] on each
/// [`IsotonicModel::from_path`], but only queries whose envelope touches the
/// split group are recomputed after each split.
pub fn validation_curve(
    dataset: &Dataset,
    path: &Path,
    rows: &[(Vec<f64>, f64)],
    metric: Metric,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(GirpError::Empty);
    }
    let d = dataset.dimension();
    let n = dataset.n();
    struct Query {
        below: Vec<usize>,
        above: Vec<usize>,
        exact: Option<usize>,
    }
    let mut queries = Vec::with_capacity(rows.len());
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (q, (x, y)) in rows.iter().enumerate() {
        if x.len() != d {
            return Err(GirpError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        metric.check_response(*y)?;
        let normalized: Vec<f64> = x.iter().map(|&v| if v == 0.0 { 0.0 } else { v }).collect();
        let exact = dataset.find(&normalized);
        let (mut below, mut above) = (Vec::new(), Vec::new());
        if exact.is_none() {
            for (i, p) in dataset.points().iter().enumerate() {
                if dominates(&p.x, x) {
                    below.push(i);
                    touching[i].push(q);
                } else if dominates(x, &p.x) {
                    above.push(i);
                    touching[i].push(q);
                }
            }
        } else if let Some(i) = exact {
            touching[i].push(q);
        }
        queries.push(Query {
            below,
            above,
            exact,
        });
    }

    let mut cursor = path.cursor();
    let score = |q: &Query, fits: &[f64], range: (f64, f64), y: f64| -> f64 {
        let prediction = match q.exact {
            Some(i) => fits[i],
            None => {
                let lower = q.below.iter().map(|&i| fits[i]).fold(f64::NEG_INFINITY, f64::max);
                let upper = q.above.iter().map(|&i| fits[i]).fold(f64::INFINITY, f64::min);
                combine(lower, upper, range)
            }
        };
        metric.point(prediction, y)
    };
    let mut range = fit_range(cursor.fits());
    let mut per_query: Vec<f64> = queries
        .iter()
        .zip(rows)
        .map(|(q, (_, y))| score(q, cursor.fits(), range, *y))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut curve = vec![mean(&per_query)];
    let mut stamp = vec![usize::MAX; rows.len()];
    while let Some(changed) = cursor.advance() {
        let k = cursor.k();
        let new_range = fit_range(cursor.fits());
        if new_range != range {
            range = new_range;
            for (q, query) in queries.iter().enumerate() {
                stamp[q] = k;
                per_query[q] = score(query, cursor.fits(), range, rows[q].1);
            }
        }
        for &i in &changed {
            for &q in &touching[i] {
                if stamp[q] != k {
                    stamp[q] = k;
                    per_query[q] = score(&queries[q], cursor.fits(), range, rows[q].1);
                }
            }
        }
        curve.push(mean(&per_query));
    }
    Ok(curve)
}

/// Seeded split of `n` row indices into (training, validation), both sorted.
pub fn validation_split(n: usize, valid_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&valid_frac) {
        return Err(GirpError::InvalidArgument(format!(
            "validation fraction {valid_frac} not in [0, 1)"
        )));
    }
    if valid_frac == 0.0 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    if n < 2 {
        return Err(GirpError::InvalidArgument("too few rows for a validation split".into()));
    }
    let m = ((n as f64 * valid_frac).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valid = rand::seq::index::sample(&mut rng, n, m).into_vec();
    valid.sort_unstable();
    let mut is_valid = vec![false; n];
    for &i in &valid {
        is_valid[i] = true;
    }
    let train = (0..n).filter(|&i| !is_valid[i]).collect();
    Ok((train, valid))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub dimension: usize,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(dataset: &Dataset) -> Self {
        let mut h = Sha256::new();
        for p in dataset.points() {
            for v in &p.x {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for i in 0..dataset.n() {
            h.update((dataset.responses(i).len() as u64).to_le_bytes());
            for y in dataset.responses(i) {
                h.update(y.to_bits().to_le_bytes());
            }
        }
        let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Fingerprint {
            rows: dataset.raw_row_count(),
            dimension: dataset.dimension(),
            sha256,
        }
    }
}

/// Everything needed to replay a fitted path and predict from any of its models.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModelFile {
    pub loss: LossModel,
    pub dataset: Dataset,
    pub path: Path,
    pub selected_k: Option<usize>,
    pub seed: Option<u64>,
    pub valid_frac: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        format: String,
        version: u32,
        loss: String,
        fingerprint: Fingerprint,
        reduced: bool,
        points: usize,
        groups: usize,
        steps: usize,
        optimal: bool,
        selected_k: Option<usize>,
        seed: Option<u64>,
        valid_frac: f64,
    },
    Point {
        i: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Group {
        id: usize,
        parent: Option<usize>,
        status: GroupStatus,
        weight: GroupWeight,
        loss: f64,
        members: Vec<usize>,
    },
    Step {
        k: usize,
        split: Option<crate::engine::Split>,
        loss_total: f64,
    },
}

fn format_error(msg: impl Into<String>) -> GirpError {
    GirpError::ModelFormat(msg.into())
}

impl PathModelFile {
    pub fn model(&self, k: Option<usize>) -> Result<IsotonicModel> {
        let k = k.or(self.selected_k).unwrap_or(self.path.last_k());
        IsotonicModel::from_path(&self.dataset, &self.path, k)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(&self.dataset)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut emit = |line: &Line| -> Result<()> {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        emit(&Line::Header {
            format: FORMAT_NAME.into(),
            version: SCHEMA_VERSION,
            loss: self.loss.to_string(),
            fingerprint: self.fingerprint(),
            reduced: self.dataset.order().reduced,
            points: self.dataset.n(),
            groups: self.path.groups().len(),
            steps: self.path.len(),
            optimal: self.path.is_optimal(),
            selected_k: self.selected_k,
            seed: self.seed,
            valid_frac: self.valid_frac,
        })?;
        for (i, p) in self.dataset.points().iter().enumerate() {
            emit(&Line::Point {
                i,
                x: p.x.clone(),
                y: self.dataset.responses(i).to_vec(),
            })?;
        }
        for g in self.path.groups() {
            emit(&Line::Group {
                id: g.id,
                parent: g.parent,
                status: g.status,
                weight: g.weight,
                loss: g.loss,
                members: g.members.clone(),
            })?;
        }
        for s in self.path.steps() {
            emit(&Line::Step {
                k: s.k,
                split: s.split,
                loss_total: s.loss_total,
            })?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| format_error("empty model file"))??;
        let Line::Header {
            format,
            version,
            loss,
            fingerprint,
            reduced,
            points,
            groups: n_groups,
            steps: n_steps,
            optimal,
            selected_k,
            seed,
            valid_frac,
        } = serde_json::from_str(&first)?
        else {
            return Err(format_error("first line is not a header"));
        };
        if format != FORMAT_NAME {
            return Err(format_error(format!("unknown format {format:?}")));
        }
        if version != SCHEMA_VERSION {
            return Err(format_error(format!("unsupported schema version {version}")));
        }
        let loss: LossModel = loss.parse()?;

        let (mut rows, mut groups, mut steps) = (Vec::new(), Vec::new(), Vec::new());
        let mut n_points = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                Line::Header { .. } => return Err(format_error("repeated header")),
                Line::Point { i, x, y } => {
                    if i != n_points || y.is_empty() {
                        return Err(format_error(format!("bad point line {i}")));
                    }
                    n_points += 1;
                    rows.extend(y.into_iter().map(|v| (x.clone(), v)));
                }
                Line::Group {
                    id,
                    parent,
                    status,
                    weight,
                    loss,
                    members,
                } => groups.push(Group {
                    id,
                    members,
                    weight,
                    status,
                    parent,
                    loss,
                }),
                Line::Step {
                    k,
                    split,
                    loss_total,
                } => steps.push(Step {
                    k,
                    split,
                    loss_total,
                }),
            }
        }
        if n_points != points || groups.len() != n_groups || steps.len() != n_steps {
            return Err(format_error("record counts disagree with the header"));
        }
        let dataset = Dataset::ingest_with(&rows, reduced)?;
        if dataset.n() != points {
            return Err(format_error("stored points are not distinct"));
        }
        if Fingerprint::of(&dataset) != fingerprint {
            return Err(format_error("dataset fingerprint mismatch"));
        }
        let path = Path::from_parts(points, dataset.order().edges.clone(), groups, steps, optimal)?;
        if let Some(k) = selected_k {
            if k > path.last_k() {
                return Err(GirpError::UnknownIteration {
                    k,
                    last: path.last_k(),
                });
            }
        }
        Ok(PathModelFile {
            loss,
            dataset,
            path,
            selected_k,
            seed,
            valid_frac,
        })
    }

    pub fn save(&self, file: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(file)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(file: &std::path::Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(file)?))
    }
}

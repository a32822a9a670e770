//! Synthetic simulation harness.
//!
//! Each seed draws an independent training and test set, fits a path on a
//! subtraining split, picks the stopping point on the held-out validation
//! rows and scores both the selected and the final model on the test set
//! next to a parametric baseline trained on the full training set.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::engine::{fit, FitLimits};
use crate::error::{GirpError, Result};
use crate::loss::{Loss, LossModel, LossSpec};
use crate::model::{evaluate, select_stopping, validation_curve, validation_split, IsotonicModel, Metric};

pub type Rows = Vec<(Vec<f64>, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Poisson1,
    Poisson2,
    Huber1,
    Huber2,
    Timing,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Poisson1,
        ExperimentKind::Poisson2,
        ExperimentKind::Huber1,
        ExperimentKind::Huber2,
        ExperimentKind::Timing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Poisson1 => "poisson1",
            ExperimentKind::Poisson2 => "poisson2",
            ExperimentKind::Huber1 => "huber1",
            ExperimentKind::Huber2 => "huber2",
            ExperimentKind::Timing => "timing",
        }
    }

    pub fn default_x_range(self) -> (f64, f64) {
        match self {
            ExperimentKind::Poisson1 => (0.0, 10.0),
            ExperimentKind::Poisson2 => (5.0, 10.0),
            ExperimentKind::Huber1 => (0.0, 3.0),
            ExperimentKind::Huber2 => (0.0, 5.0),
            ExperimentKind::Timing => (0.0, 2.0),
        }
    }

    pub fn default_loss(self) -> LossSpec {
        match self {
            ExperimentKind::Poisson1 | ExperimentKind::Poisson2 => LossSpec::Fixed(LossModel::PoissonNll),
            _ => LossSpec::HuberAuto,
        }
    }

    pub fn is_count(self) -> bool {
        matches!(self, ExperimentKind::Poisson1 | ExperimentKind::Poisson2)
    }

    /// Test metric reported for this simulation.
    pub fn metric(self) -> Metric {
        if self.is_count() {
            Metric::NegPoissonLL
        } else {
            Metric::Mse
        }
    }

    fn has_outliers(self) -> bool {
        !self.is_count()
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = GirpError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GirpError::UnknownExperiment(s.to_string()))
    }
}

pub const OUTLIER_FRACTION: f64 = 0.005;
pub const OUTLIER_FACTOR: f64 = 20.0;

/// Draw `n` rows from the simulation model, without outliers.
pub fn generate<R: Rng>(kind: ExperimentKind, d: usize, n: usize, x_range: (f64, f64), rng: &mut R) -> Rows {
    let (lo, hi) = x_range;
    let df = d as f64;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
        let product: f64 = x.iter().product();
        let squares: f64 = x.iter().map(|v| v * v).sum();
        let y = match kind {
            ExperimentKind::Poisson1 => poisson_draw(x.iter().map(|v| v.sqrt()).product(), rng),
            ExperimentKind::Poisson2 => poisson_draw(squares, rng),
            ExperimentKind::Huber1 | ExperimentKind::Timing => product + gaussian(df, rng),
            ExperimentKind::Huber2 => squares + gaussian(1.5 * df, rng),
        };
        rows.push((x, y));
    }
    rows
}

fn poisson_draw<R: Rng>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng)
}

fn gaussian<R: Rng>(sd: f64, rng: &mut R) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

/// Multiply a random `fraction` of the responses by `factor`; returns the
/// chosen row indices.
pub fn insert_outliers<R: Rng>(rows: &mut [(Vec<f64>, f64)], fraction: f64, factor: f64, rng: &mut R) -> Vec<usize> {
    let m = (rows.len() as f64 * fraction).round() as usize;
    let mut idx = rand::seq::index::sample(rng, rows.len(), m.min(rows.len())).into_vec();
    idx.sort_unstable();
    for &i in &idx {
        rows[i].1 *= factor;
    }
    idx
}

/// Column means and standard deviations, guarding constant columns.
fn standardizer(rows: &[(Vec<f64>, f64)]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].0.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for (x, _) in rows {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for (x, _) in rows {
        for j in 0..d {
            sd[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut sd {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

/// Linear model on standardized covariates, `β_0 + Σ β_j z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    mean: Vec<f64>,
    sd: Vec<f64>,
    beta: Vec<f64>,
    log_link: bool,
}

impl LinearModel {
    fn eta(&self, x: &[f64]) -> f64 {
        self.beta[0]
            + x.iter()
                .zip(&self.mean)
                .zip(&self.sd)
                .zip(&self.beta[1..])
                .map(|(((v, m), s), b)| b * (v - m) / s)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.eta(x);
        if self.log_link {
            eta.exp()
        } else {
            eta
        }
    }

    pub fn evaluate(&self, rows: &[(Vec<f64>, f64)], metric: Metric) -> f64 {
        rows.iter().map(|(x, y)| metric.point(self.predict(x), *y)).sum::<f64>() / rows.len() as f64
    }
}

fn design(rows: &[(Vec<f64>, f64)], mean: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|(x, _)| {
            std::iter::once(1.0)
                .chain(x.iter().zip(mean).zip(sd).map(|((v, m), s)| (v - m) / s))
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Gradient descent with backtracking on a smooth convex objective over
/// the design rows; `point(eta, y)` returns the loss and its `eta` derivative.
fn descend(
    z: &[Vec<f64>],
    ys: &[f64],
    mut beta: Vec<f64>,
    iterations: usize,
    point: impl Fn(f64, f64) -> (f64, f64),
) -> Vec<f64> {
    let n = z.len() as f64;
    let objective = |b: &[f64]| -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; b.len()];
        for (row, &y) in z.iter().zip(ys) {
            let (l, dl) = point(dot(row, b), y);
            f += l / n;
            for (gj, zj) in g.iter_mut().zip(row) {
                *gj += dl * zj / n;
            }
        }
        (f, g)
    };
    let mut step = 1.0;
    let (mut f, mut g) = objective(&beta);
    for _ in 0..iterations {
        let gg = dot(&g, &g);
        if gg <= 1e-24 {
            break;
        }
        loop {
            let trial: Vec<f64> = beta.iter().zip(&g).map(|(b, gj)| b - step * gj).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && ft <= f - 0.5 * step * gg {
                beta = trial;
                f = ft;
                g = gt;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return beta;
            }
        }
    }
    beta
}

/// Linear regression under Huber loss.
pub fn huber_regression(rows: &[(Vec<f64>, f64)], delta: f64) -> LinearModel {
    let (mean, sd) = standardizer(rows);
    let z = design(rows, &mean, &sd);
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut start = vec![0.0; z[0].len()];
    start[0] = crate::loss::LossModel::Huber { delta }
        .group_weight(&ys)
        .map(|w| w.value)
        .unwrap_or(0.0);
    let huber = LossModel::Huber { delta };
    let beta = descend(&z, &ys, start, 2000, |eta, y| (huber.value(eta, y), huber.derivative(eta, y)));
    LinearModel {
        mean,
        sd,
        beta,
        log_link: false,
    }
}

/// Poisson regression with log link.
pub fn poisson_regression(rows: &[(Vec<f64>, f64)]) -> LinearModel {
    let (mean, sd) = standardizer(rows);
    let z = design(rows, &mean, &sd);
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut start = vec![0.0; z[0].len()];
    start[0] = (ys.iter().sum::<f64>() / ys.len() as f64).max(1e-9).ln();
    let beta = descend(&z, &ys, start, 2000, |eta, y| (eta.exp() - y * eta, eta.exp() - y));
    LinearModel {
        mean,
        sd,
        beta,
        log_link: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub valid_frac: f64,
    pub x_range: Option<(f64, f64)>,
    pub loss: Option<LossSpec>,
    pub reduce: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, d: usize) -> Self {
        ExperimentConfig {
            kind,
            d,
            n_train: 1200,
            n_test: 300,
            seeds: 20,
            base_seed: 0,
            valid_frac: 0.2,
            x_range: None,
            loss: None,
            reduce: true,
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range.unwrap_or(self.kind.default_x_range())
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_train < 2 || self.n_test == 0 || self.seeds == 0 {
            return Err(GirpError::InvalidArgument(
                "d, n_train (>= 2), n_test and seeds must be positive".into(),
            ));
        }
        let (lo, hi) = self.x_range();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GirpError::InvalidArgument(format!("bad x range [{lo}, {hi}]")));
        }
        if self.kind.is_count() && lo < 0.0 {
            return Err(GirpError::InvalidArgument("count simulations need x >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub loss: LossModel,
    /// Test metric of the model selected on validation data.
    pub min_path_metric: f64,
    pub final_metric: f64,
    pub baseline_metric: f64,
    /// Number of splits in the selected model.
    pub min_path_index: usize,
    /// Number of splits in the final model.
    pub path_length: usize,
    pub validation_curve: Vec<f64>,
    pub fit_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metric: Metric,
    pub seeds: Vec<SeedResult>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

impl ExperimentReport {
    fn column(&self, f: impl Fn(&SeedResult) -> f64) -> Vec<f64> {
        self.seeds.iter().map(f).collect()
    }

    pub fn median_min_path(&self) -> f64 {
        median(&self.column(|s| s.min_path_metric))
    }

    pub fn median_final(&self) -> f64 {
        median(&self.column(|s| s.final_metric))
    }

    pub fn median_baseline(&self) -> f64 {
        median(&self.column(|s| s.baseline_metric))
    }

    /// Share of seeds whose selected model stops before the end of the path.
    pub fn early_stop_share(&self) -> f64 {
        let early = self.seeds.iter().filter(|s| s.min_path_index < s.path_length).count();
        early as f64 / self.seeds.len() as f64
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        let (lo, hi) = c.x_range();
        writeln!(
            f,
            "experiment={} d={} n_train={} n_test={} seeds={} valid_frac={} x_range=[{lo},{hi}] metric={}",
            c.kind, c.d, c.n_train, c.n_test, c.seeds, c.valid_frac, self.metric
        )?;
        writeln!(
            f,
            "{:>6} {:>24} {:>16} {:>16} {:>16} {:>14} {:>11} {:>10}",
            "seed", "loss", "min_path_metric", "final_metric", "baseline_metric", "min_path_index", "path_length", "fit_secs"
        )?;
        for s in &self.seeds {
            writeln!(
                f,
                "{:>6} {:>24} {:>16.6} {:>16.6} {:>16.6} {:>14} {:>11} {:>10.3}",
                s.seed,
                s.loss.to_string(),
                s.min_path_metric,
                s.final_metric,
                s.baseline_metric,
                s.min_path_index,
                s.path_length,
                s.fit_time.as_secs_f64()
            )?;
        }
        writeln!(f, "median_min_path_metric={:.6}", self.median_min_path())?;
        writeln!(f, "median_final_metric={:.6}", self.median_final())?;
        writeln!(f, "median_baseline_metric={:.6}", self.median_baseline())?;
        writeln!(
            f,
            "median_min_path_index={}",
            median(&self.column(|s| s.min_path_index as f64))
        )?;
        writeln!(f, "median_path_length={}", median(&self.column(|s| s.path_length as f64)))?;
        write!(f, "early_stop_share={:.3}", self.early_stop_share())
    }
}

/// Training and test rows for one seed; outliers go into the training rows.
pub fn simulate(config: &ExperimentConfig, seed: u64) -> (Rows, Rows) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = config.x_range();
    let mut train = generate(config.kind, config.d, config.n_train, range, &mut rng);
    let test = generate(config.kind, config.d, config.n_test, range, &mut rng);
    if config.kind.has_outliers() {
        insert_outliers(&mut train, OUTLIER_FRACTION, OUTLIER_FACTOR, &mut rng);
    }
    (train, test)
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let (train, test) = simulate(config, seed);
    let (sub_idx, valid_idx) = validation_split(train.len(), config.valid_frac, seed)?;
    let sub: Rows = sub_idx.iter().map(|&i| train[i].clone()).collect();
    let valid: Rows = valid_idx.iter().map(|&i| train[i].clone()).collect();

    let spec = config.loss.unwrap_or(config.kind.default_loss());
    let sub_y: Vec<f64> = sub.iter().map(|r| r.1).collect();
    let loss = spec.resolve(&sub_y)?;
    let metric = config.kind.metric();

    let dataset = Dataset::ingest_with(&sub, config.reduce)?;
    let start = Instant::now();
    let path = fit(&dataset, &loss, FitLimits::default())?;
    let fit_time = start.elapsed();

    let curve = if valid.is_empty() {
        validation_curve(&dataset, &path, &sub, metric)?
    } else {
        validation_curve(&dataset, &path, &valid, metric)?
    };
    let selected = select_stopping(&curve).expect("nonempty path");
    let min_model = IsotonicModel::from_path(&dataset, &path, selected)?;
    let final_model = IsotonicModel::from_path(&dataset, &path, path.last_k())?;

    let baseline = if config.kind.is_count() {
        poisson_regression(&train)
    } else {
        let ys: Vec<f64> = train.iter().map(|r| r.1).collect();
        let delta = match LossSpec::HuberAuto.resolve(&ys)? {
            LossModel::Huber { delta } => delta,
            _ => unreachable!("huber spec resolves to huber"),
        };
        huber_regression(&train, delta)
    };

    Ok(SeedResult {
        seed,
        loss,
        min_path_metric: evaluate(&min_model, &test, metric)?,
        final_metric: evaluate(&final_model, &test, metric)?,
        baseline_metric: baseline.evaluate(&test, metric),
        min_path_index: selected,
        path_length: path.last_k(),
        validation_curve: curve,
        fit_time,
    })
}

/// Run every seed on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.kind == ExperimentKind::Timing {
        return Err(GirpError::InvalidArgument(
            "the timing experiment reports wall time; use run_timing".into(),
        ));
    }
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|s| config.base_seed + s).collect();
    let results = seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        metric: config.kind.metric(),
        seeds: results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingResult {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub loss: LossModel,
    pub elapsed: Duration,
    pub splits: usize,
    pub optimal: bool,
}

impl fmt::Display for TimingResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} d={} seed={} loss={} splits={} optimal={} seconds={:.3}",
            self.n,
            self.d,
            self.seed,
            self.loss,
            self.splits,
            self.optimal,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Fit one timing-simulation data set to completion and report the wall time.
pub fn run_timing(n: usize, d: usize, loss: LossSpec, seed: u64) -> Result<TimingResult> {
    let mut config = ExperimentConfig::new(ExperimentKind::Timing, d);
    config.n_train = n;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = generate(ExperimentKind::Timing, d, n, config.x_range(), &mut rng);
    insert_outliers(&mut rows, OUTLIER_FRACTION, OUTLIER_FACTOR, &mut rng);
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let loss = loss.resolve(&ys)?;
    let start = Instant::now();
    let dataset = Dataset::ingest(&rows)?;
    let path = fit(&dataset, &loss, FitLimits::default())?;
    let elapsed = start.elapsed();
    Ok(TimingResult {
        n,
        d,
        seed,
        loss,
        elapsed,
        splits: path.last_k(),
        optimal: path.is_optimal(),
    })
}

//! Convex differentiable separable losses and the group-weight problem.
//!
//! A loss is described per observation: `f_i(fit) = g(fit, y_i)`. The weight
//! of a group is the minimizer of the summed loss over the group's responses.

use std::fmt;
use std::str::FromStr;

use crate::error::{GirpError, Result};

/// Distance kept from an open domain boundary when a minimizer does not exist.
pub const DOMAIN_EPS: f64 = 1e-9;

/// Open interval of admissible fit values. Infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const REAL: Domain = Domain {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v > self.lo && v < self.hi
    }
}

/// Minimizer of a group's summed loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupWeight {
    pub value: f64,
    /// Set when the summed derivative vanishes on a whole interval.
    pub flat_interval: Option<(f64, f64)>,
    /// The value sits on a clamped domain boundary rather than a stationary point.
    #[serde(default)]
    pub clamped: bool,
}

impl GroupWeight {
    pub fn point(value: f64) -> Self {
        GroupWeight {
            value,
            flat_interval: None,
            clamped: false,
        }
    }
}

/// A convex differentiable per-observation loss.
///
/// Implementors provide `value`, `derivative` and `domain`; a closed-form
/// group weight is optional; the default solver is bisection on the summed
/// derivative over `[min y, max y]`.
pub trait Loss: Send + Sync {
    fn name(&self) -> String;

    fn domain(&self) -> Domain;

    /// `g(fit, y)`. Callers guarantee `fit` lies in the domain.
    fn value(&self, fit: f64, y: f64) -> f64;

    /// `∂g/∂fit` at `(fit, y)`. Nondecreasing in `fit`.
    fn derivative(&self, fit: f64, y: f64) -> f64;

    /// Reject responses the loss cannot model.
    fn check_response(&self, y: f64) -> Result<()> {
        if y.is_finite() {
            Ok(())
        } else {
            Err(self.out_of_range(y))
        }
    }

    /// Range group weights are clamped into.
    fn weight_bounds(&self) -> (f64, f64) {
        let d = self.domain();
        let lo = if d.lo.is_finite() { d.lo + DOMAIN_EPS } else { d.lo };
        let hi = if d.hi.is_finite() { d.hi - DOMAIN_EPS } else { d.hi };
        (lo, hi)
    }

    fn closed_form_weight(&self, _responses: &[f64]) -> Option<GroupWeight> {
        None
    }

    fn out_of_range(&self, y: f64) -> GirpError {
        GirpError::ResponseOutOfRange {
            loss: self.name(),
            value: y,
        }
    }

    fn try_value(&self, fit: f64, y: f64) -> Result<f64> {
        self.check_fit(fit)?;
        Ok(self.value(fit, y))
    }

    fn try_derivative(&self, fit: f64, y: f64) -> Result<f64> {
        self.check_fit(fit)?;
        Ok(self.derivative(fit, y))
    }

    fn check_fit(&self, fit: f64) -> Result<()> {
        if self.domain().contains(fit) {
            Ok(())
        } else {
            Err(GirpError::OutsideDomain {
                loss: self.name(),
                value: fit,
            })
        }
    }

    fn summed_derivative(&self, fit: f64, responses: &[f64]) -> f64 {
        responses.iter().map(|&y| self.derivative(fit, y)).sum()
    }

    fn summed_value(&self, fit: f64, responses: &[f64]) -> f64 {
        responses.iter().map(|&y| self.value(fit, y)).sum()
    }

    /// Weight of a group with the given raw responses.
    fn group_weight(&self, responses: &[f64]) -> Result<GroupWeight> {
        if responses.is_empty() {
            return Err(GirpError::Empty);
        }
        for &y in responses {
            self.check_response(y)?;
        }
        if let Some(w) = self.closed_form_weight(responses) {
            return Ok(w);
        }
        Ok(bisect_weight(self, responses))
    }
}

/// Root of the summed derivative on `[min y, max y]`, bisected to the
/// floating-point resolution of the bracket.
pub fn bisect_weight<L: Loss + ?Sized>(loss: &L, responses: &[f64]) -> GroupWeight {
    let (blo, bhi) = loss.weight_bounds();
    let mut lo = responses.iter().copied().fold(f64::INFINITY, f64::min).clamp(blo, bhi);
    let mut hi = responses
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(blo, bhi);
    let s_lo = loss.summed_derivative(lo, responses);
    let s_hi = loss.summed_derivative(hi, responses);
    assert!(
        s_lo <= 0.0 || lo == blo,
        "summed derivative positive at the lower bracket end ({s_lo})"
    );
    assert!(
        s_hi >= 0.0 || hi == bhi,
        "summed derivative negative at the upper bracket end ({s_hi})"
    );
    if s_lo >= 0.0 {
        return GroupWeight {
            value: lo,
            flat_interval: None,
            clamped: s_lo > 0.0,
        };
    }
    if s_hi <= 0.0 {
        return GroupWeight {
            value: hi,
            flat_interval: None,
            clamped: s_hi < 0.0,
        };
    }
    let (mut f_lo, mut f_hi) = (s_lo, s_hi);
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = loss.summed_derivative(mid, responses);
        if s == 0.0 {
            return GroupWeight::point(mid);
        }
        if s < 0.0 {
            lo = mid;
            f_lo = s;
        } else {
            hi = mid;
            f_hi = s;
        }
    }
    GroupWeight::point(if -f_lo <= f_hi { lo } else { hi })
}

/// The shipped loss families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossModel {
    /// `(fit - y)^2`
    SquaredError,
    /// `(fit - y)^2 / 2` inside `delta`, linear outside.
    Huber { delta: f64 },
    /// `fit - y ln(fit)` on the rate scale.
    PoissonNll,
    /// `-y ln(fit) - (1 - y) ln(1 - fit)` on the probability scale.
    BernoulliNll,
    /// `|fit - y|^p` with `1 < p < 2`.
    PNorm { p: f64 },
    /// `e^eta - y eta`: Poisson likelihood in the natural (log) parameter.
    LogPoisson,
}

impl LossModel {
    pub fn huber(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(GirpError::InvalidLoss(format!("huber delta must be positive, got {delta}")));
        }
        Ok(LossModel::Huber { delta })
    }

    pub fn pnorm(p: f64) -> Result<Self> {
        if !(p > 1.0 && p < 2.0) {
            return Err(GirpError::InvalidLoss(format!("pnorm p must lie in (1, 2), got {p}")));
        }
        Ok(LossModel::PNorm { p })
    }
}

fn mean(responses: &[f64]) -> f64 {
    responses.iter().sum::<f64>() / responses.len() as f64
}

fn clamped_mean(responses: &[f64], lo: f64, hi: f64) -> GroupWeight {
    let m = mean(responses);
    let v = m.clamp(lo, hi);
    GroupWeight {
        value: v,
        flat_interval: None,
        clamped: v != m,
    }
}

impl Loss for LossModel {
    fn name(&self) -> String {
        match self {
            LossModel::SquaredError => "l2",
            LossModel::Huber { .. } => "huber",
            LossModel::PoissonNll => "poisson",
            LossModel::BernoulliNll => "bernoulli",
            LossModel::PNorm { .. } => "pnorm",
            LossModel::LogPoisson => "poisson-log",
        }
        .to_string()
    }

    fn domain(&self) -> Domain {
        match self {
            LossModel::PoissonNll => Domain {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            LossModel::BernoulliNll => Domain { lo: 0.0, hi: 1.0 },
            _ => Domain::REAL,
        }
    }

    fn value(&self, fit: f64, y: f64) -> f64 {
        match *self {
            LossModel::SquaredError => (fit - y) * (fit - y),
            LossModel::Huber { delta } => {
                let r = (fit - y).abs();
                if r < delta {
                    0.5 * r * r
                } else {
                    delta * (r - 0.5 * delta)
                }
            }
            LossModel::PoissonNll => {
                if y == 0.0 {
                    fit
                } else {
                    fit - y * fit.ln()
                }
            }
            LossModel::BernoulliNll => {
                let mut v = 0.0;
                if y != 0.0 {
                    v -= y * fit.ln();
                }
                if y != 1.0 {
                    v -= (1.0 - y) * (1.0 - fit).ln();
                }
                v
            }
            LossModel::PNorm { p } => (fit - y).abs().powf(p),
            LossModel::LogPoisson => fit.exp() - y * fit,
        }
    }

    fn derivative(&self, fit: f64, y: f64) -> f64 {
        match *self {
            LossModel::SquaredError => 2.0 * (fit - y),
            LossModel::Huber { delta } => (fit - y).clamp(-delta, delta),
            LossModel::PoissonNll => 1.0 - y / fit,
            LossModel::BernoulliNll => -y / fit + (1.0 - y) / (1.0 - fit),
            LossModel::PNorm { p } => {
                let r = fit - y;
                (p * r.abs().powf(p - 1.0)).copysign(r)
            }
            LossModel::LogPoisson => fit.exp() - y,
        }
    }

    fn check_response(&self, y: f64) -> Result<()> {
        let ok = y.is_finite()
            && match self {
                LossModel::PoissonNll | LossModel::LogPoisson => y >= 0.0,
                LossModel::BernoulliNll => (0.0..=1.0).contains(&y),
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(self.out_of_range(y))
        }
    }

    fn weight_bounds(&self) -> (f64, f64) {
        match self {
            LossModel::PoissonNll => (DOMAIN_EPS, f64::INFINITY),
            LossModel::BernoulliNll => (DOMAIN_EPS, 1.0 - DOMAIN_EPS),
            LossModel::LogPoisson => (DOMAIN_EPS.ln(), f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn closed_form_weight(&self, responses: &[f64]) -> Option<GroupWeight> {
        match *self {
            LossModel::SquaredError => Some(GroupWeight::point(mean(responses))),
            LossModel::PoissonNll => Some(clamped_mean(responses, DOMAIN_EPS, f64::INFINITY)),
            LossModel::BernoulliNll => Some(clamped_mean(responses, DOMAIN_EPS, 1.0 - DOMAIN_EPS)),
            LossModel::LogPoisson => {
                let m = mean(responses);
                Some(GroupWeight {
                    value: m.max(DOMAIN_EPS).ln(),
                    flat_interval: None,
                    clamped: m < DOMAIN_EPS,
                })
            }
            LossModel::Huber { delta } => Some(huber_weight(responses, delta)),
            LossModel::PNorm { .. } => None,
        }
    }
}

/// Exact root of `S(w) = Σ clip(w - y_i, -δ, δ)`.
///
/// `S` is nondecreasing and piecewise linear with kinks at `y_i ± δ`, so the
/// root is found by locating the bracketing kinks and interpolating. A zero
/// run between kinks is reported as the flat interval.
fn huber_weight(responses: &[f64], delta: f64) -> GroupWeight {
    let ymin = responses.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ymin == ymax {
        return GroupWeight::point(ymin);
    }
    let s = |w: f64| -> f64 { responses.iter().map(|&y| (w - y).clamp(-delta, delta)).sum() };
    let mut knots: Vec<f64> = Vec::with_capacity(2 * responses.len() + 2);
    knots.push(ymin);
    knots.push(ymax);
    for &y in responses {
        for k in [y - delta, y + delta] {
            if k > ymin && k < ymax {
                knots.push(k);
            }
        }
    }
    knots.sort_unstable_by(f64::total_cmp);
    knots.dedup();
    let tol = 1e-12 * delta * responses.len() as f64;

    // First knot with S >= -tol; exists because S(ymax) >= 0.
    let first = knots.partition_point(|&k| s(k) < -tol);
    let first = first.min(knots.len() - 1);
    let s_first = s(knots[first]);
    if s_first > tol {
        // Strictly inside a linear piece.
        let (a, b) = (knots[first - 1], knots[first]);
        let (sa, sb) = (s(a), s_first);
        let w = a + (-sa) * (b - a) / (sb - sa);
        return GroupWeight::point(w.clamp(a, b));
    }
    // S is (numerically) zero at knots[first]; extend over the zero run.
    let last = knots.partition_point(|&k| s(k) <= tol) - 1;
    if last > first {
        let (lo, hi) = (knots[first], knots[last]);
        GroupWeight {
            value: 0.5 * (lo + hi),
            flat_interval: Some((lo, hi)),
            clamped: false,
        }
    } else {
        GroupWeight::point(knots[first])
    }
}

impl fmt::Display for LossModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossModel::Huber { delta } => write!(f, "huber:delta={delta}"),
            LossModel::PNorm { p } => write!(f, "pnorm:p={p}"),
            other => f.write_str(&other.name()),
        }
    }
}

/// A parsed `--loss` argument. Huber's delta may be left to the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Fixed(LossModel),
    /// Huber with delta set to one standard deviation of the training responses.
    HuberAuto,
}

impl LossSpec {
    pub fn resolve(&self, responses: &[f64]) -> Result<LossModel> {
        match self {
            LossSpec::Fixed(m) => Ok(*m),
            LossSpec::HuberAuto => {
                let sd = std_dev(responses);
                LossModel::huber(if sd > 0.0 { sd } else { 1.0 })
            }
        }
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn param(rest: &str, key: &str) -> Result<f64> {
    let (k, v) = rest
        .split_once('=')
        .ok_or_else(|| GirpError::InvalidLoss(format!("expected {key}=<value>, got {rest:?}")))?;
    if k.trim() != key {
        return Err(GirpError::InvalidLoss(format!("unknown parameter {k:?}, expected {key}")));
    }
    v.trim()
        .parse()
        .map_err(|_| GirpError::InvalidLoss(format!("cannot parse {key} value {v:?}")))
}

impl FromStr for LossSpec {
    type Err = GirpError;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h.trim(), Some(r)),
            None => (s.trim(), None),
        };
        let fixed = |m: LossModel| -> Result<LossSpec> {
            if rest.is_some() {
                return Err(GirpError::InvalidLoss(format!("{head} takes no parameters")));
            }
            Ok(LossSpec::Fixed(m))
        };
        match head {
            "l2" => fixed(LossModel::SquaredError),
            "poisson" => fixed(LossModel::PoissonNll),
            "poisson-log" => fixed(LossModel::LogPoisson),
            "bernoulli" => fixed(LossModel::BernoulliNll),
            "huber" => match rest {
                None => Ok(LossSpec::HuberAuto),
                Some(r) => Ok(LossSpec::Fixed(LossModel::huber(param(r, "delta")?)?)),
            },
            "pnorm" => match rest {
                None => Err(GirpError::InvalidLoss("pnorm requires p=<value>".into())),
                Some(r) => Ok(LossSpec::Fixed(LossModel::pnorm(param(r, "p")?)?)),
            },
            other => Err(GirpError::InvalidLoss(format!("unknown loss {other:?}"))),
        }
    }
}

impl FromStr for LossModel {
    type Err = GirpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<LossSpec>()? {
            LossSpec::Fixed(m) => Ok(m),
            LossSpec::HuberAuto => Err(GirpError::InvalidLoss("huber requires delta=<value>".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [LossModel; 6] = [
        LossModel::SquaredError,
        LossModel::Huber { delta: 1.0 },
        LossModel::PoissonNll,
        LossModel::BernoulliNll,
        LossModel::PNorm { p: 1.5 },
        LossModel::LogPoisson,
    ];

    #[test]
    fn values() {
        assert_eq!(LossModel::SquaredError.value(3.0, 1.0), 4.0);
        assert_eq!(LossModel::Huber { delta: 1.0 }.value(3.0, 0.0), 2.5);
        let v = LossModel::PoissonNll.value(2.0, 2.0);
        assert!((v - (2.0 - 2.0 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn derivatives() {
        assert_eq!(LossModel::SquaredError.derivative(3.0, 1.0), 4.0);
        assert_eq!(LossModel::Huber { delta: 1.0 }.derivative(3.0, 0.0), 1.0);
        assert_eq!(LossModel::PoissonNll.derivative(2.0, 4.0), -1.0);
    }

    #[test]
    fn domain_checks() {
        assert!(LossModel::PoissonNll.try_value(0.0, 1.0).is_err());
        assert!(LossModel::PoissonNll.try_derivative(-1.0, 1.0).is_err());
        assert!(LossModel::BernoulliNll.try_value(1.0, 1.0).is_err());
        assert!(LossModel::SquaredError.try_value(f64::NAN, 1.0).is_err());
        assert!(LossModel::BernoulliNll.try_derivative(0.5, 1.0).is_ok());
    }

    #[test]
    fn group_weights() {
        let l2 = LossModel::SquaredError.group_weight(&[1.0, 3.0]).unwrap();
        assert_eq!(l2.value, 2.0);
        let p = LossModel::PoissonNll.group_weight(&[2.0, 4.0]).unwrap();
        assert_eq!(p.value, 3.0);
        let h = LossModel::Huber { delta: 5.0 }.group_weight(&[0.0, 1.0]).unwrap();
        assert_eq!(h.value, 0.5);
        assert_eq!(h.flat_interval, None);
    }

    #[test]
    fn huber_flat_interval() {
        let loss = LossModel::Huber { delta: 1.0 };
        let w = loss.group_weight(&[0.0, 4.0]).unwrap();
        assert_eq!(w.value, 2.0);
        assert_eq!(w.flat_interval, Some((1.0, 3.0)));
        // Dense grid scan of the summed loss: minimal exactly on [1, 3].
        let ys = [0.0, 4.0];
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 1e-3).collect();
        let vals: Vec<f64> = grid.iter().map(|&g| loss.summed_value(g, &ys)).collect();
        let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let argmins: Vec<f64> = grid
            .iter()
            .zip(&vals)
            .filter(|(_, &v)| v <= best + 1e-12)
            .map(|(&g, _)| g)
            .collect();
        assert!((argmins[0] - 1.0).abs() < 1e-9);
        assert!((argmins.last().unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn clamping_at_open_boundaries() {
        let p = LossModel::PoissonNll.group_weight(&[0.0, 0.0]).unwrap();
        assert_eq!(p.value, DOMAIN_EPS);
        assert!(p.clamped);
        let b = LossModel::BernoulliNll.group_weight(&[1.0, 1.0]).unwrap();
        assert_eq!(b.value, 1.0 - DOMAIN_EPS);
        assert!(b.clamped);
        let b = LossModel::BernoulliNll.group_weight(&[1.0, 0.0]).unwrap();
        assert_eq!(b.value, 0.5);
        assert!(!b.clamped);
    }

    #[test]
    fn response_ranges() {
        assert!(LossModel::PoissonNll.group_weight(&[1.0, -1.0]).is_err());
        assert!(LossModel::BernoulliNll.group_weight(&[1.5]).is_err());
        assert!(LossModel::SquaredError.group_weight(&[]).is_err());
        let e = LossModel::PoissonNll.group_weight(&[-2.0]).unwrap_err();
        assert!(e.to_string().contains("response out of range for poisson"));
    }

    #[test]
    fn parse_specs() {
        assert_eq!("l2".parse::<LossSpec>().unwrap(), LossSpec::Fixed(LossModel::SquaredError));
        assert_eq!(
            "huber:delta=1.0".parse::<LossSpec>().unwrap(),
            LossSpec::Fixed(LossModel::Huber { delta: 1.0 })
        );
        assert_eq!("huber".parse::<LossSpec>().unwrap(), LossSpec::HuberAuto);
        assert_eq!(
            "pnorm:p=1.5".parse::<LossSpec>().unwrap(),
            LossSpec::Fixed(LossModel::PNorm { p: 1.5 })
        );
        assert!("pnorm:p=2.5".parse::<LossSpec>().is_err());
        assert!("huber:delta=-1".parse::<LossSpec>().is_err());
        assert!("l1".parse::<LossSpec>().is_err());
        assert!("poisson:x=1".parse::<LossSpec>().is_err());
        for m in ALL {
            assert_eq!(m.to_string().parse::<LossModel>().unwrap(), m);
        }
    }

    #[test]
    fn huber_auto_uses_standard_deviation() {
        let ys = [1.0, 2.0, 3.0, 4.0];
        let m = LossSpec::HuberAuto.resolve(&ys).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert_eq!(m, LossModel::Huber { delta: sd });
    }

    fn response_for(loss: LossModel) -> impl Strategy<Value = f64> {
        match loss {
            LossModel::PoissonNll | LossModel::LogPoisson => (0u32..20).prop_map(f64::from).boxed(),
            LossModel::BernoulliNll => (0.0..=1.0f64).boxed(),
            _ => (-10.0..10.0f64).boxed(),
        }
    }

    fn fit_for(loss: LossModel) -> impl Strategy<Value = f64> {
        match loss {
            LossModel::PoissonNll => (0.05..20.0f64).boxed(),
            LossModel::BernoulliNll => (0.02..0.98f64).boxed(),
            LossModel::LogPoisson => (-3.0..3.0f64).boxed(),
            _ => (-10.0..10.0f64).boxed(),
        }
    }

    fn loss_strategy() -> impl Strategy<Value = LossModel> {
        prop_oneof![
            Just(LossModel::SquaredError),
            (0.1..5.0f64).prop_map(|delta| LossModel::Huber { delta }),
            Just(LossModel::PoissonNll),
            Just(LossModel::BernoulliNll),
            (1.05..1.95f64).prop_map(|p| LossModel::PNorm { p }),
            Just(LossModel::LogPoisson),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivative_matches_finite_differences(
            (loss, fit, y) in loss_strategy().prop_flat_map(|l| (Just(l), fit_for(l), response_for(l)))
        ) {
            let h = 1e-6 * fit.abs().max(1e-2);
            // Kinks (Huber at |r| = delta, p-norm at r = 0) have no classical
            // second derivative; keep the stencil off them.
            if let LossModel::Huber { delta } = loss {
                prop_assume!(((fit - y).abs() - delta).abs() > 1e-3);
            }
            if let LossModel::PNorm { .. } = loss {
                prop_assume!((fit - y).abs() > 1e-3);
            }
            let fd = (loss.value(fit + h, y) - loss.value(fit - h, y)) / (2.0 * h);
            let an = loss.derivative(fit, y);
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd {fd} analytic {an}");
        }

        #[test]
        fn derivative_nondecreasing(
            (loss, a, b, y) in loss_strategy().prop_flat_map(|l| (Just(l), fit_for(l), fit_for(l), response_for(l)))
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(loss.derivative(lo, y) <= loss.derivative(hi, y));
        }

        #[test]
        fn weight_minimizes_summed_loss(
            (loss, ys) in loss_strategy().prop_flat_map(|l| (Just(l), prop::collection::vec(response_for(l), 1..12)))
        ) {
            let w = loss.group_weight(&ys).unwrap();
            let (blo, bhi) = loss.weight_bounds();
            let f = loss.summed_value(w.value, &ys);
            for cand in [w.value - 1e-6, w.value + 1e-6] {
                if cand > blo && cand < bhi {
                    prop_assert!(f <= loss.summed_value(cand, &ys) + 1e-12 * f.abs().max(1.0));
                }
            }
            if !w.clamped {
                // The summed derivative changes sign across the weight. A
                // residual bound would fail for p-norms near 1, whose
                // derivative is steep at zero.
                let h = 1e-12 * w.value.abs().max(1.0);
                let tol = 1e-9 * ys.len() as f64;
                prop_assert!(loss.summed_derivative(w.value - h, &ys) <= tol);
                prop_assert!(loss.summed_derivative(w.value + h, &ys) >= -tol);
            }
        }

        #[test]
        fn weight_is_monotone_in_responses(
            (loss, ys, bump) in loss_strategy().prop_flat_map(|l| (Just(l), prop::collection::vec(response_for(l), 1..12), 0.0..5.0f64))
        ) {
            let w = loss.group_weight(&ys).unwrap().value;
            let mut extra = match loss {
                LossModel::BernoulliNll => (w + bump).min(1.0),
                LossModel::LogPoisson => w.exp() + bump,
                _ => w + bump,
            };
            if matches!(loss, LossModel::PoissonNll | LossModel::LogPoisson) {
                extra = extra.max(0.0);
            }
            let mut more = ys.clone();
            more.push(extra);
            let w2 = loss.group_weight(&more).unwrap().value;
            prop_assert!(w2 >= w - 1e-12 * w.abs().max(1.0), "{w} -> {w2}");
        }

        #[test]
        fn squared_error_weight_is_the_mean(ys in prop::collection::vec(-100.0..100.0f64, 1..30)) {
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            prop_assert_eq!(LossModel::SquaredError.group_weight(&ys).unwrap().value, m);
        }
    }

    #[test]
    fn bisection_default_for_user_loss() {
        struct Cosh;
        impl Loss for Cosh {
            fn name(&self) -> String {
                "cosh".into()
            }
            fn domain(&self) -> Domain {
                Domain::REAL
            }
            fn value(&self, fit: f64, y: f64) -> f64 {
                (fit - y).cosh()
            }
            fn derivative(&self, fit: f64, y: f64) -> f64 {
                (fit - y).sinh()
            }
        }
        let w = Cosh.group_weight(&[0.0, 1.0, 3.0]).unwrap();
        assert!(Cosh.summed_derivative(w.value, &[0.0, 1.0, 3.0]).abs() < 1e-12);
        assert!(w.value > 1.0 && w.value < 3.0);
    }
}

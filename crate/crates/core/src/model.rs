//! Observations of a learning curve and the power-family accuracy pattern
//! `y(x) = c - a * x^(-b)` used to fit them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Minimum number of observations needed to pin down a three-parameter trend.
pub const MIN_LEVEL: usize = 3;

/// One point of a learning curve: accuracy (percent) after training on
/// `position` items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub position: u64,
    pub accuracy: f64,
}

impl Observation {
    pub fn new(position: u64, accuracy: f64) -> Result<Self> {
        if position == 0 {
            return Err(domain("observation position must be >= 1"));
        }
        if !accuracy.is_finite() || accuracy <= 0.0 || accuracy > 100.0 {
            return Err(domain(format!(
                "accuracy {accuracy} at position {position} is outside (0, 100]"
            )));
        }
        Ok(Self { position, accuracy })
    }
}

/// Observations taken on an incremental cover of a training set: a kernel of
/// `kernel_size` items grown by `step` items per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    points: Vec<Observation>,
    kernel_size: u64,
    step: u64,
}

impl ObservationSeries {
    pub fn new(kernel_size: u64, step: u64) -> Result<Self> {
        if kernel_size == 0 || step == 0 {
            return Err(domain("kernel size and step must be positive"));
        }
        Ok(Self {
            points: Vec::new(),
            kernel_size,
            step,
        })
    }

    /// Builds a series from arbitrary ascending observations. The kernel is
    /// taken to be the first position and the step the first gap.
    pub fn from_points(points: Vec<Observation>) -> Result<Self> {
        let kernel_size = points.first().map_or(1, |p| p.position);
        let step = match points.as_slice() {
            [p, q, ..] => q.position.saturating_sub(p.position).max(1),
            _ => kernel_size,
        };
        let mut series = Self::new(kernel_size, step)?;
        for p in points {
            series.push(p)?;
        }
        Ok(series)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        let obs = Observation::new(obs.position, obs.accuracy)?;
        if let Some(last) = self.points.last() {
            if obs.position <= last.position {
                return Err(Error::Sequencing(format!(
                    "position {} does not follow {}",
                    obs.position, last.position
                )));
            }
        } else if obs.position < self.kernel_size {
            return Err(domain(format!(
                "first position {} is smaller than the kernel size {}",
                obs.position, self.kernel_size
            )));
        }
        self.points.push(obs);
        Ok(())
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    /// The first `level` observations.
    pub fn prefix(&self, level: usize) -> &[Observation] {
        &self.points[..level.min(self.points.len())]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kernel_size(&self) -> u64 {
        self.kernel_size
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Position of the observation closing `level` (1-based).
    pub fn position_of(&self, level: usize) -> Option<u64> {
        level
            .checked_sub(1)
            .and_then(|i| self.points.get(i))
            .map(|p| p.position)
    }
}

/// A configuration `(a, b, c)` of the power family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PowerLawParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(domain("power-law parameters must be finite"));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(domain(format!("need a > 0 and b > 0, got a={a}, b={b}")));
        }
        Ok(Self { a, b, c })
    }

    /// `a * x^(-b)`, the distance to the asymptote at `x`.
    pub fn gap(&self, x: f64) -> f64 {
        (self.a.ln() - self.b * x.ln()).exp()
    }
}

pub fn eval_pattern(params: &PowerLawParams, x: f64) -> Result<f64> {
    check_position(x)?;
    Ok(params.c - params.gap(x))
}

/// First derivative `a * b * x^(-(b+1))`.
pub fn pattern_slope(params: &PowerLawParams, x: f64) -> Result<f64> {
    check_position(x)?;
    Ok(params.b * params.gap(x) / x)
}

pub fn asymptote(params: &PowerLawParams) -> f64 {
    params.c
}

fn check_position(x: f64) -> Result<()> {
    if x.is_nan() || x <= 0.0 {
        Err(domain(format!("position must be positive, got {x}")))
    } else {
        Ok(())
    }
}

/// The pattern fitted on the first `level` observations of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrend {
    pub level: usize,
    /// Position of the observation closing this level.
    pub position: u64,
    pub params: PowerLawParams,
    /// Observed minus fitted, one per observation in the prefix.
    pub residuals: Vec<f64>,
    /// Anchor accuracy at infinity, when the trend was fitted with one.
    pub anchor: Option<f64>,
    /// `anchor - c`, the residual at the point of infinity.
    pub anchor_residual: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
}

impl LearningTrend {
    pub fn asymptote(&self) -> f64 {
        self.params.c
    }

    pub fn is_anchored(&self) -> bool {
        self.anchor.is_some()
    }

    pub fn residual_sum(&self) -> f64 {
        self.residuals.iter().sum::<f64>()
    }

    pub fn value_at(&self, x: f64) -> Result<f64> {
        eval_pattern(&self.params, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REF_CURVE: PowerLawParams = PowerLawParams {
        a: 542.5451,
        b: 0.3838,
        c: 99.2876,
    };

    #[test]
    fn unit_curve_at_one() {
        let p = PowerLawParams::new(1.0, 1.0, 100.0).unwrap();
        assert_eq!(eval_pattern(&p, 1.0).unwrap(), 99.0);
        assert_eq!(pattern_slope(&p, 1.0).unwrap(), 1.0);
        assert_eq!(asymptote(&p), 100.0);
    }

    #[test]
    fn reference_limit_and_value() {
        assert_eq!(asymptote(&REF_CURVE), 99.2876);
        let far = eval_pattern(&REF_CURVE, 1e200).unwrap();
        assert!((far - 99.2876).abs() < 1e-12);
        // 542.5451 * 800000^-0.3838 evaluated independently with ln/exp in f64
        let direct = 99.2876 - 542.5451 * (800000f64).powf(-0.3838);
        let v = eval_pattern(&REF_CURVE, 800_000.0).unwrap();
        assert!((v - direct).abs() < 1e-12);
        assert!((v - 96.35).abs() < 0.01, "{v}");
    }

    #[test]
    fn slope_hand_value() {
        let p = PowerLawParams::new(2.0, 0.5, 99.0).unwrap();
        assert!((pattern_slope(&p, 4.0).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn asymptote_is_projection() {
        let p = PowerLawParams::new(5.0, 2.0, 87.3).unwrap();
        assert_eq!(asymptote(&p), 87.3);
    }

    #[test]
    fn domain_errors() {
        assert!(eval_pattern(&REF_CURVE, 0.0).is_err());
        assert!(eval_pattern(&REF_CURVE, -3.0).is_err());
        assert!(pattern_slope(&REF_CURVE, 0.0).is_err());
        assert!(PowerLawParams::new(-1.0, 1.0, 90.0).is_err());
        assert!(PowerLawParams::new(1.0, 0.0, 90.0).is_err());
    }

    #[test]
    fn slope_matches_finite_difference() {
        for x in [10.0, 1e3, 1e5] {
            let h = x * 1e-5;
            let fd = (eval_pattern(&REF_CURVE, x + h).unwrap() - eval_pattern(&REF_CURVE, x - h).unwrap())
                / (2.0 * h);
            let s = pattern_slope(&REF_CURVE, x).unwrap();
            assert!(((fd - s) / s).abs() < 1e-6, "x={x} fd={fd} s={s}");
        }
    }

    #[test]
    fn series_rejects_bad_input() {
        let mut s = ObservationSeries::new(5000, 5000).unwrap();
        assert!(s.push(Observation { position: 4000, accuracy: 90.0 }).is_err());
        s.push(Observation::new(5000, 90.0).unwrap()).unwrap();
        assert!(s.push(Observation { position: 5000, accuracy: 91.0 }).is_err());
        assert!(s.push(Observation { position: 10000, accuracy: 100.5 }).is_err());
        assert!(s.push(Observation { position: 10000, accuracy: 0.0 }).is_err());
        assert_eq!(s.position_of(1), Some(5000));
        assert_eq!(s.position_of(0), None);
    }

    fn params() -> impl Strategy<Value = PowerLawParams> {
        (0.01f64..1000.0, 0.05f64..2.0, 50.0f64..100.0)
            .prop_map(|(a, b, c)| PowerLawParams { a, b, c })
    }

    proptest! {
        #[test]
        fn increasing_and_bounded(p in params(), x1 in 1.0f64..1e6, dx in 1.0f64..1e6) {
            let x2 = x1 + dx;
            let y1 = eval_pattern(&p, x1).unwrap();
            let y2 = eval_pattern(&p, x2).unwrap();
            prop_assert!(y1 <= y2);
            prop_assert!(y2 < p.c);
        }

        #[test]
        fn concave(p in params(), x in 1.0f64..1e4, h in 1.0f64..1e3) {
            let y0 = eval_pattern(&p, x).unwrap();
            let y1 = eval_pattern(&p, x + h).unwrap();
            let y2 = eval_pattern(&p, x + 2.0 * h).unwrap();
            // gaps are compared directly to avoid cancellation against c
            let g0 = p.gap(x) - p.gap(x + h);
            let g1 = p.gap(x + h) - p.gap(x + 2.0 * h);
            prop_assert!(g0 >= g1);
            prop_assert!(y1 - y0 >= -1e-12 && y2 - y1 >= -1e-12);
        }
    }
}

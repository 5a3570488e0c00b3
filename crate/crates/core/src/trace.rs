//! The learning trace: one fitted trend per level, its asymptotic backbone,
//! layers of convergence, trend crossings and the correctness bound.

use serde::{Deserialize, Serialize};

use crate::anchoring::{build_trend, next_canonical_anchor, AnchorPolicy};
use crate::error::{domain, Error, Result};
use crate::fitting::FitConfig;
use crate::levels::BackbonePoint;
use crate::model::{LearningTrend, ObservationSeries, PowerLawParams, MIN_LEVEL};

/// Bracket and resolution of the crossing search, in positions.
pub const CROSSING_LOWER: f64 = 1e-6;
pub const CROSSING_UPPER: f64 = 1e12;
pub const CROSSING_CELLS: usize = 2048;

/// Trends whose values differ by at most this much everywhere are treated
/// as the same curve.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    trends: Vec<LearningTrend>,
    backbone: Vec<f64>,
    policy: AnchorPolicy,
    /// Working level after which trends are anchored.
    anchoring_from: Option<usize>,
    end_position: Option<u64>,
    fit: FitConfig,
}

impl LearningTrace {
    pub fn new(fit: FitConfig, policy: AnchorPolicy, end_position: Option<u64>) -> Self {
        Self {
            trends: Vec::new(),
            backbone: Vec::new(),
            policy,
            anchoring_from: None,
            end_position,
            fit,
        }
    }

    pub fn unanchored(fit: FitConfig) -> Self {
        Self::new(fit, AnchorPolicy::none(), None)
    }

    /// Fits every level of `series` in order.
    pub fn build(series: &ObservationSeries, fit: FitConfig) -> Result<Self> {
        let mut trace = Self::unanchored(fit);
        for level in MIN_LEVEL..=series.len() {
            trace.extend(series, level)?;
        }
        Ok(trace)
    }

    pub fn trends(&self) -> &[LearningTrend] {
        &self.trends
    }

    pub fn backbone(&self) -> &[f64] {
        &self.backbone
    }

    pub fn trend(&self, level: usize) -> Option<&LearningTrend> {
        level
            .checked_sub(MIN_LEVEL)
            .and_then(|i| self.trends.get(i))
    }

    pub fn alpha(&self, level: usize) -> Option<f64> {
        level
            .checked_sub(MIN_LEVEL)
            .and_then(|i| self.backbone.get(i))
            .copied()
    }

    pub fn last_level(&self) -> Option<usize> {
        self.trends.last().map(|t| t.level)
    }

    pub fn is_anchored(&self) -> bool {
        self.trends.iter().any(|t| t.is_anchored())
    }

    pub fn anchoring_from(&self) -> Option<usize> {
        self.anchoring_from
    }

    pub fn policy(&self) -> &AnchorPolicy {
        &self.policy
    }

    pub fn end_position(&self) -> Option<u64> {
        self.end_position
    }

    pub fn fit_config(&self) -> &FitConfig {
        &self.fit
    }

    /// Backbone with unusable (non-converged) levels masked out.
    pub fn backbone_points(&self) -> Vec<BackbonePoint> {
        self.trends
            .iter()
            .map(|t| BackbonePoint {
                level: t.level,
                position: t.position,
                alpha: t.converged.then_some(t.asymptote()),
            })
            .collect()
    }

    /// Appends the trend for the first `level` observations. Levels past the
    /// anchoring start are fitted with the next canonical anchor.
    pub fn extend(&mut self, series: &ObservationSeries, level: usize) -> Result<&LearningTrend> {
        let expected = self.last_level().map_or(MIN_LEVEL, |l| l + 1);
        if level != expected {
            return Err(Error::Sequencing(format!(
                "expected level {expected}, got {level}"
            )));
        }
        if series.len() < level {
            return Err(Error::InsufficientData {
                needed: level,
                got: series.len(),
            });
        }
        let anchor = match self.anchoring_from {
            Some(omega) if self.policy.is_active() && level > omega => {
                Some(self.policy.anchor(next_canonical_anchor(self)?))
            }
            _ => None,
        };
        let trend = build_trend(series.prefix(level), anchor, &self.fit)?;
        self.backbone.push(trend.asymptote());
        self.trends.push(trend);
        Ok(self.trends.last().expect("just pushed"))
    }

    /// Declares the working level: trends above it are dropped so they can be
    /// refitted with anchors.
    pub fn start_anchoring(&mut self, omega: usize) -> Result<()> {
        if self.anchoring_from.is_some() {
            return Err(Error::Sequencing("anchoring already started".into()));
        }
        if self.trend(omega).is_none() {
            return Err(Error::Sequencing(format!("no trend at level {omega}")));
        }
        self.truncate(omega);
        self.anchoring_from = Some(omega);
        Ok(())
    }

    /// Keeps levels up to and including `level`.
    pub fn truncate(&mut self, level: usize) {
        let keep = level.saturating_sub(MIN_LEVEL - 1);
        self.trends.truncate(keep);
        self.backbone.truncate(keep);
    }
}

/// `|y(position) - c|` for the trend's own position, i.e. `a * position^(-b)`.
pub fn convergence_layer(trend: &LearningTrend) -> f64 {
    trend.params.gap(trend.position as f64)
}

/// Like [`convergence_layer`] but measured against the value at a finite
/// horizon instead of the asymptote.
pub fn convergence_layer_bounded(trend: &LearningTrend, end_position: u64) -> Result<f64> {
    if end_position <= trend.position {
        return Err(domain(format!(
            "end position {end_position} must exceed the trend position {}",
            trend.position
        )));
    }
    let p = &trend.params;
    Ok((p.gap(trend.position as f64) - p.gap(end_position as f64)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoints {
    pub first: Option<Point>,
    pub last: Option<Point>,
}

impl CrossingPoints {
    pub fn count(&self) -> usize {
        match (self.first, self.last) {
            (None, _) => 0,
            (Some(f), Some(l)) if f.x < l.x => 2,
            _ => 1,
        }
    }
}

fn difference(t1: &PowerLawParams, t2: &PowerLawParams, x: f64) -> f64 {
    (t1.c - t2.c) - t1.gap(x) + t2.gap(x)
}

fn crossing_grid() -> impl Iterator<Item = f64> {
    let (lo, hi) = (CROSSING_LOWER.ln(), CROSSING_UPPER.ln());
    (0..=CROSSING_CELLS).map(move |k| (lo + (hi - lo) * k as f64 / CROSSING_CELLS as f64).exp())
}

/// Whether two trends agree within [`COINCIDENCE_TOLERANCE`], relative to the
/// size of the curve's terms (at least 1), at every grid position from 1 up to
/// the top of the crossing bracket, and at infinity.
pub fn coincident(t1: &PowerLawParams, t2: &PowerLawParams) -> bool {
    let close = |diff: f64, scale: f64| diff.abs() <= COINCIDENCE_TOLERANCE * scale.abs().max(1.0);
    close(t1.c - t2.c, t1.c)
        && crossing_grid()
            .filter(|&x| x >= 1.0)
            .all(|x| close(difference(t1, t2, x), t1.c.abs().max(t1.gap(x))))
}

/// Solves `y1(x) = y2(x)` on the crossing bracket by sign scanning on a
/// log-spaced grid followed by bisection in `ln x`.
pub fn trend_intersection(t1: &PowerLawParams, t2: &PowerLawParams) -> Result<CrossingPoints> {
    if t1 == t2 {
        return Err(Error::Degenerate("identical trends cross everywhere".into()));
    }
    let grid: Vec<f64> = crossing_grid().collect();
    let f = |x: f64| difference(t1, t2, x);
    let mut roots: Vec<f64> = Vec::new();
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (f0, f1) = (f(x0), f(x1));
        if f0 == 0.0 {
            if roots.last() != Some(&x0) {
                roots.push(x0);
            }
        } else if f0 * f1 < 0.0 {
            roots.push(bisect(&f, x0, x1, f0));
        }
    }
    let top = *grid.last().expect("grid is non-empty");
    if f(top) == 0.0 && roots.last() != Some(&top) {
        roots.push(top);
    }
    let point = |x: f64| Point {
        x,
        y: t1.c - t1.gap(x),
    };
    Ok(CrossingPoints {
        first: roots.first().map(|&x| point(x)),
        last: roots.last().map(|&x| point(x)),
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = ((lo.ln() + hi.ln()) * 0.5).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Correctness bound `|q_y - α_i|` from the last crossing `q` of trends
/// `i - 1` and `i`.
///
/// Only defined on a locally decreasing backbone (`α_i ≤ α_{i-1}`) with both
/// trends converged; coincident trends give 0. `Ok(None)` when the bound is
/// not available.
pub fn epsilon_bound(trace: &LearningTrace, level: usize) -> Result<Option<f64>> {
    if level < MIN_LEVEL + 1 {
        return Err(domain(format!("correctness bound needs level >= 4, got {level}")));
    }
    let (Some(prev), Some(cur)) = (trace.trend(level - 1), trace.trend(level)) else {
        return Err(Error::Sequencing(format!("trace has no trends at levels {} and {level}", level - 1)));
    };
    if !(prev.converged && cur.converged) {
        return Ok(None);
    }
    if coincident(&cur.params, &prev.params) {
        return Ok(Some(0.0));
    }
    if cur.asymptote() > prev.asymptote() {
        return Ok(None);
    }
    let crossings = trend_intersection(&cur.params, &prev.params)?;
    Ok(crossings
        .last
        .map(|q| cur.params.gap(q.x)))
}

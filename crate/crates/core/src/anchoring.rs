//! Anchored trends and the canonical anchor sequence.
//!
//! After the working level ω, each trend is fitted with one extra
//! pseudo-observation at infinity. Canonical anchors chain asymptotes: the
//! first anchored level ω+1 uses the unanchored asymptote at ω, and every
//! later level reuses the asymptote of the previous anchored trend.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fitting::{fit_power_law, Anchor, AnchorSite, FitConfig};
use crate::model::{LearningTrend, Observation};
use crate::trace::LearningTrace;

/// Anchor position used by the finite representation.
pub const DEFAULT_FINITE_ANCHOR: f64 = 1e200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    None,
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorRepresentation {
    /// The anchor residual is `anchor - c`.
    Analytic,
    /// A literal observation at `finite_x`.
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPolicy {
    pub mode: AnchorMode,
    pub representation: AnchorRepresentation,
    pub finite_x: f64,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        Self {
            mode: AnchorMode::Canonical,
            representation: AnchorRepresentation::Analytic,
            finite_x: DEFAULT_FINITE_ANCHOR,
        }
    }
}

impl AnchorPolicy {
    pub fn none() -> Self {
        Self {
            mode: AnchorMode::None,
            ..Self::default()
        }
    }

    pub fn canonical() -> Self {
        Self::default()
    }

    pub fn is_active(&self) -> bool {
        self.mode == AnchorMode::Canonical
    }

    pub fn validate(&self) -> Result<()> {
        if !self.finite_x.is_finite() || self.finite_x <= 1.0 {
            return Err(domain("finite anchor position must be a finite value > 1"));
        }
        Ok(())
    }

    /// The fitting anchor for an accuracy under this representation.
    pub fn anchor(&self, accuracy: f64) -> Anchor {
        let site = match self.representation {
            AnchorRepresentation::Analytic => AnchorSite::Infinity,
            AnchorRepresentation::Finite => AnchorSite::Position(self.finite_x),
        };
        Anchor { accuracy, site }
    }
}

/// The anchor for the next level of an anchoring trace.
pub fn next_canonical_anchor(trace: &LearningTrace) -> Result<f64> {
    let omega = trace.anchoring_from().ok_or_else(|| {
        Error::Sequencing("canonical anchors need a declared working level".into())
    })?;
    let last = trace
        .last_level()
        .ok_or_else(|| Error::Sequencing("empty trace".into()))?;
    if last < omega {
        return Err(Error::Sequencing(format!(
            "trace stops at level {last}, before the working level {omega}"
        )));
    }
    // last converged anchored asymptote, else the reference value at ω
    let previous = trace
        .trends()
        .iter()
        .rev()
        .take_while(|t| t.level > omega)
        .find(|t| t.converged && t.is_anchored());
    match previous {
        Some(t) => Ok(t.asymptote()),
        None => trace
            .trend(omega)
            .map(|t| t.asymptote())
            .ok_or_else(|| Error::Sequencing(format!("no trend at working level {omega}"))),
    }
}

/// Fits the trend of `points.len()` observations with the given anchor.
pub fn fit_anchored_trend(
    points: &[Observation],
    anchor: f64,
    policy: &AnchorPolicy,
    config: &FitConfig,
) -> Result<LearningTrend> {
    policy.validate()?;
    if !anchor.is_finite() || anchor <= 0.0 {
        return Err(domain(format!("anchor {anchor} must be positive")));
    }
    build_trend(points, Some(policy.anchor(anchor)), config)
}

pub(crate) fn build_trend(
    points: &[Observation],
    anchor: Option<Anchor>,
    config: &FitConfig,
) -> Result<LearningTrend> {
    let fit = fit_power_law(points, anchor, config)?;
    let level = points.len();
    let mut residuals = fit.residuals;
    let anchor_residual = anchor.map(|_| residuals.pop().expect("anchor residual present"));
    Ok(LearningTrend {
        level,
        position: points[level - 1].position,
        params: fit.params,
        residuals,
        anchor: anchor.map(|a| a.accuracy),
        anchor_residual,
        converged: fit.converged,
        iterations: fit.iterations,
        cost: fit.final_cost,
    })
}

//! Working level ω and prediction level ℘ detected from the asymptotic
//! backbone.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Thresholds for the working level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    /// Verticality threshold in (0, 1).
    pub nu: f64,
    /// Root index applied to `nu`.
    pub slowdown: u32,
    /// Number of extra consecutive slopes that must also pass.
    pub lookahead: u32,
}

impl Default for LevelParams {
    fn default() -> Self {
        Self {
            nu: 2e-5,
            slowdown: 1,
            lookahead: 5,
        }
    }
}

impl LevelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(domain(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if self.slowdown == 0 {
            return Err(domain("slowdown must be >= 1"));
        }
        Ok(())
    }
}

/// One backbone entry; `alpha` is `None` for levels whose fit failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackbonePoint {
    pub level: usize,
    pub position: u64,
    pub alpha: Option<f64>,
}

/// Largest admissible backbone slope, `nu^(1/slowdown) / (1 - nu)`.
pub fn verticality_limit(params: &LevelParams) -> f64 {
    params.nu.powf(1.0 / params.slowdown as f64) / (1.0 - params.nu)
}

fn slope(p: &BackbonePoint, q: &BackbonePoint) -> Option<f64> {
    let (a, b) = (p.alpha?, q.alpha?);
    let dx = q.position.checked_sub(p.position).filter(|&d| d > 0)? as f64;
    Some((b - a).abs() / dx)
}

/// Smallest level ω whose `lookahead + 1` consecutive backbone slopes, starting
/// at ω, all stay under the verticality limit. `None` until such a window has
/// been fully observed.
///
/// `backbone` must hold consecutive levels in ascending order.
pub fn working_level(backbone: &[BackbonePoint], params: &LevelParams) -> Option<usize> {
    let limit = verticality_limit(params);
    let window = params.lookahead as usize + 1;
    if backbone.len() < window + 1 {
        return None;
    }
    (0..backbone.len() - window).find_map(|start| {
        let ok = backbone[start..=start + window]
            .windows(2)
            .all(|w| slope(&w[0], &w[1]).is_some_and(|s| s <= limit));
        ok.then_some(backbone[start].level)
    })
}

/// Smallest level ℘ ≥ ω with asymptote at most 100.
pub fn prediction_level(backbone: &[BackbonePoint], omega: usize) -> Option<usize> {
    backbone
        .iter()
        .filter(|p| p.level >= omega)
        .find(|p| p.alpha.is_some_and(|a| a <= 100.0))
        .map(|p| p.level)
}

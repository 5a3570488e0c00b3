//! Run lifecycle: consume observations one at a time, keep the (possibly
//! anchored) trace, detect the working, prediction and convergence levels,
//! and stop once the layer of convergence meets the threshold.

use serde::{Deserialize, Serialize};

use crate::anchoring::AnchorPolicy;
use crate::error::{domain, Error, Result};
use crate::fitting::FitConfig;
use crate::levels::{prediction_level, working_level, LevelParams};
use crate::model::{eval_pattern, LearningTrend, Observation, ObservationSeries, MIN_LEVEL};
use crate::trace::{convergence_layer, convergence_layer_bounded, LearningTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub level_params: LevelParams,
    /// Convergence threshold on the layer, in accuracy points.
    pub tau: f64,
    pub anchor_policy: AnchorPolicy,
    /// Finite horizon; when set, the bounded layer is checked against `tau`.
    pub end_position: Option<u64>,
    pub fit: FitConfig,
}

impl RunConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            level_params: LevelParams::default(),
            tau,
            anchor_policy: AnchorPolicy::canonical(),
            end_position: None,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(domain(format!("tau must be a non-negative number, got {}", self.tau)));
        }
        self.level_params.validate()?;
        self.anchor_policy.validate()?;
        self.fit.validate()
    }
}

/// A detected level and the position of its closing observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMark {
    pub level: usize,
    pub position: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub trace: LearningTrace,
    pub wlevel: Option<LevelMark>,
    pub plevel: Option<LevelMark>,
    pub clevel: Option<LevelMark>,
    pub stopped: bool,
    pub selected_trend: Option<LearningTrend>,
    /// Observations offered after the run had stopped; they are dropped.
    pub ignored_after_stop: usize,
    /// Next level to test against the threshold.
    next_check: usize,
}

impl RunState {
    fn new(config: &RunConfig) -> Self {
        Self {
            trace: LearningTrace::new(config.fit.clone(), config.anchor_policy, config.end_position),
            wlevel: None,
            plevel: None,
            clevel: None,
            stopped: false,
            selected_trend: None,
            ignored_after_stop: 0,
            next_check: MIN_LEVEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    /// The observation was added (and the trace grown if at least three).
    Accepted,
    /// The run had already stopped; nothing changed apart from the counter.
    IgnoredAfterStop,
}

/// Layer checked against `tau`: bounded when a horizon is configured and lies
/// past the trend, otherwise the distance to the asymptote.
pub fn stopping_layer(trend: &LearningTrend, end_position: Option<u64>) -> f64 {
    match end_position {
        Some(end) if end > trend.position => {
            convergence_layer_bounded(trend, end).expect("horizon lies past the trend")
        }
        _ => convergence_layer(trend),
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    config: RunConfig,
    series: ObservationSeries,
    state: RunState,
}

impl Controller {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let state = RunState::new(&config);
        Ok(Self {
            config,
            series: ObservationSeries::new(1, 1)?,
            state,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn series(&self) -> &ObservationSeries {
        &self.series
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn ingest(&mut self, obs: Observation) -> Result<Ingest> {
        if self.state.stopped {
            self.state.ignored_after_stop += 1;
            return Ok(Ingest::IgnoredAfterStop);
        }
        self.series.push(obs)?;
        let level = self.series.len();
        if level < MIN_LEVEL {
            return Ok(Ingest::Accepted);
        }
        self.state.trace.extend(&self.series, level)?;
        self.detect(level)?;
        Ok(Ingest::Accepted)
    }

    pub fn ingest_all(&mut self, observations: impl IntoIterator<Item = Observation>) -> Result<()> {
        for obs in observations {
            if self.ingest(obs)? == Ingest::IgnoredAfterStop {
                break;
            }
        }
        Ok(())
    }

    fn mark(&self, level: usize) -> LevelMark {
        LevelMark {
            level,
            position: self.series.position_of(level).expect("level within series"),
        }
    }

    fn detect(&mut self, level: usize) -> Result<()> {
        if self.state.wlevel.is_none() {
            let Some(omega) = working_level(&self.state.trace.backbone_points(), &self.config.level_params)
            else {
                return Ok(());
            };
            self.state.wlevel = Some(self.mark(omega));
            if self.config.anchor_policy.is_active() {
                self.state.trace.start_anchoring(omega)?;
                for l in omega + 1..=level {
                    self.state.trace.extend(&self.series, l)?;
                }
            }
        }
        let omega = self.state.wlevel.expect("working level set").level;
        if self.state.plevel.is_none() {
            let Some(wp) = prediction_level(&self.state.trace.backbone_points(), omega) else {
                return Ok(());
            };
            self.state.plevel = Some(self.mark(wp));
            self.state.next_check = wp;
        }
        while self.state.next_check <= level {
            let l = self.state.next_check;
            self.state.next_check += 1;
            let trend = self.state.trace.trend(l).expect("checked level is in the trace");
            if trend.converged && stopping_layer(trend, self.config.end_position) <= self.config.tau {
                self.state.selected_trend = Some(trend.clone());
                self.state.clevel = Some(self.mark(l));
                self.state.stopped = true;
                break;
            }
        }
        Ok(())
    }
}

/// Estimated accuracy at `position` from the trend selected at the
/// convergence level.
pub fn predict(state: &RunState, position: f64) -> Result<f64> {
    let trend = state
        .selected_trend
        .as_ref()
        .ok_or_else(|| Error::Unavailable("the run has not reached its convergence level".into()))?;
    eval_pattern(&trend.params, position)
}

/// Batch route: fits the whole trace level by level without interleaving
/// detection, then locates ω, refits past it with anchors, and scans for the
/// convergence level. The returned state is truncated at the level where an
/// online run would have stopped.
pub fn run_offline(series: &ObservationSeries, config: &RunConfig) -> Result<RunState> {
    config.validate()?;
    let mut state = RunState::new(config);
    let n = series.len();
    let mark = |level: usize| LevelMark {
        level,
        position: series.position_of(level).expect("level within series"),
    };
    for level in MIN_LEVEL..=n {
        state.trace.extend(series, level)?;
    }
    let params = &config.level_params;
    let window = params.lookahead as usize + 1;
    let Some(omega) = working_level(&state.trace.backbone_points(), params) else {
        return Ok(state);
    };
    state.wlevel = Some(mark(omega));
    // the window closes one level after its last slope starts
    let known_omega = omega + window;
    if config.anchor_policy.is_active() {
        state.trace.start_anchoring(omega)?;
        for level in omega + 1..=n {
            state.trace.extend(series, level)?;
        }
    }
    let Some(wp) = prediction_level(&state.trace.backbone_points(), omega) else {
        return Ok(state);
    };
    state.plevel = Some(mark(wp));
    let known_wp = wp.max(known_omega);
    let hit = (wp..=n).find(|&l| {
        let t = state.trace.trend(l).expect("level in trace");
        t.converged && stopping_layer(t, config.end_position) <= config.tau
    });
    match hit {
        Some(cl) => {
            let stop_at = cl.max(known_wp);
            state.trace.truncate(stop_at);
            state.selected_trend = state.trace.trend(cl).cloned();
            state.clevel = Some(mark(cl));
            state.stopped = true;
            state.next_check = cl + 1;
        }
        None => state.next_check = n + 1,
    }
    Ok(state)
}

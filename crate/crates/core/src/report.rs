//! Run reports: a JSON document with a fixed key order and six-decimal
//! numbers, and a flat CSV of the per-level records.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::anchoring::{AnchorMode, AnchorRepresentation};
use crate::controller::{predict, stopping_layer, LevelMark, RunConfig, RunState};
use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::trace::{convergence_layer, convergence_layer_bounded};

/// JSON schema every serialized [`RunReport`] validates against.
pub const RUN_REPORT_SCHEMA: &str = include_str!("../schema/run_report.schema.json");

pub const DISPLAY_DECIMALS: i32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub tau: f64,
    pub nu: f64,
    pub slowdown: u32,
    pub lookahead: u32,
    pub anchors: AnchorMode,
    pub anchor_mode: AnchorRepresentation,
    pub anchor_x: f64,
    pub end_position: Option<u64>,
}

impl From<&RunConfig> for ConfigEcho {
    fn from(c: &RunConfig) -> Self {
        Self {
            tau: c.tau,
            nu: c.level_params.nu,
            slowdown: c.level_params.slowdown,
            lookahead: c.level_params.lookahead,
            anchors: c.anchor_policy.mode,
            anchor_mode: c.anchor_policy.representation,
            anchor_x: c.anchor_policy.finite_x,
            end_position: c.end_position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelFlag {
    Working,
    Prediction,
    Convergence,
}

impl LevelFlag {
    fn as_str(self) -> &'static str {
        match self {
            Self::Working => "working",
            Self::Prediction => "prediction",
            Self::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub position: u64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Backbone value; absent when the fit did not converge.
    pub alpha: Option<f64>,
    pub layer: f64,
    pub layer_bounded: Option<f64>,
    pub anchored: bool,
    pub converged: bool,
    pub flags: Vec<LevelFlag>,
}

/// Requested positions with their estimated accuracy, kept in request order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions(pub Vec<(u64, f64)>);

impl Serialize for Predictions {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (position, accuracy) in &self.0 {
            map.serialize_entry(&position.to_string(), accuracy)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub wlevel: Option<LevelMark>,
    pub plevel: Option<LevelMark>,
    pub clevel: Option<LevelMark>,
    pub tau: f64,
    pub stopped: bool,
    /// Layer of the selected trend, as checked against `tau`.
    pub layer: Option<f64>,
    pub predicted_accuracy_at: Predictions,
    pub asymptote: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub levels: Vec<LevelRecord>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

impl RunReport {
    /// Predictions are only filled in once the run has stopped.
    pub fn new(config: &RunConfig, state: &RunState, predict_at: &[u64]) -> Result<Self> {
        let flags_of = |level: usize| {
            [
                (state.wlevel, LevelFlag::Working),
                (state.plevel, LevelFlag::Prediction),
                (state.clevel, LevelFlag::Convergence),
            ]
            .into_iter()
            .filter(|(mark, _)| mark.is_some_and(|m| m.level == level))
            .map(|(_, f)| f)
            .collect()
        };
        let levels = state
            .trace
            .trends()
            .iter()
            .map(|t| {
                let layer_bounded = match config.end_position {
                    Some(end) if end > t.position => Some(convergence_layer_bounded(t, end)?),
                    _ => None,
                };
                Ok(LevelRecord {
                    level: t.level,
                    position: t.position,
                    a: t.params.a,
                    b: t.params.b,
                    c: t.params.c,
                    alpha: t.converged.then_some(t.asymptote()),
                    layer: convergence_layer(t),
                    layer_bounded,
                    anchored: t.is_anchored(),
                    converged: t.converged,
                    flags: flags_of(t.level),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let predictions = if state.stopped {
            predict_at
                .iter()
                .map(|&x| Ok((x, predict(state, x as f64)?)))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let selected = state.selected_trend.as_ref();
        Ok(Self {
            config: config.into(),
            levels,
            summary: Summary {
                wlevel: state.wlevel,
                plevel: state.plevel,
                clevel: state.clevel,
                tau: config.tau,
                stopped: state.stopped,
                layer: selected.map(|t| stopping_layer(t, config.end_position)),
                predicted_accuracy_at: Predictions(predictions),
                asymptote: selected.map(|t| t.asymptote()),
            },
            metrics: None,
        })
    }

    pub fn with_metrics(mut self, metrics: MetricsReport) -> Self {
        self.metrics = Some(metrics);
        self
    }

    /// The report as a JSON value with every float rounded for display.
    pub fn to_value(&self) -> Result<Value> {
        let mut value = serde_json::to_value(self)?;
        round_floats(&mut value);
        Ok(value)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&self.to_value()?)?;
        text.push('\n');
        Ok(text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,position,a,b,c,alpha,layer,layer_bounded,anchored,converged,flags\n");
        let num = |x: f64| format!("{:.*}", DISPLAY_DECIMALS as usize, x);
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        for r in &self.levels {
            let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.level,
                r.position,
                num(r.a),
                num(r.b),
                num(r.c),
                opt(r.alpha),
                num(r.layer),
                opt(r.layer_bounded),
                r.anchored,
                r.converged,
                flags.join("|")
            ));
        }
        out
    }
}

/// Rounds to [`DISPLAY_DECIMALS`] places; integers are left untouched.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let scale = 10f64.powi(DISPLAY_DECIMALS);
            let rounded = (x * scale).round() / scale;
            // values too large to scale keep full precision
            let rounded = if rounded.is_finite() { rounded } else { x };
            *value = serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

//! Bounded nonlinear least-squares fit of the power family to a prefix of
//! observations.
//!
//! The optimizer is a Levenberg-Marquardt trust-region iteration over
//! `(ln a, ln b, c)`, which keeps `a` and `b` strictly positive without
//! explicit bound handling. An optional anchor adds one extra residual
//! `anchor - y(x_anchor)`, either at infinity (`anchor - c`) or at a finite
//! far-away position.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{Observation, PowerLawParams, MIN_LEVEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when the step norm falls below this fraction of the parameter norm.
    pub param_tolerance: f64,
    /// Scales the initial Marquardt damping (larger radius, smaller damping).
    pub initial_trust_radius: f64,
    /// Also start from five fixed perturbations of the initial guess.
    pub multi_start: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-12,
            param_tolerance: 1e-10,
            initial_trust_radius: 1.0,
            multi_start: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.max_iterations == 0 {
            return Err(domain("max_iterations must be >= 1"));
        }
        if !positive(self.cost_tolerance)
            || !positive(self.param_tolerance)
            || !positive(self.initial_trust_radius)
        {
            return Err(domain("fit tolerances and trust radius must be positive"));
        }
        Ok(())
    }
}

/// Where an anchor pseudo-observation sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnchorSite {
    /// The point of infinity; the residual is `accuracy - c`.
    Infinity,
    /// A literal far-away position.
    Position(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub accuracy: f64,
    pub site: AnchorSite,
}

impl Anchor {
    pub fn at_infinity(accuracy: f64) -> Self {
        Self {
            accuracy,
            site: AnchorSite::Infinity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PowerLawParams,
    /// Observed minus fitted; the anchor residual, if any, comes last.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
}

impl FitResult {
    pub fn anchor_residual(&self, anchored: bool) -> Option<f64> {
        anchored.then(|| *self.residuals.last().expect("anchored fit has residuals"))
    }
}

/// A fitting row: `ln x` (or `None` for the point of infinity) and the target.
#[derive(Debug, Clone, Copy)]
struct Row {
    ln_x: Option<f64>,
    y: f64,
}

struct Problem {
    rows: Vec<Row>,
}

/// Parameters in optimizer coordinates: `(ln a, ln b, c)`.
type Coords = Vector3<f64>;

fn to_coords(p: &PowerLawParams) -> Coords {
    Vector3::new(p.a.ln(), p.b.ln(), p.c)
}

fn from_coords(v: &Coords) -> Option<PowerLawParams> {
    PowerLawParams::new(v[0].exp(), v[1].exp(), v[2]).ok()
}

impl Problem {
    fn new(points: &[Observation], anchor: Option<Anchor>) -> Result<Self> {
        if points.len() < MIN_LEVEL {
            return Err(Error::InsufficientData {
                needed: MIN_LEVEL,
                got: points.len(),
            });
        }
        let mut rows = Vec::with_capacity(points.len() + 1);
        let mut last = 0u64;
        for p in points {
            if !p.accuracy.is_finite() || p.accuracy <= 0.0 || p.accuracy > 100.0 {
                return Err(domain(format!("accuracy {} outside (0, 100]", p.accuracy)));
            }
            if p.position == 0 || p.position <= last {
                return Err(domain("positions must be positive and strictly increasing"));
            }
            last = p.position;
            rows.push(Row {
                ln_x: Some((p.position as f64).ln()),
                y: p.accuracy,
            });
        }
        if let Some(anchor) = anchor {
            if !anchor.accuracy.is_finite() || anchor.accuracy <= 0.0 {
                return Err(domain(format!("anchor {} must be positive", anchor.accuracy)));
            }
            let ln_x = match anchor.site {
                AnchorSite::Infinity => None,
                AnchorSite::Position(x) => {
                    if !x.is_finite() || x <= last as f64 {
                        return Err(domain("finite anchor must lie beyond the observations"));
                    }
                    Some(x.ln())
                }
            };
            rows.push(Row {
                ln_x,
                y: anchor.accuracy,
            });
        }
        Ok(Self { rows })
    }

    /// `a * x^(-b)` for a row, given coordinates.
    fn gap(ln_a: f64, b: f64, row: &Row) -> f64 {
        match row.ln_x {
            Some(lx) => (ln_a - b * lx).exp(),
            None => 0.0,
        }
    }

    fn residuals(&self, v: &Coords) -> Option<Vec<f64>> {
        let b = v[1].exp();
        let out: Vec<f64> = self
            .rows
            .iter()
            .map(|row| row.y - v[2] + Self::gap(v[0], b, row))
            .collect();
        out.iter().all(|r| r.is_finite()).then_some(out)
    }

    /// Normal matrix and gradient `J^T r` of the residual vector.
    fn normal_equations(&self, v: &Coords, r: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
        let b = v[1].exp();
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (row, &ri) in self.rows.iter().zip(r) {
            let g = Self::gap(v[0], b, row);
            let lx = row.ln_x.unwrap_or(0.0);
            let j = Vector3::new(g, -g * lx * b, -1.0);
            jtj += j * j.transpose();
            jtr += j * ri;
        }
        (jtj, jtr)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

struct Outcome {
    coords: Coords,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(problem: &Problem, start: Coords, config: &FitConfig) -> Option<Outcome> {
    let mut v = start;
    let mut r = problem.residuals(&v)?;
    let mut cost = sum_sq(&r);
    let mut damping = 1e-3 / config.initial_trust_radius;
    let mut growth = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&v, &r);
        if cost == 0.0 || jtr.amax() == 0.0 {
            converged = true;
            break;
        }
        let max_diag = jtj.diagonal().amax();
        let scale = jtj.diagonal().map(|d| d.max(max_diag * 1e-30).max(f64::MIN_POSITIVE));

        let mut system = jtj;
        for k in 0..3 {
            system[(k, k)] += damping * scale[k];
        }
        let step = match system.cholesky() {
            Some(ch) => ch.solve(&(-jtr)),
            None => {
                damping *= growth;
                growth *= 2.0;
                continue;
            }
        };
        let rel_step = step.norm() / (v.norm() + config.param_tolerance);
        let candidate = v + step;
        let trial = problem
            .residuals(&candidate)
            .filter(|_| from_coords(&candidate).is_some());
        let predicted = -(2.0 * jtr.dot(&step) + (step.transpose() * jtj * step)[(0, 0)]);

        match trial {
            Some(r_new) if sum_sq(&r_new) < cost && predicted > 0.0 => {
                let cost_new = sum_sq(&r_new);
                let ratio = (cost - cost_new) / predicted;
                let decrease = cost - cost_new;
                v = candidate;
                r = r_new;
                let previous = cost;
                cost = cost_new;
                damping *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
                growth = 2.0;
                if rel_step < config.param_tolerance || decrease <= config.cost_tolerance * previous
                {
                    converged = true;
                    break;
                }
            }
            _ => {
                if rel_step < config.param_tolerance {
                    // no smaller step can improve at this resolution
                    converged = true;
                    break;
                }
                damping *= growth;
                growth *= 2.0;
                if !damping.is_finite() || damping > 1e300 {
                    break;
                }
            }
        }
    }
    Some(Outcome {
        coords: v,
        cost,
        iterations,
        converged,
    })
}

/// Heuristic starting point: `c0` above the last accuracy, `b0 = 0.5` and
/// `a0` matching the first observation.
pub fn initial_guess(points: &[Observation]) -> Result<PowerLawParams> {
    if points.len() < MIN_LEVEL {
        return Err(Error::InsufficientData {
            needed: MIN_LEVEL,
            got: points.len(),
        });
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let (y_first, y_last) = (first.accuracy, last.accuracy);
    let mut c0 = y_last + 0.5 * (y_last - y_first);
    if c0 <= y_last {
        c0 = y_last + 0.1;
    }
    let c0 = c0.min(110.0_f64.max(y_last + 0.1));
    let b0 = 0.5;
    let a0 = ((c0 - y_first) * (first.position as f64).powf(b0)).max(1e-9);
    PowerLawParams::new(a0, b0, c0)
}

/// Scans a grid of exponents and solves the remaining linear problem in
/// `(a, c)` exactly, returning the best configuration with `a > 0`.
fn profiled_guess(problem: &Problem) -> Option<PowerLawParams> {
    const GRID: usize = 96;
    let (lo, hi) = (0.01f64.ln(), 8.0f64.ln());
    let n = problem.rows.len() as f64;
    let mut best: Option<(f64, PowerLawParams)> = None;
    for k in 0..GRID {
        let b = (lo + (hi - lo) * k as f64 / (GRID - 1) as f64).exp();
        // y = c + a * v with v = -x^(-b)
        let vs: Vec<f64> = problem
            .rows
            .iter()
            .map(|row| -Problem::gap(0.0, b, row))
            .collect();
        let v_mean = vs.iter().sum::<f64>() / n;
        let y_mean = problem.rows.iter().map(|r| r.y).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (v, row) in vs.iter().zip(&problem.rows) {
            sxy += (v - v_mean) * (row.y - y_mean);
            sxx += (v - v_mean) * (v - v_mean);
        }
        if sxx <= 0.0 || !sxx.is_finite() {
            continue;
        }
        let a = sxy / sxx;
        let c = y_mean - a * v_mean;
        let Ok(params) = PowerLawParams::new(a, b, c) else {
            continue;
        };
        let sse: f64 = vs
            .iter()
            .zip(&problem.rows)
            .map(|(v, row)| (row.y - c - a * v).powi(2))
            .sum();
        if best.as_ref().is_none_or(|(s, _)| sse < *s) {
            best = Some((sse, params));
        }
    }
    best.map(|(_, p)| p)
}

fn perturbations(base: &PowerLawParams) -> Vec<PowerLawParams> {
    [(1.0, 0.25, 0.0), (1.0, 2.0, 0.0), (0.5, 1.0, 1.0), (2.0, 1.0, -0.5), (1.0, 4.0, 2.0)]
        .iter()
        .filter_map(|&(fa, fb, dc)| PowerLawParams::new(base.a * fa, base.b * fb, base.c + dc).ok())
        .collect()
}

fn finish(problem: &Problem, outcome: Outcome) -> FitResult {
    let params = from_coords(&outcome.coords).expect("optimizer keeps coordinates valid");
    let residuals = problem
        .residuals(&outcome.coords)
        .expect("accepted coordinates have finite residuals");
    FitResult {
        params,
        final_cost: sum_sq(&residuals),
        residuals,
        converged: outcome.converged && outcome.cost.is_finite(),
        iterations: outcome.iterations,
    }
}

/// Fits the power family to `points`, optionally with one anchor residual.
///
/// Starts from [`initial_guess`] and from an exponent-profiled guess, and
/// keeps the better optimum (converged first, then lowest cost).
pub fn fit_power_law(
    points: &[Observation],
    anchor: Option<Anchor>,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let problem = Problem::new(points, anchor)?;
    let mut starts = vec![initial_guess(points)?];
    if let Some(p) = profiled_guess(&problem) {
        starts.push(p);
    }
    if config.multi_start {
        let extra = perturbations(&starts[0]);
        starts.extend(extra);
    }
    let mut best: Option<Outcome> = None;
    for start in &starts {
        let Some(outcome) = levenberg_marquardt(&problem, to_coords(start), config) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (outcome.converged && !b.converged)
                    || (outcome.converged == b.converged && outcome.cost < b.cost)
            }
        };
        if better {
            best = Some(outcome);
        }
    }
    best.map(|o| finish(&problem, o))
        .ok_or_else(|| Error::Degenerate("no starting point produced finite residuals".into()))
}

/// Runs the optimizer from a caller-supplied starting point.
pub fn refine(
    points: &[Observation],
    anchor: Option<Anchor>,
    start: &PowerLawParams,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let problem = Problem::new(points, anchor)?;
    levenberg_marquardt(&problem, to_coords(start), config)
        .map(|o| finish(&problem, o))
        .ok_or_else(|| Error::Degenerate("starting point has non-finite residuals".into()))
}

/// Sum of squared residuals of `params` on `points` (plus the anchor term).
pub fn cost_of(points: &[Observation], anchor: Option<Anchor>, params: &PowerLawParams) -> Result<f64> {
    let problem = Problem::new(points, anchor)?;
    problem
        .residuals(&to_coords(params))
        .map(|r| sum_sq(&r))
        .ok_or_else(|| domain("non-finite residuals"))
}

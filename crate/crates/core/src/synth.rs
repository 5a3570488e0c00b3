//! Synthetic learning curves with known ground truth, and executable checks
//! of the convergence properties of learning traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchoring::{AnchorPolicy, AnchorRepresentation};
use crate::error::{domain, Result};
use crate::fitting::FitConfig;
use crate::levels::{verticality_limit, working_level, LevelParams};
use crate::model::{eval_pattern, LearningTrend, Observation, ObservationSeries, PowerLawParams, MIN_LEVEL};
use crate::trace::{coincident, convergence_layer, epsilon_bound, trend_intersection, LearningTrace};

/// Lowest accuracy a generated observation is clamped to.
const MIN_ACCURACY: f64 = 1e-6;

/// Bumps are confined to positions below this bound.
pub const BUMP_HORIZON: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    None,
    /// Additive Gaussian noise on accuracy.
    Gaussian { sigma: f64 },
    /// `count` alternating up/down bumps of `magnitude` on every other
    /// observation, starting with the fourth, all before [`BUMP_HORIZON`].
    Bumps { magnitude: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub true_params: PowerLawParams,
    pub kernel: u64,
    pub step: u64,
    pub count: usize,
    pub noise: Noise,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(true_params: PowerLawParams) -> Self {
        Self {
            true_params,
            kernel: 5000,
            step: 5000,
            count: 160,
            noise: Noise::None,
            seed: 0,
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.count as u64).map(|i| self.kernel + i * self.step)
    }

    /// Indices (0-based) of the observations that carry a bump.
    pub fn bump_indices(&self) -> Vec<usize> {
        match self.noise {
            Noise::Bumps { count, .. } => (0..count)
                .map(|k| 3 + 2 * k)
                .filter(|&i| i < self.count && self.kernel + i as u64 * self.step < BUMP_HORIZON)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// The first level after the last bumped observation.
    pub fn first_clean_level(&self) -> Option<usize> {
        self.bump_indices().last().map(|&i| i + 2)
    }
}

/// Samples the true curve at the configured positions and applies the noise.
pub fn generate_series(spec: &SynthSpec) -> Result<ObservationSeries> {
    if spec.kernel == 0 || spec.step == 0 {
        return Err(domain("kernel and step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaussian = match spec.noise {
        Noise::Gaussian { sigma } if sigma > 0.0 => {
            Some(Normal::new(0.0, sigma).map_err(|e| domain(e.to_string()))?)
        }
        Noise::Gaussian { sigma } if sigma < 0.0 || sigma.is_nan() => {
            return Err(domain(format!("noise sigma must be >= 0, got {sigma}")))
        }
        _ => None,
    };
    let bumps = spec.bump_indices();
    let magnitude = match spec.noise {
        Noise::Bumps { magnitude, .. } => magnitude,
        _ => 0.0,
    };
    let mut series = ObservationSeries::new(spec.kernel, spec.step)?;
    for (i, x) in spec.positions().enumerate() {
        let mut y = eval_pattern(&spec.true_params, x as f64)?;
        if let Some(normal) = &gaussian {
            y += normal.sample(&mut rng);
        }
        if let Some(k) = bumps.iter().position(|&b| b == i) {
            y += if k % 2 == 0 { magnitude } else { -magnitude };
        }
        series.push(Observation {
            position: x,
            accuracy: y.clamp(MIN_ACCURACY, 100.0),
        })?;
    }
    Ok(series)
}

/// Settings for [`theorem_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub fit: FitConfig,
    pub levels: LevelParams,
    pub representation: AnchorRepresentation,
    /// Absolute slack, in accuracy points, before a step counts as a violation.
    pub tolerance: f64,
    /// Residual balance must hold within this much per observation.
    pub balance_tolerance: f64,
    /// Fraction of steps allowed to violate a property.
    pub violation_budget: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            levels: LevelParams::default(),
            representation: AnchorRepresentation::Analytic,
            tolerance: 1e-6,
            balance_tolerance: 1e-6,
            violation_budget: 0.0,
        }
    }
}

impl SuiteConfig {
    /// Preset for noisy series: reversals smaller than what the verticality
    /// limit admits over one `step` are ignored and 5% of steps may fail.
    pub fn noisy(step: u64) -> Self {
        let levels = LevelParams::default();
        Self {
            tolerance: verticality_limit(&levels) * step as f64,
            violation_budget: 0.05,
            levels,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub theorem: String,
    pub property: String,
    /// Number of comparisons made.
    pub steps: usize,
    pub violations: usize,
    pub passed: bool,
}

impl TheoremCheck {
    fn new(theorem: &str, property: &str, steps: usize, violations: usize, budget: f64) -> Self {
        Self {
            theorem: theorem.into(),
            property: property.into(),
            steps,
            violations,
            passed: violations as f64 <= (budget * steps as f64).floor(),
        }
    }

    /// Share of comparisons that held; 1 when nothing was compared.
    pub fn success_rate(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            (self.steps - self.violations) as f64 / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub omega: Option<usize>,
    /// Largest `|α_i - c_true|` at levels from ω on.
    pub max_asymptote_error: Option<f64>,
    pub checks: Vec<TheoremCheck>,
}

impl TheoremReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, theorem: &str) -> impl Iterator<Item = &TheoremCheck> + '_ {
        let theorem = theorem.to_string();
        self.checks.iter().filter(move |c| c.theorem == theorem)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Up,
    Down,
}

fn direction(values: &[f64], tolerance: f64) -> Direction {
    match (values.first(), values.last()) {
        (Some(f), Some(l)) if l < &(f - tolerance) => Direction::Down,
        _ => Direction::Up,
    }
}

/// Counts consecutive pairs moving against `dir` by more than `tolerance`.
fn reversals(values: &[f64], dir: Direction, tolerance: f64) -> usize {
    values
        .windows(2)
        .filter(|w| match dir {
            Direction::Up => w[1] < w[0] - tolerance,
            Direction::Down => w[1] > w[0] + tolerance,
        })
        .count()
}

fn converged(trace: &LearningTrace, level: usize) -> Option<&LearningTrend> {
    trace.trend(level).filter(|t| t.converged)
}

/// Runs of consecutive values, split wherever `None` appears.
fn runs(values: &[Option<f64>]) -> Vec<Vec<f64>> {
    values
        .split(|v| v.is_none())
        .map(|r| r.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|r| r.len() > 1)
        .collect()
}

fn decreasing_violations(values: &[Option<f64>], tolerance: f64) -> (usize, usize) {
    runs(values).iter().fold((0, 0), |(steps, bad), r| {
        (steps + r.len() - 1, bad + reversals(r, Direction::Down, tolerance))
    })
}

/// `|q_y - c_true|` at the last crossing of a trend with the true curve; 0 if
/// they coincide.
fn true_curve_bound(trend: &PowerLawParams, truth: &PowerLawParams) -> Result<Option<f64>> {
    if coincident(trend, truth) {
        return Ok(Some(0.0));
    }
    Ok(trend_intersection(trend, truth)?
        .last
        .map(|q| (q.y - truth.c).abs()))
}

/// Builds the unanchored trace and its canonically anchored counterpart over
/// `series`, then checks the convergence properties against the known truth.
///
/// Properties on the asymptotic backbone, correctness bounds and layers are
/// checked on the unanchored trace; residual balance, anchor correction and
/// canonical ordering on the anchored one. Only levels from ω on are judged.
pub fn theorem_suite(series: &ObservationSeries, truth: &PowerLawParams, config: &SuiteConfig) -> Result<TheoremReport> {
    config.fit.validate()?;
    config.levels.validate()?;
    let (tol, budget) = (config.tolerance, config.violation_budget);
    let reference = LearningTrace::build(series, config.fit.clone())?;
    let Some(omega) = working_level(&reference.backbone_points(), &config.levels) else {
        return Ok(TheoremReport {
            omega: None,
            max_asymptote_error: None,
            checks: vec![TheoremCheck::new("levels", "working level declared", 1, 1, 0.0)],
        });
    };
    let last = series.len();
    let levels = omega..=last;

    // T1
    let alphas: Vec<Option<f64>> = levels.clone().map(|l| converged(&reference, l).map(|t| t.asymptote())).collect();
    let backbone: Vec<f64> = alphas.iter().flatten().copied().collect();
    let dir = direction(&backbone, tol);
    let monotone = reversals(&backbone, dir, tol);
    let errors: Vec<f64> = backbone.iter().map(|a| (a - truth.c).abs()).collect();
    let approaching = reversals(&errors, Direction::Down, tol);
    let steps = backbone.len().saturating_sub(1);
    let mut checks = vec![
        TheoremCheck::new("T1", "backbone monotone after working level", steps, monotone, budget),
        TheoremCheck::new("T1", "distance to true asymptote decreasing", steps, approaching, budget),
    ];

    // T2
    let first_eps = omega.max(MIN_LEVEL + 1);
    let eps = (first_eps..=last)
        .map(|l| epsilon_bound(&reference, l))
        .collect::<Result<Vec<_>>>()?;
    let (steps, bad) = decreasing_violations(&eps, tol);
    checks.push(TheoremCheck::new("T2", "correctness bound decreasing", steps, bad, budget));
    let mut increasing = Vec::new();
    for l in levels.clone() {
        let rising = l > MIN_LEVEL
            && matches!((converged(&reference, l - 1), converged(&reference, l)),
                (Some(p), Some(c)) if c.asymptote() >= p.asymptote());
        increasing.push(match converged(&reference, l) {
            Some(t) if rising => true_curve_bound(&t.params, truth)?,
            _ => None,
        });
    }
    let (steps, bad) = decreasing_violations(&increasing, tol);
    checks.push(TheoremCheck::new("T2", "true-curve bound decreasing on rising steps", steps, bad, budget));

    // T3: a sequence crossing every threshold once is a non-increasing one.
    let layers: Vec<Option<f64>> = levels.clone().map(|l| converged(&reference, l).map(convergence_layer)).collect();
    let (steps, bad) = decreasing_violations(&layers, tol);
    checks.push(TheoremCheck::new("T3", "layers cross each threshold once", steps, bad, budget));

    // Anchored counterpart.
    let policy = AnchorPolicy {
        representation: config.representation,
        ..AnchorPolicy::canonical()
    };
    let mut anchored = LearningTrace::new(config.fit.clone(), policy, None);
    for l in MIN_LEVEL..=omega {
        anchored.extend(series, l)?;
    }
    anchored.start_anchoring(omega)?;
    for l in omega + 1..=last {
        anchored.extend(series, l)?;
    }

    // T4
    let anchored_trends: Vec<&LearningTrend> = (omega + 1..=last).filter_map(|l| converged(&anchored, l)).collect();
    let unbalanced = anchored_trends
        .iter()
        .filter(|t| {
            let rho = t.anchor_residual.unwrap_or(0.0);
            (rho + t.residual_sum()).abs() > config.balance_tolerance * t.residuals.len() as f64
        })
        .count();
    checks.push(TheoremCheck::new("T4", "residual balance", anchored_trends.len(), unbalanced, budget));
    let rho: Vec<f64> = anchored_trends.iter().map(|t| t.anchor_residual.unwrap_or(0.0).abs()).collect();
    let third = rho.len() / 3;
    let vanishing = third == 0 || {
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        mean(&rho[rho.len() - third..]) <= mean(&rho[..third]) + tol
    };
    checks.push(TheoremCheck::new("T4", "anchor residual vanishing", 1, usize::from(!vanishing), 0.0));

    // T5: each anchor against the previous anchored asymptote corrected by the
    // new trend's residuals.
    let hat: Vec<Option<f64>> = (omega..=last).map(|l| converged(&anchored, l).map(|t| t.asymptote())).collect();
    let hat_values: Vec<f64> = hat.iter().flatten().copied().collect();
    let hat_dir = direction(&hat_values, tol);
    let (mut steps, mut bad) = (0, 0);
    for l in omega + 1..=last {
        let (Some(prev), Some(cur)) = (converged(&anchored, l - 1), converged(&anchored, l)) else {
            continue;
        };
        let Some(anchor) = cur.anchor else { continue };
        let corrected = prev.asymptote() - cur.residual_sum();
        steps += 1;
        let holds = match hat_dir {
            Direction::Down => anchor <= corrected + tol,
            Direction::Up => anchor >= corrected - tol,
        };
        bad += usize::from(!holds);
    }
    checks.push(TheoremCheck::new("T5", "anchor correction inequality", steps, bad, budget));

    // T6
    let (mut steps, mut bad) = (0, 0);
    for l in omega + 1..=last {
        let (Some(plain), Some(hat)) = (converged(&reference, l), converged(&anchored, l)) else {
            continue;
        };
        steps += 1;
        let holds = match dir {
            Direction::Down => plain.asymptote() <= hat.asymptote() + tol,
            Direction::Up => plain.asymptote() >= hat.asymptote() - tol,
        };
        bad += usize::from(!holds);
    }
    checks.push(TheoremCheck::new("T6", "canonical ordering", steps, bad, budget));

    Ok(TheoremReport {
        omega: Some(omega),
        max_asymptote_error: errors.iter().copied().reduce(f64::max),
        checks,
    })
}

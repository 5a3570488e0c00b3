//! Reliability and robustness metrics over control sequences.
//!
//! * PE / MAPE: signed and mean-absolute percentage error of estimated (EAc)
//!   versus observed (Ac) accuracy.
//! * RE / RER: whether two runs' estimates preserve the order of their
//!   observed accuracies, per level and as a percentage over a sequence.
//! * DMR: share of comparison runs against which a run is order-preserving
//!   at every control level.
//! * RR: share of a backbone segment covered by its longest monotone
//!   subsequence.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Observed and estimated accuracy at one control level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    pub ac: f64,
    pub eac: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSequence {
    positions: Vec<u64>,
}

impl ControlSequence {
    pub fn new(positions: Vec<u64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(domain("control sequence is empty"));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("control positions must be strictly increasing"));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check(&self, run: &[ControlPair]) -> Result<()> {
        if run.len() != self.positions.len() {
            return Err(domain(format!(
                "run has {} pairs for {} control levels",
                run.len(),
                self.positions.len()
            )));
        }
        Ok(())
    }
}

/// `100 * (eac - ac) / ac`.
pub fn percentage_error(ac: f64, eac: f64) -> Result<f64> {
    if !(ac.is_finite() && ac > 0.0) || !eac.is_finite() {
        return Err(domain(format!("invalid accuracies ac={ac}, eac={eac}")));
    }
    Ok(100.0 * (eac - ac) / ac)
}

/// Mean of the unsigned percentage errors. The errors are already in percent,
/// so no further scaling is applied.
pub fn mape(pe: &[f64]) -> Result<f64> {
    if pe.is_empty() {
        return Err(domain("MAPE of an empty sequence"));
    }
    Ok(pe.iter().map(|e| e.abs()).sum::<f64>() / pe.len() as f64)
}

/// 1 when the estimates keep the order of the observations (ties included).
pub fn reliability_estimation(first: ControlPair, second: ControlPair) -> u8 {
    u8::from((first.ac - second.ac) * (first.eac - second.eac) >= 0.0)
}

pub fn rer(run1: &[ControlPair], run2: &[ControlPair], seq: &ControlSequence) -> Result<f64> {
    seq.check(run1)?;
    seq.check(run2)?;
    let kept: u32 = run1
        .iter()
        .zip(run2)
        .map(|(&p, &q)| u32::from(reliability_estimation(p, q)))
        .sum();
    Ok(100.0 * kept as f64 / seq.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmrDenominator {
    /// Number of comparison runs.
    #[default]
    Runs,
    /// Number of control levels.
    Levels,
}

pub fn dmr(
    run: &[ControlPair],
    others: &[&[ControlPair]],
    seq: &ControlSequence,
    denominator: DmrDenominator,
) -> Result<f64> {
    if others.is_empty() {
        return Err(domain("DMR needs at least one comparison run"));
    }
    let mut reliable = 0usize;
    for other in others {
        if rer(run, other, seq)? == 100.0 {
            reliable += 1;
        }
    }
    let denom = match denominator {
        DmrDenominator::Runs => others.len(),
        DmrDenominator::Levels => seq.len(),
    };
    Ok(100.0 * reliable as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    /// Longest monotone subsequence, not necessarily contiguous.
    #[default]
    Subsequence,
    /// Longest contiguous monotone run.
    Contiguous,
}

/// Length of the longest non-decreasing subsequence, in `O(n log n)`.
fn longest_non_decreasing(values: impl Iterator<Item = f64>) -> usize {
    let mut tails: Vec<f64> = Vec::new();
    for v in values {
        let idx = tails.partition_point(|&t| t <= v);
        if idx == tails.len() {
            tails.push(v);
        } else {
            tails[idx] = v;
        }
    }
    tails.len()
}

/// Length of the longest monotone (non-decreasing or non-increasing)
/// subsequence.
pub fn longest_monotone_subsequence(values: &[f64]) -> usize {
    longest_non_decreasing(values.iter().copied())
        .max(longest_non_decreasing(values.iter().map(|v| -v)))
}

fn longest_monotone_run(values: &[f64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let (mut up, mut down, mut best) = (1usize, 1usize, 1usize);
    for w in values.windows(2) {
        up = if w[1] >= w[0] { up + 1 } else { 1 };
        down = if w[1] <= w[0] { down + 1 } else { 1 };
        best = best.max(up).max(down);
    }
    best
}

/// Robustness rate of a backbone segment (working to convergence level).
pub fn rr(segment: &[f64], mode: Monotonicity) -> Result<f64> {
    if segment.is_empty() {
        return Err(domain("robustness rate of an empty segment"));
    }
    if segment.iter().any(|v| !v.is_finite()) {
        return Err(domain("backbone segment contains non-finite values"));
    }
    let mu = match mode {
        Monotonicity::Subsequence => longest_monotone_subsequence(segment),
        Monotonicity::Contiguous => longest_monotone_run(segment),
    };
    Ok(100.0 * mu as f64 / segment.len() as f64)
}

/// Inputs for one run of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEvaluation<'a> {
    pub name: String,
    pub pairs: Vec<ControlPair>,
    /// Backbone values between the working and convergence levels.
    pub segment: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub pe: Vec<f64>,
    pub mape: f64,
    /// `None` when there is no other run to compare with.
    pub dmr: Option<f64>,
    pub rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRer {
    pub first: String,
    pub second: String,
    pub rer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub control_positions: Vec<u64>,
    pub runs: Vec<RunMetrics>,
    pub rer: Vec<PairwiseRer>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsOptions {
    pub dmr_denominator: DmrDenominator,
    pub monotonicity: Monotonicity,
}

pub fn evaluate(
    seq: &ControlSequence,
    runs: &[RunEvaluation<'_>],
    options: MetricsOptions,
) -> Result<MetricsReport> {
    let mut out = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        seq.check(&run.pairs)?;
        let pe = run
            .pairs
            .iter()
            .map(|p| percentage_error(p.ac, p.eac))
            .collect::<Result<Vec<_>>>()?;
        let others: Vec<&[ControlPair]> = runs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, r)| r.pairs.as_slice())
            .collect();
        let dmr = if others.is_empty() {
            None
        } else {
            Some(dmr(&run.pairs, &others, seq, options.dmr_denominator)?)
        };
        out.push(RunMetrics {
            name: run.name.clone(),
            mape: mape(&pe)?,
            pe,
            dmr,
            rr: rr(run.segment, options.monotonicity)?,
        });
    }
    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            pairs.push(PairwiseRer {
                first: runs[i].name.clone(),
                second: runs[j].name.clone(),
                rer: rer(&runs[i].pairs, &runs[j].pairs, seq)?,
            });
        }
    }
    Ok(MetricsReport {
        control_positions: seq.positions().to_vec(),
        runs: out,
        rer: pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(ac: f64, eac: f64) -> ControlPair {
        ControlPair { ac, eac }
    }

    #[test]
    fn percentage_error_values() {
        assert!((percentage_error(96.43, 96.35).unwrap() - (-0.082962)).abs() < 1e-5);
        assert!((percentage_error(97.15, 97.09).unwrap() - (-0.061760)).abs() < 1e-5);
        assert_eq!(percentage_error(90.0, 90.0).unwrap(), 0.0);
        assert!(percentage_error(0.0, 90.0).is_err());
        assert!(percentage_error(-1.0, 90.0).is_err());
    }

    #[test]
    fn mape_values() {
        assert!((mape(&[0.1, -0.2, 0.3]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(mape(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(mape(&[]).is_err());
    }

    #[test]
    fn re_cases() {
        assert_eq!(reliability_estimation(pair(96.4, 96.3), pair(96.1, 96.0)), 1);
        assert_eq!(reliability_estimation(pair(96.4, 96.0), pair(96.1, 96.3)), 0);
        assert_eq!(reliability_estimation(pair(96.4, 96.0), pair(96.4, 99.0)), 1);
    }

    #[test]
    fn rer_counts() {
        let seq = ControlSequence::new(vec![1, 2, 3, 4]).unwrap();
        let a = [pair(90.0, 90.0), pair(91.0, 91.0), pair(92.0, 92.0), pair(93.0, 93.0)];
        let b = [pair(89.0, 89.0), pair(90.0, 90.0), pair(91.0, 91.0), pair(92.0, 92.0)];
        assert_eq!(rer(&a, &b, &seq).unwrap(), 100.0);
        let mut c = b;
        c[2].eac = 95.0;
        assert_eq!(rer(&a, &c, &seq).unwrap(), 75.0);
        assert!(rer(&a, &c[..3], &seq).is_err());
    }

    #[test]
    fn dmr_table_style_values() {
        let seq = ControlSequence::new(vec![10, 20]).unwrap();
        let run = [pair(95.0, 95.0), pair(96.0, 96.0)];
        let good = [pair(94.0, 94.0), pair(95.0, 95.0)];
        let bad = [pair(94.0, 95.5), pair(95.0, 95.0)];
        let mut others: Vec<&[ControlPair]> = vec![&good; 8];
        others.push(&bad);
        let v = dmr(&run, &others, &seq, DmrDenominator::Runs).unwrap();
        assert_eq!(format!("{v:.2}"), "88.89");
        let others: Vec<&[ControlPair]> = vec![&good, &good, &good, &good, &good, &good, &good, &bad];
        let v = dmr(&run, &others, &seq, DmrDenominator::Runs).unwrap();
        assert_eq!(format!("{v:.2}"), "87.50");
        let v = dmr(&run, &others, &seq, DmrDenominator::Levels).unwrap();
        assert_eq!(v, 350.0);
        assert!(dmr(&run, &[], &seq, DmrDenominator::Runs).is_err());
    }

    #[test]
    fn rr_values() {
        assert_eq!(rr(&[1.0, 2.0, 3.0], Monotonicity::Subsequence).unwrap(), 100.0);
        assert_eq!(rr(&[3.0, 2.0, 1.0], Monotonicity::Subsequence).unwrap(), 100.0);
        assert_eq!(rr(&[1.0, 2.0, 5.0, 3.0, 4.0], Monotonicity::Subsequence).unwrap(), 80.0);
        assert_eq!(rr(&[1.0, 2.0, 5.0, 3.0, 4.0], Monotonicity::Contiguous).unwrap(), 60.0);
        assert_eq!(rr(&[7.0], Monotonicity::Subsequence).unwrap(), 100.0);
        assert!(rr(&[], Monotonicity::Subsequence).is_err());
    }

    fn brute_force_monotone(values: &[f64]) -> usize {
        let n = values.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let picked: Vec<f64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).collect();
            let up = picked.windows(2).all(|w| w[0] <= w[1]);
            let down = picked.windows(2).all(|w| w[0] >= w[1]);
            if up || down {
                best = best.max(picked.len());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn monotone_subsequence_matches_brute_force(values in prop::collection::vec(0u8..6, 1..=12)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            prop_assert_eq!(longest_monotone_subsequence(&v), brute_force_monotone(&v));
        }

        #[test]
        fn rer_is_symmetric(
            a in prop::collection::vec((80.0f64..100.0, 80.0f64..100.0), 5),
            b in prop::collection::vec((80.0f64..100.0, 80.0f64..100.0), 5),
        ) {
            let seq = ControlSequence::new(vec![1, 2, 3, 4, 5]).unwrap();
            let a: Vec<_> = a.into_iter().map(|(ac, eac)| pair(ac, eac)).collect();
            let b: Vec<_> = b.into_iter().map(|(ac, eac)| pair(ac, eac)).collect();
            prop_assert_eq!(rer(&a, &b, &seq).unwrap(), rer(&b, &a, &seq).unwrap());
        }

        #[test]
        fn mape_is_permutation_invariant(mut pe in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let m = mape(&pe).unwrap();
            pe.reverse();
            prop_assert!((mape(&pe).unwrap() - m).abs() < 1e-12);
            prop_assert!(m >= 0.0);
        }

        #[test]
        fn rr_bounds(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let r = rr(&values, Monotonicity::Subsequence).unwrap();
            let n = values.len() as f64;
            prop_assert!(r >= 100.0 / n - 1e-12 && r <= 100.0);
            let monotone = values.windows(2).all(|w| w[0] <= w[1]) || values.windows(2).all(|w| w[0] >= w[1]);
            prop_assert_eq!(r == 100.0, monotone);
        }
    }
}

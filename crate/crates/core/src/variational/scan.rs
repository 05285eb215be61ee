use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative band under which a scanned value counts as zero.
pub const ZERO_RTOL: f64 = 1e-7;
/// Minimum log-log growth rate of `|v|` that counts as divergence.
pub const GROWTH_EXPONENT: f64 = 0.5;
/// Relative spread allowed in the tail for a nonzero limit.
pub const STABLE_RTOL: f64 = 1e-3;
/// Number of trailing truncation points inspected by the verdict.
pub const TAIL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    ConvergesToZero,
    ConvergesNonzero { limit: f64 },
    Diverges { direction: Direction },
    Inconclusive,
}

impl Verdict {
    pub fn is_zero(&self) -> bool {
        matches!(self, Verdict::ConvergesToZero)
    }
}

/// One sampled `T′` with its scale index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub t: f64,
    pub value: f64,
}

/// Running infima of a sampled quantity over `T′ ∈ [T, T_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationScan {
    #[serde(rename = "T_values")]
    pub t_values: Vec<f64>,
    pub inf_values: Vec<f64>,
    #[serde(rename = "argmin_Tprime")]
    pub argmin_tprime: Vec<f64>,
    #[serde(rename = "T_max")]
    pub t_max: f64,
    /// Value at `T_max` itself.
    pub last_value: f64,
    pub tol_zero: f64,
    pub verdict: Verdict,
}

impl TruncationScan {
    /// Builds the scan from samples at consecutive scale points ending at `T_max`.
    /// Each entry of `grid_indices` must be one of the sampled indices.
    pub fn from_samples(samples: &[Sample], grid_indices: &[usize]) -> Result<Self> {
        if grid_indices.is_empty() {
            return Err(Error::Argument("truncation grid is empty".into()));
        }
        if samples.is_empty() {
            return Err(Error::Argument("no sampled points".into()));
        }
        if grid_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "truncation grid must be strictly increasing".into(),
            ));
        }
        if samples.windows(2).any(|w| w[1].index != w[0].index + 1) {
            return Err(Error::Argument(
                "samples must sit at consecutive scale indices".into(),
            ));
        }
        let first = samples[0].index;
        let last = samples[samples.len() - 1].index;
        let pos = |n: usize| -> Result<usize> {
            if n < first || n > last {
                return Err(Error::Argument(format!(
                    "truncation index {n} lies outside the sampled window {first}..={last}"
                )));
            }
            Ok(n - first)
        };

        // Suffix minima; `<=` keeps the smallest T′ among ties.
        let mut suffix = vec![0usize; samples.len()];
        let mut best = samples.len() - 1;
        for j in (0..samples.len()).rev() {
            if samples[j].value <= samples[best].value {
                best = j;
            }
            suffix[j] = best;
        }

        let mut t_values = Vec::with_capacity(grid_indices.len());
        let mut inf_values = Vec::with_capacity(grid_indices.len());
        let mut argmin = Vec::with_capacity(grid_indices.len());
        let mut probes = Vec::with_capacity(grid_indices.len());
        for &n in grid_indices {
            let j = pos(n)?;
            let m = suffix[j];
            t_values.push(samples[j].t);
            inf_values.push(samples[m].value);
            argmin.push(samples[m].t);
            probes.push(samples[j]);
        }
        let end = samples[samples.len() - 1];
        let max_abs = samples.iter().fold(0.0f64, |m, s| m.max(s.value.abs()));
        let tol_zero = ZERO_RTOL * (1.0 + max_abs);
        let verdict = classify(&inf_values, &probes, end, tol_zero);
        Ok(Self {
            t_values,
            inf_values,
            argmin_tprime: argmin,
            t_max: end.t,
            last_value: end.value,
            tol_zero,
            verdict,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,inf_value,argmin_Tprime\n");
        for ((t, v), a) in self
            .t_values
            .iter()
            .zip(&self.inf_values)
            .zip(&self.argmin_tprime)
        {
            let _ = writeln!(out, "{t},{v},{a}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scan serializes")
    }

    /// Whether every infimum is exactly zero.
    pub fn all_zero(&self) -> bool {
        self.inf_values.iter().all(|v| *v == 0.0) && self.last_value == 0.0
    }
}

fn classify(inf_values: &[f64], probes: &[Sample], end: Sample, tol_zero: f64) -> Verdict {
    let n = inf_values.len();
    let tail = &inf_values[n.saturating_sub(TAIL)..];
    if tail.iter().all(|v| v.abs() <= tol_zero) {
        return Verdict::ConvergesToZero;
    }

    let mut path: Vec<Sample> = probes[probes.len().saturating_sub(TAIL)..].to_vec();
    if path.last().map(|s| s.index) != Some(end.index) {
        path.push(end);
    }
    if path.len() >= 2 && end.value.abs() > tol_zero {
        let monotone = path.windows(2).all(|w| w[1].value.abs() >= w[0].value.abs());
        let one_sign = path
            .iter()
            .filter(|s| s.value != 0.0)
            .all(|s| s.value.signum() == end.value.signum());
        let first = path[0];
        let growth = if first.value == 0.0 {
            f64::INFINITY
        } else {
            let dv = (end.value.abs() / first.value.abs()).ln();
            let di = ((end.index + 1) as f64 / (first.index + 1) as f64).ln();
            dv / di
        };
        if monotone && one_sign && growth >= GROWTH_EXPONENT {
            let direction = if end.value > 0.0 {
                Direction::Positive
            } else {
                Direction::Negative
            };
            return Verdict::Diverges { direction };
        }
    }

    let last = tail[tail.len() - 1];
    let spread = tail.iter().fold(0.0f64, |m, v| m.max((v - last).abs()));
    if spread <= STABLE_RTOL * last.abs() + tol_zero {
        return Verdict::ConvergesNonzero { limit: last };
    }
    Verdict::Inconclusive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(values: impl Fn(usize) -> f64, n: usize) -> Vec<Sample> {
        (0..=n)
            .map(|i| Sample {
                index: i,
                t: i as f64,
                value: values(i),
            })
            .collect()
    }

    fn grid() -> Vec<usize> {
        (1..=10).map(|j| 20 * j).collect()
    }

    #[test]
    fn zero_scan() {
        let s = TruncationScan::from_samples(&samples(|_| 0.0, 200), &grid()).unwrap();
        assert_eq!(s.verdict, Verdict::ConvergesToZero);
        assert!(s.all_zero());
        assert_eq!(s.argmin_tprime[0], 20.0);
    }

    #[test]
    fn polynomial_growth_diverges() {
        let s = TruncationScan::from_samples(&samples(|i| (i as f64).powi(3), 200), &grid()).unwrap();
        assert_eq!(
            s.verdict,
            Verdict::Diverges {
                direction: Direction::Positive
            }
        );
        let s = TruncationScan::from_samples(&samples(|i| -4.0 * i as f64, 200), &grid()).unwrap();
        assert_eq!(
            s.verdict,
            Verdict::Diverges {
                direction: Direction::Negative
            }
        );
        // the infimum is attained at the boundary
        assert!(s.argmin_tprime.iter().all(|a| *a == 200.0));
    }

    #[test]
    fn settles_to_a_limit() {
        let s =
            TruncationScan::from_samples(&samples(|i| 3.0 + 1.0 / (1.0 + i as f64).powi(2), 200), &grid())
                .unwrap();
        match s.verdict {
            Verdict::ConvergesNonzero { limit } => assert!((limit - 3.0).abs() < 1e-3),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn slow_drift_is_inconclusive() {
        let s =
            TruncationScan::from_samples(&samples(|i| -(1.0 + i as f64).powf(-0.1), 200), &grid()).unwrap();
        assert_eq!(s.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn ties_report_smallest_argmin() {
        let s = TruncationScan::from_samples(&samples(|i| if i >= 50 { -1.0 } else { 0.0 }, 200), &grid())
            .unwrap();
        assert_eq!(s.argmin_tprime[0], 50.0);
        assert_eq!(s.argmin_tprime[3], 80.0);
    }

    #[test]
    fn csv_and_json() {
        let s = TruncationScan::from_samples(&samples(|_| 0.0, 40), &[20, 40]).unwrap();
        assert_eq!(s.to_csv(), "T,inf_value,argmin_Tprime\n20,0,20\n40,0,40\n");
        let back: TruncationScan = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_json().contains("\"converges_to_zero\""));
    }

    #[test]
    fn grid_errors() {
        assert!(TruncationScan::from_samples(&samples(|_| 0.0, 10), &[]).is_err());
        assert!(TruncationScan::from_samples(&samples(|_| 0.0, 10), &[20]).is_err());
        assert!(TruncationScan::from_samples(&samples(|_| 0.0, 10), &[5, 3]).is_err());
    }
}

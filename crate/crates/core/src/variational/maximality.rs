use serde::{Deserialize, Serialize};

use crate::calculus::Trajectory;
use crate::error::Result;
use crate::exec::Execution;

use super::{
    admissibility_check, grid_to_indices, lagrangian_at, window_bounds, Direction, Problem, Sample,
    TruncationScan, Verdict, ADMISSIBLE_TOL,
};

/// Scalings applied to each default variation.
pub const PERTURBATION_SIZES: [f64; 6] = [0.5, -0.5, 0.1, -0.1, 0.01, -0.01];

/// Variations with `η^{Δ^i}(a) = 0` for `i < r`:
/// `η_d(t) = Π_{i<r}(t − σ^i(a)) · (t − a)^{d−r}` for `d = r..r+3`.
pub fn default_perturbations(p: &Problem) -> Result<Vec<Trajectory>> {
    let r = p.order();
    let a = p.start();
    let roots: Vec<f64> = (0..r).map(|i| p.scale().point(i)).collect::<Result<_>>()?;
    Ok((r..=r + 3)
        .map(|d| {
            let roots = roots.clone();
            let extra = (d - r) as i32;
            Trajectory::new(format!("eta_{d}"), move |t| {
                roots.iter().map(|s| t - s).product::<f64>() * (t - a).powi(extra)
            })
        })
        .collect())
}

/// `x* + ε·η` for every default variation and size.
pub fn default_competitors(p: &Problem, xstar: &Trajectory) -> Result<Vec<Trajectory>> {
    let etas = default_perturbations(p)?;
    Ok(etas
        .iter()
        .flat_map(|eta| {
            PERTURBATION_SIZES.iter().map(move |&eps| {
                xstar
                    .perturbed(eta, eps)
                    .with_label(format!("x* + {eps}*{}", eta.label()))
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorOutcome {
    pub label: String,
    pub admissibility: Vec<f64>,
    /// `None` when the competitor was inadmissible and skipped.
    pub scan: Option<TruncationScan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaximalityVerdict {
    /// No competitor in the battery beat the candidate. Not a proof.
    NotRejected,
    Rejected {
        witness: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalityReport {
    pub outcomes: Vec<CompetitorOutcome>,
    pub verdict: MaximalityVerdict,
}

impl MaximalityReport {
    pub fn skipped(&self) -> usize {
        self.outcomes.iter().filter(|o| o.scan.is_none()).count()
    }
}

fn beats_candidate(scan: &TruncationScan) -> bool {
    match scan.verdict {
        Verdict::Diverges {
            direction: Direction::Positive,
        } => true,
        Verdict::ConvergesNonzero { limit } => limit > scan.tol_zero,
        _ => false,
    }
}

/// Scans `Δ(T′) = ∫_a^{T′} (L⟨x⟩ − L⟨x*⟩) Δt` for each admissible competitor.
///
/// The candidate is rejected when some scan settles above zero or diverges
/// upward; inconclusive scans are reported but do not reject.
pub fn weak_maximality_test(
    p: &Problem,
    xstar: &Trajectory,
    competitors: &[Trajectory],
    t_grid: &[f64],
    exec: Execution,
) -> Result<MaximalityReport> {
    let grid = grid_to_indices(p, t_grid)?;
    let (lo, hi) = window_bounds(p, &grid);
    let scale = p.scale();
    let points: Vec<f64> = (0..=hi).map(|n| scale.point(n)).collect::<Result<_>>()?;
    let mus: Vec<f64> = (0..hi).map(|n| scale.mu_at(n)).collect::<Result<_>>()?;
    let base = exec
        .map_range(0..hi, |n| lagrangian_at(p, xstar, n))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;

    let outcomes = exec
        .map(competitors, |x| -> Result<CompetitorOutcome> {
            let admissibility = admissibility_check(p, x);
            if admissibility
                .iter()
                .any(|r| r.is_nan() || r.abs() > ADMISSIBLE_TOL)
            {
                return Ok(CompetitorOutcome {
                    label: x.label().to_string(),
                    admissibility,
                    scan: None,
                });
            }
            let mut acc = 0.0;
            let mut samples = Vec::with_capacity(hi - lo + 1);
            for n in 0..=hi {
                if n >= lo {
                    samples.push(Sample {
                        index: n,
                        t: points[n],
                        value: acc,
                    });
                }
                if n < hi {
                    acc += (lagrangian_at(p, x, n)? - base[n]) * mus[n];
                }
            }
            Ok(CompetitorOutcome {
                label: x.label().to_string(),
                admissibility,
                scan: Some(TruncationScan::from_samples(&samples, &grid)?),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let verdict = outcomes
        .iter()
        .find(|o| o.scan.as_ref().is_some_and(beats_candidate))
        .map(|o| MaximalityVerdict::Rejected {
            witness: o.label.clone(),
        })
        .unwrap_or(MaximalityVerdict::NotRejected);
    Ok(MaximalityReport { outcomes, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::TimeScale;
    use crate::variational::{is_admissible, Lagrangian};

    fn example1() -> Problem {
        Problem::new(
            TimeScale::integer(0.0).unwrap(),
            vec![0.0, 1.0],
            Lagrangian::parse("-(u2)^2", 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn perturbations_have_zero_initial_data() {
        let p = example1();
        let xstar = Trajectory::parse("t").unwrap();
        let comps = default_competitors(&p, &xstar).unwrap();
        assert_eq!(comps.len(), 24);
        assert!(comps.iter().all(|c| is_admissible(&p, c)));
    }

    #[test]
    fn extremal_survives_and_cubic_falls() {
        let p = example1();
        let grid = p.t_grid().unwrap();
        let xstar = Trajectory::parse("t").unwrap();
        let comps = default_competitors(&p, &xstar).unwrap();
        let rep = weak_maximality_test(&p, &xstar, &comps, &grid, Execution::Parallel).unwrap();
        assert_eq!(rep.verdict, MaximalityVerdict::NotRejected);

        let cubic = Trajectory::parse("t^3").unwrap();
        let rep = weak_maximality_test(
            &p,
            &cubic,
            std::slice::from_ref(&xstar),
            &grid,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(rep.verdict, MaximalityVerdict::Rejected { witness: "t".into() });
    }

    #[test]
    fn self_comparison_is_zero_and_inadmissible_is_skipped() {
        let p = example1();
        let grid = p.t_grid().unwrap();
        let xstar = Trajectory::parse("t").unwrap();
        let off = Trajectory::parse("t+1").unwrap();
        let rep =
            weak_maximality_test(&p, &xstar, &[xstar.clone(), off], &grid, Execution::Parallel).unwrap();
        let scan = rep.outcomes[0].scan.as_ref().unwrap();
        assert!(scan.all_zero());
        assert!(rep.outcomes[1].scan.is_none());
        assert_eq!(rep.skipped(), 1);
        assert_eq!(rep.verdict, MaximalityVerdict::NotRejected);
    }
}

use serde::{Deserialize, Serialize};
use tsvar_core::variational::MaximalityVerdict;

use crate::commands::{solve_report, verdict_name, verify_report};
use crate::config::ProblemConfig;
use crate::CliError;

/// Bundled configs with their expected results.
pub const BUNDLED: [(&str, &str, &str); 2] = [
    (
        "example1",
        include_str!("../configs/example1.json"),
        include_str!("../golden/example1.json"),
    ),
    (
        "example2",
        include_str!("../configs/example2.json"),
        include_str!("../golden/example2.json"),
    ),
];

const DECIMALS: i32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Golden {
    pub name: String,
    pub coefficients: Vec<f64>,
    pub family_dim: usize,
    pub transversality: Vec<String>,
    pub verify_pass: bool,
    pub weak_maximality: String,
}

#[derive(Debug, Serialize)]
pub struct ExampleResult {
    pub name: String,
    pub observed: Golden,
    pub diffs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ExamplesReport {
    pub command: &'static str,
    pub examples: Vec<ExampleResult>,
    pub pass: bool,
}

/// Rounds to the golden precision and folds `-0` into `0`.
pub fn round(x: f64) -> f64 {
    let m = 10f64.powi(DECIMALS);
    let r = (x * m).round() / m;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn observe(name: &str, config_text: &str) -> Result<Golden, CliError> {
    let config = ProblemConfig::from_json(config_text)?;
    let problem = config.problem()?;
    let solved = solve_report(&config, &problem)?.map_err(|e| CliError::Failure(format!("{name}: {e}")))?;
    let verified = verify_report(&config, &problem)?;
    let weak_maximality = match &verified.weak_maximality {
        None => "not_run",
        Some(r) => match r.verdict {
            MaximalityVerdict::NotRejected => "not_rejected",
            MaximalityVerdict::Rejected { .. } => "rejected",
        },
    };
    Ok(Golden {
        name: name.to_string(),
        coefficients: solved.coefficients.iter().copied().map(round).collect(),
        family_dim: solved.family_dim,
        transversality: verified
            .transversality
            .iter()
            .map(|s| verdict_name(&s.scan.verdict).to_string())
            .collect(),
        verify_pass: verified.pass,
        weak_maximality: weak_maximality.to_string(),
    })
}

pub fn diff(expected: &Golden, observed: &Golden) -> Vec<String> {
    let mut out = Vec::new();
    if expected.coefficients.len() != observed.coefficients.len() {
        out.push(format!(
            "coefficients: expected {} entries, got {}",
            expected.coefficients.len(),
            observed.coefficients.len()
        ));
    } else {
        let tol = 0.5 * 10f64.powi(-DECIMALS);
        for (i, (e, o)) in expected
            .coefficients
            .iter()
            .zip(&observed.coefficients)
            .enumerate()
        {
            if (e - o).abs() > tol {
                out.push(format!("coefficients[{i}]: expected {e}, got {o}"));
            }
        }
    }
    if expected.family_dim != observed.family_dim {
        out.push(format!(
            "family_dim: expected {}, got {}",
            expected.family_dim, observed.family_dim
        ));
    }
    if expected.transversality != observed.transversality {
        out.push(format!(
            "transversality: expected {:?}, got {:?}",
            expected.transversality, observed.transversality
        ));
    }
    if expected.verify_pass != observed.verify_pass {
        out.push(format!(
            "verify_pass: expected {}, got {}",
            expected.verify_pass, observed.verify_pass
        ));
    }
    if expected.weak_maximality != observed.weak_maximality {
        out.push(format!(
            "weak_maximality: expected {}, got {}",
            expected.weak_maximality, observed.weak_maximality
        ));
    }
    out
}

pub fn run_all() -> Result<Vec<ExampleResult>, CliError> {
    BUNDLED
        .iter()
        .map(|(name, config, golden)| {
            let expected: Golden = serde_json::from_str(golden)
                .map_err(|e| CliError::Config(format!("golden/{name}.json: {e}")))?;
            let observed = observe(name, config)?;
            Ok(ExampleResult {
                name: name.to_string(),
                diffs: diff(&expected, &observed),
                observed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_folds_negative_zero() {
        assert_eq!(round(-1e-12).to_bits(), 0.0f64.to_bits());
        assert_eq!(round(1.23456789), 1.234568);
    }

    #[test]
    fn golden_files_parse() {
        for (name, _, golden) in BUNDLED {
            let g: Golden = serde_json::from_str(golden).unwrap();
            assert_eq!(g.name, name);
        }
    }

    #[test]
    fn diff_reports_each_mismatch() {
        let g: Golden = serde_json::from_str(BUNDLED[0].2).unwrap();
        let mut other = g.clone();
        other.coefficients[0] = 1.0;
        other.verify_pass = false;
        assert_eq!(diff(&g, &other).len(), 2);
        assert!(diff(&g, &g).is_empty());
    }
}

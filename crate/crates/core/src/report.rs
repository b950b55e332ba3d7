//! Chain files, analysis reports and sweep rows.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::MarkovTriple;
use crate::curvature::{estimate_ricci, CurvatureConfig};
use crate::error::Error;
use crate::inequalities::{buser_constant, inequality_report, mixing_time_bound, InequalityReport, MlsiConfig};
use crate::metric::TransportConfig;
use crate::verifier::{entropy_decay_rate, run_suite, CheckConfig, CheckReport, VerifierConfig};

/// JSON description of a chain: labels, row-major rates, optional `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub states: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Problems with user input, as opposed to numerical failures.
#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error("invalid chain: {0}")]
    Validation(#[from] Error),
}

impl ChainFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        serde_json::from_str(text).map_err(|e| InputError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// Canonical form: pretty-printed JSON with a trailing newline.
    pub fn emit(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("chain files serialize");
        out.push('\n');
        out
    }

    pub fn to_triple(&self) -> Result<MarkovTriple, InputError> {
        let n = self.states.len();
        if self.rates.len() != n {
            return Err(InputError::Field {
                field: "rates".into(),
                message: format!("expected {n} rows, found {}", self.rates.len()),
            });
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != n {
                return Err(InputError::Field {
                    field: format!("rates[{i}]"),
                    message: format!("expected {n} entries, found {}", row.len()),
                });
            }
        }
        if let Some(pi) = &self.pi {
            if pi.len() != n {
                return Err(InputError::Field { field: "pi".into(), message: format!("expected {n} entries, found {}", pi.len()) });
            }
        }
        let rates = DMatrix::from_fn(n, n, |x, y| self.rates[x][y]);
        let pi = self.pi.as_ref().map(|p| DVector::from_column_slice(p));
        Ok(MarkovTriple::new(self.states.clone(), rates, pi)?)
    }

    pub fn from_triple(chain: &MarkovTriple, metadata: BTreeMap<String, String>) -> Self {
        let n = chain.len();
        Self {
            states: chain.labels().to_vec(),
            rates: (0..n).map(|x| (0..n).map(|y| chain.rate(x, y)).collect()).collect(),
            pi: Some(chain.pi().iter().copied().collect()),
            metadata,
        }
    }
}

/// Reads and validates a chain file.
pub fn parse_chain_file(path: &Path) -> Result<MarkovTriple, InputError> {
    ChainFile::read(path)?.to_triple()
}

/// Knobs of one analysis, recorded verbatim in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub seed: u64,
    /// Path segments of every transport computation.
    pub steps: usize,
    /// Random starts of the curvature and MLSI searches.
    pub starts: usize,
    /// Random samples per check.
    pub samples: usize,
    /// Check ids to run; `None` runs all of them.
    pub checks: Option<Vec<String>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { seed: 42, steps: 32, starts: 16, samples: 24, checks: None }
    }
}

impl AnalysisConfig {
    pub fn verifier(&self) -> VerifierConfig {
        VerifierConfig {
            checks: CheckConfig {
                samples: self.samples,
                seed: self.seed,
                transport: TransportConfig { seed: self.seed, ..TransportConfig::with_steps(self.steps) },
                ..CheckConfig::default()
            },
            curvature: CurvatureConfig { starts: self.starts, seed: self.seed, ..CurvatureConfig::default() },
            only: self.checks.clone(),
            ..VerifierConfig::default()
        }
    }

    pub fn mlsi(&self) -> MlsiConfig {
        MlsiConfig { starts: self.starts, seed: self.seed, ..MlsiConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    /// Family spec or file the chain came from.
    pub source: String,
    pub states: usize,
    pub edges: usize,
    pub q_star: f64,
    pub pi_star: f64,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBlock {
    /// Smallest curvature found by the optimizer.
    pub estimate: Option<f64>,
    /// Smallest curvature seen on the certification samples.
    pub sampled_minimum: Option<f64>,
    /// Value the checks were run with.
    pub used: f64,
    pub nonnegative: bool,
    pub witness_density: Option<Vec<f64>>,
    pub witness_potential: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub chain: ChainSummary,
    pub curvature: CurvatureBlock,
    pub inequalities: Option<InequalityReport>,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("reports serialize");
        out.push('\n');
        out
    }
}

/// Curvature estimate, inequality constants and every check.
pub fn run_analyze(chain: &MarkovTriple, source: &str, cfg: &AnalysisConfig) -> ReportFile {
    let suite = run_suite(chain, &cfg.verifier());
    let mut notes = vec![
        "square-exponential moment variants reduce to the diameter checks on a finite state space".to_string(),
    ];
    let mut passed = suite.passed();
    let inequalities = match inequality_report(chain, &cfg.mlsi()) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("inequality constants failed: {e}"));
            passed = false;
            None
        }
    };
    let curvature = CurvatureBlock {
        estimate: suite.estimate.as_ref().map(|e| e.kappa),
        sampled_minimum: suite.kappa_sampled,
        used: suite.kappa,
        nonnegative: suite.nonnegative,
        witness_density: suite.estimate.as_ref().map(|e| e.witness_density.values().as_slice().to_vec()),
        witness_potential: suite.estimate.as_ref().map(|e| e.witness_potential.values().as_slice().to_vec()),
    };
    ReportFile {
        chain: ChainSummary {
            source: source.to_string(),
            states: chain.len(),
            edges: chain.edges().len(),
            q_star: chain.q_star(),
            pi_star: chain.pi_star(),
            labels: chain.labels().to_vec(),
        },
        curvature,
        inequalities,
        checks: suite.reports,
        passed,
        notes,
        provenance: Provenance {
            tool: "ricci".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
        },
    }
}

pub const SWEEP_HEADER: &str = "param,n,kappa,lambda1,h,mlsi,D_upper,liyau_slack,buser_slack,mixing_exact,mixing_bound";

/// Mixing times in sweep rows are for this total-variation level.
pub const SWEEP_EPSILON: f64 = 0.25;

/// One instance of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub n: usize,
    pub kappa: f64,
    pub lambda1: f64,
    pub h: f64,
    pub mlsi: f64,
    #[serde(rename = "D_upper")]
    pub d_upper: f64,
    /// `λ₁ - 1/(e D̂²)`.
    pub liyau_slack: f64,
    /// `h - ⅓√(Q* λ₁)`.
    pub buser_slack: f64,
    pub mixing_exact: f64,
    /// `D̂²/4 + log(1/ε)/λ` with the observed entropy decay rate `λ`.
    pub mixing_bound: f64,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.param,
            self.n,
            self.kappa,
            self.lambda1,
            self.h,
            self.mlsi,
            self.d_upper,
            self.liyau_slack,
            self.buser_slack,
            self.mixing_exact,
            self.mixing_bound
        )
    }
}

/// Constants of one sweep instance; no checks are run.
pub fn sweep_row(chain: &MarkovTriple, param: f64, cfg: &AnalysisConfig) -> Result<SweepRow, Error> {
    let kappa = estimate_ricci(chain, &cfg.verifier().curvature)?.kappa;
    let ineq = inequality_report(chain, &cfg.mlsi())?;
    let lambda1 = ineq.lambda1;
    let d = ineq.diameter_upper;
    let grid: Vec<f64> = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|s| s / lambda1).collect();
    let rate = entropy_decay_rate(chain, &grid)?;
    Ok(SweepRow {
        param,
        n: chain.len(),
        kappa,
        lambda1,
        h: ineq.cheeger,
        mlsi: ineq.mlsi_estimate,
        d_upper: d,
        liyau_slack: lambda1 - 1.0 / (std::f64::consts::E * d * d),
        buser_slack: ineq.cheeger - buser_constant(0.0, lambda1, chain.q_star()),
        mixing_exact: ineq.tau_mix[&format!("{SWEEP_EPSILON}")],
        mixing_bound: mixing_time_bound(d, rate, SWEEP_EPSILON)?,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub fn sweep_json(rows: &[SweepRow]) -> String {
    let mut out = serde_json::to_string_pretty(rows).expect("rows serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};

    const TWO_STATE: &str = r#"{"states": ["a", "b"], "rates": [[0, 1], [1, 0]]}"#;

    #[test]
    fn minimal_file_gives_two_point_chain() {
        let chain = ChainFile::parse(TWO_STATE).unwrap().to_triple().unwrap();
        assert_eq!(chain.len(), 2);
        assert!((chain.pi()[0] - 0.5).abs() < 1e-15);
        assert_eq!(chain.labels(), ["a", "b"]);
    }

    #[test]
    fn detailed_balance_violation_names_the_pair() {
        let text = r#"{"states": ["a", "b"], "rates": [[0, 1], [2, 0]], "pi": [0.5, 0.5]}"#;
        let err = ChainFile::parse(text).unwrap().to_triple().unwrap_err();
        match err {
            InputError::Validation(Error::DetailedBalanceViolation { x, y, .. }) => assert_eq!((x, y), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = ChainFile::parse("{\n  \"states\": [\"a\",\n  ]\n}").unwrap_err();
        assert!(matches!(err, InputError::Parse { line: 3, .. }), "{err:?}");
        let ragged = r#"{"states": ["a", "b"], "rates": [[0, 1], [1]]}"#;
        let err = ChainFile::parse(ragged).unwrap().to_triple().unwrap_err();
        assert!(err.to_string().contains("rates[1]"));
    }

    #[test]
    fn canonical_form_round_trips() {
        let chain = make_family(&FamilySpec::zero_range(2, 3)).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("family".to_string(), "zero_range".to_string());
        let text = ChainFile::from_triple(&chain, meta).emit();
        let again = ChainFile::parse(&text).unwrap();
        assert_eq!(again.emit(), text);
        let rebuilt = again.to_triple().unwrap();
        assert_eq!(rebuilt.rates(), chain.rates());
        assert_eq!(rebuilt.pi(), chain.pi());
    }

    #[test]
    fn sweep_rows_respect_the_diameter_bound() {
        let cfg = AnalysisConfig { starts: 4, ..AnalysisConfig::default() };
        let rows: Vec<SweepRow> = (3..=6)
            .map(|l| sweep_row(&make_family(&FamilySpec::torus(l, 1)).unwrap(), l as f64, &cfg).unwrap())
            .collect();
        for r in &rows {
            assert!(r.lambda1 * r.d_upper * r.d_upper >= (-1.0f64).exp());
            assert!(r.liyau_slack > 0.0 && r.buser_slack > 0.0);
            assert!(r.mixing_exact <= r.mixing_bound);
        }
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap(), SWEEP_HEADER);
    }
}

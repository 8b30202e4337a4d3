//! JSON problem files.
//!
//! ```json
//! {
//!   "horizon": 1.0,
//!   "steps": 100,
//!   "gamma": 4e-7,
//!   "assets": [
//!     { "name": "asset1", "sigma": 0.9375, "eta": 0.045, "phi": 0.5,
//!       "psi": 0.0081, "rho_max": 0.2, "q0": 300000, "volume": 2000000 }
//!   ],
//!   "correlation": [[1.0]]
//! }
//! ```
//!
//! `volume` is either one number (constant over the grid) or an array of
//! `steps` values. At most one of `covariance` (Σ itself) and `correlation`
//! (combined with the asset `sigma`s) may be given; with neither, assets are
//! uncorrelated. `spot` is optional and only used for hedge-ratio overlays.
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AssetSpec, CostModel, CovarianceMatrix, LiquidationProblem, TimeGrid, ValidationErrors, VolumeProfile,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VolumeSpec {
    Constant(f64),
    Profile(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub name: String,
    pub sigma: f64,
    pub eta: f64,
    pub phi: f64,
    pub psi: f64,
    pub rho_max: f64,
    pub q0: f64,
    pub volume: VolumeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spot: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub horizon: f64,
    pub steps: usize,
    pub gamma: f64,
    pub assets: Vec<AssetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Error)]
pub enum ProblemFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("give either `covariance` or `correlation`, not both")]
    AmbiguousCovariance,
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemFileError> {
        serde_json::from_str(text).map_err(|e| ProblemFileError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, ProblemFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Builds and validates the problem.
    pub fn to_problem(&self) -> Result<LiquidationProblem, ProblemFileError> {
        let steps = self.steps;
        let assets: Vec<AssetSpec> = self
            .assets
            .iter()
            .map(|a| {
                let volume = match &a.volume {
                    VolumeSpec::Constant(v) => VolumeProfile::constant(*v, steps),
                    VolumeSpec::Profile(v) => VolumeProfile::new(v.clone()),
                };
                let mut spec = AssetSpec::new(
                    a.name.clone(),
                    a.sigma,
                    CostModel::new(a.eta, a.phi, a.psi, a.rho_max),
                    volume,
                );
                spec.spot = a.spot;
                spec
            })
            .collect();
        let sigmas: Vec<f64> = self.assets.iter().map(|a| a.sigma).collect();
        let covariance = match (&self.covariance, &self.correlation) {
            (Some(_), Some(_)) => return Err(ProblemFileError::AmbiguousCovariance),
            (Some(rows), None) => CovarianceMatrix::from_rows(rows),
            (None, Some(rows)) => {
                CovarianceMatrix::from_volatility_correlation(&sigmas, &square(rows))
            }
            (None, None) => CovarianceMatrix::diagonal(&sigmas.iter().map(|s| s * s).collect::<Vec<_>>()),
        };
        let problem = LiquidationProblem {
            q0: self.assets.iter().map(|a| a.q0).collect(),
            gamma: self.gamma,
            assets,
            covariance,
            grid: TimeGrid::new(self.horizon, steps),
        };
        Ok(problem.validate()?)
    }

    /// Writes `problem` back out, with Σ given explicitly.
    pub fn from_problem(problem: &LiquidationProblem) -> Self {
        let assets = problem
            .assets
            .iter()
            .zip(&problem.q0)
            .map(|(a, &q0)| {
                let v = a.volume.values();
                let volume = if v.iter().all(|&x| x == v[0]) {
                    VolumeSpec::Constant(v[0])
                } else {
                    VolumeSpec::Profile(v.to_vec())
                };
                AssetEntry {
                    name: a.name.clone(),
                    sigma: a.sigma,
                    eta: a.cost.eta,
                    phi: a.cost.phi,
                    psi: a.cost.psi,
                    rho_max: a.cost.rho_max,
                    q0,
                    volume,
                    spot: a.spot,
                }
            })
            .collect();
        let s = problem.covariance.entries();
        let covariance = (0..s.nrows())
            .map(|i| (0..s.ncols()).map(|j| s[(i, j)]).collect())
            .collect();
        Self {
            horizon: problem.grid.horizon,
            steps: problem.grid.steps,
            gamma: problem.gamma,
            assets,
            covariance: Some(covariance),
            correlation: None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }
}

// Ragged rows become NaN and are reported by validation.
fn square(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
}

pub fn load_problem(path: &Path) -> Result<LiquidationProblem, ProblemFileError> {
    ProblemFile::read(path)?.to_problem()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    const FIG2: &str = r#"{
        "horizon": 1.0, "steps": 100, "gamma": 4e-7,
        "assets": [{"name": "a", "sigma": 0.9375, "eta": 0.045, "phi": 0.5,
                    "psi": 0.0081, "rho_max": 0.2, "q0": 300000, "volume": 2000000}]
    }"#;

    #[test]
    fn parses_minimal_file() {
        let p = ProblemFile::parse(FIG2).unwrap().to_problem().unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.covariance.entries()[(0, 0)], 0.9375 * 0.9375);
        assert_eq!(p.assets[0].volume.values().len(), 100);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ProblemFile::parse("{\n  \"horizon\": 1.0,\n  \"steps\": ,\n}").unwrap_err();
        match err {
            ProblemFileError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = FIG2.replacen("\"gamma\"", "\"gama\": 1, \"gamma\"", 1);
        assert!(matches!(ProblemFile::parse(&text), Err(ProblemFileError::Parse { .. })));
        let text = FIG2.replacen("\"psi\"", "\"spread\": 1, \"psi\"", 1);
        assert!(matches!(ProblemFile::parse(&text), Err(ProblemFileError::Parse { .. })));
    }

    #[test]
    fn both_covariance_forms_rejected() {
        let text = FIG2.replacen("\"gamma\"", "\"covariance\": [[1]], \"correlation\": [[1]], \"gamma\"", 1);
        let f = ProblemFile::parse(&text).unwrap();
        assert!(matches!(f.to_problem(), Err(ProblemFileError::AmbiguousCovariance)));
    }

    #[test]
    fn validation_errors_surface() {
        let text = FIG2.replace("300000", "500000");
        match ProblemFile::parse(&text).unwrap().to_problem() {
            Err(ProblemFileError::Invalid(errs)) => {
                assert_eq!(errs.0.len(), 1);
                assert_eq!(errs.0[0].kind(), "InfeasibleLiquidation");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_presets() {
        for (name, p) in presets::all_named(20) {
            let f = ProblemFile::from_problem(&p);
            let back = ProblemFile::parse(&f.to_json_pretty()).unwrap().to_problem().unwrap();
            assert_eq!(back.q0, p.q0, "{name}");
            assert_eq!(back.covariance, p.covariance, "{name}");
            assert_eq!(back.assets, p.assets, "{name}");
        }
    }

    #[test]
    fn volume_profile_array() {
        let text = FIG2.replace("\"steps\": 100", "\"steps\": 3").replace("2000000}", "[1e6, 2e6, 3e6]}");
        let p = ProblemFile::parse(&text).unwrap().to_problem().unwrap();
        assert_eq!(p.assets[0].volume.values(), &[1e6, 2e6, 3e6]);
    }
}

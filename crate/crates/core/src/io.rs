//! JSON file formats for problems and solutions.
//!
//! Numbers are written in shortest round-trip form, so `load(save(lp))`
//! reproduces every coefficient bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::{Mode, SolveOutcome, SolverKind};
use crate::error::{IpmError, Result};
use crate::linalg::DenseMatrix;
use crate::model::{LinearProgram, PrimalDualPoint, Residuals};
use crate::reductions::ReductionRecord;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum MatrixData {
    Dense { rows: Vec<Vec<f64>> },
    /// `(row, col, value)` triplets; unlisted entries are zero.
    Coo { entries: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpFile {
    pub schema_version: u32,
    pub m: usize,
    pub n: usize,
    pub a: MatrixData,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl LpFile {
    pub fn from_problem(lp: &LinearProgram, init: Option<&PrimalDualPoint>, provenance: Option<Provenance>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: lp.m(),
            n: lp.n(),
            a: MatrixData::Dense { rows: lp.a.to_rows() },
            b: lp.b.clone(),
            c: lp.c.clone(),
            init: init.map(|p| InitPoint {
                x: p.x.clone(),
                y: p.y.clone(),
                s: p.s.clone(),
            }),
            provenance,
        }
    }

    pub fn problem(&self) -> Result<LinearProgram> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IpmError::InvalidParameter(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let a = match &self.a {
            MatrixData::Dense { rows } => {
                if rows.len() != self.m {
                    return Err(IpmError::Dimension {
                        context: "LP file rows",
                        expected: self.m,
                        found: rows.len(),
                    });
                }
                if self.m == 0 {
                    DenseMatrix::zeros(0, self.n)
                } else {
                    let a = DenseMatrix::from_rows(rows)?;
                    crate::error::check_len("LP file columns", self.n, a.cols())?;
                    a
                }
            }
            MatrixData::Coo { entries } => {
                let mut data = vec![0.0; self.m * self.n];
                let mut seen = vec![false; self.m * self.n];
                for &(i, j, v) in entries {
                    if i >= self.m || j >= self.n {
                        return Err(IpmError::InvalidParameter(format!(
                            "COO entry ({i}, {j}) outside a {}x{} matrix",
                            self.m, self.n
                        )));
                    }
                    if std::mem::replace(&mut seen[i * self.n + j], true) {
                        return Err(IpmError::InvalidParameter(format!("duplicate COO entry ({i}, {j})")));
                    }
                    data[i * self.n + j] = v;
                }
                DenseMatrix::from_row_major(self.m, self.n, data)?
            }
        };
        LinearProgram::new(a, self.b.clone(), self.c.clone())
    }

    /// The embedded start point, validated against the problem dimensions.
    pub fn start(&self) -> Result<Option<PrimalDualPoint>> {
        let Some(init) = &self.init else { return Ok(None) };
        crate::error::check_len("init x", self.n, init.x.len())?;
        crate::error::check_len("init y", self.m, init.y.len())?;
        PrimalDualPoint::new(init.x.clone(), init.y.clone(), init.s.clone()).map(Some)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Reads and validates an LP file, returning the problem and optional start.
pub fn read_lp(path: &Path) -> Result<(LinearProgram, Option<PrimalDualPoint>, LpFile)> {
    let file = LpFile::from_json(&fs::read_to_string(path)?)?;
    let lp = file.problem()?;
    let start = file.start()?;
    Ok((lp, start, file))
}

pub fn write_lp(path: &Path, file: &LpFile) -> Result<()> {
    fs::write(path, file.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub converged: bool,
    pub mode: Mode,
    pub solver: SolverKind,
    pub epsilon: f64,
    pub solver_tolerance: f64,
    pub outer_iterations: usize,
    pub mu: f64,
    pub objective: f64,
    pub residuals: Residuals,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionRecord>,
}

impl SolutionFile {
    pub fn new(lp: &LinearProgram, outcome: &SolveOutcome, mode: Mode, solver: SolverKind, epsilon: f64) -> Self {
        let p = &outcome.point;
        Self {
            converged: outcome.converged,
            mode,
            solver,
            epsilon,
            solver_tolerance: outcome.tolerance,
            outer_iterations: outcome.outer_iterations,
            mu: p.mu(),
            objective: lp.objective(&p.x),
            residuals: outcome.residuals,
            x: p.x.clone(),
            y: p.y.clone(),
            s: p.s.clone(),
            reduction: None,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_coo_agree() {
        let dense = LpFile {
            schema_version: 1,
            m: 2,
            n: 3,
            a: MatrixData::Dense {
                rows: vec![vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.0]],
            },
            b: vec![1.0, 2.0],
            c: vec![0.5; 3],
            init: None,
            provenance: None,
        };
        let coo = LpFile {
            a: MatrixData::Coo {
                entries: vec![(0, 0, 1.0), (1, 1, -3.0), (0, 2, 2.0)],
            },
            ..dense.clone()
        };
        assert_eq!(dense.problem().unwrap(), coo.problem().unwrap());
    }

    #[test]
    fn bad_files_are_rejected() {
        let base = LpFile {
            schema_version: 1,
            m: 1,
            n: 2,
            a: MatrixData::Coo {
                entries: vec![(0, 0, 1.0), (0, 0, 2.0)],
            },
            b: vec![1.0],
            c: vec![1.0, 1.0],
            init: None,
            provenance: None,
        };
        assert!(base.problem().is_err());
        let oob = LpFile {
            a: MatrixData::Coo {
                entries: vec![(0, 5, 1.0)],
            },
            ..base.clone()
        };
        assert!(oob.problem().is_err());
        let bad_init = LpFile {
            a: MatrixData::Dense { rows: vec![vec![1.0, 1.0]] },
            init: Some(InitPoint {
                x: vec![1.0, 0.0],
                y: vec![0.0],
                s: vec![1.0, 1.0],
            }),
            ..base
        };
        assert!(matches!(bad_init.start(), Err(IpmError::LeftInterior { index: 1, .. })));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = LpFile::from_json("{\n  \"schema_version\": 1,\n  \"m\": oops\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (lp, start) = crate::harness::generate_synthetic_lp(3, 7, 5).unwrap();
        let file = LpFile::from_problem(&lp, Some(&start), None);
        let back = LpFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back.problem().unwrap(), lp);
        assert_eq!(back.start().unwrap().unwrap(), start);
        assert_eq!(back.to_json().unwrap(), file.to_json().unwrap());
    }
}

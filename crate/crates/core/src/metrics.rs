//! Error metrics against ground truth and the method comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::phantom::GroundTruth;

/// Mean squared error, optionally restricted to the pixels where `region` is true.
pub fn mse(x: &ScalarField, truth: &ScalarField, region: Option<&[bool]>) -> Result<f64> {
    x.shape().ensure_same(&truth.shape())?;
    if let Some(r) = region {
        if r.len() != x.values().len() {
            return Err(Error::mismatch(x.values().len(), r.len()));
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (a, b)) in x.values().iter().zip(truth.values()).enumerate() {
        if region.is_none_or(|r| r[i]) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(sum / n as f64)
}

/// Dice overlap `2|a∩b| / (|a| + |b|)`; 1 when both are empty.
pub fn dice(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::mismatch(a.len(), b.len()));
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Labels of pixels closer to `c1` than to `c2` (ties count as `c1`).
pub fn threshold_labels(u: &ScalarField, c1: f64, c2: f64) -> Vec<bool> {
    u.values()
        .iter()
        .map(|&x| (c1 - x).powi(2) <= (c2 - x).powi(2))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Per-channel magnitude MSE over the whole grid.
    pub magnitude_mse: [f64; 4],
    /// Per-channel phase MSE over the fluid region.
    pub phase_mse: [f64; 4],
    /// Per-channel phase MSE over the whole grid.
    pub phase_mse_full: [f64; 4],
    /// Velocity MSE over the fluid region.
    pub velocity_mse: f64,
    /// Velocity MSE over the whole grid.
    pub velocity_mse_full: f64,
    /// Mean Dice of the four label fields against the true sphere.
    pub dice: f64,
}

impl EvalReport {
    pub fn magnitude_total(&self) -> f64 {
        self.magnitude_mse.iter().sum()
    }

    pub fn phase_total(&self) -> f64 {
        self.phase_mse.iter().sum()
    }
}

/// Scores one reconstruction against the phantom truth.
pub fn evaluate(
    method: &str,
    magnitudes: &[ScalarField; 4],
    phases: &[ScalarField; 4],
    velocity: &ScalarField,
    labels: &[Vec<bool>; 4],
    truth: &GroundTruth,
) -> Result<EvalReport> {
    let fluid = truth.fluid_region();
    let mut magnitude_mse = [0.0; 4];
    let mut phase_mse = [0.0; 4];
    let mut phase_mse_full = [0.0; 4];
    let mut dice_sum = 0.0;
    for j in 0..4 {
        magnitude_mse[j] = mse(&magnitudes[j], &truth.magnitude, None)?;
        phase_mse[j] = mse(&phases[j], &truth.phases[j], Some(&fluid))?;
        phase_mse_full[j] = mse(&phases[j], &truth.phases[j], None)?;
        dice_sum += dice(&labels[j], &truth.labels)?;
    }
    Ok(EvalReport {
        method: method.to_string(),
        magnitude_mse,
        phase_mse,
        phase_mse_full,
        velocity_mse: mse(velocity, truth.velocity(), Some(&fluid))?,
        velocity_mse_full: mse(velocity, truth.velocity(), None)?,
        dice: dice_sum / 4.0,
    })
}

pub const TABLE_COLUMNS: [&str; 10] = ["u1", "u2", "u3", "u4", "phi1", "phi2", "phi3", "phi4", "velocity", "dice"];

/// Methods × metrics grid with the best entry of each column marked.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub values: Vec<[f64; 10]>,
    /// Row index of the best value per column.
    pub best: [usize; 10],
}

fn row(r: &EvalReport) -> [f64; 10] {
    let mut out = [0.0; 10];
    out[..4].copy_from_slice(&r.magnitude_mse);
    out[4..8].copy_from_slice(&r.phase_mse);
    out[8] = r.velocity_mse;
    out[9] = r.dice;
    out
}

pub fn compare_methods(reports: &[EvalReport]) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(Error::param("reports", "nothing to compare"));
    }
    let values: Vec<[f64; 10]> = reports.iter().map(row).collect();
    let mut best = [0usize; 10];
    for (c, b) in best.iter_mut().enumerate() {
        for (i, v) in values.iter().enumerate() {
            let better = if c == 9 {
                v[c] > values[*b][c]
            } else {
                v[c] < values[*b][c]
            };
            if better {
                *b = i;
            }
        }
    }
    Ok(ComparisonTable {
        methods: reports.iter().map(|r| r.method.clone()).collect(),
        values,
        best,
    })
}

impl ComparisonTable {
    /// Aligned plain text; best entries carry a trailing `*`.
    pub fn to_text(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "method");
        for c in TABLE_COLUMNS {
            let _ = write!(out, " {c:>11}");
        }
        out.push('\n');
        for (i, m) in self.methods.iter().enumerate() {
            let _ = write!(out, "{m:<width$}");
            for c in 0..10 {
                let mark = if self.best[c] == i { "*" } else { " " };
                let cell = if c == 9 {
                    format!("{:.4}", self.values[i][c])
                } else {
                    format!("{:.3e}", self.values[i][c])
                };
                let _ = write!(out, " {cell:>10}{mark}");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with a `best` column listing the columns this row wins.
    pub fn to_csv(&self) -> String {
        let mut out = format!("method,{},best\n", TABLE_COLUMNS.join(","));
        for (i, m) in self.methods.iter().enumerate() {
            out.push_str(m);
            for v in &self.values[i] {
                let _ = write!(out, ",{v:e}");
            }
            let wins: Vec<&str> = (0..10).filter(|&c| self.best[c] == i).map(|c| TABLE_COLUMNS[c]).collect();
            let _ = writeln!(out, ",{}", wins.join(";"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    fn field(w: usize, h: usize, v: Vec<f64>) -> ScalarField {
        ScalarField::new(w, h, v).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = field(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mse(&a, &a, None).unwrap(), 0.0);
        let x = field(2, 2, vec![1.0, 2.0, 1.0, 2.0]);
        let z = field(2, 2, vec![0.0; 4]);
        assert_eq!(mse(&x, &z, None).unwrap(), 2.5);
        let e = field(2, 2, vec![0.3; 4]);
        let half = [true, true, false, false];
        assert!((mse(&e, &z, Some(&half)).unwrap() - 0.09).abs() < 1e-15);
        assert!(matches!(mse(&e, &z, Some(&[false; 4])), Err(Error::EmptyRegion)));
    }

    #[test]
    fn dice_examples() {
        let shape = Shape::new(64, 64).unwrap();
        let all = vec![true; shape.len()];
        let top: Vec<bool> = (0..shape.len()).map(|i| i < shape.len() / 2).collect();
        let bottom: Vec<bool> = top.iter().map(|b| !b).collect();
        assert_eq!(dice(&top, &top).unwrap(), 1.0);
        assert_eq!(dice(&top, &bottom).unwrap(), 0.0);
        assert!((dice(&top, &all).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice(&[false; 3], &[false; 3]).unwrap(), 1.0);
    }

    fn report(name: &str, base: f64) -> EvalReport {
        EvalReport {
            method: name.into(),
            magnitude_mse: [base; 4],
            phase_mse: [base * 2.0; 4],
            phase_mse_full: [base * 3.0; 4],
            velocity_mse: base,
            velocity_mse_full: base,
            dice: 1.0 - base,
        }
    }

    #[test]
    fn table_marks_best() {
        let t = compare_methods(&[report("sequential", 0.2), report("joint", 0.1)]).unwrap();
        assert!(t.best.iter().all(|&b| b == 1));
        let csv = t.to_csv();
        assert!(csv.lines().nth(2).unwrap().ends_with("u1;u2;u3;u4;phi1;phi2;phi3;phi4;velocity;dice"));
        assert!(t.to_text().lines().count() == 3);
    }

    #[test]
    fn single_row_and_empty() {
        let t = compare_methods(&[report("only", 0.5)]).unwrap();
        assert_eq!(t.values.len(), 1);
        assert!(compare_methods(&[]).is_err());
    }
}

//! Error measurement of a network against a reference grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{forward, prepare_inputs, ArchError, NetworkParams};
use crate::problems::ProblemSpec;
use crate::reference::{reference, GridResolution, ReferenceError, ReferenceGrid};
use crate::tape::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference has zero norm; relative error is undefined")]
    ZeroReference,
    #[error("prediction has {pred} values but reference has {reference}")]
    Length { pred: usize, reference: usize },
    #[error("reference grid is for {grid} but the problem is {problem}")]
    Problem { grid: String, problem: String },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Rows per forward call when predicting on a grid.
const PREDICT_CHUNK: usize = 1024;

fn check_len(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(EvalError::Length {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    Ok(())
}

fn sum_sq(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v * v;
    }
    acc
}

/// `‖pred − ref‖₂ / ‖ref‖₂` over the flattened values.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(pred, reference)?;
    let den = sum_sq(reference.iter().copied());
    if den == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    let num = sum_sq(pred.iter().zip(reference).map(|(p, r)| p - r));
    Ok(num.sqrt() / den.sqrt())
}

/// `‖pred − ref‖₂`, unnormalized.
pub fn absolute_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(pred, reference)?;
    Ok(sum_sq(pred.iter().zip(reference).map(|(p, r)| p - r)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rel_l2: f64,
    pub abs_l2: f64,
    pub prediction: Vec<f64>,
    pub abs_error: Vec<f64>,
}

/// Compares an arbitrary prediction on `grid` with its reference values.
pub fn evaluate_prediction(prediction: Vec<f64>, grid: &ReferenceGrid) -> Result<Evaluation> {
    let rel_l2 = relative_l2(&prediction, &grid.values)?;
    let abs_l2 = absolute_l2(&prediction, &grid.values)?;
    let abs_error = prediction
        .iter()
        .zip(&grid.values)
        .map(|(p, r)| (p - r).abs())
        .collect();
    Ok(Evaluation {
        rel_l2,
        abs_l2,
        prediction,
        abs_error,
    })
}

/// Network output at every grid point, in grid storage order.
pub fn predict(
    params: &NetworkParams,
    problem: &ProblemSpec,
    normalize: bool,
    grid: &ReferenceGrid,
) -> Result<Vec<f64>> {
    if grid.problem != problem.kind {
        return Err(EvalError::Problem {
            grid: grid.problem.to_string(),
            problem: problem.kind.to_string(),
        });
    }
    let points = grid.points();
    let (x, _) = prepare_inputs(&points, normalize.then_some(&problem.bounds))?;
    let cols = x.cols().map_err(ArchError::from)?;
    let mut out = Vec::with_capacity(grid.len());
    for chunk in x.data().chunks(PREDICT_CHUNK * cols) {
        let part = Tensor::matrix(chunk.len() / cols, cols, chunk.to_vec()).map_err(ArchError::from)?;
        out.extend_from_slice(forward(params, &part)?.data());
    }
    Ok(out)
}

/// Predicts on `grid` and measures the error.
pub fn evaluate_model(
    params: &NetworkParams,
    problem: &ProblemSpec,
    normalize: bool,
    grid: &ReferenceGrid,
) -> Result<Evaluation> {
    evaluate_prediction(predict(params, problem, normalize, grid)?, grid)
}

/// [`evaluate_model`] on a freshly computed reference at `res`.
pub fn evaluate_at(
    params: &NetworkParams,
    problem: &ProblemSpec,
    normalize: bool,
    res: GridResolution,
) -> Result<Evaluation> {
    let grid = reference(problem, res)?;
    evaluate_model(params, problem, normalize, &grid)
}

//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Flat index of the coordinate attaining `max_rel_error`.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates whose ±step evaluations crossed a relu/|·| kink and were
    /// therefore not compared.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(f: &F, point: Tensor<f64>) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point);
    let y = f(&mut tape, x)?;
    let v = tape.value(y);
    if !v.is_scalar() {
        return Err(Error::NonScalarRoot(v.shape().to_vec()));
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss {
            term: "grad_check objective".into(),
        });
    }
    Ok((v, tape.kink_signature()))
}

/// Checks every coordinate of `point`.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, step, &coords)
}

/// Checks the listed flat coordinates of `point`.
pub fn grad_check_coords<F>(f: F, point: &Tensor<f64>, step: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "grad_check step must be positive, got {step}"
        )));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    if !tape.value(y).is_finite() {
        return Err(Error::NonFiniteLoss {
            term: "grad_check objective".into(),
        });
    }
    let signature = tape.kink_signature();
    let grads = tape.backward(y)?;
    let zero = Tensor::zeros(point.shape().to_vec());
    let analytic = grads.get(x).unwrap_or(&zero);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for &i in coords {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let (fp, sp) = evaluate(&f, plus)?;
        let (fm, sm) = evaluate(&f, minus)?;
        if sp != signature || sm != signature {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let err = relative_error(analytic.data()[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

//! Central finite-difference checking of tape gradients.

use super::{DenseTensor, NodeId, Tape};
use crate::error::{Error, Result};

/// Compares tape gradients of `f` at `points` against central differences.
///
/// `f` receives one leaf per point and must return a scalar node. Returns
/// the max over all coordinates of `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check_many<F>(f: F, points: &[DenseTensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }

    let mut tape = Tape::new();
    let leaves = points
        .iter()
        .map(|p| tape.leaf(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &leaves)?;
    tape.backward(loss)?;
    let analytic: Vec<DenseTensor> = leaves.iter().map(|&l| tape.grad(l)).collect();

    let eval = |pts: &[DenseTensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves = pts
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &leaves)?;
        let v = tape.value(out).data()[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "grad_check" })
        }
    };

    let mut work = points.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..grad.numel() {
            let orig = points[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, point: &DenseTensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    grad_check_many(|tape, ids| f(tape, ids[0]), std::slice::from_ref(point), h)
}

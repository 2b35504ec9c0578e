use okdmd::linalg::Mat;
use okdmd::{Error, Result};

/// Normalized error `(sum_j |pred_j - truth_j|^2 / sum_j |truth_j|^2)^(1/2)`.
pub fn epsilon(predictions: &Mat, truth: &Mat) -> Result<f64> {
    if predictions.shape() != truth.shape() {
        return Err(Error::InvalidInput(format!(
            "predictions are {:?} but truth is {:?}",
            predictions.shape(),
            truth.shape()
        )));
    }
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidInput("truth is identically zero".into()));
    }
    Ok(((predictions - truth).norm_squared() / denom).sqrt())
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mape,
    Mae,
}

impl LossKind {
    /// Per-point loss and its derivative with respect to the prediction.
    ///
    /// The subgradient of `|e|` at zero is taken as zero.
    pub fn point(self, prediction: f64, actual: f64) -> Result<(f64, f64)> {
        let err = prediction - actual;
        let sign = if err > 0.0 {
            1.0
        } else if err < 0.0 {
            -1.0
        } else {
            0.0
        };
        match self {
            LossKind::Mae => Ok((err.abs(), sign)),
            LossKind::Mape => {
                if actual == 0.0 {
                    return Err(Error::DivideByZero { position: 0 });
                }
                let scale = 100.0 / actual.abs();
                Ok((err.abs() * scale, sign * scale))
            }
        }
    }

    pub fn evaluate(self, predictions: &[f64], actuals: &[f64]) -> Result<f64> {
        match self {
            LossKind::Mape => mape(predictions, actuals),
            LossKind::Mae => mae(predictions, actuals),
        }
    }
}

fn check_lengths(predictions: &[f64], actuals: &[f64]) -> Result<()> {
    if predictions.len() != actuals.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} actual values",
            predictions.len(),
            actuals.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::Input("no values to score".into()));
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_lengths(predictions, actuals)?;
    let mut total = 0.0;
    for (position, (p, a)) in predictions.iter().zip(actuals).enumerate() {
        if *a == 0.0 {
            return Err(Error::DivideByZero { position });
        }
        total += ((a - p) / a).abs();
    }
    Ok(100.0 * total / actuals.len() as f64)
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_lengths(predictions, actuals)?;
    let total: f64 = predictions.iter().zip(actuals).map(|(p, a)| (a - p).abs()).sum();
    Ok(total / actuals.len() as f64)
}

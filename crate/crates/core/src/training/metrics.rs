use serde::{Deserialize, Serialize};

/// Mean absolute error; NaN for empty input.
pub fn mae(targets: &[f64], predictions: &[f64]) -> f64 {
    assert_eq!(targets.len(), predictions.len());
    targets.iter().zip(predictions).map(|(y, p)| (y - p).abs()).sum::<f64>() / targets.len() as f64
}

/// Mean squared error; NaN for empty input.
pub fn mse(targets: &[f64], predictions: &[f64]) -> f64 {
    assert_eq!(targets.len(), predictions.len());
    targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / targets.len() as f64
}

/// Coefficient of determination `1 − SS_res/SS_tot`. Exactly 1 for a perfect
/// fit; NaN when the targets are constant and the fit is not perfect.
pub fn r_squared(targets: &[f64], predictions: &[f64]) -> f64 {
    assert_eq!(targets.len(), predictions.len());
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_res: f64 = targets.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    let ss_tot: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_res == 0.0 {
        1.0
    } else if ss_tot == 0.0 {
        f64::NAN
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Z-score statistics of the training targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    /// Population standard deviation, replaced by 1 when it is zero.
    pub std: f64,
}

impl Normalizer {
    pub fn fit(targets: &[f64]) -> Self {
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Normalizer {
            mean,
            std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    pub fn identity() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_fit() {
        let y = [1.0, -2.0, 3.5];
        assert_eq!(mae(&y, &y), 0.0);
        assert_eq!(r_squared(&y, &y), 1.0);
    }

    #[test]
    fn mean_prediction_has_zero_r_squared() {
        let y = [1.0, -2.0, 3.5, 0.5];
        let mean = y.iter().sum::<f64>() / 4.0;
        assert!(r_squared(&y, &[mean; 4]).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_values() {
        let y = [0.3, -1.2, 2.0, 0.7, 1.1];
        let p = [0.1, -1.0, 2.6, 0.2, 1.1];
        assert!((mae(&y, &p) - 1.5 / 5.0).abs() < 1e-15);
        // mean 0.58; SS_tot = 5.548; SS_res = 0.04+0.04+0.36+0.25 = 0.69
        assert!((r_squared(&y, &p) - (1.0 - 0.69 / 5.548)).abs() < 1e-12);
        assert!((mse(&y, &p) - 0.69 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn constant_targets() {
        assert!(r_squared(&[2.0, 2.0], &[2.0, 2.5]).is_nan());
        let n = Normalizer::fit(&[2.0, 2.0]);
        assert_eq!((n.mean, n.std), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn normalization_round_trip(ys in prop::collection::vec(-20.0f64..20.0, 2..30), y in -50.0f64..50.0) {
            let n = Normalizer::fit(&ys);
            prop_assert!((n.denormalize(n.normalize(y)) - y).abs() <= 1e-12);
        }
    }
}

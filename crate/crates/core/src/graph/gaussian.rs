/// Gaussian responses at evenly spaced centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBasis {
    centers: Vec<f64>,
    sigma: f64,
}

impl GaussianBasis {
    /// Centers `mu_min + k * step` for `k = 0..=floor((mu_max - mu_min) / step)`.
    ///
    /// # Panics
    /// If `mu_max <= mu_min`, `step <= 0` or `sigma <= 0`.
    pub fn new(mu_min: f64, mu_max: f64, step: f64, sigma: f64) -> Self {
        assert!(mu_max > mu_min, "mu_max must exceed mu_min");
        assert!(step > 0.0 && sigma > 0.0, "step and sigma must be positive");
        // The small slack keeps 8.0 / 0.2 from flooring to 39.
        let count = ((mu_max - mu_min) / step + 1e-9).floor() as usize + 1;
        let centers = (0..count).map(|k| mu_min + k as f64 * step).collect();
        GaussianBasis { centers, sigma }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// `exp(-(d - mu_k)^2 / sigma^2)`, floored at the smallest positive
    /// normal `f64` so far-away centers never underflow to zero.
    pub fn expand_into(&self, d: f64, out: &mut Vec<f64>) {
        let inv = 1.0 / (self.sigma * self.sigma);
        out.extend(
            self.centers
                .iter()
                .map(|mu| (-(d - mu) * (d - mu) * inv).exp().max(f64::MIN_POSITIVE)),
        );
    }

    pub fn expand(&self, d: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.expand_into(d, &mut v);
        v
    }
}

pub fn gaussian_expand(d: f64, mu_min: f64, mu_max: f64, step: f64, sigma: f64) -> Vec<f64> {
    GaussianBasis::new(mu_min, mu_max, step, sigma).expand(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn center_hits_one() {
        let v = gaussian_expand(1.0, 0.0, 8.0, 0.2, 0.2);
        assert_eq!(v[5], 1.0);
    }

    #[test]
    fn midpoint_is_exp_quarter() {
        let v = gaussian_expand(1.1, 0.0, 8.0, 0.2, 0.2);
        assert!((v[5] - (-0.25f64).exp()).abs() < 1e-12);
        assert!((v[6] - (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn default_grid_has_41_centers() {
        assert_eq!(GaussianBasis::new(0.0, 8.0, 0.2, 0.2).len(), 41);
        assert_eq!(gaussian_expand(3.3, 0.0, 8.0, 0.2, 0.2).len(), 41);
    }

    proptest! {
        #[test]
        fn bounded_and_below_one_off_center(d in 0.0f64..8.0) {
            let basis = GaussianBasis::new(0.0, 8.0, 0.2, 0.2);
            let off_center = basis.centers().iter().all(|c| (d - c).abs() > 1e-6);
            for v in basis.expand(d) {
                prop_assert!(v > 0.0 && v <= 1.0);
                if off_center {
                    prop_assert!(v < 1.0);
                }
            }
        }
    }
}

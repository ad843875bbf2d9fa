use crate::autodiff::{ParamStore, Real, TensorError};

/// Adam with decoupled weight decay. Moments are kept per parameter tensor in
/// the store's insertion order.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|(_, p)| vec![T::zero(); p.value.len()]).collect();
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update from the accumulated gradients:
    /// `θ ← θ(1 − lr·wd) − lr·m̂/(√v̂ + eps)`.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<(), TensorError> {
        if params.len() != self.first.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adamw",
                lhs: vec![self.first.len()],
                rhs: vec![params.len()],
            });
        }
        for (p, m) in params.iter_mut().zip(&self.first) {
            if p.value.len() != m.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adamw",
                    lhs: vec![m.len()],
                    rhs: p.value.shape().to_vec(),
                });
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let correction1 = T::lit(1.0 - self.beta1.powi(t));
        let correction2 = T::lit(1.0 - self.beta2.powi(t));
        let lr_t = T::lit(lr);
        let decay = T::lit(1.0 - lr * self.weight_decay);
        let eps = T::lit(self.eps);
        let one = T::one();
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.data().to_vec();
            for (((theta, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *theta = *theta * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

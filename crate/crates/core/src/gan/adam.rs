use crate::scalar::Scalar;

/// Adaptive-moment gradient descent over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    first: Vec<T>,
    second: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self::with_betas(len, learning_rate, 0.9, 0.999)
    }

    pub fn with_betas(len: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate: T::of(learning_rate),
            beta1: T::of(beta1),
            beta2: T::of(beta2),
            epsilon: T::of(1e-8),
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            step: 0,
        }
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), self.first.len());
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let lr = self.learning_rate * c2.sqrt() / c1;
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            *p -= lr * *m / (v.sqrt() + self.epsilon);
        }
    }
}

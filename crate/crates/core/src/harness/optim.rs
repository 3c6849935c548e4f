use crate::autodiff::{ParamId, ParameterStore};

/// Adam restricted to a chosen set of tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    params: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParameterStore, params: Vec<ParamId>, lr: f64) -> Self {
        let zeros = |id: &ParamId| vec![0.0; store.tensor(*id).len()];
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            params,
        }
    }

    pub fn all(store: &ParameterStore, lr: f64) -> Self {
        Self::new(store, store.ids().collect(), lr)
    }

    /// One bias-corrected update from the gradients currently in `store`.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, &id) in self.params.iter().enumerate() {
            let t = store.tensor_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..t.value.len() {
                let g = t.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                t.value[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

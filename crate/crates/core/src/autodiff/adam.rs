use super::{ParamStore, Tensor, TensorError};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-4;

    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Restores saved moments and step counter.
    pub fn restore(&mut self, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<(), TensorError> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::Empty("adam state length"));
        }
        for (old, new) in self.m.iter().zip(&m).chain(self.v.iter().zip(&v)) {
            if old.shape() != new.shape() {
                return Err(TensorError::Shape {
                    op: "adam_restore",
                    left: old.shape().to_vec(),
                    right: new.shape().to_vec(),
                });
            }
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Applies one update to every trainable parameter using its current grad.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        if store.len() != self.m.len() {
            return Err(TensorError::Empty("adam state does not match parameter store"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            if p.grad.shape() != m.shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    left: p.grad.shape().to_vec(),
                    right: m.shape().to_vec(),
                });
            }
            let values = p.tensor.data_mut();
            for (((x, g), mk), vk) in values.iter_mut().zip(p.grad.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mk = b1 * *mk + (1.0 - b1) * g;
                *vk = b2 * *vk + (1.0 - b2) * g * g;
                let m_hat = *mk / c1;
                let v_hat = *vk / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

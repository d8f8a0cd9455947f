//! Adam optimizer over an ordered list of parameter tensors.

use ndarray::{ArrayD, ArrayViewMutD};

/// State is allocated lazily from the first gradient list and keyed by
/// position, so callers must pass parameters in a stable order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: usize,
    first_moment: Vec<ArrayD<f64>>,
    second_moment: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step(&mut self, mut params: Vec<ArrayViewMutD<'_, f64>>, grads: &[ArrayD<f64>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient mismatch");
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
            self.second_moment = self.first_moment.clone();
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            azip(m, grad, |m, g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            azip(v, grad, |v, g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            for ((p, m), v) in param.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn azip(dst: &mut ArrayD<f64>, src: &ArrayD<f64>, f: impl Fn(&mut f64, f64)) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        f(d, s);
    }
}

/// Element-wise gradient accumulation for minibatch loops.
pub(crate) fn accumulate(acc: &mut Vec<ArrayD<f64>>, grads: Vec<ArrayD<f64>>) {
    if acc.is_empty() {
        *acc = grads;
        return;
    }
    for (a, g) in acc.iter_mut().zip(grads) {
        *a += &g;
    }
}

/// Scales accumulated gradients by `1/n` for batch averaging.
pub(crate) fn scale(acc: &mut [ArrayD<f64>], n: usize) {
    let inv = 1.0 / n as f64;
    for g in acc {
        g.mapv_inplace(|v| v * inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (w - 3)^2
        let mut w = arr1(&[0.0]).into_dyn();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let grad = w.mapv(|v| 2.0 * (v - 3.0));
            opt.step(vec![w.view_mut()], &[grad]);
        }
        assert!((w[[0]] - 3.0).abs() < 1e-3, "got {}", w[[0]]);
    }
}

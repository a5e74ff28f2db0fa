//! Adam optimizer over flat parameter slices.

use crate::unet::layers::Elem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment state per parameter tensor, in the model's fixed
/// parameter order.
pub struct Adam<T: Elem> {
    cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Elem> Adam<T> {
    pub fn new(cfg: AdamConfig, param_lens: &[usize]) -> Self {
        Self {
            cfg,
            m: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&mut [T]]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let lr = T::from(self.cfg.lr).unwrap();
        let b1 = T::from(self.cfg.beta1).unwrap();
        let b2 = T::from(self.cfg.beta2).unwrap();
        let eps = T::from(self.cfg.eps).unwrap();
        let bc1 = T::from(1.0 - self.cfg.beta1.powi(self.t as i32)).unwrap();
        let bc2 = T::from(1.0 - self.cfg.beta2.powi(self.t as i32)).unwrap();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.len(), m.len());
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let mut p = vec![1.0f64, -2.0, 0.5];
        let mut g = vec![0.0f64; 3];
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        let before = p.clone();
        adam.step(&mut [&mut p], &[&mut g]);
        assert_eq!(p, before);
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimizing f(x) = x^2 from x = 1.
        let mut x = vec![1.0f64];
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &[1]);
        for _ in 0..500 {
            let mut g = vec![2.0 * x[0]];
            adam.step(&mut [&mut x], &[&mut g]);
        }
        assert!(x[0].abs() < 1e-3, "converged to {}", x[0]);
    }

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        // With bias correction the very first update is lr * sign(g).
        let mut p = vec![0.0f64];
        let mut g = vec![3.7f64];
        let mut adam = Adam::new(AdamConfig::default(), &[1]);
        adam.step(&mut [&mut p], &[&mut g]);
        assert!((p[0] + 0.001).abs() < 1e-9, "step was {}", p[0]);
    }
}

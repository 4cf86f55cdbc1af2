//! Adam optimizer over a flat parameter vector with a trainable mask.

/// Adam with bias correction. Moments for masked-out (frozen) coordinates are
/// never touched, so frozen parameters stay bitwise identical.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One update in place; `trainable[i] == false` freezes coordinate `i`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], trainable: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        assert_eq!(trainable.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            if !trainable[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_a_quadratic() {
        // f(x) = sum (x - target)^2
        let target = [3.0, -2.0, 0.5];
        let mut x = vec![0.0; 3];
        let mut opt = Adam::new(0.1, 3);
        let trainable = vec![true; 3];
        for _ in 0..2000 {
            let grad: Vec<f64> = x.iter().zip(target).map(|(&xi, t)| 2.0 * (xi - t)).collect();
            opt.step(&mut x, &grad, &trainable);
        }
        for (xi, t) in x.iter().zip(target) {
            assert!((xi - t).abs() < 1e-3, "{xi} vs {t}");
        }
    }

    #[test]
    fn frozen_coordinates_stay_bitwise_identical() {
        let mut x = vec![1.2345678901234567, -7.654321];
        let before = x.clone();
        let mut opt = Adam::new(0.5, 2);
        for _ in 0..50 {
            opt.step(&mut x, &[10.0, 10.0], &[false, true]);
        }
        assert_eq!(x[0].to_bits(), before[0].to_bits());
        assert_ne!(x[1], before[1]);
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // Bias correction makes the first Adam step ~lr in gradient direction.
        let mut x = vec![0.0];
        let mut opt = Adam::new(0.25, 1);
        opt.step(&mut x, &[3.7], &[true]);
        assert!((x[0] + 0.25).abs() < 1e-6, "{}", x[0]);
    }
}

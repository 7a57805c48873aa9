//! Adam optimizer over flat parameter groups.

/// Adam with bias correction. Each parameter group (one tensor,
/// flattened) keeps its own first/second moment buffers; the step
/// counter is shared so one `begin_step` covers all groups updated in
/// that step.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    /// `group_sizes[k]` is the flat length of parameter group `k`.
    pub fn new(learning_rate: f64, group_sizes: &[usize]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advances the shared step counter. Call once per optimization
    /// step, before updating any group.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update to group `group` in place.
    ///
    /// # Panics
    /// If `begin_step` has not been called, or the slice lengths do
    /// not match the group's registered size.
    pub fn update(&mut self, group: usize, params: &mut [f64], grad: &[f64]) {
        assert!(self.step > 0, "begin_step must be called before update");
        assert_eq!(params.len(), grad.len());
        let m = &mut self.first_moment[group];
        let v = &mut self.second_moment[group];
        assert_eq!(params.len(), m.len());
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With zero-initialized moments, the first bias-corrected
        // update is lr * g / (|g| + eps) — essentially lr * sign(g).
        let mut adam = Adam::new(0.1, &[2]);
        let mut params = vec![1.0, -2.0];
        adam.begin_step();
        adam.update(0, &mut params, &[0.5, -3.0]);
        assert!((params[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((params[1] - (-2.0 + 0.1)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(0.1, &[3]);
        let mut params = vec![0.25, -0.5, 4.0];
        adam.begin_step();
        adam.update(0, &mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![0.25, -0.5, 4.0]);
    }

    #[test]
    fn constant_gradient_converges_toward_minimum() {
        // Minimize (x - 3)^2 / 2; gradient is x - 3.
        let mut adam = Adam::new(0.05, &[1]);
        let mut x = vec![0.0];
        for _ in 0..2000 {
            adam.begin_step();
            let g = x[0] - 3.0;
            adam.update(0, &mut x, &[g]);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn groups_keep_independent_state() {
        // Feeding wild gradients to group 0 must not perturb group
        // 1's trajectory in any way.
        let run = |group0_grad: f64| {
            let mut adam = Adam::new(0.1, &[1, 1]);
            let mut a = vec![0.0];
            let mut b = vec![0.0];
            for step in 0..5 {
                adam.begin_step();
                adam.update(0, &mut a, &[group0_grad * (step + 1) as f64]);
                adam.update(1, &mut b, &[0.3]);
            }
            b[0]
        };
        assert_eq!(run(1e6).to_bits(), run(-2.5).to_bits());
    }

    #[test]
    #[should_panic(expected = "begin_step")]
    fn update_before_begin_step_panics() {
        let mut adam = Adam::new(0.1, &[1]);
        let mut p = vec![0.0];
        adam.update(0, &mut p, &[1.0]);
    }
}

//! Adam with bias correction, over flat `f64` slices.

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Minimize: move against the gradient.
    Descend,
    /// Maximize: move along the gradient.
    Ascend,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    /// Zeroed moments for a variable of `len` elements, with β₁ = 0.9,
    /// β₂ = 0.999 and ε = 1e-8.
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    pub fn step(&mut self, variable: &mut [f64], gradient: &[f64], direction: Direction) -> Result<(), NetError> {
        if variable.len() != self.first.len() || gradient.len() != self.first.len() {
            return Err(NetError::ShapeMismatch {
                expected: self.first.len(),
                found: if variable.len() != self.first.len() {
                    variable.len()
                } else {
                    gradient.len()
                },
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let sign = match direction {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        for i in 0..variable.len() {
            let g = sign * gradient[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            variable[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_variable_unchanged() {
        let mut s = AdamState::new(3, 0.1);
        let mut v = vec![1.0, -2.0, 3.0];
        s.step(&mut v, &[0.0; 3], Direction::Descend).unwrap();
        assert_eq!(v, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias correction makes m_hat = g and v_hat = g^2 on step one
        for g in [0.5, -3.0, 1e-2] {
            let mut s = AdamState::new(2, 0.1);
            let mut v = vec![0.0, 0.0];
            s.step(&mut v, &[g, g], Direction::Descend).unwrap();
            let expected = 0.1 * g.abs() / (g.abs() + 1e-8);
            for x in &v {
                assert!((x.abs() - 0.1).abs() < 1e-6);
                assert!((x.abs() - expected).abs() < 1e-15);
                assert_eq!(x.signum(), -g.signum());
            }
        }
    }

    #[test]
    fn ascend_flips_direction() {
        let mut a = AdamState::new(1, 0.1);
        let mut b = AdamState::new(1, 0.1);
        let (mut x, mut y) = ([0.0], [0.0]);
        a.step(&mut x, &[2.0], Direction::Descend).unwrap();
        b.step(&mut y, &[2.0], Direction::Ascend).unwrap();
        assert_eq!(x[0], -y[0]);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut s = AdamState::new(1, 0.1);
        let mut v = [1.0];
        for _ in 0..100 {
            let g = [2.0 * v[0]];
            s.step(&mut v, &g, Direction::Descend).unwrap();
        }
        assert!(v[0].abs() < 0.1, "{}", v[0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut s = AdamState::new(2, 0.1);
        let mut v = vec![0.0; 3];
        assert!(s.step(&mut v, &[0.0; 3], Direction::Descend).is_err());
    }
}

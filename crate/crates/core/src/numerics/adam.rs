use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }
}

/// One bias-corrected Adam update of every parameter tensor in place.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::invalid(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.first).enumerate() {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::ShapeMismatch {
                context: "adam_step",
                expected: p.shape_str(),
                actual: format!("grad {} / moment {} for tensor {i}", g.shape_str(), m.shape_str()),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        let p = p.as_mut_slice();
        let g = g.as_slice();
        let m = m.as_mut_slice();
        let v = v.as_mut_slice();
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![Matrix::from_rows(&[vec![1.5, -2.0]]).unwrap()];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Matrix::zeros(1, 2)], &mut state, 0.1, AdamConfig::default())
            .unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Matrix::scalar(1.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Matrix::scalar(1.0)], &mut state, 0.002, AdamConfig::default())
            .unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε)
        let expected = 1.0 - 0.002 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
        assert!((params[0].item() - 0.998).abs() < 1e-10);
    }

    #[test]
    fn deterministic_and_counts_steps() {
        let run = || {
            let mut params = vec![Matrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.9]]).unwrap()];
            let mut state = AdamState::new(&params);
            let g = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
            for _ in 0..3 {
                adam_step(&mut params, std::slice::from_ref(&g), &mut state, 0.01, AdamConfig::default())
                    .unwrap();
            }
            (params, state)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        assert_eq!(s1.step(), 3);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Matrix::zeros(2, 2)];
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[Matrix::zeros(2, 3)], &mut state, 0.1, AdamConfig::default());
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
        assert_eq!(state.step(), 0);
    }
}

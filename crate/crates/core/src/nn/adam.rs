use super::{Grads, ModelParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over parallel lists of parameter and
    /// gradient slices.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        cfg: &AdamConfig,
    ) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::Shape(
                "gradient shapes do not match parameters".into(),
            ));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len()
            || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(
    params: &mut ModelParams,
    grads: &Grads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut slices: Vec<&mut [f64]> = params
        .tensors_mut()
        .into_iter()
        .map(|t| t.data_mut())
        .collect();
    state.update(&mut slices, &grads.tensors, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_noop() {
        let mut w = vec![1.0, -2.0, 3.0];
        let before = w.clone();
        let mut state = AdamState::default();
        for _ in 0..5 {
            state
                .update(&mut [&mut w], &[vec![0.0; 3]], &AdamConfig::new(0.1))
                .unwrap();
        }
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = vec![0.0, 0.0, 0.0];
        let g = vec![3.0, -0.5, 1e-3];
        let mut state = AdamState::default();
        state
            .update(&mut [&mut w], std::slice::from_ref(&g), &AdamConfig::new(0.01))
            .unwrap();
        for (wi, gi) in w.iter().zip(&g) {
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let expect = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((wi - expect).abs() < 1e-12);
            assert!((wi.abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut w = vec![0.6, -0.8];
        let mut state = AdamState::default();
        let cfg = AdamConfig::new(1e-2);
        for _ in 0..1000 {
            let g = vec![w.iter().map(|x| 2.0 * x).collect::<Vec<_>>()];
            state.update(&mut [&mut w], &g, &cfg).unwrap();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn shape_mismatch() {
        let mut w = vec![0.0; 2];
        let mut state = AdamState::default();
        assert!(state
            .update(&mut [&mut w], &[vec![0.0; 3]], &AdamConfig::new(0.1))
            .is_err());
    }
}

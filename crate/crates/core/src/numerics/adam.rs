use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then clears the gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let step = store.bump_step() as i32;
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (value, m, v, g) = store.moments_mut(id);
        for (((p, m), v), &g) in value
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    store.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn store_with(v: f64) -> (ParamStore, crate::numerics::params::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = store_with(1.25);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).item(), 1.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        let (mut s, id) = store_with(0.0);
        s.grad_mut(id).data_mut()[0] = 1.0;
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        adam_step(&mut s, &cfg).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((s.value(id).item() - expected).abs() < 1e-15);
        assert_eq!(s.grad(id).item(), 0.0);
    }

    #[test]
    fn momentum_decays_after_gradient_stops() {
        let (mut s, id) = store_with(0.0);
        let cfg = AdamConfig::default();
        s.grad_mut(id).data_mut()[0] = 1.0;
        adam_step(&mut s, &cfg).unwrap();
        let m1 = s.first_moment(id).item();
        adam_step(&mut s, &cfg).unwrap();
        let m2 = s.first_moment(id).item();
        adam_step(&mut s, &cfg).unwrap();
        let m3 = s.first_moment(id).item();
        assert!(m1 > m2 && m2 > m3 && m3 > 0.0);
    }

    #[test]
    fn non_positive_lr_rejected() {
        let (mut s, _) = store_with(0.0);
        let cfg = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        assert!(adam_step(&mut s, &cfg).is_err());
    }
}

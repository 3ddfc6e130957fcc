use serde::{Deserialize, Serialize};

use super::params::LstmParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates with the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: LstmParams,
    pub v: LstmParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &LstmParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: LstmParams::zeros(params.dims()),
            v: LstmParams::zeros(params.dims()),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(params: &mut LstmParams, grads: &LstmParams, state: &mut AdamState) {
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let p = params.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((x, &g), m), v) in p.iter_mut().zip(grads.as_slice()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::params::Dims;

    fn scalar_params(x: f64) -> LstmParams {
        // smallest shape: d_in = d_h = 0 leaves only b_s
        LstmParams::from_vec(Dims::new(0, 0, 1), vec![x]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = LstmParams::init(Dims::new(3, 2, 4), 9);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.m.as_mut_slice().fill(0.5);
        st.v.as_mut_slice().fill(0.25);
        let zero = LstmParams::zeros(p.dims());
        // moments decay; with nonzero moments the step is nonzero, so check a fresh state too
        adam_update(&mut p, &zero, &mut st);
        assert!(st.m.as_slice().iter().all(|&m| (m - 0.45).abs() < 1e-15));
        assert!(st.v.as_slice().iter().all(|&v| (v - 0.25 * 0.999).abs() < 1e-15));
        let mut q = before.clone();
        let mut fresh = AdamState::new(&q, AdamConfig::default());
        adam_update(&mut q, &zero, &mut fresh);
        assert_eq!(q, before);
        assert_eq!(fresh.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &scalar_params(1.0), &mut st);
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.as_slice()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn descends_quadratic() {
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p, AdamConfig { lr: 0.05, ..Default::default() });
        let mut f = 1.0;
        for _ in 0..10 {
            let x = p.as_slice()[0];
            adam_update(&mut p, &scalar_params(2.0 * x), &mut st);
            let y = p.as_slice()[0];
            assert!(y * y < f);
            f = y * y;
        }
    }
}

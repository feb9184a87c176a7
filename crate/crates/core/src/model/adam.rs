use alloc::format;

use super::params::{Gradients, ParamSet};
use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Real> OptimState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &Gradients<T>,
    state: &mut OptimState<T>,
    lr: T,
) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::numeric(format!("gradient of {name}")));
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps));
    let t = state.step.min(i32::MAX as u64) as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let one = T::one();

    let moments = state.m.values_mut().zip(state.v.values_mut());
    for (((_, p), g), ((_, m), (_, v))) in params.values_mut().zip(grads.iter()).zip(moments) {
        for i in 0..p.len() {
            let gi = g.data[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(Error::numeric(format!("parameter {name} after update")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::params::Param;
    use super::*;
    use alloc::vec;

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet::from_parts(
            1,
            vec![Param {
                name: "w".into(),
                shape: vec![1],
                data: vec![v],
            }],
        )
        .unwrap()
    }

    #[test]
    fn first_step_by_hand() {
        let lr = 0.01;
        let mut p = scalar(2.0);
        let mut st = OptimState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(1.0), &mut st, lr).unwrap();
        // m = 0.1, v = 0.001, m_hat = v_hat = 1
        assert!((st.m.params()[0].data[0] - 0.1).abs() < 1e-15);
        assert!((st.v.params()[0].data[0] - 0.001).abs() < 1e-15);
        let expect = 2.0 - lr / (1.0 + 1e-8);
        assert!((p.params()[0].data[0] - expect).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = scalar(2.0);
        let mut st = OptimState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(1.0), &mut st, 0.0).unwrap();
        assert_eq!(p.params()[0].data[0], 2.0);
        let m1 = st.m.params()[0].data[0];
        let before = p.clone();
        let mut zero_state = OptimState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(0.0), &mut zero_state, 0.5).unwrap();
        assert_eq!(p, before);
        adam_step(&mut p, &scalar(0.0), &mut st, 0.0).unwrap();
        assert!(st.m.params()[0].data[0].abs() < m1.abs());
    }

    #[test]
    fn parameters_update_independently() {
        let two = |a: f64, b: f64| {
            ParamSet::from_parts(
                1,
                vec![
                    Param { name: "a".into(), shape: vec![1], data: vec![a] },
                    Param { name: "b".into(), shape: vec![1], data: vec![b] },
                ],
            )
            .unwrap()
        };
        let mut p = two(1.0, 1.0);
        let mut st = OptimState::new(&p, AdamConfig::default());
        adam_step(&mut p, &two(1.0, 0.0), &mut st, 0.1).unwrap();
        assert!(p.params()[0].data[0] < 1.0);
        assert_eq!(p.params()[1].data[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = scalar(1.0);
        let mut st = OptimState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &scalar(f64::NAN), &mut st, 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}

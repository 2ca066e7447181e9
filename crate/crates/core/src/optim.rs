//! AdamW: Adam with decoupled weight decay.

use crate::error::{Error, Result};
use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamW {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    /// One descent step on `params` along `grads` (gradients of a loss).
    ///
    /// Parameters without a gradient entry are treated as having zero
    /// gradient; they still decay.
    pub fn step<S: Scalar>(&self, params: &mut ParamStore<S>, grads: &ParamGrads<S>) -> Result<()> {
        grads.check_finite()?;
        let step = params.step() + 1;
        let lr = S::lit(self.learning_rate);
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let eps = S::lit(self.eps);
        let decay = S::one() - lr * S::lit(self.weight_decay);
        let bc1 = S::one() - b1.powi(step as i32);
        let bc2 = S::one() - b2.powi(step as i32);

        let names: Vec<String> = params.names().map(str::to_owned).collect();
        for name in names {
            let grad = grads.get(&name);
            let (theta, moments) = params
                .param_and_moments_mut(&name)
                .ok_or_else(|| Error::Config(format!("no optimizer state for `{name}`")))?;
            if let Some(g) = grad {
                if g.shape() != theta.shape() {
                    return Err(Error::Shape(format!(
                        "gradient of `{name}` is {:?}, parameter is {:?}",
                        g.shape(),
                        theta.shape()
                    )));
                }
            }
            let m = moments.first.data_mut();
            let v = moments.second.data_mut();
            for (i, th) in theta.data_mut().iter_mut().enumerate() {
                let gi = grad.map_or(S::zero(), |g| g.data()[i]);
                *th = *th * decay;
                m[i] = b1 * m[i] + (S::one() - b1) * gi;
                v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *th = *th - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        params.set_step(step);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::Tensor;

    fn store(theta: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::scalar(theta));
        s
    }

    fn grads(g: f64) -> ParamGrads<f64> {
        ParamGrads(BTreeMap::from([("theta".to_string(), Tensor::scalar(g))]))
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut s = store(1.5);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        for _ in 0..10 {
            opt.step(&mut s, &grads(0.0)).unwrap();
        }
        assert_eq!(s.get("theta").unwrap().item(), 1.5);
    }

    #[test]
    fn decay_only_step() {
        let mut s = store(1.0);
        let opt = AdamW {
            learning_rate: 0.001,
            weight_decay: 0.01,
            ..AdamW::default()
        };
        opt.step(&mut s, &grads(0.0)).unwrap();
        assert!((s.get("theta").unwrap().item() - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store(0.0);
        let opt = AdamW::with_learning_rate(0.001);
        opt.step(&mut s, &grads(1.0)).unwrap();
        let delta = s.get("theta").unwrap().item();
        assert!((delta.abs() - 0.001).abs() < 1e-6, "{delta}");
        assert!(delta < 0.0);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = store(0.0);
        let err = AdamW::default().step(&mut s, &grads(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
        assert_eq!(s.get("theta").unwrap().item(), 0.0);
    }

    #[test]
    fn unrelated_parameters_update_independently() {
        let mut a = ParamStore::new();
        a.insert("x", Tensor::row(vec![1.0, 2.0]));
        a.insert("y", Tensor::scalar(-1.0));
        let mut b = a.clone();
        let ga = ParamGrads(BTreeMap::from([
            ("x".to_string(), Tensor::row(vec![0.3, -0.2])),
            ("y".to_string(), Tensor::scalar(4.0)),
        ]));
        // same gradients, built in the opposite order
        let mut gb = BTreeMap::new();
        gb.insert("y".to_string(), Tensor::scalar(4.0));
        gb.insert("x".to_string(), Tensor::row(vec![0.3, -0.2]));
        let opt = AdamW::default();
        opt.step(&mut a, &ga).unwrap();
        opt.step(&mut b, &ParamGrads(gb)).unwrap();
        assert_eq!(a, b);
    }
}

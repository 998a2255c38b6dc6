use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Momentum SGD with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    velocity: Vec<Vec<f64>>,
}

/// Gradient norms of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub norm: f64,
    pub clipped_norm: f64,
}

impl Sgd {
    pub fn new(params: &ModelParams, lr: f64, momentum: f64, clip_norm: f64) -> Self {
        Sgd {
            lr,
            momentum,
            clip_norm,
            velocity: params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// `grads` follow [`ModelParams::named`] order. A non-finite gradient
    /// aborts the step before anything changes.
    pub fn step(&mut self, params: &mut ModelParams, grads: &mut [Vec<f64>]) -> Result<StepStats> {
        let named = params.named();
        if grads.len() != named.len() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left: vec![grads.len()],
                right: vec![named.len()],
            });
        }
        for ((name, t), g) in named.iter().zip(grads.iter()) {
            if g.len() != t.len() {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    left: vec![g.len()],
                    right: t.shape().to_vec(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let mut clipped_norm = norm;
        if norm > self.clip_norm {
            let s = self.clip_norm / norm;
            grads.iter_mut().flatten().for_each(|x| *x *= s);
            clipped_norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        }
        for ((t, v), g) in params.tensors_mut().into_iter().zip(&mut self.velocity).zip(grads.iter()) {
            for ((p, vj), gj) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vj = self.momentum * *vj + gj;
                *p = (*p as f64 - self.lr * *vj) as f32;
            }
        }
        Ok(StepStats { norm, clipped_norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Config, Model, Variant};

    fn params() -> ModelParams {
        Model::new(Config { k: 2, layers: 1, ..Config::default() }, Variant::WoPM).unwrap().params
    }

    fn zero_grads(p: &ModelParams) -> Vec<Vec<f64>> {
        p.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect()
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_velocity() {
        let mut p = params();
        let before = p.clone();
        let mut opt = Sgd::new(&p, 0.1, 0.9, 5.0);
        let mut g = zero_grads(&p);
        g[0][0] = 1.0;
        opt.step(&mut p, &mut g).unwrap();
        let v0 = opt.velocity()[0][0];
        let after_first = p.clone();
        let mut z = zero_grads(&p);
        opt.step(&mut p, &mut z).unwrap();
        assert_eq!(opt.velocity()[0][0], 0.9 * v0);
        assert_ne!(after_first, before);
        // only the momentum carried over moved the parameter
        let mut q = after_first.clone();
        q.proj_w.data_mut()[0] = (after_first.proj_w.data()[0] as f64 - 0.1 * 0.9 * v0) as f32;
        assert_eq!(p, q);
        let mut p2 = before.clone();
        let mut fresh = Sgd::new(&p2, 0.1, 0.9, 5.0);
        fresh.step(&mut p2, &mut zero_grads(&before)).unwrap();
        assert_eq!(p2, before);
    }

    #[test]
    fn single_large_gradient_is_clipped_to_five() {
        let mut p = params();
        let start = p.proj_b.data()[0] as f64;
        let mut opt = Sgd::new(&p, 1.0, 0.9, 5.0);
        let mut g = zero_grads(&p);
        g[1][0] = 10.0;
        let s = opt.step(&mut p, &mut g).unwrap();
        assert_eq!(s.norm, 10.0);
        assert_eq!(s.clipped_norm, 5.0);
        assert_eq!(p.proj_b.data()[0] as f64, (start - 5.0) as f32 as f64);
    }

    #[test]
    fn two_steps_follow_the_momentum_recursion() {
        let mut p = params();
        let start = p.proj_b.data()[1] as f64;
        let (lr, g) = (0.01, 0.3);
        let mut opt = Sgd::new(&p, lr, 0.9, 5.0);
        for _ in 0..2 {
            let mut grads = zero_grads(&p);
            grads[1][1] = g;
            opt.step(&mut p, &mut grads).unwrap();
        }
        // v1 = g, v2 = 1.9 g; total displacement lr (g + 1.9 g)
        let expect = start - lr * g - lr * 1.9 * g;
        assert!((p.proj_b.data()[1] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = params();
        let before = p.clone();
        let mut opt = Sgd::new(&p, 0.1, 0.9, 5.0);
        let mut g = zero_grads(&p);
        g[2][0] = f64::NAN;
        match opt.step(&mut p, &mut g) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "gru_wz"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p, before);
    }
}

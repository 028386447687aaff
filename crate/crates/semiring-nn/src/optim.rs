//! AdamW with decoupled weight decay, split parameter groups (linear vs
//! semiring), and the 1-cycle cosine learning-rate schedule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ParamGroup, Parameter};
use crate::scalar::Scalar;

/// One value per optimizer group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupValues {
    pub linear: f64,
    pub semiring: f64,
}

impl GroupValues {
    pub fn uniform(v: f64) -> Self {
        Self { linear: v, semiring: v }
    }

    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Linear => self.linear,
            ParamGroup::Semiring => self.semiring,
        }
    }
}

/// Member parameter indices per group; every parameter belongs to exactly
/// one group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGroups {
    pub linear: Vec<usize>,
    pub semiring: Vec<usize>,
}

pub fn split_param_groups<T: Scalar>(params: &[Parameter<T>]) -> ParamGroups {
    let mut groups = ParamGroups::default();
    for (i, p) in params.iter().enumerate() {
        match p.group {
            ParamGroup::Linear => groups.linear.push(i),
            ParamGroup::Semiring => groups.semiring.push(i),
        }
    }
    groups
}

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// AdamW over a fixed parameter list. Decay is decoupled: `p ← p − lr·wd·p`
/// before the adaptive step, and only for parameters with `decay` set.
#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar> {
    cfg: AdamWConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        Self::with_config(params, AdamWConfig::default())
    }

    pub fn with_config(params: &[Parameter<T>], cfg: AdamWConfig) -> Self {
        let m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        let v = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self { cfg, m, v, t: 0 }
    }

    /// One update over all parameters using their gradient buffers.
    /// A non-finite gradient aborts with the parameter's name.
    pub fn step(
        &mut self,
        params: &mut [Parameter<T>],
        lr: GroupValues,
        weight_decay: GroupValues,
    ) -> Result<()> {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let eps = T::from_f64(self.cfg.eps);
        let corr1 = T::one() - b1.powi(self.t as i32);
        let corr2 = T::one() - b2.powi(self.t as i32);
        for (pi, p) in params.iter_mut().enumerate() {
            let lr_t = T::from_f64(lr.get(p.group));
            let wd = if p.decay {
                T::from_f64(weight_decay.get(p.group))
            } else {
                T::zero()
            };
            let grad = p.value.grad().ok_or_else(|| {
                Error::NonFinite(format!("parameter {} has no gradient buffer", p.name))
            })?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {}", p.name)));
            }
            let grad = grad.to_vec();
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            let data = p.value.data_mut();
            for k in 0..data.len() {
                let g = grad[k];
                // decoupled decay first
                data[k] -= lr_t * wd * data[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let m_hat = m[k] / corr1;
                let v_hat = v[k] / corr2;
                data[k] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// 1-cycle schedule: cosine ramp from `max_lr·warmup_factor` up to `max_lr`
/// over the warmup, then cosine anneal down to `max_lr·annihilation_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleConfig {
    pub max_lr: GroupValues,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub warmup_factor: f64,
    pub annihilation_factor: f64,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 || self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "need 0 < warmup_steps < total_steps, got {}/{}",
                self.warmup_steps, self.total_steps
            )));
        }
        for f in [self.warmup_factor, self.annihilation_factor] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "schedule factors must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }
}

pub fn onecycle_lr(step: usize, cfg: &ScheduleConfig, group: ParamGroup) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::ScheduleRange { step, total_steps: cfg.total_steps });
    }
    let max_lr = cfg.max_lr.get(group);
    let lr = if step <= cfg.warmup_steps {
        let progress = step as f64 / cfg.warmup_steps as f64;
        let low = cfg.warmup_factor * max_lr;
        low + (max_lr - low) * 0.5 * (1.0 - (std::f64::consts::PI * progress).cos())
    } else {
        let progress =
            (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
        let low = cfg.annihilation_factor * max_lr;
        low + (max_lr - low) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    };
    Ok(lr)
}

/// Per-group learning rates at one step.
pub fn onecycle_group_lr(step: usize, cfg: &ScheduleConfig) -> Result<GroupValues> {
    Ok(GroupValues {
        linear: onecycle_lr(step, cfg, ParamGroup::Linear)?,
        semiring: onecycle_lr(step, cfg, ParamGroup::Semiring)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn param(name: &str, group: ParamGroup, values: Vec<f64>) -> Parameter<f64> {
        Parameter::new(name, group, true, Tensor::vector(values))
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_parameters_unchanged() {
        let mut params = vec![param("p", ParamGroup::Linear, vec![0.5, -1.5])];
        params[0].value.zero_grad();
        let mut opt = AdamW::new(&params);
        opt.step(&mut params, GroupValues::uniform(0.1), GroupValues::uniform(0.0))
            .unwrap();
        assert_eq!(params[0].value.data(), &[0.5, -1.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![param("p", ParamGroup::Linear, vec![1.0, 1.0])];
        params[0].value.set_grad(vec![0.2, -3.0]).unwrap();
        let mut opt = AdamW::new(&params);
        opt.step(&mut params, GroupValues::uniform(0.01), GroupValues::uniform(0.0))
            .unwrap();
        // m_hat = g, v_hat = g², so the step is lr·g/(|g| + eps) ~ lr·sign(g)
        assert!((params[0].value.data()[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((params[0].value.data()[1] - (1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn decay_only_shrinks_multiplicatively() {
        let mut params = vec![param("p", ParamGroup::Semiring, vec![2.0])];
        params[0].value.zero_grad();
        let mut opt = AdamW::new(&params);
        let lr = GroupValues::uniform(0.1);
        let wd = GroupValues::uniform(0.5);
        opt.step(&mut params, lr, wd).unwrap();
        assert!((params[0].value.data()[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn no_decay_parameters_are_left_alone() {
        let mut params = vec![Parameter::new(
            "gamma",
            ParamGroup::Linear,
            false,
            Tensor::vector(vec![1.0]),
        )];
        params[0].value.zero_grad();
        let mut opt = AdamW::new(&params);
        opt.step(&mut params, GroupValues::uniform(0.1), GroupValues::uniform(0.5))
            .unwrap();
        assert_eq!(params[0].value.data(), &[1.0]);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = vec![param("block1.semiring", ParamGroup::Semiring, vec![0.0])];
        params[0].value.set_grad(vec![f64::INFINITY]).unwrap();
        let mut opt = AdamW::new(&params);
        let err = opt
            .step(&mut params, GroupValues::uniform(0.1), GroupValues::uniform(0.0))
            .unwrap_err()
            .to_string();
        assert!(err.contains("block1.semiring"), "{err}");
    }

    #[test]
    fn group_isolation_freezes_exactly_one_group() {
        let mut params = vec![
            param("lin", ParamGroup::Linear, vec![1.0]),
            param("sem", ParamGroup::Semiring, vec![1.0]),
        ];
        let mut opt = AdamW::new(&params);
        for _ in 0..5 {
            params[0].value.set_grad(vec![0.3]).unwrap();
            params[1].value.set_grad(vec![0.3]).unwrap();
            let lr = GroupValues { linear: 0.05, semiring: 0.0 };
            opt.step(&mut params, lr, GroupValues::uniform(0.01)).unwrap();
        }
        assert_eq!(params[1].value.data(), &[1.0]);
        assert!(params[0].value.data()[0] < 1.0);
    }

    #[test]
    fn identical_inputs_give_bit_identical_trajectories() {
        let run = || {
            let mut params = vec![param("p", ParamGroup::Linear, vec![0.4f64, -0.2, 1.1])];
            let mut opt = AdamW::new(&params);
            for s in 0..50 {
                let g = vec![0.01 * s as f64, -0.2, 0.07];
                params[0].value.set_grad(g).unwrap();
                opt.step(
                    &mut params,
                    GroupValues::uniform(0.01),
                    GroupValues::uniform(0.02),
                )
                .unwrap();
            }
            params[0].value.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    fn schedule() -> ScheduleConfig {
        ScheduleConfig {
            max_lr: GroupValues { linear: 0.02, semiring: 0.004 },
            total_steps: 200,
            warmup_steps: 90,
            warmup_factor: 0.1,
            annihilation_factor: 0.001,
        }
    }

    #[test]
    fn onecycle_endpoints() {
        let cfg = schedule();
        cfg.validate().unwrap();
        let lr0 = onecycle_lr(0, &cfg, ParamGroup::Linear).unwrap();
        assert!((lr0 - 0.002).abs() < 1e-15); // max_lr / 10
        let peak = onecycle_lr(90, &cfg, ParamGroup::Linear).unwrap();
        assert!((peak - 0.02).abs() < 1e-15);
        let last = onecycle_lr(200, &cfg, ParamGroup::Linear).unwrap();
        assert!((last - 0.00002).abs() < 1e-15); // max_lr / 1000
        // the semiring group follows its own peak
        let sem = onecycle_lr(90, &cfg, ParamGroup::Semiring).unwrap();
        assert!((sem - 0.004).abs() < 1e-15);
    }

    #[test]
    fn onecycle_is_continuous() {
        let cfg = schedule();
        let bound = 2.0 * 0.02 / 90.0_f64.min(110.0);
        for s in 0..cfg.total_steps {
            let a = onecycle_lr(s, &cfg, ParamGroup::Linear).unwrap();
            let b = onecycle_lr(s + 1, &cfg, ParamGroup::Linear).unwrap();
            assert!((a - b).abs() <= bound, "jump at {s}: {a} -> {b}");
        }
    }

    #[test]
    fn onecycle_rejects_out_of_range_steps() {
        let cfg = schedule();
        assert!(matches!(
            onecycle_lr(201, &cfg, ParamGroup::Linear),
            Err(Error::ScheduleRange { step: 201, total_steps: 200 })
        ));
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = schedule();
        cfg.warmup_steps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = schedule();
        cfg.warmup_steps = 200;
        assert!(cfg.validate().is_err());
        let mut cfg = schedule();
        cfg.annihilation_factor = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn split_groups_cover_all_parameters() {
        use crate::model::{BlockVariant, FcModel, ModelConfig};
        use crate::semiring::SemiringSpec;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let iris = FcModel::<f64>::init(
            ModelConfig {
                n_features: 4,
                n_classes: 3,
                width: 4,
                block_variant: BlockVariant::SemiringV1,
                semiring: Some(SemiringSpec::max_plus()),
            },
            &mut rng,
        )
        .unwrap();
        let groups = split_param_groups(iris.params());
        // one semiring tensor per block
        assert_eq!(groups.semiring.len(), 2);
        assert_eq!(groups.linear.len() + groups.semiring.len(), iris.params().len());
        let mut all: Vec<usize> = groups.linear.iter().chain(&groups.semiring).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..iris.params().len()).collect::<Vec<_>>());

        let relu = FcModel::<f64>::init(
            ModelConfig {
                n_features: 4,
                n_classes: 3,
                width: 4,
                block_variant: BlockVariant::ReluPlain,
                semiring: None,
            },
            &mut rng,
        )
        .unwrap();
        assert!(split_param_groups(relu.params()).semiring.is_empty());
    }
}

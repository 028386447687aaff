//! A ConvNeXt-style residual block with the pixel-wise feed-forward swapped
//! out: depthwise convolution, channel layer norm, then either the usual
//! reverse-bottleneck MLP (Linear c→4c, GELU, Linear 4c→c) or a semiring
//! fan-out (Semiring c→4c, Linear 4c→c), plus the residual input.
//!
//! Built at unit-test scale: single image `x[h×w×c]`, shape-preserving.

use rand::Rng;

use crate::error::Result;
use crate::init::{self, InitSpec};
use crate::model::{Parameter, ParamGroup};
use crate::scalar::Scalar;
use crate::semiring::{SemiringKind, SemiringSpec};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedForward {
    /// Linear(c→4c) → GELU → Linear(4c→c)
    Mlp,
    /// Semiring(c→4c) → Linear(4c→c)
    SemiringLinear(SemiringSpec),
}

#[derive(Debug, Clone)]
pub struct ConvNextBlockConfig {
    pub channels: usize,
    /// Odd depthwise kernel size.
    pub kernel: usize,
    /// Affine layer norm; dropped for the log-plus variants to keep the
    /// exponentials fed with normalized values.
    pub affine_norm: bool,
    pub feed_forward: FeedForward,
}

#[derive(Debug, Clone)]
pub struct ConvNextBlock<T: Scalar> {
    config: ConvNextBlockConfig,
    params: Vec<Parameter<T>>,
    dw: usize,
    norm: Option<(usize, usize)>,
    up: usize,
    down: usize,
}

impl<T: Scalar> ConvNextBlock<T> {
    pub fn init(config: ConvNextBlockConfig, rng: &mut impl Rng) -> Result<Self> {
        let c = config.channels;
        let k = config.kernel;
        let mut params = Vec::new();

        params.push(Parameter::new(
            "dwconv",
            ParamGroup::Linear,
            true,
            init::kaiming_shaped(vec![k, k, c], k * k, rng),
        ));
        let dw = 0;

        let norm = if config.affine_norm {
            params.push(Parameter::new(
                "norm.gamma",
                ParamGroup::Linear,
                false,
                Tensor::full(vec![c], T::one()),
            ));
            params.push(Parameter::new(
                "norm.beta",
                ParamGroup::Linear,
                false,
                Tensor::zeros(vec![c]),
            ));
            Some((1, 2))
        } else {
            None
        };

        let up_value: Tensor<T> = match config.feed_forward {
            FeedForward::Mlp => init::kaiming_init(4 * c, c, rng),
            FeedForward::SemiringLinear(spec) => match spec.kind {
                SemiringKind::MaxPlus => init::fair_tropical_init(
                    4 * c,
                    c,
                    &InitSpec::default(),
                    init::TropicalVariant::MaxPlus,
                    rng,
                )?,
                SemiringKind::MinPlus => init::fair_tropical_init(
                    4 * c,
                    c,
                    &InitSpec::default(),
                    init::TropicalVariant::MinPlus,
                    rng,
                )?,
                SemiringKind::LogPlus => {
                    init::fair_log_init(4 * c, c, &InitSpec::default(), spec.mu, rng)?
                }
                SemiringKind::Linear => init::kaiming_init(4 * c, c, rng),
            },
        };
        let up_group = match config.feed_forward {
            FeedForward::Mlp => ParamGroup::Linear,
            FeedForward::SemiringLinear(_) => ParamGroup::Semiring,
        };
        params.push(Parameter::new("up", up_group, true, up_value));
        let up = params.len() - 1;

        params.push(Parameter::new(
            "down",
            ParamGroup::Linear,
            true,
            init::kaiming_init(c, 4 * c, rng),
        ));
        let down = params.len() - 1;

        Ok(Self { config, params, dw, norm, up, down })
    }

    pub fn config(&self) -> &ConvNextBlockConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Record the block on a tape; output shape equals input shape
    /// `[h×w×c]`. Returns the output plus the parameter variables aligned
    /// with [`Self::params`].
    pub fn forward(&self, tape: &mut Tape<T>, x: Var) -> Result<(Var, Vec<Var>)> {
        let shape = tape.value(x).shape().to_vec();
        let (h, w, c) = (shape[0], shape[1], shape[2]);
        let param_vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.name.clone(), p.value.clone()))
            .collect();

        let conv = tape.depthwise_conv("dwconv", x, param_vars[self.dw])?;
        // pixel-wise ops run on a [(h*w) × c] view
        let flat = tape.reshape("flatten", conv, vec![h * w, c])?;
        let normed = match self.norm {
            Some((g, b)) => tape.layer_norm(
                "norm",
                flat,
                Some((param_vars[g], param_vars[b])),
                T::from_f64(crate::model::LAYER_NORM_EPS),
            )?,
            None => tape.layer_norm("norm", flat, None, T::from_f64(crate::model::LAYER_NORM_EPS))?,
        };
        let ff = match self.config.feed_forward {
            FeedForward::Mlp => {
                let up = tape.linear_matmul("up", normed, param_vars[self.up])?;
                let act = tape.gelu("gelu", up);
                tape.linear_matmul("down", act, param_vars[self.down])?
            }
            FeedForward::SemiringLinear(spec) => {
                let up = tape.semiring_matmul("up", spec, normed, param_vars[self.up])?;
                tape.linear_matmul("down", up, param_vars[self.down])?
            }
        };
        let unflat = tape.reshape("unflatten", ff, vec![h, w, c])?;
        let out = tape.add("residual", unflat, x)?;
        Ok((out, param_vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variants() -> Vec<FeedForward> {
        vec![
            FeedForward::Mlp,
            FeedForward::SemiringLinear(SemiringSpec::max_plus()),
            FeedForward::SemiringLinear(SemiringSpec::min_plus()),
            FeedForward::SemiringLinear(SemiringSpec::log_plus(1.0).unwrap()),
            FeedForward::SemiringLinear(SemiringSpec::log_plus(-1.0).unwrap()),
        ]
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor<f64> {
        let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![h, w, c], data).unwrap()
    }

    #[test]
    fn output_shape_equals_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for ff in variants() {
            let affine = !matches!(
                ff,
                FeedForward::SemiringLinear(s) if s.kind == SemiringKind::LogPlus
            );
            let block = ConvNextBlock::<f64>::init(
                ConvNextBlockConfig { channels: 4, kernel: 3, affine_norm: affine, feed_forward: ff },
                &mut rng,
            )
            .unwrap();
            let x = random_image(&mut rng, 8, 8, 4);
            let mut tape = Tape::new();
            let xv = tape.leaf("x", x);
            let (out, _) = block.forward(&mut tape, xv).unwrap();
            assert_eq!(tape.value(out).shape(), &[8, 8, 4]);
        }
    }

    #[test]
    fn zeroed_down_projection_gives_residual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for ff in variants() {
            let mut block = ConvNextBlock::<f64>::init(
                ConvNextBlockConfig { channels: 3, kernel: 3, affine_norm: true, feed_forward: ff },
                &mut rng,
            )
            .unwrap();
            let down = block.params.len() - 1;
            block.params_mut()[down].value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            let x = random_image(&mut rng, 5, 5, 3);
            let mut tape = Tape::new();
            let xv = tape.leaf("x", x.clone());
            let (out, _) = block.forward(&mut tape, xv).unwrap();
            assert_eq!(tape.value(out).data(), x.data());
        }
    }

    #[test]
    fn gradient_reaches_every_parameter_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for ff in variants() {
            let block = ConvNextBlock::<f64>::init(
                ConvNextBlockConfig { channels: 4, kernel: 3, affine_norm: true, feed_forward: ff },
                &mut rng,
            )
            .unwrap();
            let x = random_image(&mut rng, 6, 6, 4);
            let mut tape = Tape::new();
            let xv = tape.leaf("x", x);
            let (out, param_vars) = block.forward(&mut tape, xv).unwrap();
            let flat = tape.reshape("logits", out, vec![36, 4]).unwrap();
            let labels: Vec<usize> = (0..36).map(|i| i % 4).collect();
            let loss = tape.cross_entropy(flat, &labels).unwrap();
            tape.backward(loss).unwrap();
            for (p, &v) in block.params().iter().zip(&param_vars) {
                let g = tape.grad(v).unwrap_or(&[]);
                assert!(
                    g.iter().any(|&gi| gi != 0.0),
                    "{ff:?}: no gradient reached {}",
                    p.name
                );
            }
        }
    }

    #[test]
    fn parameter_count_is_architecture_determined() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = 4;
        let k = 3;
        let mlp = ConvNextBlock::<f64>::init(
            ConvNextBlockConfig {
                channels: c,
                kernel: k,
                affine_norm: true,
                feed_forward: FeedForward::Mlp,
            },
            &mut rng,
        )
        .unwrap();
        // dw k²c + affine 2c + up 4c² + down 4c²
        assert_eq!(mlp.count_parameters(), k * k * c + 2 * c + 8 * c * c);
        let sem = ConvNextBlock::<f64>::init(
            ConvNextBlockConfig {
                channels: c,
                kernel: k,
                affine_norm: true,
                feed_forward: FeedForward::SemiringLinear(SemiringSpec::max_plus()),
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(sem.count_parameters(), mlp.count_parameters());
    }

    #[test]
    fn kernel_must_be_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = ConvNextBlock::<f64>::init(
            ConvNextBlockConfig {
                channels: 2,
                kernel: 4,
                affine_norm: false,
                feed_forward: FeedForward::Mlp,
            },
            &mut rng,
        )
        .unwrap();
        let x = random_image(&mut rng, 4, 4, 2);
        let mut tape = Tape::new();
        let xv = tape.leaf("x", x);
        assert!(block.forward(&mut tape, xv).is_err());
    }
}

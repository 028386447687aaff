//! Fully connected models: a linear stem and head around two residual
//! blocks, where each block is either a Linear+ReLU baseline or a semiring
//! layer with the same parameter count.
//!
//! Block variants:
//! - `ReluPlain`:   Linear(w→w) → ReLU
//! - `ReluNorm`:    LayerNorm(affine) → Linear(w→w) → ReLU
//! - `SemiringV1`:  Linear(w→w/2) → Semiring(w/2→w)
//! - `SemiringV2`:  LayerNorm(affine) → Semiring(w→w)
//!
//! The residual join around each block is ordinary real addition. No module
//! carries a bias.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{self, InitSpec, TropicalVariant};
use crate::scalar::Scalar;
use crate::semiring::{SemiringKind, SemiringSpec};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockVariant {
    ReluPlain,
    ReluNorm,
    SemiringV1,
    SemiringV2,
}

impl BlockVariant {
    pub fn uses_semiring(self) -> bool {
        matches!(self, BlockVariant::SemiringV1 | BlockVariant::SemiringV2)
    }

    fn tag(self) -> &'static str {
        match self {
            BlockVariant::ReluPlain => "relu_plain",
            BlockVariant::ReluNorm => "relu_norm",
            BlockVariant::SemiringV1 => "semiring_v1",
            BlockVariant::SemiringV2 => "semiring_v2",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "relu_plain" => BlockVariant::ReluPlain,
            "relu_norm" => BlockVariant::ReluNorm,
            "semiring_v1" => BlockVariant::SemiringV1,
            "semiring_v2" => BlockVariant::SemiringV2,
            other => return Err(Error::Checkpoint(format!("unknown block variant {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_features: usize,
    pub n_classes: usize,
    pub width: usize,
    pub block_variant: BlockVariant,
    pub semiring: Option<SemiringSpec>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_classes < 2 || self.width == 0 {
            return Err(Error::ModelConfig(format!(
                "need n_features >= 1, n_classes >= 2, width >= 1; got {}/{}/{}",
                self.n_features, self.n_classes, self.width
            )));
        }
        if self.block_variant == BlockVariant::SemiringV1 && self.width % 2 != 0 {
            return Err(Error::ModelConfig(format!(
                "the V1 block bottleneck needs an even width, got {}",
                self.width
            )));
        }
        match (self.block_variant.uses_semiring(), &self.semiring) {
            (true, None) => Err(Error::ModelConfig(
                "semiring blocks need a semiring spec".into(),
            )),
            (false, Some(_)) => Err(Error::ModelConfig(
                "ReLU blocks do not take a semiring spec".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match &self.semiring {
            Some(s) if s.kind == SemiringKind::LogPlus => format!(
                "{} {} mu={} (n={}, c={}, w={})",
                self.block_variant.tag(),
                s.name(),
                s.mu,
                self.n_features,
                self.n_classes,
                self.width
            ),
            Some(s) => format!(
                "{} {} (n={}, c={}, w={})",
                self.block_variant.tag(),
                s.name(),
                self.n_features,
                self.n_classes,
                self.width
            ),
            None => format!(
                "{} (n={}, c={}, w={})",
                self.block_variant.tag(),
                self.n_features,
                self.n_classes,
                self.width
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Linear,
    Semiring,
}

/// A trainable tensor tagged with the optimizer group it belongs to.
/// Gradients are carried in the tensor's optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub group: ParamGroup,
    /// Layer-norm affine parameters opt out of weight decay.
    pub decay: bool,
    pub value: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, group: ParamGroup, decay: bool, value: Tensor<T>) -> Self {
        Self { name: name.into(), group, decay, value }
    }
}

#[derive(Debug, Clone, Copy)]
enum BlockLayout {
    ReluPlain { lin: usize },
    ReluNorm { gamma: usize, beta: usize, lin: usize },
    SemiringV1 { lin: usize, sem: usize },
    SemiringV2 { gamma: usize, beta: usize, sem: usize },
}

/// Output of a recorded forward pass: the logits variable plus the tape
/// variable of every parameter, aligned with [`FcModel::params`].
pub struct ForwardPass {
    pub output: Var,
    pub param_vars: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct FcModel<T: Scalar> {
    config: ModelConfig,
    params: Vec<Parameter<T>>,
    blocks: [BlockLayout; 2],
    stem: usize,
    head: usize,
}

impl<T: Scalar> FcModel<T> {
    /// Build and initialize a model: Kaiming for all linear tensors, fair
    /// tropical/logarithmic initialization for semiring tensors, ones/zeros
    /// for the layer-norm affine pair.
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let init_spec = InitSpec::default();
        let mut params: Vec<Parameter<T>> = Vec::new();

        let push = |p: Parameter<T>, params: &mut Vec<Parameter<T>>| -> usize {
            params.push(p);
            params.len() - 1
        };

        let stem = push(
            Parameter::new(
                "stem",
                ParamGroup::Linear,
                true,
                init::kaiming_init(w, config.n_features, rng),
            ),
            &mut params,
        );

        let mut blocks = [BlockLayout::ReluPlain { lin: 0 }; 2];
        for (bi, slot) in blocks.iter_mut().enumerate() {
            let prefix = format!("block{}", bi + 1);
            *slot = match config.block_variant {
                BlockVariant::ReluPlain => BlockLayout::ReluPlain {
                    lin: push(
                        Parameter::new(
                            format!("{prefix}.linear"),
                            ParamGroup::Linear,
                            true,
                            init::kaiming_init(w, w, rng),
                        ),
                        &mut params,
                    ),
                },
                BlockVariant::ReluNorm => {
                    let gamma = push(
                        Parameter::new(
                            format!("{prefix}.norm.gamma"),
                            ParamGroup::Linear,
                            false,
                            Tensor::full(vec![w], T::one()),
                        ),
                        &mut params,
                    );
                    let beta = push(
                        Parameter::new(
                            format!("{prefix}.norm.beta"),
                            ParamGroup::Linear,
                            false,
                            Tensor::zeros(vec![w]),
                        ),
                        &mut params,
                    );
                    let lin = push(
                        Parameter::new(
                            format!("{prefix}.linear"),
                            ParamGroup::Linear,
                            true,
                            init::kaiming_init(w, w, rng),
                        ),
                        &mut params,
                    );
                    BlockLayout::ReluNorm { gamma, beta, lin }
                }
                BlockVariant::SemiringV1 => {
                    let half = w / 2;
                    let lin = push(
                        Parameter::new(
                            format!("{prefix}.linear"),
                            ParamGroup::Linear,
                            true,
                            init::kaiming_init(half, w, rng),
                        ),
                        &mut params,
                    );
                    let sem = push(
                        Parameter::new(
                            format!("{prefix}.semiring"),
                            ParamGroup::Semiring,
                            true,
                            semiring_weights(w, half, &init_spec, config.semiring.unwrap(), rng)?,
                        ),
                        &mut params,
                    );
                    BlockLayout::SemiringV1 { lin, sem }
                }
                BlockVariant::SemiringV2 => {
                    let gamma = push(
                        Parameter::new(
                            format!("{prefix}.norm.gamma"),
                            ParamGroup::Linear,
                            false,
                            Tensor::full(vec![w], T::one()),
                        ),
                        &mut params,
                    );
                    let beta = push(
                        Parameter::new(
                            format!("{prefix}.norm.beta"),
                            ParamGroup::Linear,
                            false,
                            Tensor::zeros(vec![w]),
                        ),
                        &mut params,
                    );
                    let sem = push(
                        Parameter::new(
                            format!("{prefix}.semiring"),
                            ParamGroup::Semiring,
                            true,
                            semiring_weights(w, w, &init_spec, config.semiring.unwrap(), rng)?,
                        ),
                        &mut params,
                    );
                    BlockLayout::SemiringV2 { gamma, beta, sem }
                }
            };
        }

        let head = push(
            Parameter::new(
                "head",
                ParamGroup::Linear,
                true,
                init::kaiming_init(config.n_classes, w, rng),
            ),
            &mut params,
        );

        Ok(Self { config, params, blocks, stem, head })
    }

    pub fn config(&self) -> &ModelConfig {
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

    /// Record the forward pass `x[b×n] → logits[b×c]` on the tape.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var) -> Result<ForwardPass> {
        let mut param_vars = Vec::with_capacity(self.params.len());
        for p in &self.params {
            param_vars.push(tape.leaf(p.name.clone(), p.value.clone()));
        }
        let semiring = self.config.semiring;
        let eps = T::from_f64(LAYER_NORM_EPS);

        let mut h = tape.linear_matmul("stem", x, param_vars[self.stem])?;
        for (bi, block) in self.blocks.iter().enumerate() {
            let input = h;
            let label = |part: &str| format!("block{}.{part}", bi + 1);
            let out = match *block {
                BlockLayout::ReluPlain { lin } => {
                    let z = tape.linear_matmul(label("linear"), input, param_vars[lin])?;
                    tape.relu(label("relu"), z)
                }
                BlockLayout::ReluNorm { gamma, beta, lin } => {
                    let normed = tape.layer_norm(
                        label("norm"),
                        input,
                        Some((param_vars[gamma], param_vars[beta])),
                        eps,
                    )?;
                    let z = tape.linear_matmul(label("linear"), normed, param_vars[lin])?;
                    tape.relu(label("relu"), z)
                }
                BlockLayout::SemiringV1 { lin, sem } => {
                    let z = tape.linear_matmul(label("linear"), input, param_vars[lin])?;
                    tape.semiring_matmul(
                        label("semiring"),
                        semiring.expect("validated"),
                        z,
                        param_vars[sem],
                    )?
                }
                BlockLayout::SemiringV2 { gamma, beta, sem } => {
                    let normed = tape.layer_norm(
                        label("norm"),
                        input,
                        Some((param_vars[gamma], param_vars[beta])),
                        eps,
                    )?;
                    tape.semiring_matmul(
                        label("semiring"),
                        semiring.expect("validated"),
                        normed,
                        param_vars[sem],
                    )?
                }
            };
            h = tape.add(label("residual"), out, input)?;
        }
        let output = tape.linear_matmul("head", h, param_vars[self.head])?;
        Ok(ForwardPass { output, param_vars })
    }

    /// Copy the tape gradients of a recorded pass into the parameters'
    /// gradient buffers (zeros for parameters no gradient reached).
    pub fn pull_gradients(&mut self, tape: &Tape<T>, pass: &ForwardPass) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&pass.param_vars) {
            match tape.grad(v) {
                Some(g) => p.value.set_grad(g.to_vec())?,
                None => p.value.zero_grad(),
            }
        }
        Ok(())
    }

    /// Write the checkpoint: a versioned plain-text header (config, then one
    /// `tensor <name> <dims...>` line per tensor) followed by the raw
    /// little-endian f32 data in header order.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "semiring-nn-checkpoint v1")?;
        writeln!(out, "n_features {}", self.config.n_features)?;
        writeln!(out, "n_classes {}", self.config.n_classes)?;
        writeln!(out, "width {}", self.config.width)?;
        writeln!(out, "block {}", self.config.block_variant.tag())?;
        match &self.config.semiring {
            None => writeln!(out, "semiring none")?,
            Some(s) => {
                writeln!(out, "semiring {}", s.name())?;
                if s.kind == SemiringKind::LogPlus {
                    writeln!(out, "mu {}", s.mu)?;
                }
            }
        }
        for p in &self.params {
            write!(out, "tensor {}", p.name)?;
            for d in p.value.shape() {
                write!(out, " {d}")?;
            }
            writeln!(out)?;
        }
        writeln!(out, "data")?;
        for p in &self.params {
            for v in p.value.iter() {
                out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read a checkpoint written by [`FcModel::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut line = String::new();

        let mut read_line = |reader: &mut BufReader<File>| -> Result<String> {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                return Err(Error::Checkpoint("unexpected end of header".into()));
            }
            Ok(line.trim_end().to_string())
        };

        let version = read_line(&mut reader)?;
        if version != "semiring-nn-checkpoint v1" {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint header {version:?}"
            )));
        }

        let mut n_features = None;
        let mut n_classes = None;
        let mut width = None;
        let mut block = None;
        let mut semiring_name: Option<String> = None;
        let mut mu: Option<f64> = None;
        let mut tensors: Vec<(String, Vec<usize>)> = Vec::new();
        loop {
            let l = read_line(&mut reader)?;
            if l == "data" {
                break;
            }
            let mut parts = l.split_whitespace();
            let key = parts.next().unwrap_or_default();
            match key {
                "n_features" => n_features = parts.next().and_then(|v| v.parse().ok()),
                "n_classes" => n_classes = parts.next().and_then(|v| v.parse().ok()),
                "width" => width = parts.next().and_then(|v| v.parse().ok()),
                "block" => block = parts.next().map(str::to_string),
                "semiring" => semiring_name = parts.next().map(str::to_string),
                "mu" => mu = parts.next().and_then(|v| v.parse().ok()),
                "tensor" => {
                    let name = parts
                        .next()
                        .ok_or_else(|| Error::Checkpoint("tensor line missing name".into()))?
                        .to_string();
                    let dims: Vec<usize> = parts
                        .map(|d| {
                            d.parse::<usize>().map_err(|_| {
                                Error::Checkpoint(format!("bad tensor dimension {d:?}"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    tensors.push((name, dims));
                }
                other => {
                    return Err(Error::Checkpoint(format!("unknown header key {other:?}")));
                }
            }
        }

        let missing = |what: &str| Error::Checkpoint(format!("header missing {what}"));
        let config = ModelConfig {
            n_features: n_features.ok_or_else(|| missing("n_features"))?,
            n_classes: n_classes.ok_or_else(|| missing("n_classes"))?,
            width: width.ok_or_else(|| missing("width"))?,
            block_variant: BlockVariant::from_tag(&block.ok_or_else(|| missing("block"))?)?,
            semiring: match semiring_name.as_deref() {
                Some("none") | None => None,
                Some("linear") => Some(SemiringSpec::linear()),
                Some("maxplus") => Some(SemiringSpec::max_plus()),
                Some("minplus") => Some(SemiringSpec::min_plus()),
                Some("logplus") => Some(
                    SemiringSpec::log_plus(mu.ok_or_else(|| missing("mu"))?)
                        .map_err(|e| Error::Checkpoint(e.to_string()))?,
                ),
                Some(other) => {
                    return Err(Error::Checkpoint(format!("unknown semiring {other:?}")))
                }
            },
        };

        // build a skeleton with the right layout, then overwrite the values
        let mut skeleton_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut model = FcModel::<T>::init(config, &mut skeleton_rng)?;
        if tensors.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint lists {} tensors, model has {}",
                tensors.len(),
                model.params.len()
            )));
        }
        for (p, (name, dims)) in model.params.iter_mut().zip(&tensors) {
            if &p.name != name || p.value.shape() != dims.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: checkpoint has {name} {dims:?}, model expects {} {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            let mut bytes = vec![0u8; p.value.len() * 4];
            reader.read_exact(&mut bytes).map_err(|_| {
                Error::Checkpoint(format!("truncated data section at tensor {name}"))
            })?;
            for (dst, chunk) in p.value.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                *dst = T::from_f64(v as f64);
            }
        }
        Ok(model)
    }
}

fn semiring_weights<T: Scalar>(
    n: usize,
    m: usize,
    init_spec: &InitSpec,
    spec: SemiringSpec,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    match spec.kind {
        SemiringKind::MaxPlus => {
            init::fair_tropical_init(n, m, init_spec, TropicalVariant::MaxPlus, rng)
        }
        SemiringKind::MinPlus => {
            init::fair_tropical_init(n, m, init_spec, TropicalVariant::MinPlus, rng)
        }
        SemiringKind::LogPlus => init::fair_log_init(n, m, init_spec, spec.mu, rng),
        // a linear "semiring" layer is an ordinary dense layer
        SemiringKind::Linear => Ok(init::kaiming_init(n, m, rng)),
    }
}

/// Convenience constructors for the benchmark architectures.
pub mod presets {
    use super::*;

    /// Architectures pair a baseline with a semiring block of identical
    /// parameter count: plain blocks with V1, normalized blocks with V2.
    pub fn baseline_of(variant: BlockVariant) -> BlockVariant {
        match variant {
            BlockVariant::SemiringV1 => BlockVariant::ReluPlain,
            BlockVariant::SemiringV2 => BlockVariant::ReluNorm,
            v => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{finite_diff_grad, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iris_v1(spec: SemiringSpec) -> ModelConfig {
        ModelConfig {
            n_features: 4,
            n_classes: 3,
            width: 4,
            block_variant: BlockVariant::SemiringV1,
            semiring: Some(spec),
        }
    }

    #[test]
    fn parameter_counts_match_the_benchmarks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let iris = FcModel::<f64>::init(iris_v1(SemiringSpec::max_plus()), &mut rng).unwrap();
        assert_eq!(iris.count_parameters(), 60);

        let heart = FcModel::<f64>::init(
            ModelConfig {
                n_features: 13,
                n_classes: 2,
                width: 48,
                block_variant: BlockVariant::SemiringV1,
                semiring: Some(SemiringSpec::min_plus()),
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(heart.count_parameters(), 5328);

        let spheres = FcModel::<f64>::init(
            ModelConfig {
                n_features: 3,
                n_classes: 2,
                width: 32,
                block_variant: BlockVariant::SemiringV2,
                semiring: Some(SemiringSpec::log_plus(10.0).unwrap()),
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(spheres.count_parameters(), 2336);
    }

    #[test]
    fn baseline_matches_semiring_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (nf, nc, w, variant) in [
            (4usize, 3usize, 4usize, BlockVariant::SemiringV1),
            (13, 2, 48, BlockVariant::SemiringV1),
            (3, 2, 32, BlockVariant::SemiringV2),
            (2, 2, 16, BlockVariant::SemiringV2),
        ] {
            let sem = FcModel::<f64>::init(
                ModelConfig {
                    n_features: nf,
                    n_classes: nc,
                    width: w,
                    block_variant: variant,
                    semiring: Some(SemiringSpec::max_plus()),
                },
                &mut rng,
            )
            .unwrap();
            let base = FcModel::<f64>::init(
                ModelConfig {
                    n_features: nf,
                    n_classes: nc,
                    width: w,
                    block_variant: presets::baseline_of(variant),
                    semiring: None,
                },
                &mut rng,
            )
            .unwrap();
            assert_eq!(sem.count_parameters(), base.count_parameters());
        }
    }

    #[test]
    fn v1_requires_even_width() {
        let mut cfg = iris_v1(SemiringSpec::max_plus());
        cfg.width = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn semiring_spec_presence_is_enforced() {
        let mut cfg = iris_v1(SemiringSpec::max_plus());
        cfg.semiring = None;
        assert!(cfg.validate().is_err());
        let relu = ModelConfig {
            n_features: 4,
            n_classes: 3,
            width: 4,
            block_variant: BlockVariant::ReluPlain,
            semiring: Some(SemiringSpec::max_plus()),
        };
        assert!(relu.validate().is_err());
    }

    #[test]
    fn forward_maps_batch_to_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = FcModel::<f64>::init(iris_v1(SemiringSpec::max_plus()), &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf("x", Tensor::new(vec![5, 4], vec![0.1; 20]).unwrap());
        let pass = model.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(pass.output).shape(), &[5, 3]);
    }

    #[test]
    fn zeroed_block_outputs_reduce_to_head_of_stem() {
        // zero the final tensor of each block: the blocks contribute nothing
        // and the model collapses to Head(Stem(x))
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model =
            FcModel::<f64>::init(
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
        for p in model.params_mut() {
            if p.name.contains("linear") {
                p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = Tensor::new(vec![2, 4], vec![0.3, -0.1, 0.8, 0.2, -0.4, 0.9, 0.05, -0.6]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf("x", x.clone());
        let pass = model.forward(&mut tape, xv).unwrap();
        let full = tape.value(pass.output).clone();

        let stem = &model.params()[0].value;
        let head = &model.params()[model.params().len() - 1].value;
        let hidden = crate::linalg::linear_matmul(&x, stem).unwrap();
        let direct = crate::linalg::linear_matmul(&hidden, head).unwrap();
        for (a, b) in full.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        // iris-scale model, every parameter, every semiring variant
        for semiring in [
            None,
            Some(SemiringSpec::max_plus()),
            Some(SemiringSpec::min_plus()),
            Some(SemiringSpec::log_plus(1.0).unwrap()),
            Some(SemiringSpec::log_plus(-10.0).unwrap()),
        ] {
            let cfg = ModelConfig {
                n_features: 4,
                n_classes: 3,
                width: 4,
                block_variant: if semiring.is_some() {
                    BlockVariant::SemiringV1
                } else {
                    BlockVariant::ReluPlain
                },
                semiring,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut model = FcModel::<f64>::init(cfg.clone(), &mut rng).unwrap();
            let x = Tensor::new(
                vec![3, 4],
                (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect(),
            )
            .unwrap();
            let labels = [0usize, 2, 1];

            let mut tape = Tape::new();
            let xv = tape.leaf("x", x.clone());
            let pass = model.forward(&mut tape, xv).unwrap();
            let loss = tape.cross_entropy(pass.output, &labels).unwrap();
            tape.backward(loss).unwrap();
            if let Some(gap) = tape.min_tropical_gap() {
                assert!(gap > 1e-3, "unlucky tie in test fixture");
            }
            let grads: Vec<Vec<f64>> = pass
                .param_vars
                .iter()
                .map(|&v| tape.grad(v).unwrap().to_vec())
                .collect();

            for pi in 0..model.params().len() {
                let base = model.params()[pi].value.data().to_vec();
                let fd = finite_diff_grad(
                    |vals| {
                        model.params_mut()[pi].value.data_mut().copy_from_slice(vals);
                        let mut t = Tape::new();
                        let xv = t.leaf("x", x.clone());
                        let p = model.forward(&mut t, xv).unwrap();
                        let l = t.cross_entropy(p.output, &labels).unwrap();
                        t.value(l).data()[0]
                    },
                    &base,
                    1e-6,
                );
                model.params_mut()[pi].value.data_mut().copy_from_slice(&base);
                for (a, f) in grads[pi].iter().zip(&fd) {
                    assert!(
                        rel_err(*a, *f) < 1e-4,
                        "{:?} {}: {a} vs {f}",
                        cfg.semiring,
                        model.params()[pi].name
                    );
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model =
            FcModel::<f32>::init(iris_v1(SemiringSpec::log_plus(-2.5).unwrap()), &mut rng)
                .unwrap();
        model.save_checkpoint(&path).unwrap();
        let loaded = FcModel::<f32>::load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        for (a, b) in loaded.params().iter().zip(model.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(FcModel::<f32>::load_checkpoint(&path).is_err());
    }
}

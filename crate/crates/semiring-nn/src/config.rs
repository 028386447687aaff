//! Flat `key = value` experiment configs with command-line overrides.
//!
//! Lines hold one `key = value` pair each; `#` starts a comment. Unknown
//! keys are rejected with their line number, missing required keys and type
//! mismatches name the key. A run's manifest uses the same format, so any
//! manifest is itself a loadable config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::train::{DatasetKey, TrainConfig, Variant};

pub const DEFAULT_SYNTH_N: usize = 2000;
pub const DEFAULT_SYNTH_NOISE_SD: f64 = 0.45;

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "variant",
    "mu",
    "epochs",
    "batchsize",
    "width",
    "lr_linear",
    "lr_tropical",
    "lr_logarithmic",
    "lr_semiring",
    "weight_decay",
    "warmup_epochs",
    "warmup_factor",
    "annihilation_factor",
    "seed",
    "runs",
    "data_dir",
    "synth_n",
    "synth_noise_sd",
];

/// Bundled benchmark presets, one per dataset.
pub const PRESETS: &[(&str, &str)] = &[
    ("iris", include_str!("../presets/iris.cfg")),
    ("heart", include_str!("../presets/heart.cfg")),
    ("circles", include_str!("../presets/circles.cfg")),
    ("spheres", include_str!("../presets/spheres.cfg")),
    ("fashion_mnist", include_str!("../presets/fashion_mnist.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone)]
struct RawEntry {
    value: String,
    location: String,
}

fn parse_pairs(text: &str, source: &str) -> Result<BTreeMap<String, RawEntry>> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let location = format!("{source} line {}", lineno + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{location}: expected `key = value`, got {line:?}"
            )));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("{location}: unknown key {key:?}")));
        }
        pairs.insert(key, RawEntry { value: value.trim().to_string(), location });
    }
    Ok(pairs)
}

struct TypedPairs(BTreeMap<String, RawEntry>);

impl TypedPairs {
    fn required(&self, key: &str) -> Result<&RawEntry> {
        self.0
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, entry: &RawEntry) -> Result<T> {
        entry.value.parse::<T>().map_err(|_| {
            Error::Config(format!(
                "{}: cannot parse {:?} as {} for key {key:?}",
                entry.location,
                entry.value,
                std::any::type_name::<T>()
            ))
        })
    }

    fn req<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let entry = self.required(key)?;
        self.parse(key, entry)
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(entry) => Ok(Some(self.parse(key, entry)?)),
        }
    }
}

/// Build a [`TrainConfig`] from config text plus `key=value` overrides
/// (later entries win).
pub fn resolve_config(
    text: &str,
    source: &str,
    overrides: &[(String, String)],
) -> Result<TrainConfig> {
    let mut pairs = parse_pairs(text, source)?;
    for (i, (key, value)) in overrides.iter().enumerate() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("override {}: unknown key {key:?}", i + 1)));
        }
        pairs.insert(
            key.clone(),
            RawEntry { value: value.clone(), location: format!("override {}", i + 1) },
        );
    }
    let pairs = TypedPairs(pairs);

    let dataset = DatasetKey::parse(&pairs.req::<String>("dataset")?)?;
    let variant = Variant::parse(&pairs.req::<String>("variant")?)?;
    let lr_linear: f64 = pairs.req("lr_linear")?;
    // lr_semiring forces both semiring-family rates; otherwise the family
    // rates come from their own keys, falling back to the linear rate for
    // families the variant does not use
    let lr_semiring: Option<f64> = pairs.opt("lr_semiring")?;
    let lr_tropical = match (lr_semiring, pairs.opt::<f64>("lr_tropical")?) {
        (Some(lr), _) => lr,
        (None, Some(lr)) => lr,
        (None, None) if variant.is_tropical() => {
            return Err(Error::Config(
                "missing required key \"lr_tropical\" (or \"lr_semiring\") for a tropical variant"
                    .into(),
            ))
        }
        (None, None) => lr_linear,
    };
    let lr_logarithmic = match (lr_semiring, pairs.opt::<f64>("lr_logarithmic")?) {
        (Some(lr), _) => lr,
        (None, Some(lr)) => lr,
        (None, None) if variant == Variant::LogPlus => {
            return Err(Error::Config(
                "missing required key \"lr_logarithmic\" (or \"lr_semiring\") for logplus".into(),
            ))
        }
        (None, None) => lr_linear,
    };

    let cfg = TrainConfig {
        dataset,
        variant,
        mu: pairs.opt("mu")?,
        epochs: pairs.req("epochs")?,
        batchsize: pairs.req("batchsize")?,
        width: pairs.req("width")?,
        lr_linear,
        lr_tropical,
        lr_logarithmic,
        weight_decay: pairs.req("weight_decay")?,
        warmup_epochs: pairs.req("warmup_epochs")?,
        warmup_factor: pairs.req("warmup_factor")?,
        annihilation_factor: pairs.req("annihilation_factor")?,
        seed: pairs.req("seed")?,
        runs: pairs.opt("runs")?.unwrap_or(1),
        data_dir: pairs
            .opt::<PathBuf>("data_dir")?
            .unwrap_or_else(crate::data::default_data_dir),
        synth_n: pairs.opt("synth_n")?.unwrap_or(DEFAULT_SYNTH_N),
        synth_noise_sd: pairs.opt("synth_noise_sd")?.unwrap_or(DEFAULT_SYNTH_NOISE_SD),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Load a config from a file path, or from a bundled preset when no such
/// file exists and the name matches a preset.
pub fn load_config(path_or_preset: &str, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let path = Path::new(path_or_preset);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return resolve_config(&text, path_or_preset, overrides);
    }
    if let Some(text) = preset(path_or_preset) {
        return resolve_config(text, &format!("preset {path_or_preset}"), overrides);
    }
    let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
    Err(Error::Config(format!(
        "{path_or_preset:?} is neither a config file nor a bundled preset (presets: {})",
        names.join(", ")
    )))
}

/// Split a repeatable `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {arg:?}")))
}

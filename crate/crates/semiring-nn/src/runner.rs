//! Experiment orchestration: run directories, manifests, JSONL metrics,
//! summary CSVs, the full benchmark grid, and the verification commands.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{FcModel, ModelConfig};
use crate::semiring::SemiringSpec;
use crate::train::{self, ExperimentSummary, TrainConfig, Variant};
use crate::verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The benchmark grid: every variant of the results table.
pub const TABLE1_VARIANTS: &[(&str, Option<f64>)] = &[
    ("relu", None),
    ("maxplus", None),
    ("minplus", None),
    ("logplus", Some(-10.0)),
    ("logplus", Some(-1.0)),
    ("logplus", Some(1.0)),
    ("logplus", Some(10.0)),
];

pub const TABLE1_DATASETS: &[&str] = &["iris", "heart", "circles", "spheres", "fashion_mnist"];

fn write_manifest(cfg: &TrainConfig, dir: &Path) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# semiring-nn run manifest");
    let _ = writeln!(text, "# version = {VERSION}");
    let _ = writeln!(text, "# config_hash = sha256:{}", cfg.config_hash());
    text.push_str(&cfg.manifest_text());
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::Data(format!("metrics serialization: {e}")))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn summary_csv_row(s: &ExperimentSummary) -> String {
    format!(
        "{},{},{},{:.4},{:.4},{}",
        s.dataset,
        s.variant,
        s.mu.map_or(String::new(), |m| m.to_string()),
        s.mean_accuracy,
        s.sd_accuracy,
        s.params
    )
}

const SUMMARY_HEADER: &str = "dataset,variant,mu,mean_acc,sd_acc,params";

/// Train one experiment (all repetitions), writing `manifest.txt`,
/// `metrics.jsonl`, `summary.csv` and the first repetition's checkpoint
/// into `out`.
pub fn cmd_train(cfg: &TrainConfig, out: &Path) -> Result<ExperimentSummary> {
    fs::create_dir_all(out)?;
    write_manifest(cfg, out)?;
    let (train, test) = train::load_dataset(cfg)?;
    let summary = train::run_experiment_on(cfg, &train, &test)?;
    // re-derive the first run's model for the checkpoint
    let (_, model) = train::train_one(cfg, &train, &test, cfg.seed)?;
    model.save_checkpoint(&out.join("model.ckpt"))?;
    write_jsonl(&summary.runs, &out.join("metrics.jsonl"))?;
    fs::write(
        out.join("summary.csv"),
        format!("{SUMMARY_HEADER}\n{}\n", summary_csv_row(&summary)),
    )?;
    println!(
        "{} {}{}: mean test accuracy {:.2}% (sd {:.2}) over {} runs, {} parameters",
        summary.dataset,
        summary.variant,
        summary.mu.map_or(String::new(), |m| format!(" mu={m}")),
        summary.mean_accuracy,
        summary.sd_accuracy,
        summary.runs.len(),
        summary.params
    );
    Ok(summary)
}

/// Evaluate a checkpoint on the test split of the configured dataset.
pub fn cmd_eval(checkpoint: &Path, cfg: &TrainConfig) -> Result<f64> {
    let model = FcModel::<f32>::load_checkpoint(checkpoint)?;
    let (_, test) = train::load_dataset(cfg)?;
    let acc = train::evaluate(&model, &test)?;
    println!(
        "{} ({}): test accuracy {:.2}%",
        checkpoint.display(),
        test.name,
        acc
    );
    Ok(acc)
}

/// One planned cell of the benchmark grid.
#[derive(Debug, Clone)]
pub struct PlannedRun {
    pub dataset: &'static str,
    pub variant: &'static str,
    pub mu: Option<f64>,
    pub config: TrainConfig,
    pub dir_name: String,
}

/// Expand the dataset × variant grid with the bundled presets.
pub fn plan_table1(
    runs: Option<usize>,
    overrides: &[(String, String)],
) -> Result<Vec<PlannedRun>> {
    let mut plan = Vec::new();
    for &dataset in TABLE1_DATASETS {
        for &(variant, mu) in TABLE1_VARIANTS {
            let mut ov: Vec<(String, String)> = vec![("variant".into(), variant.into())];
            if let Some(mu) = mu {
                ov.push(("mu".into(), mu.to_string()));
            }
            if let Some(runs) = runs {
                ov.push(("runs".into(), runs.to_string()));
            }
            ov.extend(overrides.iter().cloned());
            let config = config::load_config(dataset, &ov)?;
            let dir_name = match mu {
                Some(mu) => format!("{dataset}_{variant}_mu{mu}"),
                None => format!("{dataset}_{variant}"),
            };
            plan.push(PlannedRun { dataset, variant, mu, config, dir_name });
        }
    }
    Ok(plan)
}

/// Run (or with `dry_run` just list) the whole benchmark grid, merging each
/// cell's summary into `summary.csv` under `out`.
pub fn cmd_reproduce_table1(
    out: &Path,
    runs: Option<usize>,
    overrides: &[(String, String)],
    dry_run: bool,
) -> Result<()> {
    let plan = plan_table1(runs, overrides)?;
    if dry_run {
        for p in &plan {
            println!(
                "planned: {} {} mu={} ({} runs)",
                p.dataset,
                p.variant,
                p.mu.map_or("-".to_string(), |m| m.to_string()),
                p.config.runs
            );
        }
        println!("{} planned runs", plan.len());
        return Ok(());
    }
    fs::create_dir_all(out)?;
    let mut rows = vec![SUMMARY_HEADER.to_string()];
    let mut failures = Vec::new();
    let mut data_cache: Option<(&'static str, u64, (Dataset, Dataset))> = None;
    for p in &plan {
        let dir = out.join(&p.dir_name);
        println!("== {}", p.dir_name);
        let attempt = (|| -> Result<ExperimentSummary> {
            fs::create_dir_all(&dir)?;
            write_manifest(&p.config, &dir)?;
            let cache_key = (p.dataset, p.config.seed);
            let reuse = matches!(&data_cache, Some((d, s, _)) if (*d, *s) == cache_key);
            if !reuse {
                data_cache = Some((p.dataset, p.config.seed, train::load_dataset(&p.config)?));
            }
            let (train_ds, test_ds) = &data_cache.as_ref().expect("just set").2;
            let summary = train::run_experiment_on(&p.config, train_ds, test_ds)?;
            write_jsonl(&summary.runs, &dir.join("metrics.jsonl"))?;
            fs::write(
                dir.join("summary.csv"),
                format!("{SUMMARY_HEADER}\n{}\n", summary_csv_row(&summary)),
            )?;
            Ok(summary)
        })();
        match attempt {
            Ok(summary) => {
                println!(
                    "   mean {:.2}% sd {:.2} ({} params)",
                    summary.mean_accuracy, summary.sd_accuracy, summary.params
                );
                rows.push(summary_csv_row(&summary));
            }
            Err(e) => {
                eprintln!("   FAILED: {e}");
                failures.push(format!("{}: {e}", p.dir_name));
            }
        }
    }
    fs::write(out.join("summary.csv"), rows.join("\n") + "\n")?;
    if failures.is_empty() {
        println!("all {} runs completed; summary at {}", plan.len(), out.join("summary.csv").display());
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} of {} grid cells failed:\n  {}",
            failures.len(),
            plan.len(),
            failures.join("\n  ")
        )))
    }
}

/// Finite-difference gradient check of a small model; retries a few seeds
/// when a tropical reduction sits too close to a tie.
pub fn cmd_gradcheck(
    variant: &str,
    mu: Option<f64>,
    sizes: (usize, usize, usize),
    seed: u64,
    json_out: Option<&Path>,
) -> Result<verify::GradCheckReport> {
    let variant = Variant::parse(variant)?;
    let (n_features, n_classes, width) = sizes;
    let semiring = match variant {
        Variant::Relu => None,
        Variant::MaxPlus => Some(SemiringSpec::max_plus()),
        Variant::MinPlus => Some(SemiringSpec::min_plus()),
        Variant::LogPlus => Some(
            SemiringSpec::log_plus(mu.ok_or_else(|| Error::Config("logplus needs --mu".into()))?)?,
        ),
    };
    let cfg = ModelConfig {
        n_features,
        n_classes,
        width,
        block_variant: match variant {
            Variant::Relu => crate::model::BlockVariant::ReluPlain,
            _ => crate::model::BlockVariant::SemiringV1,
        },
        semiring,
    };
    let mut report = None;
    for attempt in 0..5 {
        let r = verify::model_grad_check(&cfg, 3, seed + attempt)?;
        let proximal = r.tie_proximal;
        report = Some(r);
        if !proximal {
            break;
        }
        println!("seed {} sits near a tropical tie, retrying", seed + attempt);
    }
    let report = report.expect("at least one attempt");
    println!("model: {}", report.model);
    for p in &report.params {
        println!("  {:<24} max rel err {:.3e} (at [{}])", p.name, p.max_rel_err, p.worst_index);
    }
    println!("  {:<24} max rel err {:.3e}", "input", report.input_max_rel_err);
    println!(
        "worst: {} at {:.3e}{}",
        report.worst,
        report.max_rel_err,
        if report.tie_proximal { " [TIE-PROXIMAL: skipped]" } else { "" }
    );
    let pass = report.passed(1e-4);
    println!("gradcheck: {}", if pass { "PASS" } else { "FAIL" });
    if let Some(path) = json_out {
        fs::write(
            path,
            serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Data(format!("report serialization: {e}")))?,
        )?;
    }
    if pass {
        Ok(report)
    } else {
        Err(Error::NonFinite(format!(
            "gradient check failed: {} at {:.3e}",
            report.worst, report.max_rel_err
        )))
    }
}

/// Run the semiring axiom, quasilinearity and oracle-equivalence suites over
/// every semiring and print one line each.
pub fn cmd_propcheck(json_out: Option<&Path>) -> Result<Vec<verify::SuiteReport>> {
    let mut reports = Vec::new();
    for spec in verify::all_specs() {
        reports.push(verify::axiom_suite(spec, 1000, 42));
        reports.push(verify::quasilinearity_suite(spec, 200, 43));
        reports.push(verify::oracle_suite(spec, 100, 44));
    }
    let mut all_pass = true;
    for r in &reports {
        let mu = r.mu.map_or(String::new(), |m| format!(" mu={m}"));
        println!(
            "{:<20} {:<10}{:<8} cases {:>5}  failures {:>3}  max residual {:.3e}  {}",
            r.name,
            r.semiring,
            mu,
            r.cases,
            r.failures,
            r.max_residual,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        all_pass &= r.passed();
    }
    if let Some(path) = json_out {
        fs::write(
            path,
            serde_json::to_string_pretty(&reports)
                .map_err(|e| Error::Data(format!("report serialization: {e}")))?,
        )?;
    }
    if all_pass {
        Ok(reports)
    } else {
        Err(Error::NonFinite("property suites reported failures".into()))
    }
}

/// Generate a synthetic dataset and export it as CSV.
pub fn cmd_gen_data(
    dataset: &str,
    out: &Path,
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<PathBuf> {
    let ds = match dataset {
        "circles" => crate::data::gen_circles(n, (1.0, 2.0), noise_sd, seed)?,
        "spheres" => crate::data::gen_spheres(n, (1.0, 2.0), noise_sd, seed)?,
        other => {
            return Err(Error::Config(format!(
                "gen-data supports circles and spheres, not {other:?}"
            )))
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    ds.to_csv(out)?;
    println!("wrote {} rows to {}", ds.len(), out.display());
    Ok(out.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_plan_lists_35_runs() {
        let plan = plan_table1(Some(1), &[]).unwrap();
        assert_eq!(plan.len(), 35);
        let iris_cells = plan.iter().filter(|p| p.dataset == "iris").count();
        assert_eq!(iris_cells, 7);
        for p in &plan {
            assert_eq!(p.config.runs, 1);
        }
        // directory names are unique
        let mut names: Vec<&str> = plan.iter().map(|p| p.dir_name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 35);
    }

    #[test]
    fn train_command_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = config::load_config(
            "circles",
            &[
                ("epochs".into(), "2".into()),
                ("warmup_epochs".into(), "1".into()),
                ("runs".into(), "2".into()),
                ("synth_n".into(), "60".into()),
            ],
        )
        .unwrap();
        let summary = cmd_train(&cfg, &out).unwrap();
        assert_eq!(summary.runs.len(), 2);
        for file in ["manifest.txt", "metrics.jsonl", "summary.csv", "model.ckpt"] {
            assert!(out.join(file).exists(), "{file} missing");
        }
        // manifest replays to the same config
        let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
        let replayed = config::resolve_config(&manifest, "manifest", &[]).unwrap();
        assert_eq!(&replayed, &cfg);
        // metrics are one JSON object per line
        let jsonl = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 2);
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["dataset"], "circles");
        }
        // the checkpoint evaluates like the first run reports
        let acc = cmd_eval(&out.join("model.ckpt"), &cfg).unwrap();
        assert!((acc - summary.runs[0].test_accuracy).abs() < 1e-9);
    }

    #[test]
    fn gen_data_exports_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("spheres.csv");
        cmd_gen_data("spheres", &out, 50, 0.1, 7).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.starts_with("f0,f1,f2,label"));
        assert!(cmd_gen_data("blobs", &out, 10, 0.1, 7).is_err());
    }

    #[test]
    fn gradcheck_passes_on_linear_variant() {
        let report = cmd_gradcheck("relu", None, (4, 3, 4), 42, None).unwrap();
        assert!(report.max_rel_err < 1e-4);
    }
}

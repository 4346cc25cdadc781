use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use dvrl_core::baselines::{loo_values, random_values, shapley_tmc, MarginalEvaluator, TmcConfig};
use dvrl_core::experiments::curves::{discovery_curve, fraction_grid, removal_curve, RemovalEnd};
use dvrl_core::experiments::protocols::{domain_adaptation_eval, robust_learning_eval, validation_size_sweep};
use dvrl_core::experiments::report::{digest_files, write_trace_jsonl, NamedCurve, Report};
use dvrl_core::experiments::synthetic::{gaussian_blobs, two_domain_shift};
use dvrl_core::experiments::{corrupt, CorruptionSpec};
use dvrl_core::io::{load_csv, preprocess, write_csv, write_values, CsvOptions, Preprocessed, RawTable};
use dvrl_core::{train_dvrl, Dataset, IterationRecord, Metric, SplitRole, TaskKind};

use crate::config::{Method, RunConfig};
use crate::{Command, ConfigError, CorruptArgs, SweepArgs, SynthArgs, SynthKind};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Value(args) => value(&args.resolve()?),
        Command::Discover(args) => discover(&args.resolve()?),
        Command::RemoveCurve(args) => remove_curve(&args.resolve()?),
        Command::Robust(args) => robust(&args.resolve()?),
        Command::Adapt(args) => adapt(&args.resolve()?),
        Command::SweepValidation(args) => sweep(&args),
        Command::Corrupt(args) => corrupt_cmd(&args),
        Command::Synth(args) => synth(&args),
    }
}

/// Loaded and encoded splits plus the files they came from.
struct Inputs {
    data: Preprocessed,
    files: Vec<std::path::PathBuf>,
}

fn load_inputs(cfg: &RunConfig, need_validation: bool, need_test: bool) -> Result<Inputs> {
    cfg.validate()?;
    let train_path = cfg.require("train")?;
    if need_validation {
        cfg.require("validation")?;
    }
    if need_test {
        cfg.require("test")?;
    }
    let mut options = CsvOptions::new(cfg.label_column.clone());
    options.categorical = cfg.categorical.clone();
    let load = |p: &Path| load_csv(p, &options).with_context(|| format!("loading {}", p.display()));
    let train = load(train_path)?;
    let validation = cfg.validation.as_deref().map(load).transpose()?;
    let test = cfg.test.as_deref().map(load).transpose()?;
    let data = preprocess(cfg.task.into(), &train, validation.as_ref(), test.as_ref())?;
    let files = [&cfg.train, &cfg.validation, &cfg.test]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    fs::create_dir_all(cfg.output_dir())
        .with_context(|| format!("creating {}", cfg.output_dir().display()))?;
    Ok(Inputs { data, files })
}

fn validation(inputs: &Inputs) -> &Dataset {
    inputs.data.validation.as_ref().expect("validation split loaded")
}

fn evaluator(cfg: &RunConfig, holdout: &Dataset) -> MarginalEvaluator {
    MarginalEvaluator::new(
        cfg.dvrl.predictor_spec(),
        Metric::default_for(holdout.task()),
        holdout.clone(),
        cfg.seed,
    )
}

struct Valuation {
    values: Vec<f64>,
    trace: Vec<IterationRecord>,
    metrics: BTreeMap<String, f64>,
}

fn compute_values(cfg: &RunConfig, train: &Dataset, validation: &Dataset) -> Result<Valuation> {
    let mut metrics = BTreeMap::new();
    let (values, trace) = match cfg.method {
        Method::Dvrl => {
            let result = train_dvrl(train, validation, &cfg.dvrl)?;
            if let Some(last) = result.trace.last() {
                metrics.insert("final_validation_loss".into(), last.mean_validation_loss);
                metrics.insert("final_delta".into(), last.delta);
            }
            metrics.insert("outer_iterations_run".into(), result.trace.len() as f64);
            (result.values, result.trace)
        }
        Method::Random => (random_values(train.len(), cfg.seed)?, Vec::new()),
        Method::Loo => {
            let eval = evaluator(cfg, validation);
            let values = loo_values(train, &eval)?
                .into_iter()
                .enumerate()
                .map(|(i, v)| v.with_context(|| format!("leave-one-out value of row {i}")))
                .collect::<Result<Vec<f64>>>()?;
            (values, Vec::new())
        }
        Method::ShapleyTmc => {
            let eval = evaluator(cfg, validation);
            let tmc = TmcConfig {
                permutations: cfg.tmc_permutations,
                truncation_tolerance: cfg.tmc_tolerance,
                seed: cfg.seed,
            };
            (shapley_tmc(train, &eval, &tmc)?, Vec::new())
        }
    };
    metrics.insert("num_samples".into(), values.len() as f64);
    metrics.insert("mean_value".into(), values.iter().sum::<f64>() / values.len().max(1) as f64);
    Ok(Valuation { values, trace, metrics })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Dvrl => "dvrl",
        Method::Random => "random",
        Method::Loo => "loo",
        Method::ShapleyTmc => "shapley-tmc",
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &RunConfig,
    inputs: &Inputs,
    command: &str,
    values: &[f64],
    flags: Option<&[bool]>,
    metrics: BTreeMap<String, f64>,
    curves: Vec<NamedCurve>,
    trace: Vec<IterationRecord>,
) -> Result<()> {
    let out = cfg.output_dir();
    write_values(&out.join("values.csv"), values, flags)?;
    if let Some(path) = &cfg.trace {
        write_trace_jsonl(path, &trace)?;
    }
    let report = Report {
        method: format!("{command}:{}", method_name(cfg.method)),
        seed: cfg.seed,
        inputs_digest: digest_files(&inputs.files)?,
        config: serde_json::to_value(cfg)?,
        metrics,
        curves,
        traces: trace,
    };
    report.write_json(&out.join("report.json"))?;
    report.write_curve_csvs(out)?;
    Ok(())
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    fraction_grid(cfg.fraction_step, cfg.max_fraction)
}

fn flags_of<'a>(data: &'a Dataset, command: &str) -> Result<&'a [bool]> {
    match data.corruption_flags() {
        Some(f) => Ok(f),
        None => bail!("`{command}` needs a `corrupted` flag column in the training CSV"),
    }
}

fn require_dvrl(cfg: &RunConfig, command: &str) -> Result<()> {
    if cfg.method != Method::Dvrl {
        return Err(ConfigError::new("method", format!("`{command}` only supports method dvrl")).into());
    }
    Ok(())
}

fn value(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg, cfg.method != Method::Random, false)?;
    let train = &inputs.data.train;
    let v = match cfg.method {
        Method::Random => Valuation {
            values: random_values(train.len(), cfg.seed)?,
            trace: Vec::new(),
            metrics: BTreeMap::from([("num_samples".to_string(), train.len() as f64)]),
        },
        _ => compute_values(cfg, train, validation(&inputs))?,
    };
    finish(cfg, &inputs, "value", &v.values, train.corruption_flags(), v.metrics, Vec::new(), v.trace)
}

fn discover(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg, cfg.method != Method::Random, false)?;
    let train = &inputs.data.train;
    let flags = flags_of(train, "discover")?;
    let v = if cfg.method == Method::Random {
        Valuation {
            values: random_values(train.len(), cfg.seed)?,
            trace: Vec::new(),
            metrics: BTreeMap::new(),
        }
    } else {
        compute_values(cfg, train, validation(&inputs))?
    };
    let points = discovery_curve(&v.values, flags, &grid(cfg))?;
    let mut metrics = v.metrics;
    metrics.insert("corrupted".into(), flags.iter().filter(|&&f| f).count() as f64);
    let curves = vec![NamedCurve {
        name: "discovery".into(),
        points,
    }];
    finish(cfg, &inputs, "discover", &v.values, Some(flags), metrics, curves, v.trace)
}

fn remove_curve(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg, cfg.method != Method::Random, true)?;
    let train = &inputs.data.train;
    let test = inputs.data.test.as_ref().expect("test split loaded");
    let v = if cfg.method == Method::Random {
        Valuation {
            values: random_values(train.len(), cfg.seed)?,
            trace: Vec::new(),
            metrics: BTreeMap::new(),
        }
    } else {
        compute_values(cfg, train, validation(&inputs))?
    };
    let eval = evaluator(cfg, test);
    let mut fractions = vec![0.0];
    fractions.extend(grid(cfg));
    let mut metrics = v.metrics;
    metrics.insert("test_metric_full".into(), eval.metric_value(train, train)?);
    let curves = [("removal_most", RemovalEnd::Most), ("removal_least", RemovalEnd::Least)]
        .into_iter()
        .map(|(name, end)| {
            Ok(NamedCurve {
                name: name.into(),
                points: removal_curve(&v.values, train, end, &fractions, &eval)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(cfg, &inputs, "remove-curve", &v.values, train.corruption_flags(), metrics, curves, v.trace)
}

fn robust(cfg: &RunConfig) -> Result<()> {
    require_dvrl(cfg, "robust")?;
    let inputs = load_inputs(cfg, true, true)?;
    let train = &inputs.data.train;
    let test = inputs.data.test.as_ref().expect("test split loaded");
    let r = robust_learning_eval(train, validation(&inputs), test, &cfg.dvrl)?;
    let metrics = BTreeMap::from([
        ("dvrl".to_string(), r.dvrl),
        ("baseline".to_string(), r.baseline),
        ("clean_only".to_string(), r.clean_only),
        ("validation_only".to_string(), r.validation_only),
    ]);
    finish(cfg, &inputs, "robust", &r.values, train.corruption_flags(), metrics, Vec::new(), r.trace)
}

fn adapt(cfg: &RunConfig) -> Result<()> {
    require_dvrl(cfg, "adapt")?;
    let inputs = load_inputs(cfg, true, true)?;
    let train = &inputs.data.train;
    let test = inputs.data.test.as_ref().expect("test split loaded");
    let r = domain_adaptation_eval(train, validation(&inputs), test, &cfg.dvrl)?;
    let mut metrics = BTreeMap::from([("dvrl".to_string(), r.dvrl), ("baseline".to_string(), r.baseline)]);
    for (domain, mean) in &r.mean_value_by_domain {
        metrics.insert(format!("mean_value[{domain}]"), *mean);
    }
    finish(cfg, &inputs, "adapt", &r.values, train.corruption_flags(), metrics, Vec::new(), r.trace)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(sizes) = &args.sizes {
        cfg.validation_sizes = sizes.clone();
    }
    require_dvrl(&cfg, "sweep-validation")?;
    if cfg.validation_sizes.is_empty() {
        return Err(ConfigError::new("validation_sizes", "give at least one size (--sizes)").into());
    }
    let inputs = load_inputs(&cfg, true, false)?;
    let train = &inputs.data.train;
    flags_of(train, "sweep-validation")?;
    let entries = validation_size_sweep(train, validation(&inputs), &cfg.validation_sizes, &grid(&cfg), &cfg.dvrl)?;
    let curves = entries
        .iter()
        .map(|e| NamedCurve {
            name: format!("discovery_n{}", e.validation_size),
            points: e.curve.clone(),
        })
        .collect();
    let mut metrics = BTreeMap::new();
    for e in &entries {
        if let Some(p) = e.curve.iter().find(|p| (p.fraction - 0.2).abs() < 1e-12) {
            metrics.insert(format!("found_at_0.2[n={}]", e.validation_size), p.value.unwrap_or(f64::NAN));
        }
    }
    // values.csv holds the run with the largest validation set
    let last = entries
        .iter()
        .max_by_key(|e| e.validation_size)
        .expect("at least one size");
    finish(&cfg, &inputs, "sweep-validation", &last.values, train.corruption_flags(), metrics, curves, Vec::new())
}

fn corrupt_cmd(args: &CorruptArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if args.ratio.is_some() {
        cfg.ratio = args.ratio;
    }
    if args.sigma.is_some() {
        cfg.sigma = args.sigma;
    }
    let spec = match (cfg.ratio, cfg.sigma) {
        (Some(ratio), None) => {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(ConfigError::new("ratio", "must lie in [0, 1]").into());
            }
            CorruptionSpec::LabelFlip { ratio, seed: cfg.seed }
        }
        (None, Some(sigma)) => CorruptionSpec::GaussianFeature { sigma, seed: cfg.seed },
        _ => return Err(ConfigError::new("ratio", "give exactly one of --ratio or --sigma").into()),
    };
    let inputs = load_inputs(&cfg, false, false)?;
    let mut options = CsvOptions::new(cfg.label_column.clone());
    options.categorical = cfg.categorical.clone();
    let raw = load_csv(cfg.require("train")?, &options)?;

    let noisy = corrupt(&inputs.data.train, &spec)?;
    let mut table = inputs.data.spec.invert(&noisy, &cfg.label_column)?;
    let flags: Vec<bool> = match spec {
        CorruptionSpec::LabelFlip { .. } => {
            // features are untouched: keep the original cells verbatim
            table.columns = raw.columns.clone();
            noisy.corruption_flags().map(<[bool]>::to_vec).unwrap_or_else(|| vec![false; raw.len()])
        }
        CorruptionSpec::GaussianFeature { .. } => vec![true; raw.len()],
    };
    table.flags = Some(flags.clone());
    let out = cfg.output_dir();
    write_csv(&out.join("corrupted.csv"), &table)?;

    // the oracle valuation: clean rows 1, corrupted rows 0
    let oracle: Vec<f64> = flags.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect();
    let metrics = BTreeMap::from([
        ("flagged".to_string(), flags.iter().filter(|&&f| f).count() as f64),
        ("rows".to_string(), flags.len() as f64),
    ]);
    finish(&cfg, &inputs, "corrupt", &oracle, Some(&flags), metrics, Vec::<NamedCurve>::new(), Vec::new())
}

fn synth(args: &SynthArgs) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let seeds = |k: u64| args.seed.wrapping_mul(3).wrapping_add(k);
    let (train, validation, test) = match args.kind {
        SynthKind::Blobs => {
            let make = |n, k, role| gaussian_blobs(n, args.dim, args.classes, args.separation, seeds(k), role);
            (
                make(args.train_rows, 0, SplitRole::Train)?,
                make(args.validation_rows, 1, SplitRole::Validation)?,
                make(args.test_rows, 2, SplitRole::Test)?,
            )
        }
        SynthKind::Shift => {
            if !(0.0..=1.0).contains(&args.source_b_fraction) {
                return Err(ConfigError::new("source_b_fraction", "must lie in [0, 1]").into());
            }
            (
                two_domain_shift(args.train_rows, args.source_b_fraction, args.separation, seeds(0), SplitRole::Train)?,
                two_domain_shift(args.validation_rows, 1.0, args.separation, seeds(1), SplitRole::Validation)?,
                two_domain_shift(args.test_rows, 1.0, args.separation, seeds(2), SplitRole::Test)?,
            )
        }
    };
    let train = match args.noise {
        Some(ratio) if train.task() == TaskKind::Classification => dvrl_core::experiments::corrupt_labels(&train, ratio, seeds(3))?,
        Some(_) => bail!("label noise needs a classification dataset"),
        None => train,
    };
    for (name, data) in [("train.csv", &train), ("validation.csv", &validation), ("test.csv", &test)] {
        write_csv(&args.out.join(name), &RawTable::from_dataset(data, "label"))?;
    }
    Ok(())
}

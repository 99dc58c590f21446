use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sevkit::checkpoint::Checkpoint;
use sevkit::corpus::{
    build_split_plan, load_manifest, severity_histogram, DatasetManifest, SplitPlan, SplitTag,
};
use sevkit::encoder::{registry, registry_lookup, EncoderKind, FeatureDirSource, FrameSource,
    ToyEncoderSource};
use sevkit::fixture::{generate_fixture, FixtureConfig};
use sevkit::model::HeadConfig;
use sevkit::report::{render_grid, GridFormat, Method, RunReport};
use sevkit::scale::derive_map;
use sevkit::train::{
    evaluate, train_ft, train_ft_resume, train_idt, train_jt, ParadigmSpec, TargetSize,
    TrainConfig, TrainInputs, TrainOutcome,
};

use crate::{
    CliError, CliResult, EvalArgs, FixtureArgs, FormatArg, ParadigmArg, PrepareArgs, ReportArgs,
    SplitArg, StatsArgs, TrainArgs,
};

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.exists() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(sevkit::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }))
}

pub fn prepare(args: PrepareArgs) -> CliResult<()> {
    require_file(&args.manifest, "manifest")?;
    let manifest = load_manifest(&args.manifest)?;
    let plan = build_split_plan(&manifest, &args.dimension, args.validation_size, args.seed)?;
    plan.save(&args.out)?;
    println!(
        "plan written to {} (dimension {}, train {}, validation {}, test {}, seed {})",
        args.out.display(),
        plan.dimension,
        plan.train_ids.len(),
        plan.validation_ids.len(),
        plan.test_ids.len(),
        plan.seed
    );
    Ok(())
}

/// File form of every `train` flag; explicit flags win over the file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    paradigm: Option<String>,
    encoder: Option<String>,
    manifest: Option<PathBuf>,
    dimension: Option<String>,
    quali_manifest: Option<PathBuf>,
    quali_dimension: Option<String>,
    jt_size: Option<String>,
    sap_plan: Option<PathBuf>,
    quali_plan: Option<PathBuf>,
    validation_size: Option<usize>,
    quali_validation_size: Option<usize>,
    features_dir: Option<PathBuf>,
    hidden_dim: Option<usize>,
    dropout: Option<f64>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    stage1_lr: Option<f64>,
    stage1_max_epochs: Option<usize>,
    stage1_patience: Option<usize>,
    stage1_seed: Option<u64>,
    stage1_checkpoint: Option<PathBuf>,
    stage1_digest: Option<String>,
    run_dir: Option<PathBuf>,
}

/// Fully resolved train invocation; hashing it yields the default run id.
#[derive(Debug, Serialize)]
struct ResolvedTrain {
    paradigm: String,
    encoder: String,
    manifest: PathBuf,
    dimension: String,
    quali_manifest: Option<PathBuf>,
    quali_dimension: Option<String>,
    jt_size: Option<String>,
    sap_plan: Option<PathBuf>,
    quali_plan: Option<PathBuf>,
    validation_size: usize,
    quali_validation_size: usize,
    features_dir: Option<PathBuf>,
    hidden_dim: usize,
    dropout: f64,
    train: TrainConfig,
    stage1: TrainConfig,
    stage1_checkpoint: Option<PathBuf>,
    stage1_digest: Option<String>,
}

fn load_train_file(path: &Path) -> CliResult<TrainFileConfig> {
    require_file(path, "config file")?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Data(sevkit::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("config file {}: {e}", path.display())))
}

fn frame_source(
    encoder_id: &str,
    features_dir: Option<&Path>,
) -> CliResult<Box<dyn FrameSource>> {
    match features_dir {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(usage(format!(
                    "features directory not found: {}",
                    dir.display()
                )));
            }
            Ok(Box::new(FeatureDirSource::new(dir, encoder_id)))
        }
        None => {
            let spec =
                registry_lookup(encoder_id).map_err(|e| usage(e.to_string()))?;
            match spec.kind {
                EncoderKind::Toy => Ok(Box::new(ToyEncoderSource::new())),
                EncoderKind::External => Err(usage(format!(
                    "encoder `{encoder_id}` is external; supply --features-dir with \
                     precomputed frame features"
                ))),
            }
        }
    }
}

fn scale_of(manifest: &DatasetManifest, dimension: &str) -> CliResult<sevkit::corpus::ScoreScale> {
    manifest
        .dimension_records(dimension)
        .first()
        .map(|r| r.scale)
        .ok_or_else(|| {
            CliError::Data(sevkit::Error::UnknownDimension {
                requested: dimension.to_string(),
                available: manifest.dimensions(),
            })
        })
}

fn load_or_build_plan(
    plan_path: Option<&Path>,
    manifest: &DatasetManifest,
    dimension: &str,
    validation_size: usize,
    seed: u64,
) -> CliResult<SplitPlan> {
    match plan_path {
        Some(path) => {
            require_file(path, "split plan")?;
            let plan = SplitPlan::load(path)?;
            if plan.dimension != dimension {
                return Err(usage(format!(
                    "split plan {} is for dimension `{}`, not `{dimension}`",
                    path.display(),
                    plan.dimension
                )));
            }
            Ok(plan)
        }
        None => Ok(build_split_plan(manifest, dimension, validation_size, seed)?),
    }
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(path) => load_train_file(path)?,
        None => TrainFileConfig::default(),
    };

    let paradigm = match (args.paradigm, file.paradigm.as_deref()) {
        (Some(p), _) => p,
        (None, Some("idt")) => ParadigmArg::Idt,
        (None, Some("ft")) => ParadigmArg::Ft,
        (None, Some("jt")) => ParadigmArg::Jt,
        (None, Some(other)) => {
            return Err(usage(format!("unknown paradigm `{other}` in config file")))
        }
        (None, None) => return Err(usage("--paradigm is required (idt, ft, or jt)")),
    };
    let encoder_id = args
        .encoder
        .or(file.encoder)
        .unwrap_or_else(|| "toy".to_string());
    let manifest_path = args
        .manifest
        .or(file.manifest)
        .ok_or_else(|| usage("--manifest is required"))?;
    let dimension = args
        .dimension
        .or(file.dimension)
        .ok_or_else(|| usage("--dimension is required"))?;
    let features_dir = args.features_dir.or(file.features_dir);

    let needs_quali = paradigm != ParadigmArg::Idt;
    let quali_manifest_path = args.quali_manifest.or(file.quali_manifest);
    let quali_dimension = args.quali_dimension.or(file.quali_dimension);
    if needs_quali {
        if quali_manifest_path.is_none() {
            return Err(usage("--quali-manifest is required for ft/jt"));
        }
        if quali_dimension.is_none() {
            return Err(usage("--quali-dimension is required for ft/jt"));
        }
    }

    let base = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: args.lr.or(file.lr).unwrap_or(base.learning_rate),
        weight_decay: args
            .weight_decay
            .or(file.weight_decay)
            .unwrap_or(base.weight_decay),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(base.batch_size),
        max_epochs: args.max_epochs.or(file.max_epochs).unwrap_or(base.max_epochs),
        patience: args.patience.or(file.patience).unwrap_or(base.patience),
        seed: args.seed.or(file.seed).unwrap_or(base.seed),
        ..base
    };
    let stage1_epochs = args
        .stage1_max_epochs
        .or(file.stage1_max_epochs)
        .unwrap_or(train_cfg.max_epochs);
    let stage1_cfg = TrainConfig {
        learning_rate: args
            .stage1_lr
            .or(file.stage1_lr)
            .unwrap_or(train_cfg.learning_rate),
        max_epochs: stage1_epochs,
        patience: args
            .stage1_patience
            .or(file.stage1_patience)
            .unwrap_or(train_cfg.patience.min(stage1_epochs)),
        seed: args.stage1_seed.or(file.stage1_seed).unwrap_or(train_cfg.seed),
        ..train_cfg
    };

    let spec = registry_lookup(&encoder_id).map_err(|e| usage(e.to_string()))?;
    let head = HeadConfig::new(spec.feature_dim)
        .with_hidden_dim(
            args.hidden_dim
                .or(file.hidden_dim)
                .unwrap_or(HeadConfig::DEFAULT_HIDDEN_DIM),
        )
        .with_dropout(
            args.dropout
                .or(file.dropout)
                .unwrap_or(HeadConfig::DEFAULT_DROPOUT),
        );
    // Resolve the frame source early: an external encoder without features
    // is a usage problem, not something to discover after loading data.
    let frames = frame_source(&encoder_id, features_dir.as_deref())?;

    require_file(&manifest_path, "manifest")?;
    let sap_manifest = load_manifest(&manifest_path)?;
    let quali_manifest = match &quali_manifest_path {
        Some(path) => {
            require_file(path, "quali manifest")?;
            Some(load_manifest(path)?)
        }
        None => None,
    };

    let validation_size = args
        .validation_size
        .or(file.validation_size)
        .unwrap_or(500);
    let quali_validation_size = args
        .quali_validation_size
        .or(file.quali_validation_size)
        .unwrap_or(0);
    let sap_plan_path = args.sap_plan.or(file.sap_plan);
    let quali_plan_path = args.quali_plan.or(file.quali_plan);

    let sap_plan = load_or_build_plan(
        sap_plan_path.as_deref(),
        &sap_manifest,
        &dimension,
        validation_size,
        train_cfg.seed,
    )?;
    let quali_plan = match (&quali_manifest, &quali_dimension) {
        (Some(m), Some(d)) => Some(load_or_build_plan(
            quali_plan_path.as_deref(),
            m,
            d,
            quali_validation_size,
            train_cfg.seed,
        )?),
        _ => None,
    };

    let jt_size: Option<TargetSize> = match args.jt_size.or(file.jt_size) {
        Some(s) => Some(s.parse().map_err(usage)?),
        None => None,
    };
    let stage1_checkpoint = args.stage1_checkpoint.or(file.stage1_checkpoint);
    let stage1_digest = args.stage1_digest.or(file.stage1_digest);

    let paradigm_name = match paradigm {
        ParadigmArg::Idt => "idt",
        ParadigmArg::Ft => "ft",
        ParadigmArg::Jt => "jt",
    };
    let resolved = ResolvedTrain {
        paradigm: paradigm_name.to_string(),
        encoder: encoder_id.clone(),
        manifest: manifest_path.clone(),
        dimension: dimension.clone(),
        quali_manifest: quali_manifest_path.clone(),
        quali_dimension: quali_dimension.clone(),
        jt_size: jt_size.map(|t| t.to_string()),
        sap_plan: sap_plan_path,
        quali_plan: quali_plan_path,
        validation_size,
        quali_validation_size,
        features_dir: features_dir.clone(),
        hidden_dim: head.hidden_dim,
        dropout: head.dropout_rate,
        train: train_cfg,
        stage1: stage1_cfg,
        stage1_checkpoint: stage1_checkpoint.clone(),
        stage1_digest: stage1_digest.clone(),
    };
    let invocation_digest = hex::encode(Sha256::digest(
        serde_json::to_vec(&resolved).expect("resolved config serializes"),
    ));
    let run_dir = args
        .run_dir
        .or(file.run_dir)
        .unwrap_or_else(|| args.run_root.join(&invocation_digest[..12]));

    let inputs = TrainInputs {
        sap_manifest: &sap_manifest,
        quali_manifest: quali_manifest.as_ref(),
        frames: frames.as_ref(),
        head,
        run_dir: Some(run_dir.clone()),
    };

    let outcome: TrainOutcome = match paradigm {
        ParadigmArg::Idt => {
            let spec = ParadigmSpec::idt(&dimension);
            train_idt(&inputs, &sap_plan, &spec, &train_cfg)?
        }
        ParadigmArg::Ft => {
            let quali_dim = quali_dimension.expect("checked above");
            let map = derive_map(
                scale_of(quali_manifest.as_ref().unwrap(), &quali_dim)?,
                scale_of(&sap_manifest, &dimension)?,
            )?;
            let spec = ParadigmSpec::ft(&dimension, &quali_dim, map);
            match stage1_checkpoint {
                Some(ckpt_path) => {
                    require_file(&ckpt_path, "stage-1 checkpoint")?;
                    let stage1 = Checkpoint::load(&ckpt_path)?;
                    train_ft_resume(
                        &inputs,
                        &sap_plan,
                        stage1,
                        stage1_digest.as_deref(),
                        &spec,
                        &train_cfg,
                    )?
                }
                None => train_ft(
                    &inputs,
                    &sap_plan,
                    quali_plan.as_ref().expect("checked above"),
                    &spec,
                    &stage1_cfg,
                    &train_cfg,
                )?,
            }
        }
        ParadigmArg::Jt => {
            let quali_dim = quali_dimension.expect("checked above");
            let map = derive_map(
                scale_of(quali_manifest.as_ref().unwrap(), &quali_dim)?,
                scale_of(&sap_manifest, &dimension)?,
            )?;
            let spec = ParadigmSpec::jt(
                &dimension,
                &quali_dim,
                jt_size.unwrap_or(TargetSize::Match),
                map,
            );
            train_jt(
                &inputs,
                &sap_plan,
                quali_plan.as_ref().expect("checked above"),
                &spec,
                &train_cfg,
            )?
        }
    };

    let summary_path = run_dir.join("summary.json");
    let summary_digest = std::fs::read(&summary_path)
        .map(|bytes| hex::encode(Sha256::digest(bytes)))
        .unwrap_or_default();
    println!("run directory: {}", run_dir.display());
    println!("run id: {}", outcome.summary.run_id);
    println!(
        "epochs: {}{}",
        outcome.summary.epochs_run,
        outcome
            .summary
            .stage1_epochs_run
            .map(|e| format!(" (stage 1: {e})"))
            .unwrap_or_default()
    );
    if let Some(mse) = outcome.summary.best_validation_mse {
        println!("best validation mse: {mse:.6}");
    }
    println!("params digest: {}", outcome.checkpoint.params_digest);
    println!("summary digest: {summary_digest}");
    Ok(())
}

fn split_tag(split: SplitArg) -> SplitTag {
    match split {
        SplitArg::Train => SplitTag::Train,
        SplitArg::Validation => SplitTag::Validation,
        SplitArg::Test => SplitTag::Test,
    }
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.manifest, "manifest")?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let manifest = load_manifest(&args.manifest)?;

    let dimension = match args.dimension.clone() {
        Some(d) => d,
        None => checkpoint
            .provenance
            .sap_dimension
            .clone()
            .ok_or_else(|| usage("checkpoint has no dimension; pass --dimension"))?,
    };

    let ids: Vec<String> = match &args.plan {
        Some(plan_path) => {
            require_file(plan_path, "split plan")?;
            let plan = SplitPlan::load(plan_path)?;
            match args.split {
                SplitArg::Train => plan.train_ids,
                SplitArg::Validation => plan.validation_ids,
                SplitArg::Test => plan.test_ids,
            }
        }
        None => {
            let tag = split_tag(args.split);
            manifest
                .records()
                .iter()
                .filter(|r| r.dimension == dimension && r.split == tag)
                .map(|r| r.id.clone())
                .collect()
        }
    };

    let frames = frame_source(&checkpoint.encoder_id, args.features_dir.as_deref())?;
    let (predictions, triple) = evaluate(&checkpoint, &manifest, &ids, frames.as_ref())?;

    let mut pred_lines = String::new();
    for p in &predictions {
        let truth = manifest
            .record_by_id(&p.utterance_id)
            .map(|r| r.score)
            .unwrap_or(f64::NAN);
        pred_lines.push_str(&format!("{}\t{}\t{}\n", p.utterance_id, p.score, truth));
    }
    write_output(&args.predictions, &pred_lines)?;

    #[derive(Serialize)]
    struct EvalSnapshot<'a> {
        checkpoint_params: &'a str,
        manifest_digest: &'a str,
        dimension: &'a str,
        split: &'a str,
        n: usize,
    }
    let split_name = match args.split {
        SplitArg::Train => "train",
        SplitArg::Validation => "validation",
        SplitArg::Test => "test",
    };
    let snapshot = EvalSnapshot {
        checkpoint_params: &checkpoint.params_digest,
        manifest_digest: manifest.source_digest(),
        dimension: &dimension,
        split: split_name,
        n: ids.len(),
    };
    let config_digest = hex::encode(Sha256::digest(
        serde_json::to_vec(&snapshot).expect("snapshot serializes"),
    ));

    let report = RunReport {
        sap_dimension: checkpoint
            .provenance
            .sap_dimension
            .clone()
            .unwrap_or_else(|| dimension.clone()),
        quali_dimension: checkpoint.provenance.quali_dimension.clone(),
        method: Method::from_paradigm(&checkpoint.provenance.paradigm)?,
        encoder_id: checkpoint.encoder_id.clone(),
        metrics: triple,
        run_id: config_digest[..12].to_string(),
        config_digest,
    };
    report.save(&args.report)?;

    let corr = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!(
        "evaluated {} utterances: mse {:.3}, lcc {}, srcc {}",
        triple.n,
        triple.mse,
        corr(triple.lcc),
        corr(triple.srcc)
    );
    println!("report written to {}", args.report.display());
    println!("predictions written to {}", args.predictions.display());
    Ok(())
}

pub fn report(args: ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        require_file(path, "run report")?;
        reports.push(RunReport::load(path)?);
    }
    let format = match args.format {
        FormatArg::Text => GridFormat::Text,
        FormatArg::Tsv => GridFormat::Tsv,
    };
    let mut grid = render_grid(&reports, format)?;
    if args.timestamp {
        let unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        grid.push_str(&format!("# generated_at_unix\t{unix}\n"));
    }
    match &args.out {
        Some(path) => {
            write_output(path, &grid)?;
            println!("grid written to {}", path.display());
        }
        None => print!("{grid}"),
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> CliResult<()> {
    require_file(&args.manifest, "manifest")?;
    let manifest = load_manifest(&args.manifest)?;
    let histogram = severity_histogram(manifest.records(), &args.dimension)?;
    let table = histogram.to_table();
    match &args.out {
        Some(path) => {
            write_output(path, &table)?;
            println!("histogram written to {}", path.display());
        }
        None => print!("{table}"),
    }
    if let Some(chart_path) = &args.chart {
        write_output(chart_path, &crate::chart::histogram_svg(&histogram))?;
        println!("chart written to {}", chart_path.display());
    }
    Ok(())
}

pub fn fixture(args: FixtureArgs) -> CliResult<()> {
    let config = FixtureConfig {
        sap_train: args.sap_train,
        sap_test: args.sap_test,
        quali_train: args.quali_train,
        quali_validation: args.quali_validation,
        quali_test: args.quali_test,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        sap_dimension: args.sap_dimension,
        quali_dimension: args.quali_dimension,
        round_scores: args.round_scores,
    };
    let summary = generate_fixture(&args.out, &config)?;
    println!(
        "fixture written under {} ({} clinical, {} quality utterances)",
        args.out.display(),
        summary.n_sap,
        summary.n_quali
    );
    println!("clinical manifest: {}", summary.sap_manifest.display());
    println!("quality manifest:  {}", summary.quali_manifest.display());
    Ok(())
}

pub fn encoders() -> CliResult<()> {
    let header = format!(
        "{:<20} {:<20} {:>5} {:>8}  {:<8}",
        "id", "name", "dim", "params", "kind"
    );
    println!("{header} pretraining corpus");
    for spec in registry() {
        let params = if spec.param_count_millions == 0 {
            "-".to_string()
        } else {
            format!("{}M", spec.param_count_millions)
        };
        let kind = match spec.kind {
            EncoderKind::Toy => "toy",
            EncoderKind::External => "external",
        };
        println!(
            "{:<20} {:<20} {:>5} {:>8}  {:<8} {}",
            spec.encoder_id, spec.display_name, spec.feature_dim, params, kind, spec.pretrain_corpus
        );
    }
    Ok(())
}

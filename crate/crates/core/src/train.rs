//! Training paradigms over pooled embeddings: in-domain training (IDT),
//! fine-tuning (FT, quality-corpus pretraining then clinical fine-tuning),
//! and joint training (JT, a 1:1-balanced union with aligned scores).
//!
//! The optimizer is Adam with decoupled weight decay; early stopping watches
//! validation MSE and the returned checkpoint always holds the
//! best-validation parameters. Every run is a pure function of its inputs
//! and seeds.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{Checkpoint, Provenance};
use crate::corpus::{
    sample_matched, CorpusTag, DatasetManifest, ScoreScale, SplitPlan, StratifyKey,
    UtteranceRecord,
};
use crate::encoder::FrameSource;
use crate::error::{Error, Result};
use crate::metrics::MetricTriple;
use crate::model::{forward, init_head, loss_and_grad, HeadConfig, HeadParams, Mode, Prediction};
use crate::scale::AffineScaleMap;

/// Optimizer and loop settings. Defaults follow the reference setup:
/// Adam at 1e-5 with decoupled weight decay 0.01.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidTrainConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidTrainConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidTrainConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How many quality-corpus utterances the JT sampler draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TargetSize {
    /// Match the clinical training split size (1:1 pool).
    Match,
    /// The fixed 4,000-utterance draw of the reference setup.
    Paper,
    Count(usize),
}

pub const PAPER_JT_SAMPLE_SIZE: usize = 4000;

impl TargetSize {
    pub fn resolve(&self, sap_train_size: usize) -> usize {
        match self {
            TargetSize::Match => sap_train_size,
            TargetSize::Paper => PAPER_JT_SAMPLE_SIZE,
            TargetSize::Count(n) => *n,
        }
    }
}

impl std::fmt::Display for TargetSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetSize::Match => write!(f, "match"),
            TargetSize::Paper => write!(f, "paper"),
            TargetSize::Count(n) => write!(f, "{n}"),
        }
    }
}

impl From<TargetSize> for String {
    fn from(t: TargetSize) -> String {
        t.to_string()
    }
}

impl std::str::FromStr for TargetSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "match" => Ok(TargetSize::Match),
            "paper" => Ok(TargetSize::Paper),
            other => other
                .parse::<usize>()
                .map(TargetSize::Count)
                .map_err(|_| format!("expected `match`, `paper`, or a count, got `{other}`")),
        }
    }
}

impl TryFrom<String> for TargetSize {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParadigmKind {
    Idt,
    Ft,
    Jt,
}

impl std::fmt::Display for ParadigmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParadigmKind::Idt => write!(f, "idt"),
            ParadigmKind::Ft => write!(f, "ft"),
            ParadigmKind::Jt => write!(f, "jt"),
        }
    }
}

/// Which paradigm runs, on which dimensions, with which score alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSpec {
    pub kind: ParadigmKind,
    pub sap_dimension: String,
    pub quali_dimension: Option<String>,
    pub jt_target_size: Option<TargetSize>,
    pub scale_map: Option<AffineScaleMap>,
}

impl ParadigmSpec {
    pub fn idt(sap_dimension: impl Into<String>) -> Self {
        ParadigmSpec {
            kind: ParadigmKind::Idt,
            sap_dimension: sap_dimension.into(),
            quali_dimension: None,
            jt_target_size: None,
            scale_map: None,
        }
    }

    pub fn ft(
        sap_dimension: impl Into<String>,
        quali_dimension: impl Into<String>,
        scale_map: AffineScaleMap,
    ) -> Self {
        ParadigmSpec {
            kind: ParadigmKind::Ft,
            sap_dimension: sap_dimension.into(),
            quali_dimension: Some(quali_dimension.into()),
            jt_target_size: None,
            scale_map: Some(scale_map),
        }
    }

    pub fn jt(
        sap_dimension: impl Into<String>,
        quali_dimension: impl Into<String>,
        target_size: TargetSize,
        scale_map: AffineScaleMap,
    ) -> Self {
        ParadigmSpec {
            kind: ParadigmKind::Jt,
            sap_dimension: sap_dimension.into(),
            quali_dimension: Some(quali_dimension.into()),
            jt_target_size: Some(target_size),
            scale_map: Some(scale_map),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ParadigmKind::Idt => {
                if self.quali_dimension.is_some() || self.scale_map.is_some() {
                    return Err(Error::InvalidParadigm(
                        "idt uses the clinical corpus only; quality-corpus fields must be absent"
                            .into(),
                    ));
                }
            }
            ParadigmKind::Ft => {
                if self.quali_dimension.is_none() || self.scale_map.is_none() {
                    return Err(Error::InvalidParadigm(
                        "ft needs quali_dimension and scale_map".into(),
                    ));
                }
            }
            ParadigmKind::Jt => {
                if self.quali_dimension.is_none()
                    || self.scale_map.is_none()
                    || self.jt_target_size.is_none()
                {
                    return Err(Error::InvalidParadigm(
                        "jt needs quali_dimension, scale_map, and jt_target_size".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One pooled training example: utterance embedding plus aligned target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub id: String,
    pub corpus: CorpusTag,
    pub embedding: Array1<f64>,
    pub target: f64,
}

/// Pool embeddings for the given ids, mapping targets through `map` when
/// present (the map's source scale must match the records' scale).
pub fn embed_records(
    manifest: &DatasetManifest,
    ids: &[String],
    frames: &dyn FrameSource,
    map: Option<&AffineScaleMap>,
) -> Result<Vec<LabeledEmbedding>> {
    let by_id: HashMap<&str, &UtteranceRecord> = manifest
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r))
        .collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let record = *by_id.get(id.as_str()).ok_or_else(|| Error::RecordValidation {
            id: id.clone(),
            message: "id not present in manifest".into(),
        })?;
        let target = match map {
            Some(m) => {
                if record.scale != m.source {
                    return Err(Error::TargetScaleMismatch {
                        expected: m.source.to_string(),
                        got: record.scale.to_string(),
                    });
                }
                m.apply(record.score)?
            }
            None => record.score,
        };
        let embedding = frames.embedding(&manifest.resolve_audio(record), &record.id)?;
        out.push(LabeledEmbedding {
            id: record.id.clone(),
            corpus: record.corpus,
            embedding: embedding.values,
            target,
        });
    }
    Ok(out)
}

/// Adam with decoupled weight decay over the flattened head parameters.
pub struct Adam {
    config: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(config: TrainConfig, param_count: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut HeadParams, grads: &HeadParams) {
        self.t += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            let before = *p;
            *p = before
                - c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon)
                - c.learning_rate * c.weight_decay * before;
        }
    }
}

/// Per-epoch log row. Wall time never enters the run summary, so summaries
/// digest identically across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub stage: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_mse: Option<f64>,
    pub validation_lcc: Option<f64>,
    pub validation_srcc: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best_params: HeadParams,
    pub final_params: HeadParams,
    pub best_validation_mse: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub epochs: Vec<EpochStats>,
}

fn eval_examples(
    params: &HeadParams,
    config: &HeadConfig,
    examples: &[LabeledEmbedding],
) -> Result<(Vec<Prediction>, MetricTriple)> {
    let mut preds = Vec::with_capacity(examples.len());
    let mut truth = Vec::with_capacity(examples.len());
    for ex in examples {
        let score = forward(params, config, &ex.embedding, Mode::Eval, 0)?;
        preds.push(Prediction {
            utterance_id: ex.id.clone(),
            score,
        });
        truth.push(ex.target);
    }
    let pred_scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let triple = MetricTriple::compute(&pred_scores, &truth)?;
    Ok((preds, triple))
}

/// One optimization stage: epoch shuffling, Adam updates, early stopping on
/// validation MSE, best-parameter tracking.
pub fn fit(
    train: &[LabeledEmbedding],
    validation: &[LabeledEmbedding],
    head_config: &HeadConfig,
    train_config: &TrainConfig,
    initial_params: Option<HeadParams>,
    stage: &str,
    mut on_epoch: impl FnMut(&EpochStats) -> Result<()>,
) -> Result<FitResult> {
    head_config.validate()?;
    train_config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit(format!("{stage}: train split is empty")));
    }
    for ex in train.iter().chain(validation) {
        if ex.embedding.len() != head_config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: head_config.input_dim,
                got: ex.embedding.len(),
            });
        }
    }

    let mut params = match initial_params {
        Some(p) => p,
        None => init_head(head_config, train_config.seed)?,
    };
    let mut optimizer = Adam::new(*train_config, params.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best_params = params.clone();
    let mut best_mse: Option<f64> = None;
    let mut best_epoch: Option<usize> = None;
    let mut stale = 0usize;
    let effective_patience = train_config.patience.max(1);
    let mut epochs = Vec::new();

    for epoch in 1..=train_config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(train_config.batch_size) {
            let dropout_seed: u64 = rng.random();
            let batch: Vec<(&Array1<f64>, f64)> = chunk
                .iter()
                .map(|&i| (&train[i].embedding, train[i].target))
                .collect();
            let (loss, grads) =
                loss_and_grad(&params, head_config, &batch, Mode::Train, dropout_seed)?;
            optimizer.step(&mut params, &grads);
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;

        let validation_triple = if validation.is_empty() {
            None
        } else {
            Some(eval_examples(&params, head_config, validation)?.1)
        };
        let stats = EpochStats {
            stage: stage.to_string(),
            epoch,
            train_loss,
            validation_mse: validation_triple.as_ref().map(|t| t.mse),
            validation_lcc: validation_triple.as_ref().and_then(|t| t.lcc),
            validation_srcc: validation_triple.as_ref().and_then(|t| t.srcc),
            wall_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats)?;
        epochs.push(stats);

        match validation_triple {
            Some(triple) => {
                if best_mse.is_none_or(|b| triple.mse < b) {
                    best_mse = Some(triple.mse);
                    best_epoch = Some(epoch);
                    best_params = params.clone();
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= effective_patience {
                        break;
                    }
                }
            }
            // No validation split: run the full budget, best = last.
            None => best_params = params.clone(),
        }
    }

    Ok(FitResult {
        best_params,
        final_params: params,
        best_validation_mse: best_mse,
        best_epoch,
        epochs_run: epochs.len(),
        epochs,
    })
}

/// Everything a paradigm run needs besides the plan and the config.
pub struct TrainInputs<'a> {
    pub sap_manifest: &'a DatasetManifest,
    pub quali_manifest: Option<&'a DatasetManifest>,
    pub frames: &'a dyn FrameSource,
    pub head: HeadConfig,
    /// When set, the run directory is created here (it must not exist yet)
    /// and receives the config snapshot, epoch log, checkpoints, and summary.
    pub run_dir: Option<PathBuf>,
}

/// Machine-readable run summary; its SHA-256 is the run's identity under
/// seed-fixed reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub paradigm: ParadigmKind,
    pub encoder_id: String,
    pub sap_dimension: String,
    pub quali_dimension: Option<String>,
    pub head_config: HeadConfig,
    pub train_config: TrainConfig,
    pub stage1_config: Option<TrainConfig>,
    pub sap_manifest_digest: String,
    pub quali_manifest_digest: Option<String>,
    pub jt_target_size: Option<String>,
    pub jt_pool_sap: Option<usize>,
    pub jt_pool_quali: Option<usize>,
    pub epochs_run: usize,
    pub stage1_epochs_run: Option<usize>,
    pub best_validation_mse: Option<f64>,
    pub stage1_best_validation_mse: Option<f64>,
    pub params_digest: String,
    pub stage1_params_digest: Option<String>,
    pub config_digest: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub stage1_checkpoint: Option<Checkpoint>,
    pub summary: RunSummary,
    pub run_dir: Option<PathBuf>,
}

/// Run-directory writer: exists-check on creation, append-only epoch log.
struct RunDir {
    root: PathBuf,
}

const EPOCH_LOG_HEADER: &str =
    "stage\tepoch\ttrain_loss\tvalidation_mse\tvalidation_lcc\tvalidation_srcc\twall_s";

impl RunDir {
    fn create(root: &Path) -> Result<RunDir> {
        if root.exists() {
            return Err(Error::RunDirExists {
                path: root.to_path_buf(),
            });
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let log = root.join("epochs.tsv");
        std::fs::write(&log, format!("{EPOCH_LOG_HEADER}\n")).map_err(|e| Error::io(&log, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    fn append_epoch(&self, stats: &EpochStats) -> Result<()> {
        let fmt_opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let line = format!(
            "{}\t{}\t{:.6}\t{}\t{}\t{}\t{:.3}\n",
            stats.stage,
            stats.epoch,
            stats.train_loss,
            fmt_opt(stats.validation_mse),
            fmt_opt(stats.validation_lcc),
            fmt_opt(stats.validation_srcc),
            stats.wall_s
        );
        let path = self.root.join("epochs.tsv");
        let mut file = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.root.join(name);
        let json = serde_json::to_string_pretty(value).expect("serializable");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    paradigm: &'a ParadigmSpec,
    head: &'a HeadConfig,
    train: &'a TrainConfig,
    stage1: Option<&'a TrainConfig>,
    encoder_id: &'a str,
    sap_manifest_digest: &'a str,
    quali_manifest_digest: Option<&'a str>,
    sap_plan_seed: u64,
    quali_plan_seed: Option<u64>,
}

fn config_digest(snapshot: &ConfigSnapshot) -> String {
    let bytes = serde_json::to_vec(snapshot).expect("snapshot serializes");
    hex::encode(Sha256::digest(bytes))
}

struct RunScaffold {
    dir: Option<RunDir>,
    digest: String,
    run_id: String,
}

fn open_run(inputs: &TrainInputs, snapshot: &ConfigSnapshot) -> Result<RunScaffold> {
    let digest = config_digest(snapshot);
    let run_id = digest[..12].to_string();
    let dir = match &inputs.run_dir {
        Some(path) => {
            let dir = RunDir::create(path)?;
            dir.write_json("config.json", snapshot)?;
            Some(dir)
        }
        None => None,
    };
    Ok(RunScaffold {
        dir,
        digest,
        run_id,
    })
}

fn plan_ids_for_split(plan: &SplitPlan) -> (&[String], &[String]) {
    (&plan.train_ids, &plan.validation_ids)
}

#[allow(clippy::too_many_arguments)]
fn finish_run(
    inputs: &TrainInputs,
    scaffold: RunScaffold,
    spec: &ParadigmSpec,
    cfg: &TrainConfig,
    stage1_cfg: Option<&TrainConfig>,
    fit: &FitResult,
    stage1: Option<(&FitResult, &Checkpoint)>,
    jt_pool: Option<(usize, usize)>,
    checkpoint: Checkpoint,
) -> Result<TrainOutcome> {
    let summary = RunSummary {
        run_id: scaffold.run_id.clone(),
        paradigm: spec.kind,
        encoder_id: inputs.frames.encoder_id().to_string(),
        sap_dimension: spec.sap_dimension.clone(),
        quali_dimension: spec.quali_dimension.clone(),
        head_config: inputs.head,
        train_config: *cfg,
        stage1_config: stage1_cfg.copied(),
        sap_manifest_digest: inputs.sap_manifest.source_digest().to_string(),
        quali_manifest_digest: inputs
            .quali_manifest
            .map(|m| m.source_digest().to_string()),
        jt_target_size: spec.jt_target_size.map(|t| t.to_string()),
        jt_pool_sap: jt_pool.map(|(s, _)| s),
        jt_pool_quali: jt_pool.map(|(_, q)| q),
        epochs_run: fit.epochs_run,
        stage1_epochs_run: stage1.map(|(f, _)| f.epochs_run),
        best_validation_mse: fit.best_validation_mse,
        stage1_best_validation_mse: stage1.and_then(|(f, _)| f.best_validation_mse),
        params_digest: checkpoint.params_digest.clone(),
        stage1_params_digest: stage1.map(|(_, c)| c.params_digest.clone()),
        config_digest: scaffold.digest,
    };

    if let Some(dir) = &scaffold.dir {
        checkpoint.save(&dir.root.join("checkpoint_best.json"))?;
        let last = Checkpoint::new(
            checkpoint.encoder_id.clone(),
            checkpoint.head_config,
            fit.final_params.clone(),
            checkpoint.provenance.clone(),
        );
        last.save(&dir.root.join("checkpoint_last.json"))?;
        if let Some((_, stage1_ckpt)) = stage1 {
            stage1_ckpt.save(&dir.root.join("checkpoint_stage1_best.json"))?;
        }
        dir.write_json("summary.json", &summary)?;
    }

    Ok(TrainOutcome {
        checkpoint,
        stage1_checkpoint: stage1.map(|(_, c)| c.clone()),
        summary,
        run_dir: scaffold.dir.map(|d| d.root),
    })
}

/// In-domain training: optimize and early-stop on the clinical corpus only.
pub fn train_idt(
    inputs: &TrainInputs,
    plan: &SplitPlan,
    spec: &ParadigmSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if spec.kind != ParadigmKind::Idt {
        return Err(Error::InvalidParadigm(format!(
            "train_idt called with a {} spec",
            spec.kind
        )));
    }
    if plan.dimension != spec.sap_dimension {
        return Err(Error::InvalidParadigm(format!(
            "plan is for `{}`, spec wants `{}`",
            plan.dimension, spec.sap_dimension
        )));
    }

    let snapshot = ConfigSnapshot {
        paradigm: spec,
        head: &inputs.head,
        train: cfg,
        stage1: None,
        encoder_id: inputs.frames.encoder_id(),
        sap_manifest_digest: inputs.sap_manifest.source_digest(),
        quali_manifest_digest: None,
        sap_plan_seed: plan.seed,
        quali_plan_seed: None,
    };
    let scaffold = open_run(inputs, &snapshot)?;

    let (train_ids, val_ids) = plan_ids_for_split(plan);
    let train = embed_records(inputs.sap_manifest, train_ids, inputs.frames, None)?;
    let validation = embed_records(inputs.sap_manifest, val_ids, inputs.frames, None)?;

    let result = fit(
        &train,
        &validation,
        &inputs.head,
        cfg,
        None,
        "train",
        |stats| match &scaffold.dir {
            Some(dir) => dir.append_epoch(stats),
            None => Ok(()),
        },
    )?;

    let checkpoint = Checkpoint::new(
        inputs.frames.encoder_id().to_string(),
        inputs.head,
        result.best_params.clone(),
        Provenance {
            paradigm: "idt".into(),
            sap_dimension: Some(spec.sap_dimension.clone()),
            quali_dimension: None,
            target_scale: target_scale_of(inputs.sap_manifest, train_ids),
            train_manifest_digest: Some(inputs.sap_manifest.source_digest().to_string()),
            quali_manifest_digest: None,
            seed: cfg.seed,
            epochs_run: result.epochs_run,
            best_validation_mse: result.best_validation_mse,
            parent_params_digest: None,
        },
    );

    finish_run(inputs, scaffold, spec, cfg, None, &result, None, None, checkpoint)
}

fn target_scale_of(manifest: &DatasetManifest, ids: &[String]) -> ScoreScale {
    ids.first()
        .and_then(|id| manifest.record_by_id(id))
        .map(|r| r.scale)
        .unwrap_or(ScoreScale::SEVERITY)
}

/// Fine-tuning: stage 1 pretrains on the quality corpus (targets mapped onto
/// the severity scale, early stop on the quality validation split); stage 2
/// starts from the stage-1 best parameters and trains like IDT. The final
/// checkpoint records the stage-1 parameter digest as its parent.
pub fn train_ft(
    inputs: &TrainInputs,
    plan_sap: &SplitPlan,
    plan_quali: &SplitPlan,
    spec: &ParadigmSpec,
    cfg_pre: &TrainConfig,
    cfg_ft: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if spec.kind != ParadigmKind::Ft {
        return Err(Error::InvalidParadigm(format!(
            "train_ft called with a {} spec",
            spec.kind
        )));
    }
    let quali_manifest = inputs.quali_manifest.ok_or_else(|| {
        Error::InvalidParadigm("ft needs a quality-corpus manifest".into())
    })?;
    let map = spec.scale_map.as_ref().expect("validated");

    let snapshot = ConfigSnapshot {
        paradigm: spec,
        head: &inputs.head,
        train: cfg_ft,
        stage1: Some(cfg_pre),
        encoder_id: inputs.frames.encoder_id(),
        sap_manifest_digest: inputs.sap_manifest.source_digest(),
        quali_manifest_digest: Some(quali_manifest.source_digest()),
        sap_plan_seed: plan_sap.seed,
        quali_plan_seed: Some(plan_quali.seed),
    };
    let scaffold = open_run(inputs, &snapshot)?;

    // Stage 1: quality corpus, targets mapped before optimization so both
    // stages share one scale.
    let (q_train_ids, q_val_ids) = plan_ids_for_split(plan_quali);
    let q_train = embed_records(quali_manifest, q_train_ids, inputs.frames, Some(map))?;
    let q_val = embed_records(quali_manifest, q_val_ids, inputs.frames, Some(map))?;
    let stage1 = fit(
        &q_train,
        &q_val,
        &inputs.head,
        cfg_pre,
        None,
        "stage1",
        |stats| match &scaffold.dir {
            Some(dir) => dir.append_epoch(stats),
            None => Ok(()),
        },
    )?;

    let stage1_ckpt = Checkpoint::new(
        inputs.frames.encoder_id().to_string(),
        inputs.head,
        stage1.best_params.clone(),
        Provenance {
            paradigm: "ft_stage1".into(),
            sap_dimension: Some(spec.sap_dimension.clone()),
            quali_dimension: spec.quali_dimension.clone(),
            target_scale: map.target,
            train_manifest_digest: Some(quali_manifest.source_digest().to_string()),
            quali_manifest_digest: Some(quali_manifest.source_digest().to_string()),
            seed: cfg_pre.seed,
            epochs_run: stage1.epochs_run,
            best_validation_mse: stage1.best_validation_mse,
            parent_params_digest: None,
        },
    );

    finish_ft_stage2(
        inputs,
        plan_sap,
        spec,
        Some(cfg_pre),
        cfg_ft,
        scaffold,
        stage1,
        stage1_ckpt,
    )
}

/// Resume fine-tuning from an existing stage-1 checkpoint. When
/// `expected_digest` is given it must match the checkpoint's parameter hash.
pub fn train_ft_resume(
    inputs: &TrainInputs,
    plan_sap: &SplitPlan,
    stage1_ckpt: Checkpoint,
    expected_digest: Option<&str>,
    spec: &ParadigmSpec,
    cfg_ft: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if spec.kind != ParadigmKind::Ft {
        return Err(Error::InvalidParadigm(format!(
            "train_ft_resume called with a {} spec",
            spec.kind
        )));
    }
    if let Some(expected) = expected_digest {
        let got = stage1_ckpt.params.digest();
        if got != expected {
            return Err(Error::LineageMismatch {
                expected: expected.to_string(),
                got,
            });
        }
    }
    if stage1_ckpt.encoder_id != inputs.frames.encoder_id() {
        return Err(Error::EncoderMismatch {
            checkpoint: stage1_ckpt.encoder_id.clone(),
            features: inputs.frames.encoder_id().to_string(),
        });
    }

    let snapshot = ConfigSnapshot {
        paradigm: spec,
        head: &inputs.head,
        train: cfg_ft,
        stage1: None,
        encoder_id: inputs.frames.encoder_id(),
        sap_manifest_digest: inputs.sap_manifest.source_digest(),
        quali_manifest_digest: stage1_ckpt.provenance.quali_manifest_digest.as_deref(),
        sap_plan_seed: plan_sap.seed,
        quali_plan_seed: None,
    };
    let scaffold = open_run(inputs, &snapshot)?;

    let stage1 = FitResult {
        best_params: stage1_ckpt.params.clone(),
        final_params: stage1_ckpt.params.clone(),
        best_validation_mse: stage1_ckpt.provenance.best_validation_mse,
        best_epoch: None,
        epochs_run: stage1_ckpt.provenance.epochs_run,
        epochs: Vec::new(),
    };
    finish_ft_stage2(
        inputs, plan_sap, spec, None, cfg_ft, scaffold, stage1, stage1_ckpt,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_ft_stage2(
    inputs: &TrainInputs,
    plan_sap: &SplitPlan,
    spec: &ParadigmSpec,
    cfg_pre: Option<&TrainConfig>,
    cfg_ft: &TrainConfig,
    scaffold: RunScaffold,
    stage1: FitResult,
    stage1_ckpt: Checkpoint,
) -> Result<TrainOutcome> {
    let (train_ids, val_ids) = plan_ids_for_split(plan_sap);
    let train = embed_records(inputs.sap_manifest, train_ids, inputs.frames, None)?;
    let validation = embed_records(inputs.sap_manifest, val_ids, inputs.frames, None)?;

    // Stage 2 starts bit-for-bit from the stage-1 best parameters.
    let stage2 = fit(
        &train,
        &validation,
        &inputs.head,
        cfg_ft,
        Some(stage1_ckpt.params.clone()),
        "stage2",
        |stats| match &scaffold.dir {
            Some(dir) => dir.append_epoch(stats),
            None => Ok(()),
        },
    )?;

    let checkpoint = Checkpoint::new(
        inputs.frames.encoder_id().to_string(),
        inputs.head,
        stage2.best_params.clone(),
        Provenance {
            paradigm: "ft".into(),
            sap_dimension: Some(spec.sap_dimension.clone()),
            quali_dimension: spec.quali_dimension.clone(),
            target_scale: target_scale_of(inputs.sap_manifest, train_ids),
            train_manifest_digest: Some(inputs.sap_manifest.source_digest().to_string()),
            quali_manifest_digest: stage1_ckpt.provenance.quali_manifest_digest.clone(),
            seed: cfg_ft.seed,
            epochs_run: stage2.epochs_run,
            best_validation_mse: stage2.best_validation_mse,
            parent_params_digest: Some(stage1_ckpt.params_digest.clone()),
        },
    );

    finish_run(
        inputs,
        scaffold,
        spec,
        cfg_ft,
        cfg_pre,
        &stage2,
        Some((&stage1, &stage1_ckpt)),
        None,
        checkpoint,
    )
}

/// Joint training: one loss over the shuffled union of the clinical train
/// split and a distribution-matched sample of the quality corpus (targets
/// mapped). Validation and early stopping use the clinical validation split
/// only.
pub fn train_jt(
    inputs: &TrainInputs,
    plan_sap: &SplitPlan,
    plan_quali: &SplitPlan,
    spec: &ParadigmSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if spec.kind != ParadigmKind::Jt {
        return Err(Error::InvalidParadigm(format!(
            "train_jt called with a {} spec",
            spec.kind
        )));
    }
    let quali_manifest = inputs.quali_manifest.ok_or_else(|| {
        Error::InvalidParadigm("jt needs a quality-corpus manifest".into())
    })?;
    let map = spec.scale_map.as_ref().expect("validated");
    let target_size = spec.jt_target_size.expect("validated");

    let snapshot = ConfigSnapshot {
        paradigm: spec,
        head: &inputs.head,
        train: cfg,
        stage1: None,
        encoder_id: inputs.frames.encoder_id(),
        sap_manifest_digest: inputs.sap_manifest.source_digest(),
        quali_manifest_digest: Some(quali_manifest.source_digest()),
        sap_plan_seed: plan_sap.seed,
        quali_plan_seed: Some(plan_quali.seed),
    };
    let scaffold = open_run(inputs, &snapshot)?;

    let (sap_train_ids, sap_val_ids) = plan_ids_for_split(plan_sap);
    let resolved = target_size.resolve(sap_train_ids.len());

    let by_id: HashMap<&str, &UtteranceRecord> = quali_manifest
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r))
        .collect();
    let quali_pool: Vec<UtteranceRecord> = plan_quali
        .train_ids
        .iter()
        .filter_map(|id| by_id.get(id.as_str()).map(|r| (*r).clone()))
        .collect();
    let sampled = sample_matched(&quali_pool, resolved, StratifyKey::RoundedScore, cfg.seed)?;
    let sampled_ids: Vec<String> = sampled.iter().map(|r| r.id.clone()).collect();

    let mut pool = embed_records(inputs.sap_manifest, sap_train_ids, inputs.frames, None)?;
    let quali_examples = embed_records(quali_manifest, &sampled_ids, inputs.frames, Some(map))?;
    let pool_sap = pool.len();
    let pool_quali = quali_examples.len();
    pool.extend(quali_examples);

    let validation = embed_records(inputs.sap_manifest, sap_val_ids, inputs.frames, None)?;

    let result = fit(
        &pool,
        &validation,
        &inputs.head,
        cfg,
        None,
        "train",
        |stats| match &scaffold.dir {
            Some(dir) => dir.append_epoch(stats),
            None => Ok(()),
        },
    )?;

    let checkpoint = Checkpoint::new(
        inputs.frames.encoder_id().to_string(),
        inputs.head,
        result.best_params.clone(),
        Provenance {
            paradigm: "jt".into(),
            sap_dimension: Some(spec.sap_dimension.clone()),
            quali_dimension: spec.quali_dimension.clone(),
            target_scale: target_scale_of(inputs.sap_manifest, sap_train_ids),
            train_manifest_digest: Some(inputs.sap_manifest.source_digest().to_string()),
            quali_manifest_digest: Some(quali_manifest.source_digest().to_string()),
            seed: cfg.seed,
            epochs_run: result.epochs_run,
            best_validation_mse: result.best_validation_mse,
            parent_params_digest: None,
        },
    );

    finish_run(
        inputs,
        scaffold,
        spec,
        cfg,
        None,
        &result,
        None,
        Some((pool_sap, pool_quali)),
        checkpoint,
    )
}

/// Score a record set with a checkpoint and compute the metric triple
/// against ground truth.
pub fn evaluate(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    ids: &[String],
    frames: &dyn FrameSource,
) -> Result<(Vec<Prediction>, MetricTriple)> {
    if frames.encoder_id() != checkpoint.encoder_id {
        return Err(Error::EncoderMismatch {
            checkpoint: checkpoint.encoder_id.clone(),
            features: frames.encoder_id().to_string(),
        });
    }
    if ids.is_empty() {
        return Err(Error::EmptySplit("no records to evaluate".into()));
    }
    let declared = checkpoint.provenance.target_scale;
    for id in ids {
        if let Some(r) = manifest.record_by_id(id) {
            if r.scale != declared {
                return Err(Error::TargetScaleMismatch {
                    expected: declared.to_string(),
                    got: r.scale.to_string(),
                });
            }
        }
    }
    let examples = embed_records(manifest, ids, frames, None)?;
    eval_examples(&checkpoint.params, &checkpoint.head_config, &examples)
}

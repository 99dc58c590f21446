//! Rating manifests, split construction, matched sampling, and severity statistics.
//!
//! A manifest is a UTF-8 JSON Lines file, one flat object per record:
//!
//! ```text
//! {"id":"u0001","audio_path":"wav/u0001.wav","corpus":"sap","dimension":"naturalness",
//!  "score":4.0,"scale_min":1.0,"scale_max":7.0,"polarity":"higher_is_worse","split":"train"}
//! ```
//!
//! Record order is the file order; all sampling operations are deterministic
//! functions of (manifest order, seed).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rating-scale polarity: whether a larger score means better or worse speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsBetter,
    HigherIsWorse,
}

/// Declarative rating-scale descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min_score: f64,
    pub max_score: f64,
    pub polarity: Polarity,
}

impl ScoreScale {
    /// MOS scale: 1-5, higher is better.
    pub const MOS: ScoreScale = ScoreScale {
        min_score: 1.0,
        max_score: 5.0,
        polarity: Polarity::HigherIsBetter,
    };

    /// Clinical severity scale: 1-7, higher is worse.
    pub const SEVERITY: ScoreScale = ScoreScale {
        min_score: 1.0,
        max_score: 7.0,
        polarity: Polarity::HigherIsWorse,
    };

    pub fn new(min_score: f64, max_score: f64, polarity: Polarity) -> Result<Self> {
        let scale = ScoreScale {
            min_score,
            max_score,
            polarity,
        };
        scale.validate()?;
        Ok(scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min_score.is_finite() || !self.max_score.is_finite() {
            return Err(Error::InvalidScale(format!(
                "bounds must be finite, got [{}, {}]",
                self.min_score, self.max_score
            )));
        }
        if self.min_score >= self.max_score {
            return Err(Error::InvalidScale(format!(
                "min_score {} must be below max_score {}",
                self.min_score, self.max_score
            )));
        }
        Ok(())
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.min_score && score <= self.max_score
    }

    /// Endpoint rated best, as determined by polarity.
    pub fn best(&self) -> f64 {
        match self.polarity {
            Polarity::HigherIsBetter => self.max_score,
            Polarity::HigherIsWorse => self.min_score,
        }
    }

    /// Endpoint rated worst.
    pub fn worst(&self) -> f64 {
        match self.polarity {
            Polarity::HigherIsBetter => self.min_score,
            Polarity::HigherIsWorse => self.max_score,
        }
    }
}

impl fmt::Display for ScoreScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pol = match self.polarity {
            Polarity::HigherIsBetter => "higher_is_better",
            Polarity::HigherIsWorse => "higher_is_worse",
        };
        write!(f, "[{}, {}] {}", self.min_score, self.max_score, pol)
    }
}

/// Source corpus of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusTag {
    Sap,
    Quali,
    Other,
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusTag::Sap => write!(f, "sap"),
            CorpusTag::Quali => write!(f, "quali"),
            CorpusTag::Other => write!(f, "other"),
        }
    }
}

/// Split a record is assigned to by the manifest author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// One annotated utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio_path: PathBuf,
    pub corpus: CorpusTag,
    pub dimension: String,
    pub score: f64,
    pub scale: ScoreScale,
    pub split: SplitTag,
    pub duration_s: Option<f64>,
}

impl UtteranceRecord {
    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        if !self.score.is_finite() || !self.scale.contains(self.score) {
            return Err(Error::RecordValidation {
                id: self.id.clone(),
                message: format!(
                    "score {} outside scale [{}, {}]",
                    self.score, self.scale.min_score, self.scale.max_score
                ),
            });
        }
        if let Some(d) = self.duration_s {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::RecordValidation {
                    id: self.id.clone(),
                    message: format!("duration_s {d} must be nonnegative"),
                });
            }
        }
        Ok(())
    }
}

/// On-disk manifest line: the flat key-value shape of the file format.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    audio_path: PathBuf,
    corpus: CorpusTag,
    dimension: String,
    score: f64,
    scale_min: f64,
    scale_max: f64,
    polarity: Polarity,
    split: SplitTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
}

impl From<ManifestLine> for UtteranceRecord {
    fn from(line: ManifestLine) -> Self {
        UtteranceRecord {
            id: line.id,
            audio_path: line.audio_path,
            corpus: line.corpus,
            dimension: line.dimension,
            score: line.score,
            scale: ScoreScale {
                min_score: line.scale_min,
                max_score: line.scale_max,
                polarity: line.polarity,
            },
            split: line.split,
            duration_s: line.duration_s,
        }
    }
}

impl From<&UtteranceRecord> for ManifestLine {
    fn from(r: &UtteranceRecord) -> Self {
        ManifestLine {
            id: r.id.clone(),
            audio_path: r.audio_path.clone(),
            corpus: r.corpus,
            dimension: r.dimension.clone(),
            score: r.score,
            scale_min: r.scale.min_score,
            scale_max: r.scale.max_score,
            polarity: r.scale.polarity,
            split: r.split,
            duration_s: r.duration_s,
        }
    }
}

/// A validated manifest. Records keep file order; `source_digest` is the
/// SHA-256 of the manifest bytes.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    records: Vec<UtteranceRecord>,
    source_digest: String,
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Directory of the manifest file; relative `audio_path`s resolve against it.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve_audio(&self, record: &UtteranceRecord) -> PathBuf {
        if record.audio_path.is_absolute() {
            record.audio_path.clone()
        } else {
            self.base_dir.join(&record.audio_path)
        }
    }

    pub fn record_by_id(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records annotated for `dimension`, in file order.
    pub fn dimension_records(&self, dimension: &str) -> Vec<&UtteranceRecord> {
        self.records
            .iter()
            .filter(|r| r.dimension == dimension)
            .collect()
    }

    /// Distinct dimensions in file order of first appearance.
    pub fn dimensions(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.dimension.as_str()) {
                out.push(r.dimension.clone());
            }
        }
        out
    }

    /// Build a manifest from in-memory records (fixture and test path).
    /// The digest is computed over the serialized lines.
    pub fn from_records(records: Vec<UtteranceRecord>, base_dir: PathBuf) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if seen.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    path: base_dir.clone(),
                    line: i + 1,
                });
            }
        }
        let body = to_manifest_string(&records)?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        Ok(DatasetManifest {
            records,
            source_digest: digest,
            base_dir,
        })
    }
}

/// Serialize records to the JSON Lines manifest format.
pub fn to_manifest_string(records: &[UtteranceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line: ManifestLine = r.into();
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::RecordValidation {
            id: r.id.clone(),
            message: e.to_string(),
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// Write records as a manifest file.
pub fn write_manifest(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    let body = to_manifest_string(records)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Load and validate a manifest file.
///
/// Fails on the first malformed line (with its line number), out-of-range
/// score, or duplicate id.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::ManifestParse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(raw).map_err(|e| Error::ManifestParse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        let record: UtteranceRecord = parsed.into();
        record.validate()?;
        if seen.insert(record.id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId {
                id: record.id,
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        records.push(record);
    }

    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(DatasetManifest {
        records,
        source_digest: hex::encode(Sha256::digest(&bytes)),
        base_dir,
    })
}

/// Train/validation/test id assignment for one dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub dimension: String,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("plan serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("not a split plan: {e}"),
        })
    }
}

/// Construct the per-dimension split plan.
///
/// Records tagged `test` stay test. Records already tagged `validation` are
/// honored as validation (corpora like QualiSpeech ship an explicit
/// validation split). `validation_size` additional utterances are drawn
/// uniformly without replacement from the train pool, deterministically from
/// `seed`; the rest of the pool becomes the training set.
pub fn build_split_plan(
    manifest: &DatasetManifest,
    dimension: &str,
    validation_size: usize,
    seed: u64,
) -> Result<SplitPlan> {
    let records = manifest.dimension_records(dimension);
    if records.is_empty() {
        return Err(Error::UnknownDimension {
            requested: dimension.to_string(),
            available: manifest.dimensions(),
        });
    }

    let pool: Vec<&str> = records
        .iter()
        .filter(|r| r.split == SplitTag::Train)
        .map(|r| r.id.as_str())
        .collect();
    let mut validation_ids: Vec<String> = records
        .iter()
        .filter(|r| r.split == SplitTag::Validation)
        .map(|r| r.id.clone())
        .collect();
    let test_ids: Vec<String> = records
        .iter()
        .filter(|r| r.split == SplitTag::Test)
        .map(|r| r.id.clone())
        .collect();

    if validation_size >= pool.len() && validation_size > 0 {
        return Err(Error::ValidationSizeTooLarge {
            requested: validation_size,
            pool: pool.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<usize> =
        rand::seq::index::sample(&mut rng, pool.len(), validation_size).into_vec();
    drawn.sort_unstable();
    let drawn_set: HashSet<usize> = drawn.iter().copied().collect();

    let train_ids: Vec<String> = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| !drawn_set.contains(i))
        .map(|(_, id)| id.to_string())
        .collect();
    validation_ids.extend(drawn.iter().map(|&i| pool[i].to_string()));

    Ok(SplitPlan {
        dimension: dimension.to_string(),
        train_ids,
        validation_ids,
        test_ids,
        seed,
    })
}

/// Attribute records are binned on when sampling preserves a distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyKey {
    /// Score rounded to the nearest integer on the record's own scale (default).
    #[default]
    RoundedScore,
    Dimension,
    Corpus,
}

impl StratifyKey {
    fn key_of(&self, r: &UtteranceRecord) -> String {
        match self {
            StratifyKey::RoundedScore => format!("{:+05}", r.score.round() as i64),
            StratifyKey::Dimension => r.dimension.clone(),
            StratifyKey::Corpus => r.corpus.to_string(),
        }
    }
}

/// Draw `target_size` records from `source`, preserving the source's
/// distribution over the stratification key.
///
/// Per-bin counts follow proportional allocation with largest-remainder
/// rounding, so every bin's count deviates from exact proportionality by
/// less than one record. Selection within a bin is uniform without
/// replacement and deterministic in `seed`. The result is canonicalized by
/// id order.
pub fn sample_matched(
    source: &[UtteranceRecord],
    target_size: usize,
    key: StratifyKey,
    seed: u64,
) -> Result<Vec<UtteranceRecord>> {
    if source.is_empty() {
        return Err(Error::EmptySource);
    }
    if target_size > source.len() {
        return Err(Error::SampleTooLarge {
            requested: target_size,
            available: source.len(),
        });
    }

    // Bins keep source order internally; BTreeMap fixes the bin order.
    let mut bins: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in source.iter().enumerate() {
        bins.entry(key.key_of(r)).or_default().push(i);
    }

    let total = source.len() as f64;
    let mut allocation: Vec<(String, usize, f64)> = bins
        .iter()
        .map(|(k, members)| {
            let quota = target_size as f64 * members.len() as f64 / total;
            (k.clone(), quota.floor() as usize, quota - quota.floor())
        })
        .collect();

    let assigned: usize = allocation.iter().map(|(_, base, _)| base).sum();
    let mut leftover = target_size - assigned;

    // Largest remainders first; ties break on bin key for determinism.
    let mut order: Vec<usize> = (0..allocation.len()).collect();
    order.sort_by(|&a, &b| {
        allocation[b]
            .2
            .partial_cmp(&allocation[a].2)
            .unwrap()
            .then_with(|| allocation[a].0.cmp(&allocation[b].0))
    });
    for idx in order {
        if leftover == 0 {
            break;
        }
        allocation[idx].1 += 1;
        leftover -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<&UtteranceRecord> = Vec::with_capacity(target_size);
    for (bin_key, take, _) in &allocation {
        let members = &bins[bin_key];
        let chosen = rand::seq::index::sample(&mut rng, members.len(), *take);
        for j in chosen.iter() {
            picked.push(&source[members[j]]);
        }
    }

    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(picked.into_iter().cloned().collect())
}

/// Ordered (score level -> count) table over a scale's integer levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dimension: String,
    pub scale: ScoreScale,
    /// One entry per level from scale min to max, zero-filled.
    pub counts: Vec<(i64, usize)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }

    /// Two-column `level<TAB>count` rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (level, count) in &self.counts {
            out.push_str(&format!("{level}\t{count}\n"));
        }
        out
    }
}

/// Count utterances per integer score level for one dimension.
///
/// All counted records must share one scale and carry integer-valued scores.
/// An empty selection yields an all-zero table over the 1-7 severity levels.
pub fn severity_histogram(records: &[UtteranceRecord], dimension: &str) -> Result<Histogram> {
    let selected: Vec<&UtteranceRecord> = records
        .iter()
        .filter(|r| r.dimension == dimension)
        .collect();

    let scale = match selected.first() {
        Some(r) => r.scale,
        None => ScoreScale::SEVERITY,
    };
    for r in &selected {
        if r.scale != scale {
            return Err(Error::MixedScales {
                first: scale.to_string(),
                second: r.scale.to_string(),
                id: r.id.clone(),
            });
        }
    }
    if scale.min_score.fract() != 0.0 || scale.max_score.fract() != 0.0 {
        return Err(Error::InvalidScale(format!(
            "histogram needs integer scale bounds, got {scale}"
        )));
    }

    let min = scale.min_score as i64;
    let max = scale.max_score as i64;
    let mut counts: BTreeMap<i64, usize> = (min..=max).map(|l| (l, 0)).collect();
    for r in &selected {
        if r.score.fract() != 0.0 {
            return Err(Error::NonIntegerScore {
                id: r.id.clone(),
                score: r.score,
            });
        }
        *counts.get_mut(&(r.score as i64)).expect("score in range") += 1;
    }

    Ok(Histogram {
        dimension: dimension.to_string(),
        scale,
        counts: counts.into_iter().collect(),
    })
}

//! Frame-level feature extraction and utterance-level pooling.
//!
//! Encoders are pluggable behind [`FrameSource`]. The bundled registry lists
//! five external SSL encoders (metadata plus public checkpoint locators) and
//! one built-in toy encoder that makes the whole pipeline runnable and
//! testable without model downloads. External encoders are never executed
//! in-process: their frames arrive as precomputed feature files.
//!
//! Toy encoder, normative definition: the 16 kHz signal is framed into 25 ms
//! windows with a 20 ms hop; each window is projected through a fixed matrix
//! of `TOY_FEATURE_DIM` x 400 entries drawn row-major from
//! `ChaCha8Rng::seed_from_u64(TOY_PROJECTION_SEED)` uniformly in [-1, 1);
//! features are `ln(1 + |projection|)` elementwise, and every frame is valid.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::wav::read_wav;

pub const TOY_ENCODER_ID: &str = "toy";
pub const TOY_FEATURE_DIM: usize = 32;
pub const TOY_PROJECTION_SEED: u64 = 42;

const EXPECTED_SAMPLE_RATE: u32 = 16_000;
const TOY_WINDOW: usize = 400; // 25 ms at 16 kHz
const TOY_HOP: usize = 320; // 20 ms at 16 kHz

/// A mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("empty waveform".into()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidWaveform("zero sample rate".into()));
        }
        if let Some(s) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidWaveform(format!(
                "sample {s} outside [-1, 1]"
            )));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_wav(path: &Path) -> Result<Self> {
        let (samples, rate) = read_wav(path)?;
        Waveform::new(samples, rate)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Time-by-dimension feature matrix with a per-frame validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub values: Array2<f64>,
    pub valid_mask: Vec<bool>,
    pub encoder_id: String,
}

impl FrameFeatures {
    pub fn new(values: Array2<f64>, valid_mask: Vec<bool>, encoder_id: String) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::InvalidFrames("zero feature dimensions".into()));
        }
        if valid_mask.len() != values.nrows() {
            return Err(Error::InvalidFrames(format!(
                "mask length {} != frame count {}",
                valid_mask.len(),
                values.nrows()
            )));
        }
        if !valid_mask.iter().any(|&v| v) {
            return Err(Error::InvalidFrames("no valid frames".into()));
        }
        Ok(FrameFeatures {
            values,
            valid_mask,
            encoder_id,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Mask-aware temporal mean of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceEmbedding {
    pub values: Array1<f64>,
    pub encoder_id: String,
}

impl UtteranceEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-dimension arithmetic mean over valid frames; padded (masked-out)
/// frames contribute to neither numerator nor denominator.
pub fn mean_pool(frames: &FrameFeatures) -> Result<UtteranceEmbedding> {
    let valid = frames.valid_mask.iter().filter(|&&v| v).count();
    if valid == 0 {
        return Err(Error::NoValidFrames);
    }
    let mut sum = Array1::<f64>::zeros(frames.feature_dim());
    for (row, &keep) in frames.values.axis_iter(Axis(0)).zip(&frames.valid_mask) {
        if keep {
            sum += &row;
        }
    }
    Ok(UtteranceEmbedding {
        values: sum / valid as f64,
        encoder_id: frames.encoder_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Toy,
    External,
}

/// Registry row: identity, feature geometry, and provenance metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderSpec {
    pub encoder_id: String,
    pub display_name: String,
    pub feature_dim: usize,
    pub kind: EncoderKind,
    /// Informational parameter count, in millions (0 for the toy encoder).
    pub param_count_millions: u32,
    pub pretrain_corpus: String,
    /// Public checkpoint locator; empty for the toy encoder.
    pub checkpoint_ref: String,
}

fn spec(
    encoder_id: &str,
    display_name: &str,
    feature_dim: usize,
    kind: EncoderKind,
    params_m: u32,
    pretrain: &str,
    checkpoint: &str,
) -> EncoderSpec {
    EncoderSpec {
        encoder_id: encoder_id.into(),
        display_name: display_name.into(),
        feature_dim,
        kind,
        param_count_millions: params_m,
        pretrain_corpus: pretrain.into(),
        checkpoint_ref: checkpoint.into(),
    }
}

/// The bundled registry: five external SSL encoders plus the toy encoder.
pub fn registry() -> Vec<EncoderSpec> {
    vec![
        spec(
            "wav2vec2-base",
            "wav2vec 2.0 Base",
            768,
            EncoderKind::External,
            94,
            "Librispeech",
            "https://dl.fbaipublicfiles.com/fairseq/wav2vec/wav2vec_small.pt",
        ),
        spec(
            "wav2vec2-large",
            "wav2vec 2.0 Large*",
            1024,
            EncoderKind::External,
            315,
            "Libri-Light",
            "https://dl.fbaipublicfiles.com/fairseq/wav2vec/wav2vec_vox_new.pt",
        ),
        spec(
            "wav2vec2-large-plus",
            "wav2vec 2.0 Large+",
            1024,
            EncoderKind::External,
            315,
            "Libri-Light + CommonVoice + Switchboard + Fisher",
            "https://dl.fbaipublicfiles.com/fairseq/wav2vec/w2v_large_lv_fsh_swbd_cv.pt",
        ),
        spec(
            "hubert-base",
            "HuBERT Base",
            768,
            EncoderKind::External,
            95,
            "Librispeech",
            "https://dl.fbaipublicfiles.com/hubert/hubert_base_ls960.pt",
        ),
        spec(
            "hubert-large",
            "HuBERT Large",
            1024,
            EncoderKind::External,
            316,
            "Libri-Light",
            "https://dl.fbaipublicfiles.com/hubert/hubert_large_ll60k.pt",
        ),
        spec(
            TOY_ENCODER_ID,
            "Toy",
            TOY_FEATURE_DIM,
            EncoderKind::Toy,
            0,
            "none",
            "",
        ),
    ]
}

pub fn registry_lookup(encoder_id: &str) -> Result<EncoderSpec> {
    registry()
        .into_iter()
        .find(|s| s.encoder_id == encoder_id)
        .ok_or_else(|| Error::UnknownEncoder {
            requested: encoder_id.to_string(),
            known: registry().iter().map(|s| s.encoder_id.clone()).collect(),
        })
}

fn toy_projection() -> &'static Array2<f64> {
    static PROJ: OnceLock<Array2<f64>> = OnceLock::new();
    PROJ.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(TOY_PROJECTION_SEED);
        let mut m = Array2::<f64>::zeros((TOY_FEATURE_DIM, TOY_WINDOW));
        for row in 0..TOY_FEATURE_DIM {
            for col in 0..TOY_WINDOW {
                m[[row, col]] = rng.random_range(-1.0..1.0);
            }
        }
        m
    })
}

/// Extract frame-level features.
///
/// Only the toy encoder runs in-process. External encoders must come in as
/// feature files (see [`FeatureDirSource`]); asking for one here is an error,
/// never a fallback.
pub fn encode_frames(spec: &EncoderSpec, wave: &Waveform) -> Result<FrameFeatures> {
    match spec.kind {
        EncoderKind::External => Err(Error::ExternalEncoderUnavailable {
            encoder_id: spec.encoder_id.clone(),
        }),
        EncoderKind::Toy => {
            if wave.sample_rate_hz != EXPECTED_SAMPLE_RATE {
                return Err(Error::SampleRateMismatch {
                    expected: EXPECTED_SAMPLE_RATE,
                    got: wave.sample_rate_hz,
                });
            }
            let n = wave.samples.len();
            if n < TOY_WINDOW {
                return Err(Error::InvalidWaveform(format!(
                    "waveform of {n} samples is shorter than one 25 ms window ({TOY_WINDOW})"
                )));
            }
            let frames = (n - TOY_WINDOW) / TOY_HOP + 1;
            let proj = toy_projection();
            let mut values = Array2::<f64>::zeros((frames, TOY_FEATURE_DIM));
            for t in 0..frames {
                let start = t * TOY_HOP;
                let window = ArrayView1::from(&wave.samples[start..start + TOY_WINDOW]);
                let projected = proj.dot(&window);
                let mut row = values.row_mut(t);
                for (out, p) in row.iter_mut().zip(projected.iter()) {
                    *out = (1.0 + p.abs()).ln();
                }
            }
            FrameFeatures::new(values, vec![true; frames], spec.encoder_id.clone())
        }
    }
}

// ---------------------------------------------------------------------------
// Feature files: the adapter surface for external encoders.
//
// Text format (.tsv), one file per utterance:
//   line 1:   ssl-frames<TAB>1<TAB>{encoder_id}<TAB>{T}<TAB>{D}
//   lines 2+: T rows of D tab-separated f64 values, printed with Rust's
//             shortest round-trip formatting (parse returns the same bits).
// Binary format (.bin):
//   magic "SSLF" | u16 version=1 | u16 id_len | id bytes (UTF-8)
//   | u32 T | u32 D | T*D f64 little-endian, row-major.
// All frames in a feature file are valid.
// ---------------------------------------------------------------------------

const FEATURE_MAGIC: &[u8; 4] = b"SSLF";
const FEATURE_TEXT_TAG: &str = "ssl-frames";

fn feature_err(path: &Path, message: impl Into<String>) -> Error {
    Error::FeatureFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_frames_text(path: &Path, frames: &FrameFeatures) -> Result<()> {
    if frames.encoder_id.contains(['\t', '\n']) {
        return Err(feature_err(path, "encoder_id may not contain tabs or newlines"));
    }
    let mut out = format!(
        "{FEATURE_TEXT_TAG}\t1\t{}\t{}\t{}\n",
        frames.encoder_id,
        frames.frame_count(),
        frames.feature_dim()
    );
    for row in frames.values.axis_iter(Axis(0)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_frames_binary(path: &Path, frames: &FrameFeatures) -> Result<()> {
    let id = frames.encoder_id.as_bytes();
    if id.len() > u16::MAX as usize {
        return Err(feature_err(path, "encoder_id too long"));
    }
    let t = frames.frame_count();
    let d = frames.feature_dim();
    let mut out = Vec::with_capacity(4 + 2 + 2 + id.len() + 8 + t * d * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in frames.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a feature file, sniffing binary vs text by the leading magic bytes.
pub fn read_frames(path: &Path) -> Result<FrameFeatures> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        read_frames_binary(path, &bytes)
    } else {
        read_frames_text(path, &bytes)
    }
}

fn read_frames_binary(path: &Path, bytes: &[u8]) -> Result<FrameFeatures> {
    let need = |cond: bool, msg: &str| -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(feature_err(path, msg))
        }
    };
    need(bytes.len() >= 8, "truncated header")?;
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    need(version == 1, "unsupported feature file version")?;
    let id_len = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as usize;
    need(bytes.len() >= 8 + id_len + 8, "truncated header")?;
    let encoder_id = std::str::from_utf8(&bytes[8..8 + id_len])
        .map_err(|_| feature_err(path, "encoder_id is not UTF-8"))?
        .to_string();
    let mut pos = 8 + id_len;
    let t = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    need(bytes.len() == pos + t * d * 8, "payload size mismatch")?;
    let mut data = Vec::with_capacity(t * d);
    for chunk in bytes[pos..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let values = Array2::from_shape_vec((t, d), data)
        .map_err(|e| feature_err(path, format!("bad shape: {e}")))?;
    FrameFeatures::new(values, vec![true; t], encoder_id)
}

fn read_frames_text(path: &Path, bytes: &[u8]) -> Result<FrameFeatures> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| feature_err(path, "not UTF-8"))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| feature_err(path, "empty file"))?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() != 5 || fields[0] != FEATURE_TEXT_TAG || fields[1] != "1" {
        return Err(feature_err(path, "bad header; expected ssl-frames\\t1\\t<id>\\t<T>\\t<D>"));
    }
    let encoder_id = fields[2].to_string();
    let t: usize = fields[3]
        .parse()
        .map_err(|_| feature_err(path, "bad frame count"))?;
    let d: usize = fields[4]
        .parse()
        .map_err(|_| feature_err(path, "bad feature dim"))?;

    let mut data = Vec::with_capacity(t * d);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut cols = 0;
        for cell in line.split('\t') {
            let v: f64 = cell
                .parse()
                .map_err(|_| feature_err(path, format!("row {}: bad float `{cell}`", i + 1)))?;
            data.push(v);
            cols += 1;
        }
        if cols != d {
            return Err(feature_err(path, format!("row {}: {cols} columns, expected {d}", i + 1)));
        }
    }
    if rows != t {
        return Err(feature_err(path, format!("{rows} rows, header promised {t}")));
    }
    let values = Array2::from_shape_vec((t, d), data)
        .map_err(|e| feature_err(path, format!("bad shape: {e}")))?;
    FrameFeatures::new(values, vec![true; t], encoder_id)
}

/// Where frame features for an utterance come from.
pub trait FrameSource: Sync {
    fn encoder_id(&self) -> &str;
    fn frames(&self, audio_path: &Path, utterance_id: &str) -> Result<FrameFeatures>;

    fn embedding(&self, audio_path: &Path, utterance_id: &str) -> Result<UtteranceEmbedding> {
        mean_pool(&self.frames(audio_path, utterance_id)?)
    }
}

/// Runs the built-in toy encoder on WAV files referenced by the manifest.
#[derive(Debug, Clone)]
pub struct ToyEncoderSource {
    spec: EncoderSpec,
}

impl ToyEncoderSource {
    pub fn new() -> Self {
        ToyEncoderSource {
            spec: registry_lookup(TOY_ENCODER_ID).expect("toy encoder is bundled"),
        }
    }
}

impl Default for ToyEncoderSource {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameSource for ToyEncoderSource {
    fn encoder_id(&self) -> &str {
        TOY_ENCODER_ID
    }

    fn frames(&self, audio_path: &Path, _utterance_id: &str) -> Result<FrameFeatures> {
        let wave = Waveform::from_wav(audio_path)?;
        encode_frames(&self.spec, &wave)
    }
}

/// Serves precomputed feature files from a directory, one `{id}.bin` or
/// `{id}.tsv` per utterance. This is the route for external SSL encoders
/// (offline extraction, GPU hosts, other-language extractors).
#[derive(Debug, Clone)]
pub struct FeatureDirSource {
    dir: PathBuf,
    encoder_id: String,
}

impl FeatureDirSource {
    pub fn new(dir: impl Into<PathBuf>, encoder_id: impl Into<String>) -> Self {
        FeatureDirSource {
            dir: dir.into(),
            encoder_id: encoder_id.into(),
        }
    }
}

impl FrameSource for FeatureDirSource {
    fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    fn frames(&self, _audio_path: &Path, utterance_id: &str) -> Result<FrameFeatures> {
        let bin = self.dir.join(format!("{utterance_id}.bin"));
        let tsv = self.dir.join(format!("{utterance_id}.tsv"));
        let path = if bin.exists() {
            bin
        } else if tsv.exists() {
            tsv
        } else {
            return Err(feature_err(
                &bin,
                format!("no feature file for `{utterance_id}` (tried .bin and .tsv)"),
            ));
        };
        let frames = read_frames(&path)?;
        if frames.encoder_id != self.encoder_id {
            return Err(Error::EncoderMismatch {
                checkpoint: self.encoder_id.clone(),
                features: frames.encoder_id,
            });
        }
        Ok(frames)
    }
}

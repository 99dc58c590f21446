//! Synthetic fixture generator: toy-encoder-compatible waveforms with
//! targets linear in the toy embedding plus Gaussian noise, so the whole
//! pipeline runs end to end without any licensed corpus.
//!
//! Two manifests come out: a clinical-style one on the 1-7 severity scale
//! (train pool + test, validation left to the split planner) and a
//! quality-style one on the 1-5 MOS scale with pre-marked train/validation/
//! test splits. Both share the same true weight vector in severity space, so
//! transfer from the quality domain genuinely helps.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_manifest, CorpusTag, ScoreScale, SplitTag, UtteranceRecord,
};
use crate::encoder::{encode_frames, mean_pool, registry_lookup, Waveform, TOY_ENCODER_ID};
use crate::error::{Error, Result};
use crate::scale::mos_to_severity;
use crate::wav::write_wav;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    /// Clinical train pool (the split planner draws validation out of it).
    pub sap_train: usize,
    pub sap_test: usize,
    pub quali_train: usize,
    pub quali_validation: usize,
    pub quali_test: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub sap_dimension: String,
    pub quali_dimension: String,
    /// Round clinical scores to integer levels (for histogram demos); the
    /// regression fixtures keep them continuous.
    pub round_scores: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            sap_train: 2200,
            sap_test: 200,
            quali_train: 2200,
            quali_validation: 200,
            quali_test: 200,
            noise_sigma: 0.1,
            seed: 7,
            sap_dimension: "naturalness".into(),
            quali_dimension: "overall_quality".into(),
            round_scores: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSummary {
    pub sap_manifest: PathBuf,
    pub quali_manifest: PathBuf,
    pub wav_dir: PathBuf,
    pub n_sap: usize,
    pub n_quali: usize,
    /// Severity target = weight_scale * sum(embedding) + offset + noise.
    pub weight_scale: f64,
    pub offset: f64,
}

struct RawUtterance {
    wav_name: String,
    samples: Vec<f64>,
    duration_s: f64,
    embedding_sum: f64,
}

fn synth_utterance(rng: &mut ChaCha8Rng, wav_name: String) -> Result<RawUtterance> {
    // Duration and gain vary per utterance so embeddings spread out.
    let n_samples = rng.random_range(7_000..=11_000);
    let gain = rng.random_range(0.05..0.9);
    let limit = (gain * 32768.0) as i32;
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| rng.random_range(-limit..=limit) as f64 / 32768.0)
        .collect();

    let wave = Waveform::new(samples.clone(), 16_000)?;
    let spec = registry_lookup(TOY_ENCODER_ID)?;
    let embedding = mean_pool(&encode_frames(&spec, &wave)?)?;
    Ok(RawUtterance {
        wav_name,
        duration_s: wave.duration_s(),
        samples,
        embedding_sum: embedding.values.sum(),
    })
}

/// Generate the fixture under `dir` (created if missing; the wav files go to
/// `dir/wav/`). Deterministic in `config.seed`.
pub fn generate_fixture(dir: &Path, config: &FixtureConfig) -> Result<FixtureSummary> {
    if config.sap_train + config.sap_test == 0 {
        return Err(Error::Fixture("no clinical utterances requested".into()));
    }
    if config.noise_sigma.is_nan() || config.noise_sigma < 0.0 {
        return Err(Error::Fixture(format!(
            "noise_sigma {} must be nonnegative",
            config.noise_sigma
        )));
    }
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_sap = config.sap_train + config.sap_test;
    let n_quali = config.quali_train + config.quali_validation + config.quali_test;

    let mut sap_raw = Vec::with_capacity(n_sap);
    for i in 0..n_sap {
        sap_raw.push(synth_utterance(&mut rng, format!("sap-{i:05}"))?);
    }
    let mut quali_raw = Vec::with_capacity(n_quali);
    for i in 0..n_quali {
        quali_raw.push(synth_utterance(&mut rng, format!("qs-{i:05}"))?);
    }

    // Rescale the embedding sums so severity targets span [1.5, 6.5]; the
    // 0.5 margin keeps noise inside the scale bounds.
    let sums = sap_raw
        .iter()
        .chain(&quali_raw)
        .map(|u| u.embedding_sum);
    let lo = sums.clone().fold(f64::INFINITY, f64::min);
    let hi = sums.fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() || !lo.is_finite() || hi <= lo {
        return Err(Error::Fixture("degenerate embedding spread".into()));
    }
    let weight_scale = 5.0 / (hi - lo);
    let offset = 1.5 - weight_scale * lo;

    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Fixture(e.to_string()))?;
    let severity_target = |sum: f64, rng: &mut ChaCha8Rng| -> f64 {
        let eps = if config.noise_sigma > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        };
        let t = weight_scale * sum + offset + eps;
        let t = t.clamp(1.0, 7.0);
        if config.round_scores {
            t.round()
        } else {
            t
        }
    };

    let mos_map = mos_to_severity().invert();

    let mut sap_records = Vec::with_capacity(n_sap);
    for (i, raw) in sap_raw.iter().enumerate() {
        let path = wav_dir.join(format!("{}.wav", raw.wav_name));
        write_wav(&path, &raw.samples, 16_000)?;
        let split = if i < config.sap_train {
            SplitTag::Train
        } else {
            SplitTag::Test
        };
        sap_records.push(UtteranceRecord {
            id: raw.wav_name.clone(),
            audio_path: PathBuf::from("wav").join(format!("{}.wav", raw.wav_name)),
            corpus: CorpusTag::Sap,
            dimension: config.sap_dimension.clone(),
            score: severity_target(raw.embedding_sum, &mut rng),
            scale: ScoreScale::SEVERITY,
            split,
            duration_s: Some(raw.duration_s),
        });
    }

    let mut quali_records = Vec::with_capacity(n_quali);
    for (i, raw) in quali_raw.iter().enumerate() {
        let path = wav_dir.join(format!("{}.wav", raw.wav_name));
        write_wav(&path, &raw.samples, 16_000)?;
        let split = if i < config.quali_train {
            SplitTag::Train
        } else if i < config.quali_train + config.quali_validation {
            SplitTag::Validation
        } else {
            SplitTag::Test
        };
        // Same severity-space relation, stored on the MOS scale.
        let severity = severity_target(raw.embedding_sum, &mut rng);
        quali_records.push(UtteranceRecord {
            id: raw.wav_name.clone(),
            audio_path: PathBuf::from("wav").join(format!("{}.wav", raw.wav_name)),
            corpus: CorpusTag::Quali,
            dimension: config.quali_dimension.clone(),
            score: mos_map.apply(severity)?,
            scale: ScoreScale::MOS,
            split,
            duration_s: Some(raw.duration_s),
        });
    }

    let sap_manifest = dir.join("sap.jsonl");
    write_manifest(&sap_manifest, &sap_records)?;
    let quali_manifest = dir.join("quali.jsonl");
    write_manifest(&quali_manifest, &quali_records)?;

    let summary = FixtureSummary {
        sap_manifest,
        quali_manifest,
        wav_dir,
        n_sap,
        n_quali,
        weight_scale,
        offset,
    };
    let meta = dir.join("fixture.json");
    let body = serde_json::to_string_pretty(&serde_json::json!({
        "config": config,
        "summary": &summary,
    }))
    .expect("meta serializes");
    std::fs::write(&meta, body).map_err(|e| Error::io(&meta, e))?;
    Ok(summary)
}

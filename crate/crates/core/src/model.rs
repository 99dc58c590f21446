//! The utterance-level regression head: a two-layer feed-forward network
//! with ReLU and inverted dropout between the layers, trained with MSE.
//!
//! Gradients are exact analytic gradients of the batch-mean squared error,
//! honoring the dropout mask the forward pass used.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
}

impl HeadConfig {
    pub const DEFAULT_HIDDEN_DIM: usize = 256;
    pub const DEFAULT_DROPOUT: f64 = 0.1;

    pub fn new(input_dim: usize) -> Self {
        HeadConfig {
            input_dim,
            hidden_dim: Self::DEFAULT_HIDDEN_DIM,
            dropout_rate: Self::DEFAULT_DROPOUT,
        }
    }

    pub fn with_hidden_dim(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_dropout(mut self, dropout_rate: f64) -> Self {
        self.dropout_rate = dropout_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidHeadConfig(format!(
                "dims must be positive, got input {} hidden {}",
                self.input_dim, self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidHeadConfig(format!(
                "dropout_rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Head weights: hidden x input first layer, then a linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl HeadParams {
    pub fn zeros(config: &HeadConfig) -> Self {
        HeadParams {
            w1: Array2::zeros((config.hidden_dim, config.input_dim)),
            b1: Array1::zeros(config.hidden_dim),
            w2: Array1::zeros(config.hidden_dim),
            b2: 0.0,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// All parameters in a fixed order: w1 row-major, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(std::iter::once(&self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }

    /// SHA-256 over dims and the little-endian parameter bytes in `iter` order.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.hidden_dim() as u64).to_le_bytes());
        hasher.update((self.input_dim() as u64).to_le_bytes());
        for v in self.iter() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Whether dropout is live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// One scored utterance. Scores are unclipped so correlation metrics stay
/// undistorted; [`Prediction::clipped`] is the display view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub score: f64,
}

impl Prediction {
    pub fn clipped(&self, scale: &crate::corpus::ScoreScale) -> f64 {
        self.score.clamp(scale.min_score, scale.max_score)
    }
}

/// Initialize head weights uniformly in +/- 1/sqrt(fan_in), biases at zero.
pub fn init_head(config: &HeadConfig, seed: u64) -> Result<HeadParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = HeadParams::zeros(config);
    let bound1 = 1.0 / (config.input_dim as f64).sqrt();
    for v in params.w1.iter_mut() {
        *v = rng.random_range(-bound1..bound1);
    }
    let bound2 = 1.0 / (config.hidden_dim as f64).sqrt();
    for v in params.w2.iter_mut() {
        *v = rng.random_range(-bound2..bound2);
    }
    Ok(params)
}

/// Inverted-dropout keep/scale vector for one sample: 0 where dropped,
/// 1/(1-p) where kept. With rate 0 the vector is skipped entirely so train
/// mode equals eval mode bit for bit.
fn dropout_scale(hidden_dim: usize, rate: f64, sample_seed: u64) -> Option<Array1<f64>> {
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    Some(Array1::from_iter(
        (0..hidden_dim).map(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 }),
    ))
}

fn sample_seed(dropout_seed: u64, index: usize) -> u64 {
    dropout_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct ForwardParts {
    pre_activation: Array1<f64>,
    hidden: Array1<f64>,
    output: f64,
}

fn forward_parts(
    params: &HeadParams,
    x: &Array1<f64>,
    scale: Option<&Array1<f64>>,
) -> Result<ForwardParts> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let pre_activation = params.w1.dot(x) + &params.b1;
    let mut hidden = pre_activation.mapv(|a| a.max(0.0));
    if let Some(s) = scale {
        hidden *= s;
    }
    let output = params.w2.dot(&hidden) + params.b2;
    Ok(ForwardParts {
        pre_activation,
        hidden,
        output,
    })
}

/// Score one embedding. Eval mode is dropout-free; train mode applies
/// inverted dropout to the hidden activations, deterministic in
/// `dropout_seed`.
pub fn forward(
    params: &HeadParams,
    config: &HeadConfig,
    x: &Array1<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<f64> {
    let scale = match mode {
        Mode::Eval => None,
        Mode::Train => dropout_scale(params.hidden_dim(), config.dropout_rate, dropout_seed),
    };
    Ok(forward_parts(params, x, scale.as_ref())?.output)
}

/// Batch-mean squared error and its exact gradients.
///
/// In train mode each sample gets its own dropout mask derived from
/// (`dropout_seed`, sample index); the gradients honor those masks.
pub fn loss_and_grad(
    params: &HeadParams,
    config: &HeadConfig,
    batch: &[(&Array1<f64>, f64)],
    mode: Mode,
    dropout_seed: u64,
) -> Result<(f64, HeadParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = HeadParams {
        w1: Array2::zeros(params.w1.raw_dim()),
        b1: Array1::zeros(params.b1.raw_dim()),
        w2: Array1::zeros(params.w2.raw_dim()),
        b2: 0.0,
    };

    for (index, (x, target)) in batch.iter().enumerate() {
        let scale = match mode {
            Mode::Eval => None,
            Mode::Train => dropout_scale(
                params.hidden_dim(),
                config.dropout_rate,
                sample_seed(dropout_seed, index),
            ),
        };
        let parts = forward_parts(params, x, scale.as_ref())?;
        let err = parts.output - target;
        loss += err * err * inv_b;

        let d_out = 2.0 * err * inv_b;
        grads.b2 += d_out;
        grads.w2.scaled_add(d_out, &parts.hidden);

        // Back through dropout and ReLU.
        let mut d_pre = params.w2.mapv(|w| w * d_out);
        if let Some(s) = &scale {
            d_pre *= s;
        }
        for (dp, &a) in d_pre.iter_mut().zip(parts.pre_activation.iter()) {
            if a <= 0.0 {
                *dp = 0.0;
            }
        }

        grads.b1 += &d_pre;
        for (mut row, &g) in grads.w1.rows_mut().into_iter().zip(d_pre.iter()) {
            row.scaled_add(g, x);
        }
    }

    Ok((loss, grads))
}

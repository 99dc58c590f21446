//! Affine alignment between rating scales.
//!
//! The map is the unique interval-to-interval affine bijection sending the
//! source's best-rated endpoint to the target's best-rated endpoint and
//! worst to worst. For MOS (1-5, higher better) onto severity (1-7, higher
//! worse) that is `s = 8.5 - 1.5 * m`.

use serde::{Deserialize, Serialize};

use crate::corpus::ScoreScale;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineScaleMap {
    pub source: ScoreScale,
    pub target: ScoreScale,
    pub slope: f64,
    pub intercept: f64,
}

/// Derive the polarity-honoring affine map between two scales.
pub fn derive_map(source: ScoreScale, target: ScoreScale) -> Result<AffineScaleMap> {
    source.validate()?;
    target.validate()?;
    let slope = (target.best() - target.worst()) / (source.best() - source.worst());
    let intercept = target.best() - slope * source.best();
    Ok(AffineScaleMap {
        source,
        target,
        slope,
        intercept,
    })
}

impl AffineScaleMap {
    /// Map a score from the source scale onto the target scale.
    ///
    /// The range check tolerates a relative 1e-9 overshoot so scores produced
    /// by the opposite map's rounding still pass.
    pub fn apply(&self, score: f64) -> Result<f64> {
        let tol = 1e-9 * (self.source.min_score.abs() + self.source.max_score.abs() + 1.0);
        if !score.is_finite()
            || score < self.source.min_score - tol
            || score > self.source.max_score + tol
        {
            return Err(Error::ScoreOutOfRange {
                score,
                min: self.source.min_score,
                max: self.source.max_score,
            });
        }
        Ok(self.slope * score + self.intercept)
    }

    /// The inverse map; composing the two is the identity on the source interval.
    pub fn invert(&self) -> AffineScaleMap {
        AffineScaleMap {
            source: self.target,
            target: self.source,
            slope: 1.0 / self.slope,
            intercept: -self.intercept / self.slope,
        }
    }

    /// True when source and target rank scores in the same direction.
    pub fn preserves_order(&self) -> bool {
        self.slope > 0.0
    }
}

/// The map used for transfer supervision: MOS onto the severity scale.
pub fn mos_to_severity() -> AffineScaleMap {
    derive_map(ScoreScale::MOS, ScoreScale::SEVERITY).expect("bundled scales are valid")
}

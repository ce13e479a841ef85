//! Message importance (KL divergence), action-distribution entropy and
//! value of information. All logarithms are base 2.

use serde::{Deserialize, Serialize};

use crate::channel::Latency;
use crate::error::{Error, Result};

/// Upper bound returned by [`kl_importance`] when the "without" distribution
/// assigns zero mass to an action the "with" distribution can take.
pub const KL_CAP_BITS: f64 = 30.0;

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability vector over a discrete action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionDistribution {
    probabilities: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Domain("empty action distribution".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain(format!(
                "action probabilities must be finite and >= 0: {probabilities:?}"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("action probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, action: usize) -> Self {
        let mut probabilities = vec![0.0; n];
        probabilities[action] = 1.0;
        Self { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Inverse-CDF sample from a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left u beyond the accumulated mass; take the last
        // action with positive probability.
        self.probabilities
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probabilities.len() - 1)
    }
}

/// KL importance with a flag for support mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Importance {
    pub bits: f64,
    /// The divergence was infinite and has been replaced by [`KL_CAP_BITS`].
    pub capped: bool,
}

/// `D_KL(with || without)` in bits.
pub fn kl_importance(
    with_message: &ActionDistribution,
    without_message: &ActionDistribution,
) -> Result<Importance> {
    if with_message.len() != without_message.len() {
        return Err(Error::Domain(format!(
            "KL over different action sets ({} vs {})",
            with_message.len(),
            without_message.len()
        )));
    }
    let mut bits = 0.0;
    for (&p, &q) in with_message.probabilities.iter().zip(&without_message.probabilities) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(Importance {
                bits: KL_CAP_BITS,
                capped: true,
            });
        }
        bits += p * (p / q).log2();
    }
    // Terms can cancel to a tiny negative value when the distributions are
    // equal up to rounding.
    Ok(Importance {
        bits: bits.clamp(0.0, KL_CAP_BITS),
        capped: false,
    })
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(dist: &ActionDistribution) -> f64 {
    let h: f64 = dist
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.clamp(0.0, (dist.len() as f64).log2())
}

/// Importance per second of latency; an undeliverable message has zero value.
pub fn voi(importance: f64, latency: Latency) -> Result<f64> {
    match latency {
        Latency::Undeliverable => Ok(0.0),
        Latency::Finite(t) if t > 0.0 => Ok(importance / t),
        Latency::Finite(t) => Err(Error::Domain(format!("VoI needs positive latency, got {t}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiRecord {
    pub importance: f64,
    pub latency: f64,
    pub voi: f64,
}

impl VoiRecord {
    pub fn new(importance: f64, latency: f64) -> Result<Self> {
        let voi = voi(importance, Latency::Finite(latency))?;
        Ok(Self {
            importance,
            latency,
            voi,
        })
    }
}

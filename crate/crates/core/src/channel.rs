//! Point-to-point wireless link model: distance-dependent path loss,
//! Shannon rate under a (bandwidth, power) allocation, and the resulting
//! message latency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances are clamped to at least this many meters before computing path
/// loss, so overlapping agents do not produce a negative-dB blow-up.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Relative slack allowed on budget constraints.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Everything the rate formula needs about one directed link besides the
/// allocation itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub sender_id: usize,
    pub recipient_id: usize,
    /// Meters, already floored at [`MIN_DISTANCE_M`].
    pub distance: f64,
    pub path_loss_exponent: f64,
    /// dB.
    pub path_loss_offset: f64,
    /// W/Hz.
    pub noise_density: f64,
}

impl LinkState {
    pub fn new(
        sender_id: usize,
        recipient_id: usize,
        distance: f64,
        path_loss_exponent: f64,
        path_loss_offset: f64,
        noise_density: f64,
    ) -> Result<Self> {
        if !(noise_density > 0.0) {
            return Err(Error::Domain(format!("noise density must be > 0, got {noise_density}")));
        }
        if !(path_loss_exponent >= 0.0) {
            return Err(Error::Domain(format!(
                "path loss exponent must be >= 0, got {path_loss_exponent}"
            )));
        }
        if !distance.is_finite() || distance < 0.0 {
            return Err(Error::Domain(format!("distance must be finite and >= 0, got {distance}")));
        }
        Ok(Self {
            sender_id,
            recipient_id,
            distance: distance.max(MIN_DISTANCE_M),
            path_loss_exponent,
            path_loss_offset,
            noise_density,
        })
    }

    /// Path loss of this link in dB.
    pub fn path_loss(&self) -> f64 {
        10.0 * self.path_loss_exponent * self.distance.log10() + self.path_loss_offset
    }

    pub fn rate(&self, bandwidth: f64, power: f64) -> f64 {
        shannon_rate(bandwidth, power, self.path_loss(), self.noise_density)
    }
}

/// Per-recipient bandwidth (Hz) and power (W) under joint budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub bandwidth: Vec<f64>,
    pub power: Vec<f64>,
    pub bandwidth_budget: f64,
    pub power_budget: f64,
}

impl ResourceAllocation {
    pub fn len(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidth.is_empty()
    }

    /// Checks non-negativity and both budget constraints within
    /// [`BUDGET_TOLERANCE`] relative slack.
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth.len() != self.power.len() {
            return Err(Error::Domain(format!(
                "allocation has {} bandwidth entries but {} power entries",
                self.bandwidth.len(),
                self.power.len()
            )));
        }
        let bad = |v: &f64| !v.is_finite() || *v < 0.0;
        if self.bandwidth.iter().any(bad) || self.power.iter().any(bad) {
            return Err(Error::Domain("allocation entries must be finite and >= 0".into()));
        }
        let b: f64 = self.bandwidth.iter().sum();
        let p: f64 = self.power.iter().sum();
        if b > self.bandwidth_budget * (1.0 + BUDGET_TOLERANCE) + BUDGET_TOLERANCE {
            return Err(Error::Domain(format!(
                "bandwidth {b} exceeds budget {}",
                self.bandwidth_budget
            )));
        }
        if p > self.power_budget * (1.0 + BUDGET_TOLERANCE) + BUDGET_TOLERANCE {
            return Err(Error::Domain(format!("power {p} exceeds budget {}", self.power_budget)));
        }
        Ok(())
    }
}

/// `10 * exponent * log10(distance) + offset`, in dB, so exponent 2 is free
/// space.
pub fn path_loss(distance: f64, exponent: f64, offset: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    Ok(10.0 * exponent * distance.log10() + offset)
}

/// Achievable rate in bits/s: `B log2(1 + P / (10^(PL/10) B N0))`.
///
/// A link with zero bandwidth or zero power carries nothing and returns 0,
/// rather than the analytic `B -> 0` limit.
pub fn shannon_rate(bandwidth: f64, power: f64, path_loss_db: f64, noise_density: f64) -> f64 {
    debug_assert!(noise_density > 0.0);
    if bandwidth <= 0.0 || power <= 0.0 {
        return 0.0;
    }
    let gain = 10f64.powf(path_loss_db / 10.0);
    let snr = power / (gain * bandwidth * noise_density);
    bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Message latency; a zero-rate link never delivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Latency {
    Finite(f64),
    Undeliverable,
}

impl Latency {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Latency::Finite(s) => Some(s),
            Latency::Undeliverable => None,
        }
    }

    pub fn is_deliverable(self) -> bool {
        matches!(self, Latency::Finite(_))
    }
}

/// `bits / rate`.
pub fn latency(message_bits: f64, rate: f64) -> Result<Latency> {
    if !(message_bits > 0.0) {
        return Err(Error::Domain(format!(
            "message size must be positive, got {message_bits}"
        )));
    }
    if rate <= 0.0 {
        return Ok(Latency::Undeliverable);
    }
    Ok(Latency::Finite(message_bits / rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(path_loss(10.0, 2.0, 0.0).unwrap(), 20.0);
        assert!((path_loss(10.0, 3.67, 0.0).unwrap() - 36.7).abs() < 1e-12);
        assert!((path_loss(100.0, 2.0, 40.0).unwrap() - 80.0).abs() < 1e-12);
        assert!(path_loss(0.0, 2.0, 0.0).is_err());
        assert!(path_loss(-3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn shannon_rate_examples() {
        assert!((shannon_rate(1.0, 1.0, 0.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((shannon_rate(1.0, 3.0, 0.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((shannon_rate(1.0, 10.0, 10.0, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(shannon_rate(0.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(shannon_rate(1.0, 0.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn latency_examples() {
        assert_eq!(latency(100.0, 50.0).unwrap(), Latency::Finite(2.0));
        assert_eq!(latency(100.0, 0.0).unwrap(), Latency::Undeliverable);
        assert_eq!(latency(64.0, 64.0).unwrap(), Latency::Finite(1.0));
        assert!(latency(0.0, 10.0).is_err());
    }

    #[test]
    fn link_state_floors_distance() {
        let link = LinkState::new(0, 1, 0.0, 2.0, 0.0, 1e-9).unwrap();
        assert_eq!(link.distance, MIN_DISTANCE_M);
        assert_eq!(link.path_loss(), 0.0);
        assert!(LinkState::new(0, 1, 5.0, 2.0, 0.0, 0.0).is_err());
        assert!(LinkState::new(0, 1, 5.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn allocation_validation() {
        let ok = ResourceAllocation {
            bandwidth: vec![1.0, 3.0],
            power: vec![0.5, 0.5],
            bandwidth_budget: 4.0,
            power_budget: 1.0,
        };
        assert!(ok.validate().is_ok());
        let over = ResourceAllocation {
            power: vec![0.6, 0.5],
            ..ok.clone()
        };
        assert!(over.validate().is_err());
        let negative = ResourceAllocation {
            bandwidth: vec![-1.0, 3.0],
            ..ok
        };
        assert!(negative.validate().is_err());
    }

    proptest! {
        #[test]
        fn rate_is_monotone(
            b in 0.0f64..1e4, db in 0.0f64..1e3,
            p in 0.0f64..10.0, dp in 0.0f64..5.0,
            pl in -20.0f64..120.0, dpl in 0.0f64..30.0,
            n0 in 1e-12f64..1e-3,
        ) {
            let base = shannon_rate(b, p, pl, n0);
            prop_assert!(shannon_rate(b + db, p, pl, n0) >= base * (1.0 - 1e-12));
            prop_assert!(shannon_rate(b, p + dp, pl, n0) >= base * (1.0 - 1e-12));
            prop_assert!(shannon_rate(b, p, pl + dpl, n0) <= base * (1.0 + 1e-12));
        }

        #[test]
        fn rate_is_degree_one_homogeneous(
            b in 1e-3f64..1e4, p in 1e-6f64..10.0, pl in 0.0f64..100.0, t in 1e-3f64..1e3,
        ) {
            let n0 = 1e-9;
            let lhs = shannon_rate(t * b, t * p, pl, n0);
            let rhs = t * shannon_rate(b, p, pl, n0);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn latency_strictly_decreasing_in_rate(bits in 1.0f64..1e4, r in 1e-3f64..1e6, dr in 1e-3f64..1e3) {
            let a = latency(bits, r).unwrap().seconds().unwrap();
            let b = latency(bits, r + dr).unwrap().seconds().unwrap();
            prop_assert!(b < a);
        }
    }
}

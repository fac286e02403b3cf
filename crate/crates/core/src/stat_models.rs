//! Empirical message drop and per-hop delay models.
//!
//! Drop probability is a quadratic function of the hop count between sender
//! and receiver, using the per-protocol coefficient table below. Per-hop delay
//! is a truncated Gaussian in normalized units (mean relocated to 1.0); the
//! delay of a message, in whole pattern presentations, is the sum of its
//! per-hop delays divided by the wait window `t_wait`.

use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

/// Below this normalizer the truncation window holds no usable mass.
pub const DEGENERATE_TRUNCATION_TOL: f64 = 1e-12;

/// Range of the drop-form intercept used by [`DropModel::random`].
pub const RANDOM_DELTA0_RANGE: (f64, f64) = (-1.0, 11.0);
/// Range of the drop-form slope used by [`DropModel::random`].
pub const RANDOM_DELTA1_RANGE: (f64, f64) = (0.013, 0.09);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("hop count must be at least 1")]
    InvalidHopCount,
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("truncation window [{a}, {b}] carries no probability mass (normalizer {mass:e})")]
    DegenerateTruncation { a: f64, b: f64, mass: f64 },
}

/// One row of the routing-protocol coefficient table.
///
/// `beta0`/`beta1` are the delivery-vs-node-count regression coefficients;
/// `delta0`/`delta1` the corresponding drop-vs-squared-hop-count form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolPreset {
    pub name: &'static str,
    pub beta0: f64,
    pub beta1: f64,
    pub delta0: f64,
    pub delta1: f64,
}

pub const PROTOCOL_PRESETS: [ProtocolPreset; 10] = [
    ProtocolPreset { name: "EAR", beta0: 100.82, beta1: -0.0107, delta0: -0.82, delta1: 0.043 },
    ProtocolPreset { name: "GBR", beta0: 94.50, beta1: -0.1130, delta0: 5.5, delta1: 0.45 },
    ProtocolPreset { name: "BVR", beta0: 94.44, beta1: -0.0760, delta0: 5.6, delta1: 0.076 },
    ProtocolPreset { name: "QoS", beta0: 97.00, beta1: -0.0980, delta0: 3.0, delta1: 0.049 },
    ProtocolPreset { name: "Speed", beta0: 97.40, beta1: -0.0840, delta0: 2.6, delta1: 0.042 },
    ProtocolPreset { name: "LBAR", beta0: 95.79, beta1: -0.0198, delta0: 4.21, delta1: 0.020 },
    ProtocolPreset { name: "LAR", beta0: 92.57, beta1: -0.0154, delta0: 7.43, delta1: 0.015 },
    ProtocolPreset { name: "AODVjr", beta0: 90.57, beta1: -0.0154, delta0: 9.43, delta1: 0.015 },
    ProtocolPreset { name: "DD", beta0: 89.60, beta1: -0.0440, delta0: 10.4, delta1: 0.088 },
    ProtocolPreset {
        name: "OpportunisticFlooding",
        beta0: 100.0,
        beta1: 0.0,
        delta0: 0.0,
        delta1: 0.0,
    },
];

/// Hop-count based drop model: `p_drop = clamp((delta0 + delta1 * n_hops^2) / 100, 0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropModel {
    pub protocol: String,
    pub delta0: f64,
    pub delta1: f64,
}

impl DropModel {
    pub fn new(protocol: impl Into<String>, delta0: f64, delta1: f64) -> Result<Self, ModelError> {
        if !delta0.is_finite() || !delta1.is_finite() {
            return Err(ModelError::InvalidParameter("drop coefficients must be finite".into()));
        }
        Ok(Self { protocol: protocol.into(), delta0, delta1 })
    }

    /// Looks up a table row by name, ignoring case.
    pub fn preset(name: &str) -> Option<Self> {
        PROTOCOL_PRESETS
            .iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
            .map(|p| Self { protocol: p.name.to_string(), delta0: p.delta0, delta1: p.delta1 })
    }

    pub fn presets() -> Vec<Self> {
        PROTOCOL_PRESETS
            .iter()
            .map(|p| Self { protocol: p.name.to_string(), delta0: p.delta0, delta1: p.delta1 })
            .collect()
    }

    /// Converts delivery-vs-node-count coefficients into the drop form using
    /// the node/hop relation `n_nodes = tau * n_hops^2`.
    pub fn from_delivery(protocol: impl Into<String>, beta0: f64, beta1: f64, tau: TopologyFactor) -> Self {
        Self { protocol: protocol.into(), delta0: 100.0 - beta0, delta1: -beta1 * tau.value() }
    }

    /// Draws coefficients uniformly from the ranges spanned by the table rows
    /// (GBR and opportunistic flooding excluded).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (lo0, hi0) = RANDOM_DELTA0_RANGE;
        let (lo1, hi1) = RANDOM_DELTA1_RANGE;
        let delta0 = open_uniform(rng, lo0, hi0);
        let delta1 = open_uniform(rng, lo1, hi1);
        Self { protocol: "random".to_string(), delta0, delta1 }
    }

    /// Unclamped value of the empirical formula.
    pub fn raw_drop_probability(&self, n_hops: u32) -> Result<f64, ModelError> {
        if n_hops < 1 {
            return Err(ModelError::InvalidHopCount);
        }
        let h = f64::from(n_hops);
        Ok((self.delta0 + self.delta1 * h * h) / 100.0)
    }

    pub fn drop_probability(&self, n_hops: u32) -> Result<f64, ModelError> {
        self.raw_drop_probability(n_hops).map(clamp_probability)
    }
}

/// Uniform draw from the open interval `(lo, hi)`.
fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = lo + (hi - lo) * rng.random::<f64>();
        if v > lo && v < hi {
            return v;
        }
    }
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Delivery ratio from the node-count regression, clamped to `[0, 1]`.
pub fn delivery_from_node_count(beta0: f64, beta1: f64, n_nodes: u32) -> f64 {
    clamp_probability((beta0 + beta1 * f64::from(n_nodes)) / 100.0)
}

/// Coefficient relating node count to squared hop count for a deployment shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyFactor(f64);

impl TopologyFactor {
    pub fn new(tau: f64) -> Result<Self, ModelError> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Self(tau))
        } else {
            Err(ModelError::InvalidParameter(format!("tau must be positive, got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `round(tau * n_hops^2)`, at least 1.
    pub fn nodes_from_hops(self, n_hops: u32) -> Result<u64, ModelError> {
        if n_hops < 1 {
            return Err(ModelError::InvalidHopCount);
        }
        let h = f64::from(n_hops);
        Ok(((self.0 * h * h + 0.5).floor() as u64).max(1))
    }
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper tail `1 - CDF`, accurate for large positive `z`.
fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Truncated-Gaussian per-hop delay model plus the wait window used to
/// quantize total delay into pattern presentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    /// Normalized wait window per pattern presentation.
    pub t_wait: f64,
    /// Milliseconds represented by one normalized delay unit.
    pub per_hop_delay_ms: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self { mu: 1.0, sigma: 0.6, a: 0.3, b: 5.0, t_wait: 1.0, per_hop_delay_ms: 65.0 }
    }
}

impl DelayModel {
    pub fn new(mu: f64, sigma: f64, a: f64, b: f64, t_wait: f64, per_hop_delay_ms: f64) -> Result<Self, ModelError> {
        let m = Self { mu, sigma, a, b, t_wait, per_hop_delay_ms };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all_finite = [self.mu, self.sigma, self.a, self.b, self.t_wait, self.per_hop_delay_ms]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ModelError::InvalidParameter("delay parameters must be finite".into()));
        }
        if !(self.a < self.mu && self.mu < self.b) {
            return Err(ModelError::InvalidParameter(format!(
                "need a < mu < b, got a={}, mu={}, b={}",
                self.a, self.mu, self.b
            )));
        }
        if self.sigma <= 0.0 {
            return Err(ModelError::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.t_wait <= 0.0 {
            return Err(ModelError::InvalidParameter(format!("t_wait must be positive, got {}", self.t_wait)));
        }
        if self.per_hop_delay_ms <= 0.0 {
            return Err(ModelError::InvalidParameter("per_hop_delay_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn with_t_wait(mut self, t_wait: f64) -> Result<Self, ModelError> {
        self.t_wait = t_wait;
        self.validate()?;
        Ok(self)
    }

    /// Sets `t_wait = theta * mu * l_max`.
    pub fn with_theta(self, theta: f64, l_max: f64) -> Result<Self, ModelError> {
        let t = wait_time(theta, &self, l_max)?;
        self.with_t_wait(t)
    }

    fn standardized_bounds(&self) -> (f64, f64) {
        ((self.a - self.mu) / self.sigma, (self.b - self.mu) / self.sigma)
    }

    /// Probability mass of the untruncated normal inside `[a, b]`.
    pub fn truncation_mass(&self) -> Result<f64, ModelError> {
        let (lo, hi) = self.standardized_bounds();
        let mass = if lo >= 0.0 {
            std_normal_sf(lo) - std_normal_sf(hi)
        } else {
            std_normal_cdf(hi) - std_normal_cdf(lo)
        };
        if mass < DEGENERATE_TRUNCATION_TOL {
            return Err(ModelError::DegenerateTruncation { a: self.a, b: self.b, mass });
        }
        Ok(mass)
    }

    /// Truncated-Gaussian density; zero outside `[a, b]`.
    pub fn pdf(&self, x: f64) -> Result<f64, ModelError> {
        let mass = self.truncation_mass()?;
        if x < self.a || x > self.b {
            return Ok(0.0);
        }
        Ok(std_normal_pdf((x - self.mu) / self.sigma) / self.sigma / mass)
    }

    pub fn cdf(&self, x: f64) -> Result<f64, ModelError> {
        let mass = self.truncation_mass()?;
        if x <= self.a {
            return Ok(0.0);
        }
        if x >= self.b {
            return Ok(1.0);
        }
        let (lo, _) = self.standardized_bounds();
        let z = (x - self.mu) / self.sigma;
        let below = if lo >= 0.0 {
            std_normal_sf(lo) - std_normal_sf(z)
        } else {
            std_normal_cdf(z) - std_normal_cdf(lo)
        };
        Ok((below / mass).clamp(0.0, 1.0))
    }

    /// Mean of the truncated distribution (not `mu` unless the window is symmetric).
    pub fn truncated_mean(&self) -> Result<f64, ModelError> {
        let mass = self.truncation_mass()?;
        let (lo, hi) = self.standardized_bounds();
        Ok(self.mu + self.sigma * (std_normal_pdf(lo) - std_normal_pdf(hi)) / mass)
    }

    /// Maps a uniform `u` in `[0, 1)` through the truncated inverse CDF.
    ///
    /// Works on the lower tail when `a` sits below the mean and on the upper
    /// tail otherwise, so windows far out in either tail stay accurate.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = self.standardized_bounds();
        let z = if lo >= 0.0 {
            let (qa, qb) = (std_normal_sf(lo), std_normal_sf(hi));
            let q = qa - u * (qa - qb);
            SQRT_2 * erfc_inv(2.0 * q)
        } else {
            let (pa, pb) = (std_normal_cdf(lo), std_normal_cdf(hi));
            let p = pa + u * (pb - pa);
            -SQRT_2 * erfc_inv(2.0 * p)
        };
        let x = self.mu + self.sigma * z;
        if x.is_nan() {
            self.mu
        } else {
            x.clamp(self.a, self.b)
        }
    }

    /// One per-hop delay draw; consumes exactly one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Upper bound on [`DelayModel::sample_delay`] for a path of `n_hops`.
    pub fn max_delay(&self, n_hops: u32) -> u64 {
        (f64::from(n_hops) * self.b / self.t_wait).floor() as u64
    }

    /// Quantizes a path's per-hop delays into whole presentations.
    pub fn delay_from_hops<I: IntoIterator<Item = f64>>(&self, n_hops: u32, per_hop: I) -> u64 {
        let total: f64 = per_hop.into_iter().sum();
        let d = (total / self.t_wait).floor() as u64;
        d.min(self.max_delay(n_hops))
    }

    /// Total delay in presentations for a message crossing `n_hops` hops.
    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R, n_hops: u32) -> Result<u64, ModelError> {
        if n_hops < 1 {
            return Err(ModelError::InvalidHopCount);
        }
        let draws: Vec<f64> = (0..n_hops).map(|_| self.sample(rng)).collect();
        Ok(self.delay_from_hops(n_hops, draws))
    }

    pub fn t_wait_ms(&self) -> f64 {
        self.t_wait * self.per_hop_delay_ms
    }
}

/// `t_wait = theta * mu * l_max`.
pub fn wait_time(theta: f64, model: &DelayModel, l_max: f64) -> Result<f64, ModelError> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(ModelError::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    if !(l_max.is_finite() && l_max >= 1.0) {
        return Err(ModelError::InvalidParameter(format!("l_max must be at least 1, got {l_max}")));
    }
    Ok(theta * model.mu * l_max)
}

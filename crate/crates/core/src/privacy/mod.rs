//! Clipping and Gaussian perturbation at release points, the metric-DP
//! accountant, ρ selection from released embeddings, and an attribute
//! inference attack used to probe what released embeddings leak.

mod accountant;
mod attack;
mod rho;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::ParamSet;

pub use accountant::{mdp_epsilon, per_node_epsilon, privacy_report, PrivacyReport, ReleaseHistory};
pub use attack::{aia_attack, induced_subgraph, sample_background, AttackConfig, AttackKnowledge, AttackResult};
pub use rho::{kth_neighbor_distances, nearest_rank, rho_percentiles};

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("invalid privacy parameter {name}={value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("need at least {needed} non-zero embeddings, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("no releases recorded")]
    NoReleases,
    #[error("embedding dimensions differ: {0} vs {1}")]
    RaggedEmbeddings(usize, usize),
    #[error("attack: {0}")]
    Attack(String),
}

/// Noise scales and clipping bounds applied when values leave a client or
/// the server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Std of the Gaussian added to each released embedding coordinate.
    pub sigma0: f64,
    /// Std of the Gaussian added to the aggregated parameters.
    pub sigma1: f64,
    /// Std of the Gaussian added to the aggregated gradient estimator.
    pub sigma2: f64,
    pub clip_embed: f64,
    pub clip_model: f64,
    pub delta: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma0: 0.0, sigma1: 0.0, sigma2: 0.0, clip_embed: 5.0, clip_model: 15.0, delta: 1e-4 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        for (name, value) in [("sigma0", self.sigma0), ("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(PrivacyError::InvalidParameter { name, value });
            }
        }
        for (name, value) in [("clip_embed", self.clip_embed), ("clip_model", self.clip_model)] {
            if !(value > 0.0) {
                return Err(PrivacyError::InvalidParameter { name, value });
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PrivacyError::InvalidParameter { name: "delta", value: self.delta });
        }
        Ok(())
    }
}

/// Scale `x` onto the L2 ball of radius `clip`.
pub fn clip_in_place(x: &mut [f64], clip: f64) {
    let n = crate::linalg::norm(x);
    if n > clip {
        let s = clip / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Add i.i.d. `N(0, sigma²)` to every coordinate. Draws nothing when `sigma == 0`.
pub fn add_gaussian<R: Rng + ?Sized>(x: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    for v in x {
        *v += normal.sample(rng);
    }
}

/// `x · min(1, clip/‖x‖)` plus Gaussian noise of scale `sigma`.
pub fn clip_and_noise<R: Rng + ?Sized>(x: &[f64], clip: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mut out = x.to_vec();
    clip_in_place(&mut out, clip);
    add_gaussian(&mut out, sigma, rng);
    out
}

/// Clip every tensor of `set` to Frobenius norm `clip`.
pub fn clip_tensors(set: &mut ParamSet, clip: f64) {
    for m in set.tensors_mut() {
        clip_in_place(m.as_mut_slice(), clip);
    }
}

pub fn noise_tensors<R: Rng + ?Sized>(set: &mut ParamSet, sigma: f64, rng: &mut R) {
    for m in set.tensors_mut() {
        add_gaussian(m.as_mut_slice(), sigma, rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn clip_rescales_long_vectors() {
        let mut rng = stream(0, Purpose::ReleaseNoise, 0, 0, 0);
        assert_eq!(clip_and_noise(&[3.0, 4.0], 2.5, 0.0, &mut rng), vec![1.5, 2.0]);
        assert_eq!(clip_and_noise(&[0.3, 0.4], 2.5, 0.0, &mut rng), vec![0.3, 0.4]);
    }

    #[test]
    fn zero_sigma_draws_nothing() {
        let mut a = stream(0, Purpose::ReleaseNoise, 0, 0, 0);
        let b = a.clone();
        let _ = clip_and_noise(&[1.0, 2.0], 10.0, 0.0, &mut a);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = NoiseConfig::default();
        c.validate().unwrap();
        c.delta = 1.0;
        assert!(c.validate().is_err());
        c = NoiseConfig { sigma0: -0.1, ..NoiseConfig::default() };
        assert!(c.validate().is_err());
    }
}

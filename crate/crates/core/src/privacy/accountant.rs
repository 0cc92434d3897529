//! Metric-DP accountant for repeated Gaussian release of clipped embeddings.
//!
//! Releasing a node's embedding `R'` times with per-coordinate noise `σ₀`
//! gives, for two inputs at L2 distance `ρ`, Rényi divergence
//! `R'·α·ρ²/(2σ₀²)` of order α. Converting to `(ε, δ)`:
//!
//! `ε(ρ) = min_{α>1} R'αρ²/(2σ₀²) + ln((α-1)/α) - ln(δα)/(α-1)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::rho::rho_percentiles;
use super::PrivacyError;

const GRID_POINTS: usize = 2000;
const ALPHA_MIN_EXCESS: f64 = 1e-6;
const ALPHA_MAX: f64 = 1e6;

fn objective(log_excess: f64, ratio_sq_rounds: f64, delta: f64) -> f64 {
    let excess = log_excess.exp();
    let alpha = 1.0 + excess;
    ratio_sq_rounds * alpha / 2.0 + (excess / alpha).ln() - (delta.ln() + alpha.ln()) / excess
}

/// ε at distance `rho` after `rounds` releases with noise `sigma0`.
///
/// Returns `f64::INFINITY` when `sigma0 == 0`. The minimum over α is found on
/// a 2000-point log grid of `α - 1 ∈ [1e-6, 1e6 - 1]`, refined by golden
/// section in the bracket around the best grid point. Negative minima are
/// reported as 0.
pub fn mdp_epsilon(rho: f64, sigma0: f64, rounds: u64, delta: f64) -> Result<f64, PrivacyError> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(PrivacyError::InvalidParameter { name: "rho", value: rho });
    }
    if !(sigma0 >= 0.0) {
        return Err(PrivacyError::InvalidParameter { name: "sigma0", value: sigma0 });
    }
    if rounds == 0 {
        return Err(PrivacyError::InvalidParameter { name: "rounds_shared", value: 0.0 });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PrivacyError::InvalidParameter { name: "delta", value: delta });
    }
    if sigma0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let c = rounds as f64 * (rho / sigma0).powi(2);
    let lo = ALPHA_MIN_EXCESS.ln();
    let hi = (ALPHA_MAX - 1.0).ln();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid = |i: usize| lo + step * i as f64;
    let (best_i, best) = (0..GRID_POINTS)
        .map(|i| (i, objective(grid(i), c, delta)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");

    let (mut a, mut b) = (grid(best_i.saturating_sub(1)), grid((best_i + 1).min(GRID_POINTS - 1)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1, c, delta);
    let mut f2 = objective(x2, c, delta);
    for _ in 0..100 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1, c, delta);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2, c, delta);
        }
    }
    Ok(best.min(f1).min(f2).max(0.0))
}

/// Released embeddings per node, with release counts.
///
/// `embeddings` holds each node's most recent released value before noise;
/// `counts` holds `R'(v)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReleaseHistory {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub counts: BTreeMap<usize, u64>,
}

impl ReleaseHistory {
    pub fn record(&mut self, node: usize, embedding: &[f64]) {
        self.embeddings.insert(node, embedding.to_vec());
        *self.counts.entry(node).or_insert(0) += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &ReleaseHistory) {
        for (&v, e) in &other.embeddings {
            self.embeddings.insert(v, e.clone());
        }
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport {
    pub percentiles: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma0: Vec<f64>,
    /// `epsilon[i][j]` is ε at `rho[i]` and `sigma0[j]`.
    pub epsilon: Vec<Vec<f64>>,
    pub delta: f64,
    pub rounds_shared: u64,
    /// k used for the k-th nearest neighbor distance, after capping at `n - 1`.
    pub k: usize,
    pub num_points: usize,
}

impl PrivacyReport {
    pub fn from_rho(
        percentiles: &[f64],
        rho: Vec<f64>,
        sigma0: &[f64],
        rounds_shared: u64,
        delta: f64,
        k: usize,
        num_points: usize,
    ) -> Result<Self, PrivacyError> {
        let epsilon = rho
            .iter()
            .map(|&r| sigma0.iter().map(|&s| mdp_epsilon(r, s, rounds_shared, delta)).collect())
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Ok(PrivacyReport {
            percentiles: percentiles.to_vec(),
            rho,
            sigma0: sigma0.to_vec(),
            epsilon,
            delta,
            rounds_shared,
            k,
            num_points,
        })
    }

    /// One row per percentile; one ε column per σ₀. A NaN percentile (ρ given
    /// directly) and `k` without points are written as empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("percentile,rho,k,rounds_shared,delta");
        for s in &self.sigma0 {
            write!(out, ",eps_sigma0_{s}").unwrap();
        }
        out.push('\n');
        for (i, q) in self.percentiles.iter().enumerate() {
            let q = if q.is_nan() { String::new() } else { q.to_string() };
            let k = if self.num_points == 0 { String::new() } else { self.k.to_string() };
            write!(out, "{q},{},{k},{},{}", self.rho[i], self.rounds_shared, self.delta).unwrap();
            for e in &self.epsilon[i] {
                write!(out, ",{e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// ρ percentiles of the released embeddings and ε for every `(ρ_q, σ₀)`
/// with the conservative `R' = max_v R'(v)`.
pub fn privacy_report(
    history: &ReleaseHistory,
    sigma0: &[f64],
    percentiles: &[f64],
    k: usize,
    delta: f64,
) -> Result<PrivacyReport, PrivacyError> {
    if history.is_empty() {
        return Err(PrivacyError::NoReleases);
    }
    let points: Vec<Vec<f64>> = history.embeddings.values().cloned().collect();
    let usable = points.iter().filter(|p| p.iter().any(|v| *v != 0.0)).count();
    if usable < 2 {
        return Err(PrivacyError::TooFewPoints { needed: 2, found: usable });
    }
    let k = k.clamp(1, usable - 1);
    let rho = rho_percentiles(&points, k, percentiles)?;
    PrivacyReport::from_rho(percentiles, rho, sigma0, history.max_count(), delta, k, usable)
}

/// ε per node using that node's own release count.
pub fn per_node_epsilon(history: &ReleaseHistory, rho: f64, sigma0: f64, delta: f64) -> Result<Vec<(usize, f64)>, PrivacyError> {
    history.counts.iter().map(|(&v, &c)| Ok((v, mdp_epsilon(rho, sigma0, c, delta)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_noise_gives_tiny_epsilon() {
        assert!(mdp_epsilon(1.0, 1e6, 1, 1e-4).unwrap() < 0.01);
    }

    #[test]
    fn zero_rho_is_near_zero() {
        assert!(mdp_epsilon(0.0, 1.0, 1, 1e-4).unwrap() < 0.01);
    }

    #[test]
    fn zero_sigma_is_infinite() {
        assert_eq!(mdp_epsilon(1.0, 0.0, 1, 1e-4).unwrap(), f64::INFINITY);
    }

    #[test]
    fn more_noise_less_epsilon() {
        let a = mdp_epsilon(1.0, 1.0, 4, 1e-5).unwrap();
        let b = mdp_epsilon(1.0, 2.0, 4, 1e-5).unwrap();
        assert!(b < a);
    }

    #[test]
    fn history_counts_releases() {
        let mut h = ReleaseHistory::default();
        h.record(3, &[1.0]);
        h.record(3, &[2.0]);
        h.record(5, &[1.0]);
        assert_eq!(h.max_count(), 2);
        assert_eq!(h.embeddings[&3], vec![2.0]);
    }
}

//! Choosing ρ from the geometry of released embeddings.

use super::PrivacyError;

/// Nearest-rank percentile of an ascending slice: the `ceil(q·n/100)`-th
/// order statistic, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn normalized(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PrivacyError> {
    let dim = points.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(points.len());
    let mut dropped = 0usize;
    for p in points {
        if p.len() != dim {
            return Err(PrivacyError::RaggedEmbeddings(dim, p.len()));
        }
        let n = crate::linalg::norm(p);
        if n == 0.0 {
            dropped += 1;
            continue;
        }
        out.push(p.iter().map(|v| v / n).collect());
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} zero embeddings before normalization");
    }
    Ok(out)
}

/// Distance from each L2-normalized point to its k-th nearest other point.
pub fn kth_neighbor_distances(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>, PrivacyError> {
    if k == 0 {
        return Err(PrivacyError::InvalidParameter { name: "k", value: 0.0 });
    }
    let pts = normalized(points)?;
    if pts.len() < k + 1 {
        return Err(PrivacyError::TooFewPoints { needed: k + 1, found: pts.len() });
    }
    let mut dists = vec![0.0; pts.len() - 1];
    Ok(pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut w = 0;
            for (j, q) in pts.iter().enumerate() {
                if i != j {
                    dists[w] = crate::linalg::sq_dist(p, q).sqrt();
                    w += 1;
                }
            }
            *dists.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect())
}

/// ρ_q for each requested percentile `q` of the k-th nearest neighbor distances.
pub fn rho_percentiles(points: &[Vec<f64>], k: usize, percentiles: &[f64]) -> Result<Vec<f64>, PrivacyError> {
    for &q in percentiles {
        if !(0.0..=100.0).contains(&q) {
            return Err(PrivacyError::InvalidParameter { name: "percentile", value: q });
        }
    }
    let mut d = kth_neighbor_distances(points, k)?;
    d.sort_by(f64::total_cmp);
    Ok(percentiles.iter().map(|&q| nearest_rank(&d, q)).collect())
}

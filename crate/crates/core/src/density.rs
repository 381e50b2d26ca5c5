//! K-nearest-neighbor density estimation and the norm-binned density profile.
//!
//! Densities follow the classic k-NN estimator: the mass k/n divided by the
//! volume of the smallest metric ball around an instance that reaches its
//! k-th nearest other instance. On hyperbolic features the ball volume is
//! approximated with the Euclidean normalizer A_d·D^d, which preserves the
//! ordering the profile cares about.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclid_norm, BallPoint};

/// Distance function used between feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Hyperbolic,
}

/// Parameters of the k-NN density estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensitySpec {
    /// Neighbor order; must satisfy 1 ≤ k < n at call time.
    pub k: usize,
    pub metric: Metric,
    /// Feature dimension d entering the volume normalizer A_d·D^d.
    pub d: usize,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self { k: 10, metric: Metric::Hyperbolic, d: 2 }
    }
}

/// Gamma function via the Lanczos approximation (g = 7, nine coefficients),
/// with the reflection formula below 1/2. Relative error ~1e−13 on the
/// half-integer arguments the volume normalizer needs.
pub fn gamma(x: f64) -> f64 {
    const COEFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = COEFS[0];
        for (i, &c) in COEFS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + 7.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Volume of the unit d-ball, A_d = π^{d/2}/Γ(d/2 + 1).
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / gamma(half + 1.0)
}

/// Estimator output: one density per instance, plus a flag for instances
/// whose k-th neighbor distance collapsed to zero (exact duplicates).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub densities: Vec<f64>,
    pub duplicate_flags: Vec<bool>,
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// k-NN density p(v_i) = (k/n)/(A_d·D^d) where D is the distance from v_i to
/// its k-th nearest other instance. A zero D (duplicate points) is replaced
/// by 1e−12 and the instance is flagged rather than erroring out.
pub fn knn_density(features: &[Vec<f64>], spec: &DensitySpec) -> Result<DensityEstimate> {
    let n = features.len();
    if spec.k == 0 || spec.k >= n {
        return Err(Error::InvalidSpec(format!(
            "neighbor count must satisfy 1 <= k < n, got k={} with n={n}",
            spec.k
        )));
    }
    if spec.d == 0 {
        return Err(Error::InvalidSpec("feature dimension must be positive".into()));
    }
    for f in features {
        if f.len() != spec.d {
            return Err(Error::ShapeMismatch {
                context: "density feature",
                expected: spec.d,
                found: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("features must be finite".into()));
        }
        if spec.metric == Metric::Hyperbolic {
            let norm = euclid_norm(f);
            if norm >= 1.0 {
                return Err(Error::PointOutsideBall { norm });
            }
        }
    }

    let volume = unit_ball_volume(spec.d);
    let mass = spec.k as f64 / n as f64;
    let mut densities = Vec::with_capacity(n);
    let mut duplicate_flags = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    for (i, f) in features.iter().enumerate() {
        dists.clear();
        for (j, g) in features.iter().enumerate() {
            if i != j {
                dists.push(match spec.metric {
                    Metric::Euclidean => euclid_dist(f, g),
                    Metric::Hyperbolic => crate::geometry::hyp_distance_inside(f, g),
                });
            }
        }
        let (_, kth, _) = dists.select_nth_unstable_by(spec.k - 1, f64::total_cmp);
        let duplicate = *kth == 0.0;
        let radius = if duplicate { 1e-12 } else { *kth };
        densities.push(mass / (volume * radius.powi(spec.d as i32)));
        duplicate_flags.push(duplicate);
    }
    Ok(DensityEstimate { densities, duplicate_flags })
}

/// One equal-width norm bin of the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub bin_center: f64,
    /// Mean density of members; 0 for empty bins.
    pub mean_density: f64,
    /// Population variance of member densities; 0 for empty bins.
    pub variance: f64,
    pub count: usize,
}

/// Bins features by Euclidean norm into `portions` equal-width bins spanning
/// [min norm, max norm] and reports per-bin density statistics. Exactly
/// `portions` bins come back, empty ones with count 0. A degenerate span
/// (all norms equal) puts every instance in bin 0.
pub fn norm_density_profile(
    features: &[BallPoint],
    spec: &DensitySpec,
    portions: usize,
) -> Result<Vec<ProfileBin>> {
    if portions == 0 {
        return Err(Error::InvalidSpec("profile needs at least one portion".into()));
    }
    let coords: Vec<Vec<f64>> = features.iter().map(|p| p.coords().to_vec()).collect();
    let est = knn_density(&coords, spec)?;

    let norms: Vec<f64> = features.iter().map(BallPoint::norm).collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / portions as f64;

    let mut sum = vec![0.0; portions];
    let mut sum_sq = vec![0.0; portions];
    let mut counts = vec![0usize; portions];
    for (norm, dens) in norms.iter().zip(&est.densities) {
        let idx = if width > 0.0 {
            (((norm - lo) / width) as usize).min(portions - 1)
        } else {
            0
        };
        sum[idx] += dens;
        sum_sq[idx] += dens * dens;
        counts[idx] += 1;
    }

    Ok((0..portions)
        .map(|i| {
            let count = counts[i];
            let (mean_density, variance) = if count > 0 {
                let mean = sum[i] / count as f64;
                (mean, (sum_sq[i] / count as f64 - mean * mean).max(0.0))
            } else {
                (0.0, 0.0)
            };
            ProfileBin {
                bin_center: lo + (i as f64 + 0.5) * width,
                mean_density,
                variance,
                count,
            }
        })
        .collect())
}

/// Writes a profile as `bin_center,mean_density,variance,count`.
pub fn write_profile_csv(bins: &[ProfileBin], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_center", "mean_density", "variance", "count"])?;
    for b in bins {
        w.write_record([
            format!("{:.17e}", b.bin_center),
            format!("{:.17e}", b.mean_density),
            format!("{:.17e}", b.variance),
            b.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes per-instance densities as `id,norm,density,duplicate`.
pub fn write_density_csv(
    norms: &[f64],
    estimate: &DensityEstimate,
    path: &Path,
) -> Result<()> {
    if norms.len() != estimate.densities.len() {
        return Err(Error::ShapeMismatch {
            context: "density rows",
            expected: norms.len(),
            found: estimate.densities.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "norm", "density", "duplicate"])?;
    for (id, norm) in norms.iter().enumerate() {
        w.write_record([
            id.to_string(),
            format!("{norm:.17e}"),
            format!("{:.17e}", estimate.densities[id]),
            estimate.duplicate_flags[id].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the average of the ranks they span (1-based)
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Returns an error
/// on length mismatch or fewer than two points; a constant sequence yields
/// zero correlation by convention.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "spearman inputs",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidSpec("spearman needs at least two points".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        var_a += (x - mean) * (x - mean);
        var_b += (y - mean) * (y - mean);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_a * var_b).sqrt())
}

//! Robust metric rigid transform from 3D-3D correspondences:
//! RANSAC over 3-point minimal samples with a Kabsch (SVD) solution and
//! least-squares refit on the inlier set.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Correspondence3D;
use crate::error::{Error, Result};
use crate::geometry::{Pose, RotationMatrix};

/// RANSAC configuration. The generator is seeded explicitly so estimates
/// are reproducible.
#[derive(Debug, Clone)]
pub struct RansacParams {
    /// Inlier residual threshold in meters.
    pub threshold_m: f64,
    pub max_iters: usize,
    /// Early-exit confidence that at least one all-inlier sample was drawn.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_m: 0.005,
            max_iters: 1000,
            confidence: 0.99,
            seed: 0,
        }
    }
}

/// Estimates the rigid transform mapping the `p_b` points onto the `p_a`
/// points (`p_a ~ R p_b + t`), with metric scale, and the inlier mask.
///
/// Fails with [`Error::EstimationFailed`] on fewer than 3 correspondences
/// or a degenerate (collinear) geometry; the pipeline maps that to a
/// predict-only frame.
pub fn estimate_rigid_transform(
    corrs: &[Correspondence3D],
    params: &RansacParams,
) -> Result<(Pose, Vec<bool>)> {
    let n = corrs.len();
    if n < 3 {
        return Err(Error::EstimationFailed(format!(
            "need at least 3 correspondences, got {n}"
        )));
    }
    for c in corrs {
        if !(c.p_a.iter().all(|v| v.is_finite()) && c.p_b.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("correspondences must be finite"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best_mask: Option<Vec<bool>> = None;
    let mut best_count = 0usize;
    let mut iters = params.max_iters;
    let thr2 = params.threshold_m * params.threshold_m;

    let mut it = 0;
    while it < iters {
        it += 1;
        let sample = sample3(&mut rng, n);
        let tri = [corrs[sample[0]], corrs[sample[1]], corrs[sample[2]]];
        if is_collinear(&tri) {
            continue;
        }
        let Some(model) = kabsch(&tri) else { continue };
        let mask: Vec<bool> = corrs
            .iter()
            .map(|c| (c.p_a - model.transform_point(&c.p_b)).norm_squared() <= thr2)
            .collect();
        let count = mask.iter().filter(|&&m| m).count();
        if count > best_count {
            best_count = count;
            best_mask = Some(mask);
            // Adaptive iteration bound at the requested confidence.
            let w = count as f64 / n as f64;
            let p_outlier_sample = 1.0 - w * w * w;
            if p_outlier_sample > 1e-12 {
                let needed =
                    ((1.0 - params.confidence).ln() / p_outlier_sample.ln()).ceil() as usize;
                iters = iters.min(it + needed).max(it);
            } else {
                iters = it;
            }
        }
    }

    let mut mask = best_mask.ok_or_else(|| {
        Error::EstimationFailed("no non-degenerate minimal sample found".into())
    })?;
    if best_count < 3 {
        return Err(Error::EstimationFailed(format!(
            "only {best_count} inliers at threshold {}",
            params.threshold_m
        )));
    }

    // Refit on the consensus set, then settle the mask under the refit
    // model (one extra pass when it changed).
    for _ in 0..2 {
        let inliers: Vec<Correspondence3D> = corrs
            .iter()
            .zip(&mask)
            .filter_map(|(c, &m)| m.then_some(*c))
            .collect();
        if inliers.len() < 3 || is_collinear_many(&inliers) {
            return Err(Error::EstimationFailed("degenerate inlier set".into()));
        }
        let model = kabsch(&inliers)
            .ok_or_else(|| Error::EstimationFailed("kabsch failed on inlier set".into()))?;
        let new_mask: Vec<bool> = corrs
            .iter()
            .map(|c| (c.p_a - model.transform_point(&c.p_b)).norm_squared() <= thr2)
            .collect();
        if new_mask == mask {
            return Ok((model, mask));
        }
        mask = new_mask;
    }
    let inliers: Vec<Correspondence3D> = corrs
        .iter()
        .zip(&mask)
        .filter_map(|(c, &m)| m.then_some(*c))
        .collect();
    if inliers.len() < 3 || is_collinear_many(&inliers) {
        return Err(Error::EstimationFailed("degenerate inlier set".into()));
    }
    let model = kabsch(&inliers)
        .ok_or_else(|| Error::EstimationFailed("kabsch failed on inlier set".into()))?;
    Ok((model, mask))
}

fn sample3(rng: &mut ChaCha8Rng, n: usize) -> [usize; 3] {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n);
    while b == a {
        b = rng.gen_range(0..n);
    }
    let mut c = rng.gen_range(0..n);
    while c == a || c == b {
        c = rng.gen_range(0..n);
    }
    [a, b, c]
}

fn is_collinear(tri: &[Correspondence3D; 3]) -> bool {
    let ab = tri[1].p_b - tri[0].p_b;
    let ac = tri[2].p_b - tri[0].p_b;
    let cross = ab.cross(&ac).norm();
    cross < 1e-12 * ab.norm().max(1e-12) * ac.norm().max(1e-12)
}

fn is_collinear_many(corrs: &[Correspondence3D]) -> bool {
    // Collinear iff the covariance of the source points has rank < 2.
    let centroid: Vector3<f64> =
        corrs.iter().map(|c| c.p_b).sum::<Vector3<f64>>() / corrs.len() as f64;
    let mut cov = Matrix3::zeros();
    for c in corrs {
        let d = c.p_b - centroid;
        cov += d * d.transpose();
    }
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1] <= 1e-16 * eig[0].max(1e-300)
}

/// Least-squares rigid transform (Kabsch): SVD of the cross-covariance
/// with the reflection branch corrected so the result is a proper
/// rotation.
fn kabsch(corrs: &[Correspondence3D]) -> Option<Pose> {
    let n = corrs.len() as f64;
    let ca: Vector3<f64> = corrs.iter().map(|c| c.p_a).sum::<Vector3<f64>>() / n;
    let cb: Vector3<f64> = corrs.iter().map(|c| c.p_b).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for c in corrs {
        h += (c.p_b - cb) * (c.p_a - ca).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let rot = RotationMatrix::new(r).ok()?;
    let t = ca - rot.matrix() * cb;
    Some(Pose::new(rot, t, true))
}

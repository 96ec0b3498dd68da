use rand::seq::index::sample;
use rayon::prelude::*;

use super::{subset, Correspondence3D3D, LocError, Pose};
use crate::geometry::{Mat3, Vec3};
use crate::rng;

/// Rigid transform minimizing `sum |p - (R q + t)|^2`, from the SVD of the
/// cross-covariance with a determinant correction.
pub fn umeyama(corrs: &[Correspondence3D3D]) -> Result<Pose, LocError> {
    if corrs.len() < 3 {
        return Err(LocError::InsufficientData {
            needed: 3,
            got: corrs.len(),
        });
    }
    let n = corrs.len() as f64;
    let pm: Vec3 = corrs.iter().map(|c| c.p).sum::<Vec3>() / n;
    let qm: Vec3 = corrs.iter().map(|c| c.q).sum::<Vec3>() / n;
    let h: Mat3 = corrs.iter().map(|c| (c.p - pm) * (c.q - qm).transpose()).sum::<Mat3>() / n;
    let svd = h.svd(true, true);
    let s = svd.singular_values;
    let mut sorted = [s[0], s[1], s[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[1] > 1e-12 * sorted[0].max(f64::MIN_POSITIVE)) {
        return Err(LocError::Rank(sorted));
    }
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let smallest = (0..3).min_by(|&a, &b| s[a].total_cmp(&s[b])).expect("three values");
        d[(smallest, smallest)] = -1.0;
    }
    let rot = u * d * vt;
    Ok(Pose {
        rot,
        trans: pm - rot * qm,
    })
}

/// Pairwise edge lengths agree within `ratio` of the longer edge.
pub fn edge_compatible(corrs: &[Correspondence3D3D; 3], ratio: f64) -> bool {
    [(0, 1), (0, 2), (1, 2)].iter().all(|&(i, j)| {
        let lp = (corrs[i].p - corrs[j].p).norm();
        let lq = (corrs[i].q - corrs[j].q).norm();
        (lp - lq).abs() <= ratio * lp.max(lq)
    })
}

fn distance_inliers(corrs: &[Correspondence3D3D], pose: &Pose, threshold: f64) -> Vec<bool> {
    corrs.iter().map(|c| (c.p - pose.apply(&c.q)).norm() <= threshold).collect()
}

/// RANSAC over three-point Umeyama hypotheses that pass the edge-length
/// filter; returns the best pose refit on its inliers and the inlier mask.
pub fn register_ransac(
    putative: &[Correspondence3D3D],
    dist_threshold: f64,
    edge_ratio: f64,
    iters: usize,
    seed: u64,
) -> Result<(Pose, Vec<bool>), LocError> {
    if putative.len() < 3 {
        return Err(LocError::InsufficientData {
            needed: 3,
            got: putative.len(),
        });
    }
    if !(dist_threshold > 0.0) || !(edge_ratio >= 0.0) {
        return Err(LocError::Domain("thresholds must be positive".into()));
    }
    let scored: Vec<Option<(usize, Pose)>> = (0..iters)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "register-ransac", i as u64);
            let idx = sample(&mut r, putative.len(), 3);
            let tri = [putative[idx.index(0)], putative[idx.index(1)], putative[idx.index(2)]];
            if !edge_compatible(&tri, edge_ratio) {
                return None;
            }
            let pose = umeyama(&tri).ok()?;
            let count = distance_inliers(putative, &pose, dist_threshold).iter().filter(|m| **m).count();
            Some((count, pose))
        })
        .collect();
    let best = scored
        .into_iter()
        .flatten()
        .fold(None::<(usize, Pose)>, |acc, h| match acc {
            Some(a) if a.0 >= h.0 => Some(a),
            _ => Some(h),
        });
    let Some((_, mut pose)) = best.filter(|b| b.0 >= 3) else {
        return Err(LocError::NoConsensus {
            best_inliers: best.map_or(0, |b| b.0),
        });
    };
    let mut mask = distance_inliers(putative, &pose, dist_threshold);
    for _ in 0..super::CONSENSUS_ROUNDS {
        let Ok(fit) = umeyama(&subset(putative, &mask)) else { break };
        let next = distance_inliers(putative, &fit, dist_threshold);
        if next.iter().filter(|m| **m).count() < mask.iter().filter(|m| **m).count() {
            break;
        }
        pose = fit;
        let stable = next == mask;
        mask = next;
        if stable {
            break;
        }
    }
    Ok((pose, mask))
}

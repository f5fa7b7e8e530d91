//! Per-cluster least-squares maps from feature velocity to probe velocity.

use nalgebra::{Matrix3x4, Matrix4, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-8;
pub const MIN_CLUSTER_POINTS: usize = 8;
/// Feature-velocity directions whose Gram eigenvalue falls below this
/// fraction of the largest are treated as unexcited and left out of the solve.
pub const SPECTRAL_CUTOFF: f64 = 1e-3;

/// `v ~= x * s_dot` for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearMap {
    pub x: Matrix3x4<f64>,
    /// Root-mean-square of `|v - x s_dot|` over the cluster, mm/s.
    pub residual_rms: f64,
    pub points: usize,
}

/// Fits one map per cluster label in `0..k`. `labels[i]` is the cluster of
/// `samples[i]`.
pub fn fit_maps_for_labels(samples: &[Sample], labels: &[usize], k: usize) -> Result<Vec<LocalLinearMap>> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    (0..k)
        .map(|cluster| {
            let members: Vec<&Sample> = samples.iter().zip(labels).filter(|(_, &l)| l == cluster).map(|(s, _)| s).collect();
            fit_one(cluster, &members)
        })
        .collect()
}

fn fit_one(cluster: usize, members: &[&Sample]) -> Result<LocalLinearMap> {
    let rank = span_rank(members);
    if members.len() < MIN_CLUSTER_POINTS || rank < 3 {
        return Err(Error::RankDeficient {
            cluster,
            points: members.len(),
            rank,
        });
    }
    let mut a = Matrix4::identity() * RIDGE;
    let mut b = Matrix3x4::zeros();
    for s in members {
        a += s.s_dot * s.s_dot.transpose();
        b += s.v * s.s_dot.transpose();
    }
    // X A = B, solved on the excited eigen-directions of A only. Noise-free
    // exploration data lie close to a 3-D subspace of feature-velocity space;
    // the weak fourth direction carries curvature, not signal.
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.max();
    let mut a_inv = Matrix4::zeros();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > top * SPECTRAL_CUTOFF {
            let u = eig.eigenvectors.column(i);
            a_inv += u * u.transpose() / l;
        }
    }
    let x = b * a_inv;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("local linear map"));
    }
    let sq: f64 = members.iter().map(|s| (s.v - x * s.s_dot).norm_squared()).sum();
    Ok(LocalLinearMap {
        x,
        residual_rms: (sq / members.len() as f64).sqrt(),
        points: members.len(),
    })
}

/// Numerical rank of the stacked feature velocities.
fn span_rank(members: &[&Sample]) -> usize {
    if members.is_empty() {
        return 0;
    }
    let gram = members.iter().fold(Matrix4::zeros(), |a, s| a + s.s_dot * s.s_dot.transpose());
    let sv = SVD::new(gram, false, false).singular_values;
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    // Singular values of the Gram matrix are squared, so the cut-off is too.
    sv.iter().filter(|&&s| s > top * 1e-20).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use nalgebra::{Point3, Vector3, Vector4};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn truth() -> Matrix3x4<f64> {
        Matrix3x4::new(0.5, -0.1, 0.2, 0.0, 0.05, 0.6, -0.3, 0.1, 0.0, 0.2, 0.1, -0.7)
    }

    fn samples(n: usize, noise: f64, seed: u64) -> Vec<Sample> {
        let mut rng = SeedStreams::new(seed).stream("lls", 0);
        (0..n)
            .map(|i| {
                let s_dot = Vector4::from_fn(|_, _| rng.gen::<f64>() * 20.0 - 10.0);
                let eps = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                Sample {
                    t: i as f64,
                    s: Vector4::zeros(),
                    s_dot,
                    x: Point3::origin(),
                    v: truth() * s_dot + eps * noise,
                }
            })
            .collect()
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let data = samples(200, 0.0, 1);
        let maps = fit_maps_for_labels(&data, &vec![0; 200], 1).unwrap();
        let err = (maps[0].x - truth()).norm() / truth().norm();
        assert!(err < 1e-9, "{err}");
        assert!(maps[0].residual_rms < 1e-9);
    }

    #[test]
    fn noisy_recovery_error_shrinks_like_inverse_sqrt_n() {
        let rms_err = |n: usize| {
            let errs: Vec<f64> = (0..40)
                .map(|rep| {
                    let data = samples(n, 0.5, 100 + rep);
                    let maps = fit_maps_for_labels(&data, &vec![0; n], 1).unwrap();
                    (maps[0].x - truth()).norm_squared()
                })
                .collect();
            (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
        };
        let small = rms_err(100);
        let large = rms_err(1600);
        // Sixteen times the data: error should drop by about four.
        let ratio = small / large;
        assert!((3.0..5.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn unexcited_direction_is_ignored() {
        // A faint fourth feature-velocity direction that happens to correlate
        // strongly with v: plain least squares would lean on it.
        let mut rng = SeedStreams::new(5).stream("lls", 1);
        let mut data = samples(300, 0.0, 5);
        for s in &mut data {
            s.s_dot[3] = 1e-3 * (rng.gen::<f64>() * 20.0 - 10.0);
            let mut t = truth();
            t.set_column(3, &Vector3::zeros());
            s.v = t * s.s_dot + Vector3::x() * (50.0 * s.s_dot[3]);
        }
        let maps = fit_maps_for_labels(&data, &vec![0; 300], 1).unwrap();
        // Plain least squares would put 50 in the first entry.
        assert!(maps[0].x.column(3).norm() < 1e-2, "{}", maps[0].x.column(3).norm());
        let lead = maps[0].x.fixed_columns::<3>(0) - truth().fixed_columns::<3>(0);
        assert!(lead.norm() < 2e-2, "{}", lead.norm());
    }

    #[test]
    fn rank_deficient_cluster_is_named() {
        let mut data = samples(50, 0.0, 2);
        for s in &mut data {
            s.s_dot[2] = 0.0;
            s.s_dot[3] = 0.0;
        }
        let labels: Vec<usize> = (0..50).map(|i| usize::from(i >= 25)).collect();
        match fit_maps_for_labels(&data, &labels, 2) {
            Err(Error::RankDeficient { cluster: 0, points: 25, rank: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_points_is_an_error() {
        let data = samples(20, 0.0, 3);
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 5)).collect();
        assert!(matches!(
            fit_maps_for_labels(&data, &labels, 2),
            Err(Error::RankDeficient { cluster: 0, points: 5, .. })
        ));
    }
}

//! Gaussian mixture over the 4-D feature space, fitted by EM.

use nalgebra::{Cholesky, Matrix4, Vector4, U4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedStreams, GMM_INIT};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, U4>,
    log_norm: f64,
}

impl Factor {
    fn new(c: &GaussianComponent) -> Result<Self> {
        let chol = Cholesky::new(c.covariance).ok_or_else(|| Error::Fit("covariance is not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            chol,
            log_norm: c.weight.ln() - 0.5 * (4.0 * LN_2PI + log_det),
        })
    }

    /// `ln(pi_k N(x | mu_k, Sigma_k))`.
    fn log_joint(&self, c: &GaussianComponent, x: &Vector4<f64>) -> f64 {
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&(x - c.mean))
            .expect("Cholesky factor has positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

/// A fitted mixture. Immutable once built; component factors are cached.
#[derive(Debug, Clone)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    factors: Vec<Factor>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

impl GmmModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Fit(format!("mixture weights must be positive and sum to 1, got {total}")));
        }
        let factors = components.iter().map(Factor::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { components, factors })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    fn log_joints(&self, x: &Vector4<f64>, out: &mut [f64]) {
        for ((o, c), f) in out.iter_mut().zip(&self.components).zip(&self.factors) {
            *o = f.log_joint(c, x);
        }
    }

    /// `ln p(x)`.
    pub fn log_density(&self, x: &Vector4<f64>) -> f64 {
        let mut buf = vec![0.0; self.k()];
        self.log_joints(x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Posterior responsibilities `p(z_k = 1 | x)`.
    pub fn posteriors(&self, x: &Vector4<f64>) -> Vec<f64> {
        let mut buf = vec![0.0; self.k()];
        self.log_joints(x, &mut buf);
        let lse = log_sum_exp(&buf);
        buf.iter_mut().for_each(|v| *v = (*v - lse).exp());
        buf
    }

    /// Hard assignment by posterior argmax; ties go to the lower index.
    pub fn assign(&self, x: &Vector4<f64>) -> usize {
        let mut buf = vec![0.0; self.k()];
        self.log_joints(x, &mut buf);
        argmax(&buf)
    }

    /// Mean log-likelihood per point.
    pub fn mean_log_likelihood(&self, points: &[Vector4<f64>]) -> f64 {
        points.iter().map(|x| self.log_density(x)).sum::<f64>() / points.len() as f64
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmFitConfig {
    pub k: usize,
    pub seed: u64,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Added to every covariance diagonal.
    pub covariance_floor: f64,
    pub max_reseeds: usize,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            tol: 1e-6,
            max_iter: 300,
            covariance_floor: 1e-6,
            max_reseeds: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood of the parameters entering each E-step.
    pub log_likelihood: Vec<f64>,
    /// Iterations (indices into `log_likelihood`) right after a component was re-seeded.
    pub reseeded_at: Vec<usize>,
    pub converged: bool,
}

/// Fewest effective points a component may keep before it is re-seeded.
const MIN_MASS: f64 = 5.0;

pub fn fit_gmm(points: &[Vector4<f64>], config: &GmmFitConfig) -> Result<GmmFit> {
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidArgument("GMM needs K >= 1".into()));
    }
    if points.len() < 10 * k {
        return Err(Error::InvalidArgument(format!(
            "GMM with K = {k} needs at least {} points, got {}",
            10 * k,
            points.len()
        )));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("GMM input"));
    }
    let n = points.len();
    let mut rng = SeedStreams::new(config.seed).stream(GMM_INIT, 0);
    let seeds = kmeans_pp(points, k, &mut rng);

    // Initial parameters from a hard nearest-seed partition.
    let mut resp = vec![0.0; n * k];
    for (i, p) in points.iter().enumerate() {
        let j = nearest(&seeds, p);
        resp[i * k + j] = 1.0;
    }
    let global_cov = covariance(points, &mean(points)) + Matrix4::identity() * config.covariance_floor;
    let mut reseeds = 0usize;
    let mut reseeded_at = Vec::new();
    let mut components = m_step(points, &resp, k, config.covariance_floor);
    let mut pending_reseed = false;
    for (j, c) in components.iter_mut().enumerate() {
        if c.is_none() {
            *c = Some(GaussianComponent {
                weight: 1.0 / k as f64,
                mean: seeds[j],
                covariance: global_cov,
            });
            pending_reseed = true;
        }
    }
    let mut model = GmmModel::new(normalise(components.into_iter().map(Option::unwrap).collect()))?;
    if pending_reseed {
        reseeded_at.push(0);
    }

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut row = vec![0.0; k];
    for iter in 0..config.max_iter {
        // E-step.
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            model.log_joints(p, &mut row);
            let lse = log_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (row[j] - lse).exp();
            }
        }
        let ll = ll / n as f64;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < config.tol && reseeded_at.last() != Some(&iter) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }

        // M-step, re-seeding any component that lost its points.
        let mut updated = m_step(points, &resp, k, config.covariance_floor);
        if updated.iter().any(Option::is_none) {
            for j in 0..k {
                if updated[j].is_some() {
                    continue;
                }
                reseeds += 1;
                if reseeds > config.max_reseeds {
                    return Err(Error::Fit(format!(
                        "component {j} emptied after {} re-seeds",
                        config.max_reseeds
                    )));
                }
                let far = worst_explained(&model, points);
                updated[j] = Some(GaussianComponent {
                    weight: 1.0 / k as f64,
                    mean: points[far],
                    covariance: global_cov,
                });
            }
            reseeded_at.push(iter + 1);
        }
        model = GmmModel::new(normalise(updated.into_iter().map(Option::unwrap).collect()))?;
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        reseeded_at,
        converged,
    })
}

fn normalise(mut comps: Vec<GaussianComponent>) -> Vec<GaussianComponent> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
    comps
}

fn m_step(points: &[Vector4<f64>], resp: &[f64], k: usize, floor: f64) -> Vec<Option<GaussianComponent>> {
    let n = points.len();
    (0..k)
        .map(|j| {
            let mass: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if mass < MIN_MASS {
                return None;
            }
            let mu = points
                .iter()
                .enumerate()
                .fold(Vector4::zeros(), |acc, (i, p)| acc + p * resp[i * k + j])
                / mass;
            let mut cov = Matrix4::zeros();
            for (i, p) in points.iter().enumerate() {
                let d = p - mu;
                cov += d * d.transpose() * resp[i * k + j];
            }
            cov /= mass;
            cov = (cov + cov.transpose()) * 0.5 + Matrix4::identity() * floor;
            Some(GaussianComponent {
                weight: mass / n as f64,
                mean: mu,
                covariance: cov,
            })
        })
        .collect()
}

fn worst_explained(model: &GmmModel, points: &[Vector4<f64>]) -> usize {
    let dens: Vec<f64> = points.iter().map(|p| -model.log_density(p)).collect();
    argmax(&dens)
}

pub(crate) fn mean(points: &[Vector4<f64>]) -> Vector4<f64> {
    points.iter().fold(Vector4::zeros(), |a, p| a + p) / points.len() as f64
}

/// Maximum-likelihood (divide by n) covariance.
pub(crate) fn covariance(points: &[Vector4<f64>], mu: &Vector4<f64>) -> Matrix4<f64> {
    points.iter().fold(Matrix4::zeros(), |a, p| {
        let d = p - mu;
        a + d * d.transpose()
    }) / points.len() as f64
}

pub(crate) fn nearest(centres: &[Vector4<f64>], p: &Vector4<f64>) -> usize {
    let d: Vec<f64> = centres.iter().map(|c| -(p - c).norm_squared()).collect();
    argmax(&d)
}

/// k-means++ seeding: first centre uniform, then proportional to squared distance.
pub(crate) fn kmeans_pp<R: Rng + ?Sized>(points: &[Vector4<f64>], k: usize, rng: &mut R) -> Vec<Vector4<f64>> {
    let mut centres = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
        centres.push(c);
    }
    centres
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(seed: u64, centres: &[Vector4<f64>], sigma: f64, per: usize) -> Vec<Vector4<f64>> {
        let mut rng = SeedStreams::new(seed).stream("blobs", 0);
        let mut out = Vec::new();
        for c in centres {
            for _ in 0..per {
                let noise = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
                out.push(c + noise * sigma);
            }
        }
        out
    }

    #[test]
    fn single_component_is_sample_moments() {
        let pts = blobs(1, &[Vector4::new(3.0, -1.0, 10.0, 2.0)], 2.0, 500);
        let fit = fit_gmm(&pts, &GmmFitConfig { k: 1, ..Default::default() }).unwrap();
        let c = fit.model.components()[0];
        // Oracle: naive two-pass moments.
        let n = pts.len() as f64;
        let mut mu = [0.0; 4];
        for p in &pts {
            for a in 0..4 {
                mu[a] += p[a] / n;
            }
        }
        for a in 0..4 {
            assert!((c.mean[a] - mu[a]).abs() < 1e-10);
            for b in 0..4 {
                let s: f64 = pts.iter().map(|p| (p[a] - mu[a]) * (p[b] - mu[b])).sum::<f64>() / n;
                let floor = if a == b { 1e-6 } else { 0.0 };
                assert!((c.covariance[(a, b)] - s - floor).abs() < 1e-9);
            }
        }
        assert_eq!(c.weight, 1.0);
    }

    #[test]
    fn recovers_two_blobs() {
        let truth = [Vector4::new(100.0, 100.0, 100.0, 100.0), Vector4::new(300.0, 250.0, 280.0, 240.0)];
        let pts = blobs(2, &truth, 5.0, 1000);
        let fit = fit_gmm(&pts, &GmmFitConfig { k: 2, ..Default::default() }).unwrap();
        for t in &truth {
            let best = fit
                .model
                .components()
                .iter()
                .map(|c| (c.mean - t).norm() / t.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.01, "relative mean error {best}");
        }
        let w: f64 = fit.model.components().iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let truth = [
            Vector4::new(0.0, 0.0, 0.0, 0.0),
            Vector4::new(6.0, 1.0, 0.0, 2.0),
            Vector4::new(2.0, 7.0, 3.0, 0.0),
        ];
        let pts = blobs(3, &truth, 2.0, 300);
        for seed in 0..5 {
            let fit = fit_gmm(&pts, &GmmFitConfig { k: 3, seed, ..Default::default() }).unwrap();
            assert!(fit.reseeded_at.is_empty());
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn covariances_respect_the_floor() {
        // Points on a 2-D plane: the other two directions collapse to the floor.
        let mut rng = SeedStreams::new(4).stream("plane", 0);
        let pts: Vec<_> = (0..400)
            .map(|_| Vector4::new(rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0, 0.0, 0.0))
            .collect();
        let fit = fit_gmm(&pts, &GmmFitConfig { k: 2, ..Default::default() }).unwrap();
        for c in fit.model.components() {
            let eig = c.covariance.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l >= 1e-6 * (1.0 - 1e-9)));
        }
    }

    #[test]
    fn posteriors_sum_to_one() {
        let pts = blobs(5, &[Vector4::zeros(), Vector4::repeat(10.0)], 1.0, 200);
        let fit = fit_gmm(&pts, &GmmFitConfig { k: 2, ..Default::default() }).unwrap();
        for p in pts.iter().step_by(37) {
            let post = fit.model.posteriors(p);
            assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let pts = vec![Vector4::zeros(); 15];
        assert!(fit_gmm(&pts, &GmmFitConfig { k: 0, ..Default::default() }).is_err());
        assert!(fit_gmm(&pts, &GmmFitConfig { k: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let pts = blobs(6, &[Vector4::zeros(), Vector4::repeat(5.0)], 2.0, 200);
        let cfg = GmmFitConfig { k: 3, seed: 9, ..Default::default() };
        let a = fit_gmm(&pts, &cfg).unwrap();
        let b = fit_gmm(&pts, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }
}

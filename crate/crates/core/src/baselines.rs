//! Comparison methods: nearest training entity and a PCA reconstructor.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Error, Result};
use crate::eval::Metric;
use crate::numkit::{axpy, dot, norm, seeded_rng, Matrix};
use crate::onehot::OneHotVec;
use crate::state::EntityState;

/// Default component count, matching the latent width.
pub const DEFAULT_COMPONENTS: usize = 25;

const CONVERGENCE_TOL: f64 = 1e-10;
const MAX_POWER_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestMatch {
    pub index: usize,
    pub state: EntityState,
    pub distance: f64,
}

/// Linear scan for the closest training state; ties go to the earliest index.
pub fn nearest_entity(train: &[EntityState], query: &EntityState, metric: Metric) -> Result<NearestMatch> {
    let mut best: Option<NearestMatch> = None;
    for (index, state) in train.iter().enumerate() {
        let distance = metric.distance(query, state);
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(NearestMatch { index, state: *state, distance });
        }
    }
    best.ok_or_else(|| Error::Data("nearest-entity search over an empty training set".into()))
}

/// Principal components of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows.
    pub components: Matrix,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn fit_onehot(train: &[OneHotVec], k: usize) -> Result<Self> {
        let dense: Vec<Vec<f64>> = train.iter().map(OneHotVec::to_dense).collect();
        Self::fit(&dense, k)
    }

    /// Top-`k` covariance eigen-directions by power iteration with
    /// orthogonal deflation.
    ///
    /// Iterates on whichever of the `d x d` covariance or the `n x n` Gram
    /// matrix is smaller; both share their nonzero eigenvalues and Gram
    /// eigenvectors map to covariance eigenvectors through `Xcᵀ u`.
    pub fn fit(train: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = train.len();
        if n < 2 {
            return Err(Error::Data(format!("PCA needs at least 2 vectors, got {n}")));
        }
        let d = train[0].len();
        if train.iter().any(|x| x.len() != d) {
            return Err(shape_err("PCA input vectors differ in length"));
        }
        if k == 0 || k > (n - 1).min(d) {
            return Err(Error::Config(format!(
                "component count {k} must lie in [1, {}] for {n} vectors of dimension {d}",
                (n - 1).min(d)
            )));
        }

        let mut mean = vec![0.0; d];
        for x in train {
            axpy(1.0, x, &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<Vec<f64>> = train
            .iter()
            .map(|x| x.iter().zip(&mean).map(|(a, m)| a - m).collect())
            .collect();

        let dual = n < d;
        let m = if dual { n } else { d };
        let mut op = Matrix::zeros(m, m);
        let denom = (n - 1) as f64;
        if dual {
            for i in 0..n {
                for j in i..n {
                    let v = dot(&centered[i], &centered[j]) / denom;
                    op.set(i, j, v);
                    op.set(j, i, v);
                }
            }
        } else {
            for x in &centered {
                for i in 0..d {
                    if x[i] != 0.0 {
                        axpy(x[i] / denom, x, op.row_mut(i));
                    }
                }
            }
        }
        let trace: f64 = (0..m).map(|i| op.get(i, i)).sum();
        if trace <= 0.0 {
            return Err(Error::Data(
                "zero covariance: all input vectors are identical".into(),
            ));
        }

        let eigvecs = power_deflation(&op, k, trace);

        // Map to data space, then re-orthonormalise against round-off.
        let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
        for u in &eigvecs {
            let mut c = if dual {
                let mut c = vec![0.0; d];
                for (ui, xi) in u.iter().zip(&centered) {
                    axpy(*ui, xi, &mut c);
                }
                c
            } else {
                u.clone()
            };
            orthogonalize(&mut c, &components);
            let len = norm(&c);
            if len > 1e-8 {
                c.iter_mut().for_each(|v| *v /= len);
            } else {
                c = complete_basis(&components, d);
            }
            components.push(c);
        }

        let mut pairs: Vec<(f64, Vec<f64>)> = components
            .into_iter()
            .map(|c| {
                let var = centered.iter().map(|x| dot(x, &c).powi(2)).sum::<f64>() / denom;
                (var, c)
            })
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

        let explained_variance = pairs.iter().map(|p| p.0).collect();
        let data = pairs.into_iter().flat_map(|p| p.1).collect();
        Ok(PcaModel { mean, components: Matrix::from_vec(k, d, data)?, explained_variance })
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Coordinates of `x - mean` along each component.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(shape_err(format!("vector of length {}, PCA expects {}", x.len(), self.dim())));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.k()).map(|j| dot(self.components.row(j), &centered)).collect())
    }

    /// `mean + Σ ⟨x - mean, c_j⟩ c_j`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let coords = self.project(x)?;
        let mut out = self.mean.clone();
        for (j, a) in coords.iter().enumerate() {
            axpy(*a, self.components.row(j), &mut out);
        }
        Ok(out)
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        axpy(-p, b, v);
    }
}

/// A unit vector orthogonal to `basis`, built from standard basis vectors.
fn complete_basis(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        orthogonalize(&mut e, basis);
        let len = norm(&e);
        if len > 0.5 {
            e.iter_mut().for_each(|v| *v /= len);
            return e;
        }
    }
    unreachable!("fewer than d basis vectors always leave room")
}

/// Leading `k` eigenvectors of the symmetric PSD matrix `op`.
fn power_deflation(op: &Matrix, k: usize, trace: f64) -> Vec<Vec<f64>> {
    let m = op.rows();
    let mut rng = seeded_rng(0x5eed);
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut w = vec![0.0; m];
    for _ in 0..k {
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, &found);
        let len = norm(&v);
        v.iter_mut().for_each(|x| *x /= len);
        for _ in 0..MAX_POWER_ITERS {
            op.matvec_into(&v, &mut w);
            orthogonalize(&mut w, &found);
            let len = norm(&w);
            if len <= 1e-14 * trace {
                // Remaining spectrum is numerically zero; any orthogonal
                // direction will do.
                break;
            }
            w.iter_mut().for_each(|x| *x /= len);
            let change = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            std::mem::swap(&mut v, &mut w);
            if change < CONVERGENCE_TOL {
                break;
            }
        }
        orthogonalize(&mut v, &found);
        let len = norm(&v);
        v.iter_mut().for_each(|x| *x /= len);
        found.push(v);
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn recon_error(pca: &PcaModel, data: &[Vec<f64>]) -> f64 {
        data.iter()
            .map(|x| {
                let r = pca.reconstruct(x).unwrap();
                x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn nearest_self_match_and_singleton() {
        let train: Vec<EntityState> = (0..5).map(|i| EntityState::new(i, 1, 2, 0, 0, 3 * i, 4, 0)).collect();
        for m in [Metric::Jaccard, Metric::Euclidean] {
            let hit = nearest_entity(&train, &train[3], m).unwrap();
            assert_eq!(hit.distance, 0.0);
            assert_eq!(hit.index, 3);
            let q = EntityState::new(50, 50, 50, 50, 50, 50, 50, 50);
            assert_eq!(nearest_entity(&train[..1], &q, m).unwrap().index, 0);
        }
        assert!(nearest_entity(&[], &train[0], Metric::Jaccard).is_err());
    }

    #[test]
    fn nearest_ties_pick_earliest() {
        let train = [
            EntityState::new(0, 0, 0, 0, 0, 2, 0, 0),
            EntityState::new(0, 0, 0, 0, 0, 0, 2, 0),
        ];
        let q = EntityState::new(0, 0, 0, 0, 0, 0, 0, 0);
        assert_eq!(nearest_entity(&train, &q, Metric::Euclidean).unwrap().index, 0);
        assert_eq!(nearest_entity(&train, &q, Metric::Jaccard).unwrap().index, 0);
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let mut rng = seeded_rng(20);
        let state = |rng: &mut rand_chacha::ChaCha8Rng| {
            EntityState::from_array(std::array::from_fn(|_| rng.random_range(0..6)))
        };
        let train: Vec<EntityState> = (0..20).map(|_| state(&mut rng)).collect();
        for _ in 0..5 {
            let q = state(&mut rng);
            for m in [Metric::Jaccard, Metric::Euclidean] {
                let dists: Vec<f64> = train.iter().map(|t| m.distance(&q, t)).collect();
                let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
                let first = dists.iter().position(|&d| d == min).unwrap();
                let hit = nearest_entity(&train, &q, m).unwrap();
                assert_eq!(hit.index, first);
                assert!(dists.iter().all(|&d| hit.distance <= d));
            }
        }
    }

    #[test]
    fn euclidean_argmin_survives_uniform_scaling() {
        let mut rng = seeded_rng(21);
        let train: Vec<EntityState> = (0..15)
            .map(|_| EntityState::from_array(std::array::from_fn(|_| rng.random_range(0..10))))
            .collect();
        let q = EntityState::from_array(std::array::from_fn(|_| rng.random_range(0..10)));
        let scale = |s: &EntityState| EntityState::from_array(s.to_array().map(|v| 3 * v));
        let scaled: Vec<EntityState> = train.iter().map(scale).collect();
        assert_eq!(
            nearest_entity(&train, &q, Metric::Euclidean).unwrap().index,
            nearest_entity(&scaled, &scale(&q), Metric::Euclidean).unwrap().index
        );
    }

    #[test]
    fn collinear_points_need_one_component() {
        let data: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let t = i as f64 * 0.7 - 2.0;
                let mut v = vec![0.25; 6];
                v[1] = 2.0 * t + 1.0;
                v[4] = -t;
                v
            })
            .collect();
        let pca = PcaModel::fit(&data, 1).unwrap();
        assert!(recon_error(&pca, &data) < 1e-16);
        let c = pca.components.row(0);
        let expected = [0.0, 2.0, 0.0, 0.0, -1.0, 0.0].map(|v: f64| v / 5f64.sqrt());
        let sign = c[1].signum();
        for (a, b) in c.iter().zip(expected) {
            assert!((a * sign - b).abs() < 1e-10);
        }
    }

    #[test]
    fn full_rank_recovery() {
        let data = random_vectors(10, 40, 1);
        let pca = PcaModel::fit(&data, 9).unwrap();
        assert!(recon_error(&pca, &data) < 1e-8);
    }

    #[test]
    fn components_orthonormal_and_variance_sorted() {
        let data = random_vectors(30, 12, 2);
        let pca = PcaModel::fit(&data, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let g = dot(pca.components.row(i), pca.components.row(j));
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        assert!(pca.explained_variance.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn eigenvalues_match_symmetric_eigensolver() {
        let data = random_vectors(10, 6, 3);
        let pca = PcaModel::fit(&data, 5).unwrap();
        let mean: Vec<f64> = (0..6).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / 10.0).collect();
        let cov = nalgebra::DMatrix::from_fn(6, 6, |a, b| {
            data.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).sum::<f64>() / 9.0
        });
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in pca.explained_variance.iter().zip(&eig) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn reconstruct_projector_properties() {
        let data = random_vectors(12, 30, 4);
        let pca = PcaModel::fit(&data, 4).unwrap();
        let at_mean = pca.reconstruct(&pca.mean).unwrap();
        assert!(at_mean.iter().zip(&pca.mean).all(|(a, b)| (a - b).abs() < 1e-12));
        for x in &data {
            let once = pca.reconstruct(x).unwrap();
            let twice = pca.reconstruct(&once).unwrap();
            assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn error_never_grows_with_k() {
        let data = random_vectors(15, 20, 5);
        let errs: Vec<f64> = (1..=5).map(|k| recon_error(&PcaModel::fit(&data, k).unwrap(), &data)).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    }

    #[test]
    fn first_component_beats_random_directions() {
        let data = random_vectors(25, 15, 6);
        let pca = PcaModel::fit(&data, 3).unwrap();
        let mut rng = seeded_rng(7);
        let variance = |dir: &[f64]| {
            data.iter().map(|x| {
                let c: Vec<f64> = x.iter().zip(&pca.mean).map(|(a, m)| a - m).collect();
                dot(&c, dir).powi(2)
            }).sum::<f64>() / 24.0
        };
        let top = variance(pca.components.row(0));
        assert!((top - pca.explained_variance[0]).abs() < 1e-10);
        for _ in 0..1000 {
            let mut d: Vec<f64> = (0..15).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm(&d);
            d.iter_mut().for_each(|v| *v /= len);
            assert!(top >= variance(&d));
        }
    }

    #[test]
    fn fit_errors() {
        let same = vec![vec![1.0, 2.0]; 4];
        let err = PcaModel::fit(&same, 1).unwrap_err();
        assert!(err.to_string().contains("identical"), "{err}");
        let data = random_vectors(4, 10, 0);
        assert!(matches!(PcaModel::fit(&data, 4), Err(Error::Config(_))));
        assert!(matches!(PcaModel::fit(&data[..1], 1), Err(Error::Data(_))));
        let pca = PcaModel::fit(&data, 2).unwrap();
        assert!(pca.reconstruct(&[0.0; 3]).is_err());
    }

    #[test]
    fn rank_deficient_data_still_yields_orthonormal_basis() {
        // Rank 1 data asked for 3 components.
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 0.0, 0.0, 0.0, 0.0]).collect();
        let pca = PcaModel::fit(&data, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let g = dot(pca.components.row(i), pca.components.row(j));
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(pca.explained_variance[1].abs() < 1e-12);
    }
}

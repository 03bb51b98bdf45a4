//! Latent-space exploration: averaging, perturbation, distance tables and
//! t-SNE projection. All embeddings use the deterministic mean path.

mod tsne;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{seeded_rng, Matrix};
use crate::onehot::encode_state;
use crate::state::EntityState;
use crate::vae::{LatentPoint, VaeModel};

pub use tsne::{
    conditional_probabilities, joint_probabilities, tsne, tsne_gradient, tsne_objective, TsneConfig,
    TsneResult,
};

/// Embeds a state through the encoder mean.
pub fn embed_state(model: &VaeModel, s: &EntityState) -> Result<LatentPoint> {
    model.embed(&encode_state(s)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairAverage {
    /// Per-feature mean, rounded down.
    pub vector_avg: EntityState,
    /// Decoded midpoint of the two embeddings.
    pub latent_avg: EntityState,
}

pub fn average_pair(a: &EntityState, b: &EntityState, model: &VaeModel) -> Result<PairAverage> {
    let (fa, fb) = (a.to_array(), b.to_array());
    let vector_avg = EntityState::from_array(std::array::from_fn(|k| (fa[k] + fb[k]).div_euclid(2)));
    let za = embed_state(model, a)?;
    let zb = embed_state(model, b)?;
    let mid: Vec<f64> = za.0.iter().zip(&zb.0).map(|(x, y)| 0.5 * (x + y)).collect();
    Ok(PairAverage { vector_avg, latent_avg: model.decode_state(&mid)? })
}

/// Offset distribution for [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbNoise {
    /// Uniform on `[-range, range]`.
    #[default]
    Uniform,
    /// Normal with σ = range/2, redrawn until inside `[-range, range]`.
    TruncatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub n: usize,
    pub range: f64,
    pub seed: u64,
    pub noise: PerturbNoise,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { n: 8, range: 0.2, seed: 0, noise: PerturbNoise::Uniform }
    }
}

/// Decodes `n` random neighbours of `center`'s embedding, each offset drawn
/// per coordinate from `config.noise`.
pub fn perturb(center: &EntityState, model: &VaeModel, config: &PerturbConfig) -> Result<Vec<EntityState>> {
    if config.n == 0 {
        return Err(Error::Config("perturbation count must be at least 1".into()));
    }
    if !(config.range > 0.0 && config.range.is_finite()) {
        return Err(Error::Config(format!("perturbation range must be positive, got {}", config.range)));
    }
    let z = embed_state(model, center)?;
    let mut rng = seeded_rng(config.seed);
    let normal = Normal::new(0.0, config.range / 2.0).map_err(|e| Error::Config(e.to_string()))?;
    let r = config.range;
    let mut out = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let shifted: Vec<f64> = z
            .0
            .iter()
            .map(|v| {
                let offset = match config.noise {
                    PerturbNoise::Uniform => rng.random_range(-r..=r),
                    PerturbNoise::TruncatedNormal => loop {
                        let d: f64 = normal.sample(&mut rng);
                        if d.abs() <= r {
                            break d;
                        }
                    },
                };
                v + offset
            })
            .collect();
        out.push(model.decode_state(&shifted)?);
    }
    Ok(out)
}

/// Pairwise Euclidean distances between embeddings; symmetric, zero diagonal.
pub fn distance_table(states: &[EntityState], model: &VaeModel) -> Result<Matrix> {
    if states.len() < 2 {
        return Err(Error::Data(format!("distance table needs at least 2 states, got {}", states.len())));
    }
    let points = states
        .iter()
        .map(|s| embed_state(model, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(latent_distances(&points))
}

pub fn latent_distances(points: &[LatentPoint]) -> Matrix {
    let n = points.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = points[i]
                .0
                .iter()
                .zip(&points[j].0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    m
}

/// Square CSV with a header row and a leading label column.
pub fn write_distance_table_csv<W: Write>(w: W, labels: &[String], table: &Matrix) -> Result<()> {
    if labels.len() != table.rows() || table.rows() != table.cols() {
        return Err(Error::Shape(format!(
            "{} labels for a {}x{} table",
            labels.len(),
            table.rows(),
            table.cols()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(std::iter::once("").chain(labels.iter().map(String::as_str)))?;
    for (i, label) in labels.iter().enumerate() {
        let cells: Vec<String> = table.row(i).iter().map(f64::to_string).collect();
        out.write_record(std::iter::once(label.as_str()).chain(cells.iter().map(String::as_str)))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `index,x,y,game_id,entity_id`.
pub fn write_tsne_csv<W: Write>(w: W, coords: &[[f64; 2]], ids: &[(i32, i32)]) -> Result<()> {
    if coords.len() != ids.len() {
        return Err(Error::Shape(format!("{} coordinates for {} id pairs", coords.len(), ids.len())));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "x", "y", "game_id", "entity_id"])?;
    for (i, (c, (g, e))) in coords.iter().zip(ids).enumerate() {
        out.write_record([i.to_string(), c[0].to_string(), c[1].to_string(), g.to_string(), e.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::{init_model, VaeHyper};

    fn model() -> VaeModel {
        init_model(VaeHyper { hidden_size: 16, ..VaeHyper::default() }, 3).unwrap()
    }

    fn states() -> Vec<EntityState> {
        vec![
            EntityState::new(0, 8, 4, 0, 0, 79, 17, 0),
            EntityState::new(1, 5, 6, 0, 0, 93, 42, 0),
            EntityState::new(2, 8, 4, -3, 1, 10, 20, 1),
            EntityState::new(3, 2, 2, 4, -7, 50, 50, 1),
        ]
    }

    #[test]
    fn vector_average_rounds_down() {
        let m = model();
        let a = EntityState::new(4, 4, 4, -3, 0, 4, 4, 0);
        let b = EntityState::new(7, 7, 7, 0, 0, 7, 7, 1);
        let avg = average_pair(&a, &b, &m).unwrap();
        assert_eq!(avg.vector_avg, EntityState::new(5, 5, 5, -2, 0, 5, 5, 0));
        let same = average_pair(&a, &a, &m).unwrap();
        assert_eq!(same.vector_avg, a);
        assert_eq!(same.latent_avg, m.reconstruct(&encode_state(&a).unwrap()).unwrap());
    }

    #[test]
    fn perturb_is_seeded_and_tends_to_center() {
        let m = model();
        let s = states()[0];
        let cfg = PerturbConfig { n: 8, range: 0.2, seed: 5, noise: PerturbNoise::Uniform };
        let a = perturb(&s, &m, &cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, perturb(&s, &m, &cfg).unwrap());
        let tiny = PerturbConfig { range: 1e-12, ..cfg };
        let center = m.reconstruct(&encode_state(&s).unwrap()).unwrap();
        assert!(perturb(&s, &m, &tiny).unwrap().iter().all(|p| *p == center));
        let tn = PerturbConfig { noise: PerturbNoise::TruncatedNormal, ..cfg };
        assert_eq!(perturb(&s, &m, &tn).unwrap(), perturb(&s, &m, &tn).unwrap());
    }

    #[test]
    fn perturb_rejects_bad_config() {
        let m = model();
        let s = states()[0];
        assert!(perturb(&s, &m, &PerturbConfig { n: 0, ..Default::default() }).is_err());
        assert!(perturb(&s, &m, &PerturbConfig { range: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn table_matches_pairwise_embedding_distances() {
        let m = model();
        let st = states();
        let t = distance_table(&st, &m).unwrap();
        let z: Vec<LatentPoint> = st.iter().map(|s| embed_state(&m, s).unwrap()).collect();
        for i in 0..4 {
            assert_eq!(t.get(i, i), 0.0);
            for j in 0..4 {
                let mut sum = 0.0;
                for k in 0..25 {
                    sum += (z[i].0[k] - z[j].0[k]) * (z[i].0[k] - z[j].0[k]);
                }
                assert!((t.get(i, j) - sum.sqrt()).abs() < 1e-12);
                assert!((t.get(i, j) - t.get(j, i)).abs() < 1e-12);
                for k in 0..4 {
                    assert!(t.get(i, k) <= t.get(i, j) + t.get(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn duplicate_rows_have_zero_distance() {
        let m = model();
        let st = vec![states()[1], states()[2], states()[1]];
        let t = distance_table(&st, &m).unwrap();
        assert_eq!(t.get(0, 2), 0.0);
        assert!(distance_table(&st[..1], &m).is_err());
    }

    #[test]
    fn table_csv_layout() {
        let t = Matrix::from_vec(2, 2, vec![0.0, 1.5, 1.5, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_distance_table_csv(&mut buf, &["a".into(), "b".into()], &t).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",a,b\na,0,1.5\nb,1.5,0\n");
    }
}

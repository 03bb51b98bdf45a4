//! Distances between entity states and the multi-method comparison report.

use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::baselines::{nearest_entity, PcaModel};
use crate::error::{Error, Result};
use crate::numkit::seeded_rng;
use crate::onehot::{decode_vector, encode_state};
use crate::state::{EntityState, NUM_FEATURES};
use crate::vae::VaeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Jaccard,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &EntityState, b: &EntityState) -> f64 {
        match self {
            Metric::Jaccard => jaccard_distance(a, b),
            Metric::Euclidean => euclidean_distance(a, b),
        }
    }
}

fn equal_count(a: &EntityState, b: &EntityState) -> usize {
    a.to_array().iter().zip(b.to_array().iter()).filter(|(x, y)| x == y).count()
}

/// Jaccard distance between the sets of `(feature index, value)` pairs.
///
/// With `m` positionally equal features the sets share `m` pairs out of
/// `16 - m`, so the distance is `1 - m / (16 - m)`.
pub fn jaccard_distance(a: &EntityState, b: &EntityState) -> f64 {
    let m = equal_count(a, b) as f64;
    1.0 - m / (2.0 * NUM_FEATURES as f64 - m)
}

pub fn euclidean_distance(a: &EntityState, b: &EntityState) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| f64::from(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub equal_count: usize,
    /// Sum of |a_k - b_k| over the mismatched features.
    pub unequal_abs_diff: i64,
    pub jaccard: f64,
    pub euclidean: f64,
}

pub fn per_entity_comparison(original: &EntityState, predicted: &EntityState) -> Comparison {
    let unequal_abs_diff = original
        .to_array()
        .iter()
        .zip(predicted.to_array().iter())
        .map(|(a, b)| i64::from((a - b).abs()))
        .sum();
    Comparison {
        equal_count: equal_count(original, predicted),
        unequal_abs_diff,
        jaccard: jaccard_distance(original, predicted),
        euclidean: euclidean_distance(original, predicted),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "SE_Euclidean")]
    SeEuclidean,
    #[serde(rename = "SE_Jaccard")]
    SeJaccard,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vae, Method::Pca, Method::SeEuclidean, Method::SeJaccard];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vae => "VAE",
            Method::Pca => "PCA",
            Method::SeEuclidean => "SE_Euclidean",
            Method::SeJaccard => "SE_Jaccard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMeans {
    pub method: Method,
    pub mean_jaccard: f64,
    pub mean_euclidean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub test_index: usize,
    pub method: Method,
    pub predicted: EntityState,
    #[serde(flatten)]
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_method: Vec<MethodMeans>,
    pub per_entity: Vec<EvalRow>,
    /// Fraction of test entities the VAE reproduces exactly.
    pub exact_match_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Permit test states that also appear in the training set.
    pub allow_overlap: bool,
}

/// Scores the VAE, PCA and both nearest-entity baselines on `test`.
///
/// PCA reconstructions go through the same segment-argmax decode as the
/// VAE output, so every method is compared in entity-state space.
pub fn evaluate(
    vae: &VaeModel,
    pca: &PcaModel,
    train: &[EntityState],
    test: &[EntityState],
    options: EvalOptions,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if !options.allow_overlap {
        let train_set: std::collections::HashSet<_> = train.iter().collect();
        if let Some((i, s)) = test.iter().enumerate().find(|(_, s)| train_set.contains(s)) {
            return Err(Error::Data(format!(
                "held-out contract violated: test row {i} {s} also appears in the training set"
            )));
        }
    }

    let mut per_entity = Vec::with_capacity(test.len() * 4);
    for (i, original) in test.iter().enumerate() {
        let x = encode_state(original)?;
        let vae_out = vae.reconstruct(&x)?;
        let pca_out = decode_vector(&pca.reconstruct(&x.to_dense())?)?;
        let se_e = nearest_entity(train, original, Metric::Euclidean)?.state;
        let se_j = nearest_entity(train, original, Metric::Jaccard)?.state;
        for (method, predicted) in [
            (Method::Vae, vae_out),
            (Method::Pca, pca_out),
            (Method::SeEuclidean, se_e),
            (Method::SeJaccard, se_j),
        ] {
            per_entity.push(EvalRow {
                test_index: i,
                method,
                predicted,
                comparison: per_entity_comparison(original, &predicted),
            });
        }
    }

    let n = test.len() as f64;
    let per_method = Method::ALL
        .iter()
        .map(|&method| {
            let rows = per_entity.iter().filter(|r| r.method == method);
            let (j, e) = rows.fold((0.0, 0.0), |(j, e), r| {
                (j + r.comparison.jaccard, e + r.comparison.euclidean)
            });
            MethodMeans { method, mean_jaccard: j / n, mean_euclidean: e / n }
        })
        .collect();
    let exact = per_entity
        .iter()
        .filter(|r| r.method == Method::Vae && r.comparison.equal_count == NUM_FEATURES)
        .count();
    Ok(EvalReport { per_method, per_entity, exact_match_rate: exact as f64 / n })
}

impl EvalReport {
    pub fn means(&self, method: Method) -> Option<&MethodMeans> {
        self.per_method.iter().find(|m| m.method == method)
    }

    /// Rows for a seeded sample of `fraction` of the test entities (at
    /// least one), all methods per sampled entity, in test order.
    pub fn sample_rows(&self, fraction: f64, seed: u64) -> Vec<&EvalRow> {
        let n_test = self.per_entity.iter().map(|r| r.test_index + 1).max().unwrap_or(0);
        if n_test == 0 {
            return Vec::new();
        }
        let k = ((fraction * n_test as f64).round() as usize).clamp(1, n_test);
        let mut picked = sample(&mut seeded_rng(seed), n_test, k).into_vec();
        picked.sort_unstable();
        self.per_entity
            .iter()
            .filter(|r| picked.binary_search(&r.test_index).is_ok())
            .collect()
    }

    /// Plain-text table of per-method means.
    pub fn summary_table(&self) -> String {
        let mut s = format!("{:<14}{:>18}{:>20}\n", "method", "jaccard distance", "euclidean distance");
        for m in &self.per_method {
            s.push_str(&format!(
                "{:<14}{:>18.4}{:>20.4}\n",
                m.method.name(),
                m.mean_jaccard,
                m.mean_euclidean
            ));
        }
        s.push_str(&format!("VAE exact-match rate: {:.4}\n", self.exact_match_rate));
        s
    }
}

/// Writes `test_index,method,equal_count,unequal_abs_diff,jaccard,euclidean`.
pub fn write_rows_csv<'a, W: Write>(w: W, rows: impl IntoIterator<Item = &'a EvalRow>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test_index", "method", "equal_count", "unequal_abs_diff", "jaccard", "euclidean"])?;
    for r in rows {
        out.write_record([
            r.test_index.to_string(),
            r.method.name().to_string(),
            r.comparison.equal_count.to_string(),
            r.comparison.unequal_abs_diff.to_string(),
            r.comparison.jaccard.to_string(),
            r.comparison.euclidean.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(f: [i32; 8]) -> EntityState {
        EntityState::from_array(f)
    }

    #[test]
    fn jaccard_cases() {
        let a = s([0, 8, 4, 0, 0, 79, 17, 0]);
        assert_eq!(jaccard_distance(&a, &a), 0.0);
        let b = s([1, 9, 5, 1, 1, 80, 18, 1]);
        assert_eq!(jaccard_distance(&a, &b), 1.0);
        let c = s([0, 8, 4, 0, 0, 79, 1, 1]);
        assert!((jaccard_distance(&a, &c) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn jaccard_strictly_decreasing_in_matches() {
        let a = s([0; 8]);
        let values: Vec<f64> = (0..=8)
            .map(|m| {
                let mut f = [1; 8];
                f[..m].fill(0);
                jaccard_distance(&a, &s(f))
            })
            .collect();
        assert_eq!(values[0], 1.0);
        assert!((values[1] - (1.0 - 1.0 / 15.0)).abs() < 1e-15);
        assert_eq!(values[8], 0.0);
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn euclidean_three_four_five() {
        let a = s([0, 8, 4, 0, 0, 79, 17, 0]);
        let b = s([0, 8, 4, 0, 4, 82, 17, 0]);
        assert_eq!(euclidean_distance(&a, &b), 5.0);
        assert_eq!(euclidean_distance(&a, &a), 0.0);
    }

    #[test]
    fn comparison_cases() {
        let a = s([0, 8, 4, 0, 0, 79, 17, 0]);
        let c = per_entity_comparison(&a, &a);
        assert_eq!((c.equal_count, c.unequal_abs_diff, c.jaccard, c.euclidean), (8, 0, 0.0, 0.0));
        let b = s([0, 8, 4, 0, 0, 86, 17, 0]);
        let c = per_entity_comparison(&a, &b);
        assert_eq!((c.equal_count, c.unequal_abs_diff, c.euclidean), (7, 7, 7.0));
        assert!((c.jaccard - (1.0 - 7.0 / 9.0)).abs() < 1e-15);
    }

    fn any_state() -> impl Strategy<Value = EntityState> {
        proptest::array::uniform8(0..4i32).prop_map(EntityState::from_array)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in any_state(), b in any_state()) {
            for m in [Metric::Jaccard, Metric::Euclidean] {
                let d = m.distance(&a, &b);
                prop_assert!(d >= 0.0);
                prop_assert_eq!(d, m.distance(&b, &a));
                prop_assert_eq!(d == 0.0, a == b);
            }
            prop_assert!(jaccard_distance(&a, &b) <= 1.0);
        }
    }

    #[test]
    fn sample_rows_takes_a_fifth_of_entities() {
        let rows = (0..10)
            .flat_map(|i| {
                Method::ALL.map(|method| EvalRow {
                    test_index: i,
                    method,
                    predicted: s([0; 8]),
                    comparison: per_entity_comparison(&s([0; 8]), &s([0; 8])),
                })
            })
            .collect();
        let report = EvalReport { per_method: vec![], per_entity: rows, exact_match_rate: 1.0 };
        let picked = report.sample_rows(0.2, 4);
        assert_eq!(picked.len(), 2 * 4);
        assert_eq!(picked, report.sample_rows(0.2, 4));
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, picked).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("test_index,method,equal_count,unequal_abs_diff,jaccard,euclidean\n"));
        assert_eq!(text.lines().count(), 9);
    }
}

use entity_embed::baselines::PcaModel;
use entity_embed::corpus::{generate_synthetic_corpus, split_dataset, SyntheticConfig};
use entity_embed::eval::{evaluate, EvalOptions, Method};
use entity_embed::latent::{average_pair, distance_table, perturb, PerturbConfig};
use entity_embed::persist::WeightDocument;
use entity_embed::vae::{init_model, train};
use entity_embed::{encode_state, TrainConfig, VaeHyper, VaeModel};

fn small_hyper() -> VaeHyper {
    VaeHyper { hidden_size: 32, latent_size: 6, ..VaeHyper::default() }
}

#[test]
fn trained_model_survives_save_and_load() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default(), 3).unwrap();
    let data: Vec<_> = corpus.states().iter().map(|s| encode_state(s).unwrap()).collect();
    let mut model = init_model(small_hyper(), 3).unwrap();
    let history = train(&mut model, &data, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
    assert_eq!(history.len(), 5);
    assert!(history[4].total < history[0].total);

    let text = model.save_json(Some(serde_json::json!({ "note": "test" }))).unwrap();
    let loaded = VaeModel::load_json(&text).unwrap();
    assert_eq!(loaded.params.flatten(), model.params.flatten());
    assert_eq!(loaded.save_json(Some(serde_json::json!({ "note": "test" }))).unwrap(), text);
    for x in data.iter().take(10) {
        assert_eq!(loaded.reconstruct(x).unwrap(), model.reconstruct(x).unwrap());
    }

    let doc = WeightDocument::from_json(&text).unwrap();
    assert_eq!(doc.blocks.len(), 10);
    assert!(WeightDocument::from_json(&text.replace("\"version\":1", "\"version\":2")).is_err());
}

#[test]
fn evaluation_on_held_out_split() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default(), 4).unwrap();
    let (train_s, test_s) = split_dataset(corpus.states(), 0.1, 4).unwrap();
    let train_x: Vec<_> = train_s.iter().map(|s| encode_state(s).unwrap()).collect();
    let mut model = init_model(small_hyper(), 4).unwrap();
    train(&mut model, &train_x, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
    let pca = PcaModel::fit_onehot(&train_x, 10).unwrap();

    let pca_doc = pca.to_document(None).unwrap();
    assert_eq!(PcaModel::from_document(&pca_doc).unwrap(), pca);

    let report = evaluate(&model, &pca, &train_s, &test_s, EvalOptions::default()).unwrap();
    assert_eq!(report.per_entity.len(), 4 * test_s.len());
    for m in Method::ALL {
        let means = report.means(m).unwrap();
        assert!((0.0..=1.0).contains(&means.mean_jaccard));
        assert!(means.mean_euclidean.is_finite());
    }
    assert!(evaluate(&model, &pca, &train_s, &train_s[..3], EvalOptions::default()).is_err());
}

#[test]
fn latent_tools_on_a_model() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default(), 6).unwrap();
    let model = init_model(small_hyper(), 6).unwrap();
    let s = corpus.states();
    let avg = average_pair(&s[0], &s[1], &model).unwrap();
    let (a, b, v) = (s[0].to_array(), s[1].to_array(), avg.vector_avg.to_array());
    for k in 0..8 {
        assert!(v[k] >= a[k].min(b[k]) && v[k] <= a[k].max(b[k]));
    }
    let table = distance_table(&s[..5], &model).unwrap();
    for i in 0..5 {
        assert_eq!(table.get(i, i), 0.0);
        for j in 0..5 {
            assert_eq!(table.get(i, j), table.get(j, i));
        }
    }
    let cfg = PerturbConfig { n: 4, seed: 2, ..PerturbConfig::default() };
    assert_eq!(perturb(&s[0], &model, &cfg).unwrap(), perturb(&s[0], &model, &cfg).unwrap());
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::HashSet;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use entity_embed::baselines::PcaModel;
use entity_embed::corpus::{generate_synthetic_corpus, read_states_csv, SyntheticConfig};
use entity_embed::eval::{euclidean_distance, jaccard_distance};
use entity_embed::latent::{
    embed_state, joint_probabilities, tsne, tsne_gradient, tsne_objective, TsneConfig,
};
use entity_embed::numkit::{finite_diff_check, seeded_rng};
use entity_embed::vae::{init_model, kl_divergence, train, LatentActivation};
use entity_embed::{decode_vector, encode_state, EntityState, TrainConfig, VaeHyper, ONEHOT_DIM};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_state(rng: &mut impl Rng) -> EntityState {
    let mut f: [i32; 8] = std::array::from_fn(|_| rng.random_range(0..=99));
    f[3] = rng.random_range(-99..=99);
    f[4] = rng.random_range(-99..=99);
    EntityState::from_array(f)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entity-embed"))
}

fn cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = bin().current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, String> {
    fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))
}

fn codec_round_trip() -> Check {
    let mut rng = seeded_rng(2024);
    for i in 0..1000 {
        let s = random_state(&mut rng);
        let back = decode_vector(&encode_state(&s).map_err(|e| e.to_string())?.to_dense())
            .map_err(|e| e.to_string())?;
        ensure(back == s, || format!("case {i}: {s} decoded as {back}"))?;
    }
    Ok("1000/1000 exact".into())
}

fn gradient_correctness() -> Check {
    let hyper = VaeHyper { input_size: 40, hidden_size: 8, latent_size: 4, latent_activation: LatentActivation::Linear };
    let mut rng = seeded_rng(17);
    let mut worst_vae = 0.0f64;
    for seed in 0..3 {
        let mut model = init_model(hyper, seed).map_err(|e| e.to_string())?;
        let mut flat = model.params.flatten();
        // Random biases too, so no block sits at exactly zero.
        flat.iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
        model.params.assign_flat(&flat).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..40).map(|_| f64::from(rng.random_bool(0.2) as u8)).collect();
        let noise: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, grad) = model.loss_and_grad(&x, &noise, 1.0).map_err(|e| e.to_string())?;
        let mut probe = model.clone();
        let err = finite_diff_check(
            |p| {
                probe.params.assign_flat(p).unwrap();
                probe.loss_at(&x, &noise, 1.0).unwrap().total
            },
            &flat,
            &grad.flatten(),
            1e-5,
        )
        .map_err(|e| e.to_string())?;
        worst_vae = worst_vae.max(err);
    }

    let points: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let p = joint_probabilities(&points, 1.5);
    let y: Vec<[f64; 2]> = (0..5).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let flat: Vec<f64> = y.iter().flatten().copied().collect();
    let grad: Vec<f64> = tsne_gradient(&p, &y).into_iter().flatten().collect();
    let worst_tsne = finite_diff_check(
        |v| tsne_objective(&p, &v.chunks_exact(2).map(|c| [c[0], c[1]]).collect::<Vec<_>>()),
        &flat,
        &grad,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    let detail = format!("VAE max rel err {worst_vae:.2e}, t-SNE {worst_tsne:.2e}");
    ensure(worst_vae < 1e-4 && worst_tsne < 1e-4, || detail.clone())?;
    Ok(detail)
}

fn overfit() -> Check {
    let corpus = generate_synthetic_corpus(
        &SyntheticConfig { games: 2, archetypes_per_game: 5, states_per_archetype: 5 },
        42,
    )
    .map_err(|e| e.to_string())?;
    let states = corpus.states();
    ensure(states.len() == 50, || format!("corpus has {} states, expected 50", states.len()))?;
    let data = states.iter().map(encode_state).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let mut model = init_model(VaeHyper::default(), 42).map_err(|e| e.to_string())?;
    let config = TrainConfig { epochs: 3000, seed: 42, ..TrainConfig::default() };
    let history = train(&mut model, &data, &config).map_err(|e| e.to_string())?;
    let (first, last) = (history[0].total, history[history.len() - 1].total);
    let drop = (first - last) / first;
    let exact = data
        .iter()
        .zip(states)
        .filter(|(x, s)| model.reconstruct(x).is_ok_and(|r| r == **s))
        .count();
    let rate = exact as f64 / states.len() as f64;
    let detail = format!("exact {exact}/50 = {rate:.2}, loss {first:.4} -> {last:.6} (drop {:.1}%)", 100.0 * drop);
    ensure(rate >= 0.90 && drop >= 0.90, || detail.clone())?;
    Ok(detail)
}

struct Row {
    test_index: usize,
    method: String,
    jaccard: f64,
    euclidean: f64,
}

fn read_rows(bytes: &[u8]) -> Result<Vec<Row>, String> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let r = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| r[i].parse::<f64>().map_err(|e| e.to_string());
        rows.push(Row {
            test_index: r[0].parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
            method: r[1].to_string(),
            jaccard: num(4)?,
            euclidean: num(5)?,
        });
    }
    Ok(rows)
}

/// Jaccard distance over `(feature, value)` pairs, straight from the set definition.
fn jaccard_oracle(a: &EntityState, b: &EntityState) -> f64 {
    let sa: HashSet<(usize, i32)> = a.to_array().into_iter().enumerate().collect();
    let sb: HashSet<(usize, i32)> = b.to_array().into_iter().enumerate().collect();
    1.0 - sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

fn euclidean_oracle(a: &EntityState, b: &EntityState) -> f64 {
    let (fa, fb) = (a.to_array(), b.to_array());
    let mut sum = 0i64;
    for k in 0..8 {
        let d = i64::from(fa[k] - fb[k]);
        sum += d * d;
    }
    (sum as f64).sqrt()
}

fn held_out_pipeline() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    cli(d, &["gen-synthetic", "--games", "2", "--archetypes", "4", "--states", "25", "--seed", "8", "--out", "gen"])?;
    cli(d, &["split", "--data", "gen/dataset.csv", "--test-frac", "0.1", "--seed", "8", "--out-train", "train.csv", "--out-test", "test.csv"])?;
    cli(d, &["train", "--train", "train.csv", "--epochs", "200", "--seed", "8", "--model-out", "model.json"])?;
    cli(
        d,
        &[
            "eval", "--model", "model.json", "--train", "train.csv", "--test", "test.csv", "--k", "25",
            "--report-out", "report.json", "--per-entity-out", "rows.csv",
        ],
    )?;
    let all = read_states_csv(&read(d, "gen/dataset.csv")?[..]).map_err(|e| e.to_string())?;
    let train_s = read_states_csv(&read(d, "train.csv")?[..]).map_err(|e| e.to_string())?;
    let test_s = read_states_csv(&read(d, "test.csv")?[..]).map_err(|e| e.to_string())?;
    ensure(all.len() >= 200, || format!("corpus has {} states", all.len()))?;
    ensure(test_s.len() == all.len() / 10, || format!("{} test states of {}", test_s.len(), all.len()))?;

    let rows = read_rows(&read(d, "rows.csv")?)?;
    let methods: HashSet<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    ensure(methods == HashSet::from(["VAE", "PCA", "SE_Euclidean", "SE_Jaccard"]), || format!("methods {methods:?}"))?;
    ensure(rows.len() == 4 * test_s.len(), || format!("{} rows", rows.len()))?;

    for r in &rows {
        let t = &test_s[r.test_index];
        match r.method.as_str() {
            "SE_Euclidean" | "SE_Jaccard" => {
                let euclid = r.method == "SE_Euclidean";
                let primary = |s: &EntityState| if euclid { euclidean_oracle(t, s) } else { jaccard_oracle(t, s) };
                let best = train_s.iter().map(primary).fold(f64::INFINITY, f64::min);
                let first = train_s.iter().find(|s| primary(s) == best).expect("non-empty train");
                let (want_j, want_e) = (jaccard_oracle(t, first), euclidean_oracle(t, first));
                ensure((r.jaccard - want_j).abs() < 1e-12 && (r.euclidean - want_e).abs() < 1e-12, || {
                    format!(
                        "{} row {}: got ({}, {}), exhaustive argmin gives ({want_j}, {want_e})",
                        r.method, r.test_index, r.jaccard, r.euclidean
                    )
                })?;
            }
            _ => ensure(
                r.jaccard.is_finite() && r.euclidean.is_finite() && (0.0..=1.0).contains(&r.jaccard),
                || format!("{} row {}: jaccard {} euclidean {}", r.method, r.test_index, r.jaccard, r.euclidean),
            )?,
        }
    }
    let report: serde_json::Value = serde_json::from_slice(&read(d, "report.json")?).map_err(|e| e.to_string())?;
    let means: Vec<String> = report["per_method"]
        .as_array()
        .ok_or("report lacks per_method")?
        .iter()
        .map(|m| {
            let v = |k: &str| m[k].as_f64().unwrap_or(f64::NAN);
            format!("{} {:.3}/{:.2}", m["method"].as_str().unwrap_or("?"), v("mean_jaccard"), v("mean_euclidean"))
        })
        .collect();
    Ok(format!("{} states, {} test; {}", all.len(), test_s.len(), means.join(", ")))
}

fn metric_oracles() -> Check {
    let mut rng = seeded_rng(99);
    let mut shared = [0usize; 9];
    for i in 0..100 {
        let a = random_state(&mut rng);
        // Copy a random subset of features so every overlap size shows up.
        let mut fb = random_state(&mut rng).to_array();
        let fa = a.to_array();
        for k in 0..8 {
            if rng.random_bool(i as f64 / 100.0) {
                fb[k] = fa[k];
            }
        }
        let b = EntityState::from_array(fb);
        shared[(0..8).filter(|&k| fa[k] == fb[k]).count()] += 1;
        let (j, e) = (jaccard_distance(&a, &b), euclidean_distance(&a, &b));
        ensure((j - jaccard_oracle(&a, &b)).abs() <= 1e-12, || format!("pair {i}: jaccard {j}"))?;
        ensure((e - euclidean_oracle(&a, &b)).abs() <= 1e-12, || format!("pair {i}: euclidean {e}"))?;
    }
    Ok(format!("100 pairs, overlap histogram {shared:?}"))
}

fn kl_properties() -> Check {
    let mut rng = seeded_rng(5);
    let mut min_kl = f64::INFINITY;
    for i in 0..1000 {
        let l = rng.random_range(1..=30);
        let mu: Vec<f64> = (0..l).map(|_| rng.random_range(-5.0..5.0)).collect();
        let logvar: Vec<f64> = (0..l).map(|_| rng.random_range(-5.0..5.0)).collect();
        let kl = kl_divergence(&mu, &logvar);
        ensure(kl >= 0.0, || format!("case {i}: kl = {kl}"))?;
        min_kl = min_kl.min(kl);
    }
    let zero = kl_divergence(&[0.0; 25], &[0.0; 25]);
    ensure(zero == 0.0, || format!("kl(0, 0) = {zero}"))?;
    let closed = kl_divergence(&[1.0; 25], &[0.0; 25]);
    ensure((closed - 12.5).abs() <= 1e-12, || format!("kl(1, 0) = {closed}"))?;
    Ok(format!("min over 1000 cases {min_kl:.3e}, kl(1,0) = {closed}"))
}

fn pca_correctness() -> Check {
    let mut rng = seeded_rng(31);
    let (n, d) = (10, 16);
    let data: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let pca = PcaModel::fit(&data, n - 1).map_err(|e| e.to_string())?;
    let mut recon_err = 0.0f64;
    for x in &data {
        let r = pca.reconstruct(x).map_err(|e| e.to_string())?;
        recon_err = recon_err.max(x.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    ensure(recon_err < 1e-8, || format!("full-rank reconstruction error {recon_err:.2e}"))?;

    let k = pca.k();
    let mut ortho_err = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = pca.components.row(i).iter().zip(pca.components.row(j)).map(|(a, b)| a * b).sum();
            ortho_err = ortho_err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ensure(ortho_err < 1e-8, || format!("orthonormality error {ortho_err:.2e}"))?;

    let mean: Vec<f64> = (0..d).map(|c| data.iter().map(|x| x[c]).sum::<f64>() / n as f64).collect();
    let variance_along = |u: &[f64]| {
        data.iter()
            .map(|x| x.iter().zip(&mean).zip(u).map(|((a, m), w)| (a - m) * w).sum::<f64>().powi(2))
            .sum::<f64>()
            / (n - 1) as f64
    };
    let top = variance_along(pca.components.row(0));
    let mut best_random = 0.0f64;
    for _ in 0..1000 {
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = u.iter().map(|v| v / norm).collect();
        best_random = best_random.max(variance_along(&u));
    }
    ensure(top >= best_random - 1e-12, || format!("first component variance {top} < random direction {best_random}"))?;
    Ok(format!("recon {recon_err:.1e}, ortho {ortho_err:.1e}, top variance {top:.4} >= {best_random:.4}"))
}

fn tsne_clusters() -> Check {
    // One archetype per game: each game is a single tight family of states.
    let corpus = generate_synthetic_corpus(
        &SyntheticConfig { games: 2, archetypes_per_game: 1, states_per_archetype: 40 },
        12,
    )
    .map_err(|e| e.to_string())?;
    let states = corpus.states();
    let data = states.iter().map(encode_state).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let hyper = VaeHyper { hidden_size: 64, ..VaeHyper::default() };
    let mut model = init_model(hyper, 12).map_err(|e| e.to_string())?;
    train(&mut model, &data, &TrainConfig { epochs: 300, seed: 12, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let points = states
        .iter()
        .map(|s| embed_state(&model, s).map(|z| z.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let res = tsne(&points, &TsneConfig { seed: 12, ..TsneConfig::default() }).map_err(|e| e.to_string())?;

    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let (a, b) = (res.coords[i], res.coords[j]);
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if states[i].game_id == states[j].game_id {
                intra += dist;
                n_intra += 1;
            } else {
                inter += dist;
                n_inter += 1;
            }
        }
    }
    let (intra, inter) = (intra / n_intra as f64, inter / n_inter as f64);
    let detail = format!(
        "{} points, intra {intra:.2} vs inter {inter:.2}, KL {:.4} -> {:.4}",
        states.len(),
        res.initial_kl,
        res.final_kl
    );
    ensure(intra < inter && res.final_kl < res.initial_kl, || detail.clone())?;
    Ok(detail)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    cli(d, &["gen-synthetic", "--games", "2", "--archetypes", "2", "--states", "15", "--seed", "4", "--out", "gen"])?;
    let data = "gen/dataset.csv";
    for m in ["a.json", "b.json"] {
        cli(d, &["train", "--train", data, "--epochs", "20", "--seed", "4", "--model-out", m])?;
    }
    ensure(read(d, "a.json")? == read(d, "b.json")?, || "model documents differ".into())?;
    cli(d, &["embed", "--model", "a.json", "--data", data, "--out", "z.csv"])?;
    for t in ["t1.csv", "t2.csv"] {
        cli(d, &["tsne", "--embeddings", "z.csv", "--seed", "4", "--out", t])?;
    }
    ensure(read(d, "t1.csv")? == read(d, "t2.csv")?, || "t-SNE outputs differ".into())?;
    for p in ["p1.csv", "p2.csv"] {
        cli(d, &["explore", "perturb", "--model", "a.json", "--data", data, "--i", "3", "--seed", "4", "--out", p])?;
    }
    ensure(read(d, "p1.csv")? == read(d, "p2.csv")?, || "perturbation outputs differ".into())?;
    Ok(format!("model {} bytes, t-SNE and perturb identical", read(d, "a.json")?.len()))
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "codec round trip", limit: Some(Duration::from_secs(1)), run: codec_round_trip },
    Criterion { name: "gradient correctness", limit: Some(Duration::from_secs(30)), run: gradient_correctness },
    Criterion { name: "overfit 50-state corpus", limit: Some(Duration::from_secs(300)), run: overfit },
    Criterion { name: "held-out pipeline", limit: Some(Duration::from_secs(600)), run: held_out_pipeline },
    Criterion { name: "metric oracles", limit: None, run: metric_oracles },
    Criterion { name: "KL properties", limit: None, run: kl_properties },
    Criterion { name: "PCA correctness", limit: None, run: pca_correctness },
    Criterion { name: "t-SNE two-cluster analog", limit: Some(Duration::from_secs(120)), run: tsne_clusters },
    Criterion { name: "determinism", limit: None, run: determinism },
];

fn main() -> ExitCode {
    assert_eq!(ONEHOT_DIM, 1600);
    let mut failures = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let outcome = panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| match c.limit {
            Some(limit) if elapsed > limit => Err(format!("{detail}; exceeded {}s", limit.as_secs())),
            _ => Ok(detail),
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {}: {detail} [{:.2}s]", c.name, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failures, CRITERIA.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

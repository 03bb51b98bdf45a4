use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use entity_embed::baselines::{PcaModel, DEFAULT_COMPONENTS};
use entity_embed::corpus::{
    generate_synthetic_rules, parse_rules, split_dataset, write_rules, write_states_csv, Corpus,
    SyntheticConfig,
};
use entity_embed::eval::{evaluate, write_rows_csv, EvalOptions};
use entity_embed::latent::{
    average_pair, distance_table, embed_state, perturb, tsne, write_distance_table_csv, write_tsne_csv,
    PerturbConfig, TsneConfig,
};
use entity_embed::vae::{init_model, train, DEFAULT_HIDDEN, DEFAULT_LATENT};
use entity_embed::{encode_state, EntityState, Error, TrainConfig, VaeHyper, VaeModel, ONEHOT_DIM};
use serde_json::{json, Value};

use crate::artifacts::{check_output, provenance, read_latent, read_model, read_states, Outputs};
use crate::config::{pick, FileConfig};
use crate::{
    AverageArgs, Command, DecodeArgs, EmbedArgs, EvalArgs, ExploreCommand, GenSyntheticArgs, ModelData,
    ParseArgs, PerturbArgs, SplitArgs, TableArgs, TrainArgs, TsneArgs,
};

const DEFAULT_TEST_FRAC: f64 = 0.1;
const DEFAULT_SAMPLE_FRAC: f64 = 0.2;

pub fn run(command: Command, file: &FileConfig) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a, file),
        Command::Parse(a) => parse(a),
        Command::Split(a) => split(a, file),
        Command::Train(a) => train_cmd(a, file),
        Command::Eval(a) => eval(a, file),
        Command::Embed(a) => embed(a),
        Command::Decode(a) => decode(a),
        Command::Explore(ExploreCommand::Average(a)) => explore_average(a),
        Command::Explore(ExploreCommand::Perturb(a)) => explore_perturb(a, file),
        Command::Explore(ExploreCommand::Table(a)) => explore_table(a),
        Command::Tsne(a) => tsne_cmd(a, file),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn symbol_paths(dataset: &Path) -> (PathBuf, PathBuf) {
    (dataset.with_extension("entities.csv"), dataset.with_extension("games.csv"))
}

fn stage_corpus(out: &mut Outputs, dataset: &Path, corpus: &Corpus, prov: &Value) -> Result<()> {
    let (entities, games) = symbol_paths(dataset);
    out.render(dataset, |w| write_states_csv(w, corpus.states()))?;
    out.render(&entities, |w| corpus.entity_symbols.write_csv(w))?;
    out.render(&games, |w| corpus.game_symbols.write_csv(w))?;
    out.sidecar(dataset, prov)?;
    Ok(())
}

fn gen_synthetic(a: GenSyntheticArgs, file: &FileConfig) -> Result<()> {
    let f = &file.synthetic;
    let defaults = SyntheticConfig::default();
    let config = SyntheticConfig {
        games: pick(a.games, f.games, defaults.games),
        archetypes_per_game: pick(a.archetypes, f.archetypes, defaults.archetypes_per_game),
        states_per_archetype: pick(a.states, f.states, defaults.states_per_archetype),
    };
    let seed = pick(a.seed, f.seed, 0);
    config.validate()?;
    if a.out.is_file() {
        return Err(usage(format!("output {} is a file, expected a directory", a.out.display())));
    }

    let games = generate_synthetic_rules(&config, seed)?;
    let mut corpus = Corpus::new();
    for (label, rules) in &games {
        corpus.absorb_rules(rules, label)?;
    }
    let prov = provenance(
        "gen-synthetic",
        json!({
            "games": config.games,
            "archetypes": config.archetypes_per_game,
            "states": config.states_per_archetype,
            "seed": seed,
        }),
    );

    let mut out = Outputs::default();
    for (label, rules) in &games {
        let dir = a.out.join("rules").join(label);
        fs::create_dir_all(&dir)?;
        out.add(&dir.join("rules.txt"), write_rules(rules).into_bytes());
    }
    stage_corpus(&mut out, &a.out.join("dataset.csv"), &corpus, &prov)?;
    out.commit()?;
    eprintln!("{} games, {} entity states", games.len(), corpus.len());
    Ok(())
}

fn parse_game_arg(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((label, dir)) if !label.trim().is_empty() && !dir.is_empty() => {
            Ok((label.trim().to_string(), PathBuf::from(dir)))
        }
        _ => Err(usage(format!("--game expects LABEL=DIR, got `{s}`"))),
    }
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display())).map_err(as_data)? {
        let path = entry?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        let wanted = if want_dirs {
            path.is_dir()
        } else {
            path.is_file() && matches!(path.extension().and_then(|e| e.to_str()), Some("txt" | "rules"))
        };
        if wanted {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn as_data(e: anyhow::Error) -> anyhow::Error {
    if e.chain().any(|c| c.is::<Error>()) {
        e
    } else {
        Error::Data(format!("{e:#}")).into()
    }
}

fn parse(a: ParseArgs) -> Result<()> {
    let mut sources = Vec::new();
    if let Some(root) = &a.rules {
        if !root.is_dir() {
            return Err(usage(format!("--rules {} is not a directory", root.display())));
        }
    }
    for g in &a.games {
        sources.push(parse_game_arg(g)?);
    }
    check_output(&a.out)?;
    if let Some(root) = &a.rules {
        let mut from_root = Vec::new();
        for dir in sorted_entries(root, true)? {
            let label = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            from_root.push((label, dir));
        }
        sources.splice(0..0, from_root);
    }
    if sources.is_empty() {
        return Err(usage("no rule sources: pass --rules and/or --game"));
    }
    let mut labels = HashSet::new();
    for (label, _) in &sources {
        if !labels.insert(label.as_str()) {
            return Err(usage(format!("game label `{label}` given twice")));
        }
    }

    let mut corpus = Corpus::new();
    let mut report = Vec::new();
    for (label, dir) in &sources {
        let files = sorted_entries(dir, false)?;
        if files.is_empty() {
            return Err(Error::Data(format!("game `{label}`: no .txt or .rules files in {}", dir.display())).into());
        }
        for path in files {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(as_data)?;
            let rules = parse_rules(&text).with_context(|| path.display().to_string())?;
            let s = corpus.absorb_rules(&rules, label).with_context(|| path.display().to_string())?;
            report.push(json!({
                "game": label,
                "file": path_str(&path),
                "rules": s.rules,
                "states_added": s.states_added,
                "duplicates": s.duplicates,
                "incomplete": s.incomplete,
            }));
        }
    }
    if corpus.is_empty() {
        return Err(Error::Data("rule files yielded no complete entity states".into()).into());
    }
    let sources_json: Vec<Value> = sources
        .iter()
        .map(|(l, d)| json!({ "game": l, "dir": path_str(d) }))
        .collect();
    let prov = provenance("parse", json!({ "sources": sources_json, "files": report }));
    let mut out = Outputs::default();
    stage_corpus(&mut out, &a.out, &corpus, &prov)?;
    out.commit()?;
    eprintln!("{} games, {} entity states", corpus.game_symbols.len(), corpus.len());
    Ok(())
}

fn split(a: SplitArgs, file: &FileConfig) -> Result<()> {
    let test_frac = pick(a.test_frac, file.split.test_frac, DEFAULT_TEST_FRAC);
    let seed = pick(a.seed, file.split.seed, 0);
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(usage(format!("--test-frac must lie in (0, 1), got {test_frac}")));
    }
    check_output(&a.out_train)?;
    check_output(&a.out_test)?;
    if a.out_train == a.out_test {
        return Err(usage("--out-train and --out-test name the same file"));
    }
    let states = read_states(&a.data)?;
    let (tr, te) = split_dataset(&states, test_frac, seed)?;
    let prov = provenance(
        "split",
        json!({ "data": path_str(&a.data), "test_frac": test_frac, "seed": seed }),
    );
    let mut out = Outputs::default();
    out.render(&a.out_train, |w| write_states_csv(w, &tr))?;
    out.render(&a.out_test, |w| write_states_csv(w, &te))?;
    out.sidecar(&a.out_train, &prov)?;
    out.sidecar(&a.out_test, &prov)?;
    out.commit()?;
    eprintln!("{} train, {} test", tr.len(), te.len());
    Ok(())
}

fn train_cmd(a: TrainArgs, file: &FileConfig) -> Result<()> {
    let f = &file.train;
    let d = TrainConfig::default();
    let hyper = VaeHyper {
        input_size: ONEHOT_DIM,
        hidden_size: pick(a.hidden, f.hidden, DEFAULT_HIDDEN),
        latent_size: pick(a.latent, f.latent, DEFAULT_LATENT),
        latent_activation: pick(a.latent_activation.map(Into::into), f.latent_activation, Default::default()),
    };
    let config = TrainConfig {
        epochs: pick(a.epochs, f.epochs, d.epochs),
        batch_size: pick(a.batch, f.batch, d.batch_size),
        lr: pick(a.lr, f.lr, d.lr),
        seed: pick(a.seed, f.seed, d.seed),
        kl_weight: pick(a.kl_weight, f.kl_weight, d.kl_weight),
        shuffle: if a.no_shuffle { false } else { f.shuffle.unwrap_or(d.shuffle) },
    };
    hyper.validate()?;
    config.validate()?;
    check_output(&a.model_out)?;
    if let Some(h) = &a.history_out {
        check_output(h)?;
    }

    let states = read_states(&a.train)?;
    if states.is_empty() {
        return Err(Error::Data(format!("{}: no training states", a.train.display())).into());
    }
    let data = states.iter().map(encode_state).collect::<entity_embed::Result<Vec<_>>>()?;
    let mut model = init_model(hyper, config.seed)?;
    let history = train(&mut model, &data, &config)?;

    let resolved = json!({
        "train": path_str(&a.train),
        "train_size": states.len(),
        "hyper": hyper,
        "train_config": config,
    });
    let mut meta = provenance("train", resolved.clone());
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        meta["result"] = json!({ "first_epoch_loss": first.total, "final_loss": last.total });
    }
    let mut out = Outputs::default();
    out.add(&a.model_out, model.save_json(Some(meta))?.into_bytes());
    if let Some(h) = &a.history_out {
        out.render(h, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["epoch", "total", "recon", "kl"])?;
            for e in &history {
                csv.write_record([e.epoch.to_string(), e.total.to_string(), e.recon.to_string(), e.kl.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        out.sidecar(h, &provenance("train", resolved))?;
    }
    out.commit()?;
    match history.last() {
        Some(last) => eprintln!("{} epochs, final loss {:.6}", history.len(), last.total),
        None => eprintln!("0 epochs, model left at initialization"),
    }
    Ok(())
}

fn eval(a: EvalArgs, file: &FileConfig) -> Result<()> {
    let f = &file.eval;
    let k = pick(a.k, f.k, DEFAULT_COMPONENTS);
    let allow_overlap = a.allow_overlap || f.allow_overlap.unwrap_or(false);
    let sample_frac = pick(a.sample_frac, f.sample_frac, DEFAULT_SAMPLE_FRAC);
    let sample_seed = pick(a.sample_seed, f.sample_seed, 0);
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if !(sample_frac > 0.0 && sample_frac <= 1.0) {
        return Err(usage(format!("--sample-frac must lie in (0, 1], got {sample_frac}")));
    }
    check_output(&a.report_out)?;
    check_output(&a.per_entity_out)?;
    if let Some(s) = &a.sample_out {
        check_output(s)?;
    }

    let model = read_model(&a.model)?;
    let train_states = read_states(&a.train)?;
    let test_states = read_states(&a.test)?;
    let train_x = train_states.iter().map(encode_state).collect::<entity_embed::Result<Vec<_>>>()?;
    let pca = PcaModel::fit_onehot(&train_x, k)?;
    let report = evaluate(&model, &pca, &train_states, &test_states, EvalOptions { allow_overlap })?;

    let resolved = json!({
        "model": path_str(&a.model),
        "train": path_str(&a.train),
        "test": path_str(&a.test),
        "k": k,
        "allow_overlap": allow_overlap,
        "sample_frac": sample_frac,
        "sample_seed": sample_seed,
    });
    let per_method: Vec<Value> = report
        .per_method
        .iter()
        .map(|m| json!({ "method": m.method.name(), "mean_jaccard": m.mean_jaccard, "mean_euclidean": m.mean_euclidean }))
        .collect();
    let doc = json!({
        "provenance": provenance("eval", resolved.clone()),
        "train_size": train_states.len(),
        "test_size": test_states.len(),
        "per_method": per_method,
        "exact_match_rate": report.exact_match_rate,
        "pca_explained_variance": pca.explained_variance.iter().sum::<f64>(),
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');

    let prov = provenance("eval", resolved);
    let mut out = Outputs::default();
    out.add(&a.report_out, text.into_bytes());
    out.render(&a.per_entity_out, |w| write_rows_csv(w, &report.per_entity))?;
    out.sidecar(&a.per_entity_out, &prov)?;
    if let Some(s) = &a.sample_out {
        let rows = report.sample_rows(sample_frac, sample_seed);
        out.render(s, |w| write_rows_csv(w, rows))?;
        out.sidecar(s, &prov)?;
    }
    out.commit()?;
    print!("{}", report.summary_table());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    check_output(&a.out)?;
    let model = read_model(&a.model)?;
    let states = read_states(&a.data)?;
    let prov = provenance("embed", json!({ "model": path_str(&a.model), "data": path_str(&a.data) }));
    let mut out = Outputs::default();
    out.render(&a.out, |w| {
        let latent = model.hyper.latent_size;
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string()];
        header.extend((1..=latent).map(|i| format!("z{i}")));
        header.extend(["game_id".to_string(), "entity_id".to_string()]);
        csv.write_record(&header)?;
        for (i, s) in states.iter().enumerate() {
            let z = embed_state(&model, s)?;
            let mut row = vec![i.to_string()];
            row.extend(z.0.iter().map(f64::to_string));
            row.extend([s.game_id.to_string(), s.entity_id.to_string()]);
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.sidecar(&a.out, &prov)?;
    out.commit()?;
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    check_output(&a.out)?;
    let model = read_model(&a.model)?;
    let table = read_latent(&a.latent)?;
    let states = table
        .points
        .iter()
        .map(|z| model.decode_state(z))
        .collect::<entity_embed::Result<Vec<_>>>()?;
    let prov = provenance("decode", json!({ "model": path_str(&a.model), "latent": path_str(&a.latent) }));
    let mut out = Outputs::default();
    out.render(&a.out, |w| write_states_csv(w, &states))?;
    out.sidecar(&a.out, &prov)?;
    out.commit()?;
    Ok(())
}

fn load_model_data(io: &ModelData) -> Result<(VaeModel, Vec<EntityState>)> {
    if let Some(o) = &io.out {
        check_output(o)?;
    }
    Ok((read_model(&io.model)?, read_states(&io.data)?))
}

fn row(states: &[EntityState], i: usize) -> Result<EntityState> {
    states
        .get(i)
        .copied()
        .ok_or_else(|| usage(format!("index {i} out of range for {} states", states.len())))
}

fn emit(io: &ModelData, bytes: Vec<u8>, prov: Value) -> Result<()> {
    match &io.out {
        Some(path) => {
            let mut out = Outputs::default();
            out.add(path, bytes);
            out.sidecar(path, &prov)?;
            out.commit()?;
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn explore_average(a: AverageArgs) -> Result<()> {
    let (model, states) = load_model_data(&a.io)?;
    let (sa, sb) = (row(&states, a.i)?, row(&states, a.j)?);
    let avg = average_pair(&sa, &sb, &model)?;
    let mut buf = Vec::new();
    {
        let mut csv = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["kind"];
        header.extend(entity_embed::state::FEATURE_NAMES);
        csv.write_record(&header)?;
        for (kind, s) in [("a", sa), ("b", sb), ("vector_avg", avg.vector_avg), ("latent_avg", avg.latent_avg)] {
            let mut r = vec![kind.to_string()];
            r.extend(s.to_array().iter().map(i32::to_string));
            csv.write_record(&r)?;
        }
        csv.flush()?;
    }
    let prov = provenance(
        "explore average",
        json!({ "model": path_str(&a.io.model), "data": path_str(&a.io.data), "i": a.i, "j": a.j }),
    );
    emit(&a.io, buf, prov)
}

fn explore_perturb(a: PerturbArgs, file: &FileConfig) -> Result<()> {
    let f = &file.perturb;
    let d = PerturbConfig::default();
    let config = PerturbConfig {
        n: pick(a.n, f.n, d.n),
        range: pick(a.range, f.range, d.range),
        seed: pick(a.seed, f.seed, d.seed),
        noise: pick(a.noise.map(Into::into), f.noise, d.noise),
    };
    if config.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if !(config.range > 0.0 && config.range.is_finite()) {
        return Err(usage(format!("--range must be positive, got {}", config.range)));
    }
    let (model, states) = load_model_data(&a.io)?;
    let center = row(&states, a.i)?;
    let neighbours = perturb(&center, &model, &config)?;
    let mut buf = Vec::new();
    write_states_csv(&mut buf, &neighbours)?;
    let prov = provenance(
        "explore perturb",
        json!({ "model": path_str(&a.io.model), "data": path_str(&a.io.data), "i": a.i, "perturb": config }),
    );
    emit(&a.io, buf, prov)
}

fn explore_table(a: TableArgs) -> Result<()> {
    let (model, states) = load_model_data(&a.io)?;
    let chosen = a.indices.iter().map(|&i| row(&states, i)).collect::<Result<Vec<_>>>()?;
    let table = distance_table(&chosen, &model)?;
    let labels: Vec<String> = a
        .indices
        .iter()
        .zip(&chosen)
        .map(|(i, s)| format!("{i}:g{}e{}", s.game_id, s.entity_id))
        .collect();
    let mut buf = Vec::new();
    write_distance_table_csv(&mut buf, &labels, &table)?;
    let prov = provenance(
        "explore table",
        json!({ "model": path_str(&a.io.model), "data": path_str(&a.io.data), "indices": a.indices }),
    );
    emit(&a.io, buf, prov)
}

fn tsne_cmd(a: TsneArgs, file: &FileConfig) -> Result<()> {
    let f = &file.tsne;
    let d = TsneConfig::default();
    let config = TsneConfig {
        perplexity: pick(a.perplexity, f.perplexity, d.perplexity),
        iterations: pick(a.iters, f.iters, d.iterations),
        learning_rate: pick(a.learning_rate, f.learning_rate, d.learning_rate),
        seed: pick(a.seed, f.seed, d.seed),
        ..d
    };
    config.validate()?;
    check_output(&a.out)?;
    let table = read_latent(&a.embeddings)?;
    let ids = table.ids.ok_or_else(|| {
        Error::Data(format!("{}: t-SNE input needs game_id and entity_id columns", a.embeddings.display()))
    })?;
    let res = tsne(&table.points, &config)?;
    let mut prov = provenance("tsne", json!({ "embeddings": path_str(&a.embeddings), "tsne": config }));
    prov["result"] = json!({
        "effective_perplexity": res.perplexity,
        "initial_kl": res.initial_kl,
        "final_kl": res.final_kl,
    });
    let mut out = Outputs::default();
    out.render(&a.out, |w| write_tsne_csv(w, &res.coords, &ids))?;
    out.sidecar(&a.out, &prov)?;
    out.commit()?;
    eprintln!("KL {:.6} -> {:.6} (perplexity {})", res.initial_kl, res.final_kl, res.perplexity);
    Ok(())
}

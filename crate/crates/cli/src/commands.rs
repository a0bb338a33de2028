use std::path::Path;

use disc::detectors::{threshold_decide, ClassifierConfig, ClassifierHead, IForestConfig, IsolationForest, KMeansConfig, KMeansModel};
use disc::diffusion::{train_denoiser, DenoiserCheckpoint, DenoiserModel, NoisePredictor};
use disc::eval::{clustering_accuracy, default_normalizer, generate_data, run_benchmark, TrajectorySpec};
use disc::io::{read_json, write_atomic, write_csv_meta, write_json, Provenance};
use disc::metrics::Modality;
use disc::shiftgen::{load_csv_tabular, raster_header_path, read_raster, write_corpus, Corpus, ID_LABEL};
use disc::theory::{run_demo, TheoryDemoParams, TheoryReport};
use disc::trajectory::{embed_all, EmbeddingTable, Standardizer};
use serde::{Deserialize, Serialize};

use crate::config::{resolve, Overrides, RunConfig};
use crate::CliError;

type CliResult = Result<(), CliError>;

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Core(disc::Error::data(msg))
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| data_err(format!("csv flush failed: {e}")))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

/// Raster when a header sidecar exists, otherwise CSV with an optional
/// `label` column.
pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    if raster_header_path(path).exists() {
        return Ok(read_raster(path)?);
    }
    let text = std::fs::read_to_string(path).map_err(|e| disc::Error::io(path, e))?;
    let has_label = text
        .lines()
        .next()
        .is_some_and(|h| h.split(',').any(|c| c.trim() == "label"));
    Ok(load_csv_tabular(path, has_label.then_some("label"))?)
}

pub fn init_config(modality: Modality, out: Option<&Path>) -> CliResult {
    let cfg = RunConfig::preset(modality);
    let mut text = serde_json::to_string_pretty(&cfg).map_err(disc::Error::from)?;
    text.push('\n');
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct CorpusEntry {
    name: String,
    file: String,
    n: usize,
}

#[derive(Serialize)]
struct DataManifest {
    format_version: u32,
    provenance: Provenance,
    seed: u64,
    corpora: Vec<CorpusEntry>,
}

pub fn gen_data(config: Option<&Path>, preset: Option<Modality>, overrides: &Overrides) -> CliResult {
    let cfg = resolve(config, preset, overrides)?;
    let bench = cfg.to_bench();
    let seed = cfg.seeds[0];
    let (data, _) = generate_data(&bench, seed).map_err(|e| e.in_stage("generate-data"))?;
    let ext = match cfg.modality {
        Modality::Image => "f32",
        Modality::Tabular => "csv",
    };
    let mut named = vec![
        ("train".to_string(), data.train.clone()),
        ("fit".to_string(), data.fit.clone().relabel(ID_LABEL)),
        ("test".to_string(), data.test.clone().relabel(ID_LABEL)),
    ];
    for (f, c) in cfg.families.iter().zip(&data.families) {
        named.push((f.label.clone(), c.clone()));
    }
    if !data.families.is_empty() {
        named.push(("ood".to_string(), Corpus::concat(&data.families)?));
    }
    let mut corpora = Vec::new();
    for (name, corpus) in &named {
        let file = format!("{name}.{ext}");
        write_corpus(corpus, &cfg.output_dir.join(&file))?;
        println!("{file}: {} samples", corpus.len());
        corpora.push(CorpusEntry { name: name.clone(), file, n: corpus.len() });
    }
    let manifest = DataManifest {
        format_version: 1,
        provenance: Provenance::for_config(&(&bench, seed)),
        seed,
        corpora,
    };
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn train_diffusion(config: &Path, data: Option<&Path>, overrides: &Overrides) -> CliResult {
    let mut cfg = RunConfig::load(config)?;
    overrides.apply(&mut cfg);
    if let Some(d) = data {
        cfg.train_data = Some(d.to_path_buf());
    }
    cfg.validate()?;
    let (corpus, source) = match &cfg.train_data {
        Some(p) => (load_corpus(p)?, format!("file:{}", p.display())),
        None => {
            let seed = cfg.seeds[0];
            let (d, _) = generate_data(&cfg.to_bench(), seed).map_err(|e| e.in_stage("generate-data"))?;
            (d.train, format!("generated:seed={seed}"))
        }
    };
    if corpus.modality != cfg.modality {
        return Err(data_err(format!(
            "training corpus is {:?} but the config declares {:?}",
            corpus.modality, cfg.modality
        )));
    }
    let normalizer = default_normalizer(cfg.modality, &corpus.samples)?;
    let trained = train_denoiser(
        &corpus.samples,
        &corpus.shape,
        &cfg.diffusion.denoiser,
        normalizer,
        &cfg.diffusion.train,
    )
    .map_err(|e| e.in_stage("train-diffusion"))?;
    let provenance = Provenance::for_config(&(&cfg.diffusion, cfg.modality, &source));
    let ck_path = cfg.output_dir.join("denoiser.json");
    write_json(&ck_path, &trained.model.to_checkpoint(Some(provenance.clone())))?;
    let curve_path = cfg.output_dir.join("loss_curve.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    for (i, l) in trained.loss_curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()]).map_err(csv_err)?;
    }
    write_atomic(&curve_path, &csv_bytes(w)?)?;
    write_csv_meta(&curve_path, "loss-curve", &provenance)?;
    println!("checkpoint: {}", ck_path.display());
    match trained.loss_curve.last() {
        Some(l) => println!("final loss: {l:.6}"),
        None => println!("final loss: n/a (0 epochs)"),
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DenoiserModel, CliError> {
    let ck: DenoiserCheckpoint = read_json(path)?;
    Ok(DenoiserModel::from_checkpoint(&ck)?)
}

pub struct EmbedArgs<'a> {
    pub checkpoint: &'a Path,
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub levels: Option<usize>,
    pub draws: Option<usize>,
    pub seed: u64,
    pub first_id: u64,
}

pub fn embed(a: EmbedArgs<'_>) -> CliResult {
    let model = load_model(a.checkpoint)?;
    let corpus = load_corpus(a.corpus)?;
    if corpus.shape != model.data_shape() {
        return Err(data_err(format!(
            "corpus shape {:?} does not match checkpoint data shape {:?}",
            corpus.shape,
            model.data_shape()
        )));
    }
    let mut spec = match a.config {
        Some(p) => RunConfig::load(p)?.trajectory,
        None => TrajectorySpec::default(),
    };
    if let Some(l) = a.levels {
        spec.levels = l;
    }
    if let Some(d) = a.draws {
        spec.n_draws = d;
    }
    let traj = spec.build(corpus.modality, model.schedule().steps(), a.seed);
    let emb = embed_all(&model, &corpus.samples, &traj, a.first_id).map_err(|e| e.in_stage("embed"))?;
    let table = EmbeddingTable::from_embeddings(&emb, Some(corpus.labels.clone()), &traj);
    table.write(a.out, &traj)?;
    println!("{} embeddings of dimension {} -> {}", emb.len(), traj.dim(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestArtifact {
    format_version: u32,
    kind: String,
    provenance: Provenance,
    columns: Vec<String>,
    standardizer: Option<Standardizer>,
    forest: IsolationForest,
}

const FOREST_KIND: &str = "disc-iforest";

fn read_table(path: &Path) -> Result<EmbeddingTable, CliError> {
    let t = EmbeddingTable::read(path)?;
    if t.rows.is_empty() {
        return Err(data_err(format!("{}: no embedding rows", path.display())));
    }
    Ok(t)
}

pub fn fit_iforest(embeddings: &Path, out: &Path, trees: usize, subsample: usize, seed: u64, standardize: bool) -> CliResult {
    let table = read_table(embeddings)?;
    let cfg = IForestConfig { subsample, trees, seed };
    let standardizer = if standardize {
        Some(Standardizer::fit(&table.rows, Standardizer::DEFAULT_FLOOR)?)
    } else {
        None
    };
    let rows = match &standardizer {
        Some(s) => s.apply_all(&table.rows)?,
        None => table.rows.clone(),
    };
    let forest = IsolationForest::fit(&rows, &cfg).map_err(|e| e.in_stage("fit-iforest"))?;
    let artifact = ForestArtifact {
        format_version: 1,
        kind: FOREST_KIND.into(),
        provenance: Provenance::for_config(&(&cfg, standardize, &table.columns)),
        columns: table.columns.clone(),
        standardizer,
        forest,
    };
    write_json(out, &artifact)?;
    println!("fitted {} trees on {} embeddings -> {}", trees, rows.len(), out.display());
    Ok(())
}

pub fn score(model: &Path, embeddings: &Path, out: &Path, threshold: Option<f64>) -> CliResult {
    let art: ForestArtifact = read_json(model)?;
    if art.kind != FOREST_KIND || art.format_version != 1 {
        return Err(data_err(format!("{}: not a forest model (kind {})", model.display(), art.kind)));
    }
    let table = read_table(embeddings)?;
    if table.columns != art.columns {
        return Err(data_err("embedding columns do not match the fitted model"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id", "score"];
    if threshold.is_some() {
        header.push("decision");
    }
    w.write_record(&header).map_err(csv_err)?;
    let mut n_out = 0usize;
    let mut total = 0.0;
    for (id, row) in table.sample_ids.iter().zip(&table.rows) {
        let x = match &art.standardizer {
            Some(s) => s.apply(row)?,
            None => row.clone(),
        };
        let s = art.forest.score(&x).map_err(|e| e.in_stage("score"))?;
        total += s;
        let mut rec = vec![id.to_string(), s.to_string()];
        if let Some(tau) = threshold {
            let d = threshold_decide(s, tau)?;
            if d == disc::detectors::Decision::Out {
                n_out += 1;
            }
            rec.push(format!("{d:?}").to_lowercase());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_atomic(out, &csv_bytes(w)?)?;
    write_csv_meta(out, "scores", &art.provenance)?;
    let n = table.rows.len();
    println!("scored {n} embeddings, mean score {:.4}", total / n as f64);
    if threshold.is_some() {
        println!("declared out-of-distribution: {n_out}/{n}");
    }
    Ok(())
}

pub struct ClusterArgs<'a> {
    pub embeddings: &'a Path,
    pub out: &'a Path,
    pub k: Option<usize>,
    pub reference: Option<&'a Path>,
    pub restarts: usize,
    pub seed: u64,
    pub standardize: bool,
}

pub fn cluster(a: ClusterArgs<'_>) -> CliResult {
    let table = read_table(a.embeddings)?;
    let k = match (a.k, &table.labels) {
        (Some(k), _) => k,
        (None, Some(l)) => {
            let mut u = l.clone();
            u.sort();
            u.dedup();
            u.len()
        }
        (None, None) => return Err(CliError::Config("--k is required for unlabeled embeddings".into())),
    };
    let rows = if a.standardize {
        let fit_rows = match a.reference {
            Some(p) => {
                let r = read_table(p)?;
                if r.columns != table.columns {
                    return Err(data_err("reference embedding columns do not match"));
                }
                r.rows
            }
            None => table.rows.clone(),
        };
        Standardizer::fit(&fit_rows, Standardizer::DEFAULT_FLOOR)?.apply_all(&table.rows)?
    } else {
        table.rows.clone()
    };
    let cfg = KMeansConfig { k, max_iter: 300, restarts: a.restarts, seed: a.seed };
    let km = KMeansModel::fit(&rows, &cfg).map_err(|e| e.in_stage("cluster"))?;
    let assign = km.assign_all(&rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id"];
    if table.labels.is_some() {
        header.push("family_label");
    }
    header.push("cluster");
    w.write_record(&header).map_err(csv_err)?;
    for (i, c) in assign.iter().enumerate() {
        let mut rec = vec![table.sample_ids[i].to_string()];
        if let Some(l) = &table.labels {
            rec.push(l[i].clone());
        }
        rec.push(c.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_atomic(a.out, &csv_bytes(w)?)?;
    let provenance = Provenance::for_config(&(&cfg, a.standardize, &table.columns));
    write_csv_meta(a.out, "clusters", &provenance)?;
    println!("k={k} inertia {:.6} after {} iterations", km.inertia, km.iterations);
    if let Some(l) = &table.labels {
        println!("clustering accuracy: {:.4}", clustering_accuracy(&assign, l)?);
    }
    Ok(())
}

pub fn classify(train: &Path, test: &Path, out: &Path, epochs: Option<usize>, seed: u64) -> CliResult {
    let tr = read_table(train)?;
    let te = read_table(test)?;
    let labels = tr
        .labels
        .as_ref()
        .ok_or_else(|| data_err(format!("{}: training embeddings need a family_label column", train.display())))?;
    if tr.columns != te.columns {
        return Err(data_err("train and test embedding columns differ"));
    }
    let mut cfg = ClassifierConfig::default();
    cfg.train.seed = seed;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let head = ClassifierHead::train(&tr.rows, labels, &cfg).map_err(|e| e.in_stage("classify"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id"];
    if te.labels.is_some() {
        header.push("family_label");
    }
    header.push("predicted");
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in te.rows.iter().enumerate() {
        let mut rec = vec![te.sample_ids[i].to_string()];
        if let Some(l) = &te.labels {
            rec.push(l[i].clone());
        }
        rec.push(head.predict(row)?.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_atomic(out, &csv_bytes(w)?)?;
    write_csv_meta(out, "predictions", &Provenance::for_config(&(&cfg, &tr.columns)))?;
    if let Some(l) = &te.labels {
        println!("accuracy: {:.4}", head.accuracy(&te.rows, l)?);
    }
    println!("{} predictions -> {}", te.rows.len(), out.display());
    Ok(())
}

pub fn bench(config: Option<&Path>, preset: Option<Modality>, overrides: &Overrides) -> CliResult {
    let cfg = resolve(config, preset, overrides)?;
    let report = run_benchmark(&cfg.to_bench())?;
    report.write(&cfg.output_dir, "report")?;
    println!("{:16} {:>8} {:>8} {:>8}", "detector", "auroc", "cluster", "superv");
    for s in &report.summary {
        println!(
            "{:16} {:8.4} {:8.4} {:8.4}",
            s.detector, s.auroc.mean, s.clustering_accuracy.mean, s.supervised_accuracy.mean
        );
    }
    println!("report: {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

#[derive(Serialize)]
struct TheoryArtifact<'a> {
    provenance: Provenance,
    report: &'a TheoryReport,
}

pub fn theory_demo(params: Option<&Path>, epsilon: Option<f64>, out: Option<&Path>) -> CliResult {
    let mut p: TheoryDemoParams = match params {
        Some(path) => read_json(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => TheoryDemoParams::default(),
    };
    if let Some(e) = epsilon {
        p.epsilon_mass = e;
    }
    let r = run_demo(&p)?;
    println!("{:>8} {:>10} {:>10} {:>10}", "tau", "fpr", "power_q1", "power_q2");
    for (a, b) in r.power_q1.iter().zip(&r.power_q2) {
        println!("{:8.3} {:10.6} {:10.6} {:10.6}", a.tau, a.fpr, a.power, b.power);
    }
    println!("max |power - fpr|: {:e}", r.max_power_fpr_deviation);
    println!("max marginal deviation: {:e}", r.max_marginal_deviation);
    println!("TV(Q1, Q2): {} (expected {})", r.tv_q1_q2, r.tv_expected);
    if let Some(s) = &r.separating_statistic {
        println!("indicator of {} separates Q1 and Q2 with TV {}", s.outcome, s.total_variation);
    }
    if let Some(path) = out {
        write_json(path, &TheoryArtifact { provenance: Provenance::for_config(&p), report: &r })?;
    }
    Ok(())
}

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;

use stance_core::corpus::{overlap_matrix, split_overlap, split_stats, vocab_stats, write_dataset, Dataset, Split, SplitOverlap, SplitStats, StanceExample, VocabStats};
use stance_core::embeddings::{embed_label, load_vectors, project_2d};
use stance_core::eval::{
    aggregate_report_with, config_hash, dataset_scatter_2d, macro_f1, majority_baseline, pearson_correlation, random_baseline,
    scatter_svg, tfidf_logreg_baseline, DatasetFeatureVector, EvalReport, PlotPoint, ReportMetadata, TfidfConfig,
};
use stance_core::io::{read_jsonl, write_atomic, write_json_atomic, write_jsonl_atomic};
use stance_core::labelspace::{build_label_space, meta_relabel_corpus};
use stance_core::model::{ExpertSelection, MoleModel, Vocabulary};
use stance_core::ood::{predict_ood, MappingKind};
use stance_core::synthetic::{self, SyntheticConfig};
use stance_core::text::WordTokenizer;
use stance_core::trainer::{evaluate_split, train_with_options, TrainConfig, TrainOptions};

use crate::args::{Analysis, Baseline, Cli, Command, EvalArgs, IngestArgs, PredictOodArgs, TrainArgs};
use crate::context::{embedding_kind, Context};

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Ingest(args) => ingest(&ctx, &args),
        Command::Train(args) => train(&ctx, &args),
        Command::Eval(args) => eval(&ctx, &args),
        Command::PredictOod(args) => predict(&ctx, &args),
        Command::Analyze(args) => analyze(&ctx, args.analysis),
    }
}

#[derive(Serialize)]
struct DatasetStats {
    dataset: String,
    splits: SplitStats,
    vocabulary: VocabStats,
    overlap: SplitOverlap,
}

fn ingest(ctx: &Context, args: &IngestArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    if args.synthetic {
        let config = SyntheticConfig {
            train_per_dataset: args.synthetic_train,
            dev_per_dataset: args.synthetic_eval,
            test_per_dataset: args.synthetic_eval,
            seed: args.synthetic_seed,
            ..SyntheticConfig::default()
        };
        let suite = synthetic::generate(&config)?;
        for d in suite.corpus.datasets() {
            write_dataset(&args.out, d)?;
        }
        write_json_atomic(&args.out.join("registry.json"), &suite.corpus.descriptors())?;
        write_atomic(&args.out.join("label_groups.jsonl"), suite.table.to_jsonl().as_bytes())?;
        write_atomic(&args.out.join("label_vectors.txt"), suite.label_vectors.to_text().as_bytes())?;
        ctx.write_manifest(&args.out, "ingest", &config, Some(config.seed), &["registry.json", "label_groups.jsonl", "label_vectors.txt"])?;
        println!("wrote {} synthetic datasets to {}", suite.corpus.datasets().len(), args.out.display());
        return Ok(());
    }

    let corpus = ctx.load(&args.datasets)?;
    let stats: Vec<DatasetStats> = corpus
        .datasets()
        .iter()
        .map(|d| DatasetStats {
            dataset: d.name().to_string(),
            splits: split_stats(d),
            vocabulary: vocab_stats(d, &WordTokenizer),
            overlap: split_overlap(d),
        })
        .collect();
    let refs: Vec<&Dataset> = corpus.datasets().iter().collect();
    let overlap = overlap_matrix(&refs, &WordTokenizer)?;

    let mut table = format!(
        "{:<16} {:>7} {:>7} {:>7} {:>8} {:>8} {:>7} {:>7}\n",
        "dataset", "train", "dev", "test", "total", "types", "mean", "max"
    );
    for s in &stats {
        let _ = writeln!(
            table,
            "{:<16} {:>7} {:>7} {:>7} {:>8} {:>8} {:>7.1} {:>7.0}",
            s.dataset, s.splits.train, s.splits.dev, s.splits.test, s.splits.total, s.vocabulary.unique_words,
            s.vocabulary.mean_tokens, s.vocabulary.max_tokens
        );
    }
    write_json_atomic(&args.out.join("stats.json"), &serde_json::json!({ "datasets": stats, "overlap": overlap }))?;
    write_atomic(&args.out.join("stats.txt"), table.as_bytes())?;
    ctx.write_manifest(&args.out, "ingest", &serde_json::json!({ "datasets": corpus.names() }), None, &["stats.json", "stats.txt"])?;
    print!("{table}");
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    for o in &args.overrides {
        let (key, value) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(h) = &args.held_out {
        config.held_out = Some(h.clone());
    }
    config.validate()?;
    Ok(config)
}

fn train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let config = train_config(args)?;
    let mut corpus = ctx.load(&args.datasets)?;
    if args.hard {
        corpus = meta_relabel_corpus(&corpus, &ctx.table)?;
    }
    std::fs::create_dir_all(&args.out)?;
    let options = TrainOptions {
        table: ctx.table.clone(),
        checkpoint_dir: (!args.no_checkpoints).then(|| args.out.join("checkpoints")),
        run_id: args.run_id.clone(),
    };
    let datasets: Vec<&Dataset> = corpus.datasets().iter().collect();
    let outcome = train_with_options(&datasets, &config, &options)?;
    outcome.model.save(&args.out.join("model.json"))?;
    write_json_atomic(&args.out.join("history.json"), &outcome.history)?;
    ctx.write_manifest(&args.out, "train", &config, Some(config.seed), &["model.json", "history.json"])?;
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "best epoch {} with average dev macro-F1 {:.2}; model written to {}",
        best.epoch,
        best.average_dev_f1,
        args.out.join("model.json").display()
    );
    Ok(())
}

fn finish_report(ctx: &Context, out: Option<&Path>, report: &EvalReport, config: &impl Serialize, seed: Option<u64>) -> Result<()> {
    let table = report.render_table();
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        write_json_atomic(&out.join("report.json"), report)?;
        write_atomic(&out.join("report.txt"), table.as_bytes())?;
        ctx.write_manifest(out, "eval", config, seed, &["report.json", "report.txt"])?;
    }
    print!("{table}");
    Ok(())
}

fn eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let split: Split = args.split.parse()?;
    let mut metadata = ReportMetadata::default();
    let mut scores: Vec<(String, f64)> = Vec::new();

    if let (Some(pred_path), Some(gold_path)) = (&args.predictions, &args.gold) {
        let golds: Vec<StanceExample> = read_jsonl(gold_path)?;
        let rows: Vec<serde_json::Value> = read_jsonl(pred_path)?;
        let mut predicted: HashMap<String, String> = HashMap::new();
        let mut strategies = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let id = row.get("id").and_then(|v| v.as_str()).with_context(|| format!("prediction {} has no id", i + 1))?;
            let label = row
                .get("mapped_label")
                .or_else(|| row.get("label"))
                .and_then(|v| v.as_str())
                .with_context(|| format!("prediction `{id}` has no label"))?;
            if predicted.insert(id.to_string(), label.to_string()).is_some() {
                bail!("prediction `{id}` appears twice");
            }
            if let Some(s) = row.get("strategy").and_then(|v| v.as_str()) {
                if !strategies.contains(&s) {
                    strategies.push(s);
                }
            }
        }
        let mut by_dataset: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
        for g in &golds {
            let p = predicted.get(&g.id).with_context(|| format!("no prediction for `{}`", g.id))?;
            let entry = by_dataset.entry(g.dataset.as_str()).or_default();
            entry.0.push(p);
            entry.1.push(&g.label);
        }
        for (dataset, (preds, gold)) in by_dataset {
            let descriptor = ctx.registry.get(dataset).with_context(|| format!("dataset `{dataset}` is not in the registry"))?;
            scores.push((dataset.to_string(), macro_f1(&preds, &gold, &descriptor.labels)?));
        }
        if strategies.len() == 1 {
            metadata.strategy = Some(strategies[0].to_string());
        }
    } else if let Some(model_path) = &args.model {
        let model = MoleModel::load(model_path)?;
        let selection: ExpertSelection = args.selection.parse()?;
        let names: Vec<String> = if args.datasets.is_empty() {
            model.training_datasets().map(str::to_string).collect()
        } else {
            args.datasets.clone()
        };
        let corpus = ctx.load(&names)?;
        for d in corpus.datasets() {
            match evaluate_split(&model, d, split, selection)? {
                Some(f) => scores.push((d.name().to_string(), f)),
                None => log::warn!("{} has no {split} examples", d.name()),
            }
        }
        metadata.config_hash = Some(config_hash(model.config())?);
        metadata.strategy = Some(format!("model/{}", args.selection));
    } else if let Some(baseline) = args.baseline {
        let corpus = ctx.load(&args.datasets)?;
        for d in corpus.datasets() {
            let golds: Vec<&str> = d.split(split).map(|e| e.label.as_str()).collect();
            if golds.is_empty() {
                log::warn!("{} has no {split} examples", d.name());
                continue;
            }
            let labels = &d.descriptor.labels;
            let score = match baseline {
                Baseline::Majority => {
                    let source: Vec<&str> = if args.majority_from_train {
                        d.split(Split::Train).map(|e| e.label.as_str()).collect()
                    } else {
                        golds.clone()
                    };
                    let preds = majority_baseline(&source, labels, golds.len())?;
                    macro_f1(&preds, &golds, labels)?
                }
                Baseline::Random => random_baseline(&golds, labels, args.seed, args.trials)?,
                Baseline::Tfidf => {
                    if split != Split::Test {
                        bail!("the TF-IDF baseline predicts the test split only");
                    }
                    let preds = tfidf_logreg_baseline(d, &TfidfConfig::default())?;
                    macro_f1(&preds, &golds, labels)?
                }
            };
            scores.push((d.name().to_string(), score));
        }
        metadata.strategy = Some(format!("{baseline:?}").to_lowercase());
        metadata.seed = Some(args.seed);
    } else {
        bail!("pass --predictions with --gold, --model, or --baseline");
    }

    let report = aggregate_report_with(&scores, metadata, &ctx.registry)?;
    let config = serde_json::json!({
        "split": args.split,
        "predictions": args.predictions,
        "gold": args.gold,
        "model": args.model,
        "baseline": args.baseline.map(|b| format!("{b:?}").to_lowercase()),
        "selection": args.selection,
        "majority_from_train": args.majority_from_train,
        "trials": args.trials,
    });
    finish_report(ctx, args.out.as_deref(), &report, &config, Some(args.seed))
}

fn predict(ctx: &Context, args: &PredictOodArgs) -> Result<()> {
    let kind: MappingKind = args.strategy.parse()?;
    let split: Split = args.split.parse()?;
    let model = MoleModel::load(&args.model)?;
    if model.label_space().contains_dataset(&args.held_out) {
        bail!("the model was trained on `{}`; it cannot be the held-out dataset", args.held_out);
    }
    let embeddings = match &args.embeddings {
        Some(path) => Some(load_vectors(path, embedding_kind(&args.embedding_kind)?)?),
        None if kind.needs_embeddings() => bail!("--strategy {kind} needs --embeddings"),
        None => None,
    };
    let corpus = ctx.load(std::slice::from_ref(&args.held_out))?;
    let held = &corpus.datasets()[0];
    let examples: Vec<&StanceExample> = held.split(split).collect();
    if examples.is_empty() {
        bail!("{} has no {split} examples", args.held_out);
    }
    let embedder = embeddings.as_ref().map(|e| e as &dyn stance_core::embeddings::LabelNameEmbedder);
    let predictions = predict_ood(&model, &examples, &held.descriptor, kind, embedder, args.restrict_mask.as_deref())?;

    std::fs::create_dir_all(&args.out)?;
    write_jsonl_atomic(&args.out.join("predictions.jsonl"), &predictions)?;
    let preds: Vec<&str> = predictions.iter().map(|p| p.mapped_label.as_str()).collect();
    let golds: Vec<&str> = examples.iter().map(|e| e.label.as_str()).collect();
    let score = macro_f1(&preds, &golds, &held.descriptor.labels)?;
    let metadata = ReportMetadata {
        config_hash: Some(config_hash(model.config())?),
        strategy: Some(kind.to_string()),
        held_out: Some(args.held_out.clone()),
        seed: None,
    };
    let report = aggregate_report_with(&[(args.held_out.clone(), score)], metadata, &ctx.registry)?;
    write_json_atomic(&args.out.join("report.json"), &report)?;
    let config = serde_json::json!({
        "model": args.model,
        "held_out": args.held_out,
        "strategy": kind,
        "embeddings": args.embeddings,
        "embedding_kind": args.embedding_kind,
        "restrict_mask": args.restrict_mask,
        "split": args.split,
    });
    ctx.write_manifest(&args.out, "predict-ood", &config, None, &["predictions.jsonl", "report.json"])?;
    println!("{} {kind} mapping: macro-F1 {score:.2} over {} examples", args.held_out, examples.len());
    Ok(())
}

fn analyze(ctx: &Context, analysis: Analysis) -> Result<()> {
    match analysis {
        Analysis::Correlation { report, out } => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let report: EvalReport = serde_json::from_str(&text)?;
            let names: Vec<String> = report.scores.iter().map(|s| s.dataset.clone()).collect();
            let corpus = ctx.load(&names)?;
            let features: Vec<DatasetFeatureVector> = corpus.datasets().iter().map(DatasetFeatureVector::from_dataset).collect();
            let scores: Vec<f64> = report.scores.iter().map(|s| s.macro_f1).collect();
            let correlations = pearson_correlation(&features, &scores)?;
            let mut table = String::new();
            for c in &correlations {
                let r = c.r.map_or("undefined".to_string(), |r| format!("{r:+.3}"));
                let _ = writeln!(table, "{:<24} {r}", c.feature);
            }
            std::fs::create_dir_all(&out)?;
            write_json_atomic(&out.join("correlations.json"), &serde_json::json!({ "features": features, "correlations": correlations }))?;
            write_atomic(&out.join("correlations.txt"), table.as_bytes())?;
            ctx.write_manifest(&out, "analyze", &serde_json::json!({ "analysis": "correlation", "datasets": names }), None, &["correlations.json", "correlations.txt"])?;
            print!("{table}");
        }
        Analysis::Scatter { model, n, seed, datasets, out } => {
            let corpus = ctx.load(&datasets)?;
            let refs: Vec<&Dataset> = corpus.datasets().iter().collect();
            let encoder = match &model {
                Some(path) => MoleModel::load(path)?,
                None => {
                    let descriptors = corpus.descriptors();
                    let space = build_label_space(&descriptors, ctx.table.clone())?;
                    let config = TrainConfig::default().encoder_config();
                    let vocab = Vocabulary::build(
                        refs.iter().flat_map(|d| d.split(Split::Train)).flat_map(|e| [e.target.as_str(), e.context.as_str()]),
                        config.vocab_min_count,
                        config.vocab_max_size,
                    );
                    MoleModel::new(config, vocab, space, &descriptors, seed)?
                }
            };
            let scatter = dataset_scatter_2d(&refs, &encoder, n, seed)?;
            let mut points: Vec<PlotPoint> = scatter
                .points
                .iter()
                .map(|p| PlotPoint { series: p.dataset.clone(), x: p.x, y: p.y, annotation: None, highlight: false })
                .collect();
            points.extend(scatter.centroids.iter().map(|c| PlotPoint {
                series: c.dataset.clone(),
                x: c.x,
                y: c.y,
                annotation: Some(c.dataset.clone()),
                highlight: true,
            }));
            std::fs::create_dir_all(&out)?;
            write_json_atomic(&out.join("scatter.json"), &scatter)?;
            write_atomic(&out.join("scatter.svg"), scatter_svg(&points, "Pooled encodings by dataset").as_bytes())?;
            let config = serde_json::json!({ "analysis": "scatter", "model": model, "n": n, "datasets": corpus.names() });
            ctx.write_manifest(&out, "analyze", &config, Some(seed), &["scatter.json", "scatter.svg"])?;
            println!("projected {} examples from {} datasets", scatter.points.len(), refs.len());
        }
        Analysis::LabelSpace { embeddings, embedding_kind: kind, out } => {
            let table = load_vectors(&embeddings, embedding_kind(&kind)?)?;
            let mut owners = Vec::new();
            let mut vectors = Vec::new();
            for d in ctx.registry.descriptors() {
                for l in &d.labels {
                    match embed_label(&table, l) {
                        Ok(v) => {
                            owners.push((d.name.clone(), l.clone()));
                            vectors.push(v);
                        }
                        Err(e) => log::warn!("skipping {}__{l}: {e}", d.name),
                    }
                }
            }
            let coords = project_2d(&vectors)?;
            let points: Vec<PlotPoint> = owners
                .iter()
                .zip(&coords)
                .map(|((d, l), [x, y])| PlotPoint { series: d.clone(), x: *x, y: *y, annotation: Some(l.clone()), highlight: false })
                .collect();
            let rows: Vec<serde_json::Value> = owners
                .iter()
                .zip(&coords)
                .map(|((d, l), [x, y])| serde_json::json!({ "dataset": d, "label": l, "x": x, "y": y }))
                .collect();
            std::fs::create_dir_all(&out)?;
            write_json_atomic(&out.join("label_space.json"), &rows)?;
            write_atomic(&out.join("label_space.svg"), scatter_svg(&points, "Label names").as_bytes())?;
            let config = serde_json::json!({ "analysis": "label-space", "embeddings": embeddings, "embedding_kind": kind });
            ctx.write_manifest(&out, "analyze", &config, None, &["label_space.json", "label_space.svg"])?;
            println!("projected {} label names", rows.len());
        }
    }
    Ok(())
}

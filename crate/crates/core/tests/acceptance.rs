//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line per
//! criterion and exits non-zero if any criterion fails.
//!
//! Positional arguments filter criteria by substring of their name.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stance_core::autograd::{ParamStore, Tape};
use stance_core::corpus::{load_dataset, overlap_matrix, reference, DatasetDescriptor, Dataset, Registry, Split, SourceGroup, TargetKind, ContextKind};
use stance_core::embeddings::{cosine, EmbeddingKind, EmbeddingTable};
use stance_core::eval::{macro_f1, majority_baseline, random_baseline};
use stance_core::labelspace::{build_label_space, meta_relabel_corpus, Group, HardGroupTable, LabelId, TableVariant};
use stance_core::model::{combine_moe, EncoderConfig, ExpertSelection, MoleModel, Vocabulary};
use stance_core::ood::{hard_map, map_prediction, predict_ood, soft_map, MappingKind};
use stance_core::synthetic::{self, SyntheticConfig, HELD_OUT};
use stance_core::text::WordTokenizer;
use stance_core::trainer::{evaluate_split, train_with_options, LossBreakdown, TrainConfig, TrainOptions, TrainOutcome};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn verdict(result: Result<String, String>) -> Outcome {
    match result {
        Ok(detail) => Outcome::Pass(detail),
        Err(detail) => Outcome::Fail(detail),
    }
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("1 mask support", mask_support),
        ("2 expert averaging", expert_averaging),
        ("3 gradient reversal", gradient_reversal),
        ("4 loss composition", loss_composition),
        ("5 synthetic end-to-end", synthetic_end_to_end),
        ("6 out-of-domain mapping", ood_mapping),
        ("7 soft mapping oracle", soft_mapping_oracle),
        ("8 macro-F1 oracle", macro_f1_oracle),
        ("9 real-data checks", real_data),
        ("10 label group tables", group_tables),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS criterion {name}: {d} ({secs:.1}s)"),
            Outcome::Skip(d) => println!("SKIP criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        hidden_size: 8,
        layers: 1,
        heads: 2,
        ff_size: 16,
        max_length: 24,
        init_std: 0.5,
        ..EncoderConfig::default()
    }
}

fn mask_support() -> Outcome {
    let registry = Registry::builtin();
    let descriptors = registry.descriptors().to_vec();
    let space = build_label_space(&descriptors, HardGroupTable::builtin(TableVariant::Repaired)).unwrap();
    let vocab = Vocabulary::build(["the claim is true", "people disagree with this"], 1, 100);
    let mut worst = 0.0f64;
    let mut run = || -> Result<String, String> {
        for draw in 0..200u64 {
            let model = MoleModel::new(small_encoder(), vocab.clone(), space.clone(), &descriptors, draw).map_err(|e| e.to_string())?;
            for d in &descriptors {
                let mask = space.mask_for(&d.name).unwrap();
                let out = model
                    .forward("people disagree with the claim", "claim", &mask, ExpertSelection::All, None)
                    .map_err(|e| e.to_string())?;
                let dists = out.expert_probs.iter().chain([&out.global_probs, &out.combined]);
                for p in dists {
                    let total: f64 = p.iter().sum();
                    worst = worst.max((total - 1.0).abs());
                    ensure((total - 1.0).abs() <= 1e-6, format!("draw {draw}, {}: mass {total}", d.name))?;
                    let off = p.iter().zip(&mask).any(|(v, m)| !m && *v != 0.0);
                    ensure(!off, format!("draw {draw}, {}: mass outside the mask", d.name))?;
                }
            }
        }
        Ok(format!("200 draws x {} masks, max |sum - 1| = {worst:.1e}", descriptors.len()))
    };
    verdict(run())
}

fn expert_averaging() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut run = || -> Result<String, String> {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let experts = rng.random_range(2..=5);
            let parts = experts + 1;
            let width = rng.random_range(2..=8);
            let dists: Vec<Vec<f64>> = (0..parts)
                .map(|_| {
                    let raw: Vec<f64> = (0..width).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            let got = combine_moe(&dists[..experts], &dists[experts]).map_err(|e| e.to_string())?;
            for j in 0..width {
                let mut acc = 0.0;
                for d in &dists {
                    acc += d[j];
                }
                let expected = acc / parts as f64;
                worst = worst.max((got[j] - expected).abs());
            }
        }
        ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
        Ok(format!("1000 tuples, max deviation {worst:.1e}"))
    };
    verdict(run())
}

fn gradient_reversal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let mut normal = |r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0));
    let input = normal(2, 3);
    let w1 = store.add("w1", normal(3, 4));
    let w2 = store.add("w2", normal(4, 3));
    let loss = |store: &ParamStore, reversed: bool| {
        let mut tape = Tape::new(store);
        let x = tape.constant(input.clone());
        let a = tape.param(w1);
        let h = tape.matmul(x, a);
        let h = tape.tanh(h);
        let h = if reversed { tape.reverse_gradient(h) } else { h };
        let b = tape.param(w2);
        let logits = tape.matmul(h, b);
        let logp = tape.masked_log_softmax(logits, &[true, true, true]);
        let p0 = tape.pick(logp, 0, 1);
        let p1 = tape.pick(logp, 1, 2);
        let s = tape.add(p0, p1);
        let root = tape.scale(s, -1.0);
        (tape.scalar(root), tape.backward(root))
    };
    let (_, grads) = loss(&store, true);
    let analytic = grads.dense(w1, (3, 4));
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..4 {
            let eps = 1e-5;
            let mut plus = store.clone();
            plus.get_mut(w1)[[i, j]] += eps;
            let mut minus = store.clone();
            minus.get_mut(w1)[[i, j]] -= eps;
            let numeric = (loss(&plus, false).0 - loss(&minus, false).0) / (2.0 * eps);
            let rel = (analytic[[i, j]] + numeric).abs() / numeric.abs().max(1e-8);
            worst = worst.max(rel);
        }
    }
    let head = grads.dense(w2, (4, 3));
    let (_, plain) = loss(&store, false);
    let head_same = (&head - &plain.dense(w2, (4, 3))).iter().all(|v| v.abs() < 1e-15);
    verdict(
        ensure(worst <= 1e-4, format!("relative error {worst:e}"))
            .and(ensure(head_same, "gradient above the reversal point changed"))
            .map(|_| format!("12 entries, max relative error {worst:.1e}")),
    )
}

fn loss_composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (s, t, d) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let (lambda, gamma) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..1.0));
        let l = LossBreakdown::compose(s, t, d, lambda, gamma);
        worst = worst.max((l.total - (lambda * s + (1.0 - lambda) * t + gamma * d)).abs());
    }
    let worked = LossBreakdown::compose(1.0, 0.6, 2.0, 0.5, 0.01).total;
    verdict(
        ensure(worst <= 1e-9, format!("max deviation {worst:e}"))
            .and(ensure((worked - 0.82).abs() <= f64::EPSILON, format!("worked value {worked}")))
            .map(|_| format!("1000 draws, max deviation {worst:.1e}; worked value {worked}")),
    )
}

fn synthetic_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 16,
        learning_rate: 3e-3,
        hidden_size: 32,
        layers: 2,
        ..TrainConfig::default()
    }
}

fn timed_train(datasets: &[&Dataset], config: &TrainConfig, table: &HardGroupTable) -> (TrainOutcome, Duration) {
    let start = Instant::now();
    let options = TrainOptions {
        table: table.clone(),
        ..TrainOptions::default()
    };
    let outcome = train_with_options(datasets, config, &options).expect("training succeeds");
    (outcome, start.elapsed())
}

fn synthetic_end_to_end() -> Outcome {
    let suite = synthetic::generate(&SyntheticConfig::default()).unwrap();
    let datasets: Vec<&Dataset> = suite.corpus.datasets().iter().collect();
    let config = synthetic_config();
    let (first, t1) = timed_train(&datasets, &config, &suite.table);
    let (second, t2) = timed_train(&datasets, &config, &suite.table);
    let mut scores = Vec::new();
    for d in &datasets {
        scores.push(evaluate_split(&first.model, d, Split::Test, ExpertSelection::All).unwrap().unwrap());
    }
    let average = scores.iter().sum::<f64>() / scores.len() as f64;
    let same = first.history == second.history && first.model.params() == second.model.params();
    let limit = Duration::from_secs(300);
    verdict(
        ensure(average >= 95.0, format!("test macro-F1 {average:.2} < 95"))
            .and(ensure(t1 < limit && t2 < limit, format!("runs took {t1:?} and {t2:?}")))
            .and(ensure(same, "two identically seeded runs differ"))
            .map(|_| format!("test macro-F1 {average:.2} after 5 epochs, {:.1}s per run, runs identical", t1.as_secs_f64())),
    )
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> (DatasetDescriptor, Vec<(String, Group)>) {
    let count = rng.random_range(1..=5);
    let labels: Vec<String> = (0..count).map(|i| format!("l{i}")).collect();
    let groups = labels.iter().map(|l| (l.clone(), Group::ALL[rng.random_range(0..5)])).collect();
    let descriptor = DatasetDescriptor {
        name: "held".into(),
        source_group: SourceGroup::Various,
        target_kind: TargetKind::Topic,
        context_kind: ContextKind::Sentence,
        labels,
        split_sizes: None,
    };
    (descriptor, groups)
}

fn random_vectors(rng: &mut ChaCha8Rng, words: &[String], dim: usize) -> EmbeddingTable {
    EmbeddingTable::new(
        EmbeddingKind::StaticWord,
        words.iter().map(|w| (w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect(),
    )
    .unwrap()
}

fn ood_mapping() -> Outcome {
    let run = || -> Result<String, String> {
        // closure over random inventories
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for round in 0..100 {
            let (held, groups) = random_descriptor(&mut rng);
            let source_group = Group::ALL[rng.random_range(0..5)];
            let mut entries: Vec<(&str, &str, Group)> = groups.iter().map(|(l, g)| ("held", l.as_str(), *g)).collect();
            entries.push(("train", "src", source_group));
            let table = HardGroupTable::with_assignments("fuzz", &entries).map_err(|e| e.to_string())?;
            let mut words = held.labels.clone();
            words.push("src".into());
            let vectors = random_vectors(&mut rng, &words, 6);
            let predicted = LabelId {
                dataset: "train".into(),
                name: "src".into(),
                global_index: 0,
            };
            let group_label = LabelId {
                name: source_group.to_string(),
                ..predicted.clone()
            };
            for (kind, label) in [(MappingKind::Hard, &group_label), (MappingKind::Weak, &predicted), (MappingKind::Soft, &predicted)] {
                let mapped = map_prediction(kind, label, &held, &table, Some(&vectors)).map_err(|e| format!("round {round}: {e}"))?;
                ensure(held.labels.contains(&mapped.label), format!("round {round}: {kind} emitted {}", mapped.label))?;
            }
        }

        // ordering on the synthetic suite
        let suite = synthetic::generate(&SyntheticConfig::default()).unwrap();
        let held = suite.corpus.get(HELD_OUT).unwrap();
        let test: Vec<_> = held.split(Split::Test).collect();
        let golds: Vec<&str> = test.iter().map(|e| e.label.as_str()).collect();
        let config = TrainConfig {
            held_out: Some(HELD_OUT.into()),
            ..synthetic_config()
        };
        let datasets: Vec<&Dataset> = suite.corpus.datasets().iter().collect();
        let (mole, _) = timed_train(&datasets, &config, &suite.table);
        let score = |kind: MappingKind, model: &MoleModel| -> Result<f64, String> {
            let preds = predict_ood(model, &test, &held.descriptor, kind, Some(&suite.label_vectors), None).map_err(|e| e.to_string())?;
            for p in &preds {
                ensure(held.descriptor.labels.contains(&p.mapped_label), format!("{kind} emitted {}", p.mapped_label))?;
            }
            let mapped: Vec<&str> = preds.iter().map(|p| p.mapped_label.as_str()).collect();
            macro_f1(&mapped, &golds, &held.descriptor.labels).map_err(|e| e.to_string())
        };
        let weak = score(MappingKind::Weak, &mole.model)?;
        let soft = score(MappingKind::Soft, &mole.model)?;
        let meta = meta_relabel_corpus(&suite.corpus, &suite.table).map_err(|e| e.to_string())?;
        let meta_sets: Vec<&Dataset> = meta.datasets().iter().collect();
        let (grouped, _) = timed_train(&meta_sets, &config, &suite.table);
        let hard = score(MappingKind::Hard, &grouped.model)?;
        ensure(weak >= hard, format!("weak {weak:.2} < hard {hard:.2}"))?;
        Ok(format!("100 random inventories closed; held-out {HELD_OUT}: weak {weak:.2} >= hard {hard:.2} (soft {soft:.2})"))
    };
    verdict(run())
}

fn soft_mapping_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut run = || -> Result<String, String> {
        for round in 0..100 {
            let (held, _) = random_descriptor(&mut rng);
            let mut words = held.labels.clone();
            words.push("query".into());
            let dim = rng.random_range(2..=12);
            let vectors = random_vectors(&mut rng, &words, dim);
            let predicted = LabelId {
                dataset: "train".into(),
                name: "query".into(),
                global_index: 0,
            };
            let got = soft_map(&predicted, &held, &vectors).map_err(|e| e.to_string())?;
            let q = vectors.get("query").unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (i, l) in held.labels.iter().enumerate() {
                let c = cosine(q, vectors.get(l).unwrap()).unwrap();
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((i, c));
                }
            }
            let (bi, _) = best.unwrap();
            ensure(got.label == held.labels[bi], format!("round {round}: {} vs brute force {}", got.label, held.labels[bi]))?;
            let factor = rng.random_range(1e-3..1e3);
            let scaled = EmbeddingTable::new(
                EmbeddingKind::StaticWord,
                words.iter().map(|w| (w.clone(), vectors.get(w).unwrap().iter().map(|v| v * factor).collect())).collect(),
            )
            .unwrap();
            let again = soft_map(&predicted, &held, &scaled).map_err(|e| e.to_string())?;
            ensure(again.label == got.label, format!("round {round}: rescaling by {factor} changed the label"))?;
        }
        Ok("100 random sets match brute force, unchanged under rescaling".into())
    };
    verdict(run())
}

fn macro_f1_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut run = || -> Result<String, String> {
        for round in 0..1000 {
            let k = rng.random_range(1..=10);
            let n = rng.random_range(1..=200);
            let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let mut confusion = vec![vec![0u32; k]; k];
            for (p, g) in preds.iter().zip(&golds) {
                confusion[*g][*p] += 1;
            }
            let mut total = 0.0;
            for c in 0..k {
                let tp = confusion[c][c] as f64;
                let col: u32 = (0..k).map(|g| confusion[g][c]).sum();
                let row: u32 = confusion[c].iter().sum();
                let precision = if col == 0 { 0.0 } else { tp / col as f64 };
                let recall = if row == 0 { 0.0 } else { tp / row as f64 };
                if precision + recall > 0.0 {
                    total += 2.0 * precision * recall / (precision + recall);
                }
            }
            let expected = 100.0 * total / k as f64;
            let p: Vec<&str> = preds.iter().map(|&i| names[i].as_str()).collect();
            let g: Vec<&str> = golds.iter().map(|&i| names[i].as_str()).collect();
            let got = macro_f1(&p, &g, &names).map_err(|e| e.to_string())?;
            ensure((got - expected).abs() <= 1e-12, format!("round {round}: {got} vs {expected}"))?;
        }
        let golds: Vec<&str> = (0..10_000).map(|i| if i % 2 == 0 { "for" } else { "against" }).collect();
        let random = random_baseline(&golds, &["for", "against"], 42, 10).map_err(|e| e.to_string())?;
        ensure((random - 50.0).abs() <= 2.0, format!("random baseline {random:.2}"))?;
        Ok(format!("1000 random instances exact; balanced binary random baseline {random:.2}"))
    };
    verdict(run())
}

fn real_data() -> Outcome {
    let Some(root) = std::env::var_os("STANCE_DATA_ROOT").map(PathBuf::from) else {
        return Outcome::Skip("STANCE_DATA_ROOT is not set".into());
    };
    let registry = Registry::builtin();
    let mut present = Vec::new();
    for d in registry.descriptors() {
        if root.join(&d.name).is_dir() {
            match load_dataset(&root, d.clone()) {
                Ok(ds) => present.push(ds),
                Err(e) => return Outcome::Fail(format!("{}: {e}", d.name)),
            }
        }
    }
    if present.is_empty() {
        return Outcome::Skip(format!("no dataset found under {}", root.display()));
    }
    let run = || -> Result<String, String> {
        let mut checked = Vec::new();
        for ds in &present {
            let expected = ds.descriptor.split_sizes.expect("builtin sizes");
            for split in Split::ALL {
                let n = ds.split(split).count();
                ensure(n == expected.get(split), format!("{} {split}: {n} examples, expected {}", ds.name(), expected.get(split)))?;
            }
            let golds: Vec<&str> = ds.split(Split::Test).map(|e| e.label.as_str()).collect();
            let preds = majority_baseline(&golds, &ds.descriptor.labels, golds.len()).map_err(|e| e.to_string())?;
            let f1 = macro_f1(&preds, &golds, &ds.descriptor.labels).map_err(|e| e.to_string())?;
            let published = reference::MAJORITY_MACRO_F1.iter().find(|(n, _)| *n == ds.name()).unwrap().1;
            ensure((f1 - published).abs() <= 0.05, format!("{} majority macro-F1 {f1:.2}, published {published}", ds.name()))?;
            checked.push(ds.name().to_string());
        }
        let mut extra = String::new();
        if let (Some(vast), Some(arc)) = (present.iter().find(|d| d.name() == "vast"), present.iter().find(|d| d.name() == "arc")) {
            let m = overlap_matrix(&[vast, arc], &WordTokenizer).map_err(|e| e.to_string())?;
            let overlap = m.get("vast", "arc").unwrap();
            ensure((overlap - reference::VAST_IN_ARC_OVERLAP).abs() <= 0.01, format!("vast/arc overlap {overlap:.3}"))?;
            extra = format!("; vast/arc overlap {overlap:.3}");
        }
        Ok(format!("split sizes and majority baselines match for {}{extra}", checked.join(", ")))
    };
    verdict(run())
}

fn group_tables() -> Outcome {
    use Group::*;
    let published: [(Group, &[&str]); 5] = [
        (
            Positive,
            &[
                "arc__agree", "argmin__argument for", "emergent__for", "fnc1__agree", "iac1__pro", "mtsd__favor",
                "perspectrum__support", "poldeb__for", "rumor__endorse", "scd__for", "semeval2016t6__favor",
                "semeval2019t7__support", "snopes__agree", "vast__pro", "wtwt__support",
            ],
        ),
        (
            Negative,
            &[
                "arc__disagree", "argmin__argument against", "emergent__against", "fnc1__disagree", "iac1__anti",
                "ibmcs__con", "mtsd__against", "perspectrum__undermine", "poldeb__against", "rumor__deny", "scd__against",
                "semeval2016t6__against", "semeval2019t7__deny", "snopes__refute", "vast__con", "wtwt__refute",
            ],
        ),
        (
            Discuss,
            &["arc__discuss", "emergent__observing", "fnc1__discuss", "rumor__question", "semeval2019t7__query", "wtwt__comment"],
        ),
        (
            Other,
            &["arc__unrelated", "fnc1__unrelated", "iac1__other", "mtsd__none", "rumor__unrelated", "semeval2019t7__comment", "wtwt__unrelated"],
        ),
        (Neutral, &["rumor__neutral", "vast__neutral"]),
    ];
    let neighbourhoods: [(Group, [Group; 4]); 5] = [
        (Positive, [Other, Neutral, Discuss, Negative]),
        (Other, [Neutral, Discuss, Positive, Negative]),
        (Neutral, [Discuss, Other, Positive, Negative]),
        (Discuss, [Neutral, Other, Negative, Positive]),
        (Negative, [Discuss, Neutral, Other, Positive]),
    ];
    let run = || -> Result<String, String> {
        let verbatim = HardGroupTable::builtin(TableVariant::Verbatim);
        let repaired = HardGroupTable::builtin(TableVariant::Repaired);
        let mut count = 0;
        for (group, labels) in published {
            for key in labels {
                let (dataset, label) = key.split_once("__").unwrap();
                for table in [&verbatim, &repaired] {
                    ensure(table.group_of(dataset, label) == Some(group), format!("{key} is not in {group}"))?;
                }
                count += 1;
            }
        }
        ensure(verbatim.assignments().count() == count, "verbatim table has extra rows")?;
        for (group, expected) in neighbourhoods {
            for table in [&verbatim, &repaired] {
                ensure(table.neighborhood(group) == Some(&expected[..]), format!("neighbourhood of {group} differs"))?;
            }
        }
        // labels the published table leaves out
        ensure(verbatim.group_of("ibmcs", "pro").is_none(), "verbatim table groups ibmcs__pro")?;
        ensure(repaired.group_of("ibmcs", "pro") == Some(Positive), "repaired table must put ibmcs__pro in positive")?;
        ensure(repaired.group_of("semeval2016t6", "none") == Some(Other), "repaired table must put semeval2016t6__none in other")?;
        let registry = Registry::builtin();
        for d in registry.descriptors() {
            for l in &d.labels {
                ensure(repaired.group_of(&d.name, l).is_some(), format!("{}__{l} has no group in the repaired table", d.name))?;
            }
        }
        // hard mapping on the verbatim table cannot reach ibmcs__pro
        let ibmcs = registry.get("ibmcs").unwrap();
        let hard = hard_map(Positive, ibmcs, &verbatim);
        ensure(hard.is_err(), "verbatim table should leave ibmcs__pro unmapped")?;
        let mapped = hard_map(Positive, ibmcs, &repaired).map_err(|e| e.to_string())?;
        ensure(mapped.label == "pro", "repaired hard map of positive")?;
        Ok(format!("{count} published assignments and 5 neighbourhoods verbatim; 2 repaired rows"))
    };
    verdict(run())
}

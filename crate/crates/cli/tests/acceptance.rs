//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The dataset-statistics check runs only when `CNLAUG_ACE2004_TRAIN` or
//! `CNLAUG_ACE2005_TRAIN` points at a jsonl conversion of that split.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cnlaug::cfm::{depth_prefilter, rank_and_select, AugmentedSample, FilterConfig, Reason, Verdict};
use cnlaug::cnlc::{delinearize, linearize, LinearizedSequence};
use cnlaug::corpus::{corpus_stats, label_correlation, read_corpus_file, LabelSet, NestedAnnotation, Schema, StopList};
use cnlaug::eval::span_prf;
use cnlaug::retrieval::{top_n_similar, RetrievalConfig, SentenceEmbedding};
use cnlaug::synth::{random_annotation, RandomShape};
use cnlaug::template::{build_template, dynamic_mask, select_keywords, AttentionMap, GaussianMaskConfig, KeywordSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_cnlaug");

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn small() -> RandomShape {
    RandomShape {
        max_tokens: 12,
        max_depth: 4,
        span_rate: 0.3,
    }
}

fn round_trip() -> Outcome {
    let schema = Schema::default();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut passed = 0;
    for i in 0..1000 {
        let ann = random_annotation(
            &format!("a{i}"),
            &LabelSet::default(),
            &RandomShape::default(),
            &schema,
            &mut rng,
        );
        let ok = ann.len() <= 40 && ann.max_depth() <= 3 && delinearize(&linearize(&ann), &schema).ok() == Some(ann);
        passed += usize::from(ok);
    }
    let took = start.elapsed();
    verdict(
        passed == 1000 && took < Duration::from_secs(5),
        format!("{passed}/1000 in {:.2}s", took.as_secs_f64()),
    )
}

/// Runs `check` on `trials` seeds; returns how many agreed.
fn trials(n: u64, mut check: impl FnMut(&mut ChaCha8Rng) -> bool) -> u64 {
    (0..n)
        .filter(|&seed| check(&mut ChaCha8Rng::seed_from_u64(seed)))
        .count() as u64
}

fn oracles() -> Vec<(&'static str, Outcome)> {
    const N: u64 = 250;
    let mut out = Vec::new();
    let mut report =
        |name, agreed: u64| out.push((name, verdict(agreed == N, format!("{agreed}/{N} instances agree"))));

    report(
        "corpus_stats",
        trials(N, |rng| {
            let size = rng.gen_range(0..8);
            let corpus = common::corpus(rng, size, &small());
            let s = corpus_stats(&corpus);
            (
                s.num_sentences,
                s.num_nested_sentences,
                s.num_entities,
                s.num_nested_entities,
            ) == common::stats(&corpus)
        }),
    );

    report(
        "label_correlation",
        trials(N, |rng| {
            let size = rng.gen_range(0..8);
            let corpus = common::corpus(rng, size, &small());
            let got: Vec<((String, String), u64)> = label_correlation(&corpus)
                .iter()
                .filter(|(_, _, n)| *n > 0)
                .map(|(o, i, n)| ((o.as_str().to_string(), i.as_str().to_string()), n))
                .collect();
            got == common::correlation(&corpus).into_iter().collect::<Vec<_>>()
        }),
    );

    let schema = common::unbounded().with_stopwords(StopList::from_words(["the", "of"]));
    report(
        "select_keywords",
        trials(N, |rng| {
            let ann = random_annotation("k", &LabelSet::default(), &small(), &schema, rng);
            let rows = common::dyadic_attention(ann.len(), rng);
            let tenths = rng.gen_range(1..=10);
            let map = AttentionMap::from_rows(rows.clone()).unwrap();
            let mut got = select_keywords(&ann, &map, tenths as f64 / 10.0)
                .unwrap()
                .indices()
                .to_vec();
            got.sort_unstable();
            got == common::keywords(&ann, &rows, tenths)
        }),
    );

    report(
        "top_n_similar",
        trials(N, |rng| {
            let dim = rng.gen_range(1..6);
            let size = rng.gen_range(1..12);
            let mut vectors: Vec<(String, Vec<f64>)> = Vec::new();
            for i in 0..size {
                let v: Vec<f64> = match rng.gen_range(0..6) {
                    0 if !vectors.is_empty() => vectors[rng.gen_range(0..vectors.len())].1.clone(),
                    1 => vec![0.0; dim],
                    _ => (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                };
                vectors.push((format!("v{i:02}"), v));
            }
            let embeddings: Vec<SentenceEmbedding<f64>> = vectors
                .iter()
                .map(|(id, v)| SentenceEmbedding::new(id.clone(), v.clone()))
                .collect();
            let n = rng.gen_range(1..5);
            vectors.iter().all(|(query, _)| {
                let got = top_n_similar(query, &embeddings, &RetrievalConfig::new(n).unwrap()).unwrap();
                let want = common::top_n(query, &vectors, n);
                got.len() == want.len()
                    && got
                        .iter()
                        .zip(&want)
                        .all(|((a, x), (b, y))| a == b && (x - y).abs() <= 1e-12)
            })
        }),
    );

    report(
        "span_prf",
        trials(N, |rng| {
            let size = rng.gen_range(1..50);
            let gold = common::corpus(rng, size, &small());
            let pred: Vec<_> = gold.iter().map(|g| common::perturb(g, rng)).collect();
            let e = span_prf::<f64>(&gold, &pred, &LabelSet::default()).unwrap();
            let counts = common::prf_counts(&gold, &pred);
            let micro = counts[""];
            let (p, r, f) = common::prf(micro);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
            (e.micro.tp, e.micro.fp, e.micro.fn_) == micro
                && close(e.micro.precision, p)
                && close(e.micro.recall, r)
                && close(e.micro.f1, f)
                && close(e.macro_f1, common::macro_f1(&counts))
                && e.per_label.iter().all(|(label, prf)| {
                    let c = counts.get(label.as_str()).copied().unwrap_or_default();
                    (prf.tp, prf.fp, prf.fn_) == c && close(prf.f1, common::prf(c).2)
                })
        }),
    );

    report(
        "depth_prefilter",
        trials(N, |rng| {
            let shape = RandomShape {
                max_depth: 6,
                ..small()
            };
            let size = rng.gen_range(0..10);
            let corpus = common::corpus(rng, size, &shape);
            let max = rng.gen_range(1..5);
            let (kept, removed) = depth_prefilter(corpus.clone(), max);
            let removed: Vec<String> = removed.iter().map(|a| a.id().to_string()).collect();
            removed == common::too_deep(&corpus, max) && kept.len() + removed.len() == corpus.len()
        }),
    );
    out
}

fn masking() -> Outcome {
    let schema = Schema::default();
    let cfg = GaussianMaskConfig::new(0.3).unwrap();
    // ten free words around one entity, all of them keywords
    let words = ["w0", "w1", "w2", "w3", "w4", "Ann", "w5", "w6", "w7", "w8", "w9"];
    let span = cnlaug::corpus::Span::new(5, 6, schema.label("PER").unwrap());
    let ann = NestedAnnotation::new("m", &words, vec![span], &schema).unwrap();
    let base = build_template(&ann, &KeywordSet::new((0..11).filter(|&i| i != 5)));
    assert_eq!(base.visible_keywords().len(), 10);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut sum, mut bad_count, mut runs) = (0.0, 0, 0);
    for _ in 0..10_000 {
        let dm = dynamic_mask(&base, &cfg, &mut rng);
        sum += dm.rate;
        let removed = 10 - dm.template.visible_keywords().len();
        bad_count += usize::from(dm.masked_count != (dm.rate * 10.0).round() as usize || removed != dm.masked_count);
        runs += usize::from(dm.template.has_consecutive_masks());
    }
    // random sentences and keyword sets as well
    for seed in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ann = random_annotation("r", &LabelSet::default(), &RandomShape::default(), &schema, &mut rng);
        let entity = ann.entity_mask();
        let kw = KeywordSet::new((0..ann.len()).filter(|&i| !entity[i] && rng.gen_bool(0.5)));
        let base = build_template(&ann, &kw);
        let k = base.visible_keywords().len();
        let dm = dynamic_mask(&base, &cfg, &mut rng);
        bad_count += usize::from(dm.masked_count != (dm.rate * k as f64).round() as usize);
        runs += usize::from(base.has_consecutive_masks() || dm.template.has_consecutive_masks());
    }
    let mean = sum / 10_000.0;
    verdict(
        (0.295..=0.305).contains(&mean) && bad_count == 0 && runs == 0,
        format!("mean rate {mean:.4} over 10000 draws, {bad_count} count mismatches, {runs} repeated masks"),
    )
}

fn pool(n: usize) -> Vec<AugmentedSample<f64>> {
    (0..n)
        .map(|i| AugmentedSample {
            source_id: format!("s{i:02}"),
            variant: 0,
            partner: None,
            generated: LinearizedSequence::parse("s", "w"),
            recovered: None,
            verdict: Verdict::Silver,
            // distinct, deliberately out of order
            pll: Some(-(((i * 7) % n) as f64) - 0.5),
        })
        .collect()
}

fn cfm() -> Outcome {
    let check = |n: usize, rate: f64| {
        let mut samples = pool(n);
        // a rejected sample with the best score must not count or be kept
        samples.push(AugmentedSample {
            verdict: Verdict::NoneSilver(Reason::LabelMismatch),
            pll: None,
            ..samples[0].clone()
        });
        let kept = rank_and_select(&samples, &FilterConfig::new(rate).unwrap());
        let score = |k: usize| samples[k].pll.unwrap();
        let min_kept = kept.iter().map(|&k| score(k)).fold(f64::INFINITY, f64::min);
        let max_dropped = (0..n)
            .filter(|k| !kept.contains(k))
            .map(score)
            .fold(f64::NEG_INFINITY, f64::max);
        (kept.len(), min_kept >= max_dropped && kept.iter().all(|&k| k < n))
    };
    let (a, a_order) = check(10, 0.70);
    let (b, b_order) = check(20, 0.35);
    verdict(
        a == 7 && b == 7 && a_order && b_order,
        format!(
            "rate 0.70 of 10 keeps {a}, rate 0.35 of 20 keeps {b}, ordering {}",
            a_order && b_order
        ),
    )
}

fn augment_run(out: &Path, workers: &str) -> Result<(), String> {
    let o = format!("out_dir={}", out.display());
    let run = Command::new(BIN)
        .args(["augment", "--config"])
        .arg(fixtures().join("run.conf"))
        .args(["--set", &o, "--workers", workers])
        .env_remove("CNLAUG_WORKER")
        .output()
        .map_err(|e| e.to_string())?;
    if run.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&run.stderr).into_owned())
    }
}

fn determinism(one: &Path, eight: &Path) -> Outcome {
    let start = Instant::now();
    if let Err(e) = augment_run(one, "1").and_then(|_| augment_run(eight, "8")) {
        return Outcome::Fail(format!("augment failed: {e}"));
    }
    let took = start.elapsed();
    let same = ["silver.jsonl", "aug_golden.jsonl"].iter().all(|f| {
        fs::read(one.join(f))
            .ok()
            .is_some_and(|a| Some(a) == fs::read(eight.join(f)).ok())
    });
    let sentences = read_corpus_file(&fixtures().join("synthetic.jsonl"), &Schema::default())
        .map(|c| c.len())
        .unwrap_or(0);
    verdict(
        same && sentences == 200 && took < Duration::from_secs(60),
        format!(
            "{sentences} sentences, 1 vs 8 workers byte-identical: {same}, {:.2}s total",
            took.as_secs_f64()
        ),
    )
}

fn sorted_labels(ann: &NestedAnnotation) -> Vec<String> {
    let mut l: Vec<String> = ann.spans().iter().map(|s| s.label.as_str().to_string()).collect();
    l.sort();
    l
}

fn silver_validity(run: &Path) -> Outcome {
    let golden = match read_corpus_file(&fixtures().join("synthetic.jsonl"), &Schema::default()) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let by_id: HashMap<&str, &NestedAnnotation> = golden.iter().map(|a| (a.id(), a)).collect();
    let silver = match read_corpus_file(&run.join("silver.jsonl"), &Schema::default()) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(format!("silver fails validation: {e}")),
    };
    let mut partners: HashMap<(String, u64), Option<String>> = HashMap::new();
    for line in fs::read_to_string(run.join("report.jsonl")).unwrap_or_default().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        partners.insert(
            (
                v["source_id"].as_str().unwrap().to_string(),
                v["variant"].as_u64().unwrap(),
            ),
            v["partner"].as_str().map(str::to_string),
        );
    }
    let mut bad = Vec::new();
    for s in &silver {
        let rest = s.id().strip_prefix("aug-").unwrap_or_default();
        let (source, variant) = rest.rsplit_once('-').unwrap_or_default();
        let variant: u64 = variant.parse().unwrap_or(u64::MAX);
        let Some(partner) = partners.get(&(source.to_string(), variant)) else {
            bad.push(s.id().to_string());
            continue;
        };
        let mut want = by_id.get(source).map(|a| sorted_labels(a)).unwrap_or_default();
        if let Some(p) = partner {
            want.extend(by_id.get(p.as_str()).map(|a| sorted_labels(a)).unwrap_or_default());
            want.sort();
        }
        if want.is_empty() || sorted_labels(s) != want {
            bad.push(s.id().to_string());
        }
    }
    let merged = read_corpus_file(&run.join("aug_golden.jsonl"), &Schema::default()).unwrap_or_default();
    let merged_ok = merged.len() == golden.len() + silver.len()
        && merged[..golden.len()] == golden[..]
        && merged[golden.len()..] == silver[..];
    verdict(
        !silver.is_empty() && bad.is_empty() && merged_ok,
        format!(
            "{} of {} silver samples valid with matching labels, aug-golden = golden + silver: {merged_ok}",
            silver.len() - bad.len(),
            silver.len()
        ),
    )
}

fn table2() -> Outcome {
    let cases = [
        ("CNLAUG_ACE2004_TRAIN", (6198, 2718, 22204, 10159)),
        ("CNLAUG_ACE2005_TRAIN", (7285, 2797, 24827, 10039)),
    ];
    let mut details = Vec::new();
    let mut all = true;
    for (var, want) in cases {
        let Some(path) = std::env::var_os(var) else {
            details.push(format!("{var} unset"));
            continue;
        };
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("stats.jsonl");
        let run = Command::new(BIN)
            .arg("stats")
            .arg(&path)
            .arg("--jsonl")
            .arg(&jsonl)
            .output()
            .unwrap();
        let mut got: HashMap<String, u64> = HashMap::new();
        for line in fs::read_to_string(&jsonl).unwrap_or_default().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            got.insert(v["metric"].as_str().unwrap().to_string(), v["value"].as_u64().unwrap());
        }
        let got = (got.get("#S"), got.get("#NS"), got.get("#E"), got.get("#NE"));
        let ok = run.status.success() && got == (Some(&want.0), Some(&want.1), Some(&want.2), Some(&want.3));
        all &= ok;
        details.push(format!("{var}: got {got:?}, want {want:?}"));
    }
    if details.iter().all(|d| d.ends_with("unset")) {
        Outcome::Skip(details.join("; "))
    } else {
        verdict(all, details.join("; "))
    }
}

fn metric_fixture() -> Outcome {
    let dir = fixtures().join("eval");
    let schema = Schema::default();
    let (gold, pred) = match (
        read_corpus_file(&dir.join("gold.jsonl"), &schema),
        read_corpus_file(&dir.join("pred.jsonl"), &schema),
    ) {
        (Ok(g), Ok(p)) => (g, p),
        _ => return Outcome::Fail("fixture unreadable".into()),
    };
    let e = span_prf::<f64>(&gold, &pred, &LabelSet::default()).unwrap();
    let m = &e.micro;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4;
    verdict(
        m.tp + m.fp == 3
            && m.tp + m.fn_ == 4
            && close(m.precision, 0.6667)
            && close(m.recall, 0.5)
            && close(m.f1, 0.5714),
        format!("P={:.4} R={:.4} F1={:.4}", m.precision, m.recall, m.f1),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let (one, eight) = (scratch.path().join("w1"), scratch.path().join("w8"));
    let mut results: Vec<(String, Outcome)> = vec![("CNLC round trip".into(), round_trip())];
    for (name, outcome) in oracles() {
        results.push((format!("oracle equivalence: {name}"), outcome));
    }
    results.push(("masking statistics".into(), masking()));
    results.push(("CFM contract".into(), cfm()));
    results.push(("end-to-end determinism".into(), determinism(&one, &eight)));
    results.push(("silver validity".into(), silver_validity(&one)));
    results.push(("dataset statistics (conditional)".into(), table2()));
    results.push(("metric fixture".into(), metric_fixture()));

    let mut failed = 0;
    for (name, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag}  {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

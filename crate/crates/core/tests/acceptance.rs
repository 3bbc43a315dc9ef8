//! Acceptance gate: one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use lexforge::complexity::LengthBand;
use lexforge::config::{load_config, Config, TrainingConfig};
use lexforge::corpus::{load_corpus, LegalDocument, Source};
use lexforge::curriculum::{build_manifest, Origin, Task};
use lexforge::dataset::{
    export_manifest, load_export, split, to_training_example, ExampleInput, ExportOptions, Split,
    SplitRatios,
};
use lexforge::evalkit::{compare_runs, micro_f1, rouge_l, rouge_n, LossLog};
use lexforge::pipeline::{run_pipeline, RECORDS_FILE};
use lexforge::qagen::{
    assemble_record, generate, load_records, max_calls_in_window, GenerateOptions, MockBackend,
    QaRecord, QuestionFormulator, QuestionStrategy, RateLimitPolicy, SimulatedClock,
};
use lexforge::sampler::{stratified_sample, stratified_sample_with, BandProportions};
use lexforge::seed::SeededRng;
use serde_json::Value;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("rate-limit compliance", rate_limit),
        ("generation scale (200 docs, 7% failures)", generation_scale),
        ("QA record schema fidelity", schema_fidelity),
        ("stratified sampling", stratification),
        ("split leakage and counts", leakage),
        ("curriculum ordering", curriculum_ordering),
        ("end-to-end determinism", determinism),
        ("metric oracles", metric_oracles),
        ("final-loss comparison report", loss_report),
        ("training config defaults", config_defaults),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into())));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} acceptance criteria passed", 10 - failures, 10);
    if failures > 0 {
        std::process::exit(1);
    }
}

fn drafts_for(docs: &[LegalDocument], per_doc: usize) -> Vec<lexforge::qagen::QuestionDraft> {
    let f = QuestionFormulator::default();
    docs.iter().flat_map(|d| f.formulate(d, per_doc, 3)).collect()
}

fn rate_limit() -> Result<String, String> {
    let started = Instant::now();
    let docs = synthetic_corpus(Source::Eurlex, 260, 11);
    let index: HashMap<&str, &LegalDocument> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let policy = RateLimitPolicy::default();
    let mut rng = SeededRng::new(2024);
    let mut worst = 0;
    let mut total_drafts = 0;
    for trial in 0..4 {
        let per_doc = 4 + rng.below(2) as usize;
        let drafts = drafts_for(&docs, per_doc);
        total_drafts += drafts.len();
        let clock = Arc::new(SimulatedClock::new());
        let max_ms = 200 + rng.below(8000);
        let backend = MockBackend::new(trial)
            .with_failure_rate(0.05)
            .with_latency(clock.clone(), Duration::from_millis(10), Duration::from_millis(max_ms));
        let options = GenerateOptions {
            policy,
            concurrency: [1, 4][trial as usize % 2],
        };
        let out = generate(&backend, &drafts, &index, options, clock.as_ref()).map_err(|e| e.to_string())?;
        ensure(out.report.reconciles(), || format!("trial {trial}: report does not reconcile"))?;
        let m = max_calls_in_window(&out.report.call_times, policy.window);
        worst = worst.max(m);
        ensure(m <= 15, || format!("trial {trial}: {m} calls in one 60 s window"))?;
    }
    ensure(total_drafts >= 1000, || format!("only {total_drafts} drafts"))?;

    // burst of 16: the 16th call waits for the first to leave the window
    let clock = SimulatedClock::new();
    clock.advance(Duration::from_millis(12_345));
    let burst = drafts_for(&docs[..4], 4);
    let out = generate(&MockBackend::new(1), &burst, &index, GenerateOptions::default(), &clock)
        .map_err(|e| e.to_string())?;
    let t = &out.report.call_times;
    ensure(t.len() == 16, || format!("{} calls in burst", t.len()))?;
    let delay = t[15] - t[14];
    let remainder = t[0] + policy.window - t[14];
    ensure(delay >= remainder && t[15] >= t[0] + policy.window, || {
        format!("call 16 delayed {delay:?}, window remainder {remainder:?}")
    })?;
    let wall = started.elapsed();
    ensure(wall < Duration::from_secs(5), || format!("took {wall:?}"))?;
    Ok(format!(
        "{total_drafts} drafts over 4 randomized trials, max {worst} calls/60 s; call 16 waited {:.1} s",
        delay.as_secs_f64()
    ))
}

fn generation_scale() -> Result<String, String> {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = pipeline_config(dir.path(), 100, 930);
    config.pipeline.backend.mock_failure_rate = 0.07;
    let backend = MockBackend::new(7).with_failure_rate(0.07);
    let summary = run_pipeline(&config, &backend, &SimulatedClock::new()).map_err(|e| e.to_string())?;
    let r = &summary.generation;
    ensure(summary.corpora.iter().all(|c| c.sampled == 100), || "expected 100 sampled docs per source".into())?;
    ensure(r.drafts == 1000, || format!("{} drafts", r.drafts))?;
    ensure(r.successes >= 930, || format!("only {} records", r.successes))?;
    ensure(r.retries > 0, || "no transient failures were injected".into())?;
    ensure(r.reconciles() && summary.reconciles(), || format!("counts do not reconcile: {r:?}"))?;
    let written = load_records(&config.pipeline.output_dir.join(RECORDS_FILE)).map_err(|e| e.to_string())?;
    ensure(written.len() == r.successes, || "record file length differs from report".into())?;
    let wall = started.elapsed();
    ensure(wall < Duration::from_secs(30), || format!("took {wall:?}"))?;
    Ok(format!(
        "{} records from {} drafts ({} retries, {} skipped, {} calls); {} exported = 200 real + {} synthetic",
        r.successes, r.drafts, r.retries, r.skipped, r.calls, summary.exported(), r.successes
    ))
}

const RECORD_KEYS: [&str; 6] = ["answer", "difficulty", "keyword", "metadata", "question", "type"];

fn schema_fidelity() -> Result<String, String> {
    let expected_keys: BTreeSet<&str> = RECORD_KEYS.into_iter().collect();

    // bundled golden records reproduce exactly from their source documents
    let sum_doc = load_corpus(&fixture("golden_eurlex_sum.jsonl"), Source::EurlexSum).map_err(|e| e.to_string())?;
    let el_doc = load_corpus(&fixture("golden_eurlex.jsonl"), Source::Eurlex).map_err(|e| e.to_string())?;
    let golden_records = load_records(&fixture("golden_records.jsonl")).map_err(|e| e.to_string())?;
    let f = QuestionFormulator::default();
    for (doc, golden) in [(&sum_doc[0], &golden_records[0]), (&el_doc[0], &golden_records[1])] {
        let drafts = f.formulate(doc, 16, 0);
        let draft = drafts
            .iter()
            .find(|d| d.question_text == golden.question)
            .ok_or_else(|| format!("{}: no draft asks '{}'", doc.doc_id, golden.question))?;
        let record = assemble_record(draft, &golden.answer, doc).map_err(|e| e.to_string())?;
        ensure(&record == golden, || format!("{}: assembled record differs from golden fixture", doc.doc_id))?;
    }
    ensure(golden_records[0].kind == QuestionStrategy::Factual && golden_records[0].metadata["celex_id"] == "32009H1205(01)", || "eurlex_sum_283 fields".into())?;
    ensure(serde_json::to_value(golden_records[0].difficulty).unwrap() == "easy", || "eurlex_sum_283 should be easy".into())?;
    ensure(golden_records[1].kind == QuestionStrategy::Reasoning && golden_records[1].metadata["labels"] == serde_json::json!([9, 23, 93, 96, 97]), || "eurlex_15107 fields".into())?;
    ensure(serde_json::to_value(golden_records[1].difficulty).unwrap() == "hard", || "eurlex_15107 should be hard".into())?;

    // every record written by a full run carries exactly the record keys
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = pipeline_config(dir.path(), 30, 283);
    run_pipeline(&config, &MockBackend::new(3), &SimulatedClock::new()).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(config.pipeline.output_dir.join(RECORDS_FILE)).map_err(|e| e.to_string())?;
    let mut by_type: BTreeMap<String, usize> = BTreeMap::new();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        ensure(keys == expected_keys, || format!("record keys {keys:?}"))?;
        let kind = v["type"].as_str().unwrap().to_string();
        let want = match kind.as_str() {
            "factual" | "definition" => "easy",
            "reasoning" | "comparison" => "hard",
            other => return Err(format!("unknown type {other}")),
        };
        ensure(v["difficulty"] == want, || format!("{kind} record tagged {}", v["difficulty"]))?;
        let meta = v["metadata"].as_object().unwrap();
        ensure(meta.contains_key("celex_id") || meta.contains_key("labels"), || "metadata lacks celex_id/labels".into())?;
        *by_type.entry(kind).or_default() += 1;
    }
    Ok(format!("golden records reproduced; {} run records checked {by_type:?}", text.lines().count()))
}

fn band_corpus(counts: [usize; 3]) -> (Vec<LegalDocument>, BTreeMap<String, lexforge::complexity::ComplexityProfile>) {
    let mut docs = Vec::new();
    let mut profiles = BTreeMap::new();
    for (b, &c) in LengthBand::ALL.iter().zip(&counts) {
        for i in 0..c {
            let id = format!("{b:?}_{i:03}");
            docs.push(LegalDocument::eurlex(id.clone(), "text", vec![1]));
            profiles.insert(id, profile(10, *b, 0.5));
        }
    }
    (docs, profiles)
}

fn stratification() -> Result<String, String> {
    let (docs, profiles) = band_corpus([60, 30, 10]);
    let sample = stratified_sample(&docs, &profiles, 10, 1).map_err(|e| e.to_string())?;
    let mut got = [0usize; 3];
    for d in &sample {
        got[profiles[&d.doc_id].band.index()] += 1;
    }
    ensure(got == [6, 3, 1], || format!("(0.6,0.3,0.1) n=10 gave {got:?}"))?;

    let mut rng = SeededRng::new(77);
    let trials = 300;
    for t in 0..trials {
        let avail = [rng.below(40) as usize, rng.below(40) as usize, rng.below(40) as usize];
        let total: usize = avail.iter().sum();
        if total == 0 {
            continue;
        }
        let raw = [rng.unit(), rng.unit(), rng.unit()];
        let s: f64 = raw.iter().sum();
        let props = BandProportions([raw[0] / s, raw[1] / s, raw[2] / s]);
        let n = 1 + rng.below(total as u64) as usize;
        let (docs, profiles) = band_corpus(avail);
        let sample = stratified_sample_with(&docs, &profiles, &props, n, t).map_err(|e| e.to_string())?;
        ensure(sample.len() == n, || format!("trial {t}: {} of {n}", sample.len()))?;
        let mut got = [0usize; 3];
        for d in &sample {
            got[profiles[&d.doc_id].band.index()] += 1;
        }
        let deficit: f64 = (0..3).map(|b| (props.0[b] * n as f64 - avail[b] as f64).max(0.0)).sum();
        for b in 0..3 {
            let dev = (got[b] as f64 / n as f64 - props.0[b]).abs();
            let bound = (1.0 + deficit) / n as f64 + 1e-12;
            ensure(dev <= bound, || format!("trial {t}: band {b} deviation {dev:.4} > {bound:.4} (got {got:?}, avail {avail:?}, n {n})"))?;
            ensure(got[b] <= avail[b], || format!("trial {t}: oversampled band {b}"))?;
        }
    }
    Ok(format!("(6,3,1) exact; {trials} random corpora within 1/n + deficit"))
}

fn qa_examples(n_docs: usize, seed: u64) -> Vec<lexforge::curriculum::TrainingExample> {
    let docs = synthetic_corpus(Source::Eurlex, n_docs, seed);
    let model = lexforge::complexity::ComplexityModel::fit(
        &docs,
        lexforge::complexity::ConceptLexicon::default(),
        1.0 / 3.0,
        2.0 / 3.0,
        Default::default(),
    )
    .unwrap();
    let f = QuestionFormulator::default();
    let mut out = Vec::new();
    for doc in &docs {
        out.push(to_training_example(ExampleInput::Document(doc), Task::Labeling, &model).unwrap());
        for (i, draft) in f.formulate(doc, 3, seed).iter().enumerate() {
            let rec: QaRecord = assemble_record(draft, "An answer.", doc).unwrap();
            out.push(to_training_example(ExampleInput::Qa { record: &rec, ordinal: i }, Task::Qa, &model).unwrap());
        }
    }
    out
}

fn leakage() -> Result<String, String> {
    let examples = qa_examples(50, 5);
    let manifest = build_manifest(examples.clone(), 3).map_err(|e| e.to_string())?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let want50 = hamilton(&[0.8, 0.1, 0.1], 50);
    for seed in 0..100u64 {
        let assignment = split(&examples, SplitRatios::default(), seed).map_err(|e| e.to_string())?;
        let dir = root.path().join(seed.to_string());
        export_manifest(&manifest, &assignment, &dir, &ExportOptions { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let loaded = load_export(&dir).map_err(|e| e.to_string())?;
        let mut owner: HashMap<String, Split> = HashMap::new();
        let mut doc_counts = [0usize; 3];
        for split in Split::ALL {
            let docs: BTreeSet<&str> = loaded.split(split).iter().map(|e| e.source_doc_id.as_str()).collect();
            doc_counts[split as usize] = docs.len();
            for d in docs {
                if let Some(prev) = owner.insert(d.to_string(), split) {
                    return Err(format!("seed {seed}: {d} in both {prev} and {split}"));
                }
            }
        }
        ensure(doc_counts.to_vec() == want50, || format!("seed {seed}: document counts {doc_counts:?}, want {want50:?}"))?;
        let lines = loaded.train.len() + loaded.validation.len() + loaded.test.len();
        ensure(lines == examples.len(), || format!("seed {seed}: {lines} exported of {}", examples.len()))?;
    }
    let ten = qa_examples(10, 9);
    let want10 = hamilton(&[0.8, 0.1, 0.1], 10);
    for seed in 0..100u64 {
        let counts = split(&ten, SplitRatios::default(), seed).map_err(|e| e.to_string())?.document_counts();
        ensure(counts.to_vec() == want10 && counts == [8, 1, 1], || format!("seed {seed}: {counts:?}"))?;
    }
    Ok(format!("100 seeds x 50 docs ({} examples): no shared source_doc_id, counts {want50:?}; 10 docs -> 8/1/1", examples.len()))
}

fn curriculum_ordering() -> Result<String, String> {
    let mut rng = SeededRng::new(31);
    let all_train = SplitRatios { train: 1.0, validation: 0.0, test: 0.0 };
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trials = 120;
    for t in 0..trials {
        let n = 1 + rng.below(80) as usize;
        let stages = 1 + rng.below(6.min(n) as u64) as usize;
        let docs = 1 + rng.below(20) as usize;
        let mut examples = random_examples(&mut rng, n, docs);
        rng.shuffle(&mut examples);
        let manifest = build_manifest(examples.clone(), stages).map_err(|e| e.to_string())?;
        let assignment = split(&examples, all_train, t).map_err(|e| e.to_string())?;
        let dir = root.path().join(t.to_string());
        export_manifest(&manifest, &assignment, &dir, &ExportOptions::default()).map_err(|e| e.to_string())?;
        let train = load_export(&dir).map_err(|e| e.to_string())?.train;

        let mut input: Vec<&str> = examples.iter().map(|e| e.example_id.as_str()).collect();
        let mut output: Vec<&str> = train.iter().map(|e| e.example_id.as_str()).collect();
        input.sort_unstable();
        output.sort_unstable();
        ensure(input == output, || format!("trial {t}: train file is not a permutation of the input"))?;

        let rank = |e: &lexforge::dataset::ExportedExample| match (e.origin, e.difficulty) {
            (Origin::Real, _) | (_, None) => 0,
            (_, Some(d)) => d.rank(),
        };
        for w in train.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            ensure(rank(a) <= rank(b), || format!("trial {t}: difficulty rank decreases"))?;
            if rank(a) == rank(b) {
                ensure(a.complexity.composite_score <= b.complexity.composite_score, || {
                    format!("trial {t}: composite score decreases within rank")
                })?;
            }
            ensure(a.stage_index <= b.stage_index, || format!("trial {t}: stage index decreases"))?;
        }
        let mut sizes = vec![0usize; stages];
        for e in &train {
            sizes[e.stage_index] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        ensure(hi - lo <= 1, || format!("trial {t}: stage sizes {sizes:?}"))?;
        ensure(sizes.iter().sum::<usize>() == n, || format!("trial {t}: sizes {sizes:?} for {n}"))?;
    }
    Ok(format!("{trials} randomized trials: permutation, ordered within rank, stage sizes within 1"))
}

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lexforge"))
        .args(["run", "--backend", "mock", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)))
}

fn determinism() -> Result<String, String> {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let config = fixture("pipeline.toml");
    run_cli(&config, &a)?;
    run_cli(&config, &b)?;
    let fa = read_dir_files(&a);
    let fb = read_dir_files(&b);
    ensure(fa.keys().eq(fb.keys()), || format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()))?;
    for (name, bytes) in &fa {
        if name == "manifest_meta.json" {
            let strip = |raw: &[u8]| {
                let mut v: Value = serde_json::from_slice(raw).unwrap();
                v.as_object_mut().unwrap().remove("created_at");
                v
            };
            ensure(strip(bytes) == strip(&fb[name]), || "manifest_meta differs beyond created_at".into())?;
        } else {
            ensure(bytes == &fb[name], || format!("{name} differs"))?;
        }
    }
    let meta: Value = serde_json::from_slice(&fa["manifest_meta.json"]).unwrap();
    ensure(meta["complete"] == true, || "meta not complete".into())?;
    Ok(format!("{} files byte-identical across two CLI runs, content hash {}", fa.len(), &meta["content_hash"].as_str().unwrap()[..16]))
}

// Brute-force references, written independently of the library code.

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn prf(overlap: f64, c: f64, r: f64) -> (f64, f64, f64) {
    if c == 0.0 || r == 0.0 || overlap == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (p, rec) = (overlap / c, overlap / r);
    (p, rec, 2.0 * p * rec / (p + rec))
}

fn brute_rouge_n(c: &str, r: &str, n: usize) -> (f64, f64, f64) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n { Vec::new() } else { (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect() }
    };
    let cg = grams(&toks(c));
    let mut rg = grams(&toks(r));
    let rlen = rg.len();
    let mut overlap = 0;
    for g in &cg {
        if let Some(pos) = rg.iter().position(|x| x == g) {
            rg.remove(pos);
            overlap += 1;
        }
    }
    prf(overlap as f64, cg.len() as f64, rlen as f64)
}

fn is_subsequence(sub: &[&String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == *x))
}

fn brute_rouge_l(c: &str, r: &str) -> (f64, f64, f64) {
    let ct = toks(c);
    let rt = toks(r);
    let mut best = 0;
    for mask in 0u32..(1 << ct.len()) {
        let sub: Vec<&String> = (0..ct.len()).filter(|i| mask >> i & 1 == 1).map(|i| &ct[i]).collect();
        if sub.len() > best && is_subsequence(&sub, &rt) {
            best = sub.len();
        }
    }
    prf(best as f64, ct.len() as f64, rt.len() as f64)
}

fn brute_micro_f1(p: &[BTreeSet<u8>], r: &[BTreeSet<u8>]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for label in 0..=u8::MAX {
        for (a, b) in p.iter().zip(r) {
            match (a.contains(&label), b.contains(&label)) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
    }
    if tp + fp + fneg == 0.0 {
        1.0
    } else {
        let (pr, rc) = if tp == 0.0 { (0.0, 0.0) } else { (tp / (tp + fp), tp / (tp + fneg)) };
        if pr + rc == 0.0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) }
    }
}

fn metric_oracles() -> Result<String, String> {
    const TOL: f64 = 1e-12;
    let vocab = ["a", "b", "c", "d", "A", "e"];
    let mut rng = SeededRng::new(500);
    let sentence = |rng: &mut SeededRng| -> String {
        let len = rng.below(9) as usize;
        (0..len).map(|_| vocab[rng.below(vocab.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
    };
    let close = |x: (f64, f64, f64), p: lexforge::evalkit::Prf| {
        (x.0 - p.precision).abs() <= TOL && (x.1 - p.recall).abs() <= TOL && (x.2 - p.f1).abs() <= TOL
    };
    for case in 0..500 {
        let c = sentence(&mut rng);
        let r = sentence(&mut rng);
        let n = 1 + rng.below(3) as usize;
        let got = rouge_n(&c, &r, n).unwrap();
        ensure(close(brute_rouge_n(&c, &r, n), got), || format!("case {case}: rouge_{n}({c:?}, {r:?}) = {got:?}"))?;
        let got = rouge_l(&c, &r);
        ensure(close(brute_rouge_l(&c, &r), got), || format!("case {case}: rouge_l({c:?}, {r:?}) = {got:?}"))?;

        let items = rng.below(5) as usize;
        let labels = |rng: &mut SeededRng| -> BTreeSet<u8> { (0..rng.below(4)).map(|_| rng.below(6) as u8).collect() };
        let p: Vec<BTreeSet<u8>> = (0..items).map(|_| labels(&mut rng)).collect();
        let q: Vec<BTreeSet<u8>> = (0..items).map(|_| labels(&mut rng)).collect();
        let got = micro_f1(&p, &q).unwrap();
        let want = brute_micro_f1(&p, &q);
        ensure((got - want).abs() <= TOL, || format!("case {case}: micro_f1 {got} vs {want}"))?;
    }
    ensure(rouge_n("the court ruled", "the court ruled", 1).unwrap().f1 == 1.0, || "rouge_n identity".into())?;
    ensure(rouge_n("a b c", "a b c", 3).unwrap().f1 == 1.0, || "rouge_3 identity".into())?;
    ensure(rouge_l("a b c", "a b c").f1 == 1.0, || "rouge_l identity".into())?;
    ensure(rouge_n("a b", "c d", 1).unwrap().f1 == 0.0 && rouge_l("a b", "c d").f1 == 0.0, || "disjoint".into())?;
    let s: Vec<BTreeSet<u8>> = vec![[1, 2].into(), [3].into()];
    let t: Vec<BTreeSet<u8>> = vec![[4].into(), [5, 6].into()];
    ensure(micro_f1(&s, &s).unwrap() == 1.0 && micro_f1(&s, &t).unwrap() == 0.0, || "micro_f1 identity/disjoint".into())?;
    let hand = rouge_n("a b c", "a b d", 2).unwrap();
    ensure((hand.precision, hand.recall, hand.f1) == (0.5, 0.5, 0.5), || "bigram example".into())?;
    ensure((rouge_l("a c b", "a b c").f1 - 2.0 / 3.0).abs() <= TOL, || "lcs example".into())?;
    Ok("500 random cases within 1e-12 of brute force; identity 1.0, disjoint 0.0".into())
}

fn loss_report() -> Result<String, String> {
    let mut logs = Vec::new();
    let mut datasets = Vec::new();
    for name in [
        "baseline.EurLex.losslog.jsonl",
        "augmented.EurLex.losslog.jsonl",
        "baseline.EurLex-Sum.losslog.jsonl",
        "augmented.EurLex-Sum.losslog.jsonl",
    ] {
        let (log, dataset) = LossLog::load(&fixture(&format!("losslogs/{name}"))).map_err(|e| e.to_string())?;
        logs.push(log);
        datasets.push(dataset);
    }
    let cmp = compare_runs(&logs, &datasets).map_err(|e| e.to_string())?;
    let want = [("baseline", "EurLex", 0.1918), ("augmented", "EurLex", 0.0152), ("baseline", "EurLex-Sum", 0.1639), ("augmented", "EurLex-Sum", 0.0026)];
    for (run, ds, loss) in want {
        ensure(cmp.final_loss(run, ds) == Some(loss), || format!("{run}/{ds}: {:?}", cmp.final_loss(run, ds)))?;
    }
    ensure(cmp.winner_per_dataset["EurLex"] == "augmented" && cmp.winner_per_dataset["EurLex-Sum"] == "augmented", || format!("winners {:?}", cmp.winner_per_dataset))?;
    let table = cmp.render_text();
    let header = table.lines().next().unwrap_or_default();
    ensure(header.contains("EurLex") && header.contains("EurLex-Sum"), || format!("header {header:?}"))?;
    for v in ["0.1918", "0.0152*", "0.1639", "0.0026*"] {
        ensure(table.contains(v), || format!("table lacks {v}:\n{table}"))?;
    }
    let json = cmp.render_json();
    ensure(json["datasets"] == serde_json::json!(["EurLex", "EurLex-Sum"]), || "json datasets".into())?;
    Ok(format!("winners {:?}; table rows {}", cmp.winner_per_dataset, table.lines().count() - 2))
}

fn config_defaults() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("empty.toml");
    fs::write(&path, "").map_err(|e| e.to_string())?;
    let loaded = load_config(&path).map_err(|e| e.to_string())?;
    let t: TrainingConfig = loaded.training.clone();
    let modules = ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"];
    let checks = [
        (t.lora_rank == 8, "r=8"),
        (t.lora_alpha == 16, "alpha=16"),
        (t.lora_dropout == 0.0, "dropout=0"),
        (t.target_modules == modules, "7 target modules"),
        (t.load_8bit, "8-bit load"),
        (t.max_seq_len == 8192 && t.max_seq_len_eurlex_sum == 16384, "seq len 8192 (16384 EurLex-Sum)"),
        (t.batch_size == 8, "batch 8"),
        (t.optimizer == "adamw-8bit", "adamw-8bit"),
        (t.learning_rate == 2e-5, "lr 2e-5"),
        (t.scheduler == "linear", "linear scheduler"),
        (t.warmup_steps == 5, "5 warmup steps"),
        (t.weight_decay == 0.01, "weight decay 0.01"),
        (t.epochs == 10, "10 epochs"),
    ];
    for (ok, what) in checks {
        ensure(ok, || format!("default mismatch: {what}"))?;
    }
    ensure(Config::parse("[training]\nlora_rank = 0").map(|c| c.validate().is_err()).unwrap_or(false), || "lora_rank=0 accepted".into())?;
    ensure(Config::parse(&loaded.to_toml()).map(|c| c.training == loaded.training).unwrap_or(false), || "round trip".into())?;
    ensure(loaded.pipeline.sampling.per_dataset == 100 && loaded.pipeline.generation.per_doc == 5, || "pipeline defaults".into())?;
    Ok(checks.iter().map(|(_, w)| *w).collect::<Vec<_>>().join(", "))
}

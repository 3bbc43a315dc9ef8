mod common;

use std::fs;

use common::{fixture, random_examples};
use lexforge::config::Config;
use lexforge::corpus::{load_corpus, Source};
use lexforge::curriculum::build_manifest;
use lexforge::dataset::{export_manifest, load_export, split, ExportOptions, ExportedExample, SplitRatios};
use lexforge::qagen::{build_prompt, parse_prompt, QuestionFormulator, QuestionStrategy};
use lexforge::evalkit::LossEntry;
use lexforge::seed::SeededRng;
use proptest::prelude::*;

#[test]
fn reasoning_prompt_matches_golden_file() {
    let doc = &load_corpus(&fixture("golden_eurlex.jsonl"), Source::Eurlex).unwrap()[0];
    let drafts = QuestionFormulator::default().formulate(doc, 4, 0);
    let draft = drafts.iter().find(|d| d.strategy == QuestionStrategy::Reasoning).unwrap();
    let prompt = build_prompt(draft).unwrap();

    let path = fixture("golden_prompt.txt");
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::write(&path, &prompt).unwrap();
    }
    assert_eq!(prompt, fs::read_to_string(&path).unwrap());

    let (keyword, question) = parse_prompt(&prompt).unwrap();
    assert_eq!(question, draft.question_text);
    assert_eq!(keyword, draft.context_excerpt);
}

fn fenced_blocks(chapter: &str, lang: &str) -> Vec<String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src").join(chapter);
    let text = fs::read_to_string(path).unwrap();
    let open = format!("```{lang}\n");
    text.split(&open).skip(1).map(|rest| rest.split("```").next().unwrap().to_string()).collect()
}

#[test]
fn book_config_example_is_valid() {
    let blocks = fenced_blocks("configuration.md", "toml");
    assert_eq!(blocks.len(), 1);
    let config = Config::parse(&blocks[0]).unwrap();
    config.validate().unwrap();
    assert_eq!(config.pipeline.corpora.len(), 2);
}

#[test]
fn book_json_examples_parse() {
    for chapter in ["corpus-and-complexity.md", "curriculum-and-export.md", "evaluation.md"] {
        for block in fenced_blocks(chapter, "json") {
            for line in block.lines() {
                serde_json::from_str::<serde_json::Value>(line).unwrap_or_else(|e| panic!("{chapter}: {e}: {line}"));
            }
        }
    }
    let export = &fenced_blocks("curriculum-and-export.md", "json")[0];
    serde_json::from_str::<ExportedExample>(export.trim()).unwrap();
    let loss = &fenced_blocks("evaluation.md", "json")[0];
    serde_json::from_str::<LossEntry>(loss.trim()).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Scores are arbitrary doubles, so this also pins exact float
    // round-tripping through the JSON split files.
    #[test]
    fn export_reloads_every_example_unchanged(seed in any::<u64>(), n in 20usize..80) {
        let mut rng = SeededRng::new(seed);
        let mut examples = random_examples(&mut rng, n, 12);
        for e in &mut examples {
            e.complexity.composite_score = rng.unit();
            e.complexity.concept_density = rng.unit() / 3.0;
        }
        let manifest = build_manifest(examples, 3).unwrap();
        let assignment = split(&manifest.examples().cloned().collect::<Vec<_>>(), SplitRatios::default(), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_manifest(&manifest, &assignment, dir.path(), &ExportOptions::default()).unwrap();
        let loaded = load_export(dir.path()).unwrap();

        let mut written: Vec<ExportedExample> =
            manifest.entries.iter().map(|e| ExportedExample::new(e.stage_index, &e.example)).collect();
        let mut read: Vec<ExportedExample> =
            loaded.train.into_iter().chain(loaded.validation).chain(loaded.test).collect();
        written.sort_by(|a, b| a.example_id.cmp(&b.example_id));
        read.sort_by(|a, b| a.example_id.cmp(&b.example_id));
        prop_assert_eq!(written, read);
    }
}

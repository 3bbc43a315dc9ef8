#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use lexforge::complexity::{ComplexityProfile, LengthBand};
use lexforge::config::{Config, CorpusSpec};
use lexforge::corpus::{write_corpus, LegalDocument, Source};
use lexforge::curriculum::{Origin, Task, TrainingExample};
use lexforge::qagen::Difficulty;
use lexforge::seed::SeededRng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const SENTENCES: [&str; 12] = [
    "Having regard to the Treaty establishing the European Community,",
    "Having regard to the proposal from the Commission,",
    "Whereas the Member States should ensure the proper functioning of the internal market;",
    "The customs duties shall be suspended for the period referred to in Article 2.",
    "This Regulation shall be binding in its entirety and directly applicable in all Member States.",
    "The Commission shall adopt implementing acts in accordance with the examination procedure.",
    "Financial assistance shall be granted to the third country for the development of its fisheries sector.",
    "Member States shall notify the Commission of the measures taken to comply with this Directive.",
    "The import licence shall be valid for three months from the date of issue.",
    "State aid granted in breach of these rules shall be recovered from the beneficiary.",
    "The Court of Justice shall have jurisdiction in any dispute relating to the application of this Decision.",
    "Personal data shall be processed lawfully, fairly and in a transparent manner.",
];

/// `n` documents of one source whose lengths spread over roughly an order
/// of magnitude, so all three length bands are populated.
pub fn synthetic_corpus(source: Source, n: usize, seed: u64) -> Vec<LegalDocument> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let sentences = 2 + (i % 10) * 2 + rng.below(3) as usize;
            let mut lines = vec![format!("Council Decision {}/{} on document {i}", 100 + i, 1990 + (i % 30))];
            for _ in 0..sentences {
                lines.push(SENTENCES[rng.below(SENTENCES.len() as u64) as usize].to_string());
            }
            let text = lines.join("\n");
            match source {
                Source::Eurlex => {
                    let k = 1 + rng.below(5) as usize;
                    let labels = (0..k).map(|_| rng.below(120) as i64 + 1).collect();
                    LegalDocument::eurlex(format!("eurlex_{i:04}"), text, labels)
                }
                Source::EurlexSum => LegalDocument::eurlex_sum(
                    format!("eurlex_sum_{i:04}"),
                    text,
                    format!("Summary of document {i}."),
                    format!("3{}R{:04}", 1990 + (i % 30), i),
                ),
            }
        })
        .collect()
}

/// Writes one synthetic corpus per source into `dir`.
pub fn write_corpora(dir: &Path, per_source: usize, seed: u64) -> Vec<CorpusSpec> {
    Source::ALL
        .iter()
        .map(|&source| {
            let path = dir.join(format!("{}.jsonl", source.as_str()));
            let docs = synthetic_corpus(source, per_source, seed ^ source as u64);
            write_corpus(File::create(&path).unwrap(), &docs).unwrap();
            CorpusSpec { path, source }
        })
        .collect()
}

/// Mock-backend config over freshly written corpora in `dir`.
pub fn pipeline_config(dir: &Path, per_source: usize, seed: u64) -> Config {
    let mut config = Config::default();
    config.pipeline.corpora = write_corpora(dir, per_source, seed);
    config.pipeline.sampling.per_dataset = per_source;
    config.pipeline.output_dir = dir.join("out");
    config.pipeline.seed = seed;
    config
}

pub fn profile(tokens: usize, band: LengthBand, score: f64) -> ComplexityProfile {
    ComplexityProfile {
        token_count: tokens,
        char_count: tokens * 6,
        concept_density: 0.0,
        band,
        composite_score: score,
    }
}

/// Random mix of real and synthetic examples over `docs` documents. Scores
/// come from a small grid so ties are common.
pub fn random_examples(rng: &mut SeededRng, n: usize, docs: usize) -> Vec<TrainingExample> {
    (0..n)
        .map(|i| {
            let doc = rng.below(docs as u64);
            let synthetic = rng.below(3) > 0;
            let score = rng.below(8) as f64 / 8.0;
            let (task, origin, difficulty) = if synthetic {
                let d = if rng.below(2) == 0 { Difficulty::Easy } else { Difficulty::Hard };
                (Task::Qa, Origin::Synthetic, Some(d))
            } else {
                (Task::Labeling, Origin::Real, None)
            };
            TrainingExample {
                example_id: format!("d{doc:03}#{i:04}"),
                task,
                prompt: format!("prompt {i}"),
                target: format!("target {i}"),
                origin,
                source_doc_id: format!("d{doc:03}"),
                complexity: profile(10 + i, LengthBand::Medium, score),
                difficulty,
            }
        })
        .collect()
}

/// Every file of a directory, by relative name.
pub fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

/// Independent Hamilton apportionment used as an oracle.
pub fn hamilton(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

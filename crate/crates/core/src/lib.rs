pub mod cli;
pub mod complexity;
pub mod config;
pub mod corpus;
pub mod curriculum;
pub mod dataset;
pub mod evalkit;
pub mod pipeline;
pub mod qagen;
pub mod sampler;
pub mod seed;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/corpus-and-complexity.md")]
    mod corpus_and_complexity {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/question-generation.md")]
    mod question_generation {}
    #[doc = include_str!("../../../book/src/curriculum-and-export.md")]
    mod curriculum_and_export {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}

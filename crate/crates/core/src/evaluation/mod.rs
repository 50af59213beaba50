//! Text ingestion, STS scoring with Spearman's rho, the synthetic benchmark,
//! the dropout-sensitivity probe and the ablation grid.

mod ablation;
mod probe;
mod sts;
mod synthetic;
mod vocab;

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationReport, AblationRow};
pub use probe::{sensitivity_probe, DriftPoint};
pub use sts::{
    evaluate_sts, format_sts, parse_corpus, parse_sts, score_embeddings, tokenize_pairs,
    EvalResult, RawStsPair, SeedSummary, StsPair,
};
pub use synthetic::{generate_synthetic_corpus, SyntheticData, SyntheticSpec};
pub use vocab::{build_vocab, tokenize, IngestReport, Vocabulary, PAD_ID, UNK_ID};

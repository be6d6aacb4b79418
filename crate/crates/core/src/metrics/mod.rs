//! The four similarity metrics and the ensemble.

pub mod bleu;
pub mod embed;
pub mod sts;

pub use bleu::{bleu_from_tokens, bleu_score, bleu_tokenize, brevity_penalty, BLEU_CONFIG, MAX_ORDER, modified_precision, sentence_bleu, NgramProfile};
pub use embed::{
    bertscore, bertscore_from_embeddings, cosine, greedy_match, match_report, sbert_from_embeddings, sbert_score, token_match_score, IdfTable, MatchReport,
    TokenMatchConfig,
};
pub use sts::{ensemble_score, sts_score, sts_score_batch, StsConfig};

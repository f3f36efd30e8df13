//! Held-out validation corpus for the account matcher.
//!
//! Real original charts phrase the same account many ways. The shipped
//! validation corpus reproduces that by perturbing the reference descriptions
//! with three seeded edits: synonym substitution from a fixed wordlist,
//! reordering of description segments, and token dropout. Every query keeps
//! the target code of the description it was derived from.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ReferenceIndex;

/// Fixed synonym wordlist applied token-by-token (lowercase comparison).
pub const SYNONYMS: &[(&str, &str)] = &[
    ("customers", "clients"),
    ("receivable", "collectible"),
    ("cash", "money"),
    ("banks", "bank"),
    ("stock", "inventory"),
    ("suppliers", "vendors"),
    ("loans", "borrowings"),
    ("financing", "funding"),
    ("revenue", "income"),
    ("expenses", "expenditures"),
    ("costs", "charges"),
    ("fixed", "permanent"),
    ("current", "short-term"),
    ("non-current", "long-term"),
    ("liabilities", "obligations"),
    ("net", "own"),
    ("worth", "equity"),
    ("investments", "applications"),
    ("goods", "merchandise"),
    ("provision", "reserve"),
    ("payable", "due"),
    ("asset", "assets"),
    ("operational", "operating"),
    ("administrative", "administration"),
    ("financial", "finance"),
];

#[derive(Debug, Clone)]
pub struct PerturbationConfig {
    pub seed: u64,
    /// Chance that a token with a wordlist synonym is substituted.
    pub synonym_rate: f64,
    /// Chance that a token is dropped (at least two tokens always survive).
    pub dropout_rate: f64,
    /// Chance that two halves of the phrase are swapped.
    pub reorder_rate: f64,
    /// Perturbed queries generated per reference description.
    pub variants_per_description: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            seed: 0xACC0,
            synonym_rate: 0.20,
            dropout_rate: 0.10,
            reorder_rate: 0.25,
            variants_per_description: 2,
        }
    }
}

fn synonym_for(token: &str) -> Option<&'static str> {
    let lower = token.to_lowercase();
    for (a, b) in SYNONYMS {
        if lower == *a {
            return Some(b);
        }
        if lower == *b {
            return Some(a);
        }
    }
    None
}

fn perturb_one(description: &str, cfg: &PerturbationConfig, rng: &mut ChaCha8Rng) -> String {
    let mut tokens: Vec<String> = description.split_whitespace().map(String::from).collect();

    for token in &mut tokens {
        if rng.gen_bool(cfg.synonym_rate) {
            if let Some(alt) = synonym_for(token) {
                *token = alt.to_string();
            }
        }
    }

    if tokens.len() > 3 && rng.gen_bool(cfg.reorder_rate) {
        let cut = rng.gen_range(1..tokens.len());
        tokens.rotate_left(cut);
    }

    // Dropout models abbreviated ancestor paths; the trailing tokens carry
    // the account name itself and always survive.
    if tokens.len() > 2 {
        let protected = tokens.len() - 2;
        let mut kept: Vec<String> = Vec::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            if i < protected && rng.gen_bool(cfg.dropout_rate) {
                continue;
            }
            kept.push(token.clone());
        }
        tokens = kept;
    }

    if tokens.is_empty() {
        description.to_string()
    } else {
        tokens.join(" ")
    }
}

/// Build the seeded validation corpus from an index's descriptions.
pub fn validation_corpus(index: &ReferenceIndex, cfg: &PerturbationConfig) -> Vec<(String, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut corpus = Vec::with_capacity(index.entries().len() * cfg.variants_per_description);
    for entry in index.entries() {
        for _ in 0..cfg.variants_per_description {
            corpus.push((
                perturb_one(&entry.description, cfg, &mut rng),
                entry.target_code,
            ));
        }
    }
    // Shuffled so accuracy does not depend on grouped-by-target ordering
    // anywhere downstream; the shuffle itself is seed-determined.
    corpus.shuffle(&mut rng);
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::validate_matcher;

    #[test]
    fn corpus_is_deterministic() {
        let index = ReferenceIndex::builtin();
        let cfg = PerturbationConfig::default();
        let a = validation_corpus(index, &cfg);
        let b = validation_corpus(index, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), index.entries().len() * cfg.variants_per_description);
    }

    #[test]
    fn corpus_actually_perturbs() {
        let index = ReferenceIndex::builtin();
        let corpus = validation_corpus(index, &PerturbationConfig::default());
        let originals: std::collections::HashSet<&str> =
            index.entries().iter().map(|e| e.description.as_str()).collect();
        let changed = corpus
            .iter()
            .filter(|(q, _)| !originals.contains(q.as_str()))
            .count();
        assert!(
            changed * 2 > corpus.len(),
            "most queries should differ from their source ({changed}/{})",
            corpus.len()
        );
    }

    #[test]
    fn matcher_clears_accuracy_floor_on_heldout_corpus() {
        let index = ReferenceIndex::builtin();
        let corpus = validation_corpus(index, &PerturbationConfig::default());
        let accuracy = validate_matcher(&corpus, index).unwrap();
        assert!(accuracy >= 0.865, "held-out accuracy {accuracy}");
    }
}

//! Chart-of-accounts harmonization.
//!
//! Arbitrary four-level charts are mapped onto a fixed standard chart of 208
//! accounts by concatenating each account's ancestor descriptions into a
//! single phrase, embedding the phrase, and picking the nearest reference
//! description by cosine similarity. The standard chart and a reference index
//! of 349 description phrases ship with the crate as data files.

pub mod embed;
pub mod perturb;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use embed::{cosine, TrigramEmbedder};

/// Default similarity floor below which a match is flagged low-confidence.
pub const DEFAULT_SIMILARITY_FLOOR: f64 = 0.30;

/// Expected account counts per level in a standard chart.
pub const LEVEL_COUNTS: [usize; 4] = [4, 12, 42, 150];

/// The 21 standard codes tracked in monthly vectors, in fixed order.
pub const VECTOR_ACCOUNTS: [u32; 21] = [
    11100, 11200, 11300, 11500, 13200, 13300, 13400, 21100, 21200, 22000, 22300, 23000, 31100,
    32100, 32200, 32300, 32400, 32500, 32700, 32800, 32900,
];

/// One account of an original (source) chart: free-form hierarchical code,
/// level 1-4, and a level-local description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChartAccount {
    pub code: String,
    pub level: u8,
    pub description: String,
    #[serde(default)]
    pub parent: Option<String>,
}

/// One account of the standard chart, keyed by a fixed five-digit code.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StandardAccount {
    pub code: u32,
    pub level: u8,
    pub description: String,
    #[serde(default)]
    pub parent: Option<u32>,
}

/// The fixed 208-account standard chart.
#[derive(Debug, Clone)]
pub struct StandardChart {
    accounts: Vec<StandardAccount>,
    by_code: HashMap<u32, usize>,
    /// code -> all codes in its subtree (itself included)
    subtree: HashMap<u32, Vec<u32>>,
}

static BUILTIN_CHART: OnceLock<StandardChart> = OnceLock::new();
static BUILTIN_INDEX: OnceLock<ReferenceIndex> = OnceLock::new();

impl StandardChart {
    /// The chart shipped with the crate.
    pub fn builtin() -> &'static StandardChart {
        BUILTIN_CHART.get_or_init(|| {
            StandardChart::from_json(include_str!("../../data/standard_chart.json"))
                .expect("builtin standard chart is valid")
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let accounts: Vec<StandardAccount> = serde_json::from_str(json)?;
        Self::new(accounts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn new(accounts: Vec<StandardAccount>) -> Result<Self> {
        let mut by_code = HashMap::new();
        for (i, acc) in accounts.iter().enumerate() {
            if by_code.insert(acc.code, i).is_some() {
                return Err(Error::invalid(format!("duplicate code {}", acc.code)));
            }
        }
        let mut counts = [0usize; 4];
        for acc in &accounts {
            if !(1..=4).contains(&acc.level) {
                return Err(Error::invalid(format!(
                    "account {} has level {}",
                    acc.code, acc.level
                )));
            }
            counts[acc.level as usize - 1] += 1;
            match (acc.level, acc.parent) {
                (1, None) => {}
                (1, Some(p)) => {
                    return Err(Error::invalid(format!(
                        "level-1 account {} has parent {p}",
                        acc.code
                    )))
                }
                (_, None) => {
                    return Err(Error::invalid(format!("account {} lacks a parent", acc.code)))
                }
                (lvl, Some(p)) => {
                    let parent = by_code
                        .get(&p)
                        .map(|&i| &accounts[i])
                        .ok_or_else(|| Error::UnknownCode(p))?;
                    if parent.level + 1 != lvl {
                        return Err(Error::invalid(format!(
                            "account {} (level {lvl}) has parent {} at level {}",
                            acc.code, p, parent.level
                        )));
                    }
                }
            }
        }
        if counts != LEVEL_COUNTS {
            return Err(Error::invalid(format!(
                "level counts {counts:?} differ from required {LEVEL_COUNTS:?}"
            )));
        }
        for code in VECTOR_ACCOUNTS {
            if !by_code.contains_key(&code) {
                return Err(Error::UnknownCode(code));
            }
        }
        // Subtrees via parent links, computed bottom-up.
        let mut subtree: HashMap<u32, Vec<u32>> =
            accounts.iter().map(|a| (a.code, vec![a.code])).collect();
        for acc in &accounts {
            let mut p = acc.parent;
            while let Some(code) = p {
                subtree.get_mut(&code).expect("parent exists").push(acc.code);
                p = accounts[by_code[&code]].parent;
            }
        }
        for codes in subtree.values_mut() {
            codes.sort_unstable();
        }
        Ok(Self {
            accounts,
            by_code,
            subtree,
        })
    }

    pub fn accounts(&self) -> &[StandardAccount] {
        &self.accounts
    }

    pub fn get(&self, code: u32) -> Option<&StandardAccount> {
        self.by_code.get(&code).map(|&i| &self.accounts[i])
    }

    pub fn contains(&self, code: u32) -> bool {
        self.by_code.contains_key(&code)
    }

    /// All codes in the subtree rooted at `code`, the root included.
    pub fn subtree(&self, code: u32) -> Option<&[u32]> {
        self.subtree.get(&code).map(Vec::as_slice)
    }

    /// Leading digit of the code: 1 assets, 2 liabilities and net worth,
    /// 3 result accounts, 4 contra accounts.
    pub fn class_of(code: u32) -> u32 {
        code / 10_000
    }
}

/// Concatenate an account's ancestor descriptions from level 1 down to the
/// account itself, joined by single spaces. Leading all-digit tokens of each
/// description (ordering prefixes such as "001") are stripped.
pub fn concat_full_description(account: &ChartAccount, chart: &[ChartAccount]) -> Result<String> {
    let by_code: HashMap<&str, &ChartAccount> =
        chart.iter().map(|a| (a.code.as_str(), a)).collect();
    let mut lineage = vec![account];
    let mut current = account;
    while let Some(parent_code) = current.parent.as_deref() {
        let parent = by_code
            .get(parent_code)
            .copied()
            .ok_or_else(|| Error::MissingAncestor {
                code: account.code.clone(),
                missing: parent_code.to_string(),
            })?;
        lineage.push(parent);
        current = parent;
    }
    lineage.reverse();
    let mut words = Vec::new();
    for acc in lineage {
        let mut tokens = acc.description.split_whitespace().peekable();
        while matches!(tokens.peek(), Some(t) if t.chars().all(|c| c.is_ascii_digit())) {
            tokens.next();
        }
        words.extend(tokens.map(str::to_owned));
    }
    Ok(words.join(" "))
}

/// One reference description with its precomputed embedding.
#[derive(Debug, Clone)]
pub struct ReferenceEntry {
    pub description: String,
    pub target_code: u32,
    pub vector: Vec<f64>,
}

#[derive(Deserialize)]
struct ReferenceLine {
    description: String,
    target_code: u32,
    #[serde(default)]
    vector: Option<Vec<f64>>,
}

/// Read-only nearest-neighbor index over reference descriptions.
///
/// Built either from bare `(description, target_code)` pairs (vectors are
/// computed with the built-in trigram embedder) or from precomputed vectors
/// produced by an external encoder.
#[derive(Debug, Clone)]
pub struct ReferenceIndex {
    entries: Vec<ReferenceEntry>,
    dimension: usize,
    embedder: Option<TrigramEmbedder>,
}

impl ReferenceIndex {
    /// The 349-description index shipped with the crate.
    pub fn builtin() -> &'static ReferenceIndex {
        BUILTIN_INDEX.get_or_init(|| {
            ReferenceIndex::from_jsonl(
                include_str!("../../data/reference_index.jsonl"),
                StandardChart::builtin(),
            )
            .expect("builtin reference index is valid")
        })
    }

    /// Build from `(description, target_code)` pairs with the default embedder.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, u32)], chart: &StandardChart) -> Result<Self> {
        let embedder = TrigramEmbedder::default();
        let mut entries = Vec::with_capacity(pairs.len());
        for (desc, target) in pairs {
            if !chart.contains(*target) {
                return Err(Error::UnknownCode(*target));
            }
            entries.push(ReferenceEntry {
                description: desc.as_ref().to_string(),
                target_code: *target,
                vector: embedder.embed(desc.as_ref())?,
            });
        }
        Self::validate(&entries, embedder.dimension())?;
        Ok(Self {
            dimension: embedder.dimension(),
            entries,
            embedder: Some(embedder),
        })
    }

    /// Parse JSON Lines of `{description, target_code}` (vectors computed at
    /// load) or `{description, target_code, vector}` (external embeddings;
    /// every line must then carry a vector).
    pub fn from_jsonl(text: &str, chart: &StandardChart) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut external = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: ReferenceLine = serde_json::from_str(line).map_err(|e| {
                Error::data("reference index", format!("line {}: {e}", lineno + 1))
            })?;
            if !chart.contains(parsed.target_code) {
                return Err(Error::UnknownCode(parsed.target_code));
            }
            match parsed.vector {
                Some(v) => external.push(ReferenceEntry {
                    description: parsed.description,
                    target_code: parsed.target_code,
                    vector: v,
                }),
                None => pairs.push((parsed.description, parsed.target_code)),
            }
        }
        match (pairs.is_empty(), external.is_empty()) {
            (false, true) => Self::from_pairs(&pairs, chart),
            (true, false) => Self::from_vectors(external),
            (true, true) => Err(Error::invalid("reference index is empty")),
            (false, false) => Err(Error::invalid(
                "reference index mixes plain and precomputed-vector lines",
            )),
        }
    }

    pub fn load(path: &Path, chart: &StandardChart) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
        Self::from_jsonl(&text, chart)
    }

    /// Build from externally embedded entries. Queries must then be matched
    /// through [`ReferenceIndex::match_vector`] with vectors from the same
    /// encoder.
    pub fn from_vectors(entries: Vec<ReferenceEntry>) -> Result<Self> {
        let dimension = entries
            .first()
            .map(|e| e.vector.len())
            .ok_or_else(|| Error::invalid("reference index is empty"))?;
        Self::validate(&entries, dimension)?;
        Ok(Self {
            entries,
            dimension,
            embedder: None,
        })
    }

    fn validate(entries: &[ReferenceEntry], dimension: usize) -> Result<()> {
        for e in entries {
            if e.vector.len() != dimension {
                return Err(Error::invalid(format!(
                    "vector for {:?} has dimension {}, index uses {}",
                    e.description,
                    e.vector.len(),
                    dimension
                )));
            }
            let norm: f64 = e.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "vector for {:?} has norm {norm}, expected 1",
                    e.description
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nearest reference to a query vector. Ties break to the lowest target
    /// code, then the lexicographically smallest description, so the result
    /// does not depend on entry order.
    pub fn match_vector(&self, query: &[f64]) -> Result<(f64, &ReferenceEntry)> {
        if self.entries.is_empty() {
            return Err(Error::invalid("reference index is empty"));
        }
        if query.len() != self.dimension {
            return Err(Error::contract(format!(
                "query dimension {} differs from index dimension {}",
                query.len(),
                self.dimension
            )));
        }
        let mut best: Option<(f64, &ReferenceEntry)> = None;
        for entry in &self.entries {
            let sim = cosine(query, &entry.vector);
            let better = match &best {
                None => true,
                Some((best_sim, best_entry)) => {
                    sim > *best_sim
                        || (sim == *best_sim
                            && (entry.target_code, entry.description.as_str())
                                < (best_entry.target_code, best_entry.description.as_str()))
                }
            };
            if better {
                best = Some((sim, entry));
            }
        }
        Ok(best.expect("index non-empty"))
    }

    /// Embed a description with the index's built-in embedder and match it.
    /// Errors for externally embedded indexes, which carry no embedder.
    pub fn match_description(&self, description: &str) -> Result<(f64, &ReferenceEntry)> {
        let embedder = self.embedder.as_ref().ok_or_else(|| {
            Error::invalid("index holds external vectors; embed the query externally and use match_vector")
        })?;
        self.match_vector(&embedder.embed(description)?)
    }
}

/// The outcome of matching one original account onto the standard chart.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AccountMatch {
    pub original_code: String,
    pub target_code: u32,
    pub similarity: f64,
    pub matched_description: String,
}

impl AccountMatch {
    pub fn is_low_confidence(&self, floor: f64) -> bool {
        self.similarity < floor
    }
}

/// Map one original account onto the standard chart via its concatenated
/// full description. Matches below the similarity floor are still returned;
/// callers flag them with [`AccountMatch::is_low_confidence`].
pub fn match_account(
    original: &ChartAccount,
    chart: &[ChartAccount],
    index: &ReferenceIndex,
) -> Result<AccountMatch> {
    let full = concat_full_description(original, chart)?;
    let (similarity, entry) = index.match_description(&full)?;
    Ok(AccountMatch {
        original_code: original.code.clone(),
        target_code: entry.target_code,
        similarity,
        matched_description: entry.description.clone(),
    })
}

/// Fraction of labeled descriptions whose nearest reference carries the
/// expected target code.
pub fn validate_matcher(labeled: &[(String, u32)], index: &ReferenceIndex) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::invalid("labeled set is empty"));
    }
    let mut correct = 0usize;
    for (description, expected) in labeled {
        let (_, entry) = index.match_description(description)?;
        if entry.target_code == *expected {
            correct += 1;
        }
    }
    Ok(correct as f64 / labeled.len() as f64)
}

/// Parse an original chart from CSV with header `code,level,description,parent`.
pub fn read_original_chart_csv<R: std::io::Read>(reader: R) -> Result<Vec<ChartAccount>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut accounts = Vec::new();
    for record in rdr.deserialize() {
        let mut account: ChartAccount = record?;
        if account.parent.as_deref() == Some("") {
            account.parent = None;
        }
        accounts.push(account);
    }
    Ok(accounts)
}

/// Group match counts by target for quick reporting.
pub fn match_histogram(matches: &[AccountMatch]) -> BTreeMap<u32, usize> {
    let mut hist = BTreeMap::new();
    for m in matches {
        *hist.entry(m.target_code).or_insert(0) += 1;
    }
    hist
}

//! Corpus model: entity-pair bags of sentences, vocabulary and relation
//! schema, and the encoding that turns raw tokens into id/position sequences
//! the encoders consume.
//!
//! On disk a corpus is JSONL, one bag per line:
//!
//! ```text
//! {"bag_id": "...", "e1": {"id": "...", "surface": "..."},
//!  "e2": {...}, "relations": ["..."],
//!  "sentences": [{"tokens": [...], "e1_span": [s, e), "e2_span": [s, e)}]}
//! ```
//!
//! A TSV converter (`e1_id e2_id e1_surface e2_surface relation sentence`)
//! groups flat exports into the same shape.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Relation index reserved for "no relation".
pub const NA: usize = 0;
pub const NA_LABEL: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstance {
    pub tokens: Vec<String>,
    pub e1_span: (usize, usize),
    pub e2_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBag {
    pub bag_id: String,
    pub e1: Entity,
    pub e2: Entity,
    pub relations: Vec<String>,
    pub sentences: Vec<RawInstance>,
}

/// Sentence and encoding limits shared across subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Relative positions are clamped to +/- this.
    pub max_position: usize,
    /// Sentences longer than this are truncated on the right, but never so
    /// far that an entity span would be cut off.
    pub max_len: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_position: 30,
            max_len: 120,
        }
    }
}

/// Word-to-id table with two reserved rows: 0 is padding (its embedding is
/// pinned to zero and never trained), 1 is the unknown-word bucket.
/// Ids follow first appearance in the corpus, so identical input order gives
/// identical ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabularyDto", into = "VocabularyDto")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub embedding_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyDto {
    words: Vec<String>,
    embedding_dim: usize,
}

impl From<Vocabulary> for VocabularyDto {
    fn from(v: Vocabulary) -> Self {
        VocabularyDto {
            words: v.words,
            embedding_dim: v.embedding_dim,
        }
    }
}

impl TryFrom<VocabularyDto> for Vocabulary {
    type Error = Error;
    fn try_from(dto: VocabularyDto) -> Result<Self> {
        Vocabulary::from_words(dto.words, dto.embedding_dim)
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words && self.embedding_dim == other.embedding_dim
    }
}

impl Vocabulary {
    pub fn build<'a>(tokens: impl Iterator<Item = &'a str>, embedding_dim: usize) -> Vocabulary {
        let mut v = Vocabulary {
            words: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
            embedding_dim,
        };
        v.index.insert(PAD_TOKEN.to_string(), PAD);
        v.index.insert(UNK_TOKEN.to_string(), UNK);
        for tok in tokens {
            let lower = tok.to_lowercase();
            if !v.index.contains_key(&lower) {
                v.index.insert(lower.clone(), v.words.len());
                v.words.push(lower);
            }
        }
        v
    }

    pub fn from_corpus(bags: &[RawBag], embedding_dim: usize) -> Vocabulary {
        Vocabulary::build(
            bags.iter()
                .flat_map(|b| b.sentences.iter())
                .flat_map(|s| s.tokens.iter())
                .map(|t| t.as_str()),
            embedding_dim,
        )
    }

    pub fn from_words(words: Vec<String>, embedding_dim: usize) -> Result<Vocabulary> {
        if words.len() < 2 || words[PAD] != PAD_TOKEN || words[UNK] != UNK_TOKEN {
            return Err(Error::Format(
                "vocabulary must start with the reserved pad/unk tokens".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary {
            words,
            index,
            embedding_dim,
        })
    }

    /// Id for an already-lowercased token; unknown words map to [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.embedding_dim.to_le_bytes());
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ordered relation names with "NA" pinned at index 0; remaining relations
/// keep their first-appearance order from the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    names: Vec<String>,
}

impl RelationSchema {
    pub fn from_corpus(bags: &[RawBag]) -> RelationSchema {
        let mut names = vec![NA_LABEL.to_string()];
        for bag in bags {
            for r in &bag.relations {
                if r != NA_LABEL && !names.iter().any(|n| n == r) {
                    names.push(r.clone());
                }
            }
        }
        RelationSchema { names }
    }

    pub fn from_names(names: Vec<String>) -> Result<RelationSchema> {
        if names.first().map(String::as_str) != Some(NA_LABEL) {
            return Err(Error::Format("relation schema must start with NA".into()));
        }
        Ok(RelationSchema { names })
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of relations including NA.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false // NA is always present
    }
}

/// One sentence ready for the encoders: word ids plus, per token, its
/// relative position to each entity head (shifted to be non-negative so it
/// can index an embedding table).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub word_ids: Vec<usize>,
    pub pos1: Vec<usize>,
    pub pos2: Vec<usize>,
    /// Head token index of each entity (last token of the span).
    pub e1_idx: usize,
    pub e2_idx: usize,
    pub e1_span: (usize, usize),
    pub e2_span: (usize, usize),
    /// Original token strings, kept for attention export.
    pub raw_tokens: Vec<String>,
}

impl EncodedInstance {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    /// Piecewise pooling boundaries: the two entity heads in order.
    pub fn pool_bounds(&self) -> (usize, usize) {
        (
            self.e1_idx.min(self.e2_idx),
            self.e1_idx.max(self.e2_idx),
        )
    }

    /// Word ids under an entity span, for entity embeddings.
    pub fn span_ids(&self, span: (usize, usize)) -> &[usize] {
        &self.word_ids[span.0..span.1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceBag {
    pub bag_id: String,
    pub e1: Entity,
    pub e2: Entity,
    /// Sorted, deduplicated relation ids; NA-only bags carry `[0]`.
    pub labels: Vec<usize>,
    pub instances: Vec<EncodedInstance>,
}

/// Lowercase whitespace tokenization.
pub fn tokenize(sentence: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = sentence
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    if tokens.is_empty() {
        return Err(Error::domain("tokenize", "empty sentence"));
    }
    Ok(tokens)
}

/// Relative offsets of every token to the two entity heads, clamped to
/// +/- max_position.
pub fn position_features(
    len: usize,
    e1_idx: usize,
    e2_idx: usize,
    max_position: usize,
) -> Result<(Vec<i64>, Vec<i64>)> {
    if e1_idx >= len || e2_idx >= len {
        return Err(Error::Index {
            op: "position_features",
            index: e1_idx.max(e2_idx),
            len,
        });
    }
    let clamp = |j: usize, e: usize| -> i64 {
        let off = j as i64 - e as i64;
        off.clamp(-(max_position as i64), max_position as i64)
    };
    let pos1 = (0..len).map(|j| clamp(j, e1_idx)).collect();
    let pos2 = (0..len).map(|j| clamp(j, e2_idx)).collect();
    Ok((pos1, pos2))
}

/// Shift a clamped offset into table-index space `[0, 2*max_position]`.
pub fn shift_position(offset: i64, max_position: usize) -> usize {
    (offset + max_position as i64) as usize
}

/// Rows in a position embedding table for a given clamp radius.
pub fn position_rows(max_position: usize) -> usize {
    2 * max_position + 1
}

pub fn encode_instance(
    raw: &RawInstance,
    vocab: &Vocabulary,
    cfg: &CorpusConfig,
) -> Result<EncodedInstance> {
    let len = raw.tokens.len();
    for (name, span) in [("e1", raw.e1_span), ("e2", raw.e2_span)] {
        if span.0 >= span.1 || span.1 > len {
            return Err(Error::domain(
                "encode_instance",
                format!("{name} span {span:?} invalid for {len} tokens"),
            ));
        }
    }
    // Truncate from the right only, but never cut an entity off.
    let keep = if len > cfg.max_len {
        cfg.max_len.max(raw.e1_span.1).max(raw.e2_span.1)
    } else {
        len
    };
    let tokens = &raw.tokens[..keep];
    let word_ids: Vec<usize> = tokens.iter().map(|t| vocab.id(&t.to_lowercase())).collect();
    let e1_idx = raw.e1_span.1 - 1;
    let e2_idx = raw.e2_span.1 - 1;
    let (pos1, pos2) = position_features(keep, e1_idx, e2_idx, cfg.max_position)?;
    Ok(EncodedInstance {
        word_ids,
        pos1: pos1
            .into_iter()
            .map(|p| shift_position(p, cfg.max_position))
            .collect(),
        pos2: pos2
            .into_iter()
            .map(|p| shift_position(p, cfg.max_position))
            .collect(),
        e1_idx,
        e2_idx,
        e1_span: raw.e1_span,
        e2_span: raw.e2_span,
        raw_tokens: tokens.to_vec(),
    })
}

/// Encode a bag against a fixed vocabulary and schema. Relation names the
/// schema does not know are dropped (they can never be predicted); callers
/// that care count them via [`encode_bags`].
pub fn encode_bag(
    raw: &RawBag,
    vocab: &Vocabulary,
    schema: &RelationSchema,
    cfg: &CorpusConfig,
) -> Result<InstanceBag> {
    let mut labels: Vec<usize> = raw
        .relations
        .iter()
        .filter_map(|r| schema.id(r))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        labels.push(NA);
    }
    let instances = raw
        .sentences
        .iter()
        .map(|s| encode_instance(s, vocab, cfg))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Validation {
            bag_id: raw.bag_id.clone(),
            msg: e.to_string(),
        })?;
    if instances.is_empty() {
        return Err(Error::Validation {
            bag_id: raw.bag_id.clone(),
            msg: "bag has no sentences".into(),
        });
    }
    Ok(InstanceBag {
        bag_id: raw.bag_id.clone(),
        e1: raw.e1.clone(),
        e2: raw.e2.clone(),
        labels,
        instances,
    })
}

pub struct EncodeReport {
    pub bags: Vec<InstanceBag>,
    /// Relation labels dropped because the schema does not contain them.
    pub dropped_labels: usize,
}

pub fn encode_bags(
    raw: &[RawBag],
    vocab: &Vocabulary,
    schema: &RelationSchema,
    cfg: &CorpusConfig,
) -> Result<EncodeReport> {
    let mut dropped = 0;
    let mut bags = Vec::with_capacity(raw.len());
    for b in raw {
        dropped += b
            .relations
            .iter()
            .filter(|r| schema.id(r).is_none())
            .count();
        bags.push(encode_bag(b, vocab, schema, cfg)?);
    }
    Ok(EncodeReport {
        bags,
        dropped_labels: dropped,
    })
}

/// A bag corpus loaded from disk together with the vocabulary and schema
/// derived from it (training-side entry point).
pub struct LoadedCorpus {
    pub raw: Vec<RawBag>,
    pub bags: Vec<InstanceBag>,
    pub vocab: Vocabulary,
    pub schema: RelationSchema,
}

pub fn load_bags(path: &Path, embedding_dim: usize, cfg: &CorpusConfig) -> Result<LoadedCorpus> {
    let raw = load_raw_bags(path)?;
    let vocab = Vocabulary::from_corpus(&raw, embedding_dim);
    let schema = RelationSchema::from_corpus(&raw);
    let report = encode_bags(&raw, &vocab, &schema, cfg)?;
    Ok(LoadedCorpus {
        raw,
        bags: report.bags,
        vocab,
        schema,
    })
}

pub fn validate_raw_bag(bag: &RawBag) -> Result<()> {
    let fail = |msg: String| Error::Validation {
        bag_id: bag.bag_id.clone(),
        msg,
    };
    if bag.sentences.is_empty() {
        return Err(fail("no sentences".into()));
    }
    for (i, s) in bag.sentences.iter().enumerate() {
        if s.tokens.is_empty() {
            return Err(fail(format!("sentence {i} is empty")));
        }
        for (name, span) in [("e1_span", s.e1_span), ("e2_span", s.e2_span)] {
            if span.0 >= span.1 || span.1 > s.tokens.len() {
                return Err(fail(format!(
                    "sentence {i}: {name} {span:?} out of bounds for {} tokens",
                    s.tokens.len()
                )));
            }
        }
    }
    Ok(())
}

pub fn load_raw_bags(path: &Path) -> Result<Vec<RawBag>> {
    let file = crate::error::open_file(path)?;
    let reader = BufReader::new(file);
    let mut bags = Vec::new();
    let mut seen = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bag: RawBag = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        validate_raw_bag(&bag)?;
        if let Some(prev) = seen.insert(bag.bag_id.clone(), n + 1) {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("duplicate bag_id {:?} (first at line {prev})", bag.bag_id),
            });
        }
        bags.push(bag);
    }
    Ok(bags)
}

pub fn save_raw_bags(path: &Path, bags: &[RawBag]) -> Result<()> {
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    for bag in bags {
        serde_json::to_writer(&mut out, bag)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Convert a flat sentence-per-line TSV export into bags, grouping rows by
/// entity-pair ids in first-appearance order. Columns:
/// `e1_id  e2_id  e1_surface  e2_surface  relation  sentence`.
pub fn tsv_to_raw_bags(reader: impl BufRead) -> Result<Vec<RawBag>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_key: HashMap<String, RawBag> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: n + 1, msg };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(parse_err(format!("expected 6 columns, got {}", cols.len())));
        }
        let (e1_id, e2_id, e1_surface, e2_surface, relation, sentence) =
            (cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]);
        let tokens = tokenize(sentence).map_err(|e| parse_err(e.to_string()))?;
        let e1_span = find_span(&tokens, e1_surface)
            .ok_or_else(|| parse_err(format!("entity {e1_surface:?} not found in sentence")))?;
        let e2_span = find_span(&tokens, e2_surface)
            .ok_or_else(|| parse_err(format!("entity {e2_surface:?} not found in sentence")))?;
        let key = format!("{e1_id}|{e2_id}");
        let bag = by_key.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            RawBag {
                bag_id: key.clone(),
                e1: Entity {
                    id: e1_id.to_string(),
                    surface: e1_surface.to_string(),
                },
                e2: Entity {
                    id: e2_id.to_string(),
                    surface: e2_surface.to_string(),
                },
                relations: Vec::new(),
                sentences: Vec::new(),
            }
        });
        if relation != NA_LABEL && !bag.relations.iter().any(|r| r == relation) {
            bag.relations.push(relation.to_string());
        }
        bag.sentences.push(RawInstance {
            tokens,
            e1_span,
            e2_span,
        });
    }
    Ok(order.into_iter().map(|k| by_key.remove(&k).unwrap()).collect())
}

/// First occurrence of a (possibly multi-token) surface in a token sequence,
/// compared lowercased.
pub fn find_span(tokens: &[String], surface: &str) -> Option<(usize, usize)> {
    let needle: Vec<String> = surface
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - needle.len())
        .find(|&i| {
            needle
                .iter()
                .zip(&tokens[i..i + needle.len()])
                .all(|(n, t)| *n == t.to_lowercase())
        })
        .map(|i| (i, i + needle.len()))
}

/// Overwrite word-embedding rows from a text file of `word v1 .. v{dim}`
/// lines. Unknown words are ignored; the pad row is never touched. Returns
/// the fraction of non-reserved vocabulary words that were covered.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    table: &mut Tensor,
) -> Result<f64> {
    if table.shape() != [vocab.len(), vocab.embedding_dim] {
        return Err(Error::ShapeMismatch {
            op: "load_pretrained_embeddings",
            left: table.shape().to_vec(),
            right: vec![vocab.len(), vocab.embedding_dim],
        });
    }
    let dim = vocab.embedding_dim;
    let file = crate::error::open_file(path)?;
    let mut covered = vec![false; vocab.len()];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::Format(format!("line {}: missing word", n + 1)))?
            .to_lowercase();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "line {}: expected {dim} values, got {}",
                n + 1,
                values.len()
            )));
        }
        if !vocab.contains(&word) {
            continue;
        }
        let id = vocab.id(&word);
        if id == PAD {
            continue;
        }
        covered[id] = true;
        let row = &mut table.data_mut()[id * dim..(id + 1) * dim];
        row.copy_from_slice(&values);
    }
    let real_words = vocab.len().saturating_sub(2);
    if real_words == 0 {
        return Ok(0.0);
    }
    let hits = covered.iter().skip(2).filter(|&&c| c).count();
    Ok(hits as f64 / real_words as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_bag() -> RawBag {
        RawBag {
            bag_id: "b1".into(),
            e1: Entity {
                id: "m.01".into(),
                surface: "Barack Obama".into(),
            },
            e2: Entity {
                id: "m.02".into(),
                surface: "Honolulu".into(),
            },
            relations: vec!["born_in".into()],
            sentences: vec![
                RawInstance {
                    tokens: tokenize("Barack Obama was born in Honolulu").unwrap(),
                    e1_span: (0, 2),
                    e2_span: (5, 6),
                },
                RawInstance {
                    tokens: tokenize("Obama visited Honolulu yesterday").unwrap(),
                    e1_span: (0, 1),
                    e2_span: (2, 3),
                },
            ],
        }
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("Barack  Obama\twas Born").unwrap(),
            vec!["barack", "obama", "was", "born"]
        );
        assert!(tokenize("   ").is_err());
    }

    #[test]
    fn position_features_basic() {
        let (p1, p2) = position_features(5, 0, 4, 30).unwrap();
        assert_eq!(p1, vec![0, 1, 2, 3, 4]);
        assert_eq!(p2, vec![-4, -3, -2, -1, 0]);
    }

    #[test]
    fn position_features_clamp() {
        let (p1, _) = position_features(10, 0, 0, 3).unwrap();
        assert_eq!(p1, vec![0, 1, 2, 3, 3, 3, 3, 3, 3, 3]);
    }

    #[test]
    fn position_features_rejects_out_of_range_head() {
        assert!(position_features(4, 4, 0, 30).is_err());
    }

    #[test]
    fn shifted_positions_are_table_indices() {
        assert_eq!(shift_position(-30, 30), 0);
        assert_eq!(shift_position(0, 30), 30);
        assert_eq!(shift_position(30, 30), 60);
        assert_eq!(position_rows(30), 61);
    }

    #[test]
    fn vocabulary_ids_follow_first_appearance() {
        let v = Vocabulary::build(["b", "a", "b", "c"].into_iter(), 50);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("c"), 4);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.word(PAD), PAD_TOKEN);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn vocabulary_round_trips_through_serde() {
        let v = Vocabulary::build(["x", "y"].into_iter(), 10);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("y"), 3);
    }

    #[test]
    fn schema_pins_na_at_zero() {
        let bags = vec![sample_bag()];
        let s = RelationSchema::from_corpus(&bags);
        assert_eq!(s.id(NA_LABEL), Some(0));
        assert_eq!(s.id("born_in"), Some(1));
        assert_eq!(s.len(), 2);
        assert!(RelationSchema::from_names(vec!["born_in".into()]).is_err());
    }

    #[test]
    fn encode_produces_ids_heads_and_positions() {
        let bag = sample_bag();
        let vocab = Vocabulary::from_corpus(&[bag.clone()], 50);
        let schema = RelationSchema::from_corpus(&[bag.clone()]);
        let cfg = CorpusConfig::default();
        let enc = encode_bag(&bag, &vocab, &schema, &cfg).unwrap();
        assert_eq!(enc.labels, vec![1]);
        let inst = &enc.instances[0];
        // head = last token of each span
        assert_eq!(inst.e1_idx, 1);
        assert_eq!(inst.e2_idx, 5);
        assert_eq!(inst.pool_bounds(), (1, 5));
        assert_eq!(inst.pos1[inst.e1_idx], 30);
        assert_eq!(inst.pos2[inst.e2_idx], 30);
        assert!(inst.word_ids.iter().all(|&id| id != PAD));
        assert_eq!(inst.span_ids(inst.e1_span).len(), 2);
    }

    #[test]
    fn encode_maps_unknown_words_to_unk() {
        let bag = sample_bag();
        let vocab = Vocabulary::build(["obama"].into_iter(), 50);
        let schema = RelationSchema::from_corpus(&[bag.clone()]);
        let enc = encode_bag(&bag, &vocab, &schema, &CorpusConfig::default()).unwrap();
        let inst = &enc.instances[0];
        assert_eq!(inst.word_ids[0], UNK); // "barack" unseen
        assert_eq!(inst.word_ids[1], 2); // "obama"
    }

    #[test]
    fn encode_truncates_right_but_keeps_entities() {
        let mut tokens: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        tokens.push("target".into());
        let raw = RawInstance {
            tokens: tokens.clone(),
            e1_span: (0, 1),
            e2_span: (20, 21),
        };
        let vocab = Vocabulary::build(tokens.iter().map(|s| s.as_str()), 50);
        let cfg = CorpusConfig {
            max_position: 30,
            max_len: 10,
        };
        let enc = encode_instance(&raw, &vocab, &cfg).unwrap();
        // entity at index 20 forces the cut to include it
        assert_eq!(enc.len(), 21);

        let raw2 = RawInstance {
            tokens,
            e1_span: (0, 1),
            e2_span: (4, 5),
        };
        let enc2 = encode_instance(&raw2, &vocab, &cfg).unwrap();
        assert_eq!(enc2.len(), 10);
    }

    #[test]
    fn encode_rejects_bad_spans() {
        let raw = RawInstance {
            tokens: tokenize("a b c").unwrap(),
            e1_span: (0, 0),
            e2_span: (1, 2),
        };
        let vocab = Vocabulary::build(["a"].into_iter(), 50);
        assert!(encode_instance(&raw, &vocab, &CorpusConfig::default()).is_err());
    }

    #[test]
    fn na_only_bags_get_label_zero() {
        let mut bag = sample_bag();
        bag.relations.clear();
        let vocab = Vocabulary::from_corpus(&[bag.clone()], 50);
        let schema = RelationSchema::from_corpus(&[bag.clone()]);
        let enc = encode_bag(&bag, &vocab, &schema, &CorpusConfig::default()).unwrap();
        assert_eq!(enc.labels, vec![NA]);
    }

    #[test]
    fn encode_bags_counts_unknown_relations() {
        let bag = sample_bag();
        let vocab = Vocabulary::from_corpus(&[bag.clone()], 50);
        let schema = RelationSchema::from_names(vec![NA_LABEL.into()]).unwrap();
        let report = encode_bags(&[bag], &vocab, &schema, &CorpusConfig::default()).unwrap();
        assert_eq!(report.dropped_labels, 1);
        assert_eq!(report.bags[0].labels, vec![NA]);
    }

    #[test]
    fn bag_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.jsonl");
        let bags = vec![sample_bag(), {
            let mut b = sample_bag();
            b.bag_id = "b2".into();
            b.relations = vec![];
            b
        }];
        save_raw_bags(&path, &bags).unwrap();
        let back = load_raw_bags(&path).unwrap();
        assert_eq!(bags, back);
    }

    #[test]
    fn load_rejects_bad_span_with_bag_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.jsonl");
        let mut bag = sample_bag();
        bag.sentences[0].e2_span = (5, 9);
        save_raw_bags(&path, &[bag]).unwrap();
        match load_raw_bags(&path) {
            Err(Error::Validation { bag_id, .. }) => assert_eq!(bag_id, "b1"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_bag_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.jsonl");
        save_raw_bags(&path, &[sample_bag(), sample_bag()]).unwrap();
        assert!(matches!(load_raw_bags(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn tsv_groups_rows_into_bags() {
        let tsv = "\
m.01\tm.02\tBarack Obama\tHonolulu\tborn_in\tBarack Obama was born in Honolulu\n\
m.01\tm.02\tBarack Obama\tHonolulu\tlived_in\tBarack Obama lived in Honolulu\n\
m.03\tm.02\tAnn\tHonolulu\tNA\tAnn visited Honolulu\n";
        let bags = tsv_to_raw_bags(tsv.as_bytes()).unwrap();
        assert_eq!(bags.len(), 2);
        assert_eq!(bags[0].sentences.len(), 2);
        assert_eq!(bags[0].relations, vec!["born_in", "lived_in"]);
        assert_eq!(bags[0].sentences[0].e1_span, (0, 2));
        assert_eq!(bags[0].sentences[0].e2_span, (5, 6));
        assert!(bags[1].relations.is_empty());
    }

    #[test]
    fn tsv_rejects_missing_entity() {
        let tsv = "m.01\tm.02\tObama\tParis\tborn_in\tObama was born in Honolulu\n";
        assert!(matches!(
            tsv_to_raw_bags(tsv.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn pretrained_embeddings_cover_and_copy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "alpha 1 2\nbeta 3 4\ngamma 5 6\nnope 7 8\n").unwrap();
        let vocab =
            Vocabulary::build(["alpha", "beta", "gamma", "delta", "eps"].into_iter(), 2);
        let mut table = Tensor::zeros(vec![vocab.len(), 2]);
        let coverage = load_pretrained_embeddings(&path, &vocab, &mut table).unwrap();
        assert!((coverage - 0.6).abs() < 1e-12);
        let alpha = vocab.id("alpha");
        assert_eq!(table.row(alpha), &[1.0, 2.0]);
        // pad row untouched
        assert_eq!(table.row(PAD), &[0.0, 0.0]);
    }

    #[test]
    fn pretrained_embeddings_reject_dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "alpha 1 2 3\n").unwrap();
        let vocab = Vocabulary::build(["alpha"].into_iter(), 2);
        let mut table = Tensor::zeros(vec![vocab.len(), 2]);
        assert!(matches!(
            load_pretrained_embeddings(&path, &vocab, &mut table),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn empty_embedding_file_covers_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "").unwrap();
        let vocab = Vocabulary::build(["a"].into_iter(), 2);
        let mut table = Tensor::zeros(vec![vocab.len(), 2]);
        assert_eq!(
            load_pretrained_embeddings(&path, &vocab, &mut table).unwrap(),
            0.0
        );
    }
}

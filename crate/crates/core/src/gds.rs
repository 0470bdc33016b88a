//! Dataset construction from seed facts and a document corpus.
//!
//! A seed fact pairs two entities with a relation and carries one evidence
//! sentence. The builder finds every further co-occurrence of the pair in
//! the documents (both surfaces within a token window), cuts a snippet
//! around each, and assembles one bag per ordered entity pair: the seed
//! evidence first, then the snippets in (document, offset) order, with
//! exact duplicates dropped. Bags sharing an unordered pair are kept in the
//! same split so entity pairs never leak between train, dev and test.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Entity, RawBag, RawInstance, NA_LABEL};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFact {
    pub e1: Entity,
    pub e2: Entity,
    pub relation: String,
    /// Tokenized evidence sentence containing both entity surfaces.
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuilderConfig {
    /// Two occurrences co-occur when `max(end) - min(start)` is at most this
    /// many tokens.
    pub cooccur_window: usize,
    /// Snippet length cap; snippets are centered on the joint span and
    /// clamped to the document.
    pub snippet_len: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            cooccur_window: 500,
            snippet_len: 500,
        }
    }
}

fn surface_tokens(surface: &str) -> Vec<String> {
    surface
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn validate_seed(seed: &SeedFact) -> Result<()> {
    let fail = |msg: String| Error::Validation {
        bag_id: format!("{}|{}", seed.e1.id, seed.e2.id),
        msg,
    };
    if seed.e1.id.is_empty() || seed.e2.id.is_empty() {
        return Err(fail("empty entity id".into()));
    }
    if surface_tokens(&seed.e1.surface).is_empty() || surface_tokens(&seed.e2.surface).is_empty() {
        return Err(fail("empty entity surface".into()));
    }
    if seed.relation.is_empty() || seed.relation == NA_LABEL {
        return Err(fail(format!(
            "seed relation must be a positive relation, got {:?}",
            seed.relation
        )));
    }
    if seed.e1.id == seed.e2.id {
        return Err(fail("seed relates an entity to itself".into()));
    }
    if seed.evidence.is_empty() {
        return Err(fail("seed has no evidence sentence".into()));
    }
    Ok(())
}

/// All occurrences of a multi-token surface in a token sequence, compared
/// lowercased. Returns (start, end) half-open spans.
fn occurrences(tokens: &[String], needle: &[String]) -> Vec<(usize, usize)> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - needle.len())
        .filter(|&i| {
            needle
                .iter()
                .zip(&tokens[i..i + needle.len()])
                .all(|(n, t)| *n == t.to_lowercase())
        })
        .map(|i| (i, i + needle.len()))
        .collect()
}

fn disjoint(a: (usize, usize), b: (usize, usize)) -> bool {
    a.1 <= b.0 || b.1 <= a.0
}

/// Locate both seed surfaces in the evidence, preferring the earliest
/// non-overlapping occurrence pair.
fn evidence_instance(seed: &SeedFact) -> Result<RawInstance> {
    let s1 = surface_tokens(&seed.e1.surface);
    let s2 = surface_tokens(&seed.e2.surface);
    let occ1 = occurrences(&seed.evidence, &s1);
    let occ2 = occurrences(&seed.evidence, &s2);
    for &a in &occ1 {
        for &b in &occ2 {
            if disjoint(a, b) {
                return Ok(RawInstance {
                    tokens: seed.evidence.clone(),
                    e1_span: a,
                    e2_span: b,
                });
            }
        }
    }
    Err(Error::Validation {
        bag_id: format!("{}|{}", seed.e1.id, seed.e2.id),
        msg: format!(
            "evidence does not contain both surfaces {:?} and {:?} disjointly",
            seed.e1.surface, seed.e2.surface
        ),
    })
}

/// Occurrences of every registered surface form in one document, found with
/// a first-token candidate map so each document is scanned once.
fn doc_occurrences(
    doc: &Document,
    forms: &[(usize, Vec<String>)], // (entity slot, surface tokens)
    first_token: &HashMap<String, Vec<usize>>, // first surface token -> form indices
) -> HashMap<usize, Vec<(usize, usize)>> {
    let mut found: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (pos, tok) in doc.tokens.iter().enumerate() {
        let lower = tok.to_lowercase();
        let Some(candidates) = first_token.get(&lower) else {
            continue;
        };
        for &fi in candidates {
            let (slot, needle) = &forms[fi];
            let end = pos + needle.len();
            if end > doc.tokens.len() {
                continue;
            }
            if needle
                .iter()
                .zip(&doc.tokens[pos..end])
                .all(|(n, t)| *n == t.to_lowercase())
            {
                found.entry(*slot).or_default().push((pos, end));
            }
        }
    }
    for spans in found.values_mut() {
        spans.sort_unstable();
        spans.dedup();
    }
    found
}

/// Snippet window of at most `cap` tokens containing `[lo, hi)`, centered
/// on the joint span and clamped to the document bounds.
fn snippet_bounds(doc_len: usize, lo: usize, hi: usize, cap: usize) -> (usize, usize) {
    let len = cap.min(doc_len);
    let mid = (lo + hi) / 2;
    let mut start = mid.saturating_sub(len / 2);
    if start + len > doc_len {
        start = doc_len - len;
    }
    if start > lo {
        start = lo;
    }
    if start + len < hi {
        start = hi - len;
    }
    (start, start + len)
}

pub fn build_dataset(
    seeds: &[SeedFact],
    docs: &[Document],
    cfg: &BuilderConfig,
) -> Result<Vec<RawBag>> {
    if cfg.cooccur_window == 0 || cfg.snippet_len == 0 {
        return Err(Error::Config(
            "co-occurrence window and snippet length must be positive".into(),
        ));
    }
    if cfg.snippet_len < cfg.cooccur_window {
        return Err(Error::Config(
            "snippet length below the co-occurrence window would cut spans off".into(),
        ));
    }
    let mut doc_ids = HashSet::new();
    for d in docs {
        if d.tokens.is_empty() {
            return Err(Error::Validation {
                bag_id: d.doc_id.clone(),
                msg: "document has no tokens".into(),
            });
        }
        if !doc_ids.insert(&d.doc_id) {
            return Err(Error::Validation {
                bag_id: d.doc_id.clone(),
                msg: "duplicate document id".into(),
            });
        }
    }

    // Group seeds by ordered pair, keeping first-appearance order.
    let mut pair_order: Vec<(String, String)> = Vec::new();
    let mut pair_seeds: HashMap<(String, String), Vec<usize>> = HashMap::new();
    for (i, seed) in seeds.iter().enumerate() {
        validate_seed(seed)?;
        let key = (seed.e1.id.clone(), seed.e2.id.clone());
        let entry = pair_seeds.entry(key.clone()).or_default();
        if entry.is_empty() {
            pair_order.push(key);
        }
        entry.push(i);
    }

    // Register every distinct surface form per entity id.
    let mut entity_order: Vec<String> = Vec::new();
    let mut entity_slot: HashMap<String, usize> = HashMap::new();
    let mut entity_forms: Vec<Vec<Vec<String>>> = Vec::new();
    for seed in seeds {
        for e in [&seed.e1, &seed.e2] {
            let slot = *entity_slot.entry(e.id.clone()).or_insert_with(|| {
                entity_order.push(e.id.clone());
                entity_forms.push(Vec::new());
                entity_forms.len() - 1
            });
            let form = surface_tokens(&e.surface);
            if !entity_forms[slot].contains(&form) {
                entity_forms[slot].push(form);
            }
        }
    }
    let forms: Vec<(usize, Vec<String>)> = entity_forms
        .iter()
        .enumerate()
        .flat_map(|(slot, fs)| fs.iter().map(move |f| (slot, f.clone())))
        .collect();
    let mut first_token: HashMap<String, Vec<usize>> = HashMap::new();
    for (fi, (_, needle)) in forms.iter().enumerate() {
        first_token.entry(needle[0].clone()).or_default().push(fi);
    }

    // One pass per document collects occurrences for every entity at once.
    let per_doc: Vec<HashMap<usize, Vec<(usize, usize)>>> = docs
        .iter()
        .map(|d| doc_occurrences(d, &forms, &first_token))
        .collect();

    let mut bags = Vec::with_capacity(pair_order.len());
    for key in &pair_order {
        let seed_ids = &pair_seeds[key];
        let first = &seeds[seed_ids[0]];
        let mut relations: Vec<String> = Vec::new();
        let mut instances: Vec<RawInstance> = Vec::new();
        let mut seen: HashSet<(Vec<String>, (usize, usize), (usize, usize))> = HashSet::new();
        for &si in seed_ids {
            let seed = &seeds[si];
            if !relations.iter().any(|r| r == &seed.relation) {
                relations.push(seed.relation.clone());
            }
            let inst = evidence_instance(seed)?;
            if seen.insert((inst.tokens.clone(), inst.e1_span, inst.e2_span)) {
                instances.push(inst);
            }
        }

        let slot1 = entity_slot[&key.0];
        let slot2 = entity_slot[&key.1];
        let mut snippets: Vec<(String, usize, RawInstance)> = Vec::new();
        for (doc, occ) in docs.iter().zip(&per_doc) {
            let (Some(o1), Some(o2)) = (occ.get(&slot1), occ.get(&slot2)) else {
                continue;
            };
            for &a in o1 {
                for &b in o2 {
                    if !disjoint(a, b) {
                        continue;
                    }
                    let lo = a.0.min(b.0);
                    let hi = a.1.max(b.1);
                    if hi - lo > cfg.cooccur_window {
                        continue;
                    }
                    let (s, e) = snippet_bounds(doc.tokens.len(), lo, hi, cfg.snippet_len);
                    let inst = RawInstance {
                        tokens: doc.tokens[s..e].to_vec(),
                        e1_span: (a.0 - s, a.1 - s),
                        e2_span: (b.0 - s, b.1 - s),
                    };
                    snippets.push((doc.doc_id.clone(), s, inst));
                }
            }
        }
        snippets.sort_by(|x, y| {
            (&x.0, x.1, x.2.e1_span, x.2.e2_span).cmp(&(&y.0, y.1, y.2.e1_span, y.2.e2_span))
        });
        for (_, _, inst) in snippets {
            if seen.insert((inst.tokens.clone(), inst.e1_span, inst.e2_span)) {
                instances.push(inst);
            }
        }

        bags.push(RawBag {
            bag_id: format!("{}|{}", key.0, key.1),
            e1: Entity {
                id: key.0.clone(),
                surface: first.e1.surface.clone(),
            },
            e2: Entity {
                id: key.1.clone(),
                surface: first.e2.surface.clone(),
            },
            relations,
            sentences: instances,
        });
    }
    Ok(bags)
}

fn unordered_key(bag: &RawBag) -> (String, String) {
    let (a, b) = (&bag.e1.id, &bag.e2.id);
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Partition bags into splits with the given sentence-count fractions.
/// Bags sharing an unordered entity pair always land in the same split.
/// Groups are shuffled with the seeded rng, then assigned greedily, each to
/// the split with the largest remaining sentence deficit.
pub fn split_by_pair(
    bags: &[RawBag],
    fractions: &[f64],
    rng: &mut Rng,
) -> Result<Vec<Vec<RawBag>>> {
    if fractions.is_empty() || fractions.iter().any(|f| *f <= 0.0 || !f.is_finite()) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let mut group_order: Vec<(String, String)> = Vec::new();
    let mut group_of: HashMap<(String, String), usize> = HashMap::new();
    let mut group_sentences: Vec<usize> = Vec::new();
    let mut group_bags: Vec<Vec<usize>> = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        let key = unordered_key(bag);
        let g = *group_of.entry(key.clone()).or_insert_with(|| {
            group_order.push(key);
            group_sentences.push(0);
            group_bags.push(Vec::new());
            group_order.len() - 1
        });
        group_sentences[g] += bag.sentences.len();
        group_bags[g].push(i);
    }
    if group_order.len() < fractions.len() {
        return Err(Error::Split(format!(
            "need at least {} entity-pair groups to form {} splits, got {}",
            fractions.len(),
            fractions.len(),
            group_order.len()
        )));
    }
    let total: f64 = group_sentences.iter().sum::<usize>() as f64;
    let targets: Vec<f64> = fractions.iter().map(|f| f * total).collect();
    let mut filled = vec![0.0f64; fractions.len()];

    let mut order: Vec<usize> = (0..group_order.len()).collect();
    rng.shuffle(&mut order);

    let mut assignment = vec![0usize; group_order.len()];
    for g in order {
        let mut best = 0usize;
        let mut best_deficit = f64::NEG_INFINITY;
        for (s, (&target, &have)) in targets.iter().zip(&filled).enumerate() {
            let deficit = target - have;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = s;
            }
        }
        assignment[g] = best;
        filled[best] += group_sentences[g] as f64;
    }

    let mut out: Vec<Vec<RawBag>> = vec![Vec::new(); fractions.len()];
    for bag in bags {
        let g = group_of[&unordered_key(bag)];
        out[assignment[g]].push(bag.clone());
    }
    Ok(out)
}

/// The standard 60/10/30 train, dev, test partition.
pub fn split_train_dev_test(
    bags: &[RawBag],
    rng: &mut Rng,
) -> Result<(Vec<RawBag>, Vec<RawBag>, Vec<RawBag>)> {
    let mut parts = split_by_pair(bags, &[0.6, 0.1, 0.3], rng)?;
    let test = parts.pop().expect("three splits");
    let dev = parts.pop().expect("three splits");
    let train = parts.pop().expect("three splits");
    Ok((train, dev, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStat {
    pub relation: String,
    pub bags: usize,
    /// Distinct unordered entity pairs labeled with this relation.
    pub pairs: usize,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub bags: usize,
    pub sentences: usize,
    pub entity_pairs: usize,
    pub relations: Vec<RelationStat>,
}

/// Per-relation bag, entity-pair and sentence counts. A bag with several
/// labels counts toward each; unlabeled bags count under NA.
pub fn dataset_stats(bags: &[RawBag]) -> DatasetStats {
    let mut order: Vec<String> = Vec::new();
    let mut by_name: HashMap<String, (usize, usize)> = HashMap::new();
    let mut rel_pairs: HashMap<String, HashSet<(String, String)>> = HashMap::new();
    let mut pairs: HashSet<(String, String)> = HashSet::new();
    let mut sentences = 0usize;
    for bag in bags {
        sentences += bag.sentences.len();
        pairs.insert(unordered_key(bag));
        let labels: Vec<&str> = if bag.relations.is_empty() {
            vec![NA_LABEL]
        } else {
            bag.relations.iter().map(String::as_str).collect()
        };
        for label in labels {
            let entry = by_name.entry(label.to_string()).or_insert_with(|| {
                order.push(label.to_string());
                (0, 0)
            });
            entry.0 += 1;
            entry.1 += bag.sentences.len();
            rel_pairs
                .entry(label.to_string())
                .or_default()
                .insert(unordered_key(bag));
        }
    }
    order.sort_by_key(|name| (name != NA_LABEL, name.clone()));
    DatasetStats {
        bags: bags.len(),
        sentences,
        entity_pairs: pairs.len(),
        relations: order
            .into_iter()
            .map(|name| {
                let (b, s) = by_name[&name];
                RelationStat {
                    pairs: rel_pairs[&name].len(),
                    relation: name,
                    bags: b,
                    sentences: s,
                }
            })
            .collect(),
    }
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let reader = BufReader::new(crate::error::open_file(path)?);
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_seeds(path: &Path) -> Result<Vec<SeedFact>> {
    let reader = BufReader::new(crate::error::open_file(path)?);
    let mut seeds = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seed: SeedFact = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        validate_seed(&seed)?;
        seeds.push(seed);
    }
    Ok(seeds)
}

pub fn save_seeds(path: &Path, seeds: &[SeedFact]) -> Result<()> {
    let mut out = std::io::BufWriter::new(crate::error::create_file(path)?);
    for s in seeds {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn entity(id: &str, surface: &str) -> Entity {
        Entity {
            id: id.into(),
            surface: surface.into(),
        }
    }

    fn seed(e1: (&str, &str), e2: (&str, &str), rel: &str, evidence: &str) -> SeedFact {
        SeedFact {
            e1: entity(e1.0, e1.1),
            e2: entity(e2.0, e2.1),
            relation: rel.into(),
            evidence: toks(evidence),
        }
    }

    fn doc(id: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            tokens: toks(text),
        }
    }

    #[test]
    fn seed_evidence_is_the_first_instance() {
        let seeds = vec![seed(
            ("P1", "Ada"),
            ("L1", "London"),
            "born_in",
            "Ada was born in London",
        )];
        let docs = vec![doc("d1", "people say Ada lived near London for years")];
        let bags = build_dataset(&seeds, &docs, &BuilderConfig::default()).unwrap();
        assert_eq!(bags.len(), 1);
        let bag = &bags[0];
        assert_eq!(bag.bag_id, "P1|L1");
        assert_eq!(bag.relations, vec!["born_in"]);
        assert_eq!(bag.sentences.len(), 2);
        assert_eq!(bag.sentences[0].tokens, toks("Ada was born in London"));
        assert_eq!(bag.sentences[0].e1_span, (0, 1));
        assert_eq!(bag.sentences[0].e2_span, (4, 5));
        // the snippet from d1 follows
        assert_eq!(bag.sentences[1].e1_span.0, 2);
    }

    #[test]
    fn cooccurrences_outside_the_window_are_skipped() {
        let filler = "x ".repeat(40);
        let text = format!("Ada {} London", filler.trim());
        let seeds = vec![seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada x London")];
        let docs = vec![doc("d1", &text)];
        let cfg = BuilderConfig {
            cooccur_window: 10,
            snippet_len: 10,
        };
        let bags = build_dataset(&seeds, &docs, &cfg).unwrap();
        assert_eq!(bags[0].sentences.len(), 1); // evidence only, gap is 42
    }

    #[test]
    fn snippets_are_capped_centered_and_contain_both_spans() {
        let mut rng = Rng::new(8);
        let cfg = BuilderConfig {
            cooccur_window: 20,
            snippet_len: 20,
        };
        for case in 0..40 {
            let doc_len = 30 + rng.below(120);
            let mut tokens: Vec<String> = (0..doc_len).map(|i| format!("w{i}")).collect();
            let a = rng.below(doc_len - 1);
            let gap = 1 + rng.below(18);
            let b = (a + gap).min(doc_len - 1);
            tokens[a] = "ada".into();
            tokens[b] = "london".into();
            let seeds = vec![seed(
                ("P1", "Ada"),
                ("L1", "London"),
                "born_in",
                "Ada went to London",
            )];
            let docs = vec![Document {
                doc_id: "d".into(),
                tokens,
            }];
            let bags = build_dataset(&seeds, &docs, &cfg).unwrap();
            for inst in &bags[0].sentences[1..] {
                assert!(inst.tokens.len() <= cfg.snippet_len, "case {case}");
                assert_eq!(inst.tokens[inst.e1_span.0].to_lowercase(), "ada");
                assert_eq!(inst.tokens[inst.e2_span.0].to_lowercase(), "london");
            }
        }
    }

    #[test]
    fn found_cooccurrences_match_a_full_scan() {
        let mut rng = Rng::new(15);
        let names = ["ada", "bob", "carol"];
        let places = ["london", "paris"];
        let cfg = BuilderConfig {
            cooccur_window: 12,
            snippet_len: 12,
        };
        let mut seeds = Vec::new();
        for (i, n) in names.iter().enumerate() {
            for (j, p) in places.iter().enumerate() {
                seeds.push(seed(
                    (&format!("P{i}"), n),
                    (&format!("L{j}"), p),
                    "born_in",
                    &format!("{n} was born in {p}"),
                ));
            }
        }
        let mut docs = Vec::new();
        for d in 0..20 {
            let len = 20 + rng.below(40);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let roll = rng.below(10);
                    if roll < 2 {
                        names[rng.below(3)].to_string()
                    } else if roll < 4 {
                        places[rng.below(2)].to_string()
                    } else {
                        format!("f{}", rng.below(30))
                    }
                })
                .collect();
            docs.push(Document {
                doc_id: format!("d{d:02}"),
                tokens,
            });
        }
        let bags = build_dataset(&seeds, &docs, &cfg).unwrap();

        // oracle: brute-force scan, no candidate map, no builder code
        for (i, n) in names.iter().enumerate() {
            for (j, p) in places.iter().enumerate() {
                let mut expected = 0usize;
                for d in &docs {
                    let occ_n: Vec<usize> =
                        (0..d.tokens.len()).filter(|&k| d.tokens[k] == *n).collect();
                    let occ_p: Vec<usize> =
                        (0..d.tokens.len()).filter(|&k| d.tokens[k] == *p).collect();
                    for &a in &occ_n {
                        for &b in &occ_p {
                            if a != b && a.max(b) + 1 - a.min(b) <= cfg.cooccur_window {
                                expected += 1;
                            }
                        }
                    }
                }
                let bag = bags
                    .iter()
                    .find(|b| b.bag_id == format!("P{i}|L{j}"))
                    .unwrap();
                // evidence + snippets; snippets may dedup identical windows
                assert!(
                    bag.sentences.len() - 1 <= expected,
                    "{}: {} snippets vs {} co-occurrences",
                    bag.bag_id,
                    bag.sentences.len() - 1,
                    expected
                );
                if expected > 0 {
                    assert!(bag.sentences.len() > 1, "{}: missing snippets", bag.bag_id);
                } else {
                    assert_eq!(bag.sentences.len(), 1, "{}", bag.bag_id);
                }
            }
        }
    }

    #[test]
    fn seeds_with_the_same_pair_merge() {
        let seeds = vec![
            seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada was born in London"),
            seed(("P1", "Ada"), ("L1", "London"), "lived_in", "Ada lived in London"),
            seed(("L1", "London"), ("P1", "Ada"), "home_of", "London was home to Ada"),
        ];
        let bags = build_dataset(&seeds, &[], &BuilderConfig::default()).unwrap();
        assert_eq!(bags.len(), 2); // ordered pairs differ
        assert_eq!(bags[0].relations, vec!["born_in", "lived_in"]);
        assert_eq!(bags[0].sentences.len(), 2);
        assert_eq!(bags[1].bag_id, "L1|P1");
    }

    #[test]
    fn duplicate_snippets_and_evidence_collapse() {
        let seeds = vec![
            seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada visited London"),
            seed(("P1", "Ada"), ("L1", "London"), "lived_in", "Ada visited London"),
        ];
        // document contains exactly the evidence text: its snippet equals it
        let docs = vec![doc("d1", "Ada visited London")];
        let bags = build_dataset(&seeds, &docs, &BuilderConfig::default()).unwrap();
        assert_eq!(bags[0].sentences.len(), 1, "all three copies are identical");
        assert_eq!(bags[0].relations.len(), 2);
    }

    #[test]
    fn bad_seeds_are_rejected() {
        let ok = seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada in London");
        assert!(validate_seed(&ok).is_ok());
        let mut s = ok.clone();
        s.relation = NA_LABEL.into();
        assert!(validate_seed(&s).is_err());
        let mut s = ok.clone();
        s.e2.id = "P1".into();
        assert!(validate_seed(&s).is_err());
        let mut s = ok.clone();
        s.evidence.clear();
        assert!(validate_seed(&s).is_err());
        let s = seed(("P1", "Ada"), ("L1", "London"), "born_in", "no entities here");
        assert!(build_dataset(&[s], &[], &BuilderConfig::default()).is_err());
    }

    fn bag_with(e1: &str, e2: &str, n_sentences: usize) -> RawBag {
        RawBag {
            bag_id: format!("{e1}|{e2}"),
            e1: entity(e1, e1),
            e2: entity(e2, e2),
            relations: vec!["rel".into()],
            sentences: (0..n_sentences)
                .map(|i| RawInstance {
                    tokens: toks(&format!("{e1} filler{i} {e2}")),
                    e1_span: (0, 1),
                    e2_span: (2, 3),
                })
                .collect(),
        }
    }

    #[test]
    fn equal_groups_split_six_one_three() {
        let bags: Vec<RawBag> = (0..10).map(|i| bag_with(&format!("a{i}"), "z", 1)).collect();
        for seed in 0..20 {
            let (train, dev, test) =
                split_train_dev_test(&bags, &mut Rng::new(seed)).unwrap();
            assert_eq!(train.len(), 6);
            assert_eq!(dev.len(), 1);
            assert_eq!(test.len(), 3);
        }
    }

    #[test]
    fn splits_are_reproducible_for_a_seed() {
        let mut rng = Rng::new(5);
        let bags: Vec<RawBag> = (0..40)
            .map(|i| bag_with(&format!("e{i:02}"), "hub", 1 + rng.below(3)))
            .collect();
        let a = split_by_pair(&bags, &[0.6, 0.1, 0.3], &mut Rng::new(9)).unwrap();
        let b = split_by_pair(&bags, &[0.6, 0.1, 0.3], &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reversed_pairs_stay_in_the_same_split() {
        let mut bags: Vec<RawBag> = (0..12).map(|i| bag_with(&format!("a{i}"), "z", 2)).collect();
        // a reversed duplicate of pair a0|z
        let mut rev = bag_with("z", "a0", 3);
        rev.bag_id = "z|a0".into();
        bags.push(rev);
        let parts = split_by_pair(&bags, &[0.6, 0.1, 0.3], &mut Rng::new(3)).unwrap();
        let find = |needle: &str| -> usize {
            parts
                .iter()
                .position(|p| p.iter().any(|b| b.bag_id == needle))
                .unwrap()
        };
        assert_eq!(find("a0|z"), find("z|a0"));
    }

    #[test]
    fn split_fractions_hold_within_tolerance_on_many_groups() {
        let mut rng = Rng::new(77);
        let bags: Vec<RawBag> = (0..300)
            .map(|i| bag_with(&format!("e{i:03}"), "hub", 1 + rng.below(4)))
            .collect();
        let parts = split_by_pair(&bags, &[0.6, 0.1, 0.3], &mut Rng::new(3)).unwrap();
        let total: usize = bags.iter().map(|b| b.sentences.len()).sum();
        for (part, frac) in parts.iter().zip([0.6, 0.1, 0.3]) {
            let got: usize = part.iter().map(|b| b.sentences.len()).sum();
            let share = got as f64 / total as f64;
            assert!(
                (share - frac).abs() <= 0.02,
                "share {share} vs target {frac}"
            );
        }
    }

    #[test]
    fn too_few_groups_cannot_split() {
        let bags = vec![bag_with("a", "b", 3), bag_with("b", "a", 2)];
        assert!(matches!(
            split_by_pair(&bags, &[0.6, 0.1, 0.3], &mut Rng::new(3)),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let bags: Vec<RawBag> = (0..5).map(|i| bag_with(&format!("a{i}"), "z", 1)).collect();
        assert!(split_by_pair(&bags, &[0.6, 0.5], &mut Rng::new(3)).is_err());
        assert!(split_by_pair(&bags, &[1.0, 0.0], &mut Rng::new(3)).is_err());
        assert!(split_by_pair(&bags, &[], &mut Rng::new(3)).is_err());
    }

    #[test]
    fn stats_count_bags_and_sentences_per_relation() {
        let mut bags = vec![bag_with("a", "b", 2), bag_with("c", "d", 3)];
        bags[1].relations = vec!["rel".into(), "other".into()];
        bags.push(RawBag {
            relations: vec![],
            ..bag_with("e", "f", 1)
        });
        let stats = dataset_stats(&bags);
        assert_eq!(stats.bags, 3);
        assert_eq!(stats.sentences, 6);
        assert_eq!(stats.entity_pairs, 3);
        assert_eq!(stats.relations[0].relation, NA_LABEL);
        assert_eq!(stats.relations[0].bags, 1);
        let rel = stats.relations.iter().find(|r| r.relation == "rel").unwrap();
        assert_eq!(rel.bags, 2);
        assert_eq!(rel.sentences, 5);
        assert_eq!(rel.pairs, 2);
        // a reversed duplicate of a|b adds a bag but not a pair
        bags.push(RawBag {
            bag_id: "b|a".into(),
            ..bag_with("b", "a", 1)
        });
        let again = dataset_stats(&bags);
        let rel = again.relations.iter().find(|r| r.relation == "rel").unwrap();
        assert_eq!(rel.bags, 3);
        assert_eq!(rel.pairs, 2);
        assert_eq!(again.entity_pairs, 3);
    }

    #[test]
    fn seed_and_document_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spath = dir.path().join("seeds.jsonl");
        let dpath = dir.path().join("docs.jsonl");
        let seeds = vec![seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada in London")];
        let docs = vec![doc("d1", "some tokens here")];
        save_seeds(&spath, &seeds).unwrap();
        save_documents(&dpath, &docs).unwrap();
        assert_eq!(load_seeds(&spath).unwrap(), seeds);
        assert_eq!(load_documents(&dpath).unwrap(), docs);
    }

    #[test]
    fn duplicate_document_ids_are_rejected() {
        let seeds = vec![seed(("P1", "Ada"), ("L1", "London"), "born_in", "Ada in London")];
        let docs = vec![doc("d1", "a b c"), doc("d1", "d e f")];
        assert!(build_dataset(&seeds, &docs, &BuilderConfig::default()).is_err());
    }
}

//! Deterministic synthetic corpora for tests and demos.
//!
//! `trigger_corpus` emits bags whose relation is keyed to a single trigger
//! token (born, employs, resides, founded) surrounded by shared filler
//! words, so a working model can separate the relations and a working
//! attention mechanism should weight the trigger above the filler.
//! `gds_inputs` emits seed facts plus a document collection for exercising
//! the dataset builder end to end.

use crate::corpus::{Entity, RawBag, RawInstance};
use crate::gds::{Document, SeedFact};
use crate::rng::Rng;

pub const POSITIVE_RELATIONS: [&str; 4] = ["born_in", "employed_by", "lives_in", "founded_by"];

const TRIGGERS: [&str; 4] = ["born", "employs", "resides", "founded"];

const NA_CONNECTORS: [&str; 5] = ["met", "visited", "mentioned", "greeted", "discussed"];

const FILLERS: [&str; 20] = [
    "the", "a", "report", "noted", "that", "yesterday", "morning", "sources", "said", "during",
    "an", "interview", "again", "quietly", "near", "downtown", "office", "meeting", "last",
    "week",
];

const FIRST_NAMES: [&str; 20] = [
    "ada", "bob", "carol", "dan", "eva", "frank", "grace", "hank", "iris", "jack", "kate",
    "liam", "mona", "nate", "olga", "paul", "quinn", "rosa", "sam", "tina",
];

const SURNAMES: [&str; 10] = [
    "reyes", "chen", "novak", "smith", "ortiz", "kim", "patel", "weiss", "lopez", "diaz",
];

const PLACES: [&str; 20] = [
    "london", "paris", "berlin", "madrid", "oslo", "rome", "vienna", "dublin", "prague",
    "lisbon", "athens", "cairo", "quito", "lima", "osaka", "delhi", "sydney", "boston",
    "denver", "austin",
];

const ORG_HEADS: [&str; 10] = [
    "acme", "orbit", "vertex", "quantum", "stellar", "crimson", "silver", "golden", "northern",
    "eastern",
];

const ORG_TAILS: [&str; 10] = [
    "labs", "press", "group", "works", "systems", "media", "partners", "institute", "foundry",
    "collective",
];

/// The token a relation is keyed to, if any.
pub fn trigger_for(relation: &str) -> Option<&'static str> {
    POSITIVE_RELATIONS
        .iter()
        .position(|r| *r == relation)
        .map(|i| TRIGGERS[i])
}

pub fn trigger_tokens() -> &'static [&'static str] {
    &TRIGGERS
}

pub fn filler_tokens() -> &'static [&'static str] {
    &FILLERS
}

fn pick<'a>(rng: &mut Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.below(pool.len())]
}

fn person_surface(rng: &mut Rng) -> String {
    let first = pick(rng, &FIRST_NAMES);
    if rng.below(2) == 0 {
        format!("{first} {}", pick(rng, &SURNAMES))
    } else {
        first.to_string()
    }
}

fn org_surface(rng: &mut Rng) -> String {
    format!("{} {}", pick(rng, &ORG_HEADS), pick(rng, &ORG_TAILS))
}

fn split_tokens(surface: &str) -> Vec<String> {
    surface.split_whitespace().map(str::to_string).collect()
}

/// Wrap a core token sequence in 0..=3 random filler tokens on each side,
/// shifting the tracked spans accordingly.
fn pad_sentence(
    rng: &mut Rng,
    core: Vec<String>,
    e1: (usize, usize),
    e2: (usize, usize),
) -> RawInstance {
    let pre = rng.below(4);
    let post = rng.below(4);
    let mut tokens: Vec<String> = (0..pre).map(|_| pick(rng, &FILLERS).to_string()).collect();
    tokens.extend(core);
    for _ in 0..post {
        tokens.push(pick(rng, &FILLERS).to_string());
    }
    RawInstance {
        tokens,
        e1_span: (e1.0 + pre, e1.1 + pre),
        e2_span: (e2.0 + pre, e2.1 + pre),
    }
}

/// A sentence expressing `relation` between the two surfaces, or a neutral
/// co-occurrence sentence when `relation` is None.
fn relation_sentence(
    rng: &mut Rng,
    relation: Option<usize>,
    s1: &str,
    s2: &str,
) -> RawInstance {
    let t1 = split_tokens(s1);
    let t2 = split_tokens(s2);
    let (l1, l2) = (t1.len(), t2.len());
    let mut core = Vec::new();
    let (e1, e2) = match relation {
        // <person> was born in <place>
        Some(0) => {
            core.extend(t1);
            core.extend(["was", "born", "in"].map(String::from));
            core.extend(t2);
            ((0, l1), (l1 + 3, l1 + 3 + l2))
        }
        // <org> employs <person>, subject entity second
        Some(1) => {
            core.extend(t2);
            core.push("employs".into());
            core.extend(t1);
            ((l2 + 1, l2 + 1 + l1), (0, l2))
        }
        // <person> resides in <place>
        Some(2) => {
            core.extend(t1);
            core.extend(["resides", "in"].map(String::from));
            core.extend(t2);
            ((0, l1), (l1 + 2, l1 + 2 + l2))
        }
        // <org> was founded by <person>
        Some(3) => {
            core.extend(t1);
            core.extend(["was", "founded", "by"].map(String::from));
            core.extend(t2);
            ((0, l1), (l1 + 3, l1 + 3 + l2))
        }
        _ => {
            let conn = pick(rng, &NA_CONNECTORS).to_string();
            core.extend(t1);
            core.push(conn);
            core.extend(t2);
            ((0, l1), (l1 + 1, l1 + 1 + l2))
        }
    };
    pad_sentence(rng, core, e1, e2)
}

fn pair_for(rng: &mut Rng, relation: Option<usize>) -> (String, String) {
    match relation {
        Some(0) | Some(2) => (person_surface(rng), pick(rng, &PLACES).to_string()),
        Some(1) => (person_surface(rng), org_surface(rng)),
        Some(3) => (org_surface(rng), person_surface(rng)),
        _ => {
            let s1 = person_surface(rng);
            let s2 = if rng.below(2) == 0 {
                pick(rng, &PLACES).to_string()
            } else {
                org_surface(rng)
            };
            (s1, s2)
        }
    }
}

/// A corpus of `n` bags cycling through NA and the four keyed relations.
/// Entity ids are unique per bag, so any slicing of the result keeps entity
/// pairs disjoint between slices.
pub fn trigger_corpus(n: usize, seed: u64) -> Vec<RawBag> {
    let mut rng = Rng::new(seed).derive(0x636f_7270);
    let mut bags = Vec::with_capacity(n);
    for i in 0..n {
        let relation = match i % 5 {
            0 => None,
            k => Some(k - 1),
        };
        let (s1, s2) = pair_for(&mut rng, relation);
        let mut sentences = Vec::new();
        match relation {
            Some(r) => {
                for _ in 0..1 + rng.below(2) {
                    sentences.push(relation_sentence(&mut rng, Some(r), &s1, &s2));
                }
                // occasional uninformative sentence inside a positive bag
                if rng.below(4) == 0 {
                    sentences.push(relation_sentence(&mut rng, None, &s1, &s2));
                }
            }
            None => {
                for _ in 0..1 + rng.below(3) {
                    sentences.push(relation_sentence(&mut rng, None, &s1, &s2));
                }
            }
        }
        bags.push(RawBag {
            bag_id: format!("E{i}a|E{i}b"),
            e1: Entity {
                id: format!("E{i}a"),
                surface: s1,
            },
            e2: Entity {
                id: format!("E{i}b"),
                surface: s2,
            },
            relations: relation
                .map(|r| vec![POSITIVE_RELATIONS[r].to_string()])
                .unwrap_or_default(),
            sentences,
        });
    }
    bags
}

/// A corpus built to be memorized quickly under whole-batch updates: one
/// short fixed-template sentence per bag, no filler padding, single-token
/// surfaces cycling through small pools. Near-identical sentences per
/// relation keep the summed batch gradient pointing one way.
pub fn overfit_corpus(n: usize) -> Vec<RawBag> {
    let persons = &FIRST_NAMES[..10];
    let places = &PLACES[..10];
    let orgs = &ORG_HEADS[..10];
    let toks = |s: String| -> Vec<String> { s.split_whitespace().map(str::to_string).collect() };
    let mut bags = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i / 5) % 10;
        let (rel, tokens, sp1, sp2): (&str, Vec<String>, (usize, usize), (usize, usize)) =
            match i % 5 {
                0 => ("", toks(format!("{} met {}", persons[j], places[j])), (0, 1), (2, 3)),
                1 => (
                    POSITIVE_RELATIONS[0],
                    toks(format!("{} was born in {}", persons[j], places[j])),
                    (0, 1),
                    (4, 5),
                ),
                2 => (
                    POSITIVE_RELATIONS[1],
                    toks(format!("{} employs {}", orgs[j], persons[j])),
                    (2, 3),
                    (0, 1),
                ),
                3 => (
                    POSITIVE_RELATIONS[2],
                    toks(format!("{} resides in {}", persons[j], places[j])),
                    (0, 1),
                    (3, 4),
                ),
                _ => (
                    POSITIVE_RELATIONS[3],
                    toks(format!("{} was founded by {}", orgs[j], persons[j])),
                    (0, 1),
                    (4, 5),
                ),
            };
        bags.push(RawBag {
            bag_id: format!("O{i}a|O{i}b"),
            e1: Entity {
                id: format!("O{i}a"),
                surface: tokens[sp1.0..sp1.1].join(" "),
            },
            e2: Entity {
                id: format!("O{i}b"),
                surface: tokens[sp2.0..sp2.1].join(" "),
            },
            relations: if rel.is_empty() {
                vec![]
            } else {
                vec![rel.to_string()]
            },
            sentences: vec![RawInstance {
                tokens,
                e1_span: sp1,
                e2_span: sp2,
            }],
        });
    }
    bags
}

/// Three disjoint slices of one generated corpus.
pub fn trigger_splits(
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    seed: u64,
) -> (Vec<RawBag>, Vec<RawBag>, Vec<RawBag>) {
    let mut bags = trigger_corpus(n_train + n_dev + n_test, seed);
    let test = bags.split_off(n_train + n_dev);
    let dev = bags.split_off(n_train);
    (bags, dev, test)
}

/// Seed facts and a document collection for the dataset builder. Documents
/// contain in-window co-occurrences for every pair, occasional co-occurrences
/// far beyond the standard window, shared surface strings across distinct
/// entity ids, and pure-filler background documents.
pub fn gds_inputs(n_seeds: usize, seed: u64) -> (Vec<SeedFact>, Vec<Document>) {
    let mut rng = Rng::new(seed).derive(0x6764_7321);
    let mut seeds: Vec<SeedFact> = Vec::with_capacity(n_seeds);
    let mut docs = Vec::new();
    let mut doc_n = 0usize;
    let filler_run = |rng: &mut Rng, lo: usize, hi: usize| -> Vec<String> {
        let len = lo + rng.below(hi - lo + 1);
        (0..len).map(|_| pick(rng, &FILLERS).to_string()).collect()
    };
    for i in 0..n_seeds {
        let r = i % 4;
        let s1 = if i % 10 == 9 {
            // same surface as the previous seed's subject, different id
            seeds[i - 1].e1.surface.clone()
        } else if r == 3 {
            format!("{} {}", pick(&mut rng, &ORG_HEADS), pick(&mut rng, &ORG_TAILS))
        } else {
            format!("{} u{i:04}", pick(&mut rng, &FIRST_NAMES))
        };
        let s2 = match r {
            0 | 2 => format!("city{i:04}"),
            1 => format!("org{i:04} {}", pick(&mut rng, &ORG_TAILS)),
            _ => format!("{} u{i:04}b", pick(&mut rng, &FIRST_NAMES)),
        };
        let evidence = relation_sentence(&mut rng, Some(r), &s1, &s2);
        seeds.push(SeedFact {
            e1: Entity {
                id: format!("G{i}a"),
                surface: s1.clone(),
            },
            e2: Entity {
                id: format!("G{i}b"),
                surface: s2.clone(),
            },
            relation: POSITIVE_RELATIONS[r].to_string(),
            evidence: evidence.tokens,
        });

        let region = |rng: &mut Rng| -> Vec<String> {
            let mut t = split_tokens(&s1);
            t.push(pick(rng, &["and", "with", "alongside"]).to_string());
            t.extend(split_tokens(&s2));
            t
        };
        for _ in 0..1 + rng.below(2) {
            let mut tokens = filler_run(&mut rng, 5, 20);
            tokens.extend(region(&mut rng));
            tokens.extend(filler_run(&mut rng, 5, 20));
            if rng.below(2) == 0 {
                tokens.extend(region(&mut rng));
                tokens.extend(filler_run(&mut rng, 3, 10));
            }
            docs.push(Document {
                doc_id: format!("doc{doc_n:05}"),
                tokens,
            });
            doc_n += 1;
        }
        if i % 7 == 0 {
            // both entities present but too far apart to co-occur
            let mut tokens = split_tokens(&s1);
            for _ in 0..520 {
                tokens.push(pick(&mut rng, &FILLERS).to_string());
            }
            tokens.extend(split_tokens(&s2));
            docs.push(Document {
                doc_id: format!("doc{doc_n:05}"),
                tokens,
            });
            doc_n += 1;
        }
    }
    for _ in 0..n_seeds / 10 {
        docs.push(Document {
            doc_id: format!("doc{doc_n:05}"),
            tokens: filler_run(&mut rng, 20, 40),
        });
        doc_n += 1;
    }
    (seeds, docs)
}

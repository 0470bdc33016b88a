//! Sentence encoders and the model shell around them.
//!
//! Three architectures share one interface: a piecewise convolutional
//! network, a bidirectional GRU with word attention, and a convolutional
//! encoder with per-entity attention. Each maps an encoded sentence to a
//! probability distribution over relations; attention variants also expose
//! their weights for export.
//!
//! [`Model`] owns the configuration, vocabulary, relation schema and
//! parameters, dispatches forward passes, and round-trips through JSON
//! checkpoints.

pub mod bgwa;
pub mod ea;
pub mod pcnn;

use std::fmt;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    position_rows, CorpusConfig, EncodedInstance, RelationSchema, Vocabulary, PAD,
};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::rng::Rng;
use crate::tape::{Tape, VarId};
use crate::tensor::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pcnn,
    Bgwa,
    Ea,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Pcnn, ModelKind::Bgwa, ModelKind::Ea];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Pcnn => "pcnn",
            ModelKind::Bgwa => "bgwa",
            ModelKind::Ea => "ea",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "pcnn" => Ok(ModelKind::Pcnn),
            "bgwa" => Ok(ModelKind::Bgwa),
            "ea" => Ok(ModelKind::Ea),
            other => Err(Error::Config(format!(
                "unknown model {other:?}, expected pcnn, bgwa or ea"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Architecture hyperparameters, stored inside every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word embedding width.
    pub word_dim: usize,
    /// Position embedding width (one table per entity).
    pub pos_dim: usize,
    /// Clamp radius for relative positions.
    pub max_position: usize,
    /// Sentence length cap before encoding.
    pub max_len: usize,
    /// Convolution window (odd).
    pub window: usize,
    /// Convolution channels.
    pub filters: usize,
    /// GRU state width per direction.
    pub hidden: usize,
    /// Dropout rate on the sentence feature during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 50,
            pos_dim: 5,
            max_position: 30,
            max_len: 120,
            window: 3,
            filters: 230,
            hidden: 115,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    /// Width of one embedded token: word part plus both position parts.
    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            max_position: self.max_position,
            max_len: self.max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.word_dim == 0 || self.pos_dim == 0 || self.filters == 0 || self.hidden == 0 {
            return bad("embedding, filter and hidden sizes must be positive");
        }
        if self.window % 2 == 0 || self.window == 0 {
            return bad("convolution window must be odd");
        }
        if self.max_position == 0 || self.max_len == 0 {
            return bad("max_position and max_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Eval-mode outputs for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub probs: Vec<f64>,
    /// Per-token attention weights, if the architecture has word attention.
    pub word_attention: Option<Vec<f64>>,
    /// Per-token weights of the two entity attention heads.
    pub entity_attention: Option<(Vec<f64>, Vec<f64>)>,
}

/// Tape variables produced by a forward pass, for callers that keep
/// differentiating (training) or read values off the tape.
pub struct ForwardVars {
    pub logits: VarId,
    pub probs: VarId,
    pub word_attention: Option<VarId>,
    pub entity_attention: Option<(VarId, VarId)>,
}

enum Handles {
    Pcnn(pcnn::Handles),
    Bgwa(bgwa::Handles),
    Ea(ea::Handles),
}

pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub schema: RelationSchema,
    pub params: ParamSet,
    handles: Handles,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        config: ModelConfig,
        vocab: Vocabulary,
        schema: RelationSchema,
        seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        if vocab.embedding_dim != config.word_dim {
            return Err(Error::Config(format!(
                "vocabulary embedding width {} does not match word_dim {}",
                vocab.embedding_dim, config.word_dim
            )));
        }
        let mut rng = Rng::new(seed);
        let mut params = ParamSet::new();
        let handles = match kind {
            ModelKind::Pcnn => {
                Handles::Pcnn(pcnn::build(&mut params, &config, &vocab, &schema, &mut rng))
            }
            ModelKind::Bgwa => {
                Handles::Bgwa(bgwa::build(&mut params, &config, &vocab, &schema, &mut rng))
            }
            ModelKind::Ea => {
                Handles::Ea(ea::build(&mut params, &config, &vocab, &schema, &mut rng))
            }
        };
        Ok(Model {
            kind,
            config,
            vocab,
            schema,
            params,
            handles,
        })
    }

    /// Number of relation classes including NA.
    pub fn relations(&self) -> usize {
        self.schema.len()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        inst: &EncodedInstance,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<ForwardVars> {
        self.forward_with(tape, &self.params, inst, mode, rng)
    }

    /// Forward pass against an arbitrary parameter set with the same layout,
    /// which is what the finite-difference checker perturbs.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        inst: &EncodedInstance,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<ForwardVars> {
        match &self.handles {
            Handles::Pcnn(h) => pcnn::forward(tape, params, h, &self.config, inst, mode, rng),
            Handles::Bgwa(h) => bgwa::forward(tape, params, h, &self.config, inst, mode, rng),
            Handles::Ea(h) => ea::forward(tape, params, h, &self.config, inst, mode, rng),
        }
    }

    /// Bag-level relation probabilities: the at-least-one assumption takes
    /// the maximum over the bag's sentences, per relation.
    pub fn predict_bag(&self, bag: &crate::corpus::InstanceBag) -> Result<Vec<f64>> {
        let mut best = vec![0.0; self.relations()];
        for inst in &bag.instances {
            let out = self.predict_instance(inst)?;
            for (b, p) in best.iter_mut().zip(&out.probs) {
                if *p > *b {
                    *b = *p;
                }
            }
        }
        Ok(best)
    }

    /// Eval-mode prediction for one sentence.
    pub fn predict_instance(&self, inst: &EncodedInstance) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let mut rng = Rng::new(0); // eval mode consumes no randomness
        let f = self.forward(&mut tape, inst, Mode::Eval, &mut rng)?;
        Ok(ModelOutput {
            probs: tape.value(f.probs).data().to_vec(),
            word_attention: f.word_attention.map(|v| tape.value(v).data().to_vec()),
            entity_attention: f
                .entity_attention
                .map(|(a, b)| (tape.value(a).data().to_vec(), tape.value(b).data().to_vec())),
        })
    }

    /// Loss `-log p(label)` for one sentence plus its parameter gradients.
    pub fn example_grads(
        &self,
        params: &ParamSet,
        inst: &EncodedInstance,
        label: usize,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(f64, crate::params::GradMap)> {
        let mut tape = Tape::new();
        let f = self.forward_with(&mut tape, params, inst, mode, rng)?;
        let p = tape.pick(f.probs, label)?;
        let loss = tape.neg_log(p)?;
        tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], tape.param_grads()))
    }

    /// Error if `other` differs from the stored architecture, naming every
    /// mismatching field.
    pub fn expect_matching_config(&self, other: &ModelConfig) -> Result<()> {
        let a = &self.config;
        let mut diffs = Vec::new();
        macro_rules! cmp {
            ($field:ident) => {
                if a.$field != other.$field {
                    diffs.push(format!(
                        "{}: checkpoint {:?}, requested {:?}",
                        stringify!($field),
                        a.$field,
                        other.$field
                    ));
                }
            };
        }
        cmp!(word_dim);
        cmp!(pos_dim);
        cmp!(max_position);
        cmp!(max_len);
        cmp!(window);
        cmp!(filters);
        cmp!(hidden);
        cmp!(dropout);
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::CheckpointMismatch(diffs.join("; ")))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dto = CheckpointDto {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: self.kind,
            config: self.config.clone(),
            relations: self.schema.names().to_vec(),
            vocab: self.vocab.clone(),
            params: self
                .params
                .iter()
                .map(|(_, p)| ParamDto {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        };
        let out = BufWriter::new(crate::error::create_file(path)?);
        serde_json::to_writer(out, &dto)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let file = BufReader::new(crate::error::open_file(path)?);
        let dto: CheckpointDto = serde_json::from_reader(file)?;
        if dto.format != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointMismatch(format!(
                "unknown checkpoint format {:?}",
                dto.format
            )));
        }
        let schema = RelationSchema::from_names(dto.relations)?;
        let mut model = Model::new(dto.kind, dto.config, dto.vocab, schema, 0)?;
        if dto.params.len() != model.params.len() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint stores {} parameters, architecture has {}",
                dto.params.len(),
                model.params.len()
            )));
        }
        for p in dto.params {
            let id = model.params.by_name(&p.name).ok_or_else(|| {
                Error::CheckpointMismatch(format!("unexpected parameter {:?}", p.name))
            })?;
            let target = model.params.value_mut(id);
            if target.shape() != p.shape.as_slice() || p.data.len() != target.len() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter {:?} has shape {:?}, architecture expects {:?}",
                    p.name,
                    p.shape,
                    target.shape()
                )));
            }
            target.data_mut().copy_from_slice(&p.data);
        }
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: &str = "dsre-model-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointDto {
    format: String,
    kind: ModelKind,
    config: ModelConfig,
    relations: Vec<String>,
    vocab: Vocabulary,
    params: Vec<ParamDto>,
}

#[derive(Serialize, Deserialize)]
struct ParamDto {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Embedding tables shared by all three architectures.
pub(crate) struct EmbedIds {
    pub word: ParamId,
    pub pos1: ParamId,
    pub pos2: ParamId,
}

pub(crate) fn add_embeddings(
    params: &mut ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> EmbedIds {
    let word = params.add_matrix("word_emb", vocab.len(), cfg.word_dim, rng);
    // The padding row stays all-zero; its gradient is never populated.
    params.value_mut(word).data_mut()[..cfg.word_dim].fill(0.0);
    let rows = position_rows(cfg.max_position);
    let pos1 = params.add_matrix("pos1_emb", rows, cfg.pos_dim, rng);
    let pos2 = params.add_matrix("pos2_emb", rows, cfg.pos_dim, rng);
    EmbedIds { word, pos1, pos2 }
}

/// Token matrix `[M, input_dim]`: word row plus both position rows per token.
pub(crate) fn embed_instance(
    tape: &mut Tape,
    params: &ParamSet,
    emb: &EmbedIds,
    inst: &EncodedInstance,
) -> Result<VarId> {
    let w = tape.param(params, emb.word);
    let p1 = tape.param(params, emb.pos1);
    let p2 = tape.param(params, emb.pos2);
    tape.embed(w, p1, p2, &inst.word_ids, &inst.pos1, &inst.pos2, PAD)
}

/// Final classification layer: affine map then softmax.
pub(crate) fn linear_head(
    tape: &mut Tape,
    params: &ParamSet,
    weight: ParamId,
    bias: ParamId,
    feature: VarId,
) -> Result<(VarId, VarId)> {
    let w = tape.param(params, weight);
    let b = tape.param(params, bias);
    let wx = tape.matvec(w, feature)?;
    let logits = tape.add(wx, b)?;
    let probs = tape.softmax(logits)?;
    Ok((logits, probs))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::corpus::{tokenize, Entity, RawBag, RawInstance};

    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            word_dim: 8,
            pos_dim: 2,
            max_position: 10,
            max_len: 40,
            window: 3,
            filters: 6,
            hidden: 5,
            dropout: 0.5,
        }
    }

    pub fn tiny_corpus() -> Vec<RawBag> {
        let mk = |id: &str, text: &str, e1: (usize, usize), e2: (usize, usize), rel: &str| RawBag {
            bag_id: id.to_string(),
            e1: Entity {
                id: format!("{id}-e1"),
                surface: "x".into(),
            },
            e2: Entity {
                id: format!("{id}-e2"),
                surface: "y".into(),
            },
            relations: if rel == "NA" {
                vec![]
            } else {
                vec![rel.to_string()]
            },
            sentences: vec![RawInstance {
                tokens: tokenize(text).unwrap(),
                e1_span: e1,
                e2_span: e2,
            }],
        };
        vec![
            mk(
                "b1",
                "alice was born in berlin last spring",
                (0, 1),
                (4, 5),
                "born_in",
            ),
            mk(
                "b2",
                "bob works for acme corp in boston",
                (0, 1),
                (3, 5),
                "employed_by",
            ),
            mk("b3", "carol met dave near the old station", (0, 1), (2, 3), "NA"),
        ]
    }

    pub fn tiny_model(kind: ModelKind, seed: u64) -> (Model, Vec<crate::corpus::InstanceBag>) {
        let cfg = tiny_config();
        let raw = tiny_corpus();
        let vocab = Vocabulary::from_corpus(&raw, cfg.word_dim);
        let schema = RelationSchema::from_corpus(&raw);
        let bags = crate::corpus::encode_bags(&raw, &vocab, &schema, &cfg.corpus())
            .unwrap()
            .bags;
        let model = Model::new(kind, cfg, vocab, schema, seed).unwrap();
        (model, bags)
    }

    pub fn first_instance(bags: &[crate::corpus::InstanceBag]) -> &EncodedInstance {
        &bags[0].instances[0]
    }

    /// Check analytic gradients of one example against central differences.
    pub fn model_grad_check(kind: ModelKind, seed: u64) -> f64 {
        let (model, bags) = tiny_model(kind, seed);
        let inst = first_instance(&bags).clone();
        let label = bags[0].labels[0];
        crate::params::grad_check(
            &model.params.clone(),
            |p| {
                let mut r = Rng::new(0);
                model.example_grads(p, &inst, label, Mode::Eval, &mut r)
            },
            1e-5,
            Some(6),
            seed ^ 0xA5A5,
        )
        .unwrap()
    }

    pub fn zero_all(params: &mut ParamSet) {
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            params.value_mut(id).data_mut().fill(0.0);
        }
    }
}

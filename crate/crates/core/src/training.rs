//! Bag-level training.
//!
//! Supervision is distant: a bag of sentences mentioning an entity pair
//! carries the pair's relation labels, but no sentence-level ground truth.
//! Each (bag, label) pair becomes one training example. Per example, the
//! sentence the current model scores highest for that label is selected and
//! trained on with the negative log likelihood of the label; bags labeled
//! with several relations contribute one example per relation.
//!
//! Batches accumulate gradients over their examples, average them, and take
//! one SGD step. Fitting runs epochs until the dev-set area under the
//! precision/recall curve stops improving for `patience` consecutive
//! epochs, then restores the best epoch's parameters.

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceBag, RelationSchema, Vocabulary};
use crate::encoders::{Model, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::evaluation::{auc, gold_from_bags, pr_curve, score_bags};
use crate::rng::Rng;
use crate::tensor::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// SGD learning rate.
    pub lr: f64,
    /// Examples per gradient step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 0.1,
            batch_size: 50,
            max_epochs: 200,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size and epoch count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One training example: a bag index and one of its labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainExample {
    pub bag: usize,
    pub label: usize,
}

/// Replicate bags per label: a bag labeled {r1, r3} yields two examples,
/// an NA bag yields one with the NA label.
pub fn expand_examples(bags: &[InstanceBag]) -> Vec<TrainExample> {
    let mut out = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        for &label in &bag.labels {
            out.push(TrainExample { bag: i, label });
        }
    }
    out
}

/// Index of the bag sentence the model currently rates highest for `label`
/// (first sentence on ties), evaluated without dropout.
pub fn select_instance(model: &Model, bag: &InstanceBag, label: usize) -> Result<usize> {
    if label >= model.relations() {
        return Err(Error::Index {
            op: "select_instance",
            index: label,
            len: model.relations(),
        });
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, inst) in bag.instances.iter().enumerate() {
        let out = model.predict_instance(inst)?;
        let s = out.probs[label];
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    Ok(best)
}

/// One pass over the examples in shuffled order. Each batch accumulates
/// example gradients, scales them to their mean, and applies one SGD step.
/// Returns the mean example loss.
pub fn train_epoch(
    model: &mut Model,
    bags: &[InstanceBag],
    examples: &mut [TrainExample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    rng.shuffle(examples);
    let mut total_loss = 0.0;
    for batch in examples.chunks(cfg.batch_size) {
        model.params.zero_grads();
        for ex in batch {
            let bag = &bags[ex.bag];
            let picked = select_instance(model, bag, ex.label)?;
            let (loss, grads) = model.example_grads(
                &model.params,
                &bag.instances[picked],
                ex.label,
                Mode::Train,
                rng,
            )?;
            model.params.accumulate(&grads);
            total_loss += loss;
        }
        model.params.sgd_step(cfg.lr);
    }
    Ok(total_loss / examples.len() as f64)
}

/// Tracks the best score seen and how long since it improved. Only strict
/// improvement resets the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Record an epoch's score; returns true when training should stop.
    pub fn update(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_score(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_auc: f64,
}

pub struct FitResult {
    /// The model at its best dev epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_auc: f64,
}

/// Dev-set area under the precision/recall curve; a dev set without any
/// positive label scores zero rather than failing.
pub fn dev_auc(model: &Model, dev: &[InstanceBag], threads: usize) -> Result<f64> {
    let gold = gold_from_bags(dev);
    if gold.is_empty() {
        return Ok(0.0);
    }
    let records = score_bags(model, dev, threads)?;
    Ok(auc(&pr_curve(&records, &gold)?))
}

/// Unordered entity pairs appearing in both corpora, sorted. Train and dev
/// should be pair-disjoint; any overlap inflates dev scores.
pub fn overlapping_pairs(train: &[InstanceBag], dev: &[InstanceBag]) -> Vec<String> {
    let key = |bag: &InstanceBag| {
        let (a, b) = (&bag.e1.id, &bag.e2.id);
        if a <= b {
            format!("{a}|{b}")
        } else {
            format!("{b}|{a}")
        }
    };
    let train_pairs: std::collections::HashSet<String> = train.iter().map(key).collect();
    let mut out: Vec<String> = dev
        .iter()
        .map(key)
        .filter(|k| train_pairs.contains(k))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Train a fresh model of the given kind, early-stopping on dev AUC.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    kind: ModelKind,
    cfg: &TrainConfig,
    vocab: Vocabulary,
    schema: RelationSchema,
    train: &[InstanceBag],
    dev: &[InstanceBag],
    seed: u64,
    threads: usize,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut model = Model::new(kind, cfg.model.clone(), vocab, schema, seed)?;
    fit_model(&mut model, cfg, train, dev, seed, threads).map(|(history, best_epoch, best_auc)| {
        FitResult {
            model,
            history,
            best_epoch,
            best_auc,
        }
    })
}

/// Training loop over an already-built model. On return the model carries
/// the parameters of its best dev epoch.
pub fn fit_model(
    model: &mut Model,
    cfg: &TrainConfig,
    train: &[InstanceBag],
    dev: &[InstanceBag],
    seed: u64,
    threads: usize,
) -> Result<(Vec<EpochRecord>, usize, f64)> {
    let mut examples = expand_examples(train);
    if examples.is_empty() {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    let mut rng = Rng::new(seed).derive(0x7261_696e); // training stream
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_params = model.params.clone();
    for epoch in 1..=cfg.max_epochs {
        let train_loss = train_epoch(model, train, &mut examples, cfg, &mut rng)?;
        let auc = dev_auc(model, dev, threads)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_auc: auc,
        });
        let was_best = auc > stopper.best_score();
        let stop = stopper.update(epoch, auc);
        if was_best {
            best_params = model.params.clone();
        }
        if stop {
            break;
        }
    }
    model.params = best_params;
    Ok((history, stopper.best_epoch(), stopper.best_score()))
}

/// Fraction of bags whose top-scoring relation is one of their labels.
pub fn bag_accuracy(model: &Model, bags: &[InstanceBag]) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::InsufficientData("no bags to score".into()));
    }
    let mut hits = 0usize;
    for bag in bags {
        let probs = model.predict_bag(bag)?;
        let top = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .expect("at least the NA class");
        if bag.labels.contains(&top) {
            hits += 1;
        }
    }
    Ok(hits as f64 / bags.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NA;
    use crate::encoders::test_support::{first_instance, tiny_model, zero_all};

    #[test]
    fn expansion_replicates_multi_label_bags() {
        let (_, mut bags) = tiny_model(ModelKind::Pcnn, 1);
        bags[0].labels = vec![1, 2];
        let examples = expand_examples(&bags);
        assert_eq!(examples.len(), 4); // 2 + 1 + 1 (NA bag)
        assert_eq!(examples[0], TrainExample { bag: 0, label: 1 });
        assert_eq!(examples[1], TrainExample { bag: 0, label: 2 });
        assert!(examples.iter().any(|e| e.label == NA));
    }

    #[test]
    fn selection_takes_the_highest_scoring_sentence() {
        let (model, mut bags) = tiny_model(ModelKind::Pcnn, 7);
        // a bag with both corpus sentences, scored independently
        let extra = bags[1].instances[0].clone();
        bags[0].instances.push(extra);
        let bag = &bags[0];
        let label = bag.labels[0];
        let scores: Vec<f64> = bag
            .instances
            .iter()
            .map(|i| model.predict_instance(i).unwrap().probs[label])
            .collect();
        let expect = if scores[0] >= scores[1] { 0 } else { 1 };
        assert_eq!(select_instance(&model, bag, label).unwrap(), expect);
    }

    #[test]
    fn selection_breaks_ties_toward_the_first_sentence() {
        let (mut model, mut bags) = tiny_model(ModelKind::Pcnn, 8);
        zero_all(&mut model.params);
        let extra = bags[1].instances[0].clone();
        bags[0].instances.push(extra);
        // uniform probabilities everywhere: every sentence ties
        assert_eq!(select_instance(&model, &bags[0], 1).unwrap(), 0);
    }

    #[test]
    fn zeroed_model_losses_are_log_class_count() {
        for kind in ModelKind::ALL {
            let (mut model, bags) = tiny_model(kind, 5);
            zero_all(&mut model.params);
            let inst = first_instance(&bags);
            let mut rng = Rng::new(0);
            let (loss, _) = model
                .example_grads(&model.params, inst, 1, Mode::Eval, &mut rng)
                .unwrap();
            let expect = (model.relations() as f64).ln();
            assert!(
                (loss - expect).abs() < 1e-12,
                "{kind}: loss {loss} vs ln(R) {expect}"
            );
        }
    }

    #[test]
    fn pair_overlap_is_unordered_and_deduplicated() {
        let (_, bags) = tiny_model(ModelKind::Pcnn, 11);
        let mut dev = vec![bags[0].clone(), bags[0].clone()];
        let d = &mut dev[1];
        std::mem::swap(&mut d.e1, &mut d.e2); // reversed pair
        assert_eq!(overlapping_pairs(&bags, &dev).len(), 1);
        assert!(overlapping_pairs(&bags[1..], &dev[..0]).is_empty());
    }

    #[test]
    fn early_stopping_trace() {
        let mut stopper = EarlyStopper::new(1);
        assert!(!stopper.update(1, 0.5));
        assert!(!stopper.update(2, 0.6));
        assert!(stopper.update(3, 0.55)); // stops after the third epoch
        assert_eq!(stopper.best_epoch(), 2);
        assert_eq!(stopper.best_score(), 0.6);
    }

    #[test]
    fn equal_scores_do_not_count_as_improvement() {
        let mut stopper = EarlyStopper::new(2);
        assert!(!stopper.update(1, 0.7));
        assert!(!stopper.update(2, 0.7));
        assert!(stopper.update(3, 0.7));
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn batch_gradients_sum_so_a_duplicate_doubles_the_step() {
        let (model_a, bags) = tiny_model(ModelKind::Pcnn, 19);
        let mut cfg = TrainConfig {
            model: model_a.config.clone(),
            lr: 0.1,
            batch_size: 2,
            max_epochs: 1,
            patience: 1,
        };
        cfg.model.dropout = 0.0;

        let mut a = model_a;
        let mut b = tiny_model(ModelKind::Pcnn, 19).0;
        a.config.dropout = 0.0;
        b.config.dropout = 0.0;

        let e = TrainExample { bag: 0, label: 1 };
        let mut twice = [e, e];
        let mut once = [e];
        train_epoch(&mut a, &bags, &mut twice, &cfg, &mut Rng::new(3)).unwrap();
        // doubling a gradient is exact, so one step at twice the rate matches
        cfg.batch_size = 1;
        cfg.lr = 0.2;
        train_epoch(&mut b, &bags, &mut once, &cfg, &mut Rng::new(3)).unwrap();

        for (id, p) in a.params.iter() {
            assert_eq!(
                p.value.data(),
                b.params.value(id).data(),
                "{}: summed duplicate gradient must equal one double-rate step",
                p.name
            );
        }
    }

    #[test]
    fn training_reduces_loss_on_a_tiny_corpus() {
        let (mut model, bags) = tiny_model(ModelKind::Pcnn, 23);
        model.config.dropout = 0.0;
        let cfg = TrainConfig {
            model: model.config.clone(),
            lr: 0.1,
            batch_size: 3,
            max_epochs: 1,
            patience: 1,
        };
        let mut examples = expand_examples(&bags);
        let mut rng = Rng::new(1);
        let first = train_epoch(&mut model, &bags, &mut examples, &cfg, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..24 {
            last = train_epoch(&mut model, &bags, &mut examples, &cfg, &mut rng).unwrap();
        }
        assert!(
            last < first * 0.5,
            "loss should at least halve: first {first}, last {last}"
        );
    }

    #[test]
    fn fit_restores_the_best_epoch_and_reports_history() {
        let (model, bags) = tiny_model(ModelKind::Pcnn, 29);
        let mut cfg = TrainConfig {
            model: model.config.clone(),
            lr: 0.1,
            batch_size: 3,
            max_epochs: 12,
            patience: 3,
        };
        cfg.model.dropout = 0.0;
        drop(model);
        let vocab = {
            let raw = crate::encoders::test_support::tiny_corpus();
            Vocabulary::from_corpus(&raw, cfg.model.word_dim)
        };
        let schema = {
            let raw = crate::encoders::test_support::tiny_corpus();
            RelationSchema::from_corpus(&raw)
        };
        let result = fit(
            ModelKind::Pcnn,
            &cfg,
            vocab,
            schema,
            &bags,
            &bags,
            77,
            1,
        )
        .unwrap();
        assert!(!result.history.is_empty());
        assert!(result.history.len() <= cfg.max_epochs);
        let reported_best = result
            .history
            .iter()
            .map(|e| e.dev_auc)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.best_auc, reported_best);
        // the restored parameters reproduce the best recorded dev score
        let recomputed = dev_auc(&result.model, &bags, 1).unwrap();
        assert_eq!(recomputed, result.best_auc);
        assert_eq!(
            result.history[result.best_epoch - 1].dev_auc,
            result.best_auc
        );
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let (mut model, _) = tiny_model(ModelKind::Pcnn, 2);
        let cfg = TrainConfig {
            model: model.config.clone(),
            ..TrainConfig::default()
        };
        let mut none: Vec<TrainExample> = Vec::new();
        assert!(matches!(
            train_epoch(&mut model, &[], &mut none, &cfg, &mut Rng::new(0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn default_configuration_matches_published_training_settings() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr, 0.1);
        assert_eq!(cfg.batch_size, 50);
        assert_eq!(cfg.model.dropout, 0.5);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = TrainConfig::default();
        cfg.lr = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bag_accuracy_counts_top_label_hits() {
        let (mut model, bags) = tiny_model(ModelKind::Pcnn, 3);
        zero_all(&mut model.params);
        // uniform probabilities: argmax is NA everywhere, so only the NA bag hits
        let acc = bag_accuracy(&model, &bags).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }
}

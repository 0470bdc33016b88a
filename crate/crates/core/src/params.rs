//! Trainable parameters, their initialization, plain SGD, and the
//! finite-difference gradient checker that keeps every backward pass honest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Uniform { lo: f64, hi: f64 },
    Zeros,
    Pretrained { name: String },
}

impl Init {
    /// Symmetric uniform bound sqrt(6 / (fan_in + fan_out)), the usual
    /// variance-preserving choice for weight matrices.
    pub fn scaled_uniform(fan_in: usize, fan_out: usize) -> Init {
        let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Init::Uniform { lo: -b, hi: b }
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub init: Init,
}

/// Flat, ordered collection of parameters. Order is the registration order,
/// which makes SGD updates and checkpoints deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, shape: Vec<usize>, init: Init, rng: &mut Rng) -> ParamId {
        debug_assert!(
            self.by_name(name).is_none(),
            "duplicate parameter name {name}"
        );
        let value = match &init {
            Init::Uniform { lo, hi } => Tensor::uniform(shape.clone(), *lo, *hi, rng),
            Init::Zeros | Init::Pretrained { .. } => Tensor::zeros(shape.clone()),
        };
        let grad = Tensor::zeros(shape);
        self.entries.push(Parameter {
            name: name.to_string(),
            value,
            grad,
            init,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Weight matrix with the scaled-uniform init.
    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        self.add(
            name,
            vec![rows, cols],
            Init::scaled_uniform(cols, rows),
            rng,
        )
    }

    /// Non-bias vector (attention queries and the like), fan_out of 1.
    pub fn add_vector(&mut self, name: &str, len: usize, rng: &mut Rng) -> ParamId {
        self.add(name, vec![len], Init::scaled_uniform(len, 1), rng)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>, rng: &mut Rng) -> ParamId {
        self.add(name, shape, Init::Zeros, rng)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|p| p.name == name)
            .map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_coords(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.entries {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }

    pub fn accumulate(&mut self, grads: &GradMap) {
        for (id, g) in &grads.0 {
            let dst = self.entries[id.0].grad.data_mut();
            debug_assert_eq!(dst.len(), g.len());
            for (d, s) in dst.iter_mut().zip(g) {
                *d += s;
            }
        }
    }

    /// One plain SGD step: value <- value - lr * grad. Gradients are left
    /// untouched; callers decide when to zero them.
    pub fn sgd_step(&mut self, lr: f64) {
        for p in &mut self.entries {
            let g = p.grad.data().to_vec();
            for (v, gi) in p.value.data_mut().iter_mut().zip(g) {
                *v -= lr * gi;
            }
        }
    }
}

/// Per-parameter gradients collected off a tape, before they are folded into
/// the owning [`ParamSet`].
#[derive(Debug, Clone, Default)]
pub struct GradMap(pub Vec<(ParamId, Vec<f64>)>);

impl GradMap {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.as_slice())
    }
}

/// Compares analytic gradients against central differences.
///
/// `loss_fn` runs a deterministic forward pass and returns the scalar loss
/// together with the analytic parameter gradients. For each checked
/// coordinate the loss is re-evaluated at value +/- eps and the relative
/// error `|analytic - cd| / max(|analytic|, |cd|, 1e-8)` is computed; the
/// maximum over all checked coordinates is returned. `max_coords_per_param`
/// bounds the work on large tensors by checking a random subset.
pub fn grad_check<F>(
    params: &ParamSet,
    loss_fn: F,
    eps: f64,
    max_coords_per_param: Option<usize>,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<(f64, GradMap)>,
{
    if eps <= 0.0 {
        return Err(Error::domain("grad_check", "eps must be positive"));
    }
    let (_, analytic) = loss_fn(params)?;
    let mut probe = params.clone();
    let mut pick_rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for id in params.ids() {
        let n = params.value(id).len();
        let coords: Vec<usize> = match max_coords_per_param {
            Some(k) if k < n => pick_rng.sample_indices(n, k),
            _ => (0..n).collect(),
        };
        let grads = analytic.get(id);
        for c in coords {
            let a = grads.map_or(0.0, |g| g[c]);
            let orig = probe.value(id).data()[c];
            probe.value_mut(id).data_mut()[c] = orig + eps;
            let (plus, _) = loss_fn(&probe)?;
            probe.value_mut(id).data_mut()[c] = orig - eps;
            let (minus, _) = loss_fn(&probe)?;
            probe.value_mut(id).data_mut()[c] = orig;
            let cd = (plus - minus) / (2.0 * eps);
            let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_step_example() {
        let mut rng = Rng::new(0);
        let mut ps = ParamSet::new();
        let w = ps.add_zeros("w", vec![1], &mut rng);
        ps.value_mut(w).data_mut()[0] = 1.0;
        ps.get_mut(w).grad.data_mut()[0] = 0.5;
        ps.sgd_step(0.1);
        assert!((ps.value(w).data()[0] - 0.95).abs() < 1e-15);
        // grads must survive the step untouched
        assert_eq!(ps.grad(w).data(), &[0.5]);
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut rng = Rng::new(0);
        let mut ps = ParamSet::new();
        let w = ps.add_matrix("w", 3, 3, &mut rng);
        let before = ps.value(w).data().to_vec();
        ps.sgd_step(0.1);
        assert_eq!(ps.value(w).data(), before.as_slice());
    }

    #[test]
    fn sgd_two_steps_on_square_loss() {
        // f(w) = w^2, grad = 2w, lr = 0.1: 1.0 -> 0.8 -> 0.64
        let mut rng = Rng::new(0);
        let mut ps = ParamSet::new();
        let w = ps.add_zeros("w", vec![1], &mut rng);
        ps.value_mut(w).data_mut()[0] = 1.0;
        for _ in 0..2 {
            ps.zero_grads();
            let v = ps.value(w).data()[0];
            ps.get_mut(w).grad.data_mut()[0] = 2.0 * v;
            ps.sgd_step(0.1);
        }
        assert!((ps.value(w).data()[0] - 0.64).abs() < 1e-15);
    }

    #[test]
    fn grad_check_accepts_correct_quadratic_gradient() {
        let mut rng = Rng::new(4);
        let mut ps = ParamSet::new();
        let w = ps.add_matrix("w", 2, 3, &mut rng);
        // loss = sum w_i^2, analytic grad 2w
        let f = |p: &ParamSet| {
            let v = p.value(ParamId(0));
            let loss: f64 = v.data().iter().map(|x| x * x).sum();
            Ok((loss, GradMap(vec![(ParamId(0), v.data().iter().map(|x| 2.0 * x).collect())])))
        };
        let worst = grad_check(&ps, f, 1e-5, None, 1).unwrap();
        assert!(worst < 1e-8, "worst {worst}");
        let _ = w;
    }

    #[test]
    fn grad_check_flags_wrong_gradient() {
        let mut rng = Rng::new(4);
        let mut ps = ParamSet::new();
        ps.add_matrix("w", 1, 4, &mut rng);
        let f = |p: &ParamSet| {
            let v = p.value(ParamId(0));
            let loss: f64 = v.data().iter().map(|x| x * x).sum();
            // deliberately wrong: missing factor of two
            Ok((loss, GradMap(vec![(ParamId(0), v.data().to_vec())])))
        };
        let worst = grad_check(&ps, f, 1e-5, None, 1).unwrap();
        assert!(worst > 0.4, "worst {worst}");
    }

    #[test]
    fn scaled_uniform_bound_matches_formula() {
        match Init::scaled_uniform(180, 20) {
            Init::Uniform { lo, hi } => {
                let b = (6.0f64 / 200.0).sqrt();
                assert!((hi - b).abs() < 1e-15 && (lo + b).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn descent_shrinks_quadratic_for_small_lr() {
        let mut check_rng = Rng::new(99);
        for _ in 0..50 {
            let mut ps = ParamSet::new();
            let lr = check_rng.uniform(0.01, 0.9);
            let mut rng = Rng::new(check_rng.below(1000) as u64);
            let w = ps.add_matrix("w", 2, 2, &mut rng);
            let norm_before: f64 = ps.value(w).data().iter().map(|x| x * x).sum();
            ps.zero_grads();
            let g: Vec<f64> = ps.value(w).data().iter().map(|x| 2.0 * x).collect();
            ps.get_mut(w).grad.data_mut().copy_from_slice(&g);
            ps.sgd_step(lr);
            let norm_after: f64 = ps.value(w).data().iter().map(|x| x * x).sum();
            assert!(
                norm_after <= norm_before + 1e-12,
                "lr {lr}: {norm_before} -> {norm_after}"
            );
        }
    }
}

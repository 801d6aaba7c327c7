//! Negative-ELBO objective, Adam, and the minibatch training loops.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::mean_bce;
use crate::ndcore::{softplus_scalar, Matrix, Tape};
use crate::network::{record_logits, BnnModel, DeterministicModel};
use crate::rng::{stream, Stream};
use crate::variational::{kl_mc_term, record_kl, record_reparam, sample_weights, Noise};

/// How the KL term is spread across the minibatches of one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlWeighting {
    /// `1/M` for each of `M` minibatches.
    #[default]
    Uniform,
    /// `2^(M-i) / (2^M - 1)` for minibatch `i = 1..M`.
    Geometric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Posterior samples averaged per optimization step.
    pub mc_samples: usize,
    pub kl_weighting: KlWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 50,
            batch_size: 256,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            mc_samples: 1,
            kl_weighting: KlWeighting::Uniform,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.mc_samples == 0 {
            return Err(invalid("epochs, batch_size and mc_samples must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return Err(invalid("learning_rate and epsilon must be positive"));
        }
        for b in [self.beta1, self.beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("Adam beta {b} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Per-minibatch KL weights for an epoch of `batches` minibatches. They sum to one.
pub fn kl_weights(batches: usize, scheme: KlWeighting) -> Vec<f64> {
    match scheme {
        KlWeighting::Uniform => vec![1.0 / batches as f64; batches],
        KlWeighting::Geometric => {
            // 2^(M-i)/(2^M-1) = 2^-i / (1 - 2^-M), which never overflows.
            let norm = 1.0 - 0.5f64.powi(batches as i32);
            (1..=batches)
                .map(|i| (0.5f64.powi(i as i32) / norm).max(f64::MIN_POSITIVE))
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    /// `nll + kl_weight * kl`
    pub total: f64,
    /// Summed binary cross-entropy over the batch.
    pub nll: f64,
    /// Single-sample `ln q(w) − ln p(w)`.
    pub kl: f64,
}

fn targets(labels: &[u8]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&y| match y {
            0 => Ok(0.0),
            1 => Ok(1.0),
            other => Err(Error::NonBinaryLabel(other as f64)),
        })
        .collect()
}

fn check_kl_weight(kl_weight: f64) -> Result<()> {
    if !(kl_weight > 0.0 && kl_weight <= 1.0) {
        return Err(invalid(format!("kl_weight {kl_weight} outside (0, 1]")));
    }
    Ok(())
}

/// Negative ELBO of one minibatch under the weights drawn with `noise`.
pub fn elbo_loss(model: &BnnModel, x: &Matrix, labels: &[u8], noise: &Noise, kl_weight: f64) -> Result<ElboTerms> {
    check_kl_weight(kl_weight)?;
    let y = targets(labels)?;
    let sample = sample_weights(&model.params, noise.clone())?;
    let logits = model.forward_logits(&sample, x)?;
    if logits.len() != y.len() {
        return Err(invalid("label count does not match batch size"));
    }
    let nll: f64 = logits.iter().zip(&y).map(|(&z, &t)| softplus_scalar(z) - t * z).sum();
    let kl = kl_mc_term(&sample, &model.params, &model.prior)?;
    Ok(ElboTerms {
        total: nll + kl_weight * kl,
        nll,
        kl,
    })
}

/// Negative ELBO averaged over the given posterior draws, with its gradient
/// in the order of [`crate::variational::VariationalParams::tensors`].
pub fn elbo_gradient(
    model: &BnnModel,
    x: &Matrix,
    labels: &[u8],
    noises: &[Noise],
    kl_weight: f64,
) -> Result<(ElboTerms, Vec<Matrix>)> {
    check_kl_weight(kl_weight)?;
    if noises.is_empty() {
        return Err(invalid("at least one posterior draw is required"));
    }
    let y = targets(labels)?;
    if x.rows() != y.len() {
        return Err(invalid("label count does not match batch size"));
    }
    if model.spec.layer_shapes() != model.params.shapes() || x.cols() != model.spec.input_dim {
        return Err(invalid("batch or parameters do not match the network spec"));
    }
    let scale = 1.0 / noises.len() as f64;
    let mut grads: Option<Vec<Matrix>> = None;
    let mut terms = ElboTerms {
        total: 0.0,
        nll: 0.0,
        kl: 0.0,
    };
    for noise in noises {
        if noise.layers.len() != model.params.layers().len() {
            return Err(invalid("noise depth does not match the network"));
        }
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let mut leaves = Vec::new();
        let mut weights = Vec::new();
        let mut kl_nodes = Vec::new();
        for (layer, eps) in model.params.layers().iter().zip(&noise.layers) {
            let wm = tape.leaf(layer.weight_mu.clone());
            let wr = tape.leaf(layer.weight_rho.clone());
            let bm = tape.leaf(layer.bias_mu.clone());
            let br = tape.leaf(layer.bias_rho.clone());
            let (w, ws) = record_reparam(&mut tape, wm, wr, &eps.weight)?;
            let (b, bs) = record_reparam(&mut tape, bm, br, &eps.bias)?;
            kl_nodes.push(record_kl(&mut tape, w, wm, ws, &model.prior)?);
            kl_nodes.push(record_kl(&mut tape, b, bm, bs, &model.prior)?);
            leaves.extend([wm, wr, bm, br]);
            weights.push((w, b));
        }
        let logits = record_logits(&mut tape, &weights, input)?;
        let nll = tape.bce_with_logits_sum(logits, &y)?;
        let mut kl = kl_nodes[0];
        for &k in &kl_nodes[1..] {
            kl = tape.add(kl, k)?;
        }
        let weighted = tape.scale(kl, kl_weight)?;
        let total = tape.add(nll, weighted)?;

        let g = tape.gradient(total, &leaves)?;
        let item = |v| tape.value(v).map(|m: &Matrix| m.as_slice()[0]);
        terms.total += scale * item(total)?;
        terms.nll += scale * item(nll)?;
        terms.kl += scale * item(kl)?;
        match &mut grads {
            None => grads = Some(g.into_iter().map(|m| m.map(|v| v * scale)).collect()),
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(g) {
                    a.add_assign(&gi.map(|v| v * scale));
                }
            }
        }
    }
    Ok((terms, grads.expect("at least one draw")))
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(tensors: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = tensors.into_iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts without
/// touching the parameters.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || grads.len() != state.m.len() {
        return Err(invalid("parameter, gradient and optimizer state counts differ"));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        p.check_same_shape(g, "adam_step")?;
        if !g.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient in parameter tensor {k} at optimizer step {}",
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let ps = p.as_mut_slice();
        for (((pi, &gi), mi), vi) in ps
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Per-epoch training curves. `elbo`, `nll` and `kl` are summed over the
/// epoch's minibatches, so `elbo[e] = nll[e] + kl[e]` estimates the negative
/// ELBO of the full training set (with `kl` already weighted).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub elbo: Vec<f64>,
    pub nll: Vec<f64>,
    pub kl: Vec<f64>,
    pub validation_bce: Vec<f64>,
    /// Validation BCE before the first update.
    pub initial_validation_bce: Option<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.elbo.len()
    }
}

fn check_dataset(dataset: &Dataset, input_dim: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    if dataset.has_missing() {
        return Err(invalid("dataset has missing values; preprocess it first"));
    }
    if dataset.n_features() != input_dim {
        return Err(Error::Shape {
            op: "train",
            left: dataset.features.shape(),
            right: (dataset.len(), input_dim),
        });
    }
    Ok(())
}

fn batches(n: usize, batch_size: usize, order: &[usize]) -> impl Iterator<Item = &[usize]> {
    debug_assert_eq!(n, order.len());
    order.chunks(batch_size)
}

/// Bayes-by-backprop training. Validation BCE is measured on the
/// posterior-mean network. Deterministic for a fixed `config.seed`.
pub fn train(
    dataset: &Dataset,
    mut model: BnnModel,
    config: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<(BnnModel, TrainHistory)> {
    config.validate()?;
    check_dataset(dataset, model.spec.input_dim)?;
    if let Some(v) = validation {
        check_dataset(v, model.spec.input_dim)?;
    }
    let adam = config.adam();
    let mut rng = stream(config.seed, Stream::Training);
    let mut state = AdamState::new(model.params.tensors());
    let mut history = TrainHistory::default();
    let validate = |m: &BnnModel| -> Result<Option<f64>> {
        validation
            .map(|v| mean_bce(&m.mean_network().forward_det(&v.features)?, &v.labels))
            .transpose()
    };
    history.initial_validation_bce = validate(&model)?;

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let m_batches = n.div_ceil(config.batch_size);
    let weights = kl_weights(m_batches, config.kl_weighting);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut elbo, mut nll, mut kl) = (0.0, 0.0, 0.0);
        for (b, idx) in batches(n, config.batch_size, &order).enumerate() {
            let x = dataset.features.select_rows(idx);
            let y: Vec<u8> = idx.iter().map(|&i| dataset.labels[i]).collect();
            let noises: Vec<Noise> = (0..config.mc_samples)
                .map(|_| Noise::draw(&model.params, &mut rng))
                .collect();
            let (terms, grads) = elbo_gradient(&model, &x, &y, &noises, weights[b])?;
            if !terms.total.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            adam_step(&mut model.params.tensors_mut(), &grads, &mut state, &adam)?;
            elbo += terms.total;
            nll += terms.nll;
            kl += weights[b] * terms.kl;
        }
        history.elbo.push(elbo);
        history.nll.push(nll);
        history.kl.push(kl);
        if let Some(v) = validate(&model)? {
            history.validation_bce.push(v);
        }
        log::debug!("epoch {epoch}: -elbo {elbo:.4} nll {nll:.4} kl {kl:.4}");
    }
    model.meta.seed = config.seed;
    model.meta.epochs += config.epochs;
    Ok((model, history))
}

/// Same loop for the point-estimate network: no weight sampling, no KL.
pub fn train_deterministic(
    dataset: &Dataset,
    mut model: DeterministicModel,
    config: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<(DeterministicModel, TrainHistory)> {
    config.validate()?;
    check_dataset(dataset, model.spec.input_dim)?;
    if let Some(v) = validation {
        check_dataset(v, model.spec.input_dim)?;
    }
    let adam = config.adam();
    let mut rng = stream(config.seed, Stream::Training);
    let mut state = AdamState::new(model.layers.iter().flat_map(|l| [&l.weight, &l.bias]));
    let mut history = TrainHistory::default();
    let validate = |m: &DeterministicModel| -> Result<Option<f64>> {
        validation
            .map(|v| mean_bce(&m.forward_det(&v.features)?, &v.labels))
            .transpose()
    };
    history.initial_validation_bce = validate(&model)?;

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut nll_epoch = 0.0;
        for (b, idx) in batches(n, config.batch_size, &order).enumerate() {
            let x = dataset.features.select_rows(idx);
            let y = targets(&idx.iter().map(|&i| dataset.labels[i]).collect::<Vec<_>>())?;
            let mut tape = Tape::new();
            let input = tape.constant(x);
            let mut leaves = Vec::new();
            let mut layers = Vec::new();
            for l in &model.layers {
                let w = tape.leaf(l.weight.clone());
                let bias = tape.leaf(l.bias.clone());
                leaves.extend([w, bias]);
                layers.push((w, bias));
            }
            let logits = record_logits(&mut tape, &layers, input)?;
            let nll = tape.bce_with_logits_sum(logits, &y)?;
            let value = tape.value(nll)?.as_slice()[0];
            if !value.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            let grads = tape.gradient(nll, &leaves)?;
            adam_step(&mut model.tensors_mut(), &grads, &mut state, &adam)?;
            nll_epoch += value;
        }
        history.elbo.push(nll_epoch);
        history.nll.push(nll_epoch);
        history.kl.push(0.0);
        if let Some(v) = validate(&model)? {
            history.validation_bce.push(v);
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;
    use crate::variational::MixturePrior;
    use std::f64::consts::LN_2;

    #[test]
    fn adam_fixed_point_at_zero_gradient() {
        let mut p = Matrix::from_fn(2, 2, |r, c| (r + c) as f64);
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        adam_step(
            &mut [&mut p],
            &[Matrix::zeros(2, 2)],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Matrix::scalar(0.5);
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[Matrix::scalar(1.0)], &mut state, &cfg).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = α / (1 + ε)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p.as_slice()[0] - expected).abs() < 1e-15);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn adam_is_deterministic_per_parameter_set() {
        let g = Matrix::from_fn(3, 1, |r, _| r as f64 - 1.3);
        let mut a = Matrix::filled(3, 1, 0.2);
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new([&a]), AdamState::new([&b]));
        for _ in 0..5 {
            adam_step(&mut [&mut a], std::slice::from_ref(&g), &mut sa, &AdamConfig::default()).unwrap();
            adam_step(&mut [&mut b], std::slice::from_ref(&g), &mut sb, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = Matrix::scalar(1.0);
        let mut state = AdamState::new([&p]);
        let err = adam_step(
            &mut [&mut p],
            &[Matrix::from_vec_unchecked(1, 1, vec![f64::NAN])],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Training(_)));
        assert_eq!(p.as_slice()[0], 1.0);
    }

    #[test]
    fn kl_weights_sum_to_one() {
        for m in [1, 2, 7, 157, 2000] {
            for scheme in [KlWeighting::Uniform, KlWeighting::Geometric] {
                let w = kl_weights(m, scheme);
                assert_eq!(w.len(), m);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{scheme:?} {m}");
                assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }
    }

    fn zero_model() -> BnnModel {
        let mut m = BnnModel::init(NetworkSpec::new(2, vec![3]).unwrap(), MixturePrior::default(), 0).unwrap();
        for t in m.params.tensors_mut() {
            for v in t.as_mut_slice() {
                *v = 0.0;
            }
        }
        m
    }

    #[test]
    fn single_item_loss() {
        let model = zero_model();
        let noise = Noise::zeros(&model.params);
        let sample = sample_weights(&model.params, noise.clone()).unwrap();
        let k = kl_mc_term(&sample, &model.params, &model.prior).unwrap();
        let x = Matrix::new(1, 2, vec![0.3, -1.0]).unwrap();
        let t = elbo_loss(&model, &x, &[1], &noise, 0.25).unwrap();
        assert!((t.nll - LN_2).abs() < 1e-12);
        assert!((t.total - (LN_2 + 0.25 * k)).abs() < 1e-12);
        let tiny = elbo_loss(&model, &x, &[1], &noise, 1e-300).unwrap();
        assert!((tiny.total - tiny.nll).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_bad_inputs() {
        let model = zero_model();
        let noise = Noise::zeros(&model.params);
        let x = Matrix::zeros(1, 2);
        assert!(matches!(
            elbo_loss(&model, &x, &[2], &noise, 0.5),
            Err(Error::NonBinaryLabel(_))
        ));
        assert!(elbo_loss(&model, &x, &[1], &noise, 0.0).is_err());
        assert!(elbo_loss(&model, &x, &[1], &noise, 1.5).is_err());
    }

    #[test]
    fn loss_is_finite_for_extreme_logits() {
        let mut model = zero_model();
        for t in model.params.tensors_mut() {
            for v in t.as_mut_slice() {
                *v = 40.0;
            }
        }
        let noise = Noise::zeros(&model.params);
        let x = Matrix::filled(2, 2, 50.0);
        let t = elbo_loss(&model, &x, &[0, 1], &noise, 1.0).unwrap();
        assert!(t.total.is_finite());
    }

    #[test]
    fn gradient_path_agrees_with_value_path() {
        let model = BnnModel::init(NetworkSpec::new(3, vec![4, 2]).unwrap(), MixturePrior::default(), 8).unwrap();
        let mut rng = stream(4, Stream::Training);
        let noise = Noise::draw(&model.params, &mut rng);
        let x = Matrix::from_fn(5, 3, |r, c| ((r * 7 + c) as f64).sin());
        let y = [0, 1, 1, 0, 1];
        let direct = elbo_loss(&model, &x, &y, &noise, 0.3).unwrap();
        let (taped, _) = elbo_gradient(&model, &x, &y, &[noise], 0.3).unwrap();
        assert!((direct.total - taped.total).abs() < 1e-9 * direct.total.abs().max(1.0));
        assert!((direct.nll - taped.nll).abs() < 1e-12);
    }
}

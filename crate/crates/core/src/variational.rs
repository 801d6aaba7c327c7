//! Mean-field Gaussian posterior over network parameters, the scale-mixture
//! prior, reparameterized sampling and the single-sample KL estimate.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ndcore::{sigmoid_scalar, softplus_scalar, Matrix, Tape, Var};
use crate::network::LayerWeights;
use crate::rng::Rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Range of the initial posterior means.
pub const INIT_MU: (f64, f64) = (-0.2, 0.2);
/// Range of the initial posterior scale parameters (σ = softplus(ρ)).
pub const INIT_RHO: (f64, f64) = (-5.0, -4.0);

/// `ln N(w | mu, sigma²)`.
pub fn log_gaussian(w: f64, mu: f64, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 || sigma.is_infinite() {
        return Err(invalid(format!("gaussian scale must be positive, got {sigma}")));
    }
    Ok(log_gaussian_unchecked(w, mu, sigma))
}

#[inline]
fn log_gaussian_unchecked(w: f64, mu: f64, sigma: f64) -> f64 {
    let z = (w - mu) / sigma;
    -HALF_LN_2PI - sigma.ln() - 0.5 * z * z
}

/// Two-component zero-mean Gaussian scale mixture,
/// `π N(0, σ₁²) + (1 − π) N(0, σ₂²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct MixturePrior {
    pi: f64,
    sigma1: f64,
    sigma2: f64,
}

#[derive(Deserialize)]
struct RawPrior {
    pi: f64,
    sigma1: f64,
    sigma2: f64,
}

impl TryFrom<RawPrior> for MixturePrior {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        MixturePrior::new(raw.pi, raw.sigma1, raw.sigma2)
    }
}

impl Default for MixturePrior {
    fn default() -> Self {
        Self {
            pi: 0.5,
            sigma1: 1.0,
            sigma2: (-6.0f64).exp(),
        }
    }
}

impl MixturePrior {
    pub fn new(pi: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(invalid(format!("mixture weight {pi} outside [0, 1]")));
        }
        if !(sigma2 > 0.0 && sigma1 >= sigma2 && sigma1.is_finite()) {
            return Err(invalid(format!(
                "mixture scales must satisfy sigma1 >= sigma2 > 0 (got {sigma1}, {sigma2})"
            )));
        }
        Ok(Self { pi, sigma1, sigma2 })
    }

    /// A single zero-mean Gaussian.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(1.0, sigma, sigma)
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    fn component_logs(&self, w: f64) -> (f64, f64) {
        let a = if self.pi > 0.0 {
            self.pi.ln() + log_gaussian_unchecked(w, 0.0, self.sigma1)
        } else {
            f64::NEG_INFINITY
        };
        let b = if self.pi < 1.0 {
            (1.0 - self.pi).ln() + log_gaussian_unchecked(w, 0.0, self.sigma2)
        } else {
            f64::NEG_INFINITY
        };
        (a, b)
    }

    /// Log density, evaluated with log-sum-exp.
    pub fn log_density(&self, w: f64) -> f64 {
        let (a, b) = self.component_logs(w);
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    /// Log density and its derivative in `w`.
    pub fn log_density_and_grad(&self, w: f64) -> (f64, f64) {
        let (a, b) = self.component_logs(w);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        let total = ea + eb;
        let (ra, rb) = (ea / total, eb / total);
        let grad = -w * (ra / (self.sigma1 * self.sigma1) + rb / (self.sigma2 * self.sigma2));
        (m + total.ln(), grad)
    }
}

/// `ln p(w)` under the scale-mixture prior.
pub fn log_prior(w: f64, prior: &MixturePrior) -> f64 {
    prior.log_density(w)
}

/// Posterior parameters of one dense layer; weights are `in x out`, biases `1 x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalLayer {
    pub weight_mu: Matrix,
    pub weight_rho: Matrix,
    pub bias_mu: Matrix,
    pub bias_rho: Matrix,
}

impl VariationalLayer {
    pub fn weight_sigma(&self) -> Matrix {
        self.weight_rho.map(softplus_scalar)
    }

    pub fn bias_sigma(&self) -> Matrix {
        self.bias_rho.map(softplus_scalar)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weight_mu.shape()
    }
}

/// `θ = (μ, ρ)` for every layer of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    layers: Vec<VariationalLayer>,
}

impl VariationalParams {
    /// Builds parameters from explicit layers, checking that consecutive
    /// layers chain and that each μ/ρ pair agrees in shape.
    pub fn from_layers(layers: Vec<VariationalLayer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            let (_, out) = l.weight_mu.shape();
            if l.weight_rho.shape() != l.weight_mu.shape()
                || l.bias_mu.shape() != (1, out)
                || l.bias_rho.shape() != (1, out)
            {
                return Err(invalid(format!("layer {i}: inconsistent parameter shapes")));
            }
            if i > 0 && layers[i - 1].weight_mu.cols() != l.weight_mu.rows() {
                return Err(invalid(format!("layer {i} does not chain with layer {}", i - 1)));
            }
        }
        Ok(Self { layers })
    }

    /// μ ~ U(-0.2, 0.2), ρ ~ U(-5, -4) for every weight and bias.
    pub fn init(shapes: &[(usize, usize)], rng: &mut Rng) -> Self {
        let mu = Uniform::new(INIT_MU.0, INIT_MU.1).expect("valid range");
        let rho = Uniform::new(INIT_RHO.0, INIT_RHO.1).expect("valid range");
        let mut draw = |r: usize, c: usize, d: &Uniform<f64>| Matrix::from_fn(r, c, |_, _| d.sample(rng));
        let layers = shapes
            .iter()
            .map(|&(i, o)| VariationalLayer {
                weight_mu: draw(i, o, &mu),
                weight_rho: draw(i, o, &rho),
                bias_mu: draw(1, o, &mu),
                bias_rho: draw(1, o, &rho),
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[VariationalLayer] {
        &self.layers
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(VariationalLayer::shape).collect()
    }

    /// Number of network parameters (each has one μ and one ρ).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight_mu.len() + l.bias_mu.len()).sum()
    }

    /// All tensors in the fixed order `[w_mu, w_rho, b_mu, b_rho]` per layer.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight_mu, &l.weight_rho, &l.bias_mu, &l.bias_rho])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight_mu, &mut l.weight_rho, &mut l.bias_mu, &mut l.bias_rho])
            .collect()
    }

    /// The posterior-mean network.
    pub fn means(&self) -> Vec<LayerWeights> {
        self.layers
            .iter()
            .map(|l| LayerWeights {
                weight: l.weight_mu.clone(),
                bias: l.bias_mu.clone(),
            })
            .collect()
    }
}

/// Standard-normal draws, one per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub layers: Vec<LayerNoise>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNoise {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Noise {
    pub fn draw(params: &VariationalParams, rng: &mut Rng) -> Self {
        let mut normal = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerNoise {
                    weight: normal(l.weight_mu.rows(), l.weight_mu.cols()),
                    bias: normal(1, l.bias_mu.cols()),
                })
                .collect(),
        }
    }

    pub fn zeros(params: &VariationalParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerNoise {
                    weight: Matrix::zeros(l.weight_mu.rows(), l.weight_mu.cols()),
                    bias: Matrix::zeros(1, l.bias_mu.cols()),
                })
                .collect(),
        }
    }

    fn check_against(&self, params: &VariationalParams) -> Result<()> {
        if self.layers.len() != params.layers.len() {
            return Err(invalid(format!(
                "noise has {} layers, parameters have {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (n, l) in self.layers.iter().zip(&params.layers) {
            n.weight.check_same_shape(&l.weight_mu, "noise/weights")?;
            n.bias.check_same_shape(&l.bias_mu, "noise/bias")?;
        }
        Ok(())
    }
}

/// Concrete network parameters drawn from the posterior, with the noise
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample {
    pub layers: Vec<LayerWeights>,
    pub noise: Noise,
}

/// `w = μ + softplus(ρ) · ε` for every weight and bias.
pub fn sample_weights(params: &VariationalParams, noise: Noise) -> Result<WeightSample> {
    noise.check_against(params)?;
    let reparam = |mu: &Matrix, rho: &Matrix, eps: &Matrix| {
        let mut out = mu.clone();
        for ((o, r), e) in out.as_mut_slice().iter_mut().zip(rho.as_slice()).zip(eps.as_slice()) {
            *o += softplus_scalar(*r) * e;
        }
        out
    };
    let layers = params
        .layers
        .iter()
        .zip(&noise.layers)
        .map(|(l, n)| LayerWeights {
            weight: reparam(&l.weight_mu, &l.weight_rho, &n.weight),
            bias: reparam(&l.bias_mu, &l.bias_rho, &n.bias),
        })
        .collect();
    Ok(WeightSample { layers, noise })
}

/// `Σ [ln q(w | μ, σ) − ln p(w)]` over every sampled parameter: a
/// single-sample Monte-Carlo estimate of `KL(q || p)`.
pub fn kl_mc_term(sample: &WeightSample, params: &VariationalParams, prior: &MixturePrior) -> Result<f64> {
    if sample.layers.len() != params.layers.len() {
        return Err(invalid("sample and parameters have different depth"));
    }
    let mut total = 0.0;
    for (w, l) in sample.layers.iter().zip(&params.layers) {
        w.weight.check_same_shape(&l.weight_mu, "kl_mc_term")?;
        w.bias.check_same_shape(&l.bias_mu, "kl_mc_term")?;
        total += kl_sum(&w.weight, &l.weight_mu, &l.weight_rho, prior);
        total += kl_sum(&w.bias, &l.bias_mu, &l.bias_rho, prior);
    }
    Ok(total)
}

fn kl_sum(w: &Matrix, mu: &Matrix, rho: &Matrix, prior: &MixturePrior) -> f64 {
    w.as_slice()
        .iter()
        .zip(mu.as_slice())
        .zip(rho.as_slice())
        .map(|((&w, &m), &r)| log_gaussian_unchecked(w, m, softplus_scalar(r)) - prior.log_density(w))
        .sum()
}

/// Differentiable handles for one layer's posterior parameters on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight_mu: Var,
    pub weight_rho: Var,
    pub bias_mu: Var,
    pub bias_rho: Var,
}

/// Records `w = μ + softplus(ρ) ⊙ ε` and returns `(w, σ)`.
pub fn record_reparam(tape: &mut Tape, mu: Var, rho: Var, eps: &Matrix) -> Result<(Var, Var)> {
    let sigma = tape.softplus(rho)?;
    let eps = tape.constant(eps.clone());
    let scaled = tape.mul(sigma, eps)?;
    let w = tape.add(mu, scaled)?;
    Ok((w, sigma))
}

/// Records the summed `ln q(w | μ, σ) − ln p(w)` as one scalar node.
pub fn record_kl(tape: &mut Tape, w: Var, mu: Var, sigma: Var, prior: &MixturePrior) -> Result<Var> {
    let (wv, mv, sv) = (tape.value(w)?, tape.value(mu)?, tape.value(sigma)?);
    wv.check_same_shape(mv, "record_kl")?;
    wv.check_same_shape(sv, "record_kl")?;
    let (rows, cols) = wv.shape();
    let n = wv.len();
    let (mut dw, mut dmu, mut dsigma) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut total = 0.0;
    for ((&w, &m), &s) in wv.as_slice().iter().zip(mv.as_slice()).zip(sv.as_slice()) {
        let (lp, dlp) = prior.log_density_and_grad(w);
        let diff = w - m;
        let inv_var = 1.0 / (s * s);
        total += log_gaussian_unchecked(w, m, s) - lp;
        dw.push(-diff * inv_var - dlp);
        dmu.push(diff * inv_var);
        dsigma.push(-1.0 / s + diff * diff * inv_var / s);
    }
    let mk = |v| Matrix::new(rows, cols, v);
    tape.reduce(total, vec![(w, mk(dw)?), (mu, mk(dmu)?), (sigma, mk(dsigma)?)])
}

/// `∂w/∂ρ = ε · sigmoid(ρ)` for the reparameterization.
pub fn reparam_rho_derivative(rho: f64, eps: f64) -> f64 {
    eps * sigmoid_scalar(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::f64::consts::{LN_2, PI};

    fn one_weight(mu: f64, rho: f64) -> VariationalParams {
        VariationalParams::from_layers(vec![VariationalLayer {
            weight_mu: Matrix::scalar(mu),
            weight_rho: Matrix::scalar(rho),
            bias_mu: Matrix::scalar(0.0),
            bias_rho: Matrix::scalar(0.0),
        }])
        .unwrap()
    }

    fn noise(w: f64, b: f64) -> Noise {
        Noise {
            layers: vec![LayerNoise {
                weight: Matrix::scalar(w),
                bias: Matrix::scalar(b),
            }],
        }
    }

    #[test]
    fn zero_noise_returns_means() {
        let mut rng = stream(3, Stream::Init);
        let p = VariationalParams::init(&[(4, 3), (3, 1)], &mut rng);
        let s = sample_weights(&p, Noise::zeros(&p)).unwrap();
        assert_eq!(s.layers, p.means());
    }

    #[test]
    fn reparameterized_scalar() {
        let s = sample_weights(&one_weight(0.1, 0.0), noise(1.0, 0.0)).unwrap();
        assert!((s.layers[0].weight.as_slice()[0] - 0.793_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn noise_shape_mismatch_is_rejected() {
        let p = one_weight(0.0, 0.0);
        let bad = Noise {
            layers: vec![LayerNoise {
                weight: Matrix::zeros(2, 1),
                bias: Matrix::scalar(0.0),
            }],
        };
        assert!(sample_weights(&p, bad).is_err());
    }

    #[test]
    fn sample_mean_concentrates() {
        let p = one_weight(0.0, 0.0);
        let mut rng = stream(11, Stream::Training);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                sample_weights(&p, Noise::draw(&p, &mut rng)).unwrap().layers[0]
                    .weight
                    .as_slice()[0]
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * LN_2 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn log_gaussian_values() {
        assert!((log_gaussian(0.3, 0.3, 1.0).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((log_gaussian(1.0, 0.0, 1.0).unwrap() + 1.418_938_533_204_672_7).abs() < 1e-12);
        let expected = -0.5 * (2.0 * PI * 4.0).ln();
        assert!((log_gaussian(0.0, 0.0, 2.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected + 1.612_085_713_764_618).abs() < 1e-12);
        assert!(log_gaussian(0.0, 0.0, 0.0).is_err());
        assert!(log_gaussian(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn prior_values() {
        let w = 0.37;
        let single = MixturePrior::new(1.0, 1.3, 0.2).unwrap();
        assert!((log_prior(w, &single) - log_gaussian(w, 0.0, 1.3).unwrap()).abs() < 1e-12);

        let mix = MixturePrior::new(0.5, 1.0, 0.5).unwrap();
        let direct = (0.5 * (1.0 / (2.0 * PI).sqrt()) + 0.5 * (1.0 / (0.5 * (2.0 * PI).sqrt()))).ln();
        assert!((log_prior(0.0, &mix) - direct).abs() < 1e-12);
        assert!((direct + 0.513_473_4).abs() < 1e-7);
        assert_eq!(log_prior(0.8, &mix), log_prior(-0.8, &mix));
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(MixturePrior::new(1.5, 1.0, 0.5).is_err());
        assert!(MixturePrior::new(0.5, 0.1, 0.5).is_err());
        assert!(MixturePrior::new(0.5, 1.0, 0.0).is_err());
        let parsed: std::result::Result<MixturePrior, _> =
            serde_json::from_str(r#"{"pi": -0.1, "sigma1": 1.0, "sigma2": 0.5}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn prior_gradient_matches_finite_difference() {
        let p = MixturePrior::default();
        for &w in &[-0.9, -0.05, 0.003, 0.02, 0.4, 1.7] {
            let h = 1e-7;
            let fd = (p.log_density(w + h) - p.log_density(w - h)) / (2.0 * h);
            let (_, g) = p.log_density_and_grad(w);
            assert!((fd - g).abs() / g.abs().max(1.0) < 1e-5, "w={w}: {fd} vs {g}");
        }
    }

    #[test]
    fn prior_is_maximal_at_zero() {
        let p = MixturePrior::default();
        let peak = p.log_density(0.0);
        for k in 1..200 {
            let w = k as f64 * 0.01;
            assert!(p.log_density(w) < peak);
            assert!(p.log_density(w) <= p.log_density(w - 0.01));
        }
    }

    #[test]
    fn kl_term_vanishes_for_matching_densities() {
        let sigma = softplus_scalar(0.0);
        let prior = MixturePrior::gaussian(sigma).unwrap();
        let params = one_weight(0.0, 0.0);
        let s = sample_weights(&params, noise(0.0, 0.0)).unwrap();
        // Bias term contributes ln N(0|0,σ) − ln N(0|0,σ) = 0 as well.
        assert!(kl_mc_term(&s, &params, &prior).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_term_single_weight() {
        let params = VariationalParams::from_layers(vec![VariationalLayer {
            weight_mu: Matrix::scalar(0.0),
            weight_rho: Matrix::scalar(0.0),
            bias_mu: Matrix::zeros(1, 1),
            bias_rho: Matrix::scalar(0.0),
        }])
        .unwrap();
        let prior = MixturePrior::gaussian(1.0).unwrap();
        let s = sample_weights(&params, noise(1.0, 0.0)).unwrap();
        // Direct evaluation: w = ln 2, σ = ln 2.
        let w = LN_2;
        let weight_term = -0.5 * (2.0 * PI).ln() - LN_2.ln() - 0.5 - (-0.5 * (2.0 * PI).ln() - 0.5 * w * w);
        let bias_term = -0.5 * (2.0 * PI).ln() - LN_2.ln() - (-0.5 * (2.0 * PI).ln());
        let got = kl_mc_term(&s, &params, &prior).unwrap();
        assert!((got - (weight_term + bias_term)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn kl_estimate_is_nonnegative_on_average() {
        let mut rng = stream(5, Stream::Training);
        let params = VariationalParams::init(&[(3, 2), (2, 1)], &mut rng);
        let prior = MixturePrior::default();
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let s = sample_weights(&params, Noise::draw(&params, &mut rng)).unwrap();
                kl_mc_term(&s, &params, &prior).unwrap()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(mean > -3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn reparameterization_derivatives() {
        let (mu, rho, eps) = (0.13, -1.2, 0.7);
        let w = |m: f64, r: f64| m + softplus_scalar(r) * eps;
        let h = 1e-6;
        let dmu = (w(mu + h, rho) - w(mu - h, rho)) / (2.0 * h);
        let drho = (w(mu, rho + h) - w(mu, rho - h)) / (2.0 * h);
        assert!((dmu - 1.0).abs() < 1e-10);
        assert!((drho - reparam_rho_derivative(rho, eps)).abs() < 1e-10);

        let mut tape = Tape::new();
        let m = tape.leaf(Matrix::scalar(mu));
        let r = tape.leaf(Matrix::scalar(rho));
        let (wv, _) = record_reparam(&mut tape, m, r, &Matrix::scalar(eps)).unwrap();
        let total = tape.sum(wv).unwrap();
        let g = tape.gradient(total, &[m, r]).unwrap();
        assert!((g[0].as_slice()[0] - 1.0).abs() < 1e-12);
        assert!((g[1].as_slice()[0] - eps * sigmoid_scalar(rho)).abs() < 1e-12);
    }

    #[test]
    fn recorded_kl_matches_value_path() {
        let mut rng = stream(9, Stream::Init);
        let params = VariationalParams::init(&[(3, 2), (2, 1)], &mut rng);
        let n = Noise::draw(&params, &mut rng);
        let prior = MixturePrior::default();
        let s = sample_weights(&params, n.clone()).unwrap();
        let expected = kl_mc_term(&s, &params, &prior).unwrap();

        let mut tape = Tape::new();
        let mut total = None;
        for (l, e) in params.layers().iter().zip(&n.layers) {
            for (mu, rho, eps) in [
                (&l.weight_mu, &l.weight_rho, &e.weight),
                (&l.bias_mu, &l.bias_rho, &e.bias),
            ] {
                let m = tape.leaf(mu.clone());
                let r = tape.leaf(rho.clone());
                let (w, sigma) = record_reparam(&mut tape, m, r, eps).unwrap();
                let kl = record_kl(&mut tape, w, m, sigma, &prior).unwrap();
                total = Some(match total {
                    None => kl,
                    Some(t) => tape.add(t, kl).unwrap(),
                });
            }
        }
        let got = tape.value(total.unwrap()).unwrap().as_slice()[0];
        assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn init_ranges() {
        let mut rng = stream(1, Stream::Init);
        let p = VariationalParams::init(&[(25, 128), (128, 128), (128, 1)], &mut rng);
        assert_eq!(p.param_count(), 19_969);
        for l in p.layers() {
            for m in [&l.weight_mu, &l.bias_mu] {
                assert!(m.as_slice().iter().all(|v| (INIT_MU.0..=INIT_MU.1).contains(v)));
            }
            for r in [&l.weight_rho, &l.bias_rho] {
                assert!(r.as_slice().iter().all(|v| (INIT_RHO.0..=INIT_RHO.1).contains(v)));
            }
        }
    }
}

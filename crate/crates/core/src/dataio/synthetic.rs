use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Result};
use crate::ndcore::{sigmoid_scalar, Matrix};
use crate::rng::{stream, Rng, Stream};

pub const IN_DOMAIN_GROUP: &str = "in_domain";
pub const SUBGROUP: &str = "subgroup";

const ICU_NAMES: [&str; 25] = [
    "age",
    "weight",
    "heart_rate",
    "systolic_bp",
    "diastolic_bp",
    "mean_bp",
    "resp_rate",
    "spo2",
    "temperature",
    "gcs",
    "potassium",
    "sodium",
    "chloride",
    "bicarbonate",
    "bun",
    "creatinine",
    "glucose",
    "hemoglobin",
    "wbc",
    "platelets",
    "lactate",
    "ph",
    "pao2",
    "fio2",
    "urine_output",
];

/// The shifted population held out as out-of-domain.
///
/// Its records are in-domain draws whose off-subspace noise is scaled by
/// `scale` and whose features are moved by a shift vector: `primary_shift` on the first
/// `primary_features` features, `secondary_shift` (alternating sign) on the
/// next `secondary_features`. Its label model perturbs every coefficient by
/// `±label_shift`. All-zero shifts with `scale = 1` reproduce the in-domain
/// distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgroupSpec {
    pub primary_shift: f64,
    pub primary_features: usize,
    pub secondary_shift: f64,
    pub secondary_features: usize,
    pub scale: f64,
    pub label_shift: f64,
}

impl Default for SubgroupSpec {
    fn default() -> Self {
        Self {
            primary_shift: 5.0,
            primary_features: 2,
            secondary_shift: 2.0,
            secondary_features: 8,
            scale: 3.0,
            label_shift: 0.5,
        }
    }
}

impl SubgroupSpec {
    /// A subgroup drawn from the in-domain distribution.
    pub fn null() -> Self {
        Self {
            primary_shift: 0.0,
            primary_features: 0,
            secondary_shift: 0.0,
            secondary_features: 0,
            scale: 1.0,
            label_shift: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub clusters: usize,
    /// Typical distance between cluster centres, in latent units.
    pub cluster_spread: f64,
    /// Rank of the subspace the in-domain features concentrate on.
    pub latent_factors: usize,
    /// Isotropic noise around the factor subspace.
    pub noise_scale: f64,
    pub class_prior: f64,
    /// Target standard deviation of the in-domain logit.
    pub logit_scale: f64,
    pub outlier_rate: f64,
    pub missing_rate: f64,
    pub subgroup: SubgroupSpec,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_features: 25,
            n_train: 40_000,
            n_test: 10_000,
            n_ood: 5_000,
            clusters: 3,
            cluster_spread: 1.5,
            latent_factors: 5,
            noise_scale: 0.3,
            class_prior: 0.4,
            logit_scale: 4.0,
            outlier_rate: 0.001,
            missing_rate: 0.0,
            subgroup: SubgroupSpec::default(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_features < 2 {
            return Err(invalid("synthetic data needs at least 2 features"));
        }
        if !(self.class_prior > 0.0 && self.class_prior < 1.0) {
            return Err(invalid(format!("class prior {} outside (0, 1)", self.class_prior)));
        }
        if self.clusters == 0 || self.n_train == 0 || self.latent_factors == 0 {
            return Err(invalid("clusters, latent_factors and n_train must be positive"));
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("noise_scale", self.noise_scale),
            ("logit_scale", self.logit_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a finite non-negative number")));
            }
        }
        for (name, v) in [("outlier_rate", self.outlier_rate), ("missing_rate", self.missing_rate)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        let s = &self.subgroup;
        if !(s.scale > 0.0 && s.scale.is_finite()) {
            return Err(invalid("subgroup scale must be positive"));
        }
        if s.primary_features + s.secondary_features > self.n_features {
            return Err(invalid("subgroup shifts more features than exist"));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_features)
            .map(|j| {
                ICU_NAMES
                    .get(j)
                    .map_or_else(|| format!("feature_{j}"), |s| (*s).to_string())
            })
            .collect()
    }

    /// Latent-space mean shift of the subgroup, one entry per feature.
    pub fn shift_vector(&self) -> Vec<f64> {
        let s = &self.subgroup;
        let mut shift = vec![0.0; self.n_features];
        for v in shift.iter_mut().take(s.primary_features) {
            *v = s.primary_shift;
        }
        for (k, v) in shift
            .iter_mut()
            .skip(s.primary_features)
            .take(s.secondary_features)
            .enumerate()
        {
            *v = if k % 2 == 0 {
                s.secondary_shift
            } else {
                -s.secondary_shift
            };
        }
        shift
    }

    /// Names of the `k` features with the largest absolute shift, ties
    /// broken by feature order.
    pub fn most_shifted_features(&self, k: usize) -> Vec<String> {
        let shift = self.shift_vector();
        let mut order: Vec<usize> = (0..shift.len()).filter(|&j| shift[j] != 0.0).collect();
        order.sort_by(|&a, &b| shift[b].abs().total_cmp(&shift[a].abs()).then(a.cmp(&b)));
        let names = self.feature_names();
        order.into_iter().take(k).map(|j| names[j].clone()).collect()
    }
}

/// Raw (unstandardized) splits produced by [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

struct Generator {
    /// `d × r` factor loadings.
    loadings: Matrix,
    /// Cluster centres in factor space.
    centers: Vec<Vec<f64>>,
    coef: Vec<f64>,
    ood_coef: Vec<f64>,
    intercept: f64,
    offsets: Vec<f64>,
    units: Vec<f64>,
}

impl Generator {
    fn new(spec: &SyntheticSpec, rng: &mut Rng) -> Self {
        let d = spec.n_features;
        let r = spec.latent_factors;
        let normal = |rng: &mut Rng| rng.sample::<f64, _>(StandardNormal);
        let loadings = Matrix::from_fn(d, r, |_, _| normal(rng) / (r as f64).sqrt());
        let centers = (0..spec.clusters)
            .map(|_| (0..r).map(|_| spec.cluster_spread * normal(rng)).collect())
            .collect();
        // Labels depend on the factors only: the feature-space coefficient
        // vector lies in the column space of the loadings.
        let magnitude = Uniform::new(0.5, 1.5).expect("valid range");
        let beta: Vec<f64> = (0..r)
            .map(|_| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * magnitude.sample(rng)
            })
            .collect();
        let mut coef: Vec<f64> = (0..d).map(|j| dot(loadings.row(j), &beta)).collect();
        let perturb: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let offset_dist = Uniform::new(0.0, 100.0).expect("valid range");
        let unit_dist = Uniform::new(0.5, 20.0).expect("valid range");
        let offsets = (0..d).map(|_| offset_dist.sample(rng)).collect();
        let units = (0..d).map(|_| unit_dist.sample(rng)).collect();

        let mut g = Self {
            loadings,
            centers,
            coef: Vec::new(),
            ood_coef: Vec::new(),
            intercept: 0.0,
            offsets,
            units,
        };
        // Rescale coefficients to the requested logit spread and calibrate the
        // intercept to the class prior on a pilot sample.
        let pilot: Vec<Vec<f64>> = (0..20_000).map(|_| g.latent(spec, rng, false)).collect();
        let raw: Vec<f64> = pilot.iter().map(|x| dot(&coef, x)).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
        let factor = if sd > 0.0 { spec.logit_scale / sd } else { 0.0 };
        for c in &mut coef {
            *c *= factor;
        }
        let linear: Vec<f64> = raw.iter().map(|v| v * factor).collect();
        g.intercept = calibrate_intercept(&linear, spec.class_prior);
        g.ood_coef = coef
            .iter()
            .zip(&perturb)
            .map(|(c, p)| c + spec.subgroup.label_shift * p)
            .collect();
        g.coef = coef;
        g
    }

    /// `L(c_k + z) + noise`, with the subgroup's noise scaled and its mean shifted.
    fn latent(&self, spec: &SyntheticSpec, rng: &mut Rng, shifted: bool) -> Vec<f64> {
        let d = spec.n_features;
        let r = spec.latent_factors;
        let k = rng.random_range(0..spec.clusters);
        let f: Vec<f64> = (0..r)
            .map(|i| self.centers[k][i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let scale = if shifted { spec.subgroup.scale } else { 1.0 };
        let shift = if shifted { spec.shift_vector() } else { vec![0.0; d] };
        (0..d)
            .map(|j| {
                let noise = spec.noise_scale * rng.sample::<f64, _>(StandardNormal);
                dot(self.loadings.row(j), &f) + scale * noise + shift[j]
            })
            .collect()
    }

    fn split(&self, spec: &SyntheticSpec, rng: &mut Rng, n: usize, prefix: &str, shifted: bool) -> Result<Dataset> {
        let d = spec.n_features;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut mask = vec![false; n * d];
        let coef = if shifted { &self.ood_coef } else { &self.coef };
        let wild = Uniform::new(40.0, 80.0).expect("valid range");
        for i in 0..n {
            let x = self.latent(spec, rng, shifted);
            let p = sigmoid_scalar(dot(coef, &x) + self.intercept);
            labels.push(u8::from(rng.random::<f64>() < p));
            let mut raw: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(j, v)| self.offsets[j] + self.units[j] * v)
                .collect();
            if spec.outlier_rate > 0.0 && rng.random::<f64>() < spec.outlier_rate {
                let j = rng.random_range(0..d);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                raw[j] = self.offsets[j] + sign * self.units[j] * wild.sample(rng);
            }
            if spec.missing_rate > 0.0 {
                for (j, m) in mask[i * d..(i + 1) * d].iter_mut().enumerate() {
                    if rng.random::<f64>() < spec.missing_rate {
                        *m = true;
                        raw[j] = 0.0;
                    }
                }
            }
            data.extend(raw);
        }
        let group = if shifted { SUBGROUP } else { IN_DOMAIN_GROUP };
        Dataset::new(
            Matrix::new(n, d, data)?,
            labels,
            spec.feature_names(),
            (0..n).map(|i| format!("{prefix}-{i:06}")).collect(),
            vec![group.to_string(); n],
        )?
        .with_missing(mask)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn calibrate_intercept(linear: &[f64], prior: f64) -> f64 {
    let rate = |b: f64| linear.iter().map(|v| sigmoid_scalar(v + b)).sum::<f64>() / linear.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < prior {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws raw train/test splits from the in-domain population and an
/// out-of-domain split from the shifted subgroup. Deterministic per seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Data);
    let generator = Generator::new(spec, &mut rng);
    let train = generator.split(spec, &mut rng, spec.n_train, "train", false)?;
    let test = generator.split(spec, &mut rng, spec.n_test, "test", false)?;
    let ood = generator.split(spec, &mut rng, spec.n_ood, "ood", true)?;
    Ok(SyntheticData { train, test, ood })
}

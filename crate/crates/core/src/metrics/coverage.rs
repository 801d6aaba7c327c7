use std::io::Write;

use serde::{Deserialize, Serialize};

use super::auroc;
use crate::error::{Error, Result};

/// Losses accumulated from the most certain record to the least certain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    /// `k / N` for `k = 1..=N`.
    pub coverage: Vec<f64>,
    /// Sum of the first `k` losses in `order`.
    pub cumulative_loss: Vec<f64>,
    /// Record indices sorted by ascending uncertainty (stable).
    pub order: Vec<usize>,
    /// Losses in `order`.
    pub sorted_losses: Vec<f64>,
}

pub fn risk_coverage(losses: &[f64], uncertainties: &[f64]) -> Result<RiskCoverageCurve> {
    if losses.len() != uncertainties.len() {
        return Err(Error::Metric(format!(
            "{} losses but {} uncertainties",
            losses.len(),
            uncertainties.len()
        )));
    }
    if losses.is_empty() {
        return Err(Error::Metric("risk-coverage curve of an empty set".into()));
    }
    if uncertainties.iter().chain(losses).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("risk-coverage input".into()));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| uncertainties[a].total_cmp(&uncertainties[b]));
    let n = losses.len() as f64;
    let sorted_losses: Vec<f64> = order.iter().map(|&i| losses[i]).collect();
    // Neumaier-compensated running sum.
    let (mut running, mut carry) = (0.0f64, 0.0f64);
    let cumulative_loss = sorted_losses
        .iter()
        .map(|&l| {
            let t = running + l;
            carry += if running.abs() >= l.abs() {
                (running - t) + l
            } else {
                (l - t) + running
            };
            running = t;
            running + carry
        })
        .collect();
    Ok(RiskCoverageCurve {
        coverage: (1..=losses.len()).map(|k| k as f64 / n).collect(),
        cumulative_loss,
        order,
        sorted_losses,
    })
}

impl RiskCoverageCurve {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn total_loss(&self) -> f64 {
        self.cumulative_loss.last().copied().unwrap_or(0.0)
    }

    /// Records kept when only the most certain `fraction` is retained.
    pub fn retained(&self, fraction: f64) -> Result<&[usize]> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Metric(format!("coverage {fraction} outside (0, 1]")));
        }
        let k = (fraction * self.len() as f64).round() as usize;
        if k == 0 {
            return Err(Error::Metric(format!("coverage {fraction} selects no records")));
        }
        Ok(&self.order[..k])
    }

    /// AUROC of `scores` over the most certain `fraction` of the records.
    pub fn auroc_at(&self, fraction: f64, scores: &[f64], labels: &[u8]) -> Result<f64> {
        let kept = self.retained(fraction)?;
        let s: Vec<f64> = kept.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = kept.iter().map(|&i| labels[i]).collect();
        auroc(&s, &y)
    }

    /// `coverage,cumulative_loss` rows, optionally with the restricted AUROC
    /// at each point (empty where one class is absent).
    pub fn write_csv_to<W: Write>(&self, writer: W, restricted_auroc: Option<(&[f64], &[u8])>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["coverage", "cumulative_loss"];
        if restricted_auroc.is_some() {
            header.push("auroc");
        }
        w.write_record(&header)?;
        let (mut pos, mut neg) = (0usize, 0usize);
        let mut rank_rows = Vec::new();
        for k in 0..self.len() {
            let mut row = vec![self.coverage[k].to_string(), self.cumulative_loss[k].to_string()];
            if let Some((scores, labels)) = restricted_auroc {
                let i = self.order[k];
                rank_rows.push(i);
                if labels[i] == 1 {
                    pos += 1
                } else {
                    neg += 1
                }
                let at_point = (k + 1) % self.stride() == 0 || k + 1 == self.len();
                row.push(if at_point && pos > 0 && neg > 0 {
                    let s: Vec<f64> = rank_rows.iter().map(|&j| scores[j]).collect();
                    let y: Vec<u8> = rank_rows.iter().map(|&j| labels[j]).collect();
                    auroc(&s, &y)?.to_string()
                } else {
                    String::new()
                });
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Restricted AUROC is evaluated on roughly one hundred points.
    fn stride(&self) -> usize {
        (self.len() / 100).max(1)
    }
}

/// Loss of the most uncertain `q` share divided by the loss of the most
/// certain `q` share, each slice holding `round(q·N)` records.
pub fn quantile_loss_ratio(curve: &RiskCoverageCurve, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::Metric(format!("quantile {q} outside (0, 0.5]")));
    }
    let n = curve.len();
    let k = (q * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::Metric(format!("quantile {q} of {n} records is an empty slice")));
    }
    let bottom: f64 = curve.sorted_losses[..k].iter().sum();
    let top: f64 = curve.sorted_losses[n - k..].iter().sum();
    if bottom <= 0.0 {
        return Err(Error::Metric("most certain slice has zero loss".into()));
    }
    Ok(top / bottom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_curve() {
        let c = risk_coverage(&[0.1, 0.2, 0.3], &[0.01, 0.02, 0.03]).unwrap();
        assert_eq!(c.coverage, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        for (got, want) in c.cumulative_loss.iter().zip([0.1, 0.3, 0.6]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn reversed_uncertainty_reverses_order() {
        let c = risk_coverage(&[0.1, 0.2, 0.3], &[0.03, 0.02, 0.01]).unwrap();
        assert_eq!(c.order, vec![2, 1, 0]);
        assert_eq!(c.sorted_losses, vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn ties_keep_input_order() {
        let c = risk_coverage(&[1.0, 2.0, 3.0, 4.0], &[0.5, 0.1, 0.5, 0.1]).unwrap();
        assert_eq!(c.order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn constant_losses_are_linear_with_unit_ratio() {
        let u: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let c = risk_coverage(&[0.4; 50], &u).unwrap();
        for (k, v) in c.cumulative_loss.iter().enumerate() {
            assert!((v - 0.4 * (k + 1) as f64).abs() < 1e-12);
        }
        assert!((quantile_loss_ratio(&c, 0.2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(risk_coverage(&[0.1], &[0.1, 0.2]).is_err());
        assert!(risk_coverage(&[0.1], &[f64::NAN]).is_err());
        let c = risk_coverage(&[0.1, 0.2], &[0.1, 0.2]).unwrap();
        assert!(quantile_loss_ratio(&c, 0.2).is_err());
        assert!(quantile_loss_ratio(&c, 0.6).is_err());
        assert!(c.retained(0.0).is_err());
    }

    #[test]
    fn restricted_auroc_on_certain_slice() {
        let scores = [0.9, 0.1, 0.8, 0.2, 0.4, 0.6];
        let labels = [1, 0, 1, 0, 1, 0];
        let unc = [0.01, 0.02, 0.03, 0.04, 0.5, 0.6];
        let c = risk_coverage(&[0.0; 6], &unc).unwrap();
        assert_eq!(c.auroc_at(4.0 / 6.0, &scores, &labels).unwrap(), 1.0);
        assert!(c.auroc_at(1.0, &scores, &labels).unwrap() < 1.0);
        let mut buf = Vec::new();
        c.write_csv_to(&mut buf, Some((&scores, &labels))).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    proptest! {
        #[test]
        fn curve_invariants(data in prop::collection::vec((0.0f64..5.0, -1.0f64..1.0), 1..200)) {
            let losses: Vec<f64> = data.iter().map(|d| d.0).collect();
            let unc: Vec<f64> = data.iter().map(|d| d.1).collect();
            let c = risk_coverage(&losses, &unc).unwrap();
            prop_assert!(c.coverage.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(c.cumulative_loss.windows(2).all(|w| w[0] <= w[1]));
            let plain: f64 = losses.iter().sum();
            prop_assert!((c.total_loss() - plain).abs() < 1e-12 * plain.max(1.0));
            prop_assert!(c.order.windows(2).all(|w| unc[w[0]] < unc[w[1]] || (unc[w[0]] == unc[w[1]] && w[0] < w[1])));
        }
    }
}

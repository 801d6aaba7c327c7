use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::check_binary;
use crate::error::{Error, Result};

/// Ascending midranks (1-based) and the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let (ranks, _) = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise area under the precision-recall curve treating
/// `positive_class` as relevant. For class 0 the scores are negated, so a
/// high score always means "more likely the chosen class".
pub fn aupr(scores: &[f64], labels: &[u8], positive_class: u8) -> Result<f64> {
    check_binary(scores, labels)?;
    if positive_class > 1 {
        return Err(Error::NonBinaryLabel(positive_class as f64));
    }
    let sign = if positive_class == 1 { 1.0 } else { -1.0 };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| (sign * scores[b]).total_cmp(&(sign * scores[a])));
    let total_pos = labels.iter().filter(|&&y| y == positive_class).count() as f64;
    let (mut tp, mut seen, mut area, mut prev_recall) = (0.0, 0.0, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] == positive_class {
                tp += 1.0;
            }
            seen += 1.0;
            k += 1;
        }
        let recall = tp / total_pos;
        area += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
    }
    Ok(area)
}

/// Two-sided Mann–Whitney U test of `a` against `b` (normal approximation
/// with tie correction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of sample `a`.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
    /// `U / (n_a · n_b)`, the probability that a value from `a` exceeds one from `b`.
    pub effect: f64,
}

pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric("Mann-Whitney test needs two non-empty samples".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney sample".into()));
    }
    let (ranks, ties) = midranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = ranks[..a.len()].iter().sum::<f64>() - na * (na + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    let z = if var > 0.0 {
        (u - na * nb / 2.0) / var.sqrt()
    } else {
        0.0
    };
    Ok(MannWhitney {
        u,
        z,
        p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
        effect: u / (na * nb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pair_count(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    wins += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    /// Sum of `ΔR · P` over every distinct threshold, each evaluated from scratch.
    fn threshold_sweep(scores: &[f64], labels: &[u8], class: u8) -> f64 {
        let s: Vec<f64> = scores.iter().map(|&v| if class == 1 { v } else { -v }).collect();
        let mut thresholds = s.clone();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let total = labels.iter().filter(|&&y| y == class).count() as f64;
        let (mut area, mut prev) = (0.0, 0.0);
        for t in thresholds {
            let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
            let tp = sel.iter().filter(|&&i| labels[i] == class).count() as f64;
            let recall = tp / total;
            area += (recall - prev) * tp / sel.len() as f64;
            prev = recall;
        }
        area
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let err = auroc(&[0.1, 0.2], &[1, 1]).unwrap_err();
        assert!(err.to_string().contains("both classes"), "{err}");
        assert!(aupr(&[0.1, 0.2], &[0, 0], 1).is_err());
        assert!(auroc(&[0.1], &[1, 0]).is_err());
        assert!(auroc(&[f64::NAN, 0.1], &[1, 0]).is_err());
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 1).unwrap(), 1.0);
        assert_eq!(aupr(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 0).unwrap(), 1.0);
        let v = aupr(&[0.9, 0.8, 0.7], &[1, 0, 1], 1).unwrap();
        assert!((v - threshold_sweep(&[0.9, 0.8, 0.7], &[1, 0, 1], 1)).abs() < 1e-15);
        assert!((v - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn aupr_of_random_scores_tracks_prior() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let prior = 0.3;
        let trials = 200;
        let mut total = 0.0;
        for _ in 0..trials {
            let labels: Vec<u8> = (0..500).map(|_| u8::from(rng.random::<f64>() < prior)).collect();
            let scores: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            total += aupr(&scores, &labels, 1).unwrap();
        }
        assert!((total / trials as f64 - prior).abs() < 0.02);
    }

    #[test]
    fn mann_whitney_detects_location_shift() {
        let a: Vec<f64> = (0..200).map(|i| i as f64 + 100.0).collect();
        let b: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let t = mann_whitney(&a, &b).unwrap();
        assert!(t.p_value < 1e-10);
        assert!(t.z > 0.0);
        let same = mann_whitney(&b, &b).unwrap();
        assert!((same.p_value - 1.0).abs() < 1e-12);
        assert_eq!(same.effect, 0.5);
        assert!(mann_whitney(&[], &b).is_err());
    }

    #[test]
    fn mann_whitney_matches_reference_statistic() {
        // Small example worked by hand: ranks of a = {2, 4, 5.5}, with one tie pair.
        let t = mann_whitney(&[2.0, 4.0, 5.0], &[1.0, 3.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.u, 5.5);
        let var = 12.0 / 12.0 * (8.0 - 6.0 / 42.0);
        assert!((t.z - (5.5 - 6.0) / f64::sqrt(var)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auroc_equals_pair_counting(
            data in prop::collection::vec((0u8..6, 0u8..2), 2..120)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, y)| y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
        }

        #[test]
        fn aupr_equals_threshold_sweep(
            data in prop::collection::vec((0u8..8, 0u8..2), 2..80),
            class in 0u8..2,
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, y)| y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let got = aupr(&scores, &labels, class).unwrap();
            prop_assert!((got - threshold_sweep(&scores, &labels, class)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn auroc_equals_pair_counting_at_one_thousand_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<f64> = (0..1000).map(|_| (rng.random::<f64>() * 50.0).round()).collect();
        let labels: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
    }
}

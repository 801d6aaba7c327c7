use super::Dataset;
use crate::error::{invalid, Result};

/// Splits the records tagged `subgroup` out of `dataset`. In the returned
/// out-of-domain set every feature in `masked` is overwritten with its mean
/// over the remaining (training) records, so only the less obvious
/// differences survive.
pub fn make_ood_holdout(dataset: &Dataset, subgroup: &str, masked: &[String]) -> Result<(Dataset, Dataset)> {
    let (held, kept): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| dataset.groups[i] == subgroup);
    if held.is_empty() {
        return Err(invalid(format!("subgroup `{subgroup}` has no records")));
    }
    let columns = masked
        .iter()
        .map(|name| {
            dataset
                .feature_index(name)
                .ok_or_else(|| invalid(format!("masked feature `{name}` does not exist")))
        })
        .collect::<Result<Vec<_>>>()?;

    let train = dataset.subset(&kept);
    let mut ood = dataset.subset(&held);
    for &j in &columns {
        let observed: Vec<f64> = (0..train.len()).filter_map(|i| train.value(i, j)).collect();
        let mean = observed.iter().sum::<f64>() / observed.len().max(1) as f64;
        for i in 0..ood.len() {
            ood.features.set(i, j, mean);
        }
    }
    if !columns.is_empty() && ood.has_missing() {
        let d = ood.n_features();
        let mut mask = ood.missing_mask().to_vec();
        for i in 0..ood.len() {
            for &j in &columns {
                mask[i * d + j] = false;
            }
        }
        ood = ood.with_missing(mask)?;
    }
    Ok((train, ood))
}

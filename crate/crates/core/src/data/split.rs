use super::CsiBatch;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPair {
    pub train: CsiBatch,
    pub test: CsiBatch,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded train/test partition with `round(ratio·m)` training samples.
///
/// In stratified mode every class contributes `ratio·n_k` samples to the
/// training side, rounded so that the total still matches and each class is
/// within one sample of its exact share.
pub fn split(batch: &CsiBatch, ratio: f64, seed: u64, stratified: bool) -> Result<SplitPair> {
    let m = batch.len();
    if m < 2 {
        return Err(Error::contract(format!("cannot split {m} samples")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::contract(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let n_train = (ratio * m as f64).round() as usize;
    if n_train == 0 || n_train == m {
        return Err(Error::contract(format!(
            "ratio {ratio} leaves an empty side for {m} samples"
        )));
    }
    let mut rng = Rng::stream(seed, "split");
    let (mut train_idx, mut test_idx) = if stratified {
        stratified_indices(batch, ratio, n_train, &mut rng)?
    } else {
        let perm = rng.permutation(m);
        (perm[..n_train].to_vec(), perm[n_train..].to_vec())
    };
    if stratified {
        rng.shuffle(&mut train_idx);
        rng.shuffle(&mut test_idx);
    }
    Ok(SplitPair {
        train: batch.select(&train_idx),
        test: batch.select(&test_idx),
        ratio,
        seed,
    })
}

fn stratified_indices(
    batch: &CsiBatch,
    ratio: f64,
    n_train: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = batch.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in batch.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if !idx.is_empty() && idx.len() < 2 {
            return Err(Error::data(format!(
                "class {c} has {} sample(s); stratified split needs at least 2",
                idx.len()
            )));
        }
    }
    let exact: Vec<f64> = by_class.iter().map(|v| ratio * v.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = n_train as isize - quota.iter().sum::<usize>() as isize;
    // largest remainders first, class index breaks ties
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(2 * k) {
        if remaining <= 0 {
            break;
        }
        if quota[c] < by_class[c].len() && (quota[c] as f64) < exact[c] {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(batch.len() - n_train);
    for (c, idx) in by_class.iter_mut().enumerate() {
        rng.shuffle(idx);
        train.extend_from_slice(&idx[..quota[c]]);
        test.extend_from_slice(&idx[quota[c]..]);
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::collections::BTreeMap;

    fn labeled(m: usize, k: usize) -> CsiBatch {
        let data = (0..m).map(|i| i as f32).collect();
        let labels = (0..m).map(|i| i % k).collect();
        CsiBatch::new(Tensor::new(&[m, 1, 1], data).unwrap(), labels, k).unwrap()
    }

    #[test]
    fn full_scale_split_sizes() {
        let b = labeled(1084, 8);
        for stratified in [false, true] {
            let s = split(&b, 0.75, 3, stratified).unwrap();
            assert_eq!((s.train.len(), s.test.len()), (813, 271));
        }
    }

    #[test]
    fn ratio_one_is_rejected() {
        let b = labeled(10, 2);
        assert!(matches!(split(&b, 1.0, 0, false), Err(Error::Contract(_))));
        assert!(matches!(split(&b, 0.0, 0, false), Err(Error::Contract(_))));
    }

    #[test]
    fn same_seed_same_partition() {
        let b = labeled(100, 4);
        assert_eq!(split(&b, 0.75, 9, false).unwrap(), split(&b, 0.75, 9, false).unwrap());
        assert_ne!(split(&b, 0.75, 9, false).unwrap(), split(&b, 0.75, 10, false).unwrap());
    }

    #[test]
    fn stratified_keeps_class_proportions() {
        let b = labeled(103, 4);
        let s = split(&b, 0.75, 1, true).unwrap();
        let total = b.class_counts();
        for (c, &n) in s.train.class_counts().iter().enumerate() {
            let exact = 0.75 * total[c] as f64;
            assert!((n as f64 - exact).abs() <= 1.0, "class {c}: {n} vs {exact}");
        }
    }

    #[test]
    fn stratified_rejects_singleton_class() {
        let b = CsiBatch::new(Tensor::zeros(&[5, 1, 1]), vec![0, 0, 0, 0, 1], 2).unwrap();
        assert!(matches!(split(&b, 0.75, 1, true), Err(Error::Data(_))));
        assert!(split(&b, 0.75, 1, false).is_ok());
    }

    #[test]
    fn split_preserves_label_row_pairs() {
        let b = labeled(57, 3);
        let s = split(&b, 0.75, 4, true).unwrap();
        let mut before = BTreeMap::new();
        for i in 0..b.len() {
            *before.entry((b.row_checksum(i), b.labels()[i])).or_insert(0) += 1;
        }
        let mut after = BTreeMap::new();
        for part in [&s.train, &s.test] {
            for i in 0..part.len() {
                *after.entry((part.row_checksum(i), part.labels()[i])).or_insert(0) += 1;
            }
        }
        assert_eq!(before, after);
    }
}

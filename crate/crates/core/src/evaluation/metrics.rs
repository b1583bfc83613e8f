use crate::error::{data_err, dim_err, Result};
use crate::tensor::Tensor;

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Result<Vec<usize>> {
    let (_, k) = scores.dims2()?;
    if k == 0 {
        return Err(dim_err!("scores have zero columns"));
    }
    Ok(scores
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn check_labels(scores: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, k) = scores.dims2()?;
    if labels.len() != n {
        return Err(dim_err!("{} labels for {n} score rows", labels.len()));
    }
    if n == 0 {
        return Err(data_err!("cannot score an empty set"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(data_err!("label {bad} out of range for {k} classes"));
    }
    Ok((n, k))
}

/// Top-1 accuracy in percent.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, _) = check_labels(scores, labels)?;
    let pred = argmax_rows(scores)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counting half.
fn binary_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Average ranks over tied runs.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Macro-averaged one-vs-rest ROC AUC, in percent.
///
/// Every class must appear in `labels`; a class with no positives (or no
/// negatives) has no defined AUC.
pub fn auc_ovr_macro(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    let (_, k) = check_labels(scores, labels)?;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let missing: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !missing.is_empty() {
        return Err(data_err!("no positive examples for class(es) {missing:?}"));
    }
    if counts.contains(&labels.len()) {
        return Err(data_err!("AUC needs at least two classes present"));
    }
    let mut total = 0.0;
    for c in 0..k {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (row, &l) in scores.data().chunks(k).zip(labels) {
            if l == c {
                pos.push(row[c]);
            } else {
                neg.push(row[c]);
            }
        }
        total += binary_auc(&pos, &neg);
    }
    Ok(100.0 * total / k as f64)
}

/// `m[true][pred]` counts.
pub fn confusion_matrix(scores: &Tensor, labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    let (_, k) = check_labels(scores, labels)?;
    let mut m = vec![vec![0; k]; k];
    for (p, &l) in argmax_rows(scores)?.into_iter().zip(labels) {
        m[l][p] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        let k = rows[0].len();
        Tensor::new(vec![rows.len(), k], rows.concat()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let s = t(&[&[0.9, 0.1], &[0.2, 0.8]]);
        assert_eq!(accuracy(&s, &[0, 1]).unwrap(), 100.0);
        assert_eq!(accuracy(&s, &[1, 0]).unwrap(), 0.0);
        let tie = t(&[&[0.5, 0.5]]);
        assert_eq!(argmax_rows(&tie).unwrap(), vec![0]);
    }

    #[test]
    fn auc_examples() {
        let perfect = t(&[&[0.9, 0.1], &[0.8, 0.2], &[0.1, 0.9], &[0.3, 0.7]]);
        assert_eq!(auc_ovr_macro(&perfect, &[0, 0, 1, 1]).unwrap(), 100.0);
        let flat = t(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(auc_ovr_macro(&flat, &[0, 1, 1]).unwrap(), 50.0);
        let inverted = t(&[&[0.1, 0.9], &[0.9, 0.1]]);
        assert_eq!(auc_ovr_macro(&inverted, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn auc_missing_class_names_it() {
        let s = t(&[&[0.2, 0.3, 0.5], &[0.6, 0.3, 0.1]]);
        let err = auc_ovr_macro(&s, &[0, 1]).unwrap_err().to_string();
        assert!(err.contains("[2]"), "{err}");
    }

    #[test]
    fn confusion_counts() {
        let s = t(&[&[0.9, 0.1], &[0.7, 0.3], &[0.2, 0.8]]);
        assert_eq!(confusion_matrix(&s, &[0, 1, 1]).unwrap(), vec![vec![1, 0], vec![1, 1]]);
    }
}

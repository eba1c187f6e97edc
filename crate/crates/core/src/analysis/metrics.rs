//! Binary-classification metrics over scored predictions.

/// Area under the ROC curve via the Mann-Whitney statistic with mid-ranks
/// for tied scores. `None` when either class is absent.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve by the trapezoid rule over
/// distinct score thresholds, anchored at (recall 0, precision 1).
pub fn auprc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_r, mut prev_p) = (0.0, 1.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let r = tp as f64 / n_pos as f64;
        let p = tp as f64 / (tp + fp) as f64;
        area += (r - prev_r) * (p + prev_p) / 2.0;
        prev_r = r;
        prev_p = p;
    }
    Some(area)
}

pub fn brier(probs: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    if probs.is_empty() {
        return 0.0;
    }
    probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let y = if l { 1.0 } else { 0.0 };
            (p - y) * (p - y)
        })
        .sum::<f64>()
        / probs.len() as f64
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// Macro one-vs-rest AUROC over K classes from per-step distributions;
/// classes without both positives and negatives are skipped.
pub fn auroc_ovr(dists: &[Vec<f64>], truth: &[usize]) -> Option<f64> {
    let k = dists.first()?.len();
    if k == 2 {
        let s: Vec<f64> = dists.iter().map(|d| d[1]).collect();
        let l: Vec<bool> = truth.iter().map(|&a| a == 1).collect();
        return auroc(&s, &l);
    }
    let vals: Vec<f64> = (0..k)
        .filter_map(|c| {
            let s: Vec<f64> = dists.iter().map(|d| d[c]).collect();
            let l: Vec<bool> = truth.iter().map(|&a| a == c).collect();
            auroc(&s, &l)
        })
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_set() {
        let s = [0.9, 0.8, 0.3, 0.1];
        let l = [true, true, false, false];
        assert_eq!(auroc(&s, &l), Some(1.0));
        assert!((brier(&s, &l) - 0.0375).abs() < 1e-15);
        assert!((auprc(&s, &l).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_scores() {
        let s = [0.5; 4];
        let l = [true, false, true, false];
        assert_eq!(auroc(&s, &l), Some(0.5));
        assert_eq!(brier(&s, &l), 0.25);
    }

    #[test]
    fn single_class_is_undefined() {
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), None);
        assert_eq!(auprc(&[0.1, 0.2], &[false, false]), None);
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2];
        let l = [false, false, true, true, true, false];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auroc(&s, &l).unwrap() - num / den).abs() < 1e-15);
    }

    #[test]
    fn reversed_scores_give_zero() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]), Some(0.0));
    }
}

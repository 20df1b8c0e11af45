use crate::error::{Error, Result};
use crate::numeric::{log1p_exp, KahanSum};
use crate::token_space::Label;

/// Probability that a random positive outscores a random negative, ties
/// counting one half, from the Mann-Whitney rank sum.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == Label::Pos).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateInput(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the positive rank sum keeps tied average ranks integral
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1..=end, average (start + 1 + end) / 2
        let twice_avg = (start + 1 + end) as u128;
        let pos = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == Label::Pos)
            .count() as u128;
        twice_rank_sum += pos * twice_avg;
        start = end;
    }
    let p = n_pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean of `log(1 + exp(-y s))`.
pub fn logloss(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need equal non-empty inputs, got {} scores and {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut acc = KahanSum::new();
    for (s, l) in scores.iter().zip(labels) {
        acc.add(log1p_exp(-l.sign() * s));
    }
    Ok(acc.value() / scores.len() as f64)
}

#[cfg(test)]
pub(crate) fn auc_brute_force(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li != Label::Pos {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != Label::Neg {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2.0 * pairs as f64)
}

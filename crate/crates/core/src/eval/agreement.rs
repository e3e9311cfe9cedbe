//! Majority labels, accuracy, and Cohen's / Fleiss' kappa.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{one_decimal, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority<L> {
    Label(L),
    NoConsensus,
}

impl<L: Copy> Majority<L> {
    pub fn label(&self) -> Option<L> {
        match self {
            Majority::Label(l) => Some(*l),
            Majority::NoConsensus => None,
        }
    }
}

/// The unique label with at least `quorum` votes, otherwise `NoConsensus`.
pub fn majority_label<L: Ord + Copy>(votes: &[L], quorum: usize) -> Majority<L> {
    let quorum = quorum.max(1);
    let mut counts: BTreeMap<L, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_insert(0) += 1;
    }
    let mut winners = counts.into_iter().filter(|(_, c)| *c >= quorum);
    match (winners.next(), winners.next()) {
        (Some((l, _)), None) => Majority::Label(l),
        _ => Majority::NoConsensus,
    }
}

/// Strict majority of `n` voters.
pub fn simple_quorum(n: usize) -> usize {
    n / 2 + 1
}

/// Percentage of positions where the lists agree, to one decimal.
pub fn accuracy<L: PartialEq>(gold: &[L], predicted: &[L]) -> Result<f64, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::ShapeError(format!("{} gold labels vs {} predictions", gold.len(), predicted.len())));
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    Ok(one_decimal(hits as f64 * 100.0 / gold.len() as f64))
}

/// Cohen's kappa for two raters over the same items.
pub fn cohens_kappa<L: Ord + Copy>(a: &[L], b: &[L]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ShapeError(format!("rater lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = a.len() as u64;
    let mut ma: BTreeMap<L, u64> = BTreeMap::new();
    let mut mb: BTreeMap<L, u64> = BTreeMap::new();
    let mut agree = 0u64;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(*x).or_insert(0) += 1;
        *mb.entry(*y).or_insert(0) += 1;
        if x == y {
            agree += 1;
        }
    }
    let chance: u64 = ma.iter().map(|(l, c)| c * mb.get(l).copied().unwrap_or(0)).sum();
    if chance == n * n {
        return if agree == n { Ok(1.0) } else { Err(EvalError::DegenerateMarginals) };
    }
    if agree == n {
        return Ok(1.0);
    }
    let po = agree as f64 / n as f64;
    let pe = chance as f64 / (n * n) as f64;
    Ok((po - pe) / (1.0 - pe))
}

/// Items × raters table of categorical labels; `None` marks a missing rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterMatrix<L> {
    labels: Vec<L>,
    rows: Vec<Vec<Option<L>>>,
}

impl<L: Ord + Copy + Debug> RaterMatrix<L> {
    pub fn new(labels: Vec<L>, rows: Vec<Vec<Option<L>>>) -> Result<Self, EvalError> {
        for r in &rows {
            for l in r.iter().flatten() {
                if !labels.contains(l) {
                    return Err(EvalError::UnknownLabel(format!("{l:?}")));
                }
            }
        }
        Ok(RaterMatrix { labels, rows })
    }

    /// Full matrix without missing cells.
    pub fn complete(labels: Vec<L>, rows: Vec<Vec<L>>) -> Result<Self, EvalError> {
        Self::new(labels, rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect())
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<Option<L>>] {
        &self.rows
    }

    fn counts(row: &[Option<L>], labels: &[L]) -> Vec<u64> {
        labels.iter().map(|l| row.iter().filter(|x| x.as_ref() == Some(l)).count() as u64).collect()
    }
}

/// Fleiss' kappa; every item must carry the same number (≥ 2) of ratings.
pub fn fleiss_kappa<L: Ord + Copy + Debug>(m: &RaterMatrix<L>) -> Result<f64, EvalError> {
    if m.rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let per_item: Vec<usize> = m.rows.iter().map(|r| r.iter().flatten().count()).collect();
    let n = per_item[0];
    if per_item.iter().any(|&k| k != n) {
        return Err(EvalError::ShapeError("items have differing rater counts".into()));
    }
    if n < 2 {
        return Err(EvalError::ShapeError("fewer than two ratings per item".into()));
    }
    let items = m.rows.len() as f64;
    let nf = n as f64;
    let k = m.labels.len();
    let mut col = alloc::vec![0u64; k];
    let mut unanimous = true;
    let mut p_bar = 0.0;
    for r in &m.rows {
        let c = RaterMatrix::counts(r, &m.labels);
        let sq: u64 = c.iter().map(|x| x * x).sum();
        unanimous &= sq == (n * n) as u64;
        p_bar += (sq as f64 - nf) / (nf * (nf - 1.0));
        for (j, x) in c.iter().enumerate() {
            col[j] += x;
        }
    }
    if unanimous {
        return Ok(1.0);
    }
    p_bar /= items;
    let total = items * nf;
    let p_e: f64 = col.iter().map(|&c| (c as f64 / total) * (c as f64 / total)).sum();
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn majority_cases() {
        assert_eq!(majority_label(&['H', 'H', 'L'], 2), Majority::Label('H'));
        assert_eq!(majority_label(&['P', 'H', 'L'], 2), Majority::NoConsensus);
        assert_eq!(majority_label(&['X'], 1), Majority::Label('X'));
        assert_eq!(majority_label(&['A', 'A', 'B', 'B'], 2), Majority::NoConsensus);
        assert_eq!(simple_quorum(3), 2);
        assert_eq!(simple_quorum(4), 3);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]), Ok(100.0));
        assert_eq!(accuracy(&[1, 2], &[2, 1]), Ok(0.0));
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(EvalError::ShapeError(_))));
    }

    #[test]
    fn kappa_hand_values() {
        assert_eq!(cohens_kappa(&['A', 'A', 'B', 'B'], &['A', 'B', 'A', 'B']), Ok(0.0));
        assert_eq!(cohens_kappa(&['A', 'B', 'A'], &['A', 'B', 'A']), Ok(1.0));
        assert_eq!(cohens_kappa(&['A', 'A'], &['A', 'A']), Ok(1.0));
        // 2x2 {AA:20, AB:5, BA:10, BB:15}: po = 0.7, pe = 0.5*0.6 + 0.5*0.4 = 0.5
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [('A', 'A', 20), ('A', 'B', 5), ('B', 'A', 10), ('B', 'B', 15)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        let k = cohens_kappa(&a, &b).unwrap();
        assert!((k - 0.4).abs() < 1e-9, "{k}");
    }

    #[test]
    fn degenerate_marginals() {
        // every marginal on one label but raters still disagree is impossible;
        // p_e = 1 needs both raters constant on the same label
        assert_eq!(cohens_kappa(&['A'], &['A']), Ok(1.0));
        assert_eq!(cohens_kappa::<char>(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn fleiss_cases() {
        let all = RaterMatrix::complete(vec!['A', 'B'], vec![vec!['A'; 3], vec!['B'; 3]]).unwrap();
        assert_eq!(fleiss_kappa(&all), Ok(1.0));
        let ragged = RaterMatrix::new(vec!['A', 'B'], vec![vec![Some('A'), Some('B')], vec![Some('A'), None]]).unwrap();
        assert!(matches!(fleiss_kappa(&ragged), Err(EvalError::ShapeError(_))));
        assert!(RaterMatrix::complete(vec!['A'], vec![vec!['Z', 'A']]).is_err());
    }

    #[test]
    fn fleiss_zero_when_agreement_equals_chance() {
        // two raters, labels split evenly; half the items agree
        let m = RaterMatrix::complete(vec!['A', 'B'], vec![vec!['A', 'A'], vec!['B', 'B'], vec!['A', 'B'], vec!['B', 'A']]).unwrap();
        assert!(fleiss_kappa(&m).unwrap().abs() < 1e-12);
    }
}

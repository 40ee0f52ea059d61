//! Classification and cluster-recovery metrics, and the per-round trace row.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyLabels);
    }
    Ok(())
}

/// Fraction of correct predictions.
pub fn micro_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Unweighted mean of per-class F1 over the classes that occur in either
/// `preds` or `labels`. A present class with no true positives scores 0.
pub fn macro_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    check_pair(preds, labels)?;
    let width = preds.iter().chain(labels).copied().max().map_or(0, |m| m + 1).max(num_classes);
    let mut tp = vec![0usize; width];
    let mut fp = vec![0usize; width];
    let mut fn_ = vec![0usize; width];
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..width {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 {
            continue;
        }
        present += 1;
        total += 2.0 * tp[c] as f64 / denom as f64;
    }
    Ok(total / present as f64)
}

struct Contingency {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    cells: Vec<usize>,
}

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let mut ra = HashMap::new();
    let mut rb = HashMap::new();
    let mut cells = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ra.entry(x).or_insert(0usize) += 1;
        *rb.entry(y).or_insert(0usize) += 1;
        *cells.entry((x, y)).or_insert(0usize) += 1;
    }
    Contingency {
        n: a.len(),
        rows: ra.into_values().collect(),
        cols: rb.into_values().collect(),
        cells: cells.into_values().collect(),
    }
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert-Arabie). Two partitions with no chance
/// structure to adjust for (e.g. both all-singletons) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let t = contingency(a, b);
    if t.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = t.cells.iter().map(|&c| pairs(c)).sum();
    let sum_a: f64 = t.rows.iter().map(|&c| pairs(c)).sum();
    let sum_b: f64 = t.cols.iter().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(t.n);
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom.abs() < 1e-12 {
        return Ok(if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Normalised mutual information, arithmetic-mean normalisation.
pub fn normalized_mutual_info(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let t = contingency(a, b);
    let n = t.n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts.iter().map(|&c| c as f64 / n).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
    };
    let ha = entropy(&t.rows);
    let hb = entropy(&t.cols);
    let hab = entropy(&t.cells);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mi = (ha + hb - hab).max(0.0);
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summary of one federated round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub k: usize,
    pub acc_mean: f64,
    pub acc_sd: f64,
    pub f1_mean: f64,
    pub f1_sd: f64,
    pub ari: f64,
    pub nmi: f64,
    pub logpost: f64,
    pub objective: f64,
    pub accept_split: usize,
    pub accept_merge: usize,
}

impl RoundRecord {
    pub const CSV_HEADER: &'static str =
        "round,K_t,acc_mean,acc_sd,f1_mean,f1_sd,ari,nmi,logpost,objective,accept_split,accept_merge";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.round,
            self.k,
            self.acc_mean,
            self.acc_sd,
            self.f1_mean,
            self.f1_sd,
            self.ari,
            self.nmi,
            self.logpost,
            self.objective,
            self.accept_split,
            self.accept_merge
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(micro_accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        assert_eq!(micro_accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert_eq!(micro_accuracy(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap(), 0.75);
        assert_eq!(micro_accuracy(&[], &[]), Err(Error::EmptyLabels));
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
        let f = macro_f1(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert!((f - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(macro_f1(&[3, 3], &[3, 3], 5).unwrap(), 1.0);
        assert_eq!(macro_f1(&[1], &[], 2), Err(Error::LengthMismatch(1, 0)));
    }

    #[test]
    fn ari_nmi_examples() {
        let a = [0, 0, 1, 1, 2];
        assert!((adjusted_rand_index(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalized_mutual_info(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap().abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
        assert!(normalized_mutual_info(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = RoundRecord {
            round: 1,
            k: 2,
            acc_mean: 0.5,
            acc_sd: 0.1,
            f1_mean: 0.4,
            f1_sd: 0.0,
            ari: 1.0,
            nmi: 1.0,
            logpost: -3.0,
            objective: 0.7,
            accept_split: 1,
            accept_merge: 0,
        };
        assert_eq!(r.csv_row().split(',').count(), RoundRecord::CSV_HEADER.split(',').count());
    }

    proptest! {
        #[test]
        fn relabel_invariance(a in prop::collection::vec(0usize..4, 1..30), seed in 0usize..24) {
            let b: Vec<usize> = a.iter().map(|&x| (x * 7 + seed) % 11).collect();
            let perm = |x: usize| (x + 3) % 4;
            let ap: Vec<usize> = a.iter().map(|&x| perm(x)).collect();
            let ari = adjusted_rand_index(&a, &b).unwrap();
            prop_assert!((ari - adjusted_rand_index(&ap, &b).unwrap()).abs() < 1e-12);
            prop_assert!((normalized_mutual_info(&a, &b).unwrap() - normalized_mutual_info(&ap, &b).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ari));
        }

        #[test]
        fn accuracy_is_one_minus_hamming(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)) {
            let (p, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let hamming = p.iter().zip(&l).filter(|(a, b)| a != b).count() as f64 / p.len() as f64;
            prop_assert!((micro_accuracy(&p, &l).unwrap() - (1.0 - hamming)).abs() < 1e-12);
            let f1 = macro_f1(&p, &l, 3).unwrap();
            prop_assert!(f1 <= 1.0);
            prop_assert_eq!(f1 == 1.0, p == l);
        }
    }
}

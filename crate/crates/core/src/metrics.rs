//! Confusion matrices, macro accuracy and Cohen's kappa.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    /// `rows[true][predicted]`; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(shape_err!("confusion matrix rows must all have {n} entries"));
        }
        Ok(Self { n, counts: rows.concat() })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for v in [truth, predicted] {
            if v >= self.n {
                return Err(Error::Label { label: v, n_classes: self.n });
            }
        }
        self.counts[truth * self.n + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.n..(truth + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, predicted)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }
}

/// Counts `(label, prediction)` pairs.
pub fn confusion(predictions: &[usize], labels: &[usize], n: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(shape_err!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    let mut cm = ConfusionMatrix::new(n);
    for (&p, &l) in predictions.iter().zip(labels) {
        cm.record(l, p)?;
    }
    Ok(cm)
}

/// Recall of every class, `None` for classes without trials.
pub fn per_class_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n)
        .map(|i| match cm.row_sum(i) {
            0 => None,
            r => Some(cm.get(i, i) as f64 / r as f64),
        })
        .collect()
}

/// Mean of per-class recalls. Every class needs at least one trial.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let all: Vec<usize> = (0..cm.n).collect();
    accuracy_over(cm, &all)
}

/// Mean of per-class recalls over `classes` only.
pub fn accuracy_over(cm: &ConfusionMatrix, classes: &[usize]) -> Result<f64> {
    if classes.is_empty() {
        return Err(Error::Empty("no classes to average".into()));
    }
    let recalls = per_class_recall(cm);
    let mut sum = 0.0;
    for &c in classes {
        match recalls.get(c) {
            Some(Some(r)) => sum += r,
            Some(None) => return Err(Error::EmptyClass { class: c }),
            None => return Err(Error::Label { label: c, n_classes: cm.n }),
        }
    }
    Ok(sum / classes.len() as f64)
}

/// Classes with at least one trial.
pub fn present_classes(cm: &ConfusionMatrix) -> Vec<usize> {
    (0..cm.n).filter(|&i| cm.row_sum(i) > 0).collect()
}

/// Fraction of trials on the diagonal.
pub fn micro_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::Empty("confusion matrix has no trials".into())),
        t => Ok(cm.trace() as f64 / t as f64),
    }
}

fn agreement(p_o: f64, p_e: f64) -> f64 {
    if p_e >= 1.0 {
        0.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    }
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`; zero when `p_e == 1`.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no trials".into()));
    }
    let t = total as f64;
    let p_o = cm.trace() as f64 / t;
    let p_e = (0..cm.n).map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64).sum::<f64>() / (t * t);
    Ok(agreement(p_o, p_e))
}

/// Per-class variant: kappa of each class's one-vs-rest 2x2 table,
/// averaged over classes.
pub fn kappa_per_class(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no trials".into()));
    }
    let t = total as f64;
    let mut sum = 0.0;
    for i in 0..cm.n {
        let tp = cm.get(i, i) as f64;
        let row = cm.row_sum(i) as f64;
        let col = cm.col_sum(i) as f64;
        let tn = t - row - col + tp;
        let p_o = (tp + tn) / t;
        let p_e = (row * col + (t - row) * (t - col)) / (t * t);
        sum += agreement(p_o, p_e);
    }
    Ok(sum / cm.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use proptest::prelude::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(accuracy(&cm(&[&[9, 1], &[5, 5]])).unwrap(), 0.7);
        let k = kappa(&cm(&[&[40, 10], &[20, 30]])).unwrap();
        assert!((k - 0.4).abs() < 1e-15);
        let perfect = cm(&[&[3, 0, 0], &[0, 2, 0], &[0, 0, 7]]);
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        assert_eq!(kappa(&perfect).unwrap(), 1.0);
        assert_eq!(kappa_per_class(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(accuracy(&cm(&[&[2, 0], &[0, 0]])), Err(Error::EmptyClass { class: 1 }));
        assert_eq!(accuracy_over(&cm(&[&[2, 0], &[0, 0]]), &[0]).unwrap(), 1.0);
        assert!(kappa(&ConfusionMatrix::new(3)).is_err());
        // everything in one cell: chance agreement is certain
        assert_eq!(kappa(&cm(&[&[5, 0], &[0, 0]])).unwrap(), 0.0);
    }

    #[test]
    fn confusion_basics() {
        assert_eq!(confusion(&[], &[], 3).unwrap(), ConfusionMatrix::new(3));
        let id = confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(id.get(i, j), u64::from(i == j));
            }
        }
        assert!(confusion(&[4], &[0], 4).is_err());
        assert!(confusion(&[0], &[0, 1], 4).is_err());
    }

    #[test]
    fn uniform_guessing() {
        let mut rng = Rng::new(9);
        let n = 4;
        let labels: Vec<usize> = (0..20_000).map(|i| i % n).collect();
        let preds: Vec<usize> = labels.iter().map(|_| rng.below(n)).collect();
        let m = confusion(&preds, &labels, n).unwrap();
        assert!((accuracy(&m).unwrap() - 0.25).abs() < 0.02);
        assert!(kappa(&m).unwrap().abs() < 0.03);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..6).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(1u64..50, n), n))
    }

    proptest! {
        #[test]
        fn invariant_under_relabeling(rows in matrix(), seed in any::<u64>()) {
            let n = rows.len();
            let mut perm: Vec<usize> = (0..n).collect();
            Rng::new(seed).shuffle(&mut perm);
            let permuted: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| rows[perm[i]][perm[j]]).collect()).collect();
            let a = ConfusionMatrix::from_rows(&rows).unwrap();
            let b = ConfusionMatrix::from_rows(&permuted).unwrap();
            prop_assert!((accuracy(&a).unwrap() - accuracy(&b).unwrap()).abs() < 1e-12);
            prop_assert!((kappa(&a).unwrap() - kappa(&b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn kappa_at_most_one(rows in matrix()) {
            let m = ConfusionMatrix::from_rows(&rows).unwrap();
            let k = kappa(&m).unwrap();
            prop_assert!(k <= 1.0 + 1e-15);
            // every off-diagonal cell is at least 1 here
            prop_assert!(k < 1.0);
        }

        #[test]
        fn balanced_macro_equals_micro(rows in matrix()) {
            let n = rows.len();
            // make each row sum to the same total by topping up the diagonal
            let target = rows.iter().map(|r| r.iter().sum::<u64>()).max().unwrap();
            let mut balanced = rows.clone();
            for (i, r) in balanced.iter_mut().enumerate() {
                let s: u64 = r.iter().sum();
                r[i] += target - s;
            }
            let m = ConfusionMatrix::from_rows(&balanced).unwrap();
            prop_assert_eq!(m.row_sum(n - 1), target);
            prop_assert!((accuracy(&m).unwrap() - micro_accuracy(&m).unwrap()).abs() < 1e-12);
        }
    }
}

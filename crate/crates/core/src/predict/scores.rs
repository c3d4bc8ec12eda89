use serde::{Deserialize, Serialize};

/// One-vs-rest scores for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    /// `(TP + TN) / total` for this class against the other.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Binary confusion counts with unhealthy as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(actual: &[bool], predicted: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            match (a, p) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// The same counts seen from the negative class.
    pub fn swapped(&self) -> Self {
        Confusion { tp: self.tn, fn_: self.fp, fp: self.fn_, tn: self.tp }
    }

    /// `[[healthy→healthy, healthy→unhealthy], [unhealthy→healthy, unhealthy→unhealthy]]`,
    /// rows actual, columns predicted.
    pub fn matrix(&self) -> [[usize; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }
}

fn ratio(num: usize, den: usize, zero_division: &mut bool) -> f64 {
    if den == 0 {
        *zero_division = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_scores(c: &Confusion, zero_division: &mut bool) -> ClassScores {
    let precision = ratio(c.tp, c.tp + c.fp, zero_division);
    let recall = ratio(c.tp, c.tp + c.fn_, zero_division);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        *zero_division = true;
        0.0
    };
    ClassScores { accuracy: ratio(c.tp + c.tn, c.total(), zero_division), precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub accuracy: f64,
    pub healthy: ClassScores,
    pub unhealthy: ClassScores,
    /// Rows actual, columns predicted, in (healthy, unhealthy) order.
    pub confusion: [[usize; 2]; 2],
    pub test_size: usize,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

impl EvalScores {
    pub fn from_confusion(c: &Confusion) -> Self {
        let mut zero_division = false;
        let unhealthy = class_scores(c, &mut zero_division);
        let healthy = class_scores(&c.swapped(), &mut zero_division);
        EvalScores {
            accuracy: ratio(c.tp + c.tn, c.total(), &mut zero_division),
            healthy,
            unhealthy,
            confusion: c.matrix(),
            test_size: c.total(),
            zero_division,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_confusion() {
        let s = EvalScores::from_confusion(&Confusion { tp: 7, fn_: 3, fp: 1, tn: 9 });
        assert!((s.unhealthy.recall - 0.7).abs() < 1e-12);
        assert!((s.unhealthy.precision - 0.875).abs() < 1e-12);
        assert!((s.unhealthy.f1 - 2.0 * 0.7 * 0.875 / 1.575).abs() < 1e-12);
        assert!((s.unhealthy.f1 - 0.7778).abs() < 1e-4);
        assert!((s.healthy.recall - 0.9).abs() < 1e-12);
        assert!((s.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(s.confusion, [[9, 1], [3, 7]]);
        assert!(!s.zero_division);
    }

    #[test]
    fn perfect_predictions() {
        let y = [true, false, true, false];
        let s = EvalScores::from_confusion(&Confusion::from_predictions(&y, &y));
        for c in [s.healthy, s.unhealthy] {
            assert_eq!([c.accuracy, c.precision, c.recall, c.f1], [1.0; 4]);
        }
        assert_eq!(s.accuracy, 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let actual = [true, true, false, false];
        let s = EvalScores::from_confusion(&Confusion::from_predictions(&actual, &[false; 4]));
        assert_eq!(s.healthy.recall, 1.0);
        assert_eq!(s.unhealthy.recall, 0.0);
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.unhealthy.f1, 0.0);
        assert!(s.zero_division);
    }

    #[test]
    fn consistent_with_matrix() {
        for (tp, fn_, fp, tn) in [(3, 1, 4, 1), (0, 5, 0, 9), (12, 0, 2, 6)] {
            let c = Confusion { tp, fn_, fp, tn };
            let s = EvalScores::from_confusion(&c);
            let m = s.confusion;
            assert_eq!(m.iter().flatten().sum::<usize>(), s.test_size);
            let recall = m[1][1] as f64 / (m[1][0] + m[1][1]) as f64;
            assert!((s.unhealthy.recall - recall).abs() < 1e-12);
            for c in [s.healthy, s.unhealthy] {
                for v in [c.accuracy, c.precision, c.recall, c.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}

//! ROC AUC and the aggregate evaluation report.

use serde::{Deserialize, Serialize};

use crate::engine::RunReport;
use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties counting half.
///
/// Computed from midranks in O(n log n).
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of positive ranks, doubled to stay in integers for tie groups.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1..=j share the midrank (i+1+j)/2
        let pos_in_group = sorted[i..j].iter().filter(|s| s.1).count() as u128;
        rank_sum_x2 += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n_pos = n_pos as u128;
    // U = R - n_pos(n_pos+1)/2, doubled
    let u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    Ok(u_x2 as f64 / (2 * n_pos * n_neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_scores(scores: &[(f64, bool)], theta: f64) -> Self {
        let mut c = Confusion::default();
        for &(p, label) in scores {
            match (p > theta, label) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub name: String,
    pub seed: Option<u64>,
    pub scored_objects: usize,
    pub hostile_objects: usize,
    pub hostile_alerted: usize,
    pub benign_alerted: usize,
    pub misses: usize,
    pub identity_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub theta: f64,
    pub roc_auc: Option<f64>,
    pub roc_auc_analytic: Option<f64>,
    /// Neural AUC with hostile scores cut off at their act time.
    pub roc_auc_before_act: Option<f64>,
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Mean delay from first target-zone presence to first neural alert, over alerted hostiles.
    pub mean_time_to_alert: Option<f64>,
    pub scenarios: Vec<ScenarioRow>,
}

/// Which per-object maximum to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Neural,
    Analytic,
    NeuralBeforeAct,
}

/// Scoring unit: each scored object's maximum in-zone probability, labeled by truth.
pub fn object_scores(reports: &[RunReport], kind: ScoreKind) -> Vec<(f64, bool)> {
    reports
        .iter()
        .flat_map(|r| r.objects.iter())
        .filter(|o| o.scored)
        .filter_map(|o| {
            let p = match kind {
                ScoreKind::Neural => o.max_p,
                ScoreKind::Analytic => o.max_p_analytic,
                ScoreKind::NeuralBeforeAct => o.max_p_before_act,
            };
            Some((p?, o.hostile?))
        })
        .collect()
}

pub fn evaluate(named: &[(String, RunReport)], theta: f64) -> Result<EvalReport> {
    if named.is_empty() {
        return Err(Error::EmptyInput("no run reports to evaluate"));
    }
    let reports: Vec<RunReport> = named.iter().map(|(_, r)| r.clone()).collect();
    let scores = object_scores(&reports, ScoreKind::Neural);
    let analytic = object_scores(&reports, ScoreKind::Analytic);
    let before_act = object_scores(&reports, ScoreKind::NeuralBeforeAct);
    let confusion = Confusion::from_scores(&scores, theta);

    let delays: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.objects.iter())
        .filter(|o| o.hostile == Some(true))
        .filter_map(|o| Some(o.first_alert_time? - o.first_zone_time?))
        .collect();
    let mean_time_to_alert = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64);

    let scenarios = named
        .iter()
        .map(|(name, r)| {
            let scored: Vec<_> = r.objects.iter().filter(|o| o.scored).collect();
            let count = |hostile: bool| {
                scored
                    .iter()
                    .filter(|o| o.hostile == Some(hostile) && o.max_p.is_some_and(|p| p > theta))
                    .count()
            };
            ScenarioRow {
                name: name.clone(),
                seed: r.seed,
                scored_objects: scored.len(),
                hostile_objects: scored.iter().filter(|o| o.hostile == Some(true)).count(),
                hostile_alerted: count(true),
                benign_alerted: count(false),
                misses: r.misses.len(),
                identity_accuracy: r.identity_accuracy,
            }
        })
        .collect();

    Ok(EvalReport {
        theta,
        roc_auc: roc_auc(&scores).ok(),
        roc_auc_analytic: roc_auc(&analytic).ok(),
        roc_auc_before_act: roc_auc(&before_act).ok(),
        precision: confusion.precision(),
        recall: confusion.recall(),
        confusion,
        mean_time_to_alert,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let s = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
        let flipped: Vec<_> = s.iter().map(|&(p, l)| (p, !l)).collect();
        assert_eq!(roc_auc(&flipped).unwrap(), 0.0);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(roc_auc(&[(0.5, true), (0.5, false)]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[(0.5, true), (0.5, false), (0.1, false)]).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_an_error() {
        assert_eq!(roc_auc(&[(0.5, true), (0.7, true)]), Err(Error::SingleClass));
        assert_eq!(roc_auc(&[]), Err(Error::SingleClass));
    }

    #[test]
    fn confusion_counts() {
        let s = [(0.9, true), (0.2, true), (0.8, false), (0.1, false), (0.05, false)];
        let c = Confusion::from_scores(&s, 0.5);
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fp: 1,
                tn: 2,
                fn_: 1
            }
        );
        assert_eq!(c.precision(), Some(0.5));
        assert_eq!(c.recall(), Some(0.5));
        assert_eq!(Confusion::default().precision(), None);
    }

    #[test]
    fn evaluate_needs_reports() {
        assert!(evaluate(&[], 0.7).is_err());
    }
}

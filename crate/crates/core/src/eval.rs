//! Confusion matrices, support-weighted precision/recall/F1, model
//! selection and confusion-based error analysis.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are gold labels, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != labels.len() * labels.len() {
            return Err(Error::Dimension {
                expected: labels.len() * labels.len(),
                found: counts.len(),
            });
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.k() + pred]
    }

    pub fn row(&self, gold: usize) -> &[u64] {
        &self.counts[gold * self.k()..(gold + 1) * self.k()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.row(class).iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.k()).map(|g| self.get(g, class)).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (g, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for c in self.row(g) {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(gold: &[usize], pred: &[usize], labels: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let k = labels.len();
    let mut counts = vec![0u64; k * k];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= k || p >= k {
            return Err(Error::invalid(format!(
                "label index {} outside codebook of {k}",
                g.max(p)
            )));
        }
        counts[g * k + p] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub weighted: Prf,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Per-class true-positive rate (recall).
    pub fn tpr(&self) -> Vec<f64> {
        self.per_class.iter().map(|c| c.recall).collect()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Undefined precision, recall or F1 count as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.k())
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: cm.labels[c].clone(),
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect();
    let n = total as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 { per_class.iter().map(|c| c.support as f64 / n * f(c)).sum() };
    let weighted = Prf {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
    };
    let correct: u64 = (0..cm.k()).map(|c| cm.get(c, c)).sum();
    Ok(MetricsReport {
        per_class,
        weighted,
        accuracy: correct as f64 / n,
    })
}

/// Highest weighted F1, then recall, then precision, then name.
pub fn select_best<'a, I>(candidates: I) -> Result<String>
where
    I: IntoIterator<Item = (&'a str, Prf)>,
{
    candidates
        .into_iter()
        .min_by(|(na, a), (nb, b)| {
            b.f1.total_cmp(&a.f1)
                .then(b.recall.total_cmp(&a.recall))
                .then(b.precision.total_cmp(&a.precision))
                .then(na.cmp(nb))
        })
        .map(|(name, _)| name.to_string())
        .ok_or_else(|| Error::invalid("no candidates to select from"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusedPair {
    pub gold: String,
    pub predicted: String,
    pub count: u64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub tpr: Vec<(String, f64)>,
    pub pairs: Vec<ConfusedPair>,
    pub total_errors: u64,
    /// Most frequent gold class.
    pub modal_class: String,
    /// Share of all errors that were predicted as the modal class; `None`
    /// when there are no errors.
    pub modal_bias: Option<f64>,
}

pub const SAMPLES_PER_PAIR: usize = 5;

/// `samples` holds the (id, text) of each evaluated record, aligned with
/// `gold` and `pred`.
pub fn error_report(
    cm: &ConfusionMatrix,
    samples: &[(String, String)],
    gold: &[usize],
    pred: &[usize],
    max_pairs: usize,
) -> Result<ErrorReport> {
    if samples.len() != gold.len() || gold.len() != pred.len() {
        return Err(Error::invalid("records, gold labels and predictions are not aligned"));
    }
    let k = cm.k();
    let tpr = (0..k)
        .map(|c| (cm.labels[c].clone(), ratio(cm.get(c, c), cm.support(c))))
        .collect();

    let mut off: Vec<(usize, usize, u64)> = (0..k)
        .flat_map(|g| (0..k).map(move |p| (g, p)))
        .filter(|&(g, p)| g != p)
        .map(|(g, p)| (g, p, cm.get(g, p)))
        .filter(|&(_, _, n)| n > 0)
        .collect();
    off.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    off.truncate(max_pairs);

    let pairs = off
        .into_iter()
        .map(|(g, p, count)| ConfusedPair {
            gold: cm.labels[g].clone(),
            predicted: cm.labels[p].clone(),
            count,
            samples: samples
                .iter()
                .zip(gold.iter().zip(pred))
                .filter(|(_, (&gi, &pi))| gi == g && pi == p)
                .take(SAMPLES_PER_PAIR)
                .map(|((id, text), _)| Sample {
                    id: id.clone(),
                    text: text.clone(),
                })
                .collect(),
        })
        .collect();

    let modal = (0..k)
        .max_by(|&a, &b| cm.support(a).cmp(&cm.support(b)).then(b.cmp(&a)))
        .unwrap_or(0);
    let total_errors = cm.total() - (0..k).map(|c| cm.get(c, c)).sum::<u64>();
    let into_modal: u64 = (0..k).filter(|&g| g != modal).map(|g| cm.get(g, modal)).sum();
    let modal_bias = (total_errors > 0).then(|| into_modal as f64 / total_errors as f64);

    Ok(ErrorReport {
        tpr,
        pairs,
        total_errors,
        modal_class: cm.labels.get(modal).cloned().unwrap_or_default(),
        modal_bias,
    })
}

impl ErrorReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Per-class true-positive rate\n");
        for (label, tpr) in &self.tpr {
            let _ = writeln!(out, "  {label:<40} {:6.2}%", tpr * 100.0);
        }
        let _ = writeln!(out, "\nTotal errors: {}", self.total_errors);
        match self.modal_bias {
            Some(b) => {
                let _ = writeln!(
                    out,
                    "Errors predicted as the majority class ({}): {:.2}%",
                    self.modal_class,
                    b * 100.0
                );
            }
            None => out.push_str("No misclassifications.\n"),
        }
        if !self.pairs.is_empty() {
            out.push_str("\nMost frequent confusions (gold -> predicted)\n");
        }
        for p in &self.pairs {
            let _ = writeln!(out, "  {} -> {}: {}", p.gold, p.predicted, p.count);
            for s in &p.samples {
                let _ = writeln!(out, "      [{}] {}", s.id, s.text);
            }
        }
        out
    }

    /// One JSON object per line: a summary record, one per class, one per pair.
    pub fn to_jsonl(&self) -> Result<String> {
        use serde_json::json;
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&json!({
            "record": "summary",
            "total_errors": self.total_errors,
            "modal_class": self.modal_class,
            "modal_bias": self.modal_bias,
        }))?);
        out.push('\n');
        for (label, tpr) in &self.tpr {
            out.push_str(&serde_json::to_string(
                &json!({"record": "tpr", "label": label, "tpr": tpr}),
            )?);
            out.push('\n');
        }
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(&json!({
                "record": "confusion",
                "gold": p.gold,
                "predicted": p.predicted,
                "count": p.count,
                "samples": p.samples,
            }))?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Ordering used by `select_best`, exposed for sorting summary tables.
pub fn compare_prf(a: &Prf, b: &Prf) -> Ordering {
    b.f1.total_cmp(&a.f1)
        .then(b.recall.total_cmp(&a.recall))
        .then(b.precision.total_cmp(&a.precision))
}

//! The prediction exchange format shared with external trainers:
//! `id<TAB>predicted_label<TAB>probabilities`, where the optional third
//! column holds comma-separated per-class probabilities in codebook order.

use std::collections::HashMap;

use crate::corpus::{detect_has_ids, parse_tsv, LabelClass, LabeledCorpus, Language};
use crate::error::{Error, Result};

pub const HEADER: &str = "id\tpredicted_label\tprobabilities";

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub label: LabelClass,
    pub probabilities: Option<Vec<f64>>,
}

pub fn to_tsv(rows: &[PredictionRow], language: Language) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(language.render(r.label));
        out.push('\t');
        if let Some(p) = &r.probabilities {
            let cells: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
        }
        out.push('\n');
    }
    out
}

fn is_exchange_header(line: &str) -> bool {
    let line = line.strip_suffix('\r').unwrap_or(line);
    line == HEADER || line == "id\tpredicted_label"
}

/// Reads an exchange-format file. A file that does not start with the
/// exchange header is read as a labeled corpus instead, its labels taken as
/// the predictions.
pub fn parse(content: &str, language: Language) -> Result<Vec<PredictionRow>> {
    if !content.lines().next().is_some_and(is_exchange_header) {
        let corpus = parse_tsv(content, language, detect_has_ids(content, true), true)?;
        return Ok(corpus
            .records()
            .iter()
            .map(|r| PredictionRow {
                id: r.id.clone(),
                label: r.label.expect("labeled corpus"),
                probabilities: None,
            })
            .collect());
    }
    let k = language.label_set().len();
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate().skip(1) {
        let row = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::MalformedRow {
                row,
                expected: "2 or 3".into(),
                found: fields.len(),
            });
        }
        let label = language.parse_label(fields[1]).ok_or_else(|| Error::UnknownLabel {
            row,
            label: fields[1].to_string(),
            language: language.to_string(),
        })?;
        let probabilities = match fields.get(2).filter(|f| !f.is_empty()) {
            None => None,
            Some(cell) => {
                let p = cell
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|e| Error::invalid(format!("row {row}: bad probability: {e}")))?;
                if p.len() != k {
                    return Err(Error::invalid(format!(
                        "row {row}: {} probabilities for {k} classes",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid(format!("row {row}: probability outside [0, 1]")));
                }
                Some(p)
            }
        };
        rows.push(PredictionRow {
            id: fields[0].to_string(),
            label,
            probabilities,
        });
    }
    Ok(rows)
}

/// Predicted labels in the order of the gold corpus, matched by id.
pub fn align(gold: &LabeledCorpus, predictions: &[PredictionRow]) -> Result<Vec<LabelClass>> {
    let mut by_id: HashMap<&str, LabelClass> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p.label).is_some() {
            return Err(Error::invalid(format!("duplicate prediction for id {:?}", p.id)));
        }
    }
    let aligned = gold
        .records()
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("no prediction for id {:?}", r.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if predictions.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold records",
            predictions.len(),
            gold.len()
        )));
    }
    Ok(aligned)
}

//! Per-language defaults, read from a built-in JSON table so that adding a
//! language is a data change.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

const TABLE: &str = include_str!("../data/hyperparams.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageDefaults {
    pub label_set: Language,
    pub lr_c: f64,
    pub svm_c: f64,
    pub max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedDefaults {
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub svm_epochs: usize,
    pub n_estimators: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_freq: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Table {
    pub languages: BTreeMap<String, LanguageDefaults>,
    pub shared: SharedDefaults,
}

pub fn table() -> &'static Table {
    static PARSED: OnceLock<Table> = OnceLock::new();
    PARSED.get_or_init(|| serde_json::from_str(TABLE).expect("built-in hyperparameter table is valid JSON"))
}

/// Defaults for a language name such as "tamil" or "synthetic".
pub fn for_language(name: &str) -> Result<LanguageDefaults> {
    let key = name.to_ascii_lowercase();
    let key = match key.as_str() {
        "ta" => "tamil",
        "ml" => "malayalam",
        "kn" => "kannada",
        k => k,
    };
    table().languages.get(key).copied().ok_or_else(|| {
        let known: Vec<&str> = table().languages.keys().map(String::as_str).collect();
        Error::invalid(format!("unknown language {name:?}; known: {}", known.join(", ")))
    })
}

pub fn shared() -> SharedDefaults {
    table().shared
}

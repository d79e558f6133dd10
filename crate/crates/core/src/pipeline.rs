//! End-to-end experiments: resolving per-language configuration, training
//! any of the supported model kinds on a corpus, predicting, scoring, saving
//! and loading model containers, and running the full model grid.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;
use crate::corpus::{Codebook, LabelClass, LabeledCorpus, Language};
use crate::ensemble;
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, ErrorReport, MetricsReport, Prf};
use crate::features::{encode_sequence, load_pretrained_vectors, IdSequence, SparseVector, TfidfModel};
use crate::forest::{self, FeatureSubsample, Forest, ForestParams, Tree, TreeParams};
use crate::hyperparams;
use crate::io::write_atomic;
use crate::linear::{self, LinearKind, LinearModel, TrainConfig};
use crate::neural::{self, Dims, NeuralModel, RunConfig, TrainRun, Variant};
use crate::predictions::{self, PredictionRow};
use crate::preprocess::{clean_and_tokenize, Vocabulary, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lr,
    Svm,
    Dt,
    Rf,
    Ensemble,
    Lstm,
    LstmAttn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Lr,
        ModelKind::Svm,
        ModelKind::Dt,
        ModelKind::Rf,
        ModelKind::Ensemble,
        ModelKind::Lstm,
        ModelKind::LstmAttn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Ensemble => "ensemble",
            ModelKind::Lstm => "lstm",
            ModelKind::LstmAttn => "lstm-attn",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Lstm | ModelKind::LstmAttn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || (s == "lstm_attn" && *m == ModelKind::LstmAttn))
            .ok_or_else(|| Error::invalid(format!("unknown model kind {s:?}")))
    }
}

/// Optional replacements for any default hyperparameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub lr_c: Option<f64>,
    pub svm_c: Option<f64>,
    pub lr_max_iter: Option<usize>,
    pub svm_epochs: Option<usize>,
    pub n_estimators: Option<usize>,
    pub max_len: Option<usize>,
    pub min_freq: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub attention: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

/// Every setting of one run, after defaults and overrides are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub language: String,
    pub label_set: Language,
    pub model: ModelKind,
    pub seed: u64,
    pub lr_c: f64,
    pub svm_c: f64,
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub svm_epochs: usize,
    pub n_estimators: usize,
    pub max_len: usize,
    pub min_freq: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl ResolvedConfig {
    pub fn resolve(language: &str, model: ModelKind, seed: u64, o: &Overrides) -> Result<Self> {
        let lang = hyperparams::for_language(language)?;
        let s = hyperparams::shared();
        let cfg = ResolvedConfig {
            language: language.to_ascii_lowercase(),
            label_set: lang.label_set,
            model,
            seed,
            lr_c: o.lr_c.unwrap_or(lang.lr_c),
            svm_c: o.svm_c.unwrap_or(lang.svm_c),
            lr_max_iter: o.lr_max_iter.unwrap_or(s.lr_max_iter),
            lr_tol: s.lr_tol,
            svm_epochs: o.svm_epochs.unwrap_or(s.svm_epochs),
            n_estimators: o.n_estimators.unwrap_or(s.n_estimators),
            max_len: o.max_len.unwrap_or(lang.max_len),
            min_freq: o.min_freq.unwrap_or(s.min_freq),
            embed_dim: o.embed_dim.unwrap_or(s.embed_dim),
            hidden: o.hidden.unwrap_or(s.hidden),
            attention: o.attention.unwrap_or(s.attention),
            dropout: o.dropout.unwrap_or(s.dropout),
            epochs: o.epochs.unwrap_or(s.epochs),
            batch_size: o.batch_size.unwrap_or(s.batch_size),
            learning_rate: o.learning_rate.unwrap_or(s.learning_rate),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_c", self.lr_c),
            ("svm_c", self.svm_c),
            ("learning_rate", self.learning_rate),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
        let counts = [
            ("lr_max_iter", self.lr_max_iter),
            ("svm_epochs", self.svm_epochs),
            ("n_estimators", self.n_estimators),
            ("max_len", self.max_len),
            ("min_freq", self.min_freq),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("attention", self.attention),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn codebook(&self) -> Codebook {
        self.label_set.codebook()
    }

    fn logreg(&self) -> TrainConfig {
        TrainConfig {
            c: self.lr_c,
            max_iter: self.lr_max_iter,
            tol: self.lr_tol,
            seed: self.seed,
        }
    }

    fn svm(&self) -> TrainConfig {
        TrainConfig {
            c: self.svm_c,
            max_iter: self.svm_epochs,
            tol: self.lr_tol,
            seed: self.seed,
        }
    }

    fn tree(&self) -> TreeParams {
        TreeParams {
            seed: self.seed,
            ..TreeParams::default()
        }
    }

    fn forest(&self) -> ForestParams {
        ForestParams {
            n_estimators: self.n_estimators,
            bootstrap: true,
            tree: TreeParams {
                max_features: FeatureSubsample::Sqrt,
                seed: self.seed,
                ..TreeParams::default()
            },
        }
    }

    fn dims(&self) -> Dims {
        Dims {
            embed: self.embed_dim,
            hidden: self.hidden,
            attention: self.attention,
        }
    }

    fn run(&self) -> RunConfig {
        RunConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Linear(LinearModel),
    Tree(Tree),
    Forest(Forest),
    Ensemble {
        svm: LinearModel,
        lr: LinearModel,
        rf: Forest,
        dt: Tree,
    },
    Neural {
        vocabulary: Vocabulary,
        model: NeuralModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ResolvedConfig,
    /// Fitted tf-idf table for the classical models.
    pub tfidf: Option<TfidfModel>,
    pub trained: Trained,
    /// Training curve of neural models trained in this process.
    pub run: Option<TrainRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Class probabilities (logistic regression, neural models) or vote
    /// shares (forest, ensemble); absent for SVM and single trees.
    pub scores: Option<Vec<f64>>,
}

fn tokenized(corpus: &LabeledCorpus) -> Vec<Vec<String>> {
    corpus
        .records()
        .par_iter()
        .map(|r| clean_and_tokenize(&r.text))
        .collect()
}

/// Texts that clean to nothing are encoded as a single unknown token.
fn sequences(vocabulary: &Vocabulary, docs: &[Vec<String>], max_len: usize) -> Vec<IdSequence> {
    docs.iter()
        .map(|d| {
            let mut s = encode_sequence(vocabulary, d, max_len);
            if s.true_length == 0 {
                s.ids[0] = UNK;
                s.true_length = 1;
            }
            s
        })
        .collect()
}

fn check_language(config: &ResolvedConfig, corpus: &LabeledCorpus) -> Result<()> {
    if corpus.language != config.label_set {
        return Err(Error::invalid(format!(
            "corpus language {} does not match the configured label set {}",
            corpus.language, config.label_set
        )));
    }
    Ok(())
}

fn train_ensemble_members(
    config: &ResolvedConfig,
    x: &[SparseVector],
    y: &[usize],
    k: usize,
    f: usize,
) -> Result<Trained> {
    let (svm, lr) = rayon::join(
        || linear::train_svm(x, y, k, f, &config.svm()),
        || linear::train_logreg(x, y, k, f, &config.logreg()),
    );
    let (rf, dt) = rayon::join(
        || forest::train_forest(x, y, k, f, &config.forest()),
        || forest::train_tree(x, y, k, f, &config.tree()),
    );
    Ok(Trained::Ensemble {
        svm: svm?,
        lr: lr?,
        rf: rf?,
        dt: dt?,
    })
}

impl Classifier {
    /// Trains the configured model. Neural models need a validation corpus
    /// for best-epoch selection and can start from pretrained vectors.
    pub fn train(
        config: &ResolvedConfig,
        train: &LabeledCorpus,
        valid: Option<&LabeledCorpus>,
        vectors: Option<&Path>,
    ) -> Result<Self> {
        check_language(config, train)?;
        let codebook = config.codebook();
        let y = train.label_indices(&codebook)?;
        let k = codebook.len();
        let docs = tokenized(train);

        if config.model.is_neural() {
            let valid = valid.ok_or_else(|| Error::invalid("neural models need a validation corpus"))?;
            check_language(config, valid)?;
            let vocabulary = Vocabulary::build(&docs, config.min_freq)?;
            let pretrained = match vectors {
                Some(path) => {
                    let loaded = load_pretrained_vectors(path, &vocabulary, config.embed_dim, config.seed)?;
                    log::info!(
                        "pretrained vectors cover {:.1}% of the vocabulary",
                        loaded.coverage * 100.0
                    );
                    Some(loaded.table)
                }
                None => None,
            };
            let variant = match config.model {
                ModelKind::Lstm => Variant::Lstm,
                _ => Variant::LstmAttn,
            };
            let mut model = NeuralModel::init(
                vocabulary.len(),
                k,
                config.seed,
                pretrained.as_ref(),
                variant,
                config.dims(),
            )?;
            model.dropout_rate = config.dropout;
            let train_x = sequences(&vocabulary, &docs, config.max_len);
            let valid_x = sequences(&vocabulary, &tokenized(valid), config.max_len);
            let valid_y = valid.label_indices(&codebook)?;
            let (model, run) = neural::train(model, &train_x, &y, &valid_x, &valid_y, &config.run())?;
            return Ok(Classifier {
                config: config.clone(),
                tfidf: None,
                trained: Trained::Neural { vocabulary, model },
                run: Some(run),
            });
        }

        if matches!(config.model, ModelKind::Lr | ModelKind::Svm | ModelKind::Ensemble) {
            if let Some(missing) = (0..k).find(|c| !y.contains(c)) {
                let label = train.language.render(codebook.class(missing));
                return Err(Error::EmptyClass(label.to_string()));
            }
        }
        let tfidf = TfidfModel::fit(&docs)?;
        let x = tfidf.transform_all(&docs);
        let f = tfidf.dim();
        let trained = match config.model {
            ModelKind::Lr => Trained::Linear(linear::train_logreg(&x, &y, k, f, &config.logreg())?),
            ModelKind::Svm => Trained::Linear(linear::train_svm(&x, &y, k, f, &config.svm())?),
            ModelKind::Dt => Trained::Tree(forest::train_tree(&x, &y, k, f, &config.tree())?),
            ModelKind::Rf => Trained::Forest(forest::train_forest(&x, &y, k, f, &config.forest())?),
            ModelKind::Ensemble => train_ensemble_members(config, &x, &y, k, f)?,
            ModelKind::Lstm | ModelKind::LstmAttn => unreachable!("handled above"),
        };
        Ok(Classifier {
            config: config.clone(),
            tfidf: Some(tfidf),
            trained,
            run: None,
        })
    }

    pub fn predict(&self, corpus: &LabeledCorpus) -> Result<Vec<Prediction>> {
        check_language(&self.config, corpus)?;
        let docs = tokenized(corpus);
        if let Trained::Neural { vocabulary, model } = &self.trained {
            let seqs = sequences(vocabulary, &docs, self.config.max_len);
            let mut out = Vec::with_capacity(seqs.len());
            for chunk in seqs.chunks(self.config.batch_size) {
                for p in model.predict_proba(chunk)? {
                    out.push(Prediction {
                        label: linear::argmax(&p),
                        scores: Some(p),
                    });
                }
            }
            return Ok(out);
        }
        let tfidf = self
            .tfidf
            .as_ref()
            .ok_or_else(|| Error::invalid("classical model without a tf-idf table"))?;
        let x = tfidf.transform_all(&docs);
        x.par_iter().map(|xi| self.predict_vector(xi)).collect()
    }

    fn predict_vector(&self, x: &SparseVector) -> Result<Prediction> {
        Ok(match &self.trained {
            Trained::Linear(m) => {
                let (label, scores) = m.predict(x)?;
                Prediction {
                    label,
                    scores: (m.kind == LinearKind::Logreg).then_some(scores),
                }
            }
            Trained::Tree(t) => Prediction {
                label: t.predict(x)?,
                scores: None,
            },
            Trained::Forest(f) => {
                let (label, shares) = f.predict(x)?;
                Prediction {
                    label,
                    scores: Some(shares),
                }
            }
            Trained::Ensemble { svm, lr, rf, dt } => {
                let votes = [svm.predict(x)?.0, lr.predict(x)?.0, rf.predict(x)?.0, dt.predict(x)?];
                Prediction {
                    label: ensemble::vote(&votes)?,
                    scores: Some(ensemble::vote_shares(&votes, svm.n_classes)),
                }
            }
            Trained::Neural { .. } => unreachable!("neural models predict in batches"),
        })
    }

    /// Predictions in the exchange format, keyed by the corpus ids.
    pub fn prediction_rows(&self, corpus: &LabeledCorpus) -> Result<Vec<PredictionRow>> {
        let codebook = self.config.codebook();
        Ok(corpus
            .records()
            .iter()
            .zip(self.predict(corpus)?)
            .map(|(r, p)| PredictionRow {
                id: r.id.clone(),
                label: codebook.class(p.label),
                probabilities: p.scores,
            })
            .collect())
    }

    pub fn to_container(&self) -> Result<Container> {
        let cfg = &self.config;
        let labels = cfg.codebook().names();
        let mut c = Container::new(cfg.model.name(), labels.clone());
        let k = labels.len();
        let mut meta = serde_json::Map::new();
        meta.insert("config".into(), serde_json::to_value(cfg)?);

        if let Some(t) = &self.tfidf {
            meta.insert("vocabulary".into(), serde_json::to_value(&t.vocabulary)?);
            meta.insert("n_docs".into(), json!(t.n_docs));
            c.push_tensor("tfidf.idf", vec![t.dim()], t.idf.clone())?;
        }
        let push_linear = |c: &mut Container, prefix: &str, m: &LinearModel| -> Result<()> {
            c.push_tensor(
                format!("{prefix}weights"),
                vec![m.n_classes, m.n_features],
                m.weights.clone(),
            )?;
            c.push_tensor(format!("{prefix}bias"), vec![m.n_classes], m.bias.clone())
        };
        match &self.trained {
            Trained::Linear(m) => {
                c.c = Some(m.c);
                push_linear(&mut c, "", m)?;
            }
            Trained::Tree(t) => {
                meta.insert("tree".into(), serde_json::to_value(t)?);
            }
            Trained::Forest(f) => {
                meta.insert("forest".into(), serde_json::to_value(f)?);
            }
            Trained::Ensemble { svm, lr, rf, dt } => {
                push_linear(&mut c, "svm.", svm)?;
                push_linear(&mut c, "lr.", lr)?;
                meta.insert("forest".into(), serde_json::to_value(rf)?);
                meta.insert("tree".into(), serde_json::to_value(dt)?);
            }
            Trained::Neural { vocabulary, model } => {
                meta.insert("vocabulary".into(), serde_json::to_value(vocabulary)?);
                meta.insert(
                    "neural".into(),
                    json!({
                        "variant": model.variant,
                        "dims": model.dims,
                        "vocab_size": model.vocab_size,
                        "n_classes": model.n_classes,
                        "dropout_rate": model.dropout_rate,
                    }),
                );
                if let Some(run) = &self.run {
                    meta.insert("best_epoch".into(), json!(run.best_epoch));
                }
                for (name, shape, data) in model.tensors() {
                    c.push_tensor(name, shape, data.to_vec())?;
                }
            }
        }
        if c.labels.len() != k {
            return Err(Error::Container("label count changed while encoding".into()));
        }
        c.meta = serde_json::Value::Object(meta);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = c
            .meta
            .as_object()
            .ok_or_else(|| Error::Container("manifest has no meta object".into()))?;
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::Container(format!("manifest meta lacks {name}")))
        };
        let config: ResolvedConfig = serde_json::from_value(field("config")?)?;
        if config.model.name() != c.kind {
            return Err(Error::Container(format!(
                "kind {} disagrees with configured model {}",
                c.kind, config.model
            )));
        }
        if c.labels != config.codebook().names() {
            return Err(Error::Container(
                "label list does not match the language codebook".into(),
            ));
        }
        let k = c.labels.len();

        let tfidf = if config.model.is_neural() {
            None
        } else {
            let vocabulary: Vocabulary = serde_json::from_value(field("vocabulary")?)?;
            let n_docs: usize = serde_json::from_value(field("n_docs")?)?;
            let idf = c.tensor_shaped("tfidf.idf", &[vocabulary.len()])?;
            Some(TfidfModel::from_parts(vocabulary, idf, n_docs)?)
        };
        let f = tfidf.as_ref().map_or(0, TfidfModel::dim);
        let read_linear = |prefix: &str, kind: LinearKind, cval: f64| -> Result<LinearModel> {
            Ok(LinearModel {
                kind,
                n_classes: k,
                n_features: f,
                weights: c.tensor_shaped(&format!("{prefix}weights"), &[k, f])?,
                bias: c.tensor_shaped(&format!("{prefix}bias"), &[k])?,
                c: cval,
            })
        };

        let trained = match config.model {
            ModelKind::Lr => Trained::Linear(read_linear("", LinearKind::Logreg, config.lr_c)?),
            ModelKind::Svm => Trained::Linear(read_linear("", LinearKind::Svm, config.svm_c)?),
            ModelKind::Dt => Trained::Tree(serde_json::from_value(field("tree")?)?),
            ModelKind::Rf => Trained::Forest(serde_json::from_value(field("forest")?)?),
            ModelKind::Ensemble => Trained::Ensemble {
                svm: read_linear("svm.", LinearKind::Svm, config.svm_c)?,
                lr: read_linear("lr.", LinearKind::Logreg, config.lr_c)?,
                rf: serde_json::from_value(field("forest")?)?,
                dt: serde_json::from_value(field("tree")?)?,
            },
            ModelKind::Lstm | ModelKind::LstmAttn => {
                let vocabulary: Vocabulary = serde_json::from_value(field("vocabulary")?)?;
                let info = field("neural")?;
                let variant: Variant = serde_json::from_value(info["variant"].clone())?;
                let dims: Dims = serde_json::from_value(info["dims"].clone())?;
                let mut model = NeuralModel::init(vocabulary.len(), k, 0, None, variant, dims)?;
                model.dropout_rate = serde_json::from_value(info["dropout_rate"].clone())?;
                let shapes: Vec<Vec<usize>> = model.tensors().into_iter().map(|(_, s, _)| s).collect();
                for ((name, slot), shape) in model.tensors_mut().into_iter().zip(shapes) {
                    *slot = c.tensor_shaped(name, &shape)?;
                }
                if !model.is_finite() {
                    return Err(Error::Container("neural parameters are not finite".into()));
                }
                Trained::Neural { vocabulary, model }
            }
        };
        Ok(Classifier {
            config,
            tfidf,
            trained,
            run: None,
        })
    }

    pub fn save(&self, manifest_path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(manifest_path)
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(manifest_path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub errors: ErrorReport,
}

/// Scores predicted classes against a labeled corpus, in corpus order.
pub fn evaluate(gold: &LabeledCorpus, predicted: &[LabelClass]) -> Result<Evaluation> {
    let codebook = gold.language.codebook();
    let g = gold.label_indices(&codebook)?;
    let p = predicted
        .iter()
        .map(|&c| {
            codebook
                .index_of(c)
                .ok_or_else(|| Error::invalid(format!("{c:?} is not a {} label", gold.language)))
        })
        .collect::<Result<Vec<_>>>()?;
    let confusion = eval::confusion(&g, &p, &codebook.names())?;
    let metrics = eval::metrics(&confusion)?;
    let samples: Vec<(String, String)> = gold.records().iter().map(|r| (r.id.clone(), r.text.clone())).collect();
    let errors = eval::error_report(&confusion, &samples, &g, &p, 10)?;
    Ok(Evaluation {
        confusion,
        metrics,
        errors,
    })
}

/// The most frequent training class, predicted for every test record.
pub fn majority_baseline(train: &LabeledCorpus, test: &LabeledCorpus) -> Result<Evaluation> {
    let dist = crate::corpus::class_distribution(train)?;
    let majority = dist
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(c, _)| *c)
        .ok_or_else(|| Error::invalid("empty label set"))?;
    evaluate(test, &vec![majority; test.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub model: ModelKind,
    pub weighted: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub language: String,
    pub seed: u64,
    pub rows: Vec<GridRow>,
    pub baseline: Prf,
    pub best: String,
}

impl GridSummary {
    /// Model x P/R/F table, one row per model.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tprecision\trecall\tf1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\n",
                r.model, r.weighted.precision, r.weighted.recall, r.weighted.f1
            ));
        }
        out
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Artifacts of one trained model: container, resolved config, test
/// predictions, metrics, error report and (neural) training curve.
pub fn write_run_artifacts(dir: &Path, classifier: &Classifier, test: &LabeledCorpus) -> Result<Evaluation> {
    classifier.save(dir.join("model.json"))?;
    write_json(&dir.join("config.json"), &classifier.config)?;
    let rows = classifier.prediction_rows(test)?;
    write_atomic(
        dir.join("predictions.tsv"),
        predictions::to_tsv(&rows, test.language).as_bytes(),
    )?;
    if let Some(run) = &classifier.run {
        write_atomic(dir.join("curve.jsonl"), run.curve_jsonl()?.as_bytes())?;
    }
    let labels: Vec<LabelClass> = rows.iter().map(|r| r.label).collect();
    let evaluation = evaluate(test, &labels)?;
    write_json(&dir.join("metrics.json"), &evaluation.metrics)?;
    write_atomic(dir.join("confusion.tsv"), evaluation.confusion.to_tsv().as_bytes())?;
    write_atomic(dir.join("report.txt"), evaluation.errors.to_text().as_bytes())?;
    Ok(evaluation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub language: String,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub overrides: Overrides,
}

/// Trains every requested model on `train`, scores it on `test`, and writes
/// one directory per model plus `summary.tsv`, `summary.json` and the
/// resolved `config.json` under `out`.
pub fn run_grid(
    opts: &GridOptions,
    train: &LabeledCorpus,
    valid: &LabeledCorpus,
    test: &LabeledCorpus,
    vectors: Option<&Path>,
    out: &Path,
) -> Result<GridSummary> {
    if opts.models.is_empty() {
        return Err(Error::invalid("no models requested"));
    }
    let configs = opts
        .models
        .iter()
        .map(|&m| ResolvedConfig::resolve(&opts.language, m, opts.seed, &opts.overrides))
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("config.json"), &json!({ "grid": opts, "resolved": configs }))?;

    let rows = configs
        .par_iter()
        .map(|cfg| {
            log::info!("training {}", cfg.model);
            let classifier = Classifier::train(cfg, train, Some(valid), vectors)?;
            let evaluation = write_run_artifacts(&out.join(cfg.model.name()), &classifier, test)?;
            Ok(GridRow {
                model: cfg.model,
                weighted: evaluation.metrics.weighted,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = eval::select_best(rows.iter().map(|r| (r.model.name(), r.weighted)))?;
    let baseline = majority_baseline(train, test)?.metrics.weighted;
    let summary = GridSummary {
        language: opts.language.clone(),
        seed: opts.seed,
        rows,
        baseline,
        best,
    };
    write_atomic(out.join("summary.tsv"), summary.to_tsv().as_bytes())?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

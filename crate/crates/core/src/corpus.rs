//! Labeled corpora: the six-way offensive-language label schema, TSV loading
//! and writing, class histograms, and a seeded synthetic generator that mimics
//! the imbalance of the shared-task data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Tamil,
    Malayalam,
    Kannada,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Tamil, Language::Malayalam, Language::Kannada];

    pub fn name(self) -> &'static str {
        match self {
            Language::Tamil => "tamil",
            Language::Malayalam => "malayalam",
            Language::Kannada => "kannada",
        }
    }

    /// Label classes that occur in this language's corpora, in codebook order.
    pub fn label_set(self) -> &'static [LabelClass] {
        use LabelClass::*;
        match self {
            Language::Malayalam => &[NotOffensive, TargetedIndividual, TargetedGroup, Untargeted, NotLanguage],
            _ => &LabelClass::ALL,
        }
    }

    pub fn codebook(self) -> Codebook {
        Codebook::new(self)
    }

    pub fn supports(self, class: LabelClass) -> bool {
        self.label_set().contains(&class)
    }

    /// The label string used in the shared-task files.
    pub fn render(self, class: LabelClass) -> &'static str {
        match class {
            LabelClass::NotOffensive => "Not_offensive",
            LabelClass::TargetedOther => "Offensive_Targeted_Insult_Other",
            LabelClass::TargetedIndividual => "Offensive_Targeted_Insult_Individual",
            LabelClass::TargetedGroup => "Offensive_Targeted_Insult_Group",
            LabelClass::Untargeted => "Offensive_Untargetede",
            LabelClass::NotLanguage => match self {
                Language::Tamil => "not-Tamil",
                Language::Malayalam => "not-malayalam",
                Language::Kannada => "not-Kannada",
            },
        }
    }

    /// Short code: NF, OTIO, OTII, OTIG, OU, and NT/NM/NK.
    pub fn short_code(self, class: LabelClass) -> &'static str {
        match class {
            LabelClass::NotOffensive => "NF",
            LabelClass::TargetedOther => "OTIO",
            LabelClass::TargetedIndividual => "OTII",
            LabelClass::TargetedGroup => "OTIG",
            LabelClass::Untargeted => "OU",
            LabelClass::NotLanguage => match self {
                Language::Tamil => "NT",
                Language::Malayalam => "NM",
                Language::Kannada => "NK",
            },
        }
    }

    /// Accepts the file spelling (case-insensitive, with or without the
    /// trailing "e" typo of the untargeted class) and the short codes.
    pub fn parse_label(self, s: &str) -> Option<LabelClass> {
        let s = s.trim();
        let lower = s.to_lowercase();
        let class = LabelClass::ALL
            .into_iter()
            .find(|&c| lower == self.render(c).to_lowercase() || s.eq_ignore_ascii_case(self.short_code(c)));
        let class = class.or(match lower.as_str() {
            "offensive_untargeted" => Some(LabelClass::Untargeted),
            _ => None,
        })?;
        self.supports(class).then_some(class)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tamil" | "ta" => Ok(Language::Tamil),
            "malayalam" | "ml" => Ok(Language::Malayalam),
            "kannada" | "kn" => Ok(Language::Kannada),
            other => Err(Error::invalid(format!("unknown language {other:?}"))),
        }
    }
}

/// The six shared-task classes. `NotLanguage` renders as not-Tamil,
/// not-malayalam or not-Kannada depending on the corpus language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelClass {
    NotOffensive,
    TargetedOther,
    TargetedIndividual,
    TargetedGroup,
    Untargeted,
    NotLanguage,
}

impl LabelClass {
    pub const ALL: [LabelClass; 6] = [
        LabelClass::NotOffensive,
        LabelClass::TargetedOther,
        LabelClass::TargetedIndividual,
        LabelClass::TargetedGroup,
        LabelClass::Untargeted,
        LabelClass::NotLanguage,
    ];
}

/// Ordered label set of one language; model outputs are indices into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    language: Language,
    classes: Vec<LabelClass>,
}

impl Codebook {
    pub fn new(language: Language) -> Self {
        Codebook {
            language,
            classes: language.label_set().to_vec(),
        }
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[LabelClass] {
        &self.classes
    }

    pub fn index_of(&self, class: LabelClass) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    pub fn class(&self, index: usize) -> LabelClass {
        self.classes[index]
    }

    pub fn names(&self) -> Vec<String> {
        self.classes
            .iter()
            .map(|&c| self.language.render(c).to_string())
            .collect()
    }

    pub fn short_codes(&self) -> Vec<&'static str> {
        self.classes.iter().map(|&c| self.language.short_code(c)).collect()
    }

    pub fn parse(&self, s: &str) -> Option<usize> {
        self.language.parse_label(s).and_then(|c| self.index_of(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: Option<LabelClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub language: Language,
    pub split: Option<Split>,
    /// Whether ids came from the file (and are written back as column 1).
    pub has_ids: bool,
    records: Vec<Record>,
    warnings: Vec<String>,
}

impl LabeledCorpus {
    pub fn new(language: Language, records: Vec<Record>, has_ids: bool) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    row: i + 1,
                });
            }
            if let Some(label) = r.label {
                if !language.supports(label) {
                    return Err(Error::UnknownLabel {
                        row: i + 1,
                        label: format!("{label:?}"),
                        language: language.to_string(),
                    });
                }
            }
        }
        Ok(LabeledCorpus {
            language,
            split: None,
            has_ids,
            records,
            warnings: Vec::new(),
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// Gold labels as codebook indices.
    pub fn label_indices(&self, codebook: &Codebook) -> Result<Vec<usize>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let class = r
                    .label
                    .ok_or_else(|| Error::invalid(format!("record {} ({}) is unlabeled", i + 1, r.id)))?;
                codebook.index_of(class).ok_or_else(|| Error::UnknownLabel {
                    row: i + 1,
                    label: format!("{class:?}"),
                    language: codebook.language().to_string(),
                })
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            if self.has_ids {
                out.push_str(&r.id);
                out.push('\t');
            }
            out.push_str(&r.text);
            if let Some(label) = r.label {
                out.push('\t');
                out.push_str(self.language.render(label));
            }
            out.push('\n');
        }
        out
    }
}

fn is_header(fields: &[&str]) -> bool {
    matches!(fields, ["text", "category"] | ["id", "text", "category"])
}

/// Parses TSV rows "text<TAB>label" or "id<TAB>text<TAB>label"; when
/// `labeled` is false the label column is absent.
pub fn parse_tsv(content: &str, language: Language, has_ids: bool, labeled: bool) -> Result<LabeledCorpus> {
    let expected = usize::from(has_ids) + 1 + usize::from(labeled);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut data_row = 0usize;

    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        if lineno == 0 && is_header(&fields) {
            continue;
        }
        if line.is_empty() && expected > 1 {
            warnings.push(format!("row {line_no}: blank line skipped"));
            continue;
        }
        if fields.len() != expected {
            return Err(Error::MalformedRow {
                row: line_no,
                expected: expected.to_string(),
                found: fields.len(),
            });
        }
        data_row += 1;
        let (id, rest) = if has_ids {
            (fields[0].to_string(), &fields[1..])
        } else {
            (format!("r{data_row}"), &fields[..])
        };
        let text = rest[0].to_string();
        if text.trim().is_empty() {
            warnings.push(format!("row {line_no}: empty text"));
        }
        let label = if labeled {
            let raw = rest[1];
            Some(language.parse_label(raw).ok_or_else(|| Error::UnknownLabel {
                row: line_no,
                label: raw.to_string(),
                language: language.to_string(),
            })?)
        } else {
            None
        };
        records.push(Record { id, text, label });
    }

    if records.is_empty() {
        warnings.push("corpus is empty".to_string());
    }
    let mut corpus = LabeledCorpus::new(language, records, has_ids)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    corpus.warnings = warnings;
    Ok(corpus)
}

pub fn load_tsv(path: impl AsRef<Path>, language: Language, has_ids: bool) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&content, language, has_ids, true)
}

/// Loads prediction inputs without a label column.
pub fn load_unlabeled_tsv(path: impl AsRef<Path>, language: Language, has_ids: bool) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&content, language, has_ids, false)
}

/// Guesses whether a TSV carries an id column from its first data row.
pub fn detect_has_ids(content: &str, labeled: bool) -> bool {
    let with_ids = 2 + usize::from(labeled);
    content
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .find(|l| !l.is_empty() && !is_header(&l.split('\t').collect::<Vec<_>>()))
        .map(|l| l.split('\t').count() == with_ids)
        .unwrap_or(false)
}

pub fn class_distribution(corpus: &LabeledCorpus) -> Result<BTreeMap<LabelClass, usize>> {
    let mut counts: BTreeMap<LabelClass, usize> = corpus.language.label_set().iter().map(|&c| (c, 0)).collect();
    for (i, r) in corpus.records.iter().enumerate() {
        let label = r
            .label
            .ok_or_else(|| Error::invalid(format!("record {} ({}) is unlabeled", i + 1, r.id)))?;
        *counts.entry(label).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Kannada training-split class sizes, used as the default synthetic imbalance.
pub const KANNADA_TRAIN_COUNTS: [(LabelClass, f64); 6] = [
    (LabelClass::NotOffensive, 3544.0),
    (LabelClass::TargetedOther, 123.0),
    (LabelClass::TargetedIndividual, 487.0),
    (LabelClass::TargetedGroup, 329.0),
    (LabelClass::Untargeted, 212.0),
    (LabelClass::NotLanguage, 1522.0),
];

/// Configuration of the synthetic code-mixed corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub language: Language,
    pub class_weights: Vec<(LabelClass, f64)>,
    pub shared_pool: Vec<String>,
    pub class_pools: Vec<(LabelClass, Vec<String>)>,
    pub size: usize,
    /// Probability that a token comes from the class pool instead of the shared one.
    pub class_token_rate: f64,
    /// Probability that a token carries punctuation, digits or an emoji.
    pub noise_rate: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

const SHARED_POOL: &[&str] = &[
    "movie",
    "trailer",
    "super",
    "sir",
    "bro",
    "guru",
    "boss",
    "anna",
    "nodi",
    "chennagide",
    "cinema",
    "song",
    "darshan",
    "yash",
    "waiting",
    "release",
    "hit",
    "first",
    "day",
    "show",
    "fans",
    "kannada",
    "namma",
    "huduga",
    "hudugi",
    "maga",
    "yenu",
    "illa",
    "houdu",
    "sakkath",
    "mass",
    "level",
    "director",
    "acting",
    "music",
    "video",
    "views",
    "like",
    "comment",
    "channel",
    "love",
    "best",
    "wow",
    "story",
    "hero",
    "heroine",
    "watch",
    "ಸೂಪರ್",
    "ಚಿತ್ರ",
    "ಹಾಡು",
    "ನಮ್ಮ",
    "ಕನ್ನಡ",
    "ಅಣ್ಣ",
    "ಬಾಸ್",
    "ಗುರು",
    "ಸಿನಿಮಾ",
    "ನೋಡಿ",
    "ಹೀರೋ",
];

fn default_class_pool(class: LabelClass) -> &'static [&'static str] {
    match class {
        LabelClass::NotOffensive => &[
            "wonderful",
            "blockbuster",
            "congrats",
            "proud",
            "beautiful",
            "ಅದ್ಭುತ",
            "ಶುಭಾಶಯ",
            "thanks",
            "respect",
            "legend",
            "awesome",
            "ಜೈ",
        ],
        LabelClass::TargetedOther => &[
            "waste",
            "useless",
            "flop",
            "ಕಚಡ",
            "bekar",
            "ugly",
            "worst",
            "fake",
            "hopeless",
            "ಕೆಟ್ಟ",
            "dislike",
            "boring",
        ],
        LabelClass::TargetedIndividual => &[
            "loafer",
            "ಲೋಫರ್",
            "bewarsi",
            "idiot",
            "stupid",
            "ಮೂರ್ಖ",
            "joker",
            "chamcha",
            "liar",
            "ninna",
            "avanu",
            "fool",
        ],
        LabelClass::TargetedGroup => &[
            "community",
            "ಅವರು",
            "gang",
            "party",
            "group",
            "ಜನ",
            "people",
            "gumpu",
            "ellaru",
            "team",
            "paksha",
            "avaru",
        ],
        LabelClass::Untargeted => &[
            "nonsense",
            "rubbish",
            "damn",
            "ಛೀ",
            "thoo",
            "hell",
            "bloody",
            "crap",
            "ಹೊಲಸು",
            "kachda",
            "sucks",
            "shame",
        ],
        LabelClass::NotLanguage => &[
            "ennada", "vera", "semma", "thala", "nanba", "machan", "bhai", "kya", "acha", "hai", "yaar", "paisa",
        ],
    }
}

const NOISE: &[&str] = &["!!", "...", "😂", "👍🏽", "100%", "#", "?", "2021", "❤️", "@"];

impl SynthSpec {
    /// Kannada-like corpus with the training-split class imbalance.
    pub fn kannada_like(size: usize) -> Self {
        Self::with_weights(Language::Kannada, KANNADA_TRAIN_COUNTS.to_vec(), size)
    }

    pub fn with_weights(language: Language, class_weights: Vec<(LabelClass, f64)>, size: usize) -> Self {
        let class_pools = class_weights
            .iter()
            .map(|&(c, _)| (c, default_class_pool(c).iter().map(|s| s.to_string()).collect()))
            .collect();
        SynthSpec {
            language,
            class_weights,
            shared_pool: SHARED_POOL.iter().map(|s| s.to_string()).collect(),
            class_pools,
            size,
            class_token_rate: 0.35,
            noise_rate: 0.1,
            min_tokens: 3,
            max_tokens: 15,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("synthetic corpus size must be at least 1"));
        }
        if self.class_weights.is_empty() {
            return Err(Error::invalid("no class weights given"));
        }
        if self.shared_pool.is_empty() {
            return Err(Error::invalid("shared token pool is empty"));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::invalid("token length range is empty"));
        }
        if !(0.0..=1.0).contains(&self.class_token_rate) || !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::invalid("rates must lie in [0, 1]"));
        }
        for &(class, w) in &self.class_weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("class weight for {class:?} must be positive")));
            }
            if !self.language.supports(class) {
                return Err(Error::invalid(format!("{class:?} is not a {} label", self.language)));
            }
            match self.class_pools.iter().find(|(c, _)| *c == class) {
                Some((_, pool)) if !pool.is_empty() => {}
                _ => return Err(Error::invalid(format!("token pool for {class:?} is empty"))),
            }
        }
        Ok(())
    }

    /// Per-class record counts: largest-remainder apportionment of `size`.
    pub fn class_counts(&self) -> Vec<(LabelClass, usize)> {
        let total: f64 = self.class_weights.iter().map(|(_, w)| w).sum();
        let quotas: Vec<f64> = self
            .class_weights
            .iter()
            .map(|(_, w)| w / total * self.size as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = self.size - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        self.class_weights
            .iter()
            .zip(counts)
            .map(|(&(c, _), n)| (c, n))
            .collect()
    }
}

/// Deterministic synthetic corpus; a pure function of `(spec, seed)`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<LabelClass> = spec
        .class_counts()
        .into_iter()
        .flat_map(|(c, n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut rng);

    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let pool = &spec.class_pools.iter().find(|(c, _)| *c == label).unwrap().1;
            let n_tokens = rng.random_range(spec.min_tokens..=spec.max_tokens);
            let tokens: Vec<String> = (0..n_tokens)
                .map(|_| {
                    let mut token = if rng.random_bool(spec.class_token_rate) {
                        pool[rng.random_range(0..pool.len())].clone()
                    } else {
                        spec.shared_pool[rng.random_range(0..spec.shared_pool.len())].clone()
                    };
                    if rng.random_bool(spec.noise_rate) {
                        token.push_str(NOISE[rng.random_range(0..NOISE.len())]);
                    }
                    if rng.random_bool(0.2) {
                        let mut chars = token.chars();
                        if let Some(first) = chars.next() {
                            token = first.to_uppercase().chain(chars).collect();
                        }
                    }
                    token
                })
                .collect();
            Record {
                id: format!("r{}", i + 1),
                text: tokens.join(" "),
                label: Some(label),
            }
        })
        .collect();

    LabeledCorpus::new(spec.language, records, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_parse() {
        let c = parse_tsv("vera level\tNot_offensive\n", Language::Tamil, false, true).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records()[0].label, Some(LabelClass::NotOffensive));
        assert_eq!(c.records()[0].id, "r1");
    }

    #[test]
    fn empty_file_warns() {
        let c = parse_tsv("", Language::Kannada, false, true).unwrap();
        assert!(c.is_empty());
        assert!(!c.warnings().is_empty());
    }

    #[test]
    fn header_is_skipped() {
        let c = parse_tsv("text\tcategory\nsuper\tnot-Kannada\n", Language::Kannada, false, true).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records()[0].label, Some(LabelClass::NotLanguage));
    }

    #[test]
    fn malformed_row_names_row() {
        let err = parse_tsv("a\tNot_offensive\nb\n", Language::Tamil, false, true).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, found: 1, .. }), "{err}");
    }

    #[test]
    fn unknown_label_names_string() {
        let err = parse_tsv("a\tspam\n", Language::Tamil, false, true).unwrap_err();
        match err {
            Error::UnknownLabel { row, label, .. } => {
                assert_eq!(row, 1);
                assert_eq!(label, "spam");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malayalam_rejects_targeted_other() {
        let err = parse_tsv("a\tOffensive_Targeted_Insult_Other\n", Language::Malayalam, false, true);
        assert!(err.is_err());
        assert_eq!(Language::Malayalam.label_set().len(), 5);
        assert_eq!(Language::Tamil.label_set().len(), 6);
        assert_eq!(Language::Kannada.label_set().len(), 6);
    }

    #[test]
    fn duplicate_ids_rejected_duplicate_texts_allowed() {
        let dup_text = "1\tsame\tNot_offensive\n2\tsame\tNot_offensive\n";
        assert!(parse_tsv(dup_text, Language::Tamil, true, true).is_ok());
        let dup_id = "1\ta\tNot_offensive\n1\tb\tNot_offensive\n";
        assert!(matches!(
            parse_tsv(dup_id, Language::Tamil, true, true),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn rendering_is_bijective_per_language() {
        for lang in Language::ALL {
            let rendered: HashSet<_> = lang.label_set().iter().map(|&c| lang.render(c)).collect();
            assert_eq!(rendered.len(), lang.label_set().len());
            for &c in lang.label_set() {
                assert_eq!(lang.parse_label(lang.render(c)), Some(c));
                assert_eq!(lang.parse_label(lang.short_code(c)), Some(c));
            }
        }
        assert_eq!(Language::Tamil.render(LabelClass::NotLanguage), "not-Tamil");
        assert_eq!(Language::Kannada.parse_label("not-Tamil"), None);
    }

    #[test]
    fn unlabeled_rows() {
        let c = parse_tsv("x1\thello there\n", Language::Kannada, true, false).unwrap();
        assert_eq!(c.records()[0].id, "x1");
        assert_eq!(c.records()[0].label, None);
        assert!(class_distribution(&c).is_err());
    }

    #[test]
    fn empty_corpus_distribution_is_all_zero() {
        let c = LabeledCorpus::new(Language::Malayalam, vec![], false).unwrap();
        let d = class_distribution(&c).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.values().all(|&n| n == 0));
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec::kannada_like(300);
        let a = synth_generate(&spec, 11).unwrap();
        let b = synth_generate(&spec, 11).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_ne!(a.to_tsv(), synth_generate(&spec, 12).unwrap().to_tsv());
    }

    #[test]
    fn synth_single_class() {
        let spec = SynthSpec::with_weights(Language::Tamil, vec![(LabelClass::TargetedGroup, 1.0)], 40);
        let c = synth_generate(&spec, 3).unwrap();
        assert!(c.records().iter().all(|r| r.label == Some(LabelClass::TargetedGroup)));
    }

    #[test]
    fn synth_rejects_empty_pool() {
        let mut spec = SynthSpec::kannada_like(10);
        spec.class_pools[2].1.clear();
        assert!(synth_generate(&spec, 0).is_err());
        let mut spec = SynthSpec::kannada_like(10);
        spec.shared_pool.clear();
        assert!(synth_generate(&spec, 0).is_err());
    }

    #[test]
    fn synth_token_lengths_in_range() {
        let spec = SynthSpec::kannada_like(200);
        let c = synth_generate(&spec, 5).unwrap();
        for r in c.records() {
            let n = r.text.split(' ').count();
            assert!((3..=15).contains(&n), "{n} tokens in {:?}", r.text);
        }
    }
}

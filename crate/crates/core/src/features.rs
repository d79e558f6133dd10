//! Unigram tf-idf vectors, padded id sequences and embedding tables.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Vocabulary, PAD, UNK};

/// Sparse non-negative feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds from unsorted pairs; duplicate indices are summed.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        SparseVector { indices, values }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    /// One past the largest stored index.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Fitted unigram vocabulary with smoothed inverse document frequencies:
/// `idf = ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::invalid("cannot fit tf-idf on an empty corpus"));
        }
        let vocabulary = Vocabulary::build(docs, 1)?;
        let mut df = vec![0usize; vocabulary.len()];
        let mut seen = vec![usize::MAX; vocabulary.len()];
        for (d, doc) in docs.iter().enumerate() {
            for t in doc {
                let i = vocabulary.lookup(t.as_ref()) as usize;
                if seen[i] != d {
                    seen[i] = d;
                    df[i] += 1;
                }
            }
        }
        let n = docs.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Ok(TfidfModel {
            vocabulary,
            idf,
            n_docs: docs.len(),
        })
    }

    pub fn from_parts(vocabulary: Vocabulary, idf: Vec<f64>, n_docs: usize) -> Result<Self> {
        if vocabulary.len() != idf.len() {
            return Err(Error::Dimension {
                expected: vocabulary.len(),
                found: idf.len(),
            });
        }
        Ok(TfidfModel {
            vocabulary,
            idf,
            n_docs,
        })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn idf_of(&self, token: &str) -> f64 {
        self.idf[self.vocabulary.lookup(token) as usize]
    }

    /// Raw counts times idf, L2-normalized. Unseen tokens count towards UNK.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let pairs = tokens
            .iter()
            .map(|t| {
                let i = self.vocabulary.lookup(t.as_ref());
                (i, self.idf[i as usize])
            })
            .collect();
        let v = SparseVector::from_pairs(pairs);
        let norm = v.norm();
        if norm > 0.0 {
            v.scaled(1.0 / norm)
        } else {
            v
        }
    }

    pub fn transform_all<S: AsRef<str> + Sync>(&self, docs: &[Vec<S>]) -> Vec<SparseVector> {
        use rayon::prelude::*;
        docs.par_iter().map(|d| self.transform(d)).collect()
    }
}

/// Dense `|V| x dim` embedding matrix; row 0 (PAD) is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedLoad {
    pub table: EmbeddingTable,
    /// Fraction of non-reserved vocabulary tokens found in the file.
    pub coverage: f64,
}

/// Parses word vectors in text format ("token v1 ... vd" per line, with an
/// optional "count dim" header) and aligns them to `vocabulary`. Tokens
/// missing from the file get N(0, 0.01^2) rows from a generator seeded with
/// `seed`.
pub fn parse_pretrained_vectors(
    content: &str,
    vocabulary: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<PretrainedLoad> {
    let mut data = vec![0.0; vocabulary.len() * dim];
    let mut found = vec![false; vocabulary.len()];
    let mut file_dim: Option<usize> = None;

    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            file_dim = Some(fields[1].parse().unwrap());
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::VectorFormat {
                    line: line_no,
                    message: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match file_dim {
            None => file_dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::VectorFormat {
                    line: line_no,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        if values.len() != dim {
            return Err(Error::VectorFormat {
                line: line_no,
                message: format!("vectors have dimension {}, requested {dim}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::VectorFormat {
                line: line_no,
                message: "non-finite component".into(),
            });
        }
        let idx = vocabulary.lookup(fields[0]) as usize;
        let known = idx != UNK as usize || fields[0] == crate::preprocess::UNK_TOKEN;
        if known && !found[idx] {
            data[idx * dim..(idx + 1) * dim].copy_from_slice(&values);
            found[idx] = true;
        }
    }
    if let Some(d) = file_dim {
        if d != dim {
            return Err(Error::VectorFormat {
                line: 1,
                message: format!("header declares dimension {d}, requested {dim}"),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    for (i, hit) in found.iter().enumerate() {
        if i == PAD as usize {
            data[..dim].iter_mut().for_each(|v| *v = 0.0);
        } else if !hit {
            for v in &mut data[i * dim..(i + 1) * dim] {
                *v = normal.sample(&mut rng);
            }
        }
    }

    let retained = vocabulary.len().saturating_sub(2);
    let hits = found.iter().skip(2).filter(|&&h| h).count();
    let coverage = if retained == 0 {
        1.0
    } else {
        hits as f64 / retained as f64
    };
    Ok(PretrainedLoad {
        table: EmbeddingTable { dim, data },
        coverage,
    })
}

pub fn load_pretrained_vectors(
    path: impl AsRef<Path>,
    vocabulary: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<PretrainedLoad> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained_vectors(&content, vocabulary, dim, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdSequence {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

/// Maps the first `max_len` tokens to ids (UNK when unknown) and right-pads
/// with PAD.
pub fn encode_sequence<S: AsRef<str>>(vocabulary: &Vocabulary, tokens: &[S], max_len: usize) -> IdSequence {
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocabulary.lookup(t.as_ref()))
        .collect();
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    IdSequence { ids, true_length }
}

pub fn decode_sequence<'v>(vocabulary: &'v Vocabulary, seq: &IdSequence) -> Vec<&'v str> {
    seq.ids[..seq.true_length]
        .iter()
        .map(|&i| vocabulary.token(i).unwrap_or(crate::preprocess::UNK_TOKEN))
        .collect()
}

//! Document vectors: the EMB1 matrix format and a hashed character n-gram
//! baseline embedder.
//!
//! Vectors produced by an external sentence encoder are imported as-is. The
//! baseline exists so the pipeline can run standalone: it hashes character
//! n-grams into buckets, weights them by TF-IDF and applies a seeded signed
//! sparse random projection.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("format error: {0}")]
    FormatError(String),
    #[error("matrix has {found} rows, expected {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major `n × d` matrix of 32-bit floats; row `i` belongs to doc `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.len() != n * d {
            return Err(EmbeddingError::FormatError(format!(
                "{} values for a {n}x{d} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue {
                row: pos / d.max(1),
                col: pos % d.max(1),
            });
        }
        Ok(Self { n, d, values })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            values: vec![0.0; n * d],
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, EmbeddingError> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != d {
                return Err(EmbeddingError::FormatError(format!(
                    "row {i} has {} columns, expected {d}",
                    r.as_ref().len()
                )));
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), d, values)
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self, EmbeddingError> {
        let rows: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.d.max(1)).take(self.n)
    }

    /// Rows as 64-bit vectors, for numerics that accumulate in double precision.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows()
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: indices.len(),
            d: self.d,
            values,
        }
    }

    pub fn write_emb1<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        let n = u32::try_from(self.n)
            .map_err(|_| EmbeddingError::FormatError("n overflows u32".into()))?;
        let d = u32::try_from(self.d)
            .map_err(|_| EmbeddingError::FormatError("d overflows u32".into()))?;
        out.write_all(EMB1_MAGIC)?;
        out.write_all(&n.to_le_bytes())?;
        out.write_all(&d.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_emb1_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + self.values.len() * 4);
        self.write_emb1(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses an EMB1 stream. The stream must end exactly after the payload.
    pub fn read_emb1<R: Read>(mut input: R) -> Result<Self, EmbeddingError> {
        let mut header = [0u8; 12];
        input
            .read_exact(&mut header)
            .map_err(|_| EmbeddingError::FormatError("truncated header".into()))?;
        if &header[0..4] != EMB1_MAGIC {
            return Err(EmbeddingError::FormatError("bad magic".into()));
        }
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let expected = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| EmbeddingError::FormatError("declared size overflows".into()))?;
        if payload.len() != expected {
            return Err(EmbeddingError::FormatError(format!(
                "payload has {} bytes, header declares {n}x{d} ({expected} bytes)",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(n, d, values)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_emb1(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let f = std::fs::File::open(path)?;
        Self::read_emb1(std::io::BufReader::new(f))
    }
}

/// Reads an EMB1 file and checks its row count against the corpus size.
pub fn import_embeddings(
    path: &Path,
    expected_n: usize,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let m = EmbeddingMatrix::load(path)?;
    if m.n() != expected_n {
        return Err(EmbeddingError::CountMismatch {
            expected: expected_n,
            found: m.n(),
        });
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    Import,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub method: EmbedMethod,
    pub dims: usize,
    pub ngram_range: (usize, usize),
    pub hash_buckets: usize,
    pub projection_seed: u64,
    pub normalize: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            method: EmbedMethod::Baseline,
            dims: 384,
            ngram_range: (3, 5),
            hash_buckets: 1 << 18,
            projection_seed: 0,
            normalize: true,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dims < 2 {
            return Err(EmbeddingError::InvalidConfig("dims must be >= 2".into()));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(EmbeddingError::InvalidConfig(format!(
                "invalid ngram range ({lo}, {hi})"
            )));
        }
        if self.hash_buckets == 0 || self.hash_buckets > u32::MAX as usize {
            return Err(EmbeddingError::InvalidConfig(
                "hash_buckets out of range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineEmbedding {
    pub matrix: EmbeddingMatrix,
    /// Documents without any n-gram; their rows are zero.
    pub empty_docs: Vec<usize>,
}

// Nonzeros per bucket in the projection matrix.
const PROJECTION_NNZ: u64 = 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Sorted `(bucket, count)` pairs for every character n-gram of `text`.
///
/// The text is padded with one space on each side so word boundaries form
/// their own n-grams.
pub fn ngram_buckets(text: &str, range: (usize, usize), buckets: usize) -> Vec<(u32, u32)> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.chars())
        .chain(std::iter::once(' '))
        .collect();
    let offsets: Vec<usize> = {
        let mut acc = 0;
        let mut v = Vec::with_capacity(padded.len() + 1);
        for c in &padded {
            v.push(acc);
            acc += c.len_utf8();
        }
        v.push(acc);
        v
    };
    let bytes: String = padded.iter().collect();
    let bytes = bytes.as_bytes();
    let mut ids = Vec::new();
    for len in range.0..=range.1 {
        if len > padded.len() {
            break;
        }
        for start in 0..=padded.len() - len {
            let gram = &bytes[offsets[start]..offsets[start + len]];
            ids.push((fnv1a(gram) % buckets as u64) as u32);
        }
    }
    ids.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some((b, c)) if *b == id => *c += 1,
            _ => out.push((id, 1)),
        }
    }
    out
}

/// Deterministic TF-IDF weighted, randomly projected character n-gram vectors.
pub fn baseline_embed(
    corpus: &Corpus,
    config: &EmbedderConfig,
) -> Result<BaselineEmbedding, EmbeddingError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let n = corpus.len();
    let grams: Vec<Vec<(u32, u32)>> = corpus
        .documents
        .par_iter()
        .map(|d| ngram_buckets(&d.normalized_text, config.ngram_range, config.hash_buckets))
        .collect();

    let mut df = vec![0u32; config.hash_buckets];
    for g in &grams {
        for &(b, _) in g {
            df[b as usize] += 1;
        }
    }

    let dims = config.dims;
    let scale = 1.0 / (PROJECTION_NNZ as f64).sqrt();
    let seed = splitmix64(config.projection_seed);
    let rows: Vec<Vec<f32>> = grams
        .par_iter()
        .map(|g| {
            let mut acc = vec![0f64; dims];
            for &(b, count) in g {
                let idf = (1.0 + n as f64 / f64::from(df[b as usize])).ln();
                let w = f64::from(count) * idf * scale;
                let base = splitmix64(seed ^ u64::from(b).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                for j in 0..PROJECTION_NNZ {
                    let h = splitmix64(base.wrapping_add(j));
                    let dim = (h % dims as u64) as usize;
                    if h >> 63 == 1 {
                        acc[dim] -= w;
                    } else {
                        acc[dim] += w;
                    }
                }
            }
            if config.normalize {
                let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    acc.iter_mut().for_each(|v| *v /= norm);
                }
            }
            acc.into_iter().map(|v| v as f32).collect()
        })
        .collect();

    let empty_docs = grams
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_empty())
        .map(|(i, _)| i)
        .collect();
    let mut values = Vec::with_capacity(n * dims);
    for r in rows {
        values.extend(r);
    }
    Ok(BaselineEmbedding {
        matrix: EmbeddingMatrix::new(n, dims, values)?,
        empty_docs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| f64::from(*x) * f64::from(*y))
            .sum();
        let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn emb1_reads_declared_shape() {
        let m = EmbeddingMatrix::new(4, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        let bytes = m.to_emb1_bytes();
        assert_eq!(bytes.len(), 12 + 48);
        let back = EmbeddingMatrix::read_emb1(&bytes[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.row(2), &[6.0, 7.0, 8.0]);
    }

    #[test]
    fn emb1_rejects_truncated_and_bad_magic() {
        let mut bytes = b"EMB1".to_vec();
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..9 {
            bytes.extend_from_slice(&1f32.to_le_bytes());
        }
        assert!(matches!(
            EmbeddingMatrix::read_emb1(&bytes[..]),
            Err(EmbeddingError::FormatError(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::read_emb1(&bytes[..]),
            Err(EmbeddingError::FormatError(_))
        ));
        assert!(EmbeddingMatrix::read_emb1(&b"EMB1\x01"[..]).is_err());
    }

    #[test]
    fn emb1_rejects_trailing_bytes_and_nan() {
        let m = EmbeddingMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let mut bytes = m.to_emb1_bytes();
        bytes.push(0);
        assert!(EmbeddingMatrix::read_emb1(&bytes[..]).is_err());

        let mut bytes = m.to_emb1_bytes();
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            EmbeddingMatrix::read_emb1(&bytes[..]),
            Err(EmbeddingError::NonFiniteValue { row: 0, col: 1 })
        ));
    }

    #[test]
    fn import_checks_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        EmbeddingMatrix::zeros(10, 3).save(&path).unwrap();
        assert!(matches!(
            import_embeddings(&path, 12),
            Err(EmbeddingError::CountMismatch {
                expected: 12,
                found: 10
            })
        ));
        assert_eq!(import_embeddings(&path, 10).unwrap().n(), 10);
    }

    #[test]
    fn identical_documents_get_identical_rows() {
        // Corpus::from_texts dedups, so build documents directly.
        let mut corpus = Corpus::from_texts(&["water wells", "school meals"]);
        let mut dup = corpus.documents[0].clone();
        dup.doc_id = 2;
        corpus.documents.push(dup);
        let emb = baseline_embed(&corpus, &EmbedderConfig::default())
            .unwrap()
            .matrix;
        assert_eq!(emb.row(0), emb.row(2));
        assert!((cosine(emb.row(0), emb.row(2)) - 1.0).abs() < 1e-6);
        for r in emb.rows() {
            let norm: f64 = r.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn ngram_overlap_orders_similarity() {
        let texts = ["aid water wells", "aid water pumps", "tax policy reform"];
        // Exact character n-gram sets of the padded texts.
        let grams = |t: &str| {
            let p: Vec<char> = format!(" {t} ").chars().collect();
            let mut set = std::collections::BTreeSet::new();
            for len in 3..=5 {
                for w in p.windows(len) {
                    set.insert(w.iter().collect::<String>());
                }
            }
            set
        };
        let g: Vec<_> = texts.iter().map(|t| grams(t)).collect();
        let shared01 = g[0].intersection(&g[1]).count();
        let shared02 = g[0].intersection(&g[2]).count();
        assert!(shared01 > 20, "{shared01}");
        assert_eq!(shared02, 0);

        let corpus = Corpus::from_texts(&texts);
        let emb = baseline_embed(&corpus, &EmbedderConfig::default())
            .unwrap()
            .matrix;
        assert!(cosine(emb.row(0), emb.row(1)) > cosine(emb.row(0), emb.row(2)));
    }

    #[test]
    fn baseline_is_deterministic_and_equivariant() {
        let texts = [
            "rural water supply",
            "primary school",
            "malaria nets",
            "road repair",
        ];
        let cfg = EmbedderConfig {
            dims: 32,
            projection_seed: 7,
            ..Default::default()
        };
        let a = baseline_embed(&Corpus::from_texts(&texts), &cfg)
            .unwrap()
            .matrix;
        let b = baseline_embed(&Corpus::from_texts(&texts), &cfg)
            .unwrap()
            .matrix;
        assert_eq!(a.to_emb1_bytes(), b.to_emb1_bytes());

        let permuted = [texts[2], texts[0], texts[3], texts[1]];
        let p = baseline_embed(&Corpus::from_texts(&permuted), &cfg)
            .unwrap()
            .matrix;
        for (new_row, old_row) in [2usize, 0, 3, 1].into_iter().enumerate() {
            assert_eq!(p.row(new_row), a.row(old_row));
        }
    }

    #[test]
    fn config_validation() {
        let bad = EmbedderConfig {
            dims: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmbedderConfig {
            ngram_range: (5, 3),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(baseline_embed(&Corpus::default(), &EmbedderConfig::default()).is_err());
    }
}

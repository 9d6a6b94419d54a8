//! TF-IDF featurization, dense embedding tables and cosine similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[A-Z]+\]|\w+").unwrap())
}

/// Split on whitespace and punctuation. Bracketed special tokens such as
/// `[USER]` survive as single tokens and are never lowercased.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    token_regex()
        .find_iter(text)
        .map(|m| {
            let t = m.as_str();
            if lowercase && !t.starts_with('[') {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub min_df: usize,
    pub lowercase: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: 1,
            lowercase: true,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TfidfFile {
    config: TfidfConfig,
    vocabulary: Vec<String>,
    idf: Vec<f64>,
}

/// Fitted vocabulary with smoothed idf weights. Column indices follow the
/// sorted token order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfidfFile", into = "TfidfFile")]
pub struct TfidfModel {
    config: TfidfConfig,
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
}

impl TryFrom<TfidfFile> for TfidfModel {
    type Error = Error;

    fn try_from(f: TfidfFile) -> Result<Self> {
        if f.vocabulary.len() != f.idf.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} terms but {} idf values",
                f.vocabulary.len(),
                f.idf.len()
            )));
        }
        if f.idf.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::NonFinite("idf".into()));
        }
        let index: HashMap<String, usize> = f
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != f.vocabulary.len() {
            return Err(Error::DuplicateKey("vocabulary".into()));
        }
        Ok(TfidfModel {
            config: f.config,
            terms: f.vocabulary,
            idf: f.idf,
            index,
        })
    }
}

impl From<TfidfModel> for TfidfFile {
    fn from(m: TfidfModel) -> Self {
        TfidfFile {
            config: m.config,
            vocabulary: m.terms,
            idf: m.idf,
        }
    }
}

/// Fit on `corpus`; `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
pub fn fit_tfidf<S: AsRef<str>>(
    corpus: &[S],
    min_df: usize,
    lowercase: bool,
) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::Precondition(
            "cannot fit tf-idf on an empty corpus".into(),
        ));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<String> = tokenize(doc.as_ref(), lowercase).into_iter().collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let (terms, idf): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df.max(1))
        .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary { min_df });
    }
    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(TfidfModel {
        config: TfidfConfig { min_df, lowercase },
        terms,
        idf,
        index,
    })
}

impl TfidfModel {
    pub fn config(&self) -> TfidfConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// In-vocabulary token counts, sorted by column.
    pub fn counts(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(text, self.config.lowercase) {
            if let Some(i) = self.index_of(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    /// L2-normalized count × idf vector; all-OOV text gives the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut entries: Vec<(usize, f64)> = self
            .counts(text)
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i]))
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tf-idf model serializes")
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("tf-idf model serializes"));
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `(index, value)` pairs with strictly increasing indices below `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::ShapeMismatch("sparse indices not increasing".into()));
            }
        }
        if entries.iter().any(|&(i, v)| i >= dim || !v.is_finite()) {
            return Err(Error::ShapeMismatch("sparse entry out of range".into()));
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseVector {
        let mut values = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            values[i] = v;
        }
        DenseVector(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense vector".into()));
        }
        Ok(DenseVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DenseVector::new(v)
    }
}

/// `v·w / (‖v‖‖w‖)`, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(v: &DenseVector, w: &DenseVector) -> Result<f64> {
    if v.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            left: v.dim(),
            right: w.dim(),
        });
    }
    let (nv, nw) = (v.norm(), w.norm());
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = v.0.iter().zip(&w.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nv * nw)).clamp(-1.0, 1.0))
}

/// Document id → embedding, all of one dimension and none of zero norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, DenseVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: DenseVector) -> Result<()> {
        let id = id.into();
        if v.dim() != self.dim {
            return Err(Error::RaggedDimensions {
                id,
                expected: self.dim,
                found: v.dim(),
            });
        }
        if v.norm() == 0.0 {
            return Err(Error::ZeroNormVector(id));
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::DuplicateKey(id));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    /// Densified TF-IDF vectors for the given documents. Documents with no
    /// in-vocabulary token are left out.
    pub fn from_tfidf<'a>(
        model: &TfidfModel,
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut table = EmbeddingTable::new(model.dim());
        for (id, text) in docs {
            let v = model.transform(text);
            if v.norm() > 0.0 && !table.contains(id) {
                table.insert(id, v.to_dense())?;
            }
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DenseVector> {
        self.vectors.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (id, v) in &self.vectors {
            let mut row = vec![id.clone()];
            row.extend(v.values().iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("writing embeddings", e))?;
        Ok(())
    }
}

/// Read `id,v0,v1,…` rows (with a header row).
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let mut table: Option<EmbeddingTable> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::NonFinite(format!("embedding row {} value `{s}`", row + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let v = DenseVector::new(values)?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(v.dim()));
        t.insert(id, v)?;
    }
    Ok(table.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn idf_hand_values() {
        let m = fit_tfidf(&["a b", "a c"], 1, true).unwrap();
        assert_eq!(m.terms(), ["a", "b", "c"]);
        assert_eq!(m.idf()[0], 1.0);
        let expected = (3.0f64 / 2.0).ln() + 1.0;
        assert!((m.idf()[1] - 1.4054651081).abs() < 1e-9);
        assert_eq!(m.idf()[1], expected);
        assert_eq!(m.idf()[2], expected);
    }

    #[test]
    fn min_df_can_empty_the_vocabulary() {
        assert!(matches!(
            fit_tfidf(&["a b", "a c"], 3, true),
            Err(Error::EmptyVocabulary { min_df: 3 })
        ));
    }

    #[test]
    fn transform_hand_values() {
        let m = fit_tfidf(&["a b", "a c"], 1, true).unwrap();
        let v = m.transform("a a b");
        let (x, y) = (2.0f64, 1.4054651081081644f64);
        let n = (x * x + y * y).sqrt();
        assert_eq!(v.entries().len(), 2);
        assert!((v.entries()[0].1 - x / n).abs() < 1e-12);
        assert!((v.entries()[1].1 - y / n).abs() < 1e-12);
        assert_eq!(m.transform("zzz qq"), SparseVector::new(3, vec![]).unwrap());
        assert_eq!(m.transform("a a b"), v);
    }

    #[test]
    fn special_tokens_survive_tokenization() {
        assert_eq!(
            tokenize("Hi [USER], it's ME!", true),
            ["hi", "[USER]", "it", "s", "me"]
        );
    }

    #[test]
    fn model_json_round_trip() {
        let m = fit_tfidf(&["x y", "y z [URL]"], 1, false).unwrap();
        let back: TfidfModel = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }

    #[test]
    fn cosine_examples() {
        let v = DenseVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let w = DenseVector::new(vec![4.0, 5.0, 6.0]).unwrap();
        assert!((cosine_similarity(&v, &w).unwrap() - 0.974632).abs() < 1e-5);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let e1 = DenseVector::new(vec![1.0, 0.0]).unwrap();
        let e2 = DenseVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&e1, &v),
            Err(Error::DimensionMismatch { .. })
        ));
        let z = DenseVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(cosine_similarity(&e1, &z), Err(Error::ZeroNorm)));
    }

    fn emb_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_embeddings_cases() {
        let f = emb_file("id,v0,v1,v2,v3\na,1,0,0,0\nb,0,1,0,0\nc,0.5,0.5,0,1\n");
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));

        let f = emb_file("id,v0,v1\na,1,0\na,0,1\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::DuplicateKey(k)) if k == "a"));
        let f = emb_file("id,v0,v1\na,1,0\nb,0,0\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::ZeroNormVector(k)) if k == "b"));
        let f = emb_file("id,v0,v1\na,1,0\nb,0,1,2\n");
        assert!(matches!(
            load_embeddings(f.path()),
            Err(Error::RaggedDimensions { .. })
        ));
    }

    #[test]
    fn embeddings_csv_round_trip() {
        let mut t = EmbeddingTable::new(2);
        t.insert("x", DenseVector::new(vec![0.25, -1.5]).unwrap())
            .unwrap();
        t.insert("y", DenseVector::new(vec![1e-3, 7.0]).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let f = emb_file(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_embeddings(f.path()).unwrap(), t);
    }

    /// Independent bag-of-words × idf computation, straight from the formula.
    fn brute_force(corpus: &[String], text: &str) -> BTreeMap<String, f64> {
        let words = |s: &str| -> Vec<String> {
            s.split(|c: char| !c.is_alphanumeric() && c != '_')
                .filter(|w| !w.is_empty())
                .map(|w| w.to_lowercase())
                .collect()
        };
        let n = corpus.len() as f64;
        let mut raw = BTreeMap::new();
        for w in words(text) {
            let df = corpus.iter().filter(|d| words(d).contains(&w)).count();
            if df == 0 {
                continue;
            }
            let idf = ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0;
            *raw.entry(w).or_insert(0.0) += idf;
        }
        let norm = raw.values().map(|v: &f64| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|(k, v)| (k, v / norm)).collect()
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            corpus in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..6), 1..10),
            query in prop::collection::vec("[a-f]{1,2}", 1..8),
        ) {
            let corpus: Vec<String> = corpus.into_iter().map(|ws| ws.join(" ")).collect();
            let query = query.join(", ");
            let m = fit_tfidf(&corpus, 1, true).unwrap();
            let v = m.transform(&query);
            let expected = brute_force(&corpus, &query);
            prop_assert_eq!(v.entries().len(), expected.len());
            for &(i, x) in v.entries() {
                prop_assert!((expected[&m.terms()[i]] - x).abs() < 1e-12);
            }
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            pair in (1usize..8).prop_flat_map(|d| (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )),
            a in 0.01f64..100.0,
            b in 0.01f64..100.0,
        ) {
            let (v, w) = pair;
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6) && w.iter().any(|x| x.abs() > 1e-6));
            let dv = DenseVector::new(v.clone()).unwrap();
            let dw = DenseVector::new(w.clone()).unwrap();
            let s = cosine_similarity(&dv, &dw).unwrap();
            prop_assert_eq!(s, cosine_similarity(&dw, &dv).unwrap());
            let sv = DenseVector::new(v.iter().map(|x| a * x).collect()).unwrap();
            let sw = DenseVector::new(w.iter().map(|x| b * x).collect()).unwrap();
            prop_assert!((cosine_similarity(&sv, &sw).unwrap() - s).abs() < 1e-9);
        }
    }
}

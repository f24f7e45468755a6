//! Label-name embeddings: loading pre-trained vectors, embedding label
//! names, cosine nearest neighbours and a 2-D PCA projection for plots.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StanceError};
use crate::labelspace::LabelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    /// One vector per word; multi-word names are averaged.
    StaticWord,
    /// One vector per whole label name, as produced by a sentence encoder.
    ContextualEncoder,
}

/// Something that can turn a label name into a dense vector.
pub trait LabelNameEmbedder {
    fn embed_name(&self, name: &str) -> Result<Vec<f64>>;
}

/// Word (or name) vectors of one fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: EmbeddingKind,
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    lowercase: bool,
}

impl EmbeddingTable {
    pub fn new(kind: EmbeddingKind, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let Some(dimension) = entries.first().map(|(_, v)| v.len()) else {
            return Err(StanceError::invalid("embedding table needs at least one vector"));
        };
        if dimension == 0 {
            return Err(StanceError::invalid("embedding vectors must have a positive dimension"));
        }
        let mut vectors = HashMap::with_capacity(entries.len());
        for (word, v) in entries {
            if v.len() != dimension {
                return Err(StanceError::invalid(format!(
                    "vector for `{word}` has dimension {}, expected {dimension}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(StanceError::invalid(format!("vector for `{word}` is not finite")));
            }
            vectors.insert(word, v);
        }
        Ok(Self {
            kind,
            dimension,
            vectors,
            lowercase: true,
        })
    }

    /// Toggles lowercasing of names before lookup (on by default).
    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Plain-text vector format with a `count dim` header, words sorted.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = format!("{} {}\n", words.len(), self.dimension);
        for w in words {
            out.push_str(w);
            for v in &self.vectors[w] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    fn lookup(&self, word: &str) -> Option<&[f64]> {
        if self.lowercase {
            self.get(&word.to_lowercase()).or_else(|| self.get(word))
        } else {
            self.get(word)
        }
    }
}

/// Reads the plain-text word-vector format: an optional `count dim`
/// header, then `token v1 ... vdim` per line.
pub fn load_vectors(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path)?;
    parse_vectors(&text, kind, &path.display().to_string())
}

pub fn parse_vectors(text: &str, kind: EmbeddingKind, source: &str) -> Result<EmbeddingTable> {
    let err = |reason: String| StanceError::EmbeddingFormat {
        path: source.to_string(),
        reason,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut declared: Option<(usize, usize)> = None;
    if let Some((_, first)) = lines.peek() {
        let parts: Vec<&str> = first.split_whitespace().collect();
        if parts.len() == 2 {
            if let (Ok(c), Ok(d)) = (parts[0].parse::<usize>(), parts[1].parse::<usize>()) {
                declared = Some((c, d));
                lines.next();
            }
        }
    }
    let mut entries = Vec::new();
    let mut dim: Option<usize> = declared.map(|(_, d)| d);
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default().to_string();
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        match dim {
            Some(d) if d != values.len() => {
                return Err(err(format!(
                    "line {}: dimension {} differs from {d}",
                    i + 1,
                    values.len()
                )))
            }
            None => dim = Some(values.len()),
            _ => {}
        }
        let token = if kind == EmbeddingKind::ContextualEncoder {
            token.replace('_', " ")
        } else {
            token
        };
        entries.push((token, values));
    }
    if entries.is_empty() {
        return Err(err("no vectors".into()));
    }
    if let Some((count, _)) = declared {
        if count != entries.len() {
            log::warn!("{source}: header declares {count} vectors, found {}", entries.len());
        }
    }
    EmbeddingTable::new(kind, entries).map_err(|e| err(e.to_string()))
}

impl LabelNameEmbedder for EmbeddingTable {
    /// Static tables average the vectors of the in-vocabulary words of the
    /// name (split on whitespace and `_`); contextual tables look the whole
    /// name up. A name with no known word is an error.
    fn embed_name(&self, name: &str) -> Result<Vec<f64>> {
        let normalized = name.replace('_', " ");
        match self.kind {
            EmbeddingKind::ContextualEncoder => {
                let key = normalized.split_whitespace().collect::<Vec<_>>().join(" ");
                self.lookup(&key)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| StanceError::OutOfVocabulary(name.to_string()))
            }
            EmbeddingKind::StaticWord => {
                let mut sum = vec![0.0; self.dimension];
                let mut found = 0usize;
                for word in normalized.split_whitespace() {
                    match self.lookup(word) {
                        Some(v) => {
                            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                            found += 1;
                        }
                        None => log::warn!("label word `{word}` of `{name}` is out of vocabulary"),
                    }
                }
                if found == 0 {
                    return Err(StanceError::OutOfVocabulary(name.to_string()));
                }
                Ok(sum.into_iter().map(|s| s / found as f64).collect())
            }
        }
    }
}

pub fn embed_label(embedder: &dyn LabelNameEmbedder, name: &str) -> Result<Vec<f64>> {
    embedder.embed_name(name)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(StanceError::invalid(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(StanceError::invalid("cosine of a zero vector"));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// An embedded label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub label: LabelId,
    pub vector: Vec<f64>,
}

/// Index and similarity of the best candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub index: usize,
    pub score: f64,
}

/// Cosine argmax over `candidates`; the earliest candidate wins ties.
pub fn nearest_label(query: &[f64], candidates: &[LabelVector]) -> Result<Nearest> {
    let mut best: Option<Nearest> = None;
    for (index, c) in candidates.iter().enumerate() {
        let score = cosine(query, &c.vector)?;
        if best.is_none_or(|b| score > b.score) {
            best = Some(Nearest { index, score });
        }
    }
    best.ok_or_else(|| StanceError::invalid("nearest_label needs at least one candidate"))
}

/// Projects row vectors onto their top two principal components.
///
/// Coordinates are centred; each component is signed so that its
/// largest-magnitude coordinate is positive.
pub fn project_2d(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = vectors.len();
    if n < 2 {
        return Err(StanceError::invalid("projection needs at least two vectors"));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(StanceError::invalid("projection needs vectors of one positive dimension"));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let scale = x.amax();
    if scale == 0.0 {
        return Err(StanceError::invalid("all vectors are identical (rank 0)"));
    }
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if svd.singular_values[order[0]] <= scale * 1e-12 {
        return Err(StanceError::invalid("all vectors are identical (rank 0)"));
    }

    let mut coords = vec![[0.0; 2]; n];
    for (c, &k) in order.iter().take(2).enumerate() {
        let axis = v_t.row(k).transpose();
        let proj = &x * axis;
        let pivot = proj.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][c] = sign * proj[i];
        }
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::new(
            EmbeddingKind::StaticWord,
            vec![
                ("for".into(), vec![1.0, 0.0]),
                ("argument".into(), vec![0.0, 2.0]),
            ],
        )
        .unwrap()
    }

    fn lv(name: &str, v: &[f64]) -> LabelVector {
        LabelVector {
            label: LabelId {
                dataset: "d".into(),
                name: name.into(),
                global_index: 0,
            },
            vector: v.to_vec(),
        }
    }


    #[test]
    fn text_round_trip() {
        let t = EmbeddingTable::new(
            EmbeddingKind::StaticWord,
            vec![("b".into(), vec![0.1, -2.5]), ("a".into(), vec![1.0 / 3.0, 7.0])],
        )
        .unwrap();
        let text = t.to_text();
        assert!(text.starts_with("2 2\na "));
        assert_eq!(parse_vectors(&text, EmbeddingKind::StaticWord, "mem").unwrap(), t);
    }
    #[test]
    fn parses_with_and_without_header() {
        let t = parse_vectors("a 1 2\nb 3 4\nc 5 6\n", EmbeddingKind::StaticWord, "x").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dimension(), 2);
        let t = parse_vectors("2 3\na 1 2 3\nb 4 5 6\n", EmbeddingKind::StaticWord, "x").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[4.0, 5.0, 6.0][..]));
    }

    #[test]
    fn mixed_dimensions_and_empty_files_fail() {
        assert!(parse_vectors("a 1 2\nb 1 2 3\n", EmbeddingKind::StaticWord, "x").is_err());
        assert!(parse_vectors("", EmbeddingKind::StaticWord, "x").is_err());
        assert!(parse_vectors("3 2\n", EmbeddingKind::StaticWord, "x").is_err());
    }

    #[test]
    fn single_and_multi_word_names() {
        let t = toy();
        assert_eq!(embed_label(&t, "for").unwrap(), vec![1.0, 0.0]);
        assert_eq!(embed_label(&t, "argument for").unwrap(), vec![0.5, 1.0]);
        assert_eq!(embed_label(&t, "argument_for").unwrap(), vec![0.5, 1.0]);
        assert_eq!(embed_label(&t, "For").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn partial_oov_averages_known_words_and_full_oov_fails() {
        let t = toy();
        assert_eq!(embed_label(&t, "argument against").unwrap(), vec![0.0, 2.0]);
        assert!(matches!(embed_label(&t, "against"), Err(StanceError::OutOfVocabulary(_))));
    }

    #[test]
    fn contextual_tables_match_whole_names() {
        let t = parse_vectors("argument_for 1 1\nfor 0 1\n", EmbeddingKind::ContextualEncoder, "x").unwrap();
        assert_eq!(embed_label(&t, "argument for").unwrap(), vec![1.0, 1.0]);
        assert!(embed_label(&t, "argument").is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn nearest_examples() {
        let c = [lv("favor", &[0.9, 0.1]), lv("against", &[-1.0, 0.0])];
        let best = nearest_label(&[1.0, 0.0], &c).unwrap();
        assert_eq!(best.index, 0);
        assert!((best.score - 0.9 / (0.82f64).sqrt()).abs() < 1e-12);
        assert_eq!(nearest_label(&[0.0, 1.0], &c[1..]).unwrap().index, 0);
        let tied = [lv("a", &[1.0, 1.0]), lv("b", &[1.0, 1.0])];
        assert_eq!(nearest_label(&[0.3, 0.9], &tied).unwrap().index, 0);
        assert!(nearest_label(&[1.0, 0.0], &[]).is_err());
    }

    fn distances(p: &[[f64; 2]]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                out.push(((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt());
            }
        }
        out
    }

    #[test]
    fn planar_points_keep_their_distances() {
        // Points in a tilted plane of R^3.
        let u = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        let v = [0.0, 0.0, 1.0];
        let planar = [[0.0, 0.0], [3.0, 1.0], [-1.0, 2.0], [2.0, -2.5], [0.5, 0.5]];
        let lifted: Vec<Vec<f64>> = planar
            .iter()
            .map(|p| (0..3).map(|k| p[0] * u[k] + p[1] * v[k] + 7.0).collect())
            .collect();
        let projected = project_2d(&lifted).unwrap();
        let original: Vec<[f64; 2]> = planar.to_vec();
        for (a, b) in distances(&projected).iter().zip(distances(&original)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn collinear_points_have_zero_second_coordinate() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        for p in project_2d(&pts).unwrap() {
            assert!(p[1].abs() < 1e-9);
        }
    }

    #[test]
    fn identical_points_are_rank_zero() {
        assert!(project_2d(&[vec![1.0, 2.0], vec![1.0, 2.0]]).is_err());
        assert!(project_2d(&[vec![1.0, 2.0]]).is_err());
    }

    /// Top eigenvalues of a symmetric matrix by power iteration with deflation.
    fn top_eigenvalues(mut a: Vec<Vec<f64>>, k: usize) -> Vec<f64> {
        let n = a.len();
        let mut out = Vec::new();
        for _ in 0..k {
            let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * v[j]).sum()).collect();
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                lambda = v.iter().zip(&w).map(|(x, y)| x * y).sum();
                v = w.into_iter().map(|x| x / norm).collect();
            }
            for i in 0..n {
                for j in 0..n {
                    a[i][j] -= lambda * v[i] * v[j];
                }
            }
            out.push(lambda);
        }
        out
    }

    #[test]
    fn projection_variance_equals_top_covariance_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let n = x.len() as f64;
        let means: Vec<f64> = (0..10).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov: Vec<Vec<f64>> = (0..10)
            .map(|a| {
                (0..10)
                    .map(|b| x.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / (n - 1.0))
                    .collect()
            })
            .collect();
        let eig = top_eigenvalues(cov, 2);
        let p = project_2d(&x).unwrap();
        for c in 0..2 {
            let mean = p.iter().map(|q| q[c]).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            let var = p.iter().map(|q| (q[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - eig[c]).abs() < 1e-8 * eig[0], "{var} vs {}", eig[c]);
        }
    }

    #[test]
    fn sign_convention_makes_largest_coordinate_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let p = project_2d(&x).unwrap();
        for c in 0..2 {
            let pivot = p.iter().map(|q| q[c]).fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(u in proptest::collection::vec(-10.0f64..10.0, 3), v in proptest::collection::vec(-10.0f64..10.0, 3)) {
            prop_assume!(u.iter().any(|x| *x != 0.0) && v.iter().any(|x| *x != 0.0));
            prop_assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        }

        #[test]
        fn mean_is_order_invariant(perm in Just(vec!["argument", "for"]).prop_shuffle()) {
            let t = toy();
            prop_assert_eq!(embed_label(&t, &perm.join(" ")).unwrap(), vec![0.5, 1.0]);
        }

        #[test]
        fn nearest_is_scale_invariant(
            q in proptest::collection::vec(-1.0f64..1.0, 4),
            cands in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..6),
            scale in 0.001f64..1000.0,
        ) {
            prop_assume!(q.iter().any(|x| x.abs() > 1e-3));
            prop_assume!(cands.iter().all(|c| c.iter().any(|x| x.abs() > 1e-3)));
            let cs: Vec<LabelVector> = cands.iter().map(|c| lv("c", c)).collect();
            let scaled: Vec<f64> = q.iter().map(|x| x * scale).collect();
            prop_assert_eq!(nearest_label(&q, &cs).unwrap().index, nearest_label(&scaled, &cs).unwrap().index);
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::cosine;
use crate::{LlmBackend, LlmError};

pub const DEFAULT_CHUNK_CHARS: usize = 1600;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    UserGuide,
    CaseStudy,
    SyntaxManual,
    GeneralKnowledge,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::UserGuide => "user_guide",
            DocKind::CaseStudy => "case_study",
            DocKind::SyntaxManual => "syntax_manual",
            DocKind::GeneralKnowledge => "general_knowledge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub source_id: String,
    pub kind: DocKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocChunk {
    pub source_id: String,
    pub kind: DocKind,
    pub text: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    /// Ingestion position of the chunk.
    pub index: usize,
    pub score: f64,
    pub source_id: String,
    pub kind: DocKind,
    pub text: String,
}

/// Moves `pos` to the nearest whitespace boundary within `reach` characters.
fn snap(chars: &[char], pos: usize, reach: usize) -> usize {
    if pos == 0 || pos >= chars.len() {
        return pos.min(chars.len());
    }
    for d in 0..=reach {
        if pos >= d && chars[pos - d].is_whitespace() {
            return pos - d;
        }
        if pos + d < chars.len() && chars[pos + d].is_whitespace() {
            return pos + d;
        }
    }
    pos
}

/// Splits text into windows of about `chunk_chars` characters whose starts
/// are `chunk_chars − overlap_chars` apart, with both ends moved to the
/// nearest whitespace. Chunks are trimmed and never empty.
pub fn chunk_text(text: &str, chunk_chars: usize, overlap_chars: usize) -> Result<Vec<String>, LlmError> {
    if chunk_chars <= overlap_chars {
        return Err(LlmError::Chunking { chunk: chunk_chars, overlap: overlap_chars });
    }
    let chars: Vec<char> = text.chars().collect();
    let stride = chunk_chars - overlap_chars;
    let reach = (overlap_chars / 2).max(1).min(stride / 2);
    let mut out = Vec::new();
    let mut target = 0;
    while target < chars.len() {
        let start = snap(&chars, target, reach);
        let end = snap(&chars, (target + chunk_chars).min(chars.len()), reach).max(start);
        let piece: String = chars[start..end].iter().collect();
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
        target += stride;
    }
    Ok(out)
}

/// Embedded document chunks, searchable by cosine similarity.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VectorStore {
    pub chunks: Vec<DocChunk>,
}

impl VectorStore {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Chunk positions grouped by document kind.
    pub fn indices_by_kind(&self) -> BTreeMap<DocKind, Vec<usize>> {
        let mut out: BTreeMap<DocKind, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.chunks.iter().enumerate() {
            out.entry(c.kind).or_default().push(i);
        }
        out
    }

    /// Top-`k` chunks for an embedded query; equal scores keep ingestion order.
    pub fn search(&self, query: &[f32], k: usize) -> Vec<Retrieved> {
        let mut scored: Vec<(usize, f64)> = self.chunks.iter().enumerate().map(|(i, c)| (i, cosine(query, &c.vector))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, score)| {
                let c = &self.chunks[i];
                Retrieved { index: i, score, source_id: c.source_id.clone(), kind: c.kind, text: c.text.clone() }
            })
            .collect()
    }

    pub fn retrieve(&self, backend: &dyn LlmBackend, query: &str, k: usize) -> Result<Vec<Retrieved>, LlmError> {
        let q = backend.embed(&[query.to_string()])?;
        Ok(self.search(&q[0], k))
    }
}

pub fn ingest_corpus(
    backend: &dyn LlmBackend,
    docs: &[Document],
    chunk_chars: usize,
    overlap_chars: usize,
) -> Result<VectorStore, LlmError> {
    let mut pieces = Vec::new();
    for d in docs {
        for text in chunk_text(&d.text, chunk_chars, overlap_chars)? {
            pieces.push((d.source_id.clone(), d.kind, text));
        }
    }
    if pieces.is_empty() {
        return Err(LlmError::EmptyCorpus);
    }
    let texts: Vec<String> = pieces.iter().map(|p| p.2.clone()).collect();
    let vectors = backend.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(LlmError::Decode(format!("{} embeddings for {} chunks", vectors.len(), texts.len())));
    }
    let chunks = pieces
        .into_iter()
        .zip(vectors)
        .map(|((source_id, kind, text), vector)| DocChunk { source_id, kind, text, vector })
        .collect();
    Ok(VectorStore { chunks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MockBackend;

    fn words(n_chars: usize) -> String {
        // Five-letter words separated by single spaces.
        let mut s = String::new();
        let mut k = 0;
        while s.len() < n_chars {
            s.push_str(&format!("w{:04} ", k % 10_000));
            k += 1;
        }
        s.truncate(n_chars);
        s
    }

    #[test]
    fn short_document_is_one_chunk() {
        assert_eq!(chunk_text(&words(100), 1000, 200).unwrap().len(), 1);
    }

    #[test]
    fn long_document_windows_overlap() {
        let text = words(2500);
        let chunks = chunk_text(&text, 1000, 200).unwrap();
        assert_eq!(chunks.len(), 4);
        for pair in chunks.windows(2) {
            // Consecutive windows share their boundary region, up to word snapping.
            let head_word = pair[1].split_whitespace().next().unwrap();
            assert!(pair[0].contains(head_word));
        }
        assert!(chunks[..2].iter().all(|c| c.len().abs_diff(1000) <= 12));
        assert!(chunks[2].len().abs_diff(900) <= 12);
    }

    #[test]
    fn overlap_must_be_smaller_than_chunk() {
        assert!(chunk_text("abc", 100, 100).is_err());
    }

    fn corpus() -> Vec<Document> {
        let kinds = [DocKind::UserGuide, DocKind::CaseStudy, DocKind::SyntaxManual, DocKind::GeneralKnowledge];
        kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| Document { source_id: format!("doc{i}"), kind, text: format!("{} topic{i} alpha{i}", kind.as_str()) })
            .collect()
    }

    #[test]
    fn store_indexes_each_kind() {
        let store = ingest_corpus(&MockBackend::offline(), &corpus(), 1600, 200).unwrap();
        let by_kind = store.indices_by_kind();
        assert_eq!(by_kind.len(), 4);
        assert!(ingest_corpus(&MockBackend::offline(), &[], 1600, 200).is_err());
    }

    #[test]
    fn exact_query_ranks_its_chunk_first() {
        let backend = MockBackend::offline();
        let store = ingest_corpus(&backend, &corpus(), 1600, 200).unwrap();
        let hits = store.retrieve(&backend, &store.chunks[2].text.clone(), 2).unwrap();
        assert_eq!(hits[0].index, 2);
        assert_eq!(hits[0].kind, DocKind::SyntaxManual);
        assert_eq!(store.retrieve(&backend, "anything", 10).unwrap().len(), 4);
    }

    #[test]
    fn search_equals_brute_force_scan() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2000) as f32 / 1000.0 - 1.0
        };
        let chunks: Vec<DocChunk> = (0..60)
            .map(|i| DocChunk { source_id: format!("s{i}"), kind: DocKind::CaseStudy, text: format!("c{i}"), vector: (0..16).map(|_| next()).collect() })
            .collect();
        let store = VectorStore { chunks };
        for _ in 0..20 {
            let q: Vec<f32> = (0..16).map(|_| next()).collect();
            let got: Vec<usize> = store.search(&q, 7).iter().map(|r| r.index).collect();
            let mut all: Vec<(usize, f64)> = store
                .chunks
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let dot: f64 = q.iter().zip(&c.vector).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
                    let na: f64 = q.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                    let nb: f64 = c.vector.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                    (i, dot / (na * nb))
                })
                .collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let want: Vec<usize> = all[..7].iter().map(|x| x.0).collect();
            assert_eq!(got, want);
        }
    }
}

//! Embedding-based comparison of two codebooks: cosine matrices, the
//! trace-maximizing reordering and CSV/SVG export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignment::min_cost_assignment;
use crate::codebook::CodebookEntry;
use crate::error::{Error, Result};

/// Value used for the missing rows or columns of a rectangular matrix.
pub const PAD_VALUE: f64 = -1.0;
pub const DEFAULT_HIGHLIGHT: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub trait EmbeddingProvider {
    fn name(&self) -> String;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Embeds `texts` and checks the batch shape.
pub fn embed(texts: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::Input("nothing to embed".into()));
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Embedding(format!(
            "{} returned {} vectors for {} texts",
            provider.name(),
            vectors.len(),
            texts.len()
        )));
    }
    let d = vectors[0].dim();
    for (i, v) in vectors.iter().enumerate() {
        if v.dim() != d {
            return Err(Error::Embedding(format!("vector {i} has dimension {} but the batch uses {d}", v.dim())));
        }
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Embedding(format!("vector {i} has non-finite components")));
        }
    }
    Ok(vectors)
}

/// Deterministic feature-hashing embedding over word unigrams and bigrams.
///
/// Not semantic, but texts that share words land close together, which is
/// enough for tests and offline demos.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    pub dim: usize,
}

impl Default for HashEmbedding {
    fn default() -> Self {
        HashEmbedding { dim: 256 }
    }
}

impl HashEmbedding {
    pub fn new(dim: usize) -> Self {
        HashEmbedding { dim: dim.max(1) }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut add = |feature: &str, weight: f64| {
            let h = Sha256::digest(feature.as_bytes());
            let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) % self.dim as u64;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[idx as usize] += sign * weight;
        };
        for w in &words {
            add(w, 1.0);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        EmbeddingVector(v)
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn name(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Precomputed vectors keyed by text, read from a JSON object.
#[derive(Debug, Clone, Default)]
pub struct VectorsFile {
    vectors: HashMap<String, Vec<f64>>,
}

impl VectorsFile {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Self {
        VectorsFile { vectors }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(VectorsFile { vectors: serde_json::from_str(&text)? })
    }
}

impl EmbeddingProvider for VectorsFile {
    fn name(&self) -> String {
        "vectors-file".into()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .map(|v| EmbeddingVector(v.clone()))
                    .ok_or_else(|| Error::Embedding(format!("no precomputed vector for '{t}'")))
            })
            .collect()
    }
}

#[cfg(feature = "live")]
pub use remote::RemoteEmbedding;

#[cfg(feature = "live")]
mod remote {
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{EmbeddingProvider, EmbeddingVector};
    use crate::error::{Error, Result};
    use crate::gateway::GatewayError;

    /// OpenAI-style embeddings endpoint (`{"model", "input": [...]}` -> `data[i].embedding`).
    pub struct RemoteEmbedding {
        endpoint: String,
        model_id: String,
        api_key: String,
        client: reqwest::blocking::Client,
    }

    impl RemoteEmbedding {
        pub fn new(endpoint: &str, model_id: &str, api_key_env: &str) -> Result<Self> {
            let api_key = std::env::var(api_key_env)
                .map_err(|_| GatewayError::Auth(format!("environment variable {api_key_env} is not set")))?;
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| GatewayError::Transport(e.to_string()))?;
            Ok(RemoteEmbedding { endpoint: endpoint.into(), model_id: model_id.into(), api_key, client })
        }
    }

    impl EmbeddingProvider for RemoteEmbedding {
        fn name(&self) -> String {
            format!("remote-{}", self.model_id)
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
            let resp = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&json!({"model": self.model_id, "input": texts}))
                .send()
                .map_err(|e| GatewayError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            let body = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
            if !(200..300).contains(&status) {
                return Err(GatewayError::Transport(format!("HTTP {status}: {body}")).into());
            }
            let v: Value = serde_json::from_str(&body)?;
            let data = v
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Embedding("response has no data array".into()))?;
            data.iter()
                .map(|item| {
                    let arr = item
                        .get("embedding")
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::Embedding("item has no embedding".into()))?;
                    arr.iter()
                        .map(|x| x.as_f64().ok_or_else(|| Error::Embedding("non-numeric component".into())))
                        .collect::<Result<Vec<_>>>()
                        .map(EmbeddingVector)
                })
                .collect()
        }
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Embedding(format!("dimension mismatch: {} vs {}", u.dim(), v.dim())));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Embedding("cosine of a zero vector".into()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    /// Matched (row, column) pairs in the original index space, by row.
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major `rows x cols`.
    pub values: Vec<f64>,
    pub ordering: Option<Ordering>,
}

impl SimilarityMatrix {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_labels.len() * col_labels.len() {
            return Err(Error::Input(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        Ok(SimilarityMatrix { row_labels, col_labels, values, ordering: None })
    }

    /// Unlabeled matrix from rows; labels are the 1-based indices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("ragged matrix".into()));
        }
        let labels = |n: usize| (1..=n).map(|i| i.to_string()).collect();
        Self::new(labels(rows.len()), labels(cols), rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows().min(self.cols())).map(|i| self.get(i, i)).sum()
    }

    /// Same matrix with rows and columns taken in the given orders.
    pub fn permuted(&self, row_order: &[usize], col_order: &[usize]) -> SimilarityMatrix {
        let values = row_order
            .iter()
            .flat_map(|&r| col_order.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        SimilarityMatrix {
            row_labels: row_order.iter().map(|&r| self.row_labels[r].clone()).collect(),
            col_labels: col_order.iter().map(|&c| self.col_labels[c].clone()).collect(),
            values,
            ordering: None,
        }
    }
}

pub fn cosine_matrix(
    row_labels: Vec<String>,
    a: &[EmbeddingVector],
    col_labels: Vec<String>,
    b: &[EmbeddingVector],
) -> Result<SimilarityMatrix> {
    let mut values = Vec::with_capacity(a.len() * b.len());
    for u in a {
        for v in b {
            values.push(cosine(u, v)?);
        }
    }
    SimilarityMatrix::new(row_labels, col_labels, values)
}

/// Embeds both codebooks ("Name. Description") and returns their cosine matrix.
pub fn compare_codebooks(
    left: &[CodebookEntry],
    right: &[CodebookEntry],
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityMatrix> {
    let texts = |e: &[CodebookEntry]| e.iter().map(|x| x.code.judge_text()).collect::<Vec<_>>();
    let (lt, rt) = (texts(left), texts(right));
    let a = embed(&lt, provider)?;
    let b = embed(&rt, provider)?;
    if a[0].dim() != b[0].dim() {
        return Err(Error::Embedding("the two codebooks were embedded with different dimensions".into()));
    }
    let labels = |e: &[CodebookEntry]| e.iter().map(|x| x.code.name.clone()).collect();
    cosine_matrix(labels(left), &a, labels(right), &b)
}

/// Maximum-weight matching of rows to columns, returned together with the
/// matrix reordered so matched pairs sit on the leading diagonal. Unmatched
/// rows and columns of a rectangular matrix follow in their original order.
pub fn optimal_diagonal_ordering(m: &SimilarityMatrix) -> Result<(Ordering, SimilarityMatrix)> {
    let (r, c) = (m.rows(), m.cols());
    if r == 0 || c == 0 {
        return Err(Error::Input("empty similarity matrix".into()));
    }
    let n = r.max(c);
    let mut cost = vec![1.0 - PAD_VALUE; n * n];
    for i in 0..r {
        for j in 0..c {
            cost[i * n + j] = 1.0 - m.get(i, j);
        }
    }
    let assign = min_cost_assignment(&cost, n);
    let pairs: Vec<(usize, usize)> = (0..r).filter(|&i| assign[i] < c).map(|i| (i, assign[i])).collect();
    let score = pairs.iter().map(|&(i, j)| m.get(i, j)).sum();

    let mut row_order: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut col_order: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    row_order.extend((0..r).filter(|i| !pairs.iter().any(|p| p.0 == *i)));
    col_order.extend((0..c).filter(|j| !pairs.iter().any(|p| p.1 == *j)));

    let ordering = Ordering { pairs, score };
    let mut reordered = m.permuted(&row_order, &col_order);
    reordered.ordering = Some(ordering.clone());
    Ok((ordering, reordered))
}

pub fn write_matrix_csv<W: Write>(w: W, m: &SimilarityMatrix) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header = vec![String::new()];
    header.extend(m.col_labels.iter().cloned());
    out.write_record(&header)?;
    for (i, label) in m.row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..m.cols()).map(|j| format!("{}", m.get(i, j))));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<matrix csv>", e))
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<SimilarityMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| Error::Input("empty matrix CSV".into()))??;
    let col_labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let (mut row_labels, mut values) = (Vec::new(), Vec::new());
    for rec in records {
        let rec = rec?;
        row_labels.push(rec.get(0).unwrap_or_default().to_string());
        for cell in rec.iter().skip(1) {
            values.push(cell.parse::<f64>().map_err(|e| Error::Input(format!("bad matrix value '{cell}': {e}")))?);
        }
    }
    SimilarityMatrix::new(row_labels, col_labels, values)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn shorten(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let head: String = s.chars().take(max.saturating_sub(1)).collect();
        format!("{head}…")
    }
}

/// Heatmap with a white-to-red scale over [0, 1]; cells at or above
/// `highlight` get an outlined box.
pub fn heatmap_svg(m: &SimilarityMatrix, highlight: Option<f64>) -> String {
    const CELL: usize = 18;
    const LABEL: usize = 160;
    let (w, h) = (LABEL + m.cols() * CELL + 10, LABEL + m.rows() * CELL + 10);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    for (j, label) in m.col_labels.iter().enumerate() {
        let x = LABEL + j * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#,
            LABEL - 4,
            LABEL - 4,
            escape_xml(&shorten(label, 28))
        );
    }
    for (i, label) in m.row_labels.iter().enumerate() {
        let y = LABEL + i * CELL + CELL * 3 / 4;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, LABEL - 4, escape_xml(&shorten(label, 28)));
    }
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            let fade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let (x, y) = (LABEL + j * CELL, LABEL + i * CELL);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb(255,{fade},{fade})"><title>{:.3}</title></rect>"#,
                v
            );
            if highlight.is_some_and(|t| v >= t) {
                let _ = writeln!(
                    s,
                    r#"<rect class="highlight" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="none" stroke="darkred" stroke-width="2"/>"#
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn export_matrix(m: &SimilarityMatrix, dir: &Path, stem: &str, highlight: Option<f64>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_matrix_csv(f, m)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    std::fs::write(&svg_path, heatmap_svg(m, highlight)).map_err(|e| Error::io(&svg_path, e))
}

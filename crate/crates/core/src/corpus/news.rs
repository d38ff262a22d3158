use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::cascade::Timestamp;
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Row reserved for title padding. Its vector is all zeros.
pub const PAD_TOKEN: TokenId = 0;
/// Row shared by every word missing from the vector file. All zeros.
pub const OOV_TOKEN: TokenId = 1;

/// Frozen word vectors; rows 0 and 1 are the PAD and OOV rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    vectors: Array2<f64>,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl WordEmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Duplicate tokens keep the
    /// first vector.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut tokens = vec!["<pad>".to_string(), "<oov>".to_string()];
        let mut flat = vec![0.0; 2 * dim];
        let mut index = HashMap::new();
        for (tok, vec) in pairs {
            if vec.len() != dim {
                return Err(Error::Invalid(format!(
                    "word vector for {tok:?} has {} components, expected {dim}",
                    vec.len()
                )));
            }
            if index.contains_key(&tok) {
                continue;
            }
            index.insert(tok.clone(), tokens.len() as TokenId);
            tokens.push(tok);
            flat.extend(vec);
        }
        let vectors = Array2::from_shape_vec((tokens.len(), dim), flat)
            .expect("row count matches collected vectors");
        Ok(WordEmbeddingTable {
            vectors,
            tokens,
            index,
        })
    }

    /// Rebuilds a table from its token list (including the two reserved
    /// entries) and matrix, as stored in a normalized corpus.
    pub fn from_parts(tokens: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if tokens.len() != vectors.nrows() || tokens.len() < 2 {
            return Err(Error::Invalid(format!(
                "{} tokens for a {}-row vector matrix",
                tokens.len(),
                vectors.nrows()
            )));
        }
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Ok(WordEmbeddingTable {
            vectors,
            tokens,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn token_id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(OOV_TOKEN)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, id: TokenId) -> ArrayView1<'_, f64> {
        self.vectors.row(id as usize)
    }

    /// Token ids for a whitespace-separated title, truncated and right-padded
    /// to exactly `n_max` entries.
    pub fn encode_title(&self, title: &str, n_max: usize) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = title
            .split_whitespace()
            .take(n_max)
            .map(|w| self.token_id(w))
            .collect();
        ids.resize(n_max, PAD_TOKEN);
        ids
    }
}

pub fn parse_word_vectors(reader: impl BufRead, path: &Path) -> Result<WordEmbeddingTable> {
    let mut lines = reader.lines().enumerate().peekable();
    let mut pairs = Vec::new();
    let mut dim = None;
    let mut first = true;
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if first {
            first = false;
            // "vocab_size dim" header: two integers, and the following line is
            // not itself a two-field entry.
            let looks_like_header = fields.len() == 2
                && fields.iter().all(|f| f.parse::<usize>().is_ok())
                && lines.peek().is_none_or(|(_, next)| {
                    next.as_ref()
                        .map(|n| n.split_whitespace().count() != 2)
                        .unwrap_or(true)
                });
            if looks_like_header {
                dim = Some(fields[1].parse::<usize>().expect("checked above"));
                continue;
            }
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad vector component: {e}")))?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {expected} components, found {}", values.len()),
            ));
        }
        pairs.push((fields[0].to_string(), values));
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 1, "empty word vector file"))?;
    WordEmbeddingTable::from_pairs(dim, pairs)
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordEmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(BufReader::new(file), path)
}

/// A news title mapped to token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub news_id: u64,
    pub title_tokens: Vec<TokenId>,
    pub publish_time: Timestamp,
}

/// Parses `news_id<TAB>publish_time<TAB>tokens` lines.
pub fn parse_news_titles(
    reader: impl BufRead,
    path: &Path,
    words: &WordEmbeddingTable,
    n_max: usize,
) -> Result<Vec<NewsItem>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (id, time) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::parse(path, i + 1, "expected news_id<TAB>publish_time<TAB>title")),
        };
        let title = parts.next().unwrap_or("");
        let news_id = id
            .trim()
            .parse()
            .map_err(|e| Error::parse(path, i + 1, format!("bad news id: {e}")))?;
        let publish_time = time
            .trim()
            .parse()
            .map_err(|e| Error::parse(path, i + 1, format!("bad publish time: {e}")))?;
        out.push(NewsItem {
            news_id,
            title_tokens: words.encode_title(title, n_max),
            publish_time,
        });
    }
    Ok(out)
}

pub fn load_news_titles(
    path: impl AsRef<Path>,
    words: &WordEmbeddingTable,
    n_max: usize,
) -> Result<Vec<NewsItem>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_news_titles(BufReader::new(file), path, words, n_max)
}

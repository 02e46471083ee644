//! Plain-text word vectors, one `name v1 … vw` entry per line.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use crate::embedding_store::WordVectors;
use crate::error::{Error, Result};

/// Result of parsing a word-vector file.
#[derive(Clone, Debug)]
pub struct ParsedWordVectors {
    pub vectors: WordVectors,
    /// Names that appeared more than once; the last occurrence was kept.
    pub duplicates: Vec<String>,
}

/// Parses word vectors for exactly the given attribute and object names.
/// Entries not in the vocabulary are ignored.
pub fn parse_word_vectors(
    text: &str,
    source: &str,
    attributes: &[String],
    objects: &[String],
) -> Result<ParsedWordVectors> {
    let mut table: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut duplicates = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        let Some(name) = tokens.next() else {
            continue;
        };
        let values = tokens
            .map(|t| t.parse::<f32>().map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| {
                Error::load(format!("{source}:{}", lineno + 1), format!("bad number: {e}"))
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::load(
                    format!("{source}:{} ({name})", lineno + 1),
                    format!("ragged vector: {} values, expected {w}", values.len()),
                ))
            }
            Some(_) => {}
        }
        if table.insert(name, values).is_some() {
            duplicates.push(name.to_string());
        }
    }

    let fetch = |name: &String| {
        table.get(name.as_str()).cloned().ok_or_else(|| {
            Error::load(source.to_string(), format!("missing word vector for {name:?}"))
        })
    };
    let attrs = attributes.iter().map(fetch).collect::<Result<Vec<_>>>()?;
    let objs = objects.iter().map(fetch).collect::<Result<Vec<_>>>()?;
    Ok(ParsedWordVectors {
        vectors: WordVectors::new(attrs, objs)?,
        duplicates,
    })
}

/// Reads a word-vector file. Duplicate names keep the last line and log a warning.
pub fn load_word_vectors(path: &Path, attributes: &[String], objects: &[String]) -> Result<WordVectors> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_word_vectors(&text, &path.display().to_string(), attributes, objects)?;
    for name in &parsed.duplicates {
        warn!("{}: duplicate word vector {name:?}, keeping last", path.display());
    }
    Ok(parsed.vectors)
}

/// Serializes attribute vectors then object vectors. Values are written as
/// shortest round-trip f32 decimals. A name shared by an attribute and an
/// object is written once, from the attribute table.
pub fn format_word_vectors(attributes: &[String], objects: &[String], words: &WordVectors) -> String {
    let mut out = String::new();
    let mut written = std::collections::HashSet::new();
    let rows = attributes
        .iter()
        .enumerate()
        .map(|(i, n)| (n, words.attr(i)))
        .chain(objects.iter().enumerate().map(|(i, n)| (n, words.obj(i))));
    for (name, vec) in rows {
        if !written.insert(name) {
            continue;
        }
        out.push_str(name);
        for &v in vec {
            out.push(' ');
            out.push_str(&(v as f32).to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn two_entries() {
        let p = parse_word_vectors("red 1 2 3\npen 4 5 6\n", "t", &s(&["red"]), &s(&["pen"])).unwrap();
        assert_eq!(p.vectors.attr(0), &[1.0, 2.0, 3.0]);
        assert_eq!(p.vectors.obj(0), &[4.0, 5.0, 6.0]);
        assert!(p.duplicates.is_empty());
    }

    #[test]
    fn missing_entry_is_named() {
        let err = parse_word_vectors("red 1 2 3\n", "t", &s(&["red"]), &s(&["pen"])).unwrap_err();
        assert!(err.to_string().contains("\"pen\""), "{err}");
    }

    #[test]
    fn duplicate_keeps_last() {
        let p = parse_word_vectors(
            "red 1 2\npen 0 0\nred 7 8\n",
            "t",
            &s(&["red"]),
            &s(&["pen"]),
        )
        .unwrap();
        assert_eq!(p.vectors.attr(0), &[7.0, 8.0]);
        assert_eq!(p.duplicates, vec!["red".to_string()]);
    }

    #[test]
    fn ragged_rejected() {
        let err = parse_word_vectors("red 1 2\npen 1\n", "t", &s(&["red"]), &s(&["pen"])).unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");
    }

    #[test]
    fn format_then_parse() {
        let words = WordVectors::new(vec![vec![0.1, -2.0]], vec![vec![3.5, 1e-7]]).unwrap();
        let words = WordVectors::new(
            vec![words.attr(0).iter().map(|&v| f64::from(v as f32)).collect()],
            vec![words.obj(0).iter().map(|&v| f64::from(v as f32)).collect()],
        )
        .unwrap();
        let text = format_word_vectors(&s(&["red"]), &s(&["pen"]), &words);
        let back = parse_word_vectors(&text, "t", &s(&["red"]), &s(&["pen"])).unwrap();
        assert_eq!(back.vectors, words);
    }
}

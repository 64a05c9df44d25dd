//! Vector files: one row per paragraph, `doc_id<TAB>index<TAB>v1,v2,...,vd`.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddingVector, ParagraphRef, VectorMap};
use crate::error::{Error, Result};

pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&text)
}

pub fn parse_vectors(text: &str) -> Result<VectorMap> {
    let mut out = VectorMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(doc_id), Some(index), Some(values), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                format!("line {lineno}"),
                "expected 3 tab-separated fields",
            ));
        };
        if doc_id.is_empty() {
            return Err(Error::parse(format!("line {lineno}"), "empty doc_id"));
        }
        let index: usize = index
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("line {lineno}"), format!("bad index {index:?}")))?;
        let values = values
            .split(',')
            .map(|v| {
                let x: f64 = v.trim().parse().map_err(|_| {
                    Error::parse(format!("line {lineno}"), format!("bad value {v:?}"))
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::NonFinite { line: lineno })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::RaggedDimensions {
                    line: lineno,
                    found: values.len(),
                    expected: d,
                })
            }
            _ => {}
        }
        let r = ParagraphRef::new(doc_id, index);
        if out.contains_key(&r) {
            return Err(Error::DuplicateParagraph(r.to_string()));
        }
        out.insert(r.clone(), EmbeddingVector::new(r, values));
    }
    Ok(out)
}

/// Serializes vectors in map order with shortest round-trip decimals.
pub fn write_vectors<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> String {
    let mut out = String::new();
    for v in vectors {
        let _ = write!(
            out,
            "{}\t{}\t",
            v.paragraph_ref.doc_id, v.paragraph_ref.index
        );
        for (k, x) in v.values.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_well_formed_file() {
        let text = "a\t0\t1,2,3,4\na\t1\t0.5,0,0,-1\nb\t0\t1e-3,2,3,4\n";
        let map = parse_vectors(text).unwrap();
        assert_eq!(map.len(), 3);
        assert!(map.values().all(|v| v.dim() == 4));
        assert_eq!(
            write_vectors(map.values()),
            "a\t0\t1,2,3,4\na\t1\t0.5,0,0,-1\nb\t0\t0.001,2,3,4\n"
        );
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "a\t0\t1,2,3,4\na\t1\t1,2,3\n";
        assert!(matches!(
            parse_vectors(text),
            Err(Error::RaggedDimensions {
                line: 2,
                found: 3,
                expected: 4
            })
        ));
    }

    #[test]
    fn rejects_nan() {
        let text = "a\t0\t1,nan,3,4\n";
        assert!(matches!(
            parse_vectors(text),
            Err(Error::NonFinite { line: 1 })
        ));
        assert!(parse_vectors("a\t0\t1,inf\n").is_err());
    }

    #[test]
    fn rejects_duplicates_and_bad_shape() {
        assert!(parse_vectors("a\t0\t1,2\na\t0\t3,4\n").is_err());
        assert!(parse_vectors("a\t1,2\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let v = EmbeddingVector::new(
            ParagraphRef::new("d", 7),
            vec![0.1, -1.0 / 3.0, 1e-300, 12345.678],
        );
        let text = write_vectors([&v]);
        let back = parse_vectors(&text).unwrap();
        assert_eq!(back.values().next().unwrap(), &v);
    }
}

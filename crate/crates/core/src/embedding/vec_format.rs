//! fastText text format: a `count dim` header, then `token v1 … vd` per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_VOCAB: usize = 200_000;

/// Counts of lines dropped while loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub declared_count: usize,
    pub wrong_field_count: usize,
    pub unparsable: usize,
    pub non_finite: usize,
    pub zero_norm: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn skipped(&self) -> usize {
        self.wrong_field_count + self.unparsable + self.non_finite + self.zero_norm + self.duplicates
    }
}

pub fn load_embeddings(
    path: &Path,
    max_vocab: usize,
    lang: &str,
) -> Result<(EmbeddingMatrix, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), max_vocab, lang).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses `.vec` text, keeping the first `max_vocab` valid rows in file order.
///
/// Lines with the wrong number of fields, unparsable or non-finite values,
/// all-zero vectors and repeated tokens are skipped and counted.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    max_vocab: usize,
    lang: &str,
) -> Result<(EmbeddingMatrix, LoadReport)> {
    if max_vocab == 0 {
        return Err(Error::InvalidArgument("max_vocab must be positive".into()));
    }
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io("<reader>", e))?,
        None => {
            return Err(Error::Format {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let (count, dim) = parse_header(header.trim_start_matches('\u{feff}'))?;
    let mut report = LoadReport {
        declared_count: count,
        ..Default::default()
    };

    let capacity = count.min(max_vocab);
    let mut words = Vec::with_capacity(capacity);
    let mut seen = HashSet::with_capacity(capacity);
    let mut data = Vec::with_capacity(capacity * dim);
    let mut row = Vec::with_capacity(dim);

    for (lineno, line) in lines.enumerate() {
        if words.len() >= max_vocab {
            break;
        }
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let lineno = lineno + 2;
        let mut fields = line.split_ascii_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        row.clear();
        let mut bad_parse = false;
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) => row.push(v),
                Err(_) => bad_parse = true,
            }
        }
        if bad_parse {
            report.unparsable += 1;
            warn!("line {lineno}: unparsable value, skipped");
            continue;
        }
        if row.len() != dim {
            report.wrong_field_count += 1;
            warn!("line {lineno}: expected {dim} values, found {}, skipped", row.len());
            continue;
        }
        if !row.iter().all(|v| v.is_finite()) {
            report.non_finite += 1;
            warn!("line {lineno}: non-finite value, skipped");
            continue;
        }
        if row.iter().all(|&v| v == 0.0) {
            report.zero_norm += 1;
            warn!("line {lineno}: zero vector, skipped");
            continue;
        }
        if !seen.insert(token.to_owned()) {
            report.duplicates += 1;
            warn!("line {lineno}: duplicate token {token:?}, keeping first");
            continue;
        }
        words.push(token.to_owned());
        data.extend_from_slice(&row);
    }

    if words.is_empty() {
        return Err(Error::Empty("no valid embedding rows".into()));
    }
    let vectors = Array2::from_shape_vec((words.len(), dim), data).expect("row-major buffer");
    Ok((EmbeddingMatrix::new(words, vectors, lang)?, report))
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = |message: String| Error::Format { line: 1, message };
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 2 {
        return Err(bad(format!("expected \"<count> <dim>\", found {header:?}")));
    }
    let count = fields[0]
        .parse::<usize>()
        .map_err(|_| bad(format!("bad count {:?}", fields[0])))?;
    let dim = fields[1]
        .parse::<usize>()
        .map_err(|_| bad(format!("bad dimension {:?}", fields[1])))?;
    if dim == 0 {
        return Err(bad("dimension must be positive".into()));
    }
    Ok((count, dim))
}

/// Writes `.vec` text with 6 significant digits per value.
pub fn write_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(&mut w, emb).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_to<W: Write>(w: &mut W, emb: &EmbeddingMatrix) -> std::io::Result<()> {
    writeln!(w, "{} {}", emb.len(), emb.dim())?;
    for (word, row) in emb.words().iter().zip(emb.vectors().rows()) {
        w.write_all(word.as_bytes())?;
        for v in row {
            write!(w, " {}", format_sig6(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `%g`-style formatting with six significant digits.
fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str, max_vocab: usize) -> Result<(EmbeddingMatrix, LoadReport)> {
        read_embeddings(text.as_bytes(), max_vocab, "xx")
    }

    const THREE: &str = "3 4\na 1 2 3 4\nb 0.5 0.5 0.5 0.5\nc -1 0 0 1e-3\n";

    #[test]
    fn reads_all_rows() {
        let (e, report) = read(THREE, 10).unwrap();
        assert_eq!(e.vectors().dim(), (3, 4));
        assert_eq!(e.words(), &["a", "b", "c"]);
        assert_eq!(report.skipped(), 0);
        assert_eq!(e.vector(2)[3], 1e-3);
    }

    #[test]
    fn truncates_to_max_vocab() {
        let (e, _) = read(THREE, 2).unwrap();
        assert_eq!(e.vectors().dim(), (2, 4));
        assert_eq!(e.words(), &["a", "b"]);
    }

    #[test]
    fn duplicate_token_keeps_first() {
        let (e, report) = read("3 2\na 1 0\na 0 1\nb 1 1\n", 10).unwrap();
        assert_eq!(e.words(), &["a", "b"]);
        assert_eq!(e.vector(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(e.vector(1).to_vec(), vec![1.0, 1.0]);
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn bad_lines_are_skipped_and_counted() {
        let text = "5 2\na 1 0\nb 1\nc nan 1\nd 0 0\ne x 1\nf 0 2\n";
        let (e, report) = read(text, 10).unwrap();
        assert_eq!(e.words(), &["a", "f"]);
        assert_eq!(report.wrong_field_count, 1);
        assert_eq!(report.non_finite, 1);
        assert_eq!(report.zero_norm, 1);
        assert_eq!(report.unparsable, 1);
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(read("abc\na 1\n", 10), Err(Error::Format { line: 1, .. })));
        assert!(matches!(read("3\n", 10), Err(Error::Format { .. })));
        assert!(matches!(read("", 10), Err(Error::Format { .. })));
        assert!(matches!(read("1 0\n", 10), Err(Error::Format { .. })));
    }

    #[test]
    fn trailing_space_tolerated() {
        let (e, _) = read("1 2\nhé 1 2 \n", 10).unwrap();
        assert_eq!(e.words(), &["hé"]);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(0.6), "0.6");
        assert_eq!(format_sig6(-0.123456789), "-0.123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e6");
        assert_eq!(format_sig6(1.5e-7), "1.5e-7");
        assert_eq!(format_sig6(100.0), "100");
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..12)) {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|mut r| { if r.iter().all(|v| *v == 0.0) { r[0] = 0.5; } r })
                .collect();
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let words: Vec<String> = (0..n).map(|i| format!("tok{i}")).collect();
            let emb = EmbeddingMatrix::new(words, Array2::from_shape_vec((n, 3), flat).unwrap(), "xx").unwrap();
            let mut buf = Vec::new();
            write_to(&mut buf, &emb).unwrap();
            let (back, _) = read_embeddings(buf.as_slice(), usize::MAX, "xx").unwrap();
            prop_assert_eq!(back.words(), emb.words());
            for (a, b) in back.vectors().iter().zip(emb.vectors().iter()) {
                prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
            }
        }
    }
}

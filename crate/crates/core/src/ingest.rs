//! Export-file ingestion: tagged plaintext, CSV, and the newline-delimited
//! JSON archive written by `rpysco ingest`.
//!
//! Tagged format: each field starts with a two-character tag in column 0
//! followed by a space; continuation lines start with three spaces. `CR`
//! holds one cited reference per line, `PY` the publication year, `DI` the
//! DOI, `UT` the accession number, `TI` the title. `ER` ends a record and `EF`
//! ends the file.

use crate::model::{normalize_doi, CitingRecord, TaggedField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub file: String,
    pub line: u64,
    pub message: String,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<CitingRecord>,
    pub source_files: Vec<String>,
    pub ingest_warnings: Vec<IngestWarning>,
}

impl Corpus {
    pub fn cited_ref_count(&self) -> usize {
        self.records.iter().map(|r| r.cited_refs.len()).sum()
    }

    fn warn(&mut self, file: &str, line: u64, message: impl Into<String>) {
        let w = IngestWarning {
            file: file.to_owned(),
            line,
            message: message.into(),
        };
        log::warn!("{w}");
        self.ingest_warnings.push(w);
    }

    /// Appends `rec` unless its id or DOI was already seen.
    fn push_unique(&mut self, seen: &mut Seen, rec: CitingRecord, file: &str, line: u64) {
        if let Some(reason) = seen.duplicate_reason(&rec) {
            self.warn(
                file,
                line,
                format!("duplicate record {} ({reason}), dropped", rec.record_id),
            );
        } else {
            seen.insert(&rec);
            self.records.push(rec);
        }
    }
}

#[derive(Default)]
struct Seen {
    ids: HashSet<String>,
    dois: HashSet<String>,
}

impl Seen {
    fn duplicate_reason(&self, rec: &CitingRecord) -> Option<&'static str> {
        if self.ids.contains(&rec.record_id) {
            Some("same record id")
        } else if rec.doi.as_ref().is_some_and(|d| self.dois.contains(d)) {
            Some("same DOI")
        } else {
            None
        }
    }

    fn insert(&mut self, rec: &CitingRecord) {
        self.ids.insert(rec.record_id.clone());
        if let Some(d) = &rec.doi {
            self.dois.insert(d.clone());
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {file}: {source}")]
    Io { file: String, source: io::Error },
    #[error("{file}: CSV header has no column named {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("{file}:{line}: bad archive record: {source}")]
    Archive {
        file: String,
        line: u64,
        source: serde_json::Error,
    },
}

/// Decodes one line, replacing invalid UTF-8 and reporting whether it did.
fn decode_line(bytes: &[u8]) -> (String, bool) {
    let bytes = bytes.strip_suffix(b"\r").unwrap_or(bytes);
    match std::str::from_utf8(bytes) {
        Ok(s) => (s.to_owned(), false),
        Err(_) => (String::from_utf8_lossy(bytes).into_owned(), true),
    }
}

fn read_all(mut input: impl Read, file: &str) -> Result<Vec<u8>, IngestError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|source| IngestError::Io {
        file: file.to_owned(),
        source,
    })?;
    if buf.starts_with(b"\xEF\xBB\xBF") {
        buf.drain(..3);
    }
    Ok(buf)
}

fn tag_of(line: &str) -> Option<(&str, &str)> {
    let b = line.as_bytes();
    if b.len() < 2 || !b[0].is_ascii_uppercase() || !(b[1].is_ascii_uppercase() || b[1].is_ascii_digit()) {
        return None;
    }
    match b.get(2) {
        None => Some((&line[..2], "")),
        Some(b' ') => Some((&line[..2], &line[3..])),
        Some(_) => None,
    }
}

struct PendingRecord {
    start_line: u64,
    fields: Vec<(String, Vec<(u64, String)>)>,
}

impl PendingRecord {
    fn into_record(self, file: &str, ordinal: usize, corpus: &mut Corpus) -> CitingRecord {
        let mut rec = CitingRecord::new(String::new());
        let mut id = None;
        for (tag, lines) in self.fields {
            let first = lines
                .first()
                .map(|(n, s)| (*n, s.trim()))
                .unwrap_or((self.start_line, ""));
            match tag.as_str() {
                "CR" => {
                    for (n, raw) in lines {
                        if raw.trim().is_empty() {
                            corpus.warn(file, n, "empty cited reference skipped");
                        } else {
                            rec.cited_refs.push(raw);
                        }
                    }
                }
                "PY" if rec.publication_year.is_none() => match first.1.parse() {
                    Ok(y) => rec.publication_year = Some(y),
                    Err(_) => corpus.warn(file, first.0, format!("unparseable year {:?}", first.1)),
                },
                "DI" if rec.doi.is_none() => match normalize_doi(first.1) {
                    Some(d) => rec.doi = Some(d),
                    None => corpus.warn(file, first.0, format!("unparseable DOI {:?}", first.1)),
                },
                "UT" if id.is_none() && !first.1.is_empty() => id = Some(first.1.to_owned()),
                "TI" if rec.title.is_none() => {
                    let title = lines
                        .iter()
                        .map(|(_, s)| s.trim())
                        .filter(|s| !s.is_empty())
                        .collect::<Vec<_>>()
                        .join(" ");
                    rec.title = (!title.is_empty()).then_some(title);
                }
                _ => rec.extra_fields.push(TaggedField {
                    tag,
                    lines: lines.into_iter().map(|(_, s)| s).collect(),
                }),
            }
        }
        rec.record_id = id.unwrap_or_else(|| format!("{file}#{ordinal}"));
        rec
    }
}

/// Parses a tagged export stream. `file` names the source in warnings and in
/// synthetic record ids.
pub fn parse_tagged_export(input: impl Read, file: &str) -> Result<Corpus, IngestError> {
    let buf = read_all(input, file)?;
    let mut corpus = Corpus {
        source_files: vec![file.to_owned()],
        ..Default::default()
    };
    let mut seen = Seen::default();
    let mut pending: Option<PendingRecord> = None;
    let mut ordinal = 0usize;

    let finish = |pending: PendingRecord, ordinal: usize, corpus: &mut Corpus, seen: &mut Seen| {
        let line = pending.start_line;
        let rec = pending.into_record(file, ordinal, corpus);
        corpus.push_unique(seen, rec, file, line);
    };

    for (idx, raw_line) in buf.split(|&b| b == b'\n').enumerate() {
        let line_no = idx as u64 + 1;
        let (line, lossy) = decode_line(raw_line);
        if lossy {
            corpus.warn(file, line_no, "invalid UTF-8 replaced");
        }

        if let Some(rest) = line.strip_prefix("   ") {
            match pending.as_mut().and_then(|p| p.fields.last_mut()) {
                Some((_, lines)) => lines.push((line_no, rest.to_owned())),
                None if line.trim().is_empty() => {}
                None => corpus.warn(file, line_no, "continuation line outside a field skipped"),
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some((tag, value)) = tag_of(&line) else {
            corpus.warn(file, line_no, "malformed line skipped");
            continue;
        };
        match tag {
            "EF" => break,
            "ER" => match pending.take() {
                Some(p) => finish(p, ordinal, &mut corpus, &mut seen),
                None => corpus.warn(file, line_no, "ER outside a record"),
            },
            "FN" | "VR" if pending.is_none() => {}
            _ => {
                let p = pending.get_or_insert_with(|| {
                    ordinal += 1;
                    PendingRecord {
                        start_line: line_no,
                        fields: Vec::new(),
                    }
                });
                p.fields.push((tag.to_owned(), vec![(line_no, value.to_owned())]));
            }
        }
    }
    if let Some(p) = pending.take() {
        corpus.warn(file, p.start_line, "record not terminated by ER, kept");
        finish(p, ordinal, &mut corpus, &mut seen);
    }
    if corpus.records.is_empty() {
        corpus.warn(file, 0, "no records found");
    }
    Ok(corpus)
}

/// Writes records in the tagged format. Re-parsing the output yields the
/// same records.
pub fn write_tagged_export(records: &[CitingRecord], mut out: impl Write) -> io::Result<()> {
    fn field<W: Write>(out: &mut W, tag: &str, lines: &[String]) -> io::Result<()> {
        for (i, line) in lines.iter().enumerate() {
            if i == 0 {
                writeln!(out, "{tag} {line}")?;
            } else {
                writeln!(out, "   {line}")?;
            }
        }
        Ok(())
    }
    writeln!(out, "FN rpysco tagged export")?;
    writeln!(out, "VR 1.0")?;
    for rec in records {
        for extra in &rec.extra_fields {
            field(&mut out, &extra.tag, &extra.lines)?;
        }
        if let Some(t) = &rec.title {
            field(&mut out, "TI", std::slice::from_ref(t))?;
        }
        if let Some(y) = rec.publication_year {
            writeln!(out, "PY {y}")?;
        }
        if let Some(d) = &rec.doi {
            writeln!(out, "DI {d}")?;
        }
        field(&mut out, "CR", &rec.cited_refs)?;
        writeln!(out, "UT {}", rec.record_id)?;
        writeln!(out, "ER")?;
        writeln!(out)?;
    }
    writeln!(out, "EF")
}

/// Column names for CSV ingestion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvColumns {
    pub id: String,
    pub year: String,
    pub doi: String,
    pub cited_refs: String,
    pub title: Option<String>,
    pub delimiter: u8,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            id: "UT".into(),
            year: "PY".into(),
            doi: "DI".into(),
            cited_refs: "CR".into(),
            title: Some("TI".into()),
            delimiter: b',',
        }
    }
}

pub fn parse_csv_export(input: impl Read, columns: &CsvColumns, file: &str) -> Result<Corpus, IngestError> {
    let buf = read_all(input, file)?;
    let csv_err = |source| IngestError::Csv {
        file: file.to_owned(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(columns.delimiter)
        .flexible(true)
        .from_reader(buf.as_slice());
    let header = reader.byte_headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| String::from_utf8_lossy(h).trim() == name)
            .ok_or_else(|| IngestError::MissingColumn {
                file: file.to_owned(),
                column: name.to_owned(),
            })
    };
    let (id_col, year_col, doi_col, cr_col) = (
        col(&columns.id)?,
        col(&columns.year)?,
        col(&columns.doi)?,
        col(&columns.cited_refs)?,
    );
    let title_col = columns.title.as_deref().map(col).transpose()?;

    let mut corpus = Corpus {
        source_files: vec![file.to_owned()],
        ..Default::default()
    };
    let mut seen = Seen::default();
    for (ordinal, row) in reader.byte_records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            corpus.warn(
                file,
                line,
                format!("expected {} fields, found {}; row skipped", header.len(), row.len()),
            );
            continue;
        }
        let mut lossy = false;
        let mut cell = |i: usize| {
            let (s, bad) = decode_line(&row[i]);
            lossy |= bad;
            s
        };
        let id = cell(id_col).trim().to_owned();
        let year = cell(year_col);
        let doi = cell(doi_col);
        let refs = cell(cr_col);
        let title = title_col.map(&mut cell);
        if lossy {
            corpus.warn(file, line, "invalid UTF-8 replaced");
        }

        let mut rec = CitingRecord::new(if id.is_empty() {
            format!("{file}#{}", ordinal + 1)
        } else {
            id
        });
        let year = year.trim();
        if !year.is_empty() {
            match year.parse() {
                Ok(y) => rec.publication_year = Some(y),
                Err(_) => corpus.warn(file, line, format!("unparseable year {year:?}")),
            }
        }
        rec.doi = normalize_doi(&doi);
        rec.title = title.map(|t| t.trim().to_owned()).filter(|t| !t.is_empty());
        rec.cited_refs = split_reference_cell(&refs);
        corpus.push_unique(&mut seen, rec, file, line);
    }
    if corpus.records.is_empty() {
        corpus.warn(file, 0, "no records found");
    }
    Ok(corpus)
}

/// Splits a cited-references cell on `"; "`. A piece that begins with a
/// double quote runs to its closing quote, so delimiters inside it are kept;
/// the enclosing quotes are removed and doubled quotes unescaped.
pub fn split_reference_cell(cell: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = cell;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let mut piece = String::new();
        if let Some(quoted) = rest.strip_prefix('"') {
            let mut chars = quoted.char_indices().peekable();
            let mut end = quoted.len();
            while let Some((i, c)) = chars.next() {
                if c == '"' {
                    if chars.peek().map(|&(_, n)| n) == Some('"') {
                        piece.push('"');
                        chars.next();
                    } else {
                        end = i + 1;
                        break;
                    }
                } else {
                    piece.push(c);
                }
            }
            rest = &quoted[end..];
            // Anything between the closing quote and the next delimiter is kept.
            let tail_end = rest.find("; ").unwrap_or(rest.len());
            piece.push_str(&rest[..tail_end]);
            rest = &rest[tail_end..];
        } else {
            let end = rest.find("; ").unwrap_or(rest.len());
            piece.push_str(&rest[..end]);
            rest = &rest[end..];
        }
        rest = rest.strip_prefix("; ").unwrap_or(rest);
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(piece.to_owned());
        }
    }
    out
}

/// Concatenates corpora, keeping the first record for each id or DOI.
pub fn merge_corpora(corpora: impl IntoIterator<Item = Corpus>) -> Corpus {
    let mut merged = Corpus::default();
    let mut seen = Seen::default();
    for corpus in corpora {
        let file = corpus.source_files.first().cloned().unwrap_or_default();
        merged.ingest_warnings.extend(corpus.ingest_warnings);
        merged.source_files.extend(corpus.source_files);
        for rec in corpus.records {
            merged.push_unique(&mut seen, rec, &file, 0);
        }
    }
    merged
}

/// Writes one JSON object per record per line.
pub fn write_archive(records: &[CitingRecord], mut out: impl Write) -> io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_archive(input: impl Read, file: &str) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus {
        source_files: vec![file.to_owned()],
        ..Default::default()
    };
    let mut seen = Seen::default();
    for (idx, line) in io::BufReader::new(input).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|source| IngestError::Io {
            file: file.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CitingRecord = serde_json::from_str(&line).map_err(|source| IngestError::Archive {
            file: file.to_owned(),
            line: line_no,
            source,
        })?;
        corpus.push_unique(&mut seen, rec, file, line_no);
    }
    Ok(corpus)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Tagged,
    Csv,
    Tsv,
    Archive,
}

impl InputFormat {
    /// Guesses from the extension: `.csv`, `.tsv`, `.jsonl`/`.ndjson`, else tagged.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => InputFormat::Csv,
            Some("tsv") => InputFormat::Tsv,
            Some("jsonl" | "ndjson") => InputFormat::Archive,
            _ => InputFormat::Tagged,
        }
    }
}

pub fn read_file(path: &Path, format: InputFormat, columns: &CsvColumns) -> Result<Corpus, IngestError> {
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        file: path.display().to_string(),
        source,
    })?;
    match format {
        InputFormat::Tagged => parse_tagged_export(file, &name),
        InputFormat::Csv => parse_csv_export(file, columns, &name),
        InputFormat::Tsv => parse_csv_export(
            file,
            &CsvColumns {
                delimiter: b'\t',
                ..columns.clone()
            },
            &name,
        ),
        InputFormat::Archive => read_archive(file, &name),
    }
}

/// Reads every file (in parallel) and merges them in the given order.
pub fn read_files(
    paths: &[impl AsRef<Path> + Sync],
    format: Option<InputFormat>,
    columns: &CsvColumns,
) -> Result<Corpus, IngestError> {
    let corpora = paths
        .par_iter()
        .map(|p| {
            let p = p.as_ref();
            read_file(p, format.unwrap_or_else(|| InputFormat::from_path(p)), columns)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(merge_corpora(corpora))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_RECORDS: &str = "FN Clarivate Analytics Web of Science\nVR 1.0\n\
PT J\nAU Smith, J\nTI A first\n   title\nPY 1990\nDI 10.1000/ABC\n\
CR MANABE S, 1967, J ATMOS SCI, V24, P241\n   SELLERS WD, 1969, J APPL METEOROL, V8, P392\n   HASSELMANN K, 1976, TELLUS, V28, P473\n\
UT WOS:1\nER\n\n\
PT J\nPY 1991\nCR A, 1960\n   B, 1961\n   C, 1962\nUT WOS:2\nER\n\nEF\n";

    fn parse(s: &str) -> Corpus {
        parse_tagged_export(s.as_bytes(), "f.txt").unwrap()
    }

    #[test]
    fn two_records() {
        let c = parse(TWO_RECORDS);
        assert_eq!(c.records.len(), 2);
        assert_eq!(c.records.iter().map(|r| r.cited_refs.len()).collect::<Vec<_>>(), [3, 3]);
        let r = &c.records[0];
        assert_eq!(r.record_id, "WOS:1");
        assert_eq!(r.title.as_deref(), Some("A first title"));
        assert_eq!(r.publication_year, Some(1990));
        assert_eq!(r.doi.as_deref(), Some("10.1000/abc"));
        assert_eq!(r.cited_refs[1], "SELLERS WD, 1969, J APPL METEOROL, V8, P392");
        assert_eq!(
            r.extra_fields[0],
            TaggedField {
                tag: "PT".into(),
                lines: vec!["J".into()]
            }
        );
        assert!(c.ingest_warnings.is_empty(), "{:?}", c.ingest_warnings);
    }

    #[test]
    fn crlf_and_bom() {
        let crlf = format!("\u{feff}{}", TWO_RECORDS.replace('\n', "\r\n"));
        assert_eq!(parse(&crlf).records, parse(TWO_RECORDS).records);
    }

    #[test]
    fn malformed_line_warns() {
        let c = parse("PT J\nCR A, 1960\nthis is junk\n   B, 1961\nUT X\nER\n");
        assert_eq!(c.records[0].cited_refs, ["A, 1960", "B, 1961"]);
        assert_eq!(c.ingest_warnings.len(), 1);
        assert_eq!(c.ingest_warnings[0].line, 3);
    }

    #[test]
    fn unterminated_record_is_kept() {
        let c = parse("PT J\nCR A, 1960\nUT X\n");
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    #[test]
    fn synthetic_ids_and_duplicates() {
        let c = parse("PT J\nCR A\nER\nPT J\nCR B\nER\nUT Z\nER\nUT Z\nER\n");
        let ids: Vec<_> = c.records.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids, ["f.txt#1", "f.txt#2", "Z"]);
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    #[test]
    fn duplicate_doi_dropped() {
        let c = parse("UT A\nDI 10.1/X\nER\nUT B\nDI 10.1/x\nER\n");
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let mut bytes = b"UT A\nCR M\xFCLLER K, 1970\nER\n".to_vec();
        bytes.extend_from_slice(b"EF\n");
        let c = parse_tagged_export(bytes.as_slice(), "f").unwrap();
        assert_eq!(c.records[0].cited_refs[0], "M\u{FFFD}LLER K, 1970");
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    #[test]
    fn empty_input() {
        let c = parse("");
        assert!(c.records.is_empty());
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    #[test]
    fn count_conservation_with_empty_cr_line() {
        let c = parse("UT A\nCR X, 1970\n   \n   Y, 1971\nER\n");
        assert_eq!(c.cited_ref_count(), 3 - 1);
        assert_eq!(c.ingest_warnings.len(), 1);
    }

    fn csv_corpus(data: &str) -> Result<Corpus, IngestError> {
        parse_csv_export(data.as_bytes(), &CsvColumns::default(), "f.csv")
    }

    #[test]
    fn csv_split_and_empty_cells() {
        let c = csv_corpus("UT,PY,DI,TI,CR\n1,1990,,T,\"A, 1960, J X, V1, P1; B, 1961, J Y, V2, P2\"\n2,1991,,T,\n")
            .unwrap();
        assert_eq!(
            c.records[0].cited_refs,
            ["A, 1960, J X, V1, P1", "B, 1961, J Y, V2, P2"]
        );
        assert!(c.records[1].cited_refs.is_empty());
        assert_eq!(c.records[0].publication_year, Some(1990));
    }

    #[test]
    fn csv_quoted_reference_not_split() {
        // Python: csv.reader(['"A; B"'], delimiter=';', skipinitialspace=True) -> [['A; B']]
        let c = csv_corpus("UT,PY,DI,TI,CR\n1,1990,,T,\"\"\"A; B\"\"\"\n").unwrap();
        assert_eq!(c.records[0].cited_refs, ["A; B"]);
        assert_eq!(split_reference_cell("\"A; B\"; C"), ["A; B", "C"]);
    }

    #[test]
    fn csv_semicolon_without_space_is_kept() {
        assert_eq!(
            split_reference_cell("M S, 1967, DOI 10.1175/1520-0469(1967)024<0241:TEOTAW>2.0.CO;2; X, 1970"),
            [
                "M S, 1967, DOI 10.1175/1520-0469(1967)024<0241:TEOTAW>2.0.CO;2",
                "X, 1970"
            ]
        );
    }

    #[test]
    fn csv_missing_column_is_fatal() {
        let err = csv_corpus("UT,PY,TI,CR\n1,1990,T,\n").unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "DI"));
    }

    #[test]
    fn csv_bad_row_skipped() {
        let c = csv_corpus("UT,PY,DI,TI,CR\n1,1990,,T,A\n2,1991\n3,1992,,T,B\n").unwrap();
        assert_eq!(c.records.len(), 2);
        assert_eq!(c.ingest_warnings.len(), 1);
        assert_eq!(c.ingest_warnings[0].line, 3);
    }

    #[test]
    fn tsv_delimiter() {
        let cols = CsvColumns {
            delimiter: b'\t',
            ..Default::default()
        };
        let c = parse_csv_export(
            "UT\tPY\tDI\tTI\tCR\n1\t1990\t\tT\tA, 1960; B, 1961\n".as_bytes(),
            &cols,
            "f.tsv",
        )
        .unwrap();
        assert_eq!(c.records[0].cited_refs.len(), 2);
    }

    fn ids(c: &Corpus) -> Vec<&str> {
        c.records.iter().map(|r| r.record_id.as_str()).collect()
    }

    fn corpus_of(file: &str, ids: &[&str]) -> Corpus {
        Corpus {
            records: ids.iter().map(|i| CitingRecord::new(*i)).collect(),
            source_files: vec![file.into()],
            ingest_warnings: vec![],
        }
    }

    #[test]
    fn merge_examples() {
        let m = merge_corpora([corpus_of("a", &["1", "2"]), corpus_of("b", &["3", "4", "5"])]);
        assert_eq!(m.records.len(), 5);
        assert!(m.ingest_warnings.is_empty());

        let m = merge_corpora([corpus_of("a", &["1", "2"]), corpus_of("a", &["1", "2"])]);
        assert_eq!(ids(&m), ["1", "2"]);
        assert_eq!(m.ingest_warnings.len(), 2);

        let m = merge_corpora([corpus_of("a", &["1", "2"]), corpus_of("b", &["2", "3"])]);
        assert_eq!(ids(&m), ["1", "2", "3"]);
        assert_eq!(m.ingest_warnings.len(), 1);
    }

    #[test]
    fn archive_round_trip() {
        let c = parse(TWO_RECORDS);
        let mut buf = Vec::new();
        write_archive(&c.records, &mut buf).unwrap();
        assert_eq!(read_archive(buf.as_slice(), "a.jsonl").unwrap().records, c.records);
    }

    fn arb_record() -> impl Strategy<Value = CitingRecord> {
        (
            "[A-Z]{3}:[0-9]{1,6}",
            proptest::option::of(1900i32..2030),
            proptest::option::of("10\\.[0-9]{4}/[a-z0-9.()-]{1,12}"),
            proptest::option::of("[A-Za-z][A-Za-z ]{0,20}[a-z]"),
            proptest::collection::vec("[A-Z][A-Za-z0-9 ,;.]{0,40}", 0..6),
            proptest::collection::vec(
                ("(A[A-Z]|Z[0-9])", proptest::collection::vec("[ -~]{0,15}", 1..3)),
                0..3,
            ),
        )
            .prop_map(|(id, year, doi, title, refs, extras)| CitingRecord {
                record_id: id,
                publication_year: year,
                doi: doi.and_then(|d| normalize_doi(&d)),
                title,
                cited_refs: refs,
                extra_fields: extras
                    .into_iter()
                    .map(|(tag, lines)| TaggedField { tag, lines })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn tagged_round_trip(records in proptest::collection::vec(arb_record(), 0..6)) {
            let first = merge_corpora([Corpus { records, source_files: vec!["x".into()], ingest_warnings: vec![] }]);
            let mut buf = Vec::new();
            write_tagged_export(&first.records, &mut buf).unwrap();
            let again = parse_tagged_export(buf.as_slice(), "x").unwrap();
            prop_assert_eq!(&again.records, &first.records);
        }

        #[test]
        fn merge_is_associative(
            a in proptest::collection::vec("[0-9]", 0..5),
            b in proptest::collection::vec("[0-9]", 0..5),
            c in proptest::collection::vec("[0-9]", 0..5),
        ) {
            let mk = |v: &Vec<String>| corpus_of("f", &v.iter().map(String::as_str).collect::<Vec<_>>());
            let left = merge_corpora([merge_corpora([mk(&a), mk(&b)]), mk(&c)]);
            let right = merge_corpora([mk(&a), merge_corpora([mk(&b), mk(&c)])]);
            prop_assert_eq!(left.records, right.records);
        }
    }
}

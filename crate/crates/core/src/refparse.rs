//! Cited-reference string grammar.
//!
//! Reference strings are comma-delimited, `AUTHOR, YEAR, SOURCE, V<vol>,
//! P<page>, DOI <doi>`, with any part possibly missing. Parsing is total: a
//! string that does not fit leaves the structured fields empty.

use crate::ingest::Corpus;
use crate::model::{normalize_doi, CitedRef, MAX_RPY, MIN_RPY};
use rayon::prelude::*;

pub fn parse_cited_ref(raw: &str, citing_record_id: &str) -> CitedRef {
    let mut out = CitedRef::bare(raw, citing_record_id);
    let (body, doi_part) = split_doi(raw);
    out.doi = doi_part.and_then(normalize_doi);

    let segments: Vec<&str> = body.split(',').map(str::trim).collect();
    // A single segment carries no structure to recover.
    if segments.len() < 2 && out.doi.is_none() {
        return out;
    }

    let year_idx = segments.iter().position(|s| parse_year(s).is_some());
    out.rpy = year_idx.and_then(|i| parse_year(segments[i]));

    if year_idx != Some(0) && !segments[0].is_empty() && marker_value(segments[0]).is_none() {
        out.first_author = Some(segments[0].to_owned());
    }
    if let Some(i) = year_idx {
        if let Some(s) = segments.get(i + 1) {
            if !s.is_empty() && marker_value(s).is_none() {
                out.source = Some((*s).to_owned());
            }
        }
    }
    for s in segments.iter().skip(1) {
        match marker_value(s) {
            Some(('V', digits)) if out.volume.is_none() => out.volume = Some(digits.to_owned()),
            Some(('P', digits)) if out.page.is_none() => out.page = Some(digits.to_owned()),
            _ => {}
        }
    }
    out
}

/// Normalized DOI of the first `DOI `-prefixed segment.
pub fn extract_doi(raw: &str) -> Option<String> {
    match split_doi(raw) {
        (_, Some(doi)) => normalize_doi(doi),
        // Already-normalized input has no prefix.
        (body, None) if raw.trim_start().starts_with("10.") => normalize_doi(body),
        _ => None,
    }
}

pub fn parse_all(corpus: &Corpus) -> Vec<CitedRef> {
    corpus
        .records
        .par_iter()
        .flat_map_iter(|rec| {
            rec.cited_refs
                .iter()
                .map(move |raw| parse_cited_ref(raw, &rec.record_id))
        })
        .collect()
}

/// Splits `raw` at the first segment beginning with `DOI `; the DOI runs to
/// the end of the string because DOIs may contain commas.
pub(crate) fn split_doi(raw: &str) -> (&str, Option<&str>) {
    let mut offset = 0;
    for seg in raw.split(',') {
        let lead = seg.len() - seg.trim_start().len();
        let trimmed = &seg[lead..];
        if trimmed.len() > 4 && trimmed.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("doi ")) {
            let body = raw[..offset].trim_end().trim_end_matches(',');
            return (body, Some(&raw[offset + lead..]));
        }
        offset += seg.len() + 1;
    }
    (raw, None)
}

fn parse_year(seg: &str) -> Option<i32> {
    if seg.len() != 4 || !seg.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: i32 = seg.parse().ok()?;
    (MIN_RPY..=MAX_RPY).contains(&y).then_some(y)
}

/// `V24` -> ('V', "24"), `P241` -> ('P', "241").
fn marker_value(seg: &str) -> Option<(char, &str)> {
    let mut chars = seg.chars();
    let tag = chars.next().filter(|c| matches!(c, 'V' | 'P'))?;
    let digits = chars.as_str();
    (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())).then_some((tag, digits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CitingRecord;
    use proptest::prelude::*;

    #[test]
    fn full_reference_with_doi() {
        let r = parse_cited_ref(
            "MANABE S, 1967, J ATMOS SCI, V24, P241, DOI 10.1175/1520-0469(1967)024<0241:TEOTAW>2.0.CO;2",
            "R1",
        );
        assert_eq!(r.first_author.as_deref(), Some("MANABE S"));
        assert_eq!(r.rpy, Some(1967));
        assert_eq!(r.source.as_deref(), Some("J ATMOS SCI"));
        assert_eq!(r.volume.as_deref(), Some("24"));
        assert_eq!(r.page.as_deref(), Some("241"));
        assert_eq!(
            r.doi.as_deref(),
            Some("10.1175/1520-0469(1967)024<0241:teotaw>2.0.co;2")
        );
        assert_eq!(r.citing_record_id, "R1");
    }

    #[test]
    fn reference_without_doi() {
        let r = parse_cited_ref("ARRHENIUS S, 1896, PHILOS MAG, V41, P237", "R1");
        assert_eq!(r.rpy, Some(1896));
        assert_eq!(r.volume.as_deref(), Some("41"));
        assert_eq!(r.page.as_deref(), Some("237"));
        assert_eq!(r.doi, None);
    }

    #[test]
    fn unstructured_string() {
        let r = parse_cited_ref("some unstructured note", "R1");
        assert_eq!(r, CitedRef::bare("some unstructured note", "R1"));
    }

    #[test]
    fn out_of_range_year_is_ignored() {
        let r = parse_cited_ref("SMITH J, 0999, J X, V1, P2", "R");
        assert_eq!(r.rpy, None);
        assert_eq!(r.source, None);
        let r = parse_cited_ref("SMITH J, 2200, 1970, J X", "R");
        assert_eq!(r.rpy, Some(1970));
        assert_eq!(r.source.as_deref(), Some("J X"));
    }

    #[test]
    fn first_year_token_wins() {
        let r = parse_cited_ref("SMITH J, 1970, 1980, V3", "R");
        assert_eq!(r.rpy, Some(1970));
        assert_eq!(r.source.as_deref(), Some("1980"));
    }

    #[test]
    fn first_page_is_starting_page() {
        let r = parse_cited_ref("SMITH J, 1970, J X, V3, P10, P20", "R");
        assert_eq!(r.page.as_deref(), Some("10"));
    }

    #[test]
    fn doi_with_commas_runs_to_end() {
        let r = parse_cited_ref("SMITH J, 1970, J X, DOI 10.1000/a,b,c", "R");
        assert_eq!(r.doi.as_deref(), Some("10.1000/a,b,c"));
        assert_eq!(r.source.as_deref(), Some("J X"));
    }

    #[test]
    fn extract_doi_examples() {
        assert_eq!(
            extract_doi("CUBASCH U, 1992, CLIM DYNAM, V8, P55, DOI 10.1007/BF00209163").as_deref(),
            Some("10.1007/bf00209163")
        );
        assert_eq!(extract_doi("no doi here"), None);
        assert_eq!(
            extract_doi("MANABE S, 1980, J GEOPHYS RES, V85, P5529, DOI 10.1029/JC085iC10p05529.").as_deref(),
            Some("10.1029/jc085ic10p05529")
        );
    }

    #[test]
    fn parse_all_conserves_count() {
        let mut corpus = Corpus::default();
        for id in ["A", "B"] {
            let mut rec = CitingRecord::new(id);
            rec.cited_refs = vec!["X, 1960".into(), "Y, 1961".into(), "Z, 1962".into()];
            corpus.records.push(rec);
        }
        let refs = parse_all(&corpus);
        assert_eq!(refs.len(), 6);
        assert_eq!(refs[3].citing_record_id, "B");
        assert!(parse_all(&Corpus::default()).is_empty());
    }

    proptest! {
        #[test]
        fn parser_is_total_and_keeps_raw(raw in "\\PC{1,80}") {
            let r = parse_cited_ref(&raw, "R");
            prop_assert_eq!(&r.raw, &raw);
            if let Some(y) = r.rpy {
                prop_assert!((MIN_RPY..=MAX_RPY).contains(&y));
            }
            if let Some(d) = &r.doi {
                prop_assert!(d.starts_with("10."));
            }
        }

        #[test]
        fn extract_doi_is_idempotent(suffix in "[A-Za-z0-9/()<>:;.-]{1,30}") {
            let raw = format!("A B, 1970, J, DOI 10.1000/{suffix}");
            if let Some(d) = extract_doi(&raw) {
                prop_assert_eq!(extract_doi(&d), Some(d.clone()));
            }
        }

        #[test]
        fn structured_fields_round_trip(
            author in "[A-Z]{2,10} [A-Z]{1,2}",
            year in 1000i32..=2100,
            source in "J[A-Z]{0,5}( [A-Z]{1,6}){0,2}",
            vol in 1u32..999,
            page in 1u32..9999,
        ) {
            let raw = format!("{author}, {year}, {source}, V{vol}, P{page}");
            let r = parse_cited_ref(&raw, "R");
            prop_assert_eq!(r.first_author, Some(author));
            prop_assert_eq!(r.rpy, Some(year));
            prop_assert_eq!(r.source, Some(source));
            prop_assert_eq!(r.volume, Some(vol.to_string()));
            prop_assert_eq!(r.page, Some(page.to_string()));
        }
    }
}

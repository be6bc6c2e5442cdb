//! Edit distance and the normalized similarity the clustering threshold is
//! applied to.

use crate::model::collapse_whitespace;

/// Case-folded, whitespace-collapsed form compared by the metric.
pub fn fold(s: &str) -> String {
    collapse_whitespace(&s.to_lowercase())
}

/// Levenshtein distance between the folded forms of `a` and `b`.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = fold(a).chars().collect();
    let b: Vec<char> = fold(b).chars().collect();
    distance_chars(&a, &b)
}

/// `1 - distance / max(len)` over folded forms; 1 when both are empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = fold(a).chars().collect();
    let b: Vec<char> = fold(b).chars().collect();
    similarity_chars(&a, &b)
}

pub(crate) fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - distance_chars(a, b) as f64 / longest as f64
}

/// Two-row dynamic program.
pub(crate) fn distance_chars(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(levenshtein_distance("abc", "abc"), 0);
        assert_eq!(levenshtein_distance("kitten", "sitting"), 3);
        assert_eq!(levenshtein_distance("", "abcd"), 4);
        assert!((similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert_eq!(similarity("same", "same"), 1.0);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn folding_applies() {
        assert_eq!(levenshtein_distance("Manabe  S", "MANABE S"), 0);
        assert_eq!(similarity(" a b ", "A B"), 1.0);
    }

    proptest! {
        #[test]
        fn similarity_in_unit_interval(a in "\\PC{0,30}", b in "\\PC{0,30}") {
            let s = similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn symmetric(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            prop_assert_eq!(levenshtein_distance(&a, &b), levenshtein_distance(&b, &a));
        }
    }
}

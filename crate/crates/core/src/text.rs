use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Trim, lowercase, strip accents, turn hyphens and underscores into
/// spaces and collapse runs of whitespace.
pub fn fold(text: &str) -> String {
    let stripped: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::fold;

    #[test]
    fn folds_accents_case_and_spacing() {
        assert_eq!(
            fold("  Asintomático - Ambulatorio "),
            "asintomatico ambulatorio"
        );
        assert_eq!(fold("Yucatán"), "yucatan");
        assert_eq!(fold("MÉXICO"), "mexico");
        assert_eq!(fold(""), "");
    }
}

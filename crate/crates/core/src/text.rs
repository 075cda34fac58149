/// Canonical form used for every label/word equality test: lowercase,
/// trimmed, internal whitespace runs collapsed to one space.
pub fn normalize_label(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for part in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(part.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Lowercased alphanumeric tokens of a string, in order.
pub(crate) fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_space() {
        assert_eq!(normalize_label("  Polar \t  Bear "), "polar bear");
        assert_eq!(normalize_label("DOG"), "dog");
        assert_eq!(normalize_label("   "), "");
    }

    #[test]
    fn tokenizes_on_punctuation() {
        assert_eq!(tokens("a photo of a Dog."), vec!["a", "photo", "of", "a", "dog"]);
        assert_eq!(tokens("hot-dog"), vec!["hot", "dog"]);
    }
}

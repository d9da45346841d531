//! Lexical normalization shared by the retriever and the query-overlap penalty.

/// Lowercases and splits on anything that is not alphanumeric.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercase, trim, and collapse internal whitespace runs to a single space.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inner text of the last `\boxed{...}` span, if any, with balanced braces.
pub fn boxed_content(text: &str) -> Option<&str> {
    let start = text.rfind("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1usize;
    for (i, c) in text[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_fold_case_and_punctuation() {
        assert_eq!(terms("Budget, Table-2020!"), vec!["budget", "table", "2020"]);
        assert!(terms("  ,.; ").is_empty());
    }

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize_answer("  The   Answer\tIS \n 42 "), "the answer is 42");
    }

    #[test]
    fn boxed_prefers_last_span() {
        assert_eq!(boxed_content(r"so \[ \boxed{266} \]"), Some("266"));
        assert_eq!(boxed_content(r"\boxed{a{b}c}"), Some("a{b}c"));
        assert_eq!(boxed_content(r"\boxed{open"), None);
        assert_eq!(boxed_content("plain"), None);
    }
}

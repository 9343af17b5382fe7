/// Lowercases `text` and splits it on every non-alphanumeric codepoint,
/// dropping empty segments.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

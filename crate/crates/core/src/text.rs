/// Lowercases and splits on anything that is not alphanumeric, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_underscores() {
        assert_eq!(tokenize("PDF text_extraction, v2!"), ["pdf", "text", "extraction", "v2"]);
        assert!(tokenize(" -- ").is_empty());
    }
}

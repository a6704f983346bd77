/// Bumped whenever [`tokenize`] changes behaviour; recorded in run manifests.
pub const TOKENIZER_VERSION: u32 = 1;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

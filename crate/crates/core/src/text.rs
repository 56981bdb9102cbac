//! Small text utilities shared by the oracles and the hashing embedder.

/// Lower-cased alphanumeric tokens, split on every non-alphanumeric char.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Clip `text` to at most `budget` characters, cutting at the last whitespace
/// boundary inside the budget when there is one.
pub fn clip(text: &str, budget: usize) -> &str {
    match text.char_indices().nth(budget) {
        None => text,
        Some((cut, _)) => {
            let head = &text[..cut];
            // Cutting right before whitespace keeps the whole last word.
            if text[cut..].starts_with(char::is_whitespace) {
                return head.trim_end();
            }
            match head.rfind(char::is_whitespace) {
                Some(ws) if ws > 0 => head[..ws].trim_end(),
                _ => head,
            }
        }
    }
}

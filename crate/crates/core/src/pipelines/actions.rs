use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    pub text: String,
    /// 1-based position in the brief.
    pub ordinal: usize,
}

/// Strips a list marker (`-`, `*`, `•`, `1.`, `1)`) followed by whitespace.
fn strip_marker(line: &str) -> Option<&str> {
    let line = line.trim_start();
    let rest = if let Some(rest) = line
        .strip_prefix('-')
        .or_else(|| line.strip_prefix('*'))
        .or_else(|| line.strip_prefix('•'))
    {
        rest
    } else {
        let digits = line.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return None;
        }
        let after = &line[digits..];
        after
            .strip_prefix('.')
            .or_else(|| after.strip_prefix(')'))?
    };
    if rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

/// Splits a free-text response into prose (joined non-list lines) and list
/// items, preserving order.
pub fn split_response(text: &str) -> (String, Vec<ActionItem>) {
    let mut prose = Vec::new();
    let mut actions = Vec::new();
    for line in text.lines() {
        match strip_marker(line) {
            Some(item) if !item.is_empty() => actions.push(ActionItem {
                text: item.to_string(),
                ordinal: actions.len() + 1,
            }),
            Some(_) => {}
            None => {
                let trimmed = line.trim();
                if !trimmed.is_empty() {
                    prose.push(trimmed);
                }
            }
        }
    }
    (prose.join("\n"), actions)
}

pub fn extract_actions(response_text: &str) -> Vec<ActionItem> {
    split_response(response_text).1
}

/// Canonical comparison form of a label: lowercase, with every run of
/// whitespace, hyphens or underscores collapsed to one `_`, and no leading or
/// trailing separator.
pub fn normalize_label_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_sep = false;
    for c in s.chars() {
        if c.is_whitespace() || c == '-' || c == '_' {
            pending_sep = true;
            continue;
        }
        if pending_sep && !out.is_empty() {
            out.push('_');
        }
        pending_sep = false;
        out.extend(c.to_lowercase());
    }
    out
}

/// 1-based line number of a byte offset, for parser diagnostics.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    let mut end = offset.min(text.len());
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].matches('\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_label_text("  Sitting Down "), "sitting_down");
        assert_eq!(normalize_label_text("RUN--fast"), "run_fast");
        assert_eq!(normalize_label_text("walking"), "walking");
        assert_eq!(normalize_label_text("Stairs_-_Up"), "stairs_up");
        assert_eq!(normalize_label_text(" \t "), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,24}") {
            let once = normalize_label_text(&s);
            prop_assert_eq!(normalize_label_text(&once), once);
        }
    }
}

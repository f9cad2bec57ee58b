//! Boxed-answer extraction and the strict answer normalization used by the
//! task reward.

/// Returns the contents of the last `\boxed{...}` in `text`, with balanced
/// braces, whitespace-collapsed. Looks inside the last `<answer>` block when
/// one exists.
pub fn extract_boxed(text: &str) -> Option<String> {
    let scope = last_tag_block(text, "answer").unwrap_or(text);
    last_boxed(scope).map(|s| collapse_whitespace(&s))
}

/// Contents of the last `<tag>...</tag>` block.
pub fn last_tag_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.rfind(&open)? + open.len();
    let len = text[start..].find(&close)?;
    Some(&text[start..start + len])
}

/// Contents of the first `<tag>...</tag>` block.
pub fn first_tag_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let len = text[start..].find(&close)?;
    Some(&text[start..start + len])
}

/// Every `\boxed{...}` body in order of appearance.
pub fn all_boxed(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find("\\boxed{") {
        let open = from + pos + "\\boxed".len();
        match balanced_body(&text[open..]) {
            Some(body) => {
                out.push(body.to_string());
                from = open + body.len() + 2;
            }
            None => break,
        }
    }
    out
}

fn last_boxed(text: &str) -> Option<String> {
    all_boxed(text).pop()
}

/// `s` starts with `{`; returns the text up to the matching `}`.
fn balanced_body(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&s[1..i]);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Trim, strip enclosing `\boxed{}` and `$` delimiters (repeatedly), and
/// collapse internal whitespace. No numeric equivalence is attempted.
pub fn normalize_answer(s: &str) -> String {
    let mut cur = s.trim().to_string();
    loop {
        let before = cur.clone();
        if cur.len() >= 2 && cur.starts_with('$') && cur.ends_with('$') {
            cur = cur[1..cur.len() - 1].trim().to_string();
        }
        if let Some(rest) = cur.strip_prefix("\\boxed") {
            if let Some(body) = balanced_body(rest) {
                if body.len() + 2 == rest.len() {
                    cur = body.trim().to_string();
                }
            }
        }
        if cur == before {
            break;
        }
    }
    collapse_whitespace(&cur)
}

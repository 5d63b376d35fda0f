//! Text normalisation applied before tokenisation: lowercase, drop URL and
//! HTML-tag tokens, collapse ellipsis runs to a single stop.
//!
//! The function is total and idempotent. Whitespace between surviving words
//! is preserved exactly; removing a URL token also removes the single
//! separator that introduced it, so no double gap appears at the join.

/// Normalise one string.
pub fn preprocess_text(raw: &str) -> String {
    let no_tags = strip_html_tags(raw);
    let no_urls = drop_url_tokens(&no_tags);
    let lowered = no_urls.to_lowercase();
    collapse_stop_runs(&lowered)
}

/// Remove `<...>` spans. An unmatched `<` is kept verbatim.
fn strip_html_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find('<') {
        match rest[open..].find('>') {
            Some(close) => {
                out.push_str(&rest[..open]);
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

fn is_url_token(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    if lower.starts_with("www.") && lower.len() > 4 {
        return true;
    }
    if let Some(pos) = lower.find("://") {
        let scheme = &lower[..pos];
        return !scheme.is_empty()
            && scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && scheme
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    }
    false
}

/// Drop whitespace-delimited URL tokens together with the whitespace that
/// introduced them.
fn drop_url_tokens(s: &str) -> String {
    // (leading whitespace, token) pairs, preserving the exact separators.
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    let mut i = 0;
    let bytes = s.as_bytes();
    while i < s.len() {
        let ws_start = i;
        while i < s.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let tok_start = i;
        while i < s.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        pairs.push((&s[ws_start..tok_start], &s[tok_start..i]));
    }
    let started_with_word = !s.is_empty() && !bytes[0].is_ascii_whitespace();
    let mut out = String::with_capacity(s.len());
    for (ws, tok) in pairs {
        if !tok.is_empty() && is_url_token(tok) {
            continue;
        }
        out.push_str(ws);
        out.push_str(tok);
    }
    if started_with_word {
        while out.starts_with(|c: char| c.is_ascii_whitespace()) {
            out.remove(0);
        }
    }
    out
}

/// Runs of two or more periods become a single period.
fn collapse_stop_runs(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut dots = 0usize;
    for c in s.chars() {
        if c == '.' {
            dots += 1;
        } else {
            if dots > 0 {
                out.push('.');
                dots = 0;
            }
            out.push(c);
        }
    }
    if dots > 0 {
        out.push('.');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases() {
        assert_eq!(preprocess_text("HELLO"), "hello");
    }

    #[test]
    fn collapses_ellipsis() {
        assert_eq!(
            preprocess_text("my boss is bullying me..."),
            "my boss is bullying me."
        );
        assert_eq!(preprocess_text("wait.. what.."), "wait. what.");
    }

    #[test]
    fn removes_url_with_single_space() {
        assert_eq!(preprocess_text("see http://x.co now"), "see now");
        assert_eq!(preprocess_text("go to www.example.com today"), "go to today");
        assert_eq!(preprocess_text("https://a.b/c?d=1 leading"), "leading");
    }

    #[test]
    fn removes_html_tags() {
        assert_eq!(preprocess_text("a <b>bold</b> word"), "a bold word");
        assert_eq!(preprocess_text("line<br>break"), "linebreak");
        assert_eq!(preprocess_text("stray < left alone"), "stray < left alone");
    }

    #[test]
    fn preserves_interior_space_runs() {
        assert_eq!(preprocess_text("is back now      gonna"), "is back now      gonna");
    }

    #[test]
    fn idempotent_on_fixed_cases() {
        for s in [
            "MiXeD CaSe...",
            "u <i>ok</i>? see www.x.y  please",
            "  leading ws kept",
            "",
            "a....b..c.",
        ] {
            let once = preprocess_text(s);
            assert_eq!(preprocess_text(&once), once, "not idempotent on {s:?}");
        }
    }
}

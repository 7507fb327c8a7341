//! Line-numbered, field-named messages for TOML deserialization failures.

/// 1-based line of the error and a message led by the offending key when
/// one can be read off that line.
pub(crate) fn describe(text: &str, err: &toml::de::Error) -> (usize, String) {
    let Some(span) = err.span() else {
        return (0, err.message().to_string());
    };
    let start = span.start.min(text.len());
    let line = text[..start].matches('\n').count() + 1;
    let key = text
        .lines()
        .nth(line - 1)
        .and_then(|l| l.split_once('='))
        .map(|(k, _)| k.trim().trim_matches('"'))
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    let msg = match key {
        Some(k) => format!("{k}: {}", err.message()),
        None => err.message().to_string(),
    };
    (line, msg)
}

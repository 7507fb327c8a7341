//! Versioned text dump of named tensors.
//!
//! ```text
//! bdg-checkpoint 1
//! meta model {"vocab_size":10}
//! tensor embedding 10 32
//! 0.1 -0.25 ...
//! ```
//!
//! Each `tensor` header is followed by one line holding all values in
//! row-major order. Floats are written in shortest round-trip form, so a
//! save/load cycle is bit-exact.

use super::{NnError, Parameters, Tensor};

pub const CHECKPOINT_MAGIC: &str = "bdg-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn write_checkpoint<P: Parameters>(params: &P, meta: &[(&str, String)]) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {VERSION}\n");
    for (k, v) in meta {
        debug_assert!(!v.contains('\n'));
        out.push_str(&format!("meta {k} {v}\n"));
    }
    for (name, t) in params.named() {
        out.push_str("tensor ");
        out.push_str(&name);
        for d in t.shape() {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        let cells: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> NnError {
    NnError::Checkpoint {
        line,
        msg: msg.into(),
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, NnError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty checkpoint"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some(CHECKPOINT_MAGIC) {
        return Err(err(1, format!("expected `{CHECKPOINT_MAGIC} <version>`")));
    }
    match words.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        Some(Ok(v)) => return Err(err(1, format!("unsupported version {v}"))),
        _ => return Err(err(1, "missing or malformed version")),
    }
    let mut ck = Checkpoint::default();
    while let Some((n, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            ck.meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let Some(rest) = line.strip_prefix("tensor ") else {
            return Err(err(n, format!("unexpected line `{}`", truncate(line))));
        };
        let mut parts = rest.split_whitespace();
        let name = parts.next().ok_or_else(|| err(n, "tensor needs a name"))?;
        let shape = parts
            .map(|w| w.parse::<usize>().map_err(|e| err(n, format!("bad dimension `{w}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let expected = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| err(n, "shape too large"))?;
        let (vn, values) = lines.next().ok_or_else(|| err(n + 1, "missing tensor values"))?;
        let data = values
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|e| err(vn, format!("bad value `{}`: {e}", truncate(w)))))
            .collect::<Result<Vec<_>, _>>()?;
        if data.len() != expected {
            return Err(err(
                vn,
                format!("tensor `{name}` has {} values, shape {shape:?} needs {expected}", data.len()),
            ));
        }
        if ck.tensors.iter().any(|(k, _)| k == name) {
            return Err(err(n, format!("tensor `{name}` appears twice")));
        }
        ck.tensors.push((name.to_string(), Tensor::from_vec(&shape, data)?));
    }
    Ok(ck)
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(40) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Overwrites `params` from `text`. Names and shapes must match exactly;
/// on any mismatch `params` is left unchanged.
pub fn load_checkpoint<P: Parameters>(params: &mut P, text: &str) -> Result<Checkpoint, NnError> {
    let ck = parse_checkpoint(text)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|(n, _)| !ck.tensors.iter().any(|(k, _)| k == n))
        .map(|(n, _)| n.clone())
        .collect();
    let unexpected: Vec<String> = ck
        .tensors
        .iter()
        .filter(|(k, _)| !expected.iter().any(|(n, _)| n == k))
        .map(|(k, _)| k.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(NnError::CheckpointNames { missing, unexpected });
    }
    for (name, shape) in &expected {
        let (_, t) = ck.tensors.iter().find(|(k, _)| k == name).expect("checked above");
        if t.shape() != shape.as_slice() {
            return Err(NnError::CheckpointShape {
                name: name.clone(),
                expected: shape.clone(),
                got: t.shape().to_vec(),
            });
        }
    }
    for (name, dst) in params.named_mut() {
        let (_, t) = ck.tensors.iter().find(|(k, _)| *k == name).expect("checked above");
        *dst = t.clone();
    }
    Ok(ck)
}

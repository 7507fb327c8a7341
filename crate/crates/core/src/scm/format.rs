//! Line-oriented text format for [`ScmSpec`].
//!
//! ```text
//! # comment
//! var D 2
//! var M 2
//! var Y 2
//! edge D -> M
//! edge D -> Y
//! edge M -> Y
//! cpt D
//!   0.5 0.5
//! cpt M | D
//!   1 0
//!   0 1
//! cpt Y | D M
//!   0.9 0.1
//!   0.5 0.5
//!   0.5 0.5
//!   0.1 0.9
//! ```
//!
//! Rows of a `cpt` block enumerate parent assignments lexicographically with
//! parents in declaration order. The optional `| parents` header must list
//! exactly those parents, in that order.

use super::{ScmBuilder, ScmError, ScmSpec};

fn parse_err(line: usize, msg: impl Into<String>) -> ScmError {
    ScmError::Parse {
        line,
        msg: msg.into(),
    }
}

struct PendingCpt {
    name: String,
    header_parents: Option<Vec<String>>,
    line: usize,
    rows: Vec<Vec<f64>>,
}

pub fn parse_scm(text: &str) -> Result<ScmSpec, ScmError> {
    let mut vars: Vec<(String, usize)> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut cpts: Vec<PendingCpt> = Vec::new();
    let mut open: Option<PendingCpt> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap_or("");
        match head {
            "var" => {
                cpts.extend(open.take());
                let name = words.next().ok_or_else(|| parse_err(lineno, "var needs a name"))?;
                let card = words
                    .next()
                    .ok_or_else(|| parse_err(lineno, "var needs a cardinality"))?
                    .parse::<usize>()
                    .map_err(|e| parse_err(lineno, format!("bad cardinality: {e}")))?;
                if words.next().is_some() {
                    return Err(parse_err(lineno, "trailing tokens after var"));
                }
                vars.push((name.to_string(), card));
            }
            "edge" => {
                cpts.extend(open.take());
                let rest: Vec<&str> = words.collect();
                match rest.as_slice() {
                    [p, "->", c] => edges.push((p.to_string(), c.to_string())),
                    _ => return Err(parse_err(lineno, "expected `edge <parent> -> <child>`")),
                }
            }
            "cpt" => {
                cpts.extend(open.take());
                let name = words.next().ok_or_else(|| parse_err(lineno, "cpt needs a variable"))?;
                let header_parents = match words.next() {
                    None => None,
                    Some("|") => Some(words.map(str::to_string).collect()),
                    Some(other) => return Err(parse_err(lineno, format!("unexpected `{other}`"))),
                };
                open = Some(PendingCpt {
                    name: name.to_string(),
                    header_parents,
                    line: lineno,
                    rows: Vec::new(),
                });
            }
            _ => {
                let cpt = open
                    .as_mut()
                    .ok_or_else(|| parse_err(lineno, format!("unknown directive `{head}`")))?;
                let row = line
                    .split_whitespace()
                    .map(|w| {
                        w.parse::<f64>()
                            .map_err(|e| parse_err(lineno, format!("bad probability `{w}`: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                cpt.rows.push(row);
            }
        }
    }
    cpts.extend(open.take());

    let mut builder = ScmBuilder::new();
    for (n, c) in &vars {
        builder = builder.variable(n, *c);
    }
    for (p, c) in &edges {
        builder = builder.edge(p, c);
    }
    let mut seen = std::collections::BTreeSet::new();
    for cpt in &cpts {
        if !seen.insert(cpt.name.clone()) {
            return Err(parse_err(cpt.line, format!("duplicate cpt for `{}`", cpt.name)));
        }
        if let Some(header) = &cpt.header_parents {
            let declared: Vec<String> = vars
                .iter()
                .map(|(n, _)| n)
                .filter(|n| edges.iter().any(|(p, c)| p == *n && *c == cpt.name))
                .cloned()
                .collect();
            if *header != declared {
                return Err(parse_err(
                    cpt.line,
                    format!(
                        "cpt `{}` lists parents [{}] but the graph gives [{}] in declaration order",
                        cpt.name,
                        header.join(" "),
                        declared.join(" ")
                    ),
                ));
            }
        }
        builder = builder.cpt(&cpt.name, cpt.rows.clone());
    }
    builder.build()
}

/// Renders a model in the text format. `parse_scm(&write_scm(s)) == s`.
pub fn write_scm(scm: &ScmSpec) -> String {
    let mut out = String::new();
    for v in scm.variables() {
        out.push_str(&format!("var {} {}\n", v.name, v.cardinality));
    }
    for (p, c) in scm.edges() {
        out.push_str(&format!("edge {p} -> {c}\n"));
    }
    for (i, v) in scm.variables().iter().enumerate() {
        out.push_str(&format!("cpt {}", v.name));
        let parents = scm.parents(i);
        if !parents.is_empty() {
            out.push_str(" |");
            for &p in parents {
                out.push(' ');
                out.push_str(scm.name(p));
            }
        }
        out.push('\n');
        for row in &scm.cpt(i).rows {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:?}")).collect();
            out.push_str("  ");
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}

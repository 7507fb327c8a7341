use std::collections::BTreeSet;
use std::fmt;

use super::{ScmError, ScmSpec};

/// True iff a directed path `b -> ... -> a` exists. A node is not its own descendant.
pub fn is_descendant(scm: &ScmSpec, a: &str, b: &str) -> Result<bool, ScmError> {
    let a = scm.index_of(a)?;
    let b = scm.index_of(b)?;
    Ok(a != b && descendants(scm, b).contains(&a))
}

/// All strict descendants of `var`.
pub fn descendants(scm: &ScmSpec, var: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = scm.children(var);
    while let Some(v) = stack.pop() {
        if seen.insert(v) {
            stack.extend(scm.children(v));
        }
    }
    seen
}

/// All strict ancestors of `var`.
pub fn ancestors(scm: &ScmSpec, var: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = scm.parents(var).to_vec();
    while let Some(v) = stack.pop() {
        if seen.insert(v) {
            stack.extend_from_slice(scm.parents(v));
        }
    }
    seen
}

/// Why a node on a path does or does not block it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Blocker {
    /// A chain or fork node that is in the adjustment set.
    Conditioned(String),
    /// A collider with neither itself nor any descendant in the adjustment set.
    Collider(String),
}

impl fmt::Display for Blocker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Blocker::Conditioned(n) => write!(f, "{n} (conditioned non-collider)"),
            Blocker::Collider(n) => write!(f, "{n} (unconditioned collider)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathReport {
    /// Node names from `x` to `y`.
    pub nodes: Vec<String>,
    /// `arrows[i]` is true when the edge between `nodes[i]` and `nodes[i+1]` points forward.
    pub arrows: Vec<bool>,
    pub blocked_by: Option<Blocker>,
}

impl PathReport {
    pub fn is_blocked(&self) -> bool {
        self.blocked_by.is_some()
    }
}

impl fmt::Display for PathReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nodes[0])?;
        for (node, &fwd) in self.nodes[1..].iter().zip(&self.arrows) {
            write!(f, " {} {node}", if fwd { "->" } else { "<-" })?;
        }
        match &self.blocked_by {
            Some(b) => write!(f, "  [blocked by {b}]"),
            None => write!(f, "  [open]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionReport {
    pub holds: bool,
    /// Members of the adjustment set that descend from `y`.
    pub descendant_violations: Vec<String>,
    /// Members of the adjustment set that descend from `x`.
    pub treatment_descendants: Vec<String>,
    /// Every back-door path between `x` and `y`, in discovery order.
    pub paths: Vec<PathReport>,
}

impl CriterionReport {
    pub fn open_paths(&self) -> impl Iterator<Item = &PathReport> {
        self.paths.iter().filter(|p| !p.is_blocked())
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "back-door criterion: {}",
            if self.holds { "satisfied" } else { "violated" }
        )?;
        for d in &self.descendant_violations {
            writeln!(f, "  {d} is a descendant of the outcome")?;
        }
        for d in &self.treatment_descendants {
            writeln!(f, "  {d} is a descendant of the treatment")?;
        }
        if self.paths.is_empty() {
            writeln!(f, "  no back-door paths")?;
        }
        for p in &self.paths {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

/// Back-door criterion for `adj` relative to `(x, y)`.
///
/// Holds iff no member of `adj` descends from `x` or `y` and every path
/// between `x` and `y` that starts with an arrow into `x` is d-separated by
/// `adj`. Excluding descendants of `x` keeps mediators out of the set, where
/// the adjustment formula would be wrong.
pub fn backdoor_criterion(
    scm: &ScmSpec,
    x: &str,
    y: &str,
    adj: &[&str],
) -> Result<CriterionReport, ScmError> {
    let xi = scm.index_of(x)?;
    let yi = scm.index_of(y)?;
    let mut z = BTreeSet::new();
    for name in adj {
        let i = scm.index_of(name)?;
        if i == xi || i == yi {
            return Err(ScmError::AdjustmentContainsEndpoint(name.to_string()));
        }
        z.insert(i);
    }

    let named = |desc: BTreeSet<usize>| -> Vec<String> {
        z.iter()
            .filter(|v| desc.contains(v))
            .map(|&v| scm.name(v).to_string())
            .collect()
    };
    let descendant_violations = named(descendants(scm, yi));
    let treatment_descendants = named(descendants(scm, xi));

    // conditioning on a collider also opens it when any descendant is conditioned
    let opens_collider: Vec<bool> = (0..scm.len())
        .map(|v| z.contains(&v) || descendants(scm, v).iter().any(|d| z.contains(d)))
        .collect();

    let mut paths = Vec::new();
    let mut on_path = vec![false; scm.len()];
    on_path[xi] = true;
    let mut nodes = vec![xi];
    let mut arrows = Vec::new();
    for p in scm.parents(xi).to_vec() {
        walk(scm, p, false, yi, &mut on_path, &mut nodes, &mut arrows, &mut paths);
    }

    let paths: Vec<PathReport> = paths
        .into_iter()
        .map(|(nodes, arrows)| {
            let blocked_by = path_blocker(&nodes, &arrows, &z, &opens_collider).map(|b| match b {
                RawBlocker::Conditioned(v) => Blocker::Conditioned(scm.name(v).to_string()),
                RawBlocker::Collider(v) => Blocker::Collider(scm.name(v).to_string()),
            });
            PathReport {
                nodes: nodes.iter().map(|&v| scm.name(v).to_string()).collect(),
                arrows,
                blocked_by,
            }
        })
        .collect();

    let holds = descendant_violations.is_empty()
        && treatment_descendants.is_empty()
        && paths.iter().all(PathReport::is_blocked);
    Ok(CriterionReport {
        holds,
        descendant_violations,
        treatment_descendants,
        paths,
    })
}

type RawPath = (Vec<usize>, Vec<bool>);

/// Depth-first enumeration of simple paths in the skeleton. `forward` tells
/// whether the edge just traversed into `v` points towards `v`.
#[allow(clippy::too_many_arguments)]
fn walk(
    scm: &ScmSpec,
    v: usize,
    forward: bool,
    target: usize,
    on_path: &mut [bool],
    nodes: &mut Vec<usize>,
    arrows: &mut Vec<bool>,
    out: &mut Vec<RawPath>,
) {
    if on_path[v] {
        return;
    }
    nodes.push(v);
    arrows.push(forward);
    if v == target {
        out.push((nodes.clone(), arrows.clone()));
    } else {
        on_path[v] = true;
        for c in scm.children(v) {
            walk(scm, c, true, target, on_path, nodes, arrows, out);
        }
        for &p in scm.parents(v) {
            walk(scm, p, false, target, on_path, nodes, arrows, out);
        }
        on_path[v] = false;
    }
    nodes.pop();
    arrows.pop();
}

enum RawBlocker {
    Conditioned(usize),
    Collider(usize),
}

fn path_blocker(
    nodes: &[usize],
    arrows: &[bool],
    z: &BTreeSet<usize>,
    opens_collider: &[bool],
) -> Option<RawBlocker> {
    for i in 1..nodes.len() - 1 {
        let v = nodes[i];
        // collider: incoming edge points at v and outgoing edge points back at v
        let collider = arrows[i - 1] && !arrows[i];
        if collider {
            if !opens_collider[v] {
                return Some(RawBlocker::Collider(v));
            }
        } else if z.contains(&v) {
            return Some(RawBlocker::Conditioned(v));
        }
    }
    None
}

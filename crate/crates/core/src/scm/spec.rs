use std::collections::{BTreeSet, HashMap};

use super::ScmError;

/// Tolerance on the row sums of a conditional probability table.
pub const CPT_ROW_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
}

/// Conditional probability table of one variable.
///
/// `parents` are variable indices in declaration order. Rows enumerate the
/// parent assignments lexicographically, first parent most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    pub parents: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

/// A discrete structural causal model: a DAG of categorical variables with
/// one conditional probability table per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct ScmSpec {
    variables: Vec<Variable>,
    edges: Vec<(usize, usize)>,
    cpts: Vec<Cpt>,
    topo: Vec<usize>,
}

impl ScmSpec {
    /// Validates and assembles a model. `cpts[i]` holds the rows of the
    /// `i`-th declared variable.
    pub fn new(
        variables: Vec<Variable>,
        edges: Vec<(String, String)>,
        cpts: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ScmError> {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            if v.name.is_empty() || v.name.chars().any(char::is_whitespace) {
                return Err(ScmError::InvalidName(v.name.clone()));
            }
            if v.cardinality == 0 {
                return Err(ScmError::ZeroCardinality(v.name.clone()));
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(ScmError::DuplicateVariable(v.name.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
        };

        let mut edge_set = BTreeSet::new();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (p, c) in &edges {
            let (pi, ci) = (lookup(p)?, lookup(c)?);
            if pi == ci {
                return Err(ScmError::Cycle(vec![p.clone(), p.clone()]));
            }
            if !edge_set.insert((pi, ci)) {
                return Err(ScmError::DuplicateEdge(p.clone(), c.clone()));
            }
            idx_edges.push((pi, ci));
        }

        let names: Vec<&str> = variables.iter().map(|v| v.name.as_str()).collect();
        let topo = topo_order_indices(&names, &idx_edges)?;

        if cpts.len() != variables.len() {
            return Err(ScmError::CptCount {
                expected: variables.len(),
                got: cpts.len(),
            });
        }
        let mut tables = Vec::with_capacity(variables.len());
        for (vi, rows) in cpts.into_iter().enumerate() {
            let parents: Vec<usize> = (0..variables.len())
                .filter(|&p| edge_set.contains(&(p, vi)))
                .collect();
            let expected = parents
                .iter()
                .fold(1usize, |acc, &p| acc.saturating_mul(variables[p].cardinality));
            let var = &variables[vi];
            if rows.len() != expected {
                return Err(ScmError::CptRowCount {
                    variable: var.name.clone(),
                    expected,
                    got: rows.len(),
                });
            }
            for (ri, row) in rows.iter().enumerate() {
                check_row(var, ri, row)?;
            }
            tables.push(Cpt { parents, rows });
        }

        Ok(Self {
            variables,
            edges: idx_edges,
            cpts: tables,
            topo,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Edges as `(parent, child)` index pairs in declaration order.
    pub fn edge_indices(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(p, c)| (self.name(p), self.name(c)))
            .collect()
    }

    pub fn cpt(&self, var: usize) -> &Cpt {
        &self.cpts[var]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn name(&self, var: usize) -> &str {
        &self.variables[var].name
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.variables[var].cardinality
    }

    pub fn index_of(&self, name: &str) -> Result<usize, ScmError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
    }

    /// Variable indices in topological order, ties broken by declaration order.
    pub fn topo_indices(&self) -> &[usize] {
        &self.topo
    }

    pub fn topo_order(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.name(i)).collect()
    }

    pub fn parents(&self, var: usize) -> &[usize] {
        &self.cpts[var].parents
    }

    pub fn children(&self, var: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(p, _)| p == var)
            .map(|&(_, c)| c)
            .collect()
    }

    /// Row of `var`'s table selected by a full assignment of all variables.
    pub fn cpt_row(&self, var: usize, assignment: &[usize]) -> &[f64] {
        let cpt = &self.cpts[var];
        let mut row = 0;
        for &p in &cpt.parents {
            row = row * self.variables[p].cardinality + assignment[p];
        }
        &cpt.rows[row]
    }

    /// Size of the full joint assignment space, saturating on overflow.
    pub fn joint_cells(&self) -> usize {
        self.variables
            .iter()
            .fold(1usize, |acc, v| acc.saturating_mul(v.cardinality))
    }

    pub(crate) fn from_parts_unchecked(
        variables: Vec<Variable>,
        edges: Vec<(usize, usize)>,
        cpts: Vec<Cpt>,
        topo: Vec<usize>,
    ) -> Self {
        Self {
            variables,
            edges,
            cpts,
            topo,
        }
    }
}

fn check_row(var: &Variable, row_index: usize, row: &[f64]) -> Result<(), ScmError> {
    if row.len() != var.cardinality {
        return Err(ScmError::CptRowWidth {
            variable: var.name.clone(),
            row: row_index,
            expected: var.cardinality,
            got: row.len(),
        });
    }
    if let Some(&p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(ScmError::InvalidProbability {
            variable: var.name.clone(),
            row: row_index,
            value: p,
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > CPT_ROW_TOLERANCE {
        return Err(ScmError::CptRowSum {
            variable: var.name.clone(),
            row: row_index,
            sum,
        });
    }
    Ok(())
}

/// Kahn's algorithm, always releasing the lowest declaration index first.
/// On failure the error lists one directed cycle, first node repeated at the end.
pub fn topo_order_indices(names: &[&str], edges: &[(usize, usize)]) -> Result<Vec<usize>, ScmError> {
    let n = names.len();
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for &(p, c) in edges {
        indegree[c] += 1;
        children[p].push(c);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    let cycle = find_cycle(&children, &indegree);
    Err(ScmError::Cycle(cycle.into_iter().map(|i| names[i].to_string()).collect()))
}

/// Extracts one directed cycle from the nodes Kahn's algorithm could not release.
fn find_cycle(children: &[Vec<usize>], indegree: &[usize]) -> Vec<usize> {
    let remaining: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let start = remaining.iter().position(|&r| r).unwrap_or(0);
    // Every remaining node has a remaining parent, so following parents never
    // dead-ends. Walk parents, then reverse to report the cycle forwards.
    let mut parents = vec![Vec::new(); children.len()];
    for (p, cs) in children.iter().enumerate() {
        for &c in cs {
            if remaining[p] && remaining[c] {
                parents[c].push(p);
            }
        }
    }
    let mut seen_at = vec![usize::MAX; children.len()];
    let mut walk = Vec::new();
    let mut v = start;
    while seen_at[v] == usize::MAX {
        seen_at[v] = walk.len();
        walk.push(v);
        v = parents[v][0];
    }
    let mut cycle: Vec<usize> = walk[seen_at[v]..].to_vec();
    cycle.reverse();
    // rotate so the lowest index leads, for reproducible messages
    let lead = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &x)| x)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cycle.rotate_left(lead);
    cycle.push(cycle[0]);
    cycle
}

/// Incremental constructor used by tests, the text format, and the data generator.
#[derive(Clone, Debug, Default)]
pub struct ScmBuilder {
    variables: Vec<Variable>,
    edges: Vec<(String, String)>,
    cpts: HashMap<String, Vec<Vec<f64>>>,
}

impl ScmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable(mut self, name: &str, cardinality: usize) -> Self {
        self.variables.push(Variable {
            name: name.to_string(),
            cardinality,
        });
        self
    }

    pub fn edge(mut self, parent: &str, child: &str) -> Self {
        self.edges.push((parent.to_string(), child.to_string()));
        self
    }

    pub fn cpt(mut self, name: &str, rows: Vec<Vec<f64>>) -> Self {
        self.cpts.insert(name.to_string(), rows);
        self
    }

    pub fn build(mut self) -> Result<ScmSpec, ScmError> {
        let known: BTreeSet<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        if let Some(extra) = self.cpts.keys().find(|k| !known.contains(k.as_str())) {
            return Err(ScmError::UnknownVariable(extra.clone()));
        }
        let mut cpts = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            match self.cpts.remove(&v.name) {
                Some(rows) => cpts.push(rows),
                None => return Err(ScmError::MissingCpt(v.name.clone())),
            }
        }
        ScmSpec::new(self.variables, self.edges, cpts)
    }
}

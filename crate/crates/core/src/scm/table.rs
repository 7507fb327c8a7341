use super::ScmError;

/// Dense probability table over the joint assignment space of `vars`.
///
/// Cells are stored row-major with the first variable most significant, so
/// iteration order is value-lexicographic.
#[derive(Clone, Debug, PartialEq)]
pub struct DistTable {
    vars: Vec<String>,
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl DistTable {
    pub fn new(vars: Vec<String>, cards: Vec<usize>, probs: Vec<f64>) -> Result<Self, ScmError> {
        let cells: usize = cards.iter().product();
        if vars.len() != cards.len() || probs.len() != cells {
            return Err(ScmError::TableShape {
                vars: vars.len(),
                cells,
                got: probs.len(),
            });
        }
        Ok(Self { vars, cards, probs })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn position(&self, name: &str) -> Result<usize, ScmError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
    }

    /// Decodes a flat cell index into per-variable values.
    pub fn decode(&self, mut cell: usize, out: &mut [usize]) {
        for (slot, &card) in out.iter_mut().zip(&self.cards).rev() {
            *slot = cell % card;
            cell /= card;
        }
    }

    pub fn encode(&self, assignment: &[usize]) -> usize {
        assignment
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn get(&self, assignment: &[usize]) -> f64 {
        self.probs[self.encode(assignment)]
    }

    /// Marginal over a subset of variables, in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<DistTable, ScmError> {
        let pos: Vec<usize> = names
            .iter()
            .map(|n| self.position(n))
            .collect::<Result<_, _>>()?;
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let mut out = vec![0.0; cards.iter().product()];
        let mut assign = vec![0; self.vars.len()];
        for (cell, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            self.decode(cell, &mut assign);
            let idx = pos.iter().zip(&cards).fold(0, |acc, (&q, &c)| acc * c + assign[q]);
            out[idx] += p;
        }
        DistTable::new(names.iter().map(|s| s.to_string()).collect(), cards, out)
    }

    /// Total probability of the event `given` (a partial assignment).
    pub fn event_probability(&self, given: &[(&str, usize)]) -> Result<f64, ScmError> {
        let constraints = self.constraints(given)?;
        let mut assign = vec![0; self.vars.len()];
        let mut total = 0.0;
        for (cell, &p) in self.probs.iter().enumerate() {
            self.decode(cell, &mut assign);
            if constraints.iter().all(|&(q, v)| assign[q] == v) {
                total += p;
            }
        }
        Ok(total)
    }

    fn constraints(&self, given: &[(&str, usize)]) -> Result<Vec<(usize, usize)>, ScmError> {
        given
            .iter()
            .map(|&(name, value)| {
                let q = self.position(name)?;
                if value >= self.cards[q] {
                    return Err(ScmError::ValueOutOfRange {
                        variable: name.to_string(),
                        value,
                        cardinality: self.cards[q],
                    });
                }
                Ok((q, value))
            })
            .collect()
    }
}

/// `P(target | given)` from a joint table.
pub fn conditional(
    table: &DistTable,
    target: &str,
    given: &[(&str, usize)],
) -> Result<Vec<f64>, ScmError> {
    let t = table.position(target)?;
    let constraints = table.constraints(given)?;
    let mut out = vec![0.0; table.cards[t]];
    let mut assign = vec![0; table.vars.len()];
    for (cell, &p) in table.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        table.decode(cell, &mut assign);
        if constraints.iter().all(|&(q, v)| assign[q] == v) {
            out[assign[t]] += p;
        }
    }
    let mass: f64 = out.iter().sum();
    if mass <= 0.0 {
        return Err(ScmError::UndefinedConditional {
            target: target.to_string(),
            given: format_given(given),
        });
    }
    out.iter_mut().for_each(|p| *p /= mass);
    Ok(out)
}

pub(crate) fn format_given(given: &[(&str, usize)]) -> String {
    given
        .iter()
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

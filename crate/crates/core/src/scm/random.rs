//! Random small SCMs for property tests and oracle comparisons.

use rand::Rng;

use super::{ScmBuilder, ScmSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomScm {
    pub min_vars: usize,
    pub max_vars: usize,
    pub max_card: usize,
    /// Chance of each forward edge `Vi -> Vj`, `i < j`.
    pub edge_prob: f64,
    /// Chance that a CPT entry is forced to zero before normalizing.
    pub zero_prob: f64,
}

impl Default for RandomScm {
    fn default() -> Self {
        Self {
            min_vars: 2,
            max_vars: 5,
            max_card: 4,
            edge_prob: 0.5,
            zero_prob: 0.1,
        }
    }
}

impl RandomScm {
    /// Variables are `V0..Vn` in topological order.
    pub fn sample<R: Rng>(&self, r: &mut R) -> ScmSpec {
        let n = r.random_range(self.min_vars.max(1)..=self.max_vars.max(self.min_vars));
        let cards: Vec<usize> = (0..n).map(|_| r.random_range(2..=self.max_card.max(2))).collect();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut b = ScmBuilder::new();
        for (i, &c) in cards.iter().enumerate() {
            b = b.variable(&format!("V{i}"), c);
        }
        for (j, pj) in parents.iter_mut().enumerate() {
            for i in 0..j {
                if r.random::<f64>() < self.edge_prob {
                    pj.push(i);
                    b = b.edge(&format!("V{i}"), &format!("V{j}"));
                }
            }
        }
        for j in 0..n {
            let rows: usize = parents[j].iter().map(|&p| cards[p]).product();
            let table = (0..rows).map(|_| self.row(r, cards[j])).collect();
            b = b.cpt(&format!("V{j}"), table);
        }
        b.build().expect("forward edges over declared variables")
    }

    fn row<R: Rng>(&self, r: &mut R, card: usize) -> Vec<f64> {
        let keep = r.random_range(0..card);
        let mut w: Vec<f64> = (0..card)
            .map(|k| {
                if k != keep && r.random::<f64>() < self.zero_prob {
                    0.0
                } else {
                    r.random_range(0.05..1.0)
                }
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }
}

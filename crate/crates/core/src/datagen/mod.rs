//! Synthetic multi-domain sentiment corpora with domain-dependent token polarity.
//!
//! Each example is a fixed layout of slots that is shuffled per example:
//! invariant sentiment slots, ambiguous slots whose polarity is read through
//! a per-domain lexicon, domain-marker slots, and neutral filler. The label
//! prior may shift with the domain.

mod jsonl;
mod split;
mod vocab;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scm::{ScmBuilder, ScmError, ScmSpec};
use crate::seed::{derive_seed, rng, stream};

pub use jsonl::{
    load_jsonl, load_jsonl_str, parse_record, save_jsonl, sidecar_string, to_jsonl_string,
    JsonlRecord, DATA_FILE, VOCAB_FILE,
};
pub use split::{split, DomainSplit};
pub use vocab::{Pool, VocabEntry, Vocabulary};

/// Readable names for the first ambiguous tokens.
const AMBIGUOUS_WORDS: [&str; 10] = [
    "hot", "cold", "light", "heavy", "loud", "quiet", "long", "short", "cheap", "soft",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizes {
    pub invariant_positive: usize,
    pub invariant_negative: usize,
    pub ambiguous: usize,
    /// Marker tokens per domain; each domain owns a disjoint block.
    pub domain_marker: usize,
    pub neutral: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLayout {
    pub invariant: usize,
    pub ambiguous: usize,
    pub marker: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub num_domains: usize,
    pub examples_per_domain: usize,
    pub seq_len: usize,
    pub pools: PoolSizes,
    pub slots: SlotLayout,
    /// Probability that an invariant slot carries the label's polarity.
    pub invariant_strength: f64,
    /// Probability that an ambiguous slot reads, in its domain, as the label's polarity.
    pub ambiguous_strength: f64,
    /// `ambiguity_sign[d][t]` is the polarity (+1/-1) of ambiguous token `t` in domain `d`.
    pub ambiguity_sign: Vec<Vec<i8>>,
    /// Shift of the per-domain label prior, as a fraction of the largest feasible shift.
    pub confound_strength: f64,
    #[serde(default = "default_balance")]
    pub label_balance: f64,
    #[serde(default)]
    pub raw_features: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_balance() -> f64 {
    0.5
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid generator config:\n  {}", problems.join("\n  "))]
pub struct GenConfigError {
    pub problems: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Config(#[from] GenConfigError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown domain `{domain}`; known domains: {}", known.join(", "))]
    UnknownDomain {
        line: usize,
        domain: String,
        known: Vec<String>,
    },
    #[error("domain `{domain}` has {count} examples of class {class}; a split needs at least 2")]
    TooFewExamples {
        domain: String,
        class: u8,
        count: usize,
    },
    #[error("split of domain `{domain}` leaves no {which} examples of class {class}")]
    DegenerateSplit {
        domain: String,
        class: u8,
        which: &'static str,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary sidecar: {0}")]
    Vocab(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
}

impl GenConfig {
    /// Four domains, 2000 examples each, and an ambiguous lexicon in which
    /// every token's polarity in each domain disagrees with its majority
    /// polarity over the other three.
    pub fn hard_preset(seed: u64) -> Self {
        Self {
            num_domains: 4,
            examples_per_domain: 2000,
            seq_len: 16,
            pools: PoolSizes {
                invariant_positive: 6,
                invariant_negative: 6,
                ambiguous: 4,
                domain_marker: 3,
                neutral: 20,
            },
            slots: SlotLayout {
                invariant: 3,
                ambiguous: 4,
                marker: 2,
            },
            invariant_strength: 0.75,
            ambiguous_strength: 0.9,
            ambiguity_sign: balanced_signs(4, 4),
            confound_strength: 0.3,
            label_balance: 0.5,
            raw_features: false,
            seed,
        }
    }

    /// A small unconfounded configuration for tests and examples.
    pub fn small(num_domains: usize, examples_per_domain: usize, seed: u64) -> Self {
        Self {
            num_domains,
            examples_per_domain,
            seq_len: 8,
            pools: PoolSizes {
                invariant_positive: 3,
                invariant_negative: 3,
                ambiguous: 2,
                domain_marker: 2,
                neutral: 6,
            },
            slots: SlotLayout {
                invariant: 2,
                ambiguous: 2,
                marker: 1,
            },
            invariant_strength: 0.8,
            ambiguous_strength: 0.8,
            ambiguity_sign: balanced_signs(num_domains, 2),
            confound_strength: 0.0,
            label_balance: 0.5,
            raw_features: false,
            seed,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| {
            let (line, msg) = crate::toml_text::describe(text, &e);
            DataError::Parse { line, msg }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Collects every invalid field instead of stopping at the first.
    pub fn validate(&self) -> Result<(), GenConfigError> {
        let mut problems = Vec::new();
        let mut prob = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                problems.push(format!("{name} must be a probability in [0, 1], got {v}"));
            }
        };
        prob("invariant_strength", self.invariant_strength);
        prob("ambiguous_strength", self.ambiguous_strength);
        prob("confound_strength", self.confound_strength);
        prob("label_balance", self.label_balance);

        if self.num_domains == 0 {
            problems.push("num_domains must be at least 1".into());
        }
        if self.examples_per_domain == 0 {
            problems.push("examples_per_domain must be at least 1".into());
        }
        if self.seq_len < 3 {
            problems.push(format!("seq_len must be at least 3, got {}", self.seq_len));
        }
        let p = &self.pools;
        for (name, size) in [
            ("pools.invariant_positive", p.invariant_positive),
            ("pools.invariant_negative", p.invariant_negative),
            ("pools.ambiguous", p.ambiguous),
            ("pools.domain_marker", p.domain_marker),
            ("pools.neutral", p.neutral),
        ] {
            if size == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        let s = &self.slots;
        let used = s.invariant + s.ambiguous + s.marker;
        if used > self.seq_len {
            problems.push(format!(
                "slots use {used} positions but seq_len is {}",
                self.seq_len
            ));
        }
        if self.ambiguity_sign.len() != self.num_domains {
            problems.push(format!(
                "ambiguity_sign has {} rows, expected one per domain ({})",
                self.ambiguity_sign.len(),
                self.num_domains
            ));
        }
        for (d, row) in self.ambiguity_sign.iter().enumerate() {
            if row.len() != p.ambiguous {
                problems.push(format!(
                    "ambiguity_sign[{d}] has {} entries, expected {} (pools.ambiguous)",
                    row.len(),
                    p.ambiguous
                ));
            }
            if let Some(bad) = row.iter().find(|&&v| v != 1 && v != -1) {
                problems.push(format!("ambiguity_sign[{d}] contains {bad}; entries must be +1 or -1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GenConfigError { problems })
        }
    }

    /// Configured `P(y = 1 | d)`: alternating shifts around `label_balance`.
    pub fn label_prior(&self, domain: usize) -> f64 {
        let room = self.label_balance.min(1.0 - self.label_balance);
        let sign = if self.num_domains % 2 == 1 && domain + 1 == self.num_domains {
            0.0
        } else if domain.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        self.label_balance + self.confound_strength * room * sign
    }

    /// Exact number of positive examples generated in `domain`.
    pub fn positives(&self, domain: usize) -> usize {
        ((self.label_prior(domain) * self.examples_per_domain as f64).round() as usize)
            .min(self.examples_per_domain)
    }

    pub fn neutral_slots(&self) -> usize {
        self.seq_len - self.slots.invariant - self.slots.ambiguous - self.slots.marker
    }

    /// Ambiguous tokens reading as `polarity` in `domain`.
    pub fn ambiguous_with_polarity(&self, domain: usize, polarity: i8) -> Vec<usize> {
        self.ambiguity_sign[domain]
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == polarity)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Sign matrix with every row and column balanced (for even sizes) and
/// `sign[d][t] = +1` iff `(d + t)` lands in the upper half of a cyclic order.
///
/// With four domains and four tokens every column holds two +1 and two -1,
/// so in each domain every token disagrees with the majority of the others.
pub fn balanced_signs(num_domains: usize, tokens: usize) -> Vec<Vec<i8>> {
    (0..num_domains)
        .map(|d| {
            (0..tokens)
                .map(|t| {
                    let phase = (d + t) % num_domains.max(1);
                    if 2 * phase < num_domains.max(1) {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect()
}

/// Token id offsets of each pool inside the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub positive: u32,
    pub negative: u32,
    pub ambiguous: u32,
    pub marker: u32,
    pub neutral: u32,
    pub size: u32,
}

impl Layout {
    pub fn of(cfg: &GenConfig) -> Self {
        let p = &cfg.pools;
        let positive = 0;
        let negative = positive + p.invariant_positive as u32;
        let ambiguous = negative + p.invariant_negative as u32;
        let marker = ambiguous + p.ambiguous as u32;
        let neutral = marker + (p.domain_marker * cfg.num_domains) as u32;
        let size = neutral + p.neutral as u32;
        Self {
            positive,
            negative,
            ambiguous,
            marker,
            neutral,
            size,
        }
    }

    pub fn marker_id(&self, cfg: &GenConfig, domain: usize, i: usize) -> u32 {
        self.marker + (domain * cfg.pools.domain_marker + i) as u32
    }
}

pub fn build_vocabulary(cfg: &GenConfig) -> Vocabulary {
    let p = &cfg.pools;
    let mut v = Vocabulary::new();
    for i in 0..p.invariant_positive {
        v.intern(&format!("good{i}"), Pool::InvariantPositive);
    }
    for i in 0..p.invariant_negative {
        v.intern(&format!("bad{i}"), Pool::InvariantNegative);
    }
    for i in 0..p.ambiguous {
        let name = AMBIGUOUS_WORDS
            .get(i)
            .map(|w| w.to_string())
            .unwrap_or_else(|| format!("amb{i}"));
        v.intern(&name, Pool::Ambiguous);
    }
    for d in 0..cfg.num_domains {
        for i in 0..p.domain_marker {
            v.intern(&format!("dom{d}_{i}"), Pool::DomainMarker);
        }
    }
    for i in 0..p.neutral {
        v.intern(&format!("the{i}"), Pool::Neutral);
    }
    v
}

pub fn domain_names(num_domains: usize) -> Vec<String> {
    (0..num_domains).map(|d| format!("domain{d}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub label: u8,
    pub domain: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

/// Per-domain example lists with their vocabulary and (when synthetic) the
/// generator config that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub domains: Vec<String>,
    pub examples: Vec<Vec<Example>>,
    pub vocab: Vocabulary,
    pub config: Option<GenConfig>,
}

impl DatasetBundle {
    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn len(&self) -> usize {
        self.examples.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().flatten()
    }
}

/// Bag-of-token counts over the full vocabulary.
pub fn bag_of_tokens(tokens: &[u32], vocab_size: usize) -> Vec<f64> {
    let mut f = vec![0.0; vocab_size];
    for &t in tokens {
        f[t as usize] += 1.0;
    }
    f
}

pub fn generate(cfg: &GenConfig) -> Result<DatasetBundle, DataError> {
    cfg.validate()?;
    let layout = Layout::of(cfg);
    let examples: Vec<Vec<Example>> = (0..cfg.num_domains)
        .into_par_iter()
        .map(|d| generate_domain(cfg, &layout, d))
        .collect();
    Ok(DatasetBundle {
        domains: domain_names(cfg.num_domains),
        examples,
        vocab: build_vocabulary(cfg),
        config: Some(cfg.clone()),
    })
}

fn generate_domain(cfg: &GenConfig, layout: &Layout, d: usize) -> Vec<Example> {
    let mut r = rng(derive_seed(cfg.seed, stream::DATA + stream::DOMAIN * (d as u64 + 1)));
    let n = cfg.examples_per_domain;
    let mut labels = vec![0u8; n];
    labels[..cfg.positives(d)].fill(1);
    labels.shuffle(&mut r);

    let positive_amb = cfg.ambiguous_with_polarity(d, 1);
    let negative_amb = cfg.ambiguous_with_polarity(d, -1);
    let p = &cfg.pools;

    labels
        .into_iter()
        .map(|label| {
            let mut tokens = Vec::with_capacity(cfg.seq_len);
            for _ in 0..cfg.slots.invariant {
                let agree = r.random::<f64>() < cfg.invariant_strength;
                let positive = agree == (label == 1);
                tokens.push(if positive {
                    layout.positive + r.random_range(0..p.invariant_positive) as u32
                } else {
                    layout.negative + r.random_range(0..p.invariant_negative) as u32
                });
            }
            for _ in 0..cfg.slots.ambiguous {
                let agree = r.random::<f64>() < cfg.ambiguous_strength;
                let positive = agree == (label == 1);
                let candidates = if positive { &positive_amb } else { &negative_amb };
                tokens.push(if candidates.is_empty() {
                    layout.neutral + r.random_range(0..p.neutral) as u32
                } else {
                    layout.ambiguous + candidates[r.random_range(0..candidates.len())] as u32
                });
            }
            for _ in 0..cfg.slots.marker {
                tokens.push(layout.marker_id(cfg, d, r.random_range(0..p.domain_marker)));
            }
            for _ in 0..cfg.neutral_slots() {
                tokens.push(layout.neutral + r.random_range(0..p.neutral) as u32);
            }
            tokens.shuffle(&mut r);
            let features = cfg
                .raw_features
                .then(|| bag_of_tokens(&tokens, layout.size as usize));
            Example {
                tokens,
                label,
                domain: d,
                features,
            }
        })
        .collect()
}

/// Expected count per example of every token, given domain and label.
pub fn expected_token_counts(cfg: &GenConfig, domain: usize, label: u8) -> Vec<f64> {
    let layout = Layout::of(cfg);
    let p = &cfg.pools;
    let mut out = vec![0.0; layout.size as usize];
    let pos_rate = if label == 1 {
        cfg.invariant_strength
    } else {
        1.0 - cfg.invariant_strength
    };
    let k = cfg.slots.invariant as f64;
    for i in 0..p.invariant_positive {
        out[(layout.positive as usize) + i] = k * pos_rate / p.invariant_positive as f64;
    }
    for i in 0..p.invariant_negative {
        out[(layout.negative as usize) + i] = k * (1.0 - pos_rate) / p.invariant_negative as f64;
    }
    let amb_pos_rate = if label == 1 {
        cfg.ambiguous_strength
    } else {
        1.0 - cfg.ambiguous_strength
    };
    let k = cfg.slots.ambiguous as f64;
    let mut neutral_extra = 0.0;
    for (polarity, rate) in [(1i8, amb_pos_rate), (-1, 1.0 - amb_pos_rate)] {
        let c = cfg.ambiguous_with_polarity(domain, polarity);
        if c.is_empty() {
            neutral_extra += k * rate;
        }
        for &t in &c {
            out[layout.ambiguous as usize + t] += k * rate / c.len() as f64;
        }
    }
    let k = cfg.slots.marker as f64;
    for i in 0..p.domain_marker {
        out[layout.marker_id(cfg, domain, i) as usize] = k / p.domain_marker as f64;
    }
    let k = cfg.neutral_slots() as f64 + neutral_extra;
    for i in 0..p.neutral {
        out[layout.neutral as usize + i] = k / p.neutral as f64;
    }
    out
}

fn binomial_row(n: usize, p: f64) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    let mut coef = 1.0;
    for (k, cell) in row.iter_mut().enumerate() {
        if k > 0 {
            coef = coef * (n - k + 1) as f64 / k as f64;
        }
        *cell = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    // remove rounding drift so the row passes the CPT sum check
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|c| *c /= s);
    row
}

/// Discrete projection of the generator onto `(D, Y, M_inv, M_spc)`.
///
/// `M_inv` counts invariant slots carrying positive-pool tokens and `M_spc`
/// counts ambiguous slots that read as positive in their own domain. The
/// graph follows the sampling order: `D -> Y` (only when the label prior
/// actually varies), `Y -> M_inv`, and `(D, Y) -> M_spc`.
pub fn oracle_scm(cfg: &GenConfig) -> Result<ScmSpec, DataError> {
    cfg.validate()?;
    let nd = cfg.num_domains;
    let n = cfg.examples_per_domain as f64;
    let priors: Vec<f64> = (0..nd).map(|d| cfg.positives(d) as f64 / n).collect();
    let confounded = priors.iter().any(|&p| p != priors[0]);

    let k_inv = cfg.slots.invariant;
    let k_amb = cfg.slots.ambiguous;
    let mut b = ScmBuilder::new()
        .variable("D", nd)
        .variable("Y", 2)
        .variable("M_inv", k_inv + 1)
        .variable("M_spc", k_amb + 1)
        .cpt("D", vec![vec![1.0 / nd as f64; nd]]);
    if confounded {
        b = b.edge("D", "Y");
    }
    b = b.edge("Y", "M_inv").edge("D", "M_spc").edge("Y", "M_spc");

    let y_rows = if confounded {
        priors.iter().map(|&p| vec![1.0 - p, p]).collect()
    } else {
        vec![vec![1.0 - priors[0], priors[0]]]
    };
    let inv_rows = vec![
        binomial_row(k_inv, 1.0 - cfg.invariant_strength),
        binomial_row(k_inv, cfg.invariant_strength),
    ];
    let mut spc_rows = Vec::with_capacity(nd * 2);
    for d in 0..nd {
        let has_pos = !cfg.ambiguous_with_polarity(d, 1).is_empty();
        for y in 0..2 {
            let choose_pos = if y == 1 {
                cfg.ambiguous_strength
            } else {
                1.0 - cfg.ambiguous_strength
            };
            let rate = if has_pos { choose_pos } else { 0.0 };
            spc_rows.push(binomial_row(k_amb, rate));
        }
    }
    Ok(b.cpt("Y", y_rows)
        .cpt("M_inv", inv_rows)
        .cpt("M_spc", spc_rows)
        .build()?)
}

/// Multinomial naive Bayes fit in closed form from the generator's token
/// distributions, pooled over `train_domains`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnigramBayes {
    /// `log P(t | y=1) - log P(t | y=0)` per token.
    pub token_log_odds: Vec<f64>,
    pub prior_log_odds: f64,
}

impl UnigramBayes {
    pub fn fit(cfg: &GenConfig, train_domains: &[usize]) -> Self {
        let size = Layout::of(cfg).size as usize;
        let mut per_class = [vec![0.0; size], vec![0.0; size]];
        let mut class_mass = [0.0; 2];
        for &d in train_domains {
            let p1 = cfg.positives(d) as f64 / cfg.examples_per_domain as f64;
            for (y, w) in [(0u8, 1.0 - p1), (1, p1)] {
                class_mass[y as usize] += w;
                for (acc, c) in per_class[y as usize]
                    .iter_mut()
                    .zip(expected_token_counts(cfg, d, y))
                {
                    *acc += w * c;
                }
            }
        }
        let smooth = 1e-9;
        let norm = |v: &[f64]| -> Vec<f64> {
            let s: f64 = v.iter().sum::<f64>() + smooth * v.len() as f64;
            v.iter().map(|c| ((c + smooth) / s).ln()).collect()
        };
        let (l0, l1) = (norm(&per_class[0]), norm(&per_class[1]));
        Self {
            token_log_odds: l1.iter().zip(&l0).map(|(a, b)| a - b).collect(),
            prior_log_odds: (class_mass[1] / class_mass[0]).ln(),
        }
    }

    pub fn score(&self, tokens: &[u32]) -> f64 {
        self.prior_log_odds
            + tokens
                .iter()
                .map(|&t| self.token_log_odds[t as usize])
                .sum::<f64>()
    }

    pub fn predict(&self, tokens: &[u32]) -> u8 {
        (self.score(tokens) > 0.0) as u8
    }

    pub fn accuracy<'a>(&self, examples: impl IntoIterator<Item = &'a Example>) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for e in examples {
            hit += (self.predict(&e.tokens) == e.label) as usize;
            n += 1;
        }
        hit as f64 / n.max(1) as f64
    }
}

/// `P(y = 1 | d, token t appears in an ambiguous slot)` under the generator,
/// for a single ambiguous draw.
pub fn ambiguous_posterior(cfg: &GenConfig, domain: usize, token: usize) -> f64 {
    let p1 = cfg.positives(domain) as f64 / cfg.examples_per_domain as f64;
    let sign = cfg.ambiguity_sign[domain][token];
    let share = |pol: i8| 1.0 / cfg.ambiguous_with_polarity(domain, pol).len() as f64;
    let s = cfg.ambiguous_strength;
    // chance the slot picks this token, given the label
    let (given_pos, given_neg) = if sign == 1 {
        (s * share(1), (1.0 - s) * share(1))
    } else {
        ((1.0 - s) * share(-1), s * share(-1))
    };
    p1 * given_pos / (p1 * given_pos + (1.0 - p1) * given_neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::check_backdoor_condition;

    #[test]
    fn balanced_signs_disagree_with_majority_of_others() {
        let s = balanced_signs(4, 4);
        for held in 0..4 {
            for t in 0..4 {
                let others: i32 = (0..4).filter(|&d| d != held).map(|d| s[d][t] as i32).sum();
                assert_eq!(others.signum(), -(s[held][t] as i32), "domain {held} token {t}");
            }
        }
        for row in &s {
            assert_eq!(row.iter().map(|&v| v as i32).sum::<i32>(), 0);
        }
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut cfg = GenConfig::small(3, 10, 0);
        cfg.seq_len = 2;
        cfg.invariant_strength = 1.5;
        cfg.pools.neutral = 0;
        cfg.ambiguity_sign[1][0] = 0;
        let err = cfg.validate().unwrap_err();
        let all = err.problems.join("\n");
        assert!(all.contains("seq_len"));
        assert!(all.contains("invariant_strength"));
        assert!(all.contains("pools.neutral"));
        assert!(all.contains("ambiguity_sign[1]"));
        assert!(err.problems.len() >= 4);
    }

    #[test]
    fn toml_errors_name_the_field() {
        let text = GenConfig::small(2, 10, 0).to_toml_string();
        assert_eq!(GenConfig::from_toml_str(&text).unwrap(), GenConfig::small(2, 10, 0));
        let bad = text.replace("seq_len = 8", "seq_len = -8");
        match GenConfig::from_toml_str(&bad) {
            Err(DataError::Parse { line, msg }) => {
                assert!(msg.starts_with("seq_len:"), "{msg}");
                assert_eq!(bad.lines().nth(line - 1).unwrap().trim(), "seq_len = -8");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig::small(3, 50, 11);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GenConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn counts_and_balance() {
        let cfg = GenConfig::small(3, 1000, 1);
        let b = generate(&cfg).unwrap();
        for (d, ex) in b.examples.iter().enumerate() {
            assert_eq!(ex.len(), 1000);
            let pos = ex.iter().filter(|e| e.label == 1).count() as f64 / 1000.0;
            assert!((pos - cfg.label_balance).abs() <= 0.02, "domain {d}: {pos}");
            for e in ex {
                assert_eq!(e.tokens.len(), cfg.seq_len);
                assert_eq!(e.domain, d);
                assert!(e.tokens.iter().all(|&t| (t as usize) < b.vocab.len()));
            }
        }
    }

    #[test]
    fn confounded_priors_follow_config() {
        let cfg = GenConfig {
            confound_strength: 0.3,
            ..GenConfig::small(4, 1000, 2)
        };
        assert_eq!(cfg.label_prior(0), 0.65);
        assert_eq!(cfg.label_prior(1), 0.35);
        let b = generate(&cfg).unwrap();
        let pooled = b.iter().filter(|e| e.label == 1).count() as f64 / b.len() as f64;
        assert!((pooled - 0.5).abs() < 1e-12);
        assert_eq!(b.examples[0].iter().filter(|e| e.label == 1).count(), 650);
    }

    #[test]
    fn perfect_invariant_signal_is_recoverable() {
        let cfg = GenConfig {
            invariant_strength: 1.0,
            ambiguous_strength: 0.5,
            ..GenConfig::small(3, 300, 3)
        };
        let b = generate(&cfg).unwrap();
        let layout = Layout::of(&cfg);
        // frequency probe: positive-pool count minus negative-pool count
        for e in b.iter() {
            let score: i32 = e
                .tokens
                .iter()
                .map(|&t| match b.vocab.pool(t).unwrap() {
                    Pool::InvariantPositive => 1,
                    Pool::InvariantNegative => -1,
                    _ => 0,
                })
                .sum();
            assert_eq!((score > 0) as u8, e.label);
            assert!(e.tokens.iter().any(|&t| t < layout.ambiguous));
        }
    }

    #[test]
    fn raw_features_are_bag_counts() {
        let cfg = GenConfig {
            raw_features: true,
            ..GenConfig::small(2, 5, 4)
        };
        let b = generate(&cfg).unwrap();
        for e in b.iter() {
            let f = e.features.as_ref().unwrap();
            assert_eq!(f.len(), b.vocab.len());
            assert_eq!(f.iter().sum::<f64>(), cfg.seq_len as f64);
            for &t in &e.tokens {
                assert!(f[t as usize] >= 1.0);
            }
        }
    }

    #[test]
    fn expected_counts_sum_to_sequence_length() {
        let cfg = GenConfig::hard_preset(0);
        for d in 0..4 {
            for y in 0..2 {
                let s: f64 = expected_token_counts(&cfg, d, y).iter().sum();
                assert!((s - cfg.seq_len as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_condition_without_confounding() {
        let cfg = GenConfig::small(3, 100, 0);
        let scm = oracle_scm(&cfg).unwrap();
        assert!(scm.index_of("Y").is_ok());
        assert!(!scm.edges().contains(&("D", "Y")));
        let r = check_backdoor_condition(&scm, "M_inv", "Y", "D", 1e-9).unwrap();
        assert!(r.holds, "{r}");
    }

    #[test]
    fn oracle_condition_single_domain() {
        let cfg = GenConfig {
            confound_strength: 0.3,
            ..GenConfig::small(1, 100, 0)
        };
        let scm = oracle_scm(&cfg).unwrap();
        assert!(check_backdoor_condition(&scm, "M_inv", "Y", "D", 1e-9).unwrap().holds);
    }

    #[test]
    fn oracle_condition_fails_under_confounding() {
        let cfg = GenConfig {
            confound_strength: 0.3,
            ..GenConfig::small(4, 1000, 0)
        };
        let scm = oracle_scm(&cfg).unwrap();
        let r = check_backdoor_condition(&scm, "M_inv", "Y", "D", 1e-9).unwrap();
        assert!(!r.holds);
        assert!(r.max_deviation > 1e-3, "{r}");
    }

    #[test]
    fn unigram_classifier_fails_on_flipped_token() {
        let cfg = GenConfig::hard_preset(0);
        let hot = Layout::of(&cfg).ambiguous;
        assert_eq!(build_vocabulary(&cfg).token(hot), Some("hot"));
        let nb = UnigramBayes::fit(&cfg, &[0, 1, 2]);
        // fit on domains 0-2 reads "hot" as positive
        assert_eq!(nb.predict(&[hot]), 1);
        // in domain 3 "hot" signals the negative class
        let acc = ambiguous_posterior(&cfg, 3, 0);
        assert!(acc < 0.5, "{acc}");
        // and on generated data the same holds empirically
        let b = generate(&cfg).unwrap();
        let hot_only: Vec<Example> = b.examples[3]
            .iter()
            .filter(|e| e.tokens.contains(&hot))
            .map(|e| Example {
                tokens: vec![hot],
                ..e.clone()
            })
            .collect();
        assert!(nb.accuracy(&hot_only) < 0.5);
    }
}

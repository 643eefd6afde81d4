//! Trust scoring, the plausibility/contradiction filter, cross-model consensus
//! and redundancy clustering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{PredicateNormalizer, RelationTriple};
use crate::agents::{cosine, EmbeddingProvider};
use crate::error::{Error, Result};

/// Weights of R, C and J in the composite trust score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustWeights {
    pub r: f64,
    pub c: f64,
    pub j: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        TrustWeights { r: 0.4, c: 0.3, j: 0.3 }
    }
}

impl TrustWeights {
    pub fn new(r: f64, c: f64, j: f64) -> Result<Self> {
        let w = TrustWeights { r, c, j };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.c, self.j];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(format!("trust weights must be non-negative, got {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("trust weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustScore {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub weights: TrustWeights,
}

/// T = λ1·R + λ2·C + λ3·J. Missing components drop out and the remaining
/// weights are renormalized.
pub fn composite_trust(r: Option<f64>, c: Option<f64>, j: Option<f64>, weights: TrustWeights) -> Result<TrustScore> {
    weights.validate()?;
    let parts = [(r, weights.r), (c, weights.c), (j, weights.j)];
    for (v, _) in parts {
        if let Some(v) = v {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("trust component {v} outside [0, 1]")));
            }
        }
    }
    let present: Vec<(f64, f64)> = parts.iter().filter_map(|(v, w)| v.map(|v| (v, *w))).collect();
    if present.is_empty() {
        return Err(Error::EmptyInput("no trust components".into()));
    }
    let t = if present.len() == 3 {
        weights.r * r.unwrap_or(0.0) + weights.c * c.unwrap_or(0.0) + weights.j * j.unwrap_or(0.0)
    } else {
        let total: f64 = present.iter().map(|(_, w)| w).sum();
        if total == 0.0 {
            return Err(Error::Domain("all present trust components have zero weight".into()));
        }
        present.iter().map(|(v, w)| v * w).sum::<f64>() / total
    };
    Ok(TrustScore { r, c, j, t, weights })
}

/// The δ_T gate.
pub fn passes_trust(score: &TrustScore, delta_t: f64) -> bool {
    score.t >= delta_t
}

/// Keeps triples with J > δ_J and ξ ≤ ε. Unscored triples are dropped.
pub fn filter_trusted(triples: &[RelationTriple], delta_j: f64, epsilon: f64) -> Vec<RelationTriple> {
    triples
        .iter()
        .filter(|t| matches!((t.scores.j, t.scores.xi), (Some(j), Some(xi)) if j > delta_j && xi <= epsilon))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuarantineReason {
    LowJ,
    HighXi,
    /// Trust below δ_T.
    LowT,
    SingleModel,
    Redundant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub triple: RelationTriple,
    pub reasons: Vec<QuarantineReason>,
}

impl QuarantineRecord {
    /// Filter reasons for one scored triple; empty when it passes.
    pub fn check(triple: &RelationTriple, delta_j: f64, epsilon: f64, delta_t: f64) -> Vec<QuarantineReason> {
        let mut reasons = Vec::new();
        if triple.scores.j.is_none_or(|j| j <= delta_j) {
            reasons.push(QuarantineReason::LowJ);
        }
        if triple.scores.xi.is_none_or(|xi| xi > epsilon) {
            reasons.push(QuarantineReason::HighXi);
        }
        if triple.scores.t.is_none_or(|t| t < delta_t) {
            reasons.push(QuarantineReason::LowT);
        }
        reasons
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    /// One representative per canonical triple found in at least two sets;
    /// `generator_id` lists the supporting models joined with `+`.
    pub accepted: Vec<RelationTriple>,
    /// Triples from a single model.
    pub flagged: Vec<RelationTriple>,
}

/// Accepts canonical triples present in at least two model sets. Within a
/// group of near-duplicates the ontology-mappable variant is preferred, then
/// the lexicographically smallest one.
pub fn consensus_accept(
    per_model: &BTreeMap<String, Vec<RelationTriple>>,
    normalizer: &PredicateNormalizer,
    mappable: &dyn Fn(&RelationTriple) -> bool,
) -> Result<Consensus> {
    if per_model.len() < 2 {
        return Err(Error::Domain(format!("consensus needs at least 2 model sets, got {}", per_model.len())));
    }
    let mut groups: BTreeMap<(String, String, String), (BTreeSet<&str>, Vec<&RelationTriple>)> = BTreeMap::new();
    for (model, set) in per_model {
        for t in set {
            let g = groups.entry(normalizer.canonical(t)).or_default();
            g.0.insert(model);
            g.1.push(t);
        }
    }
    let mut out = Consensus::default();
    for (models, members) in groups.into_values() {
        let best = members
            .iter()
            .min_by(|a, b| {
                (!mappable(a), a.sort_key(), &a.generator_id).cmp(&(!mappable(b), b.sort_key(), &b.generator_id))
            })
            .expect("groups are non-empty");
        let mut rep = (*best).clone();
        rep.generator_id = models.iter().copied().collect::<Vec<_>>().join("+");
        if models.len() >= 2 {
            out.accepted.push(rep);
        } else {
            out.flagged.push(rep);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyCluster {
    /// Indices into the input, ascending.
    pub members: Vec<usize>,
    pub representative: usize,
}

impl RedundancyCluster {
    pub fn redundant(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied().filter(|m| *m != self.representative)
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage groups over pairs with cosine > `gamma`.
fn link_clusters(vectors: &[crate::agents::EmbeddingVector], gamma: f64) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&vectors[i], &vectors[j]) > gamma {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Partitions `triples` into clusters of near-duplicates. The representative
/// is the member with the highest T, ties broken by the triple text.
pub fn redundancy_pairs(
    triples: &[RelationTriple],
    embedder: &dyn EmbeddingProvider,
    gamma: f64,
    normalizer: &PredicateNormalizer,
) -> Result<Vec<RedundancyCluster>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("redundancy threshold {gamma} outside (0, 1]")));
    }
    let vectors = triples
        .iter()
        .map(|t| embedder.embed_text(&normalizer.verbalize(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(link_clusters(&vectors, gamma)
        .into_iter()
        .map(|members| {
            let representative = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let (ta, tb) = (triples[a].scores.t.unwrap_or(-1.0), triples[b].scores.t.unwrap_or(-1.0));
                    tb.total_cmp(&ta)
                        .then_with(|| triples[a].sort_key().cmp(&triples[b].sort_key()))
                        .then(a.cmp(&b))
                })
                .expect("clusters are non-empty");
            RedundancyCluster { members, representative }
        })
        .collect())
}

/// Groups of similar endpoints with no relation between any two of them.
/// Reporting only; nothing is inserted.
pub fn semantic_gaps(
    triples: &[RelationTriple],
    embedder: &dyn EmbeddingProvider,
    gamma: f64,
) -> Result<Vec<Vec<String>>> {
    let endpoints: Vec<String> = triples
        .iter()
        .flat_map(|t| [t.head.clone(), t.tail.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = endpoints
        .iter()
        .map(|e| embedder.embed_text(&e.replace('_', " ")))
        .collect::<Result<Vec<_>>>()?;
    let linked: BTreeSet<(&str, &str)> = triples
        .iter()
        .flat_map(|t| [(t.head.as_str(), t.tail.as_str()), (t.tail.as_str(), t.head.as_str())])
        .collect();
    Ok(link_clusters(&vectors, gamma)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .filter(|c| {
            !c.iter()
                .any(|&a| c.iter().any(|&b| linked.contains(&(endpoints[a].as_str(), endpoints[b].as_str()))))
        })
        .map(|c| c.into_iter().map(|i| endpoints[i].clone()).collect())
        .collect())
}

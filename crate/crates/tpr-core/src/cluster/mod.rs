//! Topic clustering: pairwise same-topic predicates (textual consistency AND
//! visual correlation) build a consistency graph per task, which is
//! partitioned into topic clusters by modularity maximization.

pub mod metrics;
pub mod partition;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::decompose::SemanticUnit;
use crate::error::{Error, Result};
use crate::gateway::{ChatExchange, EmbeddingVector, Gateway};
use crate::prompts;

pub use metrics::{cosine_similarity, pearson_correlation, similarity_vector};
pub use partition::{for_each_partition, IndexGraph, EXACT_MAX_NODES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    #[serde(default = "default_tau_vis")]
    pub tau_vis: f64,
    #[serde(default = "default_use_visual")]
    pub use_visual: bool,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

fn default_tau_vis() -> f64 {
    0.9
}
fn default_use_visual() -> bool {
    true
}
fn default_resolution() -> f64 {
    1.0
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            tau_vis: default_tau_vis(),
            use_visual: default_use_visual(),
            resolution: default_resolution(),
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_vis > 0.0 && self.tau_vis <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_vis {} outside (0, 1]",
                self.tau_vis
            )));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidConfig("resolution must be > 0".into()));
        }
        Ok(())
    }
}

/// Same-topic graph over one task's semantic units. Nodes are sorted unit
/// ids; an edge means both predicates held for the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyGraph {
    nodes: Vec<String>,
    edges: BTreeSet<(String, String)>,
}

impl ConsistencyGraph {
    pub fn new(mut nodes: Vec<String>, edges: Vec<(String, String)>) -> Result<Self> {
        nodes.sort();
        nodes.dedup();
        let index: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
        let mut stored = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidParams(format!("self-loop on {a}")));
            }
            if !index.contains(a.as_str()) || !index.contains(b.as_str()) {
                return Err(Error::InvalidParams(format!(
                    "edge ({a}, {b}) references unknown node"
                )));
            }
            let pair = if a < b { (a, b) } else { (b, a) };
            stored.insert(pair);
        }
        Ok(ConsistencyGraph {
            nodes,
            edges: stored,
        })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.nodes
    }

    pub fn edge_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, a: &str, b: &str) -> bool {
        let pair = if a < b { (a, b) } else { (b, a) };
        self.edges
            .contains(&(pair.0.to_string(), pair.1.to_string()))
    }

    fn to_index_graph(&self) -> (IndexGraph, BTreeMap<&str, usize>) {
        let index: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|(a, b)| (index[a.as_str()], index[b.as_str()]))
            .collect();
        (IndexGraph::new(self.nodes.len(), &edges), index)
    }

    /// Edge-list text dump for debugging.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.edges {
            out.push_str(a);
            out.push('\t');
            out.push_str(b);
            out.push('\n');
        }
        out
    }
}

/// A set of semantic units judged to share a topic, with deterministic id
/// and representative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicCluster {
    pub topic_id: String,
    pub task_id: String,
    pub member_unit_ids: Vec<String>,
    pub representative_text: String,
}

/// Textual consistency via a Yes/No query to the reference model. The pair is
/// ordered by unit id before querying so both orientations share one cache
/// entry. An answer that starts with neither yes nor no counts as false.
pub fn textual_consistency(
    gateway: &Gateway,
    u1: &SemanticUnit,
    u2: &SemanticUnit,
) -> Result<bool> {
    let (a, b) = if u1.unit_id <= u2.unit_id { (u1, u2) } else { (u2, u1) };
    let query = prompts::consistency_query(&a.text, &b.text);
    let exchange = ChatExchange::user(
        &query,
        None,
        crate::decompose::PARSING_TEMPERATURE,
        16,
        &format!("{}/consist", a.task_id),
    );
    let answer = gateway.chat_complete(&exchange)?;
    match leading_yes_no(&answer) {
        Some(value) => Ok(value),
        None => {
            log::warn!(
                "ambiguous consistency answer for ({}, {}): {answer:?}",
                a.unit_id,
                b.unit_id
            );
            Ok(false)
        }
    }
}

fn leading_yes_no(answer: &str) -> Option<bool> {
    let first = answer.split_whitespace().next()?;
    let folded = first
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    match folded.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Whether the threshold decision passes; strict inequality at the boundary.
pub fn passes_visual_threshold(correlation: f64, tau_vis: f64) -> bool {
    correlation > tau_vis
}

/// Visual correlation of two units' per-vision-token similarity profiles.
/// Degenerate profiles (constant vectors) are not correlated. With
/// `use_visual` off this predicate always holds (textual-only ablation).
pub fn visual_correlation(
    sim_u1: &[f64],
    sim_u2: &[f64],
    config: &ClusteringConfig,
) -> bool {
    if !config.use_visual {
        return true;
    }
    match pearson_correlation(sim_u1, sim_u2) {
        Some(r) => passes_visual_threshold(r, config.tau_vis),
        None => false,
    }
}

/// Build the consistency graph over one task's units: an edge requires
/// textual consistency and visual correlation.
pub fn build_graph(
    gateway_ref: &Gateway,
    gateway_embed: &Gateway,
    task_image: &str,
    units: &[SemanticUnit],
    config: &ClusteringConfig,
) -> Result<ConsistencyGraph> {
    config.validate()?;
    let nodes: Vec<String> = units.iter().map(|u| u.unit_id.clone()).collect();
    let mut edges = Vec::new();
    let mut profiles: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    if config.use_visual && units.len() > 1 {
        let tokens = gateway_embed.embed_image_tokens(task_image)?;
        for unit in units {
            let embedding = gateway_embed.embed_text(&unit.text)?;
            profiles.insert(&unit.unit_id, similarity_vector(&embedding, &tokens)?);
        }
    }
    for (i, u1) in units.iter().enumerate() {
        for u2 in units.iter().skip(i + 1) {
            if !textual_consistency(gateway_ref, u1, u2)? {
                continue;
            }
            let visually_related = if config.use_visual {
                visual_correlation(
                    &profiles[u1.unit_id.as_str()],
                    &profiles[u2.unit_id.as_str()],
                    config,
                )
            } else {
                true
            };
            if visually_related {
                edges.push((u1.unit_id.clone(), u2.unit_id.clone()));
            }
        }
    }
    ConsistencyGraph::new(nodes, edges)
}

/// Partition the task's units into topic clusters by modularity
/// maximization. Deterministic: identical graphs yield identical clusters and
/// topic ids (derived from each cluster's lowest member unit id).
pub fn cluster_topics(
    units: &[SemanticUnit],
    graph: &ConsistencyGraph,
    config: &ClusteringConfig,
) -> Result<Vec<TopicCluster>> {
    config.validate()?;
    let unit_index: BTreeMap<&str, &SemanticUnit> =
        units.iter().map(|u| (u.unit_id.as_str(), u)).collect();
    let graph_node_set: BTreeSet<&str> = graph.node_ids().iter().map(String::as_str).collect();
    let unit_set: BTreeSet<&str> = unit_index.keys().copied().collect();
    if graph_node_set != unit_set {
        return Err(Error::InvalidParams(
            "graph nodes do not match the given units".into(),
        ));
    }
    let (index_graph, _) = graph.to_index_graph();
    let blocks = index_graph.max_modularity_partition(config.resolution);
    let mut clusters = Vec::with_capacity(blocks.len());
    for block in blocks {
        let member_unit_ids: Vec<String> = block
            .iter()
            .map(|&i| graph.node_ids()[i].clone())
            .collect();
        let lowest = &member_unit_ids[0];
        let unit = unit_index[lowest.as_str()];
        clusters.push(TopicCluster {
            topic_id: format!("c-{lowest}"),
            task_id: unit.task_id.clone(),
            member_unit_ids,
            representative_text: unit.text.clone(),
        });
    }
    clusters.sort_by(|a, b| a.topic_id.cmp(&b.topic_id));
    Ok(clusters)
}

/// Newman modularity of a partition at the given resolution; 0 for an
/// edgeless graph.
pub fn modularity(
    graph: &ConsistencyGraph,
    partition: &[TopicCluster],
    resolution: f64,
) -> Result<f64> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (c, cluster) in partition.iter().enumerate() {
        if cluster.member_unit_ids.is_empty() {
            return Err(Error::InvalidPartition(format!(
                "cluster {} is empty",
                cluster.topic_id
            )));
        }
        for id in &cluster.member_unit_ids {
            if seen.insert(id.as_str(), c).is_some() {
                return Err(Error::InvalidPartition(format!("unit {id} appears twice")));
            }
        }
    }
    if seen.len() != graph.node_ids().len()
        || !graph.node_ids().iter().all(|n| seen.contains_key(n.as_str()))
    {
        return Err(Error::InvalidPartition(
            "partition does not cover the graph's nodes exactly".into(),
        ));
    }
    let (index_graph, node_index) = graph.to_index_graph();
    let mut assign = vec![0usize; graph.node_ids().len()];
    for (id, &community) in &seen {
        assign[node_index[id]] = community;
    }
    Ok(index_graph.modularity_of(&assign, resolution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::UnitOrigin;
    use crate::gateway::{BackendConfig, MockBackend, Role};
    use std::path::PathBuf;
    use std::sync::Arc;

    fn unit(id: &str, text: &str) -> SemanticUnit {
        SemanticUnit {
            unit_id: id.to_string(),
            task_id: "t01".into(),
            text: text.to_string(),
            origin: UnitOrigin::Decomposed { response_index: 0 },
            wh_question: None,
            yes_no_question: None,
            topic_id: None,
            score: None,
        }
    }

    fn units(n: usize) -> Vec<SemanticUnit> {
        (0..n)
            .map(|i| unit(&format!("t01#u{i:04}"), &format!("Fact {i}.")))
            .collect()
    }

    fn graph_of(units: &[SemanticUnit], pairs: &[(usize, usize)]) -> ConsistencyGraph {
        let nodes: Vec<String> = units.iter().map(|u| u.unit_id.clone()).collect();
        let edges = pairs
            .iter()
            .map(|&(a, b)| (nodes[a].clone(), nodes[b].clone()))
            .collect();
        ConsistencyGraph::new(nodes, edges).unwrap()
    }

    fn ref_gateway(fixtures: &str) -> Gateway {
        let backend = Arc::new(MockBackend::from_jsonl(fixtures).unwrap());
        Gateway::with_backend(
            BackendConfig::mock(Role::Reference, "ref", PathBuf::from("f")),
            backend,
        )
        .unwrap()
    }

    #[test]
    fn consistency_direct_contracts() {
        let gw = ref_gateway(concat!(
            r#"{"key_kind":"pattern","key":"Fact 0. and Fact 1.","kind":"chat","value":"Yes"}"#,
            "\n",
            r#"{"key_kind":"pattern","key":"Fact 0. and Fact 2.","kind":"chat","value":"No."}"#,
            "\n",
            r#"{"key_kind":"pattern","key":"Fact 1. and Fact 2.","kind":"chat","value":"Consistent"}"#,
        ));
        let us = units(3);
        assert!(textual_consistency(&gw, &us[0], &us[1]).unwrap());
        assert!(!textual_consistency(&gw, &us[0], &us[2]).unwrap());
        // ambiguous answer -> false
        assert!(!textual_consistency(&gw, &us[1], &us[2]).unwrap());
    }

    #[test]
    fn consistency_is_orientation_invariant() {
        let gw = ref_gateway(
            r#"{"key_kind":"pattern","key":"Fact 0. and Fact 1.","kind":"chat","value":"Yes"}"#,
        );
        let us = units(2);
        assert!(textual_consistency(&gw, &us[0], &us[1]).unwrap());
        // reversed orientation hits the same id-ordered query (and cache)
        assert!(textual_consistency(&gw, &us[1], &us[0]).unwrap());
        assert_eq!(gw.backend_call_count(), 1);
    }

    #[test]
    fn visual_correlation_rules() {
        let config = ClusteringConfig::default();
        let a = vec![1.0, 0.2, 0.0, 0.4];
        assert!(visual_correlation(&a, &a.clone(), &config));
        // constant profile carries no localization signal
        let flat = vec![0.5, 0.5, 0.5, 0.5];
        assert!(!visual_correlation(&a, &flat, &config));
        // ablation: textual-only
        let text_only = ClusteringConfig {
            use_visual: false,
            ..ClusteringConfig::default()
        };
        assert!(visual_correlation(&a, &flat, &text_only));
    }

    #[test]
    fn boundary_correlation_is_excluded() {
        assert!(!passes_visual_threshold(0.9, 0.9));
        assert!(passes_visual_threshold(0.9 + 1e-12, 0.9));
        // end to end: tau set to the exact computed correlation of two profiles
        let a = vec![0.9, 0.1, 0.3, 0.5];
        let b = vec![0.7, 0.2, 0.1, 0.6];
        let r = pearson_correlation(&a, &b).unwrap();
        let config = ClusteringConfig {
            tau_vis: r,
            ..ClusteringConfig::default()
        };
        assert!(!visual_correlation(&a, &b, &config));
    }

    #[test]
    fn disjoint_triangles_recovered() {
        let us = units(6);
        let graph = graph_of(&us, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let clusters = cluster_topics(&us, &graph, &ClusteringConfig::default()).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].member_unit_ids, vec!["t01#u0000", "t01#u0001", "t01#u0002"]);
        assert_eq!(clusters[1].member_unit_ids, vec!["t01#u0003", "t01#u0004", "t01#u0005"]);
        assert_eq!(clusters[0].topic_id, "c-t01#u0000");
        assert_eq!(clusters[0].representative_text, "Fact 0.");
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let us = units(4);
        let graph = graph_of(&us, &[]);
        let clusters = cluster_topics(&us, &graph, &ClusteringConfig::default()).unwrap();
        assert_eq!(clusters.len(), 4);
        assert!(clusters.iter().all(|c| c.member_unit_ids.len() == 1));
    }

    #[test]
    fn six_node_two_communities() {
        // edges {01,12,02,34,45,35,23}: brute-force optimum is {{0,1,2},{3,4,5}}
        let us = units(6);
        let graph = graph_of(&us, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let clusters = cluster_topics(&us, &graph, &ClusteringConfig::default()).unwrap();
        let members: Vec<Vec<String>> = clusters.iter().map(|c| c.member_unit_ids.clone()).collect();
        assert_eq!(
            members,
            vec![
                vec!["t01#u0000", "t01#u0001", "t01#u0002"],
                vec!["t01#u0003", "t01#u0004", "t01#u0005"],
            ]
        );
    }

    #[test]
    fn modularity_worked_values() {
        let us = units(4);
        let graph = graph_of(&us, &[(0, 1), (2, 3)]);
        let natural = cluster_topics(&us, &graph, &ClusteringConfig::default()).unwrap();
        assert_eq!(modularity(&graph, &natural, 1.0).unwrap(), 0.5);
        // single community over two disjoint edges -> 0
        let merged = vec![TopicCluster {
            topic_id: "c-all".into(),
            task_id: "t01".into(),
            member_unit_ids: us.iter().map(|u| u.unit_id.clone()).collect(),
            representative_text: "Fact 0.".into(),
        }];
        assert!((modularity(&graph, &merged, 1.0).unwrap()).abs() < 1e-15);
        // edgeless graph -> 0
        let empty = graph_of(&us, &[]);
        let singletons = cluster_topics(&us, &empty, &ClusteringConfig::default()).unwrap();
        assert_eq!(modularity(&empty, &singletons, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn modularity_rejects_invalid_partitions() {
        let us = units(3);
        let graph = graph_of(&us, &[(0, 1)]);
        let mut partition = cluster_topics(&us, &graph, &ClusteringConfig::default()).unwrap();
        partition.pop();
        assert!(matches!(
            modularity(&graph, &partition, 1.0),
            Err(Error::InvalidPartition(_))
        ));
    }

    #[test]
    fn clustering_requires_matching_units() {
        let us = units(3);
        let graph = graph_of(&us[..2], &[(0, 1)]);
        assert!(cluster_topics(&us, &graph, &ClusteringConfig::default()).is_err());
    }

    #[test]
    fn graph_rejects_self_loops_and_unknown_nodes() {
        let nodes = vec!["a".to_string(), "b".to_string()];
        assert!(ConsistencyGraph::new(nodes.clone(), vec![("a".into(), "a".into())]).is_err());
        assert!(ConsistencyGraph::new(nodes, vec![("a".into(), "zzz".into())]).is_err());
    }
}

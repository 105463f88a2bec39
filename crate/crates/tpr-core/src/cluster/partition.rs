//! Modularity-maximizing partition search.
//!
//! Small graphs (≤ [`EXACT_MAX_NODES`]) are solved exactly with a dynamic
//! program over vertex subsets: modularity decomposes as a sum of per-block
//! weights, so `best[S] = max over blocks T ∋ min(S) of w(T) + best[S \ T]`,
//! O(3^n). Larger graphs run greedy sweeps (ascending node order, move to the
//! neighboring community with maximal positive gain, smallest community id on
//! ties) alternated with a community-merge phase until neither improves.

/// Largest node count solved by the exact subset DP.
pub const EXACT_MAX_NODES: usize = 12;

const GAIN_EPS: f64 = 1e-15;

/// Undirected simple graph in index form.
pub struct IndexGraph {
    pub n: usize,
    pub adj: Vec<Vec<usize>>,
    pub degree: Vec<usize>,
    pub edge_count: usize,
}

impl IndexGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
            degree[a] += 1;
            degree[b] += 1;
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        IndexGraph {
            n,
            adj,
            degree,
            edge_count: edges.len(),
        }
    }

    /// Q for an assignment of nodes to community labels.
    pub fn modularity_of(&self, assign: &[usize], resolution: f64) -> f64 {
        let m = self.edge_count as f64;
        if self.edge_count == 0 {
            return 0.0;
        }
        // Q = sum_c [ in_c/m - resolution * (tot_c / 2m)^2 ], in_c = edges inside c
        let mut inside: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
        let mut total: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
        for v in 0..self.n {
            *total.entry(assign[v]).or_default() += self.degree[v] as f64;
            for &u in &self.adj[v] {
                if u > v && assign[u] == assign[v] {
                    *inside.entry(assign[v]).or_default() += 1.0;
                }
            }
        }
        let mut q = 0.0;
        for (&c, &tot) in &total {
            let inn = inside.get(&c).copied().unwrap_or(0.0);
            q += inn / m - resolution * (tot / (2.0 * m)).powi(2);
        }
        q
    }

    /// Partition as blocks of node indices, each block sorted, blocks ordered
    /// by smallest member.
    pub fn max_modularity_partition(&self, resolution: f64) -> Vec<Vec<usize>> {
        let blocks = if self.edge_count == 0 {
            (0..self.n).map(|v| vec![v]).collect()
        } else if self.n <= EXACT_MAX_NODES {
            self.exact_partition(resolution)
        } else {
            self.greedy_partition(resolution)
        };
        canonicalize(blocks)
    }

    fn exact_partition(&self, resolution: f64) -> Vec<Vec<usize>> {
        let n = self.n;
        let m = self.edge_count as f64;
        let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        let mut adjmask = vec![0u32; n];
        for v in 0..n {
            for &u in &self.adj[v] {
                adjmask[v] |= 1 << u;
            }
        }
        let block_weight = |mask: u32| -> f64 {
            let mut deg_sum = 0usize;
            let mut inside_doubled = 0u32;
            let mut rest = mask;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                deg_sum += self.degree[v];
                inside_doubled += (adjmask[v] & mask).count_ones();
            }
            let inside = (inside_doubled / 2) as f64;
            inside / m - resolution * (deg_sum as f64 / (2.0 * m)).powi(2)
        };
        let mut best = vec![f64::NEG_INFINITY; (full as usize) + 1];
        let mut choice = vec![0u32; (full as usize) + 1];
        best[0] = 0.0;
        for s in 1..=(full as usize) {
            let s32 = s as u32;
            let low = s32.trailing_zeros();
            let rest = s32 & !(1 << low);
            let mut sub = rest;
            loop {
                let block = sub | (1 << low);
                let value = block_weight(block) + best[(s32 & !block) as usize];
                if value > best[s] + GAIN_EPS || best[s] == f64::NEG_INFINITY {
                    best[s] = value;
                    choice[s] = block;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        let mut blocks = Vec::new();
        let mut s = full;
        while s != 0 {
            let block = choice[s as usize];
            blocks.push((0..n).filter(|v| block >> v & 1 == 1).collect());
            s &= !block;
        }
        blocks
    }

    fn greedy_partition(&self, resolution: f64) -> Vec<Vec<usize>> {
        let n = self.n;
        let m = self.edge_count as f64;
        // community id = index at initialization (node index); stable under moves
        let mut assign: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = (0..n).map(|v| self.degree[v] as f64).collect();
        loop {
            self.local_move_sweeps(resolution, &mut assign, &mut tot);
            if !self.merge_communities(resolution, &mut assign, &mut tot) {
                break;
            }
        }
        let mut by_comm: std::collections::BTreeMap<usize, Vec<usize>> =
            std::collections::BTreeMap::new();
        for v in 0..n {
            by_comm.entry(assign[v]).or_default().push(v);
        }
        let _ = m;
        by_comm.into_values().collect()
    }

    /// Sweep nodes ascending until a full sweep makes no move.
    fn local_move_sweeps(&self, resolution: f64, assign: &mut [usize], tot: &mut [f64]) {
        let m = self.edge_count as f64;
        let mut moved = true;
        while moved {
            moved = false;
            for v in 0..self.n {
                let current = assign[v];
                let k_v = self.degree[v] as f64;
                // edges from v into each adjacent community
                let mut links: std::collections::BTreeMap<usize, f64> =
                    std::collections::BTreeMap::new();
                for &u in &self.adj[v] {
                    *links.entry(assign[u]).or_default() += 1.0;
                }
                let k_v_current = links.get(&current).copied().unwrap_or(0.0);
                let mut best_gain = 0.0;
                let mut best_comm = None;
                for (&candidate, &k_v_cand) in &links {
                    if candidate == current {
                        continue;
                    }
                    // delta-Q of moving v from its community to `candidate`
                    let gain = (k_v_cand - k_v_current) / m
                        - resolution * k_v * (tot[candidate] - tot[current] + k_v)
                            / (2.0 * m * m);
                    if gain > best_gain + GAIN_EPS {
                        best_gain = gain;
                        best_comm = Some(candidate);
                    }
                }
                if let Some(target) = best_comm {
                    tot[current] -= k_v;
                    tot[target] += k_v;
                    assign[v] = target;
                    moved = true;
                }
            }
        }
    }

    /// Best-gain pairwise community merges until none improves Q.
    fn merge_communities(&self, resolution: f64, assign: &mut [usize], tot: &mut [f64]) -> bool {
        let m = self.edge_count as f64;
        let mut merged_any = false;
        loop {
            // inter-community edge counts
            let mut between: std::collections::BTreeMap<(usize, usize), f64> =
                std::collections::BTreeMap::new();
            for v in 0..self.n {
                for &u in &self.adj[v] {
                    if u > v && assign[u] != assign[v] {
                        let key = (assign[v].min(assign[u]), assign[v].max(assign[u]));
                        *between.entry(key).or_default() += 1.0;
                    }
                }
            }
            let mut best_gain = 0.0;
            let mut best_pair = None;
            for (&(a, b), &e_ab) in &between {
                let gain = e_ab / m - resolution * tot[a] * tot[b] / (2.0 * m * m);
                if gain > best_gain + GAIN_EPS {
                    best_gain = gain;
                    best_pair = Some((a, b));
                }
            }
            let Some((a, b)) = best_pair else {
                return merged_any;
            };
            for v in 0..self.n {
                if assign[v] == b {
                    assign[v] = a;
                }
            }
            tot[a] += tot[b];
            tot[b] = 0.0;
            merged_any = true;
        }
    }
}

fn canonicalize(mut blocks: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for block in &mut blocks {
        block.sort_unstable();
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

/// Enumerate every partition of `{0..n}` via restricted growth strings,
/// calling `visit` with each assignment. Test oracle helper; exported for the
/// acceptance suite.
pub fn for_each_partition(n: usize, mut visit: impl FnMut(&[usize])) {
    assert!(n >= 1 && n <= 10, "enumeration oracle is for small n");
    let mut assign = vec![0usize; n];
    loop {
        visit(&assign);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            let max_prefix = assign[..i].iter().copied().max().unwrap_or(0);
            if assign[i] <= max_prefix {
                assign[i] += 1;
                for slot in assign.iter_mut().skip(i + 1) {
                    *slot = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn brute_force_max(graph: &IndexGraph, resolution: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for_each_partition(graph.n, |assign| {
            best = best.max(graph.modularity_of(assign, resolution));
        });
        best
    }

    fn random_graph(stream: &mut SeedStream) -> IndexGraph {
        let n = 2 + stream.pick_index(7);
        let p = 0.2 + 0.1 * stream.pick_index(8) as f64;
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if stream.next_f64() < p {
                    edges.push((a, b));
                }
            }
        }
        IndexGraph::new(n, &edges)
    }

    #[test]
    fn exact_path_matches_enumeration_on_random_graphs() {
        let mut stream = SeedStream::new(1234, "partition", "unit");
        for _ in 0..60 {
            let graph = random_graph(&mut stream);
            let blocks = graph.max_modularity_partition(1.0);
            let mut assign = vec![0usize; graph.n];
            for (c, block) in blocks.iter().enumerate() {
                for &v in block {
                    assign[v] = c;
                }
            }
            let got = graph.modularity_of(&assign, 1.0);
            let want = brute_force_max(&graph, 1.0);
            assert!(
                (got - want).abs() <= 1e-12,
                "n={} got {got} want {want}",
                graph.n
            );
        }
    }

    #[test]
    fn greedy_path_recovers_disjoint_cliques() {
        // 5 cliques of 5 -> 25 nodes, beyond the exact-DP limit
        let mut edges = Vec::new();
        for c in 0..5usize {
            let base = c * 5;
            for i in 0..5 {
                for j in (i + 1)..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let graph = IndexGraph::new(25, &edges);
        let blocks = graph.max_modularity_partition(1.0);
        let expected: Vec<Vec<usize>> = (0..5).map(|c| (c * 5..c * 5 + 5).collect()).collect();
        assert_eq!(blocks, expected);
    }

    #[test]
    fn gain_formulas_match_direct_recomputation() {
        // move-gain and merge-gain shortcuts agree with modularity_of deltas
        let mut stream = SeedStream::new(77, "partition", "gain");
        for _ in 0..20 {
            let graph = random_graph(&mut stream);
            if graph.edge_count == 0 {
                continue;
            }
            let m = graph.edge_count as f64;
            let assign: Vec<usize> = (0..graph.n).map(|v| v % 3.min(graph.n)) .collect();
            let mut tot = vec![0.0; graph.n];
            for v in 0..graph.n {
                tot[assign[v]] += graph.degree[v] as f64;
            }
            let q0 = graph.modularity_of(&assign, 1.0);
            for v in 0..graph.n {
                let current = assign[v];
                let k_v = graph.degree[v] as f64;
                let mut links: std::collections::BTreeMap<usize, f64> = Default::default();
                for &u in &graph.adj[v] {
                    *links.entry(assign[u]).or_default() += 1.0;
                }
                let k_cur = links.get(&current).copied().unwrap_or(0.0);
                for target in 0..3.min(graph.n) {
                    if target == current {
                        continue;
                    }
                    let k_tgt = links.get(&target).copied().unwrap_or(0.0);
                    let predicted = (k_tgt - k_cur) / m
                        - k_v * (tot[target] - tot[current] + k_v) / (2.0 * m * m);
                    let mut moved = assign.clone();
                    moved[v] = target;
                    let actual = graph.modularity_of(&moved, 1.0) - q0;
                    assert!(
                        (predicted - actual).abs() < 1e-12,
                        "move gain mismatch: {predicted} vs {actual}"
                    );
                }
            }
        }
    }

    #[test]
    fn partition_enumeration_counts_are_bell_numbers() {
        let mut count = 0usize;
        for_each_partition(4, |_| count += 1);
        assert_eq!(count, 15);
        count = 0;
        for_each_partition(8, |_| count += 1);
        assert_eq!(count, 4140);
    }
}

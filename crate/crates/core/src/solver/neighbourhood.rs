use crate::model::{Prize, RoutingInstance};

/// Weights of the granular neighbourhood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighbourhoodParams {
    pub size: usize,
    pub weight_wait: f64,
    pub weight_time_warp: f64,
}

impl Default for NeighbourhoodParams {
    fn default() -> Self {
        NeighbourhoodParams {
            size: 40,
            weight_wait: 0.2,
            weight_time_warp: 1.0,
        }
    }
}

/// How attractive it is to visit `j` right after `i` (lower is better):
/// distance, plus weighted unavoidable waiting and time warp, minus the prize
/// of `j`. Required clusters count with a zero prize here.
pub fn correlation(inst: &RoutingInstance, params: &NeighbourhoodParams, i: usize, j: usize) -> f64 {
    let (a, b) = (inst.node(i), inst.node(j));
    let travel = inst.travel(i, j);
    let wait = (b.earliest - a.latest - a.service - travel).max(0);
    let warp = (a.earliest + a.service + travel - b.latest).max(0);
    let prize = match b.prize {
        Prize::Required => 0,
        Prize::Optional(p) => p,
    };
    inst.dist(i, j) as f64 + params.weight_wait * wait as f64 + params.weight_time_warp * warp as f64 - prize as f64
}

/// For every cluster node, the `size` other cluster nodes with the lowest
/// correlation, best first; ties go to the lower node id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbourhood {
    lists: Vec<Vec<usize>>,
}

impl Neighbourhood {
    pub fn build(inst: &RoutingInstance, params: &NeighbourhoodParams) -> Self {
        let mut lists = vec![Vec::new(); inst.num_nodes()];
        let clusters: Vec<usize> = inst.cluster_nodes().collect();
        for &i in &clusters {
            let mut scored: Vec<(f64, usize)> = clusters
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (correlation(inst, params, i, j), j))
                .collect();
            let keep = params.size.min(scored.len());
            let by_score = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if keep > 0 && keep < scored.len() {
                scored.select_nth_unstable_by(keep - 1, by_score);
            }
            scored.truncate(keep);
            scored.sort_by(by_score);
            lists[i] = scored.into_iter().map(|(_, j)| j).collect();
        }
        Neighbourhood { lists }
    }

    /// Neighbours of a node (empty for depots and breaks).
    pub fn of(&self, node: usize) -> &[usize] {
        &self.lists[node]
    }
}

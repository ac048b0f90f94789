//! Exhaustive solver for tiny instances, used as a test oracle.

use thiserror::Error;

use crate::model::{Cost, RoutingInstance, Seconds, DESTINATION, ORIGIN};

use super::solution::{evaluate, Evaluation, Solution};

pub const MAX_CLUSTERS: usize = 8;
pub const MAX_VEHICLES: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BruteForceError {
    #[error("{clusters} clusters and {vehicles} vehicles exceed the exhaustive limit")]
    TooLarge { clusters: usize, vehicles: usize },
    #[error("no feasible solution exists")]
    Infeasible,
}

struct Search<'a> {
    inst: &'a RoutingInstance,
    clusters: Vec<usize>,
    breaks: Vec<usize>,
    best: Vec<Option<(Cost, Vec<usize>)>>,
    path: Vec<usize>,
}

impl Search<'_> {
    /// Depth-first over every sequence of clusters and breaks (breaks in
    /// window order) that never arrives late. Each prefix holding all
    /// breaks is a complete route for its cluster set.
    fn extend(&mut self, mask: usize, placed: usize, time: Seconds, distance: Cost, load: i64) {
        let inst = self.inst;
        let prev = self.path.last().copied().unwrap_or(ORIGIN);

        if placed == self.breaks.len() && mask != 0 {
            let home = time + inst.travel(prev, DESTINATION);
            let total = distance + inst.dist(prev, DESTINATION);
            if home <= inst.node(DESTINATION).latest && self.best[mask].as_ref().is_none_or(|(c, _)| total < *c) {
                self.best[mask] = Some((total, self.path.clone()));
            }
        }

        let mut next: Vec<(usize, usize, usize)> = Vec::new();
        if placed < self.breaks.len() {
            next.push((self.breaks[placed], mask, placed + 1));
        }
        for (k, &c) in self.clusters.iter().enumerate() {
            if mask & (1 << k) == 0 {
                next.push((c, mask | (1 << k), placed));
            }
        }
        for (node, new_mask, new_placed) in next {
            let n = inst.node(node);
            let arrival = time + inst.travel(prev, node);
            if arrival > n.latest {
                continue;
            }
            let new_load = load + n.demand;
            if inst.capacity().is_some_and(|cap| new_load > cap) {
                continue;
            }
            let done = arrival.max(n.earliest) + n.service;
            self.path.push(node);
            self.extend(new_mask, new_placed, done, distance + inst.dist(prev, node), new_load);
            self.path.pop();
        }
    }
}

/// Optimal solution by enumeration: the cheapest feasible route for every
/// subset of clusters, combined over at most two vehicles. Only feasible
/// solutions are considered; ties keep the first one found.
pub fn brute_force_optimal(inst: &RoutingInstance) -> Result<(Solution, Evaluation), BruteForceError> {
    let n = inst.num_clusters();
    let k = inst.num_vehicles();
    if n > MAX_CLUSTERS || k > MAX_VEHICLES {
        return Err(BruteForceError::TooLarge {
            clusters: n,
            vehicles: k,
        });
    }

    let mut search = Search {
        inst,
        clusters: inst.cluster_nodes().collect(),
        breaks: inst.break_nodes().collect(),
        best: vec![None; 1 << n],
        path: Vec::new(),
    };
    search.best[0] = Some((0, Vec::new()));
    search.extend(0, 0, inst.node(ORIGIN).earliest, 0, 0);
    let best = search.best;
    let clusters = search.clusters;

    let full = (1usize << n) - 1;
    let required: usize = clusters
        .iter()
        .enumerate()
        .filter(|(_, &c)| inst.prize(c).is_required())
        .map(|(k, _)| 1 << k)
        .sum();
    let uncollected = |mask: usize| -> Cost {
        clusters
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) == 0)
            .map(|(_, &c)| inst.prize(c).value())
            .sum()
    };

    let mut chosen: Option<(Cost, usize, usize)> = None;
    for first in 0..=full {
        let Some((c1, _)) = &best[first] else { continue };
        let rest = full & !first;
        let mut second = rest;
        loop {
            let use_second = k == 2 || second == 0;
            if use_second {
                if let Some((c2, _)) = &best[second] {
                    let union = first | second;
                    if union & required == required {
                        let total = c1 + c2 + uncollected(union);
                        if chosen.is_none_or(|(t, _, _)| total < t) {
                            chosen = Some((total, first, second));
                        }
                    }
                }
            }
            if second == 0 {
                break;
            }
            second = (second - 1) & rest;
        }
    }

    let (_, first, second) = chosen.ok_or(BruteForceError::Infeasible)?;
    let routes = [first, second]
        .iter()
        .filter(|&&m| m != 0)
        .map(|&m| best[m].as_ref().expect("chosen subsets have routes").1.clone())
        .collect();
    let solution = Solution::new(inst, routes);
    let eval = evaluate(inst, &solution);
    Ok((solution, eval))
}

use rand::Rng;

use crate::model::RoutingInstance;

use super::solution::{Evaluation, Penalties, Solution};

const NONE: u32 = u32::MAX;

/// A solution with its evaluation and the predecessor / successor of every
/// cluster (breaks skipped, `0` for the depot, `NONE` when unvisited).
#[derive(Clone, Debug)]
pub(crate) struct Individual {
    pub solution: Solution,
    pub eval: Evaluation,
    pred: Vec<u32>,
    succ: Vec<u32>,
}

impl Individual {
    pub fn new(inst: &RoutingInstance, solution: Solution, eval: Evaluation) -> Self {
        let offset = inst.cluster_nodes().start;
        let n = inst.num_clusters();
        let (mut pred, mut succ) = (vec![NONE; n], vec![NONE; n]);
        for route in solution.routes() {
            let clusters: Vec<usize> = route.iter().copied().filter(|&x| inst.is_cluster(x)).collect();
            for (k, &node) in clusters.iter().enumerate() {
                let idx = node - offset;
                pred[idx] = if k == 0 { 0 } else { clusters[k - 1] as u32 };
                succ[idx] = clusters.get(k + 1).map_or(0, |&x| x as u32);
            }
        }
        Individual {
            solution,
            eval,
            pred,
            succ,
        }
    }

    /// Share of broken predecessor / successor links, in [0, 1].
    pub fn broken_pairs(&self, other: &Individual) -> f64 {
        let n = self.pred.len();
        if n == 0 {
            return 0.0;
        }
        let broken: usize = (0..n)
            .map(|i| (self.pred[i] != other.pred[i]) as usize + (self.succ[i] != other.succ[i]) as usize)
            .sum();
        broken as f64 / (2 * n) as f64
    }
}

struct Member {
    ind: Individual,
    id: u64,
    /// Distances to the other members of the sub-population, ascending.
    near: Vec<(f64, u64)>,
    fitness: f64,
}

#[derive(Default)]
struct SubPopulation {
    members: Vec<Member>,
}

impl SubPopulation {
    fn add(&mut self, ind: Individual, id: u64) {
        let mut near = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            let d = ind.broken_pairs(&m.ind);
            let at = m.near.partition_point(|&(x, mid)| (x, mid) < (d, id));
            m.near.insert(at, (d, id));
            near.push((d, m.id));
        }
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.members.push(Member {
            ind,
            id,
            near,
            fitness: 0.0,
        });
    }

    fn remove(&mut self, idx: usize) {
        let gone = self.members.swap_remove(idx).id;
        for m in &mut self.members {
            m.near.retain(|&(_, id)| id != gone);
        }
    }

    fn diversity(member: &Member, closest: usize) -> f64 {
        let k = closest.min(member.near.len());
        if k == 0 {
            return 0.0;
        }
        member.near[..k].iter().map(|x| x.0).sum::<f64>() / k as f64
    }

    /// Biased fitness: rank by penalised cost plus weighted rank by
    /// diversity contribution (both scaled to [0, 1], lower is better).
    fn update_fitness(&mut self, penalties: &Penalties, closest: usize, diversity_weight: f64) {
        let n = self.members.len();
        if n <= 1 {
            self.members.iter_mut().for_each(|m| m.fitness = 0.0);
            return;
        }
        let mut by_cost: Vec<usize> = (0..n).collect();
        by_cost.sort_by(|&a, &b| {
            let (ma, mb) = (&self.members[a], &self.members[b]);
            ma.ind
                .eval
                .penalised(penalties)
                .total_cmp(&mb.ind.eval.penalised(penalties))
                .then(ma.id.cmp(&mb.id))
        });
        let div: Vec<f64> = self.members.iter().map(|m| Self::diversity(m, closest)).collect();
        let mut by_div: Vec<usize> = (0..n).collect();
        by_div.sort_by(|&a, &b| {
            div[b]
                .total_cmp(&div[a])
                .then(self.members[a].id.cmp(&self.members[b].id))
        });

        let scale = (n - 1) as f64;
        let mut fitness = vec![0.0; n];
        for (rank, &idx) in by_cost.iter().enumerate() {
            fitness[idx] += rank as f64 / scale;
        }
        for (rank, &idx) in by_div.iter().enumerate() {
            fitness[idx] += diversity_weight * rank as f64 / scale;
        }
        for (m, f) in self.members.iter_mut().zip(fitness) {
            m.fitness = f;
        }
    }

    /// Removes the worst member, clones first.
    fn purge_one(&mut self, penalties: &Penalties, closest: usize, diversity_weight: f64) {
        self.update_fitness(penalties, closest, diversity_weight);
        let worst = (0..self.members.len())
            .max_by(|&a, &b| {
                let (ma, mb) = (&self.members[a], &self.members[b]);
                let clone = |m: &Member| m.near.first().is_some_and(|x| x.0 <= 1e-12);
                clone(ma)
                    .cmp(&clone(mb))
                    .then(ma.fitness.total_cmp(&mb.fitness))
                    .then(ma.id.cmp(&mb.id))
            })
            .expect("non-empty sub-population");
        self.remove(worst);
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PopulationParams {
    pub min_size: usize,
    pub generation: usize,
    pub closest: usize,
    pub diversity_weight: f64,
}

/// Feasible and infeasible sub-populations with survivor selection.
pub(crate) struct Population {
    params: PopulationParams,
    feasible: SubPopulation,
    infeasible: SubPopulation,
    next_id: u64,
}

impl Population {
    pub fn new(params: PopulationParams) -> Self {
        Population {
            params,
            feasible: SubPopulation::default(),
            infeasible: SubPopulation::default(),
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.feasible.members.len() + self.infeasible.members.len()
    }

    pub fn clear(&mut self) {
        self.feasible.members.clear();
        self.infeasible.members.clear();
    }

    pub fn add(&mut self, ind: Individual, penalties: &Penalties) {
        let p = self.params;
        let sub = if ind.eval.is_feasible() {
            &mut self.feasible
        } else {
            &mut self.infeasible
        };
        self.next_id += 1;
        sub.add(ind, self.next_id);
        if sub.members.len() > p.min_size + p.generation {
            while sub.members.len() > p.min_size {
                sub.purge_one(penalties, p.closest, p.diversity_weight);
            }
        }
    }

    /// Binary tournament over both sub-populations on biased fitness.
    pub fn select<R: Rng>(&mut self, penalties: &Penalties, rng: &mut R) -> &Individual {
        let p = self.params;
        self.feasible.update_fitness(penalties, p.closest, p.diversity_weight);
        self.infeasible.update_fitness(penalties, p.closest, p.diversity_weight);
        let total = self.len();
        assert!(total > 0, "selection from an empty population");
        let pick = |k: usize| {
            if k < self.feasible.members.len() {
                &self.feasible.members[k]
            } else {
                &self.infeasible.members[k - self.feasible.members.len()]
            }
        };
        let (a, b) = (pick(rng.random_range(0..total)), pick(rng.random_range(0..total)));
        if b.fitness < a.fitness {
            &b.ind
        } else {
            &a.ind
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Prize, Site};
    use crate::travel::TravelMatrix;

    fn instance() -> RoutingInstance {
        let dist: Vec<i64> = (0..25).map(|k| if k % 6 == 0 { 0 } else { 1 }).collect();
        let matrix = TravelMatrix::from_flat(5, dist, vec![0; 25]).unwrap();
        let sites: Vec<Site> = (0..4)
            .map(|i| Site {
                location: i + 1,
                service: 0,
                earliest: 0,
                latest: 10,
                demand: 0,
                prize: Prize::Optional(1),
            })
            .collect();
        RoutingInstance::new(&matrix, 0, (0, 10), &[], &sites, 2, None).unwrap()
    }

    #[test]
    fn broken_pairs_distance() {
        let inst = instance();
        let c = |i: usize| inst.cluster_node(i);
        let mk = |routes: Vec<Vec<usize>>| {
            let s = Solution::new(&inst, routes);
            Individual::new(&inst, s, Evaluation::default())
        };
        let a = mk(vec![vec![c(0), c(1), c(2), c(3)]]);
        let b = mk(vec![vec![c(0), c(1), c(2), c(3)]]);
        let r = mk(vec![vec![c(3), c(2), c(1), c(0)]]);
        let partial = mk(vec![vec![c(0), c(1)]]);
        assert_eq!(a.broken_pairs(&b), 0.0);
        assert_eq!(a.broken_pairs(&r), 1.0);
        // c(1) loses its successor, c(2) and c(3) are unvisited.
        assert_eq!(a.broken_pairs(&partial), 5.0 / 8.0);
        assert_eq!(partial.broken_pairs(&a), a.broken_pairs(&partial));
    }

    #[test]
    fn survivor_selection_keeps_min_size() {
        let inst = instance();
        let params = PopulationParams {
            min_size: 3,
            generation: 2,
            closest: 2,
            diversity_weight: 0.5,
        };
        let mut pop = Population::new(params);
        let pen = Penalties::default();
        let c = |i: usize| inst.cluster_node(i);
        for k in 0..6 {
            let s = Solution::new(&inst, vec![vec![c(k % 4), c((k + 1) % 4)]]);
            let eval = Evaluation {
                distance: k as i64,
                ..Evaluation::default()
            };
            pop.add(Individual::new(&inst, s, eval), &pen);
        }
        assert_eq!(pop.len(), 3);
    }
}

use rand::Rng;

use crate::model::RoutingInstance;

use super::solution::{evaluate, Penalties, Solution};

/// Selective route exchange: a window of consecutive routes of `a` is
/// replaced by an equally long window of routes of `b`. Duplicated clusters
/// are removed either from the kept routes of `a` or from the imported
/// routes; the cheaper variant wins. Clusters that drop out are left for the
/// local search to reinsert.
pub(crate) fn srex<R: Rng>(
    inst: &RoutingInstance,
    a: &Solution,
    b: &Solution,
    penalties: &Penalties,
    rng: &mut R,
) -> Solution {
    let (ra, rb) = (a.routes(), b.routes());
    if ra.is_empty() {
        return b.clone();
    }
    if rb.is_empty() {
        return a.clone();
    }

    let moved = rng.random_range(1..=ra.len().min(rb.len()));
    let start_a = rng.random_range(0..ra.len());
    let start_b = rng.random_range(0..rb.len());
    let moved_a: Vec<usize> = (0..moved).map(|i| (start_a + i) % ra.len()).collect();
    let moved_b: Vec<usize> = (0..moved).map(|i| (start_b + i) % rb.len()).collect();

    let kept: Vec<&Vec<usize>> = (0..ra.len()).filter(|i| !moved_a.contains(i)).map(|i| &ra[i]).collect();
    let imported: Vec<&Vec<usize>> = moved_b.iter().map(|&i| &rb[i]).collect();

    let mark = |routes: &[&Vec<usize>]| {
        let mut flags = vec![false; inst.num_nodes()];
        for &node in routes.iter().copied().flatten() {
            if inst.is_cluster(node) {
                flags[node] = true;
            }
        }
        flags
    };
    let in_imported = mark(&imported);
    let in_kept = mark(&kept);
    let strip =
        |route: &Vec<usize>, drop: &[bool]| -> Vec<usize> { route.iter().copied().filter(|&n| !drop[n]).collect() };

    let first: Vec<Vec<usize>> = kept
        .iter()
        .map(|r| strip(r, &in_imported))
        .chain(imported.iter().map(|r| (*r).clone()))
        .collect();
    let second: Vec<Vec<usize>> = kept
        .iter()
        .map(|r| (*r).clone())
        .chain(imported.iter().map(|r| strip(r, &in_kept)))
        .collect();

    let first = Solution::new(inst, first);
    let second = Solution::new(inst, second);
    let score = |s: &Solution| {
        let e = evaluate(inst, s);
        (e.missing_required, e.penalised(penalties))
    };
    let (s1, s2) = (score(&first), score(&second));
    if s2.0 < s1.0 || (s2.0 == s1.0 && s2.1 < s1.1) {
        second
    } else {
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Prize, Site};
    use crate::travel::TravelMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize) -> RoutingInstance {
        let size = n + 1;
        let dist: Vec<i64> = (0..size * size)
            .map(|k| ((k / size) as i64 - (k % size) as i64).abs() * 10)
            .collect();
        let matrix = TravelMatrix::from_flat(size, dist.clone(), dist).unwrap();
        let sites: Vec<Site> = (0..n)
            .map(|i| Site {
                location: i + 1,
                service: 0,
                earliest: 0,
                latest: 100_000,
                demand: 0,
                prize: Prize::Optional(5),
            })
            .collect();
        RoutingInstance::new(&matrix, 0, (0, 100_000), &[(50, 60, 5)], &sites, 3, None).unwrap()
    }

    #[test]
    fn offspring_is_structurally_valid() {
        let inst = instance(9);
        let c = |i: usize| inst.cluster_node(i);
        let b0 = inst.break_node(0);
        let a = Solution::new(&inst, vec![vec![c(0), c(1), b0], vec![c(2), b0, c(3)], vec![c(4), b0]]);
        let b = Solution::new(&inst, vec![vec![c(4), c(3), b0, c(0)], vec![b0, c(8), c(7)]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let child = srex(&inst, &a, &b, &Penalties::default(), &mut rng);
            child.validate(&inst).unwrap();
            assert!(child.num_routes() <= 3);
        }
    }
}

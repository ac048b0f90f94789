//! Granular local search over the penalised objective.
//!
//! Routes are kept with prefix and suffix segments, so that inter-route moves
//! are priced by concatenating a handful of segments. Intra-route moves also
//! need the stretch between the two positions; the exact check of SWAP*
//! rebuilds the affected routes.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{Prize, RoutingInstance, DESTINATION, ORIGIN};

use super::neighbourhood::Neighbourhood;
use super::segment::Segment;
use super::solution::{Penalties, Solution};

const EPS: f64 = 1e-7;
const MAX_SEGMENT: usize = 3;

#[derive(Clone, Debug)]
struct Route {
    nodes: Vec<usize>,
    prefix: Vec<Segment>,
    suffix: Vec<Segment>,
    /// `between[a * len + b]` is the segment of `nodes[a..=b]` for `a <= b`.
    between: Vec<Segment>,
    breaks_upto: Vec<usize>,
    clusters_upto: Vec<usize>,
    cost: f64,
    modified: u64,
    breaks_tested: u64,
}

impl Route {
    fn clusters(&self) -> usize {
        *self.clusters_upto.last().unwrap()
    }

    fn last(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Up to five segments to concatenate, without allocating.
struct PartList {
    parts: [Segment; 5],
    len: usize,
}

impl PartList {
    fn new(filler: Segment) -> Self {
        PartList {
            parts: [filler; 5],
            len: 0,
        }
    }

    fn push(&mut self, seg: Segment) {
        self.parts[self.len] = seg;
        self.len += 1;
    }

    fn extend(&mut self, seg: Option<Segment>) {
        if let Some(seg) = seg {
            self.push(seg);
        }
    }

    fn as_slice(&self) -> &[Segment] {
        &self.parts[..self.len]
    }
}

pub struct LocalSearch<'a> {
    inst: &'a RoutingInstance,
    nb: &'a Neighbourhood,
    penalties: Penalties,
    routes: Vec<Route>,
    position: Vec<Option<(usize, usize)>>,
    tested: Vec<u64>,
    pair_tested: HashMap<(usize, usize), u64>,
    clock: u64,
    origin: Segment,
    breaks_home: Segment,
}

impl<'a> LocalSearch<'a> {
    pub fn new(inst: &'a RoutingInstance, nb: &'a Neighbourhood) -> Self {
        let mut tail: Vec<usize> = inst.break_nodes().collect();
        tail.push(DESTINATION);
        LocalSearch {
            inst,
            nb,
            penalties: Penalties::default(),
            routes: Vec::new(),
            position: vec![None; inst.num_nodes()],
            tested: vec![0; inst.num_nodes()],
            pair_tested: HashMap::new(),
            clock: 0,
            origin: Segment::node(inst, ORIGIN),
            breaks_home: Segment::of_nodes(inst, &tail),
        }
    }

    /// Runs the search from `start` until no move improves the penalised
    /// objective and returns the local optimum.
    pub fn improve<R: Rng>(&mut self, start: &Solution, penalties: Penalties, rng: &mut R) -> Solution {
        self.penalties = penalties;
        self.load(start);

        let mut order: Vec<usize> = self.inst.cluster_nodes().collect();
        order.shuffle(rng);

        let nb = self.nb;
        let mut first_pass = true;
        loop {
            let mut improved = self.prize_moves(&order);

            for &u in &order {
                if self.position[u].is_none() {
                    continue;
                }
                let last_test = self.tested[u];
                self.clock += 1;
                self.tested[u] = self.clock;

                for &v in nb.of(u) {
                    let (Some((ru, _)), Some((rv, _))) = (self.position[u], self.position[v]) else {
                        continue;
                    };
                    let changed = self.routes[ru].modified.max(self.routes[rv].modified);
                    if !first_pass && changed <= last_test {
                        continue;
                    }
                    if self.node_moves(u, v) {
                        improved = true;
                    }
                }

                if let Some((ru, _)) = self.position[u] {
                    if (first_pass || self.routes[ru].modified > last_test)
                        && self.routes[ru].clusters() > 1
                        && self.move_to_empty_route(u)
                    {
                        improved = true;
                    }
                }
            }

            for r in 0..self.routes.len() {
                let route = &self.routes[r];
                if route.clusters() > 0 && (first_pass || route.modified > route.breaks_tested) {
                    self.clock += 1;
                    self.routes[r].breaks_tested = self.clock;
                    if self.relocate_breaks(r) {
                        improved = true;
                    }
                }
            }

            if self.swap_star_all() {
                improved = true;
            }

            if !improved {
                break;
            }
            first_pass = false;
        }

        self.export()
    }

    fn load(&mut self, solution: &Solution) {
        let k = self.inst.num_vehicles();
        assert!(solution.num_routes() <= k, "solution has more routes than vehicles");
        self.position.iter_mut().for_each(|p| *p = None);
        self.tested.iter_mut().for_each(|t| *t = 0);
        self.pair_tested.clear();
        self.clock = 0;
        self.routes.clear();
        for r in 0..k {
            self.routes.push(Route {
                nodes: Vec::new(),
                prefix: Vec::new(),
                suffix: Vec::new(),
                between: Vec::new(),
                breaks_upto: Vec::new(),
                clusters_upto: Vec::new(),
                cost: 0.0,
                modified: 0,
                breaks_tested: 0,
            });
            let inner = solution.routes().get(r).cloned().unwrap_or_default();
            self.rebuild(r, inner);
        }
    }

    fn export(&self) -> Solution {
        let routes = self
            .routes
            .iter()
            .filter(|r| r.clusters() > 0)
            .map(|r| r.nodes[1..r.last()].to_vec())
            .collect();
        Solution::new(self.inst, routes)
    }

    fn cost(&self, seg: &Segment) -> f64 {
        let mut cost = seg.distance as f64 + self.penalties.time_warp * seg.time_warp as f64;
        if let Some(cap) = self.inst.capacity() {
            cost += self.penalties.load * (seg.load - cap).max(0) as f64;
        }
        cost
    }

    fn route_cost(&self, seg: &Segment, clusters: usize) -> f64 {
        if clusters == 0 {
            0.0
        } else {
            self.cost(seg)
        }
    }

    fn join(&self, parts: &[Segment]) -> Segment {
        let mut acc = parts[0];
        for part in &parts[1..] {
            acc = Segment::merge(self.inst, &acc, part);
        }
        acc
    }

    /// Segment of `nodes[a..=b]` of route `r`.
    fn seg(&self, r: usize, a: usize, b: usize) -> Segment {
        let route = &self.routes[r];
        if a == 0 {
            route.prefix[b]
        } else if b == route.last() {
            route.suffix[a]
        } else {
            route.between[a * route.nodes.len() + b]
        }
    }

    fn is_cluster_run(&self, r: usize, start: usize, len: usize) -> bool {
        let route = &self.routes[r];
        start >= 1
            && start + len <= route.last()
            && route.nodes[start..start + len].iter().all(|&n| self.inst.is_cluster(n))
    }

    fn first_empty_route(&self) -> Option<usize> {
        self.routes.iter().position(|r| r.clusters() == 0)
    }

    /// Replaces the inner nodes of route `r`. A route left without clusters
    /// also loses its breaks.
    fn rebuild(&mut self, r: usize, mut inner: Vec<usize>) {
        let inst = self.inst;
        for &node in &self.routes[r].nodes {
            if inst.is_cluster(node) && self.position[node].map(|p| p.0) == Some(r) {
                self.position[node] = None;
            }
        }
        if !inner.iter().any(|&n| inst.is_cluster(n)) {
            inner.clear();
        }

        let mut nodes = Vec::with_capacity(inner.len() + 2);
        nodes.push(ORIGIN);
        nodes.extend(inner);
        nodes.push(DESTINATION);
        let len = nodes.len();

        let mut prefix = Vec::with_capacity(len);
        let mut breaks_upto = Vec::with_capacity(len);
        let mut clusters_upto = Vec::with_capacity(len);
        let (mut breaks, mut clusters) = (0, 0);
        for (idx, &node) in nodes.iter().enumerate() {
            let single = Segment::node(inst, node);
            prefix.push(if idx == 0 {
                single
            } else {
                Segment::merge(inst, &prefix[idx - 1], &single)
            });
            if inst.is_break(node) {
                breaks += 1;
            }
            if inst.is_cluster(node) {
                clusters += 1;
                self.position[node] = Some((r, idx));
            }
            breaks_upto.push(breaks);
            clusters_upto.push(clusters);
        }
        let mut suffix = vec![Segment::node(inst, DESTINATION); len];
        for idx in (0..len - 1).rev() {
            suffix[idx] = Segment::merge(inst, &Segment::node(inst, nodes[idx]), &suffix[idx + 1]);
        }

        let mut between = vec![suffix[len - 1]; len * len];
        for a in 1..len - 1 {
            let mut acc = Segment::node(inst, nodes[a]);
            between[a * len + a] = acc;
            for b in a + 1..len - 1 {
                acc = Segment::merge(inst, &acc, &Segment::node(inst, nodes[b]));
                between[a * len + b] = acc;
            }
        }

        let cost = self.route_cost(&prefix[len - 1], clusters);
        self.clock += 1;
        let route = &mut self.routes[r];
        route.nodes = nodes;
        route.prefix = prefix;
        route.suffix = suffix;
        route.between = between;
        route.breaks_upto = breaks_upto;
        route.clusters_upto = clusters_upto;
        route.cost = cost;
        route.modified = self.clock;
    }

    fn inner(&self, r: usize) -> &[usize] {
        let route = &self.routes[r];
        &route.nodes[1..route.last()]
    }

    /// Inner nodes of `r` with `extra` inserted after position `after`
    /// (a position of the full node list). Inserting into an empty route
    /// appends the breaks.
    fn inserted(&self, r: usize, after: usize, extra: &[usize]) -> Vec<usize> {
        let route = &self.routes[r];
        let mut out = Vec::with_capacity(route.nodes.len() + extra.len());
        out.extend_from_slice(&route.nodes[1..=after]);
        out.extend_from_slice(extra);
        if route.clusters() == 0 {
            out.extend(self.inst.break_nodes());
        } else {
            out.extend_from_slice(&route.nodes[after + 1..route.last()]);
        }
        out
    }

    /// Penalised cost of route `r` with segment `mid` placed after position
    /// `after`.
    fn insertion_cost(&self, r: usize, after: usize, mid: &Segment) -> f64 {
        let route = &self.routes[r];
        if route.clusters() == 0 {
            return self.cost(&self.join(&[self.origin, *mid, self.breaks_home]));
        }
        self.cost(&self.join(&[route.prefix[after], *mid, route.suffix[after + 1]]))
    }

    fn prize_of(&self, node: usize) -> f64 {
        self.inst.prize(node).value() as f64
    }

    /// Drops optional clusters that cost more than they collect, then adds
    /// unvisited clusters that pay for themselves. Required clusters are
    /// always (re)inserted.
    fn prize_moves(&mut self, order: &[usize]) -> bool {
        let mut improved = false;

        for &u in order {
            let Some((r, p)) = self.position[u] else { continue };
            if self.inst.prize(u).is_required() {
                continue;
            }
            let route = &self.routes[r];
            let without = self.join(&[route.prefix[p - 1], route.suffix[p + 1]]);
            let delta = self.route_cost(&without, route.clusters() - 1) - route.cost + self.prize_of(u);
            if delta < -EPS {
                let mut inner = self.inner(r).to_vec();
                inner.remove(p - 1);
                self.rebuild(r, inner);
                improved = true;
            }
        }

        for &u in order {
            if self.position[u].is_some() {
                continue;
            }
            let required = self.inst.prize(u).is_required();
            let single = Segment::node(self.inst, u);
            let mut best: Option<(f64, usize, usize)> = None;
            let consider = |r: usize, after: usize, best: &mut Option<(f64, usize, usize)>| {
                let delta = self.insertion_cost(r, after, &single) - self.routes[r].cost;
                if best.is_none_or(|(d, _, _)| delta < d) {
                    *best = Some((delta, r, after));
                }
            };
            for &v in self.nb.of(u) {
                if let Some((rv, pv)) = self.position[v] {
                    consider(rv, pv, &mut best);
                    consider(rv, pv - 1, &mut best);
                }
            }
            if let Some(e) = self.first_empty_route() {
                consider(e, 0, &mut best);
            }
            if required && best.is_none() {
                for r in 0..self.routes.len() {
                    for after in 0..self.routes[r].last() {
                        consider(r, after, &mut best);
                    }
                }
            }
            let Some((delta, r, after)) = best else { continue };
            if required || delta - self.prize_of(u) < -EPS {
                let inner = self.inserted(r, after, &[u]);
                self.rebuild(r, inner);
                improved = true;
            }
        }
        improved
    }

    fn node_moves(&mut self, u: usize, v: usize) -> bool {
        for n in 1..=MAX_SEGMENT {
            for m in 0..=n {
                let (Some((ru, pu)), Some((rv, pv))) = (self.position[u], self.position[v]) else {
                    return false;
                };
                if self.exchange(ru, pu, n, rv, pv, m) {
                    return true;
                }
                if m == 0 && self.exchange(ru, pu, n, rv, pv - 1, 0) {
                    return true;
                }
            }
        }
        let (Some((ru, pu)), Some((rv, pv))) = (self.position[u], self.position[v]) else {
            return false;
        };
        if ru != rv && (self.two_opt_star(ru, pu, rv, pv) || self.two_opt_star(ru, pu, rv, pv - 1)) {
            return true;
        }
        false
    }

    fn move_to_empty_route(&mut self, u: usize) -> bool {
        let (Some((ru, pu)), Some(e)) = (self.position[u], self.first_empty_route()) else {
            return false;
        };
        self.exchange(ru, pu, 1, e, 0, 0)
    }

    /// Moves `n` consecutive clusters starting at `pu` of route `ru` and `m`
    /// consecutive clusters starting at `pv` of `rv` into each other's place.
    /// With `m == 0` the first run is inserted after position `pv` instead.
    fn exchange(&mut self, ru: usize, pu: usize, n: usize, rv: usize, pv: usize, m: usize) -> bool {
        if !self.is_cluster_run(ru, pu, n) {
            return false;
        }
        if m > 0 && !self.is_cluster_run(rv, pv, m) {
            return false;
        }
        if m == 0 && pv >= self.routes[rv].last() {
            return false;
        }
        if ru == rv {
            return self.exchange_within(ru, pu, n, pv, m);
        }

        let r1 = &self.routes[ru];
        let r2 = &self.routes[rv];
        let useg = self.seg(ru, pu, pu + n - 1);
        let (new1, new2, c1, c2) = if m == 0 {
            let new1 = self.join(&[r1.prefix[pu - 1], r1.suffix[pu + n]]);
            let new2 = if r2.clusters() == 0 {
                self.join(&[self.origin, useg, self.breaks_home])
            } else {
                self.join(&[r2.prefix[pv], useg, r2.suffix[pv + 1]])
            };
            (new1, new2, r1.clusters() - n, r2.clusters() + n)
        } else {
            let vseg = self.seg(rv, pv, pv + m - 1);
            let new1 = self.join(&[r1.prefix[pu - 1], vseg, r1.suffix[pu + n]]);
            let new2 = self.join(&[r2.prefix[pv - 1], useg, r2.suffix[pv + m]]);
            (new1, new2, r1.clusters() + m - n, r2.clusters() + n - m)
        };
        let delta = self.route_cost(&new1, c1) + self.route_cost(&new2, c2) - r1.cost - r2.cost;
        if delta >= -EPS {
            return false;
        }

        let moved_u = r1.nodes[pu..pu + n].to_vec();
        let (inner1, inner2) = if m == 0 {
            let mut inner1 = self.inner(ru).to_vec();
            inner1.drain(pu - 1..pu - 1 + n);
            (inner1, self.inserted(rv, pv, &moved_u))
        } else {
            let moved_v = r2.nodes[pv..pv + m].to_vec();
            let mut inner1 = self.inner(ru).to_vec();
            inner1.splice(pu - 1..pu - 1 + n, moved_v);
            let mut inner2 = self.inner(rv).to_vec();
            inner2.splice(pv - 1..pv - 1 + m, moved_u);
            (inner1, inner2)
        };
        self.rebuild(rv, inner2);
        self.rebuild(ru, inner1);
        true
    }

    /// Segment of `nodes[a..=b]` of route `r`, or `None` when `a > b`.
    fn middle(&self, r: usize, a: usize, b: usize) -> Option<Segment> {
        (a <= b).then(|| self.seg(r, a, b))
    }

    fn exchange_within(&mut self, r: usize, pu: usize, n: usize, pv: usize, m: usize) -> bool {
        let route = &self.routes[r];
        let mut parts = PartList::new(route.prefix[0]);
        if m == 0 {
            if pv + 1 >= pu && pv < pu + n {
                return false;
            }
            let run = self.seg(r, pu, pu + n - 1);
            if pv < pu {
                parts.push(route.prefix[pv]);
                parts.push(run);
                parts.extend(self.middle(r, pv + 1, pu - 1));
                parts.push(route.suffix[pu + n]);
            } else {
                parts.push(route.prefix[pu - 1]);
                parts.extend(self.middle(r, pu + n, pv));
                parts.push(run);
                parts.push(route.suffix[pv + 1]);
            }
        } else {
            let (a, la, b, lb) = if pu < pv { (pu, n, pv, m) } else { (pv, m, pu, n) };
            if a + la > b {
                return false;
            }
            parts.push(route.prefix[a - 1]);
            parts.push(self.seg(r, b, b + lb - 1));
            parts.extend(self.middle(r, a + la, b - 1));
            parts.push(self.seg(r, a, a + la - 1));
            parts.push(route.suffix[b + lb]);
        }
        if self.cost(&self.join(parts.as_slice())) - route.cost >= -EPS {
            return false;
        }

        let nodes = &route.nodes;
        let candidate: Vec<usize> = if m == 0 {
            let run = &nodes[pu..pu + n];
            let mut rest: Vec<usize> = nodes[..pu].iter().chain(&nodes[pu + n..]).copied().collect();
            let at = if pv < pu { pv + 1 } else { pv + 1 - n };
            rest.splice(at..at, run.iter().copied());
            rest
        } else {
            let (a, la, b, lb) = if pu < pv { (pu, n, pv, m) } else { (pv, m, pu, n) };
            let mut out = Vec::with_capacity(nodes.len());
            out.extend_from_slice(&nodes[..a]);
            out.extend_from_slice(&nodes[b..b + lb]);
            out.extend_from_slice(&nodes[a + la..b]);
            out.extend_from_slice(&nodes[a..a + la]);
            out.extend_from_slice(&nodes[b + lb..]);
            out
        };
        let inner = candidate[1..candidate.len() - 1].to_vec();
        self.rebuild(r, inner);
        true
    }

    /// Swaps the tails after positions `pu` and `pv`. Both heads must hold
    /// the same number of breaks, so each route keeps every break once.
    fn two_opt_star(&mut self, ru: usize, pu: usize, rv: usize, pv: usize) -> bool {
        let (r1, r2) = (&self.routes[ru], &self.routes[rv]);
        if r1.clusters() == 0 || r2.clusters() == 0 || r1.breaks_upto[pu] != r2.breaks_upto[pv] {
            return false;
        }
        let new1 = self.join(&[r1.prefix[pu], r2.suffix[pv + 1]]);
        let new2 = self.join(&[r2.prefix[pv], r1.suffix[pu + 1]]);
        let c1 = r1.clusters_upto[pu] + r2.clusters() - r2.clusters_upto[pv];
        let c2 = r2.clusters_upto[pv] + r1.clusters() - r1.clusters_upto[pu];
        let delta = self.route_cost(&new1, c1) + self.route_cost(&new2, c2) - r1.cost - r2.cost;
        if delta >= -EPS {
            return false;
        }
        let inner1: Vec<usize> = r1.nodes[1..=pu]
            .iter()
            .chain(&r2.nodes[pv + 1..r2.last()])
            .copied()
            .collect();
        let inner2: Vec<usize> = r2.nodes[1..=pv]
            .iter()
            .chain(&r1.nodes[pu + 1..r1.last()])
            .copied()
            .collect();
        self.rebuild(ru, inner1);
        self.rebuild(rv, inner2);
        true
    }

    /// Moves each break to its best position between its neighbouring
    /// breaks.
    fn relocate_breaks(&mut self, r: usize) -> bool {
        let mut improved = false;
        for b in self.inst.break_nodes() {
            let route = &self.routes[r];
            let Some(pb) = route.nodes.iter().position(|&n| n == b) else {
                continue;
            };
            let lower = route.nodes[..pb]
                .iter()
                .rposition(|&n| self.inst.is_break(n))
                .unwrap_or(0);
            let upper = route.nodes[pb + 1..]
                .iter()
                .position(|&n| self.inst.is_break(n))
                .map_or(route.last() - 1, |off| pb + off);
            let single = Segment::node(self.inst, b);
            let mut best: Option<(f64, usize)> = None;

            let mut mid: Option<Segment> = None;
            for q in (lower..pb.saturating_sub(1)).rev() {
                let next = Segment::node(self.inst, route.nodes[q + 1]);
                let m = match mid {
                    None => next,
                    Some(s) => Segment::merge(self.inst, &next, &s),
                };
                mid = Some(m);
                let seg = self.join(&[route.prefix[q], single, m, route.suffix[pb + 1]]);
                let cost = self.cost(&seg);
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, q));
                }
            }
            let mut mid: Option<Segment> = None;
            for q in pb + 1..=upper {
                let next = Segment::node(self.inst, route.nodes[q]);
                let m = match mid {
                    None => next,
                    Some(s) => Segment::merge(self.inst, &s, &next),
                };
                mid = Some(m);
                let seg = self.join(&[route.prefix[pb - 1], m, single, route.suffix[q + 1]]);
                let cost = self.cost(&seg);
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, q));
                }
            }

            if let Some((cost, q)) = best {
                if cost - route.cost < -EPS {
                    let mut nodes = route.nodes.clone();
                    nodes.remove(pb);
                    let at = if q < pb { q + 1 } else { q };
                    nodes.insert(at, b);
                    let inner = nodes[1..nodes.len() - 1].to_vec();
                    self.rebuild(r, inner);
                    improved = true;
                }
            }
        }
        improved
    }

    fn swap_star_all(&mut self) -> bool {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for u in self.inst.cluster_nodes() {
            let Some((ru, _)) = self.position[u] else { continue };
            for &v in self.nb.of(u) {
                if let Some((rv, _)) = self.position[v] {
                    if ru != rv {
                        pairs.push((ru.min(rv), ru.max(rv)));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut improved = false;
        for (a, b) in pairs {
            let changed = self.routes[a].modified.max(self.routes[b].modified);
            let tested = self.pair_tested.get(&(a, b)).copied().unwrap_or(0);
            if changed <= tested || self.routes[a].clusters() == 0 || self.routes[b].clusters() == 0 {
                continue;
            }
            self.clock += 1;
            self.pair_tested.insert((a, b), self.clock);
            if self.swap_star(a, b) {
                improved = true;
            }
        }
        improved
    }

    /// Cheapest three insertion points of every cluster of `from` into `to`.
    fn top_insertions(&self, from: usize, to: usize) -> Vec<[(f64, usize); 3]> {
        let (src, dst) = (&self.routes[from], &self.routes[to]);
        let mut out = vec![[(f64::INFINITY, usize::MAX); 3]; src.nodes.len()];
        for (p, slot) in out.iter_mut().enumerate() {
            let u = src.nodes[p];
            if !self.inst.is_cluster(u) {
                continue;
            }
            let single = Segment::node(self.inst, u);
            for q in 0..dst.last() {
                let delta = self.cost(&self.join(&[dst.prefix[q], single, dst.suffix[q + 1]])) - dst.cost;
                if delta < slot[2].0 {
                    slot[2] = (delta, q);
                    slot.sort_by(|x, y| x.0.total_cmp(&y.0));
                }
            }
        }
        out
    }

    /// Cheapest way to put `u` into route `to` once the cluster at `pv` has
    /// left: in its place, or at a precomputed spot not adjacent to it.
    fn reinsertion(&self, top: &[(f64, usize); 3], u: usize, to: usize, pv: usize) -> (f64, usize) {
        let dst = &self.routes[to];
        let single = Segment::node(self.inst, u);
        let in_place = self.cost(&self.join(&[dst.prefix[pv - 1], single, dst.suffix[pv + 1]])) - dst.cost;
        let mut best = (in_place, pv - 1);
        if let Some(&(delta, q)) = top.iter().find(|(_, q)| *q != usize::MAX && *q != pv && *q != pv - 1) {
            if delta < best.0 {
                best = (delta, q);
            }
        }
        best
    }

    #[allow(clippy::needless_range_loop)] // positions index three parallel tables
    fn swap_star(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (&self.routes[a], &self.routes[b]);
        let removal = |route: &Route, p: usize| {
            let seg = self.join(&[route.prefix[p - 1], route.suffix[p + 1]]);
            self.route_cost(&seg, route.clusters() - 1) - route.cost
        };
        let top_ab = self.top_insertions(a, b);
        let top_ba = self.top_insertions(b, a);

        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for pu in 1..ra.last() {
            let u = ra.nodes[pu];
            if !self.inst.is_cluster(u) {
                continue;
            }
            let rem_u = removal(ra, pu);
            for pv in 1..rb.last() {
                let v = rb.nodes[pv];
                if !self.inst.is_cluster(v) {
                    continue;
                }
                let (ins_u, qu) = self.reinsertion(&top_ab[pu], u, b, pv);
                let (ins_v, qv) = self.reinsertion(&top_ba[pv], v, a, pu);
                let approx = rem_u + removal(rb, pv) + ins_u + ins_v;
                if best.is_none_or(|x| approx < x.0) {
                    best = Some((approx, pu, pv, qu, qv));
                }
            }
        }
        let Some((approx, pu, pv, qu, qv)) = best else {
            return false;
        };
        if approx >= -EPS {
            return false;
        }

        let build = |route: &Route, remove: usize, insert_after: usize, node: usize| {
            let mut out = Vec::with_capacity(route.nodes.len());
            for (idx, &n) in route.nodes.iter().enumerate() {
                if idx != remove {
                    out.push(n);
                }
                if idx == insert_after {
                    out.push(node);
                }
            }
            out
        };
        let new_a = build(ra, pu, qv, rb.nodes[pv]);
        let new_b = build(rb, pv, qu, ra.nodes[pu]);
        let cost_a = self.cost(&Segment::of_nodes(self.inst, &new_a));
        let cost_b = self.cost(&Segment::of_nodes(self.inst, &new_b));
        if cost_a + cost_b - ra.cost - rb.cost >= -EPS {
            return false;
        }
        let inner_a = new_a[1..new_a.len() - 1].to_vec();
        let inner_b = new_b[1..new_b.len() - 1].to_vec();
        self.rebuild(a, inner_a);
        self.rebuild(b, inner_b);
        true
    }
}

/// Convenience wrapper: one local search run.
pub fn local_search<R: Rng>(
    inst: &RoutingInstance,
    nb: &Neighbourhood,
    start: &Solution,
    penalties: Penalties,
    rng: &mut R,
) -> Solution {
    LocalSearch::new(inst, nb).improve(start, penalties, rng)
}

/// True when every required cluster is visited.
pub fn covers_required(inst: &RoutingInstance, solution: &Solution) -> bool {
    let visited = solution.visited(inst);
    inst.cluster_nodes()
        .filter(|&n| matches!(inst.prize(n), Prize::Required))
        .all(|n| visited.contains(&n))
}

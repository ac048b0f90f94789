use crate::model::{Cost, RoutingInstance, Seconds};

/// Concatenable summary of a node sequence: distance, load and the
/// duration / time-warp data of the relaxed time-window evaluation.
///
/// `earliest` and `latest` bound the start of service at the first node
/// such that the sequence incurs the minimal `time_warp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Segment {
    pub first: usize,
    pub last: usize,
    pub distance: Cost,
    pub duration: Seconds,
    pub time_warp: Seconds,
    pub earliest: Seconds,
    pub latest: Seconds,
    pub load: i64,
}

impl Segment {
    pub fn node(inst: &RoutingInstance, id: usize) -> Self {
        let node = inst.node(id);
        Segment {
            first: id,
            last: id,
            distance: 0,
            duration: node.service,
            time_warp: 0,
            earliest: node.earliest,
            latest: node.latest,
            load: node.demand,
        }
    }

    #[inline]
    pub fn merge(inst: &RoutingInstance, a: &Segment, b: &Segment) -> Segment {
        let travel = inst.travel(a.last, b.first);
        let at_b = a.duration - a.time_warp + travel;
        let wait = (b.earliest - at_b - a.latest).max(0);
        let warp = (a.earliest + at_b - b.latest).max(0);
        Segment {
            first: a.first,
            last: b.last,
            distance: a.distance + inst.dist(a.last, b.first) + b.distance,
            duration: a.duration + b.duration + travel + wait,
            time_warp: a.time_warp + b.time_warp + warp,
            earliest: (b.earliest - at_b).max(a.earliest) - wait,
            latest: (b.latest - at_b).min(a.latest) + warp,
            load: a.load + b.load,
        }
    }

    pub fn of_nodes(inst: &RoutingInstance, nodes: &[usize]) -> Segment {
        let mut iter = nodes.iter();
        let first = *iter.next().expect("segment needs at least one node");
        iter.fold(Segment::node(inst, first), |acc, &id| {
            Segment::merge(inst, &acc, &Segment::node(inst, id))
        })
    }
}

//! Sub-channelization, range-based interference graph and vacancy sensing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qos::RadioConfig;

pub type PlatoonId = u32;
pub type SubChannelId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("sub-channel count must be >= 1")]
    NoSubchannels,
    #[error("sub-channel {id} out of range for {n_subchannels} sub-channels")]
    SubchannelOutOfRange {
        id: SubChannelId,
        n_subchannels: u32,
    },
    #[error("platoon {0} has its head behind its tail")]
    InvertedExtent(PlatoonId),
    #[error("platoons {0} and {1} overlap")]
    Overlap(PlatoonId, PlatoonId),
    #[error("duplicate platoon id {0}")]
    DuplicatePlatoon(PlatoonId),
    #[error("platoon {0} is not in the interference graph")]
    UnknownPlatoon(PlatoonId),
    #[error("transmission range must be > 0")]
    InvalidRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubChannel {
    pub id: SubChannelId,
    pub bandwidth_hz: f64,
}

/// The `N_b` equal-width sub-channels of the band.
pub fn subchannels(radio: &RadioConfig) -> Vec<SubChannel> {
    let width = radio.bandwidth_hz() / radio.subchannel_count() as f64;
    (0..radio.subchannel_count())
        .map(|id| SubChannel {
            id,
            bandwidth_hz: width,
        })
        .collect()
}

pub fn reuse_efficiency(n_subchannels: u32) -> Result<f64, SpectrumError> {
    if n_subchannels == 0 {
        return Err(SpectrumError::NoSubchannels);
    }
    Ok(1.0 / n_subchannels as f64)
}

/// Platoon to sub-channel assignments. Single-channel operation is
/// `N_b = 1` with everyone on sub-channel 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    n_subchannels: u32,
    assignments: BTreeMap<PlatoonId, SubChannelId>,
}

impl ChannelPlan {
    pub fn new(n_subchannels: u32) -> Result<Self, SpectrumError> {
        if n_subchannels == 0 {
            return Err(SpectrumError::NoSubchannels);
        }
        Ok(Self {
            n_subchannels,
            assignments: BTreeMap::new(),
        })
    }

    pub fn n_subchannels(&self) -> u32 {
        self.n_subchannels
    }

    pub fn assign(
        &mut self,
        platoon: PlatoonId,
        channel: SubChannelId,
    ) -> Result<(), SpectrumError> {
        if channel >= self.n_subchannels {
            return Err(SpectrumError::SubchannelOutOfRange {
                id: channel,
                n_subchannels: self.n_subchannels,
            });
        }
        self.assignments.insert(platoon, channel);
        Ok(())
    }

    pub fn remove(&mut self, platoon: PlatoonId) -> Option<SubChannelId> {
        self.assignments.remove(&platoon)
    }

    pub fn channel_of(&self, platoon: PlatoonId) -> Option<SubChannelId> {
        self.assignments.get(&platoon).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<PlatoonId, SubChannelId> {
        &self.assignments
    }
}

/// Longitudinal footprint of a platoon: front bumper of its leader (`head_m`)
/// and rear bumper of its last vehicle (`tail_m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatoonExtent {
    pub id: PlatoonId,
    pub head_m: f64,
    pub tail_m: f64,
}

impl PlatoonExtent {
    /// Distance between the nearest ends of two extents; negative when they
    /// overlap.
    pub fn gap_to(&self, other: &PlatoonExtent) -> f64 {
        if self.tail_m >= other.head_m {
            self.tail_m - other.head_m
        } else if other.tail_m >= self.head_m {
            other.tail_m - self.head_m
        } else {
            -(self.head_m.min(other.head_m) - self.tail_m.max(other.tail_m))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InterferenceGraph {
    nodes: BTreeSet<PlatoonId>,
    /// Stored as `(low, high)`.
    edges: BTreeSet<(PlatoonId, PlatoonId)>,
}

impl InterferenceGraph {
    pub fn nodes(&self) -> &BTreeSet<PlatoonId> {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (PlatoonId, PlatoonId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: PlatoonId, b: PlatoonId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, id: PlatoonId) -> impl Iterator<Item = PlatoonId> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == id {
                Some(b)
            } else if b == id {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// Connects every pair of platoons whose nearest ends are within
/// `transmission_range_m` of each other.
pub fn build_interference_graph(
    extents: &[PlatoonExtent],
    transmission_range_m: f64,
) -> Result<InterferenceGraph, SpectrumError> {
    if !(transmission_range_m > 0.0) {
        return Err(SpectrumError::InvalidRange);
    }
    let mut graph = InterferenceGraph::default();
    for e in extents {
        if e.head_m < e.tail_m {
            return Err(SpectrumError::InvertedExtent(e.id));
        }
        if !graph.nodes.insert(e.id) {
            return Err(SpectrumError::DuplicatePlatoon(e.id));
        }
    }
    for (i, a) in extents.iter().enumerate() {
        for b in &extents[i + 1..] {
            let gap = a.gap_to(b);
            if gap < 0.0 {
                return Err(SpectrumError::Overlap(a.id, b.id));
            }
            if gap <= transmission_range_m {
                graph.edges.insert((a.id.min(b.id), a.id.max(b.id)));
            }
        }
    }
    Ok(graph)
}

/// Sub-channels not used by any in-range neighbor of `platoon` (perfect
/// sensing).
pub fn sense_vacant_subchannels(
    platoon: PlatoonId,
    plan: &ChannelPlan,
    graph: &InterferenceGraph,
    n_subchannels: u32,
) -> Result<BTreeSet<SubChannelId>, SpectrumError> {
    if !graph.nodes.contains(&platoon) {
        return Err(SpectrumError::UnknownPlatoon(platoon));
    }
    let busy: BTreeSet<SubChannelId> = graph
        .neighbors(platoon)
        .filter_map(|n| plan.channel_of(n))
        .collect();
    Ok((0..n_subchannels).filter(|c| !busy.contains(c)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Assigned(SubChannelId),
    /// Nothing vacant; the caller falls back to the separation maneuver.
    NoVacancy,
}

/// Puts `platoon` on the lowest-numbered vacant sub-channel.
pub fn assign_subchannel(
    platoon: PlatoonId,
    vacant: &BTreeSet<SubChannelId>,
    plan: &mut ChannelPlan,
) -> Result<Assignment, SpectrumError> {
    match vacant.first() {
        Some(&c) => {
            plan.assign(platoon, c)?;
            Ok(Assignment::Assigned(c))
        }
        None => Ok(Assignment::NoVacancy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ext(id: PlatoonId, head: f64, len: f64) -> PlatoonExtent {
        PlatoonExtent {
            id,
            head_m: head,
            tail_m: head - len,
        }
    }

    #[test]
    fn range_edges() {
        let g =
            build_interference_graph(&[ext(1, 500.0, 20.0), ext(2, 380.0, 20.0)], 300.0).unwrap();
        assert!(g.has_edge(1, 2));
        let g =
            build_interference_graph(&[ext(1, 500.0, 20.0), ext(2, 80.0, 20.0)], 300.0).unwrap();
        assert!(!g.has_edge(1, 2));
    }

    #[test]
    fn chain_of_three() {
        // Gaps of 100 m between consecutive platoons, 20 m long each.
        let exts = [
            ext(1, 500.0, 20.0),
            ext(2, 380.0, 20.0),
            ext(3, 260.0, 20.0),
        ];
        let g = build_interference_graph(&exts, 150.0).unwrap();
        let brute: Vec<_> = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .filter(|&(i, j)| exts[i].gap_to(&exts[j]) <= 150.0)
            .map(|(i, j)| (exts[i].id, exts[j].id))
            .collect();
        assert_eq!(brute, vec![(1, 2), (2, 3)]);
        assert_eq!(g.edges().collect::<Vec<_>>(), brute);
    }

    #[test]
    fn rejects_overlap_and_inverted() {
        assert_eq!(
            build_interference_graph(&[ext(1, 100.0, 20.0), ext(2, 90.0, 20.0)], 10.0),
            Err(SpectrumError::Overlap(1, 2))
        );
        let bad = PlatoonExtent {
            id: 4,
            head_m: 0.0,
            tail_m: 1.0,
        };
        assert_eq!(
            build_interference_graph(&[bad], 10.0),
            Err(SpectrumError::InvertedExtent(4))
        );
    }

    #[test]
    fn sensing() {
        let mut plan = ChannelPlan::new(2).unwrap();
        plan.assign(1, 0).unwrap();
        let lone = build_interference_graph(&[ext(1, 0.0, 10.0)], 100.0).unwrap();
        assert_eq!(
            sense_vacant_subchannels(1, &plan, &lone, 2).unwrap(),
            BTreeSet::from([0, 1])
        );

        let pair =
            build_interference_graph(&[ext(1, 100.0, 10.0), ext(2, 80.0, 10.0)], 100.0).unwrap();
        assert_eq!(
            sense_vacant_subchannels(2, &plan, &pair, 2).unwrap(),
            BTreeSet::from([1])
        );

        let mut single = ChannelPlan::new(1).unwrap();
        single.assign(1, 0).unwrap();
        assert!(sense_vacant_subchannels(2, &single, &pair, 1)
            .unwrap()
            .is_empty());
        assert_eq!(
            sense_vacant_subchannels(9, &plan, &pair, 2),
            Err(SpectrumError::UnknownPlatoon(9))
        );
    }

    #[test]
    fn assignment_rules() {
        let mut plan = ChannelPlan::new(4).unwrap();
        assert_eq!(
            assign_subchannel(5, &BTreeSet::from([1, 3]), &mut plan).unwrap(),
            Assignment::Assigned(1)
        );
        assert_eq!(
            assign_subchannel(6, &BTreeSet::new(), &mut plan).unwrap(),
            Assignment::NoVacancy
        );
        assert_eq!(plan.channel_of(6), None);
        assign_subchannel(5, &BTreeSet::from([2]), &mut plan).unwrap();
        assert_eq!(plan.channel_of(5), Some(2));
        assert_eq!(plan.assignments().len(), 1);
        assert!(plan.assign(1, 4).is_err());
    }

    #[test]
    fn reuse() {
        assert_eq!(reuse_efficiency(1).unwrap(), 1.0);
        assert_eq!(reuse_efficiency(4).unwrap(), 0.25);
        assert!(reuse_efficiency(0).is_err());

        use crate::qos::{max_platoon_size, presets::*};
        let (r, t) = (baseline_radio(), baseline_traffic());
        let one = max_platoon_size(&r, &t, 0.0788, reuse_efficiency(1).unwrap()).unwrap();
        let two = max_platoon_size(&r, &t, 0.0788, reuse_efficiency(2).unwrap()).unwrap();
        assert_eq!((one, two), (394, 197));
    }

    #[test]
    fn equal_subchannels() {
        let r = RadioConfig::new(10e6, 2.0, 4).unwrap();
        let subs = subchannels(&r);
        assert_eq!(subs.len(), 4);
        assert!(subs.iter().all(|s| s.bandwidth_hz == 2.5e6));
    }

    fn layout() -> impl Strategy<Value = (Vec<PlatoonExtent>, Vec<u32>, f64)> {
        (1usize..8, 1u32..4)
            .prop_flat_map(|(n, nb)| {
                (
                    prop::collection::vec((0.0f64..400.0, 1.0f64..60.0), n),
                    prop::collection::vec(0..nb, n),
                    Just(nb),
                    10.0f64..500.0,
                )
            })
            .prop_map(|(parts, chans, nb, range)| {
                let mut head = 0.0;
                let exts = parts
                    .iter()
                    .enumerate()
                    .map(|(i, &(gap, len))| {
                        head -= gap;
                        let e = ext(i as u32, head, len);
                        head -= len;
                        e
                    })
                    .collect();
                let mut c = chans;
                c.push(nb);
                (exts, c, range)
            })
    }

    proptest! {
        #[test]
        fn graph_symmetric_and_sensing_sound((exts, chans, range) in layout()) {
            let nb = *chans.last().unwrap();
            let g = build_interference_graph(&exts, range).unwrap();
            for a in g.nodes() {
                prop_assert!(!g.has_edge(*a, *a));
                for b in g.nodes() {
                    prop_assert_eq!(g.has_edge(*a, *b), g.has_edge(*b, *a));
                }
            }
            let mut plan = ChannelPlan::new(nb).unwrap();
            for (e, c) in exts.iter().zip(&chans).skip(1) {
                plan.assign(e.id, *c).unwrap();
            }
            let probe = exts[0].id;
            let vacant = sense_vacant_subchannels(probe, &plan, &g, nb).unwrap();
            for c in &vacant {
                let mut trial = plan.clone();
                trial.assign(probe, *c).unwrap();
                for n in g.neighbors(probe) {
                    prop_assert_ne!(trial.channel_of(n), Some(*c));
                }
            }
            if let Assignment::Assigned(c) = assign_subchannel(probe, &vacant, &mut plan).unwrap() {
                prop_assert!(g.neighbors(probe).all(|n| plan.channel_of(n) != Some(c)));
            }
        }
    }
}

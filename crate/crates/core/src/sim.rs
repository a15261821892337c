//! Time-stepped highway world.
//!
//! One lane, platoons ordered by leader position. Each tick runs, in order:
//! kinematics, signal measurement at every leader, the split trigger, split
//! execution, sub-channel assignment or separation bookkeeping, merges, and
//! finally metrics and invariant checks. Platoons are visited in ascending
//! id order wherever the order matters for the event log.
//!
//! Longitudinal rules for a platoon leader following the tail of the platoon
//! ahead (gap `g`, inter-platoon spacing `D`, speed delta `δ`):
//! * `Separating`: tail speed minus `δ`.
//! * otherwise, `g < D`: tail speed minus `δ` (open up to `D`);
//!   `g ≈ D`: tail speed; `g > D`: close towards `D`, never faster than
//!   cruise, or cruise plus `δ` while firmly in coverage.
//!
//! Followers sit at the intra-platoon spacing behind their predecessor; a
//! follower further back (after a merge) closes at `δ` above its
//! predecessor's speed.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::coverage::signal_strength;
use crate::dynamics::{
    evaluate_split_trigger, merge_platoons, split_platoon, MergeOutcome, MergeRejection, Platoon,
    PlatoonState, SeparationManeuver, TriggerDecision, Vehicle, VehicleId,
};
use crate::report::{Event, EventType, MetricsReport, MetricsSample, PlatoonSummary};
use crate::scenario::{CoverageCaps, Scenario, ScenarioError};
use crate::spectrum::{
    assign_subchannel, build_interference_graph, sense_vacant_subchannels, Assignment, ChannelPlan,
    PlatoonExtent, PlatoonId,
};

const GAP_TOL_M: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invariant violated at tick {tick}: {message}")]
    Invariant {
        tick: u64,
        message: String,
        /// Serialized world at the offending tick.
        state: String,
    },
    #[error("road capacity is undefined without platoons")]
    NoPlatoons,
}

/// Capacity of the live configuration: mean speed times vehicles over the
/// occupied span, which is the sum of platoon lengths, the gaps between
/// consecutive platoons and one trailing inter-platoon spacing. `convoy` is
/// front to rear, each platoon's vehicles front to rear.
pub fn achieved_road_capacity(
    convoy: &[Vec<Vehicle>],
    inter_spacing_m: f64,
) -> Result<f64, SimError> {
    if convoy.iter().all(Vec::is_empty) {
        return Err(SimError::NoPlatoons);
    }
    let platoons: Vec<&Vec<Vehicle>> = convoy.iter().filter(|p| !p.is_empty()).collect();
    let n: usize = platoons.iter().map(|p| p.len()).sum();
    let v_mean = platoons
        .iter()
        .flat_map(|p| p.iter())
        .map(|v| v.velocity_mps)
        .sum::<f64>()
        / n as f64;
    let mut span = inter_spacing_m;
    for (i, p) in platoons.iter().enumerate() {
        let head = p[0].position_m;
        let tail = p[p.len() - 1].rear_m();
        span += head - tail;
        if let Some(next) = platoons.get(i + 1) {
            span += tail - next[0].position_m;
        }
    }
    Ok(v_mean * n as f64 / span)
}

#[derive(Serialize)]
struct WorldState<'a> {
    tick: u64,
    platoons: Vec<&'a Platoon>,
    vehicles: &'a [Vehicle],
}

pub struct Simulation {
    scenario: Scenario,
    caps: CoverageCaps,
    maneuver: SeparationManeuver,
    tick: u64,
    /// Indexed by vehicle id; ids are assigned front to rear.
    vehicles: Vec<Vehicle>,
    platoons: BTreeMap<PlatoonId, Platoon>,
    signals: BTreeMap<PlatoonId, f64>,
    next_platoon_id: PlatoonId,
    shadowing: Option<(ChaCha8Rng, Normal<f64>)>,
    events: Vec<Event>,
    samples: Vec<MetricsSample>,
    violations: BTreeMap<String, u64>,
    splits: u64,
    merges: u64,
    maneuver_time_s: f64,
    max_split_grace_s: f64,
    prepared_at: BTreeMap<PlatoonId, f64>,
    separating_since: BTreeMap<PlatoonId, f64>,
    reported_rejections: BTreeSet<(PlatoonId, PlatoonId)>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let caps = scenario.validate()?;
        let maneuver = SeparationManeuver::new(
            scenario.transmission_range_m,
            scenario.guard_margin_m,
            scenario.speed_delta_mps,
        )
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let geom = scenario.geometry;
        let mut initial = scenario.initial_platoons.clone();
        initial.sort_by(|a, b| b.lead_position_m.total_cmp(&a.lead_position_m));

        let mut vehicles = Vec::new();
        let mut platoons = BTreeMap::new();
        for (pid, init) in initial.iter().enumerate() {
            let mut members = Vec::new();
            let mut front = init.lead_position_m;
            for _ in 0..init.size {
                let id = vehicles.len() as VehicleId;
                vehicles.push(Vehicle {
                    id,
                    position_m: front,
                    velocity_mps: geom.speed_mps(),
                    length_m: geom.vehicle_length_m(),
                });
                members.push(id);
                front -= geom.vehicle_length_m() + geom.intra_spacing_m();
            }
            let pid = pid as PlatoonId;
            let platoon = Platoon::new(pid, members)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?
                .with_subchannel(init.subchannel);
            platoons.insert(pid, platoon);
        }

        let shadowing = if scenario.shadowing_sigma_db > 0.0 {
            let normal = Normal::new(0.0, scenario.shadowing_sigma_db)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            Some((ChaCha8Rng::seed_from_u64(scenario.seed), normal))
        } else {
            None
        };

        let mut sim = Self {
            caps,
            maneuver,
            tick: 0,
            next_platoon_id: platoons.len() as PlatoonId,
            vehicles,
            platoons,
            signals: BTreeMap::new(),
            shadowing,
            events: Vec::new(),
            samples: Vec::new(),
            violations: BTreeMap::new(),
            splits: 0,
            merges: 0,
            maneuver_time_s: 0.0,
            max_split_grace_s: 0.0,
            prepared_at: BTreeMap::new(),
            separating_since: BTreeMap::new(),
            reported_rejections: BTreeSet::new(),
            scenario,
        };
        sim.measure_signals();
        sim.check_invariants()?;
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn caps(&self) -> CoverageCaps {
        self.caps
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time_s(&self) -> f64 {
        self.tick as f64 * self.scenario.timestep_s
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: VehicleId) -> &Vehicle {
        &self.vehicles[id as usize]
    }

    pub fn platoon(&self, id: PlatoonId) -> Option<&Platoon> {
        self.platoons.get(&id)
    }

    /// Leader signal measured during the last step.
    pub fn signal_dbm(&self, id: PlatoonId) -> Option<f64> {
        self.signals.get(&id).copied()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Platoon ids front to rear.
    pub fn convoy_order(&self) -> Vec<PlatoonId> {
        let mut ids: Vec<PlatoonId> = self.platoons.keys().copied().collect();
        ids.sort_by(|a, b| {
            let pa = self.head_m(&self.platoons[a]);
            let pb = self.head_m(&self.platoons[b]);
            pb.total_cmp(&pa).then(a.cmp(b))
        });
        ids
    }

    /// Platoons front to rear.
    pub fn convoy(&self) -> Vec<&Platoon> {
        self.convoy_order()
            .iter()
            .map(|id| &self.platoons[id])
            .collect()
    }

    pub fn extent(&self, p: &Platoon) -> PlatoonExtent {
        PlatoonExtent {
            id: p.id,
            head_m: self.head_m(p),
            tail_m: self.tail_m(p),
        }
    }

    fn head_m(&self, p: &Platoon) -> f64 {
        self.vehicle(p.leader_vehicle_id()).position_m
    }

    fn tail_m(&self, p: &Platoon) -> f64 {
        self.vehicle(*p.members().last().expect("non-empty"))
            .rear_m()
    }

    /// Leader signal at or above the prepare threshold.
    fn firmly_covered(&self, id: PlatoonId) -> bool {
        self.signals
            .get(&id)
            .is_some_and(|s| *s >= self.scenario.thresholds.prepare_dbm())
    }

    /// Leader signal at or above the split threshold: the base station still
    /// schedules this platoon.
    fn in_coverage(&self, id: PlatoonId) -> bool {
        self.signals
            .get(&id)
            .is_some_and(|s| *s >= self.scenario.thresholds.split_dbm())
    }

    pub fn achieved_road_capacity(&self) -> Result<f64, SimError> {
        let convoy: Vec<Vec<Vehicle>> = self
            .convoy()
            .iter()
            .map(|p| p.members().iter().map(|&v| *self.vehicle(v)).collect())
            .collect();
        achieved_road_capacity(&convoy, self.scenario.geometry.inter_spacing_m())
    }

    fn push_event(
        &mut self,
        event_type: EventType,
        platoon_ids: Vec<PlatoonId>,
        details: serde_json::Value,
    ) {
        self.events.push(Event {
            tick: self.tick,
            time_s: self.time_s(),
            event_type,
            platoon_ids,
            details,
        });
    }

    fn channel_plan(&self) -> ChannelPlan {
        let mut plan = ChannelPlan::new(self.scenario.radio.subchannel_count()).expect("N_b >= 1");
        for p in self.platoons.values() {
            if let Some(c) = p.subchannel_id {
                plan.assign(p.id, c).expect("validated sub-channel");
            }
        }
        plan
    }

    fn fatal(&self, message: impl Into<String>) -> SimError {
        let state = WorldState {
            tick: self.tick,
            platoons: self.platoons.values().collect(),
            vehicles: &self.vehicles,
        };
        SimError::Invariant {
            tick: self.tick,
            message: message.into(),
            state: serde_json::to_string(&state).unwrap_or_default(),
        }
    }

    /// Advances the world by one timestep.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.tick += 1;
        self.advance_kinematics();
        self.measure_signals();
        self.run_split_triggers()?;
        let fresh = self.execute_splits()?;
        self.update_separations(&fresh);
        self.run_merges()?;
        self.record_metrics();
        self.check_invariants()
    }

    fn advance_kinematics(&mut self) {
        let dt = self.scenario.timestep_s;
        let geom = self.scenario.geometry;
        let cruise = geom.speed_mps();
        let delta = self.scenario.speed_delta_mps;
        let spacing = geom.inter_spacing_m();
        // (old rear position, new rear position, speed) of the last vehicle
        // of the platoon ahead.
        let mut ahead: Option<(f64, f64, f64)> = None;

        for id in self.convoy_order() {
            let platoon = &self.platoons[&id];
            if platoon.fsm_state == PlatoonState::Separating {
                self.maneuver_time_s += dt;
            }
            let lead = self.vehicle(platoon.leader_vehicle_id());
            let v_lead = match ahead {
                None => cruise,
                Some((old_rear, new_rear, v_tail)) => {
                    let gap = old_rear - lead.position_m;
                    let v = if platoon.fsm_state == PlatoonState::Separating
                        || gap < spacing - GAP_TOL_M
                    {
                        v_tail - delta
                    } else if gap <= spacing + GAP_TOL_M {
                        v_tail
                    } else {
                        let ceiling = if self.firmly_covered(id) {
                            cruise + delta
                        } else {
                            cruise
                        };
                        (v_tail + (gap - spacing) / dt).min(ceiling)
                    };
                    // Never drive into the platoon ahead.
                    v.min((new_rear - lead.position_m) / dt).max(0.0)
                }
            };

            let members = platoon.members().to_vec();
            let intra = geom.intra_spacing_m();
            let mut prev: Option<(f64, f64)> = None;
            for vid in members {
                let v = &mut self.vehicles[vid as usize];
                let old_rear = v.rear_m();
                match prev {
                    None => {
                        v.position_m += v_lead * dt;
                        v.velocity_mps = v_lead;
                    }
                    Some((pred_rear, pred_speed)) => {
                        let target = pred_rear - intra;
                        let closing = v.position_m + (pred_speed + delta) * dt;
                        if closing >= target {
                            v.position_m = target;
                            v.velocity_mps = pred_speed;
                        } else {
                            v.position_m = closing;
                            v.velocity_mps = pred_speed + delta;
                        }
                    }
                }
                prev = Some((v.rear_m(), v.velocity_mps));
                ahead = Some((old_rear, v.rear_m(), v.velocity_mps));
            }
        }
    }

    fn measure_signals(&mut self) {
        let mut signals = BTreeMap::new();
        for (id, p) in &self.platoons {
            let mut s = signal_strength(self.head_m(p), &self.scenario.coverage);
            if let Some((rng, normal)) = self.shadowing.as_mut() {
                s += normal.sample(rng);
            }
            signals.insert(*id, s);
        }
        self.signals = signals;
    }

    fn run_split_triggers(&mut self) -> Result<(), SimError> {
        let thresholds = self.scenario.thresholds;
        let ids: Vec<PlatoonId> = self.platoons.keys().copied().collect();
        for id in ids {
            let signal = self.signals[&id];
            let platoon = self.platoons.get_mut(&id).expect("live id");
            let candidate = platoon.size() as u64 > self.caps.out_of_coverage
                && matches!(
                    platoon.fsm_state,
                    PlatoonState::Steady | PlatoonState::PrepareSplit
                );
            if !candidate {
                continue;
            }
            let decision = evaluate_split_trigger(platoon, signal, &thresholds)
                .map_err(|e| self.fatal(e.to_string()))?;
            match decision {
                TriggerDecision::Prepare { prospective_leader } => {
                    let vacant = self.sense(id)?;
                    self.prepared_at.insert(id, self.time_s());
                    self.push_event(
                        EventType::SplitPrepared,
                        vec![id],
                        json!({
                            "signal_dbm": finite(signal),
                            "prospective_leader_id": prospective_leader,
                            "vacant_subchannels": vacant,
                        }),
                    );
                }
                TriggerDecision::Abort => {
                    self.prepared_at.remove(&id);
                    self.push_event(
                        EventType::SplitAborted,
                        vec![id],
                        json!({ "signal_dbm": finite(signal) }),
                    );
                }
                TriggerDecision::Split | TriggerDecision::Hold => {}
            }
        }
        Ok(())
    }

    fn sense(&self, id: PlatoonId) -> Result<BTreeSet<u32>, SimError> {
        let extents: Vec<PlatoonExtent> = self.platoons.values().map(|p| self.extent(p)).collect();
        let graph = build_interference_graph(&extents, self.scenario.transmission_range_m)
            .map_err(|e| self.fatal(e.to_string()))?;
        sense_vacant_subchannels(
            id,
            &self.channel_plan(),
            &graph,
            self.scenario.radio.subchannel_count(),
        )
        .map_err(|e| self.fatal(e.to_string()))
    }

    /// Executes pending splits; returns the ids of the new rear platoons.
    fn execute_splits(&mut self) -> Result<Vec<PlatoonId>, SimError> {
        let pending: Vec<PlatoonId> = self
            .platoons
            .values()
            .filter(|p| p.fsm_state == PlatoonState::Splitting)
            .map(|p| p.id)
            .collect();
        let mut fresh = Vec::new();
        for id in pending {
            let platoon = self.platoons.remove(&id).expect("live id");
            let range = self.scenario.transmission_range_m;
            let n_sub = self.scenario.radio.subchannel_count();
            let mut failure = None;
            let mut next_id = self.next_platoon_id;
            let outcome = {
                let others: Vec<&Platoon> = self.platoons.values().collect();
                let vehicles = &self.vehicles;
                let extent = |p: &Platoon| PlatoonExtent {
                    id: p.id,
                    head_m: vehicles[p.leader_vehicle_id() as usize].position_m,
                    tail_m: vehicles[*p.members().last().expect("non-empty") as usize].rear_m(),
                };
                split_platoon(
                    platoon,
                    self.caps.out_of_coverage,
                    &mut next_id,
                    |plan, parts| {
                        let all: Vec<&Platoon> =
                            others.iter().copied().chain(parts.iter()).collect();
                        let extents: Vec<PlatoonExtent> = all.iter().map(|p| extent(p)).collect();
                        let graph = match build_interference_graph(&extents, range) {
                            Ok(g) => g,
                            Err(e) => {
                                failure = Some(e.to_string());
                                return None;
                            }
                        };
                        let mut channels = ChannelPlan::new(n_sub).expect("N_b >= 1");
                        for p in all.iter().filter(|p| p.id != plan.rear_platoon_id) {
                            if let Some(c) = p.subchannel_id {
                                channels.assign(p.id, c).ok()?;
                            }
                        }
                        let vacant = sense_vacant_subchannels(
                            plan.rear_platoon_id,
                            &channels,
                            &graph,
                            n_sub,
                        )
                        .ok()?;
                        match assign_subchannel(plan.rear_platoon_id, &vacant, &mut channels)
                            .ok()?
                        {
                            Assignment::Assigned(c) => Some(c),
                            Assignment::NoVacancy => None,
                        }
                    },
                )
            };
            self.next_platoon_id = next_id;
            if let Some(msg) = failure {
                return Err(self.fatal(msg));
            }
            let outcome = outcome.map_err(|e| self.fatal(e.to_string()))?;

            if let Some(t0) = self.prepared_at.remove(&id) {
                self.max_split_grace_s = self.max_split_grace_s.max(self.time_s() - t0);
            }
            for part in outcome.platoons {
                if part.id != id {
                    fresh.push(part.id);
                }
                self.platoons.insert(part.id, part);
            }
            let plan_snapshot = self.channel_plan();
            for plan in outcome.plans {
                self.splits += 1;
                self.push_event(
                    EventType::SplitExecuted,
                    vec![plan.front_platoon_id, plan.rear_platoon_id],
                    json!({
                        "front_size": plan.front_members.len(),
                        "rear_size": plan.rear_members.len(),
                        "rear_leader_id": plan.rear_leader_id,
                        "rear_subchannel": plan.rear_subchannel,
                        "channel_plan": plan_snapshot.assignments(),
                    }),
                );
            }
        }
        Ok(fresh)
    }

    /// Smallest gap from `p` to any co-channel platoon ahead of it.
    fn co_channel_gap_ahead(&self, p: &Platoon) -> Option<(PlatoonId, f64)> {
        let me = self.extent(p);
        self.platoons
            .values()
            .filter(|o| o.id != p.id && o.subchannel_id == p.subchannel_id)
            .map(|o| (o.id, self.extent(o)))
            .filter(|(_, e)| e.head_m > me.head_m)
            .map(|(id, e)| (id, e.gap_to(&me)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    fn update_separations(&mut self, fresh: &[PlatoonId]) {
        let now = self.time_s();
        let separating: Vec<PlatoonId> = self
            .platoons
            .values()
            .filter(|p| p.fsm_state == PlatoonState::Separating)
            .map(|p| p.id)
            .collect();
        for id in separating {
            let nearest = self.co_channel_gap_ahead(&self.platoons[&id]);
            let is_fresh = fresh.contains(&id);
            if is_fresh {
                match nearest {
                    Some((from, gap)) if self.maneuver.required(gap) => {
                        self.separating_since.insert(id, now);
                        let plan = self.channel_plan();
                        self.push_event(
                            EventType::SeparationStarted,
                            vec![from, id],
                            json!({
                                "gap_m": gap,
                                "target_gap_m": self.maneuver.target_gap_m(),
                                "expected_duration_s": self.maneuver.duration_s(gap),
                                "channel_plan": plan.assignments(),
                            }),
                        );
                    }
                    _ => self.set_state(id, PlatoonState::Steady),
                }
                continue;
            }
            let done = nearest.is_none_or(|(_, gap)| self.maneuver.is_complete(gap));
            if done {
                self.set_state(id, PlatoonState::Steady);
                let started = self.separating_since.remove(&id).unwrap_or(now);
                self.push_event(
                    EventType::SeparationCompleted,
                    vec![id],
                    json!({
                        "gap_m": nearest.map(|(_, g)| g),
                        "duration_s": now - started,
                    }),
                );
            }
        }
    }

    fn set_state(&mut self, id: PlatoonId, state: PlatoonState) {
        if let Some(p) = self.platoons.get_mut(&id) {
            p.fsm_state = state;
        }
    }

    fn compact(&self, p: &Platoon) -> bool {
        let intra = self.scenario.geometry.intra_spacing_m();
        p.members().windows(2).all(|w| {
            self.vehicle(w[0]).rear_m() - self.vehicle(w[1]).position_m <= intra + GAP_TOL_M
        })
    }

    fn run_merges(&mut self) -> Result<(), SimError> {
        let closed: Vec<PlatoonId> = self
            .platoons
            .values()
            .filter(|p| p.fsm_state == PlatoonState::Merging && self.compact(p))
            .map(|p| p.id)
            .collect();
        for id in closed {
            self.set_state(id, PlatoonState::Steady);
        }

        let order = self.convoy_order();
        let max_gap = 2.0 * self.scenario.geometry.inter_spacing_m();
        let mut front_id = order[0];
        for &rear_id in &order[1..] {
            let front = &self.platoons[&front_id];
            let rear = &self.platoons[&rear_id];
            let eligible = front.fsm_state == PlatoonState::Steady
                && rear.fsm_state == PlatoonState::Steady
                && self.firmly_covered(front_id)
                && self.firmly_covered(rear_id)
                && self.extent(front).gap_to(&self.extent(rear)) <= max_gap;
            if !eligible {
                front_id = rear_id;
                continue;
            }
            let outcome = merge_platoons(
                front,
                rear,
                self.caps.in_coverage,
                self.scenario.cap.max_platoon_size(),
                true,
            )
            .map_err(|e| self.fatal(e.to_string()))?;
            match outcome {
                MergeOutcome::Merged(merged) => {
                    let size = merged.size();
                    self.platoons.remove(&rear_id);
                    self.signals.remove(&rear_id);
                    self.platoons.insert(front_id, merged);
                    self.reported_rejections.retain(|&(a, b)| {
                        a != front_id && b != front_id && a != rear_id && b != rear_id
                    });
                    self.merges += 1;
                    self.push_event(
                        EventType::MergeExecuted,
                        vec![front_id, rear_id],
                        json!({ "merged_size": size }),
                    );
                }
                MergeOutcome::Rejected(reason) => {
                    if self.reported_rejections.insert((front_id, rear_id)) {
                        let details = match reason {
                            MergeRejection::SizeExceedsCap { combined, limit } => json!({
                                "reason": "size_exceeds_cap",
                                "combined": combined,
                                "limit": limit,
                            }),
                            MergeRejection::OutOfCoverage => json!({ "reason": "out_of_coverage" }),
                        };
                        self.push_event(EventType::MergeRejected, vec![front_id, rear_id], details);
                    }
                    front_id = rear_id;
                }
            }
        }
        Ok(())
    }

    fn count_violation(&mut self, kind: &str, n: u64) {
        if n > 0 {
            *self.violations.entry(kind.to_string()).or_insert(0) += n;
        }
    }

    fn record_metrics(&mut self) {
        let mut reliability = 0;
        let mut latency = 0;
        for p in self.platoons.values() {
            let size = p.size() as u64;
            if self.in_coverage(p.id) {
                latency += (size > self.caps.in_coverage) as u64;
            } else {
                reliability += (size > self.caps.out_of_coverage) as u64;
            }
        }
        let interference = self.co_channel_conflicts().len() as u64;
        self.count_violation("reliability", reliability);
        self.count_violation("latency", latency);
        self.count_violation("co_channel_interference", interference);

        let sample = MetricsSample {
            time_s: self.time_s(),
            capacity_vps: self.achieved_road_capacity().unwrap_or(0.0),
            n_platoons: self.platoons.len() as u64,
            n_in_coverage: self
                .platoons
                .keys()
                .filter(|id| self.in_coverage(**id))
                .count() as u64,
            active_maneuvers: self
                .platoons
                .values()
                .filter(|p| {
                    matches!(
                        p.fsm_state,
                        PlatoonState::Separating | PlatoonState::Merging
                    )
                })
                .count() as u64,
        };
        self.samples.push(sample);
    }

    /// Co-channel pairs within transmission range where at least one side
    /// has lost base-station scheduling and neither is maneuvering apart.
    pub fn co_channel_conflicts(&self) -> Vec<(PlatoonId, PlatoonId)> {
        let range = self.scenario.transmission_range_m;
        let list: Vec<&Platoon> = self.platoons.values().collect();
        let mut out = Vec::new();
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                if a.subchannel_id != b.subchannel_id
                    || a.fsm_state == PlatoonState::Separating
                    || b.fsm_state == PlatoonState::Separating
                    || (self.in_coverage(a.id) && self.in_coverage(b.id))
                {
                    continue;
                }
                if self.extent(a).gap_to(&self.extent(b)) <= range {
                    out.push((a.id, b.id));
                }
            }
        }
        out
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let convoy = self.convoy();
        let flat: Vec<VehicleId> = convoy
            .iter()
            .flat_map(|p| p.members().iter().copied())
            .collect();
        let expected: Vec<VehicleId> = (0..self.vehicles.len() as VehicleId).collect();
        if flat != expected {
            return Err(self.fatal("vehicle set or front-to-rear order changed"));
        }
        for pair in flat.windows(2) {
            let (front, rear) = (self.vehicle(pair[0]), self.vehicle(pair[1]));
            if rear.position_m > front.rear_m() + 1e-9 {
                return Err(
                    self.fatal(format!("vehicle {} overlaps vehicle {}", rear.id, front.id))
                );
            }
        }
        let n_sub = self.scenario.radio.subchannel_count();
        for p in &convoy {
            if p.subchannel_id.is_some_and(|c| c >= n_sub) {
                return Err(self.fatal(format!("platoon {} on an unknown sub-channel", p.id)));
            }
        }
        Ok(())
    }

    pub fn into_report(self) -> MetricsReport {
        let final_platoons = self
            .convoy()
            .iter()
            .map(|p| PlatoonSummary {
                id: p.id,
                size: p.size() as u64,
                leader_vehicle_id: p.leader_vehicle_id(),
                members: p.members().to_vec(),
                subchannel_id: p.subchannel_id,
                fsm_state: p.fsm_state,
            })
            .collect();
        MetricsReport {
            ticks: self.tick,
            caps: self.caps,
            achieved_capacity_vps: self.samples,
            qos_violations: self.violations,
            splits: self.splits,
            merges: self.merges,
            maneuver_time_s: self.maneuver_time_s,
            max_split_grace_s: self.max_split_grace_s,
            final_platoons,
            event_log: self.events,
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Runs a scenario to completion.
pub fn run(scenario: Scenario) -> Result<MetricsReport, SimError> {
    let steps = scenario.steps();
    let mut sim = Simulation::new(scenario)?;
    for _ in 0..steps {
        sim.step()?;
    }
    Ok(sim.into_report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qos::{presets::baseline_geometry, road_capacity};

    fn string(n: usize, head: f64, speed: f64, first_id: u32) -> Vec<Vehicle> {
        let g = baseline_geometry();
        (0..n)
            .map(|i| Vehicle {
                id: first_id + i as u32,
                position_m: head - i as f64 * (g.vehicle_length_m() + g.intra_spacing_m()),
                velocity_mps: speed,
                length_m: g.vehicle_length_m(),
            })
            .collect()
    }

    #[test]
    fn capacity_reduces_to_closed_form() {
        let one = vec![string(10, 1000.0, 20.0, 0)];
        let c = achieved_road_capacity(&one, 50.0).unwrap();
        assert!((c - road_capacity(&baseline_geometry(), 10).unwrap()).abs() < 1e-12);
        assert!((c - 2.7027).abs() / 2.7027 < 1e-4);
    }

    #[test]
    fn split_configuration_has_lower_capacity() {
        let g = baseline_geometry();
        let len5 = g.platoon_length_m(5);
        let two = vec![
            string(5, 1000.0, 20.0, 0),
            string(5, 1000.0 - len5 - 50.0, 20.0, 5),
        ];
        let split = achieved_road_capacity(&two, 50.0).unwrap();
        // Brute force: 10 vehicles over two 5-platoons plus two spacings.
        let brute = 20.0 * 10.0 / (2.0 * (5.0 * 1.5 + 4.0 * 1.0) + 2.0 * 50.0);
        assert!((split - brute).abs() < 1e-12);
        let joined = achieved_road_capacity(&[string(10, 1000.0, 20.0, 0)], 50.0).unwrap();
        assert!(split < joined);
    }

    fn scenario(extra: serde_json::Value) -> Scenario {
        let mut base = json!({
            "road_length_m": 20000,
            "duration_s": 10,
            "geometry": {"vehicle_length_m": 1.5, "intra_spacing_m": 1, "inter_spacing_m": 50, "speed_mps": 20},
            "radio": {"bandwidth_hz": 1e7, "spectral_efficiency": 2},
            "traffic": {"packet_size_bytes": 50, "generation_rate": 10},
            "qos": {"reliability_target": 0.001, "latency_target_s": 0.003},
            "cap": {"max_platoon_size": 20},
            "thresholds": {"prepare_dbm": -100, "split_dbm": -105},
            "initial_platoons": [{"size": 20, "lead_position_m": 500}],
            "coverage": {"base_stations": [{"position_m": 1000, "tx_power_dbm": 200}]}
        });
        for (k, v) in extra.as_object().unwrap() {
            base[k] = v.clone();
        }
        Scenario::from_json(&base.to_string()).unwrap()
    }

    #[test]
    fn deep_coverage_is_event_free() {
        let report = run(scenario(json!({"duration_s": 60}))).unwrap();
        assert_eq!(report.splits, 0);
        assert_eq!(report.merges, 0);
        assert!(report.event_log.is_empty());
        assert_eq!(report.achieved_capacity_vps.len(), 600);
        assert_eq!(report.total_violations(), 0);
    }

    #[test]
    fn single_tick_static_world() {
        let report = run(scenario(json!({"duration_s": 0.1}))).unwrap();
        assert_eq!(report.ticks, 1);
        assert_eq!(report.achieved_capacity_vps.len(), 1);
        assert!(report.event_log.is_empty());
    }

    #[test]
    fn homogeneous_steady_state_matches_closed_form() {
        let g = baseline_geometry();
        let head2 = 2000.0 - g.platoon_length_m(10) - 50.0;
        let s = scenario(json!({
            "cap": {"max_platoon_size": 10},
            "initial_platoons": [
                {"size": 10, "lead_position_m": 2000},
                {"size": 10, "lead_position_m": head2}
            ]
        }));
        let mut sim = Simulation::new(s).unwrap();
        let expected = road_capacity(&g, 10).unwrap();
        for _ in 0..50 {
            sim.step().unwrap();
            let c = sim.achieved_road_capacity().unwrap();
            assert!(
                ((c - expected) / expected).abs() < 1e-12,
                "{c} vs {expected}"
            );
        }
        assert_eq!(sim.convoy().len(), 2);
        assert!(sim
            .events()
            .iter()
            .all(|e| e.event_type == EventType::MergeRejected));
    }

    #[test]
    fn invariant_failure_is_fatal_with_state() {
        let mut sim = Simulation::new(scenario(json!({}))).unwrap();
        sim.step().unwrap();
        sim.vehicles[5].position_m += 10.0;
        match sim.check_invariants() {
            Err(SimError::Invariant {
                tick,
                message,
                state,
            }) => {
                assert_eq!(tick, 1);
                assert!(message.contains("overlaps"));
                let v: serde_json::Value = serde_json::from_str(&state).unwrap();
                assert_eq!(v["tick"], 1);
                assert_eq!(v["vehicles"].as_array().unwrap().len(), 20);
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn lost_vehicle_detected() {
        let mut sim = Simulation::new(scenario(json!({}))).unwrap();
        let p = sim.platoons.get_mut(&0).unwrap();
        *p = Platoon::new(0, (0..19).collect())
            .unwrap()
            .with_subchannel(0);
        assert!(matches!(sim.step(), Err(SimError::Invariant { .. })));
    }

    #[test]
    fn deterministic_with_shadowing() {
        let s = scenario(json!({
            "shadowing_sigma_db": 4.0,
            "seed": 11,
            "duration_s": 30,
            "coverage": {"base_stations": [{"position_m": 0, "tx_power_dbm": 46}]}
        }));
        let a = serde_json::to_string(&run(s.clone()).unwrap()).unwrap();
        let b = serde_json::to_string(&run(s).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_needs_platoons() {
        assert_eq!(achieved_road_capacity(&[], 50.0), Err(SimError::NoPlatoons));
    }
}
